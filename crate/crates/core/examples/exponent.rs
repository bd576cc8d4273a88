//! Monte Carlo exponent table for random systems, printed as CSV.
//!
//! cargo run --release --example exponent -- 1 2

use fracparts::driver::{self, ExponentConfig};

fn main() -> fracparts::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let cfg = ExponentConfig {
        k: args.first().copied().unwrap_or(1),
        d: args.get(1).copied().unwrap_or(2),
        x_grid: driver::dyadic_grid(8, 16),
        trials: 8,
        seed: 1,
        bits: 53,
    };
    let t = driver::empirical_exponent(&cfg)?;
    print!("{}", t.to_csv());
    println!("median slope {:?}, heuristic {}, theorem {:?}", t.median_slope, t.heuristic, t.theorem);
    Ok(())
}
