//! Exhaustive box search and the minimax profile of `(√2 n², √3 n)`.
//!
//! cargo run --release --example box_search

use fracparts::arith::rat;
use fracparts::model::{parse_coefficient, BoxTarget, PolySystem};
use fracparts::oracle;

fn main() -> fracparts::Result<()> {
    let p = PolySystem::new(vec![
        vec![parse_coefficient("0", 128)?, parse_coefficient("sqrt(2)", 128)?],
        vec![parse_coefficient("sqrt(3)", 128)?, parse_coefficient("0", 128)?],
    ])?;
    let b = BoxTarget::uniform(2, rat(1, 100))?;
    let x = 1 << 16;
    match oracle::box_search(&p, x, &b)? {
        Some(n) => println!("first hit below {x}: n = {n}"),
        None => println!("no hit below {x}"),
    }
    println!("hits below {x}: {}", oracle::box_count(&p, x, &b)?);
    let grid: Vec<u64> = (8..=16).map(|e| 1u64 << e).collect();
    let profile = oracle::minimax_profile(&p, &grid)?;
    for (x, r) in grid.iter().zip(&profile) {
        println!("x={x:>6} best n={:>6} max frac={:.3e}", r.best_n, fracparts::arith::to_f64(&r.best_value));
    }
    let fit = oracle::fit_profile(&grid, &profile)?;
    println!("fitted slope {:.4}, intercept {:.4}", fit.slope, fit.intercept);
    Ok(())
}
