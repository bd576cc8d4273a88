//! `#R(b)` over a whole denominator family against the `B^{5δ²}` bound.
//!
//! cargo run --release --example count_r -- 16 3 1/4

use fracparts::arith;
use fracparts::denominators::{within_r_bound, DenominatorFamily, FamilyIndex, DEFAULT_ENUM_CAP};

fn main() -> fracparts::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let b: u64 = args.first().map_or(Ok(8), |s| s.parse()).unwrap_or(8);
    let r: usize = args.get(1).map_or(Ok(2), |s| s.parse()).unwrap_or(2);
    let delta = arith::parse_rational(args.get(2).map_or("1/4", |s| s))?;
    let fam = DenominatorFamily::new(b, r, delta)?;
    let index = FamilyIndex::new(&fam, DEFAULT_ENUM_CAP)?;
    let counts = index.count_all();
    let bound = arith::pow_product_f64(&fam.r_bound_terms());
    let mut ordered_bad = 0;
    let mut unordered_bad = 0;
    for c in &counts {
        if !within_r_bound(c.ordered, &fam)? {
            ordered_bad += 1;
        }
        if !within_r_bound(c.unordered, &fam)? {
            unordered_bad += 1;
        }
    }
    let worst = counts.iter().max_by_key(|c| c.ordered).unwrap();
    println!("B={b} r={r} gcd_bound={} bound={bound:.4}", fam.gcd_bound);
    println!("sorted tuples: {}", counts.len());
    println!("worst: {:?} ordered={} unordered={}", worst.b, worst.ordered, worst.unordered);
    println!("over bound: ordered {ordered_bad}, unordered {unordered_bad}");
    Ok(())
}
