//! Denominator arithmetic: sums of fractions, g_p products and the floor bound.
//!
//! cargo run --release --example denominators

use fracparts::arith;
use fracparts::denominators::{self, DenominatorFamily, SumSignature};

fn main() -> fracparts::Result<()> {
    for parts in [vec![(1, 2), (1, 3)], vec![(1, 3), (1, 5)], vec![(1, 2), (1, 2)]] {
        println!("{parts:?} -> {}", denominators::sum_denominator(&parts)?);
    }
    for b in [vec![6u64, 10], vec![4, 6, 9], vec![8, 8]] {
        let gp = denominators::gp_product(&b);
        let sig = SumSignature::of(&b);
        println!(
            "b={b:?} gp={} by primes={} least denominator={}",
            arith::serde_rational::to_string(&gp),
            arith::serde_rational::to_string(&denominators::gp_by_primes(&b)),
            sig.min_denominator()
        );
    }
    let fam = DenominatorFamily::new(16, 2, arith::rat(1, 4))?;
    let mut bad = 0;
    let tuples = fam.sorted_tuples();
    for t in &tuples {
        if !denominators::floor_check(t, &fam)?.holds {
            bad += 1;
        }
    }
    println!("floor bound over {} tuples of B=16, r=2: {bad} violations", tuples.len());
    Ok(())
}
