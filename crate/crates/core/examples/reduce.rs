//! One reduction step: a single relation removes one coordinate.
//!
//! cargo run --release --example reduce

use fracparts::arith::{int, rat};
use fracparts::denominators::CommonQPair;
use fracparts::increment::{self, AccountingExponents, ReductionConfig, SelectionConfig};
use fracparts::model::{make_constants, FrequencyVector, PolySystem};

fn main() -> fracparts::Result<()> {
    let p = PolySystem::from_rationals(vec![
        vec![rat(1, 1_000_000_000), int(0)],
        vec![rat(7, 17), rat(3, 11)],
    ])?;
    let c = make_constants(2, 2, rat(1, 10), int(4))?;
    let rel = vec![CommonQPair {
        a: vec![0, 0],
        h: FrequencyVector(vec![1, 0]),
    }];
    let cfg = ReductionConfig {
        delta: rat(1, 2),
        enforce_hypotheses: false,
        selection: SelectionConfig {
            c_const: int(100),
            ..Default::default()
        },
        ..Default::default()
    };
    let rec = increment::reduce_system(&p, &[int(4), int(4)], 1, &rel, &int(16), &rat(1, 1000), 5000, &c, &cfg)?;
    println!("k {} -> {}, D2={}, lift by {}", rec.k(), rec.k_reduced, rec.d2, rec.lift);
    println!("y={} (certified {}, display {:.3})", rec.y, rec.y_certified, rec.y_display);
    println!("hypotheses: {:?}", rec.hypotheses.failures());
    println!(
        "lifting test: {} cases, {} premise hits, passed {}",
        rec.lifting.tested,
        rec.lifting.premise_hits,
        rec.lifting.passed()
    );
    let exps = AccountingExponents::lemma_form(&c, rec.k(), rec.k_reduced);
    let acc = increment::increment_accounting(&rec, &exps, &int(1))?;
    println!("accounting log2(lhs/rhs)={:.3} holds={}", acc.log2_ratio, acc.holds);
    Ok(())
}
