//! Sum-set expansion versus a shared denominator, then the divisor refinement.
//!
//! cargo run --release --example expansion

use fracparts::arith::{int, rat};
use fracparts::denominators::{self, ExpansionParams};
use fracparts::model::{FrequencyVector, RelationTriple};

fn main() -> fracparts::Result<()> {
    let mut s = Vec::new();
    for (i, q) in [3u64, 5, 7, 9, 11].iter().enumerate() {
        s.push(RelationTriple::new(vec![1, 1], vec![*q, *q], FrequencyVector(vec![i as i64 + 1]))?);
    }
    let params = ExpansionParams {
        r: 2,
        delta: rat(1, 2),
        eps: rat(1, 10),
        x_scale: int(4),
        q: int(16),
        cap: denominators::DEFAULT_ENUM_CAP,
    };
    let o = denominators::expansion_or_same_denominator(&s, &params)?;
    println!("#S={} max multiplicity={} |A|={:?}", o.size, o.max_multiplicity, o.a_card);
    println!("same denominator: {}, expansion: {:?}", o.same_denominator, o.expansion_statement);
    println!("counterexample candidate: {}", o.is_counterexample_candidate());

    let family: Vec<Vec<u64>> = (1..=40u64).map(|i| vec![6 * i, 10 * i]).collect();
    let st = denominators::m_refinement(&family, &rat(1, 2), &rat(1, 2))?;
    println!("refined m={:?} via {:?}, {} of {} survive", st.m, st.steps, st.members.len(), family.len());
    Ok(())
}
