//! Rational relations behind the frequencies of a large bucket.
//!
//! cargo run --release --example harvest

use fracparts::arith::{int, rat};
use fracparts::expsum::{self, ProbeConfig};
use fracparts::model::{make_constants, BoxTarget, PolySystem};
use fracparts::relations::{self, RelationBounds};

fn main() -> fracparts::Result<()> {
    let p = PolySystem::from_rationals(vec![vec![rat(1, 7), rat(2, 7)]])?;
    let x = 300;
    let b = BoxTarget::uniform(1, rat(1, 100))?;
    let c = make_constants(1, 2, rat(1, 100), int(4))?;
    let probe = expsum::dichotomy_probe(&p, x, &b, &c, &ProbeConfig::default())?;
    let bucket = match (probe.outcome, probe.also_bucket) {
        (expsum::DichotomyOutcome::LargeBucket(bk), _) | (_, Some(bk)) => bk,
        _ => {
            println!("no bucket to harvest");
            return Ok(());
        }
    };
    let bounds = RelationBounds::new(x, bucket.j, probe.h_caps.clone(), &c, int(1))?;
    let set = relations::harvest_relations(&p, &bucket, &bounds)?;
    println!("Q cap {}, {} relations, {} rejects", bounds.q_cap, set.triples.len(), set.rejects.len());
    for t in set.triples.iter().take(5) {
        let chk = relations::verify_relation(&p, t, &set.bounds)?;
        println!("h={:?} a={:?} q={:?} ok={}", t.h.0, t.a, t.q, chk.ok());
    }
    Ok(())
}
