//! Box hit or large bucket of Weyl sums for a system with a rational row.
//!
//! cargo run --release --example weyl_dichotomy

use fracparts::arith::{int, rat};
use fracparts::expsum::{self, DichotomyOutcome, ProbeConfig};
use fracparts::model::{make_constants, BoxTarget, FrequencyVector, PolySystem};

fn main() -> fracparts::Result<()> {
    let p = PolySystem::from_rationals(vec![vec![rat(1, 7), rat(2, 7)]])?;
    let x = 300;
    let s = expsum::weyl_sum(&p, &FrequencyVector(vec![7]), x)?;
    println!("S(7) = {:.6} + {:.6}i (±{:.1e})", s.re, s.im, s.err);
    let b = BoxTarget::uniform(1, rat(1, 100))?;
    let c = make_constants(1, 2, rat(1, 100), int(4))?;
    let probe = expsum::dichotomy_probe(&p, x, &b, &c, &ProbeConfig::default())?;
    println!("frequency caps {:?}, box size {}", probe.h_caps, probe.h_box_size);
    match &probe.outcome {
        DichotomyOutcome::BoxHit(n) => println!("box hit at n = {n}"),
        DichotomyOutcome::LargeBucket(bk) => println!("bucket j={} with {} members", bk.j, bk.members.len()),
    }
    if let Some(bk) = &probe.also_bucket {
        println!("companion bucket j={} with {} members", bk.j, bk.members.len());
        println!("bucket verifies: {}", expsum::verify_bucket(&p, x, bk)?);
    }
    Ok(())
}
