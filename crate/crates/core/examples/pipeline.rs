//! The full descent on a small system, with the invariant check.
//!
//! cargo run --release --example pipeline -- 4096

use fracparts::arith::{int, rat};
use fracparts::driver::{self, ExponentForm, PipelineConfig};
use fracparts::model::{make_constants, parse_coefficient, BoxTarget, PolySystem};

fn main() -> fracparts::Result<()> {
    let x: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4096);
    let p = PolySystem::new(vec![
        vec![parse_coefficient("sqrt(2)", 128)?, parse_coefficient("0", 128)?],
        vec![parse_coefficient("1/3", 128)?, parse_coefficient("pi", 128)?],
    ])?;
    let b = BoxTarget::uniform(2, rat(1, 100))?;
    let eps = rat(1, 100);
    let m = int(4);
    let trace = driver::run_pipeline(&p, x, &b, &eps, &m, &PipelineConfig::default())?;
    for s in &trace.steps {
        println!("level {} k={} y={} tags={:?}", s.level, s.system.k, s.system.y, s.tags);
    }
    println!("status: {:?}", trace.status);
    let c = make_constants(2, 2, eps, m)?;
    let inv = driver::descent_invariant_check(&trace, &c, &int(1), ExponentForm::TheoremProof)?;
    for r in &inv.rows {
        println!("invariant level {} holds={} (log2 {:.2} vs {:.2})", r.level, r.holds, r.log2_lhs, r.log2_rhs);
    }
    Ok(())
}
