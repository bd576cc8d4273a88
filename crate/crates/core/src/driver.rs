//! The descent pipeline: probe, harvest, collapse, reduce, and repeat on the
//! smaller system until a witness appears or a stage cannot proceed.

use std::cmp::Ordering;

use num_traits::{One, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{self, PowTerm, Rational};
use crate::denominators::{self, CollapseBranch, DEFAULT_ENUM_CAP};
use crate::error::{Error, Result};
use crate::expsum::{self, DichotomyOutcome, ProbeConfig};
use crate::increment::{self, ReductionConfig, ReductionRecord};
use crate::model::{self, make_constants, BoxTarget, ConstantsProfile, PolySystem};
use crate::oracle;
use crate::relations::{self, RelationBounds};

/// No positive `n < y` has `‖g_i(n)‖ ≤ δ_i` for all `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct System {
    pub k: usize,
    pub g: PolySystem,
    pub delta_vec: BoxTarget,
    pub y: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub probe_h_cap: u128,
    pub companion_limit: u128,
    pub enum_cap: u128,
    /// Implied constant in the relation error caps.
    #[serde(with = "arith::serde_rational")]
    pub relation_c: Rational,
    pub reduction: ReductionConfig,
    /// Oracle cross-checks and fallback run for `x` up to this.
    pub oracle_cap: u64,
    pub max_levels: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            probe_h_cap: expsum::DEFAULT_H_CAP,
            companion_limit: 4096,
            enum_cap: DEFAULT_ENUM_CAP,
            relation_c: Rational::one(),
            reduction: ReductionConfig {
                enforce_hypotheses: false,
                ..ReductionConfig::default()
            },
            oracle_cap: 1 << 24,
            max_levels: 16,
        }
    }
}

/// `Δ⁻¹ ≤ x^{1/c₂ d(d−1)}`, evaluated exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeHypothesis {
    pub holds: bool,
    pub log2_lhs: f64,
    pub log2_rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepOutcome {
    BoxHit { n: u64 },
    Reduced { record: Box<ReductionRecord>, collapse: CollapseBranch, relations: usize },
    StageFailed { stage: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub level: usize,
    pub system: System,
    pub hypothesis: SizeHypothesis,
    /// Product of the lift multipliers back to the original variable.
    pub lift_to_original: u64,
    pub outcome: StepOutcome,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WitnessSource {
    Pipeline { level: usize },
    OracleFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FinalStatus {
    WitnessFound {
        n: u64,
        source: WitnessSource,
        /// `‖f_i(n)‖ ≤ ε_i` under exact re-evaluation.
        verified: bool,
        /// Oracle feasibility below `x`, when `x` is within the oracle cap.
        oracle_feasible: Option<bool>,
    },
    HypothesisFailed { which: String },
    DescentExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentTrace {
    pub x: u64,
    pub original: System,
    pub steps: Vec<TraceStep>,
    pub status: FinalStatus,
}

impl DescentTrace {
    /// One JSON object per step, then the final status.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).map_err(|e| Error::Parse(e.to_string()))?);
            out.push('\n');
        }
        let tail = serde_json::json!({ "x": self.x, "status": self.status });
        out.push_str(&tail.to_string());
        out.push('\n');
        Ok(out)
    }

    /// `k` strictly decreases along the steps.
    pub fn strictly_descends(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].system.k < w[0].system.k)
    }
}

pub fn size_hypothesis(b: &BoxTarget, x: u64, c: &ConstantsProfile) -> Result<SizeHypothesis> {
    let dd1 = c.dd1();
    let e = (&c.c2_theorem * &dd1).recip();
    let lhs = [PowTerm::plain(b.delta().recip())];
    let rhs = [PowTerm::new(arith::from_u128(x as u128), e.clone())];
    Ok(SizeHypothesis {
        holds: arith::cmp_pow_products(&lhs, &rhs)? != Ordering::Greater,
        log2_lhs: -arith::log2_abs(b.delta()),
        log2_rhs: arith::to_f64(&e) * (x as f64).log2(),
    })
}

/// Exact re-check of `‖f_i(n)‖ ≤ ε_i` for all `i`.
pub fn verify_witness(p: &PolySystem, b: &BoxTarget, n: u64) -> bool {
    if n == 0 {
        return false;
    }
    match model::eval_system(p, n) {
        Ok(v) => v
            .iter()
            .zip(b.epsilons())
            .all(|(nv, e)| matches!(nv.le(e), Ok(true))),
        Err(_) => false,
    }
}

/// Run the descent on `(P, x, B)`.
pub fn run_pipeline(
    p: &PolySystem,
    x: u64,
    b: &BoxTarget,
    eps: &Rational,
    m: &Rational,
    cfg: &PipelineConfig,
) -> Result<DescentTrace> {
    if x < 2 {
        return Err(Error::InvalidInput("x must be at least 2".into()));
    }
    if b.k() != p.k() {
        return Err(Error::InvalidInput("one tolerance per polynomial".into()));
    }
    let original = System {
        k: p.k(),
        g: p.clone(),
        delta_vec: b.clone(),
        y: x,
    };
    let mut steps = Vec::new();
    let mut cur = original.clone();
    let mut lift: u64 = 1;
    let finish = |steps: Vec<TraceStep>, status: FinalStatus| DescentTrace {
        x,
        original: original.clone(),
        steps,
        status,
    };
    for level in 0..cfg.max_levels {
        let mut tags = Vec::new();
        // Degree 1 runs the structured stages as degree 2.
        let g = if cur.g.d() < 2 {
            tags.push("degree_promoted".to_string());
            cur.g.with_degree(2)?
        } else {
            cur.g.clone()
        };
        if level == 0 && b.epsilons().iter().any(|e| e > &arith::rat(1, 100)) {
            tags.push("tolerance_above_1/100".to_string());
        }
        let c = make_constants(cur.k, g.d(), eps.clone(), m.clone())?;
        let hyp = size_hypothesis(&cur.delta_vec, cur.y.max(2), &c)?;
        if !hyp.holds {
            tags.push("size_hypothesis_violated".to_string());
        }
        let mut step = TraceStep {
            level,
            system: cur.clone(),
            hypothesis: hyp,
            lift_to_original: lift,
            outcome: StepOutcome::BoxHit { n: 0 },
            tags,
        };
        match descend_once(&g, &cur, &c, cfg) {
            Ok(Descent::Hit(n)) => {
                step.outcome = StepOutcome::BoxHit { n };
                steps.push(step);
                return Ok(finish(steps, witness_status(p, b, x, n, lift, level, cfg)?));
            }
            Ok(Descent::Reduced(rec, branch, nrel)) => {
                let rec = *rec;
                let next_lift = lift.checked_mul(rec.lift);
                step.outcome = StepOutcome::Reduced {
                    record: Box::new(rec.clone()),
                    collapse: branch,
                    relations: nrel,
                };
                steps.push(step);
                let Some(next_lift) = next_lift else {
                    return Ok(finish(steps, FinalStatus::HypothesisFailed { which: "lift overflow".into() }));
                };
                match rec.reduced.clone() {
                    None => {
                        // Nothing left to satisfy: every n′ < y lifts.
                        if rec.y > 1 {
                            return Ok(finish(steps, witness_status(p, b, x, 1, next_lift, level + 1, cfg)?));
                        }
                        return Ok(finish(steps, FinalStatus::DescentExhausted));
                    }
                    Some(gr) => {
                        let tol = rec.reduced_tolerances();
                        cur = System {
                            k: gr.k(),
                            g: gr,
                            delta_vec: BoxTarget::with_ceiling(tol, arith::rat(1, 2))?,
                            y: rec.y.max(2),
                        };
                        lift = next_lift;
                    }
                }
            }
            Err((stage, e)) => {
                step.outcome = StepOutcome::StageFailed {
                    stage: stage.clone(),
                    error: e.to_string(),
                };
                step.tags.push("oracle_fallback".to_string());
                steps.push(step);
                if x <= cfg.oracle_cap {
                    if let Some(n) = oracle::box_search(p, x, b)? {
                        return Ok(finish(
                            steps,
                            FinalStatus::WitnessFound {
                                n,
                                source: WitnessSource::OracleFallback,
                                verified: verify_witness(p, b, n),
                                oracle_feasible: Some(true),
                            },
                        ));
                    }
                }
                return Ok(finish(steps, FinalStatus::HypothesisFailed { which: format!("{stage}: {e}") }));
            }
        }
    }
    Ok(finish(steps, FinalStatus::DescentExhausted))
}

fn witness_status(
    p: &PolySystem,
    b: &BoxTarget,
    x: u64,
    n_local: u64,
    lift: u64,
    level: usize,
    cfg: &PipelineConfig,
) -> Result<FinalStatus> {
    let n = n_local
        .checked_mul(lift)
        .ok_or_else(|| Error::InvalidInput("lifted witness overflows".into()))?;
    let verified = n < x && verify_witness(p, b, n);
    let oracle_feasible = if x <= cfg.oracle_cap {
        Some(oracle::box_search(p, x, b)?.is_some())
    } else {
        None
    };
    Ok(FinalStatus::WitnessFound {
        n,
        source: WitnessSource::Pipeline { level },
        verified,
        oracle_feasible,
    })
}

enum Descent {
    Hit(u64),
    Reduced(Box<ReductionRecord>, CollapseBranch, usize),
}

fn descend_once(
    g: &PolySystem,
    sys: &System,
    c: &ConstantsProfile,
    cfg: &PipelineConfig,
) -> std::result::Result<Descent, (String, Error)> {
    let y = sys.y;
    let b = &sys.delta_vec;
    let probe_cfg = ProbeConfig {
        h_cap_limit: cfg.probe_h_cap,
        companion_limit: cfg.companion_limit,
    };
    let probe = expsum::dichotomy_probe(g, y, b, c, &probe_cfg).map_err(|e| ("dichotomy".to_string(), e))?;
    let bucket = match probe.outcome {
        DichotomyOutcome::BoxHit(n) => return Ok(Descent::Hit(n)),
        DichotomyOutcome::LargeBucket(bk) => bk,
    };
    let bounds = RelationBounds::new(y, bucket.j, probe.h_caps.clone(), c, cfg.relation_c.clone())
        .map_err(|e| ("harvest".to_string(), e))?;
    let relset = relations::harvest_relations(g, &bucket, &bounds).map_err(|e| ("harvest".to_string(), e))?;
    let collapse =
        denominators::collapse_to_common_q(&relset, b, c, cfg.enum_cap).map_err(|e| ("collapse".to_string(), e))?;
    let Some(q0) = collapse.q else {
        return Err((
            "collapse".to_string(),
            Error::Precondition("no common denominator at this scale".into()),
        ));
    };
    let q = arith::from_f64(arith::to_f64(&bounds.log2_q).exp2());
    // η = Q^{1/d}/x, rounded down to a dyadic rational.
    let eta_f = arith::to_f64(&q).powf(1.0 / g.d() as f64) / y as f64;
    let eta = arith::from_f64(eta_f * (1.0 - 1e-12)).min(arith::rat(1, 100));
    let caps: Vec<Rational> = collapse.h_caps.iter().map(|&v| arith::int(v as i64)).collect();
    let rec = increment::reduce_system(g, &caps, q0, &collapse.pairs, &q, &eta, y, c, &cfg.reduction)
        .map_err(|e| ("reduce".to_string(), e))?;
    Ok(Descent::Reduced(Box::new(rec), collapse.branch, relset.triples.len()))
}

// ---------------------------------------------------------------------------
// Descent inequality

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExponentForm {
    /// `d(d−1)(c − 1/k_j²)`
    TheoremProof,
    /// `d(d−1)(c − 1/k_j³)`
    Proposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantRow {
    pub level: usize,
    pub k: usize,
    pub y: u64,
    pub log2_lhs: f64,
    pub log2_rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub form: ExponentForm,
    #[serde(with = "arith::serde_rational")]
    pub c0: Rational,
    pub rows: Vec<InvariantRow>,
    /// Step-to-step propagation, one entry per consecutive pair.
    pub propagation: Vec<bool>,
}

fn level_exponent(c: &ConstantsProfile, k: usize, form: ExponentForm) -> Rational {
    let kk = arith::int(k as i64);
    let p = match form {
        ExponentForm::TheoremProof => 2,
        ExponentForm::Proposition => 3,
    };
    c.dd1() * (&c.c_descent - arith::pow_int(&kk, p).recip())
}

/// `y_j^{1−k_jε} Δ_j^{e_j} ≥ C₀^{k_j}` at each level, and
/// `y_{j+1} Δ_{j+1}^{e_{j+1}} ≥ y_j^{1−ε} Δ_j^{e_j}/C₀` between levels.
pub fn descent_invariant_check(
    trace: &DescentTrace,
    c: &ConstantsProfile,
    c0: &Rational,
    form: ExponentForm,
) -> Result<InvariantReport> {
    if !c0.is_positive() {
        return Err(Error::InvalidInput("C₀ must be positive".into()));
    }
    let mut rows = Vec::new();
    let mut levels: Vec<&System> = trace.steps.iter().map(|s| &s.system).collect();
    if levels.is_empty() {
        levels.push(&trace.original);
    }
    for (j, s) in levels.iter().enumerate() {
        let e = level_exponent(c, s.k, form);
        let kk = arith::int(s.k as i64);
        let yr = arith::from_u128(s.y as u128);
        let lhs = [
            PowTerm::new(yr.clone(), Rational::one() - &kk * &c.eps),
            PowTerm::new(s.delta_vec.delta().clone(), e.clone()),
        ];
        let rhs = [PowTerm::new(c0.clone(), kk.clone())];
        let holds = arith::cmp_pow_products(&lhs, &rhs)? != Ordering::Less;
        rows.push(InvariantRow {
            level: j,
            k: s.k,
            y: s.y,
            log2_lhs: lhs.iter().map(|t| arith::to_f64(&t.exp) * arith::log2_abs(&t.base)).sum(),
            log2_rhs: arith::to_f64(&kk) * arith::log2_abs(c0),
            holds,
        });
    }
    let mut propagation = Vec::new();
    for w in levels.windows(2) {
        let (a, b) = (w[0], w[1]);
        let lhs = [
            PowTerm::plain(arith::from_u128(b.y as u128)),
            PowTerm::new(b.delta_vec.delta().clone(), level_exponent(c, b.k, form)),
            PowTerm::plain(c0.clone()),
        ];
        let rhs = [
            PowTerm::new(arith::from_u128(a.y as u128), Rational::one() - &c.eps),
            PowTerm::new(a.delta_vec.delta().clone(), level_exponent(c, a.k, form)),
        ];
        propagation.push(arith::cmp_pow_products(&lhs, &rhs)? != Ordering::Less);
    }
    Ok(InvariantReport {
        form,
        c0: c0.clone(),
        rows,
        propagation,
    })
}

// ---------------------------------------------------------------------------
// Empirical exponents

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentConfig {
    pub k: usize,
    pub d: usize,
    pub x_grid: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    /// Coefficients are multiples of `2^-bits` in `[0, 1)`.
    pub bits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentRow {
    pub trial: usize,
    pub x: u64,
    pub min_value_num: String,
    pub min_value_den: String,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentTable {
    pub config: ExponentConfig,
    pub rows: Vec<ExponentRow>,
    pub slopes: Vec<Option<f64>>,
    pub median_slope: Option<f64>,
    /// `−1/k`
    pub heuristic: f64,
    /// `−1/(10.5 k d(d−1))`, absent for `d = 1`.
    pub theorem: Option<f64>,
}

impl ExponentTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,x,min_value_num,min_value_den,slope\n");
        for r in &self.rows {
            let slope = r.slope.map(|s| format!("{s:.12}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.trial, r.x, r.min_value_num, r.min_value_den, slope
            ));
        }
        out
    }
}

/// Coefficients for trial `t`, drawn from stream `t` of the seeded generator.
pub fn sample_system(k: usize, d: usize, bits: u32, seed: u64, trial: u64) -> Result<PolySystem> {
    if !(1..=63).contains(&bits) {
        return Err(Error::InvalidInput("bits must be in 1..=63".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let den = arith::pow2(bits as i64);
    let rows = (0..k)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let v = rng.gen::<u64>() >> (64 - bits);
                    arith::from_u128(v as u128) / &den
                })
                .collect()
        })
        .collect();
    PolySystem::from_rationals(rows)
}

pub fn empirical_exponent(cfg: &ExponentConfig) -> Result<ExponentTable> {
    if cfg.trials == 0 {
        return Err(Error::Precondition("trials must be ≥ 1".into()));
    }
    if cfg.x_grid.len() < 4 {
        return Err(Error::Precondition("need at least 4 grid points".into()));
    }
    let per_trial: Vec<(Vec<ExponentRow>, Option<f64>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<_> {
            let p = sample_system(cfg.k, cfg.d, cfg.bits, cfg.seed, t as u64)?;
            let prof = oracle::minimax_profile(&p, &cfg.x_grid)?;
            let slope = match oracle::fit_profile(&cfg.x_grid, &prof) {
                Ok(f) => Some(f.slope),
                Err(Error::DegenerateFit(_)) => None,
                Err(e) => return Err(e),
            };
            let rows = cfg
                .x_grid
                .iter()
                .zip(&prof)
                .map(|(&x, r)| ExponentRow {
                    trial: t,
                    x,
                    min_value_num: r.best_value.numer().to_string(),
                    min_value_den: r.best_value.denom().to_string(),
                    slope,
                })
                .collect();
            Ok((rows, slope))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for (r, s) in per_trial {
        rows.extend(r);
        slopes.push(s);
    }
    let mut good: Vec<f64> = slopes.iter().flatten().copied().collect();
    good.sort_by(|a, b| a.total_cmp(b));
    let median_slope = match good.len() {
        0 => None,
        n if n % 2 == 1 => Some(good[n / 2]),
        n => Some((good[n / 2 - 1] + good[n / 2]) / 2.0),
    };
    let dd1 = (cfg.d * (cfg.d.saturating_sub(1))) as f64;
    Ok(ExponentTable {
        config: cfg.clone(),
        rows,
        slopes,
        median_slope,
        heuristic: -1.0 / cfg.k as f64,
        theorem: (dd1 > 0.0).then(|| -1.0 / (10.5 * cfg.k as f64 * dd1)),
    })
}

/// Geometric grid `2^a, 2^{a+1}, …, 2^b`.
pub fn dyadic_grid(a: u32, b: u32) -> Vec<u64> {
    (a..=b).map(|e| 1u64 << e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{int, rat};

    #[test]
    fn third_hits_at_stage_zero() {
        let p = PolySystem::from_rationals(vec![vec![rat(1, 3)]]).unwrap();
        let b = BoxTarget::uniform(1, rat(1, 100)).unwrap();
        let t = run_pipeline(&p, 100, &b, &rat(1, 100), &int(4), &PipelineConfig::default()).unwrap();
        match t.status {
            FinalStatus::WitnessFound { n, verified, oracle_feasible, .. } => {
                assert_eq!(n, 3);
                assert!(verified);
                assert_eq!(oracle_feasible, Some(true));
            }
            s => panic!("{s:?}"),
        }
        assert_eq!(t.steps.len(), 1);
    }

    #[test]
    fn integer_coefficients_hit_one() {
        let p = PolySystem::from_rationals(vec![vec![int(2), int(5)], vec![int(1), int(0)]]).unwrap();
        let b = BoxTarget::uniform(2, rat(1, 100)).unwrap();
        let t = run_pipeline(&p, 64, &b, &rat(1, 10), &int(4), &PipelineConfig::default()).unwrap();
        assert!(matches!(t.status, FinalStatus::WitnessFound { n: 1, .. }));
    }

    #[test]
    fn invariant_monotone_in_c0() {
        let p = PolySystem::from_rationals(vec![vec![rat(1, 3)]]).unwrap();
        let b = BoxTarget::uniform(1, rat(1, 100)).unwrap();
        let t = run_pipeline(&p, 100, &b, &rat(1, 100), &int(4), &PipelineConfig::default()).unwrap();
        let c = make_constants(1, 2, rat(1, 100), int(4)).unwrap();
        let small = descent_invariant_check(&t, &c, &rat(1, 1_000_000), ExponentForm::TheoremProof).unwrap();
        let huge = descent_invariant_check(&t, &c, &int(1_000_000_000), ExponentForm::TheoremProof).unwrap();
        assert_eq!(small.rows.len(), 1);
        assert!(!huge.rows[0].holds);
        assert!(small.rows[0].log2_lhs > huge.rows[0].log2_lhs - 1e-9);
    }

    #[test]
    fn sampling_is_stream_stable() {
        let a = sample_system(2, 2, 53, 7, 3).unwrap();
        let b = sample_system(2, 2, 53, 7, 3).unwrap();
        let c = sample_system(2, 2, 53, 7, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = ExponentConfig {
            k: 1,
            d: 1,
            x_grid: dyadic_grid(4, 8),
            trials: 0,
            seed: 1,
            bits: 53,
        };
        assert!(matches!(empirical_exponent(&cfg), Err(Error::Precondition(_))));
    }
}
