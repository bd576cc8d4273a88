//! Command-line surface. Every command reads the JSON system format
//!
//! ```json
//! {"k": 2, "d": 2, "coeffs": [["sqrt(2)", "0"], ["1/3", "pi"]], "epsilons": ["1/100", "1/100"]}
//! ```
//!
//! where row `i` lists `f_{i,1}, …, f_{i,d}`, and writes JSONL (or CSV for
//! `exponent`) whose first line records the run parameters and seed.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::arith::{self, Rational};
use crate::denominators::{self, DenominatorFamily, ExpansionParams, FamilyIndex};
use crate::driver::{self, ExponentConfig, PipelineConfig};
use crate::error::{Error, Result};
use crate::expsum::{self, DichotomyOutcome, DyadicBucket, ProbeConfig};
use crate::increment::{self, ReductionConfig, ReductionRecord};
use crate::model::{self, make_constants, BoxTarget, PolySystem, RelationTriple};
use crate::oracle;
use crate::relations::{self, RelationBounds, RelationSet};

pub const PRECISION_ENV: &str = "FRACPARTS_PRECISION";

#[derive(Debug, Parser)]
#[command(name = "fracparts", version, about = "Small fractional parts of polynomial systems")]
pub struct Cli {
    /// Worker threads (does not affect outputs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Bits for named irrationals such as sqrt(2) and pi.
    #[arg(long, global = true, env = PRECISION_ENV, default_value_t = 128)]
    pub precision: u32,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exhaustive box or minimax search.
    Search(SearchArgs),
    /// Box hit or a large dyadic bucket of Weyl sums.
    Dichotomy(StageArgs),
    /// Relations for the frequencies of a large bucket.
    Harvest(HarvestArgs),
    /// Denominator arithmetic and the expansion dichotomy.
    #[command(subcommand)]
    Denoms(DenomsCommand),
    /// One reduction step from common-denominator relations.
    Reduce(ReduceArgs),
    /// The full descent.
    Pipeline(StageArgs),
    /// Monte Carlo exponent table.
    Exponent(ExponentArgs),
    /// Re-check a serialized artifact.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub x: u64,
    /// Ignore the epsilons and minimise the largest fractional part.
    #[arg(long)]
    pub minimax: bool,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub x: u64,
    #[arg(long, default_value = "1/100")]
    pub eps: String,
    #[arg(long = "M", default_value = "4")]
    pub m: String,
    #[arg(long, default_value_t = expsum::DEFAULT_H_CAP)]
    pub h_cap_limit: u128,
}

#[derive(Debug, Args)]
pub struct HarvestArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    /// Implied constant in the error caps.
    #[arg(long, default_value = "1")]
    pub c: String,
}

#[derive(Debug, Subcommand)]
pub enum DenomsCommand {
    /// `#R(b)` over a family, or for one tuple.
    CountR(FamilyArgs),
    /// Least denominator against the g_p product and `B^{r−2δ²}`.
    Floor(FamilyArgs),
    /// g_p product and its prime-by-prime form.
    Gp {
        #[arg(long, value_delimiter = ',')]
        b: Vec<u64>,
    },
    /// Reduced denominator of a sum of fractions.
    SumDen {
        #[arg(long, value_delimiter = ',')]
        fracs: Vec<String>,
    },
    /// Expansion or same denominator for a relation family.
    Expansion(ExpansionArgs),
    /// Divisor refinement of a family of `d`-tuples.
    Refine {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        eps1: String,
        #[arg(long)]
        delta: String,
    },
}

#[derive(Debug, Args)]
pub struct FamilyArgs {
    #[arg(long = "B")]
    pub b_scale: u64,
    #[arg(long)]
    pub r: usize,
    #[arg(long)]
    pub delta: String,
    /// One tuple instead of the whole family.
    #[arg(long, value_delimiter = ',')]
    pub b: Option<Vec<u64>>,
    #[arg(long, default_value_t = denominators::DEFAULT_ENUM_CAP)]
    pub cap: u128,
}

#[derive(Debug, Args)]
pub struct ExpansionArgs {
    /// JSON list of relation triples.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub r: u32,
    #[arg(long)]
    pub delta: String,
    #[arg(long)]
    pub eps: String,
    #[arg(long = "X")]
    pub x_scale: String,
    #[arg(long = "Q")]
    pub q: String,
    #[arg(long, default_value_t = denominators::DEFAULT_ENUM_CAP)]
    pub cap: u128,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// JSON list of `{a, h}` pairs sharing the denominator `q0`.
    #[arg(long)]
    pub relations: PathBuf,
    #[arg(long)]
    pub q0: u64,
    #[arg(long = "Q")]
    pub q: String,
    #[arg(long)]
    pub eta: String,
    #[arg(long)]
    pub x: u64,
    #[arg(long, value_delimiter = ',')]
    pub caps: Vec<String>,
    #[arg(long, default_value = "1/100")]
    pub eps: String,
    #[arg(long = "M", default_value = "4")]
    pub m: String,
    /// The free parameter in `y` and `B′`.
    #[arg(long, default_value = "1/100")]
    pub delta: String,
    #[arg(long, default_value = "1")]
    pub c_select: String,
    /// Refuse inputs that miss a hypothesis instead of recording it.
    #[arg(long)]
    pub enforce: bool,
}

#[derive(Debug, Args)]
pub struct ExponentArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub x_min_exp: u32,
    #[arg(long, default_value_t = 20)]
    pub x_max_exp: u32,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 53)]
    pub bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ArtifactKind {
    RelationSet,
    Reduction,
    Trace,
    Bucket,
    Expansion,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub kind: ArtifactKind,
    #[arg(long)]
    pub artifact: PathBuf,
    /// Needed for relation sets and buckets.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Sum length for buckets.
    #[arg(long)]
    pub x: Option<u64>,
}

/// On-disk system description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    pub k: usize,
    pub d: usize,
    pub coeffs: Vec<Vec<String>>,
    #[serde(default)]
    pub epsilons: Option<Vec<String>>,
}

impl SystemFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn system(&self, bits: u32) -> Result<PolySystem> {
        if self.coeffs.len() != self.k || self.coeffs.iter().any(|r| r.len() != self.d) {
            return Err(Error::Parse(format!("coeffs must be {}×{}", self.k, self.d)));
        }
        let rows = self
            .coeffs
            .iter()
            .map(|r| r.iter().map(|t| model::parse_coefficient(t, bits)).collect())
            .collect::<Result<_>>()?;
        PolySystem::new(rows)
    }

    /// Tolerances in `(0, 1/2]`; the pipeline flags any above `1/100`.
    pub fn box_target(&self) -> Result<Option<BoxTarget>> {
        match &self.epsilons {
            None => Ok(None),
            Some(v) => {
                let e = v.iter().map(|s| arith::parse_rational(s)).collect::<Result<_>>()?;
                Ok(Some(BoxTarget::with_ceiling(e, arith::rat(1, 2))?))
            }
        }
    }
}

fn require_box(f: &SystemFile) -> Result<BoxTarget> {
    f.box_target()?
        .ok_or_else(|| Error::InvalidInput("system file has no epsilons".into()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn line<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string(v).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn header(cli: &Cli, command: &str) -> Result<String> {
    line(&json!({"run": {"command": command, "seed": cli.seed, "precision": cli.precision}}))
}

/// Parse and run; returns the output text.
pub fn run_args<I, T>(argv: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::InvalidInput(e.to_string()))?;
    run(&cli)
}

/// Run a parsed command on a pool of `--threads` workers.
pub fn run(cli: &Cli) -> Result<String> {
    if cli.precision < 64 {
        return Err(Error::InvalidInput("precision must be at least 64 bits".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidInput(e.to_string()))?;
    pool.install(|| execute(cli))
}

fn execute(cli: &Cli) -> Result<String> {
    let bits = cli.precision;
    match &cli.command {
        Command::Search(a) => {
            let f = SystemFile::load(&a.system)?;
            let p = f.system(bits)?;
            let b = if a.minimax { None } else { f.box_target()? };
            let res = oracle::search(&p, a.x, b.as_ref())?;
            Ok(header(cli, "search")? + &line(&res)?)
        }
        Command::Dichotomy(a) => {
            let (p, b, c) = stage_inputs(a, bits)?;
            let probe = expsum::dichotomy_probe(&p, a.x, &b, &c, &probe_cfg(a)).map_err(|e| e.in_stage("dichotomy"))?;
            let mut out = header(cli, "dichotomy")? + &line(&probe)?;
            if let DichotomyOutcome::LargeBucket(bk) = &probe.outcome {
                out.push_str(&bk.to_jsonl());
            }
            Ok(out)
        }
        Command::Harvest(h) => {
            let a = &h.stage;
            let (p, b, c) = stage_inputs(a, bits)?;
            let probe = expsum::dichotomy_probe(&p, a.x, &b, &c, &probe_cfg(a)).map_err(|e| e.in_stage("dichotomy"))?;
            let bucket = match probe.outcome {
                DichotomyOutcome::LargeBucket(bk) => bk,
                DichotomyOutcome::BoxHit(n) => match probe.also_bucket {
                    Some(bk) => bk,
                    None => return Ok(header(cli, "harvest")? + &line(&json!({"box_hit": n}))?),
                },
            };
            let bounds = RelationBounds::new(a.x, bucket.j, probe.h_caps.clone(), &c, arith::parse_rational(&h.c)?)
                .map_err(|e| e.in_stage("harvest"))?;
            let set = relations::harvest_relations(&p, &bucket, &bounds).map_err(|e| e.in_stage("harvest"))?;
            Ok(header(cli, "harvest")? + &line(&set)?)
        }
        Command::Denoms(d) => denoms(cli, d),
        Command::Reduce(a) => {
            let f = SystemFile::load(&a.system)?;
            let p = f.system(bits)?;
            let pairs: Vec<denominators::CommonQPair> = read_json(&a.relations)?;
            let caps: Vec<Rational> = a.caps.iter().map(|s| arith::parse_rational(s)).collect::<Result<_>>()?;
            let c = make_constants(p.k(), p.d().max(2), arith::parse_rational(&a.eps)?, arith::parse_rational(&a.m)?)?;
            let cfg = ReductionConfig {
                delta: arith::parse_rational(&a.delta)?,
                selection: increment::SelectionConfig {
                    c_const: arith::parse_rational(&a.c_select)?,
                    ..Default::default()
                },
                enforce_hypotheses: a.enforce,
                seed: cli.seed,
                ..Default::default()
            };
            let rec = increment::reduce_system(
                &p,
                &caps,
                a.q0,
                &pairs,
                &arith::parse_rational(&a.q)?,
                &arith::parse_rational(&a.eta)?,
                a.x,
                &c,
                &cfg,
            )
            .map_err(|e| e.in_stage("reduce"))?;
            Ok(header(cli, "reduce")? + &line(&rec)?)
        }
        Command::Pipeline(a) => {
            let f = SystemFile::load(&a.system)?;
            let p = f.system(bits)?;
            let b = require_box(&f)?;
            let mut cfg = PipelineConfig {
                probe_h_cap: a.h_cap_limit,
                ..Default::default()
            };
            cfg.reduction.seed = cli.seed;
            let trace = driver::run_pipeline(
                &p,
                a.x,
                &b,
                &arith::parse_rational(&a.eps)?,
                &arith::parse_rational(&a.m)?,
                &cfg,
            )?;
            Ok(header(cli, "pipeline")? + &trace.to_jsonl()?)
        }
        Command::Exponent(a) => {
            let cfg = ExponentConfig {
                k: a.k,
                d: a.d,
                x_grid: driver::dyadic_grid(a.x_min_exp, a.x_max_exp),
                trials: a.trials,
                seed: cli.seed,
                bits: a.bits,
            };
            let table = driver::empirical_exponent(&cfg)?;
            let mut out = format!(
                "# seed={} k={} d={} bits={} median_slope={} heuristic={} theorem={}\n",
                cli.seed,
                a.k,
                a.d,
                a.bits,
                table.median_slope.map(|s| format!("{s:.12}")).unwrap_or_default(),
                table.heuristic,
                table.theorem.map(|t| t.to_string()).unwrap_or_default()
            );
            out.push_str(&table.to_csv());
            Ok(out)
        }
        Command::Verify(v) => verify(cli, v),
    }
}

fn stage_inputs(a: &StageArgs, bits: u32) -> Result<(PolySystem, BoxTarget, model::ConstantsProfile)> {
    let f = SystemFile::load(&a.system)?;
    let mut p = f.system(bits)?;
    if p.d() < 2 {
        p = p.with_degree(2)?;
    }
    let b = require_box(&f)?;
    let c = make_constants(p.k(), p.d(), arith::parse_rational(&a.eps)?, arith::parse_rational(&a.m)?)?;
    Ok((p, b, c))
}

fn probe_cfg(a: &StageArgs) -> ProbeConfig {
    ProbeConfig {
        h_cap_limit: a.h_cap_limit,
        ..Default::default()
    }
}

fn denoms(cli: &Cli, d: &DenomsCommand) -> Result<String> {
    match d {
        DenomsCommand::CountR(a) => {
            let fam = DenominatorFamily::new(a.b_scale, a.r, arith::parse_rational(&a.delta)?)?;
            let index = FamilyIndex::new(&fam, a.cap)?;
            let rows = match &a.b {
                Some(b) => vec![index.count(b)?],
                None => index.count_all(),
            };
            let mut out = header(cli, "denoms count-r")?;
            let mut violations = (0u64, 0u64);
            for r in &rows {
                let ordered_ok = denominators::within_r_bound(r.ordered, &fam)?;
                let unordered_ok = denominators::within_r_bound(r.unordered, &fam)?;
                violations.0 += !ordered_ok as u64;
                violations.1 += !unordered_ok as u64;
                out.push_str(&line(&json!({
                    "b": r.b, "ordered": r.ordered, "unordered": r.unordered,
                    "within_bound": ordered_ok, "unordered_within_bound": unordered_ok,
                }))?);
            }
            out.push_str(&line(&json!({
                "summary": {
                    "B": a.b_scale, "r": a.r, "delta": a.delta, "gcd_bound": fam.gcd_bound,
                    "bound": arith::pow_product_f64(&fam.r_bound_terms()),
                    "tuples": rows.len(), "violations": violations.0, "unordered_violations": violations.1,
                }
            }))?);
            Ok(out)
        }
        DenomsCommand::Floor(a) => {
            let fam = DenominatorFamily::new(a.b_scale, a.r, arith::parse_rational(&a.delta)?)?;
            let tuples = match &a.b {
                Some(b) => vec![b.clone()],
                None => fam.sorted_tuples(),
            };
            let mut out = header(cli, "denoms floor")?;
            let mut bad = 0u64;
            for t in &tuples {
                let chk = denominators::floor_check(t, &fam)?;
                if !chk.holds {
                    bad += 1;
                    out.push_str(&line(&chk)?);
                }
            }
            out.push_str(&line(&json!({"summary": {"tuples": tuples.len(), "violations": bad}}))?);
            Ok(out)
        }
        DenomsCommand::Gp { b } => {
            let gp = denominators::gp_product(b);
            let by_primes = denominators::gp_by_primes(b);
            let min_den = denominators::SumSignature::of(b).min_denominator();
            Ok(header(cli, "denoms gp")?
                + &line(&json!({
                    "b": b,
                    "gp": arith::serde_rational::to_string(&gp),
                    "gp_by_primes": arith::serde_rational::to_string(&by_primes),
                    "equal": gp == by_primes,
                    "min_denominator": min_den.to_string(),
                }))?)
        }
        DenomsCommand::SumDen { fracs } => {
            let mut parts = Vec::new();
            for f in fracs {
                let r = arith::parse_rational(f)?;
                let a: i64 = r.numer().try_into().map_err(|_| Error::InvalidInput(f.clone()))?;
                let b: u64 = r.denom().try_into().map_err(|_| Error::InvalidInput(f.clone()))?;
                parts.push((a, b));
            }
            let den = denominators::sum_denominator(&parts)?;
            Ok(header(cli, "denoms sum-den")? + &line(&json!({"denominator": den.to_string()}))?)
        }
        DenomsCommand::Expansion(a) => {
            let s: Vec<RelationTriple> = read_json(&a.input)?;
            let params = ExpansionParams {
                r: a.r,
                delta: arith::parse_rational(&a.delta)?,
                eps: arith::parse_rational(&a.eps)?,
                x_scale: arith::parse_rational(&a.x_scale)?,
                q: arith::parse_rational(&a.q)?,
                cap: a.cap,
            };
            let o = denominators::expansion_or_same_denominator(&s, &params)?;
            let mut out = header(cli, "denoms expansion")? + &line(&o)?;
            let key = if o.is_counterexample_candidate() { "counterexample" } else { "replay" };
            let dump = denominators::CounterexampleDump { s, params, outcome: o };
            out.push_str(&line(&json!({ key: dump }))?);
            Ok(out)
        }
        DenomsCommand::Refine { input, eps1, delta } => {
            let fam: Vec<Vec<u64>> = read_json(input)?;
            let st = denominators::m_refinement(&fam, &arith::parse_rational(eps1)?, &arith::parse_rational(delta)?)?;
            Ok(header(cli, "denoms refine")? + &line(&st)?)
        }
    }
}

/// Strip a leading run header, if any, and return the remaining lines.
fn artifact_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with("{\"run\""))
        .map(str::to_string)
        .collect())
}

fn parse_line<T: for<'de> Deserialize<'de>>(l: &str) -> Result<T> {
    serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string()))
}

fn verify(cli: &Cli, v: &VerifyArgs) -> Result<String> {
    let lines = artifact_lines(&v.artifact)?;
    let first = lines
        .first()
        .ok_or_else(|| Error::Parse("empty artifact".into()))?;
    let load_system = || -> Result<PolySystem> {
        let path = v
            .system
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("--system is required for this artifact".into()))?;
        SystemFile::load(path)?.system(cli.precision)
    };
    let report = match v.kind {
        ArtifactKind::RelationSet => {
            let set: RelationSet = parse_line(first)?;
            let p = load_system()?;
            let mut failed = Vec::new();
            for (i, t) in set.triples.iter().enumerate() {
                if !relations::verify_relation(&p, t, &set.bounds)?.ok() {
                    failed.push(i);
                }
            }
            json!({"kind": "relation-set", "passed": failed.is_empty(), "checked": set.triples.len(), "failed": failed})
        }
        ArtifactKind::Reduction => {
            let rec: ReductionRecord = parse_line(first)?;
            let r = verify_reduction(&rec)?;
            json!({"kind": "reduction", "passed": r.0, "structure": r.1, "lifting": r.2})
        }
        ArtifactKind::Trace => {
            let steps: Vec<driver::TraceStep> = lines[..lines.len() - 1]
                .iter()
                .map(|l| parse_line(l))
                .collect::<Result<_>>()?;
            let tail: serde_json::Value = parse_line(&lines[lines.len() - 1])?;
            let status: driver::FinalStatus =
                serde_json::from_value(tail["status"].clone()).map_err(|e| Error::Parse(e.to_string()))?;
            let x = tail["x"].as_u64().ok_or_else(|| Error::Parse("trace tail lacks x".into()))?;
            let descends = steps.windows(2).all(|w| w[1].system.k < w[0].system.k);
            let mut records_ok = true;
            for s in &steps {
                if let driver::StepOutcome::Reduced { record, .. } = &s.outcome {
                    records_ok &= verify_reduction(record)?.0;
                }
            }
            let witness_ok = match (&status, steps.first()) {
                (driver::FinalStatus::WitnessFound { n, .. }, Some(s0)) => {
                    *n < x && driver::verify_witness(&s0.system.g, &s0.system.delta_vec, *n)
                }
                _ => true,
            };
            json!({"kind": "trace", "passed": descends && records_ok && witness_ok,
                   "descends": descends, "records": records_ok, "witness": witness_ok})
        }
        ArtifactKind::Bucket => {
            let p = load_system()?;
            let x = v.x.ok_or_else(|| Error::InvalidInput("--x is required for buckets".into()))?;
            let bucket: DyadicBucket = match parse_line::<expsum::ProbeResult>(first) {
                Ok(probe) => match probe.outcome {
                    DichotomyOutcome::LargeBucket(b) => b,
                    DichotomyOutcome::BoxHit(_) => probe
                        .also_bucket
                        .ok_or_else(|| Error::InvalidInput("probe has no bucket".into()))?,
                },
                Err(_) => parse_line(first)?,
            };
            let ok = expsum::verify_bucket(&p, x, &bucket)?;
            json!({"kind": "bucket", "passed": ok, "members": bucket.members.len()})
        }
        ArtifactKind::Expansion => {
            let mut dump = None;
            for l in &lines {
                let v: serde_json::Value = parse_line(l)?;
                if let Some(d) = v.get("counterexample").or_else(|| v.get("replay")) {
                    dump = Some(d.clone());
                }
            }
            let dump = dump.ok_or_else(|| Error::Parse("no counterexample or replay record".into()))?;
            let dump: denominators::CounterexampleDump =
                serde_json::from_value(dump).map_err(|e| Error::Parse(e.to_string()))?;
            let again = denominators::expansion_or_same_denominator(&dump.s, &dump.params)?;
            json!({"kind": "expansion", "passed": again == dump.outcome})
        }
    };
    Ok(header(cli, "verify")? + &line(&report)?)
}

/// `(passed, structure_ok, lifting_passed)`
fn verify_reduction(rec: &ReductionRecord) -> Result<(bool, bool, bool)> {
    let structure = increment::verify_record_structure(rec);
    let seed = match rec.lifting.mode {
        increment::LiftMode::Sampled { seed } => seed,
        increment::LiftMode::Exhaustive => 0,
    };
    let again = increment::lifting_test(rec, 10_000, rec.lifting.tested.max(1), seed)?;
    let lifting = again.passed() && again == rec.lifting;
    Ok((structure && lifting, structure, lifting))
}

/// Entry point for the binary: prints output or an error, returns the exit code.
pub fn dispatch() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => match &cli.out {
            Some(path) => match fs::write(path, out) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {}: {e}", path.display());
                    1
                }
            },
            None => {
                print!("{out}");
                0
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
