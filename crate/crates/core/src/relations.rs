//! Rational relations `Σ_i h_i f_{i,j} ≈ a_j/q_j` for large-sum frequencies.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{self, PowTerm, Rational};
use crate::error::{Error, Result};
use crate::expsum::DyadicBucket;
use crate::model::{
    ConstantsProfile, FrequencyVector, PolySystem, RationalApprox, RealCoefficient, RelationTriple,
};

/// Candidate multiples of each convergent denominator tried before falling
/// back to a full scan.
const MULTIPLES: u64 = 64;
/// Budget `d · q_cap` below which the exhaustive scan is allowed.
const SCAN_BUDGET: u128 = 1_000_000;

fn to_i64(v: &BigInt) -> Result<i64> {
    v.to_i64()
        .ok_or_else(|| Error::InvalidInput(format!("numerator {v} overflows i64")))
}

/// Best approximation `a/q` to the centre of `alpha` with `q ≤ q_max`;
/// ties go to the least `q`.
pub fn best_approx(alpha: &RealCoefficient, q_max: u64) -> Result<RationalApprox> {
    if q_max == 0 {
        return Err(Error::Precondition("q_max must be at least 1".into()));
    }
    let qm = Rational::from_integer(BigInt::from(q_max));
    let limit = (Rational::from_integer(2.into()) * &qm * &qm).recip();
    if alpha.err >= limit {
        return Err(Error::PrecisionInsufficient(format!(
            "coefficient error {} is not below 1/(2·{q_max}²)",
            alpha.err
        )));
    }
    let x = &alpha.value;
    let qmax = BigInt::from(q_max);
    // Convergents p_n/q_n of x while q_n ≤ q_max.
    let (mut p0, mut q0) = (BigInt::one(), BigInt::zero());
    let (mut p1, mut q1) = (x.floor().to_integer(), BigInt::one());
    let mut rest = x - Rational::from_integer(p1.clone());
    let mut semi: Option<(BigInt, BigInt)> = None;
    while !rest.is_zero() {
        let inv = rest.recip();
        let a = inv.floor().to_integer();
        rest = inv - Rational::from_integer(a.clone());
        let q2 = &a * &q1 + &q0;
        if q2 > qmax {
            let t = (&qmax - &q0) / &q1;
            if t.is_positive() {
                semi = Some((&t * &p1 + &p0, &t * &q1 + &q0));
            }
            break;
        }
        let p2 = &a * &p1 + &p0;
        p0 = std::mem::replace(&mut p1, p2);
        q0 = std::mem::replace(&mut q1, q2);
    }
    let dist = |p: &BigInt, q: &BigInt| (x - Rational::new(p.clone(), q.clone())).abs();
    let (mut bp, mut bq) = (p1.clone(), q1.clone());
    let mut bd = dist(&bp, &bq);
    // A previous convergent can tie or win only through the semiconvergent
    // path; also test it when it is the t = 0 degenerate case.
    let mut others = vec![];
    if let Some(s) = semi {
        others.push(s);
    }
    if q0.is_positive() {
        others.push((p0.clone(), q0.clone()));
    }
    for (p, q) in others {
        let dd = dist(&p, &q);
        match dd.cmp(&bd) {
            Ordering::Less => (bp, bq, bd) = (p, q, dd),
            Ordering::Equal if q < bq => (bp, bq, bd) = (p, q, dd),
            _ => {}
        }
    }
    let g = bp.gcd(&bq);
    let (a, q) = (&bp / &g, &bq / &g);
    Ok(RationalApprox {
        a: to_i64(&a)?,
        q: q.to_u64().expect("q ≤ q_max"),
        err: bd + &alpha.err,
    })
}

/// The caps a relation triple must meet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationBounds {
    pub x: u64,
    pub d: usize,
    /// `Q = 2^{log2_q}`, already rescaled from the bucket level.
    #[serde(with = "arith::serde_rational")]
    pub log2_q: Rational,
    #[serde(with = "arith::serde_rational")]
    pub eps: Rational,
    #[serde(with = "arith::serde_rational")]
    pub c0: Rational,
    /// Implied constant in the error caps.
    #[serde(with = "arith::serde_rational")]
    pub c: Rational,
    /// `⌊x^ε Q^{1/c0(d−1)}⌋`.
    pub q_cap: u64,
    /// `|h_i| ≤ h_caps[i]`.
    pub h_caps: Vec<u64>,
}

impl RelationBounds {
    pub fn new(
        x: u64,
        bucket_j: u32,
        h_caps: Vec<u64>,
        constants: &ConstantsProfile,
        c: Rational,
    ) -> Result<Self> {
        let d = constants.d;
        if d < 2 {
            return Err(Error::Precondition("relations need degree d ≥ 2".into()));
        }
        let log2_q = Rational::from_integer(bucket_j.into()) * &constants.c0 * constants.dd1();
        let q_cap = arith::floor_at_most(&[
            PowTerm::new(arith::from_u128(x as u128), constants.eps.clone()),
            PowTerm::new(
                arith::int(2),
                &log2_q / (&constants.c0 * arith::int(d as i64 - 1)),
            ),
        ])?;
        Ok(RelationBounds {
            x,
            d,
            log2_q,
            eps: constants.eps.clone(),
            c0: constants.c0.clone(),
            c,
            q_cap: u64::try_from(q_cap).unwrap_or(u64::MAX),
            h_caps,
        })
    }

    /// `C·Q^{1/d}/x^{j−ε}` in floating point (display only).
    pub fn err_cap_f64(&self, j: usize) -> f64 {
        arith::to_f64(&self.c)
            * (arith::to_f64(&self.log2_q) / self.d as f64).exp2()
            * (self.x as f64).powf(arith::to_f64(&self.eps) - j as f64)
    }

    /// Exact test `err ≤ C·Q^{1/d}/x^{j−ε}`.
    pub fn within_err_cap(&self, err: &Rational, j: usize) -> Result<bool> {
        if err.is_zero() {
            return Ok(true);
        }
        let x = arith::from_u128(self.x as u128);
        let ord = arith::cmp_pow_products(
            &[
                PowTerm::plain(err.clone()),
                PowTerm::new(x.clone(), arith::int(j as i64) - &self.eps),
            ],
            &[
                PowTerm::plain(self.c.clone()),
                PowTerm::new(arith::int(2), &self.log2_q / arith::int(self.d as i64)),
            ],
        )?;
        Ok(ord != Ordering::Greater)
    }

    fn err_caps_f64(&self) -> Vec<f64> {
        (1..=self.d).map(|j| self.err_cap_f64(j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub h: FrequencyVector,
    /// The candidate `q` that came closest, and the caps it violated.
    pub best_q: Option<u64>,
    pub violated: Vec<String>,
    /// Per-coordinate best approximations with `q ≤ q_cap`.
    pub per_j: Vec<RationalApprox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSet {
    pub bounds: RelationBounds,
    pub triples: Vec<RelationTriple>,
    pub rejects: Vec<Reject>,
}

/// Per-coordinate check of one triple against the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationCheck {
    pub coprime: bool,
    pub q_cap: bool,
    pub h_cap: bool,
    pub nonzero_h: bool,
    pub err_caps: Vec<bool>,
    /// Upper bounds on `|γ_j − a_j/q_j|`.
    #[serde(with = "arith::serde_rational::vec")]
    pub errors: Vec<Rational>,
}

impl RelationCheck {
    pub fn ok(&self) -> bool {
        self.coprime && self.q_cap && self.h_cap && self.nonzero_h && self.err_caps.iter().all(|&b| b)
    }
}

/// Decide `|γ − a/q| ≤ cap_j` conservatively.
fn err_interval_within(
    bounds: &RelationBounds,
    gamma: &RealCoefficient,
    a: &BigInt,
    q: u64,
    j: usize,
) -> Result<(bool, Rational)> {
    let centre = (&gamma.value - Rational::new(a.clone(), BigInt::from(q))).abs();
    let hi = &centre + &gamma.err;
    if bounds.within_err_cap(&hi, j)? {
        return Ok((true, hi));
    }
    let lo = &centre - &gamma.err;
    if gamma.err.is_zero() || !bounds.within_err_cap(&lo.max(Rational::zero()), j)? {
        return Ok((false, hi));
    }
    Err(Error::PrecisionInsufficient(format!(
        "relation error for coordinate {j} straddles its cap"
    )))
}

/// Recompute every bound for a triple exactly.
pub fn verify_relation(
    p: &PolySystem,
    triple: &RelationTriple,
    bounds: &RelationBounds,
) -> Result<RelationCheck> {
    if triple.a.len() != p.d() || triple.q.len() != p.d() || triple.h.0.len() != p.k() {
        return Err(Error::InvalidInput("triple shape does not match the system".into()));
    }
    let coprime = triple.is_coprime();
    let q_cap = triple.q.iter().all(|&q| q <= bounds.q_cap)
        && triple.q.iter().fold(1u128, |acc, &q| {
            let g = arith::gcd_u64((acc % q as u128) as u64, q) as u128;
            (acc / g).saturating_mul(q as u128)
        }) <= bounds.q_cap as u128;
    let h_cap = triple
        .h
        .0
        .iter()
        .zip(&bounds.h_caps)
        .all(|(h, c)| h.unsigned_abs() <= *c);
    let mut err_caps = Vec::with_capacity(p.d());
    let mut errors = Vec::with_capacity(p.d());
    for j in 1..=p.d() {
        let gamma = p.linear_form(&triple.h.0, j);
        let (ok, e) = err_interval_within(bounds, &gamma, &BigInt::from(triple.a[j - 1]), triple.q[j - 1], j)?;
        err_caps.push(ok);
        errors.push(e);
    }
    Ok(RelationCheck {
        coprime,
        q_cap,
        h_cap,
        nonzero_h: !triple.h.is_zero(),
        err_caps,
        errors,
    })
}

struct Forms {
    gammas: Vec<RealCoefficient>,
    fracs: Vec<f64>,
    caps: Vec<f64>,
}

impl Forms {
    /// Float prefilter: clearly failing `q` are skipped without exact work.
    fn maybe(&self, q: u64) -> bool {
        let qf = q as f64;
        self.fracs.iter().zip(&self.caps).all(|(g, cap)| {
            let t = g * qf;
            let dist = (t - t.round()).abs() / qf;
            dist <= cap * (1.0 + 1e-6) + 1e-15 * (1.0 + t.abs()) / qf
        })
    }

    fn exact(&self, bounds: &RelationBounds, q: u64) -> Result<Option<(Vec<BigInt>, Vec<bool>)>> {
        let mut nums = Vec::with_capacity(self.gammas.len());
        let mut oks = Vec::with_capacity(self.gammas.len());
        for (j, g) in self.gammas.iter().enumerate() {
            let a = arith::round_half_down(&(&g.value * Rational::from_integer(BigInt::from(q))));
            let (ok, _) = err_interval_within(bounds, g, &a, q, j + 1)?;
            nums.push(a);
            oks.push(ok);
        }
        Ok(Some((nums, oks)))
    }
}

fn make_triple(h: &FrequencyVector, q: u64, nums: &[BigInt]) -> Result<RelationTriple> {
    let mut a = Vec::with_capacity(nums.len());
    let mut qs = Vec::with_capacity(nums.len());
    let qb = BigInt::from(q);
    for n in nums {
        let g = n.gcd(&qb);
        let g = if g.is_zero() { BigInt::one() } else { g };
        a.push(to_i64(&(n / &g))?);
        qs.push((&qb / &g).to_u64().unwrap());
    }
    RelationTriple::new(a, qs, h.clone())
}

enum Harvested {
    Accepted(RelationTriple),
    Rejected(Reject),
}

fn convergent_denominators(alpha: &Rational, q_cap: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let (mut q0, mut q1) = (BigInt::zero(), BigInt::one());
    let mut rest = alpha - Rational::from_integer(alpha.floor().to_integer());
    out.push(1);
    while !rest.is_zero() {
        let inv = rest.recip();
        let a = inv.floor().to_integer();
        rest = inv - Rational::from_integer(a.clone());
        let q2 = &a * &q1 + &q0;
        match q2.to_u64() {
            Some(v) if v <= q_cap => out.push(v),
            _ => break,
        }
        q0 = std::mem::replace(&mut q1, q2);
    }
    out
}

fn harvest_one(p: &PolySystem, h: &FrequencyVector, bounds: &RelationBounds) -> Result<Harvested> {
    let gammas: Vec<RealCoefficient> = (1..=p.d()).map(|j| p.linear_form(&h.0, j)).collect();
    let forms = Forms {
        fracs: gammas.iter().map(|g| arith::to_f64(&arith::frac(&g.value))).collect(),
        caps: bounds.err_caps_f64(),
        gammas,
    };
    let q_cap = bounds.q_cap.max(1);
    let mut candidates: Vec<u64> = Vec::new();
    for q in convergent_denominators(&forms.gammas[0].value, q_cap) {
        for m in 1..=MULTIPLES {
            match q.checked_mul(m) {
                Some(v) if v <= q_cap => candidates.push(v),
                _ => break,
            }
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    let mut closest: Option<(u64, Vec<bool>)> = None;
    let try_q = |q: u64, closest: &mut Option<(u64, Vec<bool>)>| -> Result<Option<RelationTriple>> {
        if !forms.maybe(q) {
            return Ok(None);
        }
        if let Some((nums, oks)) = forms.exact(bounds, q)? {
            if oks.iter().all(|&b| b) {
                return Ok(Some(make_triple(h, q, &nums)?));
            }
            let passed = oks.iter().filter(|&&b| b).count();
            if closest.as_ref().map_or(true, |(_, o)| o.iter().filter(|&&b| b).count() < passed) {
                *closest = Some((q, oks));
            }
        }
        Ok(None)
    };
    for &q in &candidates {
        if let Some(t) = try_q(q, &mut closest)? {
            return Ok(Harvested::Accepted(t));
        }
    }
    if (p.d() as u128) * (q_cap as u128) <= SCAN_BUDGET {
        for q in 1..=q_cap {
            if let Some(t) = try_q(q, &mut closest)? {
                return Ok(Harvested::Accepted(t));
            }
        }
    }
    let mut per_j = Vec::with_capacity(p.d());
    for g in &forms.gammas {
        let cap = q_cap.min(precision_q_limit(&g.err));
        per_j.push(best_approx(g, cap.max(1))?);
    }
    let (best_q, violated) = match closest {
        Some((q, oks)) => (
            Some(q),
            oks.iter()
                .enumerate()
                .filter(|(_, ok)| !**ok)
                .map(|(j, _)| format!("err_{}", j + 1))
                .collect(),
        ),
        None => (None, (1..=p.d()).map(|j| format!("err_{j}")).collect()),
    };
    Ok(Harvested::Rejected(Reject {
        h: h.clone(),
        best_q,
        violated,
        per_j,
    }))
}

/// Largest `q` with `err < 1/(2q²)`.
fn precision_q_limit(err: &Rational) -> u64 {
    if err.is_zero() {
        return u64::MAX;
    }
    let v = (0.5 / arith::to_f64(err)).sqrt() * 0.999;
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v.max(1.0) as u64
    }
}

/// Find a common-denominator relation for each frequency of the bucket.
pub fn harvest_relations(
    p: &PolySystem,
    bucket: &DyadicBucket,
    bounds: &RelationBounds,
) -> Result<RelationSet> {
    let results: Result<Vec<Harvested>> = bucket
        .members
        .par_iter()
        .map(|m| {
            if m.h.is_zero() {
                return Err(Error::Precondition("bucket contains h = 0".into()));
            }
            harvest_one(p, &m.h, bounds)
        })
        .collect();
    let mut triples = Vec::new();
    let mut rejects = Vec::new();
    for r in results? {
        match r {
            Harvested::Accepted(t) => triples.push(t),
            Harvested::Rejected(r) => rejects.push(r),
        }
    }
    Ok(RelationSet {
        bounds: bounds.clone(),
        triples,
        rejects,
    })
}

/// Errors `γ_j − a_j/q` of a relation and of its `j`-fold multiple
/// `jγ_j − (j a_j)/q`; the second is exactly `j` times the first.
pub fn scale_relation(
    gammas: &[RealCoefficient],
    a: &[i64],
    q: u64,
    j: i64,
) -> (Vec<Rational>, Vec<Rational>) {
    let jr = arith::int(j);
    let base: Vec<Rational> = gammas
        .iter()
        .zip(a)
        .map(|(g, &aj)| &g.value - Rational::new(aj.into(), q.into()))
        .collect();
    let scaled: Vec<Rational> = gammas
        .iter()
        .zip(a)
        .map(|(g, &aj)| &g.value * &jr - Rational::new(BigInt::from(aj) * j, BigInt::from(q)))
        .collect();
    (base, scaled)
}
