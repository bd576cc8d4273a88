//! Exact denominator arithmetic for sums of fractions, and the
//! expansion / same-denominator dichotomy for families of relations.
//!
//! Sums `Σ a_i/b_i` with `gcd(a_i, b_i) = 1` are handled one prime at a
//! time. Modulo 1 the achievable sums form the product over primes `p` of the
//! local sets
//!
//! ```text
//! V_p(b) = { Σ_i u_i / p^{v_p(b_i)} mod 1 : u_i a unit mod p^{v_p(b_i)} }
//! ```
//!
//! so two tuples share a sum exactly when their local sets meet at every
//! prime, and the least reduced denominator is a product of local minima.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{self, PowTerm, Rational};
use crate::error::{Error, Result};
use crate::model::{BoxTarget, ConstantsProfile, FrequencyVector, RelationTriple};
use crate::relations::RelationSet;

/// Default cap on enumerated tuples (pairs examined for `#R`, multisets for
/// the sum set).
pub const DEFAULT_ENUM_CAP: u128 = 100_000_000;

/// Prime factorisation by trial division.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

fn valuation(mut n: u64, p: u64) -> u32 {
    let mut e = 0;
    while n % p == 0 {
        n /= p;
        e += 1;
    }
    e
}

/// Reduced denominator of `Σ a_i/b_i`.
pub fn sum_denominator(fractions: &[(i64, u64)]) -> Result<BigInt> {
    let mut acc = Rational::zero();
    for &(a, b) in fractions {
        if b == 0 {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        acc += Rational::new(a.into(), b.into());
    }
    Ok(acc.denom().clone())
}

/// `Π b_i / Π_{i<j} gcd(b_i, b_j)²`.
pub fn gp_product(b: &[u64]) -> Rational {
    let mut num = BigInt::one();
    for &x in b {
        num *= x;
    }
    let mut den = BigInt::one();
    for i in 0..b.len() {
        for j in i + 1..b.len() {
            let g = b[i].gcd(&b[j]);
            den *= g * g;
        }
    }
    Rational::new(num, den)
}

/// `Π_p g_p` with `g_p = Π_i gcd(b_i, p^∞) / Π_{i<j} gcd(b_i, b_j, p^∞)²`,
/// over the primes dividing `Π b_i`.
pub fn gp_by_primes(b: &[u64]) -> Rational {
    let mut primes: Vec<u64> = b.iter().flat_map(|&x| factorize(x).into_iter().map(|(p, _)| p)).collect();
    primes.sort_unstable();
    primes.dedup();
    let mut acc = Rational::one();
    for p in primes {
        let vals: Vec<u32> = b.iter().map(|&x| valuation(x, p)).collect();
        let pb = BigInt::from(p);
        let mut num_e: i64 = vals.iter().map(|&v| v as i64).sum();
        for i in 0..vals.len() {
            for j in i + 1..vals.len() {
                num_e -= 2 * vals[i].min(vals[j]) as i64;
            }
        }
        acc *= arith::pow_int(&Rational::from_integer(pb), num_e);
    }
    acc
}

/// Achievable local sums at one prime, as a subset of `Z/p^E`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct LocalSet {
    p: u64,
    e: u32,
    bits: Vec<u64>,
}

impl LocalSet {
    fn modulus(&self) -> u64 {
        self.p.pow(self.e)
    }

    fn contains(&self, s: u64) -> bool {
        self.bits[(s / 64) as usize] >> (s % 64) & 1 == 1
    }

    fn contains_zero(&self) -> bool {
        self.contains(0)
    }

    fn elements(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.modulus()).filter(|&s| self.contains(s))
    }

    fn build(p: u64, exps: &[u32]) -> LocalSet {
        let e = exps.iter().copied().max().unwrap_or(0);
        let m = p.pow(e);
        let words = (m as usize).div_ceil(64).max(1);
        let mut cur = vec![0u64; words];
        cur[0] = 1;
        for &ei in exps.iter().filter(|&&ei| ei > 0) {
            let pe = p.pow(ei);
            let step = p.pow(e - ei);
            let mut next = vec![0u64; words];
            for s in 0..m {
                if cur[(s / 64) as usize] >> (s % 64) & 1 == 0 {
                    continue;
                }
                for u in 1..pe {
                    if u % p == 0 {
                        continue;
                    }
                    let t = (s + u * step) % m;
                    next[(t / 64) as usize] |= 1 << (t % 64);
                }
            }
            cur = next;
        }
        LocalSet { p, e, bits: cur }
    }

    /// Do the two local sets (same prime) share an element of `Q_p/Z_p`?
    fn meets(&self, other: &LocalSet) -> bool {
        let (lo, hi) = if self.e <= other.e { (self, other) } else { (other, self) };
        let scale = lo.p.pow(hi.e - lo.e);
        lo.elements().any(|s| hi.contains(s * scale))
    }

    /// Least `p`-part of the denominator over the set.
    fn min_denominator_exp(&self) -> u32 {
        self.elements()
            .map(|s| if s == 0 { 0 } else { self.e - valuation(s, self.p) })
            .min()
            .unwrap_or(0)
    }
}

/// The local sets of a tuple at every prime dividing its product.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SumSignature(Vec<LocalSet>);

impl SumSignature {
    pub fn of(b: &[u64]) -> SumSignature {
        let mut primes: Vec<u64> = b.iter().flat_map(|&x| factorize(x).into_iter().map(|(p, _)| p)).collect();
        primes.sort_unstable();
        primes.dedup();
        SumSignature(
            primes
                .into_iter()
                .map(|p| {
                    let exps: Vec<u32> = b.iter().map(|&x| valuation(x, p)).collect();
                    LocalSet::build(p, &exps)
                })
                .collect(),
        )
    }

    /// Primes at which every achievable sum has a nontrivial `p`-part.
    fn required_primes(&self) -> Vec<u64> {
        self.0.iter().filter(|l| !l.contains_zero()).map(|l| l.p).collect()
    }

    /// Is there a common value of the two sum sets?
    pub fn compatible(&self, other: &SumSignature) -> bool {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.0, &other.0);
        while i < a.len() || j < b.len() {
            let pa = a.get(i).map(|l| l.p).unwrap_or(u64::MAX);
            let pb = b.get(j).map(|l| l.p).unwrap_or(u64::MAX);
            match pa.cmp(&pb) {
                Ordering::Less => {
                    if !a[i].contains_zero() {
                        return false;
                    }
                    i += 1;
                }
                Ordering::Greater => {
                    if !b[j].contains_zero() {
                        return false;
                    }
                    j += 1;
                }
                Ordering::Equal => {
                    if !a[i].meets(&b[j]) {
                        return false;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        true
    }

    /// Least reduced denominator of `Σ a_i/b_i` over coprime numerators.
    pub fn min_denominator(&self) -> BigInt {
        let mut acc = BigInt::one();
        for l in &self.0 {
            acc *= BigInt::from(l.p).pow(l.min_denominator_exp());
        }
        acc
    }
}

/// Tuples in `[B, 2B)^r` with pairwise `gcd < B^{δ²/r²}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenominatorFamily {
    pub b_scale: u64,
    pub r: usize,
    #[serde(with = "arith::serde_rational")]
    pub delta: Rational,
    /// Largest admissible pairwise gcd.
    pub gcd_bound: u64,
}

impl DenominatorFamily {
    pub fn new(b_scale: u64, r: usize, delta: Rational) -> Result<Self> {
        if b_scale < 2 || r == 0 {
            return Err(Error::InvalidInput("need B > 1 and r ≥ 1".into()));
        }
        if delta <= Rational::zero() {
            return Err(Error::InvalidInput("δ must be positive".into()));
        }
        let rr = arith::int((r * r) as i64);
        let g = arith::floor_below(&[PowTerm::new(
            arith::int(b_scale as i64),
            &delta * &delta / rr,
        )])?;
        Ok(DenominatorFamily {
            b_scale,
            r,
            delta,
            gcd_bound: g as u64,
        })
    }

    pub fn admits(&self, b: &[u64]) -> bool {
        b.len() == self.r
            && b.iter().all(|&x| x >= self.b_scale && x < 2 * self.b_scale)
            && (0..b.len()).all(|i| (i + 1..b.len()).all(|j| b[i].gcd(&b[j]) <= self.gcd_bound))
    }

    /// Admissible tuples with `b_1 ≤ … ≤ b_r`.
    pub fn sorted_tuples(&self) -> Vec<Vec<u64>> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(self.r);
        self.rec_sorted(self.b_scale, &mut cur, &mut out);
        out
    }

    fn rec_sorted(&self, from: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == self.r {
            out.push(cur.clone());
            return;
        }
        for v in from..2 * self.b_scale {
            if cur.iter().all(|&c| c.gcd(&v) <= self.gcd_bound) {
                cur.push(v);
                self.rec_sorted(v, cur, out);
                cur.pop();
            }
        }
    }

    /// Every admissible ordered tuple.
    pub fn tuples(&self) -> Vec<Vec<u64>> {
        let mut out = Vec::new();
        for t in self.sorted_tuples() {
            out.extend(permutations(&t));
        }
        out.sort();
        out
    }

    /// `B^{5δ²}`, the bound on `#R`.
    pub fn r_bound_terms(&self) -> Vec<PowTerm> {
        vec![PowTerm::new(
            arith::int(self.b_scale as i64),
            arith::int(5) * &self.delta * &self.delta,
        )]
    }

    /// `B^{r − 2δ²}`, the floor on the denominators.
    pub fn floor_terms(&self) -> Vec<PowTerm> {
        vec![PowTerm::new(
            arith::int(self.b_scale as i64),
            arith::int(self.r as i64) - arith::int(2) * &self.delta * &self.delta,
        )]
    }
}

/// Distinct permutations of a sorted tuple.
pub fn permutations(sorted: &[u64]) -> Vec<Vec<u64>> {
    let mut v = sorted.to_vec();
    v.sort_unstable();
    let mut out = vec![v.clone()];
    // Lexicographic next-permutation.
    loop {
        let n = v.len();
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| v[i] < v[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| v[j] > v[i]).unwrap();
        v.swap(i, j);
        v[i + 1..].reverse();
        out.push(v.clone());
    }
    out
}

/// `#R(b)` for one admissible tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RCount {
    pub b: Vec<u64>,
    /// Ordered tuples `b′` in `R(b)`.
    pub ordered: u64,
    /// The same set up to permutation.
    pub unordered: u64,
}

/// Signature index over a whole family.
pub struct FamilyIndex {
    family: DenominatorFamily,
    sigs: Vec<SumSignature>,
    /// Per signature: the sorted tuples carrying it, and their ordered count.
    groups: Vec<(Vec<Vec<u64>>, u64)>,
    by_prime: HashMap<u64, Vec<usize>>,
    lookup: HashMap<Vec<u64>, usize>,
}

impl FamilyIndex {
    pub fn new(family: &DenominatorFamily, cap: u128) -> Result<Self> {
        let sorted = family.sorted_tuples();
        let pairs = (sorted.len() as u128).pow(2);
        if pairs > cap {
            return Err(Error::EnumerationTooLarge {
                what: "tuple pairs for #R".into(),
                size: pairs,
                cap,
            });
        }
        let sigs_per: Vec<SumSignature> = sorted.par_iter().map(|t| SumSignature::of(t)).collect();
        let mut group_of: BTreeMap<SumSignature, usize> = BTreeMap::new();
        let mut sigs = Vec::new();
        let mut groups: Vec<(Vec<Vec<u64>>, u64)> = Vec::new();
        let mut lookup = HashMap::new();
        for (t, s) in sorted.into_iter().zip(sigs_per) {
            let id = *group_of.entry(s.clone()).or_insert_with(|| {
                sigs.push(s);
                groups.push((Vec::new(), 0));
                sigs.len() - 1
            });
            groups[id].1 += permutations(&t).len() as u64;
            lookup.insert(t.clone(), id);
            groups[id].0.push(t);
        }
        let mut by_prime: HashMap<u64, Vec<usize>> = HashMap::new();
        for (id, s) in sigs.iter().enumerate() {
            for l in &s.0 {
                by_prime.entry(l.p).or_default().push(id);
            }
        }
        Ok(FamilyIndex {
            family: family.clone(),
            sigs,
            groups,
            by_prime,
            lookup,
        })
    }

    pub fn family(&self) -> &DenominatorFamily {
        &self.family
    }

    pub fn sorted_tuples(&self) -> impl Iterator<Item = &Vec<u64>> {
        self.groups.iter().flat_map(|(ts, _)| ts.iter())
    }

    fn compatible_groups(&self, id: usize) -> Vec<usize> {
        let sig = &self.sigs[id];
        let req = sig.required_primes();
        let candidates: Vec<usize> = match req
            .iter()
            .filter_map(|p| self.by_prime.get(p))
            .min_by_key(|v| v.len())
        {
            Some(list) => list.clone(),
            None if req.is_empty() => (0..self.sigs.len()).collect(),
            None => Vec::new(),
        };
        candidates
            .into_iter()
            .filter(|&o| sig.compatible(&self.sigs[o]))
            .collect()
    }

    fn group_of(&self, b: &[u64]) -> Result<usize> {
        let mut key = b.to_vec();
        key.sort_unstable();
        self.lookup
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Precondition(format!("{b:?} is not admissible")))
    }

    /// `#R(b)`.
    pub fn count(&self, b: &[u64]) -> Result<RCount> {
        let id = self.group_of(b)?;
        let comp = self.compatible_groups(id);
        Ok(RCount {
            b: b.to_vec(),
            ordered: comp.iter().map(|&g| self.groups[g].1).sum(),
            unordered: comp.iter().map(|&g| self.groups[g].0.len() as u64).sum(),
        })
    }

    /// The ordered tuples of `R(b)`, sorted.
    pub fn members(&self, b: &[u64]) -> Result<Vec<Vec<u64>>> {
        let id = self.group_of(b)?;
        let mut out: Vec<Vec<u64>> = self
            .compatible_groups(id)
            .into_iter()
            .flat_map(|g| self.groups[g].0.iter().flat_map(|t| permutations(t)))
            .collect();
        out.sort();
        Ok(out)
    }

    /// `#R` for one representative of every permutation class; the count is
    /// permutation invariant.
    pub fn count_all(&self) -> Vec<RCount> {
        let per_group: Vec<(u64, u64)> = (0..self.sigs.len())
            .into_par_iter()
            .map(|id| {
                let comp = self.compatible_groups(id);
                (
                    comp.iter().map(|&g| self.groups[g].1).sum(),
                    comp.iter().map(|&g| self.groups[g].0.len() as u64).sum(),
                )
            })
            .collect();
        let mut out = Vec::new();
        for (id, (ts, _)) in self.groups.iter().enumerate() {
            for t in ts {
                out.push(RCount {
                    b: t.clone(),
                    ordered: per_group[id].0,
                    unordered: per_group[id].1,
                });
            }
        }
        out.sort_by(|a, b| a.b.cmp(&b.b));
        out
    }
}

/// `#R(b)` and the set itself.
pub fn count_r(b: &[u64], family: &DenominatorFamily, cap: u128) -> Result<(RCount, Vec<Vec<u64>>)> {
    if !family.admits(b) {
        return Err(Error::Precondition(format!("{b:?} is not admissible")));
    }
    let index = FamilyIndex::new(family, cap)?;
    Ok((index.count(b)?, index.members(b)?))
}

/// Does `count ≤ B^{5δ²}` hold?
pub fn within_r_bound(count: u64, family: &DenominatorFamily) -> Result<bool> {
    let ord = arith::cmp_pow_products(
        &[PowTerm::plain(Rational::from_integer(count.into()))],
        &family.r_bound_terms(),
    )?;
    Ok(ord != Ordering::Greater)
}

/// Denominator floor for one tuple: least achievable denominator, the g_p
/// product and whether `min_den ≥ gp ≥ B^{r−2δ²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorCheck {
    pub b: Vec<u64>,
    pub min_denominator: String,
    #[serde(with = "arith::serde_rational")]
    pub gp: Rational,
    pub holds: bool,
}

pub fn floor_check(b: &[u64], family: &DenominatorFamily) -> Result<FloorCheck> {
    let min_den = SumSignature::of(b).min_denominator();
    let gp = gp_product(b);
    let first = Rational::from_integer(min_den.clone()) >= gp;
    let second = if gp.is_zero() {
        false
    } else {
        arith::cmp_pow_products(&[PowTerm::plain(gp.clone())], &family.floor_terms())? != Ordering::Less
    };
    Ok(FloorCheck {
        b: b.to_vec(),
        min_denominator: min_den.to_string(),
        gp,
        holds: first && second,
    })
}

// ---------------------------------------------------------------------------
// Divisor refinement

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementState {
    pub m: Vec<u64>,
    /// Original tuples divisible by `m`.
    pub members: Vec<Vec<u64>>,
    /// `members` divided componentwise by `m`.
    pub survivors: Vec<Vec<u64>>,
    /// `ε₁δ/2`.
    #[serde(with = "arith::serde_rational")]
    pub exponent: Rational,
    pub steps: Vec<Vec<u64>>,
}

fn divisors(n: u64) -> Vec<u64> {
    let mut out = vec![1u64];
    for (p, e) in factorize(n) {
        let len = out.len();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                out.push(out[i] * pk);
            }
        }
    }
    out.sort_unstable();
    out
}

/// `count · (Π m′)^{exponent} ≥ total`
fn meets_density(count: usize, m: &[u64], exponent: &Rational, total: usize) -> Result<bool> {
    if count == 0 {
        return Ok(false);
    }
    let prod: u128 = m.iter().map(|&v| v as u128).product();
    let ord = arith::cmp_pow_products(
        &[
            PowTerm::plain(Rational::from_integer(count.into())),
            PowTerm::new(arith::from_u128(prod), exponent.clone()),
        ],
        &[PowTerm::plain(Rational::from_integer(total.into()))],
    )?;
    Ok(ord != Ordering::Less)
}

/// Least (lexicographic) `m′ ≠ 1` dividing at least `#B′/(Π m′)^{ε₁δ/2}`
/// of the current survivors, if any.
pub fn find_dense_divisor(survivors: &[Vec<u64>], exponent: &Rational) -> Result<Option<(Vec<u64>, usize)>> {
    let mut counts: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    for b in survivors {
        let per: Vec<Vec<u64>> = b.iter().map(|&v| divisors(v)).collect();
        let mut cur = vec![0usize; b.len()];
        'outer: loop {
            let key: Vec<u64> = cur.iter().enumerate().map(|(i, &c)| per[i][c]).collect();
            *counts.entry(key).or_default() += 1;
            for i in (0..b.len()).rev() {
                cur[i] += 1;
                if cur[i] < per[i].len() {
                    continue 'outer;
                }
                cur[i] = 0;
            }
            break;
        }
    }
    for (m, c) in counts {
        if m.iter().all(|&v| v == 1) {
            continue;
        }
        if meets_density(c, &m, exponent, survivors.len())? {
            return Ok(Some((m, c)));
        }
    }
    Ok(None)
}

/// Repeatedly restrict to a dense common divisor until none remains.
pub fn m_refinement(family: &[Vec<u64>], eps1: &Rational, delta: &Rational) -> Result<RefinementState> {
    if family.is_empty() {
        return Err(Error::Precondition("family must be nonempty".into()));
    }
    let d = family[0].len();
    if family.iter().any(|q| q.len() != d || q.contains(&0)) {
        return Err(Error::InvalidInput("ragged or zero tuple in family".into()));
    }
    let exponent = eps1 * delta / arith::int(2);
    let mut m = vec![1u64; d];
    let mut members: Vec<Vec<u64>> = family.to_vec();
    members.sort();
    members.dedup();
    let mut survivors = members.clone();
    let mut steps = Vec::new();
    while let Some((mp, _)) = find_dense_divisor(&survivors, &exponent)? {
        for (mi, v) in m.iter_mut().zip(&mp) {
            *mi *= v;
        }
        let keep: Vec<bool> = survivors
            .iter()
            .map(|b| b.iter().zip(&mp).all(|(x, y)| x % y == 0))
            .collect();
        members = members.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(q, _)| q).collect();
        survivors = survivors
            .into_iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(b, _)| b.iter().zip(&mp).map(|(x, y)| x / y).collect())
            .collect();
        steps.push(mp);
    }
    Ok(RefinementState {
        m,
        members,
        survivors,
        exponent,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Expansion or same denominators

/// Both branch evaluations for one relation family (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionOutcome {
    pub size: usize,
    pub r: u32,
    /// Most frequent `q`-vector (ties: lexicographically least) and its count.
    pub q0: Vec<u64>,
    pub max_multiplicity: usize,
    /// `max_multiplicity ≥ #S^{1/2}`.
    pub same_denominator: bool,
    /// Exact `#A`, when enumerated.
    pub a_card: Option<u64>,
    /// `X^{−εδdr/40 − 5εδ²d/r} #S^{(1/2−ε)r}`.
    pub statement_target: f64,
    /// `(X^{−ε₁δd/2} #S^{1/2−3ε₁})^r / (X^{5dεδ²/6} Q^{(5+ε/20)εδ²/6})`.
    pub display_target: f64,
    pub expansion_statement: Option<bool>,
    pub expansion_display: Option<bool>,
}

impl ExpansionOutcome {
    /// Neither branch holds: a finite-scale counterexample candidate.
    pub fn is_counterexample_candidate(&self) -> bool {
        !self.same_denominator
            && self.expansion_statement == Some(false)
            && self.expansion_display == Some(false)
    }

    pub fn expansion_holds(&self) -> bool {
        self.expansion_statement == Some(true) || self.expansion_display == Some(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionParams {
    pub r: u32,
    #[serde(with = "arith::serde_rational")]
    pub delta: Rational,
    #[serde(with = "arith::serde_rational")]
    pub eps: Rational,
    #[serde(with = "arith::serde_rational")]
    pub x_scale: Rational,
    #[serde(with = "arith::serde_rational")]
    pub q: Rational,
    pub cap: u128,
}

/// Everything needed to replay a counterexample candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleDump {
    pub s: Vec<RelationTriple>,
    pub params: ExpansionParams,
    pub outcome: ExpansionOutcome,
}

fn binomial(n: u128, k: u128) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// `q`-vector multiplicities: the most frequent vector and its count.
pub fn max_multiplicity(s: &[RelationTriple]) -> (Vec<u64>, usize) {
    let mut counts: BTreeMap<&Vec<u64>, usize> = BTreeMap::new();
    for t in s {
        *counts.entry(&t.q).or_default() += 1;
    }
    let mut best: (Vec<u64>, usize) = (Vec::new(), 0);
    for (q, c) in counts {
        if c > best.1 {
            best = (q.clone(), c);
        }
    }
    best
}

/// Distinct coordinatewise sums over `r`-element multisets of `S`.
pub fn sum_set_cardinality(s: &[RelationTriple], r: u32, cap: u128) -> Result<u64> {
    let n = s.len() as u128;
    let size = binomial(n + r as u128 - 1, r as u128);
    if size > cap {
        return Err(Error::EnumerationTooLarge {
            what: "r-fold multisets of S".into(),
            size,
            cap,
        });
    }
    let fracs: Vec<Vec<Rational>> = s
        .iter()
        .map(|t| {
            t.a.iter()
                .zip(&t.q)
                .map(|(&a, &q)| Rational::new(a.into(), q.into()))
                .collect()
        })
        .collect();
    // Partial sums over r−1 elements, then extend in parallel over the last.
    let mut layer: Vec<(usize, Vec<Rational>)> = (0..fracs.len()).map(|i| (i, fracs[i].clone())).collect();
    for _ in 1..r {
        layer = layer
            .into_iter()
            .flat_map(|(last, sum)| {
                (last..fracs.len())
                    .map(|i| {
                        let v: Vec<Rational> = sum.iter().zip(&fracs[i]).map(|(a, b)| a + b).collect();
                        (i, v)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut seen: HashSet<(usize, Vec<Rational>)> = HashSet::new();
        layer.retain(|e| seen.insert(e.clone()));
    }
    let set: HashSet<Vec<Rational>> = layer.into_iter().map(|(_, v)| v).collect();
    Ok(set.len() as u64)
}

/// Evaluate both branches of the expansion / same-denominator dichotomy.
pub fn expansion_or_same_denominator(
    s: &[RelationTriple],
    params: &ExpansionParams,
) -> Result<ExpansionOutcome> {
    if s.is_empty() {
        return Err(Error::Precondition("S is empty".into()));
    }
    let d = s[0].q.len();
    if d < 2 {
        return Err(Error::Precondition("needs d ≥ 2".into()));
    }
    let size = s.len();
    let size_r = Rational::from_integer(size.into());
    // #S ≥ Q^δ
    if arith::cmp_pow_products(
        &[PowTerm::plain(size_r.clone())],
        &[PowTerm::new(params.q.clone(), params.delta.clone())],
    )? == Ordering::Less
    {
        return Err(Error::Precondition(format!(
            "#S = {size} is below Q^δ"
        )));
    }
    let q_terms = [
        PowTerm::plain(params.x_scale.clone()),
        PowTerm::new(params.q.clone(), Rational::new(1.into(), BigInt::from(d - 1))),
    ];
    for t in s {
        for &qi in &t.q {
            let ord = arith::cmp_pow_products(&[PowTerm::plain(Rational::from_integer(qi.into()))], &q_terms)?;
            if ord == Ordering::Greater {
                return Err(Error::Precondition(format!("denominator {qi} exceeds X·Q^{{1/(d−1)}}")));
            }
        }
    }
    let (q0, mult) = max_multiplicity(s);
    let same = (mult as u128) * (mult as u128) >= size as u128;

    let r = params.r;
    let rr = arith::int(r as i64);
    let dr = arith::int(d as i64);
    let eps = &params.eps;
    let delta = &params.delta;
    let eps1 = eps / arith::int(20);
    let half = Rational::new(1.into(), 2.into());
    // Statement form.
    let x_exp = -(eps * delta * &dr * &rr / arith::int(40)) - arith::int(5) * eps * delta * delta * &dr / &rr;
    let stmt = vec![
        PowTerm::new(params.x_scale.clone(), x_exp),
        PowTerm::new(size_r.clone(), (&half - eps) * &rr),
    ];
    // Display form.
    let x_exp2 = -(&eps1 * delta * &dr / arith::int(2)) * &rr
        - arith::int(5) * &dr * eps * delta * delta / arith::int(6);
    let q_exp = -((arith::int(5) + eps / arith::int(20)) * eps * delta * delta / arith::int(6));
    let disp = vec![
        PowTerm::new(params.x_scale.clone(), x_exp2),
        PowTerm::new(size_r.clone(), (&half - arith::int(3) * &eps1) * &rr),
        PowTerm::new(params.q.clone(), q_exp),
    ];
    let a_card = match sum_set_cardinality(s, r, params.cap) {
        Ok(v) => Some(v),
        Err(Error::EnumerationTooLarge { .. }) if same => None,
        Err(e) => return Err(e),
    };
    let check = |terms: &[PowTerm]| -> Result<Option<bool>> {
        match a_card {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(a) => Ok(Some(
                arith::cmp_pow_products(&[PowTerm::plain(Rational::from_integer(a.into()))], terms)?
                    != Ordering::Less,
            )),
        }
    };
    Ok(ExpansionOutcome {
        size,
        r,
        q0,
        max_multiplicity: mult,
        same_denominator: same,
        a_card,
        statement_target: arith::pow_product_f64(&stmt),
        display_target: arith::pow_product_f64(&disp),
        expansion_statement: check(&stmt)?,
        expansion_display: check(&disp)?,
    })
}

// ---------------------------------------------------------------------------
// Collapse to a common denominator

/// `Σ_i h_i f_{i,j} ≈ a_j/q` with one shared `q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonQPair {
    pub a: Vec<i64>,
    pub h: FrequencyVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CollapseBranch {
    /// `Q ≤ Δ^{-1/(2k)^M}`: multiples of a single relation.
    SmallQ,
    SameDenominator,
    /// The counting contradiction did not materialise at this scale.
    ExpansionFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseOutcome {
    pub branch: CollapseBranch,
    pub q: Option<u64>,
    pub pairs: Vec<CommonQPair>,
    /// Frequency caps in force for the pairs (`ε_i⁻¹Δ^{-s/(2k)^M}`, `s` = 1 or 2).
    pub h_caps: Vec<u64>,
    pub expansion: Option<ExpansionOutcome>,
    pub dump: Option<CounterexampleDump>,
}

/// Least `r ≥ 1` with `Q^{δr/(2+k/(2k)^M+10ε)} > x^ε Δ⁻¹`.
pub fn choose_r(q: &Rational, x: u64, delta_box: &Rational, c: &ConstantsProfile, delta: &Rational) -> Result<u32> {
    let denom = arith::int(2) + arith::int(c.k as i64) / &c.two_k_pow_m + arith::int(10) * &c.eps;
    for r in 1..=4096u32 {
        let lhs = [PowTerm::new(q.clone(), delta * arith::int(r as i64) / &denom)];
        let rhs = [
            PowTerm::new(arith::from_u128(x as u128), c.eps.clone()),
            PowTerm::plain(delta_box.recip()),
        ];
        if arith::cmp_pow_products(&lhs, &rhs)? == Ordering::Greater {
            return Ok(r);
        }
    }
    Err(Error::Precondition("no r ≤ 4096 satisfies the size condition".into()))
}

fn to_common(t: &RelationTriple, q: u64) -> CommonQPair {
    CommonQPair {
        a: t.a.iter().zip(&t.q).map(|(&a, &qj)| a * (q / qj) as i64).collect(),
        h: t.h.clone(),
    }
}

/// Reduce a harvested relation set to many relations sharing one `q`.
pub fn collapse_to_common_q(
    relset: &RelationSet,
    b: &BoxTarget,
    c: &ConstantsProfile,
    cap: u128,
) -> Result<CollapseOutcome> {
    let s = &relset.triples;
    let bounds = &relset.bounds;
    let q_terms = |e: Rational| PowTerm::new(arith::int(2), &bounds.log2_q * e);
    if s.is_empty() {
        return Err(Error::Precondition("relation set is empty".into()));
    }
    // #S ≥ Q^{1/(1+ε)c0·d(d−1)}
    let need = (Rational::one() + &c.eps) * &c.c0 * c.dd1();
    if arith::cmp_pow_products(
        &[PowTerm::plain(Rational::from_integer(s.len().into()))],
        &[q_terms(need.recip())],
    )? == Ordering::Less
    {
        return Err(Error::Precondition(format!(
            "{} relations is below Q^{{1/(1+ε)c0 d(d−1)}}",
            s.len()
        )));
    }
    // Q ≤ Δ^{-1/(2k)^M}  ⟺  Q^{(2k)^M} Δ ≤ 1
    let small = arith::cmp_pow_products(
        &[q_terms(c.two_k_pow_m.clone()), PowTerm::plain(b.delta().clone())],
        &[PowTerm::plain(Rational::one())],
    )? != Ordering::Greater;
    if small {
        let t = s.iter().min().expect("nonempty");
        let q = t.common_q();
        let base = to_common(t, q);
        let reps = arith::floor_at_most(&[q_terms(Rational::one())])? as i64;
        let pairs = (1..=reps.max(1))
            .map(|j| CommonQPair {
                a: base.a.iter().map(|a| a * j).collect(),
                h: base.h.scale(j),
            })
            .collect();
        return Ok(CollapseOutcome {
            branch: CollapseBranch::SmallQ,
            q: Some(q),
            pairs,
            h_caps: crate::expsum::h_caps(b, c, 2)?,
            expansion: None,
            dump: None,
        });
    }
    let delta = c
        .delta_dichotomy
        .clone()
        .ok_or_else(|| Error::Precondition("needs d ≥ 2".into()))?;
    let q_rat = exp2_rational(&bounds.log2_q)?;
    let r = match c.r {
        Some(r) => r,
        None => choose_r(&q_rat, bounds.x, b.delta(), c, &delta)?,
    };
    let params = ExpansionParams {
        r,
        delta,
        eps: c.eps.clone(),
        x_scale: x_to_eps(bounds.x, &c.eps),
        q: q_rat,
        cap,
    };
    let outcome = expansion_or_same_denominator(s, &params)?;
    if outcome.same_denominator {
        let q0 = outcome.q0.clone();
        let q = q0.iter().fold(1u64, |acc, &v| acc.lcm(&v));
        let pairs = s.iter().filter(|t| t.q == q0).map(|t| to_common(t, q)).collect();
        return Ok(CollapseOutcome {
            branch: CollapseBranch::SameDenominator,
            q: Some(q),
            pairs,
            h_caps: bounds.h_caps.clone(),
            expansion: Some(outcome),
            dump: None,
        });
    }
    let dump = outcome.is_counterexample_candidate().then(|| CounterexampleDump {
        s: s.clone(),
        params: params.clone(),
        outcome: outcome.clone(),
    });
    Ok(CollapseOutcome {
        branch: CollapseBranch::ExpansionFailure,
        q: None,
        pairs: Vec::new(),
        h_caps: bounds.h_caps.clone(),
        expansion: Some(outcome),
        dump,
    })
}

/// `2^e` for rational `e`: exact when `e` is an integer, else a 53-bit
/// dyadic approximation.
fn exp2_rational(e: &Rational) -> Result<Rational> {
    if e.is_integer() {
        let v = e.to_integer().to_i64().ok_or_else(|| Error::InvalidInput("Q too large".into()))?;
        return Ok(arith::pow2(v));
    }
    Ok(arith::from_f64(arith::to_f64(e).exp2()))
}

/// `x^ε` as a dyadic rational (the scale `X` of the dichotomy).
fn x_to_eps(x: u64, eps: &Rational) -> Rational {
    arith::from_f64((x as f64).powf(arith::to_f64(eps))).max(Rational::one())
}
