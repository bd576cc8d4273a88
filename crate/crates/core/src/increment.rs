//! Lattice selection and the reduction step that trades `r` frequency
//! directions for a smaller system.
//!
//! Construction: column-reduce the selected rows `H` to `H·V = [L | 0]` with
//! `V` unimodular and put `W = V⁻¹`. The first `r` rows of `W` span the
//! saturation of the `h`-lattice (`H = L·W_r`, `D₂ = |det L|`) and the
//! remaining rows `z_t` complete it to a basis of `Z^k`. For `n = n′q₀D₂`
//! the saturation directions of `f(n)` are nearly integral, the reduced
//! polynomials are `g_t(n′) = z_t·f(q₀D₂n′)`, and `f(n) ≡ V·w (mod Z^k)`
//! bounds every `‖f_i(n)‖` by `Σ_t |V_{it}| ‖w_t‖`. `B′` and `y` are
//! chosen so that this bound certifies the lift.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{self, PowTerm, Rational};
use crate::denominators::CommonQPair;
use crate::error::{Error, Result};
use crate::model::{self, ConstantsProfile, FrequencyVector, PolySystem, RealCoefficient};

/// Exact Gram determinant of a family of rational vectors.
pub fn gram_determinant(vectors: &[Vec<Rational>]) -> Result<Rational> {
    let r = vectors.len();
    if r == 0 {
        return Ok(Rational::one());
    }
    let k = vectors[0].len();
    if vectors.iter().any(|v| v.len() != k) {
        return Err(Error::InvalidInput("vectors of unequal dimension".into()));
    }
    if r > k {
        return Err(Error::InvalidInput(format!("{r} vectors in dimension {k}")));
    }
    let g: Vec<Vec<Rational>> = (0..r)
        .map(|s| {
            (0..r)
                .map(|t| vectors[s].iter().zip(&vectors[t]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(determinant(g))
}

/// Determinant by exact Gaussian elimination.
pub fn determinant(mut m: Vec<Vec<Rational>>) -> Rational {
    let n = m.len();
    let mut det = Rational::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&r| !m[r][c].is_zero()) else {
            return Rational::zero();
        };
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        let piv = m[c][c].clone();
        det *= &piv;
        for r in c + 1..n {
            if m[r][c].is_zero() {
                continue;
            }
            let f = &m[r][c] / &piv;
            for cc in c..n {
                let v = &f * &m[c][cc];
                m[r][cc] -= v;
            }
        }
    }
    det
}

/// `‖v_1 ∧ ⋯ ∧ v_r‖ = √det G`.
pub fn wedge_norm(vectors: &[Vec<Rational>]) -> Result<f64> {
    Ok(arith::to_f64(&gram_determinant(vectors)?).max(0.0).sqrt())
}

fn sup_norm(v: &[Rational]) -> Rational {
    v.iter().map(|x| x.abs()).max().unwrap_or_else(Rational::zero)
}

fn l2_sq(v: &[Rational]) -> Rational {
    v.iter().map(|x| x * x).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectionStrategy {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSelection {
    pub r: usize,
    /// Indices into the candidate list passed in.
    pub indices: Vec<usize>,
    pub vectors: Vec<FrequencyVector>,
    /// `h̃ = h/B` componentwise.
    #[serde(with = "arith::serde_rational::matrix")]
    pub normalized: Vec<Vec<Rational>>,
    /// `det G` for the normalized vectors.
    #[serde(with = "arith::serde_rational")]
    pub gram: Rational,
    pub wedge_norm: f64,
    /// `Π ‖h̃^{(ℓ)}‖_∞`.
    #[serde(with = "arith::serde_rational")]
    pub norm_product: Rational,
    /// `Π ‖h^{(ℓ)}‖_∞`.
    pub raw_norm_product: u128,
    #[serde(with = "arith::serde_rational")]
    pub kappa: Rational,
    #[serde(with = "arith::serde_rational")]
    pub c_const: Rational,
    /// Lattice point count `N` of the region.
    pub n_points: u64,
    pub strategy: SelectionStrategy,
}

/// Outcome of re-checking a selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCheck {
    pub within_caps: bool,
    pub hadamard_l2: bool,
    pub hadamard_sup: bool,
    pub near_orthogonal: bool,
    pub size: bool,
}

impl SelectionCheck {
    pub fn ok(&self) -> bool {
        self.within_caps && self.hadamard_l2 && self.hadamard_sup && self.near_orthogonal && self.size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// `κ`; defaults to `2^{-k}`.
    #[serde(with = "arith::serde_rational::option")]
    pub kappa: Option<Rational>,
    /// `C` in `Π‖h‖_∞ ≤ C·B_1⋯B_k/N^{1/(d+1)}`.
    #[serde(with = "arith::serde_rational")]
    pub c_const: Rational,
    /// Exhaustive subset search up to this many candidates.
    pub exhaustive_limit: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            kappa: None,
            c_const: arith::int(1),
            exhaustive_limit: 20,
        }
    }
}

fn normalize(h: &FrequencyVector, caps: &[Rational]) -> Vec<Rational> {
    h.0.iter().zip(caps).map(|(&v, b)| arith::int(v) / b).collect()
}

fn canonical(h: &FrequencyVector) -> FrequencyVector {
    match h.0.iter().find(|&&v| v != 0) {
        Some(&v) if v < 0 => h.neg(),
        _ => h.clone(),
    }
}

/// Gram test `det G ≥ κ² (Π‖h̃‖_∞)²`.
fn near_orthogonal(normalized: &[Vec<Rational>], kappa: &Rational) -> Result<(bool, Rational, Rational)> {
    let gram = gram_determinant(normalized)?;
    let prod: Rational = normalized.iter().map(|v| sup_norm(v)).product();
    let ok = gram >= kappa * kappa * &prod * &prod;
    Ok((ok, gram, prod))
}

/// `(Π‖h‖_∞)^{d+1}·N ≤ (C·Π B_i)^{d+1}`
fn size_condition(raw: u128, caps: &[Rational], c: &Rational, n_points: u64, d: usize) -> Result<bool> {
    let e = arith::int(d as i64 + 1);
    let mut rhs = vec![PowTerm::new(c.clone(), e.clone())];
    rhs.extend(caps.iter().map(|b| PowTerm::new(b.clone(), e.clone())));
    let lhs = [
        PowTerm::new(arith::from_u128(raw), e.clone()),
        PowTerm::plain(Rational::from_integer(n_points.into())),
    ];
    Ok(arith::cmp_pow_products(&lhs, &rhs)? != Ordering::Greater)
}

fn build_selection(
    cands: &[(usize, FrequencyVector)],
    pick: &[usize],
    caps: &[Rational],
    kappa: &Rational,
    cfg: &SelectionConfig,
    n_points: u64,
    strategy: SelectionStrategy,
) -> Result<LatticeSelection> {
    let vectors: Vec<FrequencyVector> = pick.iter().map(|&i| cands[i].1.clone()).collect();
    let normalized: Vec<Vec<Rational>> = vectors.iter().map(|h| normalize(h, caps)).collect();
    let (_, gram, prod) = near_orthogonal(&normalized, kappa)?;
    Ok(LatticeSelection {
        r: vectors.len(),
        indices: pick.iter().map(|&i| cands[i].0).collect(),
        raw_norm_product: vectors.iter().map(|h| h.sup_norm() as u128).product(),
        wedge_norm: arith::to_f64(&gram).max(0.0).sqrt(),
        vectors,
        normalized,
        gram,
        norm_product: prod,
        kappa: kappa.clone(),
        c_const: cfg.c_const.clone(),
        n_points,
        strategy,
    })
}

/// Choose near-orthogonal frequency vectors of small norm product.
///
/// `points` are the `h` parts of lattice points of the region; `n_points` is
/// its full lattice point count `N`.
pub fn select_near_orthogonal(
    points: &[FrequencyVector],
    caps: &[Rational],
    n_points: u64,
    d: usize,
    cfg: &SelectionConfig,
) -> Result<LatticeSelection> {
    let k = caps.len();
    if caps.iter().any(|b| b < &Rational::one()) {
        return Err(Error::InvalidInput("caps must be ≥ 1".into()));
    }
    let kappa = cfg
        .kappa
        .clone()
        .unwrap_or_else(|| Rational::new(1.into(), BigInt::from(2).pow(k as u32)));
    let mut cands: Vec<(usize, FrequencyVector)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, h) in points.iter().enumerate() {
        if h.0.len() != k {
            return Err(Error::InvalidInput("frequency vector of wrong length".into()));
        }
        if h.is_zero() {
            continue;
        }
        if seen.insert(canonical(h)) {
            cands.push((i, h.clone()));
        }
    }
    if cands.is_empty() {
        return Err(Error::NoSelectionFound("no nonzero frequency vectors".into()));
    }
    // Shortest first in the normalized sup norm.
    let norms: Vec<Rational> = cands.iter().map(|(_, h)| sup_norm(&normalize(h, caps))).collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| norms[a].cmp(&norms[b]).then_with(|| cands[a].1.cmp(&cands[b].1)));
    let cands: Vec<(usize, FrequencyVector)> = order.iter().map(|&i| cands[i].clone()).collect();

    let valid = |pick: &[usize]| -> Result<bool> {
        let normalized: Vec<Vec<Rational>> = pick.iter().map(|&i| normalize(&cands[i].1, caps)).collect();
        let (ok, _, _) = near_orthogonal(&normalized, &kappa)?;
        if !ok {
            return Ok(false);
        }
        let raw: u128 = pick.iter().map(|&i| cands[i].1.sup_norm() as u128).product();
        size_condition(raw, caps, &cfg.c_const, n_points, d)
    };

    if cands.len() <= cfg.exhaustive_limit {
        let n = cands.len();
        let subsets: Vec<Vec<usize>> = (1u32..(1 << n))
            .filter(|m| (m.count_ones() as usize) <= k)
            .map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
            .collect();
        let ok: Vec<(Vec<usize>, Rational)> = subsets
            .into_par_iter()
            .filter_map(|s| match valid(&s) {
                Ok(true) => {
                    let prod: Rational = s.iter().map(|&i| norms[order[i]].clone()).product();
                    Some(Ok((s, prod)))
                }
                Ok(false) => None,
                Err(e) => Some(Err(e)),
            })
            .collect::<Result<_>>()?;
        let best = ok.into_iter().min_by(|(a, pa), (b, pb)| {
            b.len().cmp(&a.len()).then_with(|| pa.cmp(pb)).then_with(|| a.cmp(b))
        });
        return match best {
            Some((s, _)) => build_selection(&cands, &s, caps, &kappa, cfg, n_points, SelectionStrategy::Exhaustive),
            None => Err(Error::NoSelectionFound(format!(
                "no subset of {} candidates meets κ = {kappa} and C = {}",
                cands.len(),
                cfg.c_const
            ))),
        };
    }

    let mut pick = vec![0usize];
    for i in 1..cands.len() {
        if pick.len() == k {
            break;
        }
        let mut trial = pick.clone();
        trial.push(i);
        let normalized: Vec<Vec<Rational>> = trial.iter().map(|&t| normalize(&cands[t].1, caps)).collect();
        if near_orthogonal(&normalized, &kappa)?.0 {
            pick = trial;
        }
    }
    while !pick.is_empty() {
        if valid(&pick)? {
            return build_selection(&cands, &pick, caps, &kappa, cfg, n_points, SelectionStrategy::Greedy);
        }
        pick.pop();
    }
    let best = &cands[0].1;
    Err(Error::NoSelectionFound(format!(
        "shortest vector {:?} has ‖h‖_∞ = {} against C·ΠB/N^{{1/(d+1)}} ≈ {:.4}",
        best.0,
        best.sup_norm(),
        arith::to_f64(&cfg.c_const) * caps.iter().map(arith::to_f64).product::<f64>()
            / (n_points as f64).powf(1.0 / (d as f64 + 1.0))
    )))
}

/// Re-check a selection against the caps and its recorded constants.
pub fn verify_selection(sel: &LatticeSelection, caps: &[Rational], d: usize) -> Result<SelectionCheck> {
    let within_caps = sel
        .vectors
        .iter()
        .all(|h| h.0.iter().zip(caps).all(|(&v, b)| arith::int(v.abs()) <= *b));
    let normalized: Vec<Vec<Rational>> = sel.vectors.iter().map(|h| normalize(h, caps)).collect();
    let gram = gram_determinant(&normalized)?;
    let l2: Rational = normalized.iter().map(|v| l2_sq(v)).product();
    let sup: Rational = normalized.iter().map(|v| sup_norm(v)).product();
    let k = caps.len() as i64;
    let kr = arith::pow_int(&arith::int(k), sel.r as i64);
    let (near, _, _) = near_orthogonal(&normalized, &sel.kappa)?;
    let raw: u128 = sel.vectors.iter().map(|h| h.sup_norm() as u128).product();
    Ok(SelectionCheck {
        within_caps,
        hadamard_l2: gram <= l2,
        hadamard_sup: l2 <= kr * &sup * &sup,
        near_orthogonal: near && gram == sel.gram,
        size: size_condition(raw, caps, &sel.c_const, sel.n_points, d)?,
    })
}

// ---------------------------------------------------------------------------
// Integer lattice completion

/// `H·V = [L | 0]` with `V` unimodular; returns `(L, V, W = V⁻¹)`.
pub fn column_reduce(h: &[Vec<i64>]) -> Result<(Vec<Vec<i128>>, Vec<Vec<i128>>, Vec<Vec<i128>>)> {
    let r = h.len();
    let k = h.first().map(|v| v.len()).unwrap_or(0);
    let overflow = || Error::PrecisionInsufficient("integer overflow in lattice reduction".into());
    let mut a: Vec<Vec<i128>> = h.iter().map(|v| v.iter().map(|&x| x as i128).collect()).collect();
    let mut v: Vec<Vec<i128>> = (0..k).map(|i| (0..k).map(|j| (i == j) as i128).collect()).collect();
    let mut w = v.clone();
    for row in 0..r {
        if row >= k {
            return Err(Error::Precondition("more vectors than dimensions".into()));
        }
        loop {
            // Smallest nonzero entry in columns row.. becomes the pivot.
            let Some(p) = (row..k)
                .filter(|&c| a[row][c] != 0)
                .min_by_key(|&c| a[row][c].abs())
            else {
                return Err(Error::Precondition("selected vectors are linearly dependent".into()));
            };
            if p != row {
                for x in a.iter_mut() {
                    x.swap(p, row);
                }
                for x in v.iter_mut() {
                    x.swap(p, row);
                }
                w.swap(p, row);
            }
            let mut done = true;
            for c in row + 1..k {
                if a[row][c] == 0 {
                    continue;
                }
                let q = a[row][c].div_euclid(a[row][row]);
                // col_c -= q col_row ; row_row(W) += q row_c(W)
                for x in a.iter_mut() {
                    x[c] = x[c].checked_sub(q.checked_mul(x[row]).ok_or_else(overflow)?).ok_or_else(overflow)?;
                }
                for x in v.iter_mut() {
                    x[c] = x[c].checked_sub(q.checked_mul(x[row]).ok_or_else(overflow)?).ok_or_else(overflow)?;
                }
                let wc = w[c].clone();
                for (t, y) in w[row].iter_mut().enumerate() {
                    *y = y.checked_add(q.checked_mul(wc[t]).ok_or_else(overflow)?).ok_or_else(overflow)?;
                }
                if a[row][c] != 0 {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
    }
    let l = a.iter().map(|x| x[..r].to_vec()).collect();
    Ok((l, v, w))
}

fn int_det(m: &[Vec<i128>]) -> BigInt {
    let q: Vec<Vec<Rational>> = m
        .iter()
        .map(|row| row.iter().map(|&x| Rational::from_integer(x.into())).collect())
        .collect();
    determinant(q).to_integer()
}

fn rational_inverse(m: &[Vec<i128>]) -> Result<Vec<Vec<Rational>>> {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut v: Vec<Rational> = row.iter().map(|&x| Rational::from_integer(x.into())).collect();
            v.extend((0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }));
            v
        })
        .collect();
    for c in 0..n {
        let p = (c..n)
            .find(|&r| !a[r][c].is_zero())
            .ok_or_else(|| Error::Precondition("singular matrix".into()))?;
        a.swap(p, c);
        let piv = a[c][c].clone();
        for x in a[c].iter_mut() {
            *x /= &piv;
        }
        for r in 0..n {
            if r != c && !a[r][c].is_zero() {
                let f = a[r][c].clone();
                let rowc = a[c].clone();
                for (x, y) in a[r].iter_mut().zip(rowc) {
                    *x -= &f * y;
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[n..].to_vec()).collect())
}

// ---------------------------------------------------------------------------
// Reduction

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    /// The free parameter `δ` in `y` and `B′`.
    #[serde(with = "arith::serde_rational")]
    pub delta: Rational,
    pub selection: SelectionConfig,
    /// Fail on entry when a hypothesis of the reduction does not hold.
    pub enforce_hypotheses: bool,
    pub exhaustive_lift_limit: u64,
    pub lift_draws: u64,
    pub seed: u64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            delta: arith::rat(1, 100),
            selection: SelectionConfig::default(),
            enforce_hypotheses: true,
            exhaustive_lift_limit: 10_000,
            lift_draws: 1_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub within_caps: bool,
    pub relation_errors: bool,
    pub near_orthogonal: bool,
    /// `Π‖h̃‖_∞ ≤ C / Q^{1/c d(d²−1)}`.
    pub small_product: bool,
    /// `q₀ < x^ε Q^{2/d}`.
    pub q0_bound: bool,
    /// `η ≤ 1/100` and `η < Q^{1/d}/x^{1−ε}`.
    pub eta_bound: bool,
}

impl HypothesisReport {
    pub fn ok(&self) -> bool {
        self.within_caps
            && self.relation_errors
            && self.near_orthogonal
            && self.small_product
            && self.q0_bound
            && self.eta_bound
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (ok, name) in [
            (self.within_caps, "within_caps"),
            (self.relation_errors, "relation_errors"),
            (self.near_orthogonal, "near_orthogonal"),
            (self.small_product, "small_product"),
            (self.q0_bound, "q0_bound"),
            (self.eta_bound, "eta_bound"),
        ] {
            if !ok {
                v.push(name);
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiftMode {
    Exhaustive,
    Sampled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftingTest {
    pub mode: LiftMode,
    pub tested: u64,
    /// `n′` at which every `‖g_i(n′)‖ < 1/B′_i`.
    pub premise_hits: u64,
    /// Premise held but the lifted `n` missed the box.
    pub failures: Vec<u64>,
    /// `n′` where the pointwise bound `‖f_i(n)‖ ≤ Σ_t |V_{it}| ‖w_t‖` failed.
    pub bound_failures: Vec<u64>,
    /// Evaluations too close to a boundary to decide.
    pub undecided: u64,
}

impl LiftingTest {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.bound_failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub system: PolySystem,
    #[serde(with = "arith::serde_rational::vec")]
    pub b_caps: Vec<Rational>,
    pub x: u64,
    pub q0: u64,
    #[serde(with = "arith::serde_rational")]
    pub q: Rational,
    #[serde(with = "arith::serde_rational")]
    pub eta: Rational,
    #[serde(with = "arith::serde_rational")]
    pub eps: Rational,
    #[serde(with = "arith::serde_rational")]
    pub delta: Rational,
    pub relations: Vec<CommonQPair>,
    pub hypotheses: HypothesisReport,
    pub selection: LatticeSelection,
    /// `D₁²`, the Gram determinant of the integer rows.
    pub d1_sq: String,
    pub d1: f64,
    pub d2: u64,
    /// Lower triangular `L` with `H = L·W_r`.
    pub l: Vec<Vec<i128>>,
    /// Unimodular `W`; rows `r..k` are the complement vectors `z_t`.
    pub w: Vec<Vec<i128>>,
    pub v: Vec<Vec<i128>>,
    /// `|s_m·f_{·j} − ρ_{m,j}|` bounds for the saturation rows.
    #[serde(with = "arith::serde_rational::matrix")]
    pub residual_bounds: Vec<Vec<Rational>>,
    pub k_reduced: usize,
    pub reduced: Option<PolySystem>,
    #[serde(with = "arith::serde_rational::vec")]
    pub b_prime: Vec<Rational>,
    /// `‖z_t‖_∞ B_{r+t}/δ²`.
    #[serde(with = "arith::serde_rational::vec")]
    pub b_prime_display: Vec<Rational>,
    /// `n′ < y`.
    pub y: u64,
    /// Largest horizon certified by the pointwise bound.
    pub y_certified: u64,
    /// `δ x^{1−ε} min_ℓ‖h̃^{(ℓ)}‖_∞ / (q₀ Q^{1/d} D₂)`.
    pub y_display: f64,
    /// `n = n′ · lift`.
    pub lift: u64,
    pub lifting: LiftingTest,
}

impl ReductionRecord {
    pub fn k(&self) -> usize {
        self.system.k()
    }

    pub fn lift_n(&self, n_prime: u64) -> Option<u64> {
        n_prime.checked_mul(self.lift)
    }

    /// Tolerances `1/B′_i` of the reduced system.
    pub fn reduced_tolerances(&self) -> Vec<Rational> {
        self.b_prime.iter().map(|b| b.recip()).collect()
    }
}

fn real_abs_bound(c: &RealCoefficient) -> Rational {
    c.value.abs() + &c.err
}

/// `Σ_j bound_j n^j`
fn poly_bound(bounds: &[Rational], n: &Rational) -> Rational {
    let mut acc = Rational::zero();
    let mut p = n.clone();
    for b in bounds {
        acc += b * &p;
        p *= n;
    }
    acc
}

/// Entry checks for the reduction.
#[allow(clippy::too_many_arguments)]
pub fn check_hypotheses(
    p: &PolySystem,
    caps: &[Rational],
    q0: u64,
    q: &Rational,
    eta: &Rational,
    x: u64,
    c: &ConstantsProfile,
    relations: &[CommonQPair],
    sel: &LatticeSelection,
) -> Result<HypothesisReport> {
    let d = p.d();
    let within_caps = sel
        .vectors
        .iter()
        .all(|h| h.0.iter().zip(caps).all(|(&v, b)| arith::int(v.abs()) <= *b));
    let mut relation_errors = true;
    for &idx in &sel.indices {
        let pair = &relations[idx];
        for j in 0..d {
            let form = p.linear_form(&pair.h.0, j + 1);
            let diff = RealCoefficient {
                value: &form.value - Rational::new(pair.a[j].into(), q0.into()),
                err: form.err.clone(),
            };
            if real_abs_bound(&diff) > arith::pow_int(eta, j as i64 + 1) {
                relation_errors = false;
            }
        }
    }
    let (near, _, _) = near_orthogonal(&sel.normalized, &sel.kappa)?;
    // c with 4.5c + 1.5 = c_increment.
    let c_lemma = (&c.c_increment - arith::rat(3, 2)) / arith::rat(9, 2);
    let dd = arith::int(d as i64);
    let e_small = (&c_lemma * &dd * (&dd * &dd - arith::int(1))).recip();
    let small_product = if d < 2 {
        false
    } else {
        arith::cmp_pow_products(
            &[PowTerm::plain(sel.norm_product.clone()), PowTerm::new(q.clone(), e_small)],
            &[PowTerm::plain(sel.c_const.clone())],
        )? != Ordering::Greater
    };
    let xr = arith::from_u128(x as u128);
    let q0_bound = arith::cmp_pow_products(
        &[PowTerm::plain(Rational::from_integer(q0.into()))],
        &[
            PowTerm::new(xr.clone(), c.eps.clone()),
            PowTerm::new(q.clone(), arith::int(2) / &dd),
        ],
    )? == Ordering::Less;
    let eta_bound = *eta >= Rational::zero()
        && *eta <= arith::rat(1, 100)
        && (eta.is_zero()
            || arith::cmp_pow_products(
                &[PowTerm::plain(eta.clone()), PowTerm::new(xr, Rational::one() - &c.eps)],
                &[PowTerm::new(q.clone(), dd.recip())],
            )? == Ordering::Less);
    Ok(HypothesisReport {
        within_caps,
        relation_errors,
        near_orthogonal: near,
        small_product,
        q0_bound,
        eta_bound,
    })
}

/// One density-increment step: select directions, build the reduced system,
/// certify the horizon and test the lifting property.
#[allow(clippy::too_many_arguments)]
pub fn reduce_system(
    p: &PolySystem,
    caps: &[Rational],
    q0: u64,
    relations: &[CommonQPair],
    q: &Rational,
    eta: &Rational,
    x: u64,
    c: &ConstantsProfile,
    cfg: &ReductionConfig,
) -> Result<ReductionRecord> {
    let k = p.k();
    let d = p.d();
    if caps.len() != k {
        return Err(Error::InvalidInput("one cap per polynomial".into()));
    }
    if q0 == 0 || x < 2 {
        return Err(Error::InvalidInput("need q₀ ≥ 1 and x ≥ 2".into()));
    }
    if relations.iter().any(|r| r.a.len() != d || r.h.0.len() != k) {
        return Err(Error::InvalidInput("relation shape does not match the system".into()));
    }
    let points: Vec<FrequencyVector> = relations.iter().map(|r| r.h.clone()).collect();
    let sel = select_near_orthogonal(&points, caps, relations.len() as u64, d, &cfg.selection)?;
    let hyp = check_hypotheses(p, caps, q0, q, eta, x, c, relations, &sel)?;
    if cfg.enforce_hypotheses && !hyp.ok() {
        return Err(Error::Precondition(format!(
            "reduction hypotheses fail: {}",
            hyp.failures().join(", ")
        )));
    }
    let r = sel.r;
    let hrows: Vec<Vec<i64>> = sel.vectors.iter().map(|h| h.0.clone()).collect();
    let (l, v, w) = column_reduce(&hrows)?;
    let d2_big = int_det(&l).abs();
    let d2 = d2_big
        .to_u64()
        .ok_or_else(|| Error::PrecisionInsufficient("D₂ overflows u64".into()))?;
    let int_rows: Vec<Vec<Rational>> = hrows
        .iter()
        .map(|h| h.iter().map(|&x| arith::int(x)).collect())
        .collect();
    let d1_sq = gram_determinant(&int_rows)?;
    let lift = q0
        .checked_mul(d2)
        .ok_or_else(|| Error::PrecisionInsufficient("q₀D₂ overflows u64".into()))?;
    let lift_r = Rational::from_integer(lift.into());

    // ρ = L⁻¹ a / q₀ per degree; residual = s_m·f_{·j} − ρ_{m,j}.
    let linv = rational_inverse(&l)?;
    let sel_a: Vec<&Vec<i64>> = sel.indices.iter().map(|&i| &relations[i].a).collect();
    let mut residual_bounds = vec![vec![Rational::zero(); d]; r];
    for m in 0..r {
        let srow: Vec<i64> = w[m]
            .iter()
            .map(|&x| i64::try_from(x).map_err(|_| Error::PrecisionInsufficient("basis entry overflow".into())))
            .collect::<Result<_>>()?;
        for j in 0..d {
            let rho: Rational = (0..r)
                .map(|t| &linv[m][t] * arith::int(sel_a[t][j]))
                .sum::<Rational>()
                / Rational::from_integer(q0.into());
            let lf = p.linear_form(&srow, j + 1);
            if !(&rho * &lift_r).is_integer() {
                return Err(Error::Precondition("ρ is not killed by q₀D₂".into()));
            }
            residual_bounds[m][j] = (&lf.value - &rho).abs() + &lf.err;
        }
    }

    // B′: certified so that Σ_t |V_{it}|/B′_t ≤ 1/(2B_i), and at least the display value.
    let kr = k - r;
    let mut b_prime = Vec::with_capacity(kr);
    let mut b_prime_display = Vec::with_capacity(kr);
    for t in 0..kr {
        let col = r + t;
        let cert = (0..k)
            .map(|i| arith::int(2 * kr as i64) * arith::int(v[i][col].abs() as i64) * &caps[i])
            .max()
            .unwrap_or_else(Rational::zero);
        let z_sup = w[col].iter().map(|x| x.abs()).max().unwrap_or(0);
        let disp = arith::int(z_sup as i64) * &caps[col] / (&cfg.delta * &cfg.delta);
        b_prime.push(cert.max(disp.clone()).max(arith::int(2)));
        b_prime_display.push(disp);
    }

    // Horizon: largest n′ with Σ_m |V_{im}| E_m(n′q₀D₂) < 1/(2B_i) for all i.
    let ok_at = |np: u64| -> bool {
        let n = Rational::from_integer(np.into()) * &lift_r;
        let e: Vec<Rational> = residual_bounds.iter().map(|b| poly_bound(b, &n)).collect();
        (0..k).all(|i| {
            let s: Rational = (0..r).map(|m| arith::int(v[i][m].abs() as i64) * &e[m]).sum();
            s * arith::int(2) * &caps[i] < Rational::one()
        })
    };
    let n_cap = (x - 1) / lift;
    let y_certified = if n_cap == 0 || !ok_at(1) {
        1
    } else {
        let (mut lo, mut hi) = (1u64, n_cap);
        if ok_at(hi) {
            lo = hi;
        }
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if ok_at(mid) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo + 1
    };
    let min_h = sel
        .normalized
        .iter()
        .map(|v| arith::to_f64(&sup_norm(v)))
        .fold(f64::INFINITY, f64::min);
    let xf = x as f64;
    let y_display = arith::to_f64(&cfg.delta) * xf.powf(1.0 - arith::to_f64(&c.eps)) * min_h
        / (q0 as f64 * arith::to_f64(q).powf(1.0 / d as f64) * d2 as f64);
    let y = if y_display.is_finite() && y_display >= 1.0 {
        y_certified.min(y_display.floor() as u64).max(1)
    } else {
        1
    };

    let reduced = if kr == 0 {
        None
    } else {
        let mut rows = Vec::with_capacity(kr);
        for t in 0..kr {
            let z: Vec<i64> = w[r + t]
                .iter()
                .map(|&x| i64::try_from(x).map_err(|_| Error::PrecisionInsufficient("basis entry overflow".into())))
                .collect::<Result<_>>()?;
            let mut scale = Rational::one();
            let mut row = Vec::with_capacity(d);
            for j in 0..d {
                scale *= &lift_r;
                row.push(p.linear_form(&z, j + 1).scale(&scale).reduce_mod1());
            }
            rows.push(row);
        }
        Some(PolySystem::new(rows)?)
    };

    let mut rec = ReductionRecord {
        system: p.clone(),
        b_caps: caps.to_vec(),
        x,
        q0,
        q: q.clone(),
        eta: eta.clone(),
        eps: c.eps.clone(),
        delta: cfg.delta.clone(),
        relations: relations.to_vec(),
        hypotheses: hyp,
        selection: sel,
        d1: arith::to_f64(&d1_sq).max(0.0).sqrt(),
        d1_sq: d1_sq.to_string(),
        d2,
        l,
        w,
        v,
        residual_bounds,
        k_reduced: kr,
        reduced,
        b_prime,
        b_prime_display,
        y,
        y_certified,
        y_display,
        lift,
        lifting: LiftingTest {
            mode: LiftMode::Exhaustive,
            tested: 0,
            premise_hits: 0,
            failures: Vec::new(),
            bound_failures: Vec::new(),
            undecided: 0,
        },
    };
    rec.lifting = lifting_test(&rec, cfg.exhaustive_lift_limit, cfg.lift_draws, cfg.seed)?;
    if !rec.lifting.passed() {
        let n_prime = rec
            .lifting
            .failures
            .first()
            .or(rec.lifting.bound_failures.first())
            .copied()
            .unwrap_or(0);
        return Err(Error::LiftingPropertyFailed {
            n_prime,
            detail: serde_json::to_string(&rec).unwrap_or_default(),
        });
    }
    Ok(rec)
}

/// Test the lifting property on `n′ < y`: exhaustively up to `limit`,
/// otherwise on `draws` seeded samples.
pub fn lifting_test(rec: &ReductionRecord, limit: u64, draws: u64, seed: u64) -> Result<LiftingTest> {
    let ns: Vec<u64> = if rec.y <= 1 {
        Vec::new()
    } else if rec.y - 1 <= limit {
        (1..rec.y).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..draws).map(|_| rng.gen_range(1..rec.y)).collect()
    };
    let mode = if rec.y <= 1 || rec.y - 1 <= limit {
        LiftMode::Exhaustive
    } else {
        LiftMode::Sampled { seed }
    };
    let k = rec.k();
    let tol: Vec<Rational> = rec.b_caps.iter().map(|b| b.recip()).collect();
    let tol_g = rec.reduced_tolerances();
    let rows: Vec<Vec<i64>> = rec.w.iter().map(|row| row.iter().map(|&x| x as i64).collect()).collect();
    // Per n′: (premise, conclusion-failed, bound-failed, undecided)
    let results: Vec<(bool, bool, bool, bool)> = ns
        .par_iter()
        .map(|&np| {
            let n = np * rec.lift;
            let nb = BigInt::from(n);
            let fv = match model::eval_system(&rec.system, n) {
                Ok(v) => v,
                Err(_) => return (false, false, false, true),
            };
            // ‖w_t‖ for every basis row.
            let mut wn = Vec::with_capacity(k);
            for row in &rows {
                let mut acc = RealCoefficient::zero();
                let mut pw = Rational::from_integer(nb.clone());
                for j in 0..rec.system.d() {
                    acc = acc.add(&rec.system.linear_form(row, j + 1).scale(&pw));
                    pw *= Rational::from_integer(nb.clone());
                }
                match model::frac_norm(&acc) {
                    Ok(nv) => wn.push(nv),
                    Err(_) => return (false, false, false, true),
                }
            }
            let mut bound_fail = false;
            for i in 0..k {
                let hi: Rational = (0..k)
                    .map(|t| arith::int(rec.v[i][t].abs() as i64) * (&wn[t].value + &wn[t].err))
                    .sum();
                if &fv[i].value - &fv[i].err > hi {
                    bound_fail = true;
                }
            }
            let premise = match &rec.reduced {
                None => Ok(true),
                Some(g) => model::eval_system(g, np).and_then(|gv| {
                    let mut all = true;
                    for (nv, t) in gv.iter().zip(&tol_g) {
                        if !nv.lt(t)? {
                            all = false;
                        }
                    }
                    Ok(all)
                }),
            };
            let premise = match premise {
                Ok(p) => p,
                Err(_) => return (false, false, bound_fail, true),
            };
            let mut concl_fail = false;
            let mut undecided = false;
            if premise {
                if n >= rec.x {
                    concl_fail = true;
                }
                for (nv, t) in fv.iter().zip(&tol) {
                    match nv.lt(t) {
                        Ok(true) => {}
                        Ok(false) => concl_fail = true,
                        Err(_) => undecided = true,
                    }
                }
            }
            (premise, concl_fail, bound_fail, undecided)
        })
        .collect();
    let mut out = LiftingTest {
        mode,
        tested: ns.len() as u64,
        premise_hits: 0,
        failures: Vec::new(),
        bound_failures: Vec::new(),
        undecided: 0,
    };
    for (&np, (prem, cf, bf, und)) in ns.iter().zip(results) {
        out.premise_hits += prem as u64;
        if cf {
            out.failures.push(np);
        }
        if bf {
            out.bound_failures.push(np);
        }
        out.undecided += und as u64;
    }
    out.failures.sort_unstable();
    out.failures.dedup();
    out.bound_failures.sort_unstable();
    out.bound_failures.dedup();
    Ok(out)
}

/// Consistency of the stored lattice data: `W·V = I`, `H = L·W_r`,
/// `|det L| = D₂`, `y < x`, `k′ < k`.
pub fn verify_record_structure(rec: &ReductionRecord) -> bool {
    let k = rec.k();
    let r = rec.selection.r;
    let wv_identity = (0..k).all(|i| {
        (0..k).all(|j| (0..k).map(|t| rec.w[i][t] * rec.v[t][j]).sum::<i128>() == (i == j) as i128)
    });
    let factor = rec.selection.vectors.iter().enumerate().all(|(l, h)| {
        (0..k).all(|c| (0..r).map(|m| rec.l[l][m] * rec.w[m][c]).sum::<i128>() == h.0[c] as i128)
    });
    let d2 = int_det(&rec.l).abs() == BigInt::from(rec.d2);
    wv_identity && factor && d2 && rec.y < rec.x.max(2) && rec.k_reduced < k && rec.lift == rec.q0 * rec.d2
}

// ---------------------------------------------------------------------------
// Accounting

/// Exponents `(e′, e)` in `y/(ΠB′)^{e′}` against `x^{1−ε}/(ΠB)^{e}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingExponents {
    #[serde(with = "arith::serde_rational")]
    pub reduced: Rational,
    #[serde(with = "arith::serde_rational")]
    pub original: Rational,
}

impl AccountingExponents {
    /// `d(d−1)(4.5c+1.5−1/k′³)` and `d(d−1)(4.5c+1.5−2/k⁴)`.
    pub fn lemma_form(c: &ConstantsProfile, k: usize, k_reduced: usize) -> Self {
        let base = &c.c_increment;
        let dd1 = c.dd1();
        let reduced = if k_reduced == 0 {
            Rational::zero()
        } else {
            &dd1 * (base - arith::pow_int(&arith::int(k_reduced as i64), 3).recip())
        };
        let original = &dd1 * (base - arith::int(2) * arith::pow_int(&arith::int(k as i64), 4).recip());
        AccountingExponents { reduced, original }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingReport {
    pub exponents: AccountingExponents,
    pub log2_lhs: f64,
    pub log2_rhs: f64,
    /// `log2(lhs/rhs)`.
    pub log2_ratio: f64,
    #[serde(with = "arith::serde_rational")]
    pub implied_constant: Rational,
    /// `lhs · implied_constant ≥ rhs`, decided exactly.
    pub holds: bool,
}

/// Size accounting for a reduction step.
pub fn increment_accounting(
    rec: &ReductionRecord,
    exps: &AccountingExponents,
    implied_constant: &Rational,
) -> Result<AccountingReport> {
    let y = Rational::from_integer(rec.y.into());
    let mut lhs = vec![PowTerm::plain(y), PowTerm::plain(implied_constant.clone())];
    lhs.extend(rec.b_prime.iter().map(|b| PowTerm::new(b.clone(), -exps.reduced.clone())));
    let mut rhs = vec![PowTerm::new(
        arith::from_u128(rec.x as u128),
        Rational::one() - &rec.eps,
    )];
    rhs.extend(rec.b_caps.iter().map(|b| PowTerm::new(b.clone(), -exps.original.clone())));
    let holds = arith::cmp_pow_products(&lhs, &rhs)? != Ordering::Less;
    let l2 = |t: &[PowTerm]| -> f64 { t.iter().map(|p| arith::to_f64(&p.exp) * arith::log2_abs(&p.base)).sum() };
    let log2_lhs = l2(&lhs[..1]) + l2(&lhs[2..]);
    let log2_rhs = l2(&rhs);
    Ok(AccountingReport {
        exponents: exps.clone(),
        log2_lhs,
        log2_rhs,
        log2_ratio: log2_lhs - log2_rhs,
        implied_constant: implied_constant.clone(),
        holds,
    })
}

/// `1/(k−r)³ ≥ 1/k³ + 1/k⁴`, i.e. `k⁴ ≥ (k−r)³(k+1)`.
pub fn descent_gap_holds(k: u64, r: u64) -> bool {
    if r == 0 || r >= k {
        return false;
    }
    let (k, m) = (k as u128, (k - r) as u128);
    k.pow(4) >= m.pow(3) * (k + 1)
}
