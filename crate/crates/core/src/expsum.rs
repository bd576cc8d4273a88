//! Weyl sums, the smoothing kernel and the large-sieve style dichotomy probe.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_traits::One;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{self, PowTerm, Rational};
use crate::error::{Error, Result};
use crate::eval::{CompiledPoly, Denominator};
use crate::model::{BoxTarget, ConstantsProfile, FrequencyVector, PolySystem, RealCoefficient};
use crate::oracle;

const CHUNK: u64 = 1 << 12;
/// Per-term rounding budget of the `f64` phase path (phase conversion plus
/// `sin_cos`), generously rounded up.
const TERM_ROUNDING: f64 = 2e-15;
/// Largest tolerated coefficient-induced phase error.
pub const PHASE_TOLERANCE: f64 = 1e-6;
/// Default cardinality cap on the frequency box.
pub const DEFAULT_H_CAP: u128 = 10_000_000;

/// A complex value with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylSum {
    pub re: f64,
    pub im: f64,
    pub err: f64,
}

impl WeylSum {
    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn conj(&self) -> Self {
        WeylSum {
            im: -self.im,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// The phase polynomial `Σ_i h_i f_i` compiled for stepping.
#[derive(Debug, Clone)]
pub struct PhasePoly {
    poly: CompiledPoly,
    /// Coefficient error of the phase at `n`, per unit of `n^j`.
    errs: Vec<f64>,
}

impl PhasePoly {
    pub fn new(p: &PolySystem, h: &FrequencyVector) -> Result<Self> {
        if h.0.len() != p.k() {
            return Err(Error::InvalidInput(format!(
                "frequency vector has length {}, system has k = {}",
                h.0.len(),
                p.k()
            )));
        }
        let gammas: Vec<RealCoefficient> = (1..=p.d()).map(|j| p.linear_form(&h.0, j)).collect();
        Ok(Self::from_coefficients(&gammas))
    }

    pub fn from_coefficients(gammas: &[RealCoefficient]) -> Self {
        let mut poly = CompiledPoly::new(gammas);
        let mut errs: Vec<f64> = gammas.iter().map(|g| arith::to_f64(&g.err)).collect();
        if matches!(poly.denominator(), Denominator::Big(_)) {
            // Round to 2^-128; the rounding joins the error budget.
            let scale = arith::pow2(128);
            let rounded: Vec<RealCoefficient> = gammas
                .iter()
                .map(|g| {
                    let v = arith::frac(&g.value);
                    let r = (&v * &scale).floor() / &scale;
                    RealCoefficient::with_error(r, &g.err + arith::pow2(-128)).expect("nonnegative")
                })
                .collect();
            poly = CompiledPoly::new(&rounded);
            errs = rounded.iter().map(|g| arith::to_f64(&g.err)).collect();
        }
        PhasePoly { poly, errs }
    }

    /// Upper bound on the coefficient-induced phase error at `n`.
    pub fn phase_error(&self, n: u64) -> f64 {
        let nf = n as f64;
        let mut pow = 1.0;
        let mut e = 0.0;
        for err in &self.errs {
            pow *= nf;
            e += err * pow;
        }
        e * (1.0 + 1e-12)
    }

    fn chunk_sum(&self, a: u64, b: u64) -> (f64, f64) {
        let mut re = Neumaier::default();
        let mut im = Neumaier::default();
        self.poly.for_each_phase(a, b, |t| {
            let centred = if t >= 0.5 { t - 1.0 } else { t };
            let (s, c) = (2.0 * PI * centred).sin_cos();
            re.add(c);
            im.add(s);
        });
        (re.value(), im.value())
    }
}

fn pairwise(mut v: Vec<(f64, f64)>) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    while v.len() > 1 {
        v = v
            .chunks(2)
            .map(|c| {
                if c.len() == 2 {
                    (c[0].0 + c[1].0, c[0].1 + c[1].1)
                } else {
                    c[0]
                }
            })
            .collect();
    }
    v[0]
}

fn chunk_bounds(x: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut a = 1;
    while a <= x {
        let b = (a + CHUNK).min(x + 1);
        out.push((a, b));
        a = b;
    }
    out
}

/// `Σ_{n≤x} e(g(n))` for a compiled phase; `parallel` only changes scheduling.
pub fn weyl_sum_phase(phase: &PhasePoly, x: u64, parallel: bool) -> Result<WeylSum> {
    if x == 0 {
        return Err(Error::Precondition("weyl_sum needs x ≥ 1".into()));
    }
    let worst = phase.phase_error(x);
    if worst > PHASE_TOLERANCE {
        return Err(Error::PrecisionInsufficient(format!(
            "phase error {worst:.3e} at n = {x} exceeds {PHASE_TOLERANCE:.0e}"
        )));
    }
    let bounds = chunk_bounds(x);
    let parts: Vec<(f64, f64)> = if parallel {
        bounds.par_iter().map(|&(a, b)| phase.chunk_sum(a, b)).collect()
    } else {
        bounds.iter().map(|&(a, b)| phase.chunk_sum(a, b)).collect()
    };
    let (re, im) = pairwise(parts);
    // Σ_n 2π·err(n) ≤ 2π·x·err(x); rounding per term plus the tree merge.
    let levels = (bounds.len() as f64).log2().ceil() + 1.0;
    let err = 2.0 * PI * x as f64 * worst
        + x as f64 * TERM_ROUNDING
        + levels * f64::EPSILON * (re.abs() + im.abs() + x as f64);
    Ok(WeylSum { re, im, err })
}

/// `Σ_{n≤x} e(Σ_i h_i f_i(n))` with an absolute error estimate.
pub fn weyl_sum(p: &PolySystem, h: &FrequencyVector, x: u64) -> Result<WeylSum> {
    weyl_sum_phase(&PhasePoly::new(p, h)?, x, true)
}

// ---------------------------------------------------------------------------
// Smoothing kernel

fn psi(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// The smooth step `s: [0,1] → [0,1]`, `s(u) + s(1−u) = 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = psi(u);
        a / (a + psi(1.0 - u))
    }
}

/// The bump `φ`: `1` on `|t| ≤ 1/2`, `0` on `|t| ≥ 1`.
pub fn phi(t: f64) -> f64 {
    let a = t.abs();
    if a <= 0.5 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        smooth_step(2.0 * (1.0 - a))
    }
}

fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature over `panels` equal pieces.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    let w = (b - a) / panels as f64;
    let tol = tol / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + w * i as f64;
            let hi = lo + w;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_rec(f, lo, hi, fa, fm, fb, whole, tol, 40)
        })
        .sum()
}

/// `φ̂(ξ) = ∫ φ(t) e(−tξ) dt`, to about `1e-12` absolute.
pub fn phi_hat(xi: f64) -> f64 {
    let xi = xi.abs();
    let flat = if xi == 0.0 {
        0.5
    } else {
        (PI * xi).sin() / (2.0 * PI * xi)
    };
    let panels = (4.0 * xi).ceil().max(4.0) as usize;
    let w = 2.0 * PI * xi;
    let ramp = integrate(&|t| phi(t) * (w * t).cos(), 0.5, 1.0, 4e-13, panels);
    2.0 * (flat + ramp)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn gl16() -> &'static [(f64, f64)] {
    static V: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    V.get_or_init(|| gauss_legendre(16))
}

/// `φ̂(ξ)` by fixed composite Gauss–Legendre; used for bulk tail sums.
pub fn phi_hat_fast(xi: f64) -> f64 {
    let xi = xi.abs();
    let flat = if xi == 0.0 {
        0.5
    } else {
        (PI * xi).sin() / (2.0 * PI * xi)
    };
    let panels = (2.0 * xi).ceil().max(8.0) as usize;
    let w = 2.0 * PI * xi;
    let width = 0.5 / panels as f64;
    let mut ramp = 0.0;
    for p in 0..panels {
        let mid = 0.5 + width * (p as f64 + 0.5);
        for &(node, weight) in gl16() {
            let t = mid + 0.5 * width * node;
            ramp += 0.5 * width * weight * phi(t) * (w * t).cos();
        }
    }
    2.0 * (flat + ramp)
}

/// Cache of `φ̂(ε·h)` keyed by `(ε, |h|)`.
#[derive(Debug, Default)]
pub struct PhiHatCache {
    map: HashMap<(Rational, u64), f64>,
}

impl PhiHatCache {
    pub fn get(&mut self, eps: &Rational, h: i64) -> f64 {
        let key = (eps.clone(), h.unsigned_abs());
        *self
            .map
            .entry(key)
            .or_insert_with(|| phi_hat(arith::to_f64(eps) * h.unsigned_abs() as f64))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Truncated Taylor series of order 4, for derivatives of the step.
#[derive(Clone, Copy)]
struct Jet([f64; 5]);

impl Jet {
    fn var(x: f64) -> Self {
        Jet([x, 1.0, 0.0, 0.0, 0.0])
    }
    fn cst(c: f64) -> Self {
        Jet([c, 0.0, 0.0, 0.0, 0.0])
    }
    fn add(self, o: Jet) -> Jet {
        let mut r = self.0;
        for (a, b) in r.iter_mut().zip(o.0) {
            *a += b;
        }
        Jet(r)
    }
    fn sub(self, o: Jet) -> Jet {
        let mut r = self.0;
        for (a, b) in r.iter_mut().zip(o.0) {
            *a -= b;
        }
        Jet(r)
    }
    fn mul(self, o: Jet) -> Jet {
        let mut r = [0.0; 5];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate().take(5 - i) {
                r[i + j] += a * b;
            }
        }
        Jet(r)
    }
    fn recip(self) -> Jet {
        let a = self.0;
        let mut r = [0.0; 5];
        r[0] = 1.0 / a[0];
        for n in 1..5 {
            let s: f64 = (1..=n).map(|k| a[k] * r[n - k]).sum();
            r[n] = -s * r[0];
        }
        Jet(r)
    }
    fn exp(self) -> Jet {
        let a = self.0;
        let mut r = [0.0; 5];
        r[0] = a[0].exp();
        for n in 1..5 {
            let s: f64 = (1..=n).map(|k| k as f64 * a[k] * r[n - k]).sum();
            r[n] = s / n as f64;
        }
        Jet(r)
    }
}

fn psi_jet(u: Jet) -> Jet {
    if u.0[0] <= 0.0 {
        Jet::cst(0.0)
    } else {
        Jet::cst(0.0).sub(u.recip()).exp()
    }
}

/// `s^{(m)}(u)` for `m ≤ 4`, `0 < u < 1`.
pub fn smooth_step_derivative(u: f64, m: usize) -> f64 {
    let x = Jet::var(u);
    let a = psi_jet(x);
    let b = psi_jet(Jet::cst(1.0).sub(x));
    let s = a.mul(a.add(b).recip());
    let fact = [1.0, 1.0, 2.0, 6.0, 24.0][m];
    s.0[m] * fact
}

/// `‖φ^{(m)}‖₁` on the real line, `1 ≤ m ≤ 4`.
pub fn phi_derivative_l1(m: usize) -> f64 {
    // φ^{(m)}(t) = (−2)^m s^{(m)}(2(1−|t|)) on 1/2 < |t| < 1.
    let inner = integrate(
        &|u| smooth_step_derivative(u, m).abs(),
        1e-9,
        1.0 - 1e-9,
        1e-10,
        64,
    );
    2.0 * (2f64).powi(m as i32) * inner / 2.0
}

fn phi4_l1() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| phi_derivative_l1(4))
}

/// Frequency beyond which the tail is bounded analytically.
const TAIL_XI: f64 = 64.0;

/// `Σ_{|h| > cap} ε·|φ̂(εh)|`: numeric up to `|εh| ≤ 64`, then the bound
/// `|φ̂(ξ)| ≤ ‖φ⁽⁴⁾‖₁/(2πξ)⁴`.
pub fn fourier_tail(eps: &Rational, cap: u64) -> f64 {
    let e = arith::to_f64(eps);
    let h1 = (TAIL_XI / e).ceil() as u64;
    let start = cap + 1;
    let numeric: f64 = if start < h1 {
        (start..h1)
            .into_par_iter()
            .map(|h| phi_hat_fast(e * h as f64).abs() + 1e-12)
            .sum()
    } else {
        0.0
    };
    let from = h1.max(start) as f64;
    let analytic = phi4_l1() / (2.0 * PI).powi(4) / e.powi(4) / (3.0 * (from - 1.0).powi(3));
    2.0 * e * (numeric + analytic)
}

// ---------------------------------------------------------------------------
// Frequency box

/// `H_i = max{|h| : |h| < ε_i⁻¹ Δ^{-s}}` for `s = scale/(2k)^M`.
pub fn h_caps(b: &BoxTarget, c: &ConstantsProfile, scale: i64) -> Result<Vec<u64>> {
    let e = Rational::from_integer(scale.into()) / &c.two_k_pow_m;
    b.epsilons()
        .iter()
        .map(|eps| {
            let m = arith::floor_below(&[
                PowTerm::plain(eps.recip()),
                PowTerm::new(b.delta().recip(), e.clone()),
            ])?;
            u64::try_from(m).map_err(|_| Error::InvalidInput("h cap overflows u64".into()))
        })
        .collect()
}

/// `Π (2H_i + 1) − 1`, saturating.
pub fn h_box_size(caps: &[u64]) -> u128 {
    caps.iter()
        .fold(1u128, |acc, &h| acc.saturating_mul(2 * h as u128 + 1))
        .saturating_sub(1)
}

/// All nonzero `h` in the box whose first nonzero coordinate is positive, in
/// lexicographic order. The full box is these together with their negatives.
pub fn half_box(caps: &[u64]) -> Vec<FrequencyVector> {
    let mut out = Vec::new();
    let k = caps.len();
    let mut cur = vec![0i64; k];
    fn rec(i: usize, caps: &[u64], cur: &mut Vec<i64>, out: &mut Vec<FrequencyVector>, lead: bool) {
        if i == caps.len() {
            if lead {
                out.push(FrequencyVector(cur.clone()));
            }
            return;
        }
        let c = caps[i] as i64;
        let lo = if lead { -c } else { 0 };
        for v in lo..=c {
            cur[i] = v;
            rec(i + 1, caps, cur, out, lead || v > 0);
        }
        cur[i] = 0;
    }
    rec(0, caps, &mut cur, &mut out, false);
    out
}

// ---------------------------------------------------------------------------
// Smoothed count

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothedCount {
    /// `Σ_{n≤x} Π_i Φ_i(f_i(n))`.
    pub direct: f64,
    /// `Δ Σ_h Π_i φ̂(ε_i h_i) S(h)` over the truncated box (real part).
    pub fourier: f64,
    /// Bound on `|direct − fourier|` from truncation.
    pub tail: f64,
    /// Accumulated numeric error of the Fourier side.
    pub numeric_error: f64,
    pub h_caps: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct SmoothedCountConfig {
    /// Replace the frequency caps (e.g. to push the tail down).
    pub h_caps: Option<Vec<u64>>,
    /// Largest acceptable tail; `None` accepts any tail.
    pub tail_tolerance: Option<f64>,
    pub h_cap_limit: u128,
}

impl Default for SmoothedCountConfig {
    fn default() -> Self {
        SmoothedCountConfig {
            h_caps: None,
            tail_tolerance: None,
            h_cap_limit: DEFAULT_H_CAP,
        }
    }
}

/// Both sides of the truncated Fourier identity for the smoothed box count.
pub fn smoothed_count(
    p: &PolySystem,
    x: u64,
    b: &BoxTarget,
    c: &ConstantsProfile,
    cfg: &SmoothedCountConfig,
) -> Result<SmoothedCount> {
    if b.k() != p.k() {
        return Err(Error::InvalidInput("box and system differ in k".into()));
    }
    let half = Rational::new(1.into(), 2.into());
    if b.epsilons().iter().any(|e| *e > half) {
        return Err(Error::Precondition("tolerances must be at most 1/2".into()));
    }
    let caps = match &cfg.h_caps {
        Some(v) if v.len() == p.k() => v.clone(),
        Some(_) => return Err(Error::InvalidInput("h cap length differs from k".into())),
        None => h_caps(b, c, 1)?,
    };
    let taus: Vec<f64> = b
        .epsilons()
        .iter()
        .zip(&caps)
        .map(|(e, &h)| fourier_tail(e, h))
        .collect();
    let mut tail = 0.0;
    for i in 0..taus.len() {
        let mut t = taus[i];
        for (j, tj) in taus.iter().enumerate() {
            if j != i {
                t *= 1.0 + tj;
            }
        }
        tail += t;
    }
    tail *= x as f64;
    if let Some(tol) = cfg.tail_tolerance {
        if tail > tol {
            return Err(Error::TailTooLarge {
                tail,
                tolerance: tol,
            });
        }
    }
    let size = h_box_size(&caps);
    if size > cfg.h_cap_limit {
        return Err(Error::EnumerationTooLarge {
            what: "frequency box".into(),
            size,
            cap: cfg.h_cap_limit,
        });
    }

    let polys: Vec<CompiledPoly> = p.coeffs().iter().map(|r| CompiledPoly::new(r)).collect();
    let eps_f: Vec<f64> = b.epsilons().iter().map(arith::to_f64).collect();
    let direct: f64 = chunk_bounds(x)
        .into_par_iter()
        .map(|(a, z)| {
            let mut acc = Neumaier::default();
            for n in a..z {
                let mut w = 1.0;
                for (poly, e) in polys.iter().zip(&eps_f) {
                    let d = poly.dist(n).dist.to_f64() / poly.denominator().to_f64();
                    w *= phi(d / e);
                    if w == 0.0 {
                        break;
                    }
                }
                acc.add(w);
            }
            acc.value()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();

    let mut cache = PhiHatCache::default();
    let weights: Vec<Vec<f64>> = b
        .epsilons()
        .iter()
        .zip(&caps)
        .map(|(e, &h)| (0..=h as i64).map(|v| cache.get(e, v)).collect())
        .collect();
    let delta = arith::to_f64(b.delta());
    let hs = half_box(&caps);
    let terms: Result<Vec<(f64, f64)>> = hs
        .par_iter()
        .map(|h| {
            let w: f64 = h
                .0
                .iter()
                .enumerate()
                .map(|(i, v)| weights[i][v.unsigned_abs() as usize])
                .product();
            let s = weyl_sum_phase(&PhasePoly::new(p, h)?, x, false)?;
            // h and −h contribute 2·Re S(h).
            Ok((2.0 * w * s.re, 2.0 * w.abs() * s.err))
        })
        .collect();
    let terms = terms?;
    let zero_weight: f64 = weights.iter().map(|w| w[0]).product();
    let mut sum = Neumaier::default();
    sum.add(zero_weight * x as f64);
    let mut numeric_error = 0.0;
    for (v, e) in terms {
        sum.add(v);
        numeric_error += e;
    }
    Ok(SmoothedCount {
        direct,
        fourier: delta * sum.value(),
        tail,
        numeric_error: delta * numeric_error + 1e-12 * delta * hs.len() as f64 * x as f64,
        h_caps: caps,
    })
}

// ---------------------------------------------------------------------------
// Dichotomy probe

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMember {
    pub h: FrequencyVector,
    pub magnitude: f64,
    pub error: f64,
}

/// The frequencies whose sums land in `[x/Q, 2x/Q]`, `Q = 2^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicBucket {
    pub j: u32,
    pub members: Vec<BucketMember>,
    /// `Q^{1/(1+ε)}`.
    pub target: f64,
    /// `#members ≥ Q^{1/(1+ε)}`, decided exactly.
    pub large: bool,
}

impl DyadicBucket {
    pub fn q(&self) -> Rational {
        arith::pow2(self.j as i64)
    }

    pub fn q_f64(&self) -> f64 {
        (self.j as f64).exp2()
    }

    /// JSONL lines `{Q, h, magnitude, error}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.members {
            let line = serde_json::json!({
                "Q": arith::serde_rational::to_string(&self.q()),
                "h": m.h.0,
                "magnitude": m.magnitude,
                "error": m.error,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DichotomyOutcome {
    BoxHit(u64),
    LargeBucket(DyadicBucket),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub outcome: DichotomyOutcome,
    /// The bucket branch evaluated alongside a box hit, when the frequency
    /// box was small enough (the two branches are not exclusive).
    pub also_bucket: Option<DyadicBucket>,
    pub h_caps: Vec<u64>,
    pub h_box_size: u128,
    /// Frequencies whose sum vanished to within its error (no dyadic level).
    pub vanishing: u64,
    /// `(j, #members)` for every non-empty level.
    pub histogram: Vec<(u32, u64)>,
}

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub h_cap_limit: u128,
    /// Largest frequency box enumerated alongside a box hit.
    pub companion_limit: u128,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            h_cap_limit: DEFAULT_H_CAP,
            companion_limit: 4096,
        }
    }
}

/// Dyadic level `j ≥ 1` with `x/2^j ≤ s ≤ 2x/2^j`; boundaries go to the
/// smaller `j`.
pub fn dyadic_level(x: u64, s: f64) -> Option<u32> {
    if s <= 0.0 || !s.is_finite() {
        return None;
    }
    let xf = x as f64;
    let mut j = (xf / s).log2().ceil().max(1.0) as i64;
    // Guard the float log against off-by-one at exact powers of two.
    while j > 1 && xf / ((j - 1) as f64).exp2() <= s {
        j -= 1;
    }
    while xf / (j as f64).exp2() > s {
        j += 1;
    }
    u32::try_from(j).ok()
}

fn bucket_is_large(count: usize, j: u32, eps: &Rational) -> Result<(bool, f64)> {
    let target = ((j as f64) / (1.0 + arith::to_f64(eps))).exp2();
    if count == 0 {
        return Ok((false, target));
    }
    // #^{1+ε} ≥ 2^j
    let ord = arith::cmp_pow_products(
        &[PowTerm::new(
            Rational::from_integer((count as u64).into()),
            Rational::one() + eps,
        )],
        &[PowTerm::new(arith::int(2), Rational::from_integer(j.into()))],
    )?;
    Ok((ord != std::cmp::Ordering::Less, target))
}

/// Enumerate the frequency box, bucket `|S(h)|` dyadically and return the
/// fullest level with the histogram.
pub fn bucket_frequencies(
    p: &PolySystem,
    x: u64,
    caps: &[u64],
    eps: &Rational,
) -> Result<(Option<DyadicBucket>, u64, Vec<(u32, u64)>)> {
    let hs = half_box(caps);
    let sums: Result<Vec<WeylSum>> = hs
        .par_iter()
        .map(|h| weyl_sum_phase(&PhasePoly::new(p, h)?, x, false))
        .collect();
    let sums = sums?;
    let mut levels: HashMap<u32, Vec<BucketMember>> = HashMap::new();
    let mut vanishing = 0;
    for (h, s) in hs.iter().zip(&sums) {
        let mag = s.abs();
        match dyadic_level(x, mag) {
            Some(j) if mag > s.err => {
                let bucket = levels.entry(j).or_default();
                bucket.push(BucketMember {
                    h: h.clone(),
                    magnitude: mag,
                    error: s.err,
                });
                bucket.push(BucketMember {
                    h: h.neg(),
                    magnitude: mag,
                    error: s.err,
                });
            }
            _ => vanishing += 2,
        }
    }
    let mut histogram: Vec<(u32, u64)> = levels.iter().map(|(j, m)| (*j, m.len() as u64)).collect();
    histogram.sort();
    let best = histogram
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|&(j, _)| j);
    let bucket = match best {
        None => None,
        Some(j) => {
            let mut members = levels.remove(&j).unwrap();
            members.sort_by(|a, b| a.h.cmp(&b.h));
            let (large, target) = bucket_is_large(members.len(), j, eps)?;
            Some(DyadicBucket {
                j,
                members,
                target,
                large,
            })
        }
    };
    Ok((bucket, vanishing, histogram))
}

/// Either a point of the box below `x`, or a dyadic level `Q` carrying many
/// frequencies with `x/Q ≤ |S(h)| ≤ 2x/Q`.
pub fn dichotomy_probe(
    p: &PolySystem,
    x: u64,
    b: &BoxTarget,
    c: &ConstantsProfile,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    if c.k != p.k() {
        return Err(Error::Precondition(format!(
            "constants built for k = {}, system has k = {}",
            c.k,
            p.k()
        )));
    }
    let hit = oracle::box_search(p, x, b)?;
    let caps = h_caps(b, c, 1)?;
    let size = h_box_size(&caps);
    let limit = if hit.is_some() {
        cfg.companion_limit.min(cfg.h_cap_limit)
    } else {
        cfg.h_cap_limit
    };
    if size > limit {
        if let Some(n) = hit {
            return Ok(ProbeResult {
                outcome: DichotomyOutcome::BoxHit(n),
                also_bucket: None,
                h_caps: caps,
                h_box_size: size,
                vanishing: 0,
                histogram: Vec::new(),
            });
        }
        return Err(Error::EnumerationTooLarge {
            what: "frequency box".into(),
            size,
            cap: limit,
        });
    }
    let (bucket, vanishing, histogram) = bucket_frequencies(p, x, &caps, &c.eps)?;
    let (outcome, also_bucket) = match (hit, bucket) {
        (Some(n), bk) => (DichotomyOutcome::BoxHit(n), bk),
        (None, Some(bk)) => (DichotomyOutcome::LargeBucket(bk), None),
        (None, None) => {
            return Err(Error::Precondition(
                "no box hit and every frequency sum vanished".into(),
            ))
        }
    };
    Ok(ProbeResult {
        outcome,
        also_bucket,
        h_caps: caps,
        h_box_size: size,
        vanishing,
        histogram,
    })
}

/// Re-verify a bucket: every member's magnitude is recomputed and must lie in
/// `[x/Q, 2x/Q]` up to its numeric error.
pub fn verify_bucket(p: &PolySystem, x: u64, bucket: &DyadicBucket) -> Result<bool> {
    let q = bucket.q_f64();
    let lo = x as f64 / q;
    let hi = 2.0 * lo;
    for m in &bucket.members {
        if m.h.is_zero() {
            return Ok(false);
        }
        let s = weyl_sum(p, &m.h, x)?;
        let mag = s.abs();
        if mag + s.err < lo || mag - s.err > hi {
            return Ok(false);
        }
        if (mag - m.magnitude).abs() > s.err + m.error {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `|h_i|` within the probe caps for every member.
pub fn members_in_box(bucket: &DyadicBucket, caps: &[u64]) -> bool {
    bucket.members.iter().all(|m| {
        m.h.0
            .iter()
            .zip(caps)
            .all(|(h, c)| h.unsigned_abs() <= *c)
    })
}
