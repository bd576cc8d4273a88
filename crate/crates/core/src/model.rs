//! Domain vocabulary: polynomial systems with exact (or interval) coefficients,
//! box targets, the constants profile, and the fractional-part norm.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{self, cmp_pow_products, int, rat, PowTerm, Rational};
use crate::error::{Error, Result};

/// Default precision (bits) used when expanding named irrationals.
pub const DEFAULT_PRECISION_BITS: u32 = 128;

/// A real number known as `value ± err`.
///
/// Exactly rational inputs carry `err = 0`; named irrationals such as
/// `sqrt(2)` are expanded to a dyadic approximation with `err = 2^-bits`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealCoefficient {
    #[serde(with = "arith::serde_rational")]
    pub value: Rational,
    #[serde(with = "arith::serde_rational")]
    pub err: Rational,
}

impl RealCoefficient {
    pub fn exact(value: Rational) -> Self {
        RealCoefficient {
            value,
            err: Rational::zero(),
        }
    }

    pub fn with_error(value: Rational, err: Rational) -> Result<Self> {
        if err.is_negative() {
            return Err(Error::InvalidInput(format!("negative error bound {err}")));
        }
        Ok(RealCoefficient { value, err })
    }

    pub fn zero() -> Self {
        Self::exact(Rational::zero())
    }

    pub fn is_exact(&self) -> bool {
        self.err.is_zero()
    }

    /// Scale by an exact rational.
    pub fn scale(&self, c: &Rational) -> Self {
        RealCoefficient {
            value: &self.value * c,
            err: &self.err * c.abs(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        RealCoefficient {
            value: &self.value + &other.value,
            err: &self.err + &other.err,
        }
    }

    /// Reduce the centre mod 1 into `[0, 1)`; the error is unchanged.
    pub fn reduce_mod1(&self) -> Self {
        RealCoefficient {
            value: arith::frac(&self.value),
            err: self.err.clone(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        arith::to_f64(&self.value)
    }
}

impl fmt::Display for RealCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", arith::serde_rational::to_string(&self.value))?;
        if !self.err.is_zero() {
            write!(f, " ± {:.3e}", arith::to_f64(&self.err))?;
        }
        Ok(())
    }
}

/// `‖t‖` together with an error bound inherited from `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormValue {
    #[serde(with = "arith::serde_rational")]
    pub value: Rational,
    #[serde(with = "arith::serde_rational")]
    pub err: Rational,
}

impl NormValue {
    /// Decide `‖t‖ ≤ bound`, failing when the error interval straddles it.
    pub fn le(&self, bound: &Rational) -> Result<bool> {
        if &self.value + &self.err <= *bound {
            return Ok(true);
        }
        if &self.value - &self.err > *bound {
            return Ok(false);
        }
        Err(Error::PrecisionInsufficient(format!(
            "‖·‖ = {} ± {} straddles {}",
            self.value, self.err, bound
        )))
    }

    /// Decide `‖t‖ < bound`.
    pub fn lt(&self, bound: &Rational) -> Result<bool> {
        if &self.value + &self.err < *bound {
            return Ok(true);
        }
        if &self.value - &self.err >= *bound {
            return Ok(false);
        }
        Err(Error::PrecisionInsufficient(format!(
            "‖·‖ = {} ± {} straddles {}",
            self.value, self.err, bound
        )))
    }
}

/// Distance from `t` to the nearest integer.
///
/// Exact for exact input. For interval input the error interval must not
/// contain a half-integer, where the nearest integer is ambiguous.
pub fn frac_norm(t: &RealCoefficient) -> Result<NormValue> {
    let value = arith::dist_to_int(&t.value);
    if !t.err.is_zero() {
        let to_half = (rat(1, 2) - &value).abs();
        if t.err >= to_half {
            return Err(Error::PrecisionInsufficient(format!(
                "error {} reaches the half-integer ambiguity point (distance {})",
                arith::to_f64(&t.err),
                arith::to_f64(&to_half)
            )));
        }
    }
    Ok(NormValue {
        value,
        err: t.err.clone(),
    })
}

/// `k` real polynomials of degree at most `d` with zero constant terms.
///
/// Row `i` holds `f_{i,1}, …, f_{i,d}`; there is no constant-term slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolySystem {
    k: usize,
    d: usize,
    coeffs: Vec<Vec<RealCoefficient>>,
}

impl PolySystem {
    pub fn new(coeffs: Vec<Vec<RealCoefficient>>) -> Result<Self> {
        let k = coeffs.len();
        if k == 0 {
            return Err(Error::InvalidInput("a system needs k ≥ 1 polynomials".into()));
        }
        let d = coeffs[0].len();
        if d == 0 {
            return Err(Error::InvalidInput("degree bound d must be ≥ 1".into()));
        }
        if coeffs.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidInput("ragged coefficient matrix".into()));
        }
        Ok(PolySystem { k, d, coeffs })
    }

    /// Convenience constructor for exact rational coefficients.
    pub fn from_rationals(rows: Vec<Vec<Rational>>) -> Result<Self> {
        Self::new(
            rows.into_iter()
                .map(|r| r.into_iter().map(RealCoefficient::exact).collect())
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coeffs(&self) -> &[Vec<RealCoefficient>] {
        &self.coeffs
    }

    /// Coefficient `f_{i,j}` with 0-based `i` and 1-based degree `j`.
    pub fn coeff(&self, i: usize, j: usize) -> &RealCoefficient {
        &self.coeffs[i][j - 1]
    }

    pub fn is_exact(&self) -> bool {
        self.coeffs.iter().flatten().all(RealCoefficient::is_exact)
    }

    /// View the system as one of degree at most `d2 ≥ d` (zero top coefficients).
    pub fn with_degree(&self, d2: usize) -> Result<Self> {
        if d2 < self.d {
            return Err(Error::InvalidInput(format!(
                "cannot lower degree bound from {} to {d2}",
                self.d
            )));
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.resize(d2, RealCoefficient::zero());
                r
            })
            .collect();
        Self::new(coeffs)
    }

    /// The degree-`j` coefficient of `Σ_i h_i f_i`.
    pub fn linear_form(&self, h: &[i64], j: usize) -> RealCoefficient {
        let mut acc = RealCoefficient::zero();
        for (i, &hi) in h.iter().enumerate() {
            if hi != 0 {
                acc = acc.add(&self.coeff(i, j).scale(&int(hi)));
            }
        }
        acc
    }

    /// `f_i(n)` as a real with error bound, reduced mod 1 along the way.
    pub fn eval_poly_mod1(&self, i: usize, n: &BigInt) -> RealCoefficient {
        let nr = Rational::from_integer(n.clone());
        let mut acc = Rational::zero();
        for c in self.coeffs[i].iter().rev() {
            acc = arith::frac(&((acc + &c.value) * &nr));
        }
        // Σ_j err_j |n|^j
        let an = nr.abs();
        let mut err = Rational::zero();
        let mut pow = an.clone();
        for c in &self.coeffs[i] {
            if !c.err.is_zero() {
                err += &c.err * &pow;
            }
            pow = &pow * &an;
        }
        RealCoefficient { value: acc, err }
    }
}

/// Vector `(‖f_1(n)‖, …, ‖f_k(n)‖)` evaluated with exact Horner reduction.
pub fn eval_system(p: &PolySystem, n: u64) -> Result<Vec<NormValue>> {
    if n == 0 {
        return Err(Error::Precondition("eval_system requires n ≥ 1".into()));
    }
    let nb = BigInt::from(n);
    (0..p.k()).map(|i| frac_norm(&p.eval_poly_mod1(i, &nb))).collect()
}

/// Tolerances `ε_1, …, ε_k` with `Δ = Π ε_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxTarget {
    #[serde(with = "arith::serde_rational::vec")]
    epsilons: Vec<Rational>,
    #[serde(with = "arith::serde_rational")]
    delta: Rational,
}

impl BoxTarget {
    /// Tolerances in `(0, 1/100]`.
    pub fn new(epsilons: Vec<Rational>) -> Result<Self> {
        Self::with_ceiling(epsilons, rat(1, 100))
    }

    /// Tolerances in `(0, ceiling]`; used where only `ε_i ≤ 1/2` is needed.
    pub fn with_ceiling(epsilons: Vec<Rational>, ceiling: Rational) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(Error::InvalidInput("empty tolerance vector".into()));
        }
        for e in &epsilons {
            if !e.is_positive() || *e > ceiling {
                return Err(Error::InvalidInput(format!(
                    "tolerance {e} outside (0, {ceiling}]"
                )));
            }
        }
        let delta = epsilons.iter().fold(Rational::one(), |acc, e| acc * e);
        Ok(BoxTarget { epsilons, delta })
    }

    pub fn uniform(k: usize, eps: Rational) -> Result<Self> {
        Self::new(vec![eps; k])
    }

    pub fn epsilons(&self) -> &[Rational] {
        &self.epsilons
    }

    pub fn k(&self) -> usize {
        self.epsilons.len()
    }

    pub fn delta(&self) -> &Rational {
        &self.delta
    }
}

/// The constants threaded through the descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsProfile {
    pub k: usize,
    pub d: usize,
    #[serde(with = "arith::serde_rational")]
    pub eps: Rational,
    #[serde(with = "arith::serde_rational")]
    pub m: Rational,
    /// `(2k)^M`, exact when `M` is an integer.
    #[serde(with = "arith::serde_rational")]
    pub two_k_pow_m: Rational,
    #[serde(with = "arith::serde_rational")]
    pub c0: Rational,
    #[serde(with = "arith::serde_rational")]
    pub c1: Rational,
    #[serde(with = "arith::serde_rational")]
    pub c2_prop51: Rational,
    #[serde(with = "arith::serde_rational")]
    pub c2_prop52: Rational,
    #[serde(with = "arith::serde_rational")]
    pub c2_theorem: Rational,
    /// `((1+ε)·c1·d(d−1))^{-1}`; absent for `d = 1`.
    #[serde(with = "arith::serde_rational::option")]
    pub delta_dichotomy: Option<Rational>,
    /// Density-increment constant `c = 9(1+ε)c1 + 1.5`.
    #[serde(with = "arith::serde_rational")]
    pub c_increment: Rational,
    /// Descent constant `c = 9(1+ε)(1+k/(2k)^M+ε) + 1.5`.
    #[serde(with = "arith::serde_rational")]
    pub c_descent: Rational,
    pub r: Option<u32>,
}

impl ConstantsProfile {
    pub fn m_is_integer(&self) -> bool {
        self.m.is_integer()
    }

    /// `d(d−1)` as a rational.
    pub fn dd1(&self) -> Rational {
        int((self.d * (self.d.saturating_sub(1))) as i64)
    }

    pub fn with_r(mut self, r: u32) -> Self {
        self.r = Some(r);
        self
    }
}

/// `base^M` for integer base and rational `M`; exact when `M` is an integer,
/// otherwise a dyadic approximation with 52 significant bits.
pub fn int_pow_rational(base: u64, m: &Rational) -> Rational {
    if m.is_integer() {
        let e: i64 = m.to_integer().try_into().expect("M fits in i64");
        arith::pow_int(&int(base as i64), e)
    } else {
        arith::from_f64((base as f64).powf(arith::to_f64(m)))
    }
}

/// Build the constants for `(k, d, ε, M)`; rejects `M` below
/// `max{4, 1/2 + log(ε⁻¹)/(2 log 2)}`.
pub fn make_constants(k: usize, d: usize, eps: Rational, m: Rational) -> Result<ConstantsProfile> {
    if k == 0 || d == 0 {
        return Err(Error::InvalidInput("k and d must be positive".into()));
    }
    if !eps.is_positive() {
        return Err(Error::InvalidInput(format!("ε must be positive, got {eps}")));
    }
    if m < int(4) {
        return Err(Error::InvalidM(format!("M = {m} is below 4")));
    }
    // M ≥ 1/2 + log2(1/ε)/2  ⟺  2^{2M−1}·ε ≥ 1
    let two_m_minus_one = int(2) * &m - int(1);
    let ord = cmp_pow_products(
        &[PowTerm::new(int(2), two_m_minus_one), PowTerm::plain(eps.clone())],
        &[PowTerm::plain(int(1))],
    )?;
    if ord == Ordering::Less {
        return Err(Error::InvalidM(format!(
            "M = {m} is below 1/2 + log(1/ε)/(2 log 2) for ε = {eps}"
        )));
    }
    let kk = int(k as i64);
    let tkm = int_pow_rational(2 * k as u64, &m);
    let tkm1 = &tkm / int(2 * k as i64); // (2k)^{M-1}
    let one = Rational::one();
    let c0 = &one + &eps;
    let c1 = &one + &kk / &tkm + int(10) * &eps;
    let c2_prop51 = int(2) + tkm1.recip() + int(20) * &eps;
    let c2_prop52 = rat(5, 2) + tkm1.recip() + int(500) * &eps;
    let c2_theorem = rat(21, 2) + int(9) * &kk / &tkm + &eps;
    let dd1 = d * (d - 1);
    let delta_dichotomy = if dd1 == 0 {
        None
    } else {
        Some((&c0 * &c1 * int(dd1 as i64)).recip())
    };
    let c_increment = int(9) * &c0 * &c1 + rat(3, 2);
    let c_descent = int(9) * &c0 * (&one + &kk / &tkm + &eps) + rat(3, 2);
    Ok(ConstantsProfile {
        k,
        d,
        eps,
        m,
        two_k_pow_m: tkm,
        c0,
        c1,
        c2_prop51,
        c2_prop52,
        c2_theorem,
        delta_dichotomy,
        c_increment,
        c_descent,
        r: None,
    })
}

/// Integer weights applied across the `k` polynomials.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyVector(pub Vec<i64>);

impl FrequencyVector {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&h| h == 0)
    }

    pub fn neg(&self) -> Self {
        FrequencyVector(self.0.iter().map(|h| -h).collect())
    }

    pub fn scale(&self, c: i64) -> Self {
        FrequencyVector(self.0.iter().map(|h| h * c).collect())
    }

    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|h| h.abs()).max().unwrap_or(0)
    }
}

/// A reduced fraction `a/q` approximating some target within `err`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalApprox {
    pub a: i64,
    pub q: u64,
    #[serde(with = "arith::serde_rational")]
    pub err: Rational,
}

/// `(a, q, h) ∈ Z^d × Z^d × Z^k` with `gcd(a_j, q_j) = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationTriple {
    pub a: Vec<i64>,
    pub q: Vec<u64>,
    pub h: FrequencyVector,
}

impl RelationTriple {
    pub fn new(a: Vec<i64>, q: Vec<u64>, h: FrequencyVector) -> Result<Self> {
        if a.len() != q.len() {
            return Err(Error::InvalidInput("a and q lengths differ".into()));
        }
        for (aj, qj) in a.iter().zip(&q) {
            if *qj == 0 {
                return Err(Error::InvalidInput("denominator must be positive".into()));
            }
            if aj.unsigned_abs().gcd(qj) != 1 {
                return Err(Error::InvalidInput(format!(
                    "gcd({aj}, {qj}) ≠ 1 in relation triple"
                )));
            }
        }
        Ok(RelationTriple { a, q, h })
    }

    pub fn is_coprime(&self) -> bool {
        self.a
            .iter()
            .zip(&self.q)
            .all(|(a, q)| *q >= 1 && a.unsigned_abs().gcd(q) == 1)
    }

    /// `lcm(q_1, …, q_d)`: the common denominator of the relation.
    pub fn common_q(&self) -> u64 {
        self.q.iter().fold(1u64, |acc, &q| acc.lcm(&q))
    }
}

/// Parse one coefficient token at `bits` of precision.
///
/// Accepted forms: a rational (`"3/7"`, `"-0.125"`, `"1e-3"`), `sqrt(m)`, `pi`,
/// optionally negated and optionally scaled as `c*atom`.
pub fn parse_coefficient(token: &str, bits: u32) -> Result<RealCoefficient> {
    let t = token.trim().replace(' ', "");
    if t.is_empty() {
        return Err(Error::Parse("empty coefficient token".into()));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) if !rest.starts_with(|c: char| c.is_ascii_digit() || c == '.') => (true, rest),
        _ => (false, t.as_str()),
    };
    let (scale, atom) = match body.split_once('*') {
        Some((c, a)) => (arith::parse_rational(c)?, a),
        None => (Rational::one(), body),
    };
    let base = parse_atom(atom, bits)?;
    let mut out = base.scale(&scale);
    if neg {
        out = out.scale(&int(-1));
    }
    Ok(out)
}

fn parse_atom(atom: &str, bits: u32) -> Result<RealCoefficient> {
    if let Some(inner) = atom.strip_prefix("sqrt(").and_then(|s| s.strip_suffix(')')) {
        let m: BigUint = inner
            .parse()
            .map_err(|_| Error::Parse(format!("bad sqrt argument {inner:?}")))?;
        return Ok(sqrt_approx(&m, bits));
    }
    if atom == "pi" {
        return Ok(pi_approx(bits));
    }
    Ok(RealCoefficient::exact(arith::parse_rational(atom)?))
}

/// `floor(√m · 2^bits) / 2^bits` with error `2^-bits` (exact for squares).
pub fn sqrt_approx(m: &BigUint, bits: u32) -> RealCoefficient {
    let root = m.sqrt();
    if &root * &root == *m {
        return RealCoefficient::exact(Rational::from_integer(root.into()));
    }
    let scaled: BigUint = m << (2 * bits as usize);
    let num = scaled.sqrt();
    let den = BigInt::one() << bits as usize;
    RealCoefficient {
        value: Rational::new(num.into(), den.clone()),
        err: Rational::new(BigInt::one(), den),
    }
}

/// π to `bits` bits via Machin's formula, with a conservative `2^{1-bits}` bound.
pub fn pi_approx(bits: u32) -> RealCoefficient {
    let guard = 64usize;
    let prec = bits as usize + guard;
    let one = BigInt::one() << prec;
    // atan(1/x) = Σ (-1)^k / ((2k+1) x^{2k+1}), in fixed point
    let atan_inv = |x: i64| -> BigInt {
        let x = BigInt::from(x);
        let x2 = &x * &x;
        let mut term = &one / &x;
        let mut sum = BigInt::zero();
        let mut k: i64 = 0;
        while !term.is_zero() {
            let t = &term / BigInt::from(2 * k + 1);
            if k % 2 == 0 {
                sum += t;
            } else {
                sum -= t;
            }
            term /= &x2;
            k += 1;
        }
        sum
    };
    let pi_fixed = BigInt::from(16) * atan_inv(5) - BigInt::from(4) * atan_inv(239);
    let num = pi_fixed >> guard;
    let den = BigInt::one() << bits as usize;
    RealCoefficient {
        value: Rational::new(num, den.clone()),
        err: Rational::new(BigInt::from(2), den),
    }
}
