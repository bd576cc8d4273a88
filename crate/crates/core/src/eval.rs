//! Compiled polynomial evaluation for scans over many `n`.
//!
//! Each polynomial is brought to a common denominator `D`, and `f(n) mod 1`
//! is tracked as an integer residue mod `D`. Power-of-two denominators up to
//! `2^128` use wrapping `u128` arithmetic, small denominators use `u128`
//! products, everything else falls back to big integers. All three paths are
//! exact; the coefficient error bounds are carried separately as integers in
//! units of `1/D`.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::arith::{self, Rational};
use crate::error::{Error, Result};
use crate::model::PolySystem;

/// An unsigned integer that is usually small.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UInt {
    S(u128),
    B(BigUint),
}

impl UInt {
    pub fn to_biguint(&self) -> BigUint {
        match self {
            UInt::S(v) => BigUint::from(*v),
            UInt::B(v) => v.clone(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            UInt::S(v) => *v as f64,
            UInt::B(v) => v.to_f64().unwrap_or(f64::INFINITY),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            UInt::S(v) => *v == 0,
            UInt::B(v) => v.is_zero(),
        }
    }
}

impl PartialOrd for UInt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for UInt {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (UInt::S(a), UInt::S(b)) => a.cmp(b),
            _ => self.to_biguint().cmp(&other.to_biguint()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Denominator {
    Pow2(u32),
    Small(u64),
    Big(BigUint),
}

impl Denominator {
    pub fn to_biguint(&self) -> BigUint {
        match self {
            Denominator::Pow2(p) => BigUint::one() << *p as usize,
            Denominator::Small(d) => BigUint::from(*d),
            Denominator::Big(d) => d.clone(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Denominator::Pow2(p) => (*p as f64).exp2(),
            Denominator::Small(d) => *d as f64,
            Denominator::Big(d) => d.to_f64().unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    /// Residues mod `2^bits`, `bits ≤ 128`.
    Pow2 { bits: u32, coeffs: Vec<u128> },
    /// Residues mod `den < 2^63`.
    Small { den: u64, coeffs: Vec<u64> },
    Big { den: BigInt, coeffs: Vec<BigInt> },
}

/// One polynomial compiled for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    repr: Repr,
    den: Denominator,
    /// `ceil(err_j · D)`, saturating; index 0 is degree 1.
    err_units: Vec<u128>,
    exact: bool,
}

/// `‖f(n)‖ = dist / D` with `|true − dist/D| ≤ err / D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dist {
    pub dist: UInt,
    pub err: u128,
}

impl CompiledPoly {
    pub fn new(coeffs: &[crate::model::RealCoefficient]) -> Self {
        let reduced: Vec<Rational> = coeffs.iter().map(|c| arith::frac(&c.value)).collect();
        let mut den = BigInt::one();
        for r in &reduced {
            den = den.lcm(r.denom());
        }
        let nums: Vec<BigInt> = reduced
            .iter()
            .map(|r| r.numer() * (&den / r.denom()))
            .collect();
        let err_units: Vec<u128> = coeffs
            .iter()
            .map(|c| {
                if c.err.is_zero() {
                    0
                } else {
                    let scaled = (&c.err * Rational::from_integer(den.clone())).ceil();
                    scaled.to_integer().to_u128().unwrap_or(u128::MAX)
                }
            })
            .collect();
        let exact = coeffs.iter().all(|c| c.err.is_zero());
        let den_u = den.to_biguint().expect("positive denominator");
        let pow2_bits = if den_u.count_ones() == 1 {
            Some(den_u.trailing_zeros().unwrap_or(0) as u32)
        } else {
            None
        };
        let (repr, dk) = match pow2_bits {
            Some(bits) if bits <= 128 => (
                Repr::Pow2 {
                    bits,
                    coeffs: nums.iter().map(|n| n.to_u128().unwrap()).collect(),
                },
                Denominator::Pow2(bits),
            ),
            _ => match den.to_u64() {
                Some(d) if d < (1u64 << 63) => (
                    Repr::Small {
                        den: d,
                        coeffs: nums.iter().map(|n| n.to_u64().unwrap()).collect(),
                    },
                    Denominator::Small(d),
                ),
                _ => (
                    Repr::Big {
                        den: den.clone(),
                        coeffs: nums,
                    },
                    Denominator::Big(den_u),
                ),
            },
        };
        CompiledPoly {
            repr,
            den: dk,
            err_units,
            exact,
        }
    }

    pub fn denominator(&self) -> &Denominator {
        &self.den
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Residue of `D·f(n)` mod `D`.
    pub fn residue(&self, n: u64) -> UInt {
        match &self.repr {
            Repr::Pow2 { bits, coeffs } => {
                let mask = if *bits == 128 {
                    u128::MAX
                } else {
                    (1u128 << bits) - 1
                };
                let nn = n as u128;
                let mut acc: u128 = 0;
                for c in coeffs.iter().rev() {
                    acc = acc.wrapping_add(*c).wrapping_mul(nn) & mask;
                }
                UInt::S(acc)
            }
            Repr::Small { den, coeffs } => {
                let d = *den as u128;
                let nn = (n as u128) % d;
                let mut acc: u128 = 0;
                for c in coeffs.iter().rev() {
                    acc = ((acc + *c as u128) % d) * nn % d;
                }
                UInt::S(acc)
            }
            Repr::Big { den, coeffs } => {
                let nn = BigInt::from(n);
                let mut acc = BigInt::zero();
                for c in coeffs.iter().rev() {
                    acc = ((acc + c) * &nn).mod_floor(den);
                }
                UInt::B(acc.to_biguint().unwrap())
            }
        }
    }

    /// `min(t, D − t)` for the residue `t`.
    pub fn dist(&self, n: u64) -> Dist {
        let t = self.residue(n);
        let dist = match (&self.repr, t) {
            (Repr::Pow2 { bits, .. }, UInt::S(t)) => {
                let other = if *bits == 128 {
                    t.wrapping_neg()
                } else {
                    ((1u128 << bits) - t) & ((1u128 << bits) - 1)
                };
                UInt::S(t.min(other))
            }
            (Repr::Small { den, .. }, UInt::S(t)) => UInt::S(t.min(*den as u128 - t)),
            (Repr::Big { den, .. }, UInt::B(t)) => {
                let d = den.to_biguint().unwrap();
                let other = &d - &t;
                UInt::B(if t <= other { t } else { other })
            }
            _ => unreachable!("residue kind matches representation"),
        };
        Dist {
            dist,
            err: self.err_at(n),
        }
    }

    /// `ceil(Σ_j err_j n^j · D)` (saturating).
    pub fn err_at(&self, n: u64) -> u128 {
        if self.exact {
            return 0;
        }
        let mut total: u128 = 0;
        let mut pow: u128 = 1;
        for e in &self.err_units {
            pow = pow.saturating_mul(n as u128);
            total = total.saturating_add(e.saturating_mul(pow));
        }
        total
    }

    /// Integer threshold `floor(ε·D)` such that `dist ≤ ε·D ⟺ dist ≤ threshold`.
    pub fn threshold(&self, eps: &Rational) -> UInt {
        let d = self.den.to_biguint();
        let t = (eps * Rational::from_integer(BigInt::from(d))).floor().to_integer();
        let t = t.to_biguint().unwrap_or_default();
        match t.to_u128() {
            Some(v) => UInt::S(v),
            None => UInt::B(t),
        }
    }

    pub fn dist_to_rational(&self, d: &Dist) -> Rational {
        Rational::new(
            BigInt::from(d.dist.to_biguint()),
            BigInt::from(self.den.to_biguint()),
        )
    }

    pub fn err_to_rational(&self, d: &Dist) -> Rational {
        Rational::new(BigInt::from(d.err), BigInt::from(self.den.to_biguint()))
    }
}

impl CompiledPoly {
    /// Call `f(t)` with `t = f(n) mod 1` as an `f64` in `[0, 1)` for every
    /// `n` in `[start, end)`. Residues are advanced by exact forward
    /// differences, so each step costs `deg` modular additions.
    pub fn for_each_phase(&self, start: u64, end: u64, mut f: impl FnMut(f64)) {
        if start >= end {
            return;
        }
        let deg = self.err_units.len();
        match &self.repr {
            Repr::Pow2 { bits, .. } => {
                let mask = if *bits == 128 {
                    u128::MAX
                } else {
                    (1u128 << bits) - 1
                };
                let scale = (-(*bits as f64)).exp2();
                let mut diff = self.initial_diffs_u128(start, deg, |a, b| a.wrapping_sub(b) & mask);
                for _ in start..end {
                    f(diff[0] as f64 * scale);
                    for i in 0..deg {
                        diff[i] = diff[i].wrapping_add(diff[i + 1]) & mask;
                    }
                }
            }
            Repr::Small { den, .. } => {
                let d = *den as u128;
                let df = *den as f64;
                let mut diff = self.initial_diffs_u128(start, deg, |a, b| (a + d - b) % d);
                for _ in start..end {
                    f(diff[0] as f64 / df);
                    for i in 0..deg {
                        let s = diff[i] + diff[i + 1];
                        diff[i] = if s >= d { s - d } else { s };
                    }
                }
            }
            Repr::Big { den, .. } => {
                let df = den.to_f64().unwrap_or(f64::INFINITY);
                let mut diff: Vec<BigInt> = (0..=deg as u64)
                    .map(|m| BigInt::from(self.residue(start + m).to_biguint()))
                    .collect();
                for level in 1..=deg {
                    for m in (level..=deg).rev() {
                        diff[m] = (&diff[m] - &diff[m - 1]).mod_floor(den);
                    }
                }
                for _ in start..end {
                    f(arith::to_f64(&Rational::new(diff[0].clone(), den.clone())).min(df));
                    for i in 0..deg {
                        let s = &diff[i] + &diff[i + 1];
                        diff[i] = if s >= *den { s - den } else { s };
                    }
                }
            }
        }
    }

    fn initial_diffs_u128(&self, start: u64, deg: usize, sub: impl Fn(u128, u128) -> u128) -> Vec<u128> {
        let mut diff: Vec<u128> = (0..=deg as u64)
            .map(|m| match self.residue(start + m) {
                UInt::S(v) => v,
                UInt::B(_) => unreachable!("small representation"),
            })
            .collect();
        for level in 1..=deg {
            for m in (level..=deg).rev() {
                diff[m] = sub(diff[m], diff[m - 1]);
            }
        }
        diff
    }
}

/// Decide `dist ± err ≤ threshold`, conservatively.
pub fn within(d: &Dist, threshold: &UInt) -> Result<bool> {
    if d.err == 0 {
        return Ok(d.dist <= *threshold);
    }
    let lo = match &d.dist {
        UInt::S(v) => UInt::S(v.saturating_sub(d.err)),
        UInt::B(v) => {
            let e = BigUint::from(d.err);
            UInt::B(if *v > e { v - e } else { BigUint::zero() })
        }
    };
    let hi = match &d.dist {
        UInt::S(v) => match v.checked_add(d.err) {
            Some(s) => UInt::S(s),
            None => UInt::B(BigUint::from(*v) + d.err),
        },
        UInt::B(v) => UInt::B(v + d.err),
    };
    if hi <= *threshold {
        Ok(true)
    } else if lo > *threshold {
        Ok(false)
    } else {
        Err(Error::PrecisionInsufficient(
            "fractional part within error of the box boundary".into(),
        ))
    }
}

/// A whole system compiled for scanning.
#[derive(Debug, Clone)]
pub struct CompiledSystem {
    polys: Vec<CompiledPoly>,
}

/// The value `‖f_i(n)‖` of the worst coordinate at some `n`, kept exactly.
#[derive(Debug, Clone)]
pub struct MaxNorm {
    pub poly: usize,
    pub dist: Dist,
}

impl CompiledSystem {
    pub fn new(p: &PolySystem) -> Self {
        CompiledSystem {
            polys: p.coeffs().iter().map(|row| CompiledPoly::new(row)).collect(),
        }
    }

    pub fn polys(&self) -> &[CompiledPoly] {
        &self.polys
    }

    pub fn k(&self) -> usize {
        self.polys.len()
    }

    pub fn thresholds(&self, eps: &[Rational]) -> Vec<UInt> {
        self.polys
            .iter()
            .zip(eps)
            .map(|(p, e)| p.threshold(e))
            .collect()
    }

    /// Box test `‖f_i(n)‖ ≤ ε_i ∀i` using precomputed thresholds.
    pub fn in_box(&self, n: u64, thresholds: &[UInt]) -> Result<bool> {
        for (p, t) in self.polys.iter().zip(thresholds) {
            if !within(&p.dist(n), t)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `max_i ‖f_i(n)‖`, exactly (ties resolved to the lowest index).
    pub fn max_norm(&self, n: u64) -> MaxNorm {
        let mut best = MaxNorm {
            poly: 0,
            dist: self.polys[0].dist(n),
        };
        for (i, p) in self.polys.iter().enumerate().skip(1) {
            let d = p.dist(n);
            if self.cmp_values(i, &d, best.poly, &best.dist) == Ordering::Greater {
                best = MaxNorm { poly: i, dist: d };
            }
        }
        best
    }

    /// Compare `a/D_i` with `b/D_j` exactly (centre values).
    pub fn cmp_values(&self, i: usize, a: &Dist, j: usize, b: &Dist) -> Ordering {
        let di = &self.polys[i].den;
        let dj = &self.polys[j].den;
        if di == dj {
            return a.dist.cmp(&b.dist);
        }
        let fa = a.dist.to_f64() / di.to_f64();
        let fb = b.dist.to_f64() / dj.to_f64();
        let scale = fa.abs().max(fb.abs());
        if (fa - fb).abs() > 1e-12 * scale && scale.is_finite() {
            return fa.partial_cmp(&fb).unwrap();
        }
        let lhs = a.dist.to_biguint() * dj.to_biguint();
        let rhs = b.dist.to_biguint() * di.to_biguint();
        lhs.cmp(&rhs)
    }

    pub fn value_of(&self, m: &MaxNorm) -> (Rational, Rational) {
        let p = &self.polys[m.poly];
        (p.dist_to_rational(&m.dist), p.err_to_rational(&m.dist))
    }

    pub fn value_f64(&self, m: &MaxNorm) -> f64 {
        m.dist.dist.to_f64() / self.polys[m.poly].den.to_f64()
    }

    pub fn err_f64(&self, m: &MaxNorm) -> f64 {
        m.dist.err as f64 / self.polys[m.poly].den.to_f64()
    }
}
