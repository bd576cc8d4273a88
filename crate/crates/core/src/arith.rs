//! Exact rational helpers shared by every module.
//!
//! Quantities such as `x^ε·Q^{1/d}` or `B^{5δ²}` have rational exponents; they
//! are compared exactly by raising both sides to a common integer power
//! (see [`cmp_pow_products`]).

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Largest bit size we are willing to materialise in an exact power comparison
/// before falling back to certified floating-point logarithms.
const EXACT_POW_BIT_LIMIT: f64 = 4.0e6;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn from_u128(n: u128) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn pow2(e: i64) -> Rational {
    if e >= 0 {
        Rational::from_integer(BigInt::one() << e as usize)
    } else {
        Rational::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}

/// `t - floor(t)`, in `[0, 1)`.
pub fn frac(t: &Rational) -> Rational {
    t - t.floor()
}

/// Distance from `t` to the nearest integer, exactly.
pub fn dist_to_int(t: &Rational) -> Rational {
    let f = frac(t);
    let g = Rational::one() - &f;
    if f <= g {
        f
    } else {
        g
    }
}

/// Nearest integer, ties rounded down.
pub fn round_half_down(t: &Rational) -> BigInt {
    let half = rat(1, 2);
    let f = frac(t);
    if f <= half {
        t.floor().to_integer()
    } else {
        t.ceil().to_integer()
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // Fall back to a log-scaled conversion for very large or small values.
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    sign * log2_abs(r).exp2()
}

fn big_log2(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 64;
    let top: BigUint = n >> shift;
    top.to_f64().unwrap().log2() + shift as f64
}

/// log2 |r|, for nonzero r.
pub fn log2_abs(r: &Rational) -> f64 {
    big_log2(r.numer().magnitude()) - big_log2(r.denom().magnitude())
}

pub fn ln_abs(r: &Rational) -> f64 {
    log2_abs(r) * std::f64::consts::LN_2
}

/// Rational approximation of a finite f64 (exact dyadic value).
pub fn from_f64(v: f64) -> Rational {
    Rational::from_float(v).expect("finite float")
}

pub fn pow_int(base: &Rational, e: i64) -> Rational {
    if e >= 0 {
        num_traits::pow(base.clone(), e as usize)
    } else {
        num_traits::pow(base.recip(), (-e) as usize)
    }
}

/// One factor `base^exp` of a power product; `base` must be positive.
#[derive(Debug, Clone)]
pub struct PowTerm {
    pub base: Rational,
    pub exp: Rational,
}

impl PowTerm {
    pub fn new(base: Rational, exp: Rational) -> Self {
        PowTerm { base, exp }
    }

    pub fn plain(base: Rational) -> Self {
        PowTerm {
            base,
            exp: Rational::one(),
        }
    }

    fn log2(&self) -> f64 {
        log2_abs(&self.base) * to_f64(&self.exp)
    }
}

/// Compare `Π lhs_i^{e_i}` with `Π rhs_j^{f_j}` exactly.
///
/// A log2 gap well clear of rounding decides directly. Otherwise both sides
/// are raised to the least common denominator `L` of all exponents so the
/// comparison reduces to big rational arithmetic; when those numbers would be
/// absurdly large, [`Error::PrecisionInsufficient`] is returned.
pub fn cmp_pow_products(lhs: &[PowTerm], rhs: &[PowTerm]) -> Result<Ordering> {
    for t in lhs.iter().chain(rhs) {
        if !t.base.is_positive() {
            return Err(Error::InvalidInput(format!(
                "power base must be positive, got {}",
                t.base
            )));
        }
    }
    // Clear gaps are settled in log space; the margin dominates f64 rounding.
    let a: f64 = lhs.iter().map(PowTerm::log2).sum();
    let b: f64 = rhs.iter().map(PowTerm::log2).sum();
    let scale = lhs
        .iter()
        .chain(rhs)
        .map(|t| t.log2().abs())
        .fold(1.0, f64::max);
    let n_terms = (lhs.len() + rhs.len()) as f64;
    if a.is_finite() && b.is_finite() && (a - b).abs() > 1e-9 * scale * n_terms {
        return Ok(a.partial_cmp(&b).unwrap());
    }
    let mut l = BigInt::one();
    for t in lhs.iter().chain(rhs) {
        l = l.lcm(t.exp.denom());
    }
    let mut bits = 0.0f64;
    for t in lhs.iter().chain(rhs) {
        let scaled = (&t.exp * Rational::from_integer(l.clone())).to_integer();
        let size = (t.base.numer().bits() + t.base.denom().bits()) as f64;
        bits += to_f64(&Rational::from_integer(scaled.abs())) * size;
    }
    if bits <= EXACT_POW_BIT_LIMIT {
        let side = |terms: &[PowTerm]| -> Rational {
            let mut acc = Rational::one();
            for t in terms {
                let e = (&t.exp * Rational::from_integer(l.clone())).to_integer();
                let e = e.to_i64().expect("exponent fits i64 under the bit limit");
                acc *= pow_int(&t.base, e);
            }
            acc
        };
        return Ok(side(lhs).cmp(&side(rhs)));
    }
    if (a - b).abs() <= 1e-9 * scale * n_terms {
        return Err(Error::PrecisionInsufficient(format!(
            "power comparison undecidable in log space ({a} vs {b})"
        )));
    }
    Ok(a.partial_cmp(&b).unwrap())
}

/// `Π terms` as an f64 (via logs).
pub fn pow_product_f64(terms: &[PowTerm]) -> f64 {
    terms.iter().map(PowTerm::log2).sum::<f64>().exp2()
}

/// Largest integer `m ≥ 0` with `m < Π terms` (strict), decided exactly.
pub fn floor_below(terms: &[PowTerm]) -> Result<u128> {
    let approx = pow_product_f64(terms);
    if !approx.is_finite() || approx > 1.0e30 {
        return Err(Error::InvalidInput(format!(
            "bound {approx:e} too large to enumerate"
        )));
    }
    let mut m = approx.ceil().max(1.0) as u128;
    // Walk to the exact boundary: want m < bound, m+1 >= bound.
    loop {
        let ord = cmp_pow_products(&[PowTerm::plain(from_u128(m))], terms)?;
        if ord == Ordering::Less {
            break;
        }
        if m == 0 {
            return Ok(0);
        }
        m -= 1;
    }
    loop {
        let next = m + 1;
        if cmp_pow_products(&[PowTerm::plain(from_u128(next))], terms)? == Ordering::Less {
            m = next;
        } else {
            return Ok(m);
        }
    }
}

/// Largest integer `m` with `m ≤ Π terms`.
pub fn floor_at_most(terms: &[PowTerm]) -> Result<u128> {
    let approx = pow_product_f64(terms);
    if !approx.is_finite() || approx > 1.0e30 {
        return Err(Error::InvalidInput(format!(
            "bound {approx:e} too large to enumerate"
        )));
    }
    let mut m = approx.floor().max(0.0) as u128 + 1;
    loop {
        if m == 0 {
            return Ok(0);
        }
        let ord = cmp_pow_products(&[PowTerm::plain(from_u128(m))], terms)?;
        if ord != Ordering::Greater {
            break;
        }
        m -= 1;
    }
    loop {
        let next = m + 1;
        if cmp_pow_products(&[PowTerm::plain(from_u128(next))], terms)? != Ordering::Greater {
            m = next;
        } else {
            return Ok(m);
        }
    }
}

/// floor(sqrt(n)) for big unsigned integers.
pub fn isqrt(n: &BigUint) -> BigUint {
    n.sqrt()
}

pub fn big_to_u128(n: &BigInt) -> Option<u128> {
    if n.sign() == Sign::Minus {
        return None;
    }
    n.to_u128()
}

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

pub fn lcm_u64(a: u64, b: u64) -> u64 {
    a.lcm(&b)
}

/// Serde adapters that write rationals as `"num/den"` strings, never floats.
pub mod serde_rational {
    use super::*;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn to_string(r: &Rational) -> String {
        if r.denom().is_one() {
            r.numer().to_string()
        } else {
            format!("{}/{}", r.numer(), r.denom())
        }
    }

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&to_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_rational(&s).map_err(de::Error::custom)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(
            v: &[Rational],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for r in v {
                seq.serialize_element(&to_string(r))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<Rational>, D::Error> {
            let v = Vec::<String>::deserialize(d)?;
            v.iter()
                .map(|s| super::super::parse_rational(s).map_err(de::Error::custom))
                .collect()
        }
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(
            m: &[Vec<Rational>],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            let rows: Vec<Vec<String>> = m.iter().map(|r| r.iter().map(to_string).collect()).collect();
            serde::Serialize::serialize(&rows, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<Vec<Rational>>, D::Error> {
            let rows = Vec::<Vec<String>>::deserialize(d)?;
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|s| super::super::parse_rational(s).map_err(de::Error::custom))
                        .collect()
                })
                .collect()
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(
            v: &Option<Rational>,
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            match v {
                Some(r) => s.serialize_some(&to_string(r)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Option<Rational>, D::Error> {
            let v = Option::<String>::deserialize(d)?;
            v.map(|s| super::super::parse_rational(&s).map_err(de::Error::custom))
                .transpose()
        }
    }
}

/// Parse `"a/b"`, an integer, or a decimal literal (optionally with exponent).
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty rational".into()));
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad numerator in {s:?}")))?;
        let d: BigInt = d
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad denominator in {s:?}")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(Rational::new(n, d));
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Result<Rational> {
    let bad = || Error::Parse(format!("bad decimal literal {s:?}"));
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (ip, fp) = body.split_once('.').unwrap_or((body, ""));
    if ip.is_empty() && fp.is_empty() {
        return Err(bad());
    }
    if !ip.chars().chain(fp.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{ip}{fp}");
    let digits = if digits.is_empty() { "0".to_string() } else { digits };
    let n: BigInt = digits.parse().map_err(|_| bad())?;
    let scale = exponent - fp.len() as i64;
    let ten = int(10);
    let mut r = Rational::from_integer(n) * pow_int(&ten, scale);
    if neg {
        r = -r;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("-0.125").unwrap(), rat(-1, 8));
        assert_eq!(parse_rational("1e-2").unwrap(), rat(1, 100));
        assert_eq!(parse_rational("2.5E1").unwrap(), int(25));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn dist_to_int_basics() {
        assert_eq!(dist_to_int(&rat(1, 2)), rat(1, 2));
        assert_eq!(dist_to_int(&rat(5, 4)), rat(1, 4));
        assert_eq!(dist_to_int(&rat(-1, 10)), rat(1, 10));
    }

    #[test]
    fn exact_power_comparison() {
        // 32^{5/16} vs 3: 2^{25/16} ≈ 2.95 < 3
        let lhs = [PowTerm::new(int(32), rat(5, 16))];
        let rhs = [PowTerm::plain(int(3))];
        assert_eq!(cmp_pow_products(&lhs, &rhs).unwrap(), Ordering::Less);
        // 8^{1/3} == 2
        let lhs = [PowTerm::new(int(8), rat(1, 3))];
        assert_eq!(
            cmp_pow_products(&lhs, &[PowTerm::plain(int(2))]).unwrap(),
            Ordering::Equal
        );
    }

    #[test]
    fn floor_below_is_strict() {
        // 100^{1/2} = 10 exactly, strict floor is 9
        let t = [PowTerm::new(int(100), rat(1, 2))];
        assert_eq!(floor_below(&t).unwrap(), 9);
        assert_eq!(floor_at_most(&t).unwrap(), 10);
        let t = [PowTerm::new(int(2), rat(1, 2))];
        assert_eq!(floor_below(&t).unwrap(), 1);
    }
}
