//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use fracparts::arith::Rational;
use fracparts::model::{PolySystem, RelationTriple};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXED_BITS: u32 = 256;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `frac(q)·2^256`, rounded down.
fn to_fixed(q: &Rational) -> BigUint {
    let fl = q.numer().div_floor(q.denom());
    let frac = q - Rational::from_integer(fl);
    let scaled = (frac.numer() << FIXED_BITS as usize).div_floor(frac.denom());
    scaled.to_biguint().unwrap()
}

/// Phase coefficients `Σ_i h_i f_{i,j}` for `j = 1..=d` as exact rationals.
pub fn phase_coefficients(p: &PolySystem, h: &[i64]) -> Vec<Rational> {
    (1..=p.d())
        .map(|j| {
            h.iter()
                .enumerate()
                .map(|(i, &hi)| Rational::from_integer(hi.into()) * &p.coeff(i, j).value)
                .sum()
        })
        .collect()
}

/// `Σ_{n=1}^{x} e(Σ_j γ_j n^j)` with phases reduced mod 1 in 256-bit fixed point.
pub fn weyl_sum_fixed(gammas: &[Rational], x: u64) -> (f64, f64) {
    let mask = (BigUint::one() << FIXED_BITS as usize) - 1u32;
    let g: Vec<BigUint> = gammas.iter().map(to_fixed).collect();
    let (mut re, mut im) = (Kahan::default(), Kahan::default());
    for n in 1..=x {
        let mut acc = BigUint::zero();
        let mut pw = BigUint::from(n);
        for gj in &g {
            acc += gj * &pw;
            pw *= n;
        }
        acc &= &mask;
        let top = (&acc >> (FIXED_BITS as usize - 64)).to_u64().unwrap();
        let t = top as f64 / 18446744073709551616.0;
        let a = 2.0 * std::f64::consts::PI * t;
        re.add(a.cos());
        im.add(a.sin());
    }
    (re.value(), im.value())
}

#[derive(Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

/// Exact `‖Σ_j c_j n^j‖` on the coefficient values, ignoring their error.
pub fn frac_norm_exact(coeffs: &[Rational], n: u64) -> Rational {
    let nb = Rational::from_integer(BigInt::from(n));
    let mut pw = nb.clone();
    let mut acc = Rational::zero();
    for c in coeffs {
        acc += c * &pw;
        pw *= &nb;
    }
    let fl = acc.floor();
    let f = acc - fl;
    let g = Rational::one() - &f;
    if f < g {
        f
    } else {
        g
    }
}

/// Upper bound on the error of `Σ_j c_j n^j` from the coefficient errors.
pub fn eval_error(p: &PolySystem, i: usize, n: u64) -> Rational {
    let nb = Rational::from_integer(BigInt::from(n));
    let mut pw = nb.clone();
    let mut acc = Rational::zero();
    for j in 1..=p.d() {
        acc += &p.coeff(i, j).err * &pw;
        pw *= &nb;
    }
    acc
}

pub fn row_values(p: &PolySystem, i: usize) -> Vec<Rational> {
    (1..=p.d()).map(|j| p.coeff(i, j).value.clone()).collect()
}

/// Random system with 128-bit dyadic coefficients.
pub fn random_system(r: &mut ChaCha8Rng, k: usize, d: usize) -> PolySystem {
    let den: BigInt = BigInt::one() << 128;
    let rows = (0..k)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let hi: u64 = r.gen();
                    let lo: u64 = r.gen();
                    let num = (BigInt::from(hi) << 64) + BigInt::from(lo);
                    Rational::new(num, den.clone())
                })
                .collect()
        })
        .collect();
    PolySystem::from_rationals(rows).unwrap()
}

// ---------------------------------------------------------------------------
// Denominators by brute force

pub fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// `g^{r²} < B^{δ²}` for `δ = num/den`, decided in integers.
pub fn gcd_small(g: u64, b: u64, r: usize, num: u64, den: u64) -> bool {
    let lhs = BigUint::from(g).pow((r * r) as u32 * (den * den) as u32);
    let rhs = BigUint::from(b).pow((num * num) as u32);
    lhs < rhs
}

/// All ordered `r`-tuples in `[B, 2B)^r` with pairwise small gcd.
pub fn admissible_ordered(b: u64, r: usize, num: u64, den: u64) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..r {
        let mut next = Vec::new();
        for t in &out {
            for v in b..2 * b {
                if t.iter().all(|&u| gcd_small(gcd(u, v), b, r, num, den)) {
                    let mut t2 = t.clone();
                    t2.push(v);
                    next.push(t2);
                }
            }
        }
        out = next;
    }
    out
}

pub fn lcm_all(b: &[u64]) -> u64 {
    b.iter().fold(1u64, |a, &x| a.lcm(&x))
}

/// Achievable `Σ a_i/b_i mod 1` with `gcd(a_i, b_i) = 1`, as a bitset over
/// numerators mod `lcm(b)`, with the reduced denominators that occur.
pub struct SumSet {
    pub l: u64,
    words: Vec<u64>,
    /// Sorted, distinct.
    pub dens: Vec<u64>,
}

impl SumSet {
    pub fn new(b: &[u64]) -> Self {
        let l = lcm_all(b);
        let nwords = (l as usize).div_ceil(64);
        let mut cur: Vec<u64> = vec![0];
        for &bi in b {
            let step = l / bi;
            let units: Vec<u64> = (0..bi).filter(|&a| gcd(a, bi) == 1).map(|a| a * step).collect();
            let mut words = vec![0u64; nwords];
            let mut next = Vec::new();
            for &n in &cur {
                for &u in &units {
                    let v = (n + u) % l;
                    let (w, bit) = ((v / 64) as usize, v % 64);
                    if words[w] >> bit & 1 == 0 {
                        words[w] |= 1 << bit;
                        next.push(v);
                    }
                }
            }
            cur = next;
        }
        let mut words = vec![0u64; nwords];
        let mut dens = Vec::new();
        for &n in &cur {
            words[(n / 64) as usize] |= 1 << (n % 64);
            dens.push(l / gcd(n, l));
        }
        dens.sort_unstable();
        dens.dedup();
        SumSet { l, words, dens }
    }

    fn contains(&self, n: u64) -> bool {
        self.words[(n / 64) as usize] >> (n % 64) & 1 == 1
    }

    /// Numerators `m mod e` of the members with reduced denominator `e`.
    fn with_denominator(&self, e: u64) -> Vec<u64> {
        let step = self.l / e;
        (0..e).filter(|&m| gcd(m, e) == 1 && self.contains(m * step)).collect()
    }

    pub fn meets(&self, other: &SumSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.dens.len() && j < other.dens.len() {
            match self.dens[i].cmp(&other.dens[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let e = self.dens[i];
                    let a = self.with_denominator(e);
                    let b = other.with_denominator(e);
                    if a.iter().any(|m| b.binary_search(m).is_ok()) {
                        return true;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        false
    }

    /// Least reduced denominator over the set.
    pub fn min_denominator(&self) -> u64 {
        self.dens[0]
    }
}

/// `#R(b)` over ordered tuples for every sorted admissible `b`.
pub fn brute_r_counts(b_scale: u64, r: usize, num: u64, den: u64) -> BTreeMap<Vec<u64>, u64> {
    let ordered = admissible_ordered(b_scale, r, num, den);
    let mut sets: BTreeMap<Vec<u64>, SumSet> = BTreeMap::new();
    for t in &ordered {
        let mut s = t.clone();
        s.sort_unstable();
        if !sets.contains_key(&s) {
            let set = SumSet::new(&s);
            sets.insert(s, set);
        }
    }
    // Number of orderings of each sorted tuple.
    let mut perms: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
    for t in &ordered {
        let mut s = t.clone();
        s.sort_unstable();
        *perms.entry(s).or_default() += 1;
    }
    let keys: Vec<&Vec<u64>> = sets.keys().collect();
    let mut out = BTreeMap::new();
    for a in &keys {
        let sa = &sets[*a];
        let mut count = 0;
        for b in &keys {
            if sa.meets(&sets[*b]) {
                count += perms[*b];
            }
        }
        out.insert((*a).clone(), count);
    }
    out
}

// ---------------------------------------------------------------------------
// Expansion by brute force

/// Largest number of triples sharing one `q`-vector.
pub fn brute_max_multiplicity(s: &[RelationTriple]) -> usize {
    let mut qs: Vec<&Vec<u64>> = s.iter().map(|t| &t.q).collect();
    qs.sort();
    let mut best = 0;
    let mut i = 0;
    while i < qs.len() {
        let mut j = i;
        while j < qs.len() && qs[j] == qs[i] {
            j += 1;
        }
        best = best.max(j - i);
        i = j;
    }
    best
}

/// Distinct sums over all ordered `r`-tuples, on a common integer scale.
pub fn brute_sum_set(s: &[RelationTriple], r: u32) -> u64 {
    let d = s[0].q.len();
    let l: Vec<i128> = (0..d)
        .map(|j| s.iter().fold(1i128, |a, t| a.lcm(&(t.q[j] as i128))))
        .collect();
    let scaled: Vec<Vec<i128>> = s
        .iter()
        .map(|t| (0..d).map(|j| t.a[j] as i128 * (l[j] / t.q[j] as i128)).collect())
        .collect();
    let mut seen: HashSet<Vec<i128>> = HashSet::new();
    let n = s.len();
    let mut idx = vec![0usize; r as usize];
    loop {
        let mut v = vec![0i128; d];
        for &i in &idx {
            for j in 0..d {
                v[j] += scaled[i][j];
            }
        }
        seen.insert(v);
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return seen.len() as u64;
            }
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// g_p by definition

pub fn valuation(mut x: u64, p: u64) -> u32 {
    let mut v = 0;
    while x % p == 0 {
        x /= p;
        v += 1;
    }
    v
}

/// `Π_p p^{Σ v_p(b_i) − 2Σ_{i<j} min(v_p(b_i), v_p(b_j))}` by trial division.
pub fn gp_oracle(b: &[u64]) -> Rational {
    let mut primes = Vec::new();
    for &x in b {
        let mut m = x;
        let mut p = 2;
        while p * p <= m {
            if m % p == 0 {
                primes.push(p);
                while m % p == 0 {
                    m /= p;
                }
            }
            p += 1;
        }
        if m > 1 {
            primes.push(m);
        }
    }
    primes.sort_unstable();
    primes.dedup();
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for p in primes {
        let v: Vec<u32> = b.iter().map(|&x| valuation(x, p)).collect();
        let mut e: i64 = v.iter().map(|&a| a as i64).sum();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                e -= 2 * v[i].min(v[j]) as i64;
            }
        }
        let pp = BigInt::from(p).pow(e.unsigned_abs() as u32);
        if e >= 0 {
            num *= pp;
        } else {
            den *= pp;
        }
    }
    Rational::new(num, den)
}
