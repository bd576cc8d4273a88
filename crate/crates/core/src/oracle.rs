//! Exhaustive ground-truth oracles.
//!
//! Every structured procedure in the crate is checked against these scans.
//! They are deliberately brute force: ascending `n`, exact residues, no
//! lattice shortcuts. Work is split into fixed contiguous chunks whose
//! results are merged in chunk order, so outputs do not depend on the number
//! of worker threads.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{self, Rational};
use crate::error::{Error, Result};
use crate::eval::{CompiledSystem, MaxNorm};
use crate::model::{BoxTarget, PolySystem};

const CHUNK: u64 = 1 << 14;

/// Minimax outcome over `1 ≤ n < x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_n: u64,
    /// `max_i ‖f_i(best_n)‖`.
    #[serde(with = "arith::serde_rational")]
    pub best_value: Rational,
    /// Upper bound on the error of `best_value` from inexact coefficients.
    #[serde(with = "arith::serde_rational")]
    pub error: Rational,
    /// Least `n < x` inside the box, when a box was supplied.
    pub hit: Option<u64>,
}

fn chunks(lo: u64, hi: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut a = lo;
    while a < hi {
        let b = (a + CHUNK).min(hi);
        out.push((a, b));
        a = b;
    }
    out
}

/// Least `n` in `[lo, hi)` with `‖f_i(n)‖ ≤ ε_i` for every `i`.
pub fn box_search_range(p: &PolySystem, lo: u64, hi: u64, b: &BoxTarget) -> Result<Option<u64>> {
    if b.k() != p.k() {
        return Err(Error::InvalidInput(format!(
            "box has {} tolerances for {} polynomials",
            b.k(),
            p.k()
        )));
    }
    let sys = CompiledSystem::new(p);
    let thresholds = sys.thresholds(b.epsilons());
    let lo = lo.max(1);
    let found = chunks(lo, hi)
        .into_par_iter()
        .map(|(a, z)| -> Result<Option<u64>> {
            for n in a..z {
                if sys.in_box(n, &thresholds)? {
                    return Ok(Some(n));
                }
            }
            Ok(None)
        })
        .find_first(|r| !matches!(r, Ok(None)));
    found.unwrap_or(Ok(None))
}

/// Least `n < x` inside the box, or `None`; the decision is exact.
pub fn box_search(p: &PolySystem, x: u64, b: &BoxTarget) -> Result<Option<u64>> {
    if x < 2 {
        return Err(Error::Precondition(format!("box_search needs x ≥ 2, got {x}")));
    }
    box_search_range(p, 1, x, b)
}

/// Number of `n ≤ x` inside the box (inclusive upper end, as in the
/// exponential-sum identities).
pub fn box_count(p: &PolySystem, x: u64, b: &BoxTarget) -> Result<u64> {
    let sys = CompiledSystem::new(p);
    let thresholds = sys.thresholds(b.epsilons());
    let counts: Result<Vec<u64>> = chunks(1, x + 1)
        .into_par_iter()
        .map(|(a, z)| {
            let mut c = 0;
            for n in a..z {
                if sys.in_box(n, &thresholds)? {
                    c += 1;
                }
            }
            Ok(c)
        })
        .collect();
    Ok(counts?.into_iter().sum())
}

#[derive(Debug, Clone)]
struct Candidate {
    n: u64,
    m: MaxNorm,
    err: f64,
}

fn candidate(sys: &CompiledSystem, n: u64) -> Candidate {
    let m = sys.max_norm(n);
    let err = sys
        .polys()
        .iter()
        .map(|p| {
            let e = p.err_at(n);
            e as f64 / p.denominator().to_f64()
        })
        .fold(0.0, f64::max);
    Candidate { n, m, err }
}

/// Lexicographic `(value, n)` comparison; refuses to rank values closer than
/// their combined error.
fn cmp_candidates(sys: &CompiledSystem, a: &Candidate, b: &Candidate) -> Result<Ordering> {
    let ord = sys.cmp_values(a.m.poly, &a.m.dist, b.m.poly, &b.m.dist);
    if ord != Ordering::Equal && (a.err > 0.0 || b.err > 0.0) {
        let fa = sys.value_f64(&a.m);
        let fb = sys.value_f64(&b.m);
        let budget = (a.err + b.err) * (1.0 + 1e-9);
        let gap = (fa - fb).abs();
        let resolvable = 1e-13 * fa.abs().max(fb.abs());
        if gap <= budget + resolvable {
            let (ra, _) = sys.value_of(&a.m);
            let (rb, _) = sys.value_of(&b.m);
            let exact_gap = arith::to_f64(&num_traits::Signed::abs(&(ra - rb)));
            if exact_gap <= budget {
                return Err(Error::PrecisionInsufficient(format!(
                    "minimax values at n={} and n={} differ by less than their error",
                    a.n, b.n
                )));
            }
        }
    }
    Ok(ord.then(a.n.cmp(&b.n)))
}

fn best_in_range(sys: &CompiledSystem, lo: u64, hi: u64) -> Result<Option<Candidate>> {
    let partial: Result<Vec<Option<Candidate>>> = chunks(lo, hi)
        .into_par_iter()
        .map(|(a, z)| {
            let mut best: Option<Candidate> = None;
            for n in a..z {
                let c = candidate(sys, n);
                best = match best {
                    None => Some(c),
                    Some(b) => {
                        if cmp_candidates(sys, &c, &b)? == Ordering::Less {
                            Some(c)
                        } else {
                            Some(b)
                        }
                    }
                };
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<Candidate> = None;
    for c in partial?.into_iter().flatten() {
        best = match best {
            None => Some(c),
            Some(b) => {
                if cmp_candidates(sys, &c, &b)? == Ordering::Less {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        };
    }
    Ok(best)
}

fn to_result(sys: &CompiledSystem, c: &Candidate) -> SearchResult {
    let (value, _) = sys.value_of(&c.m);
    SearchResult {
        best_n: c.n,
        best_value: value,
        error: if c.err == 0.0 {
            Rational::from_integer(0.into())
        } else {
            arith::from_f64(c.err * (1.0 + 1e-9))
        },
        hit: None,
    }
}

/// Exact `argmin_{1 ≤ n < x} max_i ‖f_i(n)‖`, ties broken by least `n`.
pub fn minimax_search(p: &PolySystem, x: u64) -> Result<SearchResult> {
    if x < 2 {
        return Err(Error::Precondition(format!("minimax_search needs x ≥ 2, got {x}")));
    }
    let sys = CompiledSystem::new(p);
    let best = best_in_range(&sys, 1, x)?.expect("nonempty range");
    Ok(to_result(&sys, &best))
}

/// Minimax and box search in one call.
pub fn search(p: &PolySystem, x: u64, b: Option<&BoxTarget>) -> Result<SearchResult> {
    let mut r = minimax_search(p, x)?;
    if let Some(b) = b {
        r.hit = box_search(p, x, b)?;
    }
    Ok(r)
}

/// Minimax results for every `x` in a strictly increasing grid, from one pass.
pub fn minimax_profile(p: &PolySystem, grid: &[u64]) -> Result<Vec<SearchResult>> {
    if grid.is_empty() || grid[0] < 2 {
        return Err(Error::Precondition("grid must start at x ≥ 2".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("grid must be strictly increasing".into()));
    }
    let sys = CompiledSystem::new(p);
    let mut out = Vec::with_capacity(grid.len());
    let mut best: Option<Candidate> = None;
    let mut lo = 1;
    for &x in grid {
        if let Some(c) = best_in_range(&sys, lo, x)? {
            best = match best {
                None => Some(c),
                Some(b) => {
                    if cmp_candidates(&sys, &c, &b)? == Ordering::Less {
                        Some(c)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        lo = x;
        out.push(to_result(&sys, best.as_ref().expect("x ≥ 2")));
    }
    Ok(out)
}

/// One row of an exponent fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub x: u64,
    pub best_n: u64,
    #[serde(with = "arith::serde_rational")]
    pub value: Rational,
    pub ln_x: f64,
    pub ln_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub table: Vec<FitRow>,
}

/// Ordinary least-squares slope and intercept of `ys` against `xs`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least-squares slope of `log(best_value)` against `log(x)` over the grid.
pub fn exponent_fit(p: &PolySystem, grid: &[u64]) -> Result<ExponentFit> {
    if grid.len() < 4 {
        return Err(Error::Precondition(format!(
            "exponent_fit needs at least 4 grid points, got {}",
            grid.len()
        )));
    }
    let profile = minimax_profile(p, grid)?;
    fit_profile(grid, &profile)
}

pub fn fit_profile(grid: &[u64], profile: &[SearchResult]) -> Result<ExponentFit> {
    let mut table = Vec::with_capacity(grid.len());
    for (&x, r) in grid.iter().zip(profile) {
        if num_traits::Zero::is_zero(&r.best_value) {
            return Err(Error::DegenerateFit(format!(
                "minimax value is 0 at x = {x} (n = {})",
                r.best_n
            )));
        }
        table.push(FitRow {
            x,
            best_n: r.best_n,
            value: r.best_value.clone(),
            ln_x: (x as f64).ln(),
            ln_value: arith::ln_abs(&r.best_value),
        });
    }
    let xs: Vec<f64> = table.iter().map(|r| r.ln_x).collect();
    let ys: Vec<f64> = table.iter().map(|r| r.ln_value).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(ExponentFit {
        slope,
        intercept,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{int, rat};
    use crate::model::{parse_coefficient, RealCoefficient};

    fn linear(c: Rational) -> PolySystem {
        PolySystem::from_rationals(vec![vec![c]]).unwrap()
    }

    fn sqrt2_sq() -> PolySystem {
        let s2 = parse_coefficient("sqrt(2)", 128).unwrap();
        PolySystem::new(vec![vec![RealCoefficient::zero(), s2]]).unwrap()
    }

    #[test]
    fn box_search_examples() {
        let b = BoxTarget::uniform(1, rat(1, 100)).unwrap();
        assert_eq!(box_search(&linear(rat(1, 3)), 10, &b).unwrap(), Some(3));
        assert_eq!(box_search(&linear(rat(1, 2)), 10, &b).unwrap(), Some(2));
        assert_eq!(box_search(&linear(rat(1, 2)), 2, &b).unwrap(), None);
        assert!(box_search(&linear(rat(1, 2)), 1, &b).is_err());
    }

    #[test]
    fn minimax_examples() {
        let r = minimax_search(&linear(rat(1, 7)), 8).unwrap();
        assert_eq!((r.best_n, r.best_value), (7, int(0)));
        let p = PolySystem::from_rationals(vec![vec![int(0), int(1)]]).unwrap();
        let r = minimax_search(&p, 100).unwrap();
        assert_eq!((r.best_n, r.best_value), (1, int(0)));
    }

    #[test]
    fn exponent_fit_errors() {
        let p = PolySystem::from_rationals(vec![vec![int(0), int(1)]]).unwrap();
        assert!(matches!(
            exponent_fit(&p, &[16, 32, 64, 128]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            exponent_fit(&sqrt2_sq(), &[1024]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn profile_matches_individual_searches() {
        let p = sqrt2_sq();
        let grid = [16, 100, 1000, 5000];
        let prof = minimax_profile(&p, &grid).unwrap();
        for (x, r) in grid.iter().zip(&prof) {
            let single = minimax_search(&p, *x).unwrap();
            assert_eq!(single.best_n, r.best_n);
            assert_eq!(single.best_value, r.best_value);
        }
    }
}
