mod common;

use fracparts::arith::{self, rat, PowTerm, Rational};
use fracparts::denominators::{self, SumSignature};
use fracparts::expsum;
use fracparts::increment;
use fracparts::model::{self, BoxTarget, FrequencyVector, PolySystem};
use fracparts::oracle;
use num_bigint::BigInt;
use proptest::prelude::*;

fn small_system() -> impl Strategy<Value = PolySystem> {
    (1usize..=2, 1usize..=3).prop_flat_map(|(k, d)| {
        prop::collection::vec(prop::collection::vec((-50i64..50, 1i64..60), d), k).prop_map(|rows| {
            PolySystem::from_rationals(
                rows.into_iter()
                    .map(|r| r.into_iter().map(|(a, q)| rat(a, q)).collect())
                    .collect(),
            )
            .unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gp_routes_agree(b in prop::collection::vec(1u64..100_000, 1..5)) {
        let gp = denominators::gp_product(&b);
        prop_assert_eq!(&gp, &denominators::gp_by_primes(&b));
        prop_assert_eq!(gp, common::gp_oracle(&b));
    }

    #[test]
    fn sum_denominator_at_least_gp(b in prop::collection::vec(2u64..200, 1..4), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let parts: Vec<(i64, u64)> = b.iter().map(|&bi| loop {
            let a = rng.gen_range(1..bi);
            if common::gcd(a, bi) == 1 {
                break (a as i64, bi);
            }
        }).collect();
        let d = denominators::sum_denominator(&parts).unwrap();
        prop_assert!(Rational::from_integer(d.clone()) >= denominators::gp_product(&b));
        let least = SumSignature::of(&b).min_denominator();
        prop_assert!(least <= d);
        prop_assert_eq!(least, BigInt::from(common::SumSet::new(&b).min_denominator()));
    }

    #[test]
    fn signature_compatibility_matches_brute_force(
        a in prop::collection::vec(2u64..40, 1..4),
        b in prop::collection::vec(2u64..40, 1..4),
    ) {
        let lib = SumSignature::of(&a).compatible(&SumSignature::of(&b));
        prop_assert_eq!(lib, SumSignature::of(&b).compatible(&SumSignature::of(&a)));
        prop_assert_eq!(lib, common::SumSet::new(&a).meets(&common::SumSet::new(&b)));
    }

    #[test]
    fn fractional_norm_is_symmetric_and_periodic(n in -10_000i64..10_000, q in 1i64..10_000, m in -5i64..5) {
        let t = rat(n, q);
        let v = arith::dist_to_int(&t);
        prop_assert!(v >= rat(0, 1) && v <= rat(1, 2));
        prop_assert_eq!(&v, &arith::dist_to_int(&-t.clone()));
        prop_assert_eq!(v, arith::dist_to_int(&(t + rat(m, 1))));
    }

    #[test]
    fn minimax_matches_brute_force(p in small_system(), x in 2u64..300) {
        let r = oracle::minimax_search(&p, x).unwrap();
        let best = (1..x)
            .map(|n| {
                let v = (0..p.k()).map(|i| common::frac_norm_exact(&common::row_values(&p, i), n)).max().unwrap();
                (v, n)
            })
            .min()
            .unwrap();
        prop_assert_eq!(r.best_value, best.0);
        prop_assert_eq!(r.best_n, best.1);
    }

    #[test]
    fn box_search_agrees_with_count(p in small_system(), x in 2u64..400, e in 1i64..20) {
        let b = BoxTarget::with_ceiling(vec![rat(e, 100); p.k()], rat(1, 2)).unwrap();
        let first = oracle::box_search(&p, x, &b).unwrap();
        // box_count includes n = x.
        let count = oracle::box_count(&p, x - 1, &b).unwrap();
        prop_assert_eq!(first.is_some(), count > 0);
        let brute = (1..x).find(|&n| {
            (0..p.k()).all(|i| common::frac_norm_exact(&common::row_values(&p, i), n) <= rat(e, 100))
        });
        prop_assert_eq!(first, brute);
    }

    #[test]
    fn weyl_sum_conjugate_symmetry(p in small_system(), x in 1u64..2000, h0 in -9i64..9) {
        let h: Vec<i64> = (0..p.k()).map(|i| h0 + i as i64).collect();
        let s = expsum::weyl_sum(&p, &FrequencyVector(h.clone()), x).unwrap();
        let neg: Vec<i64> = h.iter().map(|v| -v).collect();
        let t = expsum::weyl_sum(&p, &FrequencyVector(neg), x).unwrap();
        prop_assert!((s.re - t.re).abs() <= 1e-9 * x as f64);
        prop_assert!((s.im + t.im).abs() <= 1e-9 * x as f64);
        prop_assert!(s.abs() <= x as f64 + s.err);
    }

    #[test]
    fn dyadic_level_brackets(x in 1u64..1_000_000, s in 1e-3f64..1.0) {
        let s = s * x as f64;
        let j = expsum::dyadic_level(x, s).unwrap();
        let q = (j as f64).exp2();
        prop_assert!(s >= x as f64 / q && s <= 2.0 * x as f64 / q);
    }

    #[test]
    fn column_reduction_is_unimodular(
        h in prop::collection::vec(prop::collection::vec(-6i64..6, 3), 1..3)
    ) {
        let (l, v, w) = match increment::column_reduce(&h) {
            Ok(t) => t,
            Err(_) => return Ok(()),
        };
        let k = 3;
        // V·W = I
        for i in 0..k {
            for j in 0..k {
                let s: i128 = (0..k).map(|t| v[i][t] * w[t][j]).sum();
                prop_assert_eq!(s, (i == j) as i128);
            }
        }
        // H·V = [L | 0]
        for (row, hr) in h.iter().enumerate() {
            for c in 0..k {
                let s: i128 = (0..k).map(|t| hr[t] as i128 * v[t][c]).sum();
                let want = if c < l[row].len() { l[row][c] } else { 0 };
                prop_assert_eq!(s, want);
            }
        }
    }

    #[test]
    fn wedge_below_hadamard(
        vs in prop::collection::vec(prop::collection::vec(-20i64..20, 3), 1..4)
    ) {
        let vr: Vec<Vec<Rational>> = vs.iter().map(|v| v.iter().map(|&x| rat(x, 1)).collect()).collect();
        let g = increment::gram_determinant(&vr).unwrap();
        prop_assert!(g >= rat(0, 1));
        let w = increment::wedge_norm(&vr).unwrap();
        let l2: f64 = vs.iter().map(|v| (v.iter().map(|&x| (x * x) as f64).sum::<f64>()).sqrt()).product();
        prop_assert!(w <= l2 * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn pow_comparison_matches_floats(a in 2u64..1000, b in 2u64..1000, e in 1i64..40, f in 1i64..40) {
        let lhs = [PowTerm::new(rat(a as i64, 1), rat(e, 7))];
        let rhs = [PowTerm::new(rat(b as i64, 1), rat(f, 7))];
        let la = e as f64 / 7.0 * (a as f64).ln();
        let lb = f as f64 / 7.0 * (b as f64).ln();
        if (la - lb).abs() > 1e-6 {
            let ord = arith::cmp_pow_products(&lhs, &rhs).unwrap();
            prop_assert_eq!(ord, la.partial_cmp(&lb).unwrap());
        }
    }

    #[test]
    fn rational_text_round_trip(n in any::<i64>(), d in 1i64..i64::MAX) {
        let q = rat(n, d);
        let s = arith::serde_rational::to_string(&q);
        prop_assert_eq!(arith::parse_rational(&s).unwrap(), q);
    }

    #[test]
    fn eval_matches_exact(p in small_system(), n in 0u64..100_000) {
        let v = model::eval_system(&p, n).unwrap();
        for (i, nv) in v.iter().enumerate() {
            prop_assert_eq!(&nv.value, &common::frac_norm_exact(&common::row_values(&p, i), n));
        }
    }
}

#[test]
fn r_count_symmetric_under_permutation() {
    let fam = denominators::DenominatorFamily::new(16, 3, rat(1, 2)).unwrap();
    let index = denominators::FamilyIndex::new(&fam, denominators::DEFAULT_ENUM_CAP).unwrap();
    for t in fam.sorted_tuples().iter().take(40) {
        let base = index.count(t).unwrap().ordered;
        for p in denominators::permutations(t) {
            assert_eq!(index.count(&p).unwrap().ordered, base);
        }
    }
}
