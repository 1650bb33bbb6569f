//! Randomized invariants over the public API: rank formulas against
//! direct enumeration, prime selection, Morse bookkeeping identities,
//! metric closed forms, and the closed-form flow's group law.

use finsler_geodesics::dynamics::{self, GeodesicState};
use finsler_geodesics::loopspace::{self, MorseCheck};
use finsler_geodesics::morse::{self, Gamma};
use finsler_geodesics::sphere::{a_invariant, KillingField, SpherePoint, TangentVector};
use finsler_geodesics::zermelo::ZermeloMetric;
use nalgebra::DVector;
use proptest::prelude::*;

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Weights drawn to be strictly increasing and pairwise coprime.
fn weights_strategy(m: usize) -> impl Strategy<Value = Vec<u64>> {
    proptest::collection::vec(1u64..=12, m.pow(2) + 4).prop_filter_map(
        "needs m increasing pairwise-coprime weights",
        move |pool| {
            let mut picked: Vec<u64> = Vec::new();
            for w in pool {
                if picked.iter().all(|&v| v < w && gcd(v, w) == 1) {
                    picked.push(w);
                    if picked.len() == m {
                        return Some(picked);
                    }
                }
            }
            None
        },
    )
}

fn field_strategy() -> impl Strategy<Value = KillingField> {
    (2usize..=3)
        .prop_flat_map(|m| (weights_strategy(m), 0.05f64..0.95))
        .prop_map(|(weights, frac)| {
            let mu = frac / a_invariant(&weights).unwrap();
            KillingField::new(weights.len(), weights, mu).unwrap()
        })
}

proptest! {
    #[test]
    fn rank_formulas_match_direct_enumeration(m in 2u64..=1000, j in 0u64..=200) {
        let mut free = 0u64;
        let mut quot = 0u64;
        for r in 1..=j + 2 {
            if j == 2 * r * (m - 1) {
                free += 1;
            }
            if r >= 2 && j == 2 * r * (m - 1) + 1 {
                free += 1;
            }
            if r >= 2 && j == 2 * r * (m - 1) {
                quot += 2;
            }
        }
        if quot == 0 && j % 2 == 0 && j >= 2 * m - 2 {
            quot = 1;
        }
        prop_assert_eq!(loopspace::betti_free_loop(m, j).unwrap(), free);
        prop_assert_eq!(loopspace::betti_quotient(m, j).unwrap(), quot);
    }

    #[test]
    fn admissible_prime_is_minimal_and_bounded(m in 2u64..=1_000_000) {
        let p = loopspace::smallest_admissible_prime(m).unwrap();
        prop_assert!(is_prime(p));
        prop_assert!((3..=m + 2).contains(&p));
        prop_assert!(m % p != 0 && (m - 1) % p != 0);
        for q in 2..p {
            if is_prime(q) {
                prop_assert!(m % q == 0 || (m - 1) % q == 0, "smaller prime {q} was admissible");
            }
        }
    }

    #[test]
    fn morse_recursion_solves_the_stated_identity(
        v in proptest::collection::btree_map(0u64..16, 0u64..4, 0..10),
        beta in proptest::collection::btree_map(0u64..16, 0u64..4, 0..10),
    ) {
        let max_degree = 16;
        match loopspace::morse_inequalities(&v, &beta, max_degree) {
            MorseCheck::Consistent(data) => {
                let q = |j: i64| -> i64 {
                    if j < 0 { 0 } else { *data.q.get(&(j as u64)).unwrap_or(&0) as i64 }
                };
                for j in 0..=max_degree as i64 {
                    let vj = *v.get(&(j as u64)).unwrap_or(&0) as i64;
                    let bj = *beta.get(&(j as u64)).unwrap_or(&0) as i64;
                    prop_assert_eq!(vj, bj + q(j) + q(j - 1), "degree {}", j);
                }
            }
            MorseCheck::FailsAt { degree, deficit } => {
                prop_assert!(degree <= max_degree);
                prop_assert!(deficit < 0);
                // Replaying the recursion up to the failure reproduces it.
                let mut q_prev = 0i64;
                for j in 0..degree {
                    let vj = *v.get(&j).unwrap_or(&0) as i64;
                    let bj = *beta.get(&j).unwrap_or(&0) as i64;
                    q_prev = vj - bj - q_prev;
                    prop_assert!(q_prev >= 0);
                }
                let vj = *v.get(&degree).unwrap_or(&0) as i64;
                let bj = *beta.get(&degree).unwrap_or(&0) as i64;
                prop_assert_eq!(vj - bj - q_prev, deficit);
            }
        }
    }

    #[test]
    fn forced_sequence_shape(m in 2u64..=30, p_pick in 0usize..5) {
        let candidates = [3u64, 5, 7, 11, 13];
        let p = candidates[p_pick];
        prop_assume!(m % p != 0 && (m - 1) % p != 0);

        let seq = loopspace::forced_index_sequence(m, p).unwrap();
        prop_assert_eq!(seq.values.len(), ((2 * p - 1) * m + 1) as usize);
        prop_assert_eq!(seq.values[0], 2 * m - 2);
        prop_assert_eq!(seq.gamma, Gamma::PlusOne);
        prop_assert!(seq.values.iter().all(|v| v % 2 == 0));
        prop_assert!(seq.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(morse::bott_checks(&seq).all_passed());
    }

    #[test]
    fn witness_never_finds_a_solution(m in 2u64..=200, p_pick in 0usize..5, bound in 10u64..=200) {
        let candidates = [3u64, 5, 7, 11, 13];
        let p = candidates[p_pick];
        prop_assume!(m % p != 0 && (m - 1) % p != 0);
        let report = loopspace::contradiction_witness(m, p, bound).unwrap();
        prop_assert!(report.all_passed());
    }

    #[test]
    fn gamma_partition_follows_the_parities(first in 0u64..1000, jump in 0u64..1000) {
        let second = first + jump;
        let gamma = morse::gamma_invariant(first, second);
        prop_assert_eq!(gamma.is_integral(), jump % 2 == 0);
        prop_assert_eq!(gamma.is_positive(), first % 2 == 0);
    }

    #[test]
    fn metric_closed_forms_are_consistent(field in field_strategy()) {
        let metric = ZermeloMetric::new(field.clone()).unwrap();
        let w = field.sup_norm();
        prop_assert!((0.0..1.0).contains(&w));
        let lambda = metric.reversibility_exact();
        let distortion = metric.distortion_exact();
        prop_assert!((lambda - (1.0 + w) / (1.0 - w)).abs() <= 1e-12);
        prop_assert!((distortion - 1.0 / (1.0 - w)).abs() <= 1e-12);
        prop_assert!(lambda >= 1.0);
        prop_assert!(distortion * distortion + 1e-12 >= lambda);
    }

    #[test]
    fn finsler_norm_is_positively_homogeneous(
        field in field_strategy(),
        seed in 0u64..1_000_000,
        scale in 0.1f64..10.0,
    ) {
        let mut rng = finsler_geodesics::sampling::seeded_rng(seed);
        let d = field.ambient_dim();
        let x = finsler_geodesics::sampling::random_sphere_point(d, &mut rng).unwrap();
        let y = finsler_geodesics::sampling::random_unit_tangent(&x, &mut rng);
        let metric = ZermeloMetric::new(field).unwrap();

        let base = metric.norm(&TangentVector::new(x.clone(), y.clone()).unwrap()).unwrap();
        prop_assert!(base > 0.0);
        let scaled = metric
            .norm(&TangentVector::new(x, y * scale).unwrap())
            .unwrap();
        prop_assert!((scaled - scale * base).abs() <= 1e-9 * (1.0 + scaled));
    }

    #[test]
    fn normalized_states_have_unit_dual_norm(field in field_strategy(), seed in 0u64..1_000_000) {
        let mut rng = finsler_geodesics::sampling::seeded_rng(seed);
        let d = field.ambient_dim();
        let x = finsler_geodesics::sampling::random_unit(d, &mut rng);
        let p = finsler_geodesics::sampling::random_unit(d, &mut rng);
        if let Ok(state) = GeodesicState::normalized(&field, x, p) {
            prop_assert!((state.energy(&field) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn exact_flow_satisfies_the_group_law(
        field in field_strategy(),
        seed in 0u64..1_000_000,
        s in -5.0f64..5.0,
        t in -5.0f64..5.0,
    ) {
        let mut rng = finsler_geodesics::sampling::seeded_rng(seed);
        let d = field.ambient_dim();
        let x = finsler_geodesics::sampling::random_unit(d, &mut rng);
        let p = finsler_geodesics::sampling::random_unit(d, &mut rng);
        prop_assume!(GeodesicState::normalized(&field, x.clone(), p.clone()).is_ok());
        let state = GeodesicState::normalized(&field, x, p).unwrap();

        let one_shot = dynamics::exact_flow(&field, &state, s + t);
        let first = dynamics::exact_flow(&field, &state, t);
        let composed = dynamics::exact_flow(&field, &first, s);
        let err = (one_shot.x() - composed.x())
            .norm()
            .hypot((one_shot.p() - composed.p()).norm());
        prop_assert!(err <= 1e-9, "group law violated by {err:.3e}");

        prop_assert!((one_shot.energy(&field) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn plane_orbit_lengths_follow_the_rate_formula(
        field in field_strategy(),
        plane_pick in 0usize..3,
    ) {
        let m = field.m();
        let plane = plane_pick % m + 1;
        let records = dynamics::katok_closed_geodesics(&field).unwrap();
        let rate = field.block_rate(plane - 1);
        for positive in [true, false] {
            let want = std::f64::consts::TAU / (1.0 + if positive { rate } else { -rate });
            let label = format!("c{plane}{}", if positive { '+' } else { '-' });
            let rec = records.iter().find(|r| r.label.to_string() == label).unwrap();
            prop_assert!((rec.length - want).abs() <= 1e-9 * want);
        }
    }
}

#[test]
fn betti_tables_are_deterministic_and_serializable() {
    let a = loopspace::betti_table(loopspace::LoopSpace::QuotientPair, 3, 40).unwrap();
    let b = loopspace::betti_table(loopspace::LoopSpace::QuotientPair, 3, 40).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    assert!(json.contains("\"QuotientPair\""));
}

#[test]
fn sphere_points_reject_off_sphere_coordinates() {
    assert!(SpherePoint::new(DVector::from_vec(vec![0.5, 0.0, 0.0, 0.0])).is_err());
    assert!(SpherePoint::new(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).is_ok());
}
