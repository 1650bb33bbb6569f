//! The toolkit's nine acceptance gates, one test each, with one printed
//! pass line per gate (visible under --nocapture). Each gate states its
//! tolerance inline; the timed ones assert their wall-clock budget.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use finsler_geodesics::dynamics::{
    self, ClosedGeodesicRecord, FinderOptions, GeodesicLabel, GeodesicState,
};
use finsler_geodesics::loopspace::{self, MorseCheck};
use finsler_geodesics::morse;
use finsler_geodesics::sphere::{a_invariant, KillingField};
use finsler_geodesics::zermelo::ZermeloMetric;
use finsler_geodesics::Exec;
use nalgebra::DVector;
use rand::Rng;

fn pass(number: u32, name: &str, started: Instant, detail: &str) {
    println!(
        "acceptance {number} ({name}): PASS in {:.2}s — {detail}",
        started.elapsed().as_secs_f64()
    );
}

fn katok_field() -> KillingField {
    KillingField::new(2, vec![1, 3], 0.1).unwrap()
}

fn by_label<'a>(records: &'a [ClosedGeodesicRecord], label: &str) -> &'a ClosedGeodesicRecord {
    records
        .iter()
        .find(|r| r.label.to_string() == label)
        .unwrap_or_else(|| panic!("no record labeled {label}"))
}

#[test]
fn acceptance_1_finder_recovers_the_catalog_lengths() {
    let started = Instant::now();
    let field = katok_field();
    let opts = FinderOptions { length_bound: 10.0, seeds: 64, tol: 1e-9, exec: Exec::default() };
    let outcome = dynamics::find_closed_geodesics(&field, &opts).unwrap();

    let mut found: Vec<f64> = outcome.records.iter().map(|r| r.length).collect();
    found.sort_by(f64::total_cmp);
    let mut expected: Vec<f64> =
        [1.3, 1.1, 0.9, 0.7].iter().map(|rate| TAU / rate).collect();
    expected.sort_by(f64::total_cmp);

    assert_eq!(found.len(), 4, "want exactly 4 closed orbits, got {found:?}");
    for (f, e) in found.iter().zip(&expected) {
        assert!((f - e).abs() <= 1e-6, "length {f} vs closed form {e}");
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "finder took {elapsed:.1}s, budget 60s");
    pass(1, "finder recovers catalog lengths", started, &format!("lengths {found:?}"));
}

#[test]
fn acceptance_2_round_sphere_indices_match_the_closed_formula() {
    let started = Instant::now();
    for m in [2usize, 3] {
        let field = KillingField::new(m, [1, 2, 3][..m].to_vec(), 0.0).unwrap();
        let d = 2 * m;
        let x = DVector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let p = DVector::from_fn(d, |i, _| if i == 1 { 1.0 } else { 0.0 });
        for k in 1..=4u32 {
            let record = ClosedGeodesicRecord {
                label: GeodesicLabel::Found { id: 0 },
                length: TAU * k as f64,
                multiplicity: k,
                initial: GeodesicState::new(&field, x.clone(), p.clone()).unwrap(),
                circle: None,
                index: None,
                nullity: None,
            };
            let data = morse::closed_geodesic_index(&field, &record).unwrap();
            let want = morse::round_index(m, k as usize).unwrap();
            assert!(data.index.is_exact(), "m={m} k={k}");
            assert_eq!(data.index.lo() as u64, want, "m={m} k={k}");
        }
    }
    pass(2, "round-sphere indices (4k-2)(m-1)", started, "m in {2,3}, k in 1..=4, exact");
}

#[test]
fn acceptance_3_katok_three_sphere_indices() {
    let started = Instant::now();
    let field = katok_field();
    let mut records = dynamics::katok_closed_geodesics(&field).unwrap();
    for rec in &mut records {
        morse::annotate_record(&field, rec).unwrap();
    }

    let c1p = by_label(&records, "c1+").index.unwrap();
    assert!(c1p.is_exact() && c1p.lo() == 2, "ind(c1+) = {c1p:?}, want 2");
    let c2p = by_label(&records, "c2+").index.unwrap();
    assert!(c2p.is_exact() && c2p.lo() == 4, "ind(c2+) = {c2p:?}, want 4");
    let c2m = by_label(&records, "c2-").index.unwrap();
    assert!(
        c2m.contains(4) || c2m.contains(6),
        "ind(c2-) = {c2m:?}, want a value in {{4, 6}}"
    );
    pass(3, "rotated three-sphere indices 2/4/{4,6}", started, "c1+ 2, c2+ 4, c2- in {4,6}");
}

#[test]
fn acceptance_4_prime_table_and_bound() {
    let started = Instant::now();
    assert_eq!(loopspace::smallest_admissible_prime(2).unwrap(), 3);
    assert_eq!(loopspace::smallest_admissible_prime(3).unwrap(), 5);
    assert_eq!(loopspace::smallest_admissible_prime(4).unwrap(), 5);
    let mut max_p = 0;
    for m in 2..=100_000u64 {
        let p = loopspace::smallest_admissible_prime(m).unwrap();
        assert!((3..=m + 2).contains(&p), "m={m} gave p={p}");
        max_p = max_p.max(p);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "prime sweep took {elapsed:.1}s, budget 5s");
    pass(4, "admissible primes bounded by m+2", started, &format!("max prime seen {max_p}"));
}

#[test]
fn acceptance_5_forced_sequence_saturates_the_quotient_ranks() {
    let started = Instant::now();
    for m in 2..=20u64 {
        assert_eq!(loopspace::betti_quotient(m, 4 * m - 4).unwrap(), 2, "m={m}");

        let p = loopspace::smallest_admissible_prime(m).unwrap();
        let seq = loopspace::forced_index_sequence(m, p).unwrap();
        let top = 4 * p * (m - 1);

        let mut v = std::collections::BTreeMap::new();
        for &val in &seq.values {
            *v.entry(val).or_insert(0u64) += 1;
        }
        let mut beta = std::collections::BTreeMap::new();
        for j in 0..=top + 2 {
            let b = loopspace::betti_quotient(m, j).unwrap();
            if b > 0 {
                beta.insert(j, b);
            }
        }
        for j in (0..=top).step_by(2) {
            assert_eq!(
                v.get(&j).copied().unwrap_or(0),
                beta.get(&j).copied().unwrap_or(0),
                "m={m} degree {j}"
            );
        }
        match loopspace::morse_inequalities(&v, &beta, top) {
            MorseCheck::Consistent(data) => assert!(data.q.is_empty(), "m={m}: q != 0"),
            other => panic!("m={m}: {other:?}"),
        }

        let r0 = ((2 * p - 1) * m) as usize;
        assert_eq!(seq.values[r0 - 1], top, "m={m} entry (2p-1)m");
        assert_eq!(seq.values[r0], top, "m={m} entry (2p-1)m + 1");
    }
    pass(5, "forced sequence matches quotient ranks", started, "m in 2..=20, q = 0, double jump");
}

#[test]
fn acceptance_6_half_gamma_counts_fail_at_the_doubled_degree() {
    let started = Instant::now();
    for m in 2..=20u64 {
        match loopspace::half_gamma_exclusion(m).unwrap() {
            MorseCheck::FailsAt { degree, .. } => {
                assert_eq!(degree, 4 * m - 4, "m={m}");
            }
            MorseCheck::Consistent(_) => panic!("m={m}: strictly increasing counts passed"),
        }
    }
    pass(6, "half-valued invariant excluded", started, "fails at degree 4m-4 for m in 2..=20");
}

#[test]
fn acceptance_7_divisibility_contradiction() {
    let started = Instant::now();
    for m in 2..=200u64 {
        let p = loopspace::smallest_admissible_prime(m).unwrap();
        let report = loopspace::contradiction_witness(m, p, 1000).unwrap();
        assert!(report.all_passed(), "m={m} p={p}");
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "witness sweep took {elapsed:.1}s, budget 30s");
    pass(7, "no coprime solution to the divisibility system", started, "m in 2..=200, bound 1000");
}

#[test]
fn acceptance_8_random_metric_invariants() {
    let started = Instant::now();
    let mut rng = finsler_geodesics::sampling::seeded_rng(0xacce97a);
    let mut checked = 0usize;
    while checked < 100 {
        let m = if rng.gen_bool(0.5) { 2 } else { 3 };
        let mut weights: Vec<u64> = Vec::new();
        while weights.len() < m {
            let w = rng.gen_range(1..=9u64);
            if weights.iter().all(|&v| gcd(v, w) == 1 && v < w) || (weights.is_empty() && w >= 1) {
                weights.push(w);
            } else {
                weights.clear();
            }
        }
        let a = a_invariant(&weights).unwrap();
        let mu = rng.gen_range(0.05..0.95) / a;
        let field = match KillingField::new(m, weights.clone(), mu) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let metric = ZermeloMetric::new(field.clone()).unwrap();

        let w = field.sup_norm();
        let lambda = (1.0 + w) / (1.0 - w);
        let distortion = 1.0 / (1.0 - w);
        assert!(
            distortion * distortion + 1e-12 >= lambda,
            "weights {weights:?} mu {mu}: D^2 < lambda"
        );
        assert!((metric.reversibility_exact() - lambda).abs() <= 1e-12);
        assert!((metric.distortion_exact() - distortion).abs() <= 1e-12);
        assert!((metric.distortion_claimed() - 1.0 / (1.0 - mu * a)).abs() <= 1e-12);

        let inv = metric.invariants(300, Exec::default()).unwrap();
        assert!(
            (inv.reversibility - lambda).abs() <= 1e-6,
            "weights {weights:?} mu {mu}: numeric lambda {} vs {lambda}",
            inv.reversibility
        );
        assert!(
            (inv.distortion - distortion).abs() <= 1e-6,
            "weights {weights:?} mu {mu}: numeric D {} vs {distortion}",
            inv.distortion
        );
        checked += 1;
    }
    pass(8, "random metric invariants", started, "100 metrics, numeric vs closed form at 1e-6");
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[test]
fn acceptance_9_integrator_hygiene() {
    let started = Instant::now();
    let field = katok_field();
    let records = dynamics::katok_closed_geodesics(&field).unwrap();

    // Long-run conservation of the dual norm along the flow.
    let long = dynamics::integrate_geodesic(&field, &records[0].initial, 20.0 * PI, 1e-12)
        .unwrap();
    let drift = long.max_energy_drift();
    assert!(drift <= 1e-9, "dual norm drifted by {drift:.3e} over 20 pi");

    // The numeric flow tracks the closed-form flow over one period of
    // every catalog orbit.
    let mut worst = 0.0f64;
    for rec in &records {
        let traj = dynamics::integrate_geodesic(&field, &rec.initial, rec.length, 1e-12).unwrap();
        for i in 0..=32 {
            let t = rec.length * i as f64 / 32.0;
            let numeric = traj.state_at(t).unwrap();
            let exact = dynamics::exact_flow(&field, &rec.initial, t);
            let err = (numeric.x() - exact.x())
                .norm()
                .hypot((numeric.p() - exact.p()).norm());
            worst = worst.max(err);
            assert!(err <= 1e-6, "{} at t={t}: flow mismatch {err:.3e}", rec.label);
        }
    }
    pass(9, "integrator hygiene", started, &format!("drift {drift:.2e}, worst flow error {worst:.2e}"));
}
