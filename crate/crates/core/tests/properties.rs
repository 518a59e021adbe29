use proptest::prelude::*;
use secrange::attack::{attack_fidelity, bound_report, AttackStrategy};
use secrange::detection::tv::tv_reduced;
use secrange::detection::ReducedDistribution;
use secrange::metrology::{fi_closed_form_measurement, qfi_finite_difference, qfi_general_expression};
use secrange::model::{make_balanced_u, make_reflection_u};
use secrange::oracle::{certify, oracle_overlap, GridSpec};
use secrange::{Complex, Ensemble, ProbeSpec};

fn probe(n: u32, beta: f64, t: f64, phase: f64) -> ProbeSpec {
    ProbeSpec::new(n, beta, Complex::new(t.cos(), 0.0), Complex::from_polar(t.sin(), phase)).unwrap()
}

#[test]
fn oracle_certification_small_run() {
    for row in certify(5, 11).unwrap() {
        assert!(row.passed(), "{row:?}");
    }
}

#[test]
fn reflection_attack_matches_quadrature() {
    let u = make_reflection_u();
    let p = probe(2, 1.0, 0.4, 0.9);
    let s = AttackStrategy::reflection_mimic();
    let f = attack_fidelity(&u, &s, &p, 0.1, 0.3).unwrap();
    let grid = GridSpec::for_positions(1.0, 2, &[0.1, 0.3]);
    let o = oracle_overlap(&u, &secrange::attack::effective_u(&s).m, &p, 0.1, 0.3, &grid).unwrap();
    assert!((f - o.norm_sqr()).abs() < 1e-8);
    assert!((attack_fidelity(&u, &s, &p, 0.2, 0.2).unwrap() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn measurement_fi_never_exceeds_qfi(n in 1u32..16, beta in 0.2f64..3.0, t in 0.0f64..1.5, ph in 0.0f64..6.2, y in -1.0f64..1.0) {
        let p = probe(n, beta, t, ph);
        let q = qfi_general_expression(&make_balanced_u(), &p, y).unwrap().value;
        prop_assert!(fi_closed_form_measurement(&p).value <= q * (1.0 + 1e-9));
    }

    #[test]
    fn general_expression_tracks_finite_difference(n in 1u32..10, beta in 0.3f64..2.0, t in 0.0f64..1.5, ph in 0.0f64..6.2, y in -1.0f64..1.0) {
        let p = probe(n, beta, t, ph);
        let u = make_balanced_u();
        let closed = qfi_general_expression(&u, &p, y).unwrap().value;
        let fd = qfi_finite_difference(&u, &p, y, 1e-3 / (beta * n as f64)).unwrap().value;
        prop_assert!((closed - fd).abs() <= 1e-5 * closed.abs().max(1.0), "{closed} vs {fd}");
    }

    #[test]
    fn forgery_bounds_are_ordered(n in 1u32..6, t1 in 0.0f64..1.5, t2 in 0.0f64..1.5, w in 0.1f64..0.9, ph in 0.0f64..6.2) {
        let ens = Ensemble::new(vec![(w, probe(n, 1.0, t1, 0.0)), (1.0 - w, probe(n, 1.0, t2, ph))]).unwrap();
        let b = bound_report(&ens, &make_balanced_u(), 0.0).unwrap();
        prop_assert!(b.p2_lower <= b.p2_exact_for_measurement + 1e-9);
        prop_assert!(b.p2_exact_for_measurement <= b.p2_upper + 1e-9);
        prop_assert!(b.p1_upper <= 1.0 + 1e-12);
    }

    #[test]
    fn reduced_tv_is_a_metric_value(t1 in 0.0f64..1.5, t2 in 0.0f64..1.5, y in -0.5f64..0.5) {
        let a = ReducedDistribution::honest(&probe(3, 1.0, t1, 0.0), y).unwrap();
        let b = ReducedDistribution::honest(&probe(3, 1.0, t2, 0.0), y).unwrap();
        let ab = tv_reduced(&a, &b).unwrap();
        let ba = tv_reduced(&b, &a).unwrap();
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-7);
        prop_assert!(tv_reduced(&a, &a).unwrap() < 1e-7);
    }
}
