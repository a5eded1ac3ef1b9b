mod common;

use common::{random_jordan, NOISE};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use secest::gains::{
    assemble_gains, closed_loop_sigma, design_all, design_cost, spectral_bound, verify_inequality, DesignOptions, GainLayout,
    GainOutcome,
};
use secest::linalg::{CVector, C64};
use secest::model::{ModalMode, RawSystem, SystemModel};
use secest::sim::{build_ieee14, Ieee14Params};
use secest::{Error, Tolerances};

/// Dense scan of the scalar cost `(B_w + |L| B_v) / (1 - 3 |a - L|)`.
fn scalar_scan(a: f64) -> f64 {
    let steps = 200_000;
    let (lo, hi) = (a - 1.0 / 3.0, a + 1.0 / 3.0);
    (0..=steps)
        .map(|s| lo + (hi - lo) * s as f64 / steps as f64)
        .map(|l| design_cost(1, (a - l).abs(), l.abs(), NOISE))
        .fold(f64::INFINITY, f64::min)
}

fn scalar_model(a: f64) -> SystemModel {
    common::real_model(&DMatrix::from_element(1, 1, a), &DMatrix::from_element(1, 1, 1.0), 0, ModalMode::AlreadyJordan)
}

#[test]
fn scalar_design_matches_dense_scan() {
    for a in [0.5, 0.9, -0.3, 0.05] {
        let model = scalar_model(a);
        let outcomes = design_all(&model, &DesignOptions::default());
        let GainOutcome::Designed(d) = &outcomes[0] else { panic!("scalar design is always feasible") };
        let scan = scalar_scan(a);
        assert!((d.cost - scan).abs() <= 1e-3 * scan, "a={a}: {} vs {scan}", d.cost);
    }
    let gains = assemble_gains(&scalar_model(0.5), &design_all(&scalar_model(0.5), &DesignOptions::default()), None, false).unwrap();
    assert!((gains.gamma() - 6e-3).abs() < 6e-5);
    assert!((gains.detector.thresholds[0] - 2.0 * gains.gamma()).abs() < 1e-15);
}

#[test]
fn benchmark_grid_needs_fallback_gains() {
    let system = build_ieee14(&Ieee14Params::default(), 6, Tolerances::default()).unwrap();
    let outcomes = design_all(&system.model, &DesignOptions::default());
    assert!(outcomes.iter().all(|o| matches!(o, GainOutcome::Infeasible { .. })));
    assert!(matches!(assemble_gains(&system.model, &outcomes, None, false), Err(Error::Infeasible { .. })));
    assert!(matches!(assemble_gains(&system.model, &outcomes, None, true), Err(Error::InvalidParameter(_))));
    let gains = assemble_gains(&system.model, &outcomes, Some(0.5), true).unwrap();
    assert!(gains.gamma_overridden);
    assert_eq!(gains.infeasible().count(), 56);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn designs_meet_their_own_gamma(seed in any::<u64>(), n in 1usize..4, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_jordan(&mut rng, n, m, 0.3);
        let raw = RawSystem::new(sys.a, sys.c, NOISE, 1.0).unwrap();
        let Ok(model) = SystemModel::new(raw, ModalMode::AlreadyJordan, 0, Tolerances::default()) else {
            return Ok(());
        };
        let opts = DesignOptions { starts: 3, evals_per_start: 600, alpha_grid: 20, seed };
        for (dec, outcome) in model.decompositions.iter().zip(design_all(&model, &opts)) {
            match outcome {
                GainOutcome::Designed(d) => {
                    prop_assert!(d.sigma < spectral_bound(dec.dim()));
                    prop_assert!((closed_loop_sigma(&dec.a_tilde, &dec.c_tilde, &d.gain) - d.sigma).abs() < 1e-9);
                    prop_assert!(verify_inequality(&d.gain, d.cost, &dec.a_tilde, &dec.c_tilde, NOISE));
                    // any larger gamma also works
                    prop_assert!(verify_inequality(&d.gain, 2.0 * d.cost, &dec.a_tilde, &dec.c_tilde, NOISE));
                    prop_assert!(!verify_inequality(&d.gain, 0.5 * d.cost, &dec.a_tilde, &dec.c_tilde, NOISE));
                }
                GainOutcome::Infeasible { sigma_star, bound } => prop_assert!(sigma_star >= bound * (1.0 - 1e-6)),
                GainOutcome::Unobserving => prop_assert_eq!(dec.dim(), 0),
            }
        }
    }

    #[test]
    fn inequality_is_monotone_in_gamma(sigma_scale in 0.0f64..1.0, gamma in 1e-3f64..10.0, factor in 1.0f64..100.0, l in -1.0f64..1.0) {
        let a = secest::linalg::to_complex(&DMatrix::from_element(1, 1, sigma_scale));
        let c = secest::linalg::to_complex(&DMatrix::from_element(1, 1, 1.0));
        let gain = CVector::from_element(1, C64::new(l, 0.0));
        if verify_inequality(&gain, gamma, &a, &c, NOISE) {
            prop_assert!(verify_inequality(&gain, gamma * factor, &a, &c, NOISE));
        }
    }

    #[test]
    fn conjugate_layout_round_trips(theta in proptest::collection::vec(-5.0f64..5.0, 4)) {
        // two conjugate states 0 <-> 1 and a real pair 2, 3
        let layout = GainLayout::conjugate_symmetric(&[1, 0, 2, 3]);
        let l = layout.unpack(&theta);
        prop_assert_eq!(l[0], l[1].conj());
        prop_assert_eq!(l[2].im, 0.0);
        prop_assert_eq!(layout.unpack(&layout.pack(&l)), l);
    }
}
