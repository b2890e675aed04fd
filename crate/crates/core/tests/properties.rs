use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svetlichny::oracle::{angle_objective, AngleVector};
use svetlichny::qstate::{classify_xtype, pauli_tensor, XTYPE_TOL};
use svetlichny::spacetime::{svetlichny_schwarzschild, SchwarzschildScenario};
use svetlichny::svetlichny::{expectation, nonlocality_measure, svetlichny_xtype};
use svetlichny::sweep::{format_sig, Axis};
use svetlichny::{maximize, DensityOperator, Execution, OracleConfig, XTypeState, S_MAX};

fn xstate(seed: u64) -> XTypeState {
    XTypeState::random(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn quick_oracle(seed: u64) -> OracleConfig {
    OracleConfig {
        restarts: 4,
        rng_seed: seed,
        execution: Execution::Sequential,
        ..OracleConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_json_round_trips(seed in any::<u64>()) {
        let rho = xstate(seed).to_density();
        let back: DensityOperator = serde_json::from_str(&serde_json::to_string(&rho).unwrap()).unwrap();
        prop_assert_eq!(back.max_abs_diff(&rho), 0.0);
    }

    #[test]
    fn xtype_classification_round_trips(seed in any::<u64>()) {
        let x = xstate(seed);
        let back = classify_xtype(&x.to_density(), XTYPE_TOL).unwrap();
        prop_assert_eq!(back.pair_index(), x.pair_index());
        prop_assert!((back.pair_value() - x.pair_value()).norm() < 1e-15);
    }

    #[test]
    fn pauli_tensor_reconstructs_state(seed in any::<u64>()) {
        let rho = xstate(seed).to_density();
        prop_assert!(pauli_tensor(&rho).reconstruct().max_abs_diff(&rho) < 1e-14);
    }

    #[test]
    fn closed_form_stays_in_range(seed in any::<u64>()) {
        let r = svetlichny_xtype(&xstate(seed)).unwrap();
        prop_assert!(r.value >= 0.0 && r.value <= S_MAX + 1e-12);
        prop_assert!((0.0..=1.0).contains(&r.measure));
        prop_assert_eq!(r.measure, nonlocality_measure(r.value).unwrap());
    }

    #[test]
    fn random_settings_never_beat_closed_form(seed in any::<u64>(), angles in prop::array::uniform12(-10.0..10.0f64)) {
        let x = xstate(seed);
        let t = pauli_tensor(&x.to_density());
        let v = angle_objective(&t, &AngleVector::from_flat(&angles).unwrap());
        prop_assert!(v <= svetlichny_xtype(&x).unwrap().value + 1e-9);
    }

    #[test]
    fn format_sig_keeps_twelve_digits(v in prop::num::f64::NORMAL) {
        let back: f64 = format_sig(v).parse().unwrap();
        prop_assert!((back - v).abs() <= 1e-11 * v.abs());
    }

    #[test]
    fn axis_text_round_trips(min in -5.0..5.0f64, span in 1e-3..5.0f64, steps in 2usize..500) {
        let axis = Axis::new("alpha", min, min + span, steps).unwrap();
        let back: Axis = axis.to_string().parse().unwrap();
        prop_assert_eq!(back, axis);
    }

    #[test]
    fn schwarzschild_value_falls_with_temperature(
        alpha in 0.0..=1.0f64,
        t in 1e-3..3.0f64,
        dt in 1e-3..1.0f64,
        n in 1u32..=3,
    ) {
        let at = |t| {
            let s = SchwarzschildScenario::with_temperature(alpha, 1.0, t, n, n, 0).unwrap();
            svetlichny_schwarzschild(&s).unwrap().value
        };
        prop_assert!(at(t + dt) <= at(t) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn oracle_is_sound_and_replayable(seed in any::<u64>()) {
        let x = xstate(seed);
        let rho = x.to_density();
        let o = maximize(&rho, &quick_oracle(seed)).unwrap();
        prop_assert!(o.value <= svetlichny_xtype(&x).unwrap().value + 1e-6);
        prop_assert!((expectation(&rho, &o.settings).unwrap() - o.value).abs() < 1e-9);
    }
}
