//! Property tests over randomized model parameters and positions.

use proptest::prelude::*;

use lord_core::information::{design_fim, mu};
use lord_core::pso::Encoding;
use lord_core::{DesignMeasure, MinEdDefinition, ThetaParams};

/// Parameters with both logistic factors alive over moderate dose ranges.
fn theta_strategy() -> impl Strategy<Value = ThetaParams> {
    (-9.0..-0.3f64, 0.0..8.0f64, 0.1..2.0f64, 0.1..2.0f64).prop_map(
        |(theta3, lift, theta2, theta4)| {
            ThetaParams::new(theta3 + lift, theta2, theta3, theta4).expect("valid by construction")
        },
    )
}

proptest! {
    #[test]
    fn outcome_probabilities_normalize(theta in theta_strategy(), d in -12.0..12.0f64) {
        let p = theta.outcome_probabilities(d).unwrap();
        for v in p.as_array() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let sum = p.neutral + p.success + p.toxicity;
        prop_assert!((sum - 1.0).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn neutral_decreases_toxicity_increases(theta in theta_strategy(), d in -8.0..8.0f64) {
        let step = 0.37;
        let a = theta.outcome_probabilities(d).unwrap();
        let b = theta.outcome_probabilities(d + step).unwrap();
        prop_assert!(b.neutral < a.neutral);
        prop_assert!(b.toxicity > a.toxicity);
    }

    #[test]
    fn mtd_inverts_toxicity(theta in theta_strategy(), gamma in 0.01..0.99f64) {
        let mtd = theta.mtd(gamma).unwrap();
        prop_assert!((theta.outcome_probabilities(mtd).unwrap().toxicity - gamma).abs() <= 1e-12);
    }

    #[test]
    fn mined_inverts_neutral_probability(theta in theta_strategy(), delta in 0.05..0.95f64) {
        let mined = theta.mined(MinEdDefinition::NeutralProbability(delta)).unwrap();
        prop_assert!((theta.outcome_probabilities(mined).unwrap().neutral - delta).abs() <= 1e-10);
    }

    #[test]
    fn obd_is_a_local_and_grid_maximum(theta in theta_strategy()) {
        let obd = theta.obd().unwrap();
        let at = |d: f64| theta.outcome_probabilities(d).unwrap().success;
        let peak = at(obd);
        for h in [1e-4, 1e-3, 1e-2] {
            prop_assert!(at(obd - h) <= peak + 1e-15);
            prop_assert!(at(obd + h) <= peak + 1e-15);
        }
        // Brute-force scan near the optimum.
        let mut best = (f64::NEG_INFINITY, obd);
        let mut d = obd - 3.0;
        while d <= obd + 3.0 {
            let v = at(d);
            if v > best.0 {
                best = (v, d);
            }
            d += 1e-3;
        }
        prop_assert!((best.1 - obd).abs() <= 1e-3 + 1e-9, "grid argmax {} vs {}", best.1, obd);
    }

    #[test]
    fn per_dose_information_is_psd_with_coupled_blocks(
        theta in theta_strategy(),
        d in -6.0..6.0f64,
    ) {
        let m = mu(d, &theta).unwrap().0;
        // Symmetry and the slope/intercept coupling of both blocks.
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(m[i][j], m[j][i]);
            }
        }
        prop_assert_eq!(m[0][1], d * m[0][0]);
        prop_assert_eq!(m[2][3], d * m[2][2]);
        // Diagonal blocks are PSD rank-1 outer products.
        prop_assert!(m[0][0] > 0.0 && m[2][2] > 0.0);
        prop_assert!((m[0][0] * m[1][1] - m[0][1] * m[0][1]).abs() <= 1e-12 * m[0][0] * m[1][1].max(1.0));
    }

    #[test]
    fn decoded_weights_stay_on_the_simplex(
        raw in prop::collection::vec(-5.0..5.0f64, 8),
        doses in prop::collection::vec(-2.0..6.0f64, 4),
    ) {
        let mut doses = doses;
        doses.sort_by(f64::total_cmp);
        doses.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        prop_assume!(doses.len() == 4);
        let enc = Encoding::DiscreteWeights { doses };
        let xi = enc.decode(&raw[..4]);
        prop_assert!(xi.weights().iter().all(|&w| w >= 0.0));
        let total: f64 = xi.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn two_point_designs_have_full_rank_information(
        theta in theta_strategy(),
        d1 in -4.0..0.0f64,
        gap in 0.5..4.0f64,
        w in 0.05..0.95f64,
    ) {
        let xi = DesignMeasure::new(vec![d1, d1 + gap], vec![w, 1.0 - w]).unwrap();
        let m = design_fim(&xi, &theta).unwrap();
        prop_assert!(m.ln_det().is_some());
    }
}
