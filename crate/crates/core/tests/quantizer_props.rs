use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crowdtop::model::QualityPrior;
use crowdtop::quantizer::{
    lloyd_design, order_statistic_density, uniform_design, AnswerDensity, ContinuousPrior, DensityKind, QuantizerSpec,
};

fn spec() -> impl Strategy<Value = QuantizerSpec> {
    prop::collection::btree_set(-1000i32..1000, 1..12).prop_map(|reps| {
        QuantizerSpec::from_representatives(reps.into_iter().map(|r| r as f64 / 37.0).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn quantization_is_idempotent(q in spec(), x in -40.0f64..40.0) {
        let once = q.quantize(x).unwrap();
        prop_assert_eq!(q.quantize(once).unwrap(), once);
        prop_assert!(q.representatives().contains(&once));
    }

    #[test]
    fn table_round_trips(q in spec()) {
        let back = QuantizerSpec::from_table(&q.to_table()).unwrap();
        prop_assert_eq!(back, q);
    }

    #[test]
    fn uniform_design_cells_are_equal(lo in -5.0f64..0.0, width in 0.1f64..10.0, levels in 1usize..40) {
        let q = uniform_design(lo, lo + width, levels).unwrap();
        let w = q.representatives();
        prop_assert_eq!(w.len(), levels);
        for pair in w.windows(2) {
            prop_assert!((pair[1] - pair[0] - width / levels as f64).abs() < 1e-9);
        }
    }
}

fn gaussian_scenario() -> QualityPrior {
    QualityPrior::gaussian(64, 0.0, 3.0)
}

#[test]
fn generic_density_is_the_flat_mixture() {
    let generic = AnswerDensity::for_scenario(DensityKind::Generic, &gaussian_scenario(), 1.0).unwrap();
    let flat = AnswerDensity::for_scenario(DensityKind::Weighted(1.0), &gaussian_scenario(), 1.0).unwrap();
    for k in 0..400 {
        let x = -14.0 + 28.0 * k as f64 / 399.0;
        assert!((generic.pdf(x) - flat.pdf(x)).abs() < 1e-8, "x = {x}");
    }
}

#[test]
fn top_only_density_is_the_first_order_statistic() {
    let q = ContinuousPrior::Gaussian { mean: 0.0, std: 3.0 };
    let mut weights = vec![0.0; 64];
    weights[0] = 1.0;
    let top = AnswerDensity::for_scenario(DensityKind::TopOnly, &gaussian_scenario(), 1.0).unwrap();
    let mix = AnswerDensity::order_statistic_mixture(&q, &weights, 1.0).unwrap();
    for k in 0..400 {
        let x = -14.0 + 28.0 * k as f64 / 399.0;
        assert!((top.pdf(x) - mix.pdf(x)).abs() < 1e-8, "x = {x}");
    }
}

#[test]
fn order_statistic_textbook_cases() {
    let g = ContinuousPrior::Gaussian { mean: 0.5, std: 2.0 };
    assert!((order_statistic_density(&g, 1, 1, 0.3).unwrap() - g.pdf(0.3)).abs() < 1e-15);
    let u = ContinuousPrior::Uniform { lo: 0.0, hi: 1.0 };
    for x in [0.1, 0.5, 0.9] {
        assert!((order_statistic_density(&u, 1, 2, x).unwrap() - 2.0 * x).abs() < 1e-12);
        assert!((order_statistic_density(&u, 2, 2, x).unwrap() - 2.0 * (1.0 - x)).abs() < 1e-12);
    }
    assert!(order_statistic_density(&u, 0, 2, 0.5).is_err());
    assert!(order_statistic_density(&u, 3, 2, 0.5).is_err());
}

#[test]
fn maximum_of_256_matches_simulation() {
    let sd = 3.0;
    let q = ContinuousPrior::Gaussian { mean: 0.0, std: sd };
    // Mean of the largest order statistic by a fine Riemann sum.
    let (lo, hi, steps) = (-30.0, 30.0, 200_000);
    let h = (hi - lo) / steps as f64;
    let analytic: f64 = (0..steps)
        .map(|k| {
            let x = lo + (k as f64 + 0.5) * h;
            x * order_statistic_density(&q, 1, 256, x).unwrap() * h
        })
        .sum();
    let trials = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let maxima: Vec<f64> = (0..trials)
        .map(|_| (0..256).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mean = maxima.iter().sum::<f64>() / trials as f64;
    let var = maxima.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let se = (var / trials as f64).sqrt();
    assert!((mean - analytic).abs() < 4.0 * se, "{mean} vs {analytic} (se {se})");
}

#[test]
fn lloyd_distortion_never_rises() {
    let prior = QualityPrior::gaussian(256, 0.0, 3.0);
    for kind in [DensityKind::Generic, DensityKind::TopOnly, DensityKind::Weighted(0.5)] {
        let d = AnswerDensity::for_scenario(kind, &prior, 1.0).unwrap();
        for levels in [2, 8, 32] {
            let (q, report) = lloyd_design(&d, levels, 1e-10, 20_000).unwrap();
            assert!(report.converged, "{kind:?} L={levels}");
            for pair in report.mse_history.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-12, "{kind:?} L={levels}");
            }
            // Centroid condition at the fixed point.
            let z = q.thresholds();
            for (l, w) in q.representatives().iter().enumerate() {
                let [m0, m1, _] = d.moments(z[l], z[l + 1]);
                assert!((m1 / m0 - w).abs() < 1e-6, "{kind:?} L={levels} cell {l}");
            }
        }
    }
}

#[test]
fn lloyd_beats_uniform_on_its_design_density() {
    let d = AnswerDensity::for_scenario(DensityKind::Weighted(0.5), &QualityPrior::gaussian(256, 0.0, 3.0), 1.0).unwrap();
    let (lloyd, _) = lloyd_design(&d, 32, 1e-10, 5000).unwrap();
    let uniform = uniform_design(-11.0, 11.0, 32).unwrap();
    assert!(d.mse(&lloyd) < d.mse(&uniform));
}

#[test]
fn design_is_a_pure_function() {
    let d = AnswerDensity::for_scenario(DensityKind::Weighted(0.5), &gaussian_scenario(), 1.0).unwrap();
    let a = lloyd_design(&d, 8, 1e-9, 5000).unwrap().0;
    let b = lloyd_design(&d, 8, 1e-9, 5000).unwrap().0;
    assert_eq!(a, b);
}
