use nalgebra::DMatrix;
use proptest::prelude::*;

use crowdtop::model::{Answer, AnswerLog};
use crowdtop::posterior::{batch_joint, Posterior, PriorSpec};

fn answer(object: usize, worker: usize, value: f64) -> Answer {
    Answer { object, worker, round: 0, raw: value, reported: value }
}

/// Distinct `(object, worker)` pairs with values, for `n` objects.
fn answers(n: usize) -> impl Strategy<Value = Vec<Answer>> {
    prop::collection::btree_set((0..n, 0usize..4), 1..10).prop_flat_map(|pairs| {
        let pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        let len = pairs.len();
        (Just(pairs), prop::collection::vec(-3.0f64..3.0, len), Just(()))
            .prop_map(|(pairs, values, _)| pairs.iter().zip(values).map(|(&(o, w), v)| answer(o, w, v)).collect())
    })
}

fn prior(bias: bool) -> PriorSpec {
    let p = PriorSpec::gaussian_quality(0.2, 1.3);
    if bias {
        p.with_bias(0.1, 0.7)
    } else {
        p
    }
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.amax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn answer_order_does_not_matter(mut list in answers(4), bias in any::<bool>(), seed in any::<u64>()) {
        let mut a = Posterior::new(prior(bias), 4, 0.8).unwrap();
        a.update(&list).unwrap();
        // Deterministic shuffle driven by the generated seed.
        let mut s = seed;
        for k in (1..list.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            list.swap(k, (s >> 33) as usize % (k + 1));
        }
        let mut b = Posterior::new(prior(bias), 4, 0.8).unwrap();
        for chunk in list.chunks(3) {
            b.update(chunk).unwrap();
        }
        let (ma, mb) = (a.quality_marginal().unwrap(), b.quality_marginal().unwrap());
        for i in 0..4 {
            prop_assert!((ma.mean[i] - mb.mean[i]).abs() < 1e-9);
            for j in 0..4 {
                prop_assert!((ma.covariance(i, j) - mb.covariance(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn every_answer_shrinks_variances(list in answers(3), bias in any::<bool>()) {
        let mut p = Posterior::new(prior(bias), 3, 0.5).unwrap();
        let mut before = p.quality_marginal().unwrap();
        for a in &list {
            p.update(std::slice::from_ref(a)).unwrap();
            let after = p.quality_marginal().unwrap();
            for i in 0..3 {
                prop_assert!(after.variance(i) <= before.variance(i) + 1e-12);
            }
            before = after;
        }
    }

    #[test]
    fn incremental_matches_batch(list in answers(3), bias in any::<bool>()) {
        let mut p = Posterior::new(prior(bias), 3, 1.1).unwrap();
        for a in &list {
            p.update(std::slice::from_ref(a)).unwrap();
        }
        let mut log = AnswerLog::new(3);
        for a in &list {
            log.push(*a).unwrap();
        }
        let reference = batch_joint(prior(bias), &log, 1.1).unwrap();
        let joint = p.joint().unwrap();
        prop_assert_eq!(&joint.workers, &reference.workers);
        prop_assert!((&joint.mean - &reference.mean).amax() < 1e-8);
        prop_assert!(max_abs(&(&joint.cov - &reference.cov)) < 1e-8);
    }
}

#[test]
fn single_answer_conjugate_update() {
    let mut p = Posterior::new(PriorSpec::gaussian_quality(1.0, 2.0), 2, 1.0).unwrap();
    p.update(&[answer(0, 0, 3.0)]).unwrap();
    let m = p.quality_marginal().unwrap();
    // Precision 1/4 + 1, mean (1/4 * 1 + 3) / (5/4).
    assert!((m.variance(0) - 0.8).abs() < 1e-12);
    assert!((m.mean[0] - 2.6).abs() < 1e-12);
    assert!((m.mean[1] - 1.0).abs() < 1e-12);
    assert!((m.variance(1) - 4.0).abs() < 1e-12);
}

#[test]
fn shared_worker_correlates_objects() {
    let prior = PriorSpec::gaussian_quality(0.0, 1.0).with_bias(0.0, 1.0);
    let mut p = Posterior::new(prior, 3, 0.5).unwrap();
    p.update(&[answer(0, 7, 1.0), answer(1, 7, 2.0)]).unwrap();
    let m = p.quality_marginal().unwrap();
    assert!(m.correlation(0, 1) > 0.0);
    assert_eq!(m.covariance(0, 2), 0.0);
    assert_eq!(m.variance(2), 1.0);
}

#[test]
fn flat_prior_without_answers_is_underdetermined() {
    let p = Posterior::new(PriorSpec::unknown_quality(), 2, 1.0).unwrap();
    assert!(p.quality_marginal().is_err());
    assert!(Posterior::new(PriorSpec::unknown_quality(), 2, 0.0).is_err());
}
