mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use upal_core::data::{synth_pool, LabelMode, SyntheticModel, XLaw};
use upal_core::theory::{
    eigen_diagnostics, ewa_check, risk_decomposition_terms, unbiasedness_check,
    unbiasedness_check_with, Estimator, QuerySampler, UnbiasednessSetup,
};
use upal_core::{run_upal, Hypothesis, LossSpec, StopRule, UpalConfig};

fn small_model(d: usize) -> SyntheticModel {
    let beta = Hypothesis::new(DVector::from_fn(d, |i, _| 1.0 - 0.4 * i as f64)).unwrap();
    SyntheticModel::isotropic(beta, XLaw::BoundedUniformCube, 1.0, LabelMode::Regression).unwrap()
}

#[test]
fn logistic_estimator_is_unbiased_too() {
    let pool = common::classification_pool(10, 3, 6);
    let h = Hypothesis::from_slice(&[0.3, -0.2, 0.9]).unwrap();
    let r = unbiasedness_check(&pool, &h, &LossSpec::logistic(), 6, 5000, 2).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn unweighted_estimator_on_skewed_law_is_caught() {
    let draw = synth_pool(&small_model(3), 8, 1).unwrap();
    let h = Hypothesis::zeros(3);
    let loss = LossSpec::squared();
    // weight mass concentrated on the points with the smallest loss
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| draw.pool.label(a).abs().total_cmp(&draw.pool.label(b).abs()));
    let mut probs = vec![0.0; 8];
    for (rank, &i) in order.iter().enumerate() {
        probs[i] = 0.5f64.powi(rank as i32 + 1);
    }
    let setup = UnbiasednessSetup {
        rounds: 5,
        replicates: 20_000,
        seed: 4,
        sampler: QuerySampler::Fixed(probs.clone()),
        estimator: Estimator::Unweighted,
    };
    let biased = unbiasedness_check_with(&draw.pool, &h, &loss, &setup).unwrap();
    assert!(!biased.pass, "{biased:?}");
    let weighted = UnbiasednessSetup { estimator: Estimator::ImportanceWeighted, ..setup };
    assert!(unbiasedness_check_with(&draw.pool, &h, &loss, &weighted).unwrap().pass);
}

#[test]
fn ewa_matches_closed_form_in_three_dimensions() {
    let draw = synth_pool(&small_model(3), 15, 5).unwrap();
    let mut cfg = UpalConfig::new(15, LossSpec::squared(), 8);
    cfg.stop = StopRule::Rounds(12);
    let out = run_upal(&draw.pool, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..3 {
        let x0 = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let r = ewa_check(&draw.pool, &out.history, &x0, 200_000, k).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.effective_samples > 10_000.0);
    }
}

#[test]
fn decomposition_chain_holds_on_random_runs() {
    let d = 3;
    let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.5]);
    let beta = Hypothesis::from_slice(&[1.0, 0.5, -0.5]).unwrap();
    let model = SyntheticModel::new(beta, sigma, XLaw::Gaussian, 2.0, LabelMode::Regression).unwrap();
    for seed in 0..20u64 {
        let draw = synth_pool(&model, 30, seed).unwrap();
        let mut cfg = UpalConfig::new(30, LossSpec::squared(), seed);
        cfg.stop = StopRule::Rounds(40);
        let out = run_upal(&draw.pool, &cfg).unwrap();
        let r = risk_decomposition_terms(&draw.pool, &out.history, &draw.params, &draw.xi).unwrap();
        if r.sigz_invertible && r.sighat_invertible {
            assert_eq!(r.bound_holds, Some(true), "seed {seed}: {r:?}");
        }
        assert!(r.lam_min_j <= r.lam_max_j);
        assert_eq!(draw.params.beta.dim(), d);
    }
}

#[test]
fn whitened_gram_concentrates_for_large_pools() {
    // lambda(J)/n within [0.5, 1.5] in at least 95% of resamples
    let model = small_model(4);
    let mut misses = 0;
    for seed in 0..100u64 {
        let draw = synth_pool(&model, 2000, 500 + seed).unwrap();
        let e = eigen_diagnostics(draw.pool.points(), &draw.params.sigma).unwrap();
        let n = 2000.0;
        if e.lam_min_j / n < 0.5 || e.lam_max_j / n > 1.5 {
            misses += 1;
        }
    }
    assert!(misses <= 5, "{misses}");
}
