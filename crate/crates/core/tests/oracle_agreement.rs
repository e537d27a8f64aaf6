//! The state-space machinery against dense Gaussian-process computations.

use std::f64::consts::PI;

use probfb::oracle::{dense_gp_loglik, dense_gp_posterior, DenseRoute};
use probfb::{
    assemble_model_sde, log_marginal_likelihood, reconstruct, smooth, CovarianceStorage, DiscreteStateSpace,
    MaternComponent, MaternOrder, ObservationSequence, SpectralMixtureModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_model(rng: &mut ChaCha8Rng, order: MaternOrder) -> SpectralMixtureModel {
    let fs = 10f64.powf(rng.gen_range(2.0..4.5));
    let dt = 1.0 / fs;
    let d = rng.gen_range(1..=5);
    let comps = (0..d)
        .map(|_| {
            let ell = dt * 10f64.powf(rng.gen_range(0.3..2.0));
            let w = rng.gen_range(0.0..1.0) * PI * fs;
            MaternComponent::new(order, 10f64.powf(rng.gen_range(-1.0..0.5)), ell, w).unwrap()
        })
        .collect();
    SpectralMixtureModel::new(comps, 10f64.powf(rng.gen_range(-2.5..-0.5)), fs).unwrap()
}

fn random_obs(rng: &mut ChaCha8Rng, model: &SpectralMixtureModel, masked: bool) -> ObservationSequence {
    let t = rng.gen_range(20..=200);
    let y: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
    let mut mask = vec![false; t];
    if masked {
        let start = rng.gen_range(0..t / 2);
        let len = rng.gen_range(1..=t / 3);
        mask[start..(start + len).min(t)].fill(true);
        for _ in 0..5 {
            mask[rng.gen_range(0..t)] = true;
        }
    }
    ObservationSequence::new(y, mask, model.obs_noise_variance()).unwrap()
}

#[test]
fn kalman_loglik_matches_dense_gp() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..30 {
        let order = MaternOrder::ALL[case % 3];
        let model = random_model(&mut rng, order);
        let obs = random_obs(&mut rng, &model, case % 2 == 1);
        let dss = DiscreteStateSpace::from_model(&model).unwrap();
        let kalman = log_marginal_likelihood(&dss, &obs).unwrap();
        let dense = dense_gp_loglik(&model, &obs, DenseRoute::Cholesky).unwrap();
        assert!((kalman - dense).abs() <= 1e-6 * dense.abs(), "case {case}: {kalman} vs {dense}");
    }
}

#[test]
fn dense_routes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..6 {
        let model = random_model(&mut rng, MaternOrder::ALL[case % 3]);
        let obs = random_obs(&mut rng, &model, true);
        let a = dense_gp_loglik(&model, &obs, DenseRoute::Cholesky).unwrap();
        let b = dense_gp_loglik(&model, &obs, DenseRoute::Eigen).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.abs(), "{a} vs {b}");
    }
}

#[test]
fn smoother_matches_dense_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..9 {
        let model = random_model(&mut rng, MaternOrder::ALL[case % 3]);
        let obs = random_obs(&mut rng, &model, true);
        let dss = DiscreteStateSpace::from_model(&model).unwrap();
        let (mean, var) = dense_gp_posterior(&model, &obs).unwrap();
        let scale = model.signal_variance().sqrt();
        for storage in [CovarianceStorage::Full, CovarianceStorage::Projected] {
            let post = smooth(&dss, &obs, storage).unwrap();
            for k in 0..obs.len() {
                assert!((post.reconstruction_mean[k] - mean[k]).abs() < 1e-6 * scale, "case {case} step {k}");
                let v = post.reconstruction_var[k] - obs.obs_noise_variance();
                assert!((v - var[k]).abs() < 1e-6 * scale * scale, "case {case} step {k}: {v} vs {}", var[k]);
            }
        }
        let lean = reconstruct(&dss, &obs, true).unwrap();
        for k in 0..obs.len() {
            assert!((lean.mean[k] - mean[k]).abs() < 1e-6 * scale);
        }
    }
}

#[test]
fn masked_steps_equal_dropping_them() {
    // A masked run inside a sequence matches the dense GP on the observed
    // subset, which is what dropping those samples means.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = random_model(&mut rng, MaternOrder::ThreeHalves);
    let dss = DiscreteStateSpace::from_model(&model).unwrap();
    let y: Vec<f64> = (0..150).map(|_| rng.sample(StandardNormal)).collect();
    let mut mask = vec![false; 150];
    mask[40..90].fill(true);
    let masked = ObservationSequence::new(y.clone(), mask.clone(), model.obs_noise_variance()).unwrap();
    // Garbage in the masked values must not matter.
    let mut noisy = y;
    for v in &mut noisy[40..90] {
        *v = 1e6;
    }
    let garbage = ObservationSequence::new(noisy, mask, model.obs_noise_variance()).unwrap();
    let a = log_marginal_likelihood(&dss, &masked).unwrap();
    let b = log_marginal_likelihood(&dss, &garbage).unwrap();
    let dense = dense_gp_loglik(&model, &masked, DenseRoute::Eigen).unwrap();
    assert_eq!(a, b);
    assert!((a - dense).abs() <= 1e-6 * dense.abs());
}

#[test]
fn sde_recovers_the_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..10 {
        let model = random_model(&mut rng, MaternOrder::ALL[case % 3]);
        let sde = assemble_model_sde(&model).unwrap();
        let span = 5.0 * model.components().iter().map(|c| c.lengthscale).fold(0.0, f64::max);
        for i in 0..200 {
            let tau = span * i as f64 / 199.0;
            let k = model.kernel(tau).unwrap();
            let from_sde = sde.covariance_at(tau);
            assert!(
                (k - from_sde).abs() <= 1e-8 * model.signal_variance(),
                "case {case} tau {tau}: {k} vs {from_sde}"
            );
        }
    }
}
