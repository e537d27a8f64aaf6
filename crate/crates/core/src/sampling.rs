//! Prior and posterior sampling.
//!
//! All samplers take an explicit seed and use a ChaCha generator, so a given
//! seed always reproduces the same draws.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kalman::{kalman_filter, reconstruct, ObservationSequence};
use crate::linalg::{self, block_mul_vec, Block};
use crate::state_space::DiscreteStateSpace;

fn standard_normal(rng: &mut ChaCha8Rng, out: &mut DVector<f64>) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}

/// A draw from the generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSample {
    /// Noisy observations `y_k = H x_k + σ_y ε_k`.
    pub observations: Vec<f64>,
    /// Noise-free signal `H x_k`.
    pub signal: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

/// Draws `len` steps from `x₀ ~ N(0, P∞)`, `x_{k+1} = A x_k + q_k`.
pub fn sample_prior(dss: &DiscreteStateSpace, len: usize, obs_noise_variance: f64, seed: u64) -> Result<PriorSample> {
    if len == 0 {
        return Err(Error::Domain("prior sample needs at least one step".into()));
    }
    if !(obs_noise_variance.is_finite() && obs_noise_variance >= 0.0) {
        return Err(Error::Domain(format!(
            "observation noise variance must be non-negative, got {obs_noise_variance}"
        )));
    }
    let m = dss.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = linalg::psd_factor(&dss.pinf);
    let noise_factors: Vec<Block> = dss
        .q_blocks
        .iter()
        .map(|b| Block {
            offset: b.offset,
            mat: linalg::psd_factor(&b.mat),
        })
        .collect();
    let noise_sd = obs_noise_variance.sqrt();

    let mut xi = DVector::zeros(m);
    let mut shock = DVector::zeros(m);
    standard_normal(&mut rng, &mut xi);
    let mut x = &init * &xi;
    let mut next = DVector::zeros(m);
    let mut out = PriorSample {
        observations: Vec::with_capacity(len),
        signal: Vec::with_capacity(len),
        states: Vec::with_capacity(len),
    };
    for k in 0..len {
        if k > 0 {
            block_mul_vec(&dss.a_blocks, &x, &mut next);
            standard_normal(&mut rng, &mut xi);
            block_mul_vec(&noise_factors, &xi, &mut shock);
            next += &shock;
            std::mem::swap(&mut x, &mut next);
        }
        let f = dss.observe(&x);
        let eps: f64 = StandardNormal.sample(&mut rng);
        out.signal.push(f);
        out.observations.push(f + noise_sd * eps);
        out.states.push(x.clone());
    }
    Ok(out)
}

/// Joint posterior draws of the noise-free signal `H x_k` by forward
/// filtering, backward sampling.
///
/// Keeps all filter covariances, so memory is `O(T M²)`; see
/// [`sample_posterior_lean`] for long signals with many channels.
pub fn sample_posterior(
    dss: &DiscreteStateSpace,
    obs: &ObservationSequence,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let filt = kalman_filter(dss, obs)?;
    let n = filt.len();
    let m = dss.state_dim();

    // Backward conditionals x_k | x_{k+1} ~ N(m_k + J_k (x_{k+1} − m⁻_{k+1}), C_k).
    let mut gains: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut factors: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        if k + 1 == n {
            gains.push(DMatrix::zeros(0, 0));
            factors.push(linalg::psd_factor(&filt.filtered_covs[k]));
            continue;
        }
        let p = &filt.filtered_covs[k];
        let ap = &dss.a * p;
        let pred = &filt.predicted_covs[k + 1];
        let gain_t = match pred.clone().cholesky() {
            Some(chol) => chol.solve(&ap),
            None => pred
                .clone()
                .pseudo_inverse(1e-12 * pred.norm())
                .map_err(|_| Error::SingularCovariance { step: k + 1, attempts: 0 })?
                * &ap,
        };
        let cond = p - gain_t.transpose() * &ap;
        gains.push(gain_t.transpose());
        factors.push(linalg::psd_factor(&cond));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi = DVector::zeros(m);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut path = vec![0.0; n];
        standard_normal(&mut rng, &mut xi);
        let mut x = &filt.filtered_means[n - 1] + &factors[n - 1] * &xi;
        path[n - 1] = dss.observe(&x);
        for k in (0..n - 1).rev() {
            standard_normal(&mut rng, &mut xi);
            let mean = &filt.filtered_means[k] + &gains[k] * (&x - &filt.predicted_means[k + 1]);
            x = mean + &factors[k] * &xi;
            path[k] = dss.observe(&x);
        }
        samples.push(path);
    }
    Ok(samples)
}

/// Posterior draws of `H x_k` with `O(T M)` memory.
///
/// Uses the simulation-smoother identity: if `(x⁺, y⁺)` is a prior draw
/// masked like `y`, then `H x⁺ + E[Hx | y − y⁺]` is a posterior draw.
pub fn sample_posterior_lean(
    dss: &DiscreteStateSpace,
    obs: &ObservationSequence,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n = obs.len();
    let mut samples = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let prior = sample_prior(dss, n, obs.obs_noise_variance(), seed.wrapping_add(s as u64))?;
        let diff: Vec<f64> = obs
            .values()
            .iter()
            .zip(&prior.observations)
            .zip(obs.missing_mask())
            .map(|((y, y_plus), &missing)| if missing { 0.0 } else { y - y_plus })
            .collect();
        let diff_obs = ObservationSequence::new(diff, obs.missing_mask().to_vec(), obs.obs_noise_variance())?;
        let correction = reconstruct(dss, &diff_obs, false)?;
        samples.push(prior.signal.iter().zip(&correction.mean).map(|(a, b)| a + b).collect());
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::{smooth, CovarianceStorage};
    use crate::kernel::{MaternComponent, MaternOrder, SpectralMixtureModel};
    use std::f64::consts::PI;

    fn model(var: f64) -> SpectralMixtureModel {
        SpectralMixtureModel::new(
            vec![
                MaternComponent::new(MaternOrder::Half, var, 0.01, 2.0 * PI * 40.0).unwrap(),
                MaternComponent::new(MaternOrder::FiveHalves, var, 0.02, 2.0 * PI * 120.0).unwrap(),
            ],
            0.01,
            500.0,
        )
        .unwrap()
    }

    #[test]
    fn prior_is_deterministic_per_seed() {
        let dss = DiscreteStateSpace::from_model(&model(1.0)).unwrap();
        let a = sample_prior(&dss, 100, 0.01, 7).unwrap();
        let b = sample_prior(&dss, 100, 0.01, 7).unwrap();
        let c = sample_prior(&dss, 100, 0.01, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn vanishing_variance_gives_silence() {
        let dss = DiscreteStateSpace::from_model(&model(1e-30)).unwrap();
        let s = sample_prior(&dss, 50, 0.0, 3).unwrap();
        assert!(s.observations.iter().all(|y| y.abs() < 1e-12));
    }

    #[test]
    fn zero_noise_posterior_reproduces_data() {
        let m = model(1.0).with_obs_noise_variance(0.0).unwrap();
        let dss = DiscreteStateSpace::from_model(&m).unwrap();
        let truth = sample_prior(&dss, 60, 0.0, 11).unwrap();
        let obs = ObservationSequence::fully_observed(truth.observations.clone(), 0.0).unwrap();
        for path in sample_posterior(&dss, &obs, 5, 1).unwrap() {
            for (a, b) in path.iter().zip(&truth.observations) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn posterior_moments_match_smoother() {
        let m = model(1.0);
        let dss = DiscreteStateSpace::from_model(&m).unwrap();
        let truth = sample_prior(&dss, 200, 0.01, 5).unwrap();
        let missing: Vec<bool> = (0..200).map(|k| (60..90).contains(&k) || (150..156).contains(&k)).collect();
        let obs = ObservationSequence::new(truth.observations.clone(), missing, 0.01).unwrap();
        let post = smooth(&dss, &obs, CovarianceStorage::Full).unwrap();
        let n = 500;
        for samples in [
            sample_posterior(&dss, &obs, n, 99).unwrap(),
            sample_posterior_lean(&dss, &obs, n, 99).unwrap(),
        ] {
            let mut var_ratios = Vec::new();
            for k in 0..200 {
                let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n as f64;
                let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let post_var = post.reconstruction_var[k] - 0.01;
                let sd = post_var.sqrt();
                assert!(
                    (mean - post.reconstruction_mean[k]).abs() < 4.0 * sd / (n as f64).sqrt(),
                    "step {k}: {mean} vs {}",
                    post.reconstruction_mean[k]
                );
                var_ratios.push(var / post_var);
            }
            // Per-step sample variances of 500 draws scatter by about 6%, so a
            // 20% band is a 3.2 sd event and a few of 200 steps may cross it.
            let outside = var_ratios.iter().filter(|r| (**r - 1.0).abs() >= 0.2).count();
            assert!(outside <= 3, "{outside} steps outside the 20% band");
            let mean_ratio = var_ratios.iter().sum::<f64>() / var_ratios.len() as f64;
            assert!((mean_ratio - 1.0).abs() < 0.05, "mean variance ratio {mean_ratio}");
        }
    }
}
