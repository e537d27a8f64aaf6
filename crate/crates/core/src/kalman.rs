//! Kalman filtering and smoothing on a [`DiscreteStateSpace`].
//!
//! Observations are scalar, so every update is a rank-one correction and the
//! prediction step exploits the block-diagonal transition matrix. A filter
//! step therefore costs `O(M² b)` with `b ≤ 6` the largest channel block.
//!
//! Missing samples skip the update (equivalent to infinite observation
//! noise) and contribute nothing to the log-likelihood. The state starts
//! from the stationary prior `N(0, P∞)`.
//!
//! Two smoothers are provided:
//!
//! * [`rts_smoother`] runs the classic Rauch–Tung–Striebel recursion over a
//!   [`FilterOutput`] that keeps every predicted and filtered covariance.
//! * [`smooth`] with [`CovarianceStorage::Projected`] uses the modified
//!   Bryson–Frazier backward recursion and only keeps checkpoints of the
//!   predicted covariance, trading one extra forward sweep for `O(√T M²)`
//!   memory instead of `O(T M²)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, block_congruence, block_mul_vec, block_tr_mul_vec};
use crate::state_space::DiscreteStateSpace;

/// Observed samples with a missing-data mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    values: Vec<f64>,
    missing: Vec<bool>,
    obs_noise_variance: f64,
}

impl ObservationSequence {
    pub fn new(values: Vec<f64>, missing: Vec<bool>, obs_noise_variance: f64) -> Result<Self> {
        if values.len() != missing.len() {
            return Err(Error::Domain(format!(
                "{} values but {} mask entries",
                values.len(),
                missing.len()
            )));
        }
        if !(obs_noise_variance.is_finite() && obs_noise_variance >= 0.0) {
            return Err(Error::Domain(format!(
                "observation noise variance must be non-negative, got {obs_noise_variance}"
            )));
        }
        if let Some(step) = (0..values.len()).find(|&k| !missing[k] && !values[k].is_finite()) {
            return Err(Error::NonFiniteObservation { step });
        }
        Ok(Self {
            values,
            missing,
            obs_noise_variance,
        })
    }

    pub fn fully_observed(values: Vec<f64>, obs_noise_variance: f64) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::new(values, missing, obs_noise_variance)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn obs_noise_variance(&self) -> f64 {
        self.obs_noise_variance
    }

    pub fn is_observed(&self, k: usize) -> bool {
        !self.missing[k]
    }

    /// Concatenates two sequences with `gap` fully masked samples between.
    pub fn concat_with_gap(&self, gap: usize, other: &Self) -> Result<Self> {
        let mut values = self.values.clone();
        values.extend(std::iter::repeat(0.0).take(gap));
        values.extend_from_slice(&other.values);
        let mut missing = self.missing.clone();
        missing.extend(std::iter::repeat(true).take(gap));
        missing.extend_from_slice(&other.missing);
        Self::new(values, missing, self.obs_noise_variance)
    }
}

/// Reusable buffers for one filter sweep.
struct Workspace {
    scratch: DMatrix<f64>,
    cov_next: DMatrix<f64>,
    mean_next: DVector<f64>,
    gain: DVector<f64>,
}

impl Workspace {
    fn new(m: usize) -> Self {
        Self {
            scratch: DMatrix::zeros(m, m),
            cov_next: DMatrix::zeros(m, m),
            mean_next: DVector::zeros(m),
            gain: DVector::zeros(m),
        }
    }
}

/// `h = P Hᵀ` and `H P Hᵀ`.
fn project(dss: &DiscreteStateSpace, cov: &DMatrix<f64>, h: &mut DVector<f64>) -> f64 {
    let m = cov.nrows();
    h.fill(0.0);
    let data = cov.as_slice();
    for &(i, w) in &dss.h_support {
        let col = &data[i * m..(i + 1) * m];
        for (hk, c) in h.iter_mut().zip(col) {
            *hk += w * c;
        }
    }
    dss.observe(h)
}

/// Joseph-form covariance update for a scalar observation:
/// `(I − K H) P (I − K H)ᵀ + σ² K Kᵀ` with `K = h / S`.
fn joseph_update(cov: &mut DMatrix<f64>, h: &DVector<f64>, innovation_var: f64) {
    let m = cov.nrows();
    let data = cov.as_mut_slice();
    for j in 0..m {
        let kj = h[j] / innovation_var;
        let hj = h[j];
        let col = &mut data[j * m..(j + 1) * m];
        for (i, p) in col.iter_mut().enumerate() {
            let ki = h[i] / innovation_var;
            *p += -ki * hj - h[i] * kj + innovation_var * ki * kj;
        }
    }
    linalg::symmetrize(cov);
}

fn predict(dss: &DiscreteStateSpace, mean: &mut DVector<f64>, cov: &mut DMatrix<f64>, ws: &mut Workspace) {
    block_mul_vec(&dss.a_blocks, mean, &mut ws.mean_next);
    std::mem::swap(mean, &mut ws.mean_next);
    predict_cov(dss, cov, ws);
}

fn predict_cov(dss: &DiscreteStateSpace, cov: &mut DMatrix<f64>, ws: &mut Workspace) {
    block_congruence(&dss.a_blocks, false, cov, &mut ws.scratch, &mut ws.cov_next);
    for b in &dss.q_blocks {
        let mut view = ws.cov_next.view_mut((b.offset, b.offset), (b.size(), b.size()));
        view += &b.mat;
    }
    std::mem::swap(cov, &mut ws.cov_next);
    linalg::symmetrize(cov);
}

/// Quantities produced by one measurement update.
#[derive(Debug, Clone, Copy)]
struct Innovation {
    residual: f64,
    variance: f64,
}

fn update(
    dss: &DiscreteStateSpace,
    obs: &ObservationSequence,
    k: usize,
    mean: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    ws: &mut Workspace,
) -> Result<Innovation> {
    let y = obs.values[k];
    if !y.is_finite() {
        return Err(Error::NonFiniteObservation { step: k });
    }
    let hph = project(dss, cov, &mut ws.gain);
    let variance = hph + obs.obs_noise_variance;
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::NonPositiveInnovation { step: k, variance });
    }
    let residual = y - dss.observe(mean);
    mean.axpy(residual / variance, &ws.gain, 1.0);
    joseph_update(cov, &ws.gain, variance);
    Ok(Innovation { residual, variance })
}

fn log_normal(residual: f64, variance: f64) -> f64 {
    -0.5 * ((2.0 * PI * variance).ln() + residual * residual / variance)
}

fn check_dims(dss: &DiscreteStateSpace, obs: &ObservationSequence) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::Domain("observation sequence is empty".into()));
    }
    if dss.state_dim() == 0 {
        return Err(Error::Domain("state space has no states".into()));
    }
    Ok(())
}

/// Log marginal likelihood `log p(y | θ)` from a forward pass that stores
/// nothing per step.
pub fn log_marginal_likelihood(dss: &DiscreteStateSpace, obs: &ObservationSequence) -> Result<f64> {
    check_dims(dss, obs)?;
    let m = dss.state_dim();
    let mut ws = Workspace::new(m);
    let mut mean = DVector::zeros(m);
    let mut cov = dss.pinf.clone();
    let mut loglik = 0.0;
    for k in 0..obs.len() {
        if k > 0 {
            predict(dss, &mut mean, &mut cov, &mut ws);
        }
        if obs.is_observed(k) {
            let inn = update(dss, obs, k, &mut mean, &mut cov, &mut ws)?;
            loglik += log_normal(inn.residual, inn.variance);
        }
    }
    Ok(loglik)
}

/// Per-step predicted and filtered moments.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub log_marginal_likelihood: f64,
    pub obs_noise_variance: f64,
}

impl FilterOutput {
    pub fn len(&self) -> usize {
        self.filtered_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered_means.is_empty()
    }
}

/// Forward Kalman filter keeping all moments.
pub fn kalman_filter(dss: &DiscreteStateSpace, obs: &ObservationSequence) -> Result<FilterOutput> {
    check_dims(dss, obs)?;
    let m = dss.state_dim();
    let n = obs.len();
    let mut ws = Workspace::new(m);
    let mut mean = DVector::zeros(m);
    let mut cov = dss.pinf.clone();
    let mut out = FilterOutput {
        predicted_means: Vec::with_capacity(n),
        predicted_covs: Vec::with_capacity(n),
        filtered_means: Vec::with_capacity(n),
        filtered_covs: Vec::with_capacity(n),
        log_marginal_likelihood: 0.0,
        obs_noise_variance: obs.obs_noise_variance,
    };
    for k in 0..n {
        if k > 0 {
            predict(dss, &mut mean, &mut cov, &mut ws);
        }
        out.predicted_means.push(mean.clone());
        out.predicted_covs.push(cov.clone());
        if obs.is_observed(k) {
            let inn = update(dss, obs, k, &mut mean, &mut cov, &mut ws)?;
            out.log_marginal_likelihood += log_normal(inn.residual, inn.variance);
        }
        out.filtered_means.push(mean.clone());
        out.filtered_covs.push(cov.clone());
    }
    Ok(out)
}

/// How smoothed covariances are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceStorage {
    /// Every `M × M` smoothed covariance.
    #[default]
    Full,
    /// Only the observation-space variance and per-channel variances.
    Projected,
}

/// Smoothed posterior over the latent state.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// Smoothed state means, one `M`-vector per step.
    pub means: Vec<DVector<f64>>,
    /// Smoothed state covariances, present with [`CovarianceStorage::Full`].
    pub covariances: Option<Vec<DMatrix<f64>>>,
    pub log_marginal_likelihood: f64,
    /// `H m_k`.
    pub reconstruction_mean: Vec<f64>,
    /// `H P_k Hᵀ + σ²_y`.
    pub reconstruction_var: Vec<f64>,
    /// Marginal variance of each channel's in-phase coordinate, indexed
    /// `[channel][step]`.
    pub channel_real_var: Vec<Vec<f64>>,
    pub obs_noise_variance: f64,
    /// Steps where the smoother had to add jitter to invert a predicted
    /// covariance.
    pub regularized_steps: usize,
}

const JITTER_ATTEMPTS: usize = 3;

/// Solves `P X = B` for symmetric `P`, adding diagonal jitter
/// `1e-10 · tr(P)/M` (doubling, at most three times) if Cholesky fails.
fn solve_spd(p: &DMatrix<f64>, b: &DMatrix<f64>, step: usize, regularized: &mut usize) -> Result<DMatrix<f64>> {
    if let Some(chol) = p.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    let m = p.nrows();
    let mut jitter = 1e-10 * p.trace().abs().max(f64::MIN_POSITIVE) / m as f64;
    for _ in 0..JITTER_ATTEMPTS {
        let mut reg = p.clone();
        for i in 0..m {
            reg[(i, i)] += jitter;
        }
        if let Some(chol) = reg.cholesky() {
            *regularized += 1;
            log::warn!("predicted covariance at step {step} regularised with jitter {jitter:e}");
            return Ok(chol.solve(b));
        }
        jitter *= 2.0;
    }
    Err(Error::SingularCovariance {
        step,
        attempts: JITTER_ATTEMPTS,
    })
}

/// Rauch–Tung–Striebel smoother over a full [`FilterOutput`].
pub fn rts_smoother(dss: &DiscreteStateSpace, filtered: &FilterOutput) -> Result<PosteriorSummary> {
    let n = filtered.len();
    if n == 0 {
        return Err(Error::Domain("filter output is empty".into()));
    }
    let mut means = filtered.filtered_means.clone();
    let mut covs = filtered.filtered_covs.clone();
    let mut regularized = 0;
    for k in (0..n - 1).rev() {
        // Gᵀ = (P⁻_{k+1})⁻¹ A P_k
        let ap = &dss.a * &filtered.filtered_covs[k];
        let gain_t = solve_spd(&filtered.predicted_covs[k + 1], &ap, k + 1, &mut regularized)?;
        let gain = gain_t.transpose();
        let dm = &means[k + 1] - &filtered.predicted_means[k + 1];
        means[k] = &filtered.filtered_means[k] + &gain * dm;
        let dp = &covs[k + 1] - &filtered.predicted_covs[k + 1];
        let mut p = &filtered.filtered_covs[k] + &gain * dp * &gain_t;
        linalg::symmetrize(&mut p);
        covs[k] = p;
    }
    let noise = filtered.obs_noise_variance;
    let reconstruction_mean = means.iter().map(|m| dss.observe(m)).collect();
    let mut h = DVector::zeros(dss.state_dim());
    let reconstruction_var = covs.iter().map(|p| project(dss, p, &mut h) + noise).collect();
    let channel_real_var = dss
        .channels
        .iter()
        .map(|ch| covs.iter().map(|p| p[(ch.real_index(), ch.real_index())]).collect())
        .collect();
    Ok(PosteriorSummary {
        means,
        covariances: Some(covs),
        log_marginal_likelihood: filtered.log_marginal_likelihood,
        reconstruction_mean,
        reconstruction_var,
        channel_real_var,
        obs_noise_variance: noise,
        regularized_steps: regularized,
    })
}

/// Filters and smooths in one call.
pub fn smooth(dss: &DiscreteStateSpace, obs: &ObservationSequence, storage: CovarianceStorage) -> Result<PosteriorSummary> {
    match storage {
        CovarianceStorage::Full => rts_smoother(dss, &kalman_filter(dss, obs)?),
        CovarianceStorage::Projected => smooth_projected(dss, obs),
    }
}

/// Per-step record kept by the lean forward sweeps.
#[derive(Debug, Clone, Copy)]
struct StepRecord {
    innovation: Option<Innovation>,
}

/// `Λ̃ = Cᵀ Λ̂ C + Hᵀ H / S` and `λ̃ = Cᵀ λ̂ + Hᵀ v / S` with `C = I − K H`,
/// applied in place.
fn absorb_observation(
    dss: &DiscreteStateSpace,
    h: &DVector<f64>,
    inn: Innovation,
    lambda: &mut DVector<f64>,
    info: Option<(&mut DMatrix<f64>, &mut DVector<f64>)>,
) {
    let s = inn.variance;
    // Kᵀ λ̂ with K = h / S
    let k_lambda = h.dot(lambda) / s;
    let coef = inn.residual / s - k_lambda;
    for &(i, w) in &dss.h_support {
        lambda[i] += w * coef;
    }
    if let Some((big, u)) = info {
        // u = Λ̂ K
        big.mul_to(h, u);
        *u /= s;
        let c = h.dot(u) / s + 1.0 / s;
        let m = big.nrows();
        for &(i, w) in &dss.h_support {
            for j in 0..m {
                big[(i, j)] -= w * u[j];
            }
        }
        for &(i, w) in &dss.h_support {
            for r in 0..m {
                big[(r, i)] -= w * u[r];
            }
        }
        for &(i, wi) in &dss.h_support {
            for &(j, wj) in &dss.h_support {
                big[(i, j)] += c * wi * wj;
            }
        }
    }
}

fn checkpoint_interval(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}

/// Modified Bryson–Frazier smoother with checkpointed covariances.
fn smooth_projected(dss: &DiscreteStateSpace, obs: &ObservationSequence) -> Result<PosteriorSummary> {
    check_dims(dss, obs)?;
    let m = dss.state_dim();
    let n = obs.len();
    let noise = obs.obs_noise_variance;
    let interval = checkpoint_interval(n);
    let mut ws = Workspace::new(m);

    let mut pred_means = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    let mut checkpoints = Vec::with_capacity(n / interval + 1);
    let mut mean = DVector::zeros(m);
    let mut cov = dss.pinf.clone();
    let mut loglik = 0.0;
    for k in 0..n {
        if k > 0 {
            predict(dss, &mut mean, &mut cov, &mut ws);
        }
        if k % interval == 0 {
            checkpoints.push(cov.clone());
        }
        pred_means.push(mean.clone());
        let innovation = if obs.is_observed(k) {
            let inn = update(dss, obs, k, &mut mean, &mut cov, &mut ws)?;
            loglik += log_normal(inn.residual, inn.variance);
            Some(inn)
        } else {
            None
        };
        records.push(StepRecord { innovation });
    }

    let mut means = vec![DVector::zeros(0); n];
    let mut recon_mean = vec![0.0; n];
    let mut recon_var = vec![0.0; n];
    let mut channel_real_var = vec![vec![0.0; n]; dss.num_channels()];

    let mut lambda = DVector::zeros(m);
    let mut big = DMatrix::zeros(m, m);
    let mut u = DVector::zeros(m);
    let mut h = DVector::zeros(m);
    let mut tmp_vec = DVector::zeros(m);
    let mut tmp_mat = DMatrix::zeros(m, m);
    let mut scratch = DMatrix::zeros(m, m);
    let mut block_covs: Vec<DMatrix<f64>> = Vec::with_capacity(interval);

    for (block, start) in (0..n).step_by(interval).enumerate().rev() {
        let end = (start + interval).min(n);
        // Replay the covariance recursion for this block.
        block_covs.clear();
        let mut p = checkpoints[block].clone();
        for k in start..end {
            if k > start {
                predict_cov(dss, &mut p, &mut ws);
            }
            block_covs.push(p.clone());
            if let Some(inn) = records[k].innovation {
                project(dss, &p, &mut ws.gain);
                joseph_update(&mut p, &ws.gain, inn.variance);
            }
        }
        for k in (start..end).rev() {
            if k + 1 < n {
                // λ̂_k = Aᵀ λ̃_{k+1}, Λ̂_k = Aᵀ Λ̃_{k+1} A
                block_tr_mul_vec(&dss.a_blocks, &lambda, &mut tmp_vec);
                std::mem::swap(&mut lambda, &mut tmp_vec);
                block_congruence(&dss.a_blocks, true, &big, &mut scratch, &mut tmp_mat);
                std::mem::swap(&mut big, &mut tmp_mat);
            }
            let p_pred = &block_covs[k - start];
            let hph = project(dss, p_pred, &mut h);
            if let Some(inn) = records[k].innovation {
                absorb_observation(dss, &h, inn, &mut lambda, Some((&mut big, &mut u)));
            }
            let mut sm = pred_means[k].clone();
            sm.gemv(1.0, p_pred, &lambda, 1.0);
            recon_mean[k] = dss.observe(&sm);
            big.mul_to(&h, &mut u);
            recon_var[k] = hph - h.dot(&u) + noise;
            for (d, ch) in dss.channels.iter().enumerate() {
                let r = ch.real_index();
                let col = p_pred.column(r);
                big.mul_to(&col, &mut u);
                channel_real_var[d][k] = p_pred[(r, r)] - col.dot(&u);
            }
            means[k] = sm;
        }
    }

    Ok(PosteriorSummary {
        means,
        covariances: None,
        log_marginal_likelihood: loglik,
        reconstruction_mean: recon_mean,
        reconstruction_var: recon_var,
        channel_real_var,
        obs_noise_variance: noise,
        regularized_steps: 0,
    })
}

/// Smoothed signal estimate without any state-level output.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// `E[H x_k | y]`.
    pub mean: Vec<f64>,
    /// `Var[H x_k | y] + σ²_y`, empty unless requested.
    pub var: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

/// Smoothed reconstruction `H m_k` (and optionally its variance) using only
/// `O(T M)` memory.
///
/// The backward pass needs `P⁻_k Hᵀ` per step, never the full covariance.
/// Without variances it is a vector recursion and costs far less than the
/// forward filter.
pub fn reconstruct(dss: &DiscreteStateSpace, obs: &ObservationSequence, with_variance: bool) -> Result<Reconstruction> {
    check_dims(dss, obs)?;
    let m = dss.state_dim();
    let n = obs.len();
    let noise = obs.obs_noise_variance;
    let mut ws = Workspace::new(m);
    let mut mean = DVector::zeros(m);
    let mut cov = dss.pinf.clone();
    let mut loglik = 0.0;
    let mut gains = Vec::with_capacity(n);
    let mut pred_obs = Vec::with_capacity(n);
    let mut hph = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    let mut h = DVector::zeros(m);
    for k in 0..n {
        if k > 0 {
            predict(dss, &mut mean, &mut cov, &mut ws);
        }
        hph.push(project(dss, &cov, &mut h));
        gains.push(h.clone());
        pred_obs.push(dss.observe(&mean));
        let innovation = if obs.is_observed(k) {
            let inn = update(dss, obs, k, &mut mean, &mut cov, &mut ws)?;
            loglik += log_normal(inn.residual, inn.variance);
            Some(inn)
        } else {
            None
        };
        records.push(StepRecord { innovation });
    }
    drop(cov);

    let mut out_mean = vec![0.0; n];
    let mut out_var = if with_variance { vec![0.0; n] } else { Vec::new() };
    let mut lambda = DVector::zeros(m);
    let mut tmp_vec = DVector::zeros(m);
    let mut big = if with_variance { DMatrix::zeros(m, m) } else { DMatrix::zeros(0, 0) };
    let mut tmp_mat = big.clone();
    let mut scratch = big.clone();
    let mut u = DVector::zeros(m);
    for k in (0..n).rev() {
        if k + 1 < n {
            block_tr_mul_vec(&dss.a_blocks, &lambda, &mut tmp_vec);
            std::mem::swap(&mut lambda, &mut tmp_vec);
            if with_variance {
                block_congruence(&dss.a_blocks, true, &big, &mut scratch, &mut tmp_mat);
                std::mem::swap(&mut big, &mut tmp_mat);
            }
        }
        let h = &gains[k];
        if let Some(inn) = records[k].innovation {
            let info = if with_variance { Some((&mut big, &mut u)) } else { None };
            absorb_observation(dss, h, inn, &mut lambda, info);
        }
        out_mean[k] = pred_obs[k] + h.dot(&lambda);
        if with_variance {
            big.mul_to(h, &mut u);
            out_var[k] = hph[k] - h.dot(&u) + noise;
        }
    }
    Ok(Reconstruction {
        mean: out_mean,
        var: out_var,
        log_marginal_likelihood: loglik,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{MaternComponent, MaternOrder, SpectralMixtureModel};
    use approx::assert_abs_diff_eq;

    fn small_model() -> SpectralMixtureModel {
        SpectralMixtureModel::new(
            vec![
                MaternComponent::new(MaternOrder::Half, 0.8, 0.02, 2.0 * PI * 60.0).unwrap(),
                MaternComponent::new(MaternOrder::ThreeHalves, 0.5, 0.03, 2.0 * PI * 150.0).unwrap(),
                MaternComponent::new(MaternOrder::FiveHalves, 0.3, 0.05, 2.0 * PI * 320.0).unwrap(),
            ],
            0.05,
            1000.0,
        )
        .unwrap()
    }

    fn signal(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let t = k as f64 / 1000.0;
                (2.0 * PI * 61.0 * t).sin() + 0.4 * (2.0 * PI * 150.0 * t + 0.3).cos() + 0.1 * ((k * 7919) % 13) as f64 / 13.0
            })
            .collect()
    }

    fn gappy(n: usize) -> Vec<bool> {
        (0..n).map(|k| (20..35).contains(&k) || (60..64).contains(&k) || k % 17 == 3).collect()
    }

    #[test]
    fn single_step_loglik() {
        let m = SpectralMixtureModel::new(vec![MaternComponent::new(MaternOrder::Half, 1.0, 1.0, 0.0).unwrap()], 1.0, 1.0)
            .unwrap();
        let dss = DiscreteStateSpace::from_model(&m).unwrap();
        let obs = ObservationSequence::fully_observed(vec![0.0], 1.0).unwrap();
        let expected = -0.5 * (2.0 * PI * 2.0).ln();
        assert_abs_diff_eq!(log_marginal_likelihood(&dss, &obs).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, -1.2655121234846454, epsilon = 1e-14);
        assert_abs_diff_eq!(kalman_filter(&dss, &obs).unwrap().log_marginal_likelihood, expected, epsilon = 1e-14);
    }

    #[test]
    fn all_missing_keeps_prior() {
        let m = small_model();
        let dss = DiscreteStateSpace::from_model(&m).unwrap();
        let obs = ObservationSequence::new(vec![0.0; 30], vec![true; 30], 0.05).unwrap();
        let f = kalman_filter(&dss, &obs).unwrap();
        assert_eq!(f.log_marginal_likelihood, 0.0);
        for (mean, cov) in f.filtered_means.iter().zip(&f.filtered_covs) {
            assert_eq!(mean.norm(), 0.0);
            assert!((cov - &dss.pinf).norm() < 1e-9 * dss.pinf.norm());
        }
        let post = rts_smoother(&dss, &f).unwrap();
        assert!(post.means.iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn observation_validation() {
        assert!(ObservationSequence::new(vec![1.0], vec![false, true], 0.1).is_err());
        assert_eq!(
            ObservationSequence::new(vec![1.0, f64::NAN], vec![false, false], 0.1),
            Err(Error::NonFiniteObservation { step: 1 })
        );
        assert!(ObservationSequence::new(vec![1.0, f64::NAN], vec![false, true], 0.1).is_ok());
        assert!(ObservationSequence::new(vec![1.0], vec![false], -1.0).is_err());
    }

    #[test]
    fn smoother_last_step_equals_filter() {
        let m = small_model();
        let dss = DiscreteStateSpace::from_model(&m).unwrap();
        let obs = ObservationSequence::new(signal(80), gappy(80), 0.05).unwrap();
        let f = kalman_filter(&dss, &obs).unwrap();
        let s = rts_smoother(&dss, &f).unwrap();
        assert_eq!(s.means[79], f.filtered_means[79]);
        assert_eq!(s.covariances.as_ref().unwrap()[79], f.filtered_covs[79]);
    }

    #[test]
    fn lean_paths_agree_with_rts() {
        let m = small_model();
        let dss = DiscreteStateSpace::from_model(&m).unwrap();
        let obs = ObservationSequence::new(signal(150), gappy(150), 0.05).unwrap();
        let full = smooth(&dss, &obs, CovarianceStorage::Full).unwrap();
        let proj = smooth(&dss, &obs, CovarianceStorage::Projected).unwrap();
        let rec = reconstruct(&dss, &obs, true).unwrap();
        let rec_fast = reconstruct(&dss, &obs, false).unwrap();
        assert_abs_diff_eq!(full.log_marginal_likelihood, proj.log_marginal_likelihood, epsilon = 1e-12);
        assert_abs_diff_eq!(full.log_marginal_likelihood, rec.log_marginal_likelihood, epsilon = 1e-12);
        for k in 0..150 {
            assert_abs_diff_eq!(full.reconstruction_mean[k], proj.reconstruction_mean[k], epsilon = 1e-9);
            assert_abs_diff_eq!(full.reconstruction_mean[k], rec.mean[k], epsilon = 1e-9);
            assert_abs_diff_eq!(rec.mean[k], rec_fast.mean[k], epsilon = 1e-14);
            assert_abs_diff_eq!(full.reconstruction_var[k], proj.reconstruction_var[k], epsilon = 1e-9);
            assert_abs_diff_eq!(full.reconstruction_var[k], rec.var[k], epsilon = 1e-9);
            assert_abs_diff_eq!((&full.means[k] - &proj.means[k]).norm(), 0.0, epsilon = 1e-8);
            for d in 0..3 {
                assert_abs_diff_eq!(full.channel_real_var[d][k], proj.channel_real_var[d][k], epsilon = 1e-9);
            }
        }
        assert!(rec_fast.var.is_empty());
    }

    #[test]
    fn reconstruction_variance_floor() {
        let m = small_model();
        let dss = DiscreteStateSpace::from_model(&m).unwrap();
        let obs = ObservationSequence::new(signal(100), gappy(100), 0.05).unwrap();
        let s = smooth(&dss, &obs, CovarianceStorage::Full).unwrap();
        assert!(s.reconstruction_var.iter().all(|&v| v >= 0.05 - 1e-12));
        for p in s.covariances.unwrap() {
            assert!((&p - p.transpose()).norm() <= 1e-12 * p.norm().max(1.0));
        }
    }

    #[test]
    fn near_noiseless_smoother_interpolates() {
        let m = SpectralMixtureModel::new(
            vec![MaternComponent::new(MaternOrder::ThreeHalves, 1.0, 0.01, 2.0 * PI * 50.0).unwrap()],
            1e-12,
            1000.0,
        )
        .unwrap();
        let dss = DiscreteStateSpace::from_model(&m).unwrap();
        let y = signal(60);
        let obs = ObservationSequence::fully_observed(y.clone(), 1e-12).unwrap();
        let s = smooth(&dss, &obs, CovarianceStorage::Full).unwrap();
        for (a, b) in s.reconstruction_mean.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-4);
        }
    }

    #[test]
    fn zero_length_gap_is_plain_concatenation() {
        let m = small_model();
        let dss = DiscreteStateSpace::from_model(&m).unwrap();
        let a = ObservationSequence::fully_observed(signal(40), 0.05).unwrap();
        let b = ObservationSequence::fully_observed(signal(55)[15..].to_vec(), 0.05).unwrap();
        let joined = a.concat_with_gap(0, &b).unwrap();
        let whole = ObservationSequence::fully_observed([a.values(), b.values()].concat(), 0.05).unwrap();
        assert_eq!(
            log_marginal_likelihood(&dss, &joined).unwrap(),
            log_marginal_likelihood(&dss, &whole).unwrap()
        );
        let gapped = a.concat_with_gap(10, &b).unwrap();
        assert_eq!(gapped.len(), 90);
        assert_eq!(gapped.missing_mask().iter().filter(|&&x| x).count(), 10);
    }

    #[test]
    fn innovation_error_reports_step() {
        let m = small_model();
        let mut dss = DiscreteStateSpace::from_model(&m).unwrap();
        dss.pinf.fill(0.0);
        for b in &mut dss.q_blocks {
            b.mat.fill(0.0);
        }
        let obs = ObservationSequence::new(vec![1.0, 2.0, 0.5], vec![true, false, false], 0.0).unwrap();
        assert_eq!(
            log_marginal_likelihood(&dss, &obs),
            Err(Error::NonPositiveInnovation { step: 1, variance: 0.0 })
        );
    }
}
