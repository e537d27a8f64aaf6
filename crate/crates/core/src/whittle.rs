//! Frequency-domain hyperparameter learning.
//!
//! The Whittle objective compares the periodogram of a signal with the model
//! spectrum bin by bin:
//!
//! ```text
//! ℓ(θ) = −½ Σ_i ( log γ_i(θ) + P_i / γ_i(θ) )
//! ```
//!
//! with the additive constant dropped. Parameters are handled in a flat
//! vector with layout `[log σ²_1, log ℓ_1, ω_1, …, log σ²_D, log ℓ_D, ω_D,
//! log σ²_y]`; centre frequencies stay in raw rad/s units.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernel::{MaternComponent, MaternOrder, SpectralMixtureModel};

/// Squared magnitudes of the unnormalised DFT of a real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    power: Vec<f64>,
    dt: f64,
}

impl Periodogram {
    /// Wraps precomputed bin powers, indexed like a length-`T` DFT.
    pub fn from_power(power: Vec<f64>, dt: f64) -> Result<Self> {
        if power.len() < 2 {
            return domain("a periodogram needs at least two bins");
        }
        if !(dt.is_finite() && dt > 0.0) {
            return domain(format!("sampling step must be positive, got {dt}"));
        }
        if let Some(i) = power.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return domain(format!("bin {i} has invalid power {}", power[i]));
        }
        Ok(Self { power, dt })
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn num_samples(&self) -> usize {
        self.power.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Angular frequency of bin `i`, folded onto `[0, π/Δt]`.
    pub fn freq(&self, i: usize) -> f64 {
        let t = self.power.len();
        2.0 * PI * i.min(t - i) as f64 / (t as f64 * self.dt)
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.power.len()).map(|i| self.freq(i)).collect()
    }

    /// Bins `0..=T/2` with the summed power of each conjugate pair.
    fn folded(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let t = self.power.len();
        let half = t / 2;
        let mut freqs = Vec::with_capacity(half + 1);
        let mut power = Vec::with_capacity(half + 1);
        let mut weight = Vec::with_capacity(half + 1);
        for i in 0..=half {
            let mirror = t - i;
            freqs.push(self.freq(i));
            if i == 0 || mirror == i {
                power.push(self.power[i]);
                weight.push(1.0);
            } else {
                power.push(self.power[i] + self.power[mirror]);
                weight.push(2.0);
            }
        }
        (freqs, power, weight)
    }
}

/// `|Σ_k y_k e^{−2πi jk/T}|²` for every bin `j`.
pub fn compute_periodogram(y: &[f64], dt: f64) -> Result<Periodogram> {
    if y.len() < 2 {
        return domain("a periodogram needs at least two samples");
    }
    if let Some(k) = y.iter().position(|v| !v.is_finite()) {
        return domain(format!("sample {k} is not finite"));
    }
    let mut buf: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    Periodogram::from_power(buf.iter().map(|c| c.norm_sqr()).collect(), dt)
}

/// Circular moving average over `2·halfwidth + 1` bins.
pub fn smooth_spectrum(p: &Periodogram, halfwidth: usize) -> Periodogram {
    let t = p.power.len();
    if halfwidth == 0 {
        return p.clone();
    }
    let width = 2 * halfwidth + 1;
    let norm = width as f64;
    // Summing the window directly keeps Σ power exactly preserved up to
    // rounding, where a running sum would accumulate drift.
    let power = (0..t)
        .map(|i| {
            let mut acc = 0.0;
            for o in 0..width {
                acc += p.power[(i + t * width - halfwidth + o) % t];
            }
            acc / norm
        })
        .collect();
    Periodogram { power, dt: p.dt }
}

fn check_compatible(m: &SpectralMixtureModel, p: &Periodogram) -> Result<()> {
    let rel = (m.dt() - p.dt).abs() / p.dt;
    if rel > 1e-9 {
        return domain(format!("model step {} does not match periodogram step {}", m.dt(), p.dt));
    }
    Ok(())
}

fn folded_spectrum(m: &SpectralMixtureModel, freqs: &[f64], t: usize) -> Result<Vec<f64>> {
    let gamma = m.model_spectrum(freqs, t)?;
    if let Some(i) = gamma.iter().position(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::NonPositiveSpectrum {
            bin: i,
            value: gamma[i],
        });
    }
    Ok(gamma)
}

/// The Whittle log-likelihood with the constant term set to zero.
pub fn whittle_loglik(m: &SpectralMixtureModel, p: &Periodogram) -> Result<f64> {
    check_compatible(m, p)?;
    let (freqs, power, weight) = p.folded();
    let gamma = folded_spectrum(m, &freqs, p.num_samples())?;
    let mut acc = 0.0;
    for i in 0..freqs.len() {
        acc += weight[i] * gamma[i].ln() + power[i] / gamma[i];
    }
    Ok(-0.5 * acc)
}

/// Number of entries in the flat parameter vector of `m`.
pub fn num_params(m: &SpectralMixtureModel) -> usize {
    3 * m.num_components() + 1
}

/// Flattens `m` into the log/raw parameter layout.
pub fn pack_params(m: &SpectralMixtureModel) -> Vec<f64> {
    let mut theta = Vec::with_capacity(num_params(m));
    for c in m.components() {
        theta.extend([c.variance.ln(), c.lengthscale.ln(), c.center_freq]);
    }
    theta.push(m.obs_noise_variance().ln());
    theta
}

/// Rebuilds a model with the orders and sample rate of `like`.
pub fn unpack_params(like: &SpectralMixtureModel, theta: &[f64]) -> Result<SpectralMixtureModel> {
    if theta.len() != num_params(like) {
        return domain(format!("expected {} parameters, got {}", num_params(like), theta.len()));
    }
    let comps = like
        .components()
        .iter()
        .zip(theta.chunks_exact(3))
        .map(|(c, p)| MaternComponent::new(c.order, p[0].exp(), p[1].exp(), p[2]))
        .collect::<Result<Vec<_>>>()?;
    let noise = theta[theta.len() - 1].exp();
    if comps.is_empty() {
        SpectralMixtureModel::noise_only(noise, like.sample_rate())
    } else {
        SpectralMixtureModel::new(comps, noise, like.sample_rate())
    }
}

/// `S(u)` together with `∂S/∂log ℓ` and `∂S/∂u`.
fn density_partials(c: &MaternComponent, u: f64) -> (f64, f64, f64) {
    let lam = c.rate();
    let m = c.order.state_dim() as f64;
    let lam2 = lam * lam;
    let denom = lam2 + u * u;
    let s = c.baseband_unchecked(u);
    let d_log_ell = -s * ((2.0 * m - 1.0) - 2.0 * m * lam2 / denom);
    let d_u = -2.0 * m * u * s / denom;
    (s, d_log_ell, d_u)
}

struct Evaluation {
    value: f64,
    gradient: Vec<f64>,
    /// Expected Fisher information `½ Σ_i (∂γ_i/∂θ_j)(∂γ_i/∂θ_k) / γ_i²`.
    fisher: DMatrix<f64>,
}

fn evaluate(m: &SpectralMixtureModel, p: &Periodogram, with_fisher: bool) -> Result<Evaluation> {
    check_compatible(m, p)?;
    let t = p.num_samples();
    let (freqs, power, weight) = p.folded();
    let gamma = folded_spectrum(m, &freqs, t)?;
    let scale = t as f64 * m.sample_rate();
    let n = num_params(m);
    let bins = freqs.len();
    let mut gradient = vec![0.0; n];
    let mut value = 0.0;
    // Per bin: r = ½ Σ_pair (P − γ)/γ², and √f with f = ½ weight/γ².
    let mut resid = Vec::with_capacity(bins);
    let mut root_info = Vec::with_capacity(bins);
    for i in 0..bins {
        let g = gamma[i];
        value += weight[i] * g.ln() + power[i] / g;
        resid.push(0.5 * (power[i] - weight[i] * g) / (g * g));
        root_info.push((0.5 * weight[i]).sqrt() / g);
    }
    // Jacobian rows weighted by √f, so that the Fisher matrix is JᵀJ.
    let mut jac = DMatrix::zeros(if with_fisher { bins } else { 0 }, n);
    for (d, c) in m.components().iter().enumerate() {
        for (i, &w) in freqs.iter().enumerate() {
            let (s_lo, l_lo, u_lo) = density_partials(c, w - c.center_freq);
            let (s_hi, l_hi, u_hi) = density_partials(c, w + c.center_freq);
            let dg = [
                scale * 0.5 * (s_lo + s_hi),
                scale * 0.5 * (l_lo + l_hi),
                scale * 0.5 * (u_hi - u_lo),
            ];
            for (j, v) in dg.iter().enumerate() {
                gradient[3 * d + j] += resid[i] * v;
                if with_fisher {
                    jac[(i, 3 * d + j)] = root_info[i] * v;
                }
            }
        }
    }
    let noise = t as f64 * m.obs_noise_variance();
    for i in 0..bins {
        gradient[n - 1] += resid[i] * noise;
        if with_fisher {
            jac[(i, n - 1)] = root_info[i] * noise;
        }
    }
    Ok(Evaluation {
        value: -0.5 * value,
        gradient,
        fisher: jac.tr_mul(&jac),
    })
}

/// `∂ℓ/∂θ` in the flat parameter layout of [`pack_params`].
pub fn whittle_gradient(m: &SpectralMixtureModel, p: &Periodogram) -> Result<Vec<f64>> {
    evaluate(m, p, false).map(|e| e.gradient)
}

/// Optimiser settings for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Half-width in bins of the moving average applied before fitting.
    pub smoothing_halfwidth: usize,
    pub max_iters: usize,
    /// Stop once the Newton decrement `√(gᵀd)` of the damped Fisher step falls below this.
    pub grad_tolerance: f64,
    /// Sufficient-increase constant of the Armijo test.
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Largest change of any log-parameter in one step.
    pub max_log_step: f64,
    /// Largest change of a centre frequency in one step, as a fraction of Nyquist.
    pub max_freq_step: f64,
    pub train_variances: bool,
    pub train_lengthscales: bool,
    pub train_center_freqs: bool,
    pub train_noise: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            smoothing_halfwidth: 4,
            max_iters: 500,
            grad_tolerance: 1e-3,
            armijo: 1e-4,
            max_backtracks: 40,
            max_log_step: 1.0,
            max_freq_step: 0.02,
            train_variances: true,
            train_lengthscales: true,
            train_center_freqs: true,
            train_noise: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tolerance", self.grad_tolerance),
            ("armijo", self.armijo),
            ("max_log_step", self.max_log_step),
            ("max_freq_step", self.max_freq_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return domain(format!("{name} must be positive, got {v}"));
            }
        }
        if self.armijo >= 1.0 {
            return domain("armijo constant must be below 1");
        }
        Ok(())
    }

    fn trainable(&self, n: usize) -> Vec<bool> {
        let mut mask: Vec<bool> = (0..n - 1)
            .map(|j| match j % 3 {
                0 => self.train_variances,
                1 => self.train_lengthscales,
                _ => self.train_center_freqs,
            })
            .collect();
        mask.push(self.train_noise);
        mask
    }
}

/// Why [`fit`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// No step along the search direction improved the objective.
    LineSearchFailed,
    /// The objective or its gradient became NaN; the last valid iterate is returned.
    NonFiniteObjective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: SpectralMixtureModel,
    /// Objective at the initial point and after every accepted step.
    pub trace: Vec<f64>,
    pub termination: Termination,
}

impl FitResult {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

/// Like [`unpack_params`] but copies frozen groups from `current` exactly,
/// so they do not drift through the log round trip.
fn rebuild(current: &SpectralMixtureModel, theta: &[f64], config: &FitConfig) -> Result<SpectralMixtureModel> {
    let fresh = unpack_params(current, theta)?;
    let comps = current
        .components()
        .iter()
        .zip(fresh.components())
        .map(|(old, new)| {
            MaternComponent::new(
                old.order,
                if config.train_variances { new.variance } else { old.variance },
                if config.train_lengthscales { new.lengthscale } else { old.lengthscale },
                if config.train_center_freqs { new.center_freq } else { old.center_freq },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let noise = if config.train_noise {
        fresh.obs_noise_variance()
    } else {
        current.obs_noise_variance()
    };
    if comps.is_empty() {
        SpectralMixtureModel::noise_only(noise, current.sample_rate())
    } else {
        SpectralMixtureModel::new(comps, noise, current.sample_rate())
    }
}

// Bounds of the adaptive Levenberg damping in `fit`.
const DAMPING_INIT: f64 = 1e-3;
const DAMPING_MIN: f64 = 1e-9;
const DAMPING_MAX: f64 = 1e9;

/// Solves the damped Fisher system on the active coordinates.
///
/// Each diagonal entry gets `μ F_jj + |g_j| / cap_j`: the second term keeps
/// an uncoupled coordinate within its step cap, so a parameter with
/// vanishing information cannot dominate the step. The matrix stays
/// positive definite, so the result is always an ascent direction.
fn damped_direction(eval: &Evaluation, active: &[usize], caps: &[f64], damping: f64) -> Vec<f64> {
    let k = active.len();
    let mut a = DMatrix::from_fn(k, k, |r, c| eval.fisher[(active[r], active[c])]);
    let largest = (0..k).map(|r| a[(r, r)]).fold(0.0, f64::max);
    for (r, &j) in active.iter().enumerate() {
        let extra = damping * a[(r, r)] + eval.gradient[j].abs() / caps[j] + 1e-12 * largest;
        a[(r, r)] += extra.max(f64::MIN_POSITIVE);
    }
    let g = nalgebra::DVector::from_iterator(k, active.iter().map(|&j| eval.gradient[j]));
    let solved = match a.clone().cholesky() {
        Some(chol) => chol.solve(&g),
        // Only reachable through extreme scaling; fall back to the diagonal.
        None => nalgebra::DVector::from_fn(k, |r, _| g[r] / a[(r, r)]),
    };
    let mut direction = vec![0.0; eval.gradient.len()];
    for (r, &j) in active.iter().enumerate() {
        direction[j] = solved[r];
    }
    direction
}

/// Maximises the Whittle objective of the smoothed periodogram.
///
/// Steps follow the gradient preconditioned by the expected Fisher
/// information (Fisher scoring) with adaptive Levenberg damping. Steps are
/// capped, projected onto `ω ∈ [0, π/Δt]` and shortened by backtracking
/// until the Armijo condition holds, so accepted objective values never
/// decrease.
pub fn fit(init: &SpectralMixtureModel, p: &Periodogram, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    init.validate()?;
    let p = smooth_spectrum(p, config.smoothing_halfwidth);
    let nyquist = init.nyquist();
    let n = num_params(init);
    let trainable = config.trainable(n);
    let is_freq = |j: usize| j + 1 < n && j % 3 == 2;
    let caps: Vec<f64> = (0..n)
        .map(|j| {
            if is_freq(j) {
                config.max_freq_step * nyquist
            } else {
                config.max_log_step
            }
        })
        .collect();

    let mut model = init.clone();
    let mut theta = pack_params(&model);
    let mut eval = evaluate(&model, &p, true)?;
    if !eval.value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut trace = vec![eval.value];
    let mut termination = Termination::MaxIterations;
    let mut damping = DAMPING_INIT;

    'outer: while trace.len() <= config.max_iters {
        if eval.gradient.iter().any(|g| g.is_nan()) {
            termination = Termination::NonFiniteObjective;
            break;
        }
        // A frequency pinned at a boundary cannot move outward.
        let active: Vec<usize> = (0..n)
            .filter(|&j| {
                trainable[j]
                    && eval.fisher[(j, j)] > 0.0
                    && !(is_freq(j)
                        && ((theta[j] <= 0.0 && eval.gradient[j] < 0.0)
                            || (theta[j] >= nyquist && eval.gradient[j] > 0.0)))
            })
            .collect();
        loop {
            let mut direction = damped_direction(&eval, &active, &caps, damping);
            let decrement: f64 = direction.iter().zip(&eval.gradient).map(|(d, g)| d * g).sum();
            if !(decrement.max(0.0).sqrt() >= config.grad_tolerance) {
                termination = Termination::GradientTolerance;
                break 'outer;
            }
            let over = direction
                .iter()
                .zip(&caps)
                .map(|(d, c)| d.abs() / c)
                .fold(1.0, f64::max);
            for d in &mut direction {
                *d /= over;
            }

            let mut step = 1.0;
            let mut saw_nan = false;
            for attempt in 0..=config.max_backtracks {
                let candidate: Vec<f64> = (0..n)
                    .map(|j| {
                        let v = theta[j] + step * direction[j];
                        if is_freq(j) {
                            v.clamp(0.0, nyquist)
                        } else {
                            v
                        }
                    })
                    .collect();
                let predicted: f64 = (0..n).map(|j| eval.gradient[j] * (candidate[j] - theta[j])).sum();
                if let Ok(cand_model) = rebuild(&model, &candidate, config) {
                    match whittle_loglik(&cand_model, &p) {
                        Ok(v) if v.is_nan() => {
                            saw_nan = true;
                            break;
                        }
                        Ok(v) if v.is_finite() && v >= eval.value + config.armijo * predicted => {
                            log::trace!("whittle step {}: {} -> {v} (μ = {damping:e})", trace.len(), eval.value);
                            eval = evaluate(&cand_model, &p, true)?;
                            theta = candidate;
                            model = cand_model;
                            trace.push(eval.value);
                            damping = if attempt == 0 {
                                (damping / 3.0).max(DAMPING_MIN)
                            } else {
                                (damping * 2.0f64.powi(attempt as i32)).min(DAMPING_MAX)
                            };
                            continue 'outer;
                        }
                        _ => {}
                    }
                }
                step *= 0.5;
            }
            if saw_nan {
                termination = Termination::NonFiniteObjective;
                break 'outer;
            }
            // Retry with heavier damping, which bends the step towards the
            // scaled gradient, before giving up.
            if damping >= DAMPING_MAX {
                termination = Termination::LineSearchFailed;
                break 'outer;
            }
            damping = (damping * 100.0).min(DAMPING_MAX);
        }
    }
    log::debug!(
        "whittle fit stopped after {} steps ({:?}), objective {}",
        trace.len() - 1,
        termination,
        eval.value
    );
    Ok(FitResult {
        model,
        trace,
        termination,
    })
}

/// Sample variance of `y` about its mean.
pub fn empirical_variance(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64
}

/// A lengthscale whose spectral half-width is about half the spacing of
/// `num_components` evenly spaced centres.
pub fn default_lengthscale(num_components: usize, sample_rate: f64, nyquist_fraction: f64, order: MaternOrder) -> f64 {
    let spacing = nyquist_fraction * PI * sample_rate / num_components.max(1) as f64;
    order.rate(1.0) / (0.5 * spacing)
}

/// A bank with centres evenly spaced on `(0, nyquist_fraction·π/Δt]`.
///
/// `total_variance` is split equally between components and the
/// observation noise starts at 1% of it.
pub fn init_model(
    num_components: usize,
    sample_rate: f64,
    nyquist_fraction: f64,
    order: MaternOrder,
    total_variance: f64,
    lengthscale: f64,
) -> Result<SpectralMixtureModel> {
    if num_components == 0 {
        return domain("initialisation needs at least one component");
    }
    if !(nyquist_fraction > 0.0 && nyquist_fraction <= 1.0) {
        return domain(format!("nyquist fraction must lie in (0, 1], got {nyquist_fraction}"));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return domain(format!("sample rate must be positive, got {sample_rate}"));
    }
    let top = nyquist_fraction * PI * sample_rate;
    let d = num_components as f64;
    let comps = (1..=num_components)
        .map(|k| MaternComponent::new(order, total_variance / d, lengthscale, top * k as f64 / d))
        .collect::<Result<Vec<_>>>()?;
    SpectralMixtureModel::new(comps, 0.01 * total_variance, sample_rate)
}
