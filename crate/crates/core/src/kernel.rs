//! Spectral-mixture kernels built from frequency-shifted Matérn components.
//!
//! Each component is the product of a cosine kernel `cos(ω_d τ)` and a
//! Matérn-ν kernel with variance `σ²_d` and lengthscale `ℓ_d`. Multiplying by
//! the cosine moves the Matérn spectral density from the origin to `±ω_d`, so
//! a sum of components behaves like a bank of band-pass filters.
//!
//! All frequencies in this module are angular (rad/s). Spectral densities use
//! the convention `k(τ) = (1/2π) ∫ S(ω) e^{iωτ} dω`, so `∫ S dω / 2π = σ²`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Smoothness of a Matérn kernel.
///
/// The baseband state dimension is `ν + ½`, i.e. 1, 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum MaternOrder {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternOrder {
    pub const ALL: [MaternOrder; 3] = [Self::Half, Self::ThreeHalves, Self::FiveHalves];

    pub fn nu(self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::ThreeHalves => 1.5,
            Self::FiveHalves => 2.5,
        }
    }

    /// Dimension of the baseband state-space block.
    pub fn state_dim(self) -> usize {
        match self {
            Self::Half => 1,
            Self::ThreeHalves => 2,
            Self::FiveHalves => 3,
        }
    }

    /// Parses `0.5`, `1.5` or `2.5`.
    pub fn from_nu(nu: f64) -> Result<Self> {
        const TOL: f64 = 1e-9;
        if (nu - 0.5).abs() < TOL {
            Ok(Self::Half)
        } else if (nu - 1.5).abs() < TOL {
            Ok(Self::ThreeHalves)
        } else if (nu - 2.5).abs() < TOL {
            Ok(Self::FiveHalves)
        } else {
            domain(format!("unsupported Matérn order {nu}; expected 0.5, 1.5 or 2.5"))
        }
    }

    /// Rate `λ = √(2ν)/ℓ`.
    pub fn rate(self, lengthscale: f64) -> f64 {
        (2.0 * self.nu()).sqrt() / lengthscale
    }

    /// Numerator constant `c` of `S(ω) = c σ² λ^{2m-1} / (λ² + ω²)^m`.
    pub(crate) fn density_constant(self) -> f64 {
        match self {
            Self::Half => 2.0,
            Self::ThreeHalves => 4.0,
            Self::FiveHalves => 16.0 / 3.0,
        }
    }
}

impl TryFrom<f64> for MaternOrder {
    type Error = crate::Error;

    fn try_from(nu: f64) -> Result<Self> {
        Self::from_nu(nu)
    }
}

impl From<MaternOrder> for f64 {
    fn from(order: MaternOrder) -> f64 {
        order.nu()
    }
}

impl fmt::Display for MaternOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Half => f.write_str("1/2"),
            Self::ThreeHalves => f.write_str("3/2"),
            Self::FiveHalves => f.write_str("5/2"),
        }
    }
}

/// One filter channel: a Matérn kernel shifted to `center_freq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternComponent {
    pub order: MaternOrder,
    /// Signal power `σ²_d`.
    pub variance: f64,
    /// Lengthscale `ℓ_d` in seconds.
    pub lengthscale: f64,
    /// Center frequency `ω_d` in rad/s.
    pub center_freq: f64,
}

impl MaternComponent {
    pub fn new(order: MaternOrder, variance: f64, lengthscale: f64, center_freq: f64) -> Result<Self> {
        let c = Self {
            order,
            variance,
            lengthscale,
            center_freq,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return domain(format!("component variance must be positive, got {}", self.variance));
        }
        if !(self.lengthscale.is_finite() && self.lengthscale > 0.0) {
            return domain(format!(
                "component lengthscale must be positive, got {}",
                self.lengthscale
            ));
        }
        if !(self.center_freq.is_finite() && self.center_freq >= 0.0) {
            return domain(format!(
                "component center frequency must be finite and non-negative, got {}",
                self.center_freq
            ));
        }
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        self.order.rate(self.lengthscale)
    }

    /// Covariance `cos(ω_d τ) · κ_ν(|τ|)`.
    pub fn kernel(&self, tau: f64) -> Result<f64> {
        if !tau.is_finite() {
            return domain(format!("lag must be finite, got {tau}"));
        }
        Ok((self.center_freq * tau).cos() * self.matern(tau))
    }

    /// The unshifted Matérn part of the kernel.
    pub fn matern(&self, tau: f64) -> f64 {
        let r = self.rate() * tau.abs();
        let poly = match self.order {
            MaternOrder::Half => 1.0,
            MaternOrder::ThreeHalves => 1.0 + r,
            MaternOrder::FiveHalves => 1.0 + r + r * r / 3.0,
        };
        self.variance * poly * (-r).exp()
    }

    /// Matérn spectral density centred at zero frequency.
    pub fn baseband_spectral_density(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return domain(format!("frequency must be finite, got {omega}"));
        }
        Ok(self.baseband_unchecked(omega))
    }

    /// Density of the full component, `½[S(ω − ω_d) + S(ω + ω_d)]`.
    pub fn shifted_spectral_density(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return domain(format!("frequency must be finite, got {omega}"));
        }
        Ok(self.shifted_unchecked(omega))
    }

    pub fn shifted_density_on_grid(&self, omegas: &[f64]) -> Result<Vec<f64>> {
        omegas.iter().map(|&w| self.shifted_spectral_density(w)).collect()
    }

    pub(crate) fn baseband_unchecked(&self, omega: f64) -> f64 {
        let lam = self.rate();
        let m = self.order.state_dim() as i32;
        let denom = lam * lam + omega * omega;
        self.order.density_constant() * self.variance * lam.powi(2 * m - 1) / denom.powi(m)
    }

    pub(crate) fn shifted_unchecked(&self, omega: f64) -> f64 {
        0.5 * (self.baseband_unchecked(omega - self.center_freq)
            + self.baseband_unchecked(omega + self.center_freq))
    }
}

/// A bank of Matérn components plus white observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr")]
pub struct SpectralMixtureModel {
    components: Vec<MaternComponent>,
    obs_noise_variance: f64,
    sample_rate: f64,
}

/// Unvalidated mirror of [`SpectralMixtureModel`] for deserialisation.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    components: Vec<MaternComponent>,
    obs_noise_variance: f64,
    sample_rate: f64,
}

impl TryFrom<ModelRepr> for SpectralMixtureModel {
    type Error = crate::Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        if r.components.is_empty() {
            Self::noise_only(r.obs_noise_variance, r.sample_rate)
        } else {
            Self::new(r.components, r.obs_noise_variance, r.sample_rate)
        }
    }
}

impl SpectralMixtureModel {
    pub fn new(components: Vec<MaternComponent>, obs_noise_variance: f64, sample_rate: f64) -> Result<Self> {
        if components.is_empty() {
            return domain("a spectral mixture needs at least one component");
        }
        let model = Self {
            components,
            obs_noise_variance,
            sample_rate,
        };
        model.validate()?;
        Ok(model)
    }

    /// A model with no components, only the white-noise floor.
    ///
    /// Only meaningful for frequency-domain evaluation.
    pub fn noise_only(obs_noise_variance: f64, sample_rate: f64) -> Result<Self> {
        let model = Self {
            components: Vec::new(),
            obs_noise_variance,
            sample_rate,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return domain(format!("sample rate must be positive, got {}", self.sample_rate));
        }
        if !(self.obs_noise_variance.is_finite() && self.obs_noise_variance >= 0.0) {
            return domain(format!(
                "observation noise variance must be non-negative, got {}",
                self.obs_noise_variance
            ));
        }
        let dt = self.dt();
        let nyquist = self.nyquist();
        for (d, c) in self.components.iter().enumerate() {
            c.validate()?;
            if c.lengthscale < 10.0 * dt * f64::EPSILON {
                return domain(format!(
                    "component {d}: lengthscale {} is degenerate for dt = {dt}",
                    c.lengthscale
                ));
            }
            // Allow a few ulps of slack so clipped values survive a round trip.
            if c.center_freq > nyquist * (1.0 + 1e-12) {
                return domain(format!(
                    "component {d}: center frequency {} exceeds Nyquist {nyquist}",
                    c.center_freq
                ));
            }
        }
        Ok(())
    }

    pub fn components(&self) -> &[MaternComponent] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn obs_noise_variance(&self) -> f64 {
        self.obs_noise_variance
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// `π/Δt` in rad/s.
    pub fn nyquist(&self) -> f64 {
        PI * self.sample_rate
    }

    /// Total state dimension `M = Σ 2 m_d`.
    pub fn state_dim(&self) -> usize {
        self.components.iter().map(|c| 2 * c.order.state_dim()).sum()
    }

    pub fn with_obs_noise_variance(&self, obs_noise_variance: f64) -> Result<Self> {
        let model = Self {
            obs_noise_variance,
            ..self.clone()
        };
        model.validate()?;
        Ok(model)
    }

    /// Sum of component kernels at lag `tau` (noise excluded).
    pub fn kernel(&self, tau: f64) -> Result<f64> {
        self.components.iter().map(|c| c.kernel(tau)).sum()
    }

    pub fn kernel_on_grid(&self, taus: &[f64]) -> Result<Vec<f64>> {
        taus.iter().map(|&t| self.kernel(t)).collect()
    }

    /// Signal variance `Σ σ²_d`.
    pub fn signal_variance(&self) -> f64 {
        self.components.iter().map(|c| c.variance).sum()
    }

    /// Expected periodogram for `num_samples` samples on the given grid.
    ///
    /// Densities are scaled by `T/Δt` so that, for data drawn from the model,
    /// `E|ỹ_i|² ≈ γ_i` with `ỹ` the unnormalised DFT. Aliasing is ignored.
    pub fn model_spectrum(&self, freq_grid: &[f64], num_samples: usize) -> Result<Vec<f64>> {
        if num_samples == 0 {
            return domain("model spectrum needs at least one sample");
        }
        let nyquist = self.nyquist() * (1.0 + 1e-12);
        if let Some(w) = freq_grid.iter().find(|w| !(w.is_finite() && **w >= 0.0 && **w <= nyquist)) {
            return domain(format!("grid frequency {w} outside [0, π/Δt]"));
        }
        let t = num_samples as f64;
        let scale = t * self.sample_rate;
        let floor = t * self.obs_noise_variance;
        Ok(freq_grid
            .iter()
            .map(|&w| {
                let s: f64 = self.components.iter().map(|c| c.shifted_unchecked(w)).sum();
                scale * s + floor
            })
            .collect())
    }
}
