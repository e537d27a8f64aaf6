//! The TOML configuration file.
//!
//! Every section and key is optional; missing keys take the defaults below.
//! Command-line flags override the corresponding keys after loading.

use std::path::{Path, PathBuf};

use probfb::whittle::{default_lengthscale, empirical_variance};
use probfb::{compute_periodogram, fit, init_model, FitConfig, FitResult, MaternOrder, SpectralMixtureModel};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{CliError, Result};
use crate::synth::SpeechLikeConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub model: ModelConfig,
    pub fit: FitConfig,
    pub gaps: GapConfig,
    pub experiment: ExperimentConfig,
    pub synth: SpeechLikeConfig,
    pub views: ViewsConfig,
}

/// Initial filter bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub order: MaternOrder,
    pub filters: usize,
    /// Highest initial centre as a fraction of Nyquist.
    pub nyquist_fraction: f64,
    /// Shared initial lengthscale in seconds; derived from the centre spacing when absent.
    pub lengthscale: Option<f64>,
    /// Total initial signal variance; the clip's empirical variance when absent.
    pub variance: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            order: MaternOrder::ThreeHalves,
            filters: 40,
            nyquist_fraction: 0.95,
            lengthscale: None,
            variance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    pub gap_ms: f64,
    pub n_gaps: usize,
    pub guard_ms: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            gap_ms: 10.0,
            n_gaps: 5,
            guard_ms: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub orders: Vec<MaternOrder>,
    pub gap_ms: Vec<f64>,
    /// WAV files to use as clips.
    pub clips: Vec<PathBuf>,
    /// Speech-like clips generated from the `[synth]` settings, added after `clips`.
    pub synthetic_clips: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            orders: MaternOrder::ALL.to_vec(),
            gap_ms: vec![1.0, 5.0, 10.0, 20.0],
            clips: Vec::new(),
            synthetic_clips: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewsConfig {
    pub spectrum_points: usize,
    pub max_lag_ms: f64,
    pub lag_points: usize,
    pub gram_size: usize,
    pub prior_samples: usize,
    pub sample_len: usize,
    /// Decimation of the subband spectrogram, in samples.
    pub hop: usize,
}

impl Default for ViewsConfig {
    fn default() -> Self {
        Self {
            spectrum_points: 1024,
            max_lag_ms: 10.0,
            lag_points: 400,
            gram_size: 100,
            prior_samples: 3,
            sample_len: 800,
            hop: 16,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |msg: String| Err(CliError::Usage(msg));
        self.fit.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.model.filters == 0 {
            return usage("model.filters must be at least 1".into());
        }
        if !(self.model.nyquist_fraction > 0.0 && self.model.nyquist_fraction <= 1.0) {
            return usage(format!("model.nyquist_fraction must lie in (0, 1], got {}", self.model.nyquist_fraction));
        }
        if self.experiment.gap_ms.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return usage("experiment.gap_ms entries must be non-negative".into());
        }
        if !(self.synth.duration_s > 0.0 && self.synth.sample_rate > 0.0) {
            return usage("synth duration and sample rate must be positive".into());
        }
        if self.views.hop == 0 || self.views.gram_size == 0 || self.views.lag_points < 2 || self.views.spectrum_points < 2 {
            return usage("views sizes must be positive (lag_points and spectrum_points at least 2)".into());
        }
        Ok(())
    }

    /// The initial bank for a clip, or for the synthetic sample rate.
    pub fn initial_model(&self, order: MaternOrder, clip: Option<&AudioBuffer>) -> Result<SpectralMixtureModel> {
        let m = &self.model;
        let rate = clip.map_or(self.synth.sample_rate, |c| c.sample_rate);
        let variance = match (m.variance, clip) {
            (Some(v), _) => v,
            (None, Some(c)) => empirical_variance(&c.samples),
            (None, None) => 1.0,
        };
        if !(variance > 0.0) {
            return Err(CliError::Data("clip is silent; cannot initialise the filter variances".into()));
        }
        let lengthscale = m
            .lengthscale
            .unwrap_or_else(|| default_lengthscale(m.filters, rate, m.nyquist_fraction, order));
        Ok(init_model(m.filters, rate, m.nyquist_fraction, order, variance, lengthscale)?)
    }

    /// Fits a bank of the given order to a whole clip.
    pub fn fit_clip(&self, order: MaternOrder, clip: &AudioBuffer) -> Result<FitResult> {
        let init = self.initial_model(order, Some(clip))?;
        let p = compute_periodogram(&clip.samples, 1.0 / clip.sample_rate)?;
        Ok(fit(&init, &p, &self.fit)?)
    }
}

/// A seed for one unit of work, derived from the master seed and a path
/// of indices so that results do not depend on execution order.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |seed, &part| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(part);
        rng.next_u64()
    })
}
