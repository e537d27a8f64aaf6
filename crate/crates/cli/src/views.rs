//! CSV exports of the four views of a filter bank and of posterior
//! subband spectrograms.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use probfb::{
    compute_periodogram, extract_subbands, sample_prior, smooth, smooth_spectrum, CovarianceStorage,
    DiscreteStateSpace, ObservationSequence, SpectralMixtureModel,
};

use crate::audio::AudioBuffer;
use crate::config::ViewsConfig;
use crate::error::{CliError, Result};
use crate::report::{fmt_num, CsvOut};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn component_headers(first: &[&str], model: &SpectralMixtureModel) -> Vec<String> {
    let mut h: Vec<String> = first.iter().map(|s| s.to_string()).collect();
    h.extend((1..=model.num_components()).map(|d| format!("component_{d}")));
    h
}

/// Spectral density against frequency in Hz, per component and in total.
///
/// The `model_density` column includes the observation-noise floor
/// `σ²_y/f_s`. With a clip, the smoothed periodogram is rescaled by
/// `1/(T f_s)` into the same units and read at the nearest bin.
pub fn export_spectrum(
    model: &SpectralMixtureModel,
    clip: Option<&AudioBuffer>,
    points: usize,
    smoothing_halfwidth: usize,
    path: &Path,
) -> Result<()> {
    let nyquist = model.nyquist();
    let grid: Vec<f64> = (0..points).map(|i| nyquist * i as f64 / (points - 1) as f64).collect();
    let floor = model.obs_noise_variance() / model.sample_rate();
    let periodogram = match clip {
        Some(c) => {
            if (c.sample_rate - model.sample_rate()).abs() > 1e-9 * c.sample_rate {
                return Err(CliError::Data("clip and model sample rates differ".into()));
            }
            let p = compute_periodogram(&c.samples, 1.0 / c.sample_rate)?;
            Some(smooth_spectrum(&p, smoothing_halfwidth))
        }
        None => None,
    };

    let mut header = vec!["freq_hz", "model_density"];
    if periodogram.is_some() {
        header.push("periodogram_density");
    }
    let header = component_headers(&header, model);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = CsvOut::new(create(path)?, &header)?;
    for &omega in &grid {
        let parts = model
            .components()
            .iter()
            .map(|c| c.shifted_spectral_density(omega))
            .collect::<probfb::Result<Vec<f64>>>()?;
        let mut row = vec![omega / (2.0 * PI), parts.iter().sum::<f64>() + floor];
        if let Some(p) = &periodogram {
            let t = p.num_samples();
            let bin = ((omega * t as f64 * p.dt() / (2.0 * PI)).round() as usize).min(t / 2);
            row.push(p.power()[bin] / (t as f64 * model.sample_rate()));
        }
        row.extend(parts);
        w.numbers(&row)?;
    }
    w.finish()
}

/// Kernel values against lag in seconds, per component and in total.
pub fn export_kernel(model: &SpectralMixtureModel, max_lag: f64, points: usize, path: &Path) -> Result<()> {
    let header = component_headers(&["lag_s", "kernel"], model);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = CsvOut::new(create(path)?, &header)?;
    for i in 0..points {
        let tau = max_lag * i as f64 / (points - 1) as f64;
        let parts = model
            .components()
            .iter()
            .map(|c| c.kernel(tau))
            .collect::<probfb::Result<Vec<f64>>>()?;
        let mut row = vec![tau, parts.iter().sum()];
        row.extend(parts);
        w.numbers(&row)?;
    }
    w.finish()
}

/// The covariance matrix of the process at `size` evenly spaced times
/// spanning `max_lag`. The first column holds the row time.
pub fn export_gram(model: &SpectralMixtureModel, max_lag: f64, size: usize, path: &Path) -> Result<()> {
    let times: Vec<f64> = (0..size)
        .map(|i| if size > 1 { max_lag * i as f64 / (size - 1) as f64 } else { 0.0 })
        .collect();
    let mut header = vec!["time_s".to_string()];
    header.extend((0..size).map(|j| format!("t{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = CsvOut::new(create(path)?, &header)?;
    for &ti in &times {
        let mut row = vec![ti];
        for &tj in &times {
            row.push(model.kernel(ti - tj)?);
        }
        w.numbers(&row)?;
    }
    w.finish()
}

/// Noise-free prior draws, one column per sample path.
pub fn export_prior_samples(model: &SpectralMixtureModel, count: usize, len: usize, seed: u64, path: &Path) -> Result<()> {
    let dss = DiscreteStateSpace::from_model(model)?;
    let paths = (0..count)
        .map(|i| sample_prior(&dss, len, 0.0, seed.wrapping_add(i as u64)).map(|s| s.signal))
        .collect::<probfb::Result<Vec<_>>>()?;
    let mut header = vec!["time_s".to_string()];
    header.extend((1..=count).map(|i| format!("sample_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = CsvOut::new(create(path)?, &header)?;
    for k in 0..len {
        let mut row = vec![k as f64 * model.dt()];
        row.extend(paths.iter().map(|p| p[k]));
        w.numbers(&row)?;
    }
    w.finish()
}

/// Posterior subband amplitude and in-phase variance per channel, every
/// `hop` samples, in long format.
pub fn export_spectrogram(model: &SpectralMixtureModel, clip: &AudioBuffer, hop: usize, path: &Path) -> Result<()> {
    if (clip.sample_rate - model.sample_rate()).abs() > 1e-9 * clip.sample_rate {
        return Err(CliError::Data("clip and model sample rates differ".into()));
    }
    let dss = DiscreteStateSpace::from_model(model)?;
    let obs = ObservationSequence::fully_observed(clip.samples.clone(), model.obs_noise_variance())?;
    let post = smooth(&dss, &obs, CovarianceStorage::Projected)?;
    let bands = extract_subbands(&dss, &post)?;
    let mut w = CsvOut::new(create(path)?, &["time_s", "channel", "center_hz", "amplitude", "real_var"])?;
    for k in (0..clip.len()).step_by(hop.max(1)) {
        for (d, (band, comp)) in bands.channels.iter().zip(model.components()).enumerate() {
            w.row(&[
                fmt_num(k as f64 * model.dt()),
                (d + 1).to_string(),
                fmt_num(comp.center_freq / (2.0 * PI)),
                fmt_num(band.re[k].hypot(band.im[k])),
                fmt_num(band.real_var[k]),
            ])?;
        }
    }
    w.finish()
}

/// Writes all views into `dir` and returns the file paths.
pub fn export_views(
    model: &SpectralMixtureModel,
    clip: Option<&AudioBuffer>,
    config: &ViewsConfig,
    smoothing_halfwidth: usize,
    seed: u64,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let max_lag = config.max_lag_ms / 1000.0;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    export_spectrum(model, clip, config.spectrum_points, smoothing_halfwidth, &out("spectrum.csv"))?;
    export_kernel(model, max_lag, config.lag_points, &out("kernel.csv"))?;
    export_gram(model, max_lag, config.gram_size, &out("gram.csv"))?;
    export_prior_samples(model, config.prior_samples, config.sample_len, seed, &out("samples.csv"))?;
    if let Some(c) = clip {
        export_spectrogram(model, c, config.hop, &out("spectrogram.csv"))?;
    }
    Ok(written)
}
