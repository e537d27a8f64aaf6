//! The subcommands behind the `probfb` binary.

use std::path::{Path, PathBuf};

use probfb::{
    reconstruct, sample_posterior_lean, sample_prior, DiscreteStateSpace, MaternOrder, ObservationSequence,
    SpectralMixtureModel,
};

use crate::audio::{read_wav, write_wav, AudioBuffer, WavEncoding};
use crate::config::{derive_seed, Config};
use crate::error::{CliError, Result};
use crate::experiment::{collect_clips, run_missing_data_experiment};
use crate::gaps::{make_gaps, GapSpec};
use crate::report::{fmt_num, CsvOut};
use crate::snr::{global_snr_db, snr_db};
use crate::synth::speech_like;
use crate::views::{export_spectrogram, export_views};

// Seed streams for the single-clip commands, disjoint from the experiment's.
const IMPUTE_STREAM: u64 = 10;
const SAMPLE_STREAM: u64 = 11;
const VIEWS_STREAM: u64 = 12;
const SYNTH_STREAM: u64 = 13;

/// Where a command gets its filter bank from.
#[derive(Debug, Clone, Default)]
pub struct ModelSource {
    /// A model file written by `fit`.
    pub model: Option<PathBuf>,
    /// A clip to fit to when no model file is given.
    pub input: Option<PathBuf>,
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn load_model(path: &Path) -> Result<SpectralMixtureModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn save_model(model: &SpectralMixtureModel, path: &Path) -> Result<()> {
    let text = toml::to_string(model).map_err(|e| CliError::Data(format!("cannot serialise model: {e}")))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_clip(input: Option<&Path>) -> Result<Option<AudioBuffer>> {
    input.map(read_wav).transpose()
}

fn require_clip(input: Option<&Path>) -> Result<AudioBuffer> {
    load_clip(input)?.ok_or_else(|| CliError::Usage("this command needs --input".into()))
}

/// The model from `--model`, else fitted to the clip, else the initial bank.
fn resolve_model(config: &Config, source: &ModelSource, clip: Option<&AudioBuffer>) -> Result<SpectralMixtureModel> {
    if let Some(path) = &source.model {
        let model = load_model(path)?;
        if let Some(c) = clip {
            if c.sample_rate != model.sample_rate() {
                return Err(CliError::Data(format!(
                    "model sample rate {} Hz does not match the clip's {} Hz",
                    model.sample_rate(),
                    c.sample_rate
                )));
            }
        }
        return Ok(model);
    }
    match clip {
        Some(c) => Ok(config.fit_clip(config.model.order, c)?.model),
        None => config.initial_model(config.model.order, None),
    }
}

/// Fits a bank to a clip (or a synthetic clip) and writes `model.toml`
/// and the objective trace.
pub fn run_fit(config: &Config, input: Option<&Path>, out: &Path) -> Result<SpectralMixtureModel> {
    let clip = match load_clip(input)? {
        Some(c) => c,
        None => speech_like(&config.synth, derive_seed(config.seed, &[SYNTH_STREAM, 0]))?,
    };
    let res = config.fit_clip(config.model.order, &clip)?;
    ensure_dir(out)?;
    save_model(&res.model, &out.join("model.toml"))?;
    let mut w = CsvOut::new(create(&out.join("fit_trace.csv"))?, &["iteration", "objective"])?;
    for (i, v) in res.trace.iter().enumerate() {
        w.row(&[i.to_string(), fmt_num(*v)])?;
    }
    w.finish()?;
    println!(
        "fit: ν={} D={} stopped after {} steps ({:?}), objective {}",
        config.model.order,
        res.model.num_components(),
        res.iterations(),
        res.termination,
        fmt_num(*res.trace.last().unwrap_or(&f64::NAN)),
    );
    Ok(res.model)
}

/// Writes the smoothed subband spectrogram of a clip.
pub fn run_analyze(config: &Config, source: &ModelSource, out: &Path) -> Result<()> {
    let clip = require_clip(source.input.as_deref())?;
    let model = resolve_model(config, source, Some(&clip))?;
    ensure_dir(out)?;
    export_spectrogram(&model, &clip, config.views.hop, &out.join("spectrogram.csv"))
}

/// Masks gaps in a clip, reconstructs them, and writes the imputed WAV and
/// a per-sample CSV.
pub fn run_impute(config: &Config, source: &ModelSource, out: &Path) -> Result<(Option<f64>, Option<f64>)> {
    let clip = require_clip(source.input.as_deref())?;
    let model = resolve_model(config, source, Some(&clip))?;
    let spec = GapSpec {
        gap_ms: config.gaps.gap_ms,
        n_gaps: config.gaps.n_gaps,
        guard_ms: config.gaps.guard_ms,
        seed: derive_seed(config.seed, &[IMPUTE_STREAM]),
    };
    let mask = make_gaps(clip.len(), clip.sample_rate, &spec)?;
    let dss = DiscreteStateSpace::from_model(&model)?;
    let obs = ObservationSequence::new(clip.samples.clone(), mask.clone(), model.obs_noise_variance())?;
    let rec = reconstruct(&dss, &obs, true)?;

    ensure_dir(out)?;
    let imputed: Vec<f64> = (0..clip.len())
        .map(|k| if mask[k] { rec.mean[k] } else { clip.samples[k] })
        .collect();
    write_wav(
        &out.join("imputed.wav"),
        &AudioBuffer::new(imputed, clip.sample_rate)?,
        WavEncoding::Float32,
    )?;
    let mut w = CsvOut::new(create(&out.join("impute.csv"))?, &["sample", "missing", "reference", "mean", "std"])?;
    for k in 0..clip.len() {
        w.row(&[
            k.to_string(),
            u8::from(mask[k]).to_string(),
            fmt_num(clip.samples[k]),
            fmt_num(rec.mean[k]),
            fmt_num(rec.var[k].max(0.0).sqrt()),
        ])?;
    }
    w.finish()?;
    let gap = snr_db(&clip.samples, &rec.mean, &mask);
    let global = global_snr_db(&clip.samples, &rec.mean);
    println!(
        "impute: {} gaps of {} ms, gap SNR {} dB, global SNR {} dB",
        config.gaps.n_gaps,
        config.gaps.gap_ms,
        gap.map_or("undefined".into(), fmt_num),
        global.map_or("undefined".into(), fmt_num),
    );
    Ok((gap, global))
}

/// Writes `count` sample paths as WAV files: posterior draws given
/// `--input`, prior draws of `duration_s` seconds otherwise.
pub fn run_sample(config: &Config, source: &ModelSource, count: usize, duration_s: f64, out: &Path) -> Result<Vec<PathBuf>> {
    let clip = load_clip(source.input.as_deref())?;
    let model = resolve_model(config, source, clip.as_ref())?;
    let dss = DiscreteStateSpace::from_model(&model)?;
    let seed = derive_seed(config.seed, &[SAMPLE_STREAM]);
    let (draws, prefix) = match &clip {
        Some(c) => {
            let obs = ObservationSequence::fully_observed(c.samples.clone(), model.obs_noise_variance())?;
            (sample_posterior_lean(&dss, &obs, count, seed)?, "posterior")
        }
        None => {
            if !(duration_s > 0.0) {
                return Err(CliError::Usage("--duration must be positive".into()));
            }
            let len = (duration_s * model.sample_rate()).round() as usize;
            let draws = (0..count)
                .map(|i| Ok(sample_prior(&dss, len, model.obs_noise_variance(), seed.wrapping_add(i as u64))?.observations))
                .collect::<Result<Vec<_>>>()?;
            (draws, "prior")
        }
    };
    ensure_dir(out)?;
    let mut paths = Vec::new();
    for (i, d) in draws.into_iter().enumerate() {
        let path = out.join(format!("{prefix}_{i}.wav"));
        write_wav(&path, &AudioBuffer::new(d, model.sample_rate())?, WavEncoding::Float32)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Runs the missing-data experiment and writes `cells.csv`, `summary.csv`
/// and `fits.csv`.
pub fn run_experiment(config: &Config, out: &Path) -> Result<()> {
    let clips = collect_clips(config)?;
    let report = run_missing_data_experiment(&clips, config)?;
    ensure_dir(out)?;
    report.write_cells(create(&out.join("cells.csv"))?)?;
    report.write_summary(create(&out.join("summary.csv"))?)?;
    report.write_fits(create(&out.join("fits.csv"))?)?;
    for a in &report.aggregates {
        println!(
            "ν={} gap {} ms: median gap SNR {} dB (± {})",
            a.order,
            a.gap_ms,
            a.median_db.map_or("undefined".into(), fmt_num),
            a.std_error_db.map_or("n/a".into(), fmt_num),
        );
    }
    Ok(())
}

/// Writes the spectrum, kernel, Gram, prior-sample and (with a clip)
/// spectrogram views.
pub fn run_views(config: &Config, source: &ModelSource, out: &Path) -> Result<Vec<PathBuf>> {
    let clip = load_clip(source.input.as_deref())?;
    let model = resolve_model(config, source, clip.as_ref())?;
    export_views(
        &model,
        clip.as_ref(),
        &config.views,
        config.fit.smoothing_halfwidth,
        derive_seed(config.seed, &[VIEWS_STREAM]),
        out,
    )
}

/// Writes speech-like clips from the `[synth]` settings.
pub fn run_synth(config: &Config, count: usize, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    (0..count)
        .map(|i| {
            let audio = speech_like(&config.synth, derive_seed(config.seed, &[SYNTH_STREAM, i as u64]))?;
            let path = out.join(format!("speech_like_{i}.wav"));
            write_wav(&path, &audio, WavEncoding::Float32)?;
            Ok(path)
        })
        .collect()
}

/// Parses `0.5`, `1.5` or `2.5`.
pub fn parse_order(s: &str) -> std::result::Result<MaternOrder, String> {
    let nu: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    MaternOrder::from_nu(nu).map_err(|e| e.to_string())
}

