//! The missing-data imputation experiment.
//!
//! For each clip and kernel order a filter bank is fitted to the complete
//! clip. Gaps are then cut out, the smoother fills them in, and the
//! reconstruction is scored inside the gaps. Masks depend only on the clip
//! and gap duration, so every order sees the same missing samples.

use std::io::Write;

use probfb::{reconstruct, DiscreteStateSpace, MaternOrder, ObservationSequence, Termination};

use crate::audio::AudioBuffer;
use crate::config::{derive_seed, Config};
use crate::error::{CliError, Result};
use crate::gaps::{make_gaps, GapSpec};
use crate::report::{fmt_num, fmt_opt, CsvOut};
use crate::snr::{global_snr_db, snr_db};
use crate::synth::speech_like;

/// Seed stream reserved for generating synthetic clips.
const SYNTH_STREAM: u64 = 1;
/// Seed stream reserved for gap placement.
const GAP_STREAM: u64 = 2;

/// A clip under a name used in the report.
#[derive(Debug, Clone)]
pub struct Clip {
    pub name: String,
    pub audio: AudioBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    /// The reference is silent inside the gaps, so SNR is undefined.
    Undefined,
    Failed(String),
}

impl CellStatus {
    fn label(&self) -> String {
        match self {
            Self::Ok => "ok".into(),
            Self::Undefined => "undefined".into(),
            Self::Failed(msg) => format!("failed: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub clip: String,
    pub order: MaternOrder,
    pub gap_ms: f64,
    pub gap_snr_db: Option<f64>,
    pub global_snr_db: Option<f64>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub clip: String,
    pub order: MaternOrder,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub objective: Option<f64>,
    pub obs_noise_variance: Option<f64>,
}

/// Median and standard error of the gap SNR across clips.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub order: MaternOrder,
    pub gap_ms: f64,
    pub clips: usize,
    pub median_db: Option<f64>,
    pub std_error_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub cells: Vec<Cell>,
    pub fits: Vec<FitSummary>,
    pub aggregates: Vec<Aggregate>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Sample standard deviation over `√n`.
fn std_error(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((var / n as f64).sqrt())
}

impl ExperimentReport {
    pub fn aggregate(&self, order: MaternOrder, gap_ms: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.order == order && a.gap_ms == gap_ms)
    }

    fn summarise(&mut self, orders: &[MaternOrder], gaps: &[f64]) {
        self.aggregates.clear();
        for &order in orders {
            for &gap_ms in gaps {
                let mut v: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.order == order && c.gap_ms == gap_ms)
                    .filter_map(|c| c.gap_snr_db)
                    .collect();
                self.aggregates.push(Aggregate {
                    order,
                    gap_ms,
                    clips: v.len(),
                    std_error_db: std_error(&v),
                    median_db: median(&mut v),
                });
            }
        }
    }

    pub fn write_cells<W: Write>(&self, out: W) -> Result<()> {
        let mut w = CsvOut::new(out, &["clip", "order", "gap_ms", "gap_snr_db", "global_snr_db", "status"])?;
        for c in &self.cells {
            w.row(&[
                c.clip.clone(),
                c.order.nu().to_string(),
                fmt_num(c.gap_ms),
                fmt_opt(c.gap_snr_db),
                fmt_opt(c.global_snr_db),
                c.status.label(),
            ])?;
        }
        w.finish()
    }

    pub fn write_summary<W: Write>(&self, out: W) -> Result<()> {
        let mut w = CsvOut::new(out, &["order", "gap_ms", "clips", "median_gap_snr_db", "std_error_db"])?;
        for a in &self.aggregates {
            w.row(&[
                a.order.nu().to_string(),
                fmt_num(a.gap_ms),
                a.clips.to_string(),
                fmt_opt(a.median_db),
                fmt_opt(a.std_error_db),
            ])?;
        }
        w.finish()
    }

    pub fn write_fits<W: Write>(&self, out: W) -> Result<()> {
        let mut w = CsvOut::new(
            out,
            &["clip", "order", "iterations", "termination", "whittle_objective", "obs_noise_variance"],
        )?;
        for f in &self.fits {
            w.row(&[
                f.clip.clone(),
                f.order.nu().to_string(),
                f.iterations.to_string(),
                f.termination.map_or_else(|| "failed".into(), |t| format!("{t:?}")),
                fmt_opt(f.objective),
                fmt_opt(f.obs_noise_variance),
            ])?;
        }
        w.finish()
    }
}

/// Loads the configured WAV clips and generates the synthetic ones.
pub fn collect_clips(config: &Config) -> Result<Vec<Clip>> {
    let mut clips = Vec::new();
    for path in &config.experiment.clips {
        clips.push(Clip {
            name: path.display().to_string(),
            audio: crate::audio::read_wav(path)?,
        });
    }
    for i in 0..config.experiment.synthetic_clips {
        let seed = derive_seed(config.seed, &[SYNTH_STREAM, i as u64]);
        clips.push(Clip {
            name: format!("synthetic-{i}"),
            audio: speech_like(&config.synth, seed)?,
        });
    }
    if clips.is_empty() {
        return Err(CliError::Usage("the experiment needs at least one clip".into()));
    }
    Ok(clips)
}

fn score_gap(clip: &Clip, dss: &DiscreteStateSpace, noise: f64, mask: Vec<bool>) -> Result<(Option<f64>, Option<f64>)> {
    let obs = ObservationSequence::new(clip.audio.samples.clone(), mask.clone(), noise)?;
    let rec = reconstruct(dss, &obs, false)?;
    Ok((
        snr_db(&clip.audio.samples, &rec.mean, &mask),
        global_snr_db(&clip.audio.samples, &rec.mean),
    ))
}

/// Runs every (clip, order, gap) cell. Failures are recorded per cell and
/// do not stop the run.
pub fn run_missing_data_experiment(clips: &[Clip], config: &Config) -> Result<ExperimentReport> {
    if clips.is_empty() {
        return Err(CliError::Usage("the experiment needs at least one clip".into()));
    }
    let exp = &config.experiment;
    let mut report = ExperimentReport::default();
    for (ci, clip) in clips.iter().enumerate() {
        let masks: Vec<Result<Vec<bool>>> = exp
            .gap_ms
            .iter()
            .enumerate()
            .map(|(gi, &gap_ms)| {
                let spec = GapSpec {
                    gap_ms,
                    n_gaps: config.gaps.n_gaps,
                    guard_ms: config.gaps.guard_ms,
                    seed: derive_seed(config.seed, &[GAP_STREAM, ci as u64, gi as u64]),
                };
                make_gaps(clip.audio.len(), clip.audio.sample_rate, &spec)
            })
            .collect();

        for &order in &exp.orders {
            let fitted = config.fit_clip(order, &clip.audio).and_then(|res| {
                let dss = DiscreteStateSpace::from_model(&res.model)?;
                Ok((res, dss))
            });
            match &fitted {
                Ok((res, _)) => {
                    log::info!(
                        "{} ν={order}: fit {:?} after {} steps",
                        clip.name,
                        res.termination,
                        res.iterations()
                    );
                    report.fits.push(FitSummary {
                        clip: clip.name.clone(),
                        order,
                        iterations: res.iterations(),
                        termination: Some(res.termination),
                        objective: res.trace.last().copied(),
                        obs_noise_variance: Some(res.model.obs_noise_variance()),
                    });
                }
                Err(e) => {
                    log::warn!("{} ν={order}: fit failed: {e}", clip.name);
                    report.fits.push(FitSummary {
                        clip: clip.name.clone(),
                        order,
                        iterations: 0,
                        termination: None,
                        objective: None,
                        obs_noise_variance: None,
                    });
                }
            }

            for (gi, &gap_ms) in exp.gap_ms.iter().enumerate() {
                let outcome = match (&fitted, &masks[gi]) {
                    (Err(e), _) => Err(format!("fit: {e}")),
                    (_, Err(e)) => Err(format!("mask: {e}")),
                    (Ok((res, dss)), Ok(mask)) => {
                        score_gap(clip, dss, res.model.obs_noise_variance(), mask.clone()).map_err(|e| e.to_string())
                    }
                };
                let cell = match outcome {
                    Ok((gap, global)) => Cell {
                        clip: clip.name.clone(),
                        order,
                        gap_ms,
                        gap_snr_db: gap,
                        global_snr_db: global,
                        status: if gap.is_some() { CellStatus::Ok } else { CellStatus::Undefined },
                    },
                    Err(msg) => Cell {
                        clip: clip.name.clone(),
                        order,
                        gap_ms,
                        gap_snr_db: None,
                        global_snr_db: None,
                        status: CellStatus::Failed(msg),
                    },
                };
                log::debug!("{} ν={order} gap {gap_ms} ms: {:?}", clip.name, cell.gap_snr_db);
                report.cells.push(cell);
            }
        }
    }
    report.summarise(&exp.orders, &exp.gap_ms);
    Ok(report)
}
