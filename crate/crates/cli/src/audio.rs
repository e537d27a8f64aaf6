//! WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::error::{CliError, Result};

/// Mono audio with samples nominally in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(CliError::Data(format!("sample rate must be positive, got {sample_rate}")));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(CliError::Data(format!("sample {k} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Sample encodings accepted by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Reads 16-bit PCM or 32-bit float WAV; multichannel files are averaged
/// down to mono with a warning.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let mut reader = hound::WavReader::open(path).map_err(|e| CliError::io(path, e))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(CliError::Data(format!(
                "{}: unsupported encoding {format:?} with {bits} bits (expected PCM16 or float32)",
                path.display()
            )))
        }
    }
    .map_err(|e| CliError::io(path, e))?;

    let channels = usize::from(spec.channels);
    let samples = if channels == 1 {
        interleaved
    } else {
        log::warn!("{}: averaging {channels} channels down to mono", path.display());
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioBuffer::new(samples, f64::from(spec.sample_rate))
}

pub fn write_wav(path: &Path, audio: &AudioBuffer, encoding: WavEncoding) -> Result<()> {
    let rate = audio.sample_rate.round();
    if (rate - audio.sample_rate).abs() > 1e-9 * rate || rate > f64::from(u32::MAX) {
        return Err(CliError::Data(format!(
            "WAV needs an integral sample rate, got {}",
            audio.sample_rate
        )));
    }
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| CliError::io(path, e))?;
    for &v in &audio.samples {
        let res = match encoding {
            WavEncoding::Pcm16 => writer.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            WavEncoding::Float32 => writer.write_sample(v as f32),
        };
        res.map_err(|e| CliError::io(path, e))?;
    }
    writer.finalize().map_err(|e| CliError::io(path, e))
}
