//! Synthetic speech-like test signals.
//!
//! A glottal-style harmonic source with drifting pitch is shaped by three
//! slowly moving formant resonances, gated by a syllable-rate envelope and
//! mixed with a little breath noise. This stands in for real recordings,
//! which are not redistributable.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeechLikeConfig {
    pub duration_s: f64,
    pub sample_rate: f64,
    /// Harmonics stop below this frequency.
    pub bandwidth_hz: f64,
    /// Breath noise level relative to the voiced part.
    pub noise_level: f64,
    pub peak: f64,
}

impl Default for SpeechLikeConfig {
    fn default() -> Self {
        Self {
            duration_s: 1.0,
            sample_rate: 16000.0,
            bandwidth_hz: 4000.0,
            noise_level: 0.02,
            peak: 0.5,
        }
    }
}

struct Formant {
    center: f64,
    width: f64,
    drift: f64,
    rate: f64,
    phase: f64,
}

impl Formant {
    fn center_at(&self, t: f64) -> f64 {
        self.center * (1.0 + self.drift * (2.0 * PI * self.rate * t + self.phase).sin())
    }

    fn gain(&self, f: f64, t: f64) -> f64 {
        let d = (f - self.center_at(t)) / self.width;
        1.0 / (1.0 + d * d)
    }
}

/// One clip, fully determined by `seed`.
pub fn speech_like(config: &SpeechLikeConfig, seed: u64) -> Result<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = config.sample_rate;
    let n = (config.duration_s * fs).round() as usize;

    let f0 = rng.gen_range(100.0..220.0);
    let vibrato = (rng.gen_range(0.04..0.1), rng.gen_range(0.4..1.2), rng.gen_range(0.0..2.0 * PI));
    let syllable_rate = rng.gen_range(3.0..5.5);
    let syllable_phase = rng.gen_range(0.0..PI);
    let formants = [
        (rng.gen_range(300.0..800.0), 90.0),
        (rng.gen_range(900.0..2200.0), 120.0),
        (rng.gen_range(2300.0..3200.0), 160.0),
    ]
    .map(|(center, width)| Formant {
        center,
        width,
        drift: rng.gen_range(0.05..0.2),
        rate: rng.gen_range(0.5..2.0),
        phase: rng.gen_range(0.0..2.0 * PI),
    });
    let harmonics = (config.bandwidth_hz / (f0 * (1.0 + vibrato.0))).floor().max(1.0) as usize;
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();

    let mut y = Vec::with_capacity(n);
    let mut theta = 0.0;
    let mut breath = 0.0;
    // One-pole low-pass at about 2 kHz for the breath noise.
    let pole = (-2.0 * PI * 2000.0 / fs).exp();
    for k in 0..n {
        let t = k as f64 / fs;
        let pitch = f0 * (1.0 + vibrato.0 * (2.0 * PI * vibrato.1 * t + vibrato.2).sin());
        theta += 2.0 * PI * pitch / fs;
        let mut voiced = 0.0;
        for (h, phase) in phases.iter().enumerate() {
            let order = (h + 1) as f64;
            let f = order * pitch;
            if f >= config.bandwidth_hz {
                break;
            }
            let shape: f64 = formants.iter().map(|fm| fm.gain(f, t)).sum::<f64>() + 0.05;
            voiced += shape / order.powf(0.7) * (order * theta + phase).sin();
        }
        let gate = (PI * syllable_rate * t + syllable_phase).sin().powi(2);
        let envelope = 0.15 + 0.85 * gate;
        let e: f64 = StandardNormal.sample(&mut rng);
        breath = pole * breath + (1.0 - pole) * e;
        y.push(envelope * (voiced + config.noise_level * 10.0 * breath));
    }
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut y {
            *v *= config.peak / peak;
        }
    }
    AudioBuffer::new(y, fs)
}
