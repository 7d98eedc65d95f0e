//! Piecewise-sinusoidal benchmark dataset.
//!
//! The series is a sequence of sine chunks `A_i sin(w_i t + phi_i)` on a
//! shared grid. Phases are chained so each chunk starts at the value the
//! previous chunk ended on whenever that value is attainable under the new
//! amplitude; the arcsin branch is picked to keep the slope sign when both
//! branches match the value. When the previous value exceeds the new
//! amplitude the start is clamped to `sign(prev) * A` and the series has an
//! unavoidable step there.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RewtsError};
use crate::timeseries::TimeSeriesFrame;

/// Default sampling step of the sine argument per tick.
///
/// Chosen so that every chunk boundary of both built-in parameter splits is
/// value-continuous (no amplitude clamping) and the fastest built-in
/// frequency stays well below the Nyquist limit.
pub const DEFAULT_DT: f64 = 0.1271;

pub const CHUNK_POINTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineChunkSpec {
    pub amplitude: f64,
    pub frequency: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineDatasetSpec {
    pub chunks: Vec<SineChunkSpec>,
    /// Sampling interval of the sine argument.
    pub dt: f64,
    /// Seed for the optional observation-noise hook.
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of additive Gaussian noise; 0 disables it.
    #[serde(default)]
    pub noise_std: f64,
}

impl SineDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.chunks.is_empty() {
            return Err(RewtsError::Parameter("sine spec needs at least one chunk".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(RewtsError::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(RewtsError::Parameter("noise_std must be nonnegative".into()));
        }
        for (i, c) in self.chunks.iter().enumerate() {
            if !(c.amplitude.is_finite() && c.amplitude > 0.0) {
                return Err(RewtsError::Parameter(format!("chunk {i}: amplitude must be positive")));
            }
            if !(c.frequency.is_finite() && c.frequency > 0.0) {
                return Err(RewtsError::Parameter(format!("chunk {i}: frequency must be positive")));
            }
            if c.n_points < 2 {
                return Err(RewtsError::Parameter(format!("chunk {i}: n_points must be >= 2")));
            }
        }
        Ok(())
    }
}

/// Per-chunk generation record written next to the dataset, used by tests
/// and by normalized evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkGroundTruth {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineGroundTruth {
    pub dt: f64,
    pub chunks: Vec<ChunkGroundTruth>,
}

impl SineGroundTruth {
    pub fn amplitudes(&self) -> Vec<f64> {
        self.chunks.iter().map(|c| c.amplitude).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.chunks.iter().map(|c| c.frequency).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// The built-in 8-chunk benchmark parameters, 500 points per chunk.
pub fn benchmark_spec(split: Split) -> SineDatasetSpec {
    let (amplitudes, frequencies): (&[f64], &[f64]) = match split {
        Split::Train => (
            &[0.5, 2.0, 20.0, 2.0, 2.0, 0.5, 2.0, 5.0],
            &[10.0, 2.0, 5.0, 1.0, 0.5, 8.0, 3.0, 1.0],
        ),
        Split::Test => (
            &[0.75, 10.0, 3.0, 0.5, 5.0, 1.25, 3.0, 4.0],
            &[8.0, 0.75, 7.0, 11.0, 0.65, 4.0, 2.0, 5.0],
        ),
    };
    SineDatasetSpec {
        chunks: amplitudes
            .iter()
            .zip(frequencies)
            .map(|(&amplitude, &frequency)| SineChunkSpec {
                amplitude,
                frequency,
                n_points: CHUNK_POINTS,
            })
            .collect(),
        dt: DEFAULT_DT,
        seed: 0,
        noise_std: 0.0,
    }
}

/// Generate the dataset together with its ground-truth sidecar.
pub fn generate_sine_dataset(spec: &SineDatasetSpec) -> Result<(TimeSeriesFrame, SineGroundTruth)> {
    spec.validate()?;
    let total: usize = spec.chunks.iter().map(|c| c.n_points).sum();
    let mut values = Vec::with_capacity(total);
    let mut chunks = Vec::with_capacity(spec.chunks.len());

    let mut index0 = 0usize;
    let mut prev_value: Option<f64> = None;
    let mut prev_slope = 0.0f64;
    for c in &spec.chunks {
        let t_start = index0 as f64 * spec.dt;
        let phase = match prev_value {
            None => 0.0,
            Some(prev) => {
                let clamped = (prev / c.amplitude).clamp(-1.0, 1.0);
                let base = clamped.asin();
                let branch = if prev_slope >= 0.0 {
                    base
                } else {
                    std::f64::consts::PI - base
                };
                branch - c.frequency * t_start
            }
        };
        for k in 0..c.n_points {
            let t = (index0 + k) as f64 * spec.dt;
            values.push(c.amplitude * (c.frequency * t + phase).sin());
        }
        let t_end = (index0 + c.n_points - 1) as f64 * spec.dt;
        prev_value = Some(*values.last().expect("chunk has points"));
        prev_slope = c.amplitude * c.frequency * (c.frequency * t_end + phase).cos();
        chunks.push(ChunkGroundTruth {
            amplitude: c.amplitude,
            frequency: c.frequency,
            phase,
            start: index0,
            end: index0 + c.n_points,
        });
        index0 += c.n_points;
    }

    if spec.noise_std > 0.0 {
        add_gaussian_noise(&mut values, spec.noise_std, spec.seed);
    }

    let frame = TimeSeriesFrame::univariate(spec.dt, values)?;
    Ok((frame, SineGroundTruth { dt: spec.dt, chunks }))
}

/// Additive Gaussian noise from a seeded generator (Box-Muller over a
/// splitmix64 stream, so output is identical across platforms).
fn add_gaussian_noise(values: &mut [f64], std: f64, seed: u64) {
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next_u64 = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let mut uniform = move || (next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let mut i = 0;
    while i < values.len() {
        let u1: f64 = uniform().max(f64::MIN_POSITIVE);
        let u2: f64 = uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        values[i] += std * r * theta.cos();
        if i + 1 < values.len() {
            values[i + 1] += std * r * theta.sin();
        }
        i += 2;
    }
}
