//! Regulation reference signal: loading, scaling to the fleet and resampling
//! onto the simulation grid.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::battery::BatteryParams;
use crate::format::sig9;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("signal file contains no samples")]
    Empty,
    #[error("signal is identically zero and cannot be normalized")]
    AllZero,
    #[error("scale fraction must be positive and finite, got {0}")]
    ScaleFraction(f64),
    #[error("battery ramp limits must be positive to scale against, got {0}")]
    NoRampCapability(f64),
    #[error("signal ends at {end_seconds} s but the horizon needs {needed_seconds} s")]
    TooShort {
        end_seconds: f64,
        needed_seconds: f64,
    },
    #[error("step must be positive, got {0}")]
    Step(f64),
    #[error("reading signal {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t_seconds: f64,
    /// kW once scaled; dimensionless before.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulationSignal {
    pub samples: Vec<Sample>,
    pub source: String,
    /// Product of every scale factor applied so far.
    pub scale: f64,
}

impl RegulationSignal {
    /// Builds a signal from in-memory pairs, enforcing the same rules as the
    /// file loader.
    pub fn from_pairs(
        source: impl Into<String>,
        pairs: &[(f64, f64)],
    ) -> Result<Self, SignalError> {
        let mut samples = Vec::with_capacity(pairs.len());
        for (i, &(t, v)) in pairs.iter().enumerate() {
            push_sample(&mut samples, t, v, i + 1)?;
        }
        if samples.is_empty() {
            return Err(SignalError::Empty);
        }
        Ok(RegulationSignal {
            samples,
            source: source.into(),
            scale: 1.0,
        })
    }

    pub fn peak(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.value.abs())
            .fold(0.0, f64::max)
    }

    pub fn end_seconds(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t_seconds)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{}", sig9(s.t_seconds), sig9(s.value));
        }
        out
    }
}

fn push_sample(samples: &mut Vec<Sample>, t: f64, v: f64, line: usize) -> Result<(), SignalError> {
    if !t.is_finite() || !v.is_finite() {
        return Err(SignalError::Parse {
            line,
            reason: "non-finite value".into(),
        });
    }
    if let Some(prev) = samples.last() {
        if t <= prev.t_seconds {
            return Err(SignalError::Parse {
                line,
                reason: format!("time {t} does not increase past {}", prev.t_seconds),
            });
        }
    }
    samples.push(Sample {
        t_seconds: t,
        value: v,
    });
    Ok(())
}

/// Parses two-column `seconds,value` text. A non-numeric first row is taken
/// as a header; blank lines and `#` comments are skipped.
pub fn parse_signal(text: &str, source: &str) -> Result<RegulationSignal, SignalError> {
    let mut samples = Vec::new();
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [t, v] => t.parse::<f64>().ok().zip(v.parse::<f64>().ok()),
            _ => None,
        };
        let is_first = std::mem::replace(&mut first, false);
        match parsed {
            Some((t, v)) => push_sample(&mut samples, t, v, line)?,
            None if is_first && fields.iter().any(|f| f.parse::<f64>().is_err()) => continue,
            None => {
                return Err(SignalError::Parse {
                    line,
                    reason: format!("expected two numeric columns, got `{row}`"),
                })
            }
        }
    }
    if samples.is_empty() {
        return Err(SignalError::Empty);
    }
    Ok(RegulationSignal {
        samples,
        source: source.to_string(),
        scale: 1.0,
    })
}

pub fn load_signal(path: &Path) -> Result<RegulationSignal, SignalError> {
    let text = std::fs::read_to_string(path).map_err(|source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_signal(&text, &path.display().to_string())
}

/// Rescales so the peak magnitude equals `scale_fraction · min(R+, R-)`.
pub fn normalize_and_scale(
    signal: &RegulationSignal,
    battery: &BatteryParams,
    scale_fraction: f64,
) -> Result<RegulationSignal, SignalError> {
    if !(scale_fraction.is_finite() && scale_fraction > 0.0) {
        return Err(SignalError::ScaleFraction(scale_fraction));
    }
    let capability = battery.ramp_up.min(battery.ramp_down);
    if capability <= 0.0 {
        return Err(SignalError::NoRampCapability(capability));
    }
    let peak = signal.peak();
    if peak == 0.0 {
        return Err(SignalError::AllZero);
    }
    let target = scale_fraction * capability;
    let factor = target / peak;
    let samples = signal
        .samples
        .iter()
        .map(|s| Sample {
            t_seconds: s.t_seconds,
            // dividing first keeps the peak sample exactly at ±target
            value: s.value / peak * target,
        })
        .collect();
    Ok(RegulationSignal {
        samples,
        source: signal.source.clone(),
        scale: signal.scale * factor,
    })
}

/// Zero-order hold onto ticks `k·step_seconds`, `k = 0..horizon_steps`.
/// Ticks before the first sample take the first value.
pub fn resample(
    signal: &RegulationSignal,
    step_seconds: f64,
    horizon_steps: usize,
) -> Result<Vec<f64>, SignalError> {
    if !(step_seconds.is_finite() && step_seconds > 0.0) {
        return Err(SignalError::Step(step_seconds));
    }
    if signal.samples.is_empty() {
        return Err(SignalError::Empty);
    }
    let needed = horizon_steps.saturating_sub(1) as f64 * step_seconds;
    if signal.end_seconds() < needed {
        return Err(SignalError::TooShort {
            end_seconds: signal.end_seconds(),
            needed_seconds: needed,
        });
    }
    let samples = &signal.samples;
    let mut idx = 0;
    let mut out = Vec::with_capacity(horizon_steps);
    for k in 0..horizon_steps {
        let t = k as f64 * step_seconds;
        while idx + 1 < samples.len() && samples[idx + 1].t_seconds <= t {
            idx += 1;
        }
        out.push(samples[idx].value);
    }
    Ok(out)
}

/// Seeded stand-in for a normalized regulation signal: a random walk smoothed
/// by two first-order lags, then mapped affinely onto `[-1, 1]` so both
/// extremes are reached.
pub fn synthetic_signal(
    seed: u64,
    sample_seconds: f64,
    samples: usize,
    correlation_seconds: f64,
) -> RegulationSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let smoothing = (-sample_seconds / correlation_seconds).exp();
    let (mut walk, mut lag1, mut lag2) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut raw = Vec::with_capacity(samples);
    for _ in 0..samples {
        let step: f64 = StandardNormal.sample(&mut rng);
        // mild pull toward zero keeps the walk bounded over long horizons
        walk = 0.999 * walk + step;
        lag1 = smoothing * lag1 + (1.0 - smoothing) * walk;
        lag2 = smoothing * lag2 + (1.0 - smoothing) * lag1;
        raw.push(lag2);
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let samples = raw
        .into_iter()
        .enumerate()
        .map(|(i, v)| Sample {
            t_seconds: i as f64 * sample_seconds,
            value: 2.0 * (v - lo) / span - 1.0,
        })
        .collect();
    RegulationSignal {
        samples,
        source: format!("synthetic(seed={seed})"),
        scale: 1.0,
    }
}
