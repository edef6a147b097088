//! Half-hourly time series: validation, resampling, alignment and synthesis.

use crate::calendar::{Timestamp, INTERVAL_MINUTES};
use crate::error::CoreError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// A regularly sampled series of capacity factors (dimensionless, `[0,1]`)
/// or power values (GW).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub start: Timestamp,
    pub step_minutes: i64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn half_hourly(start: Timestamp, values: Vec<f64>) -> Self {
        TimeSeries {
            start,
            step_minutes: INTERVAL_MINUTES,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ensure_half_hourly(&self) -> Result<(), CoreError> {
        if self.step_minutes != INTERVAL_MINUTES {
            return Err(CoreError::StepNotHalfHourly {
                got: self.step_minutes,
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// Downscales a coarser series to the 30-minute step by linear interpolation
/// between consecutive points. The final value is repeated so the output
/// covers the same number of whole source steps (`n` points at step `m*30`
/// become `n*m` points).
pub fn resample_half_hourly(ts: &TimeSeries) -> Result<TimeSeries, CoreError> {
    if ts.step_minutes <= 0 || ts.step_minutes % INTERVAL_MINUTES != 0 {
        return Err(CoreError::StepNotResamplable {
            got: ts.step_minutes,
        });
    }
    let m = (ts.step_minutes / INTERVAL_MINUTES) as usize;
    if m == 1 {
        return Ok(ts.clone());
    }
    let n = ts.values.len();
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let a = ts.values[i];
        if i + 1 < n {
            let b = ts.values[i + 1];
            for k in 0..m {
                let f = k as f64 / m as f64;
                out.push(a + (b - a) * f);
            }
        } else {
            // No right endpoint to interpolate toward: hold the final value.
            for _ in 0..m {
                out.push(a);
            }
        }
    }
    Ok(TimeSeries::half_hourly(ts.start, out))
}

/// An aligned set of half-hourly series sharing start and length.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    start: Timestamp,
    horizon: usize,
    series: BTreeMap<String, Vec<f64>>,
}

impl TraceSet {
    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(|s| s.as_str())
    }

    pub fn get(&self, id: &str) -> Result<&[f64], CoreError> {
        self.series
            .get(id)
            .map(|v| v.as_slice())
            .ok_or_else(|| CoreError::UnknownTrace { id: id.to_string() })
    }
}

/// Verifies that all traces share start, step and length, and bundles them.
pub fn align(traces: Vec<(String, TimeSeries)>) -> Result<TraceSet, CoreError> {
    let (first_id, first) = traces.first().ok_or(CoreError::NoTraces)?;
    first
        .ensure_half_hourly()
        .map_err(|e| CoreError::TraceMismatch {
            id: first_id.clone(),
            reason: e.to_string(),
        })?;
    if first.is_empty() {
        return Err(CoreError::TraceMismatch {
            id: first_id.clone(),
            reason: "empty series".into(),
        });
    }
    let start = first.start;
    let horizon = first.len();
    let mut series = BTreeMap::new();
    for (id, ts) in traces {
        ts.ensure_half_hourly()
            .map_err(|e| CoreError::TraceMismatch {
                id: id.clone(),
                reason: e.to_string(),
            })?;
        if ts.start != start {
            return Err(CoreError::TraceMismatch {
                id,
                reason: format!("start {} differs from {}", ts.start, start),
            });
        }
        if ts.len() != horizon {
            return Err(CoreError::TraceMismatch {
                id,
                reason: format!("length {} differs from {}", ts.len(), horizon),
            });
        }
        if series.insert(id.clone(), ts.values).is_some() {
            return Err(CoreError::TraceMismatch {
                id,
                reason: "duplicate trace id".into(),
            });
        }
    }
    Ok(TraceSet {
        start,
        horizon,
        series,
    })
}

/// Family of synthetic trace shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Half-sine daytime production, zero outside the daylight window.
    Solar,
    /// Diurnal sinusoid around the mean; negative amplitude flips the phase.
    Wind,
    /// Morning/evening double-peaked load shape (values in GW, not clamped
    /// to 1).
    Demand,
}

/// Parameters for a deterministic synthetic trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub seed: u64,
    pub start: Timestamp,
    pub intervals: usize,
    /// Target long-run mean: capacity factor for solar/wind, GW for demand.
    pub mean: f64,
    #[serde(default)]
    pub diurnal_amplitude: f64,
    #[serde(default)]
    pub noise: f64,
    /// Daylight window for the solar shape, hours of day.
    #[serde(default = "default_daylight_start")]
    pub daylight_start_hour: f64,
    #[serde(default = "default_daylight_end")]
    pub daylight_end_hour: f64,
}

fn default_daylight_start() -> f64 {
    6.0
}

fn default_daylight_end() -> f64 {
    18.0
}

/// Generates a deterministic synthetic trace. The long-run mean is pulled to
/// `mean` by rescaling after shaping, noise and clamping.
pub fn synth_trace(spec: &SynthSpec) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.intervals;
    let mut values = Vec::with_capacity(n);

    // AR(1) noise with stationary standard deviation `spec.noise`.
    let rho = 0.9_f64;
    let sigma = spec.noise * (1.0 - rho * rho).sqrt();
    let mut ar = 0.0_f64;
    // Uniform innovations with unit variance.
    let half_width = 3.0_f64.sqrt();

    let day_len = spec.daylight_end_hour - spec.daylight_start_hour;
    // Mean of the half-sine day shape over a full day, used to normalise the
    // solar shape so its daily mean is 1.
    let solar_shape_mean = (2.0 / PI) * (day_len / 24.0);

    let mut ts = spec.start;
    for _ in 0..n {
        // Interval midpoint hour of day.
        let h = ts.day_slot() as f64 * 0.5 + 0.25;
        ar = rho * ar + sigma * rng.random_range(-half_width..=half_width);
        let noisy = 1.0 + ar;
        let v = match spec.kind {
            SynthKind::Solar => {
                if h >= spec.daylight_start_hour && h < spec.daylight_end_hour && day_len > 0.0 {
                    let shape =
                        (PI * (h - spec.daylight_start_hour) / day_len).sin() / solar_shape_mean;
                    (spec.mean * shape * noisy).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
            SynthKind::Wind => {
                let shape = 1.0 + spec.diurnal_amplitude * (2.0 * PI * (h - 15.0) / 24.0).sin();
                (spec.mean * shape * noisy).clamp(0.0, 1.0)
            }
            SynthKind::Demand => {
                let shape = 1.0
                    + spec.diurnal_amplitude
                        * (0.55 * (2.0 * PI * (h - 18.5) / 24.0).cos()
                            + 0.45 * (2.0 * PI * (h - 8.0) / 12.0).cos());
                (spec.mean * shape * noisy).max(0.0)
            }
        };
        values.push(v);
        ts = ts.add_intervals(1);
    }

    // Pull the realised mean onto the target; clamping makes this slightly
    // lossy so iterate a few times.
    if spec.mean > 0.0 {
        for _ in 0..3 {
            let current: f64 = values.iter().sum::<f64>() / n as f64;
            if current <= 0.0 {
                break;
            }
            let scale = spec.mean / current;
            for v in values.iter_mut() {
                *v *= scale;
                if spec.kind != SynthKind::Demand {
                    *v = v.min(1.0);
                }
            }
        }
    }

    TimeSeries::half_hourly(spec.start, values)
}
