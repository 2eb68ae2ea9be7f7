use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniformly sampled scalar time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    values: Vec<f64>,
    start_index: usize,
    dt: f64,
}

impl SignalTrace {
    pub fn new(values: Vec<f64>, dt: f64) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            values,
            start_index: 0,
            dt,
        })
    }

    /// For values produced by this crate's own stable recursions.
    pub(crate) fn from_finite(values: Vec<f64>, dt: f64) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self {
            values,
            start_index: 0,
            dt,
        }
    }

    pub fn zeros(len: usize, dt: f64) -> Self {
        Self::from_finite(vec![0.0; len], dt)
    }

    pub fn constant(value: f64, len: usize, dt: f64) -> Self {
        Self::from_finite(vec![value; len], dt)
    }

    pub fn with_start(mut self, start_index: usize) -> Self {
        self.start_index = start_index;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sub-trace over `range` (indices relative to this trace).
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start > range.end {
            return Err(Error::contract(format!(
                "slice {range:?} outside trace of length {}",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values[range.clone()].to_vec(),
            start_index: self.start_index + range.start,
            dt: self.dt,
        })
    }

    pub fn mean_square(&self) -> f64 {
        mean_square(&self.values)
    }

    pub fn rms(&self) -> f64 {
        self.mean_square().sqrt()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                context: "trace length",
                expected: self.len(),
                actual: other.len(),
            });
        }
        if self.dt != other.dt {
            return Err(Error::contract("traces have different dt"));
        }
        Ok(())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(values, self.dt).map(|t| t.with_start(self.start_index))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| k * v).collect(),
            ..self.clone()
        }
    }

    /// `rms(self - reference) / rms(reference)`.
    pub fn relative_rms_error(&self, reference: &Self) -> Result<f64> {
        let diff = self.sub(reference)?;
        Ok(diff.rms() / reference.rms())
    }
}

pub(crate) fn mean_square(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

/// Per-step internals of a digital-twin attack on the target line.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackTrace {
    pub target: usize,
    /// First step at which the attack wrote to the line.
    pub start: usize,
    /// Twin's prediction of the target sensor, `S_DT`.
    pub twin: Vec<f64>,
    /// Fake regular signal `R_f`.
    pub fake_regular: Vec<f64>,
    /// Extracted noise component `S - S_DT` (in the pre-nonlinearity domain for
    /// the corrected nonlinear attack).
    pub extracted: Vec<f64>,
    /// Gain `K(t)`.
    pub gain: Vec<f64>,
    /// Value placed on the line, `S_f`.
    pub emitted: Vec<f64>,
}

/// Everything one closed-loop run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceBundle {
    /// Genuine sensor readings `S_i`.
    pub sensors: Vec<SignalTrace>,
    /// Pre-nonlinearity outputs `C x`.
    pub outputs: Vec<SignalTrace>,
    /// What the controller received per channel.
    pub received: Vec<SignalTrace>,
    pub control: Vec<SignalTrace>,
    pub reference: Vec<SignalTrace>,
    pub demand: Vec<SignalTrace>,
    pub watermark: Vec<SignalTrace>,
    /// Process-noise draws, one trace per state.
    pub process_noise: Vec<SignalTrace>,
    pub measurement_noise: Vec<SignalTrace>,
    pub attack: Option<AttackTrace>,
}

impl TraceBundle {
    pub fn horizon(&self) -> usize {
        self.sensors.first().map_or(0, SignalTrace::len)
    }

    /// Reference path the controller actually tracks, `r + d`, per input.
    pub fn effective_reference(&self) -> Vec<SignalTrace> {
        self.reference
            .iter()
            .zip(&self.demand)
            .map(|(r, d)| r.add(d).expect("bundle traces share shape"))
            .collect()
    }

    /// Bitwise comparison, treating `-0.0` and `0.0` as different.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        fn eq(a: &[SignalTrace], b: &[SignalTrace]) -> bool {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.len() == y.len()
                        && x
                            .values()
                            .iter()
                            .zip(y.values())
                            .all(|(p, q)| p.to_bits() == q.to_bits())
                })
        }
        eq(&self.sensors, &other.sensors)
            && eq(&self.outputs, &other.outputs)
            && eq(&self.received, &other.received)
            && eq(&self.control, &other.control)
            && eq(&self.reference, &other.reference)
            && eq(&self.demand, &other.demand)
            && eq(&self.watermark, &other.watermark)
            && eq(&self.process_noise, &other.process_noise)
            && eq(&self.measurement_noise, &other.measurement_noise)
    }
}
