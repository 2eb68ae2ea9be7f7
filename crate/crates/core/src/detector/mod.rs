//! The defender's attack detectors and their calibration.
//!
//! Every sensor channel is cut into blocks of `window` samples after the
//! warm-up. Per block the defender computes
//!
//! * the projection gain of the received signal onto the expected watermark
//!   image (`1` under no attack),
//! * the variance of the first-difference high-pass of the received signal,
//! * the Welch power of the received signal in `[highpass_cutoff, band_high]`,
//!
//! and raises an alarm when any of them leaves its calibrated interval.
//!
//! Before the statistics, the received signal is conditioned with what the
//! defender knows about the sensor: a nonlinear sensor is mapped back through
//! its inverse, and an amplitude-scaling sensor is rescaled so its block RMS
//! matches the model's nominal level (its watermark image scales with level).

mod calibrate;
mod stats;

use serde::{Deserialize, Serialize};

use crate::grid_model::{
    invert_quadratic, nominal_response, trace::mean_square, GridModel, SensorKind, TraceBundle,
};
use crate::watermark::{expected_component, WatermarkKey};
use crate::{Error, Result};

pub use calibrate::{
    calibrate_thresholds, judge, ChannelThresholds, ChannelVerdict, DetectorReport, Interval,
    TestFlags, Thresholds, MIN_CALIBRATION_BLOCKS,
};
pub use stats::{
    estimate_watermark_gain, estimate_watermark_gain_trace, highpass, spectral_band_power,
    watermark_band_variance, Band,
};

/// Whether `alpha` targets one block or a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaScope {
    #[default]
    Block,
    /// Per-block target is `1 - (1 - alpha)^(1 / blocks_per_run)`.
    Run,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Samples per decision block.
    pub window: usize,
    /// Lower edge of the watermark band (cycles per sample).
    pub highpass_cutoff: f64,
    /// Upper edge of the watermark band.
    pub band_high: f64,
    /// Target false-alarm probability.
    pub alpha: f64,
    pub alpha_scope: AlphaScope,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window: 1000,
            highpass_cutoff: 0.05,
            band_high: 0.5,
            alpha: 0.05,
            alpha_scope: AlphaScope::Block,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("detector.alpha", "must lie in (0, 1)"));
        }
        if !(self.highpass_cutoff > 0.0 && self.highpass_cutoff < 0.5) {
            return Err(Error::config("detector.highpass_cutoff", "must lie in (0, 0.5)"));
        }
        if !(self.band_high > self.highpass_cutoff && self.band_high <= 0.5) {
            return Err(Error::config(
                "detector.band_high",
                "must lie in (highpass_cutoff, 0.5]",
            ));
        }
        if self.window < 100 {
            return Err(Error::config("detector.window", "must be >= 100"));
        }
        Ok(())
    }

    pub fn band(&self) -> Band {
        Band {
            low: self.highpass_cutoff,
            high: self.band_high,
        }
    }

    /// Welch segment: an eighth of the window.
    pub fn segment_len(&self) -> usize {
        self.window / 8
    }

    pub fn block_alpha(&self, blocks_per_run: usize) -> f64 {
        match self.alpha_scope {
            AlphaScope::Block => self.alpha,
            AlphaScope::Run => 1.0 - (1.0 - self.alpha).powf(1.0 / blocks_per_run.max(1) as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub gain: f64,
    pub band_variance: f64,
    pub band_power: f64,
}

/// Inverse sensor map, clamped at the vertex for readings outside the range
/// of `f`; such readings cannot come from the physical sensor and end up
/// far outside every calibrated interval.
fn linearize(eps: f64, reading: f64) -> f64 {
    match invert_quadratic(eps, reading) {
        Ok(y) => y,
        Err(_) => -0.5 / eps,
    }
}

/// Block statistics for every channel of a finished run.
///
/// Blocks start at `eval_start`; a trailing partial block is dropped.
pub fn block_statistics(
    model: &GridModel,
    bundle: &TraceBundle,
    key: &WatermarkKey,
    config: &DetectorConfig,
    eval_start: usize,
    initial_state: Option<nalgebra::DVector<f64>>,
) -> Result<Vec<Vec<BlockStats>>> {
    let horizon = bundle.horizon();
    if eval_start >= horizon {
        return Err(Error::contract("evaluation starts after the horizon"));
    }
    let n_blocks = (horizon - eval_start) / config.window;
    let needs_nominal =
        (0..model.n_sensors()).any(|i| model.sensor_kind(i) == SensorKind::AmplitudeScaling);
    let nominal = if needs_nominal {
        Some(nominal_response(
            model,
            &bundle.effective_reference(),
            horizon,
            initial_state,
        )?)
    } else {
        None
    };

    (0..model.n_sensors())
        .map(|ch| {
            let template = expected_component(model, key, ch, horizon)?;
            let eps = model.eps(ch);
            let received: Vec<f64> = bundle.received[ch]
                .values()
                .iter()
                .map(|&s| linearize(eps, s))
                .collect();
            (0..n_blocks)
                .map(|b| {
                    let range = eval_start + b * config.window..eval_start + (b + 1) * config.window;
                    let mut block = received[range.clone()].to_vec();
                    if let (SensorKind::AmplitudeScaling, Some(nom)) = (model.sensor_kind(ch), &nominal) {
                        let level = mean_square(&nom.outputs[ch].values()[range.clone()]).sqrt();
                        let seen = mean_square(&block).sqrt();
                        if seen > 0.0 {
                            let k = level / seen;
                            block.iter_mut().for_each(|v| *v *= k);
                        }
                    }
                    Ok(BlockStats {
                        gain: estimate_watermark_gain(&block, &template.values()[range])?,
                        band_variance: watermark_band_variance(&block),
                        band_power: spectral_band_power(&block, config.band(), config.segment_len())?,
                    })
                })
                .collect()
        })
        .collect()
}
