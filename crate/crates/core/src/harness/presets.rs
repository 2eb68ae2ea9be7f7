//! Named scenarios; each one is a single experiment of the acceptance suite.

use super::config::{AttackConfig, FakeKind, FakeUnits, ScenarioConfig};
use crate::adversary::{AttackMode, GainPolicy};
use crate::detector::AlphaScope;
use crate::grid_model::SensorKind;

pub const PRESETS: &[&str] = &[
    "clean",
    "substitution",
    "replay",
    "dt-k1",
    "dt-k-scaling",
    "dt-with-process-noise",
    "nonlinear-dt",
    "nonlinear-dt-plain",
    "authenticated-channel",
    "regime",
];

/// Quadratic coefficient of the nonlinear presets. Large enough that the
/// uncorrected twin attack leaves a visible gain mismatch at a 10 sigma_N
/// offset.
pub const NONLINEAR_EPS: f64 = 0.25;

/// Coefficient giving `<X^2>/<N^2>` just under 1e-2 on the default model.
pub const REGIME_EPS: f64 = 0.06;

/// Watermark strength giving `<N^2>/<R^2>` just under 1e-2 on the default model.
pub const REGIME_SIGMA_E: f64 = 0.18;

fn twin_offset() -> AttackConfig {
    AttackConfig {
        mode: AttackMode::DigitalTwin,
        fake: FakeKind::Offset,
        fake_value: 10.0,
        fake_units: FakeUnits::SigmaN,
        ..AttackConfig::default()
    }
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    let mut c = ScenarioConfig {
        name: name.to_string(),
        ..ScenarioConfig::default()
    };
    match name {
        "clean" => {}
        "substitution" => {
            // hold the line at its last genuine value
            c.attack = AttackConfig {
                mode: AttackMode::Substitution,
                fake: FakeKind::Offset,
                fake_value: 0.0,
                ..AttackConfig::default()
            };
        }
        "replay" => {
            c.attack = AttackConfig {
                mode: AttackMode::Replay,
                replay_delay: 1000,
                ..AttackConfig::default()
            };
        }
        "dt-k1" => c.attack = twin_offset(),
        "dt-k-scaling" => {
            c.model.sensor_kind = Some(vec![SensorKind::AmplitudeScaling, SensorKind::Independent]);
            c.attack = AttackConfig {
                mode: AttackMode::DigitalTwin,
                gain_policy: GainPolicy::AmplitudeScaling,
                fake: FakeKind::Scaled,
                fake_value: 2.0,
                ..AttackConfig::default()
            };
            c.detector.alpha_scope = AlphaScope::Run;
            c.calibration_runs = 800;
        }
        "dt-with-process-noise" => {
            c.model.sigma_w = Some(c.watermark.sigma_e);
            c.attack = twin_offset();
        }
        "nonlinear-dt" | "nonlinear-dt-plain" => {
            c.model.nonlinearity_eps = Some(vec![NONLINEAR_EPS, 0.0]);
            c.attack = AttackConfig {
                mode: if name == "nonlinear-dt" {
                    AttackMode::NonlinearDt
                } else {
                    AttackMode::DigitalTwin
                },
                ..twin_offset()
            };
            c.detector.alpha_scope = AlphaScope::Run;
            c.calibration_runs = 800;
        }
        "authenticated-channel" => {
            c.channels.authenticated = vec![0];
            c.attack = twin_offset();
        }
        "regime" => {
            c.model.nonlinearity_eps = Some(vec![REGIME_EPS, 0.0]);
            c.watermark.sigma_e = REGIME_SIGMA_E;
        }
        _ => return None,
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset("nope").is_none());
    }
}
