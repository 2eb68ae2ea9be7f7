//! The adversary's toolkit.
//!
//! The adversary reads every sensor line, writes one target line, and knows
//! the deterministic grid model, the controller law and the reference path.
//! It never sees the watermark or the noise seeds: nothing in this module
//! takes a [`WatermarkKey`](crate::WatermarkKey).
//!
//! The digital-twin attack on the target line `1`:
//!
//! ```text
//! N_1   = S_1 - S_1DT                 extraction against the twin
//! S_1f  = R_1f + K N_1                forged, still watermarked reading
//! ```
//!
//! with `K = 1` for sensors whose watermark image is level-independent, and
//! `K = RMS(R_1f) / RMS(R_1)` over a trailing window for sensors whose image
//! scales with level.

mod hooks;
mod twin;

use serde::{Deserialize, Serialize};

use crate::grid_model::trace::mean_square;
use crate::grid_model::SignalTrace;
use crate::{Error, Result};

pub use hooks::{
    nonlinear_firstorder_attack, run_digital_twin_attack, DigitalTwinAttack, NaiveAttack,
};
pub use twin::{TwinPrediction, TwinState};

/// Below this trailing RMS the amplitude-scaling gain is undefined.
pub const RMS_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMode {
    #[default]
    None,
    Replay,
    Substitution,
    DigitalTwin,
    NonlinearDt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainPolicy {
    /// `K = 1`.
    #[default]
    Independent,
    /// `K = RMS(R_f) / RMS(R)` over the trailing `rms_window`.
    AmplitudeScaling,
}

/// What the forged regular signal `R_f` looks like.
///
/// Relative variants are taken against the twin's estimate of the regular
/// signal for twin attacks, and against the last genuine reading before the
/// attack for substitution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum FakeTrajectory {
    Offset(f64),
    Scaled(f64),
    Constant(f64),
    Explicit(Vec<f64>),
}

impl Default for FakeTrajectory {
    fn default() -> Self {
        FakeTrajectory::Offset(0.0)
    }
}

impl FakeTrajectory {
    pub fn value(&self, t: usize, baseline: f64) -> Result<f64> {
        Ok(match self {
            FakeTrajectory::Offset(d) => baseline + d,
            FakeTrajectory::Scaled(a) => a * baseline,
            FakeTrajectory::Constant(c) => *c,
            FakeTrajectory::Explicit(v) => *v.get(t).ok_or_else(|| {
                Error::contract(format!("explicit fake trajectory has no sample {t}"))
            })?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub mode: AttackMode,
    pub target_channel: usize,
    pub gain_policy: GainPolicy,
    pub fake: FakeTrajectory,
    /// Trailing window of the amplitude-scaling RMS ratio.
    pub rms_window: usize,
    pub replay_delay: usize,
    /// First step at which the interceptor writes.
    pub start: usize,
}

impl Default for AttackPlan {
    fn default() -> Self {
        Self {
            mode: AttackMode::None,
            target_channel: 0,
            gain_policy: GainPolicy::Independent,
            fake: FakeTrajectory::default(),
            rms_window: 100,
            replay_delay: 1000,
            start: 1000,
        }
    }
}

impl AttackPlan {
    pub fn validate(&self, n_sensors: usize) -> Result<()> {
        if self.target_channel >= n_sensors {
            return Err(Error::config(
                "attack.target_channel",
                format!("channel {} of {n_sensors}", self.target_channel),
            ));
        }
        if self.rms_window < 10 {
            return Err(Error::config("attack.rms_window", "must be >= 10"));
        }
        if self.replay_delay < 1 {
            return Err(Error::config("attack.replay_delay", "must be >= 1"));
        }
        if self.mode == AttackMode::Replay && self.start < self.replay_delay {
            return Err(Error::config(
                "attack.replay_delay",
                "replay needs start >= replay_delay",
            ));
        }
        Ok(())
    }
}

/// `N = S - S_DT`. With process noise present this is the total noise at the
/// sensor and is used as-is.
pub fn extract_watermark(observed: &SignalTrace, twin: &SignalTrace) -> Result<SignalTrace> {
    observed.sub(twin)
}

fn trailing_rms(values: &[f64], t: usize, window: usize) -> f64 {
    let lo = (t + 1).saturating_sub(window);
    mean_square(&values[lo..=t]).sqrt()
}

/// `K(t)` at one step from the histories up to and including `t`.
pub(crate) fn gain_at(
    policy: GainPolicy,
    fake: &[f64],
    estimate: &[f64],
    t: usize,
    rms_window: usize,
) -> Result<f64> {
    match policy {
        GainPolicy::Independent => Ok(1.0),
        GainPolicy::AmplitudeScaling => {
            let base = trailing_rms(estimate, t, rms_window);
            if !(base >= RMS_FLOOR) {
                return Err(Error::DegenerateBaseline {
                    rms: base,
                    floor: RMS_FLOOR,
                });
            }
            Ok(trailing_rms(fake, t, rms_window) / base)
        }
    }
}

/// Gain trace `K(t)` for a whole run.
pub fn select_gain(
    policy: GainPolicy,
    r_fake: &SignalTrace,
    r_est: &SignalTrace,
    rms_window: usize,
) -> Result<SignalTrace> {
    if r_fake.len() != r_est.len() {
        return Err(Error::DimensionMismatch {
            context: "select_gain",
            expected: r_est.len(),
            actual: r_fake.len(),
        });
    }
    if rms_window == 0 {
        return Err(Error::contract("rms_window must be >= 1"));
    }
    let k = (0..r_est.len())
        .map(|t| gain_at(policy, r_fake.values(), r_est.values(), t, rms_window))
        .collect::<Result<Vec<_>>>()?;
    SignalTrace::new(k, r_est.dt())
}

/// `S_f = R_f + K N`, elementwise.
pub fn synthesize_fake(r_fake: &SignalTrace, extracted: &SignalTrace, gain: &SignalTrace) -> Result<SignalTrace> {
    let kn = extracted.zip_with(gain, |n, k| k * n)?;
    r_fake.add(&kn)
}

/// Value a naive attacker puts on the line at step `t`.
///
/// `recorded` holds the genuine readings of the target channel up to and
/// including `t`. Substitution emits the fake trajectory without any
/// watermark; replay emits the recording delayed by `replay_delay`.
pub fn naive_attack(mode: AttackMode, recorded: &[f64], plan: &AttackPlan, t: usize) -> Result<f64> {
    if recorded.len() <= t {
        return Err(Error::contract(format!(
            "recording has {} samples, step {t} requested",
            recorded.len()
        )));
    }
    match mode {
        AttackMode::Substitution => {
            let baseline = recorded[plan.start.saturating_sub(1).min(t)];
            plan.fake.value(t, baseline)
        }
        AttackMode::Replay => {
            if t < plan.replay_delay {
                return Err(Error::contract(format!(
                    "replay at step {t} needs {} recorded steps",
                    plan.replay_delay
                )));
            }
            Ok(recorded[t - plan.replay_delay])
        }
        other => Err(Error::contract(format!("{other:?} is not a naive attack"))),
    }
}

/// Mean-square ratios that place a run in the near-linear, small-watermark
/// regime `<X^2> << <N^2> << <R^2>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub x_over_n: f64,
    pub n_over_r: f64,
    pub pass: bool,
}

pub const DEFAULT_THETA: f64 = 0.01;

pub fn regime_check(
    regular: &SignalTrace,
    watermark: &SignalTrace,
    nonlinear: &SignalTrace,
    theta1: f64,
    theta2: f64,
) -> Result<RegimeReport> {
    let (r2, n2, x2) = (regular.mean_square(), watermark.mean_square(), nonlinear.mean_square());
    if !(n2 > 0.0) || !(r2 > 0.0) {
        return Err(Error::contract(
            "regime check needs non-zero watermark and regular power",
        ));
    }
    Ok(RegimeReport {
        x_over_n: x2 / n2,
        n_over_r: n2 / r2,
        pass: x2 <= theta1 * n2 && n2 <= theta2 * r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::watermark::{generate_watermark, WatermarkKey};
    use proptest::prelude::*;

    fn tr(v: &[f64]) -> SignalTrace {
        SignalTrace::new(v.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn extraction_cases() {
        let a = tr(&[1.0, 2.0, 3.0]);
        assert!(extract_watermark(&a, &a).unwrap().values().iter().all(|&v| v == 0.0));
        let n = extract_watermark(&tr(&[1.5, 2.0]), &tr(&[1.0, 2.5])).unwrap();
        assert_eq!(n.values(), &[0.5, -0.5]);
        assert!(extract_watermark(&tr(&[1.0]), &tr(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn independent_policy_is_unity() {
        let k = select_gain(GainPolicy::Independent, &tr(&[3.0; 20]), &tr(&[0.0; 20]), 10).unwrap();
        assert!(k.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn amplitude_scaling_ratio() {
        let k = select_gain(GainPolicy::AmplitudeScaling, &tr(&[230.0; 50]), &tr(&[115.0; 50]), 10)
            .unwrap();
        assert!(k.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn amplitude_scaling_rejects_zero_baseline() {
        let err = select_gain(GainPolicy::AmplitudeScaling, &tr(&[1.0; 20]), &tr(&[0.0; 20]), 10)
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateBaseline { .. }));
    }

    #[test]
    fn synthesis_identity_and_stripping() {
        let r = tr(&[1.0, 2.0, 3.0]);
        let n = tr(&[0.1, -0.2, 0.05]);
        let s = r.add(&n).unwrap();
        let one = tr(&[1.0; 3]);
        assert_eq!(synthesize_fake(&r, &n, &one).unwrap(), s);
        let fake = tr(&[7.0, 7.0, 7.0]);
        assert_eq!(synthesize_fake(&fake, &n, &tr(&[0.0; 3])).unwrap(), fake);
    }

    proptest! {
        #[test]
        fn synthesis_algebra(seed in any::<u64>(), k in -3.0f64..3.0) {
            prop_assume!(k.abs() > 1e-3);
            let r = generate_watermark(&WatermarkKey::new(seed, 2.0), 64);
            let n = generate_watermark(&WatermarkKey::new(seed ^ 1, 0.1), 64);
            let gains = SignalTrace::constant(k, 64, 1.0);
            let s = synthesize_fake(&r, &n, &gains).unwrap();
            for t in 0..64 {
                let back = (s.values()[t] - r.values()[t]) / k;
                prop_assert!((back - n.values()[t]).abs() <= 1e-12 * (1.0 + r.values()[t].abs() / k.abs()));
            }
        }
    }

    #[test]
    fn substitution_emits_constant() {
        let plan = AttackPlan {
            mode: AttackMode::Substitution,
            fake: FakeTrajectory::Constant(5.0),
            start: 3,
            ..Default::default()
        };
        let rec = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        for t in 3..6 {
            assert_eq!(naive_attack(AttackMode::Substitution, &rec[..=t], &plan, t).unwrap(), 5.0);
        }
    }

    #[test]
    fn replay_emits_delayed_recording() {
        let plan = AttackPlan {
            mode: AttackMode::Replay,
            replay_delay: 1000,
            start: 1000,
            ..Default::default()
        };
        let rec: Vec<f64> = (0..3000).map(|t| t as f64 * 0.5).collect();
        assert_eq!(naive_attack(AttackMode::Replay, &rec, &plan, 2500).unwrap(), rec[1500]);
        assert!(naive_attack(AttackMode::Replay, &rec, &plan, 999).is_err());
        assert!(naive_attack(AttackMode::Replay, &rec[..10], &plan, 2500).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(AttackPlan::default().validate(2).is_ok());
        let bad_target = AttackPlan {
            target_channel: 2,
            ..Default::default()
        };
        assert!(bad_target.validate(2).is_err());
        let bad_window = AttackPlan {
            rms_window: 9,
            ..Default::default()
        };
        assert!(bad_window.validate(2).is_err());
        let bad_delay = AttackPlan {
            replay_delay: 0,
            ..Default::default()
        };
        assert!(bad_delay.validate(2).is_err());
    }

    #[test]
    fn regime_linear_sensor_has_zero_first_ratio() {
        let r = tr(&[1.0, 2.0, 3.0]);
        let n = tr(&[0.1, 0.2, 0.3]);
        let rep = regime_check(&r, &n, &tr(&[0.0; 3]), 1e-9, 0.01).unwrap();
        assert_eq!(rep.x_over_n, 0.0);
        // N = 0.1 R: ratio 0.01 in exact arithmetic, so compare with tolerance
        assert!((rep.n_over_r - 0.01).abs() < 1e-15);
    }

    #[test]
    fn regime_boundary_is_inclusive() {
        let r = tr(&[10.0, -10.0]);
        let n = tr(&[1.0, -1.0]);
        let rep = regime_check(&r, &n, &tr(&[0.0, 0.0]), 0.01, 0.01).unwrap();
        assert_eq!(rep.n_over_r, 0.01);
        assert!(rep.pass);
    }

    #[test]
    fn regime_rejects_zero_power() {
        let z = tr(&[0.0; 3]);
        assert!(regime_check(&tr(&[1.0; 3]), &z, &z, 0.01, 0.01).is_err());
    }
}
