use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{FakeKind, FakeUnits, ScenarioConfig};
use crate::adversary::{
    nonlinear_firstorder_attack, regime_check, run_digital_twin_attack, AttackMode, AttackPlan,
    FakeTrajectory, NaiveAttack, RegimeReport, TwinState, DEFAULT_THETA,
};
use crate::detector::{block_statistics, calibrate_thresholds, judge, BlockStats, DetectorReport, Thresholds};
use crate::grid_model::{
    decompose, simulate, ChannelModel, GridModel, Interceptor, SignalTrace, SimSetup, TraceBundle,
};
use crate::seed::{calibration_base, run_seed, stream_seed, SeedSet, TAG_WATERMARK};
use crate::watermark::{watermark_image_std, WatermarkKey};
use crate::{Error, Result};

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_index: u64,
    pub seed: u64,
    pub report: DetectorReport,
    /// RMS of (received - genuine) on the target line over the attack window.
    pub deception_rms: f64,
    pub regime: Option<RegimeReport>,
    /// Interceptor writes dropped by an authenticated line.
    pub rejected_writes: usize,
}

impl RunResult {
    /// Block means of the three statistics on `channel`.
    pub fn mean_stats(&self, channel: usize) -> BlockStats {
        let blocks = &self.report.channels[channel].stats;
        let n = blocks.len().max(1) as f64;
        let sum = |f: fn(&BlockStats) -> f64| blocks.iter().map(f).sum::<f64>() / n;
        BlockStats {
            gain: sum(|b| b.gain),
            band_variance: sum(|b| b.band_variance),
            band_power: sum(|b| b.band_power),
        }
    }
}

/// Raw material of one run, before the detector verdict.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub seed: u64,
    pub key: WatermarkKey,
    pub bundle: TraceBundle,
    /// Set when an authenticated line dropped the attack.
    pub rejected: Option<Rejection>,
}

/// Interceptor writes an authenticated line refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub channel: usize,
    pub first_step: usize,
    pub rejected_writes: usize,
}

/// A validated config with everything derived from it once.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    model: GridModel,
    reference: Vec<SignalTrace>,
    plan: Option<AttackPlan>,
    sigma_n: f64,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let model = config.model.build()?;
        let reference =
            vec![SignalTrace::constant(config.reference, config.horizon, model.dt()); model.n_inputs()];
        let a = &config.attack;
        let sigma_n = watermark_image_std(&model, config.watermark.sigma_e, a.target_channel.min(model.n_sensors() - 1))?;
        let plan = match a.mode {
            AttackMode::None => None,
            mode => {
                let scale = match a.fake_units {
                    FakeUnits::Absolute => 1.0,
                    FakeUnits::SigmaN => sigma_n,
                };
                let fake = match a.fake {
                    FakeKind::Offset => FakeTrajectory::Offset(a.fake_value * scale),
                    FakeKind::Scaled => FakeTrajectory::Scaled(a.fake_value),
                    FakeKind::Constant => FakeTrajectory::Constant(a.fake_value * scale),
                    FakeKind::Explicit => FakeTrajectory::Explicit(
                        a.explicit.clone().unwrap_or_default().iter().map(|v| v * scale).collect(),
                    ),
                };
                let plan = AttackPlan {
                    mode,
                    target_channel: a.target_channel,
                    gain_policy: a.gain_policy,
                    fake,
                    rms_window: a.rms_window,
                    replay_delay: a.replay_delay,
                    start: a.start.unwrap_or(config.warm_up),
                };
                plan.validate(model.n_sensors())?;
                Some(plan)
            }
        };
        Ok(Self {
            config,
            model,
            reference,
            plan,
            sigma_n,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn model(&self) -> &GridModel {
        &self.model
    }

    pub fn plan(&self) -> Option<&AttackPlan> {
        self.plan.as_ref()
    }

    /// Stationary std of the watermark image on the attack target.
    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    /// Blocks evaluated per run.
    pub fn blocks_per_run(&self) -> usize {
        (self.config.horizon - self.config.warm_up) / self.config.detector.window
    }

    fn initial_state(&self) -> Option<DVector<f64>> {
        self.config
            .initial_state
            .as_ref()
            .map(|x| DVector::from_column_slice(x))
    }

    fn setup(&self, seed: u64) -> SimSetup<'_> {
        let mut setup = SimSetup::new(&self.model, &self.reference, self.config.horizon, SeedSet::from_run_seed(seed));
        setup.channels = (0..self.model.n_sensors())
            .map(|i| ChannelModel {
                authenticated: self.config.channels.authenticated.contains(&i),
            })
            .collect();
        setup.initial_state = self.initial_state();
        setup
    }

    /// Each run draws a fresh watermark key from its own seed unless the
    /// config pins one.
    fn key(&self, seed: u64) -> WatermarkKey {
        let wseed = self
            .config
            .watermark
            .fixed_seed
            .unwrap_or_else(|| stream_seed(seed, TAG_WATERMARK));
        WatermarkKey::new(wseed, self.config.watermark.sigma_e)
    }

    fn interceptor(&self, plan: &AttackPlan) -> Result<Box<dyn Interceptor>> {
        let twin = match self.initial_state() {
            Some(x0) => TwinState::with_state(&self.model, x0),
            None => TwinState::new(&self.model),
        };
        Ok(match plan.mode {
            AttackMode::DigitalTwin => Box::new(run_digital_twin_attack(plan.clone(), twin)),
            AttackMode::NonlinearDt => Box::new(nonlinear_firstorder_attack(
                plan.clone(),
                twin,
                self.model.eps(plan.target_channel),
            )),
            AttackMode::Replay | AttackMode::Substitution => Box::new(NaiveAttack::new(plan.clone())?),
            AttackMode::None => unreachable!("no interceptor without an attack"),
        })
    }

    /// Simulates run `seed`, with or without the configured attack.
    ///
    /// A rejected attack on an authenticated line is not an error here: the
    /// untouched bundle is returned and the rejection travels in
    /// [`RunArtifacts::rejected`].
    pub fn simulate_seed(&self, seed: u64, attacked: bool) -> Result<RunArtifacts> {
        let setup = self.setup(seed);
        let key = self.key(seed);
        let mut hook = match (&self.plan, attacked) {
            (Some(plan), true) => Some(self.interceptor(plan)?),
            _ => None,
        };
        let hook_ref = hook.as_mut().map(|h| &mut **h as &mut dyn Interceptor);
        match simulate(&setup, Some(&key), hook_ref) {
            Ok(bundle) => Ok(RunArtifacts {
                seed,
                key,
                bundle,
                rejected: None,
            }),
            Err(Error::AuthenticatedChannel {
                channel,
                first_step,
                rejected_writes,
                bundle,
            }) => Ok(RunArtifacts {
                seed,
                key,
                bundle: *bundle,
                rejected: Some(Rejection {
                    channel,
                    first_step,
                    rejected_writes,
                }),
            }),
            Err(e) => Err(e),
        }
    }

    pub fn run_seed(&self, run_index: u64) -> u64 {
        run_seed(self.config.base_seed, run_index)
    }

    pub fn block_stats(&self, art: &RunArtifacts) -> Result<Vec<Vec<BlockStats>>> {
        block_statistics(
            &self.model,
            &art.bundle,
            &art.key,
            &self.config.detector,
            self.config.warm_up,
            self.initial_state(),
        )
    }

    /// Block statistics of clean runs `0..runs` of the calibration campaign,
    /// pooled per channel. The campaign's seeds never collide with the
    /// evaluation runs'.
    pub fn calibration_stats(&self, runs: usize) -> Result<Vec<Vec<BlockStats>>> {
        let base = calibration_base(self.config.base_seed);
        let per_run = par_map(0..runs as u64, |i| {
            let art = self.simulate_seed(run_seed(base, i), false)?;
            self.block_stats(&art)
        })?;
        let mut pooled = vec![Vec::new(); self.model.n_sensors()];
        for run in per_run {
            for (acc, blocks) in pooled.iter_mut().zip(run) {
                acc.extend(blocks);
            }
        }
        Ok(pooled)
    }

    /// Thresholds from `calibration_runs` clean runs.
    pub fn calibrate(&self) -> Result<Thresholds> {
        let pooled = self.calibration_stats(self.config.calibration_runs)?;
        let alpha = self.config.detector.block_alpha(self.blocks_per_run());
        calibrate_thresholds(&pooled, alpha)
    }

    /// Full run: simulation, detector verdict, deception and regime metrics.
    pub fn run(&self, run_index: u64, thresholds: &Thresholds) -> Result<RunResult> {
        let seed = self.run_seed(run_index);
        let art = self.simulate_seed(seed, true)?;
        let stats = self.block_stats(&art)?;
        let report = judge(&stats, thresholds, self.config.detector.window)?;

        let rejected_writes = art.rejected.map_or(0, |r| r.rejected_writes);
        let deception_rms = match &self.plan {
            Some(plan) => {
                let ch = plan.target_channel;
                let range = plan.start..self.config.horizon;
                art.bundle.received[ch]
                    .slice(range.clone())?
                    .sub(&art.bundle.sensors[ch].slice(range)?)?
                    .rms()
            }
            None => 0.0,
        };
        let regime = if self.config.regime_metrics {
            self.regime(seed, &art.key)?
        } else {
            None
        };
        Ok(RunResult {
            run_index,
            seed,
            report,
            deception_rms,
            regime,
            rejected_writes,
        })
    }

    /// Regime ratios of the (unattacked) run on the target channel, over the
    /// evaluated region; `None` when there is no watermark or no signal.
    pub fn regime(&self, seed: u64, key: &WatermarkKey) -> Result<Option<RegimeReport>> {
        let ch = self.config.attack.target_channel;
        let dec = decompose(&self.setup(seed), key)?;
        let range = self.config.warm_up..self.config.horizon;
        match regime_check(
            &dec.regular[ch].slice(range.clone())?,
            &dec.watermark[ch].slice(range.clone())?,
            &dec.nonlinear[ch].slice(range)?,
            DEFAULT_THETA,
            DEFAULT_THETA,
        ) {
            Ok(r) => Ok(Some(r)),
            Err(Error::Contract(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// One run of `config` against `thresholds`. Seeds derive from
/// `(base_seed, run_index)` only, so the same pair always gives the same
/// result.
pub fn run_scenario(config: &ScenarioConfig, run_index: u64, thresholds: &Thresholds) -> Result<RunResult> {
    Scenario::new(config.clone())?.run(run_index, thresholds)
}

/// Order-preserving map over run indices; parallel when the `parallel`
/// feature is on.
pub(crate) fn par_map<T: Send>(
    runs: std::ops::Range<u64>,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        runs.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        runs.map(f).collect()
    }
}
