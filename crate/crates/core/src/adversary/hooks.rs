use super::{gain_at, naive_attack, AttackMode, AttackPlan, TwinState};
use crate::grid_model::{invert_quadratic, AttackTrace, Interceptor};
use crate::{Error, Result};

/// Digital-twin interceptor.
///
/// Each step it advances the twin, extracts `N = S - S_DT` from the genuine
/// reading, picks `K` and emits `R_f + K N`. In corrected mode the extraction
/// and synthesis happen before the sensor nonlinearity: the genuine reading
/// and the forged regular value are mapped through `f^-1`, combined, and the
/// result is sent back through `f`.
#[derive(Debug, Clone)]
pub struct DigitalTwinAttack {
    plan: AttackPlan,
    twin: TwinState,
    /// `Some(eps)` for the nonlinearity-corrected attack.
    corrected: Option<f64>,
    fake_hist: Vec<f64>,
    est_hist: Vec<f64>,
    trace: AttackTrace,
}

/// Hook for the linear digital-twin attack.
pub fn run_digital_twin_attack(plan: AttackPlan, twin: TwinState) -> DigitalTwinAttack {
    DigitalTwinAttack::new(plan, twin, None)
}

/// Hook for the first-order nonlinear attack against a quadratic sensor with
/// known `eps_known`.
///
/// The closed-form inverse stands in for a precomputed lookup table between
/// readings and pre-nonlinearity values.
pub fn nonlinear_firstorder_attack(
    plan: AttackPlan,
    twin: TwinState,
    eps_known: f64,
) -> DigitalTwinAttack {
    DigitalTwinAttack::new(plan, twin, Some(eps_known))
}

impl DigitalTwinAttack {
    fn new(plan: AttackPlan, twin: TwinState, corrected: Option<f64>) -> Self {
        let trace = AttackTrace {
            target: plan.target_channel,
            start: plan.start,
            ..Default::default()
        };
        Self {
            plan,
            twin,
            corrected,
            fake_hist: Vec::new(),
            est_hist: Vec::new(),
            trace,
        }
    }

    pub fn plan(&self) -> &AttackPlan {
        &self.plan
    }
}

impl Interceptor for DigitalTwinAttack {
    fn target(&self) -> usize {
        self.plan.target_channel
    }

    fn intercept(&mut self, t: usize, reference: &[f64], sensors: &[f64]) -> Result<Option<f64>> {
        let ch = self.plan.target_channel;
        let genuine = sensors[ch];
        let pred = self.twin.predict(reference);
        let s_dt = pred.sensors[ch];
        let fake_reading = self.plan.fake.value(t, s_dt)?;

        // (fake regular, regular estimate, extracted noise) in the working domain
        let (fake, est, extracted) = match self.corrected {
            None => (fake_reading, s_dt, genuine - s_dt),
            Some(eps) => {
                let est = pred.outputs[ch];
                (
                    invert_quadratic(eps, fake_reading)?,
                    est,
                    invert_quadratic(eps, genuine)? - est,
                )
            }
        };
        self.fake_hist.push(fake);
        self.est_hist.push(est);

        let active = t >= self.plan.start;
        let gain = if active {
            gain_at(
                self.plan.gain_policy,
                &self.fake_hist,
                &self.est_hist,
                t,
                self.plan.rms_window,
            )?
        } else {
            1.0
        };
        let emitted = match self.corrected {
            None => fake + gain * extracted,
            Some(eps) => {
                let y = fake + gain * extracted;
                y + eps * y * y
            }
        };

        self.trace.twin.push(s_dt);
        self.trace.fake_regular.push(fake_reading);
        self.trace.extracted.push(extracted);
        self.trace.gain.push(gain);
        self.trace.emitted.push(if active { emitted } else { genuine });
        Ok(active.then_some(emitted))
    }

    fn take_trace(&mut self) -> Option<AttackTrace> {
        Some(std::mem::take(&mut self.trace))
    }
}

/// Replay and substitution baselines; they record the genuine line as they go.
#[derive(Debug, Clone)]
pub struct NaiveAttack {
    plan: AttackPlan,
    recorded: Vec<f64>,
}

impl NaiveAttack {
    pub fn new(plan: AttackPlan) -> Result<Self> {
        match plan.mode {
            AttackMode::Replay | AttackMode::Substitution => Ok(Self {
                plan,
                recorded: Vec::new(),
            }),
            other => Err(Error::contract(format!("{other:?} is not a naive attack"))),
        }
    }
}

impl Interceptor for NaiveAttack {
    fn target(&self) -> usize {
        self.plan.target_channel
    }

    fn intercept(&mut self, t: usize, _reference: &[f64], sensors: &[f64]) -> Result<Option<f64>> {
        self.recorded.push(sensors[self.plan.target_channel]);
        if t < self.plan.start {
            return Ok(None);
        }
        naive_attack(self.plan.mode, &self.recorded, &self.plan, t).map(Some)
    }
}
