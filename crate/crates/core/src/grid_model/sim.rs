use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AttackTrace, GridModel, SignalTrace, TraceBundle};
use crate::seed::{rng, SeedSet};
use crate::watermark::{generate_watermark_inputs, WatermarkKey};
use crate::{Error, Result};

/// A sensor line between the grid and the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Authenticated lines drop every interceptor write.
    pub authenticated: bool,
}

/// Man-in-the-middle hook on one sensor line.
///
/// At step `t` the hook sees the effective reference `r_t + d_t` and the
/// genuine readings of every channel, and may return a value to put on its
/// target line instead of the genuine one. It never sees the watermark or any
/// noise seed.
pub trait Interceptor {
    fn target(&self) -> usize;

    fn intercept(&mut self, t: usize, reference: &[f64], sensors: &[f64]) -> Result<Option<f64>>;

    /// Per-step attack internals, if the hook records them.
    fn take_trace(&mut self) -> Option<AttackTrace> {
        None
    }
}

/// Inputs shared by every closed-loop run.
#[derive(Debug, Clone)]
pub struct SimSetup<'a> {
    pub model: &'a GridModel,
    /// One per sensor; empty means no line is authenticated.
    pub channels: Vec<ChannelModel>,
    /// Reference path per control input, at least `horizon` samples each.
    pub reference: &'a [SignalTrace],
    pub horizon: usize,
    pub seeds: SeedSet,
    /// Defaults to the zero state.
    pub initial_state: Option<DVector<f64>>,
}

impl<'a> SimSetup<'a> {
    pub fn new(
        model: &'a GridModel,
        reference: &'a [SignalTrace],
        horizon: usize,
        seeds: SeedSet,
    ) -> Self {
        Self {
            model,
            channels: Vec::new(),
            reference,
            horizon,
            seeds,
            initial_state: None,
        }
    }

    pub fn with_model<'b>(&self, model: &'b GridModel) -> SimSetup<'b>
    where
        'a: 'b,
    {
        SimSetup {
            model,
            channels: self.channels.clone(),
            reference: self.reference,
            horizon: self.horizon,
            seeds: self.seeds,
            initial_state: self.initial_state.clone(),
        }
    }

    fn authenticated(&self, channel: usize) -> bool {
        self.channels.get(channel).is_some_and(|c| c.authenticated)
    }
}

fn traces(rows: Vec<Vec<f64>>, dt: f64) -> Vec<SignalTrace> {
    rows.into_iter()
        .map(|v| SignalTrace::from_finite(v, dt))
        .collect()
}

/// Runs the closed loop for `setup.horizon` steps.
///
/// Noise streams are drawn every step regardless of their std, so changing a
/// noise level never shifts another stream. With an interceptor on an
/// authenticated line the run completes with the line untouched and the
/// bundle is returned inside [`Error::AuthenticatedChannel`].
pub fn simulate(
    setup: &SimSetup<'_>,
    watermark: Option<&WatermarkKey>,
    mut attack: Option<&mut dyn Interceptor>,
) -> Result<TraceBundle> {
    let model = setup.model;
    let (n, m, p) = (model.state_dim(), model.n_inputs(), model.n_sensors());
    let horizon = setup.horizon;
    let dt = model.dt();

    if horizon == 0 {
        return Err(Error::contract("horizon must be >= 1"));
    }
    if setup.reference.len() != m {
        return Err(Error::DimensionMismatch {
            context: "reference traces",
            expected: m,
            actual: setup.reference.len(),
        });
    }
    if let Some(short) = setup.reference.iter().find(|r| r.len() < horizon) {
        return Err(Error::contract(format!(
            "reference has {} samples, horizon is {horizon}",
            short.len()
        )));
    }
    if !setup.channels.is_empty() && setup.channels.len() != p {
        return Err(Error::DimensionMismatch {
            context: "channel models",
            expected: p,
            actual: setup.channels.len(),
        });
    }
    let target = match attack.as_deref() {
        Some(hook) if hook.target() >= p => {
            return Err(Error::contract(format!(
                "interceptor targets channel {} of {p}",
                hook.target()
            )))
        }
        Some(hook) => Some(hook.target()),
        None => None,
    };
    let target_authenticated = target.is_some_and(|c| setup.authenticated(c));

    let mut x = match &setup.initial_state {
        Some(x0) if x0.len() != n => {
            return Err(Error::DimensionMismatch {
                context: "initial state",
                expected: n,
                actual: x0.len(),
            })
        }
        Some(x0) => x0.clone(),
        None => DVector::zeros(n),
    };

    let e_traces = match watermark {
        Some(key) => generate_watermark_inputs(key, m, horizon, dt),
        None => vec![SignalTrace::zeros(horizon, dt); m],
    };

    let noise = model.noise();
    let mut rng_w = rng(setup.seeds.process);
    let mut rng_v = rng(setup.seeds.measurement);
    let mut rng_d = rng(setup.seeds.demand);

    let mut sensors = vec![Vec::with_capacity(horizon); p];
    let mut outputs = vec![Vec::with_capacity(horizon); p];
    let mut received = vec![Vec::with_capacity(horizon); p];
    let mut control = vec![Vec::with_capacity(horizon); m];
    let mut demand = vec![Vec::with_capacity(horizon); m];
    let mut w_rec = vec![Vec::with_capacity(horizon); n];
    let mut v_rec = vec![Vec::with_capacity(horizon); p];

    let (a, b, b_e, c, g) = (model.a(), model.b(), model.b_e(), model.c(), model.g());
    let mut d = vec![0.0; m];
    let mut r_eff = vec![0.0; m];
    let mut s = vec![0.0; p];
    let mut s_rx = vec![0.0; p];
    let mut u = vec![0.0; m];
    let mut w = vec![0.0; n];
    let mut x_next = DVector::zeros(n);
    let mut rejected = 0usize;
    let mut first_rejected = 0usize;

    for t in 0..horizon {
        for (k, dk) in d.iter_mut().enumerate() {
            r_eff[k] = setup.reference[k].values()[t] + *dk;
            demand[k].push(*dk);
        }

        for i in 0..p {
            let y = (0..n).map(|j| c[(i, j)] * x[j]).sum::<f64>();
            let z: f64 = StandardNormal.sample(&mut rng_v);
            let v = noise.sigma_v[i] * z;
            s[i] = model.sensor_map(i, y) + v;
            outputs[i].push(y);
            v_rec[i].push(v);
        }
        s_rx.copy_from_slice(&s);

        if let Some(hook) = attack.as_deref_mut() {
            let tgt = hook.target();
            if let Some(value) = hook.intercept(t, &r_eff, &s)? {
                if !value.is_finite() {
                    return Err(Error::contract(format!(
                        "interceptor produced non-finite value at step {t}"
                    )));
                }
                if target_authenticated {
                    if rejected == 0 {
                        first_rejected = t;
                    }
                    rejected += 1;
                } else {
                    s_rx[tgt] = value;
                }
            }
        }

        for k in 0..m {
            u[k] = r_eff[k] - (0..p).map(|i| g[(k, i)] * s_rx[i]).sum::<f64>();
            control[k].push(u[k]);
        }
        for (j, wj) in w.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng_w);
            *wj = noise.sigma_w * z;
            w_rec[j].push(*wj);
        }
        for j in 0..n {
            let mut acc = w[j];
            for l in 0..n {
                acc += a[(j, l)] * x[l];
            }
            for k in 0..m {
                acc += b[(j, k)] * u[k] + b_e[(j, k)] * e_traces[k].values()[t];
            }
            x_next[j] = acc;
        }
        std::mem::swap(&mut x, &mut x_next);

        for (i, rx) in s_rx.iter().enumerate() {
            sensors[i].push(s[i]);
            received[i].push(*rx);
        }
        for dk in d.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng_d);
            *dk += noise.sigma_d * z;
        }
    }

    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("simulation diverged"));
    }

    let bundle = TraceBundle {
        sensors: traces(sensors, dt),
        outputs: traces(outputs, dt),
        received: traces(received, dt),
        control: traces(control, dt),
        reference: setup
            .reference
            .iter()
            .map(|r| r.slice(0..horizon))
            .collect::<Result<_>>()?,
        demand: traces(demand, dt),
        watermark: e_traces,
        process_noise: traces(w_rec, dt),
        measurement_noise: traces(v_rec, dt),
        attack: attack.and_then(|hook| hook.take_trace()),
    };

    if rejected > 0 {
        return Err(Error::AuthenticatedChannel {
            channel: target.unwrap_or_default(),
            first_step: first_rejected,
            rejected_writes: rejected,
            bundle: Box::new(bundle),
        });
    }
    Ok(bundle)
}
