use nalgebra::DVector;

use super::{simulate, GridModel, SignalTrace, SimSetup, TraceBundle};
use crate::seed::SeedSet;
use crate::watermark::WatermarkKey;
use crate::{Error, Result};

/// Response of sensor `channel` to a unit impulse on watermark input `input`,
/// through the linear closed loop: `h_0 = 0`, `h_k = C_i A_cl^(k-1) B_e[:, input]`.
///
/// With `eps = 0` on every fed-back channel, `N_i = h * e` exactly.
pub fn closed_loop_impulse_response(
    model: &GridModel,
    input: usize,
    channel: usize,
    length: usize,
) -> Result<SignalTrace> {
    if input >= model.n_inputs() || channel >= model.n_sensors() {
        return Err(Error::contract(format!(
            "impulse response {input} -> {channel} out of range"
        )));
    }
    let a_cl = model.closed_loop_matrix();
    let c = model.c().row(channel).transpose();
    let mut x: DVector<f64> = model.b_e().column(input).into_owned();
    let mut h = Vec::with_capacity(length);
    if length > 0 {
        h.push(0.0);
    }
    while h.len() < length {
        h.push(c.dot(&x));
        x = &a_cl * x;
    }
    Ok(SignalTrace::from_finite(h, model.dt()))
}

/// Number of impulse-response taps after which the closed-loop state has
/// decayed below `1e-18` of its initial norm, capped at `max_len`.
pub(crate) fn effective_impulse_length(model: &GridModel, input: usize, max_len: usize) -> usize {
    let a_cl = model.closed_loop_matrix();
    let mut x: DVector<f64> = model.b_e().column(input).into_owned();
    let x0 = x.norm();
    if x0 == 0.0 {
        return max_len.min(1);
    }
    let mut k = 1;
    while k < max_len {
        x = &a_cl * x;
        k += 1;
        if x.norm() < 1e-18 * x0 {
            // include one tap beyond the decayed state
            return (k + 1).min(max_len);
        }
    }
    max_len
}

/// Causal convolution truncated to `len` output samples.
pub(crate) fn convolve(h: &[f64], e: &[f64], len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| {
            let kmax = h.len().min(t + 1);
            (0..kmax).map(|k| h[k] * e[t - k]).sum()
        })
        .collect()
}

/// `S_i = R_i + N_i + X_i` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub sensors: Vec<SignalTrace>,
    /// Same seeds, no watermark.
    pub regular: Vec<SignalTrace>,
    /// Watermark image through the linearised loop.
    pub watermark: Vec<SignalTrace>,
    /// Whatever remains: nonlinear terms and cross terms.
    pub nonlinear: Vec<SignalTrace>,
}

/// Splits an unattacked run into regular, watermark and nonlinear components.
///
/// `N` is the difference of two runs of the linearised model (with and
/// without watermark) sharing all noise seeds; `X = (S - R) - N`, so with
/// `eps = 0` it is exactly zero.
pub fn decompose(setup: &SimSetup<'_>, key: &WatermarkKey) -> Result<Decomposition> {
    let full = simulate(setup, Some(key), None)?;
    let regular = simulate(setup, None, None)?;
    let linear = setup.model.linearized();
    let lin_setup = setup.with_model(&linear);
    let lin_e = simulate(&lin_setup, Some(key), None)?;
    let lin_0 = simulate(&lin_setup, None, None)?;

    let p = setup.model.n_sensors();
    let mut watermark = Vec::with_capacity(p);
    let mut nonlinear = Vec::with_capacity(p);
    for i in 0..p {
        let n_i = lin_e.sensors[i].sub(&lin_0.sensors[i])?;
        let x_i = full.sensors[i].sub(&regular.sensors[i])?.sub(&n_i)?;
        watermark.push(n_i);
        nonlinear.push(x_i);
    }
    Ok(Decomposition {
        sensors: full.sensors,
        regular: regular.sensors,
        watermark,
        nonlinear,
    })
}

/// Noise-free, watermark-free response to a known (effective) reference path.
///
/// This is the deterministic part of the grid that both the defender and, by
/// Kerckhoffs's principle, the adversary can compute.
pub fn nominal_response(
    model: &GridModel,
    effective_reference: &[SignalTrace],
    horizon: usize,
    initial_state: Option<DVector<f64>>,
) -> Result<TraceBundle> {
    let quiet = model.noise_free();
    let mut setup = SimSetup::new(&quiet, effective_reference, horizon, SeedSet {
        process: 0,
        measurement: 0,
        demand: 0,
    });
    setup.initial_state = initial_state;
    simulate(&setup, None, None)
}
