//! The defender's private watermark and its expected image at each sensor.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::grid_model::analysis::{convolve, effective_impulse_length};
use crate::grid_model::{closed_loop_impulse_response, GridModel, SignalTrace};
use crate::seed::rng;
use crate::Result;

/// Private key of the watermark: i.i.d. Gaussian samples with std `sigma_e`,
/// deterministic in `seed`.
///
/// Only the defender holds this. Adversary code paths take no argument of
/// this type.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct WatermarkKey {
    seed: u64,
    sigma_e: f64,
}

impl std::fmt::Debug for WatermarkKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WatermarkKey")
            .field("seed", &"<private>")
            .field("sigma_e", &self.sigma_e)
            .finish()
    }
}

impl WatermarkKey {
    /// Panics if `sigma_e` is negative or not finite.
    pub fn new(seed: u64, sigma_e: f64) -> Self {
        assert!(
            sigma_e >= 0.0 && sigma_e.is_finite(),
            "sigma_e must be finite and >= 0"
        );
        Self { seed, sigma_e }
    }

    pub fn sigma_e(&self) -> f64 {
        self.sigma_e
    }
}

/// Watermark for control input 0.
pub fn generate_watermark(key: &WatermarkKey, length: usize) -> SignalTrace {
    draw(key, 0, length, 1.0)
}

/// One watermark stream per control input; input `k` uses ChaCha stream `k`
/// of the key's seed, so streams are independent and each is prefix-stable.
pub(crate) fn generate_watermark_inputs(
    key: &WatermarkKey,
    n_inputs: usize,
    length: usize,
    dt: f64,
) -> Vec<SignalTrace> {
    (0..n_inputs).map(|k| draw(key, k, length, dt)).collect()
}

fn draw(key: &WatermarkKey, input: usize, length: usize, dt: f64) -> SignalTrace {
    let mut gen = rng(key.seed);
    gen.set_stream(input as u64);
    let values = (0..length)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut gen);
            key.sigma_e * z
        })
        .collect();
    SignalTrace::from_finite(values, dt)
}

/// Defender's template `N^_i = sum_k h_{k->i} * e_k` over `horizon` steps.
///
/// Exact for channels whose loop is linear; the impulse response is truncated
/// once the closed-loop state has decayed below double precision.
pub fn expected_component(
    model: &GridModel,
    key: &WatermarkKey,
    channel: usize,
    horizon: usize,
) -> Result<SignalTrace> {
    let inputs = generate_watermark_inputs(key, model.n_inputs(), horizon, model.dt());
    let mut out = vec![0.0; horizon];
    for (k, e) in inputs.iter().enumerate() {
        let len = effective_impulse_length(model, k, horizon);
        let h = closed_loop_impulse_response(model, k, channel, len)?;
        for (o, v) in out.iter_mut().zip(convolve(h.values(), e.values(), horizon)) {
            *o += v;
        }
    }
    Ok(SignalTrace::from_finite(out, model.dt()))
}

/// Stationary std of the watermark image at `channel`: `sigma_e * ||h||_2`.
pub fn watermark_image_std(model: &GridModel, sigma_e: f64, channel: usize) -> Result<f64> {
    let mut energy = 0.0;
    for k in 0..model.n_inputs() {
        let len = effective_impulse_length(model, k, 1 << 20);
        let h = closed_loop_impulse_response(model, k, channel, len)?;
        energy += h.mean_square() * h.len() as f64;
    }
    Ok(sigma_e * energy.sqrt())
}
