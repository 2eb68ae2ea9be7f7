use nalgebra::DVector;

use crate::grid_model::GridModel;

/// The adversary's digital twin: a noise-free, watermark-free replica of the
/// closed loop, driven by the known reference path.
///
/// The twin closes its own loop on its predicted sensor values. Feeding it the
/// received values instead would let the watermark leak into its control
/// history through the feedback, and its prediction would no longer be the
/// regular component `R`.
#[derive(Debug, Clone)]
pub struct TwinState {
    model: GridModel,
    state: DVector<f64>,
    controls: Vec<Vec<f64>>,
}

/// Twin output for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinPrediction {
    /// Pre-nonlinearity outputs `C x^`.
    pub outputs: Vec<f64>,
    /// Predicted sensor readings `f(C x^)`: `S_DT`.
    pub sensors: Vec<f64>,
}

impl TwinState {
    /// Zero initial state. Noise levels of `model` are discarded.
    pub fn new(model: &GridModel) -> Self {
        let model = model.noise_free();
        let state = DVector::zeros(model.state_dim());
        let controls = vec![Vec::new(); model.n_inputs()];
        Self {
            model,
            state,
            controls,
        }
    }

    pub fn with_state(model: &GridModel, state: DVector<f64>) -> Self {
        assert_eq!(state.len(), model.state_dim(), "twin state dimension");
        Self {
            state,
            ..Self::new(model)
        }
    }

    pub fn model(&self) -> &GridModel {
        &self.model
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    /// Reconstructed watermark-free control history, per input.
    pub fn control_history(&self) -> &[Vec<f64>] {
        &self.controls
    }

    /// Predicts every channel for the current step, then advances one step
    /// under `reference` (the effective reference at this step).
    pub fn predict(&mut self, reference: &[f64]) -> TwinPrediction {
        let m = &self.model;
        let outputs: Vec<f64> = (0..m.n_sensors())
            .map(|i| m.c().row(i).transpose().dot(&self.state))
            .collect();
        let sensors: Vec<f64> = outputs
            .iter()
            .enumerate()
            .map(|(i, &y)| m.sensor_map(i, y))
            .collect();
        let s = DVector::from_column_slice(&sensors);
        let r = DVector::from_column_slice(reference);
        let u = &r - m.g() * &s;
        for (hist, &uk) in self.controls.iter_mut().zip(u.iter()) {
            hist.push(uk);
        }
        self.state = m.a() * &self.state + m.b() * u;
        TwinPrediction { outputs, sensors }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{simulate, SignalTrace, SimSetup};
    use crate::seed::SeedSet;

    #[test]
    fn matched_twin_reproduces_noise_free_run() {
        let model = GridModel::desk_scale().noise_free();
        let r = vec![SignalTrace::constant(1.0, 300, model.dt())];
        let seeds = SeedSet::from_run_seed(1);
        let b = simulate(&SimSetup::new(&model, &r, 300, seeds), None, None).unwrap();
        let mut twin = TwinState::new(&model);
        for t in 0..300 {
            let p = twin.predict(&[1.0]);
            for ch in 0..2 {
                assert_eq!(p.sensors[ch], b.sensors[ch].values()[t]);
            }
        }
        assert_eq!(twin.control_history()[0], b.control[0].values());
    }

    #[test]
    fn twin_forgets_wrong_initial_state() {
        // rho ~ 0.806: 0.806^n < 1e-6 needs n ~ 64; allow a constant factor
        let model = GridModel::desk_scale().noise_free();
        let r = vec![SignalTrace::constant(1.0, 400, model.dt())];
        let b = simulate(&SimSetup::new(&model, &r, 400, SeedSet::from_run_seed(2)), None, None).unwrap();
        let mut twin = TwinState::with_state(&model, DVector::from_element(4, 3.0));
        let norm = b.sensors[0].rms();
        let mut last_err = f64::INFINITY;
        for t in 0..400 {
            let p = twin.predict(&[1.0]);
            last_err = (p.sensors[0] - b.sensors[0].values()[t]).abs();
            if t >= 100 {
                assert!(last_err < 1e-6 * norm, "t={t} err={last_err}");
            }
        }
        assert!(last_err < 1e-12);
    }
}
