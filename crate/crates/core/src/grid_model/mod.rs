//! Discrete-time closed loop of the smart grid: plant, sensors, controller.
//!
//! Conventions (fixed so every oracle agrees):
//!
//! ```text
//! y_t      = C x_t                       pre-nonlinearity sensor value
//! s_t      = f(y_t) + v_t                f(y) = y + eps * y^2, per channel
//! u_t      = r_t + d_t - G * s~_t        s~ = what the controller receives
//! x_{t+1}  = A x_t + B u_t + B_e e_t + w_t
//! ```
//!
//! `d` is a seeded random walk on the reference path (exogenous demand) and
//! `e` is the defender's watermark.

pub(crate) mod analysis;
mod sim;
pub(crate) mod trace;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use analysis::{closed_loop_impulse_response, decompose, nominal_response, Decomposition};
pub use sim::{simulate, ChannelModel, Interceptor, SimSetup};
pub use trace::{AttackTrace, SignalTrace, TraceBundle};

/// How a sensor's watermark image relates to its reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorKind {
    /// The watermark image does not depend on the reading's level
    /// (e.g. a transformer thermometer).
    #[default]
    Independent,
    /// The watermark image scales with the reading's RMS level
    /// (e.g. an RMS line-voltage sensor).
    AmplitudeScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    /// Process-noise std, applied independently to every state.
    pub sigma_w: f64,
    /// Measurement-noise std per sensor channel.
    pub sigma_v: Vec<f64>,
    /// Step std of the demand random walk, per control input.
    pub sigma_d: f64,
}

/// Plain-data description of a model; validated into a [`GridModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// Watermark injection matrix. Defaults to `b` (watermark at the actuator).
    #[serde(default)]
    pub b_e: Option<Vec<Vec<f64>>>,
    pub c: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    #[serde(default)]
    pub sensor_kind: Vec<SensorKind>,
    #[serde(default)]
    pub nonlinearity_eps: Vec<f64>,
    pub noise: NoiseLevels,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    0.1
}

impl ModelSpec {
    /// Four-state radial feeder, one actuator, two sensors.
    ///
    /// Sensor 0 is a monitoring sensor (not fed back); sensor 1 closes the
    /// loop with gain 0.5. Closed-loop spectral radius is about 0.806.
    pub fn desk_scale() -> Self {
        Self {
            a: vec![
                vec![0.6, 0.0, 0.0, 0.0],
                vec![0.3, 0.5, 0.0, 0.0],
                vec![0.0, 0.4, 0.4, 0.0],
                vec![0.0, 0.0, 0.5, 0.3],
            ],
            b: vec![vec![1.0], vec![0.0], vec![0.0], vec![0.0]],
            b_e: None,
            c: vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            g: vec![vec![0.0, 0.5]],
            sensor_kind: vec![SensorKind::Independent; 2],
            nonlinearity_eps: vec![0.0; 2],
            noise: NoiseLevels {
                sigma_w: 0.0,
                sigma_v: vec![0.01, 0.01],
                sigma_d: 0.001,
            },
            dt: default_dt(),
        }
    }

    /// Scalar model `x' = a x + u`, `y = x`, with feedback gain `g`.
    pub fn scalar(a: f64, g: f64) -> Self {
        Self {
            a: vec![vec![a]],
            b: vec![vec![1.0]],
            b_e: None,
            c: vec![vec![1.0]],
            g: vec![vec![g]],
            sensor_kind: vec![SensorKind::Independent],
            nonlinearity_eps: vec![0.0],
            noise: NoiseLevels {
                sigma_w: 0.0,
                sigma_v: vec![0.0],
                sigma_d: 0.0,
            },
            dt: 1.0,
        }
    }
}

fn to_matrix(rows: &[Vec<f64>], name: &'static str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::contract(format!("matrix `{name}` has no rows")));
    }
    let ncols = rows[0].len();
    for row in rows {
        if row.len() != ncols {
            return Err(Error::DimensionMismatch {
                context: name,
                expected: ncols,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!("matrix `{name}` has non-finite entries")));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Validated closed-loop grid model.
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    b_e: DMatrix<f64>,
    c: DMatrix<f64>,
    g: DMatrix<f64>,
    sensor_kind: Vec<SensorKind>,
    eps: Vec<f64>,
    noise: NoiseLevels,
    dt: f64,
}

impl GridModel {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let a = to_matrix(&spec.a, "a")?;
        let b = to_matrix(&spec.b, "b")?;
        let b_e = match &spec.b_e {
            Some(rows) => to_matrix(rows, "b_e")?,
            None => b.clone(),
        };
        let c = to_matrix(&spec.c, "c")?;
        let g = to_matrix(&spec.g, "g")?;

        let n = a.nrows();
        check_dim("a (square)", n, a.ncols())?;
        check_dim("b rows", n, b.nrows())?;
        check_dim("b_e rows", n, b_e.nrows())?;
        check_dim("b_e cols", b.ncols(), b_e.ncols())?;
        check_dim("c cols", n, c.ncols())?;
        check_dim("g rows", b.ncols(), g.nrows())?;
        check_dim("g cols", c.nrows(), g.ncols())?;

        let n_sensors = c.nrows();
        let sensor_kind = if spec.sensor_kind.is_empty() {
            vec![SensorKind::Independent; n_sensors]
        } else {
            spec.sensor_kind.clone()
        };
        let eps = if spec.nonlinearity_eps.is_empty() {
            vec![0.0; n_sensors]
        } else {
            spec.nonlinearity_eps.clone()
        };
        check_dim("sensor_kind", n_sensors, sensor_kind.len())?;
        check_dim("nonlinearity_eps", n_sensors, eps.len())?;
        check_dim("noise.sigma_v", n_sensors, spec.noise.sigma_v.len())?;

        let noise = &spec.noise;
        let sigmas = std::iter::once(noise.sigma_w)
            .chain(std::iter::once(noise.sigma_d))
            .chain(noise.sigma_v.iter().copied());
        for s in sigmas {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::contract("noise levels must be finite and >= 0"));
            }
        }
        if eps.iter().any(|e| !e.is_finite()) {
            return Err(Error::contract("nonlinearity_eps must be finite"));
        }
        if !(spec.dt > 0.0) {
            return Err(Error::contract("dt must be > 0"));
        }

        let model = Self {
            a,
            b,
            b_e,
            c,
            g,
            sensor_kind,
            eps,
            noise: spec.noise.clone(),
            dt: spec.dt,
        };
        let rho = model.spectral_radius();
        if !(rho < 1.0) {
            return Err(Error::Unstable {
                spectral_radius: rho,
            });
        }
        Ok(model)
    }

    pub fn desk_scale() -> Self {
        Self::new(&ModelSpec::desk_scale()).expect("desk-scale model is valid")
    }

    pub fn spec(&self) -> ModelSpec {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        ModelSpec {
            a: rows(&self.a),
            b: rows(&self.b),
            b_e: Some(rows(&self.b_e)),
            c: rows(&self.c),
            g: rows(&self.g),
            sensor_kind: self.sensor_kind.clone(),
            nonlinearity_eps: self.eps.clone(),
            noise: self.noise.clone(),
            dt: self.dt,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_sensors(&self) -> usize {
        self.c.nrows()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn b_e(&self) -> &DMatrix<f64> {
        &self.b_e
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn noise(&self) -> &NoiseLevels {
        &self.noise
    }

    pub fn sensor_kind(&self, channel: usize) -> SensorKind {
        self.sensor_kind[channel]
    }

    pub fn eps(&self, channel: usize) -> f64 {
        self.eps[channel]
    }

    pub fn is_linear(&self, channel: usize) -> bool {
        self.eps[channel] == 0.0
    }

    /// `A - B G C`.
    pub fn closed_loop_matrix(&self) -> DMatrix<f64> {
        &self.a - &self.b * &self.g * &self.c
    }

    pub fn spectral_radius(&self) -> f64 {
        self.closed_loop_matrix()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Same model with every sensor nonlinearity removed.
    pub fn linearized(&self) -> Self {
        Self {
            eps: vec![0.0; self.eps.len()],
            ..self.clone()
        }
    }

    /// Same model with every noise source switched off.
    pub fn noise_free(&self) -> Self {
        Self {
            noise: NoiseLevels {
                sigma_w: 0.0,
                sigma_v: vec![0.0; self.noise.sigma_v.len()],
                sigma_d: 0.0,
            },
            ..self.clone()
        }
    }

    pub fn with_noise(&self, noise: NoiseLevels) -> Result<Self> {
        let mut spec = self.spec();
        spec.noise = noise;
        Self::new(&spec)
    }

    pub fn with_eps(&self, channel: usize, eps: f64) -> Self {
        let mut m = self.clone();
        m.eps[channel] = eps;
        m
    }

    pub fn with_sensor_kind(&self, channel: usize, kind: SensorKind) -> Self {
        let mut m = self.clone();
        m.sensor_kind[channel] = kind;
        m
    }

    fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.n_sensors() {
            return Err(Error::contract(format!(
                "channel {channel} out of range ({} sensors)",
                self.n_sensors()
            )));
        }
        Ok(())
    }

    /// One plant step: returns `(x_next, y_raw)` with `y_raw = C x`.
    pub fn step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        e: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        check_dim("step: x", self.state_dim(), x.len())?;
        check_dim("step: u", self.n_inputs(), u.len())?;
        check_dim("step: e", self.n_inputs(), e.len())?;
        check_dim("step: w", self.state_dim(), w.len())?;
        let y_raw = &self.c * x;
        let x_next = &self.a * x + &self.b * u + &self.b_e * e + w;
        Ok((x_next, y_raw))
    }

    /// `f(y) = y + eps * y^2`.
    pub fn sensor_map(&self, channel: usize, y_raw: f64) -> f64 {
        let eps = self.eps[channel];
        y_raw + eps * y_raw * y_raw
    }

    pub fn sensor_output(&self, channel: usize, y_raw: f64, v: f64) -> Result<f64> {
        self.check_channel(channel)?;
        Ok(self.sensor_map(channel, y_raw) + v)
    }

    /// Principal-branch inverse of the sensor map.
    pub fn sensor_inverse(&self, channel: usize, reading: f64) -> Result<f64> {
        invert_quadratic(self.eps[channel], reading)
    }

    /// `u = r - G s_received`.
    pub fn controller_law(
        &self,
        r: &DVector<f64>,
        s_received: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check_dim("controller_law: r", self.n_inputs(), r.len())?;
        check_dim("controller_law: s", self.n_sensors(), s_received.len())?;
        Ok(r - &self.g * s_received)
    }
}

/// Solves `y + eps y^2 = s` for the root that tends to `s` as `eps -> 0`.
///
/// Uses `y = 2 s / (1 + sqrt(1 + 4 eps s))`, which has no cancellation for
/// small `eps`.
pub fn invert_quadratic(eps: f64, reading: f64) -> Result<f64> {
    if eps == 0.0 {
        return Ok(reading);
    }
    let disc = 1.0 + 4.0 * eps * reading;
    if disc < 0.0 || !disc.is_finite() {
        return Err(Error::NonInvertible { reading, eps });
    }
    Ok(2.0 * reading / (1.0 + disc.sqrt()))
}
