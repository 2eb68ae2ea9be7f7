//! Three operations behind the static page in `www/`: the traces of one
//! attacked run, the detector's block statistics for a chosen attack, and the
//! signal-decomposition regime of a run. Each returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use gridmark::adversary::AttackMode;
use gridmark::harness::{presets, Scenario, ScenarioConfig};
use gridmark::watermark::expected_component;

/// Short runs keep the page responsive.
const HORIZON: usize = 4000;
const WARM_UP: usize = 1000;
const CALIBRATION_RUNS: usize = 40;

fn config(preset: &str, seed: u64) -> Result<ScenarioConfig, String> {
    let mut c = presets::preset(preset).ok_or_else(|| format!("unknown scenario `{preset}`"))?;
    c.horizon = HORIZON;
    c.warm_up = WARM_UP;
    c.base_seed = seed;
    c.calibration_runs = CALIBRATION_RUNS;
    c.regime_metrics = false;
    Ok(c)
}

#[derive(Debug, Serialize)]
pub struct AttackTraces {
    pub t: Vec<usize>,
    /// Genuine reading.
    pub s: Vec<f64>,
    /// Expected watermark image.
    pub n: Vec<f64>,
    /// Forged regular signal.
    pub r_fake: Vec<f64>,
    /// Value on the line.
    pub s_fake: Vec<f64>,
    pub sigma_n: f64,
}

/// Digital-twin attack on sensor 0 shifting the reading by `offset_sigmas`
/// watermark standard deviations; `points` samples after the warm-up.
pub fn attack_traces(offset_sigmas: f64, points: usize, seed: u64) -> Result<AttackTraces, String> {
    let mut c = config("dt-k1", seed)?;
    c.attack.fake_value = offset_sigmas;
    let s = Scenario::new(c).map_err(|e| e.to_string())?;
    let art = s.simulate_seed(s.run_seed(0), true).map_err(|e| e.to_string())?;
    let n = expected_component(s.model(), &art.key, 0, HORIZON).map_err(|e| e.to_string())?;
    let attack = art.bundle.attack.as_ref().ok_or("attack left no trace")?;
    let range = WARM_UP..(WARM_UP + points).min(HORIZON);
    Ok(AttackTraces {
        t: range.clone().collect(),
        s: art.bundle.sensors[0].values()[range.clone()].to_vec(),
        n: n.values()[range.clone()].to_vec(),
        r_fake: attack.fake_regular[range.clone()].to_vec(),
        s_fake: art.bundle.received[0].values()[range].to_vec(),
        sigma_n: s.sigma_n(),
    })
}

#[derive(Debug, Serialize)]
pub struct DetectorView {
    pub scenario: String,
    /// Calibrated gain interval on sensor 0.
    pub gain_band: (f64, f64),
    /// Per block on sensor 0: clean gain, attacked gain.
    pub clean_gain: Vec<f64>,
    pub attacked_gain: Vec<f64>,
    pub clean_alarms: Vec<bool>,
    pub attacked_alarms: Vec<bool>,
}

/// Calibrates on clean runs, then judges one clean and one attacked run with
/// the same seeds. `scenario` is a preset name.
pub fn detector_view(scenario: &str, seed: u64) -> Result<DetectorView, String> {
    let c = config(scenario, seed)?;
    if c.attack.mode == AttackMode::None {
        return Err("pick an attack scenario".into());
    }
    let s = Scenario::new(c).map_err(|e| e.to_string())?;
    let th = s.calibrate().map_err(|e| e.to_string())?;
    let window = s.config().detector.window;
    let seed = s.run_seed(0);
    let judge = |attacked: bool| -> Result<gridmark::detector::DetectorReport, String> {
        let art = s.simulate_seed(seed, attacked).map_err(|e| e.to_string())?;
        let stats = s.block_stats(&art).map_err(|e| e.to_string())?;
        gridmark::detector::judge(&stats, &th, window).map_err(|e| e.to_string())
    };
    let (clean, attacked) = (judge(false)?, judge(true)?);
    let gains = |r: &gridmark::detector::DetectorReport| r.channels[0].stats.iter().map(|b| b.gain).collect();
    let band = th.channels[0].gain;
    Ok(DetectorView {
        scenario: scenario.to_string(),
        gain_band: (band.low, band.high),
        clean_gain: gains(&clean),
        attacked_gain: gains(&attacked),
        clean_alarms: clean.block_alarms,
        attacked_alarms: attacked.block_alarms,
    })
}

#[derive(Debug, Serialize)]
pub struct RegimeView {
    pub x_over_n: f64,
    pub n_over_r: f64,
    pub pass: bool,
}

/// Regime ratios on sensor 0 for a quadratic coefficient and watermark std.
pub fn regime_view(eps: f64, sigma_e: f64, seed: u64) -> Result<RegimeView, String> {
    let mut c = config("clean", seed)?;
    c.model.nonlinearity_eps = Some(vec![eps, 0.0]);
    c.watermark.sigma_e = sigma_e;
    let s = Scenario::new(c).map_err(|e| e.to_string())?;
    let seed = s.run_seed(0);
    let key = s.simulate_seed(seed, false).map_err(|e| e.to_string())?.key;
    let r = s
        .regime(seed, &key)
        .map_err(|e| e.to_string())?
        .ok_or("no watermark or no signal")?;
    Ok(RegimeView {
        x_over_n: r.x_over_n,
        n_over_r: r.n_over_r,
        pass: r.pass,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())))
}

#[wasm_bindgen(js_name = attackTraces)]
pub fn attack_traces_js(offset_sigmas: f64, points: usize, seed: u32) -> Result<String, JsError> {
    to_js(attack_traces(offset_sigmas, points, seed as u64))
}

#[wasm_bindgen(js_name = detectorView)]
pub fn detector_view_js(scenario: &str, seed: u32) -> Result<String, JsError> {
    to_js(detector_view(scenario, seed as u64))
}

#[wasm_bindgen(js_name = regimeView)]
pub fn regime_view_js(eps: f64, sigma_e: f64, seed: u32) -> Result<String, JsError> {
    to_js(regime_view(eps, sigma_e, seed as u64))
}
