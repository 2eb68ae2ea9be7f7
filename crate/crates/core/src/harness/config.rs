use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::presets;
use crate::adversary::{AttackMode, GainPolicy};
use crate::detector::DetectorConfig;
use crate::grid_model::{GridModel, ModelSpec, SensorKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Named starting point; the remaining fields override it.
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_e: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensor_kind: Option<Vec<SensorKind>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinearity_eps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_v: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            preset: "desk-scale".into(),
            a: None,
            b: None,
            b_e: None,
            c: None,
            g: None,
            sensor_kind: None,
            nonlinearity_eps: None,
            sigma_w: None,
            sigma_v: None,
            sigma_d: None,
            dt: None,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self) -> Result<ModelSpec> {
        let mut spec = match self.preset.as_str() {
            "desk-scale" => ModelSpec::desk_scale(),
            other => {
                return Err(Error::config(
                    "model.preset",
                    format!("unknown model preset `{other}` (known: desk-scale)"),
                ))
            }
        };
        macro_rules! over {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    spec.$field = v.clone();
                }
            };
        }
        over!(a);
        over!(b);
        over!(c);
        over!(g);
        over!(sensor_kind);
        over!(nonlinearity_eps);
        if let Some(v) = &self.b_e {
            spec.b_e = Some(v.clone());
        }
        if let Some(v) = self.sigma_w {
            spec.noise.sigma_w = v;
        }
        if let Some(v) = &self.sigma_v {
            spec.noise.sigma_v = v.clone();
        }
        if let Some(v) = self.sigma_d {
            spec.noise.sigma_d = v;
        }
        if let Some(v) = self.dt {
            spec.dt = v;
        }
        Ok(spec)
    }

    pub fn build(&self) -> Result<GridModel> {
        GridModel::new(&self.spec()?).map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config("model", other.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WatermarkConfig {
    pub sigma_e: f64,
    /// Reuse one key for every run. By default every run draws a fresh key.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_seed: Option<u64>,
}

impl Default for WatermarkConfig {
    fn default() -> Self {
        Self {
            sigma_e: 0.1,
            fixed_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FakeKind {
    /// `R_f = estimate + value`.
    #[default]
    Offset,
    /// `R_f = value * estimate`.
    Scaled,
    /// `R_f = value`.
    Constant,
    /// `R_f = explicit[t]`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FakeUnits {
    #[default]
    Absolute,
    /// Multiples of the stationary std of the watermark image on the target.
    SigmaN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub mode: AttackMode,
    pub target_channel: usize,
    pub gain_policy: GainPolicy,
    pub fake: FakeKind,
    pub fake_value: f64,
    pub fake_units: FakeUnits,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<f64>>,
    pub rms_window: usize,
    pub replay_delay: usize,
    /// Defaults to the warm-up.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            mode: AttackMode::None,
            target_channel: 0,
            gain_policy: GainPolicy::Independent,
            fake: FakeKind::Offset,
            fake_value: 0.0,
            fake_units: FakeUnits::Absolute,
            explicit: None,
            rms_window: 100,
            replay_delay: 1000,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelsConfig {
    /// Sensor lines carrying unconditionally authenticated traffic.
    pub authenticated: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Thresholds file from `calibrate`; calibrated on the fly when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            thresholds: None,
        }
    }
}

/// One experiment: model, watermark, detector, attack and campaign size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Preset the file was layered on, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub name: String,
    pub horizon: usize,
    pub warm_up: usize,
    pub n_runs: usize,
    pub base_seed: u64,
    /// Clean runs used to fit thresholds.
    pub calibration_runs: usize,
    /// Constant reference level on every control input.
    pub reference: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    /// Compute the regime ratios of every run (four extra simulations each).
    pub regime_metrics: bool,
    pub model: ModelConfig,
    pub watermark: WatermarkConfig,
    pub detector: DetectorConfig,
    pub attack: AttackConfig,
    pub channels: ChannelsConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            preset: None,
            name: "clean".into(),
            horizon: 10_000,
            warm_up: 1000,
            n_runs: 200,
            base_seed: 2024,
            calibration_runs: 100,
            reference: 1.0,
            initial_state: None,
            regime_metrics: true,
            model: ModelConfig::default(),
            watermark: WatermarkConfig::default(),
            detector: DetectorConfig::default(),
            attack: AttackConfig::default(),
            channels: ChannelsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ScenarioConfig {
    /// Parses the flat `key.path = value` format (a TOML subset). A top-level
    /// `preset = "<name>"` layers the file over that preset.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| Error::config("<file>", e.message().to_string()))?;
        let preset_name = user.get("preset").and_then(|v| v.as_str()).map(str::to_owned);
        let value = match &preset_name {
            Some(name) => {
                let base = presets::preset(name).ok_or_else(|| {
                    Error::config("preset", format!("unknown preset `{name}`"))
                })?;
                let mut merged = toml::Value::try_from(&base)
                    .map_err(|e| Error::config("preset", e.to_string()))?;
                merge(&mut merged, user);
                merged
            }
            None => user,
        };
        let text = toml::to_string(&value).map_err(|e| Error::config("<file>", e.to_string()))?;
        let config: ScenarioConfig = toml::from_str(&text).map_err(|e: toml::de::Error| {
            let path = e
                .span()
                .and_then(|span| key_at(&text, span.start))
                .unwrap_or_else(|| "<file>".into());
            Error::config(path, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs < 1 {
            return Err(Error::config("n_runs", "must be >= 1"));
        }
        if self.horizon <= self.warm_up + self.detector.window {
            return Err(Error::config(
                "horizon",
                format!(
                    "must exceed warm_up + detector.window = {}",
                    self.warm_up + self.detector.window
                ),
            ));
        }
        if !self.reference.is_finite() {
            return Err(Error::config("reference", "must be finite"));
        }
        if !(self.watermark.sigma_e >= 0.0 && self.watermark.sigma_e.is_finite()) {
            return Err(Error::config("watermark.sigma_e", "must be finite and >= 0"));
        }
        self.detector.validate()?;
        let model = self.model.build()?;
        let p = model.n_sensors();
        if let Some(&bad) = self.channels.authenticated.iter().find(|&&c| c >= p) {
            return Err(Error::config(
                "channels.authenticated",
                format!("channel {bad} of {p}"),
            ));
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != model.state_dim() {
                return Err(Error::config(
                    "initial_state",
                    format!("{} entries for a {}-state model", x0.len(), model.state_dim()),
                ));
            }
        }
        if self.attack.mode != AttackMode::None {
            if self.attack.fake == FakeKind::Explicit
                && self.attack.explicit.as_ref().is_none_or(|v| v.len() < self.horizon)
            {
                return Err(Error::config(
                    "attack.explicit",
                    "explicit fake trajectory must cover the horizon",
                ));
            }
            if self.attack.start.unwrap_or(self.warm_up) >= self.horizon {
                return Err(Error::config("attack.start", "must be before the horizon"));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form (keys sorted).
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        let canonical = serde_json::to_string(&value).expect("value serialises");
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Dotted key path of the innermost `key = value` line containing `offset`.
fn key_at(text: &str, offset: usize) -> Option<String> {
    let mut table = String::new();
    let mut pos = 0;
    for line in text.lines() {
        let end = pos + line.len();
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').to_string();
        }
        if offset >= pos && offset <= end {
            let key = trimmed.split('=').next()?.trim();
            if trimmed.starts_with('[') || key.is_empty() {
                return Some(table);
            }
            return Some(if table.is_empty() {
                key.to_string()
            } else {
                format!("{table}.{key}")
            });
        }
        pos = end + 1;
    }
    None
}
