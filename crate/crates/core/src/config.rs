//! Line-based `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; an empty
//! file yields the `table-1-physical` preset with 1000 units and a 10.02 s
//! step. Template overrides apply on top of the chosen preset regardless of
//! line order.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{AmbientProfile, SimConfig};
use crate::fleet::{InitMode, PopulationSpec};
use crate::tcl::TclParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: key `{key}` given more than once")]
    Duplicate { key: String, line: usize },
    #[error("key `{key}`: expected {expected}, got `{value}`")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key `{key}`: {reason}")]
    Range { key: String, reason: String },
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    /// Reference parameters with COP 0.3.
    Table1,
    /// Reference parameters with COP 2.5 so cooling can overcome a 32 °C ambient.
    #[default]
    Table1Physical,
}

impl Preset {
    pub fn template(self) -> TclParams {
        TclParams {
            id: 0,
            thermal_capacitance: 2.0,
            thermal_resistance: 2.0,
            rated_power: 5.6,
            cop: match self {
                Preset::Table1 => 0.3,
                Preset::Table1Physical => 2.5,
            },
            setpoint: 22.5,
            deadband_halfwidth: 2.5,
            lockout_steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSettings {
    /// CSV file; `None` selects the built-in synthetic signal.
    pub path: Option<PathBuf>,
    /// Peak of the scaled signal as a fraction of `min(R+, R-)`.
    pub scale_fraction: f64,
    pub synthetic_seed: u64,
    pub synthetic_sample_seconds: f64,
    pub synthetic_correlation_seconds: f64,
}

impl Default for SignalSettings {
    fn default() -> Self {
        SignalSettings {
            path: None,
            scale_fraction: 0.5,
            synthetic_seed: 42,
            synthetic_sample_seconds: 2.0,
            synthetic_correlation_seconds: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub population: PopulationSpec,
    pub signal: SignalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        RunConfig {
            population: PopulationSpec {
                count: 1000,
                base_params: TclParams {
                    lockout_steps: sim.lockout_steps(),
                    ..Preset::default().template()
                },
                heterogeneity: 0.3,
                seed: sim.seed,
                init_mode: InitMode::Setpoint,
                sample_all_params: false,
                ambient_temp: 32.0,
            },
            signal: SignalSettings {
                synthetic_seed: sim.seed,
                ..Default::default()
            },
            sim,
        }
    }
}

const KEYS: &[&str] = &[
    "preset",
    "count",
    "heterogeneity",
    "seed",
    "init_mode",
    "sample_all_params",
    "capacitance",
    "resistance",
    "rated_power",
    "cop",
    "setpoint",
    "deadband",
    "step_seconds",
    "horizon_steps",
    "ambient",
    "ambient_profile",
    "noise_stddev",
    "soc_gate",
    "strict_eq8",
    "lockout_seconds",
    "threads",
    "scale_fraction",
    "signal",
    "signal_seed",
    "signal_sample_seconds",
    "signal_correlation_seconds",
];

struct Entries {
    map: HashMap<String, String>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(
        &self,
        key: &str,
        expected: &'static str,
    ) -> Result<Option<T>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| ConfigError::Type {
                    key: key.to_string(),
                    value: v.to_string(),
                    expected,
                })
            })
            .transpose()
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.parse::<f64>(key, "a number")? {
            Some(v) if !v.is_finite() => Err(range(key, "must be finite")),
            other => Ok(other),
        }
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.float(key)? {
            Some(v) if v <= 0.0 => Err(range(key, &format!("must be positive, got {v}"))),
            other => Ok(other),
        }
    }

    fn non_negative(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.float(key)? {
            Some(v) if v < 0.0 => Err(range(key, &format!("must be non-negative, got {v}"))),
            other => Ok(other),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.raw(key)
            .map(|v| match v {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(ConfigError::Type {
                    key: key.to_string(),
                    value: v.to_string(),
                    expected: "a boolean",
                }),
            })
            .transpose()
    }
}

fn range(key: &str, reason: &str) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                line,
            });
        }
        let value = value.trim_matches('"').to_string();
        if map.insert(key.to_string(), value).is_some() {
            return Err(ConfigError::Duplicate {
                key: key.to_string(),
                line,
            });
        }
    }
    Ok(Entries { map })
}

/// Parses configuration text. Relative signal paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;
    let mut cfg = RunConfig::default();

    let preset = match e.raw("preset") {
        None => Preset::default(),
        Some("table-1" | "table-1-verbatim") => Preset::Table1,
        Some("table-1-physical") => Preset::Table1Physical,
        Some(other) => {
            return Err(ConfigError::Type {
                key: "preset".into(),
                value: other.into(),
                expected: "`table-1`, `table-1-verbatim` or `table-1-physical`",
            })
        }
    };
    let mut t = preset.template();
    if let Some(v) = e.positive("capacitance")? {
        t.thermal_capacitance = v;
    }
    if let Some(v) = e.positive("resistance")? {
        t.thermal_resistance = v;
    }
    if let Some(v) = e.positive("rated_power")? {
        t.rated_power = v;
    }
    if let Some(v) = e.positive("cop")? {
        t.cop = v;
    }
    if let Some(v) = e.float("setpoint")? {
        t.setpoint = v;
    }
    if let Some(v) = e.positive("deadband")? {
        t.deadband_halfwidth = v;
    }
    cfg.population.base_params = t;

    if let Some(n) = e.parse::<usize>("count", "a positive integer")? {
        if n == 0 {
            return Err(range("count", "must be at least 1"));
        }
        cfg.population.count = n;
    }
    if let Some(h) = e.non_negative("heterogeneity")? {
        if h >= 1.0 {
            return Err(range("heterogeneity", &format!("must be below 1, got {h}")));
        }
        cfg.population.heterogeneity = h;
    }
    if let Some(seed) = e.parse::<u64>("seed", "a non-negative integer")? {
        cfg.sim.seed = seed;
        cfg.population.seed = seed;
        cfg.signal.synthetic_seed = seed;
    }
    cfg.population.init_mode = match e.raw("init_mode") {
        None | Some("setpoint") => InitMode::Setpoint,
        Some("uniform-in-band") => InitMode::UniformInBand,
        Some(other) => {
            return Err(ConfigError::Type {
                key: "init_mode".into(),
                value: other.into(),
                expected: "`setpoint` or `uniform-in-band`",
            })
        }
    };
    if let Some(b) = e.boolean("sample_all_params")? {
        cfg.population.sample_all_params = b;
    }

    if let Some(v) = e.positive("step_seconds")? {
        cfg.sim.step_seconds = v;
    }
    if let Some(n) = e.parse::<usize>("horizon_steps", "a positive integer")? {
        if n == 0 {
            return Err(range("horizon_steps", "must be at least 1"));
        }
        cfg.sim.horizon_steps = n;
    }
    match (e.float("ambient")?, e.raw("ambient_profile")) {
        (Some(_), Some(_)) => return Err(range("ambient_profile", "conflicts with `ambient`")),
        (Some(a), None) => cfg.sim.ambient = AmbientProfile::Constant(a),
        (None, Some(list)) => {
            let values = list
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .ok()
                .filter(|v| !v.is_empty() && v.iter().all(|x| x.is_finite()))
                .ok_or_else(|| ConfigError::Type {
                    key: "ambient_profile".into(),
                    value: list.into(),
                    expected: "a comma-separated list of numbers",
                })?;
            cfg.sim.ambient = AmbientProfile::Series(values);
        }
        (None, None) => {}
    }
    cfg.population.ambient_temp = cfg.sim.ambient.at(0);
    if let Some(v) = e.non_negative("noise_stddev")? {
        cfg.sim.noise_stddev = v;
    }
    if let Some(b) = e.boolean("soc_gate")? {
        cfg.sim.soc_gate = b;
    }
    if let Some(b) = e.boolean("strict_eq8")? {
        cfg.sim.strict_eq8 = b;
    }
    if let Some(v) = e.non_negative("lockout_seconds")? {
        cfg.sim.lockout_seconds = v;
    }
    if let Some(n) = e.parse::<usize>("threads", "a non-negative integer")? {
        cfg.sim.threads = n;
    }
    cfg.population.base_params.lockout_steps = cfg.sim.lockout_steps();

    if let Some(v) = e.positive("scale_fraction")? {
        cfg.signal.scale_fraction = v;
    }
    if let Some(p) = e.raw("signal") {
        cfg.signal.path = Some(base_dir.join(p));
    }
    if let Some(seed) = e.parse::<u64>("signal_seed", "a non-negative integer")? {
        cfg.signal.synthetic_seed = seed;
    }
    if let Some(v) = e.positive("signal_sample_seconds")? {
        cfg.signal.synthetic_sample_seconds = v;
    }
    if let Some(v) = e.positive("signal_correlation_seconds")? {
        cfg.signal.synthetic_correlation_seconds = v;
    }

    if let Err(err) = cfg.population.base_params.validate() {
        return Err(range("preset", &err.to_string()));
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}
