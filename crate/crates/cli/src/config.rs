//! Scenario configuration: a flat key = value file or a JSON object, both
//! feeding the same validated key set. Presets for the four evaluation
//! cases ship embedded, so `--preset caseN` needs no files.

use codednet::analytic::{CaseId, ScenarioParams};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key '{key}'")]
    UnknownKey { key: String },
    #[error("invalid value for '{key}': {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("config line {line}: expected 'key = value'")]
    BadLine { line: usize },
    #[error("cannot read '{path}': {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad JSON config: {0}")]
    Json(String),
    #[error("unknown preset '{0}' (expected case1..case4)")]
    UnknownPreset(String),
    #[error("topology file '{0}' does not exist")]
    MissingTopologyFile(String),
    #[error("bad --set override '{0}': expected KEY=VALUE")]
    BadOverride(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Coded,
    Uncoded,
    Both,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Coded => "coded",
            RunMode::Uncoded => "uncoded",
            RunMode::Both => "both",
        }
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coded" => Ok(RunMode::Coded),
            "uncoded" => Ok(RunMode::Uncoded),
            "both" => Ok(RunMode::Both),
            other => Err(format!("'{other}' is not one of coded|uncoded|both")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologySelect {
    Butterfly,
    TwoPath,
    Custom(PathBuf),
}

impl TopologySelect {
    fn as_config_value(&self) -> String {
        match self {
            TopologySelect::Butterfly => "butterfly".into(),
            TopologySelect::TwoPath => "two_path".into(),
            TopologySelect::Custom(path) => path.display().to_string(),
        }
    }
}

/// Everything a run needs, addressable by flat keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub params: ScenarioParams,
    pub topology: TopologySelect,
    pub mode: RunMode,
    pub traffic: codednet::simnet::TrafficMode,
    pub duration_s: f64,
    /// Seed count for multi-seed runs (suite cells).
    pub seeds: u32,
    /// Seed for single runs.
    pub seed: u64,
    pub retransmit_limit: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::preset(CaseId::Case1)
    }
}

const KEYS: &[&str] = &[
    "name",
    "topology",
    "mode",
    "traffic",
    "duration_s",
    "seeds",
    "seed",
    "retransmit_limit",
    "lambda",
    "p_loss",
    "k",
    "p_failure",
    "n",
    "l_request",
    "l_processing",
    "l_response",
    "l_coding",
    "l_reduced",
    "heaviest_path_fraction",
    "distance_km",
];

impl ScenarioConfig {
    /// The embedded per-case configuration. Presets disable uncoded
    /// retransmission: the closed-form throughput/loss columns model a
    /// single transmission attempt, and the reconciliation is against
    /// those forms.
    pub fn preset(case: CaseId) -> Self {
        Self {
            name: case.name().to_string(),
            params: case.params(),
            topology: TopologySelect::TwoPath,
            mode: RunMode::Both,
            traffic: codednet::simnet::TrafficMode::Deterministic,
            duration_s: 10.0,
            seeds: 20,
            seed: 1,
            retransmit_limit: 0,
        }
    }

    pub fn preset_by_name(name: &str) -> Result<Self, ConfigError> {
        let case: CaseId = name
            .parse()
            .map_err(|_| ConfigError::UnknownPreset(name.to_string()))?;
        Ok(Self::preset(case))
    }

    /// Applies one `key = value` pair; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: String| ConfigError::InvalidValue {
            key: key.to_string(),
            reason,
        };
        let f64_of = |key: &str, value: &str| -> Result<f64, ConfigError> {
            value
                .parse::<f64>()
                .map_err(|e| invalid(key, format!("{e}")))
        };
        match key {
            "name" => self.name = value.to_string(),
            "topology" => {
                self.topology = match value {
                    "butterfly" => TopologySelect::Butterfly,
                    "two_path" => TopologySelect::TwoPath,
                    path => TopologySelect::Custom(PathBuf::from(path)),
                }
            }
            "mode" => self.mode = value.parse().map_err(|e: String| invalid(key, e))?,
            "traffic" => {
                self.traffic = match value {
                    "deterministic" => codednet::simnet::TrafficMode::Deterministic,
                    "poisson" => codednet::simnet::TrafficMode::Poisson,
                    other => {
                        return Err(invalid(
                            key,
                            format!("'{other}' is not deterministic|poisson"),
                        ))
                    }
                }
            }
            "duration_s" => self.duration_s = f64_of(key, value)?,
            "seeds" => self.seeds = value.parse().map_err(|e| invalid(key, format!("{e}")))?,
            "seed" => self.seed = value.parse().map_err(|e| invalid(key, format!("{e}")))?,
            "retransmit_limit" => {
                self.retransmit_limit = value.parse().map_err(|e| invalid(key, format!("{e}")))?
            }
            "lambda" => self.params.lambda = f64_of(key, value)?,
            "p_loss" => self.params.p_loss = f64_of(key, value)?,
            "k" => self.params.k = value.parse().map_err(|e| invalid(key, format!("{e}")))?,
            "p_failure" => self.params.p_failure = f64_of(key, value)?,
            "n" => self.params.n = value.parse().map_err(|e| invalid(key, format!("{e}")))?,
            "l_request" => self.params.l_request = f64_of(key, value)?,
            "l_processing" => self.params.l_processing = f64_of(key, value)?,
            "l_response" => self.params.l_response = f64_of(key, value)?,
            "l_coding" => self.params.l_coding = f64_of(key, value)?,
            "l_reduced" => self.params.l_reduced = f64_of(key, value)?,
            "heaviest_path_fraction" => self.params.heaviest_path_fraction = f64_of(key, value)?,
            "distance_km" => self.params.distance_km = f64_of(key, value)?,
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Full validation: parameter ranges plus referenced files.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(|e| match e {
            codednet::analytic::AnalyticError::InvalidParam { key, reason } => {
                ConfigError::InvalidValue {
                    key: key.to_string(),
                    reason,
                }
            }
            other => ConfigError::InvalidValue {
                key: "params".into(),
                reason: other.to_string(),
            },
        })?;
        if !self.duration_s.is_finite() || self.duration_s <= 0.0 {
            return Err(ConfigError::InvalidValue {
                key: "duration_s".into(),
                reason: format!("{} must be > 0", self.duration_s),
            });
        }
        if self.seeds == 0 {
            return Err(ConfigError::InvalidValue {
                key: "seeds".into(),
                reason: "need at least one seed".into(),
            });
        }
        if let TopologySelect::Custom(path) = &self.topology {
            if !path.exists() {
                return Err(ConfigError::MissingTopologyFile(path.display().to_string()));
            }
        }
        Ok(())
    }

    /// Flat key = value rendering; `parse` reads it back identically.
    pub fn emit_flat(&self) -> String {
        let traffic = match self.traffic {
            codednet::simnet::TrafficMode::Deterministic => "deterministic",
            codednet::simnet::TrafficMode::Poisson => "poisson",
        };
        let p = &self.params;
        format!(
            "name = {}\ntopology = {}\nmode = {}\ntraffic = {}\nduration_s = {}\nseeds = {}\nseed = {}\nretransmit_limit = {}\nlambda = {}\np_loss = {}\nk = {}\np_failure = {}\nn = {}\nl_request = {}\nl_processing = {}\nl_response = {}\nl_coding = {}\nl_reduced = {}\nheaviest_path_fraction = {}\ndistance_km = {}\n",
            self.name,
            self.topology.as_config_value(),
            self.mode.as_str(),
            traffic,
            self.duration_s,
            self.seeds,
            self.seed,
            self.retransmit_limit,
            p.lambda,
            p.p_loss,
            p.k,
            p.p_failure,
            p.n,
            p.l_request,
            p.l_processing,
            p.l_response,
            p.l_coding,
            p.l_reduced,
            p.heaviest_path_fraction,
            p.distance_km,
        )
    }

    /// Parses flat text or JSON (sniffed by the leading brace) on top of
    /// the base-case defaults, then validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = ScenarioConfig::default();
        if text.trim_start().starts_with('{') {
            let object: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
            for (key, value) in object {
                let value = match value {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Number(n) => n.to_string(),
                    other => {
                        return Err(ConfigError::InvalidValue {
                            key,
                            reason: format!("unsupported JSON value {other}"),
                        })
                    }
                };
                config.set(&key, &value)?;
            }
        } else {
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or(ConfigError::BadLine { line: i + 1 })?;
                config.set(key.trim(), value.trim())?;
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Builds the effective config from an optional preset, an optional
    /// file, and inline KEY=VALUE overrides, in that order.
    pub fn resolve(
        preset: Option<&str>,
        file: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let mut config = match (preset, file) {
            (Some(name), None) => Self::preset_by_name(name)?,
            (None, Some(path)) => Self::from_file(path)?,
            (Some(name), Some(path)) => {
                // Preset first, file keys layered on top.
                let mut c = Self::preset_by_name(name)?;
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                for (i, raw) in text.lines().enumerate() {
                    let line = raw.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let (key, value) = line
                        .split_once('=')
                        .ok_or(ConfigError::BadLine { line: i + 1 })?;
                    c.set(key.trim(), value.trim())?;
                }
                c
            }
            (None, None) => Self::default(),
        };
        for pair in overrides {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(pair.clone()))?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn known_keys() -> &'static [&'static str] {
        KEYS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_case4_has_high_path_failure() {
        let c = ScenarioConfig::preset_by_name("case4").unwrap();
        assert_eq!(c.params.p_failure, 0.5);
        assert_eq!(c.name, "case4");
        assert!(ScenarioConfig::preset_by_name("case9").is_err());
    }

    #[test]
    fn empty_overrides_leave_preset_unchanged() {
        let base = ScenarioConfig::preset(CaseId::Case2);
        let resolved = ScenarioConfig::resolve(Some("case2"), None, &[]).unwrap();
        assert_eq!(base, resolved);
    }

    #[test]
    fn flat_round_trip_for_every_preset() {
        for case in CaseId::ALL {
            let config = ScenarioConfig::preset(case);
            let parsed = ScenarioConfig::parse(&config.emit_flat()).unwrap();
            assert_eq!(config, parsed, "{case}");
        }
    }

    #[test]
    fn json_and_flat_agree() {
        let flat = "name = x\nlambda = 1500\np_loss = 0.2\n";
        let json = r#"{"name": "x", "lambda": 1500, "p_loss": 0.2}"#;
        assert_eq!(
            ScenarioConfig::parse(flat).unwrap(),
            ScenarioConfig::parse(json).unwrap()
        );
    }

    #[test]
    fn out_of_range_value_names_the_key() {
        let err = ScenarioConfig::parse("p_loss = 1.5\n").unwrap_err();
        match err {
            ConfigError::InvalidValue { key, .. } => assert_eq!(key, "p_loss"),
            other => panic!("expected InvalidValue, got {other}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::parse("bogus_knob = 3\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { key } => assert_eq!(key, "bogus_knob"),
            other => panic!("expected UnknownKey, got {other}"),
        }
    }

    #[test]
    fn missing_topology_file_is_an_error() {
        let err = ScenarioConfig::parse("topology = /no/such/file.json\n").unwrap_err();
        assert!(matches!(err, ConfigError::MissingTopologyFile(_)));
    }

    #[test]
    fn overrides_apply_after_preset() {
        let c = ScenarioConfig::resolve(Some("case1"), None, &["p_loss=0.4".into()]).unwrap();
        assert_eq!(c.params.p_loss, 0.4);
        assert!(ScenarioConfig::resolve(None, None, &["junk".into()]).is_err());
    }
}
