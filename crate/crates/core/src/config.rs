//! The workspace configuration document.
//!
//! One declarative TOML file carries everything the pipeline needs beyond
//! its input files: label and alert schema maps, mapping tolerances and
//! directionality, tag overlays, and attack scenarios. The file is
//! snapshot-copied into the workspace at init so reports are
//! self-describing.

use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::{CsvAlertSchema, FastParseOptions};
use crate::correlate::Directionality;
use crate::flow::{
    LabelSchema, OverlayEntry, Tag, TimeWindow, TuplePattern,
};
use crate::time::parse_instant;
use crate::tuple::protocol_number;
use crate::verdict::{AttackCategory, AttackScenario, SignaturePattern};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A point in time as written in config: epoch seconds (integer or float)
/// or an ISO-8601 string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSpec {
    Seconds(i64),
    FractionalSeconds(f64),
    Text(String),
}

impl TimeSpec {
    pub fn to_micros(&self) -> Result<u64, ConfigError> {
        let parsed = match self {
            TimeSpec::Seconds(s) if *s >= 0 => Some(*s as u64 * 1_000_000),
            TimeSpec::Seconds(_) => None,
            TimeSpec::FractionalSeconds(s) if *s >= 0.0 && s.is_finite() => {
                Some((s * 1_000_000.0).round() as u64)
            }
            TimeSpec::FractionalSeconds(_) => None,
            TimeSpec::Text(t) => parse_instant(t),
        };
        parsed.ok_or_else(|| ConfigError::Invalid(format!("bad time value {self:?}")))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WindowConfig {
    pub start: Option<TimeSpec>,
    pub stop: Option<TimeSpec>,
}

impl WindowConfig {
    fn to_window(&self) -> Result<Option<TimeWindow>, ConfigError> {
        match (&self.start, &self.stop) {
            (None, None) => Ok(None),
            (start, stop) => Ok(Some(TimeWindow {
                start: start.as_ref().map(|t| t.to_micros()).transpose()?.unwrap_or(0),
                stop: stop
                    .as_ref()
                    .map(|t| t.to_micros())
                    .transpose()?
                    .unwrap_or(u64::MAX),
            })),
        }
    }
}

/// Tuple pattern as written in config; protocol may be a name or number.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PatternConfig {
    pub src_addr: Option<IpAddr>,
    pub dst_addr: Option<IpAddr>,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    pub protocol: Option<String>,
}

impl PatternConfig {
    fn to_pattern(&self) -> Result<TuplePattern, ConfigError> {
        let protocol = self
            .protocol
            .as_deref()
            .map(|p| {
                protocol_number(p)
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown protocol {p:?}")))
            })
            .transpose()?;
        Ok(TuplePattern {
            src_addr: self.src_addr,
            dst_addr: self.dst_addr,
            src_port: self.src_port,
            dst_port: self.dst_port,
            protocol,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlayConfig {
    #[serde(default)]
    pub selector: PatternConfig,
    #[serde(default)]
    pub window: WindowConfig,
    pub new_tag: String,
    pub rationale: String,
}

impl OverlayConfig {
    fn to_entry(&self) -> Result<OverlayEntry, ConfigError> {
        let new_tag = match self.new_tag.to_ascii_lowercase().as_str() {
            "attack" => Tag::Attack,
            "normal" => Tag::Normal,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "overlay new_tag must be attack or normal, got {other:?}"
                )))
            }
        };
        Ok(OverlayEntry {
            selector: self.selector.to_pattern()?,
            window: self.window.to_window()?,
            new_tag,
            rationale: self.rationale.clone(),
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExpectedSignatureConfig {
    pub gid: Option<u32>,
    pub sid: Option<u32>,
    pub rev: Option<u32>,
    pub message_contains: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub category: String,
    /// Defaults by category: vulnerability scenarios are in scope, the rest
    /// are not.
    pub in_ids_scope: Option<bool>,
    #[serde(default)]
    pub scope: PatternConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub expected: Vec<ExpectedSignatureConfig>,
}

fn parse_category(s: &str) -> Result<AttackCategory, ConfigError> {
    match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
        "vulnerability" | "i" | "1" => Ok(AttackCategory::Vulnerability),
        "auxiliary" | "ii" | "2" => Ok(AttackCategory::Auxiliary),
        "bruteforce" | "iii" | "3" => Ok(AttackCategory::BruteForce),
        other => Err(ConfigError::Invalid(format!(
            "unknown scenario category {other:?}"
        ))),
    }
}

impl ScenarioConfig {
    fn to_scenario(&self) -> Result<AttackScenario, ConfigError> {
        let category = parse_category(&self.category)?;
        let mut scenario = AttackScenario::new(self.name.clone(), category);
        scenario.scope.tuple = self.scope.to_pattern()?;
        scenario.scope.window = self.window.to_window()?;
        scenario.in_ids_scope = self.in_ids_scope.unwrap_or(category.default_in_scope());
        scenario.expected_signatures = self
            .expected
            .iter()
            .map(|e| SignaturePattern {
                gid: e.gid,
                sid: e.sid,
                rev: e.rev,
                message_contains: e.message_contains.clone(),
            })
            .collect();
        Ok(scenario)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MapSettings {
    #[serde(default)]
    pub tolerance_us: u64,
    #[serde(default = "default_packet_directionality")]
    pub packet_directionality: Directionality,
    #[serde(default = "default_alert_directionality")]
    pub alert_directionality: Directionality,
}

fn default_packet_directionality() -> Directionality {
    Directionality::Directional
}

fn default_alert_directionality() -> Directionality {
    Directionality::Bidirectional
}

impl Default for MapSettings {
    fn default() -> Self {
        Self {
            tolerance_us: 0,
            packet_directionality: default_packet_directionality(),
            alert_directionality: default_alert_directionality(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowSettings {
    /// Derived-flow idle timeout in microseconds.
    #[serde(default = "default_idle_timeout")]
    pub idle_timeout_us: u64,
}

fn default_idle_timeout() -> u64 {
    60_000_000
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self {
            idle_timeout_us: default_idle_timeout(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Config {
    /// Workspace directory; the config value wins over the environment.
    pub workspace: Option<PathBuf>,
    /// Assumed year for engine timestamps that carry none.
    pub base_year: Option<i32>,
    pub labels: Option<LabelSchema>,
    pub alert_csv: Option<CsvAlertSchema>,
    #[serde(default)]
    pub map: MapSettings,
    #[serde(default)]
    pub flows: FlowSettings,
    #[serde(default)]
    pub overlay: Vec<OverlayConfig>,
    #[serde(default)]
    pub scenario: Vec<ScenarioConfig>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&raw)
    }

    pub fn from_toml(raw: &str) -> Result<Self, ConfigError> {
        toml::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn scenarios(&self) -> Result<Vec<AttackScenario>, ConfigError> {
        self.scenario.iter().map(|s| s.to_scenario()).collect()
    }

    pub fn overlays(&self) -> Result<Vec<OverlayEntry>, ConfigError> {
        self.overlay.iter().map(|o| o.to_entry()).collect()
    }

    pub fn fast_options(&self, reference_range: Option<(u64, u64)>) -> FastParseOptions {
        FastParseOptions {
            base_year: self.base_year.unwrap_or(1970),
            reference_range,
        }
    }
}
