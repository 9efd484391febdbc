//! Persistent analysis workspace.
//!
//! A workspace is a directory of versioned, line-oriented JSON stores plus
//! a manifest tracking stage completion and input digests. Stores are
//! written whole and deterministically: re-running a stage with identical
//! inputs and configuration reproduces byte-identical files. One writing
//! command holds the lock file at a time; read-only commands don't take it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::capture::CaptureMetadata;
use crate::config::{Config, ConfigError};
use crate::correlate::Directionality;

pub const MANIFEST_VERSION: u32 = 1;
pub const STORE_FORMAT_VERSION: u32 = 1;

const MANIFEST_FILE: &str = "manifest.json";
const CONFIG_FILE: &str = "config.toml";
const LOCK_FILE: &str = "lock";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("workspace {0} is not initialized (no manifest); run init first")]
    NotInitialized(PathBuf),
    #[error("workspace {0} is already initialized")]
    AlreadyInitialized(PathBuf),
    #[error("workspace is locked by another command (lock file {0})")]
    Locked(PathBuf),
    #[error("stage {stage} has not completed; run `{hint}` first")]
    StageIncomplete {
        stage: &'static str,
        hint: &'static str,
    },
    #[error("store {path} is corrupt: {reason}")]
    CorruptStore { path: PathBuf, reason: String },
    #[error("invalid ruleset label {0:?}: use letters, digits, '.', '-', '_'")]
    InvalidLabel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Completion record for an ingest stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageInfo {
    pub input_digests: Vec<String>,
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_range: Option<(u64, u64)>,
}

/// Settings the map stage ran with; recorded for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapStageInfo {
    pub tolerance_us: u64,
    pub packet_directionality: Directionality,
    pub alert_directionality: Directionality,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Stages {
    pub packets: Option<StageInfo>,
    pub flows: Option<StageInfo>,
    /// Per ruleset label.
    #[serde(default)]
    pub alerts: BTreeMap<String, StageInfo>,
    pub map: Option<MapStageInfo>,
    pub classify: Option<StageInfo>,
    pub report: Option<StageInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub config_digest: String,
    #[serde(default)]
    pub stages: Stages,
}

/// One ingested capture file's provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureFileInfo {
    pub file_name: String,
    pub digest: String,
    pub metadata: CaptureMetadata,
}

pub struct Workspace {
    root: PathBuf,
    pub manifest: Manifest,
    pub config: Config,
}

/// Held by writing commands; removing the file on drop releases the lock.
pub struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn sha256_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("sha256:{}", hex::encode(hasher.finalize()))
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_'))
}

impl Workspace {
    /// Create a fresh workspace rooted at `root` with a config snapshot.
    pub fn init(root: &Path, config: Config) -> Result<Self, WorkspaceError> {
        if root.join(MANIFEST_FILE).exists() {
            return Err(WorkspaceError::AlreadyInitialized(root.to_path_buf()));
        }
        fs::create_dir_all(root.join("stores"))?;
        fs::create_dir_all(root.join("reports"))?;
        let config_raw = config.to_toml();
        fs::write(root.join(CONFIG_FILE), &config_raw)?;
        let manifest = Manifest {
            manifest_version: MANIFEST_VERSION,
            config_digest: sha256_digest(config_raw.as_bytes()),
            stages: Stages::default(),
        };
        let ws = Workspace {
            root: root.to_path_buf(),
            manifest,
            config,
        };
        ws.save_manifest()?;
        Ok(ws)
    }

    pub fn open(root: &Path) -> Result<Self, WorkspaceError> {
        let manifest_path = root.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(WorkspaceError::NotInitialized(root.to_path_buf()));
        }
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(&manifest_path)?).map_err(|e| {
                WorkspaceError::CorruptStore {
                    path: manifest_path.clone(),
                    reason: e.to_string(),
                }
            })?;
        let config = Config::load(&root.join(CONFIG_FILE))?;
        Ok(Workspace {
            root: root.to_path_buf(),
            manifest,
            config,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn save_manifest(&self) -> Result<(), WorkspaceError> {
        let mut raw = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        raw.push('\n');
        fs::write(self.root.join(MANIFEST_FILE), raw)?;
        Ok(())
    }

    /// Replace the config snapshot; a changed digest invalidates the stages
    /// that consume configuration downstream of ingest.
    pub fn replace_config(&mut self, raw: &str) -> Result<bool, WorkspaceError> {
        let digest = sha256_digest(raw.as_bytes());
        if digest == self.manifest.config_digest {
            return Ok(false);
        }
        let config = Config::from_toml(raw)?;
        fs::write(self.root.join(CONFIG_FILE), raw)?;
        self.manifest.config_digest = digest;
        self.config = config;
        self.manifest.stages.map = None;
        self.manifest.stages.classify = None;
        self.manifest.stages.report = None;
        Ok(true)
    }

    pub fn lock(&self) -> Result<LockGuard, WorkspaceError> {
        let path = self.root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(LockGuard { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(WorkspaceError::Locked(path))
            }
            Err(e) => Err(e.into()),
        }
    }

    // ---- stage gating ----------------------------------------------------

    pub fn require_packets(&self) -> Result<&StageInfo, WorkspaceError> {
        self.manifest.stages.packets.as_ref().ok_or(WorkspaceError::StageIncomplete {
            stage: "packets",
            hint: "ingest-pcap",
        })
    }

    pub fn require_flows(&self) -> Result<&StageInfo, WorkspaceError> {
        self.manifest.stages.flows.as_ref().ok_or(WorkspaceError::StageIncomplete {
            stage: "flows",
            hint: "ingest-flows",
        })
    }

    pub fn require_alerts(&self) -> Result<(), WorkspaceError> {
        if self.manifest.stages.alerts.is_empty() {
            return Err(WorkspaceError::StageIncomplete {
                stage: "alerts",
                hint: "ingest-alerts",
            });
        }
        Ok(())
    }

    pub fn require_map(&self) -> Result<&MapStageInfo, WorkspaceError> {
        self.manifest.stages.map.as_ref().ok_or(WorkspaceError::StageIncomplete {
            stage: "map",
            hint: "map",
        })
    }

    pub fn require_classify(&self) -> Result<(), WorkspaceError> {
        self.manifest
            .stages
            .classify
            .as_ref()
            .map(|_| ())
            .ok_or(WorkspaceError::StageIncomplete {
                stage: "classify",
                hint: "classify",
            })
    }

    pub fn alert_labels(&self) -> Vec<String> {
        self.manifest.stages.alerts.keys().cloned().collect()
    }

    /// Record an ingest stage completion. When the input digests changed,
    /// everything downstream of ingest is invalidated.
    pub fn complete_ingest(
        &mut self,
        stage: IngestStage<'_>,
        info: StageInfo,
    ) -> Result<(), WorkspaceError> {
        let previous = match &stage {
            IngestStage::Packets => self.manifest.stages.packets.replace(info),
            IngestStage::Flows => self.manifest.stages.flows.replace(info),
            IngestStage::Alerts(label) => {
                if !valid_label(label) {
                    return Err(WorkspaceError::InvalidLabel(label.to_string()));
                }
                self.manifest.stages.alerts.insert(label.to_string(), info)
            }
        };
        let current = match &stage {
            IngestStage::Packets => self.manifest.stages.packets.as_ref(),
            IngestStage::Flows => self.manifest.stages.flows.as_ref(),
            IngestStage::Alerts(label) => self.manifest.stages.alerts.get(*label),
        };
        if previous.as_ref() != current {
            self.manifest.stages.map = None;
            self.manifest.stages.classify = None;
            self.manifest.stages.report = None;
        }
        self.save_manifest()
    }

    pub fn complete_map(&mut self, info: MapStageInfo) -> Result<(), WorkspaceError> {
        self.manifest.stages.map = Some(info);
        self.manifest.stages.classify = None;
        self.manifest.stages.report = None;
        self.save_manifest()
    }

    pub fn complete_classify(&mut self, verdict_count: u64) -> Result<(), WorkspaceError> {
        self.manifest.stages.classify = Some(StageInfo {
            input_digests: vec![self.manifest.config_digest.clone()],
            count: verdict_count,
            time_range: None,
        });
        self.manifest.stages.report = None;
        self.save_manifest()
    }

    pub fn complete_report(&mut self) -> Result<(), WorkspaceError> {
        self.manifest.stages.report = Some(StageInfo {
            input_digests: vec![self.manifest.config_digest.clone()],
            count: 0,
            time_range: None,
        });
        self.save_manifest()
    }

    // ---- stores ----------------------------------------------------------

    fn store_path(&self, name: &str) -> PathBuf {
        self.root.join("stores").join(format!("{name}.jsonl"))
    }

    /// Write a line-oriented store: a header line then one JSON value per
    /// line. The write is whole-file, so identical items reproduce
    /// identical bytes.
    pub fn write_store<T: Serialize>(&self, name: &str, items: &[T]) -> Result<(), WorkspaceError> {
        let path = self.store_path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut out = String::new();
        out.push_str(&format!(
            "{{\"store\":{:?},\"format_version\":{STORE_FORMAT_VERSION}}}\n",
            name
        ));
        for item in items {
            out.push_str(&serde_json::to_string(item).expect("store item serializes"));
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_store<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>, WorkspaceError> {
        let path = self.store_path(name);
        let corrupt = |reason: String| WorkspaceError::CorruptStore {
            path: path.clone(),
            reason,
        };
        let raw = fs::read_to_string(&path)?;
        let mut lines = raw.lines();
        let header: serde_json::Value = lines
            .next()
            .ok_or_else(|| corrupt("empty store file".into()))
            .and_then(|line| serde_json::from_str(line).map_err(|e| corrupt(e.to_string())))?;
        if header.get("store").and_then(|v| v.as_str()) != Some(name) {
            return Err(corrupt(format!("header names a different store: {header}")));
        }
        if header.get("format_version").and_then(|v| v.as_u64())
            != Some(STORE_FORMAT_VERSION as u64)
        {
            return Err(corrupt("unsupported store format version".into()));
        }
        let mut items = Vec::new();
        for (i, line) in lines.enumerate() {
            items.push(
                serde_json::from_str(line)
                    .map_err(|e| corrupt(format!("line {}: {e}", i + 2)))?,
            );
        }
        Ok(items)
    }

    pub fn store_exists(&self, name: &str) -> bool {
        self.store_path(name).exists()
    }

    /// Single-document JSON artifacts (reports, duplicate groups, notes).
    pub fn write_json<T: Serialize>(
        &self,
        relative: &str,
        value: &T,
    ) -> Result<(), WorkspaceError> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut raw = serde_json::to_string_pretty(value).expect("artifact serializes");
        raw.push('\n');
        fs::write(path, raw)?;
        Ok(())
    }

    pub fn read_json<T: DeserializeOwned>(&self, relative: &str) -> Result<T, WorkspaceError> {
        let path = self.root.join(relative);
        serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| {
            WorkspaceError::CorruptStore {
                path,
                reason: e.to_string(),
            }
        })
    }

    pub fn write_text(&self, relative: &str, text: &str) -> Result<(), WorkspaceError> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, text)?;
        Ok(())
    }
}

/// Store names used by the pipeline; alert-related stores are per label.
pub mod stores {
    pub const CAPTURES: &str = "captures";
    pub const PACKETS: &str = "packets";
    pub const FLOWS: &str = "flows";
    pub const FLOW_REJECTS: &str = "flow_rejects";
    pub const PACKET_MAP: &str = "packet_map";

    pub fn alerts(label: &str) -> String {
        format!("alerts/{label}")
    }
    pub fn alert_rejects(label: &str) -> String {
        format!("alert_rejects/{label}")
    }
    pub fn alert_map(label: &str) -> String {
        format!("alert_map/{label}")
    }
    pub fn verdicts(label: &str) -> String {
        format!("verdicts/{label}")
    }
}

pub enum IngestStage<'a> {
    Packets,
    Flows,
    Alerts(&'a str),
}
