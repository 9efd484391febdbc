//! IDS alert ingestion: uniform records from heterogeneous engine output.
//!
//! Three parsers share the same discipline: every input line is accounted
//! for as parsed, rejected (with line number and reason), or skipped
//! (recognized but intentionally ignored, e.g. non-alert event records).

mod eve;
mod fast;
mod generic;

use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tuple::FiveTuple;

pub use eve::parse_eve;
pub use fast::{parse_snort_fast, FastParseOptions};
pub use generic::{parse_generic_alert_csv, CsvAlertSchema};

/// Rule identity triple as printed in engine output, e.g. `[129:12:1]`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SignatureId {
    pub gid: u32,
    pub sid: u32,
    pub rev: u32,
}

impl SignatureId {
    pub fn new(gid: u32, sid: u32, rev: u32) -> Self {
        Self { gid, sid, rev }
    }
}

impl fmt::Display for SignatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}:{}:{}]", self.gid, self.sid, self.rev)
    }
}

/// One alert from one engine run, normalized across source formats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub alert_id: u64,
    /// Epoch microseconds.
    pub timestamp: u64,
    pub signature: SignatureId,
    pub message: String,
    /// Absent only for engine-internal alerts that carry no endpoints.
    pub tuple: Option<FiveTuple>,
    /// Names the producing engine/ruleset run.
    pub ruleset: String,
    pub priority: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct AlertParseOutcome {
    pub alerts: Vec<AlertRecord>,
    pub rejects: Vec<ParseReject>,
    /// Lines recognized and intentionally ignored (non-alert event types).
    pub skipped: usize,
    pub total_lines: usize,
}

impl AlertParseOutcome {
    fn new() -> Self {
        Self {
            alerts: Vec::new(),
            rejects: Vec::new(),
            skipped: 0,
            total_lines: 0,
        }
    }

    /// parsed + rejected + skipped accounts for every input line.
    pub fn conservation_holds(&self) -> bool {
        self.alerts.len() + self.rejects.len() + self.skipped == self.total_lines
    }

    /// A stream that produced rejects but not a single alert deserves a
    /// prominent warning: the format choice is probably wrong.
    pub fn zero_parse_warning(&self) -> Option<String> {
        if self.alerts.is_empty() && !self.rejects.is_empty() {
            Some(format!(
                "no alerts parsed but {} lines rejected; wrong format?",
                self.rejects.len()
            ))
        } else {
            None
        }
    }
}

#[derive(Debug, Error)]
pub enum AlertConfigError {
    #[error("alert schema maps column {0:?} which is not in the file header")]
    MissingColumn(String),
    #[error("alert schema is missing the required {0:?} column mapping")]
    MissingMapping(&'static str),
    #[error("failed to read alert input: {0}")]
    Io(#[from] std::io::Error),
}

/// Split an engine-printed endpoint into address and port.
///
/// `1.2.3.4:80` and `2001:db8::1:80` carry ports; a bare address (ICMP and
/// other port-less protocols) gets port 0.
pub(crate) fn parse_endpoint(s: &str) -> Option<(IpAddr, u16)> {
    if let Some((addr_part, port_part)) = s.rsplit_once(':') {
        if let (Ok(addr), Ok(port)) = (addr_part.parse::<IpAddr>(), port_part.parse::<u16>()) {
            return Some((addr, port));
        }
    }
    s.parse::<IpAddr>().ok().map(|addr| (addr, 0))
}
