//! Generic delimiter-separated alert ingestion, driven by a column map.
//!
//! Lets fixture files and third-party engines feed the pipeline without a
//! dedicated parser: the schema names which columns hold which record
//! fields.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::time::parse_instant;
use crate::tuple::{protocol_number, FiveTuple};

use super::{AlertConfigError, AlertParseOutcome, AlertRecord, ParseReject, SignatureId};

/// Column map for delimiter-separated alert files. `timestamp`, `sid`, and
/// `message` are required; endpoint columns are optional as a group, and
/// `gid`/`rev` default to 1/0 when unmapped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvAlertSchema {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub timestamp: Option<String>,
    pub gid: Option<String>,
    pub sid: Option<String>,
    pub rev: Option<String>,
    pub message: Option<String>,
    pub src_addr: Option<String>,
    pub src_port: Option<String>,
    pub dst_addr: Option<String>,
    pub dst_port: Option<String>,
    pub protocol: Option<String>,
    pub priority: Option<String>,
}

fn default_delimiter() -> char {
    ','
}

impl Default for CsvAlertSchema {
    fn default() -> Self {
        Self {
            delimiter: ',',
            timestamp: Some("timestamp".into()),
            gid: Some("gid".into()),
            sid: Some("sid".into()),
            rev: Some("rev".into()),
            message: Some("message".into()),
            src_addr: Some("src_addr".into()),
            src_port: Some("src_port".into()),
            dst_addr: Some("dst_addr".into()),
            dst_port: Some("dst_port".into()),
            protocol: Some("protocol".into()),
            priority: None,
        }
    }
}

struct ColumnIndexes {
    timestamp: usize,
    gid: Option<usize>,
    sid: usize,
    rev: Option<usize>,
    message: usize,
    endpoints: Option<EndpointColumns>,
    priority: Option<usize>,
}

struct EndpointColumns {
    src_addr: usize,
    src_port: usize,
    dst_addr: usize,
    dst_port: usize,
    protocol: usize,
}

fn resolve_columns(
    schema: &CsvAlertSchema,
    headers: &[&str],
) -> Result<ColumnIndexes, AlertConfigError> {
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, name)| (name.trim(), i))
        .collect();
    let lookup = |mapping: &Option<String>| -> Result<Option<usize>, AlertConfigError> {
        match mapping {
            None => Ok(None),
            Some(name) => index
                .get(name.trim())
                .copied()
                .map(Some)
                .ok_or_else(|| AlertConfigError::MissingColumn(name.clone())),
        }
    };
    let required = |mapping: &Option<String>, field: &'static str| -> Result<usize, AlertConfigError> {
        lookup(mapping)?.ok_or(AlertConfigError::MissingMapping(field))
    };

    let endpoints = if schema.src_addr.is_some() || schema.dst_addr.is_some() {
        Some(EndpointColumns {
            src_addr: required(&schema.src_addr, "src_addr")?,
            src_port: required(&schema.src_port, "src_port")?,
            dst_addr: required(&schema.dst_addr, "dst_addr")?,
            dst_port: required(&schema.dst_port, "dst_port")?,
            protocol: required(&schema.protocol, "protocol")?,
        })
    } else {
        None
    };
    Ok(ColumnIndexes {
        timestamp: required(&schema.timestamp, "timestamp")?,
        gid: lookup(&schema.gid)?,
        sid: required(&schema.sid, "sid")?,
        rev: lookup(&schema.rev)?,
        message: required(&schema.message, "message")?,
        endpoints,
        priority: lookup(&schema.priority)?,
    })
}

/// Parse a delimiter-separated alert file with a header row.
///
/// A schema that names a column missing from the header is a fatal
/// configuration error; individual bad rows go to the rejects list.
pub fn parse_generic_alert_csv(
    input: &str,
    ruleset: &str,
    schema: &CsvAlertSchema,
) -> Result<AlertParseOutcome, AlertConfigError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .from_reader(input.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let header_refs: Vec<&str> = headers.iter().map(|h| h.as_str()).collect();
    let columns = resolve_columns(schema, &header_refs)?;

    let mut outcome = AlertParseOutcome::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header row
        outcome.total_lines += 1;
        let parsed = row
            .map_err(|e| format!("unreadable row: {e}"))
            .and_then(|record| parse_row(&record, &columns, ruleset, outcome.alerts.len() as u64));
        match parsed {
            Ok(alert) => outcome.alerts.push(alert),
            Err(reason) => outcome.rejects.push(ParseReject { line, reason }),
        }
    }
    debug_assert!(outcome.conservation_holds());
    Ok(outcome)
}

fn parse_row(
    record: &csv::StringRecord,
    columns: &ColumnIndexes,
    ruleset: &str,
    alert_id: u64,
) -> Result<AlertRecord, String> {
    let field = |i: usize| record.get(i).unwrap_or("").trim();
    let timestamp =
        parse_instant(field(columns.timestamp)).ok_or_else(|| "bad timestamp".to_string())?;
    let sid: u32 = field(columns.sid)
        .parse()
        .map_err(|_| format!("non-numeric signature id {:?}", field(columns.sid)))?;
    if sid == 0 {
        return Err("signature id must be >= 1".into());
    }
    let gid = match columns.gid {
        Some(i) => field(i).parse().map_err(|_| "non-numeric gid")?,
        None => 1,
    };
    let rev = match columns.rev {
        Some(i) => field(i).parse().map_err(|_| "non-numeric rev")?,
        None => 0,
    };
    let tuple = match &columns.endpoints {
        Some(cols) => {
            let src_addr = field(cols.src_addr)
                .parse()
                .map_err(|_| "bad source address")?;
            let dst_addr = field(cols.dst_addr)
                .parse()
                .map_err(|_| "bad destination address")?;
            let src_port: u16 = field(cols.src_port).parse().map_err(|_| "bad source port")?;
            let dst_port: u16 = field(cols.dst_port)
                .parse()
                .map_err(|_| "bad destination port")?;
            let protocol = protocol_number(field(cols.protocol))
                .ok_or_else(|| format!("unknown protocol {:?}", field(cols.protocol)))?;
            Some(FiveTuple::new(src_addr, src_port, dst_addr, dst_port, protocol))
        }
        None => None,
    };
    let priority = match columns.priority {
        Some(i) if !field(i).is_empty() => Some(field(i).parse().map_err(|_| "bad priority")?),
        _ => None,
    };
    Ok(AlertRecord {
        alert_id,
        timestamp,
        signature: SignatureId::new(gid, sid, rev),
        message: field(columns.message).to_string(),
        tuple,
        ruleset: ruleset.to_string(),
        priority,
    })
}
