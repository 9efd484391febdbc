//! Parser for structured event logs with one self-describing JSON record
//! per line. Records of event type `alert` become [`AlertRecord`]s; other
//! event types (flow, dns, stats, ...) are counted and skipped.

use serde::Deserialize;

use crate::time::parse_event_timestamp;
use crate::tuple::{protocol_number, FiveTuple, PROTO_TCP, PROTO_UDP};

use super::{AlertParseOutcome, AlertRecord, ParseReject, SignatureId};

#[derive(Deserialize)]
struct EveRecord {
    timestamp: Option<String>,
    event_type: Option<String>,
    src_ip: Option<String>,
    src_port: Option<u16>,
    dest_ip: Option<String>,
    dest_port: Option<u16>,
    proto: Option<String>,
    alert: Option<EveAlert>,
}

#[derive(Deserialize)]
struct EveAlert {
    gid: Option<u32>,
    signature_id: Option<u32>,
    rev: Option<u32>,
    signature: Option<String>,
    severity: Option<u32>,
}

enum LineOutcome {
    Alert(Box<AlertRecord>),
    Skipped,
}

/// Parse newline-delimited event records, keeping only alerts.
pub fn parse_eve(input: &str, ruleset: &str) -> AlertParseOutcome {
    let mut outcome = AlertParseOutcome::new();
    for (idx, line) in input.lines().enumerate() {
        outcome.total_lines += 1;
        match parse_record(line, ruleset, outcome.alerts.len() as u64) {
            Ok(LineOutcome::Alert(alert)) => outcome.alerts.push(*alert),
            Ok(LineOutcome::Skipped) => outcome.skipped += 1,
            Err(reason) => outcome.rejects.push(ParseReject {
                line: idx + 1,
                reason,
            }),
        }
    }
    debug_assert!(outcome.conservation_holds());
    outcome
}

fn parse_record(line: &str, ruleset: &str, alert_id: u64) -> Result<LineOutcome, String> {
    if line.trim().is_empty() {
        return Err("blank line".into());
    }
    let record: EveRecord =
        serde_json::from_str(line).map_err(|_| "malformed record".to_string())?;
    let event_type = record.event_type.as_deref().ok_or("missing event_type")?;
    if event_type != "alert" {
        return Ok(LineOutcome::Skipped);
    }
    let alert = record.alert.as_ref().ok_or("alert record missing alert object")?;
    let sid = alert.signature_id.ok_or("missing signature_id")?;
    if sid == 0 {
        return Err("signature id must be >= 1".into());
    }
    let gid = alert.gid.ok_or("missing gid")?;
    let rev = alert.rev.ok_or("missing rev")?;
    let timestamp = record
        .timestamp
        .as_deref()
        .ok_or("missing timestamp")
        .and_then(|ts| parse_event_timestamp(ts).ok_or("bad timestamp"))?;

    let tuple = match (&record.src_ip, &record.dest_ip) {
        (Some(src), Some(dst)) => {
            let src_addr = src.parse().map_err(|_| format!("bad src_ip {src:?}"))?;
            let dst_addr = dst.parse().map_err(|_| format!("bad dest_ip {dst:?}"))?;
            let proto_name = record.proto.as_deref().ok_or("missing proto")?;
            let protocol = protocol_number(proto_name)
                .ok_or_else(|| format!("unknown proto {proto_name:?}"))?;
            let (src_port, dst_port) = if protocol == PROTO_TCP || protocol == PROTO_UDP {
                (
                    record.src_port.ok_or("missing source port")?,
                    record.dest_port.ok_or("missing destination port")?,
                )
            } else {
                (record.src_port.unwrap_or(0), record.dest_port.unwrap_or(0))
            };
            Some(FiveTuple::new(src_addr, src_port, dst_addr, dst_port, protocol))
        }
        // engine-internal alerts carry no endpoints at all
        (None, None) => None,
        _ => return Err("partial endpoints".into()),
    };

    Ok(LineOutcome::Alert(Box::new(AlertRecord {
        alert_id,
        timestamp,
        signature: SignatureId::new(gid, sid, rev),
        message: alert.signature.clone().unwrap_or_default(),
        tuple,
        ruleset: ruleset.to_string(),
        priority: alert.severity,
    })))
}
