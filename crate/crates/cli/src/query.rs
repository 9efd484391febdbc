//! Query predicate expression: space-separated `key=value` conjuncts.
//!
//! Keys: tag, alert, src, dst, sport, dport, proto, after, before, ruleset.
//! An empty expression matches every flow.

use flowverdict::flow::{FlowPredicate, Tag, TimeWindow};
use flowverdict::time::parse_instant;
use flowverdict::tuple::protocol_number;

use crate::CliError;

pub const GRAMMAR_HINT: &str = "expected key=value conjuncts; keys: tag=attack|normal|untagged, \
     alert=true|false, src=ADDR, dst=ADDR, sport=PORT, dport=PORT, proto=NAME|NUM, \
     after=TIME, before=TIME, ruleset=LABEL";

/// A parsed query: the flow predicate plus which ruleset's alert flags to
/// use (None means the flags persisted in the flow store).
#[derive(Debug, Default, PartialEq)]
pub struct Query {
    pub predicate: FlowPredicate,
    pub ruleset: Option<String>,
}

pub fn parse_query(terms: &[String]) -> Result<Query, CliError> {
    let mut query = Query::default();
    let mut after: Option<u64> = None;
    let mut before: Option<u64> = None;
    for term in terms {
        let (key, value) = term.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("bad conjunct {term:?}: {GRAMMAR_HINT}"))
        })?;
        let bad = |what: &str| CliError::Usage(format!("bad {what} in {term:?}: {GRAMMAR_HINT}"));
        match key {
            "tag" => {
                query.predicate.tag = Some(match value.to_ascii_lowercase().as_str() {
                    "attack" => Tag::Attack,
                    "normal" => Tag::Normal,
                    "untagged" => Tag::Untagged,
                    _ => return Err(bad("tag")),
                });
            }
            "alert" => {
                query.predicate.alert_flag = Some(match value.to_ascii_lowercase().as_str() {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    _ => return Err(bad("alert flag")),
                });
            }
            "src" => {
                query.predicate.tuple.src_addr = Some(value.parse().map_err(|_| bad("address"))?);
            }
            "dst" => {
                query.predicate.tuple.dst_addr = Some(value.parse().map_err(|_| bad("address"))?);
            }
            "sport" => {
                query.predicate.tuple.src_port = Some(value.parse().map_err(|_| bad("port"))?);
            }
            "dport" => {
                query.predicate.tuple.dst_port = Some(value.parse().map_err(|_| bad("port"))?);
            }
            "proto" => {
                query.predicate.tuple.protocol =
                    Some(protocol_number(value).ok_or_else(|| bad("protocol"))?);
            }
            "after" => after = Some(parse_instant(value).ok_or_else(|| bad("time"))?),
            "before" => before = Some(parse_instant(value).ok_or_else(|| bad("time"))?),
            "ruleset" => query.ruleset = Some(value.to_string()),
            _ => return Err(CliError::Usage(format!("unknown key {key:?}: {GRAMMAR_HINT}"))),
        }
    }
    if after.is_some() || before.is_some() {
        query.predicate.window = Some(TimeWindow {
            start: after.unwrap_or(0),
            stop: before.unwrap_or(u64::MAX),
        });
    }
    Ok(query)
}
