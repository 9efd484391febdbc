//! Ground-truth label ingestion.
//!
//! Two source shapes are supported: delimiter-separated text with a header
//! row, and attribute-based markup where each flow is one element carrying
//! its fields as attributes. A schema maps source field names onto the flow
//! record and translates the source tag vocabulary to Normal/Attack.
//! Unparseable entries are collected as rejects, never silently dropped.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::ParseReject;
use crate::time::parse_instant;
use crate::tuple::{protocol_number, FiveTuple};

use super::{FlowId, FlowRecord, Tag, TagSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFormat {
    Csv,
    Markup,
}

/// Source field names for the five tuple fields, interval, and tag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabelFields {
    pub src_addr: Option<String>,
    pub dst_addr: Option<String>,
    pub src_port: Option<String>,
    pub dst_port: Option<String>,
    pub protocol: Option<String>,
    pub start: Option<String>,
    pub stop: Option<String>,
    pub tag: Option<String>,
}

/// Source tag spellings for each ground-truth value (case-insensitive).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagVocabulary {
    pub attack: Vec<String>,
    pub normal: Vec<String>,
}

impl Default for TagVocabulary {
    fn default() -> Self {
        Self {
            attack: vec!["attack".into()],
            normal: vec!["normal".into()],
        }
    }
}

impl TagVocabulary {
    fn tag_for(&self, value: &str) -> Option<Tag> {
        let v = value.trim();
        if self.attack.iter().any(|a| a.eq_ignore_ascii_case(v)) {
            Some(Tag::Attack)
        } else if self.normal.iter().any(|n| n.eq_ignore_ascii_case(v)) {
            Some(Tag::Normal)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSchema {
    pub format: LabelFormat,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Element name holding one flow per element (markup format only).
    pub entry_element: Option<String>,
    pub fields: LabelFields,
    #[serde(default)]
    pub tag_values: TagVocabulary,
}

fn default_delimiter() -> char {
    ','
}

impl Default for LabelSchema {
    fn default() -> Self {
        Self {
            format: LabelFormat::Csv,
            delimiter: ',',
            entry_element: None,
            fields: LabelFields {
                src_addr: Some("src_addr".into()),
                dst_addr: Some("dst_addr".into()),
                src_port: Some("src_port".into()),
                dst_port: Some("dst_port".into()),
                protocol: Some("protocol".into()),
                start: Some("start".into()),
                stop: Some("stop".into()),
                tag: Some("tag".into()),
            },
            tag_values: TagVocabulary::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LabelConfigError {
    #[error("label schema is missing the required {0:?} field mapping")]
    MissingMapping(&'static str),
    #[error("label schema maps field {0:?} which is not in the file header")]
    MissingColumn(String),
    #[error("markup label format requires entry_element in the schema")]
    MissingEntryElement,
    #[error("failed to read label input: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct LabelIngest {
    pub flows: Vec<FlowRecord>,
    pub rejects: Vec<ParseReject>,
}

/// Parse a label file into flow records (tag source: dataset).
pub fn ingest_flow_labels(
    input: &str,
    schema: &LabelSchema,
) -> Result<LabelIngest, LabelConfigError> {
    let fields = ResolvedFields::from_schema(&schema.fields)?;
    match schema.format {
        LabelFormat::Csv => ingest_csv(input, schema, &fields),
        LabelFormat::Markup => ingest_markup(input, schema, &fields),
    }
}

struct ResolvedFields {
    src_addr: String,
    dst_addr: String,
    src_port: String,
    dst_port: String,
    protocol: String,
    start: String,
    stop: String,
    tag: String,
}

impl ResolvedFields {
    fn from_schema(fields: &LabelFields) -> Result<Self, LabelConfigError> {
        let need = |f: &Option<String>, name: &'static str| {
            f.clone().ok_or(LabelConfigError::MissingMapping(name))
        };
        Ok(Self {
            src_addr: need(&fields.src_addr, "src_addr")?,
            dst_addr: need(&fields.dst_addr, "dst_addr")?,
            src_port: need(&fields.src_port, "src_port")?,
            dst_port: need(&fields.dst_port, "dst_port")?,
            protocol: need(&fields.protocol, "protocol")?,
            start: need(&fields.start, "start")?,
            stop: need(&fields.stop, "stop")?,
            tag: need(&fields.tag, "tag")?,
        })
    }

    fn names(&self) -> [(&'static str, &str); 8] {
        [
            ("src_addr", &self.src_addr),
            ("dst_addr", &self.dst_addr),
            ("src_port", &self.src_port),
            ("dst_port", &self.dst_port),
            ("protocol", &self.protocol),
            ("start", &self.start),
            ("stop", &self.stop),
            ("tag", &self.tag),
        ]
    }
}

fn build_flow(
    get: impl Fn(&str) -> Option<String>,
    fields: &ResolvedFields,
    vocab: &TagVocabulary,
    flow_id: u64,
) -> Result<FlowRecord, String> {
    let value = |source_name: &str, role: &str| {
        get(source_name).ok_or_else(|| format!("missing field {role} ({source_name:?})"))
    };
    let src_addr = value(&fields.src_addr, "src_addr")?;
    let dst_addr = value(&fields.dst_addr, "dst_addr")?;
    let src_addr = src_addr
        .trim()
        .parse()
        .map_err(|_| format!("bad source address {src_addr:?}"))?;
    let dst_addr = dst_addr
        .trim()
        .parse()
        .map_err(|_| format!("bad destination address {dst_addr:?}"))?;
    let src_port = parse_port(&value(&fields.src_port, "src_port")?)?;
    let dst_port = parse_port(&value(&fields.dst_port, "dst_port")?)?;
    let protocol_raw = value(&fields.protocol, "protocol")?;
    let protocol = protocol_number(&protocol_raw)
        .ok_or_else(|| format!("unknown protocol {protocol_raw:?}"))?;
    let start_raw = value(&fields.start, "start")?;
    let start = parse_instant(&start_raw).ok_or_else(|| format!("bad timestamp {start_raw:?}"))?;
    let stop_raw = value(&fields.stop, "stop")?;
    let stop = parse_instant(&stop_raw).ok_or_else(|| format!("bad timestamp {stop_raw:?}"))?;
    if stop < start {
        return Err("inverted interval".into());
    }
    let tag_raw = value(&fields.tag, "tag")?;
    let tag = vocab
        .tag_for(&tag_raw)
        .ok_or_else(|| format!("unknown tag value {:?}", tag_raw.trim()))?;
    Ok(FlowRecord {
        flow_id: FlowId(flow_id),
        tuple: FiveTuple::new(src_addr, src_port, dst_addr, dst_port, protocol),
        start_time: start,
        stop_time: stop,
        tag,
        tag_source: TagSource::Dataset,
        packet_count: 0,
        byte_count: 0,
        alert_flag: false,
        prior_tag: None,
    })
}

fn parse_port(raw: &str) -> Result<u16, String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(0); // port-less protocols often leave the column blank
    }
    trimmed
        .parse()
        .map_err(|_| format!("bad port {trimmed:?}"))
}

fn ingest_csv(
    input: &str,
    schema: &LabelSchema,
    fields: &ResolvedFields,
) -> Result<LabelIngest, LabelConfigError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .from_reader(input.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut columns: HashMap<&str, usize> = HashMap::new();
    for (role, source_name) in fields.names() {
        let idx = headers
            .iter()
            .position(|h| h == source_name)
            .ok_or_else(|| LabelConfigError::MissingColumn(source_name.to_string()))?;
        columns.insert(role, idx);
    }
    // role -> column index resolved; rebuild as source-name lookups
    let by_source: HashMap<String, usize> = fields
        .names()
        .iter()
        .map(|(role, source)| (source.to_string(), columns[*role]))
        .collect();

    let mut out = LabelIngest {
        flows: Vec::new(),
        rejects: Vec::new(),
    };
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let parsed = row.map_err(|e| format!("unreadable row: {e}")).and_then(|record| {
            build_flow(
                |source| {
                    by_source
                        .get(source)
                        .and_then(|&i| record.get(i))
                        .map(|v| v.to_string())
                },
                fields,
                &schema.tag_values,
                out.flows.len() as u64,
            )
        });
        match parsed {
            Ok(flow) => out.flows.push(flow),
            Err(reason) => out.rejects.push(ParseReject { line, reason }),
        }
    }
    Ok(out)
}

fn ingest_markup(
    input: &str,
    schema: &LabelSchema,
    fields: &ResolvedFields,
) -> Result<LabelIngest, LabelConfigError> {
    let element = schema
        .entry_element
        .as_deref()
        .ok_or(LabelConfigError::MissingEntryElement)?;
    let mut out = LabelIngest {
        flows: Vec::new(),
        rejects: Vec::new(),
    };
    for entry in scan_elements(input, element) {
        match entry.attributes {
            Ok(attrs) => {
                let next_id = out.flows.len() as u64;
                match build_flow(
                    |source| attrs.get(source).cloned(),
                    fields,
                    &schema.tag_values,
                    next_id,
                ) {
                    Ok(flow) => out.flows.push(flow),
                    Err(reason) => out.rejects.push(ParseReject {
                        line: entry.line,
                        reason,
                    }),
                }
            }
            Err(reason) => out.rejects.push(ParseReject {
                line: entry.line,
                reason,
            }),
        }
    }
    Ok(out)
}

struct MarkupEntry {
    line: usize,
    attributes: Result<HashMap<String, String>, String>,
}

/// Minimal attribute-markup scanner: finds `<element attr="value" .../>`
/// occurrences and extracts their attributes. Comments, declarations, and
/// closing tags are ignored; only elements named `element` become entries.
fn scan_elements(input: &str, element: &str) -> Vec<MarkupEntry> {
    let bytes = input.as_bytes();
    let mut entries = Vec::new();
    let mut pos = 0usize;
    let mut line = 1usize;
    while pos < bytes.len() {
        if bytes[pos] == b'\n' {
            line += 1;
            pos += 1;
            continue;
        }
        if bytes[pos] != b'<' {
            pos += 1;
            continue;
        }
        let rest = &input[pos..];
        if rest.starts_with("<!--") {
            match rest.find("-->") {
                Some(end) => {
                    line += rest[..end].matches('\n').count();
                    pos += end + 3;
                }
                None => break,
            }
            continue;
        }
        if rest.starts_with("<?") || rest.starts_with("<!") || rest.starts_with("</") {
            match rest.find('>') {
                Some(end) => {
                    line += rest[..end].matches('\n').count();
                    pos += end + 1;
                }
                None => break,
            }
            continue;
        }
        let Some(end) = rest.find('>') else { break };
        let tag_body = &rest[1..end];
        let entry_line = line;
        line += rest[..end].matches('\n').count();
        pos += end + 1;

        let name_end = tag_body
            .find(|c: char| c.is_whitespace() || c == '/')
            .unwrap_or(tag_body.len());
        if &tag_body[..name_end] != element {
            continue;
        }
        entries.push(MarkupEntry {
            line: entry_line,
            attributes: parse_attributes(tag_body[name_end..].trim_end_matches('/')),
        });
    }
    entries
}

fn parse_attributes(body: &str) -> Result<HashMap<String, String>, String> {
    let mut attrs = HashMap::new();
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| format!("malformed attribute near {:?}", truncate(rest)))?;
        let name = rest[..eq].trim();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!("malformed attribute name near {:?}", truncate(rest)));
        }
        let after = rest[eq + 1..].trim_start();
        let quote = after
            .chars()
            .next()
            .filter(|&c| c == '"' || c == '\'')
            .ok_or_else(|| format!("unquoted attribute value for {name:?}"))?;
        let value_end = after[1..]
            .find(quote)
            .ok_or_else(|| format!("unterminated attribute value for {name:?}"))?;
        let value = decode_entities(&after[1..1 + value_end]);
        attrs.insert(name.to_string(), value);
        rest = after[1 + value_end + 1..].trim_start();
    }
    Ok(attrs)
}

fn decode_entities(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(20) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
