//! The flow database: ground-truth flows, derived flows, deduplication,
//! tag overlays, and predicate queries.

pub mod labels;

use std::collections::BTreeMap;
use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::capture::PacketRecord;
use crate::tuple::FiveTuple;

pub use labels::{ingest_flow_labels, LabelConfigError, LabelFields, LabelFormat, LabelIngest, LabelSchema};

/// Stable flow identifier, unique within a workspace.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct FlowId(pub u64);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ground-truth tag on a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Normal,
    Attack,
    Untagged,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tag::Normal => "normal",
            Tag::Attack => "attack",
            Tag::Untagged => "untagged",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagSource {
    Dataset,
    Overlay,
    Derived,
}

/// One flow: directional key, time interval, tag, counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow_id: FlowId,
    /// Directional, source endpoint first.
    pub tuple: FiveTuple,
    /// Epoch microseconds, inclusive interval.
    pub start_time: u64,
    pub stop_time: u64,
    pub tag: Tag,
    pub tag_source: TagSource,
    pub packet_count: u64,
    pub byte_count: u64,
    /// Set by correlation once any alert maps onto the flow.
    pub alert_flag: bool,
    /// Original tag, retained when an overlay re-tagged the flow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_tag: Option<Tag>,
}

/// Partial match over tuple fields; `None` fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuplePattern {
    pub src_addr: Option<IpAddr>,
    pub dst_addr: Option<IpAddr>,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    pub protocol: Option<u8>,
}

impl TuplePattern {
    pub fn matches(&self, tuple: &FiveTuple) -> bool {
        self.src_addr.map_or(true, |a| a == tuple.src_addr)
            && self.dst_addr.map_or(true, |a| a == tuple.dst_addr)
            && self.src_port.map_or(true, |p| p == tuple.src_port)
            && self.dst_port.map_or(true, |p| p == tuple.dst_port)
            && self.protocol.map_or(true, |p| p == tuple.protocol)
    }

    pub fn is_empty(&self) -> bool {
        *self == TuplePattern::default()
    }
}

/// Inclusive time window in epoch microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: u64,
    pub stop: u64,
}

impl TimeWindow {
    pub fn overlaps(&self, start: u64, stop: u64) -> bool {
        start <= self.stop && self.start <= stop
    }
}

/// Conjunction of flow conditions; empty predicate matches every flow.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowPredicate {
    pub tag: Option<Tag>,
    pub alert_flag: Option<bool>,
    #[serde(default)]
    pub tuple: TuplePattern,
    pub window: Option<TimeWindow>,
}

impl FlowPredicate {
    pub fn matches(&self, flow: &FlowRecord) -> bool {
        self.tag.map_or(true, |t| t == flow.tag)
            && self.alert_flag.map_or(true, |a| a == flow.alert_flag)
            && self.tuple.matches(&flow.tuple)
            && self
                .window
                .map_or(true, |w| w.overlaps(flow.start_time, flow.stop_time))
    }
}

/// Analyst correction of ground truth: re-tag the flows a selector matches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlayEntry {
    #[serde(default)]
    pub selector: TuplePattern,
    pub window: Option<TimeWindow>,
    pub new_tag: Tag,
    pub rationale: String,
}

impl OverlayEntry {
    fn matches(&self, flow: &FlowRecord) -> bool {
        self.selector.matches(&flow.tuple)
            && self
                .window
                .map_or(true, |w| w.overlaps(flow.start_time, flow.stop_time))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OverlayReport {
    /// Flows matched per overlay entry, in entry order.
    pub matched_counts: Vec<u64>,
    /// Indexes of entries that matched nothing.
    pub dead_entries: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub kept: FlowId,
    pub merged: Vec<FlowId>,
    pub tag_conflict: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateReport {
    pub groups: Vec<DuplicateGroup>,
}

/// Partition keyed packets into flows by directional 5-tuple.
///
/// A gap greater than `idle_timeout` (microseconds) between consecutive
/// packets of the same tuple starts a new flow. Derived flows are Untagged.
pub fn derive_flows(packets: &[PacketRecord], idle_timeout: u64) -> Vec<FlowRecord> {
    assert!(idle_timeout > 0, "idle timeout must be positive");
    let mut groups: BTreeMap<FiveTuple, Vec<&PacketRecord>> = BTreeMap::new();
    for packet in packets {
        if let Some(tuple) = packet.tuple {
            groups.entry(tuple).or_default().push(packet);
        }
    }

    struct Segment {
        tuple: FiveTuple,
        start: u64,
        stop: u64,
        packets: u64,
        bytes: u64,
    }
    let mut segments: Vec<Segment> = Vec::new();
    for (tuple, mut members) in groups {
        members.sort_by_key(|p| (p.timestamp, p.packet_id));
        let mut current: Option<Segment> = None;
        for packet in members {
            match current.as_mut() {
                Some(seg) if packet.timestamp - seg.stop <= idle_timeout => {
                    seg.stop = packet.timestamp;
                    seg.packets += 1;
                    seg.bytes += packet.ip_length as u64;
                }
                _ => {
                    if let Some(done) = current.take() {
                        segments.push(done);
                    }
                    current = Some(Segment {
                        tuple,
                        start: packet.timestamp,
                        stop: packet.timestamp,
                        packets: 1,
                        bytes: packet.ip_length as u64,
                    });
                }
            }
        }
        if let Some(done) = current.take() {
            segments.push(done);
        }
    }
    segments.sort_by_key(|s| (s.start, s.tuple));
    segments
        .into_iter()
        .enumerate()
        .map(|(i, seg)| FlowRecord {
            flow_id: FlowId(i as u64),
            tuple: seg.tuple,
            start_time: seg.start,
            stop_time: seg.stop,
            tag: Tag::Untagged,
            tag_source: TagSource::Derived,
            packet_count: seg.packets,
            byte_count: seg.bytes,
            alert_flag: false,
            prior_tag: None,
        })
        .collect()
}

/// Merge flows identical in (tuple, start, stop). Attack wins over Normal
/// (and over Untagged) when merged tags conflict.
pub fn dedupe_flows(flows: Vec<FlowRecord>) -> (Vec<FlowRecord>, DuplicateReport) {
    let mut by_key: BTreeMap<(FiveTuple, u64, u64), Vec<usize>> = BTreeMap::new();
    for (idx, flow) in flows.iter().enumerate() {
        by_key
            .entry((flow.tuple, flow.start_time, flow.stop_time))
            .or_default()
            .push(idx);
    }

    let mut report = DuplicateReport::default();
    let mut keep: Vec<Option<FlowRecord>> = flows.iter().cloned().map(Some).collect();
    for indexes in by_key.values() {
        if indexes.len() < 2 {
            continue;
        }
        let keeper_idx = *indexes
            .iter()
            .min_by_key(|&&i| flows[i].flow_id)
            .expect("non-empty group");
        let tags: Vec<Tag> = indexes.iter().map(|&i| flows[i].tag).collect();
        let tag_conflict = tags.iter().any(|&t| t != tags[0]);
        let winner = merge_tags(&tags);
        let mut kept = flows[keeper_idx].clone();
        if kept.tag != winner {
            // counters stay with the kept record; only the tag is promoted
            let donor = indexes
                .iter()
                .map(|&i| &flows[i])
                .find(|f| f.tag == winner)
                .expect("winner tag came from the group");
            kept.tag = winner;
            kept.tag_source = donor.tag_source;
            kept.prior_tag = donor.prior_tag;
        }
        for &i in indexes {
            keep[i] = None;
        }
        keep[keeper_idx] = Some(kept);
        report.groups.push(DuplicateGroup {
            kept: flows[keeper_idx].flow_id,
            merged: indexes
                .iter()
                .filter(|&&i| i != keeper_idx)
                .map(|&i| flows[i].flow_id)
                .collect(),
            tag_conflict,
        });
    }
    report.groups.sort_by_key(|g| g.kept);
    (keep.into_iter().flatten().collect(), report)
}

fn merge_tags(tags: &[Tag]) -> Tag {
    if tags.contains(&Tag::Attack) {
        Tag::Attack
    } else if tags.contains(&Tag::Normal) {
        Tag::Normal
    } else {
        Tag::Untagged
    }
}

/// Re-tag flows matched by overlay entries, in entry order. The original
/// tag is retained in `prior_tag`; entries matching nothing are reported
/// as dead.
pub fn apply_overlay(
    mut flows: Vec<FlowRecord>,
    overlay: &[OverlayEntry],
) -> (Vec<FlowRecord>, OverlayReport) {
    let mut report = OverlayReport::default();
    for (idx, entry) in overlay.iter().enumerate() {
        let mut matched = 0u64;
        for flow in flows.iter_mut() {
            if entry.matches(flow) {
                matched += 1;
                if flow.prior_tag.is_none() {
                    flow.prior_tag = Some(flow.tag);
                }
                flow.tag = entry.new_tag;
                flow.tag_source = TagSource::Overlay;
            }
        }
        report.matched_counts.push(matched);
        if matched == 0 {
            report.dead_entries.push(idx);
        }
    }
    (flows, report)
}

/// Flows satisfying every conjunct, in (start time, flow id) order.
pub fn query_flows(flows: &[FlowRecord], predicate: &FlowPredicate) -> Vec<FlowRecord> {
    let mut matched: Vec<FlowRecord> = flows
        .iter()
        .filter(|f| predicate.matches(f))
        .cloned()
        .collect();
    matched.sort_by_key(|f| (f.start_time, f.flow_id));
    matched
}
