//! Mapping packets and alerts onto flows.
//!
//! A subject maps strictly when its 5-tuple matches a flow's key and its
//! timestamp lies inside the flow's interval (stop side extended by the
//! configured tolerance). When the tuple matches some flow but no interval
//! contains the timestamp, the subject falls back to a relaxed mapping and
//! is attributed to every flow with that tuple, recording how far outside
//! the nearest interval it sat.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::alert::AlertRecord;
use crate::capture::PacketRecord;
use crate::flow::{FlowId, FlowRecord};
use crate::tuple::FiveTuple;

/// Key policy: directional keeps source-first keys distinct from their
/// reverses; bidirectional canonicalizes both flow and probe keys so either
/// direction of a conversation hits the same bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directionality {
    Directional,
    Bidirectional,
}

impl Directionality {
    pub fn key(self, tuple: FiveTuple) -> FiveTuple {
        match self {
            Directionality::Directional => tuple,
            Directionality::Bidirectional => tuple.canonical(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Interval {
    start: u64,
    stop: u64,
    flow_id: FlowId,
}

/// Tuple-keyed interval lists, sorted by start time.
#[derive(Debug, Clone)]
pub struct FlowIndex {
    directionality: Directionality,
    intervals: BTreeMap<FiveTuple, Vec<Interval>>,
}

/// What is being mapped; the id spaces for packets and alerts are disjoint.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum SubjectId {
    Packet(u64),
    Alert(u64),
}

/// A mapping probe: subject identity, optional key, timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subject {
    pub id: SubjectId,
    pub tuple: Option<FiveTuple>,
    pub timestamp: u64,
}

impl Subject {
    pub fn from_packet(packet: &PacketRecord) -> Self {
        Subject {
            id: SubjectId::Packet(packet.packet_id),
            tuple: packet.tuple,
            timestamp: packet.timestamp,
        }
    }

    pub fn from_alert(alert: &AlertRecord) -> Self {
        Subject {
            id: SubjectId::Alert(alert.alert_id),
            tuple: alert.tuple,
            timestamp: alert.timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    Strict,
    Relaxed,
    /// The tuple is known but no flow carries it.
    UnmappedTupleKnown,
    /// The subject has no tuple at all (undecoded packet, endpoint-free alert).
    UnmappedNoTuple,
}

/// One subject's mapping result. `flow_ids` is sorted; `slack` is the
/// distance in microseconds to the nearest matching interval (0 for strict).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub subject: SubjectId,
    pub flow_ids: Vec<FlowId>,
    pub mode: MappingMode,
    pub slack: u64,
}

/// Per-mode entry counts for summaries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingStats {
    pub strict: u64,
    pub relaxed: u64,
    pub unmapped_tuple_known: u64,
    pub unmapped_no_tuple: u64,
}

impl MappingStats {
    pub fn tally(entries: &[MappingEntry]) -> Self {
        let mut stats = MappingStats::default();
        for entry in entries {
            match entry.mode {
                MappingMode::Strict => stats.strict += 1,
                MappingMode::Relaxed => stats.relaxed += 1,
                MappingMode::UnmappedTupleKnown => stats.unmapped_tuple_known += 1,
                MappingMode::UnmappedNoTuple => stats.unmapped_no_tuple += 1,
            }
        }
        stats
    }
}

/// Index deduplicated flows under the chosen key policy.
pub fn build_flow_index(flows: &[FlowRecord], directionality: Directionality) -> FlowIndex {
    let mut intervals: BTreeMap<FiveTuple, Vec<Interval>> = BTreeMap::new();
    for flow in flows {
        intervals
            .entry(directionality.key(flow.tuple))
            .or_default()
            .push(Interval {
                start: flow.start_time,
                stop: flow.stop_time,
                flow_id: flow.flow_id,
            });
    }
    for list in intervals.values_mut() {
        list.sort_by_key(|iv| (iv.start, iv.stop, iv.flow_id));
    }
    FlowIndex {
        directionality,
        intervals,
    }
}

impl FlowIndex {
    pub fn directionality(&self) -> Directionality {
        self.directionality
    }

    pub fn flow_count(&self) -> usize {
        self.intervals.values().map(|v| v.len()).sum()
    }
}

/// Map one subject against the index.
pub fn map_subject(subject: &Subject, index: &FlowIndex, tolerance: u64) -> MappingEntry {
    let Some(tuple) = subject.tuple else {
        return MappingEntry {
            subject: subject.id,
            flow_ids: Vec::new(),
            mode: MappingMode::UnmappedNoTuple,
            slack: 0,
        };
    };
    let key = index.directionality.key(tuple);
    let Some(candidates) = index.intervals.get(&key) else {
        return MappingEntry {
            subject: subject.id,
            flow_ids: Vec::new(),
            mode: MappingMode::UnmappedTupleKnown,
            slack: 0,
        };
    };
    entry_for_candidates(subject.id, subject.timestamp, candidates, tolerance)
}

fn entry_for_candidates(
    id: SubjectId,
    timestamp: u64,
    candidates: &[Interval],
    tolerance: u64,
) -> MappingEntry {
    let mut strict: Vec<FlowId> = candidates
        .iter()
        .filter(|iv| iv.start <= timestamp && timestamp <= iv.stop.saturating_add(tolerance))
        .map(|iv| iv.flow_id)
        .collect();
    if !strict.is_empty() {
        strict.sort_unstable();
        return MappingEntry {
            subject: id,
            flow_ids: strict,
            mode: MappingMode::Strict,
            slack: 0,
        };
    }
    // relaxed fallback: every flow with this tuple, regardless of timestamp
    let mut relaxed: Vec<FlowId> = candidates.iter().map(|iv| iv.flow_id).collect();
    relaxed.sort_unstable();
    let slack = candidates
        .iter()
        .map(|iv| interval_distance(timestamp, iv.start, iv.stop))
        .min()
        .unwrap_or(0);
    MappingEntry {
        subject: id,
        flow_ids: relaxed,
        mode: MappingMode::Relaxed,
        slack,
    }
}

fn interval_distance(ts: u64, start: u64, stop: u64) -> u64 {
    if ts < start {
        start - ts
    } else if ts > stop {
        ts - stop
    } else {
        0
    }
}

/// Map every packet; unkeyed packets yield unmapped-no-tuple entries.
pub fn map_all_packets(
    packets: &[PacketRecord],
    index: &FlowIndex,
    tolerance: u64,
) -> Vec<MappingEntry> {
    packets
        .iter()
        .map(|p| map_subject(&Subject::from_packet(p), index, tolerance))
        .collect()
}

/// Map every alert; alerts without tuples land in the unattributable pool
/// (see [`unattributable_alerts`]) and are never assigned to flows.
pub fn map_all_alerts(
    alerts: &[AlertRecord],
    index: &FlowIndex,
    tolerance: u64,
) -> Vec<MappingEntry> {
    alerts
        .iter()
        .map(|a| map_subject(&Subject::from_alert(a), index, tolerance))
        .collect()
}

/// Write-back step: set the alert flag on every flow that received at
/// least one alert (strict or relaxed).
pub fn set_alert_flags(flows: &mut [FlowRecord], alert_entries: &[MappingEntry]) {
    let flagged: std::collections::BTreeSet<FlowId> = alert_entries
        .iter()
        .flat_map(|e| e.flow_ids.iter().copied())
        .collect();
    for flow in flows.iter_mut() {
        flow.alert_flag = flagged.contains(&flow.flow_id);
    }
}

/// Alert ids that could not be attributed to any flow for lack of a tuple.
pub fn unattributable_alerts(alert_entries: &[MappingEntry]) -> Vec<u64> {
    alert_entries
        .iter()
        .filter_map(|e| match (e.mode, e.subject) {
            (MappingMode::UnmappedNoTuple, SubjectId::Alert(id)) => Some(id),
            _ => None,
        })
        .collect()
}

/// Flow-keyed view of mapped subjects (packet provenance / alerts-on-flow).
/// Relaxed entries contribute to every flow they list.
pub fn subjects_by_flow(entries: &[MappingEntry]) -> BTreeMap<FlowId, Vec<SubjectId>> {
    let mut map: BTreeMap<FlowId, Vec<SubjectId>> = BTreeMap::new();
    for entry in entries {
        for flow_id in &entry.flow_ids {
            map.entry(*flow_id).or_default().push(entry.subject);
        }
    }
    for list in map.values_mut() {
        list.sort_unstable();
    }
    map
}

/// Alert-ids-per-flow view of an alert mapping, for classification.
pub fn alert_ids_by_flow(entries: &[MappingEntry]) -> BTreeMap<FlowId, Vec<u64>> {
    let mut map: BTreeMap<FlowId, Vec<u64>> = BTreeMap::new();
    for entry in entries {
        let SubjectId::Alert(alert_id) = entry.subject else {
            continue;
        };
        for flow_id in &entry.flow_ids {
            map.entry(*flow_id).or_default().push(alert_id);
        }
    }
    for list in map.values_mut() {
        list.sort_unstable();
    }
    map
}

/// Brute-force reference mapping: O(subjects x flows) exhaustive scan with
/// the identical contract as the indexed path. Exists to check the index.
pub fn oracle_map(
    subjects: &[Subject],
    flows: &[FlowRecord],
    directionality: Directionality,
    tolerance: u64,
) -> Vec<MappingEntry> {
    subjects
        .iter()
        .map(|subject| {
            let Some(tuple) = subject.tuple else {
                return MappingEntry {
                    subject: subject.id,
                    flow_ids: Vec::new(),
                    mode: MappingMode::UnmappedNoTuple,
                    slack: 0,
                };
            };
            let key = directionality.key(tuple);
            let candidates: Vec<Interval> = flows
                .iter()
                .filter(|f| directionality.key(f.tuple) == key)
                .map(|f| Interval {
                    start: f.start_time,
                    stop: f.stop_time,
                    flow_id: f.flow_id,
                })
                .collect();
            if candidates.is_empty() {
                return MappingEntry {
                    subject: subject.id,
                    flow_ids: Vec::new(),
                    mode: MappingMode::UnmappedTupleKnown,
                    slack: 0,
                };
            }
            entry_for_candidates(subject.id, subject.timestamp, &candidates, tolerance)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{Tag, TagSource};
    use proptest::prelude::*;

    fn tuple(src_host: u8, sport: u16, dst_host: u8, dport: u16) -> FiveTuple {
        FiveTuple::new(
            format!("10.0.0.{src_host}").parse().unwrap(),
            sport,
            format!("10.0.1.{dst_host}").parse().unwrap(),
            dport,
            6,
        )
    }

    fn flow(id: u64, tuple: FiveTuple, start: u64, stop: u64) -> FlowRecord {
        FlowRecord {
            flow_id: FlowId(id),
            tuple,
            start_time: start,
            stop_time: stop,
            tag: Tag::Normal,
            tag_source: TagSource::Dataset,
            packet_count: 0,
            byte_count: 0,
            alert_flag: false,
            prior_tag: None,
        }
    }

    fn probe(id: u64, tuple: FiveTuple, ts: u64) -> Subject {
        Subject {
            id: SubjectId::Packet(id),
            tuple: Some(tuple),
            timestamp: ts,
        }
    }

    #[test]
    fn interior_point_maps_strictly() {
        let t = tuple(1, 1000, 2, 80);
        let flows = vec![flow(0, t, 5, 20)];
        let index = build_flow_index(&flows, Directionality::Directional);
        let entry = map_subject(&probe(0, t, 10), &index, 0);
        assert_eq!(entry.mode, MappingMode::Strict);
        assert_eq!(entry.flow_ids, vec![FlowId(0)]);
        assert_eq!(entry.slack, 0);
    }

    #[test]
    fn gap_between_intervals_relaxes_to_both_flows() {
        let t = tuple(1, 1000, 2, 80);
        let flows = vec![flow(0, t, 5, 20), flow(1, t, 40, 60)];
        let index = build_flow_index(&flows, Directionality::Directional);
        let entry = map_subject(&probe(0, t, 30), &index, 0);
        assert_eq!(entry.mode, MappingMode::Relaxed);
        assert_eq!(entry.flow_ids, vec![FlowId(0), FlowId(1)]);
        assert_eq!(entry.slack, 10); // distance to both [5,20] and [40,60]
    }

    #[test]
    fn unknown_tuple_is_unmapped_tuple_known() {
        let flows = vec![flow(0, tuple(1, 1000, 2, 80), 5, 20)];
        let index = build_flow_index(&flows, Directionality::Directional);
        let entry = map_subject(&probe(0, tuple(9, 9, 9, 9), 10), &index, 0);
        assert_eq!(entry.mode, MappingMode::UnmappedTupleKnown);
        assert!(entry.flow_ids.is_empty());
    }

    #[test]
    fn tolerance_extends_the_stop_side_only() {
        let t = tuple(1, 1000, 2, 80);
        let flows = vec![flow(0, t, 100, 200)];
        let index = build_flow_index(&flows, Directionality::Directional);
        // 2s after stop with 5s tolerance: strict
        let after = map_subject(&probe(0, t, 200 + 2_000_000), &index, 5_000_000);
        assert_eq!(after.mode, MappingMode::Strict);
        // before start is never strict, regardless of tolerance
        let before = map_subject(&probe(1, t, 99), &index, 5_000_000);
        assert_eq!(before.mode, MappingMode::Relaxed);
        assert_eq!(before.slack, 1);
    }

    #[test]
    fn bidirectional_policy_collapses_both_directions() {
        let fwd = tuple(1, 1000, 2, 80);
        let flows = vec![flow(0, fwd, 5, 20), flow(1, fwd.reversed(), 30, 40)];
        let index = build_flow_index(&flows, Directionality::Bidirectional);
        assert_eq!(index.flow_count(), 2);
        // a reply-direction probe maps onto the forward flow
        let entry = map_subject(&probe(0, fwd.reversed(), 10), &index, 0);
        assert_eq!(entry.mode, MappingMode::Strict);
        assert_eq!(entry.flow_ids, vec![FlowId(0)]);
        // directional index keeps them apart
        let directional = build_flow_index(&flows, Directionality::Directional);
        let entry = map_subject(&probe(0, fwd.reversed(), 10), &directional, 0);
        assert_eq!(entry.mode, MappingMode::Relaxed);
        assert_eq!(entry.flow_ids, vec![FlowId(1)]);
    }

    #[test]
    fn alert_flags_set_on_every_flow_receiving_alerts() {
        let t = tuple(1, 1000, 2, 80);
        let mut flows = vec![flow(0, t, 5, 20), flow(1, t, 40, 60), flow(2, tuple(3, 1, 4, 2), 0, 9)];
        let entries = vec![MappingEntry {
            subject: SubjectId::Alert(0),
            flow_ids: vec![FlowId(0), FlowId(1)],
            mode: MappingMode::Relaxed,
            slack: 3,
        }];
        set_alert_flags(&mut flows, &entries);
        assert!(flows[0].alert_flag && flows[1].alert_flag);
        assert!(!flows[2].alert_flag);
    }

    #[test]
    fn endpoint_free_alerts_pool_as_unattributable() {
        let flows = vec![flow(0, tuple(1, 1000, 2, 80), 5, 20)];
        let index = build_flow_index(&flows, Directionality::Bidirectional);
        let alerts = vec![crate::alert::AlertRecord {
            alert_id: 7,
            timestamp: 10,
            signature: crate::alert::SignatureId::new(139, 1, 1),
            message: "(spp_sdf) SDF Combination Alert".into(),
            tuple: None,
            ruleset: "snort-default".into(),
            priority: Some(2),
        }];
        let entries = map_all_alerts(&alerts, &index, 0);
        assert_eq!(entries[0].mode, MappingMode::UnmappedNoTuple);
        assert_eq!(unattributable_alerts(&entries), vec![7]);
    }

    #[test]
    fn every_subject_yields_exactly_one_entry() {
        let t = tuple(1, 1000, 2, 80);
        let flows = vec![flow(0, t, 5, 20)];
        let index = build_flow_index(&flows, Directionality::Directional);
        let subjects: Vec<Subject> = (0..50)
            .map(|i| {
                let tup = if i % 3 == 0 { None } else { Some(t) };
                Subject {
                    id: SubjectId::Packet(i),
                    tuple: tup,
                    timestamp: i,
                }
            })
            .collect();
        let entries: Vec<_> = subjects
            .iter()
            .map(|s| map_subject(s, &index, 0))
            .collect();
        assert_eq!(entries.len(), subjects.len());
        for (s, e) in subjects.iter().zip(&entries) {
            assert_eq!(s.id, e.subject);
        }
    }

    proptest! {
        // the indexed path and the exhaustive scan agree everywhere
        #[test]
        fn indexed_equals_oracle(
            flow_rows in prop::collection::vec((0u8..4, 0u8..3, 1u16..4, 0u64..300, 0u64..60), 0..30),
            subject_rows in prop::collection::vec((0u8..5, 0u8..4, 1u16..5, 0u64..400, any::<bool>()), 0..60),
            bidirectional in any::<bool>(),
            tolerance in 0u64..20,
        ) {
            let directionality = if bidirectional {
                Directionality::Bidirectional
            } else {
                Directionality::Directional
            };
            let flows: Vec<FlowRecord> = flow_rows
                .iter()
                .enumerate()
                .map(|(i, &(s, d, port, start, len))| {
                    flow(i as u64, tuple(s, 1000 + s as u16, d, port), start, start + len)
                })
                .collect();
            let subjects: Vec<Subject> = subject_rows
                .iter()
                .enumerate()
                .map(|(i, &(s, d, port, ts, keyed))| Subject {
                    id: SubjectId::Packet(i as u64),
                    tuple: keyed.then(|| tuple(s, 1000 + s as u16, d, port)),
                    timestamp: ts,
                })
                .collect();
            let index = build_flow_index(&flows, directionality);
            let fast: Vec<MappingEntry> = subjects
                .iter()
                .map(|s| map_subject(s, &index, tolerance))
                .collect();
            let slow = oracle_map(&subjects, &flows, directionality, tolerance);
            prop_assert_eq!(fast, slow);
        }

        // whenever a strict match exists no relaxed entry is emitted
        #[test]
        fn strict_precedence(start in 0u64..100, len in 0u64..50, ts in 0u64..200) {
            let t = tuple(1, 1000, 2, 80);
            let flows = vec![flow(0, t, start, start + len)];
            let index = build_flow_index(&flows, Directionality::Directional);
            let entry = map_subject(&probe(0, t, ts), &index, 0);
            let inside = start <= ts && ts <= start + len;
            if inside {
                prop_assert_eq!(entry.mode, MappingMode::Strict);
                prop_assert_eq!(entry.slack, 0);
            } else {
                prop_assert_eq!(entry.mode, MappingMode::Relaxed);
                prop_assert!(entry.slack > 0);
            }
        }
    }
}
