//! Miss-evidence reports: misleading-signature inventories, payload
//! profiling, and cross-ruleset detection diffs.
//!
//! Everything here is a deterministic read-only pass over sealed stores;
//! identical inputs yield byte-identical reports. The reports supply the
//! evidence an analyst needs and never auto-assert a root cause.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::{AlertRecord, SignatureId};
use crate::capture::PacketRecord;
use crate::correlate::{MappingEntry, MappingMode, MappingStats, SubjectId};
use crate::flow::{FlowId, FlowRecord, Tag};
use crate::verdict::{
    confusion_summary, AttackScenario, ConfusionSummary, FlowVerdict, VerdictClass,
};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RootCauseError {
    #[error("verdict sets disagree on the flow population (flow {0} present on one side only)")]
    VerdictMismatch(FlowId),
}

/// Signature occurrence counts over alerts attributed to a set of flows,
/// sorted by descending count, ties broken by signature triple. An alert
/// attributed to several scoped flows (relaxed mapping) counts once per
/// attribution.
pub fn signature_frequency(
    alerts: &[AlertRecord],
    alert_entries: &[MappingEntry],
    scope: &BTreeSet<FlowId>,
) -> Vec<(SignatureId, String, u64)> {
    let by_id: BTreeMap<u64, &AlertRecord> = alerts.iter().map(|a| (a.alert_id, a)).collect();
    let mut counts: BTreeMap<SignatureId, (String, u64)> = BTreeMap::new();
    for entry in alert_entries {
        let SubjectId::Alert(alert_id) = entry.subject else {
            continue;
        };
        let Some(alert) = by_id.get(&alert_id) else {
            continue;
        };
        let attributions = entry.flow_ids.iter().filter(|id| scope.contains(id)).count() as u64;
        if attributions == 0 {
            continue;
        }
        let slot = counts
            .entry(alert.signature)
            .or_insert_with(|| (alert.message.clone(), 0));
        slot.1 += attributions;
    }
    let mut out: Vec<(SignatureId, String, u64)> = counts
        .into_iter()
        .map(|(sig, (message, count))| (sig, message, count))
        .collect();
    out.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    out
}

/// Payload statistics over a set of flows, from the packet mapping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PayloadProfile {
    /// Scoped flows with at least one mapped packet.
    pub flows_with_packets: u64,
    /// Flows with at least one mapped packet and zero payload bytes total.
    pub zero_payload_flows: u64,
    /// Mean payload bytes over flows with mapped packets; None when no
    /// flow has packets.
    pub mean_payload_bytes: Option<f64>,
    /// Flows whose mapped packets are exclusively zero-payload TCP control
    /// segments.
    pub handshake_only_flows: u64,
    /// Scoped flows with no mapped packets at all.
    pub no_packet_flows: u64,
    /// Packet attributions that arrived via relaxed mapping, over the total
    /// attributions in scope. Relaxed packets count toward every flow they
    /// list, so payload totals may double-count; disclosed, not hidden.
    pub relaxed_attributions: u64,
    pub total_attributions: u64,
}

/// Per-flow payload byte totals for a flow set, counting every attribution.
pub fn per_flow_payload(
    scope: &BTreeSet<FlowId>,
    packet_entries: &[MappingEntry],
    packets: &[PacketRecord],
) -> BTreeMap<FlowId, u64> {
    let by_id: BTreeMap<u64, &PacketRecord> = packets.iter().map(|p| (p.packet_id, p)).collect();
    let mut totals: BTreeMap<FlowId, u64> = BTreeMap::new();
    for entry in packet_entries {
        let SubjectId::Packet(packet_id) = entry.subject else {
            continue;
        };
        let Some(packet) = by_id.get(&packet_id) else {
            continue;
        };
        for flow_id in entry.flow_ids.iter().filter(|id| scope.contains(id)) {
            *totals.entry(*flow_id).or_default() += packet.payload_length as u64;
        }
    }
    totals
}

pub fn payload_profile(
    scope: &BTreeSet<FlowId>,
    packet_entries: &[MappingEntry],
    packets: &[PacketRecord],
) -> PayloadProfile {
    let by_id: BTreeMap<u64, &PacketRecord> = packets.iter().map(|p| (p.packet_id, p)).collect();
    struct FlowStats {
        payload: u64,
        control_only: bool,
    }
    let mut per_flow: BTreeMap<FlowId, FlowStats> = BTreeMap::new();
    let mut relaxed = 0u64;
    let mut total = 0u64;
    for entry in packet_entries {
        let SubjectId::Packet(packet_id) = entry.subject else {
            continue;
        };
        let Some(packet) = by_id.get(&packet_id) else {
            continue;
        };
        for flow_id in entry.flow_ids.iter().filter(|id| scope.contains(id)) {
            total += 1;
            if entry.mode == MappingMode::Relaxed {
                relaxed += 1;
            }
            let stats = per_flow.entry(*flow_id).or_insert(FlowStats {
                payload: 0,
                control_only: true,
            });
            stats.payload += packet.payload_length as u64;
            stats.control_only &= packet.is_control_segment();
        }
    }

    let flows_with_packets = per_flow.len() as u64;
    let zero_payload_flows = per_flow.values().filter(|s| s.payload == 0).count() as u64;
    let handshake_only_flows = per_flow.values().filter(|s| s.control_only).count() as u64;
    let mean_payload_bytes = if flows_with_packets > 0 {
        let sum: u64 = per_flow.values().map(|s| s.payload).sum();
        Some(sum as f64 / flows_with_packets as f64)
    } else {
        None
    };
    PayloadProfile {
        flows_with_packets,
        zero_payload_flows,
        mean_payload_bytes,
        handshake_only_flows,
        no_packet_flows: scope.len() as u64 - flows_with_packets,
        relaxed_attributions: relaxed,
        total_attributions: total,
    }
}

/// Detection outcome diff between two engine runs over the same flow store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionDiff {
    pub ruleset_a: String,
    pub ruleset_b: String,
    pub per_scenario: Vec<ScenarioDiff>,
}

/// The four sets are pairwise disjoint and cover the scenario's in-scope
/// Attack flows. "Detected" means a true-positive verdict, so the semantic
/// layer applies symmetrically to both engines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioDiff {
    /// None groups in-scope Attack flows that matched no scenario.
    pub scenario: Option<String>,
    pub detected_by_a_only: BTreeSet<FlowId>,
    pub detected_by_b_only: BTreeSet<FlowId>,
    pub detected_by_both: BTreeSet<FlowId>,
    pub detected_by_neither: BTreeSet<FlowId>,
}

impl ScenarioDiff {
    fn empty(scenario: Option<String>) -> Self {
        Self {
            scenario,
            detected_by_a_only: BTreeSet::new(),
            detected_by_b_only: BTreeSet::new(),
            detected_by_both: BTreeSet::new(),
            detected_by_neither: BTreeSet::new(),
        }
    }

    pub fn covered_flows(&self) -> BTreeSet<FlowId> {
        let mut all = BTreeSet::new();
        all.extend(&self.detected_by_a_only);
        all.extend(&self.detected_by_b_only);
        all.extend(&self.detected_by_both);
        all.extend(&self.detected_by_neither);
        all
    }
}

fn is_in_scope_attack(class: VerdictClass) -> bool {
    matches!(
        class,
        VerdictClass::TruePositive | VerdictClass::FnSyntactic | VerdictClass::FnSemantic
    )
}

/// Place every in-scope Attack flow into exactly one of the four sets.
///
/// Both verdict sets must come from the same flow store and scenarios;
/// flows present on one side only are an input error.
pub fn compare_rulesets(
    ruleset_a: &str,
    verdicts_a: &[FlowVerdict],
    ruleset_b: &str,
    verdicts_b: &[FlowVerdict],
    scenarios: &[AttackScenario],
) -> Result<DetectionDiff, RootCauseError> {
    let a_by_flow: BTreeMap<FlowId, &FlowVerdict> =
        verdicts_a.iter().map(|v| (v.flow_id, v)).collect();
    let b_by_flow: BTreeMap<FlowId, &FlowVerdict> =
        verdicts_b.iter().map(|v| (v.flow_id, v)).collect();
    for id in a_by_flow.keys() {
        if !b_by_flow.contains_key(id) {
            return Err(RootCauseError::VerdictMismatch(*id));
        }
    }
    for id in b_by_flow.keys() {
        if !a_by_flow.contains_key(id) {
            return Err(RootCauseError::VerdictMismatch(*id));
        }
    }

    let mut sections: BTreeMap<Option<String>, ScenarioDiff> = BTreeMap::new();
    for (flow_id, va) in &a_by_flow {
        let vb = b_by_flow[flow_id];
        // scenario-matching is alert-independent, so both sides agree on it
        let in_scope = is_in_scope_attack(va.class) || is_in_scope_attack(vb.class);
        if !in_scope {
            continue;
        }
        let scenario = va.matched_scenario.clone();
        let section = sections
            .entry(scenario.clone())
            .or_insert_with(|| ScenarioDiff::empty(scenario));
        let detected_a = va.class == VerdictClass::TruePositive;
        let detected_b = vb.class == VerdictClass::TruePositive;
        let set = match (detected_a, detected_b) {
            (true, true) => &mut section.detected_by_both,
            (true, false) => &mut section.detected_by_a_only,
            (false, true) => &mut section.detected_by_b_only,
            (false, false) => &mut section.detected_by_neither,
        };
        set.insert(*flow_id);
    }

    // scenario order follows configuration; the unscoped section comes last
    let mut per_scenario = Vec::new();
    for scenario in scenarios {
        if let Some(section) = sections.remove(&Some(scenario.name.clone())) {
            per_scenario.push(section);
        }
    }
    if let Some(unscoped) = sections.remove(&None) {
        per_scenario.push(unscoped);
    }
    // any scenario names not in the configuration (shouldn't happen) keep
    // deterministic order
    per_scenario.extend(sections.into_values());
    Ok(DetectionDiff {
        ruleset_a: ruleset_a.to_string(),
        ruleset_b: ruleset_b.to_string(),
        per_scenario,
    })
}

/// Per-scenario evidence report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCauseReport {
    pub scenario_name: String,
    pub category: String,
    pub in_ids_scope: bool,
    pub flow_count: u64,
    pub tp: u64,
    pub fn_syntactic: u64,
    pub fn_semantic: u64,
    pub out_of_scope: u64,
    /// Signatures carried by unrepresentative evidence on this scenario's
    /// flows, with occurrence counts, descending.
    pub misleading_signatures: Vec<(SignatureId, String, u64)>,
    pub payload_profile: PayloadProfile,
    pub unattributable_alert_count: u64,
    pub notes: Vec<String>,
}

/// Whole-workspace report for one engine run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_format_version: u32,
    pub ruleset: String,
    pub confusion: ConfusionSummary,
    pub packet_mapping: MappingStats,
    pub alert_mapping: MappingStats,
    pub unattributable_alert_count: u64,
    pub scenarios: Vec<RootCauseReport>,
    pub notes: Vec<String>,
}

/// Everything report generation reads, already sealed.
pub struct ReportInputs<'a> {
    pub ruleset: &'a str,
    pub flows: &'a [FlowRecord],
    pub packets: &'a [PacketRecord],
    pub alerts: &'a [AlertRecord],
    pub packet_entries: &'a [MappingEntry],
    pub alert_entries: &'a [MappingEntry],
    pub verdicts: &'a [FlowVerdict],
    pub scenarios: &'a [AttackScenario],
}

pub fn generate_report(inputs: &ReportInputs<'_>) -> Report {
    let alerts_by_id: BTreeMap<u64, &AlertRecord> =
        inputs.alerts.iter().map(|a| (a.alert_id, a)).collect();
    let verdicts_by_flow: BTreeMap<FlowId, &FlowVerdict> =
        inputs.verdicts.iter().map(|v| (v.flow_id, v)).collect();
    let unattributable = crate::correlate::unattributable_alerts(inputs.alert_entries).len() as u64;

    let mut scenario_reports = Vec::new();
    for scenario in inputs.scenarios {
        let scoped: Vec<&FlowVerdict> = inputs
            .verdicts
            .iter()
            .filter(|v| v.matched_scenario.as_deref() == Some(scenario.name.as_str()))
            .collect();
        let scope_ids: BTreeSet<FlowId> = scoped.iter().map(|v| v.flow_id).collect();

        // tally unrepresentative evidence by signature
        let mut misleading: BTreeMap<SignatureId, (String, u64)> = BTreeMap::new();
        for verdict in &scoped {
            for evidence in &verdict.evidence {
                if evidence.representative {
                    continue;
                }
                if let Some(alert) = alerts_by_id.get(&evidence.alert_id) {
                    let slot = misleading
                        .entry(alert.signature)
                        .or_insert_with(|| (alert.message.clone(), 0));
                    slot.1 += 1;
                }
            }
        }
        let mut misleading: Vec<(SignatureId, String, u64)> = misleading
            .into_iter()
            .map(|(sig, (message, count))| (sig, message, count))
            .collect();
        misleading.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));

        let profile = payload_profile(&scope_ids, inputs.packet_entries, inputs.packets);
        let count = |class: VerdictClass| scoped.iter().filter(|v| v.class == class).count() as u64;

        let mut notes = Vec::new();
        let has_representative = scoped
            .iter()
            .any(|v| v.evidence.iter().any(|e| e.representative));
        if !misleading.is_empty() && !has_representative && misleading.iter().all(|(sig, _, _)| sig.gid != 1)
        {
            notes.push(
                "all alerts on this scenario come from preprocessor/anomaly generators \
                 (gid != 1), none from the ruleset itself"
                    .to_string(),
            );
        }
        if profile.relaxed_attributions > 0 {
            notes.push(format!(
                "{} of {} packet attributions used relaxed mapping; payload totals may \
                 double-count",
                profile.relaxed_attributions, profile.total_attributions
            ));
        }
        if profile.no_packet_flows > 0 {
            notes.push(format!(
                "{} flows have no packets mapped",
                profile.no_packet_flows
            ));
        }
        if profile.zero_payload_flows > 0 && profile.zero_payload_flows == profile.flows_with_packets {
            notes.push(
                "every flow with packets carries zero payload bytes; payload-inspecting rules \
                 cannot see this attack"
                    .to_string(),
            );
        }

        scenario_reports.push(RootCauseReport {
            scenario_name: scenario.name.clone(),
            category: scenario.category.to_string(),
            in_ids_scope: scenario.in_ids_scope,
            flow_count: scoped.len() as u64,
            tp: count(VerdictClass::TruePositive),
            fn_syntactic: count(VerdictClass::FnSyntactic),
            fn_semantic: count(VerdictClass::FnSemantic),
            out_of_scope: count(VerdictClass::OutOfScope),
            misleading_signatures: misleading,
            payload_profile: profile,
            unattributable_alert_count: unattributable,
            notes,
        });
    }

    let mut notes = Vec::new();
    let unscoped_attacks = inputs
        .flows
        .iter()
        .filter(|f| {
            f.tag == Tag::Attack
                && verdicts_by_flow
                    .get(&f.flow_id)
                    .is_some_and(|v| v.matched_scenario.is_none())
        })
        .count();
    if unscoped_attacks > 0 {
        notes.push(format!(
            "{unscoped_attacks} Attack flows match no configured scenario"
        ));
    }

    Report {
        report_format_version: REPORT_FORMAT_VERSION,
        ruleset: inputs.ruleset.to_string(),
        confusion: confusion_summary(inputs.verdicts),
        packet_mapping: MappingStats::tally(inputs.packet_entries),
        alert_mapping: MappingStats::tally(inputs.alert_entries),
        unattributable_alert_count: unattributable,
        scenarios: scenario_reports,
        notes,
    }
}

/// Plain-text rendering of a report.
pub fn render_text(report: &Report) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "detection miss report (format v{})", report.report_format_version);
    let _ = writeln!(out, "ruleset: {}", report.ruleset);
    let _ = writeln!(out);
    let c = &report.confusion;
    let _ = writeln!(out, "confusion summary");
    let _ = writeln!(out, "  tp            {:>8}", c.tp);
    let _ = writeln!(out, "  fp            {:>8}", c.fp);
    let _ = writeln!(out, "  tn            {:>8}", c.tn);
    let _ = writeln!(out, "  fn-syntactic  {:>8}", c.fn_syntactic);
    let _ = writeln!(out, "  fn-semantic   {:>8}", c.fn_semantic);
    let _ = writeln!(out, "  out-of-scope  {:>8}", c.out_of_scope);
    let _ = writeln!(out, "  untagged      {:>8}", c.untagged_flows);
    match c.detection_rate {
        Some(rate) => {
            let _ = writeln!(out, "  detection rate  {rate:.4}");
        }
        None => {
            let _ = writeln!(out, "  detection rate  undefined (no in-scope attack flows)");
        }
    }
    let _ = writeln!(out);
    let pm = &report.packet_mapping;
    let _ = writeln!(
        out,
        "packet mapping: strict {} relaxed {} unmapped-tuple-known {} unmapped-no-tuple {}",
        pm.strict, pm.relaxed, pm.unmapped_tuple_known, pm.unmapped_no_tuple
    );
    let am = &report.alert_mapping;
    let _ = writeln!(
        out,
        "alert mapping:  strict {} relaxed {} unmapped-tuple-known {} unmapped-no-tuple {}",
        am.strict, am.relaxed, am.unmapped_tuple_known, am.unmapped_no_tuple
    );
    let _ = writeln!(out, "unattributable alerts: {}", report.unattributable_alert_count);
    for scenario in &report.scenarios {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "scenario: {} ({}, {})",
            scenario.scenario_name,
            scenario.category,
            if scenario.in_ids_scope { "in scope" } else { "out of scope" }
        );
        let _ = writeln!(
            out,
            "  flows {}  tp {}  fn-syntactic {}  fn-semantic {}  out-of-scope {}",
            scenario.flow_count,
            scenario.tp,
            scenario.fn_syntactic,
            scenario.fn_semantic,
            scenario.out_of_scope
        );
        if !scenario.misleading_signatures.is_empty() {
            let _ = writeln!(out, "  misleading signatures:");
            for (sig, message, count) in &scenario.misleading_signatures {
                let _ = writeln!(out, "    {sig} x{count}  {message}");
            }
        }
        let p = &scenario.payload_profile;
        let mean = p
            .mean_payload_bytes
            .map(|m| format!("{m:.1}"))
            .unwrap_or_else(|| "n/a".to_string());
        let _ = writeln!(
            out,
            "  payload: zero-payload flows {}, handshake-only {}, mean payload bytes {}, \
             no-packet flows {}",
            p.zero_payload_flows, p.handshake_only_flows, mean, p.no_packet_flows
        );
        let _ = writeln!(out, "  unattributable alerts: {}", scenario.unattributable_alert_count);
        for note in &scenario.notes {
            let _ = writeln!(out, "  note: {note}");
        }
    }
    for note in &report.notes {
        let _ = writeln!(out);
        let _ = writeln!(out, "note: {note}");
    }
    out
}

/// Plain-text rendering of a detection diff.
pub fn render_diff_text(diff: &DetectionDiff) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "detection diff: {} vs {}", diff.ruleset_a, diff.ruleset_b);
    for section in &diff.per_scenario {
        let name = section.scenario.as_deref().unwrap_or("(no scenario)");
        let _ = writeln!(out);
        let _ = writeln!(out, "scenario: {name}");
        let fmt_set = |set: &BTreeSet<FlowId>| {
            let ids: Vec<String> = set.iter().map(|id| id.to_string()).collect();
            if ids.is_empty() {
                "-".to_string()
            } else {
                ids.join(", ")
            }
        };
        let _ = writeln!(out, "  {} only: {}", diff.ruleset_a, fmt_set(&section.detected_by_a_only));
        let _ = writeln!(out, "  {} only: {}", diff.ruleset_b, fmt_set(&section.detected_by_b_only));
        let _ = writeln!(out, "  both:        {}", fmt_set(&section.detected_by_both));
        let _ = writeln!(out, "  neither:     {}", fmt_set(&section.detected_by_neither));
    }
    out
}
