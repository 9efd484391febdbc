//! Per-flow classification: join ground-truth tags with mapped alerts and
//! sort every flow into the confusion taxonomy.
//!
//! The syntactic/semantic split for misses is driven by analyst-supplied
//! scenarios: an Attack flow with alerts is a true positive only if at
//! least one alert matches the scenario's expected signatures; otherwise
//! the alerts are unrepresentative noise and the flow is a semantic miss.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::alert::{AlertRecord, SignatureId};
use crate::flow::{FlowPredicate, FlowRecord, Tag};

/// Attack scenario category, which drives the default accountability scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackCategory {
    /// Exploits a software vulnerability; the IDS is held accountable.
    Vulnerability,
    /// Not inherently malicious (scans, reverse shells, C2 channels).
    Auxiliary,
    /// Overwhelms by volume rather than exploiting a flaw.
    BruteForce,
}

impl AttackCategory {
    /// Category I attacks are in scope by default; II and III are not.
    pub fn default_in_scope(self) -> bool {
        matches!(self, AttackCategory::Vulnerability)
    }
}

impl fmt::Display for AttackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AttackCategory::Vulnerability => "vulnerability",
            AttackCategory::Auxiliary => "auxiliary",
            AttackCategory::BruteForce => "brute-force",
        };
        f.write_str(s)
    }
}

/// Signature pattern: every present component must match. An all-empty
/// pattern matches any alert.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignaturePattern {
    pub gid: Option<u32>,
    pub sid: Option<u32>,
    pub rev: Option<u32>,
    /// Case-insensitive substring of the alert message.
    pub message_contains: Option<String>,
}

impl SignaturePattern {
    pub fn matches(&self, signature: SignatureId, message: &str) -> bool {
        self.gid.map_or(true, |g| g == signature.gid)
            && self.sid.map_or(true, |s| s == signature.sid)
            && self.rev.map_or(true, |r| r == signature.rev)
            && self.message_contains.as_deref().map_or(true, |needle| {
                message.to_lowercase().contains(&needle.to_lowercase())
            })
    }
}

/// An analyst-defined attack instance: scope predicate, category, and the
/// signatures that would count as actually detecting it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackScenario {
    pub name: String,
    pub category: AttackCategory,
    /// Which Attack flows belong to this scenario.
    pub scope: FlowPredicate,
    /// Empty list: any alert counts as representative.
    pub expected_signatures: Vec<SignaturePattern>,
    pub in_ids_scope: bool,
}

impl AttackScenario {
    pub fn new(name: impl Into<String>, category: AttackCategory) -> Self {
        Self {
            name: name.into(),
            category,
            scope: FlowPredicate::default(),
            expected_signatures: Vec::new(),
            in_ids_scope: category.default_in_scope(),
        }
    }

    fn covers(&self, flow: &FlowRecord) -> bool {
        self.scope.matches(flow)
    }

    fn representative(&self, alert: &AlertRecord) -> bool {
        if self.expected_signatures.is_empty() {
            return true;
        }
        self.expected_signatures
            .iter()
            .any(|p| p.matches(alert.signature, &alert.message))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictClass {
    TruePositive,
    FalsePositive,
    TrueNegative,
    /// Attack flow with no alerts at all.
    FnSyntactic,
    /// Attack flow whose alerts are all unrepresentative of the attack.
    FnSemantic,
    /// Attack flow whose scenario the IDS is not held accountable for.
    OutOfScope,
}

impl fmt::Display for VerdictClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VerdictClass::TruePositive => "tp",
            VerdictClass::FalsePositive => "fp",
            VerdictClass::TrueNegative => "tn",
            VerdictClass::FnSyntactic => "fn-syntactic",
            VerdictClass::FnSemantic => "fn-semantic",
            VerdictClass::OutOfScope => "out-of-scope",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub alert_id: u64,
    pub representative: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowVerdict {
    pub flow_id: crate::flow::FlowId,
    pub class: VerdictClass,
    pub matched_scenario: Option<String>,
    pub evidence: Vec<Evidence>,
    /// The flow was Untagged and classified as presumptive Normal.
    pub untagged: bool,
}

/// Classify one flow given the alerts mapped onto it.
///
/// Scenario matching applies to Attack-tagged flows; the first scenario in
/// configuration order wins. Untagged flows classify as Normal but are
/// marked so summaries can count them separately.
pub fn classify_flow(
    flow: &FlowRecord,
    alerts_on_flow: &[&AlertRecord],
    scenarios: &[AttackScenario],
) -> FlowVerdict {
    let untagged = flow.tag == Tag::Untagged;
    let effective_tag = if untagged { Tag::Normal } else { flow.tag };

    if effective_tag == Tag::Normal {
        let class = if alerts_on_flow.is_empty() {
            VerdictClass::TrueNegative
        } else {
            VerdictClass::FalsePositive
        };
        return FlowVerdict {
            flow_id: flow.flow_id,
            class,
            matched_scenario: None,
            evidence: alerts_on_flow
                .iter()
                .map(|a| Evidence {
                    alert_id: a.alert_id,
                    representative: false,
                })
                .collect(),
            untagged,
        };
    }

    let scenario = scenarios.iter().find(|s| s.covers(flow));
    if let Some(s) = scenario {
        if !s.in_ids_scope {
            return FlowVerdict {
                flow_id: flow.flow_id,
                class: VerdictClass::OutOfScope,
                matched_scenario: Some(s.name.clone()),
                evidence: alerts_on_flow
                    .iter()
                    .map(|a| Evidence {
                        alert_id: a.alert_id,
                        representative: s.representative(a),
                    })
                    .collect(),
                untagged,
            };
        }
    }

    let evidence: Vec<Evidence> = alerts_on_flow
        .iter()
        .map(|a| Evidence {
            alert_id: a.alert_id,
            representative: scenario.map_or(true, |s| s.representative(a)),
        })
        .collect();
    let class = if evidence.is_empty() {
        VerdictClass::FnSyntactic
    } else if evidence.iter().any(|e| e.representative) {
        VerdictClass::TruePositive
    } else {
        VerdictClass::FnSemantic
    };
    FlowVerdict {
        flow_id: flow.flow_id,
        class,
        matched_scenario: scenario.map(|s| s.name.clone()),
        evidence,
        untagged,
    }
}

/// All scenarios whose scope covers the flow, for overlap reporting.
pub fn matching_scenarios<'a>(
    flow: &FlowRecord,
    scenarios: &'a [AttackScenario],
) -> Vec<&'a AttackScenario> {
    if flow.tag != Tag::Attack {
        return Vec::new();
    }
    scenarios.iter().filter(|s| s.covers(flow)).collect()
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub verdicts: Vec<FlowVerdict>,
    /// One warning per flow matched by more than one scenario.
    pub overlap_warnings: Vec<String>,
}

/// Classify every flow against its mapped alerts.
///
/// `alerts_by_flow` comes from the alert mapping (relaxed entries attribute
/// the alert to every listed flow).
pub fn classify_all(
    flows: &[FlowRecord],
    alerts: &[AlertRecord],
    alerts_by_flow: &BTreeMap<crate::flow::FlowId, Vec<u64>>,
    scenarios: &[AttackScenario],
) -> Classification {
    let by_id: BTreeMap<u64, &AlertRecord> = alerts.iter().map(|a| (a.alert_id, a)).collect();
    let mut verdicts = Vec::with_capacity(flows.len());
    let mut overlap_warnings = Vec::new();
    for flow in flows {
        let on_flow: Vec<&AlertRecord> = alerts_by_flow
            .get(&flow.flow_id)
            .into_iter()
            .flatten()
            .filter_map(|id| by_id.get(id).copied())
            .collect();
        let matches = matching_scenarios(flow, scenarios);
        if matches.len() > 1 {
            overlap_warnings.push(format!(
                "flow {} matches {} scenarios ({}); taking {:?}",
                flow.flow_id,
                matches.len(),
                matches
                    .iter()
                    .map(|s| s.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
                matches[0].name,
            ));
        }
        verdicts.push(classify_flow(flow, &on_flow, scenarios));
    }
    Classification {
        verdicts,
        overlap_warnings,
    }
}

/// Confusion counts plus derived rates. `untagged_flows` counts verdicts on
/// Untagged flows (already included in the Normal-side classes).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_syntactic: u64,
    pub fn_semantic: u64,
    pub out_of_scope: u64,
    pub untagged_flows: u64,
    /// TP over in-scope Attack flows; None when the denominator is zero.
    pub detection_rate: Option<f64>,
}

impl ConfusionSummary {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_syntactic + self.fn_semantic + self.out_of_scope
    }
}

pub fn confusion_summary(verdicts: &[FlowVerdict]) -> ConfusionSummary {
    let mut summary = ConfusionSummary::default();
    for verdict in verdicts {
        match verdict.class {
            VerdictClass::TruePositive => summary.tp += 1,
            VerdictClass::FalsePositive => summary.fp += 1,
            VerdictClass::TrueNegative => summary.tn += 1,
            VerdictClass::FnSyntactic => summary.fn_syntactic += 1,
            VerdictClass::FnSemantic => summary.fn_semantic += 1,
            VerdictClass::OutOfScope => summary.out_of_scope += 1,
        }
        if verdict.untagged {
            summary.untagged_flows += 1;
        }
    }
    let denominator = summary.tp + summary.fn_syntactic + summary.fn_semantic;
    summary.detection_rate = if denominator > 0 {
        Some(summary.tp as f64 / denominator as f64)
    } else {
        None
    };
    summary
}

/// Partition flows by IDS accountability: Attack flows whose matched
/// scenario is out of scope go right, everything else (including all
/// Normal flows) goes left.
pub fn scope_filter(
    flows: &[FlowRecord],
    scenarios: &[AttackScenario],
) -> (Vec<FlowRecord>, Vec<FlowRecord>) {
    let mut in_scope = Vec::new();
    let mut out_of_scope = Vec::new();
    for flow in flows {
        let excluded = flow.tag == Tag::Attack
            && scenarios
                .iter()
                .find(|s| s.covers(flow))
                .is_some_and(|s| !s.in_ids_scope);
        if excluded {
            out_of_scope.push(flow.clone());
        } else {
            in_scope.push(flow.clone());
        }
    }
    (in_scope, out_of_scope)
}
