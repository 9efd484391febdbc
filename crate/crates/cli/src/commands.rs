//! Subcommand implementations over the workspace.

use std::path::{Path, PathBuf};

use flowverdict::alert::{parse_eve, parse_generic_alert_csv, parse_snort_fast, AlertParseOutcome, ParseReject};
use flowverdict::capture::parse_capture;
use flowverdict::config::{Config, ConfigError};
use flowverdict::correlate::{
    alert_ids_by_flow, build_flow_index, map_all_alerts, map_all_packets, set_alert_flags,
    MappingStats,
};
use flowverdict::flow::{
    apply_overlay, dedupe_flows, derive_flows, ingest_flow_labels, query_flows, FlowRecord,
    TagSource,
};
use flowverdict::rootcause::{
    compare_rulesets, generate_report, render_diff_text, render_text, ReportInputs,
};
use flowverdict::time::render_micros;
use flowverdict::tuple::protocol_name;
use flowverdict::verdict::{classify_all, confusion_summary, FlowVerdict};
use flowverdict::workspace::{
    sha256_digest, stores, CaptureFileInfo, IngestStage, LockGuard, MapStageInfo, StageInfo,
    Workspace,
};

use crate::query::parse_query;
use crate::{resolve_workspace_root, AlertFormat, Cli, CliError, Command};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Init => cmd_init(cli),
        Command::IngestPcap { paths } => cmd_ingest_pcap(cli, paths),
        Command::IngestFlows { path, derive } => cmd_ingest_flows(cli, path.as_deref(), *derive),
        Command::IngestAlerts {
            path,
            format,
            ruleset,
        } => cmd_ingest_alerts(cli, path, *format, ruleset),
        Command::Map {
            tolerance_us,
            packet_direction,
            alert_direction,
        } => cmd_map(cli, *tolerance_us, *packet_direction, *alert_direction),
        Command::Classify => cmd_classify(cli),
        Command::Report => cmd_report(cli),
        Command::Compare {
            ruleset_a,
            ruleset_b,
        } => cmd_compare(cli, ruleset_a, ruleset_b),
        Command::Query { terms } => cmd_query(cli, terms),
    }
}

fn say(cli: &Cli, message: String) {
    if !cli.quiet {
        println!("{message}");
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
        _ => CliError::Other(format!("failed to read {}: {e}", path.display())),
    })
}

fn read_input_text(path: &Path) -> Result<String, CliError> {
    Ok(String::from_utf8_lossy(&read_input(path)?).into_owned())
}

fn load_config(path: &Path) -> Result<Config, CliError> {
    Config::load(path).map_err(|e| match e {
        ConfigError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
            CliError::MissingInput(path)
        }
        other => CliError::Format(other.to_string()),
    })
}

struct WriteCtx {
    ws: Workspace,
    _lock: LockGuard,
}

/// Open the workspace for a writing command: take the lock, then apply a
/// --config replacement if one was passed.
fn open_for_write(cli: &Cli) -> Result<WriteCtx, CliError> {
    let flag_config = cli.config.as_deref().map(load_config).transpose()?;
    let root = resolve_workspace_root(cli, flag_config.as_ref());
    let mut ws = Workspace::open(&root)?;
    let lock = ws.lock()?;
    if let Some(path) = &cli.config {
        let raw = read_input_text(path)?;
        if ws.replace_config(&raw).map_err(CliError::from)? {
            eprintln!("note: config snapshot updated; downstream stages invalidated");
        }
    }
    Ok(WriteCtx { ws, _lock: lock })
}

fn open_read_only(cli: &Cli) -> Result<Workspace, CliError> {
    let flag_config = cli.config.as_deref().map(load_config).transpose()?;
    let root = resolve_workspace_root(cli, flag_config.as_ref());
    Ok(Workspace::open(&root)?)
}

fn report_rejects(context: &str, rejects: &[ParseReject]) {
    const SHOWN: usize = 10;
    for reject in rejects.iter().take(SHOWN) {
        eprintln!("{context}: line {}: {}", reject.line, reject.reason);
    }
    if rejects.len() > SHOWN {
        eprintln!("{context}: ... and {} more rejects", rejects.len() - SHOWN);
    }
}

fn cmd_init(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => load_config(path)?,
        None => Config::default(),
    };
    let root = resolve_workspace_root(cli, Some(&config));
    Workspace::init(&root, config)?;
    say(cli, format!("initialized workspace at {}", root.display()));
    Ok(())
}

fn cmd_ingest_pcap(cli: &Cli, paths: &[PathBuf]) -> Result<(), CliError> {
    let mut ctx = open_for_write(cli)?;
    let mut packets = Vec::new();
    let mut captures = Vec::new();
    let mut digests = Vec::new();
    for path in paths {
        let bytes = read_input(path)?;
        let digest = sha256_digest(&bytes);
        let parsed = parse_capture(&bytes).map_err(|e| CliError::Format(e.to_string()))?;
        captures.push(CaptureFileInfo {
            file_name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            digest: digest.clone(),
            metadata: parsed.metadata,
        });
        digests.push(digest);
        let base = packets.len() as u64;
        packets.extend(parsed.packets.into_iter().map(|mut p| {
            p.packet_id += base;
            p
        }));
    }
    let keyed = packets.iter().filter(|p| p.is_keyed()).count();
    let time_range = packets
        .iter()
        .map(|p| p.timestamp)
        .fold(None, |acc: Option<(u64, u64)>, ts| match acc {
            None => Some((ts, ts)),
            Some((lo, hi)) => Some((lo.min(ts), hi.max(ts))),
        });
    ctx.ws.write_store(stores::CAPTURES, &captures)?;
    ctx.ws.write_store(stores::PACKETS, &packets)?;
    ctx.ws.complete_ingest(
        IngestStage::Packets,
        StageInfo {
            input_digests: digests,
            count: packets.len() as u64,
            time_range,
        },
    )?;
    say(
        cli,
        format!(
            "packets: {} total ({} keyed, {} unkeyed) from {} capture file(s)",
            packets.len(),
            keyed,
            packets.len() - keyed,
            paths.len()
        ),
    );
    Ok(())
}

fn cmd_ingest_flows(cli: &Cli, path: Option<&Path>, derive: bool) -> Result<(), CliError> {
    let mut ctx = open_for_write(cli)?;
    let (flows, rejects, input_digests) = if derive {
        if path.is_some() {
            return Err(CliError::Usage(
                "give a label file or --derive, not both".into(),
            ));
        }
        let packets_info = ctx.ws.require_packets()?.clone();
        let idle_timeout = ctx.ws.config.flows.idle_timeout_us;
        if idle_timeout == 0 {
            return Err(CliError::Format(
                "flows.idle_timeout_us must be positive".into(),
            ));
        }
        let packets: Vec<flowverdict::capture::PacketRecord> =
            ctx.ws.read_store(stores::PACKETS)?;
        let flows = derive_flows(&packets, idle_timeout);
        (flows, Vec::new(), packets_info.input_digests)
    } else {
        let path = path.ok_or_else(|| {
            CliError::Usage("ingest-flows needs a label file path (or --derive)".into())
        })?;
        let schema = ctx.ws.config.labels.clone().ok_or_else(|| {
            CliError::Format("config has no [labels] schema section".into())
        })?;
        let text = read_input_text(path)?;
        let digest = sha256_digest(text.as_bytes());
        let ingest =
            ingest_flow_labels(&text, &schema).map_err(|e| CliError::Format(e.to_string()))?;
        (ingest.flows, ingest.rejects, vec![digest])
    };

    let (flows, duplicate_report) = dedupe_flows(flows);
    let overlays = ctx
        .ws
        .config
        .overlays()
        .map_err(|e| CliError::Format(e.to_string()))?;
    let (flows, overlay_report) = apply_overlay(flows, &overlays);

    ctx.ws.write_store(stores::FLOWS, &flows)?;
    ctx.ws.write_store(stores::FLOW_REJECTS, &rejects)?;
    ctx.ws.write_json("stores/duplicate_report.json", &duplicate_report)?;
    ctx.ws.write_json("stores/overlay_report.json", &overlay_report)?;
    ctx.ws.complete_ingest(
        IngestStage::Flows,
        StageInfo {
            input_digests,
            count: flows.len() as u64,
            time_range: None,
        },
    )?;

    report_rejects("flow labels", &rejects);
    for dead in &overlay_report.dead_entries {
        eprintln!(
            "warning: overlay entry {dead} matched no flows ({})",
            overlays
                .get(*dead)
                .map(|o| o.rationale.as_str())
                .unwrap_or("?")
        );
    }
    say(
        cli,
        format!(
            "flows: {} stored ({} duplicate groups merged, {} rejected)",
            flows.len(),
            duplicate_report.groups.len(),
            rejects.len()
        ),
    );
    Ok(())
}

fn cmd_ingest_alerts(
    cli: &Cli,
    path: &Path,
    format: AlertFormat,
    ruleset: &str,
) -> Result<(), CliError> {
    let mut ctx = open_for_write(cli)?;
    let text = read_input_text(path)?;
    let digest = sha256_digest(text.as_bytes());
    let outcome: AlertParseOutcome = match format {
        AlertFormat::SnortFast => {
            let reference = ctx
                .ws
                .manifest
                .stages
                .packets
                .as_ref()
                .and_then(|s| s.time_range);
            let options = ctx.ws.config.fast_options(reference);
            parse_snort_fast(&text, ruleset, &options)
        }
        AlertFormat::Eve => parse_eve(&text, ruleset),
        AlertFormat::Csv => {
            let schema = ctx.ws.config.alert_csv.clone().unwrap_or_default();
            parse_generic_alert_csv(&text, ruleset, &schema)
                .map_err(|e| CliError::Format(e.to_string()))?
        }
    };

    ctx.ws.write_store(&stores::alerts(ruleset), &outcome.alerts)?;
    ctx.ws
        .write_store(&stores::alert_rejects(ruleset), &outcome.rejects)?;
    ctx.ws.complete_ingest(
        IngestStage::Alerts(ruleset),
        StageInfo {
            input_digests: vec![digest],
            count: outcome.alerts.len() as u64,
            time_range: None,
        },
    )?;

    report_rejects(&format!("alerts[{ruleset}]"), &outcome.rejects);
    if let Some(warning) = outcome.zero_parse_warning() {
        eprintln!("WARNING: alerts[{ruleset}]: {warning}");
    }
    say(
        cli,
        format!(
            "alerts[{ruleset}]: {} parsed, {} rejected, {} skipped",
            outcome.alerts.len(),
            outcome.rejects.len(),
            outcome.skipped
        ),
    );
    Ok(())
}

fn cmd_map(
    cli: &Cli,
    tolerance_us: Option<u64>,
    packet_direction: Option<crate::DirectionArg>,
    alert_direction: Option<crate::DirectionArg>,
) -> Result<(), CliError> {
    let mut ctx = open_for_write(cli)?;
    ctx.ws.require_packets()?;
    ctx.ws.require_flows()?;
    ctx.ws.require_alerts()?;

    let settings = MapStageInfo {
        tolerance_us: tolerance_us.unwrap_or(ctx.ws.config.map.tolerance_us),
        packet_directionality: packet_direction
            .map(Into::into)
            .unwrap_or(ctx.ws.config.map.packet_directionality),
        alert_directionality: alert_direction
            .map(Into::into)
            .unwrap_or(ctx.ws.config.map.alert_directionality),
    };

    let packets: Vec<flowverdict::capture::PacketRecord> = ctx.ws.read_store(stores::PACKETS)?;
    let mut flows: Vec<FlowRecord> = ctx.ws.read_store(stores::FLOWS)?;

    let packet_index = build_flow_index(&flows, settings.packet_directionality);
    let packet_entries = map_all_packets(&packets, &packet_index, settings.tolerance_us);
    ctx.ws.write_store(stores::PACKET_MAP, &packet_entries)?;
    let pstats = MappingStats::tally(&packet_entries);
    say(
        cli,
        format!(
            "packet mapping: {} strict, {} relaxed, {} unmapped (tuple known), {} unmapped (no tuple)",
            pstats.strict, pstats.relaxed, pstats.unmapped_tuple_known, pstats.unmapped_no_tuple
        ),
    );

    let alert_index = build_flow_index(&flows, settings.alert_directionality);
    let mut all_entries = Vec::new();
    for label in ctx.ws.alert_labels() {
        let alerts: Vec<flowverdict::alert::AlertRecord> =
            ctx.ws.read_store(&stores::alerts(&label))?;
        let entries = map_all_alerts(&alerts, &alert_index, settings.tolerance_us);
        let stats = MappingStats::tally(&entries);
        say(
            cli,
            format!(
                "alert mapping[{label}]: {} strict, {} relaxed, {} unmapped (tuple known), {} unattributable",
                stats.strict, stats.relaxed, stats.unmapped_tuple_known, stats.unmapped_no_tuple
            ),
        );
        ctx.ws.write_store(&stores::alert_map(&label), &entries)?;
        all_entries.extend(entries);
    }
    // alert flags persist as the union over ruleset labels; per-label flags
    // are recomputed from the per-label mapping (see query ruleset=LABEL)
    set_alert_flags(&mut flows, &all_entries);
    ctx.ws.write_store(stores::FLOWS, &flows)?;
    ctx.ws.complete_map(settings)?;
    Ok(())
}

fn cmd_classify(cli: &Cli) -> Result<(), CliError> {
    let mut ctx = open_for_write(cli)?;
    ctx.ws.require_map()?;
    let flows: Vec<FlowRecord> = ctx.ws.read_store(stores::FLOWS)?;
    let scenarios = ctx
        .ws
        .config
        .scenarios()
        .map_err(|e| CliError::Format(e.to_string()))?;

    let mut total = 0u64;
    for (index, label) in ctx.ws.alert_labels().into_iter().enumerate() {
        let alerts: Vec<flowverdict::alert::AlertRecord> =
            ctx.ws.read_store(&stores::alerts(&label))?;
        let entries = ctx.ws.read_store(&stores::alert_map(&label))?;
        let alerts_by_flow = alert_ids_by_flow(&entries);
        let classification = classify_all(&flows, &alerts, &alerts_by_flow, &scenarios);
        if index == 0 {
            // overlap warnings depend on flows and scenarios only
            for warning in &classification.overlap_warnings {
                eprintln!("warning: {warning}");
            }
        }
        let summary = confusion_summary(&classification.verdicts);
        say(
            cli,
            format!(
                "verdicts[{label}]: tp={} fp={} tn={} fn-syntactic={} fn-semantic={} \
                 out-of-scope={} untagged={}",
                summary.tp,
                summary.fp,
                summary.tn,
                summary.fn_syntactic,
                summary.fn_semantic,
                summary.out_of_scope,
                summary.untagged_flows
            ),
        );
        total += classification.verdicts.len() as u64;
        ctx.ws
            .write_store(&stores::verdicts(&label), &classification.verdicts)?;
    }
    ctx.ws.complete_classify(total)?;
    Ok(())
}

fn cmd_report(cli: &Cli) -> Result<(), CliError> {
    let mut ctx = open_for_write(cli)?;
    ctx.ws.require_classify()?;
    let flows: Vec<FlowRecord> = ctx.ws.read_store(stores::FLOWS)?;
    let packets: Vec<flowverdict::capture::PacketRecord> = ctx.ws.read_store(stores::PACKETS)?;
    let packet_entries = ctx.ws.read_store(stores::PACKET_MAP)?;
    let scenarios = ctx
        .ws
        .config
        .scenarios()
        .map_err(|e| CliError::Format(e.to_string()))?;

    for label in ctx.ws.alert_labels() {
        let alerts: Vec<flowverdict::alert::AlertRecord> =
            ctx.ws.read_store(&stores::alerts(&label))?;
        let alert_entries = ctx.ws.read_store(&stores::alert_map(&label))?;
        let verdicts: Vec<FlowVerdict> = ctx.ws.read_store(&stores::verdicts(&label))?;
        let report = generate_report(&ReportInputs {
            ruleset: &label,
            flows: &flows,
            packets: &packets,
            alerts: &alerts,
            packet_entries: &packet_entries,
            alert_entries: &alert_entries,
            verdicts: &verdicts,
            scenarios: &scenarios,
        });
        ctx.ws.write_json(&format!("reports/{label}.json"), &report)?;
        ctx.ws
            .write_text(&format!("reports/{label}.txt"), &render_text(&report))?;
        say(
            cli,
            format!(
                "report[{label}]: {}",
                ctx.ws.reports_dir().join(format!("{label}.json")).display()
            ),
        );
    }
    ctx.ws.complete_report()?;
    Ok(())
}

fn require_label(ws: &Workspace, label: &str) -> Result<(), CliError> {
    let known = ws.alert_labels();
    if known.iter().any(|l| l == label) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "ruleset {label:?} has not been ingested (known: {})",
            if known.is_empty() {
                "none".to_string()
            } else {
                known.join(", ")
            }
        )))
    }
}

fn cmd_compare(cli: &Cli, ruleset_a: &str, ruleset_b: &str) -> Result<(), CliError> {
    let ctx = open_for_write(cli)?;
    ctx.ws.require_classify()?;
    if ruleset_a == ruleset_b {
        return Err(CliError::Usage(
            "compare needs two distinct ruleset labels".into(),
        ));
    }
    require_label(&ctx.ws, ruleset_a)?;
    require_label(&ctx.ws, ruleset_b)?;
    let verdicts_a: Vec<FlowVerdict> = ctx.ws.read_store(&stores::verdicts(ruleset_a))?;
    let verdicts_b: Vec<FlowVerdict> = ctx.ws.read_store(&stores::verdicts(ruleset_b))?;
    let scenarios = ctx
        .ws
        .config
        .scenarios()
        .map_err(|e| CliError::Format(e.to_string()))?;
    let diff = compare_rulesets(ruleset_a, &verdicts_a, ruleset_b, &verdicts_b, &scenarios)
        .map_err(|e| CliError::Format(e.to_string()))?;
    ctx.ws.write_json(
        &format!("reports/compare-{ruleset_a}-vs-{ruleset_b}.json"),
        &diff,
    )?;
    let text = render_diff_text(&diff);
    ctx.ws
        .write_text(&format!("reports/compare-{ruleset_a}-vs-{ruleset_b}.txt"), &text)?;
    if !cli.quiet {
        print!("{text}");
    }
    Ok(())
}

fn cmd_query(cli: &Cli, terms: &[String]) -> Result<(), CliError> {
    let ws = open_read_only(cli)?;
    ws.require_classify()?;
    let query = parse_query(terms)?;
    let mut flows: Vec<FlowRecord> = ws.read_store(stores::FLOWS)?;
    if let Some(label) = &query.ruleset {
        require_label(&ws, label)?;
        let entries = ws.read_store(&stores::alert_map(label))?;
        set_alert_flags(&mut flows, &entries);
    }
    let matched = query_flows(&flows, &query.predicate);
    for flow in &matched {
        println!("{}", render_flow(flow));
    }
    println!("{} flows", matched.len());
    Ok(())
}

fn render_flow(flow: &FlowRecord) -> String {
    let source = match flow.tag_source {
        TagSource::Dataset => "dataset",
        TagSource::Overlay => "overlay",
        TagSource::Derived => "derived",
    };
    format!(
        "flow {}  {} {}:{} -> {}:{}  [{} .. {}]  tag={}({}) alerts={} packets={} bytes={}",
        flow.flow_id,
        protocol_name(flow.tuple.protocol),
        flow.tuple.src_addr,
        flow.tuple.src_port,
        flow.tuple.dst_addr,
        flow.tuple.dst_port,
        render_micros(flow.start_time),
        render_micros(flow.stop_time),
        flow.tag,
        source,
        if flow.alert_flag { "yes" } else { "no" },
        flow.packet_count,
        flow.byte_count,
    )
}
