//! End-to-end tests of the command-line pipeline and its exit codes.

mod common;

use common::*;

#[test]
fn full_pipeline_runs_and_query_reproduces_expected_counts() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    run_pipeline(dir.path(), &ws);
    let ws_str = ws.to_str().unwrap();

    // 4 attack flows carry alerts
    let output = run_in(dir.path(), &["--workspace", ws_str, "query", "tag=attack", "alert=true"]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.trim_end().ends_with("4 flows"), "stdout: {stdout}");

    // the other 58 do not
    let output = run_in(dir.path(), &["--workspace", ws_str, "query", "tag=attack", "alert=false"]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.trim_end().ends_with("58 flows"), "stdout: {stdout}");

    // empty predicate returns every flow
    let output = run_in(dir.path(), &["--workspace", ws_str, "query"]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.trim_end().ends_with(&format!("{} flows", ATTACK_FLOWS + NORMAL_FLOWS)),
        "stdout: {stdout}"
    );

    // explicit ruleset scoping matches the persisted union for one label
    let output = run_in(
        dir.path(),
        &["--workspace", ws_str, "query", "tag=attack", "alert=true", "ruleset=snort-default"],
    );
    assert_exit(&output, 0);
    assert!(String::from_utf8_lossy(&output.stdout).trim_end().ends_with("4 flows"));

    // report artifacts exist and carry the expected headline numbers
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(ws.join("reports/snort-default.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["report_format_version"], 1);
    assert_eq!(report["confusion"]["fn_semantic"], 4);
    assert_eq!(report["confusion"]["fn_syntactic"], 58);
    assert_eq!(report["confusion"]["tp"], 0);
    assert_eq!(report["confusion"]["tn"], 3);
    // signature triples survive report serialization unchanged
    assert_eq!(
        report["scenarios"][0]["misleading_signatures"][0][0],
        serde_json::json!({"gid": 129, "sid": 12, "rev": 1})
    );
    let text = std::fs::read_to_string(ws.join("reports/snort-default.txt")).unwrap();
    assert!(text.contains("scenario: sql-injection"));
    assert!(text.contains("[129:12:1] x4"));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let files = write_fixture(dir.path());
    let ws_str = ws.to_str().unwrap();
    let cfg = files.config.to_str().unwrap();

    // 2: missing input file
    let output = run_in(dir.path(), &["--workspace", ws_str, "--config", cfg, "init"]);
    assert_exit(&output, 0);
    let output = run_in(dir.path(), &["--workspace", ws_str, "ingest-pcap", "no-such.pcap"]);
    assert_exit(&output, 2);

    // 3: format error (a non-capture file)
    let bogus = dir.path().join("bogus.pcap");
    std::fs::write(&bogus, b"this is not a capture").unwrap();
    let output = run_in(dir.path(), &["--workspace", ws_str, "ingest-pcap", bogus.to_str().unwrap()]);
    assert_exit(&output, 3);

    // 4: stage-order violation names the missing stage
    let output = run_in(dir.path(), &["--workspace", ws_str, "classify"]);
    assert_exit(&output, 4);
    assert!(String::from_utf8_lossy(&output.stderr).contains("map"));

    // 1: usage errors (clap-level and application-level)
    let output = run_in(dir.path(), &["--workspace", ws_str, "compare", "only-one"]);
    assert_exit(&output, 1);
    let output = run_in(dir.path(), &["--workspace", ws_str, "no-such-command"]);
    assert_exit(&output, 1);
}

#[test]
fn incomplete_label_schema_exits_3_without_store_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let files = write_fixture(dir.path());
    let ws_str = ws.to_str().unwrap();

    // drop the stop mapping from the schema
    let broken = fixture_config_toml().replace("stop = \"stopDateTime\"\n", "");
    std::fs::write(&files.config, broken).unwrap();
    let output = run_in(
        dir.path(),
        &["--workspace", ws_str, "--config", files.config.to_str().unwrap(), "init"],
    );
    assert_exit(&output, 0);
    let output = run_in(
        dir.path(),
        &["--workspace", ws_str, "ingest-flows", files.labels.to_str().unwrap()],
    );
    assert_exit(&output, 3);
    assert!(!ws.join("stores/flows.jsonl").exists(), "store must not be mutated");
}

#[test]
fn unparsable_query_predicate_exits_1_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    run_pipeline(dir.path(), &ws);
    let output = run_in(
        dir.path(),
        &["--workspace", ws.to_str().unwrap(), "query", "tag=banana"],
    );
    assert_exit(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("tag=attack|normal|untagged"));
}

#[test]
fn rerunning_a_stage_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    run_pipeline(dir.path(), &ws);
    let ws_str = ws.to_str().unwrap();

    let before = std::fs::read(ws.join("stores/packet_map.jsonl")).unwrap();
    let flows_before = std::fs::read(ws.join("stores/flows.jsonl")).unwrap();
    let output = run_in(dir.path(), &["--workspace", ws_str, "--quiet", "map"]);
    assert_exit(&output, 0);
    assert_eq!(before, std::fs::read(ws.join("stores/packet_map.jsonl")).unwrap());
    assert_eq!(flows_before, std::fs::read(ws.join("stores/flows.jsonl")).unwrap());

    // map invalidated classify; rerunning them restores identical stores
    let output = run_in(dir.path(), &["--workspace", ws_str, "query"]);
    assert_exit(&output, 4);
    let verdicts_before = std::fs::read(ws.join("stores/verdicts/snort-default.jsonl")).unwrap();
    let output = run_in(dir.path(), &["--workspace", ws_str, "--quiet", "classify"]);
    assert_exit(&output, 0);
    assert_eq!(
        verdicts_before,
        std::fs::read(ws.join("stores/verdicts/snort-default.jsonl")).unwrap()
    );
}

#[test]
fn workspace_env_var_is_honored_but_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let files = write_fixture(dir.path());
    let env_ws = dir.path().join("env-ws");

    // env var picks the workspace when no flag is given
    let output = std::process::Command::new(flowverdict_bin())
        .args(["--config", files.config.to_str().unwrap(), "--quiet", "init"])
        .current_dir(dir.path())
        .env("FLOWVERDICT_WORKSPACE", env_ws.to_str().unwrap())
        .output()
        .unwrap();
    assert_exit(&output, 0);
    assert!(env_ws.join("manifest.json").exists());

    // an explicit flag beats the environment
    let flag_ws = dir.path().join("flag-ws");
    let output = std::process::Command::new(flowverdict_bin())
        .args([
            "--workspace",
            flag_ws.to_str().unwrap(),
            "--config",
            files.config.to_str().unwrap(),
            "--quiet",
            "init",
        ])
        .current_dir(dir.path())
        .env("FLOWVERDICT_WORKSPACE", env_ws.to_str().unwrap())
        .output()
        .unwrap();
    assert_exit(&output, 0);
    assert!(flag_ws.join("manifest.json").exists());

    // a workspace named in the config file beats the environment too
    let cfg_ws = dir.path().join("cfg-ws");
    let cfg_with_ws = dir.path().join("with-ws.toml");
    std::fs::write(
        &cfg_with_ws,
        format!("workspace = {:?}\n{}", cfg_ws.to_str().unwrap(), fixture_config_toml()),
    )
    .unwrap();
    let output = std::process::Command::new(flowverdict_bin())
        .args(["--config", cfg_with_ws.to_str().unwrap(), "--quiet", "init"])
        .current_dir(dir.path())
        .env("FLOWVERDICT_WORKSPACE", env_ws.to_str().unwrap())
        .output()
        .unwrap();
    assert_exit(&output, 0);
    assert!(cfg_ws.join("manifest.json").exists());
}

#[test]
fn map_flags_override_config_and_are_recorded_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    run_pipeline(dir.path(), &ws);
    let ws_str = ws.to_str().unwrap();
    let output = run_in(
        dir.path(),
        &[
            "--workspace",
            ws_str,
            "--quiet",
            "map",
            "--tolerance-us",
            "5000000",
            "--packet-direction",
            "bidirectional",
        ],
    );
    assert_exit(&output, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"]["map"]["tolerance_us"], 5000000);
    assert_eq!(manifest["stages"]["map"]["packet_directionality"], "bidirectional");
    assert_eq!(manifest["stages"]["map"]["alert_directionality"], "bidirectional");
}

#[test]
fn ten_alert_file_stores_ten_alerts() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let files = write_fixture(dir.path());
    let ws_str = ws.to_str().unwrap();

    // 2x sensitive-data alerts plus 8x small-segment alerts
    let mut text = String::new();
    for i in 0..2u64 {
        text.push_str(&format!(
            "{}  [**] [139:1:1] (spp_sdf) SDF Combination Alert [**] [Priority: 2]\n",
            fast_timestamp(BASE_US + i * SEC)
        ));
    }
    for i in 0..8u64 {
        text.push_str(&format!(
            "{}  [**] [129:12:1] Consecutive TCP small segments exceeding threshold [**] \
             [Priority: 3] {{TCP}} 192.168.1.105:2110 -> 192.168.5.122:110\n",
            fast_timestamp(BASE_US + (10 + i) * SEC)
        ));
    }
    let alert_path = dir.path().join("mixed.fast");
    std::fs::write(&alert_path, text).unwrap();

    for args in [
        vec!["--workspace", ws_str, "--config", files.config.to_str().unwrap(), "--quiet", "init"],
        vec![
            "--workspace",
            ws_str,
            "ingest-alerts",
            alert_path.to_str().unwrap(),
            "--format",
            "snort-fast",
            "--ruleset",
            "snort-default",
        ],
    ] {
        let output = run_in(dir.path(), &args);
        assert_exit(&output, 0);
        if args.contains(&"ingest-alerts") {
            let stdout = String::from_utf8_lossy(&output.stdout);
            assert!(stdout.contains("10 parsed"), "stdout: {stdout}");
        }
    }
    let store = std::fs::read_to_string(ws.join("stores/alerts/snort-default.jsonl")).unwrap();
    assert_eq!(store.lines().count(), 11); // header + 10 alerts
}

#[test]
fn derive_flows_from_packets_when_labels_are_absent() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let files = write_fixture(dir.path());
    let ws_str = ws.to_str().unwrap();

    for args in [
        vec!["--workspace", ws_str, "--config", files.config.to_str().unwrap(), "--quiet", "init"],
        vec!["--workspace", ws_str, "--quiet", "ingest-pcap", files.pcap.to_str().unwrap()],
    ] {
        assert_exit(&run_in(dir.path(), &args), 0);
    }
    // --derive needs no label file and yields untagged flows
    let output = run_in(dir.path(), &["--workspace", ws_str, "ingest-flows", "--derive"]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains(&format!("flows: {} stored", ATTACK_FLOWS + NORMAL_FLOWS)),
        "stdout: {stdout}"
    );
    let flows = std::fs::read_to_string(ws.join("stores/flows.jsonl")).unwrap();
    assert!(flows.lines().skip(1).all(|l| l.contains("\"tag\":\"untagged\"")));

    // both a path and --derive is a usage error
    let output = run_in(
        dir.path(),
        &["--workspace", ws_str, "ingest-flows", files.labels.to_str().unwrap(), "--derive"],
    );
    assert_exit(&output, 1);
}

#[test]
fn compare_places_smb_flow_in_b_only() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let ws_str = ws.to_str().unwrap();

    // one SMB attack flow; engine A sees nothing, engine B finds it
    let config = r#"base_year = 2010

[labels]
format = "csv"

[labels.fields]
src_addr = "source"
dst_addr = "destination"
src_port = "sourcePort"
dst_port = "destinationPort"
protocol = "protocolName"
start = "startDateTime"
stop = "stopDateTime"
tag = "Tag"

[[scenario]]
name = "smb-overflow"
category = "vulnerability"

[scenario.scope]
dst_addr = "192.168.2.113"
dst_port = 445

[[scenario.expected]]
message_contains = "MS08-067"
"#;
    let cfg_path = dir.path().join("smb-config.toml");
    std::fs::write(&cfg_path, config).unwrap();

    let labels = "source,sourcePort,destination,destinationPort,protocolName,startDateTime,stopDateTime,Tag\n\
                  192.168.2.112,1549,192.168.2.113,445,tcp_ip,1276473400,1276473500,Attack\n";
    let labels_path = dir.path().join("labels.csv");
    std::fs::write(&labels_path, labels).unwrap();

    // a minimal capture so the map stage has packets
    let packets = {
        let frame = flowverdict::capture::synth::tcp_frame(
            "192.168.2.112".parse().unwrap(),
            1549,
            "192.168.2.113".parse().unwrap(),
            445,
            flowverdict::capture::TCP_SYN,
            &[],
        );
        let mut p = flowverdict::capture::decode_packet(&frame, flowverdict::capture::LINKTYPE_ETHERNET, 1_276_473_410_000_000);
        p.packet_id = 0;
        vec![p]
    };
    let meta = flowverdict::capture::CaptureMetadata {
        magic_variant: flowverdict::capture::MagicVariant::Microsecond,
        byte_order: flowverdict::capture::ByteOrder::Little,
        link_type: flowverdict::capture::LINKTYPE_ETHERNET,
        snap_len: 65535,
        packet_count: 1,
    };
    let pcap_path = dir.path().join("smb.pcap");
    std::fs::write(&pcap_path, flowverdict::capture::write_capture(&meta, &packets).unwrap()).unwrap();

    // engine A: empty alert file; engine B: eve alert naming the vulnerability
    let empty_path = dir.path().join("snort.fast");
    std::fs::write(&empty_path, "").unwrap();
    let eve_path = dir.path().join("suricata.eve.json");
    std::fs::write(&eve_path, r#"{"timestamp":"2010-06-13T23:57:20.000000+0000","event_type":"alert","src_ip":"192.168.2.112","src_port":1549,"dest_ip":"192.168.2.113","dest_port":445,"proto":"TCP","alert":{"gid":1,"signature_id":2008705,"rev":5,"signature":"ET NETBIOS Microsoft Windows NETAPI Stack Overflow Inbound - MS08-067 (15)","severity":1}}
"#).unwrap();

    for args in [
        vec!["--workspace", ws_str, "--config", cfg_path.to_str().unwrap(), "--quiet", "init"],
        vec!["--workspace", ws_str, "--quiet", "ingest-pcap", pcap_path.to_str().unwrap()],
        vec!["--workspace", ws_str, "--quiet", "ingest-flows", labels_path.to_str().unwrap()],
        vec!["--workspace", ws_str, "--quiet", "ingest-alerts", empty_path.to_str().unwrap(), "--format", "snort-fast", "--ruleset", "snort-default"],
        vec!["--workspace", ws_str, "--quiet", "ingest-alerts", eve_path.to_str().unwrap(), "--format", "eve", "--ruleset", "suricata-default"],
        vec!["--workspace", ws_str, "--quiet", "map"],
        vec!["--workspace", ws_str, "--quiet", "classify"],
    ] {
        let output = run_in(dir.path(), &args);
        assert_exit(&output, 0);
    }

    let output = run_in(
        dir.path(),
        &["--workspace", ws_str, "compare", "snort-default", "suricata-default"],
    );
    assert_exit(&output, 0);

    let diff: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(ws.join("reports/compare-snort-default-vs-suricata-default.json"))
            .unwrap(),
    )
    .unwrap();
    let section = &diff["per_scenario"][0];
    assert_eq!(section["scenario"], "smb-overflow");
    assert_eq!(section["detected_by_b_only"], serde_json::json!([0]));
    assert_eq!(section["detected_by_a_only"], serde_json::json!([]));
    assert_eq!(section["detected_by_neither"], serde_json::json!([]));
}
