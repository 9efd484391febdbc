//! Shared fixture generation for the integration and acceptance suites.
//!
//! The canonical fixture models a web-injection attack wave: 62 Attack
//! flows against one victim with engine alerts on exactly 4 of them (all
//! carrying an anomaly-preprocessor signature the scenario does not accept
//! as representative), plus a few Normal flows.

#![allow(dead_code)]

use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowverdict::capture::{
    synth, write_capture, ByteOrder, CaptureMetadata, MagicVariant, PacketRecord,
    LINKTYPE_ETHERNET, TCP_ACK, TCP_FIN, TCP_PSH, TCP_SYN,
};

/// 2010-06-13T12:00:00Z, epoch microseconds.
pub const BASE_US: u64 = 1_276_430_400_000_000;
pub const SEC: u64 = 1_000_000;

pub const VICTIM: &str = "192.168.5.123";
pub const ATTACKER: &str = "192.168.2.112";
pub const NORMAL_SERVER: &str = "192.168.5.124";

pub const ATTACK_FLOWS: usize = 62;
pub const ALERTED_FLOWS: usize = 4;
pub const NORMAL_FLOWS: usize = 3;

pub fn flowverdict_bin() -> &'static str {
    env!("CARGO_BIN_EXE_flowverdict")
}

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(flowverdict_bin())
        .args(args)
        .current_dir(dir)
        .env_remove("FLOWVERDICT_WORKSPACE")
        .output()
        .expect("binary runs")
}

pub fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "expected exit {code}; stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

/// Attack flow i: ATTACKER:(4000+i) -> VICTIM:80, [BASE + 10i s, +5 s].
pub fn attack_flow_window(i: usize) -> (u64, u64) {
    let start = BASE_US + (i as u64) * 10 * SEC;
    (start, start + 5 * SEC)
}

fn decode_frames(frames: Vec<(Vec<u8>, u64)>) -> Vec<PacketRecord> {
    frames
        .into_iter()
        .enumerate()
        .map(|(i, (frame, ts))| {
            let mut p = flowverdict::capture::decode_packet(&frame, LINKTYPE_ETHERNET, ts);
            p.packet_id = i as u64;
            p
        })
        .collect()
}

/// Three packets per flow: SYN, a payload push, FIN. Normal flows target a
/// different server so scenario scoping can tell them apart.
pub fn fixture_packets() -> Vec<PacketRecord> {
    let victim: Ipv4Addr = VICTIM.parse().unwrap();
    let attacker: Ipv4Addr = ATTACKER.parse().unwrap();
    let normal_server: Ipv4Addr = NORMAL_SERVER.parse().unwrap();
    let mut frames = Vec::new();
    for i in 0..ATTACK_FLOWS {
        let sport = 4000 + i as u16;
        let (start, stop) = attack_flow_window(i);
        frames.push((
            synth::tcp_frame(attacker, sport, victim, 80, TCP_SYN, &[]),
            start,
        ));
        frames.push((
            synth::tcp_frame(
                attacker,
                sport,
                victim,
                80,
                TCP_PSH | TCP_ACK,
                b"GET /product.php?id=1'%20OR%20'1'='1 HTTP/1.1",
            ),
            start + SEC,
        ));
        frames.push((
            synth::tcp_frame(attacker, sport, victim, 80, TCP_FIN | TCP_ACK, &[]),
            stop,
        ));
    }
    for i in 0..NORMAL_FLOWS {
        let sport = 51000 + i as u16;
        let client: Ipv4Addr = format!("192.168.3.{}", 10 + i).parse().unwrap();
        let start = BASE_US + (i as u64) * 7 * SEC;
        frames.push((
            synth::tcp_frame(client, sport, normal_server, 80, TCP_SYN, &[]),
            start,
        ));
        frames.push((
            synth::tcp_frame(
                client,
                sport,
                normal_server,
                80,
                TCP_PSH | TCP_ACK,
                b"GET /index.html HTTP/1.1",
            ),
            start + SEC,
        ));
    }
    decode_frames(frames)
}

pub fn fixture_pcap_bytes() -> Vec<u8> {
    let packets = fixture_packets();
    let metadata = CaptureMetadata {
        magic_variant: MagicVariant::Microsecond,
        byte_order: ByteOrder::Little,
        link_type: LINKTYPE_ETHERNET,
        snap_len: 65_535,
        packet_count: packets.len() as u64,
    };
    write_capture(&metadata, &packets).expect("fixture capture serializes")
}

pub fn fixture_labels_csv() -> String {
    let mut out = String::from(
        "source,sourcePort,destination,destinationPort,protocolName,startDateTime,stopDateTime,Tag\n",
    );
    for i in 0..ATTACK_FLOWS {
        let (start, stop) = attack_flow_window(i);
        out.push_str(&format!(
            "{ATTACKER},{},{VICTIM},80,tcp_ip,{},{},Attack\n",
            4000 + i,
            start / SEC,
            stop / SEC,
        ));
    }
    for i in 0..NORMAL_FLOWS {
        let start = BASE_US + (i as u64) * 7 * SEC;
        out.push_str(&format!(
            "192.168.3.{},{},{NORMAL_SERVER},80,tcp_ip,{},{},Normal\n",
            10 + i,
            51000 + i,
            start / SEC,
            start / SEC + 2,
        ));
    }
    out
}

/// Fast-format alert file: signature (129,12,1) on the first
/// `ALERTED_FLOWS` attack flows, timestamps inside each flow's interval.
pub fn fixture_snort_fast_alerts() -> String {
    let mut out = String::new();
    for i in 0..ALERTED_FLOWS {
        let (start, _) = attack_flow_window(i);
        let ts = start + 2 * SEC;
        out.push_str(&format!(
            "{}  [**] [129:12:1] Consecutive TCP small segments exceeding threshold [**] \
             [Classification: Potentially Bad Traffic] [Priority: 2] {{TCP}} \
             {ATTACKER}:{} -> {VICTIM}:80\n",
            fast_timestamp(ts),
            4000 + i,
        ));
    }
    out
}

/// MM/DD-HH:MM:SS.ffffff (no year; the config's base year supplies it).
pub fn fast_timestamp(us: u64) -> String {
    let rendered = flowverdict::time::render_micros(us);
    // rendered: YYYY-MM-DDTHH:MM:SS.ffffffZ
    let (date, time) = rendered.split_once('T').unwrap();
    let mut parts = date.split('-');
    let _year = parts.next().unwrap();
    let month = parts.next().unwrap();
    let day = parts.next().unwrap();
    format!("{month}/{day}-{}", time.trim_end_matches('Z'))
}

pub fn fixture_config_toml() -> String {
    r#"base_year = 2010

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
name = "sql-injection"
category = "vulnerability"

[scenario.scope]
dst_addr = "192.168.5.123"
dst_port = 80
protocol = "tcp"

[[scenario.expected]]
message_contains = "sql injection attempt"
"#
    .to_string()
}

/// Write the whole fixture into a directory; returns input paths.
pub struct FixtureFiles {
    pub pcap: PathBuf,
    pub labels: PathBuf,
    pub alerts: PathBuf,
    pub config: PathBuf,
}

pub fn write_fixture(dir: &Path) -> FixtureFiles {
    let files = FixtureFiles {
        pcap: dir.join("capture.pcap"),
        labels: dir.join("labels.csv"),
        alerts: dir.join("snort.fast"),
        config: dir.join("config.toml"),
    };
    std::fs::write(&files.pcap, fixture_pcap_bytes()).unwrap();
    std::fs::write(&files.labels, fixture_labels_csv()).unwrap();
    std::fs::write(&files.alerts, fixture_snort_fast_alerts()).unwrap();
    std::fs::write(&files.config, fixture_config_toml()).unwrap();
    files
}

/// Run the full pipeline into `workspace`; inputs live in `fixture_dir`.
pub fn run_pipeline(fixture_dir: &Path, workspace: &Path) {
    let files = write_fixture(fixture_dir);
    let ws = workspace.to_str().unwrap();
    let cfg = files.config.to_str().unwrap();
    for args in [
        vec!["--workspace", ws, "--config", cfg, "--quiet", "init"],
        vec![
            "--workspace",
            ws,
            "--quiet",
            "ingest-pcap",
            files.pcap.to_str().unwrap(),
        ],
        vec![
            "--workspace",
            ws,
            "--quiet",
            "ingest-flows",
            files.labels.to_str().unwrap(),
        ],
        vec![
            "--workspace",
            ws,
            "--quiet",
            "ingest-alerts",
            files.alerts.to_str().unwrap(),
            "--format",
            "snort-fast",
            "--ruleset",
            "snort-default",
        ],
        vec!["--workspace", ws, "--quiet", "map"],
        vec!["--workspace", ws, "--quiet", "classify"],
        vec!["--workspace", ws, "--quiet", "report"],
    ] {
        let output = run_in(fixture_dir, &args);
        assert_exit(&output, 0);
    }
}
