//! Parser for the single-line "fast" alert text format.
//!
//! Grammar per line:
//!
//! ```text
//! MM/DD[/YY]-HH:MM:SS.ffffff  [**] [gid:sid:rev] message [**] \
//!     [Classification: ...] [Priority: n] {PROTO} src[:port] -> dst[:port]
//! ```
//!
//! Classification, priority, and the endpoint suffix are each optional;
//! preprocessor alerts in particular print no endpoints at all.

use std::sync::OnceLock;

use regex::Regex;

use crate::time::parse_engine_timestamp;
use crate::tuple::{protocol_number, FiveTuple};

use super::{parse_endpoint, AlertParseOutcome, AlertRecord, ParseReject, SignatureId};

/// Year recovery for the short timestamp form, which prints no year.
#[derive(Debug, Clone, Copy)]
pub struct FastParseOptions {
    /// Assumed year when no capture time range is available.
    pub base_year: i32,
    /// Capture time range (epoch microseconds); when present the candidate
    /// year closest to it wins.
    pub reference_range: Option<(u64, u64)>,
}

impl Default for FastParseOptions {
    fn default() -> Self {
        Self {
            base_year: 1970,
            reference_range: None,
        }
    }
}

fn line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)^\s*
              (?P<ts>\d{1,2}/\d{1,2}(?:/\d{2,4})?-\d{2}:\d{2}:\d{2}\.\d{1,6})
              \s+ (?:\[\*\*\]\s+)?
              \[(?P<gid>\d+):(?P<sid>\d+):(?P<rev>\d+)\]
              \s* (?P<msg>.*?) \s* \[\*\*\]
              (?P<rest>.*)$",
        )
        .unwrap()
    })
}

fn priority_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[Priority:\s*(\d+)\]").unwrap())
}

fn endpoints_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\{(?P<proto>[A-Za-z0-9-]+)\}\s+(?P<src>\S+)\s+->\s+(?P<dst>\S+)\s*$").unwrap()
    })
}

/// Parse fast-format alert lines. Lines that do not match the grammar land
/// in the rejects list with their 1-based line number.
pub fn parse_snort_fast(
    input: &str,
    ruleset: &str,
    options: &FastParseOptions,
) -> AlertParseOutcome {
    let mut outcome = AlertParseOutcome::new();
    for (idx, line) in input.lines().enumerate() {
        outcome.total_lines += 1;
        match parse_line(line, ruleset, options, outcome.alerts.len() as u64) {
            Ok(alert) => outcome.alerts.push(alert),
            Err(reason) => outcome.rejects.push(ParseReject {
                line: idx + 1,
                reason,
            }),
        }
    }
    debug_assert!(outcome.conservation_holds());
    outcome
}

fn parse_line(
    line: &str,
    ruleset: &str,
    options: &FastParseOptions,
    alert_id: u64,
) -> Result<AlertRecord, String> {
    if line.trim().is_empty() {
        return Err("blank line".into());
    }
    let caps = line_re()
        .captures(line)
        .ok_or_else(|| "unrecognized line".to_string())?;
    let timestamp =
        parse_engine_timestamp(&caps["ts"], options.base_year, options.reference_range)
            .ok_or_else(|| format!("bad timestamp {:?}", &caps["ts"]))?;
    // gid/sid/rev matched \d+ so only overflow can fail here
    let gid: u32 = caps["gid"].parse().map_err(|_| "gid out of range")?;
    let sid: u32 = caps["sid"].parse().map_err(|_| "sid out of range")?;
    let rev: u32 = caps["rev"].parse().map_err(|_| "rev out of range")?;
    if sid == 0 {
        return Err("signature id must be >= 1".into());
    }

    let rest = &caps["rest"];
    let priority = priority_re()
        .captures(rest)
        .and_then(|c| c[1].parse::<u32>().ok());
    let tuple = match endpoints_re().captures(rest) {
        Some(ep) => {
            let protocol = protocol_number(&ep["proto"])
                .ok_or_else(|| format!("unknown protocol {:?}", &ep["proto"]))?;
            let (src_addr, src_port) =
                parse_endpoint(&ep["src"]).ok_or_else(|| "bad source endpoint".to_string())?;
            let (dst_addr, dst_port) = parse_endpoint(&ep["dst"])
                .ok_or_else(|| "bad destination endpoint".to_string())?;
            Some(FiveTuple::new(src_addr, src_port, dst_addr, dst_port, protocol))
        }
        None => None,
    };

    Ok(AlertRecord {
        alert_id,
        timestamp,
        signature: SignatureId::new(gid, sid, rev),
        message: caps["msg"].to_string(),
        tuple,
        ruleset: ruleset.to_string(),
        priority,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts_2010() -> FastParseOptions {
        FastParseOptions {
            base_year: 2010,
            reference_range: None,
        }
    }

    #[test]
    fn parses_full_line_with_endpoints() {
        let line = "06/13-23:57:19.056724  [**] [129:12:1] Consecutive TCP small segments \
                    exceeding threshold [**] [Classification: Potentially Bad Traffic] \
                    [Priority: 2] {TCP} 192.168.2.112:4387 -> 192.168.5.123:80";
        let out = parse_snort_fast(line, "snort-default", &opts_2010());
        assert_eq!(out.alerts.len(), 1);
        let alert = &out.alerts[0];
        assert_eq!(alert.signature, SignatureId::new(129, 12, 1));
        assert_eq!(
            alert.message,
            "Consecutive TCP small segments exceeding threshold"
        );
        assert_eq!(alert.priority, Some(2));
        let tuple = alert.tuple.unwrap();
        assert_eq!(tuple.src_port, 4387);
        assert_eq!(tuple.dst_addr.to_string(), "192.168.5.123");
        assert_eq!(tuple.protocol, 6);
        assert_eq!(alert.ruleset, "snort-default");
    }

    #[test]
    fn endpoint_free_preprocessor_alert_has_no_tuple() {
        let line =
            "06/13-23:57:20.000001  [**] [139:1:1] (spp_sdf) SDF Combination Alert [**] [Priority: 2]";
        let out = parse_snort_fast(line, "snort-default", &opts_2010());
        assert_eq!(out.alerts.len(), 1);
        let alert = &out.alerts[0];
        assert_eq!(alert.signature, SignatureId::new(139, 1, 1));
        assert_eq!(alert.message, "(spp_sdf) SDF Combination Alert");
        assert!(alert.tuple.is_none());
    }

    #[test]
    fn blank_and_garbage_lines_are_rejected_with_line_numbers() {
        let input = "\n06/13-23:57:19.000000  [**] [1:1:1] ok [**] {TCP} 1.2.3.4:1 -> 5.6.7.8:2\nnot an alert\n";
        let out = parse_snort_fast(input, "x", &opts_2010());
        assert_eq!(out.alerts.len(), 1);
        assert_eq!(out.rejects.len(), 2);
        assert_eq!(out.rejects[0].line, 1);
        assert_eq!(out.rejects[0].reason, "blank line");
        assert_eq!(out.rejects[1].line, 3);
        assert!(out.conservation_holds());
    }

    #[test]
    fn year_bearing_timestamp_ignores_base_year() {
        let line = "06/13/10-23:57:19.000000  [**] [1:1:1] m [**]";
        let out = parse_snort_fast(line, "x", &FastParseOptions::default());
        assert_eq!(out.alerts[0].timestamp, 1_276_473_439_000_000);
    }

    #[test]
    fn icmp_endpoints_without_ports() {
        let line = "06/13-01:02:03.000000  [**] [1:408:5] ICMP Echo Reply [**] \
                    [Classification: Misc activity] [Priority: 3] {ICMP} 10.1.1.1 -> 10.1.1.2";
        let out = parse_snort_fast(line, "x", &opts_2010());
        let tuple = out.alerts[0].tuple.unwrap();
        assert_eq!((tuple.src_port, tuple.dst_port), (0, 0));
        assert_eq!(tuple.protocol, 1);
    }

    #[test]
    fn alert_ids_are_ordinals_over_parsed_alerts() {
        let input = "06/13-01:00:00.000000  [**] [1:1:1] a [**]\njunk\n\
                     06/13-01:00:01.000000  [**] [1:2:1] b [**]";
        let out = parse_snort_fast(input, "x", &opts_2010());
        assert_eq!(out.alerts[0].alert_id, 0);
        assert_eq!(out.alerts[1].alert_id, 1);
    }

    #[test]
    fn zero_parse_warning_fires_on_all_rejects() {
        let out = parse_snort_fast("junk\nmore junk", "x", &opts_2010());
        assert!(out.zero_parse_warning().is_some());
        assert!(out.conservation_holds());
    }
}
