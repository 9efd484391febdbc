//! Timestamp parsing and rendering.
//!
//! Everything downstream of the parsers works in epoch microseconds (u64).

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, Utc};

pub const MICROS_PER_SEC: u64 = 1_000_000;

/// Parse a label-file or config timestamp into epoch microseconds.
///
/// Accepts epoch seconds (integer or fractional) and naive or offset
/// ISO-8601 datetimes; naive values are taken as UTC. Pre-epoch values are
/// rejected.
pub fn parse_instant(s: &str) -> Option<u64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(secs) = s.parse::<u64>() {
        return secs.checked_mul(MICROS_PER_SEC);
    }
    if s.bytes().all(|b| b.is_ascii_digit() || b == b'.' || b == b'-') {
        if let Ok(secs) = s.parse::<f64>() {
            if secs >= 0.0 && secs.is_finite() {
                return Some((secs * MICROS_PER_SEC as f64).round() as u64);
            }
            return None;
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return micros_from_naive(naive);
        }
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return u64::try_from(dt.timestamp_micros()).ok();
    }
    None
}

/// Parse the engine text-log timestamp `MM/DD[/YY[YY]]-HH:MM:SS.ffffff`.
///
/// The short form carries no year: candidates are taken from `base_year`
/// and, when the capture's time range is known, the years that range spans
/// (plus one either side); the candidate closest to the range wins, earlier
/// year on ties.
pub fn parse_engine_timestamp(
    s: &str,
    base_year: i32,
    reference: Option<(u64, u64)>,
) -> Option<u64> {
    let (date_part, time_part) = s.trim().split_once('-')?;
    let time = NaiveTime::parse_from_str(time_part, "%H:%M:%S%.f").ok()?;
    let fields: Vec<&str> = date_part.split('/').collect();
    let (month, day, year) = match fields.as_slice() {
        [m, d] => (m.parse::<u32>().ok()?, d.parse::<u32>().ok()?, None),
        [m, d, y] => {
            let mut year: i32 = y.parse().ok()?;
            if year < 100 {
                year += 2000;
            }
            (m.parse::<u32>().ok()?, d.parse::<u32>().ok()?, Some(year))
        }
        _ => return None,
    };

    if let Some(year) = year {
        let date = NaiveDate::from_ymd_opt(year, month, day)?;
        return micros_from_naive(date.and_time(time));
    }

    let mut candidates: Vec<i32> = Vec::new();
    if let Some((start, stop)) = reference {
        let first = year_of_micros(start);
        let last = year_of_micros(stop);
        for y in (first - 1)..=(last + 1) {
            candidates.push(y);
        }
    } else {
        candidates.push(base_year);
    }

    let mut best: Option<(u64, u64)> = None; // (distance, micros)
    for year in candidates {
        let Some(date) = NaiveDate::from_ymd_opt(year, month, day) else {
            continue; // e.g. Feb 29 in a non-leap candidate
        };
        let Some(us) = micros_from_naive(date.and_time(time)) else {
            continue;
        };
        let dist = match reference {
            Some((start, _)) if us < start => start - us,
            Some((_, stop)) if us > stop => us - stop,
            _ => 0,
        };
        match best {
            Some((d, t)) if (dist, us) >= (d, t) => {}
            _ => best = Some((dist, us)),
        }
    }
    best.map(|(_, us)| us)
}

/// Parse a structured event log timestamp such as
/// `2010-06-13T23:57:19.123456+0000` (offset-bearing ISO-8601).
pub fn parse_event_timestamp(s: &str) -> Option<u64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f%z") {
        return u64::try_from(dt.timestamp_micros()).ok();
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return u64::try_from(dt.timestamp_micros()).ok();
    }
    // some engines log without an offset; treat as UTC
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .and_then(micros_from_naive)
}

/// Render epoch microseconds as a UTC ISO-8601 string.
pub fn render_micros(us: u64) -> String {
    match DateTime::<Utc>::from_timestamp_micros(us as i64) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%S%.6fZ").to_string(),
        None => format!("{us}us"),
    }
}

fn micros_from_naive(naive: NaiveDateTime) -> Option<u64> {
    u64::try_from(naive.and_utc().timestamp_micros()).ok()
}

fn year_of_micros(us: u64) -> i32 {
    use chrono::Datelike;
    DateTime::<Utc>::from_timestamp_micros(us as i64)
        .map(|dt| dt.year())
        .unwrap_or(1970)
}
