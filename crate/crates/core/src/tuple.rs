//! Flow keys: the 5-tuple of endpoints and protocol.

use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

/// IANA protocol numbers the harness cares about by name.
pub const PROTO_ICMP: u8 = 1;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;
pub const PROTO_ICMPV6: u8 = 58;

/// A flow key: source/destination endpoints plus IP protocol.
///
/// The directional form keeps the packet's source endpoint first. For
/// protocols without port numbers (ICMP and friends) both ports are 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FiveTuple {
    pub src_addr: IpAddr,
    pub src_port: u16,
    pub dst_addr: IpAddr,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FiveTuple {
    pub fn new(
        src_addr: IpAddr,
        src_port: u16,
        dst_addr: IpAddr,
        dst_port: u16,
        protocol: u8,
    ) -> Self {
        Self {
            src_addr,
            src_port,
            dst_addr,
            dst_port,
            protocol,
        }
    }

    /// The same endpoints with source and destination swapped.
    pub fn reversed(self) -> Self {
        Self {
            src_addr: self.dst_addr,
            src_port: self.dst_port,
            dst_addr: self.src_addr,
            dst_port: self.src_port,
            protocol: self.protocol,
        }
    }

    /// Bidirectional (canonical) form: the endpoint pair is ordered so that
    /// the lexicographically smaller (address, port) comes first. Both
    /// directions of a conversation canonicalize to the same key.
    pub fn canonical(self) -> Self {
        if (addr_key(self.src_addr), self.src_port) <= (addr_key(self.dst_addr), self.dst_port) {
            self
        } else {
            self.reversed()
        }
    }

    pub fn is_canonical(&self) -> bool {
        *self == self.canonical()
    }
}

/// Lexicographic byte ordering of addresses without allocating: zero-padded
/// octets plus the real length, so an IPv4 address sorts exactly like its
/// raw 4-byte sequence would against longer ones.
fn addr_key(addr: IpAddr) -> ([u8; 16], u8) {
    match addr {
        IpAddr::V4(a) => {
            let mut key = [0u8; 16];
            key[..4].copy_from_slice(&a.octets());
            (key, 4)
        }
        IpAddr::V6(a) => (a.octets(), 16),
    }
}

/// Short protocol name for display; falls back to the number.
pub fn protocol_name(protocol: u8) -> String {
    match protocol {
        PROTO_ICMP => "icmp".into(),
        PROTO_TCP => "tcp".into(),
        PROTO_UDP => "udp".into(),
        PROTO_ICMPV6 => "icmpv6".into(),
        other => other.to_string(),
    }
}

/// Protocol number from a label-file or alert-log spelling.
/// Accepts common names (with or without the `_ip` suffix some datasets
/// append) and plain numbers.
pub fn protocol_number(name: &str) -> Option<u8> {
    let lower = name.trim().to_ascii_lowercase();
    let base = lower.strip_suffix("_ip").unwrap_or(&lower);
    match base {
        "icmp" => Some(PROTO_ICMP),
        "igmp" => Some(2),
        "tcp" => Some(PROTO_TCP),
        "udp" => Some(PROTO_UDP),
        "gre" => Some(47),
        "esp" => Some(50),
        "ah" => Some(51),
        "icmpv6" | "ipv6-icmp" => Some(PROTO_ICMPV6),
        "sctp" => Some(132),
        other => other.parse::<u8>().ok(),
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}:{} -> {}:{}",
            protocol_name(self.protocol),
            self.src_addr,
            self.src_port,
            self.dst_addr,
            self.dst_port
        )
    }
}
