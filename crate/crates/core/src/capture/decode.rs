//! Link-layer / IP / transport header decoding for flow-key extraction.
//!
//! Decoding is total: malformed or unsupported frames come back as unkeyed
//! records with a reason string, never an error or a panic. Lengths are
//! taken from the declared header fields, so a frame cut short by the snap
//! length still reports its real IP and payload sizes as long as the headers
//! themselves were captured.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use crate::tuple::{FiveTuple, PROTO_ICMP, PROTO_ICMPV6, PROTO_TCP, PROTO_UDP};

use super::DecodeStatus;

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW_IP: u32 = 101;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;

pub(crate) struct Decoded {
    pub tuple: Option<FiveTuple>,
    pub ip_length: u32,
    pub payload_length: u32,
    pub tcp_flags: Option<u8>,
    pub status: DecodeStatus,
}

impl Decoded {
    fn unkeyed(reason: &str) -> Self {
        Decoded {
            tuple: None,
            ip_length: 0,
            payload_length: 0,
            tcp_flags: None,
            status: DecodeStatus::Unkeyed {
                reason: reason.to_string(),
            },
        }
    }

    fn unkeyed_with_ip_length(reason: &str, ip_length: u32) -> Self {
        Decoded {
            ip_length,
            ..Decoded::unkeyed(reason)
        }
    }
}

pub(crate) fn decode_frame(frame: &[u8], link_type: u32) -> Decoded {
    match link_type {
        LINKTYPE_ETHERNET => decode_ethernet(frame),
        LINKTYPE_RAW_IP => decode_ip(frame),
        _ => Decoded::unkeyed("unsupported-link-type"),
    }
}

fn decode_ethernet(frame: &[u8]) -> Decoded {
    if frame.len() < 14 {
        return Decoded::unkeyed("truncated-ethernet");
    }
    let mut ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    let mut payload = &frame[14..];
    if ethertype == ETHERTYPE_QINQ {
        return Decoded::unkeyed("nested-vlan");
    }
    if ethertype == ETHERTYPE_VLAN {
        // unwrap a single 802.1Q tag; anything deeper is out of scope
        if payload.len() < 4 {
            return Decoded::unkeyed("truncated-vlan");
        }
        ethertype = u16::from_be_bytes([payload[2], payload[3]]);
        if ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
            return Decoded::unkeyed("nested-vlan");
        }
        payload = &payload[4..];
    }
    match ethertype {
        ETHERTYPE_IPV4 => decode_ipv4(payload),
        ETHERTYPE_IPV6 => decode_ipv6(payload),
        _ => Decoded::unkeyed("non-ip-ethertype"),
    }
}

fn decode_ip(bytes: &[u8]) -> Decoded {
    match bytes.first().map(|b| b >> 4) {
        Some(4) => decode_ipv4(bytes),
        Some(6) => decode_ipv6(bytes),
        _ => Decoded::unkeyed("non-ip-version"),
    }
}

fn decode_ipv4(bytes: &[u8]) -> Decoded {
    if bytes.len() < 20 {
        return Decoded::unkeyed("truncated-ipv4");
    }
    if bytes[0] >> 4 != 4 {
        return Decoded::unkeyed("non-ip-version");
    }
    let header_len = ((bytes[0] & 0x0f) as usize) * 4;
    if header_len < 20 {
        return Decoded::unkeyed("malformed-ipv4");
    }
    if bytes.len() < header_len {
        return Decoded::unkeyed("truncated-ipv4");
    }
    let total_len = u16::from_be_bytes([bytes[2], bytes[3]]) as u32;
    let fragment_offset = u16::from_be_bytes([bytes[6], bytes[7]]) & 0x1fff;
    if fragment_offset != 0 {
        // transport ports live in the first fragment only
        return Decoded::unkeyed_with_ip_length("ip-fragment", total_len);
    }
    let protocol = bytes[9];
    let src = IpAddr::V4(Ipv4Addr::new(bytes[12], bytes[13], bytes[14], bytes[15]));
    let dst = IpAddr::V4(Ipv4Addr::new(bytes[16], bytes[17], bytes[18], bytes[19]));
    decode_transport(
        src,
        dst,
        protocol,
        total_len,
        total_len.saturating_sub(header_len as u32),
        &bytes[header_len.min(bytes.len())..],
    )
}

fn decode_ipv6(bytes: &[u8]) -> Decoded {
    if bytes.len() < 40 {
        return Decoded::unkeyed("truncated-ipv6");
    }
    if bytes[0] >> 4 != 6 {
        return Decoded::unkeyed("non-ip-version");
    }
    let payload_len = u16::from_be_bytes([bytes[4], bytes[5]]) as u32;
    let ip_length = 40 + payload_len;
    let src_octets: [u8; 16] = bytes[8..24].try_into().unwrap();
    let dst_octets: [u8; 16] = bytes[24..40].try_into().unwrap();
    let src = IpAddr::V6(Ipv6Addr::from(src_octets));
    let dst = IpAddr::V6(Ipv6Addr::from(dst_octets));

    let mut next_header = bytes[6];
    let mut offset = 40usize;
    let mut extension_bytes = 0u32;
    for _ in 0..8 {
        match next_header {
            // hop-by-hop, routing, destination options
            0 | 43 | 60 => {
                if bytes.len() < offset + 2 {
                    return Decoded::unkeyed("truncated-ipv6-extension");
                }
                let len = (bytes[offset + 1] as usize + 1) * 8;
                next_header = bytes[offset];
                offset += len;
                extension_bytes += len as u32;
            }
            // fragment header
            44 => {
                if bytes.len() < offset + 8 {
                    return Decoded::unkeyed("truncated-ipv6-extension");
                }
                let frag = u16::from_be_bytes([bytes[offset + 2], bytes[offset + 3]]) & 0xfff8;
                if frag != 0 {
                    return Decoded::unkeyed_with_ip_length("ip-fragment", ip_length);
                }
                next_header = bytes[offset];
                offset += 8;
                extension_bytes += 8;
            }
            // authentication header
            51 => {
                if bytes.len() < offset + 2 {
                    return Decoded::unkeyed("truncated-ipv6-extension");
                }
                let len = (bytes[offset + 1] as usize + 2) * 4;
                next_header = bytes[offset];
                offset += len;
                extension_bytes += len as u32;
            }
            _ => break,
        }
        if offset > bytes.len() {
            return Decoded::unkeyed("truncated-ipv6-extension");
        }
    }
    decode_transport(
        src,
        dst,
        next_header,
        ip_length,
        payload_len.saturating_sub(extension_bytes),
        &bytes[offset.min(bytes.len())..],
    )
}

/// `after_ip_len` is the declared byte count following the IP (and any
/// extension) headers; `transport` is whatever of it was actually captured.
fn decode_transport(
    src: IpAddr,
    dst: IpAddr,
    protocol: u8,
    ip_length: u32,
    after_ip_len: u32,
    transport: &[u8],
) -> Decoded {
    let keyed = |sport: u16, dport: u16, payload: u32, flags: Option<u8>| Decoded {
        tuple: Some(FiveTuple::new(src, sport, dst, dport, protocol)),
        ip_length,
        payload_length: payload,
        tcp_flags: flags,
        status: DecodeStatus::Keyed,
    };
    match protocol {
        PROTO_TCP => {
            if transport.len() < 14 {
                return Decoded::unkeyed_with_ip_length("truncated-tcp", ip_length);
            }
            let sport = u16::from_be_bytes([transport[0], transport[1]]);
            let dport = u16::from_be_bytes([transport[2], transport[3]]);
            let header_len = ((transport[12] >> 4) as u32) * 4;
            if header_len < 20 {
                return Decoded::unkeyed_with_ip_length("malformed-tcp", ip_length);
            }
            let flags = transport[13];
            keyed(
                sport,
                dport,
                after_ip_len.saturating_sub(header_len),
                Some(flags),
            )
        }
        PROTO_UDP => {
            if transport.len() < 8 {
                return Decoded::unkeyed_with_ip_length("truncated-udp", ip_length);
            }
            let sport = u16::from_be_bytes([transport[0], transport[1]]);
            let dport = u16::from_be_bytes([transport[2], transport[3]]);
            keyed(sport, dport, after_ip_len.saturating_sub(8), None)
        }
        PROTO_ICMP | PROTO_ICMPV6 => keyed(0, 0, after_ip_len.saturating_sub(8), None),
        // port-less IP protocols keep the whole post-IP region as payload
        _ => keyed(0, 0, after_ip_len, None),
    }
}
