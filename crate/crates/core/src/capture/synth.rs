//! Synthetic frame construction for fixtures and tests.
//!
//! Frames are minimal but structurally valid: checksums are left zero (the
//! decoder never verifies them) and MAC addresses are fixed locally
//! administered values.

use std::net::{Ipv4Addr, Ipv6Addr};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;

/// Ethernet II frame with fixed MACs around an arbitrary payload.
pub fn ethernet_frame(ethertype: u16, payload: &[u8]) -> Vec<u8> {
    let mut frame = Vec::with_capacity(14 + payload.len());
    frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]); // dst
    frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x02]); // src
    frame.extend_from_slice(&ethertype.to_be_bytes());
    frame.extend_from_slice(payload);
    frame
}

/// Wrap an existing Ethernet frame in one 802.1Q tag.
pub fn vlan_wrap(frame: &[u8], vlan_id: u16) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.len() + 4);
    out.extend_from_slice(&frame[..12]);
    out.extend_from_slice(&ETHERTYPE_VLAN.to_be_bytes());
    out.extend_from_slice(&(vlan_id & 0x0fff).to_be_bytes());
    out.extend_from_slice(&frame[12..]);
    out
}

/// IPv4 packet (20-byte header, no options) around a transport payload.
pub fn ipv4_packet(src: Ipv4Addr, dst: Ipv4Addr, protocol: u8, payload: &[u8]) -> Vec<u8> {
    let total_len = (20 + payload.len()) as u16;
    let mut packet = Vec::with_capacity(total_len as usize);
    packet.push(0x45); // version 4, IHL 5
    packet.push(0);
    packet.extend_from_slice(&total_len.to_be_bytes());
    packet.extend_from_slice(&[0, 0, 0, 0]); // id, flags/fragment
    packet.push(64); // ttl
    packet.push(protocol);
    packet.extend_from_slice(&[0, 0]); // checksum
    packet.extend_from_slice(&src.octets());
    packet.extend_from_slice(&dst.octets());
    packet.extend_from_slice(payload);
    packet
}

/// IPv6 packet (no extension headers) around a transport payload.
pub fn ipv6_packet(src: Ipv6Addr, dst: Ipv6Addr, next_header: u8, payload: &[u8]) -> Vec<u8> {
    let mut packet = Vec::with_capacity(40 + payload.len());
    packet.push(0x60);
    packet.extend_from_slice(&[0, 0, 0]);
    packet.extend_from_slice(&(payload.len() as u16).to_be_bytes());
    packet.push(next_header);
    packet.push(64); // hop limit
    packet.extend_from_slice(&src.octets());
    packet.extend_from_slice(&dst.octets());
    packet.extend_from_slice(payload);
    packet
}

/// TCP segment with an options block (length must be a multiple of 4).
pub fn tcp_segment_with_options(
    src_port: u16,
    dst_port: u16,
    flags: u8,
    options: &[u8],
    payload: &[u8],
) -> Vec<u8> {
    assert!(options.len() % 4 == 0 && options.len() <= 40, "bad options length");
    let header_len = 20 + options.len();
    let mut segment = Vec::with_capacity(header_len + payload.len());
    segment.extend_from_slice(&src_port.to_be_bytes());
    segment.extend_from_slice(&dst_port.to_be_bytes());
    segment.extend_from_slice(&[0, 0, 0, 0]); // seq
    segment.extend_from_slice(&[0, 0, 0, 0]); // ack
    segment.push(((header_len / 4) as u8) << 4);
    segment.push(flags);
    segment.extend_from_slice(&8192u16.to_be_bytes()); // window
    segment.extend_from_slice(&[0, 0, 0, 0]); // checksum, urgent
    segment.extend_from_slice(options);
    segment.extend_from_slice(payload);
    segment
}

pub fn tcp_segment(src_port: u16, dst_port: u16, flags: u8, payload: &[u8]) -> Vec<u8> {
    tcp_segment_with_options(src_port, dst_port, flags, &[], payload)
}

pub fn udp_datagram(src_port: u16, dst_port: u16, payload: &[u8]) -> Vec<u8> {
    let mut datagram = Vec::with_capacity(8 + payload.len());
    datagram.extend_from_slice(&src_port.to_be_bytes());
    datagram.extend_from_slice(&dst_port.to_be_bytes());
    datagram.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    datagram.extend_from_slice(&[0, 0]); // checksum
    datagram.extend_from_slice(payload);
    datagram
}

/// Ethernet + IPv4 + TCP in one call.
pub fn tcp_frame(
    src: Ipv4Addr,
    src_port: u16,
    dst: Ipv4Addr,
    dst_port: u16,
    flags: u8,
    payload: &[u8],
) -> Vec<u8> {
    let segment = tcp_segment(src_port, dst_port, flags, payload);
    ethernet_frame(ETHERTYPE_IPV4, &ipv4_packet(src, dst, 6, &segment))
}

pub fn tcp_frame_with_options(
    src: Ipv4Addr,
    src_port: u16,
    dst: Ipv4Addr,
    dst_port: u16,
    flags: u8,
    options: &[u8],
    payload: &[u8],
) -> Vec<u8> {
    let segment = tcp_segment_with_options(src_port, dst_port, flags, options, payload);
    ethernet_frame(ETHERTYPE_IPV4, &ipv4_packet(src, dst, 6, &segment))
}

/// Ethernet + IPv6 + TCP in one call.
pub fn tcp6_frame(
    src: Ipv6Addr,
    src_port: u16,
    dst: Ipv6Addr,
    dst_port: u16,
    flags: u8,
    payload: &[u8],
) -> Vec<u8> {
    let segment = tcp_segment(src_port, dst_port, flags, payload);
    ethernet_frame(ETHERTYPE_IPV6, &ipv6_packet(src, dst, 6, &segment))
}

/// Ethernet + IPv4 + UDP in one call.
pub fn udp_frame(
    src: Ipv4Addr,
    src_port: u16,
    dst: Ipv4Addr,
    dst_port: u16,
    payload: &[u8],
) -> Vec<u8> {
    let datagram = udp_datagram(src_port, dst_port, payload);
    ethernet_frame(ETHERTYPE_IPV4, &ipv4_packet(src, dst, 17, &datagram))
}

/// Ethernet + IPv4 + ICMP echo request around extra body bytes.
pub fn icmp_frame(src: Ipv4Addr, dst: Ipv4Addr, body: &[u8]) -> Vec<u8> {
    let mut message = vec![8, 0, 0, 0, 0, 0, 0, 0]; // echo request header
    message.extend_from_slice(body);
    ethernet_frame(ETHERTYPE_IPV4, &ipv4_packet(src, dst, 1, &message))
}
