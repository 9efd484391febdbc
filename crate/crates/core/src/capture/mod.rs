//! Classic packet-capture file parsing and writing.
//!
//! The on-disk layout is the libpcap classic format: a 24-byte global header
//! (magic, version 2.4, reserved words, snap length, link type) followed by
//! 16-byte per-record headers (seconds, fractional part, captured length,
//! original length). Both the microsecond and nanosecond magics are accepted
//! in either byte order; timestamps are normalized to epoch microseconds,
//! truncating sub-microsecond precision.

mod decode;
pub mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tuple::FiveTuple;

pub use decode::{LINKTYPE_ETHERNET, LINKTYPE_RAW_IP};

pub const MAGIC_MICROSECOND: u32 = 0xa1b2_c3d4;
pub const MAGIC_NANOSECOND: u32 = 0xa1b2_3c4d;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_RST: u8 = 0x04;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;
pub const TCP_URG: u8 = 0x20;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagicVariant {
    Microsecond,
    Nanosecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByteOrder {
    Big,
    Little,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureMetadata {
    pub magic_variant: MagicVariant,
    pub byte_order: ByteOrder,
    pub link_type: u32,
    pub snap_len: u32,
    pub packet_count: u64,
}

/// Whether the frame yielded a usable flow key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecodeStatus {
    Keyed,
    Unkeyed { reason: String },
}

/// One captured packet, decoded as far as the flow key and payload size.
///
/// `timestamp` is epoch microseconds. `payload_length` counts transport
/// payload bytes computed from the declared header lengths, so it is valid
/// even when the snap length cut the captured bytes short.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub packet_id: u64,
    pub timestamp: u64,
    pub tuple: Option<FiveTuple>,
    pub ip_length: u32,
    pub payload_length: u32,
    pub tcp_flags: Option<u8>,
    pub decode: DecodeStatus,
    #[serde(with = "hex::serde")]
    pub frame: Vec<u8>,
    pub original_length: u32,
}

impl PacketRecord {
    pub fn is_keyed(&self) -> bool {
        matches!(self.decode, DecodeStatus::Keyed)
    }

    /// True for a zero-payload TCP segment carrying only control flags.
    pub fn is_control_segment(&self) -> bool {
        self.payload_length == 0
            && self
                .tcp_flags
                .map(|f| f & (TCP_SYN | TCP_ACK | TCP_FIN | TCP_RST) != 0)
                .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCapture {
    pub metadata: CaptureMetadata,
    pub packets: Vec<PacketRecord>,
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("missing global header: file is {0} bytes, need {GLOBAL_HEADER_LEN}")]
    MissingGlobalHeader(usize),
    #[error("unrecognized capture magic {0:#010x}")]
    UnrecognizedMagic(u32),
    #[error("global header declares a zero snap length")]
    ZeroSnapLength,
    #[error(
        "truncated capture at byte offset {offset} ({reason}); \
         {} packets parsed before it",
        partial.packets.len()
    )]
    Truncated {
        offset: usize,
        reason: String,
        /// Everything successfully parsed before the truncation point.
        partial: Box<ParsedCapture>,
    },
    #[error("packet {packet_id}: frame of {frame_len} bytes exceeds snap length {snap_len}")]
    FrameExceedsSnapLen {
        packet_id: u64,
        frame_len: usize,
        snap_len: u32,
    },
    #[error("metadata declares {expected} packets but {actual} were supplied")]
    PacketCountMismatch { expected: u64, actual: usize },
}

/// Decode one raw link-layer frame into a [`PacketRecord`].
///
/// Total on arbitrary bytes: anything undecodable comes back with
/// `DecodeStatus::Unkeyed` and a reason instead of an error. The caller is
/// expected to fill in `packet_id` and `original_length` when the frame came
/// from a capture file.
pub fn decode_packet(raw_frame: &[u8], link_type: u32, timestamp: u64) -> PacketRecord {
    let decoded = decode::decode_frame(raw_frame, link_type);
    PacketRecord {
        packet_id: 0,
        timestamp,
        tuple: decoded.tuple,
        ip_length: decoded.ip_length,
        payload_length: decoded.payload_length,
        tcp_flags: decoded.tcp_flags,
        decode: decoded.status,
        frame: raw_frame.to_vec(),
        original_length: raw_frame.len() as u32,
    }
}

/// Parse a complete capture file.
///
/// Every record in the file yields exactly one [`PacketRecord`] in file
/// order. A truncated record header or body aborts the parse with
/// [`CaptureError::Truncated`], which carries the byte offset of the bad
/// record and everything parsed before it.
pub fn parse_capture(bytes: &[u8]) -> Result<ParsedCapture, CaptureError> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(CaptureError::MissingGlobalHeader(bytes.len()));
    }
    let raw_magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let (magic_variant, byte_order) = match raw_magic {
        MAGIC_MICROSECOND => (MagicVariant::Microsecond, ByteOrder::Big),
        MAGIC_NANOSECOND => (MagicVariant::Nanosecond, ByteOrder::Big),
        m if m.swap_bytes() == MAGIC_MICROSECOND => (MagicVariant::Microsecond, ByteOrder::Little),
        m if m.swap_bytes() == MAGIC_NANOSECOND => (MagicVariant::Nanosecond, ByteOrder::Little),
        other => return Err(CaptureError::UnrecognizedMagic(other)),
    };
    let snap_len = read_u32(bytes, 16, byte_order);
    let link_type = read_u32(bytes, 20, byte_order);
    if snap_len == 0 {
        return Err(CaptureError::ZeroSnapLength);
    }

    let mut metadata = CaptureMetadata {
        magic_variant,
        byte_order,
        link_type,
        snap_len,
        packet_count: 0,
    };
    let mut packets = Vec::new();
    let mut offset = GLOBAL_HEADER_LEN;
    while offset < bytes.len() {
        if bytes.len() - offset < RECORD_HEADER_LEN {
            return Err(truncated(metadata, offset, "incomplete record header", packets));
        }
        let ts_sec = read_u32(bytes, offset, byte_order) as u64;
        let ts_frac = read_u32(bytes, offset + 4, byte_order) as u64;
        let incl_len = read_u32(bytes, offset + 8, byte_order) as usize;
        let orig_len = read_u32(bytes, offset + 12, byte_order);
        if incl_len > snap_len as usize {
            return Err(truncated(
                metadata,
                offset,
                "captured length exceeds snap length",
                packets,
            ));
        }
        let body_start = offset + RECORD_HEADER_LEN;
        if bytes.len() - body_start < incl_len {
            return Err(truncated(metadata, offset, "incomplete record body", packets));
        }
        let micros = match magic_variant {
            MagicVariant::Microsecond => ts_frac,
            MagicVariant::Nanosecond => ts_frac / 1_000,
        };
        let timestamp = ts_sec * 1_000_000 + micros;
        let mut record = decode_packet(&bytes[body_start..body_start + incl_len], link_type, timestamp);
        record.packet_id = packets.len() as u64;
        record.original_length = orig_len;
        packets.push(record);
        offset = body_start + incl_len;
    }
    metadata.packet_count = packets.len() as u64;
    Ok(ParsedCapture { metadata, packets })
}

/// Serialize a capture back to bytes. Inverse of [`parse_capture`]:
/// `parse_capture(&write_capture(m, p)?)` reproduces `(m, p)` exactly.
pub fn write_capture(
    metadata: &CaptureMetadata,
    packets: &[PacketRecord],
) -> Result<Vec<u8>, CaptureError> {
    if metadata.snap_len == 0 {
        return Err(CaptureError::ZeroSnapLength);
    }
    if metadata.packet_count != packets.len() as u64 {
        return Err(CaptureError::PacketCountMismatch {
            expected: metadata.packet_count,
            actual: packets.len(),
        });
    }
    for packet in packets {
        if packet.frame.len() > metadata.snap_len as usize {
            return Err(CaptureError::FrameExceedsSnapLen {
                packet_id: packet.packet_id,
                frame_len: packet.frame.len(),
                snap_len: metadata.snap_len,
            });
        }
    }

    let order = metadata.byte_order;
    let magic = match metadata.magic_variant {
        MagicVariant::Microsecond => MAGIC_MICROSECOND,
        MagicVariant::Nanosecond => MAGIC_NANOSECOND,
    };
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + packets.len() * (RECORD_HEADER_LEN + 64));
    push_u32(&mut out, magic, order);
    push_u16(&mut out, 2, order);
    push_u16(&mut out, 4, order);
    push_u32(&mut out, 0, order); // thiszone
    push_u32(&mut out, 0, order); // sigfigs
    push_u32(&mut out, metadata.snap_len, order);
    push_u32(&mut out, metadata.link_type, order);
    for packet in packets {
        let ts_sec = (packet.timestamp / 1_000_000) as u32;
        let micros = packet.timestamp % 1_000_000;
        let frac = match metadata.magic_variant {
            MagicVariant::Microsecond => micros as u32,
            MagicVariant::Nanosecond => (micros * 1_000) as u32,
        };
        push_u32(&mut out, ts_sec, order);
        push_u32(&mut out, frac, order);
        push_u32(&mut out, packet.frame.len() as u32, order);
        push_u32(&mut out, packet.original_length, order);
        out.extend_from_slice(&packet.frame);
    }
    Ok(out)
}

fn truncated(
    mut metadata: CaptureMetadata,
    offset: usize,
    reason: &str,
    packets: Vec<PacketRecord>,
) -> CaptureError {
    metadata.packet_count = packets.len() as u64;
    CaptureError::Truncated {
        offset,
        reason: reason.to_string(),
        partial: Box::new(ParsedCapture { metadata, packets }),
    }
}

fn read_u32(bytes: &[u8], offset: usize, order: ByteOrder) -> u32 {
    let raw: [u8; 4] = bytes[offset..offset + 4].try_into().unwrap();
    match order {
        ByteOrder::Big => u32::from_be_bytes(raw),
        ByteOrder::Little => u32::from_le_bytes(raw),
    }
}

fn push_u32(out: &mut Vec<u8>, value: u32, order: ByteOrder) {
    match order {
        ByteOrder::Big => out.extend_from_slice(&value.to_be_bytes()),
        ByteOrder::Little => out.extend_from_slice(&value.to_le_bytes()),
    }
}

fn push_u16(out: &mut Vec<u8>, value: u16, order: ByteOrder) {
    match order {
        ByteOrder::Big => out.extend_from_slice(&value.to_be_bytes()),
        ByteOrder::Little => out.extend_from_slice(&value.to_le_bytes()),
    }
}
