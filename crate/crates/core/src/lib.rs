//! Batch analysis library for triaging IDS detection misses.
//!
//! The pipeline correlates three inputs about the same traffic window: a raw
//! packet capture, a set of ground-truth flow labels, and one or more IDS
//! alert logs. Packets and alerts are mapped onto flows by exact 5-tuple
//! match within the flow's time interval (with a relaxed fallback when the
//! timestamp matches no interval), each flow is classified into a confusion
//! class, and per-scenario evidence reports are generated for the misses.

pub mod alert;
pub mod capture;
pub mod config;
pub mod correlate;
pub mod flow;
pub mod rootcause;
pub mod time;
pub mod tuple;
pub mod verdict;
pub mod workspace;

pub use alert::{AlertParseOutcome, AlertRecord, ParseReject, SignatureId};
pub use capture::{CaptureError, CaptureMetadata, DecodeStatus, PacketRecord, ParsedCapture};
pub use correlate::{Directionality, FlowIndex, MappingEntry, MappingMode, Subject, SubjectId};
pub use flow::{
    DuplicateReport, FlowId, FlowPredicate, FlowRecord, OverlayEntry, Tag, TagSource, TimeWindow,
    TuplePattern,
};
pub use rootcause::{DetectionDiff, PayloadProfile, Report, RootCauseReport};
pub use tuple::FiveTuple;
pub use verdict::{
    AttackCategory, AttackScenario, ConfusionSummary, FlowVerdict, SignaturePattern, VerdictClass,
};
