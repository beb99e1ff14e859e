//! Canonical data model for dynamic execution logs.
//!
//! A log is the ordered list of file-system events one process emitted
//! while it ran. Events are encoded into a ten-symbol alphabet: code 0
//! is padding, deletions/creations/renames get fixed codes, and content
//! changes are coded by the normalized Shannon entropy of the written
//! data. Every log is represented as exactly 3000 codes, zero-padded
//! toward the beginning, and can be segmented into four 784-code
//! pieces, each of which reshapes losslessly to a 28x28 grid.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed length of every encoded execution log.
pub const LOG_LEN: usize = 3000;
/// Length of one segment (28 * 28).
pub const SEGMENT_LEN: usize = 784;
/// Segments per log: ceil(3000 / 784).
pub const SEGMENTS_PER_LOG: usize = 4;
/// Trailing zeros in the last segment: 784 * 4 - 3000.
pub const SEGMENT_TAIL_PAD: usize = 136;
/// Side of the square a segment reshapes to.
pub const GRID: usize = 28;
/// Size of the code alphabet, padding included.
pub const ALPHABET: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum LogError {
    #[error("entropy computation requires a non-empty buffer")]
    EmptyBuffer,
    #[error("changed event carries no entropy")]
    MissingEntropy,
    #[error("entropy {0} outside [0,1]")]
    InvalidEntropy(f64),
    #[error("malformed log line {0}")]
    ParseError(usize),
    #[error("decreasing timestamp at line {0}")]
    TimeOrder(usize),
    #[error("need {need} segments, have {have}")]
    NotEnoughSegments { have: usize, need: usize },
    #[error("log has {0} codes, expected {LOG_LEN}")]
    BadLogLength(usize),
    #[error("code {0} outside the event alphabet")]
    BadCode(u64),
}

/// What happened to a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Deleted,
    Created,
    Renamed,
    Changed,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Deleted => "deleted",
            EventKind::Created => "created",
            EventKind::Renamed => "renamed",
            EventKind::Changed => "changed",
        }
    }
}

/// One observed file-system event.
///
/// `entropy` is present exactly when `kind` is [`EventKind::Changed`]
/// and holds the normalized entropy of the newly written content.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub timestamp_ms: u64,
    pub kind: EventKind,
    pub path: String,
    pub entropy: Option<f64>,
}

impl EventRecord {
    pub fn deleted(timestamp_ms: u64, path: impl Into<String>) -> Self {
        Self { timestamp_ms, kind: EventKind::Deleted, path: path.into(), entropy: None }
    }

    pub fn created(timestamp_ms: u64, path: impl Into<String>) -> Self {
        Self { timestamp_ms, kind: EventKind::Created, path: path.into(), entropy: None }
    }

    pub fn renamed(timestamp_ms: u64, path: impl Into<String>) -> Self {
        Self { timestamp_ms, kind: EventKind::Renamed, path: path.into(), entropy: None }
    }

    pub fn changed(timestamp_ms: u64, path: impl Into<String>, entropy: f64) -> Self {
        Self { timestamp_ms, kind: EventKind::Changed, path: path.into(), entropy: Some(entropy) }
    }
}

/// One symbol of the event alphabet. 0 is padding and is never
/// produced by encoding a real event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventCode(pub u8);

impl EventCode {
    pub const PAD: EventCode = EventCode(0);

    pub fn new(code: u8) -> Option<Self> {
        (code < ALPHABET as u8).then_some(Self(code))
    }

    pub fn is_pad(self) -> bool {
        self.0 == 0
    }
}

/// Class label carried by a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Benign = 0,
    Malicious = 1,
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Malicious),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// Where a log came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Generated,
    Replayed,
}

/// A fixed-length encoded execution log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub codes: Vec<EventCode>,
    pub label: Label,
    pub origin: Origin,
}

impl ExecutionLog {
    pub fn new(codes: Vec<EventCode>, label: Label, origin: Origin) -> Result<Self, LogError> {
        if codes.len() != LOG_LEN {
            return Err(LogError::BadLogLength(codes.len()));
        }
        Ok(Self { codes, label, origin })
    }

    /// Codes with the zero-padding prefix removed.
    pub fn non_padding(&self) -> &[EventCode] {
        let start = self.codes.iter().position(|c| !c.is_pad()).unwrap_or(self.codes.len());
        &self.codes[start..]
    }
}

/// Provenance of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Cut from a log; the index is the segment's position in it.
    FromLog(usize),
    Generated,
}

/// A 784-value slice of a log, or a generator output of the same
/// shape. Values are reals so raw generator output fits; they round to
/// alphabet codes on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub codes: Vec<f64>,
    pub provenance: Provenance,
}

impl Segment {
    pub fn new(codes: Vec<f64>, provenance: Provenance) -> Self {
        assert_eq!(codes.len(), SEGMENT_LEN, "segment must hold {SEGMENT_LEN} values");
        Self { codes, provenance }
    }

    /// Values rounded to the nearest code and clamped into the
    /// alphabet. Non-finite values clamp to padding.
    pub fn rounded_codes(&self) -> Vec<EventCode> {
        self.codes
            .iter()
            .map(|&v| {
                if !v.is_finite() {
                    EventCode::PAD
                } else {
                    EventCode(v.round().clamp(0.0, (ALPHABET - 1) as f64) as u8)
                }
            })
            .collect()
    }

    /// Fraction of values that round to a non-padding code.
    pub fn content_ratio(&self) -> f64 {
        let nonzero = self.rounded_codes().iter().filter(|c| !c.is_pad()).count();
        nonzero as f64 / SEGMENT_LEN as f64
    }
}

/// Train and test splits plus the seed that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub train: Vec<ExecutionLog>,
    pub test: Vec<ExecutionLog>,
    pub seed: u64,
}

/// Normalized byte-level Shannon entropy: H over the 256-symbol byte
/// alphabet, divided by 8 so the result lands in [0,1].
pub fn normalized_entropy(bytes: &[u8]) -> Result<f64, LogError> {
    if bytes.is_empty() {
        return Err(LogError::EmptyBuffer);
    }
    let mut counts = [0u64; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    let mut h = 0.0;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    Ok(h / 8.0)
}

/// Entropy bin for changed-content events. Bins are half-open with the
/// top bin closed, so every entropy in [0,1] lands in exactly one bin.
pub fn entropy_code(e: f64) -> Result<EventCode, LogError> {
    if !(0.0..=1.0).contains(&e) {
        return Err(LogError::InvalidEntropy(e));
    }
    let code = if e < 0.2 {
        4
    } else if e < 0.4 {
        3
    } else if e < 0.6 {
        8
    } else if e < 0.8 {
        9
    } else if e < 0.9 {
        6
    } else {
        2
    };
    Ok(EventCode(code))
}

/// Encode one event into its alphabet code.
pub fn encode_event(record: &EventRecord) -> Result<EventCode, LogError> {
    match record.kind {
        EventKind::Deleted => Ok(EventCode(1)),
        EventKind::Created => Ok(EventCode(5)),
        EventKind::Renamed => Ok(EventCode(7)),
        EventKind::Changed => entropy_code(record.entropy.ok_or(LogError::MissingEntropy)?),
    }
}

/// Parse a watcher log: one `timestamp_ms,kind,path[,entropy]` record
/// per non-empty line. The entropy field exists exactly on `changed`
/// lines; commas inside paths are tolerated because the path spans all
/// fields between the kind and the line end (or the entropy).
pub fn parse_fsw_log(text: &str) -> Result<Vec<EventRecord>, LogError> {
    let mut records = Vec::new();
    let mut prev_ts: Option<u64> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(LogError::ParseError(line_no));
        }
        let timestamp_ms: u64 = fields[0].parse().map_err(|_| LogError::ParseError(line_no))?;
        let kind = match fields[1] {
            "deleted" => EventKind::Deleted,
            "created" => EventKind::Created,
            "renamed" => EventKind::Renamed,
            "changed" => EventKind::Changed,
            _ => return Err(LogError::ParseError(line_no)),
        };
        let (path, entropy) = if kind == EventKind::Changed {
            if fields.len() < 4 {
                return Err(LogError::ParseError(line_no));
            }
            let e: f64 = fields[fields.len() - 1].parse().map_err(|_| LogError::ParseError(line_no))?;
            if !(0.0..=1.0).contains(&e) {
                return Err(LogError::ParseError(line_no));
            }
            (fields[2..fields.len() - 1].join(","), Some(e))
        } else {
            (fields[2..].join(","), None)
        };
        if let Some(prev) = prev_ts {
            if timestamp_ms < prev {
                return Err(LogError::TimeOrder(line_no));
            }
        }
        prev_ts = Some(timestamp_ms);
        records.push(EventRecord { timestamp_ms, kind, path, entropy });
    }
    Ok(records)
}

/// Serialize records back to the line format `parse_fsw_log` reads.
/// Paths must not contain newlines.
pub fn serialize_fsw_log(records: &[EventRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(out, "{},{},{}", r.timestamp_ms, r.kind.as_str(), r.path);
        if let Some(e) = r.entropy {
            let _ = write!(out, ",{e}");
        }
        out.push('\n');
    }
    out
}

/// Encode records into a fixed-length code sequence: zero-padded
/// toward the beginning when short, truncated to the first 3000 events
/// when long.
pub fn to_feature_sequence(records: &[EventRecord]) -> Result<Vec<EventCode>, LogError> {
    let take = records.len().min(LOG_LEN);
    let mut codes = Vec::with_capacity(LOG_LEN);
    codes.resize(LOG_LEN - take, EventCode::PAD);
    for r in &records[..take] {
        codes.push(encode_event(r)?);
    }
    Ok(codes)
}

/// Cut a log into 4 segments of 784 values; the last segment ends in
/// 136 zeros so the total is a whole number of 28x28 grids.
pub fn segment(log: &ExecutionLog) -> Vec<Segment> {
    let mut padded: Vec<f64> = log.codes.iter().map(|c| c.0 as f64).collect();
    padded.resize(SEGMENT_LEN * SEGMENTS_PER_LOG, 0.0);
    padded
        .chunks_exact(SEGMENT_LEN)
        .enumerate()
        .map(|(i, chunk)| Segment::new(chunk.to_vec(), Provenance::FromLog(i)))
        .collect()
}

/// Concatenate the first `count` segments into one log's codes:
/// values are rounded into the alphabet and the tail past 3000 codes
/// is dropped.
pub fn concat_segments(segments: &[Segment], count: usize) -> Result<Vec<EventCode>, LogError> {
    if segments.len() < count {
        return Err(LogError::NotEnoughSegments { have: segments.len(), need: count });
    }
    let mut codes: Vec<EventCode> = Vec::with_capacity(count * SEGMENT_LEN);
    for seg in &segments[..count] {
        codes.extend(seg.rounded_codes());
    }
    codes.resize(LOG_LEN, EventCode::PAD);
    Ok(codes)
}

/// Write logs as JSON Lines.
pub fn write_corpus_jsonl(logs: &[ExecutionLog]) -> String {
    let mut out = String::new();
    for log in logs {
        out.push_str(&serde_json::to_string(log).expect("log serializes"));
        out.push('\n');
    }
    out
}

/// Read logs from JSON Lines, validating lengths and code ranges.
pub fn read_corpus_jsonl(text: &str) -> Result<Vec<ExecutionLog>, LogError> {
    let mut logs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let log: ExecutionLog =
            serde_json::from_str(line).map_err(|_| LogError::ParseError(idx + 1))?;
        if log.codes.len() != LOG_LEN {
            return Err(LogError::BadLogLength(log.codes.len()));
        }
        if let Some(bad) = log.codes.iter().find(|c| c.0 >= ALPHABET as u8) {
            return Err(LogError::BadCode(bad.0 as u64));
        }
        logs.push(log);
    }
    Ok(logs)
}
