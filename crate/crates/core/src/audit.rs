//! Append-only, hash-chained decision log.
//!
//! # Line format
//!
//! One entry per line, ten fields separated by `|`:
//!
//! ```text
//! seq|ts|actor|action|resource|decision|reason|override|prev_hash|entry_hash
//! ```
//!
//! * `seq`: decimal, starting at 1, no leading zeros.
//! * `ts`: RFC 3339 UTC with second precision and a `Z` suffix,
//!   e.g. `2024-05-01T12:00:00Z`.
//! * `actor`, `resource`, `reason`: UTF-8 text where `%`, `|` and every
//!   byte below 0x20 or equal to 0x7f is written as `%XX` (uppercase hex).
//!   An absent resource is the empty string.
//! * `action`: one of `Upload Download Override Grant Revoke Rotate PolicyChange AuthFail`.
//! * `decision`: `Allow` or `Deny`.
//! * `override`: `1` or `0`.
//! * `prev_hash`, `entry_hash`: 64 lowercase hex characters. `prev_hash` of
//!   entry 1 is 64 zeros.
//!
//! The canonical encoding of an entry is the line up to and including
//! `prev_hash` (nine fields, no trailing separator or newline), and
//! `entry_hash = SHA-256(canonical encoding)`.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrity::sha256;
use crate::policy::{Timestamp, UserId};

pub const ZERO_HASH: [u8; 32] = [0u8; 32];

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit log I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed audit record at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("audit chain broken at seq {0}")]
    ChainBroken(u64),
    #[error("override flag set on a {0} entry")]
    OverrideFlagMisuse(AuditAction),
    #[error("stale audit entry: expected seq {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuditAction {
    Upload,
    Download,
    Override,
    Grant,
    Revoke,
    Rotate,
    PolicyChange,
    AuthFail,
}

impl AuditAction {
    pub const ALL: [AuditAction; 8] = [
        AuditAction::Upload,
        AuditAction::Download,
        AuditAction::Override,
        AuditAction::Grant,
        AuditAction::Revoke,
        AuditAction::Rotate,
        AuditAction::PolicyChange,
        AuditAction::AuthFail,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuditAction::Upload => "Upload",
            AuditAction::Download => "Download",
            AuditAction::Override => "Override",
            AuditAction::Grant => "Grant",
            AuditAction::Revoke => "Revoke",
            AuditAction::Rotate => "Rotate",
            AuditAction::PolicyChange => "PolicyChange",
            AuditAction::AuthFail => "AuthFail",
        }
    }
}

impl fmt::Display for AuditAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AuditAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown audit action {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuditDecision {
    Allow,
    Deny,
}

impl AuditDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditDecision::Allow => "Allow",
            AuditDecision::Deny => "Deny",
        }
    }
}

impl fmt::Display for AuditDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AuditDecision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "allow" => Ok(AuditDecision::Allow),
            "deny" => Ok(AuditDecision::Deny),
            _ => Err(format!("unknown decision {s:?}")),
        }
    }
}

/// The caller-supplied part of an entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub ts: Timestamp,
    pub actor: UserId,
    pub action: AuditAction,
    pub resource: Option<String>,
    pub decision: AuditDecision,
    pub reason: String,
    pub override_flag: bool,
}

impl AuditRecord {
    pub fn new(
        ts: Timestamp,
        actor: &UserId,
        action: AuditAction,
        resource: Option<&str>,
        decision: AuditDecision,
        reason: impl Into<String>,
    ) -> Self {
        Self {
            ts,
            actor: actor.clone(),
            action,
            resource: resource.map(str::to_owned),
            decision,
            reason: reason.into(),
            override_flag: false,
        }
    }

    pub fn with_override(mut self) -> Self {
        self.override_flag = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub ts: Timestamp,
    pub actor: UserId,
    pub action: AuditAction,
    pub resource: Option<String>,
    pub decision: AuditDecision,
    pub reason: String,
    pub override_flag: bool,
    #[serde(with = "hex::serde")]
    pub prev_hash: [u8; 32],
    #[serde(with = "hex::serde")]
    pub entry_hash: [u8; 32],
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '%' | '|' => out.push_str(&format!("%{:02X}", ch as u32)),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                out.push_str(&format!("%{:02X}", c as u32))
            }
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3).ok_or("truncated escape")?;
            out.push(u8::from_str_radix(hex, 16).map_err(|_| "bad escape")?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| "invalid UTF-8".to_owned())
}

pub fn format_ts(ts: Timestamp) -> String {
    i64::try_from(ts)
        .ok()
        .and_then(|s| DateTime::<Utc>::from_timestamp(s, 0))
        .unwrap_or(DateTime::<Utc>::MAX_UTC)
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_ts(s: &str) -> Result<Timestamp, String> {
    let dt = DateTime::parse_from_rfc3339(s).map_err(|e| e.to_string())?;
    u64::try_from(dt.timestamp()).map_err(|_| "timestamp before epoch".to_owned())
}

impl AuditEntry {
    /// Bytes covered by `entry_hash`.
    pub fn canonical_encoding(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{}|{}",
            self.seq,
            format_ts(self.ts),
            escape(self.actor.as_str()),
            self.action,
            escape(self.resource.as_deref().unwrap_or("")),
            self.decision,
            escape(&self.reason),
            if self.override_flag { 1 } else { 0 },
            hex::encode(self.prev_hash),
        )
    }

    pub fn compute_hash(&self) -> [u8; 32] {
        sha256(self.canonical_encoding().as_bytes())
    }

    pub fn to_line(&self) -> String {
        format!(
            "{}|{}",
            self.canonical_encoding(),
            hex::encode(self.entry_hash)
        )
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 10 {
            return Err(format!("expected 10 fields, found {}", fields.len()));
        }
        let hash = |s: &str| -> Result<[u8; 32], String> {
            let mut out = [0u8; 32];
            hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
            Ok(out)
        };
        let resource = unescape(fields[4])?;
        Ok(Self {
            seq: fields[0].parse().map_err(|_| "bad seq")?,
            ts: parse_ts(fields[1])?,
            actor: UserId::new(unescape(fields[2])?),
            action: fields[3].parse()?,
            resource: (!resource.is_empty()).then_some(resource),
            decision: fields[5].parse()?,
            reason: unescape(fields[6])?,
            override_flag: match fields[7] {
                "1" => true,
                "0" => false,
                other => return Err(format!("bad override flag {other:?}")),
            },
            prev_hash: hash(fields[8])?,
            entry_hash: hash(fields[9])?,
        })
    }
}

/// Chain position persisted alongside the private-state document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditHead {
    pub seq: u64,
    #[serde(with = "hex::serde")]
    pub hash: [u8; 32],
}

impl Default for AuditHead {
    fn default() -> Self {
        Self {
            seq: 0,
            hash: ZERO_HASH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChainVerification {
    pub valid: bool,
    pub entries: usize,
    pub first_bad_seq: Option<u64>,
}

/// Checks seq contiguity, prev-hash linkage, and every entry hash. The first
/// bad seq is the position (1-based) where the log stops being a valid chain.
pub fn verify_chain(entries: &[AuditEntry]) -> ChainVerification {
    let mut prev = ZERO_HASH;
    for (i, e) in entries.iter().enumerate() {
        let expected_seq = i as u64 + 1;
        let ok = e.seq == expected_seq
            && e.prev_hash == prev
            && e.compute_hash() == e.entry_hash
            && (!e.override_flag || e.action == AuditAction::Override);
        if !ok {
            return ChainVerification {
                valid: false,
                entries: entries.len(),
                first_bad_seq: Some(expected_seq),
            };
        }
        prev = e.entry_hash;
    }
    ChainVerification {
        valid: true,
        entries: entries.len(),
        first_bad_seq: None,
    }
}

pub fn parse_log(reader: impl BufRead) -> Result<Vec<AuditEntry>, AuditError> {
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let entry = AuditEntry::parse_line(&line)
            .map_err(|msg| AuditError::Format { line: idx + 1, msg })?;
        entries.push(entry);
    }
    Ok(entries)
}

pub fn verify_file(path: &Path) -> Result<ChainVerification, AuditError> {
    let entries = parse_log(BufReader::new(File::open(path)?))?;
    Ok(verify_chain(&entries))
}

/// Durable destination for encoded lines.
pub trait AuditSink: Send {
    /// Must not return until the line is durable.
    fn append_line(&mut self, line: &str) -> std::io::Result<()>;
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub lines: Vec<String>,
}

impl AuditSink for MemorySink {
    fn append_line(&mut self, line: &str) -> std::io::Result<()> {
        self.lines.push(line.to_owned());
        Ok(())
    }
}

pub struct FileSink {
    file: File,
    path: PathBuf,
}

impl FileSink {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl AuditSink for FileSink {
    fn append_line(&mut self, line: &str) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        self.file.write_all(&buf)?;
        self.file.sync_data()
    }
}

#[derive(Debug, Clone, Default)]
pub struct AuditFilter {
    pub actor: Option<UserId>,
    pub action: Option<AuditAction>,
    pub decision: Option<AuditDecision>,
    /// Inclusive lower bound.
    pub since: Option<Timestamp>,
    /// Inclusive upper bound.
    pub until: Option<Timestamp>,
}

impl AuditFilter {
    pub fn matches(&self, e: &AuditEntry) -> bool {
        self.actor.as_ref().is_none_or(|a| a == &e.actor)
            && self.action.is_none_or(|a| a == e.action)
            && self.decision.is_none_or(|d| d == e.decision)
            && self.since.is_none_or(|t| e.ts >= t)
            && self.until.is_none_or(|t| e.ts <= t)
    }
}

pub struct AuditLog {
    entries: Vec<AuditEntry>,
    sink: Box<dyn AuditSink>,
}

impl fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuditLog")
            .field("entries", &self.entries.len())
            .finish_non_exhaustive()
    }
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::with_sink(Vec::new(), Box::new(MemorySink::default())).expect("empty chain is valid")
    }

    /// Loads an existing log (if any) and appends to it. Refuses a broken chain.
    pub fn open_file(path: &Path) -> Result<Self, AuditError> {
        let entries = match File::open(path) {
            Ok(f) => parse_log(BufReader::new(f))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        Self::with_sink(entries, Box::new(FileSink::open(path)?))
    }

    pub fn with_sink(
        entries: Vec<AuditEntry>,
        sink: Box<dyn AuditSink>,
    ) -> Result<Self, AuditError> {
        let check = verify_chain(&entries);
        if let Some(seq) = check.first_bad_seq {
            return Err(AuditError::ChainBroken(seq));
        }
        Ok(Self { entries, sink })
    }

    pub fn replace_sink(&mut self, sink: Box<dyn AuditSink>) -> Box<dyn AuditSink> {
        std::mem::replace(&mut self.sink, sink)
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> AuditHead {
        self.entries
            .last()
            .map(|e| AuditHead {
                seq: e.seq,
                hash: e.entry_hash,
            })
            .unwrap_or_default()
    }

    /// Builds the next entry without writing it.
    pub fn prepare(&self, record: AuditRecord) -> Result<AuditEntry, AuditError> {
        if record.override_flag && record.action != AuditAction::Override {
            return Err(AuditError::OverrideFlagMisuse(record.action));
        }
        let head = self.head();
        let mut entry = AuditEntry {
            seq: head.seq + 1,
            ts: record.ts,
            actor: record.actor,
            action: record.action,
            // the line format cannot tell an empty resource from none
            resource: record.resource.filter(|r| !r.is_empty()),
            decision: record.decision,
            reason: record.reason,
            override_flag: record.override_flag,
            prev_hash: head.hash,
            entry_hash: ZERO_HASH,
        };
        entry.entry_hash = entry.compute_hash();
        Ok(entry)
    }

    /// Durably writes a prepared entry. Nothing changes if the sink fails.
    pub fn commit(&mut self, entry: AuditEntry) -> Result<AuditEntry, AuditError> {
        let head = self.head();
        if entry.seq != head.seq + 1 || entry.prev_hash != head.hash {
            return Err(AuditError::OutOfOrder {
                expected: head.seq + 1,
                got: entry.seq,
            });
        }
        self.sink.append_line(&entry.to_line())?;
        self.entries.push(entry.clone());
        Ok(entry)
    }

    pub fn append(&mut self, record: AuditRecord) -> Result<AuditEntry, AuditError> {
        let entry = self.prepare(record)?;
        self.commit(entry)
    }

    pub fn verify(&self) -> ChainVerification {
        verify_chain(&self.entries)
    }

    /// Matching entries in seq order; with a limit, only the most recent `limit`.
    pub fn query(&self, filter: &AuditFilter, limit: Option<usize>) -> Vec<AuditEntry> {
        let mut hits: Vec<&AuditEntry> = self
            .entries
            .iter()
            .rev()
            .filter(|e| filter.matches(e))
            .take(limit.unwrap_or(usize::MAX))
            .collect();
        hits.reverse();
        hits.into_iter().cloned().collect()
    }
}
