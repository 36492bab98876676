//! Capture files and subscriber event logs.
//!
//! A capture file is line-oriented text: `#`-prefixed header lines carrying
//! `key: value` metadata, then one record per line with tab-separated
//! fields `timestamp <tab> cell_id <tab> freq_hz <tab> hex-payload`. The
//! frequency column holds `-` when unknown. Timestamps are UTC with
//! millisecond precision. The format is diff-able on purpose: a capture
//! tool only has to print one line per paging message it hears.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use thiserror::Error;

use crate::pcch::{self, decode_pcch, PagingMessage, PcchError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaptureError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: timestamp goes backwards")]
    TimestampRegression { line: usize },
    #[error("line {line}: {source}")]
    BadHex {
        line: usize,
        source: pcch::BadHex,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub timestamp: DateTime<Utc>,
    pub cell_id: u32,
    pub freq_hz: Option<u64>,
    pub payload: Vec<u8>,
}

/// A line lenient parsing gave up on, and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CaptureFile {
    /// `key: value` header pairs in file order.
    pub header: Vec<(String, String)>,
    pub records: Vec<CaptureRecord>,
    pub skipped: Vec<SkippedLine>,
}

impl CaptureFile {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

/// Truncates to whole milliseconds so every timestamp the toolkit compares
/// has the same precision as the serialized form.
fn to_millis(ts: DateTime<Utc>) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ts.timestamp_millis())
        .single()
        .expect("millisecond timestamp in range")
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn parse_record_line(line_no: usize, line: &str) -> Result<CaptureRecord, CaptureError> {
    let malformed = |reason: String| CaptureError::MalformedLine {
        line: line_no,
        reason,
    };
    let mut fields = line.split('\t');
    let mut next = |name: &str| {
        fields
            .next()
            .ok_or_else(|| malformed(format!("missing {name} field")))
    };
    let timestamp_text = next("timestamp")?;
    let cell_text = next("cell_id")?;
    let freq_text = next("freq_hz")?;
    let hex_text = next("payload")?;
    if fields.next().is_some() {
        return Err(malformed("more than 4 tab-separated fields".to_string()));
    }

    let timestamp = DateTime::parse_from_rfc3339(timestamp_text)
        .map_err(|e| malformed(format!("bad timestamp {timestamp_text:?}: {e}")))?
        .with_timezone(&Utc);
    let cell_id: u32 = cell_text
        .parse()
        .map_err(|e| malformed(format!("bad cell_id {cell_text:?}: {e}")))?;
    let freq_hz = if freq_text == "-" {
        None
    } else {
        Some(
            freq_text
                .parse()
                .map_err(|e| malformed(format!("bad freq_hz {freq_text:?}: {e}")))?,
        )
    };
    let payload = pcch::parse_hex(hex_text).map_err(|source| CaptureError::BadHex {
        line: line_no,
        source,
    })?;
    if payload.is_empty() {
        return Err(malformed("empty payload".to_string()));
    }
    Ok(CaptureRecord {
        timestamp: to_millis(timestamp),
        cell_id,
        freq_hz,
        payload,
    })
}

/// Parses capture text. Strict mode fails on the first malformed line or
/// timestamp regression; lenient mode records both as skipped lines and
/// keeps going.
pub fn parse_capture(source: &str, mode: ParseMode) -> Result<CaptureFile, CaptureError> {
    let mut file = CaptureFile::default();
    let mut last_ts: Option<DateTime<Utc>> = None;
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                file.header
                    .push((key.trim().to_string(), value.trim().to_string()));
            }
            continue;
        }
        match parse_record_line(line_no, line) {
            Ok(record) => {
                if last_ts.is_some_and(|prev| record.timestamp < prev) {
                    match mode {
                        ParseMode::Strict => {
                            return Err(CaptureError::TimestampRegression { line: line_no })
                        }
                        ParseMode::Lenient => {
                            file.skipped.push(SkippedLine {
                                line: line_no,
                                reason: "timestamp goes backwards".to_string(),
                            });
                            continue;
                        }
                    }
                }
                last_ts = Some(record.timestamp);
                file.records.push(record);
            }
            Err(err) => match mode {
                ParseMode::Strict => return Err(err),
                ParseMode::Lenient => file.skipped.push(SkippedLine {
                    line: line_no,
                    reason: err.to_string(),
                }),
            },
        }
    }
    Ok(file)
}

/// Canonical text form: serialize then parse is lossless, and parsing a
/// canonical file then serializing reproduces it byte for byte.
pub fn serialize_capture(file: &CaptureFile) -> String {
    let mut out = String::new();
    for (key, value) in &file.header {
        out.push_str(&format!("# {key}: {value}\n"));
    }
    for record in &file.records {
        let freq = record
            .freq_hz
            .map_or_else(|| "-".to_string(), |f| f.to_string());
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            format_timestamp(record.timestamp),
            record.cell_id,
            freq,
            pcch::format_hex(&record.payload)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedMessage {
    pub timestamp: DateTime<Utc>,
    pub cell_id: u32,
    pub message: PagingMessage,
}

/// One record that failed to decode; the index points into
/// `CaptureFile::records`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeFailure {
    pub record_index: usize,
    pub error: PcchError,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodedCapture {
    pub messages: Vec<DecodedMessage>,
    pub failures: Vec<DecodeFailure>,
}

/// Decodes every record of a parsed capture. Decode failures are data, not
/// reasons to abort: each is tallied with its record index and the batch
/// continues.
pub fn decode_capture(file: &CaptureFile) -> DecodedCapture {
    let mut out = DecodedCapture::default();
    for (record_index, record) in file.records.iter().enumerate() {
        match decode_pcch(&record.payload) {
            Ok((message, _)) => out.messages.push(DecodedMessage {
                timestamp: record.timestamp,
                cell_id: record.cell_id,
                message,
            }),
            Err(error) => out.failures.push(DecodeFailure {
                record_index,
                error,
            }),
        }
    }
    out
}

/// Events that may force the network to reallocate a subscriber's M-TMSI.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum SubscriberEvent {
    PowerCycle,
    FlightMode,
    MoCall,
    MtCall,
    MoSms,
    MtSms,
    MoData,
    MtData,
    TaChange,
    PeriodicTau,
}

impl SubscriberEvent {
    pub const ALL: [SubscriberEvent; 10] = [
        SubscriberEvent::PowerCycle,
        SubscriberEvent::FlightMode,
        SubscriberEvent::MoCall,
        SubscriberEvent::MtCall,
        SubscriberEvent::MoSms,
        SubscriberEvent::MtSms,
        SubscriberEvent::MoData,
        SubscriberEvent::MtData,
        SubscriberEvent::TaChange,
        SubscriberEvent::PeriodicTau,
    ];

    /// Stable machine token used in event-log CSV.
    pub fn key(self) -> &'static str {
        match self {
            SubscriberEvent::PowerCycle => "power_cycle",
            SubscriberEvent::FlightMode => "flight_mode",
            SubscriberEvent::MoCall => "mo_call",
            SubscriberEvent::MtCall => "mt_call",
            SubscriberEvent::MoSms => "mo_sms",
            SubscriberEvent::MtSms => "mt_sms",
            SubscriberEvent::MoData => "mo_data",
            SubscriberEvent::MtData => "mt_data",
            SubscriberEvent::TaChange => "ta_change",
            SubscriberEvent::PeriodicTau => "periodic_tau",
        }
    }

    /// Human wording used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            SubscriberEvent::PowerCycle => "Mobile device switched off/on",
            SubscriberEvent::FlightMode => "Mobile flight mode on/off",
            SubscriberEvent::MoCall => "Mobile originating voice call",
            SubscriberEvent::MtCall => "Mobile terminating voice call",
            SubscriberEvent::MoSms => "Mobile originating short message",
            SubscriberEvent::MtSms => "Mobile terminating short message",
            SubscriberEvent::MoData => "Mobile originating data",
            SubscriberEvent::MtData => "Mobile terminating data",
            SubscriberEvent::TaChange => "TA change",
            SubscriberEvent::PeriodicTau => "Periodic TAU",
        }
    }
}

impl fmt::Display for SubscriberEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SubscriberEvent {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubscriberEvent::ALL
            .into_iter()
            .find(|e| e.key() == s)
            .ok_or(())
    }
}

/// One before/after M-TMSI observation around a subscriber event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceEvent {
    pub event: SubscriberEvent,
    pub m_tmsi_before: u32,
    pub m_tmsi_after: u32,
    pub elapsed_hours: f64,
}

impl PersistenceEvent {
    pub fn changed(&self) -> bool {
        self.m_tmsi_before != self.m_tmsi_after
    }
}

pub type PersistenceEventLog = Vec<PersistenceEvent>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventLogError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unknown event {name:?}")]
    UnknownEvent { line: usize, name: String },
}

pub const EVENT_LOG_HEADER: &str = "event,m_tmsi_before,m_tmsi_after,elapsed_hours";

/// Parses an event-log CSV. The exact header line above is required; M-TMSI
/// columns are 8 hex digits.
pub fn parse_event_log(source: &str) -> Result<PersistenceEventLog, EventLogError> {
    let mut lines = source.lines().enumerate();
    let (_, header) = lines.next().ok_or(EventLogError::MalformedLine {
        line: 1,
        reason: "empty input, expected header".to_string(),
    })?;
    if header.trim_end_matches('\r') != EVENT_LOG_HEADER {
        return Err(EventLogError::MalformedLine {
            line: 1,
            reason: format!("expected header {EVENT_LOG_HEADER:?}"),
        });
    }
    let mut log = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| EventLogError::MalformedLine {
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        let [event_text, before_text, after_text, elapsed_text] = fields[..] else {
            return Err(malformed(format!("{} fields, expected 4", fields.len())));
        };
        let event: SubscriberEvent =
            event_text
                .parse()
                .map_err(|()| EventLogError::UnknownEvent {
                    line: line_no,
                    name: event_text.to_string(),
                })?;
        let parse_tmsi = |text: &str| -> Result<u32, EventLogError> {
            if text.len() != 8 {
                return Err(malformed(format!("m-tmsi {text:?} is not 8 hex digits")));
            }
            u32::from_str_radix(text, 16).map_err(|e| malformed(format!("m-tmsi {text:?}: {e}")))
        };
        let elapsed_hours: f64 = elapsed_text
            .parse()
            .map_err(|e| malformed(format!("bad elapsed_hours {elapsed_text:?}: {e}")))?;
        if !elapsed_hours.is_finite() || elapsed_hours < 0.0 {
            return Err(malformed(format!(
                "elapsed_hours {elapsed_hours} is not a non-negative duration"
            )));
        }
        log.push(PersistenceEvent {
            event,
            m_tmsi_before: parse_tmsi(before_text)?,
            m_tmsi_after: parse_tmsi(after_text)?,
            elapsed_hours,
        });
    }
    Ok(log)
}

pub fn serialize_event_log(log: &PersistenceEventLog) -> String {
    let mut out = String::from(EVENT_LOG_HEADER);
    out.push('\n');
    for entry in log {
        out.push_str(&format!(
            "{},{:08X},{:08X},{}\n",
            entry.event.key(),
            entry.m_tmsi_before,
            entry.m_tmsi_after,
            entry.elapsed_hours
        ));
    }
    out
}
