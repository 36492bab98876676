//! Privacy analyses over decoded paging traffic.
//!
//! Three questions, three tool families:
//!
//! * What does one capture contain? [`summarize`] and
//!   [`detect_imsi_exposure`].
//! * Is paging location-limited? [`correlate_cells`] compares two cells'
//!   streams for identities paged in both at the same time, and
//!   [`classify_smart_paging`] turns a neighbor-pair and a distant-pair
//!   comparison into a verdict.
//! * Does the network refresh temporary identities? [`verify_refresh`]
//!   over a subscriber event log.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::capture::{DecodedMessage, PersistenceEventLog, SubscriberEvent};
use crate::identifiers::Imsi;
use crate::pcch::UeIdentity;

pub const DEFAULT_WINDOW_SECONDS: f64 = 1.0;
pub const DEFAULT_ESCALATION_HORIZON_SECONDS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("stream {stream} is not timestamp-ordered at message index {index}")]
    UnorderedStream { stream: &'static str, index: usize },
}

/// Aggregate counts for one capture, in the vocabulary of per-operator
/// paging statistics.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PagingStats {
    /// Every decoded message, including notification-only ones.
    pub messages: usize,
    /// Messages carrying at least one paging record. Published per-operator
    /// tallies do not say whether notification-only messages are included,
    /// so both counts are kept.
    pub record_messages: usize,
    pub multi_record_messages: usize,
    /// multi_record_messages / messages, 0 when there are no messages.
    pub multi_record_ratio: f64,
    pub records: usize,
    pub stmsi_records: usize,
    pub imsi_records: usize,
    pub unique_stmsi: usize,
    pub sysinfo_messages: usize,
    pub etws_messages: usize,
}

/// Counts messages, records and identities in one pass.
pub fn summarize(decoded: &[DecodedMessage]) -> PagingStats {
    let mut stats = PagingStats {
        messages: decoded.len(),
        ..PagingStats::default()
    };
    let mut stmsi_seen = HashSet::new();
    for message in decoded {
        let n = message.message.records.len();
        if n > 0 {
            stats.record_messages += 1;
        }
        if n > 1 {
            stats.multi_record_messages += 1;
        }
        stats.records += n;
        if message.message.system_info_modification {
            stats.sysinfo_messages += 1;
        }
        if message.message.etws_indication {
            stats.etws_messages += 1;
        }
        for record in &message.message.records {
            match &record.ue_identity {
                UeIdentity::STmsi(s) => {
                    stats.stmsi_records += 1;
                    stmsi_seen.insert(*s);
                }
                UeIdentity::Imsi(_) => stats.imsi_records += 1,
            }
        }
    }
    stats.unique_stmsi = stmsi_seen.len();
    if stats.messages > 0 {
        stats.multi_record_ratio = stats.multi_record_messages as f64 / stats.messages as f64;
    }
    stats
}

/// A permanent identity caught on the paging channel: time, place, IMSI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImsiExposure {
    pub timestamp_ms: i64,
    pub cell_id: u32,
    pub imsi: Imsi,
}

/// Lists every IMSI-identified paging record. An empty result is the
/// compliant outcome: subscribers paged only by temporary identity.
pub fn detect_imsi_exposure(decoded: &[DecodedMessage]) -> Vec<ImsiExposure> {
    let mut out = Vec::new();
    for message in decoded {
        for record in &message.message.records {
            if let UeIdentity::Imsi(imsi) = &record.ue_identity {
                out.push(ImsiExposure {
                    timestamp_ms: message.timestamp.timestamp_millis(),
                    cell_id: message.cell_id,
                    imsi: imsi.clone(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamSide {
    A,
    B,
}

impl fmt::Display for StreamSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StreamSide::A => "a",
            StreamSide::B => "b",
        })
    }
}

/// One identity that was paged in one cell and, shortly after, in both:
/// the widening pattern of an unanswered location-limited page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EscalationDetail {
    pub identity: String,
    pub only_in: StreamSide,
    pub only_time_ms: i64,
    pub pair_time_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentityDetail {
    pub identity: String,
    pub a_records: usize,
    pub b_records: usize,
    pub matched_pairs: usize,
    pub escalations: usize,
    pub movements: usize,
}

/// Outcome of comparing two cells' record streams.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCellReport {
    pub window_seconds: f64,
    pub escalation_horizon_seconds: f64,
    /// Paging-record occurrences per stream (not messages).
    pub total_a: usize,
    pub total_b: usize,
    pub only_a: usize,
    pub only_b: usize,
    /// Matched record pairs with |tA - tB| within the window.
    pub both_simultaneous: usize,
    /// Distinct identities with at least one matched pair. Kept next to the
    /// pair count because a published "records in both cells" figure could
    /// mean either.
    pub both_identities: usize,
    pub escalations: usize,
    pub movements: usize,
    pub details: Vec<IdentityDetail>,
    pub escalation_details: Vec<EscalationDetail>,
}

impl CrossCellReport {
    /// Matched fraction of the smaller stream; 0 when a stream is empty.
    pub fn simultaneity_fraction(&self) -> f64 {
        let floor = self.total_a.min(self.total_b);
        if floor == 0 {
            0.0
        } else {
            self.both_simultaneous as f64 / floor as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationOptions {
    pub window_seconds: f64,
    pub escalation_horizon_seconds: f64,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        Self {
            window_seconds: DEFAULT_WINDOW_SECONDS,
            escalation_horizon_seconds: DEFAULT_ESCALATION_HORIZON_SECONDS,
        }
    }
}

/// (time, identity) per record, with the stream's ordering checked.
fn occurrences(
    stream: &'static str,
    decoded: &[DecodedMessage],
) -> Result<Vec<(i64, String)>, AnalysisError> {
    let mut out = Vec::new();
    let mut last = i64::MIN;
    for (index, message) in decoded.iter().enumerate() {
        let t = message.timestamp.timestamp_millis();
        if t < last {
            return Err(AnalysisError::UnorderedStream { stream, index });
        }
        last = t;
        for record in &message.message.records {
            out.push((t, record.ue_identity.canonical()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    // Variant order is the tiebreak for equal timestamps: a pair counts as
    // "already paged in both" before a same-instant single-cell sighting.
    Pair,
    OnlyA,
    OnlyB,
}

struct IdentityOutcome {
    matched_pairs: usize,
    only_a: usize,
    only_b: usize,
    escalations: Vec<(StreamSide, i64, i64)>,
    movements: usize,
}

/// Greedy nearest-timestamp one-to-one matching for one identity, then the
/// escalation/movement walk over the merged timeline.
fn correlate_identity(
    times_a: &[i64],
    times_b: &[i64],
    window_ms: i64,
    horizon_ms: i64,
) -> IdentityOutcome {
    // Candidate pairs within the window, nearest first. Ordering the ties
    // by (earlier time, later time, indexes) keeps the outcome invariant
    // under swapping the streams and under widening the window: a larger
    // window only appends candidates to this list.
    let mut candidates = Vec::new();
    for (i, &ta) in times_a.iter().enumerate() {
        let lo = times_b.partition_point(|&tb| tb < ta - window_ms);
        for (j, &tb) in times_b.iter().enumerate().skip(lo) {
            if tb > ta + window_ms {
                break;
            }
            candidates.push(((ta - tb).abs(), ta.min(tb), ta.max(tb), i, j));
        }
    }
    candidates.sort_unstable();

    let mut a_match: Vec<Option<usize>> = vec![None; times_a.len()];
    let mut b_match: Vec<Option<usize>> = vec![None; times_b.len()];
    let mut pairs = Vec::new();
    for (_, tmin, _, i, j) in candidates {
        if a_match[i].is_none() && b_match[j].is_none() {
            a_match[i] = Some(j);
            b_match[j] = Some(i);
            pairs.push(tmin);
        }
    }

    let mut events = Vec::new();
    for t in pairs {
        events.push((t, EventKind::Pair));
    }
    for (i, &t) in times_a.iter().enumerate() {
        if a_match[i].is_none() {
            events.push((t, EventKind::OnlyA));
        }
    }
    for (j, &t) in times_b.iter().enumerate() {
        if b_match[j].is_none() {
            events.push((t, EventKind::OnlyB));
        }
    }
    events.sort_unstable();

    let mut outcome = IdentityOutcome {
        matched_pairs: a_match.iter().filter(|m| m.is_some()).count(),
        only_a: a_match.iter().filter(|m| m.is_none()).count(),
        only_b: b_match.iter().filter(|m| m.is_none()).count(),
        escalations: Vec::new(),
        movements: 0,
    };

    // Escalation: a single-cell sighting answered by a later pair within
    // the horizon. Movement: two single-cell sightings on opposite sides
    // with no pair between them.
    let mut awaiting_pair: VecDeque<(i64, StreamSide)> = VecDeque::new();
    let mut last_only: Option<StreamSide> = None;
    for (t, kind) in events {
        match kind {
            EventKind::Pair => {
                while let Some(&(t0, side)) = awaiting_pair.front() {
                    if t0 + horizon_ms < t {
                        awaiting_pair.pop_front();
                    } else if t0 < t {
                        outcome.escalations.push((side, t0, t));
                        awaiting_pair.pop_front();
                    } else {
                        break;
                    }
                }
                last_only = None;
            }
            EventKind::OnlyA | EventKind::OnlyB => {
                let side = if kind == EventKind::OnlyA {
                    StreamSide::A
                } else {
                    StreamSide::B
                };
                if last_only.is_some_and(|prev| prev != side) {
                    outcome.movements += 1;
                }
                last_only = Some(side);
                awaiting_pair.push_back((t, side));
            }
        }
    }
    outcome
}

/// Compares two timestamp-ordered decoded streams, typically one cell each.
///
/// A record in one stream is simultaneous with a record for the same
/// identity in the other iff their timestamps differ by at most the window;
/// matching is one-to-one, nearest first, so a single record cannot be
/// counted against several re-pages.
pub fn correlate_cells(
    a: &[DecodedMessage],
    b: &[DecodedMessage],
    options: &CorrelationOptions,
) -> Result<CrossCellReport, AnalysisError> {
    let window_ms = (options.window_seconds * 1000.0).round() as i64;
    let horizon_ms = (options.escalation_horizon_seconds * 1000.0).round() as i64;
    let occ_a = occurrences("a", a)?;
    let occ_b = occurrences("b", b)?;

    let mut by_identity: BTreeMap<String, (Vec<i64>, Vec<i64>)> = BTreeMap::new();
    for (t, id) in &occ_a {
        by_identity.entry(id.clone()).or_default().0.push(*t);
    }
    for (t, id) in &occ_b {
        by_identity.entry(id.clone()).or_default().1.push(*t);
    }

    let mut report = CrossCellReport {
        window_seconds: options.window_seconds,
        escalation_horizon_seconds: options.escalation_horizon_seconds,
        total_a: occ_a.len(),
        total_b: occ_b.len(),
        only_a: 0,
        only_b: 0,
        both_simultaneous: 0,
        both_identities: 0,
        escalations: 0,
        movements: 0,
        details: Vec::new(),
        escalation_details: Vec::new(),
    };

    for (identity, (times_a, times_b)) in &by_identity {
        let outcome = correlate_identity(times_a, times_b, window_ms, horizon_ms);
        report.only_a += outcome.only_a;
        report.only_b += outcome.only_b;
        report.both_simultaneous += outcome.matched_pairs;
        if outcome.matched_pairs > 0 {
            report.both_identities += 1;
        }
        report.escalations += outcome.escalations.len();
        report.movements += outcome.movements;
        for (side, only_time_ms, pair_time_ms) in &outcome.escalations {
            report.escalation_details.push(EscalationDetail {
                identity: identity.clone(),
                only_in: *side,
                only_time_ms: *only_time_ms,
                pair_time_ms: *pair_time_ms,
            });
        }
        report.details.push(IdentityDetail {
            identity: identity.clone(),
            a_records: times_a.len(),
            b_records: times_b.len(),
            matched_pairs: outcome.matched_pairs,
            escalations: outcome.escalations.len(),
            movements: outcome.movements,
        });
    }
    report
        .escalation_details
        .sort_by(|x, y| (x.pair_time_ms, &x.identity).cmp(&(y.pair_time_ms, &y.identity)));
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmartPagingThresholds {
    /// Distant-pair simultaneity at or below this fraction reads as
    /// location-limited paging.
    pub low_fraction: f64,
    /// Both pairs at or above this fraction reads as TA-wide paging.
    pub high_fraction: f64,
    /// Minimum records per stream before either call is made.
    pub min_sample: usize,
}

impl Default for SmartPagingThresholds {
    fn default() -> Self {
        Self {
            low_fraction: 0.01,
            high_fraction: 0.90,
            min_sample: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    SmartPaging,
    TaWide,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::SmartPaging => "smart_paging",
            Verdict::TaWide => "ta_wide",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmartPagingVerdict {
    pub verdict: Verdict,
    pub thresholds: SmartPagingThresholds,
    pub neighbor_fraction: f64,
    pub distant_fraction: f64,
    pub neighbor: CrossCellReport,
    pub distant: CrossCellReport,
}

/// Decides between location-limited and TA-wide paging from two cell-pair
/// comparisons: one pair of overlapping neighbor cells (to prove the
/// receivers see shared traffic at all) and one pair of distant cells in
/// the same tracking area.
pub fn classify_smart_paging(
    neighbor: &CrossCellReport,
    distant: &CrossCellReport,
    thresholds: &SmartPagingThresholds,
) -> SmartPagingVerdict {
    let neighbor_fraction = neighbor.simultaneity_fraction();
    let distant_fraction = distant.simultaneity_fraction();
    let distant_sampled = distant.total_a.min(distant.total_b) >= thresholds.min_sample;
    let neighbor_sampled = neighbor.total_a.min(neighbor.total_b) >= thresholds.min_sample;

    let verdict = if distant_sampled && distant_fraction <= thresholds.low_fraction {
        Verdict::SmartPaging
    } else if distant_sampled
        && neighbor_sampled
        && neighbor_fraction >= thresholds.high_fraction
        && distant_fraction >= thresholds.high_fraction
    {
        Verdict::TaWide
    } else {
        Verdict::Inconclusive
    };
    SmartPagingVerdict {
        verdict,
        thresholds: *thresholds,
        neighbor_fraction,
        distant_fraction,
        neighbor: neighbor.clone(),
        distant: distant.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RefreshVerdict {
    Yes,
    No,
    Uncertain,
}

impl fmt::Display for RefreshVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefreshVerdict::Yes => "Yes",
            RefreshVerdict::No => "No",
            RefreshVerdict::Uncertain => "Uncertain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefreshRow {
    pub event: SubscriberEvent,
    pub verdict: RefreshVerdict,
    pub changed: usize,
    pub unchanged: usize,
    /// Smallest elapsed time over observations where the M-TMSI changed.
    pub fastest_change_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefreshTable {
    pub periodic_horizon_hours: f64,
    pub rows: Vec<RefreshRow>,
}

impl RefreshTable {
    pub fn verdict_for(&self, event: SubscriberEvent) -> RefreshVerdict {
        self.rows
            .iter()
            .find(|row| row.event == event)
            .map(|row| row.verdict)
            .expect("table always holds every event type")
    }
}

/// Per event type: Yes when every observation changed the M-TMSI, No when
/// none did, Uncertain on conflict or no data.
///
/// Periodic TAU is held to a different standard because "did not change"
/// is censored, not negative, evidence there: it reads Yes only when a
/// change was observed within the horizon, and never reads No.
pub fn verify_refresh(log: &PersistenceEventLog, periodic_horizon_hours: f64) -> RefreshTable {
    let mut changed: HashMap<SubscriberEvent, usize> = HashMap::new();
    let mut unchanged: HashMap<SubscriberEvent, usize> = HashMap::new();
    let mut fastest: HashMap<SubscriberEvent, f64> = HashMap::new();
    for entry in log {
        if entry.changed() {
            *changed.entry(entry.event).or_default() += 1;
            let best = fastest.entry(entry.event).or_insert(f64::INFINITY);
            *best = best.min(entry.elapsed_hours);
        } else {
            *unchanged.entry(entry.event).or_default() += 1;
        }
    }

    let rows = SubscriberEvent::ALL
        .into_iter()
        .map(|event| {
            let changed = changed.get(&event).copied().unwrap_or(0);
            let unchanged = unchanged.get(&event).copied().unwrap_or(0);
            let fastest_change_hours = fastest.get(&event).copied();
            let verdict = if event == SubscriberEvent::PeriodicTau {
                match fastest_change_hours {
                    Some(h) if h <= periodic_horizon_hours => RefreshVerdict::Yes,
                    _ => RefreshVerdict::Uncertain,
                }
            } else {
                match (changed, unchanged) {
                    (0, 0) => RefreshVerdict::Uncertain,
                    (_, 0) => RefreshVerdict::Yes,
                    (0, _) => RefreshVerdict::No,
                    _ => RefreshVerdict::Uncertain,
                }
            };
            RefreshRow {
                event,
                verdict,
                changed,
                unchanged,
                fastest_change_hours,
            }
        })
        .collect();
    RefreshTable {
        periodic_horizon_hours,
        rows,
    }
}

fn push_row(out: &mut String, width: usize, label: &str, value: &str) {
    out.push_str(&format!("{label:<width$}  {value}\n"));
}

/// Aligned two-column table of capture statistics.
pub fn render_stats_table(stats: &PagingStats) -> String {
    let rows: Vec<(&str, String)> = vec![
        ("Number of paging messages", stats.messages.to_string()),
        (
            "Number of paging messages with records",
            stats.record_messages.to_string(),
        ),
        (
            "Number of multiple paging records messages",
            stats.multi_record_messages.to_string(),
        ),
        (
            "Share of multiple-record messages",
            format!("{:.2}%", stats.multi_record_ratio * 100.0),
        ),
        ("Number of paging records", stats.records.to_string()),
        (
            "Number of paging records with M-TMSIs",
            stats.stmsi_records.to_string(),
        ),
        (
            "Number of paging records with IMSIs",
            stats.imsi_records.to_string(),
        ),
        ("Unique S-TMSIs", stats.unique_stmsi.to_string()),
        (
            "systemInfoModification messages",
            stats.sysinfo_messages.to_string(),
        ),
        ("etws-Indication messages", stats.etws_messages.to_string()),
    ];
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (label, value) in rows {
        push_row(&mut out, width, label, &value);
    }
    out
}

/// Aligned table of a two-cell comparison.
pub fn render_cross_cell_table(report: &CrossCellReport) -> String {
    let rows: Vec<(&str, String)> = vec![
        ("Number of paging records in cell A", report.total_a.to_string()),
        ("Number of paging records in cell B", report.total_b.to_string()),
        (
            "Number of paging records in both cells at the same time",
            report.both_simultaneous.to_string(),
        ),
        (
            "Identities paged in both cells at the same time",
            report.both_identities.to_string(),
        ),
        ("Records only in cell A", report.only_a.to_string()),
        ("Records only in cell B", report.only_b.to_string()),
        (
            "Escalations (one cell, then both)",
            report.escalations.to_string(),
        ),
        (
            "Movements (one cell, then the other)",
            report.movements.to_string(),
        ),
        (
            "Simultaneity window (seconds)",
            format!("{}", report.window_seconds),
        ),
    ];
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (label, value) in rows {
        push_row(&mut out, width, label, &value);
    }
    out
}

pub fn render_verdict(verdict: &SmartPagingVerdict) -> String {
    let mut out = String::new();
    out.push_str(&format!("Verdict: {}\n", verdict.verdict));
    out.push_str(&format!(
        "Neighbor cells simultaneity: {} of {}/{} records ({:.2}%)\n",
        verdict.neighbor.both_simultaneous,
        verdict.neighbor.total_a,
        verdict.neighbor.total_b,
        verdict.neighbor_fraction * 100.0
    ));
    out.push_str(&format!(
        "Distant cells simultaneity:  {} of {}/{} records ({:.2}%)\n",
        verdict.distant.both_simultaneous,
        verdict.distant.total_a,
        verdict.distant.total_b,
        verdict.distant_fraction * 100.0
    ));
    out
}

/// Renders the refresh table in the Event / M-TMSI refreshed layout.
pub fn render_refresh_table(table: &RefreshTable) -> String {
    let width = SubscriberEvent::ALL
        .iter()
        .map(|e| e.label().len())
        .max()
        .unwrap_or(0)
        .max("Event".len());
    let mut out = String::new();
    push_row(&mut out, width, "Event", "M-TMSI refreshed");
    for row in &table.rows {
        let mut value = row.verdict.to_string();
        if row.event == SubscriberEvent::PeriodicTau {
            match (row.verdict, row.fastest_change_hours) {
                (RefreshVerdict::Yes, Some(h)) => {
                    value.push_str(&format!(" (refresh in less than {h} hours)"));
                }
                (RefreshVerdict::Uncertain, _) if row.unchanged > 0 => {
                    value.push_str(&format!(
                        " (no refresh in {} hours)",
                        table.periodic_horizon_hours
                    ));
                }
                _ => {}
            }
        }
        push_row(&mut out, width, row.event.label(), &value);
    }
    out
}
