//! Deterministic synthetic paging traffic with ground truth.
//!
//! A miniature MME drives configurable cells: subscribers camp on cells,
//! get paged by a memoryless arrival process, sometimes ignore a
//! location-limited page so it escalates to the whole tracking area, move
//! between cells, and have their M-TMSI reallocated on schedule. The
//! generator emits ordinary capture files plus a sidecar recording exactly
//! what happened, so every analysis in this crate can be checked against
//! a known answer instead of against itself.
//!
//! Everything is a pure function of the configuration (seed included):
//! the same scenario always produces byte-identical captures.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{
    CaptureFile, CaptureRecord, PersistenceEvent, PersistenceEventLog, SubscriberEvent,
};
use crate::identifiers::{Imsi, STmsi};
use crate::pcch::{encode_pcch, CnDomain, PagingMessage, PagingRecord, UeIdentity};

/// Batching granularity: pages due within one tick in the same cell share
/// a message, standing in for paging-occasion grouping.
pub const TICK_MS: i64 = 100;

/// Every synthetic subscriber lives under one MME code.
pub const SYNTH_MMEC: u8 = 0x38;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },
}

fn bad(reason: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig {
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellConfig {
    pub cell_id: u32,
    pub tracking_area: u32,
    /// Descriptive only: echoed to capture headers so a scenario can label
    /// which pair is "neighbors"; generation keys off tracking areas.
    pub neighbors: Vec<u32>,
    pub freq_hz: Option<u64>,
}

/// Which subscriber events cause an M-TMSI reallocation, plus the periodic
/// reallocation interval (0 = never).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshPolicy {
    pub refreshes: BTreeMap<SubscriberEvent, bool>,
    pub periodic_interval_hours: f64,
}

impl Default for RefreshPolicy {
    /// The common observed profile: re-attach, voice and TA events refresh;
    /// messaging and data traffic do not; no periodic refresh.
    fn default() -> Self {
        use SubscriberEvent::*;
        let refreshes = [
            (PowerCycle, true),
            (FlightMode, true),
            (MoCall, true),
            (MtCall, true),
            (MoSms, false),
            (MtSms, false),
            (MoData, false),
            (MtData, false),
            (TaChange, true),
        ]
        .into_iter()
        .collect();
        Self {
            refreshes,
            periodic_interval_hours: 0.0,
        }
    }
}

impl RefreshPolicy {
    pub fn refreshes_on(&self, event: SubscriberEvent) -> bool {
        self.refreshes.get(&event).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub duration_seconds: u64,
    pub cells: Vec<CellConfig>,
    pub ue_count: usize,
    pub pages_per_ue_per_hour: f64,
    pub smart_paging: bool,
    /// Fraction of location-limited pages that go unanswered and re-emit
    /// across the whole tracking area.
    pub escalation_probability: f64,
    pub escalation_delay_seconds: f64,
    pub move_rate_per_hour: f64,
    pub max_records_per_message: usize,
    pub imsi_injection_count: usize,
    pub seed: u64,
    pub refresh_policy: RefreshPolicy,
    /// Horizon the synthetic periodic-TAU observation covers when the
    /// policy never refreshes.
    pub periodic_watch_hours: f64,
    pub start_time: DateTime<Utc>,
    pub operator_label: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration_seconds: 3600,
            cells: Vec::new(),
            ue_count: 0,
            pages_per_ue_per_hour: 10.0,
            smart_paging: true,
            escalation_probability: 0.0,
            escalation_delay_seconds: 2.0,
            move_rate_per_hour: 0.0,
            max_records_per_message: 16,
            imsi_injection_count: 0,
            seed: 0,
            refresh_policy: RefreshPolicy::default(),
            periodic_watch_hours: 48.0,
            start_time: Utc.with_ymd_and_hms(2018, 1, 19, 10, 0, 0).unwrap(),
            operator_label: "synthetic".to_string(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.cells.is_empty() {
            return Err(bad("at least one cell is required"));
        }
        let mut ids = HashSet::new();
        for cell in &self.cells {
            if !ids.insert(cell.cell_id) {
                return Err(bad(format!("duplicate cell id {}", cell.cell_id)));
            }
        }
        for cell in &self.cells {
            for neighbor in &cell.neighbors {
                if *neighbor == cell.cell_id {
                    return Err(bad(format!("cell {} lists itself as neighbor", cell.cell_id)));
                }
                if !ids.contains(neighbor) {
                    return Err(bad(format!(
                        "cell {} lists unknown neighbor {neighbor}",
                        cell.cell_id
                    )));
                }
            }
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(bad(format!("{name} {v} outside 0..=1")))
            }
        };
        unit("escalation_probability", self.escalation_probability)?;
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(bad(format!("{name} {v} is not a non-negative number")))
            }
        };
        non_negative("pages_per_ue_per_hour", self.pages_per_ue_per_hour)?;
        non_negative("move_rate_per_hour", self.move_rate_per_hour)?;
        non_negative(
            "refresh.periodic_interval_hours",
            self.refresh_policy.periodic_interval_hours,
        )?;
        if !(self.escalation_delay_seconds.is_finite() && self.escalation_delay_seconds > 0.0) {
            return Err(bad(format!(
                "escalation_delay_seconds {} must be positive",
                self.escalation_delay_seconds
            )));
        }
        if !(self.periodic_watch_hours.is_finite() && self.periodic_watch_hours > 0.0) {
            return Err(bad(format!(
                "periodic_watch_hours {} must be positive",
                self.periodic_watch_hours
            )));
        }
        if !(1..=16).contains(&self.max_records_per_message) {
            return Err(bad(format!(
                "max_records_per_message {} outside 1..=16",
                self.max_records_per_message
            )));
        }
        if self.imsi_injection_count > 0 && self.duration_seconds == 0 {
            return Err(bad("imsi_injection_count needs a nonzero duration"));
        }
        Ok(())
    }

    /// Parses the flat `key = value` scenario format. `#` starts a comment;
    /// `cell` and `refresh.<event>` keys may repeat. Unknown keys are
    /// errors: a typo silently falling back to a default would invalidate
    /// whatever experiment the scenario was written for.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut config = ScenarioConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {line_no}: expected key = value")))?;
            let key = key.trim();
            let value = value.trim();
            let context = |what: &str| format!("line {line_no}: {what}");
            match key {
                "duration_seconds" => {
                    config.duration_seconds = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad duration_seconds: {e}"))))?;
                }
                "ue_count" => {
                    config.ue_count = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad ue_count: {e}"))))?;
                }
                "pages_per_ue_per_hour" => {
                    config.pages_per_ue_per_hour = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad pages_per_ue_per_hour: {e}"))))?;
                }
                "smart_paging" => {
                    config.smart_paging = parse_bool(value)
                        .ok_or_else(|| bad(context("smart_paging is not true/false")))?;
                }
                "escalation_probability" => {
                    config.escalation_probability = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad escalation_probability: {e}"))))?;
                }
                "escalation_delay_seconds" => {
                    config.escalation_delay_seconds = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad escalation_delay_seconds: {e}"))))?;
                }
                "move_rate_per_hour" => {
                    config.move_rate_per_hour = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad move_rate_per_hour: {e}"))))?;
                }
                "max_records_per_message" => {
                    config.max_records_per_message = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad max_records_per_message: {e}"))))?;
                }
                "imsi_injection_count" => {
                    config.imsi_injection_count = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad imsi_injection_count: {e}"))))?;
                }
                "seed" => {
                    config.seed = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad seed: {e}"))))?;
                }
                "periodic_watch_hours" => {
                    config.periodic_watch_hours = value
                        .parse()
                        .map_err(|e| bad(context(&format!("bad periodic_watch_hours: {e}"))))?;
                }
                "start_time" => {
                    config.start_time = DateTime::parse_from_rfc3339(value)
                        .map_err(|e| bad(context(&format!("bad start_time: {e}"))))?
                        .with_timezone(&Utc);
                }
                "operator_label" => {
                    config.operator_label = value.to_string();
                }
                "cell" => {
                    config.cells.push(parse_cell(value).map_err(|e| {
                        bad(context(&format!("bad cell spec {value:?}: {e}")))
                    })?);
                }
                "refresh.periodic_interval_hours" => {
                    config.refresh_policy.periodic_interval_hours = value.parse().map_err(|e| {
                        bad(context(&format!("bad refresh.periodic_interval_hours: {e}")))
                    })?;
                }
                _ => {
                    if let Some(event_key) = key.strip_prefix("refresh.") {
                        let event: SubscriberEvent = event_key.parse().map_err(|()| {
                            bad(context(&format!("unknown refresh event {event_key:?}")))
                        })?;
                        let refreshes = parse_yes_no(value)
                            .ok_or_else(|| bad(context("refresh value is not yes/no")))?;
                        config.refresh_policy.refreshes.insert(event, refreshes);
                    } else {
                        return Err(bad(context(&format!("unknown key {key:?}"))));
                    }
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn parse_yes_no(value: &str) -> Option<bool> {
    match value {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// `id=112 ta=1 neighbors=298,106 freq=816000000` with neighbors and freq
/// optional.
fn parse_cell(spec: &str) -> Result<CellConfig, String> {
    let mut cell_id = None;
    let mut tracking_area = None;
    let mut neighbors = Vec::new();
    let mut freq_hz = None;
    for token in spec.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| format!("token {token:?} is not key=value"))?;
        match key {
            "id" => cell_id = Some(value.parse().map_err(|e| format!("bad id: {e}"))?),
            "ta" => tracking_area = Some(value.parse().map_err(|e| format!("bad ta: {e}"))?),
            "neighbors" => {
                for n in value.split(',') {
                    neighbors.push(n.parse().map_err(|e| format!("bad neighbor {n:?}: {e}"))?);
                }
            }
            "freq" => freq_hz = Some(value.parse().map_err(|e| format!("bad freq: {e}"))?),
            _ => return Err(format!("unknown cell attribute {key:?}")),
        }
    }
    Ok(CellConfig {
        cell_id: cell_id.ok_or("missing id")?,
        tracking_area: tracking_area.ok_or("missing ta")?,
        neighbors,
        freq_hz,
    })
}

/// One M-TMSI assignment and when it took effect (milliseconds from
/// scenario start).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TmsiSpan {
    pub from_ms: i64,
    pub m_tmsi: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UeTruth {
    pub ue: usize,
    pub initial_cell: u32,
    pub tmsi_history: Vec<TmsiSpan>,
}

/// One page event as the network intended it. Times are absolute epoch
/// milliseconds; `emitted_ms` is the batching tick the records landed on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageTruth {
    pub ue: usize,
    pub due_ms: i64,
    pub emitted_ms: i64,
    pub cells: Vec<u32>,
    pub m_tmsi: u32,
    pub escalation: bool,
    /// For an escalation, the tick its unanswered original landed on.
    pub origin_emitted_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveTruth {
    pub ue: usize,
    pub at_ms: i64,
    pub from_cell: u32,
    pub to_cell: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImsiInjection {
    pub emitted_ms: i64,
    pub cell_id: u32,
    pub imsi: String,
}

/// What actually happened in a generated scenario, written alongside the
/// capture files. Everything an analysis reports can be recomputed from
/// here without touching the analysis code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub operator_label: String,
    pub seed: u64,
    pub start_ms: i64,
    pub duration_seconds: u64,
    pub smart_paging: bool,
    pub mmec: u8,
    pub ues: Vec<UeTruth>,
    pub pages: Vec<PageTruth>,
    pub moves: Vec<MoveTruth>,
    pub imsi_injections: Vec<ImsiInjection>,
    /// Event key to yes/no/uncertain, what the refresh policy should look
    /// like through the persistence analysis.
    pub expected_refresh: Vec<(String, String)>,
}

/// An escalation pattern the cell-pair comparison should find: a page seen
/// in exactly one of the two cells, answered by a page in both within the
/// horizon.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExpectedEscalation {
    pub identity: String,
    pub only_time_ms: i64,
    pub pair_time_ms: i64,
}

impl GroundTruth {
    pub fn identity_of(&self, m_tmsi: u32) -> String {
        STmsi::new(self.mmec, m_tmsi).canonical_hex()
    }

    /// Total paging records across all capture files, before batching into
    /// messages: one per (page, cell) plus the injected IMSI records.
    pub fn total_emitted_records(&self) -> usize {
        self.pages.iter().map(|p| p.cells.len()).sum::<usize>() + self.imsi_injections.len()
    }

    /// Replays the page log as the two-cell comparison sees it: pages
    /// touching exactly one of the cells are single sightings, pages
    /// touching both are simultaneous pairs, and a sighting followed by a
    /// pair within the horizon is an escalation. This reduction never
    /// looks at capture bytes or timestamp matching, which is what makes
    /// it a usable oracle for the analysis pipeline.
    pub fn expected_escalations(
        &self,
        cell_a: u32,
        cell_b: u32,
        horizon_seconds: f64,
    ) -> Vec<ExpectedEscalation> {
        let horizon_ms = (horizon_seconds * 1000.0).round() as i64;
        // (time, is_pair, identity), time-sorted with pairs first on ties.
        let mut events: BTreeMap<String, Vec<(i64, bool)>> = BTreeMap::new();
        for page in &self.pages {
            let in_a = page.cells.contains(&cell_a);
            let in_b = page.cells.contains(&cell_b);
            if !in_a && !in_b {
                continue;
            }
            events
                .entry(self.identity_of(page.m_tmsi))
                .or_default()
                .push((page.emitted_ms, in_a && in_b));
        }
        let mut out = Vec::new();
        for (identity, mut timeline) in events {
            timeline.sort_by_key(|&(t, is_pair)| (t, !is_pair));
            let mut awaiting: Vec<i64> = Vec::new();
            for (t, is_pair) in timeline {
                if is_pair {
                    awaiting.retain(|&t0| {
                        if t0 < t && t - t0 <= horizon_ms {
                            out.push(ExpectedEscalation {
                                identity: identity.clone(),
                                only_time_ms: t0,
                                pair_time_ms: t,
                            });
                            false
                        } else {
                            t0 >= t // drop sightings the horizon has passed
                        }
                    });
                } else {
                    awaiting.push(t);
                }
            }
        }
        out.sort();
        out
    }

    /// Camp transitions the two-cell comparison should see as movements,
    /// valid for scenarios where no page lands in both cells (no pairs to
    /// reset the pattern).
    pub fn expected_movements(&self, cell_a: u32, cell_b: u32) -> usize {
        let mut per_ue: BTreeMap<usize, Vec<(i64, u32)>> = BTreeMap::new();
        for page in &self.pages {
            debug_assert!(
                !(page.cells.contains(&cell_a) && page.cells.contains(&cell_b)),
                "movement expectation needs a pair-free scenario"
            );
            let cell = if page.cells.contains(&cell_a) {
                cell_a
            } else if page.cells.contains(&cell_b) {
                cell_b
            } else {
                continue;
            };
            per_ue
                .entry(page.ue)
                .or_default()
                .push((page.emitted_ms, cell));
        }
        let mut movements = 0;
        for (_, mut sightings) in per_ue {
            sightings.sort();
            movements += sightings
                .windows(2)
                .filter(|pair| pair[0].1 != pair[1].1)
                .count();
        }
        movements
    }
}

/// Draws fresh M-TMSI values that never repeat within a scenario.
struct TmsiAllocator {
    used: HashSet<u32>,
}

impl TmsiAllocator {
    fn new() -> Self {
        Self {
            used: HashSet::new(),
        }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> u32 {
        loop {
            let value = rng.random::<u32>();
            if self.used.insert(value) {
                return value;
            }
        }
    }
}

fn tick_of(ms: i64) -> i64 {
    ms - ms.rem_euclid(TICK_MS)
}

/// Poisson-process arrival times over the scenario, in ms offsets.
fn arrival_times(rng: &mut ChaCha8Rng, rate_per_hour: f64, duration_seconds: u64) -> Vec<i64> {
    let mut times = Vec::new();
    if rate_per_hour <= 0.0 || duration_seconds == 0 {
        return times;
    }
    let exp = Exp::new(rate_per_hour / 3600.0).expect("positive rate");
    let duration = duration_seconds as f64;
    let mut t = exp.sample(rng);
    while t < duration {
        times.push((t * 1000.0) as i64);
        t += exp.sample(rng);
    }
    times
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum SimAction {
    Move,
    Refresh,
    Page,
}

/// One paging record headed for a cell's capture file.
struct Emission {
    tick_ms: i64,
    cell_index: usize,
    identity: UeIdentity,
}

struct UeState {
    cell_index: usize,
    m_tmsi: u32,
}

/// Runs one scenario. Returns a capture file per configured cell (in
/// config order, keyed by cell id) and the ground truth.
pub fn generate(config: &ScenarioConfig) -> Result<(Vec<(u32, CaptureFile)>, GroundTruth), SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let mut allocator = TmsiAllocator::new();
    let duration_ms = config.duration_seconds as i64 * 1000;
    let start_ms = config.start_time.timestamp_millis();
    let delay_ms = (config.escalation_delay_seconds * 1000.0).round() as i64;

    // Per-tracking-area cell index lists, in config order.
    let mut ta_members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (index, cell) in config.cells.iter().enumerate() {
        ta_members.entry(cell.tracking_area).or_default().push(index);
    }

    // Draw every per-subscriber schedule up front, in subscriber order.
    let mut states = Vec::with_capacity(config.ue_count);
    let mut truth_ues = Vec::with_capacity(config.ue_count);
    // (due_ms, ue, escalates)
    let mut page_schedule: Vec<(i64, usize, bool)> = Vec::new();
    let mut move_schedule: Vec<(i64, usize)> = Vec::new();
    let mut refresh_schedule: Vec<(i64, usize)> = Vec::new();
    for ue in 0..config.ue_count {
        let cell_index = rng.random_range(0..config.cells.len());
        let m_tmsi = allocator.fresh(&mut rng);
        states.push(UeState { cell_index, m_tmsi });
        truth_ues.push(UeTruth {
            ue,
            initial_cell: config.cells[cell_index].cell_id,
            tmsi_history: vec![TmsiSpan {
                from_ms: start_ms,
                m_tmsi,
            }],
        });
        for due in arrival_times(&mut rng, config.pages_per_ue_per_hour, config.duration_seconds)
        {
            let escalates = config.smart_paging
                && rng.random_bool(config.escalation_probability);
            page_schedule.push((due, ue, escalates));
        }
        if config.cells.len() > 1 {
            for at in arrival_times(&mut rng, config.move_rate_per_hour, config.duration_seconds) {
                move_schedule.push((at, ue));
            }
        }
        let interval_ms =
            (config.refresh_policy.periodic_interval_hours * 3_600_000.0).round() as i64;
        if interval_ms > 0 {
            let mut at = interval_ms;
            while at < duration_ms {
                refresh_schedule.push((at, ue));
                at += interval_ms;
            }
        }
    }

    let mut injections = Vec::new();
    let mut injected = HashSet::new();
    for _ in 0..config.imsi_injection_count {
        let at_ms = rng.random_range(0..duration_ms);
        let cell_index = rng.random_range(0..config.cells.len());
        let digits: String = loop {
            let msin: String = (0..10).map(|_| rng.random_range(0..10u8).to_string()).collect();
            let candidate = format!("24201{msin}");
            if injected.insert(candidate.clone()) {
                break candidate;
            }
        };
        injections.push((at_ms, cell_index, digits));
    }

    // Merge schedules into one deterministic timeline. Moves happen before
    // refreshes before pages at the same millisecond, subscribers in order.
    let mut timeline: Vec<(i64, SimAction, usize, usize)> = Vec::new();
    for (idx, &(at, ue)) in move_schedule.iter().enumerate() {
        timeline.push((at, SimAction::Move, ue, idx));
    }
    for (idx, &(at, ue)) in refresh_schedule.iter().enumerate() {
        timeline.push((at, SimAction::Refresh, ue, idx));
    }
    for (idx, &(due, ue, _)) in page_schedule.iter().enumerate() {
        timeline.push((due, SimAction::Page, ue, idx));
    }
    timeline.sort_unstable();

    let mut emissions: Vec<Emission> = Vec::new();
    let mut pages = Vec::new();
    let mut moves = Vec::new();
    for (at_ms, action, ue, idx) in timeline {
        match action {
            SimAction::Move => {
                let from_index = states[ue].cell_index;
                let ta = config.cells[from_index].tracking_area;
                let peers: Vec<usize> = ta_members[&ta]
                    .iter()
                    .copied()
                    .filter(|&i| i != from_index)
                    .collect();
                if peers.is_empty() {
                    continue;
                }
                let to_index = peers[rng.random_range(0..peers.len())];
                states[ue].cell_index = to_index;
                moves.push(MoveTruth {
                    ue,
                    at_ms: start_ms + at_ms,
                    from_cell: config.cells[from_index].cell_id,
                    to_cell: config.cells[to_index].cell_id,
                });
            }
            SimAction::Refresh => {
                let m_tmsi = allocator.fresh(&mut rng);
                states[ue].m_tmsi = m_tmsi;
                truth_ues[ue].tmsi_history.push(TmsiSpan {
                    from_ms: start_ms + at_ms,
                    m_tmsi,
                });
            }
            SimAction::Page => {
                let escalates = page_schedule[idx].2;
                let state = &states[ue];
                let m_tmsi = state.m_tmsi;
                let ta = config.cells[state.cell_index].tracking_area;
                let ta_cells = &ta_members[&ta];
                let tick = tick_of(at_ms);
                let targets: Vec<usize> = if config.smart_paging {
                    vec![state.cell_index]
                } else {
                    ta_cells.clone()
                };
                for &cell_index in &targets {
                    emissions.push(Emission {
                        tick_ms: tick,
                        cell_index,
                        identity: UeIdentity::STmsi(STmsi::new(SYNTH_MMEC, m_tmsi)),
                    });
                }
                pages.push(PageTruth {
                    ue,
                    due_ms: start_ms + at_ms,
                    emitted_ms: start_ms + tick,
                    cells: targets.iter().map(|&i| config.cells[i].cell_id).collect(),
                    m_tmsi,
                    escalation: false,
                    origin_emitted_ms: None,
                });
                let escalation_due = at_ms + delay_ms;
                if escalates && escalation_due < duration_ms {
                    // The unanswered page re-emits across the whole
                    // tracking area, still under the original identity.
                    let esc_tick = tick_of(escalation_due);
                    for &cell_index in ta_cells {
                        emissions.push(Emission {
                            tick_ms: esc_tick,
                            cell_index,
                            identity: UeIdentity::STmsi(STmsi::new(SYNTH_MMEC, m_tmsi)),
                        });
                    }
                    pages.push(PageTruth {
                        ue,
                        due_ms: start_ms + escalation_due,
                        emitted_ms: start_ms + esc_tick,
                        cells: ta_cells.iter().map(|&i| config.cells[i].cell_id).collect(),
                        m_tmsi,
                        escalation: true,
                        origin_emitted_ms: Some(start_ms + tick),
                    });
                }
            }
        }
    }

    let mut truth_injections = Vec::new();
    for (at_ms, cell_index, digits) in injections {
        let tick = tick_of(at_ms);
        let imsi: Imsi = digits.parse().expect("generated digits form an imsi");
        emissions.push(Emission {
            tick_ms: tick,
            cell_index,
            identity: UeIdentity::Imsi(imsi),
        });
        truth_injections.push(ImsiInjection {
            emitted_ms: start_ms + tick,
            cell_id: config.cells[cell_index].cell_id,
            imsi: digits,
        });
    }
    truth_injections.sort_by_key(|i| (i.emitted_ms, i.cell_id));

    // Batch each cell's emissions into messages, tick by tick.
    let mut per_cell: Vec<Vec<Emission>> = (0..config.cells.len()).map(|_| Vec::new()).collect();
    for emission in emissions {
        per_cell[emission.cell_index].push(emission);
    }
    let mut files = Vec::with_capacity(config.cells.len());
    for (cell_index, cell) in config.cells.iter().enumerate() {
        let mut bucket = std::mem::take(&mut per_cell[cell_index]);
        bucket.sort_by_key(|e| e.tick_ms); // stable: same-tick order preserved
        let mut file = CaptureFile {
            header: vec![
                ("operator".to_string(), config.operator_label.clone()),
                ("cell_id".to_string(), cell.cell_id.to_string()),
                ("tracking_area".to_string(), cell.tracking_area.to_string()),
                (
                    "neighbors".to_string(),
                    cell.neighbors
                        .iter()
                        .map(|n| n.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                ),
                ("seed".to_string(), config.seed.to_string()),
            ],
            records: Vec::new(),
            skipped: Vec::new(),
        };
        let mut cursor = 0;
        while cursor < bucket.len() {
            let tick = bucket[cursor].tick_ms;
            let mut end = cursor;
            while end < bucket.len() && bucket[end].tick_ms == tick {
                end += 1;
            }
            for chunk in bucket[cursor..end].chunks(config.max_records_per_message) {
                let message = PagingMessage {
                    records: chunk
                        .iter()
                        .map(|e| PagingRecord {
                            ue_identity: e.identity.clone(),
                            cn_domain: CnDomain::Ps,
                        })
                        .collect(),
                    system_info_modification: false,
                    etws_indication: false,
                };
                let payload = encode_pcch(&message).expect("generator respects record bounds");
                file.records.push(CaptureRecord {
                    timestamp: Utc
                        .timestamp_millis_opt(start_ms + tick)
                        .single()
                        .expect("scenario times fit the calendar"),
                    cell_id: cell.cell_id,
                    freq_hz: cell.freq_hz,
                    payload,
                });
            }
            cursor = end;
        }
        files.push((cell.cell_id, file));
    }

    pages.sort_by_key(|p| (p.emitted_ms, p.due_ms, p.ue, p.escalation));
    let expected_refresh = SubscriberEvent::ALL
        .into_iter()
        .map(|event| {
            let verdict = if event == SubscriberEvent::PeriodicTau {
                let interval = config.refresh_policy.periodic_interval_hours;
                if interval > 0.0 && interval <= config.periodic_watch_hours {
                    "yes"
                } else {
                    "uncertain"
                }
            } else if config.refresh_policy.refreshes_on(event) {
                "yes"
            } else {
                "no"
            };
            (event.key().to_string(), verdict.to_string())
        })
        .collect();

    let truth = GroundTruth {
        operator_label: config.operator_label.clone(),
        seed: config.seed,
        start_ms,
        duration_seconds: config.duration_seconds,
        smart_paging: config.smart_paging,
        mmec: SYNTH_MMEC,
        ues: truth_ues,
        pages,
        moves,
        imsi_injections: truth_injections,
        expected_refresh,
    };
    Ok((files, truth))
}

/// Simulates the before/after M-TMSI readings of one test subscriber put
/// through every event type twice, then watched for the periodic refresh.
/// Fresh values are drawn from a separate random stream and never collide
/// with identities in the capture scenario.
pub fn emit_event_log(config: &ScenarioConfig, truth: &GroundTruth) -> PersistenceEventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut allocator = TmsiAllocator::new();
    for ue in &truth.ues {
        for span in &ue.tmsi_history {
            allocator.used.insert(span.m_tmsi);
        }
    }

    let mut current = allocator.fresh(&mut rng);
    let mut log = Vec::new();
    for event in SubscriberEvent::ALL {
        if event == SubscriberEvent::PeriodicTau {
            continue;
        }
        for elapsed_hours in [0.1, 0.2] {
            let after = if config.refresh_policy.refreshes_on(event) {
                allocator.fresh(&mut rng)
            } else {
                current
            };
            log.push(PersistenceEvent {
                event,
                m_tmsi_before: current,
                m_tmsi_after: after,
                elapsed_hours,
            });
            current = after;
        }
    }
    let interval = config.refresh_policy.periodic_interval_hours;
    if interval > 0.0 {
        let after = allocator.fresh(&mut rng);
        log.push(PersistenceEvent {
            event: SubscriberEvent::PeriodicTau,
            m_tmsi_before: current,
            m_tmsi_after: after,
            elapsed_hours: interval,
        });
    } else {
        log.push(PersistenceEvent {
            event: SubscriberEvent::PeriodicTau,
            m_tmsi_before: current,
            m_tmsi_after: current,
            elapsed_hours: config.periodic_watch_hours,
        });
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{
        classify_smart_paging, correlate_cells, detect_imsi_exposure, summarize,
        CorrelationOptions, RefreshVerdict, SmartPagingThresholds, Verdict,
        verify_refresh,
    };
    use crate::capture::{decode_capture, parse_capture, serialize_capture, ParseMode};

    fn two_cell_config() -> ScenarioConfig {
        ScenarioConfig {
            duration_seconds: 900,
            cells: vec![
                CellConfig {
                    cell_id: 112,
                    tracking_area: 1,
                    neighbors: vec![],
                    freq_hz: Some(816_000_000),
                },
                CellConfig {
                    cell_id: 106,
                    tracking_area: 1,
                    neighbors: vec![],
                    freq_hz: Some(816_000_000),
                },
            ],
            ue_count: 40,
            pages_per_ue_per_hour: 30.0,
            seed: 11,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = ScenarioConfig {
            escalation_probability: 0.2,
            move_rate_per_hour: 1.0,
            imsi_injection_count: 2,
            ..two_cell_config()
        };
        let (files_1, truth_1) = generate(&config).unwrap();
        let (files_2, truth_2) = generate(&config).unwrap();
        assert_eq!(truth_1, truth_2);
        for ((id_1, file_1), (id_2, file_2)) in files_1.iter().zip(&files_2) {
            assert_eq!(id_1, id_2);
            assert_eq!(serialize_capture(file_1), serialize_capture(file_2));
        }
        let (files_3, _) = generate(&ScenarioConfig {
            seed: 12,
            ..config
        })
        .unwrap();
        assert_ne!(
            serialize_capture(&files_1[0].1),
            serialize_capture(&files_3[0].1)
        );
    }

    #[test]
    fn every_emitted_record_is_accounted_for() {
        let config = ScenarioConfig {
            escalation_probability: 0.3,
            imsi_injection_count: 3,
            max_records_per_message: 4,
            ..two_cell_config()
        };
        let (files, truth) = generate(&config).unwrap();
        let mut decoded_records = 0;
        for (_, file) in &files {
            let decoded = decode_capture(file);
            assert!(decoded.failures.is_empty());
            decoded_records += decoded
                .messages
                .iter()
                .map(|m| m.message.records.len())
                .sum::<usize>();
            for m in &decoded.messages {
                assert!(m.message.records.len() <= config.max_records_per_message);
            }
        }
        assert_eq!(decoded_records, truth.total_emitted_records());
    }

    #[test]
    fn capture_files_survive_the_text_format() {
        let (files, _) = generate(&two_cell_config()).unwrap();
        for (_, file) in &files {
            let text = serialize_capture(file);
            let reparsed = parse_capture(&text, ParseMode::Strict).unwrap();
            assert_eq!(reparsed.records, file.records);
            assert_eq!(serialize_capture(&reparsed), text);
        }
    }

    #[test]
    fn smart_paging_keeps_distant_cells_disjoint() {
        let (files, _) = generate(&two_cell_config()).unwrap();
        let a = decode_capture(&files[0].1);
        let b = decode_capture(&files[1].1);
        let report =
            correlate_cells(&a.messages, &b.messages, &CorrelationOptions::default()).unwrap();
        assert_eq!(report.both_simultaneous, 0);
        assert_eq!(report.only_a, report.total_a);
        assert_eq!(report.only_b, report.total_b);
        assert!(report.total_a + report.total_b > 0);

        let verdict = classify_smart_paging(&report, &report, &SmartPagingThresholds::default());
        assert_eq!(verdict.verdict, Verdict::SmartPaging);
    }

    #[test]
    fn ta_wide_paging_mirrors_cells_exactly() {
        let config = ScenarioConfig {
            smart_paging: false,
            ..two_cell_config()
        };
        let (files, truth) = generate(&config).unwrap();
        let a = decode_capture(&files[0].1);
        let b = decode_capture(&files[1].1);
        let report =
            correlate_cells(&a.messages, &b.messages, &CorrelationOptions::default()).unwrap();
        assert_eq!(report.only_a, 0);
        assert_eq!(report.only_b, 0);
        assert_eq!(report.both_simultaneous, report.total_a);
        assert_eq!(report.total_a, report.total_b);
        assert_eq!(report.total_a, truth.pages.len());

        let verdict = classify_smart_paging(&report, &report, &SmartPagingThresholds::default());
        assert_eq!(verdict.verdict, Verdict::TaWide);
    }

    #[test]
    fn escalations_match_the_page_log() {
        let config = ScenarioConfig {
            escalation_probability: 0.25,
            seed: 21,
            ..two_cell_config()
        };
        let (files, truth) = generate(&config).unwrap();
        let escalation_pages: Vec<&PageTruth> =
            truth.pages.iter().filter(|p| p.escalation).collect();
        assert!(!escalation_pages.is_empty(), "seed produced no escalations");
        for page in &escalation_pages {
            assert_eq!(page.cells.len(), 2);
            assert_eq!(
                page.emitted_ms - page.origin_emitted_ms.unwrap(),
                2000,
                "escalation lands one fixed delay after its original"
            );
        }

        let options = CorrelationOptions::default();
        let a = decode_capture(&files[0].1);
        let b = decode_capture(&files[1].1);
        let report = correlate_cells(&a.messages, &b.messages, &options).unwrap();
        let expected =
            truth.expected_escalations(112, 106, options.escalation_horizon_seconds);
        let mut detected: Vec<ExpectedEscalation> = report
            .escalation_details
            .iter()
            .map(|d| ExpectedEscalation {
                identity: d.identity.clone(),
                only_time_ms: d.only_time_ms,
                pair_time_ms: d.pair_time_ms,
            })
            .collect();
        detected.sort();
        assert_eq!(detected, expected);
        // Every true escalation shows up among the detected patterns.
        for page in &escalation_pages {
            let identity = truth.identity_of(page.m_tmsi);
            assert!(
                detected.iter().any(|e| e.identity == identity
                    && e.only_time_ms == page.origin_emitted_ms.unwrap()),
                "escalated page missing from the report"
            );
        }
    }

    #[test]
    fn movements_match_camp_transitions() {
        let config = ScenarioConfig {
            move_rate_per_hour: 4.0,
            pages_per_ue_per_hour: 60.0,
            ue_count: 10,
            seed: 5,
            ..two_cell_config()
        };
        let (files, truth) = generate(&config).unwrap();
        assert!(!truth.moves.is_empty(), "seed produced no moves");
        let a = decode_capture(&files[0].1);
        let b = decode_capture(&files[1].1);
        let report =
            correlate_cells(&a.messages, &b.messages, &CorrelationOptions::default()).unwrap();
        assert_eq!(report.movements, truth.expected_movements(112, 106));
        assert!(report.movements > 0, "seed produced no observable movements");
    }

    #[test]
    fn imsi_injections_surface_in_decoded_traffic() {
        let config = ScenarioConfig {
            imsi_injection_count: 3,
            ..two_cell_config()
        };
        let (files, truth) = generate(&config).unwrap();
        assert_eq!(truth.imsi_injections.len(), 3);
        let mut found = Vec::new();
        for (_, file) in &files {
            let decoded = decode_capture(file);
            found.extend(
                detect_imsi_exposure(&decoded.messages)
                    .into_iter()
                    .map(|e| e.imsi.to_string()),
            );
        }
        found.sort();
        let mut expected: Vec<String> = truth
            .imsi_injections
            .iter()
            .map(|i| i.imsi.clone())
            .collect();
        expected.sort();
        assert_eq!(found, expected);

        let (clean_files, _) = generate(&two_cell_config()).unwrap();
        for (_, file) in &clean_files {
            let decoded = decode_capture(file);
            assert!(detect_imsi_exposure(&decoded.messages).is_empty());
        }
    }

    #[test]
    fn no_subscribers_means_empty_captures() {
        let config = ScenarioConfig {
            ue_count: 0,
            ..two_cell_config()
        };
        let (files, truth) = generate(&config).unwrap();
        assert_eq!(files.len(), 2);
        for (_, file) in &files {
            assert!(file.records.is_empty());
        }
        assert!(truth.pages.is_empty());
        let stats = summarize(&decode_capture(&files[0].1).messages);
        assert_eq!(stats.messages, 0);
    }

    #[test]
    fn periodic_refresh_rotates_identities_in_capture() {
        let mut config = two_cell_config();
        config.duration_seconds = 7200;
        config.refresh_policy.periodic_interval_hours = 1.0;
        config.ue_count = 5;
        let (_, truth) = generate(&config).unwrap();
        for ue in &truth.ues {
            assert_eq!(ue.tmsi_history.len(), 2, "one refresh per hour boundary");
            assert_ne!(ue.tmsi_history[0].m_tmsi, ue.tmsi_history[1].m_tmsi);
        }
        // Identities used in pages follow the history.
        for page in &truth.pages {
            let ue = &truth.ues[page.ue];
            let expected = ue
                .tmsi_history
                .iter()
                .rev()
                .find(|span| span.from_ms <= page.due_ms)
                .unwrap()
                .m_tmsi;
            assert_eq!(page.m_tmsi, expected);
        }
    }

    #[test]
    fn fresh_tmsis_never_collide() {
        let config = ScenarioConfig {
            ue_count: 200,
            ..two_cell_config()
        };
        let (_, truth) = generate(&config).unwrap();
        let mut seen = HashSet::new();
        for ue in &truth.ues {
            for span in &ue.tmsi_history {
                assert!(seen.insert(span.m_tmsi), "m-tmsi reused within scenario");
            }
        }
    }

    #[test]
    fn event_log_reflects_policy() {
        let config = two_cell_config();
        let (_, truth) = generate(&config).unwrap();
        let log = emit_event_log(&config, &truth);
        // Two observations per non-periodic event plus the periodic row.
        assert_eq!(log.len(), 19);
        let table = verify_refresh(&log, config.periodic_watch_hours);
        for (event_key, expected) in &truth.expected_refresh {
            let event: SubscriberEvent = event_key.parse().unwrap();
            let got = match table.verdict_for(event) {
                RefreshVerdict::Yes => "yes",
                RefreshVerdict::No => "no",
                RefreshVerdict::Uncertain => "uncertain",
            };
            assert_eq!(got, expected, "{event_key}");
        }
    }

    #[test]
    fn event_log_observations_chain() {
        let config = two_cell_config();
        let (_, truth) = generate(&config).unwrap();
        let log = emit_event_log(&config, &truth);
        for pair in log.windows(2) {
            assert_eq!(pair[0].m_tmsi_after, pair[1].m_tmsi_before);
        }
        // Event-log identities stay clear of capture identities.
        let capture_tmsis: HashSet<u32> = truth
            .ues
            .iter()
            .flat_map(|u| u.tmsi_history.iter().map(|s| s.m_tmsi))
            .collect();
        for entry in &log {
            assert!(!capture_tmsis.contains(&entry.m_tmsi_before));
            assert!(!capture_tmsis.contains(&entry.m_tmsi_after));
        }
    }

    #[test]
    fn periodic_policy_shapes_the_last_row() {
        let mut config = two_cell_config();
        let (_, truth) = generate(&config).unwrap();

        config.refresh_policy.periodic_interval_hours = 24.0;
        let log = emit_event_log(&config, &truth);
        let last = log.last().unwrap();
        assert_eq!(last.event, SubscriberEvent::PeriodicTau);
        assert!(last.m_tmsi_before != last.m_tmsi_after);
        assert_eq!(last.elapsed_hours, 24.0);

        config.refresh_policy.periodic_interval_hours = 0.0;
        let log = emit_event_log(&config, &truth);
        let last = log.last().unwrap();
        assert_eq!(last.m_tmsi_before, last.m_tmsi_after);
        assert_eq!(last.elapsed_hours, 48.0);
    }

    #[test]
    fn config_text_round_trips_through_parser() {
        let text = "\
# two cells, one tracking area
duration_seconds = 600
ue_count = 25
pages_per_ue_per_hour = 12.5
smart_paging = true
escalation_probability = 0.1
seed = 42
cell = id=112 ta=1 neighbors=106 freq=816000000
cell = id=106 ta=1 neighbors=112
refresh.mo_call = no
refresh.periodic_interval_hours = 24
";
        let config = ScenarioConfig::parse(text).unwrap();
        assert_eq!(config.duration_seconds, 600);
        assert_eq!(config.ue_count, 25);
        assert_eq!(config.pages_per_ue_per_hour, 12.5);
        assert_eq!(config.escalation_probability, 0.1);
        assert_eq!(config.seed, 42);
        assert_eq!(config.cells.len(), 2);
        assert_eq!(config.cells[0].cell_id, 112);
        assert_eq!(config.cells[0].neighbors, vec![106]);
        assert_eq!(config.cells[0].freq_hz, Some(816_000_000));
        assert_eq!(config.cells[1].freq_hz, None);
        assert!(!config.refresh_policy.refreshes_on(SubscriberEvent::MoCall));
        assert!(config.refresh_policy.refreshes_on(SubscriberEvent::MtCall));
        assert_eq!(config.refresh_policy.periodic_interval_hours, 24.0);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = ScenarioConfig::parse("cell = id=1 ta=1\nue_cuont = 5\n").unwrap_err();
        assert!(err.to_string().contains("ue_cuont"));
        let err = ScenarioConfig::parse("cell = id=1 ta=1\nrefresh.ringtone = yes\n").unwrap_err();
        assert!(err.to_string().contains("ringtone"));
        let err = ScenarioConfig::parse("cell = id=1 ta=1 color=blue\n").unwrap_err();
        assert!(err.to_string().contains("color"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ScenarioConfig::parse("duration_seconds = 60\n").is_err());
        assert!(ScenarioConfig::parse("cell = id=1 ta=1\ncell = id=1 ta=2\n").is_err());
        assert!(
            ScenarioConfig::parse("cell = id=1 ta=1\nescalation_probability = 1.5\n").is_err()
        );
        assert!(
            ScenarioConfig::parse("cell = id=1 ta=1\nmax_records_per_message = 17\n").is_err()
        );
        assert!(ScenarioConfig::parse("cell = id=1 ta=1 neighbors=9\n").is_err());
    }

    #[test]
    fn ground_truth_survives_json() {
        let config = ScenarioConfig {
            escalation_probability: 0.2,
            imsi_injection_count: 1,
            ..two_cell_config()
        };
        let (_, truth) = generate(&config).unwrap();
        let json = serde_json::to_string(&truth).unwrap();
        let back: GroundTruth = serde_json::from_str(&json).unwrap();
        assert_eq!(back, truth);
    }
}
