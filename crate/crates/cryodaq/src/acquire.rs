//! Acquisition engine: drives the simulated sources through
//! conditioning, calibration, quench detection, archiving, and live
//! publication for one bounded session.
//!
//! Two producer threads cover the two rate classes. The fast producer
//! walks every fast channel at `fast_rate_hz`, feeds each sample to the
//! quench detector synchronously (that path is lossless by
//! construction), and batches records toward a bounded archive queue.
//! The slow producer scans the slow channels every `slow_period_s` and
//! additionally publishes each reading to the live hub. A single writer
//! thread drains the queue so all file appends happen in one place.
//!
//! When the archive queue is full the fast producer does not block: the
//! batch is dropped and accounted as a gap, because stalling the
//! producer would also stall the detector. Detector triggers travel on
//! a separate unbounded channel and are never dropped.
//!
//! All sample timestamps come from [`session_clock`] / [`slow_clock`];
//! the wall clock never leaks into archived bytes, so replaying a
//! session with the same config and seed reproduces the archive
//! byte for byte (provided no gaps occurred, since gap placement
//! depends on queue timing).

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::mem;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat, Utc};
use crossbeam_channel::{bounded, unbounded, Receiver, Sender, TrySendError};
use thiserror::Error;

use crate::archive::{Archive, ArchiveError, ArchiveKey, ArchiveRecord, FileKind, GapMarker, RateMeta, SidecarMeta};
use crate::condition::Conditioner;
use crate::netproto::Hub;
use crate::quench::{DetectorConfig, DetectorState, QuenchTrigger};
use crate::registry::{ChannelId, ChannelKind, Registry, Sample};
use crate::simsrc::{CurrentRamp, SignalSource};
use crate::textfmt;

/// Trigger records and the trigger live channel use this data name.
pub const TRIGGER_DATA_NAME: &str = "QUENCH_TRIG";
/// Session status live channel (never archived by the engine).
pub const STATUS_DATA_NAME: &str = "STATUS";

/// Time of fast sample `k`: exactly `k / rate`. This division is the
/// only source of fast-path timestamps, so the stride is bit-stable
/// across the whole session.
pub fn session_clock(k: u64, fast_rate_hz: f64) -> f64 {
    k as f64 / fast_rate_hz
}

/// Time of slow scan `k`: exactly `k * period`.
pub fn slow_clock(k: u64, slow_period_s: f64) -> f64 {
    k as f64 * slow_period_s
}

/// Whether the session is paced against the wall clock or runs as fast
/// as the machine allows. Both modes produce identical archive bytes;
/// pacing only inserts sleeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeMode {
    /// Sleep so simulated time tracks wall time (slow scans exact, fast
    /// path paced in coarse blocks).
    Realtime,
    /// No sleeps; a simulated hour may take seconds.
    #[default]
    FasterThanRealtime,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid acquisition config: {0}")]
    ConfigInvalid(String),
    #[error("session {0} already recorded under this archive root")]
    SessionExists(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

/// Everything the engine needs besides the acquisition parameters.
pub struct SessionInputs<'a> {
    pub registry: &'a Registry,
    /// One source per configured channel, keyed by id.
    pub sources: &'a HashMap<ChannelId, SignalSource>,
    /// Magnet supply profile; provides dI/dt for taps and the detector.
    pub supply: CurrentRamp,
    /// Applied to every fast channel when present.
    pub detector: Option<DetectorConfig>,
    pub archive: &'a Archive,
    /// Live publication sink. Without it the session only archives.
    pub hub: Option<&'a Hub>,
}

#[derive(Debug, Clone)]
pub struct AcquisitionConfig {
    /// Device name for the synthetic trigger/status streams.
    pub facility: String,
    pub fast_rate_hz: f64,
    pub slow_period_s: f64,
    pub duration_s: f64,
    pub fast_channels: Vec<ChannelId>,
    pub slow_channels: Vec<ChannelId>,
    /// Labels the session and the archive date directory.
    pub session_start_utc: DateTime<Utc>,
    /// Bounded archive queue length, in batches.
    pub archive_queue_capacity: usize,
    /// Records per fast-channel batch sent to the writer.
    pub fast_batch_len: usize,
    pub time_mode: TimeMode,
}

impl AcquisitionConfig {
    /// Facility defaults: 100 kHz fast path, 1 s slow scan.
    pub fn new(facility: impl Into<String>, session_start_utc: DateTime<Utc>) -> Self {
        AcquisitionConfig {
            facility: facility.into(),
            fast_rate_hz: 100_000.0,
            slow_period_s: 1.0,
            duration_s: 1.0,
            fast_channels: Vec::new(),
            slow_channels: Vec::new(),
            session_start_utc,
            archive_queue_capacity: 256,
            fast_batch_len: 4096,
            time_mode: TimeMode::FasterThanRealtime,
        }
    }

    /// Fast samples per channel: one at every `k / rate` for
    /// `0 <= k <= floor(duration * rate)`, closed interval.
    pub fn fast_sample_count(&self) -> u64 {
        (self.duration_s * self.fast_rate_hz).floor() as u64 + 1
    }

    /// Slow scans: one at every `k * period` for
    /// `0 <= k <= floor(duration / period)`.
    pub fn slow_scan_count(&self) -> u64 {
        (self.duration_s / self.slow_period_s).floor() as u64 + 1
    }

    pub fn session_id(&self) -> String {
        self.session_start_utc.format("%Y%m%dT%H%M%SZ").to_string()
    }

    fn validate(&self, io: &SessionInputs<'_>) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::ConfigInvalid(msg));
        if !(self.fast_rate_hz > 0.0 && self.fast_rate_hz.is_finite()) {
            return bad(format!("fast_rate_hz = {} must be positive", self.fast_rate_hz));
        }
        if !(self.slow_period_s > 0.0 && self.slow_period_s.is_finite()) {
            return bad(format!("slow_period_s = {} must be positive", self.slow_period_s));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration_s = {} must be nonnegative", self.duration_s));
        }
        if self.archive_queue_capacity == 0 {
            return bad("archive_queue_capacity must be at least 1".into());
        }
        if self.fast_batch_len == 0 {
            return bad("fast_batch_len must be at least 1".into());
        }
        if self.facility.is_empty() {
            return bad("facility name must not be empty".into());
        }

        let mut seen = HashSet::new();
        for (&id, class) in self
            .fast_channels
            .iter()
            .map(|id| (id, "fast"))
            .chain(self.slow_channels.iter().map(|id| (id, "slow")))
        {
            if id.index() >= io.registry.len() {
                return bad(format!("channel id {} is not registered", id.0));
            }
            let desc = io.registry.get(id);
            if !seen.insert(id) {
                return bad(format!("channel {} listed more than once", desc.full_name()));
            }
            if !io.sources.contains_key(&id) {
                return bad(format!("channel {} has no signal source", desc.full_name()));
            }
            match class {
                "fast" => {
                    if desc.kind != ChannelKind::Fast {
                        return bad(format!("channel {} is not a fast channel", desc.full_name()));
                    }
                    // Fast channels must be conditioned before acquisition.
                    if desc.conditioning.is_none() {
                        return bad(format!("fast channel {} has no conditioning chain", desc.full_name()));
                    }
                }
                _ => {
                    if desc.kind != ChannelKind::Slow {
                        return bad(format!("channel {} is not a slow channel", desc.full_name()));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Running,
    Completed,
    Faulted,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Running => "running",
            SessionStatus::Completed => "completed",
            SessionStatus::Faulted => "faulted",
        }
    }

    /// Numeric code used on the live STATUS channel.
    pub fn code(self) -> f64 {
        match self {
            SessionStatus::Running => 0.0,
            SessionStatus::Completed => 1.0,
            SessionStatus::Faulted => 2.0,
        }
    }
}

/// Per-channel accounting. The invariant `generated == archived +
/// gap_samples` holds for every channel in every completed session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub generated: u64,
    pub archived: u64,
    pub gap_samples: u64,
}

#[derive(Debug, Clone)]
pub struct SessionHandle {
    pub session_id: String,
    pub status: SessionStatus,
    pub channel_stats: Vec<(ChannelId, ChannelStats)>,
    pub triggers: Vec<QuenchTrigger>,
}

impl SessionHandle {
    pub fn stats_for(&self, id: ChannelId) -> Option<ChannelStats> {
        self.channel_stats.iter().find(|(c, _)| *c == id).map(|(_, s)| *s)
    }

    pub fn generated_total(&self) -> u64 {
        self.channel_stats.iter().map(|(_, s)| s.generated).sum()
    }

    pub fn archived_total(&self) -> u64 {
        self.channel_stats.iter().map(|(_, s)| s.archived).sum()
    }

    pub fn gap_total(&self) -> u64 {
        self.channel_stats.iter().map(|(_, s)| s.gap_samples).sum()
    }
}

/// Sleep until wall time `start + t` (no-op if already past).
fn pace(start: Instant, t: f64) {
    let target = start + Duration::from_secs_f64(t);
    let now = Instant::now();
    if target > now {
        thread::sleep(target - now);
    }
}

/// Per-channel producer state shared by both rate classes.
struct ChanState {
    id: ChannelId,
    key_index: usize,
    source: SignalSource,
    conditioner: Option<Conditioner>,
    detector: Option<DetectorState>,
    writable: bool,
    batch: Vec<ArchiveRecord>,
    stats: ChannelStats,
    gaps: Vec<GapMarker>,
}

enum FlushOutcome {
    Sent,
    Dropped,
    WriterGone,
}

impl ChanState {
    fn flush(&mut self, tx: &Sender<(usize, Vec<ArchiveRecord>)>, batch_cap: usize, gap_counter: &AtomicU64) -> FlushOutcome {
        if self.batch.is_empty() {
            return FlushOutcome::Sent;
        }
        let records = mem::replace(&mut self.batch, Vec::with_capacity(batch_cap));
        let n = records.len() as u64;
        match tx.try_send((self.key_index, records)) {
            Ok(()) => {
                self.stats.archived += n;
                FlushOutcome::Sent
            }
            Err(TrySendError::Full((_, records))) => {
                // Queue full: drop the batch rather than stall the
                // detector path, but account for every sample.
                self.stats.gap_samples += n;
                gap_counter.fetch_add(n, Ordering::Relaxed);
                self.gaps.push(GapMarker {
                    first_time: records[0].time_index(),
                    count: n,
                });
                FlushOutcome::Dropped
            }
            Err(TrySendError::Disconnected(_)) => FlushOutcome::WriterGone,
        }
    }
}

struct ProducerOutcome {
    chans: Vec<ChanState>,
    writer_gone: bool,
}

/// Run one acquisition session to completion.
///
/// Post-conditions on success: every configured channel produced its
/// full closed-interval sample ladder, everything generated was either
/// archived or gap-marked in the sidecar, all detector triggers were
/// archived under `<facility>/QUENCH_TRIG`, and the session file under
/// `sessions/` records the final status.
pub fn run_session(cfg: &AcquisitionConfig, io: SessionInputs<'_>) -> Result<SessionHandle, EngineError> {
    cfg.validate(&io)?;

    let date = cfg.session_start_utc.date_naive();
    let start_text = cfg.session_start_utc.to_rfc3339_opts(SecondsFormat::Secs, true);
    let session_id = cfg.session_id();

    // Archive keys and sidecars, fast channels first then slow; the
    // trigger stream is appended last.
    let mut keys: Vec<(ArchiveKey, SidecarMeta)> = Vec::new();
    let mut fast_chans = Vec::new();
    let mut slow_chans = Vec::new();
    for (list, out, rate) in [
        (&cfg.fast_channels, &mut fast_chans, RateMeta::FastRateHz(cfg.fast_rate_hz)),
        (&cfg.slow_channels, &mut slow_chans, RateMeta::SlowPeriodS(cfg.slow_period_s)),
    ] {
        for &id in list.iter() {
            let desc = io.registry.get(id);
            let key = ArchiveKey::new(date, &desc.device_name, &desc.data_name)
                .map_err(|e| EngineError::ConfigInvalid(e.to_string()))?;
            keys.push((
                key,
                SidecarMeta {
                    device_name: desc.device_name.clone(),
                    data_name: desc.data_name.clone(),
                    kind: FileKind::TimeSeries,
                    units_raw: desc.units_raw.clone(),
                    units_cal: desc.units_cal.clone(),
                    session_start_utc: start_text.clone(),
                    rate: Some(rate),
                    gaps: Vec::new(),
                },
            ));
            out.push(ChanState {
                id,
                key_index: keys.len() - 1,
                source: io.sources[&id].clone(),
                conditioner: desc.conditioning.map(Conditioner::new),
                detector: None,
                writable: desc.writable,
                batch: Vec::new(),
                stats: ChannelStats::default(),
                gaps: Vec::new(),
            });
        }
    }
    if let Some(det) = io.detector {
        for ch in fast_chans.iter_mut() {
            ch.detector = Some(DetectorState::new(det, cfg.fast_rate_hz, ch.id));
        }
    }
    let trig_key = ArchiveKey::new(date, &cfg.facility, TRIGGER_DATA_NAME)
        .map_err(|e| EngineError::ConfigInvalid(e.to_string()))?;
    let trig_meta = SidecarMeta {
        device_name: cfg.facility.clone(),
        data_name: TRIGGER_DATA_NAME.to_string(),
        kind: FileKind::TimeSeries,
        units_raw: "V".to_string(),
        units_cal: "V".to_string(),
        session_start_utc: start_text.clone(),
        rate: None,
        gaps: Vec::new(),
    };

    // Live channel ids for triggers and status, when registered.
    let trig_channel = io.hub.and_then(|h| h.registry().lookup_id(&cfg.facility, TRIGGER_DATA_NAME).ok());
    let status_channel = io.hub.and_then(|h| h.registry().lookup_id(&cfg.facility, STATUS_DATA_NAME).ok());

    let session_path = session_meta_path(io.archive, &session_id);
    create_session_meta(&session_path, cfg, &session_id, &start_text)?;

    let n_fast = cfg.fast_sample_count();
    let n_slow = cfg.slow_scan_count();
    let realtime = cfg.time_mode == TimeMode::Realtime;
    let start_instant = Instant::now();
    let gap_counter = AtomicU64::new(0);

    let (data_tx, data_rx) = bounded::<(usize, Vec<ArchiveRecord>)>(cfg.archive_queue_capacity);
    let (trig_tx, trig_rx) = unbounded::<QuenchTrigger>();

    let supply = io.supply;
    let registry = io.registry;
    let hub = io.hub;

    let (fast_out, slow_out, writer_out) = thread::scope(|s| {
        let writer = s.spawn(|| {
            run_writer(
                data_rx,
                trig_rx,
                io.archive,
                &keys,
                &trig_key,
                &trig_meta,
                hub,
                trig_channel,
            )
        });

        let fast_tx = data_tx.clone();
        let fast = s.spawn(|| {
            run_fast_producer(
                fast_chans,
                n_fast,
                cfg.fast_rate_hz,
                supply,
                registry,
                fast_tx,
                trig_tx,
                cfg.fast_batch_len,
                &gap_counter,
                realtime.then_some(start_instant),
            )
        });

        let slow_tx = data_tx.clone();
        let slow = s.spawn(|| {
            run_slow_producer(
                slow_chans,
                n_slow,
                cfg.slow_period_s,
                supply,
                registry,
                hub,
                status_channel,
                slow_tx,
                &gap_counter,
                realtime.then_some(start_instant),
            )
        });

        drop(data_tx);
        let fast_out = fast.join().expect("fast producer panicked");
        let slow_out = slow.join().expect("slow producer panicked");
        let writer_out = writer.join().expect("archive writer panicked");
        (fast_out, slow_out, writer_out)
    });

    let (triggers, writer_result) = writer_out;

    let mut channel_stats = Vec::new();
    let mut gap_work: Vec<(usize, Vec<GapMarker>)> = Vec::new();
    for ch in fast_out.chans.iter().chain(slow_out.chans.iter()) {
        channel_stats.push((ch.id, ch.stats));
        if !ch.gaps.is_empty() {
            gap_work.push((ch.key_index, ch.gaps.clone()));
        }
    }

    let faulted = writer_result.is_err() || fast_out.writer_gone || slow_out.writer_gone;

    // Gap markers land in the sidecars after the writer has retired, so
    // they never race the initial sidecar write. Best-effort once the
    // session is already faulted.
    let mut gap_error = None;
    for (key_index, gaps) in &gap_work {
        let (key, meta) = &keys[*key_index];
        let wrote = io.archive.ensure_exists(key, meta).and_then(|()| io.archive.add_gap_markers(key, gaps));
        if let Err(e) = wrote {
            gap_error.get_or_insert(e);
        }
    }
    let faulted = faulted || gap_error.is_some();
    let status = if faulted { SessionStatus::Faulted } else { SessionStatus::Completed };

    if let (Some(h), Some(sid)) = (hub, status_channel) {
        // One period past the last scan keeps STATUS event times
        // strictly increasing; still a pure function of the config.
        let t_end = slow_clock(n_slow, cfg.slow_period_s);
        h.publish(sid, [t_end, status.code(), gap_counter.load(Ordering::Relaxed) as f64], false);
    }

    finalize(&session_path, cfg, &session_id, &start_text, status, &channel_stats, &triggers)?;

    writer_result?;
    if let Some(e) = gap_error {
        return Err(EngineError::Archive(e));
    }

    Ok(SessionHandle {
        session_id,
        status,
        channel_stats,
        triggers,
    })
}

#[allow(clippy::too_many_arguments)] // internal, one call site
fn run_fast_producer(
    mut chans: Vec<ChanState>,
    n_fast: u64,
    fast_rate_hz: f64,
    supply: CurrentRamp,
    registry: &Registry,
    data_tx: Sender<(usize, Vec<ArchiveRecord>)>,
    trig_tx: Sender<QuenchTrigger>,
    batch_len: usize,
    gap_counter: &AtomicU64,
    realtime_start: Option<Instant>,
) -> ProducerOutcome {
    for ch in chans.iter_mut() {
        ch.batch = Vec::with_capacity(batch_len);
    }
    let mut writer_gone = false;
    'outer: for k in 0..n_fast {
        let t = session_clock(k, fast_rate_hz);
        if let Some(start) = realtime_start {
            // Coarse pacing: block boundaries only, the detector does
            // not need sample-exact wall alignment.
            if k % 1024 == 0 {
                pace(start, t);
            }
        }
        let di_dt = supply.di_dt_at(t);
        for ch in chans.iter_mut() {
            let table = &registry.get(ch.id).calibration;
            let src = ch.source.raw_at(table, di_dt, t);
            // Fast channels always have a conditioner (validated).
            let raw = ch.conditioner.as_mut().map(|c| c.step(src)).unwrap_or(src);
            let calibrated = table.calibrate(raw);
            ch.stats.generated += 1;
            if let Some(det) = ch.detector.as_mut() {
                let sample = Sample { time_index: t, raw, calibrated };
                if let Some(trig) = det.step(&sample, di_dt) {
                    // Unbounded: the trigger path never drops.
                    let _ = trig_tx.send(trig);
                }
            }
            ch.batch.push(ArchiveRecord::new(t, raw, calibrated));
            if ch.batch.len() >= batch_len {
                if let FlushOutcome::WriterGone = ch.flush(&data_tx, batch_len, gap_counter) {
                    writer_gone = true;
                    break 'outer;
                }
            }
        }
    }
    if !writer_gone {
        for ch in chans.iter_mut() {
            if let FlushOutcome::WriterGone = ch.flush(&data_tx, 0, gap_counter) {
                writer_gone = true;
                break;
            }
        }
    }
    ProducerOutcome { chans, writer_gone }
}

#[allow(clippy::too_many_arguments)] // internal, one call site
fn run_slow_producer(
    mut chans: Vec<ChanState>,
    n_slow: u64,
    slow_period_s: f64,
    supply: CurrentRamp,
    registry: &Registry,
    hub: Option<&Hub>,
    status_channel: Option<ChannelId>,
    data_tx: Sender<(usize, Vec<ArchiveRecord>)>,
    gap_counter: &AtomicU64,
    realtime_start: Option<Instant>,
) -> ProducerOutcome {
    let mut writer_gone = false;
    'outer: for k in 0..n_slow {
        let t = slow_clock(k, slow_period_s);
        if let Some(start) = realtime_start {
            pace(start, t);
        }
        let di_dt = supply.di_dt_at(t);
        for ch in chans.iter_mut() {
            let table = &registry.get(ch.id).calibration;
            // Writable channels (setpoints) archive whatever the live
            // table holds, so operator PUTs become part of the record.
            let src = match (ch.writable, hub) {
                (true, Some(h)) => h.live().read(ch.id)[1],
                _ => ch.source.raw_at(table, di_dt, t),
            };
            let raw = ch.conditioner.as_mut().map(|c| c.step(src)).unwrap_or(src);
            let calibrated = table.calibrate(raw);
            ch.stats.generated += 1;
            ch.batch.push(ArchiveRecord::new(t, raw, calibrated));
            if let FlushOutcome::WriterGone = ch.flush(&data_tx, 0, gap_counter) {
                writer_gone = true;
                break 'outer;
            }
            if let Some(h) = hub {
                h.publish(ch.id, [t, raw, calibrated], false);
            }
        }
        if let (Some(h), Some(sid)) = (hub, status_channel) {
            h.publish(
                sid,
                [t, SessionStatus::Running.code(), gap_counter.load(Ordering::Relaxed) as f64],
                false,
            );
        }
    }
    ProducerOutcome { chans, writer_gone }
}

type WriterResult = (Vec<QuenchTrigger>, Result<(), EngineError>);

#[allow(clippy::too_many_arguments)] // internal, one call site
fn run_writer(
    data_rx: Receiver<(usize, Vec<ArchiveRecord>)>,
    trig_rx: Receiver<QuenchTrigger>,
    archive: &Archive,
    keys: &[(ArchiveKey, SidecarMeta)],
    trig_key: &ArchiveKey,
    trig_meta: &SidecarMeta,
    hub: Option<&Hub>,
    trig_channel: Option<ChannelId>,
) -> WriterResult {
    let mut triggers = Vec::new();
    let mut data_open = true;
    let mut trig_open = true;

    let handle_data = |msg: (usize, Vec<ArchiveRecord>)| -> Result<(), EngineError> {
        let (key_index, records) = msg;
        let (key, meta) = &keys[key_index];
        archive.append(key, meta, &records)?;
        Ok(())
    };
    let handle_trig = |trig: QuenchTrigger, triggers: &mut Vec<QuenchTrigger>| -> Result<(), EngineError> {
        let triple = [trig.trigger_time_s, trig.compensated_volts_at_trigger, 1.0];
        archive.append(trig_key, trig_meta, &[ArchiveRecord(triple)])?;
        if let (Some(h), Some(id)) = (hub, trig_channel) {
            h.publish(id, triple, true);
        }
        triggers.push(trig);
        Ok(())
    };

    while data_open || trig_open {
        if data_open && trig_open {
            crossbeam_channel::select! {
                recv(data_rx) -> msg => match msg {
                    Ok(m) => {
                        if let Err(e) = handle_data(m) {
                            return (triggers, Err(e));
                        }
                    }
                    Err(_) => data_open = false,
                },
                recv(trig_rx) -> msg => match msg {
                    Ok(t) => {
                        if let Err(e) = handle_trig(t, &mut triggers) {
                            return (triggers, Err(e));
                        }
                    }
                    Err(_) => trig_open = false,
                },
            }
        } else if data_open {
            match data_rx.recv() {
                Ok(m) => {
                    if let Err(e) = handle_data(m) {
                        return (triggers, Err(e));
                    }
                }
                Err(_) => data_open = false,
            }
        } else {
            match trig_rx.recv() {
                Ok(t) => {
                    if let Err(e) = handle_trig(t, &mut triggers) {
                        return (triggers, Err(e));
                    }
                }
                Err(_) => trig_open = false,
            }
        }
    }
    (triggers, Ok(()))
}

fn session_meta_path(archive: &Archive, session_id: &str) -> PathBuf {
    archive.root().join("sessions").join(format!("{session_id}.meta"))
}

fn create_session_meta(
    path: &Path,
    cfg: &AcquisitionConfig,
    session_id: &str,
    start_text: &str,
) -> Result<(), EngineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| EngineError::Archive(e.into()))?;
    }
    // create_new makes the id collision check atomic: one session per
    // start timestamp per archive root.
    let mut file = match fs::OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(EngineError::SessionExists(session_id.to_string()));
        }
        Err(e) => return Err(EngineError::Archive(e.into())),
    };
    let text = session_meta_text(cfg, session_id, start_text, SessionStatus::Running, None);
    file.write_all(text.as_bytes()).map_err(|e| EngineError::Archive(e.into()))?;
    Ok(())
}

fn finalize(
    path: &Path,
    cfg: &AcquisitionConfig,
    session_id: &str,
    start_text: &str,
    status: SessionStatus,
    stats: &[(ChannelId, ChannelStats)],
    triggers: &[QuenchTrigger],
) -> Result<(), EngineError> {
    let mut totals = ChannelStats::default();
    for (_, s) in stats {
        totals.generated += s.generated;
        totals.archived += s.archived;
        totals.gap_samples += s.gap_samples;
    }
    let text = session_meta_text(cfg, session_id, start_text, status, Some((totals, triggers.len())));
    fs::write(path, text).map_err(|e| EngineError::Archive(e.into()))?;
    Ok(())
}

fn session_meta_text(
    cfg: &AcquisitionConfig,
    session_id: &str,
    start_text: &str,
    status: SessionStatus,
    outcome: Option<(ChannelStats, usize)>,
) -> String {
    let mut text = format!(
        "session_id={session_id}\nstart={start_text}\nduration_s={}\nfast_rate_hz={}\nslow_period_s={}\nfast_channels={}\nslow_channels={}\nstatus={}\n",
        textfmt::format_f64(cfg.duration_s),
        textfmt::format_f64(cfg.fast_rate_hz),
        textfmt::format_f64(cfg.slow_period_s),
        cfg.fast_channels.len(),
        cfg.slow_channels.len(),
        status.as_str(),
    );
    if let Some((totals, n_triggers)) = outcome {
        text.push_str(&format!(
            "generated={}\narchived={}\ngap_samples={}\ntriggers={}\n",
            totals.generated, totals.archived, totals.gap_samples, n_triggers
        ));
    }
    text
}
