//! Append-only binary time-series storage.
//!
//! One key — `(date, device, data)` — maps to one data file plus one
//! metadata sidecar under `root/YYYY-MM-DD/DEVICE/DATA.dat|.meta`. The
//! data file is headerless: `n` records occupy exactly `24·n` bytes,
//! each record three little-endian IEEE-754 float64 values, so record
//! `k` lives at byte `24·k` and range queries are a binary search over
//! the time column. All semantics (units, kind, session start, rate,
//! gap markers) live in the sidecar, a line-oriented UTF-8 `key=value`
//! file.
//!
//! Time indices never decrease within a file; a batch violating that is
//! rejected whole. Readers trust only complete 24-byte records
//! (`floor(len/24)`), which is what makes tailing a file that is still
//! being written safe.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use thiserror::Error;

use crate::registry::validate_name;
use crate::textfmt;

pub const RECORD_BYTES: usize = 24;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("no archive data for {0}")]
    KeyNotFound(String),
    #[error("time regression: batch starts at {batch_first} but file last time is {last}")]
    TimeRegression { batch_first: f64, last: f64 },
    #[error("storage full writing {0}")]
    StorageFull(PathBuf),
    #[error("invalid archive key: {0}")]
    InvalidKey(&'static str),
    #[error("bad sidecar {path}: {why}")]
    CorruptSidecar { path: PathBuf, why: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One on-disk record: exactly three float64 values, 24 bytes
/// little-endian. Column meaning depends on the file kind — time series
/// carry `(time_index, raw, calibrated)`, spectral files
/// `(time_index, frequency_hz, amplitude|phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchiveRecord(pub [f64; 3]);

impl ArchiveRecord {
    pub fn new(time_index: f64, second: f64, third: f64) -> Self {
        ArchiveRecord([time_index, second, third])
    }

    pub fn time_index(&self) -> f64 {
        self.0[0]
    }

    pub fn to_bytes(&self) -> [u8; RECORD_BYTES] {
        let mut out = [0u8; RECORD_BYTES];
        for (i, v) in self.0.iter().enumerate() {
            out[i * 8..(i + 1) * 8].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8; RECORD_BYTES]) -> Self {
        let mut vals = [0.0f64; 3];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = f64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap());
        }
        ArchiveRecord(vals)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArchiveKey {
    pub date: NaiveDate,
    pub device_name: String,
    pub data_name: String,
}

impl ArchiveKey {
    pub fn new(
        date: NaiveDate,
        device_name: impl Into<String>,
        data_name: impl Into<String>,
    ) -> Result<Self, ArchiveError> {
        let key = ArchiveKey {
            date,
            device_name: device_name.into(),
            data_name: data_name.into(),
        };
        validate_name(&key.device_name).map_err(ArchiveError::InvalidKey)?;
        validate_name(&key.data_name).map_err(ArchiveError::InvalidKey)?;
        Ok(key)
    }

    pub fn with_data_suffix(&self, suffix: &str) -> ArchiveKey {
        ArchiveKey {
            date: self.date,
            device_name: self.device_name.clone(),
            data_name: format!("{}{}", self.data_name, suffix),
        }
    }
}

impl std::fmt::Display for ArchiveKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.date.format("%Y-%m-%d"), self.device_name, self.data_name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    TimeSeries,
    SpectralAmplitude,
    SpectralPhase,
}

impl FileKind {
    fn as_str(self) -> &'static str {
        match self {
            FileKind::TimeSeries => "timeseries",
            FileKind::SpectralAmplitude => "spectral_amplitude",
            FileKind::SpectralPhase => "spectral_phase",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "timeseries" => Some(FileKind::TimeSeries),
            "spectral_amplitude" => Some(FileKind::SpectralAmplitude),
            "spectral_phase" => Some(FileKind::SpectralPhase),
            _ => None,
        }
    }
}

/// Which acquisition path produced the file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateMeta {
    FastRateHz(f64),
    SlowPeriodS(f64),
}

/// A stretch of samples the archive queue had to drop: the time index
/// the gap starts at and how many records are missing. Markers live in
/// the sidecar so the data file stays purely numeric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapMarker {
    pub first_time: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SidecarMeta {
    pub device_name: String,
    pub data_name: String,
    pub kind: FileKind,
    pub units_raw: String,
    pub units_cal: String,
    pub session_start_utc: String,
    pub rate: Option<RateMeta>,
    pub gaps: Vec<GapMarker>,
}

impl SidecarMeta {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("device_name={}\n", self.device_name));
        out.push_str(&format!("data_name={}\n", self.data_name));
        out.push_str(&format!("kind={}\n", self.kind.as_str()));
        out.push_str(&format!("units_raw={}\n", self.units_raw));
        out.push_str(&format!("units_cal={}\n", self.units_cal));
        out.push_str(&format!("session_start_utc={}\n", self.session_start_utc));
        match self.rate {
            Some(RateMeta::FastRateHz(hz)) => {
                out.push_str(&format!("fast_rate_hz={}\n", textfmt::format_f64(hz)))
            }
            Some(RateMeta::SlowPeriodS(s)) => {
                out.push_str(&format!("slow_period_s={}\n", textfmt::format_f64(s)))
            }
            None => {}
        }
        for gap in &self.gaps {
            out.push_str(&format!(
                "gap={},{}\n",
                textfmt::format_f64(gap.first_time),
                gap.count
            ));
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self, ArchiveError> {
        let bad = |why: String| ArchiveError::CorruptSidecar { path: path.to_path_buf(), why };
        let mut fields: HashMap<&str, String> = HashMap::new();
        let mut rate = None;
        let mut gaps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: no '='", lineno + 1)))?;
            match key {
                "device_name" | "data_name" | "kind" | "units_raw" | "units_cal"
                | "session_start_utc" => {
                    fields.insert(key, value.to_string());
                }
                "fast_rate_hz" | "slow_period_s" => {
                    if rate.is_some() {
                        return Err(bad("both fast_rate_hz and slow_period_s present".into()));
                    }
                    let v: f64 = value
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad float", lineno + 1)))?;
                    rate = Some(if key == "fast_rate_hz" {
                        RateMeta::FastRateHz(v)
                    } else {
                        RateMeta::SlowPeriodS(v)
                    });
                }
                "gap" => {
                    let (t, n) = value
                        .split_once(',')
                        .ok_or_else(|| bad(format!("line {}: gap needs time,count", lineno + 1)))?;
                    let first_time: f64 = t
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad gap time", lineno + 1)))?;
                    let count: u64 = n
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad gap count", lineno + 1)))?;
                    gaps.push(GapMarker { first_time, count });
                }
                other => return Err(bad(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        let take = |k: &str, fields: &mut HashMap<&str, String>| {
            fields.remove(k).ok_or_else(|| bad(format!("missing key {k:?}")))
        };
        let meta = SidecarMeta {
            device_name: take("device_name", &mut fields)?,
            data_name: take("data_name", &mut fields)?,
            kind: {
                let k = take("kind", &mut fields)?;
                FileKind::parse(&k).ok_or_else(|| bad(format!("unknown kind {k:?}")))?
            },
            units_raw: take("units_raw", &mut fields)?,
            units_cal: take("units_cal", &mut fields)?,
            session_start_utc: {
                let s = take("session_start_utc", &mut fields)?;
                chrono::DateTime::parse_from_rfc3339(&s)
                    .map_err(|e| bad(format!("session_start_utc not RFC-3339: {e}")))?;
                s
            },
            rate,
            gaps,
        };
        Ok(meta)
    }
}

/// One spectral measurement frame; archived as a pair of records with
/// identical `(time, frequency)` columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFrame {
    pub time_index: f64,
    pub freq_hz: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Text,
    Binary,
}

#[derive(Debug, Default)]
struct WriterState {
    initialized: bool,
    last_time: Option<f64>,
}

/// Handle to an archive root directory.
///
/// Appends to one key are serialized internally and enforce the
/// nondecreasing-time invariant; different keys are fully independent.
/// Readers never coordinate with writers — they round file length down
/// to whole records.
#[derive(Debug)]
pub struct Archive {
    root: PathBuf,
    writers: Mutex<HashMap<ArchiveKey, Arc<Mutex<WriterState>>>>,
}

impl Archive {
    /// Open (and create if needed) an archive rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ArchiveError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Archive {
            root,
            writers: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_path(&self, key: &ArchiveKey) -> PathBuf {
        self.root
            .join(key.date.format("%Y-%m-%d").to_string())
            .join(&key.device_name)
            .join(format!("{}.dat", key.data_name))
    }

    pub fn meta_path(&self, key: &ArchiveKey) -> PathBuf {
        self.root
            .join(key.date.format("%Y-%m-%d").to_string())
            .join(&key.device_name)
            .join(format!("{}.meta", key.data_name))
    }

    fn writer_for(&self, key: &ArchiveKey) -> Arc<Mutex<WriterState>> {
        let mut map = self.writers.lock().unwrap();
        map.entry(key.clone()).or_default().clone()
    }

    /// Append a batch of records. The whole batch must be nondecreasing
    /// in time and start at or after the file's last time index;
    /// otherwise the batch is rejected and the file untouched. On first
    /// append the sidecar is written alongside the data file. Returns
    /// the number of records written.
    pub fn append(
        &self,
        key: &ArchiveKey,
        meta: &SidecarMeta,
        records: &[ArchiveRecord],
    ) -> Result<usize, ArchiveError> {
        if records.is_empty() {
            return Ok(0);
        }
        let state = self.writer_for(key);
        let mut state = state.lock().unwrap();

        let path = self.data_path(key);
        if !state.initialized {
            state.last_time = last_time_on_disk(&path)?;
            state.initialized = true;
        }

        let mut prev = state.last_time;
        for rec in records {
            let t = rec.time_index();
            if let Some(p) = prev {
                if t < p {
                    return Err(ArchiveError::TimeRegression {
                        batch_first: records[0].time_index(),
                        last: p,
                    });
                }
            }
            prev = Some(t);
        }

        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        if !path.exists() {
            fs::write(self.meta_path(key), meta.to_text()).map_err(|e| self.map_full(e, key))?;
        }

        let mut bytes = Vec::with_capacity(records.len() * RECORD_BYTES);
        for rec in records {
            bytes.extend_from_slice(&rec.to_bytes());
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| self.map_full(e, key))?;
        file.write_all(&bytes).map_err(|e| self.map_full(e, key))?;

        state.last_time = prev;
        Ok(records.len())
    }

    /// Create an empty data file plus sidecar if the key has never been
    /// written. Needed for streams whose every batch was dropped: their
    /// gap markers still need a sidecar to land in.
    pub fn ensure_exists(&self, key: &ArchiveKey, meta: &SidecarMeta) -> Result<(), ArchiveError> {
        let state = self.writer_for(key);
        let _state = state.lock().unwrap();
        let path = self.data_path(key);
        if path.exists() {
            return Ok(());
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(self.meta_path(key), meta.to_text()).map_err(|e| self.map_full(e, key))?;
        fs::write(&path, b"").map_err(|e| self.map_full(e, key))?;
        Ok(())
    }

    fn map_full(&self, e: io::Error, key: &ArchiveKey) -> ArchiveError {
        // ENOSPC deserves its own name: the daemon treats it as fatal.
        if e.raw_os_error() == Some(28) {
            ArchiveError::StorageFull(self.data_path(key))
        } else {
            ArchiveError::Io(e)
        }
    }

    fn open_data(&self, key: &ArchiveKey) -> Result<File, ArchiveError> {
        File::open(self.data_path(key))
            .map_err(|_| ArchiveError::KeyNotFound(key.to_string()))
    }

    /// All records with `time_index` in `[t_from, t_to]` inclusive, in
    /// file order. The range is located by binary search on the time
    /// column; only the matching byte range is read.
    pub fn query(
        &self,
        key: &ArchiveKey,
        t_from: f64,
        t_to: f64,
    ) -> Result<Vec<ArchiveRecord>, ArchiveError> {
        let bytes = self.select_bytes(key, t_from, t_to)?;
        Ok(decode_records(&bytes))
    }

    /// Records with `time_index` strictly greater than `after_time`.
    /// Calling repeatedly with the last seen time follows a file that a
    /// writer is still appending to; only complete records are returned.
    pub fn tail(&self, key: &ArchiveKey, after_time: f64) -> Result<Vec<ArchiveRecord>, ArchiveError> {
        let mut file = self.open_data(key)?;
        let n = complete_records(&file)?;
        let lo = partition_point(&mut file, n, |t| t <= after_time)?;
        let bytes = read_record_range(&mut file, lo, n)?;
        Ok(decode_records(&bytes))
    }

    /// Export the records in `[t_from, t_to]`. `Binary` is the exact
    /// on-disk byte range; `Text` renders one record per line with the
    /// shortest float64 round-trip representation, space-separated,
    /// LF-terminated.
    pub fn export(
        &self,
        key: &ArchiveKey,
        t_from: f64,
        t_to: f64,
        format: ExportFormat,
    ) -> Result<Vec<u8>, ArchiveError> {
        let bytes = self.select_bytes(key, t_from, t_to)?;
        match format {
            ExportFormat::Binary => Ok(bytes),
            ExportFormat::Text => {
                let mut out = String::new();
                for rec in decode_records(&bytes) {
                    out.push_str(&textfmt::format_triple(&rec.0));
                }
                Ok(out.into_bytes())
            }
        }
    }

    fn select_bytes(
        &self,
        key: &ArchiveKey,
        t_from: f64,
        t_to: f64,
    ) -> Result<Vec<u8>, ArchiveError> {
        let mut file = self.open_data(key)?;
        let n = complete_records(&file)?;
        let lo = partition_point(&mut file, n, |t| t < t_from)?;
        let hi = partition_point(&mut file, n, |t| t <= t_to)?;
        read_record_range(&mut file, lo, hi)
    }

    /// Write one spectral acquisition as an `_AMP`/`_PHS` file pair with
    /// identical `(time, frequency)` columns. Returns the two keys.
    pub fn write_spectral(
        &self,
        key_base: &ArchiveKey,
        meta_base: &SidecarMeta,
        frames: &[SpectralFrame],
    ) -> Result<(ArchiveKey, ArchiveKey), ArchiveError> {
        let amp_key = key_base.with_data_suffix("_AMP");
        let phs_key = key_base.with_data_suffix("_PHS");
        let amp_meta = SidecarMeta {
            data_name: amp_key.data_name.clone(),
            kind: FileKind::SpectralAmplitude,
            ..meta_base.clone()
        };
        let phs_meta = SidecarMeta {
            data_name: phs_key.data_name.clone(),
            kind: FileKind::SpectralPhase,
            ..meta_base.clone()
        };
        let amp: Vec<ArchiveRecord> = frames
            .iter()
            .map(|f| ArchiveRecord::new(f.time_index, f.freq_hz, f.amplitude))
            .collect();
        let phs: Vec<ArchiveRecord> = frames
            .iter()
            .map(|f| ArchiveRecord::new(f.time_index, f.freq_hz, f.phase))
            .collect();
        self.append(&amp_key, &amp_meta, &amp)?;
        self.append(&phs_key, &phs_meta, &phs)?;
        Ok((amp_key, phs_key))
    }

    /// Enumerate keys under the root, optionally restricted to one date
    /// and/or a device-name prefix. Deterministic lexicographic order
    /// (date, device, data). Entries that do not look like archive
    /// content are skipped.
    pub fn list_keys(
        &self,
        date_filter: Option<NaiveDate>,
        device_prefix: Option<&str>,
    ) -> Result<Vec<ArchiveKey>, ArchiveError> {
        let mut keys = Vec::new();
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(_) => return Ok(keys),
        };
        for date_entry in entries.flatten() {
            let date_name = date_entry.file_name();
            let Some(date_str) = date_name.to_str() else { continue };
            let Ok(date) = NaiveDate::parse_from_str(date_str, "%Y-%m-%d") else { continue };
            if date_filter.is_some_and(|d| d != date) {
                continue;
            }
            let Ok(devices) = fs::read_dir(date_entry.path()) else { continue };
            for dev_entry in devices.flatten() {
                let dev_name = dev_entry.file_name();
                let Some(device) = dev_name.to_str() else { continue };
                if device_prefix.is_some_and(|p| !device.starts_with(p)) {
                    continue;
                }
                let Ok(files) = fs::read_dir(dev_entry.path()) else { continue };
                for file_entry in files.flatten() {
                    let file_name = file_entry.file_name();
                    let Some(name) = file_name.to_str() else { continue };
                    if let Some(data) = name.strip_suffix(".dat") {
                        if let Ok(key) = ArchiveKey::new(date, device, data) {
                            keys.push(key);
                        }
                    }
                }
            }
        }
        keys.sort();
        Ok(keys)
    }

    pub fn read_sidecar(&self, key: &ArchiveKey) -> Result<SidecarMeta, ArchiveError> {
        let path = self.meta_path(key);
        let text = fs::read_to_string(&path)
            .map_err(|_| ArchiveError::KeyNotFound(key.to_string()))?;
        SidecarMeta::from_text(&text, &path)
    }

    /// Record dropped-sample gaps in the key's sidecar. Gap lines are
    /// append-only, so this never rewrites existing metadata.
    pub fn add_gap_markers(&self, key: &ArchiveKey, gaps: &[GapMarker]) -> Result<(), ArchiveError> {
        if gaps.is_empty() {
            return Ok(());
        }
        let path = self.meta_path(key);
        if !path.exists() {
            return Err(ArchiveError::KeyNotFound(key.to_string()));
        }
        let mut text = String::new();
        for gap in gaps {
            text.push_str(&format!(
                "gap={},{}\n",
                textfmt::format_f64(gap.first_time),
                gap.count
            ));
        }
        let mut file = OpenOptions::new().append(true).open(&path)?;
        file.write_all(text.as_bytes())?;
        Ok(())
    }

    /// Number of complete records currently on disk for `key`.
    pub fn record_count(&self, key: &ArchiveKey) -> Result<u64, ArchiveError> {
        let file = self.open_data(key)?;
        complete_records(&file)
    }
}

/// Parse a text export back into records; inverse of `ExportFormat::Text`.
pub fn parse_text_export(text: &str) -> Result<Vec<ArchiveRecord>, ArchiveError> {
    text.lines()
        .map(|line| {
            textfmt::parse_triple(line)
                .map(ArchiveRecord)
                .ok_or_else(|| {
                    ArchiveError::Io(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("bad export line {line:?}"),
                    ))
                })
        })
        .collect()
}

fn decode_records(bytes: &[u8]) -> Vec<ArchiveRecord> {
    bytes
        .chunks_exact(RECORD_BYTES)
        .map(|c| ArchiveRecord::from_bytes(c.try_into().unwrap()))
        .collect()
}

/// Whole records only: a concurrent writer may have appended a partial
/// record past this point.
fn complete_records(file: &File) -> Result<u64, ArchiveError> {
    Ok(file.metadata()?.len() / RECORD_BYTES as u64)
}

fn last_time_on_disk(path: &Path) -> Result<Option<f64>, ArchiveError> {
    let Ok(mut file) = File::open(path) else {
        return Ok(None);
    };
    let n = complete_records(&file)?;
    if n == 0 {
        return Ok(None);
    }
    Ok(Some(time_at(&mut file, n - 1)?))
}

fn time_at(file: &mut File, idx: u64) -> Result<f64, ArchiveError> {
    let mut buf = [0u8; 8];
    file.seek(SeekFrom::Start(idx * RECORD_BYTES as u64))?;
    file.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// First record index in `[0, n]` where `pred(time)` turns false; the
/// time column is nondecreasing, so `pred` must be monotone
/// (true-prefix). O(log n) seeks.
fn partition_point(
    file: &mut File,
    n: u64,
    pred: impl Fn(f64) -> bool,
) -> Result<u64, ArchiveError> {
    let (mut lo, mut hi) = (0u64, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(time_at(file, mid)?) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn read_record_range(file: &mut File, lo: u64, hi: u64) -> Result<Vec<u8>, ArchiveError> {
    if lo >= hi {
        return Ok(Vec::new());
    }
    let mut buf = vec![0u8; ((hi - lo) * RECORD_BYTES as u64) as usize];
    file.seek(SeekFrom::Start(lo * RECORD_BYTES as u64))?;
    file.read_exact(&mut buf)?;
    Ok(buf)
}
