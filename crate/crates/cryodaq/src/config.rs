//! Daemon configuration: a strict line-oriented file with `[section]`
//! headers and `key = value` lines.
//!
//! The grammar is deliberately rigid so any parser reproduces it
//! exactly: `#` starts a comment line, blank lines are ignored, keys
//! are case-sensitive, unknown sections or keys are errors (with line
//! numbers), and a key may appear at most once. Channel attributes use
//! dotted keys, `DEVICE.DATA.attr = value`; a channel's id is its order
//! of first appearance. `docs/FORMATS.md` documents every key and
//! `examples/facility.conf` is a golden example.
//!
//! Parsing and realization are separate steps: [`DaemonConfig::parse`]
//! only checks the grammar, [`DaemonConfig::realize`] builds the
//! registry, signal sources, and engine configuration (reading
//! calibration files relative to the config's directory).

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};

use crate::acquire::{AcquisitionConfig, TimeMode, STATUS_DATA_NAME, TRIGGER_DATA_NAME};
use crate::condition::{AmplifierConfig, DEFAULT_ISOLATION_LIMIT_VOLTS};
use crate::netproto::DROPS_DATA_NAME;
use crate::quench::DetectorConfig;
use crate::registry::{CalibrationTable, ChannelDescriptor, ChannelId, ChannelKind, Registry};
use crate::simsrc::{
    derive_seed, CooldownProfile, CurrentRamp, FieldRampProfile, QuenchScenario, SignalSource,
    SlowChannelParams, SlowKind,
};

/// Environment variable consulted for the archive root when the config
/// has no `[archive] root`.
pub const ROOT_ENV: &str = "CRYODAQ_ROOT";

#[derive(Debug, Clone)]
pub struct ConfigError {
    /// 1-based line number; 0 when the problem is not tied to a line.
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.msg)
        } else {
            write!(f, "config line {}: {}", self.line, self.msg)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, msg: msg.into() })
}

/// `[facility]`: the quench scenario template shared by all voltage
/// taps, the facility seed, and the supply ramp.
#[derive(Debug, Clone)]
pub struct FacilitySection {
    pub name: String,
    pub seed: u64,
    pub supply_max_amps: f64,
    pub supply_ramp_s: f64,
    pub onset_time_s: f64,
    pub resistive_slope_v_per_s: f64,
    pub mutual_inductance_h: f64,
    pub noise_amp_v: f64,
}

impl Default for FacilitySection {
    fn default() -> Self {
        FacilitySection {
            name: "SSTF".to_string(),
            seed: 0,
            supply_max_amps: 0.0,
            supply_ramp_s: 1.0,
            // No quench unless configured.
            onset_time_s: f64::INFINITY,
            resistive_slope_v_per_s: 1.0,
            mutual_inductance_h: 0.0,
            noise_amp_v: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum CalSpec {
    Identity,
    Points(Vec<(f64, f64)>),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub enum SourceSpec {
    Tap,
    Cooldown { start_k: f64, base_k: f64, tau_s: f64 },
    Pressure { baseline: f64, amplitude: f64, freq_hz: f64 },
    Flow { baseline: f64, amplitude: f64, freq_hz: f64 },
    Field(FieldRampProfile),
    Setpoint { initial: f64 },
}

/// One channel assembled from its dotted keys. Only `kind` is
/// mandatory; everything else has documented defaults.
#[derive(Debug, Clone)]
pub struct ChannelSpec {
    pub device: String,
    pub data: String,
    /// Line of first appearance; realization errors point here.
    pub line: usize,
    pub kind: Option<ChannelKind>,
    pub units_raw: Option<String>,
    pub units_cal: Option<String>,
    pub calibration: Option<CalSpec>,
    pub source: Option<SourceSpec>,
    pub gain: Option<f64>,
    pub lp_alpha: Option<f64>,
    pub clip_volts: Option<f64>,
    pub isolation_limit_volts: Option<f64>,
    pub writable: Option<bool>,
}

impl ChannelSpec {
    fn new(device: String, data: String, line: usize) -> Self {
        ChannelSpec {
            device,
            data,
            line,
            kind: None,
            units_raw: None,
            units_cal: None,
            calibration: None,
            source: None,
            gain: None,
            lp_alpha: None,
            clip_volts: None,
            isolation_limit_volts: None,
            writable: None,
        }
    }

    fn wants_conditioning(&self) -> bool {
        self.kind == Some(ChannelKind::Fast)
            || self.gain.is_some()
            || self.lp_alpha.is_some()
            || self.clip_volts.is_some()
            || self.isolation_limit_volts.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct AcquisitionSection {
    pub fast_rate_hz: f64,
    pub slow_period_s: f64,
    pub duration_s: f64,
    pub realtime: bool,
    pub archive_queue_capacity: usize,
    /// Full channel names; `None` means every sourced channel of the
    /// matching kind, in registration order.
    pub fast_channels: Option<Vec<String>>,
    pub slow_channels: Option<Vec<String>>,
    /// Pin this to make a config byte-replayable; defaults to launch
    /// time otherwise.
    pub session_start_utc: Option<DateTime<Utc>>,
    fast_list_line: usize,
    slow_list_line: usize,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        AcquisitionSection {
            fast_rate_hz: 100_000.0,
            slow_period_s: 1.0,
            duration_s: 1.0,
            realtime: false,
            archive_queue_capacity: 256,
            fast_channels: None,
            slow_channels: None,
            session_start_utc: None,
            fast_list_line: 0,
            slow_list_line: 0,
        }
    }
}

/// `[detector]` raw values; the section's presence enables detection.
#[derive(Debug, Clone, Default)]
pub struct DetectorSection {
    pub threshold_volts: Option<f64>,
    pub hold_time_s: Option<f64>,
    pub mutual_inductance_h: Option<f64>,
    line: usize,
}

#[derive(Debug, Clone)]
pub struct ServerSection {
    pub endpoint: String,
    pub outbound_capacity: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct DaemonConfig {
    pub facility: FacilitySection,
    pub channels: Vec<ChannelSpec>,
    pub acquisition: AcquisitionSection,
    pub detector: Option<DetectorSection>,
    pub archive_root: Option<PathBuf>,
    pub server: Option<ServerSection>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Facility,
    Channels,
    Acquisition,
    Detector,
    Archive,
    Server,
}

fn parse_f64(line: usize, v: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) => Ok(x),
        _ => err(line, format!("expected a number, got {v:?}")),
    }
}

fn parse_u64(line: usize, v: &str) -> Result<u64, ConfigError> {
    match v.parse::<u64>() {
        Ok(x) => Ok(x),
        _ => err(line, format!("expected a nonnegative integer, got {v:?}")),
    }
}

fn parse_bool(line: usize, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => err(line, format!("expected true or false, got {v:?}")),
    }
}

fn parse_name_list(line: usize, v: &str) -> Result<Vec<String>, ConfigError> {
    let mut out = Vec::new();
    for item in v.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return err(line, "empty entry in channel list");
        }
        out.push(item.to_string());
    }
    Ok(out)
}

/// `a b, c d, ...` pairs for inline calibration tables.
fn parse_point_list(line: usize, v: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    let mut out = Vec::new();
    for pair in v.split(',') {
        let mut it = pair.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return err(line, format!("expected \"raw physical\" pair, got {pair:?}"));
        };
        out.push((parse_f64(line, a)?, parse_f64(line, b)?));
    }
    Ok(out)
}

fn parse_f64_args<const N: usize>(line: usize, what: &str, v: &str) -> Result<[f64; N], ConfigError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != N {
        return err(line, format!("{what} takes {N} comma-separated numbers, got {v:?}"));
    }
    let mut out = [0.0; N];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = parse_f64(line, part)?;
    }
    Ok(out)
}

fn parse_source(line: usize, v: &str) -> Result<SourceSpec, ConfigError> {
    if v == "tap" {
        return Ok(SourceSpec::Tap);
    }
    if let Some(rest) = v.strip_prefix("cooldown:") {
        let [start_k, base_k, tau_s] = parse_f64_args(line, "cooldown", rest)?;
        return Ok(SourceSpec::Cooldown { start_k, base_k, tau_s });
    }
    if let Some(rest) = v.strip_prefix("pressure:") {
        let [baseline, amplitude, freq_hz] = parse_f64_args(line, "pressure", rest)?;
        return Ok(SourceSpec::Pressure { baseline, amplitude, freq_hz });
    }
    if let Some(rest) = v.strip_prefix("flow:") {
        let [baseline, amplitude, freq_hz] = parse_f64_args(line, "flow", rest)?;
        return Ok(SourceSpec::Flow { baseline, amplitude, freq_hz });
    }
    if let Some(rest) = v.strip_prefix("field:") {
        let profile = match rest {
            "slow" => FieldRampProfile::SlowRamp,
            "fast" => FieldRampProfile::FastRamp,
            custom => {
                let [rate_t_per_s, duration_s] = parse_f64_args(line, "field", custom)?;
                if !rate_t_per_s.is_finite() || !(duration_s >= 0.0) {
                    return err(line, "field ramp needs a finite rate and duration >= 0");
                }
                FieldRampProfile::Custom { rate_t_per_s, duration_s }
            }
        };
        return Ok(SourceSpec::Field(profile));
    }
    if let Some(rest) = v.strip_prefix("setpoint:") {
        return Ok(SourceSpec::Setpoint { initial: parse_f64(line, rest.trim())? });
    }
    err(
        line,
        format!("unknown source {v:?} (expected tap, cooldown:, pressure:, flow:, field:, setpoint:)"),
    )
}

fn parse_calibration(line: usize, v: &str) -> Result<CalSpec, ConfigError> {
    if v == "identity" {
        return Ok(CalSpec::Identity);
    }
    if let Some(rest) = v.strip_prefix("points:") {
        return Ok(CalSpec::Points(parse_point_list(line, rest)?));
    }
    if let Some(rest) = v.strip_prefix("file:") {
        let rest = rest.trim();
        if rest.is_empty() {
            return err(line, "file: needs a path");
        }
        return Ok(CalSpec::File(PathBuf::from(rest)));
    }
    err(line, format!("unknown calibration {v:?} (expected identity, points:, file:)"))
}

impl DaemonConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut facility = FacilitySection::default();
        let mut channels: Vec<ChannelSpec> = Vec::new();
        let mut channel_index: HashMap<(String, String), usize> = HashMap::new();
        let mut acquisition = AcquisitionSection::default();
        let mut detector: Option<DetectorSection> = None;
        let mut archive_root: Option<PathBuf> = None;
        let mut server: Option<ServerSection> = None;

        let mut section: Option<Section> = None;
        // Duplicate-key guard, scoped per section (per channel for
        // dotted keys since the full key includes the channel name).
        let mut seen: HashMap<String, usize> = HashMap::new();

        for (idx, raw_line) in text.lines().enumerate() {
            let n = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }

            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return err(n, format!("malformed section header {line:?}"));
                };
                section = Some(match name {
                    "facility" => Section::Facility,
                    "channels" => Section::Channels,
                    "acquisition" => Section::Acquisition,
                    "detector" => {
                        detector.get_or_insert(DetectorSection { line: n, ..Default::default() });
                        Section::Detector
                    }
                    "archive" => Section::Archive,
                    "server" => {
                        server.get_or_insert(ServerSection {
                            endpoint: String::new(),
                            outbound_capacity: None,
                        });
                        Section::Server
                    }
                    _ => return err(n, format!("unknown section [{name}]")),
                });
                continue;
            }

            let Some(eq) = line.find('=') else {
                return err(n, format!("expected \"key = value\", got {line:?}"));
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            if key.is_empty() {
                return err(n, "empty key");
            }
            let Some(section) = section else {
                return err(n, format!("key {key:?} before any [section] header"));
            };

            let scope = match section {
                Section::Facility => "facility",
                Section::Channels => "channels",
                Section::Acquisition => "acquisition",
                Section::Detector => "detector",
                Section::Archive => "archive",
                Section::Server => "server",
            };
            if let Some(prev) = seen.insert(format!("{scope}/{key}"), n) {
                return err(n, format!("duplicate key {key:?} (first set on line {prev})"));
            }

            match section {
                Section::Facility => match key {
                    "name" => facility.name = value.to_string(),
                    "seed" => facility.seed = parse_u64(n, value)?,
                    "supply_max_amps" => facility.supply_max_amps = parse_f64(n, value)?,
                    "supply_ramp_s" => facility.supply_ramp_s = parse_f64(n, value)?,
                    "onset_time_s" => facility.onset_time_s = parse_f64(n, value)?,
                    "resistive_slope_v_per_s" => facility.resistive_slope_v_per_s = parse_f64(n, value)?,
                    "mutual_inductance_h" => facility.mutual_inductance_h = parse_f64(n, value)?,
                    "noise_amp_v" => facility.noise_amp_v = parse_f64(n, value)?,
                    _ => return err(n, format!("unknown [facility] key {key:?}")),
                },
                Section::Channels => {
                    let parts: Vec<&str> = key.split('.').collect();
                    let [device, data, attr] = parts[..] else {
                        return err(n, format!("channel key must be DEVICE.DATA.attr, got {key:?}"));
                    };
                    let map_key = (device.to_string(), data.to_string());
                    let i = *channel_index.entry(map_key).or_insert_with(|| {
                        channels.push(ChannelSpec::new(device.to_string(), data.to_string(), n));
                        channels.len() - 1
                    });
                    let spec = &mut channels[i];
                    match attr {
                        "kind" => {
                            spec.kind = Some(match value {
                                "fast" => ChannelKind::Fast,
                                "slow" => ChannelKind::Slow,
                                _ => return err(n, format!("kind must be fast or slow, got {value:?}")),
                            })
                        }
                        "units_raw" => spec.units_raw = Some(value.to_string()),
                        "units_cal" => spec.units_cal = Some(value.to_string()),
                        "calibration" => spec.calibration = Some(parse_calibration(n, value)?),
                        "source" => spec.source = Some(parse_source(n, value)?),
                        "gain" => spec.gain = Some(parse_f64(n, value)?),
                        "lp_alpha" => spec.lp_alpha = Some(parse_f64(n, value)?),
                        "clip_volts" => spec.clip_volts = Some(parse_f64(n, value)?),
                        "isolation_limit_volts" => spec.isolation_limit_volts = Some(parse_f64(n, value)?),
                        "writable" => spec.writable = Some(parse_bool(n, value)?),
                        _ => return err(n, format!("unknown channel attribute {attr:?}")),
                    }
                }
                Section::Acquisition => match key {
                    "fast_rate_hz" => acquisition.fast_rate_hz = parse_f64(n, value)?,
                    "slow_period_s" => acquisition.slow_period_s = parse_f64(n, value)?,
                    "duration_s" => acquisition.duration_s = parse_f64(n, value)?,
                    "realtime" => acquisition.realtime = parse_bool(n, value)?,
                    "archive_queue_capacity" => {
                        acquisition.archive_queue_capacity = parse_u64(n, value)? as usize
                    }
                    "fast_channels" => {
                        acquisition.fast_channels = Some(parse_name_list(n, value)?);
                        acquisition.fast_list_line = n;
                    }
                    "slow_channels" => {
                        acquisition.slow_channels = Some(parse_name_list(n, value)?);
                        acquisition.slow_list_line = n;
                    }
                    "session_start_utc" => match DateTime::parse_from_rfc3339(value) {
                        Ok(dt) => acquisition.session_start_utc = Some(dt.with_timezone(&Utc)),
                        Err(e) => return err(n, format!("bad RFC 3339 timestamp {value:?}: {e}")),
                    },
                    _ => return err(n, format!("unknown [acquisition] key {key:?}")),
                },
                Section::Detector => {
                    let det = detector.as_mut().unwrap();
                    match key {
                        "threshold_volts" => det.threshold_volts = Some(parse_f64(n, value)?),
                        "hold_time_s" => det.hold_time_s = Some(parse_f64(n, value)?),
                        "mutual_inductance_h" => det.mutual_inductance_h = Some(parse_f64(n, value)?),
                        _ => return err(n, format!("unknown [detector] key {key:?}")),
                    }
                }
                Section::Archive => match key {
                    "root" => archive_root = Some(PathBuf::from(value)),
                    _ => return err(n, format!("unknown [archive] key {key:?}")),
                },
                Section::Server => {
                    let srv = server.as_mut().unwrap();
                    match key {
                        "endpoint" => srv.endpoint = value.to_string(),
                        "outbound_capacity" => {
                            srv.outbound_capacity = Some(parse_u64(n, value)?.max(1) as usize)
                        }
                        _ => return err(n, format!("unknown [server] key {key:?}")),
                    }
                }
            }
        }

        if let Some(srv) = &server {
            if srv.endpoint.is_empty() {
                return err(0, "[server] section needs an endpoint");
            }
        }

        Ok(DaemonConfig {
            facility,
            channels,
            acquisition,
            detector,
            archive_root,
            server,
        })
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError { line: 0, msg: format!("cannot read {}: {e}", path.display()) })?;
        let cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((cfg, dir))
    }

    /// Build the runtime pieces. `config_dir` anchors relative paths
    /// (calibration files, archive root); `default_start` is used when
    /// the config does not pin `session_start_utc`; `env_root` is the
    /// `CRYODAQ_ROOT` fallback.
    pub fn realize(
        &self,
        config_dir: &Path,
        default_start: DateTime<Utc>,
        env_root: Option<&Path>,
    ) -> Result<Realized, ConfigError> {
        let mut registry = Registry::new();
        let mut sources = HashMap::new();
        let mut setpoints = Vec::new();

        for spec in &self.channels {
            let Some(kind) = spec.kind else {
                return err(spec.line, format!("channel {}.{} has no kind", spec.device, spec.data));
            };
            let table = match spec.calibration.as_ref().unwrap_or(&CalSpec::Identity) {
                CalSpec::Identity => CalibrationTable::identity(),
                CalSpec::Points(points) => CalibrationTable::piecewise_linear(points.clone())
                    .map_err(|e| ConfigError { line: spec.line, msg: e.to_string() })?,
                CalSpec::File(path) => {
                    let path = if path.is_absolute() { path.clone() } else { config_dir.join(path) };
                    let text = fs::read_to_string(&path).map_err(|e| ConfigError {
                        line: spec.line,
                        msg: format!("cannot read calibration file {}: {e}", path.display()),
                    })?;
                    CalibrationTable::from_table_text(&text)
                        .map_err(|e| ConfigError { line: spec.line, msg: e.to_string() })?
                }
            };
            let mut desc = ChannelDescriptor::new(
                &spec.device,
                &spec.data,
                kind,
                spec.units_raw.clone().unwrap_or_else(|| "V".to_string()),
                spec.units_cal.clone().unwrap_or_else(|| "V".to_string()),
                Arc::new(table),
            );
            if spec.wants_conditioning() {
                // Fast channels default to a passthrough chain.
                let amp = AmplifierConfig {
                    gain: spec.gain.unwrap_or(1.0),
                    lp_alpha: spec.lp_alpha.unwrap_or(1.0),
                    clip_volts: spec.clip_volts.unwrap_or(1e9),
                    isolation_limit_volts: spec
                        .isolation_limit_volts
                        .unwrap_or(DEFAULT_ISOLATION_LIMIT_VOLTS),
                }
                .validated()
                .map_err(|e| ConfigError { line: spec.line, msg: e.to_string() })?;
                desc = desc.with_conditioning(amp);
            }
            if spec.writable == Some(true) {
                desc = desc.writable();
            }
            let id = registry
                .register(desc)
                .map_err(|e| ConfigError { line: spec.line, msg: e.to_string() })?;

            if let Some(src) = &spec.source {
                let source = self.build_source(src, id, spec.line)?;
                if let SourceSpec::Setpoint { initial } = src {
                    setpoints.push((id, *initial));
                }
                sources.insert(id, source);
            }
        }

        // Bookkeeping channels the daemon itself publishes. Registered
        // after the user's channels so user ids are stable.
        let bookkeeping = |data: &str, units: &str, reg: &mut Registry| {
            reg.register(ChannelDescriptor::new(
                &self.facility.name,
                data,
                ChannelKind::Slow,
                units,
                units,
                Arc::new(CalibrationTable::identity()),
            ))
            .map_err(|e| ConfigError {
                line: 0,
                msg: format!("cannot register {}.{data}: {e}", self.facility.name),
            })
        };
        let trigger_channel = bookkeeping(TRIGGER_DATA_NAME, "V", &mut registry)?;
        let status_channel = bookkeeping(STATUS_DATA_NAME, "", &mut registry)?;
        let drops_channel = bookkeeping(DROPS_DATA_NAME, "events", &mut registry)?;

        let registry = Arc::new(registry);

        let resolve_list = |names: &Option<Vec<String>>, kind: ChannelKind, line: usize| {
            match names {
                Some(names) => names
                    .iter()
                    .map(|name| {
                        registry
                            .resolve_full_name(name)
                            .map_err(|e| ConfigError { line, msg: e.to_string() })
                    })
                    .collect::<Result<Vec<ChannelId>, ConfigError>>(),
                // Default: every sourced channel of the right kind.
                None => Ok(registry
                    .iter()
                    .filter(|(id, d)| d.kind == kind && sources.contains_key(id))
                    .map(|(id, _)| id)
                    .collect()),
            }
        };
        let fast_channels = resolve_list(
            &self.acquisition.fast_channels,
            ChannelKind::Fast,
            self.acquisition.fast_list_line,
        )?;
        let slow_channels = resolve_list(
            &self.acquisition.slow_channels,
            ChannelKind::Slow,
            self.acquisition.slow_list_line,
        )?;

        let start = self.acquisition.session_start_utc.unwrap_or(default_start);
        let mut acquisition = AcquisitionConfig::new(&self.facility.name, start);
        acquisition.fast_rate_hz = self.acquisition.fast_rate_hz;
        acquisition.slow_period_s = self.acquisition.slow_period_s;
        acquisition.duration_s = self.acquisition.duration_s;
        acquisition.fast_channels = fast_channels;
        acquisition.slow_channels = slow_channels;
        acquisition.archive_queue_capacity = self.acquisition.archive_queue_capacity;
        acquisition.time_mode = if self.acquisition.realtime {
            TimeMode::Realtime
        } else {
            TimeMode::FasterThanRealtime
        };

        let detector = match &self.detector {
            Some(det) => Some(
                DetectorConfig {
                    threshold_volts: det.threshold_volts.unwrap_or(0.1),
                    hold_time_s: det.hold_time_s.unwrap_or(0.002),
                    mutual_inductance_h: det.mutual_inductance_h.unwrap_or(0.0),
                }
                .validated()
                .map_err(|e| ConfigError { line: det.line, msg: e.to_string() })?,
            ),
            None => None,
        };

        let archive_root = match (&self.archive_root, env_root) {
            (Some(root), _) => {
                if root.is_absolute() { root.clone() } else { config_dir.join(root) }
            }
            (None, Some(root)) => root.to_path_buf(),
            (None, None) => {
                return err(0, "no archive root: set [archive] root or CRYODAQ_ROOT");
            }
        };

        Ok(Realized {
            registry,
            sources,
            setpoints,
            acquisition,
            detector,
            supply: CurrentRamp {
                max_amps: self.facility.supply_max_amps,
                duration_s: self.facility.supply_ramp_s,
            },
            archive_root,
            server: self.server.clone(),
            trigger_channel,
            status_channel,
            drops_channel,
        })
    }

    fn build_source(
        &self,
        spec: &SourceSpec,
        id: ChannelId,
        line: usize,
    ) -> Result<SignalSource, ConfigError> {
        let src = match spec {
            SourceSpec::Tap => {
                let scenario = QuenchScenario {
                    onset_time_s: self.facility.onset_time_s,
                    resistive_slope_v_per_s: self.facility.resistive_slope_v_per_s,
                    mutual_inductance_h: self.facility.mutual_inductance_h,
                    current_amps: self.facility.supply_max_amps,
                    noise_amp_v: self.facility.noise_amp_v,
                    seed: derive_seed(self.facility.seed, id.0 as u64),
                }
                .validated()
                .map_err(|e| ConfigError { line, msg: e.to_string() })?;
                SignalSource::VoltageTap { scenario }
            }
            SourceSpec::Cooldown { start_k, base_k, tau_s } => {
                let profile = CooldownProfile { t_start_k: *start_k, t_base_k: *base_k, tau_s: *tau_s }
                    .validated()
                    .map_err(|e| ConfigError { line, msg: e.to_string() })?;
                SignalSource::Cooldown { profile }
            }
            SourceSpec::Pressure { baseline, amplitude, freq_hz } => SignalSource::Slow {
                kind: SlowKind::Pressure,
                params: SlowChannelParams { baseline: *baseline, amplitude: *amplitude, freq_hz: *freq_hz },
            },
            SourceSpec::Flow { baseline, amplitude, freq_hz } => SignalSource::Slow {
                kind: SlowKind::FlowRate,
                params: SlowChannelParams { baseline: *baseline, amplitude: *amplitude, freq_hz: *freq_hz },
            },
            SourceSpec::Field(profile) => SignalSource::Field { profile: *profile },
            SourceSpec::Setpoint { initial } => SignalSource::Setpoint { value: *initial },
        };
        Ok(src)
    }
}

/// Everything `daqd` needs, built from a parsed config.
#[derive(Debug)]
pub struct Realized {
    pub registry: Arc<Registry>,
    pub sources: HashMap<ChannelId, SignalSource>,
    /// Initial values for writable channels, to seed the live table.
    pub setpoints: Vec<(ChannelId, f64)>,
    pub acquisition: AcquisitionConfig,
    pub detector: Option<DetectorConfig>,
    pub supply: CurrentRamp,
    pub archive_root: PathBuf,
    pub server: Option<ServerSection>,
    pub trigger_channel: ChannelId,
    pub status_channel: ChannelId,
    pub drops_channel: ChannelId,
}
