//! Channel identity, metadata, and calibration.
//!
//! Every measured point in the facility is a *channel*, addressed by a
//! `(device_name, data_name)` pair. The registry owns the descriptors and
//! hands out dense integer [`ChannelId`]s in registration order. After
//! startup the registry is immutable and shared read-only across threads.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::condition::AmplifierConfig;

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("channel {0}.{1} is already registered")]
    DuplicateName(String, String),
    #[error("invalid channel name {0:?}: {1}")]
    InvalidName(String, &'static str),
    #[error("no channel named {0}.{1}")]
    NotFound(String, String),
    #[error("invalid calibration table: {0}")]
    InvalidCalibration(&'static str),
}

/// Dense channel index, assigned in registration order starting at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId(pub u32);

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Sampled losslessly on the high-rate path (voltage taps, pickups).
    Fast,
    /// Scanned periodically on the slow path (temperatures, pressures).
    Slow,
    /// Spectral frames from analyzer-style instruments; archived as an
    /// amplitude/phase file pair, never scanned live.
    Spectral,
}

/// Monotone raw-to-physical lookup map.
///
/// `Identity` is an explicit mode, not a degenerate table: channels whose
/// raw and calibrated values coincide (voltage taps) use it and get their
/// inputs back bit-exactly. Outside a piecewise-linear table the physical
/// value clamps to the nearest endpoint; sensor tables are lookup curves
/// and extrapolating past them would invent physics.
#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationTable {
    Identity,
    PiecewiseLinear {
        /// `(raw, physical)` pairs, raw strictly increasing, at least two.
        breakpoints: Vec<(f64, f64)>,
    },
}

pub type CalibrationRef = Arc<CalibrationTable>;

impl CalibrationTable {
    pub fn identity() -> Self {
        CalibrationTable::Identity
    }

    pub fn piecewise_linear(breakpoints: Vec<(f64, f64)>) -> Result<Self, RegistryError> {
        if breakpoints.len() < 2 {
            return Err(RegistryError::InvalidCalibration(
                "piecewise-linear table needs at least two breakpoints",
            ));
        }
        for pair in breakpoints.windows(2) {
            if !(pair[0].0 < pair[1].0) {
                return Err(RegistryError::InvalidCalibration(
                    "breakpoint raw values must be strictly increasing",
                ));
            }
        }
        if breakpoints.iter().any(|(r, p)| !r.is_finite() || !p.is_finite()) {
            return Err(RegistryError::InvalidCalibration(
                "breakpoints must be finite",
            ));
        }
        Ok(CalibrationTable::PiecewiseLinear { breakpoints })
    }

    /// Parse a two-column "raw physical" text table, one pair per line.
    /// Blank lines and `#` comment lines are skipped.
    pub fn from_table_text(text: &str) -> Result<Self, RegistryError> {
        let mut pts = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_ascii_whitespace();
            let raw = it.next().and_then(|s| s.parse::<f64>().ok());
            let phys = it.next().and_then(|s| s.parse::<f64>().ok());
            match (raw, phys, it.next()) {
                (Some(r), Some(p), None) => pts.push((r, p)),
                _ => {
                    return Err(RegistryError::InvalidCalibration(
                        "table line is not two float columns",
                    ))
                }
            }
        }
        Self::piecewise_linear(pts)
    }

    /// Map a raw value to physical units.
    ///
    /// Identity returns `raw` unchanged (bit-exact). Piecewise-linear
    /// interpolates between the bracketing breakpoints and clamps to the
    /// endpoint physical values outside the table. Total: never errors.
    pub fn calibrate(&self, raw: f64) -> f64 {
        match self {
            CalibrationTable::Identity => raw,
            // NaN raws (faulted channels) stay NaN instead of clamping.
            CalibrationTable::PiecewiseLinear { .. } if raw.is_nan() => f64::NAN,
            CalibrationTable::PiecewiseLinear { breakpoints } => {
                let first = breakpoints[0];
                let last = breakpoints[breakpoints.len() - 1];
                if raw <= first.0 {
                    return first.1;
                }
                if raw >= last.0 {
                    return last.1;
                }
                // Index of the first breakpoint with raw value > `raw`;
                // the bracketing segment is [idx-1, idx].
                let idx = breakpoints.partition_point(|&(r, _)| r <= raw);
                let (r0, p0) = breakpoints[idx - 1];
                let (r1, p1) = breakpoints[idx];
                p0 + (raw - r0) * (p1 - p0) / (r1 - r0)
            }
        }
    }

    /// Inverse map: physical value back to a raw value.
    ///
    /// Requires a monotone physical column (either direction); used by the
    /// simulated sources so archived `(raw, calibrated)` pairs stay
    /// mutually consistent by construction. Clamps outside the table.
    /// Identity returns the input.
    pub fn invert(&self, physical: f64) -> f64 {
        match self {
            CalibrationTable::Identity => physical,
            CalibrationTable::PiecewiseLinear { .. } if physical.is_nan() => f64::NAN,
            CalibrationTable::PiecewiseLinear { breakpoints } => {
                let n = breakpoints.len();
                // Fold a descending physical column into the ascending
                // case by negating both the column and the query.
                let sign = if breakpoints[0].1 <= breakpoints[n - 1].1 { 1.0 } else { -1.0 };
                let q = sign * physical;
                if q <= sign * breakpoints[0].1 {
                    return breakpoints[0].0;
                }
                if q >= sign * breakpoints[n - 1].1 {
                    return breakpoints[n - 1].0;
                }
                let idx = breakpoints.partition_point(|&(_, p)| sign * p <= q);
                let (r0, p0) = breakpoints[idx - 1];
                let (r1, p1) = breakpoints[idx];
                if p1 == p0 {
                    return r0;
                }
                r0 + (physical - p0) * (r1 - r0) / (p1 - p0)
            }
        }
    }
}

/// Identity and metadata for one measured point.
#[derive(Debug, Clone)]
pub struct ChannelDescriptor {
    pub device_name: String,
    pub data_name: String,
    pub kind: ChannelKind,
    pub units_raw: String,
    pub units_cal: String,
    pub calibration: CalibrationRef,
    /// Isolation-amplifier chain. Mandatory for `Fast` channels before
    /// acquisition starts; optional elsewhere.
    pub conditioning: Option<AmplifierConfig>,
    /// Setpoint channels accept network PUTs; measurement channels do not.
    pub writable: bool,
}

impl ChannelDescriptor {
    pub fn new(
        device_name: impl Into<String>,
        data_name: impl Into<String>,
        kind: ChannelKind,
        units_raw: impl Into<String>,
        units_cal: impl Into<String>,
        calibration: CalibrationRef,
    ) -> Self {
        ChannelDescriptor {
            device_name: device_name.into(),
            data_name: data_name.into(),
            kind,
            units_raw: units_raw.into(),
            units_cal: units_cal.into(),
            calibration,
            conditioning: None,
            writable: false,
        }
    }

    pub fn with_conditioning(mut self, cfg: AmplifierConfig) -> Self {
        self.conditioning = Some(cfg);
        self
    }

    pub fn writable(mut self) -> Self {
        self.writable = true;
        self
    }

    /// The wire/display form, `DEVICE.DATA`.
    pub fn full_name(&self) -> String {
        format!("{}.{}", self.device_name, self.data_name)
    }
}

/// One record of a channel stream: seconds since session start, the raw
/// measured value, and the calibrated value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time_index: f64,
    pub raw: f64,
    pub calibrated: f64,
}

/// Names are case-sensitive ASCII and become file-path components in the
/// archive, so '/' and whitespace are out. '.' is excluded as well: it is
/// the device/data separator in wire names and config keys.
pub(crate) fn validate_name(name: &str) -> Result<(), &'static str> {
    if name.is_empty() {
        return Err("name is empty");
    }
    for b in name.bytes() {
        if !b.is_ascii_graphic() {
            return Err("name must be printable ASCII without whitespace");
        }
        if b == b'/' || b == b'.' {
            return Err("name must not contain '/' or '.'");
        }
    }
    Ok(())
}

/// Split a `DEVICE.DATA` wire name into its parts.
pub fn split_full_name(full: &str) -> Option<(&str, &str)> {
    let (dev, data) = full.split_once('.')?;
    if dev.is_empty() || data.is_empty() {
        return None;
    }
    Some((dev, data))
}

/// The channel registry. Registration happens single-threaded during
/// startup; afterwards wrap it in an `Arc` and read from anywhere.
#[derive(Debug, Default)]
pub struct Registry {
    channels: Vec<ChannelDescriptor>,
    by_name: HashMap<(String, String), ChannelId>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a channel and return its dense id.
    pub fn register(&mut self, desc: ChannelDescriptor) -> Result<ChannelId, RegistryError> {
        validate_name(&desc.device_name)
            .map_err(|why| RegistryError::InvalidName(desc.device_name.clone(), why))?;
        validate_name(&desc.data_name)
            .map_err(|why| RegistryError::InvalidName(desc.data_name.clone(), why))?;
        let key = (desc.device_name.clone(), desc.data_name.clone());
        if self.by_name.contains_key(&key) {
            return Err(RegistryError::DuplicateName(key.0, key.1));
        }
        let id = ChannelId(self.channels.len() as u32);
        self.by_name.insert(key, id);
        self.channels.push(desc);
        Ok(id)
    }

    pub fn lookup(&self, device_name: &str, data_name: &str) -> Result<&ChannelDescriptor, RegistryError> {
        self.lookup_id(device_name, data_name).map(|id| &self.channels[id.index()])
    }

    pub fn lookup_id(&self, device_name: &str, data_name: &str) -> Result<ChannelId, RegistryError> {
        self.by_name
            .get(&(device_name.to_string(), data_name.to_string()))
            .copied()
            .ok_or_else(|| RegistryError::NotFound(device_name.to_string(), data_name.to_string()))
    }

    /// Resolve a `DEVICE.DATA` wire name.
    pub fn resolve_full_name(&self, full: &str) -> Result<ChannelId, RegistryError> {
        let (dev, data) = split_full_name(full)
            .ok_or_else(|| RegistryError::NotFound(full.to_string(), String::new()))?;
        self.lookup_id(dev, data)
    }

    pub fn get(&self, id: ChannelId) -> &ChannelDescriptor {
        &self.channels[id.index()]
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ChannelId, &ChannelDescriptor)> {
        self.channels
            .iter()
            .enumerate()
            .map(|(i, d)| (ChannelId(i as u32), d))
    }
}
