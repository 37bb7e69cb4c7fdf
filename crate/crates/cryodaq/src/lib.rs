//! Simulated cryogenic magnet test-stand DAQ.
//!
//! `cryodaq` models the data-acquisition and protection chain of a
//! superconducting-magnet test facility end to end, with deterministic
//! simulated signal sources standing in for the hardware:
//!
//! - [`registry`] — channel identity, metadata, and piecewise-linear
//!   calibration; every other subsystem resolves channels through it.
//! - [`condition`] — isolation-amplifier signal conditioning (selectable
//!   gain, single-pole low-pass, output clipping, isolation limit).
//! - [`simsrc`] — deterministic facility signals: background-field ramps,
//!   cool-down curves, helium-loop baselines, and voltage taps with
//!   injectable quench events.
//! - [`acquire`] — the dual-rate engine: a lossless fast sampling path
//!   feeding the quench detector and archive, and a periodic slow scan
//!   path feeding monitoring and archive.
//! - [`quench`] — threshold/hold-time quench detection on inductively
//!   compensated tap voltages, plus the energy-dump circuit model.
//! - [`archive`] — append-only binary time-series files (24-byte record
//!   triples) keyed by date/device/data, with metadata sidecars, range
//!   queries, tailing, and text/binary export.
//! - [`netproto`] — a minimal channel-access-style TCP protocol: get/put
//!   and monitor subscriptions on live channel values.
//! - [`config`] — the line-oriented daemon config file.
//! - [`cli`] — the operator tools (`daqd`, `xyp`, `xymon`, `bench`)
//!   behind the `cryodaq` binary.
//!
//! Two small helpers round it out: [`plot`] renders standalone SVG line
//! plots, [`textfmt`] pins the shortest-round-trip float format every
//! text surface shares.
//!
//! The `examples/` directory has one runnable program per major
//! capability; start with `archive_roundtrip` and `quench_trip`.

// Validation deliberately writes `!(x > 0.0)` instead of `x <= 0.0`:
// the negated form also rejects NaN, which must never validate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquire;
pub mod archive;
pub mod cli;
pub mod condition;
pub mod config;
pub mod netproto;
pub mod plot;
pub mod quench;
pub mod registry;
pub mod simsrc;
pub mod textfmt;

pub use archive::{Archive, ArchiveKey, ArchiveRecord};
pub use registry::{CalibrationTable, ChannelDescriptor, ChannelId, ChannelKind, Registry, Sample};
