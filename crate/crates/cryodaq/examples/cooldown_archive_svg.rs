//! Simulate a stand cool-down on the slow path, archive it, and plot
//! the archived curve to SVG.
//!
//!     cargo run --example cooldown_archive_svg

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use cryodaq::acquire::{run_session, AcquisitionConfig, SessionInputs};
use cryodaq::archive::{Archive, ArchiveKey};
use cryodaq::plot::{render_xy, PlotConfig};
use cryodaq::registry::{CalibrationTable, ChannelDescriptor, ChannelKind, Registry};
use cryodaq::simsrc::{CooldownProfile, CurrentRamp, SignalSource};

fn main() {
    // A diode thermometer: raw volts rise as temperature falls.
    let table = CalibrationTable::piecewise_linear(vec![
        (0.0, 300.0),
        (0.5, 170.0),
        (1.0, 80.0),
        (1.5, 20.0),
        (2.0, 4.5),
    ])
    .unwrap();
    let mut registry = Registry::new();
    let temp = registry
        .register(ChannelDescriptor::new(
            "TS01",
            "TEMP",
            ChannelKind::Slow,
            "V",
            "K",
            Arc::new(table),
        ))
        .unwrap();

    // Exponential cool-down from 300 K toward 80 K with a 30 s time
    // constant (sped up so the demo finishes instantly). The source
    // produces the raw voltage whose calibration yields this curve.
    let profile = CooldownProfile { t_start_k: 300.0, t_base_k: 80.0, tau_s: 30.0 }
        .validated()
        .unwrap();
    let sources = HashMap::from([(temp, SignalSource::Cooldown { profile })]);

    let root = std::env::temp_dir().join("cryodaq-cooldown-demo");
    let _ = std::fs::remove_dir_all(&root);
    let archive = Archive::open(&root).unwrap();

    let mut cfg = AcquisitionConfig::new("SSTF", Utc.with_ymd_and_hms(2026, 8, 15, 9, 0, 0).unwrap());
    cfg.slow_period_s = 1.0;
    cfg.duration_s = 120.0;
    cfg.slow_channels = vec![temp];

    let handle = run_session(
        &cfg,
        SessionInputs {
            registry: &registry,
            sources: &sources,
            supply: CurrentRamp { max_amps: 0.0, duration_s: 0.0 },
            detector: None,
            archive: &archive,
            hub: None,
        },
    )
    .unwrap();
    println!("session {} {:?}, {} scans", handle.session_id, handle.status, handle.generated_total());

    // Read the archived curve back; column 2 is the calibrated kelvin.
    let key = ArchiveKey::new(cfg.session_start_utc.date_naive(), "TS01", "TEMP").unwrap();
    let records = archive.query(&key, f64::NEG_INFINITY, f64::INFINITY).unwrap();
    println!(
        "archived {} records: {:.1} K at t=0 down to {:.1} K at t={}",
        records.len(),
        records.first().unwrap().0[2],
        records.last().unwrap().0[2],
        records.last().unwrap().0[0],
    );

    let meta = archive.read_sidecar(&key).unwrap();
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.0[0], r.0[2])).collect();
    let cfg = PlotConfig {
        title: "stand cool-down".to_string(),
        y_label: format!("{} [{}]", meta.data_name, meta.units_cal),
        ..PlotConfig::default()
    };
    let path = std::env::temp_dir().join("cooldown.svg");
    std::fs::write(&path, render_xy(&points, &cfg)).unwrap();
    println!("wrote {}", path.display());
}
