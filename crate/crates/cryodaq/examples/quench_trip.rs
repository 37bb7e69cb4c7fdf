//! Inject a quench into a voltage tap, run a fast acquisition session,
//! and follow the trip through detection and the energy dump.
//!
//!     cargo run --example quench_trip

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use cryodaq::acquire::{run_session, AcquisitionConfig, SessionInputs};
use cryodaq::archive::{Archive, ArchiveKey};
use cryodaq::condition::AmplifierConfig;
use cryodaq::quench::{DetectorConfig, DumpModel};
use cryodaq::registry::{CalibrationTable, ChannelDescriptor, ChannelKind, Registry};
use cryodaq::simsrc::{CurrentRamp, QuenchScenario, SignalSource};

fn main() {
    const RATE: f64 = 100_000.0;

    // One magnet tap, sampled fast, with passthrough conditioning.
    let mut registry = Registry::new();
    let tap = registry
        .register(
            ChannelDescriptor::new(
                "MAG01",
                "VT00",
                ChannelKind::Fast,
                "V",
                "V",
                Arc::new(CalibrationTable::Identity),
            )
            .with_conditioning(AmplifierConfig::passthrough()),
        )
        .unwrap();

    // The supply ramps to 10 kA over 2 s, then holds. The tap sees
    // M * dI/dt inductively during the ramp, plus a resistive voltage
    // growing from the quench onset at t = 0.5 s, plus noise.
    let supply = CurrentRamp { max_amps: 10_000.0, duration_s: 2.0 };
    let scenario = QuenchScenario {
        onset_time_s: 0.5,
        resistive_slope_v_per_s: 2.0,
        mutual_inductance_h: 0.003,
        current_amps: 10_000.0,
        noise_amp_v: 0.002,
        seed: 11,
    }
    .validated()
    .unwrap();
    let sources = HashMap::from([(tap, SignalSource::VoltageTap { scenario })]);

    // The detector compensates the inductive term away with the same M
    // and demands 2 ms of consecutive exceedance over 0.1 V, so the
    // expected trip is near onset + 0.1/2.0 + 0.002 = 0.552 s.
    let detector = DetectorConfig {
        threshold_volts: 0.1,
        hold_time_s: 0.002,
        mutual_inductance_h: 0.003,
    };

    let root = std::env::temp_dir().join("cryodaq-quench-demo");
    let _ = std::fs::remove_dir_all(&root);
    let archive = Archive::open(&root).unwrap();

    let mut cfg = AcquisitionConfig::new("SSTF", Utc.with_ymd_and_hms(2026, 8, 15, 9, 0, 0).unwrap());
    cfg.fast_rate_hz = RATE;
    cfg.duration_s = 1.0;
    cfg.fast_channels = vec![tap];

    let handle = run_session(
        &cfg,
        SessionInputs {
            registry: &registry,
            sources: &sources,
            supply,
            detector: Some(detector),
            archive: &archive,
            hub: None,
        },
    )
    .unwrap();

    println!("session {} {:?}", handle.session_id, handle.status);
    let stats = handle.stats_for(tap).unwrap();
    println!(
        "tap: generated {} samples, archived {}, dropped {}",
        stats.generated, stats.archived, stats.gap_samples
    );

    let trigger = handle.triggers.first().expect("the injected quench must trip");
    println!(
        "quench trigger at t = {} s ({} samples after onset), v_comp = {:.4} V",
        trigger.trigger_time_s,
        ((trigger.trigger_time_s - 0.5) * RATE).round(),
        trigger.compensated_volts_at_trigger
    );

    // Triggers are archived as their own stream under the facility
    // device, one (time, v_comp, 1.0) record each.
    let trig_key = ArchiveKey::new(cfg.session_start_utc.date_naive(), "SSTF", "QUENCH_TRIG").unwrap();
    let trig_records = archive.query(&trig_key, f64::NEG_INFINITY, f64::INFINITY).unwrap();
    println!("trigger stream holds {} record(s)", trig_records.len());

    // After the trip the current is diverted into a dump resistor and
    // decays with tau = L/R. The midpoint-rule energy integral must
    // account for (almost) exactly the stored magnetic energy.
    let current_at_trip = supply.current_at(trigger.trigger_time_s);
    let dump = DumpModel {
        inductance_h: 1.2,
        dump_resistance_ohm: 0.15,
        initial_current_a: current_at_trip,
    }
    .validated()
    .unwrap();
    let tau = dump.tau_s();
    let stored = dump.stored_energy();
    let dissipated = dump.dissipated_energy(10.0 * tau, tau / 1000.0);
    println!("dump: I0 = {current_at_trip:.0} A, tau = {tau} s");
    println!(
        "stored {:.3} MJ, dissipated over 10 tau {:.3} MJ (ratio {:.6})",
        stored / 1e6,
        dissipated / 1e6,
        dissipated / stored
    );
}
