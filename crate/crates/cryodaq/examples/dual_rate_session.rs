//! The full dual-rate engine: fast taps through the quench detector
//! and a slow scan, both archived, with live values published to a hub
//! that a TCP client watches, the same wiring the daemon uses.
//!
//!     cargo run --example dual_rate_session

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use cryodaq::acquire::{run_session, AcquisitionConfig, SessionInputs};
use cryodaq::archive::Archive;
use cryodaq::condition::AmplifierConfig;
use cryodaq::netproto::{serve, Client, Hub, ServerConfig};
use cryodaq::quench::DetectorConfig;
use cryodaq::registry::{CalibrationTable, ChannelDescriptor, ChannelKind, Registry};
use cryodaq::simsrc::{
    CurrentRamp, QuenchScenario, SignalSource, SlowChannelParams, SlowKind,
};

fn main() {
    let identity = || Arc::new(CalibrationTable::Identity);
    let mut registry = Registry::new();
    let mut sources = HashMap::new();

    // Two fast voltage taps (quiet: no quench injected) and two slow
    // housekeeping channels.
    let mut fast = Vec::new();
    for name in ["VT00", "VT01"] {
        let id = registry
            .register(
                ChannelDescriptor::new("MAG01", name, ChannelKind::Fast, "V", "V", identity())
                    .with_conditioning(AmplifierConfig::new(1.0, 0.25, 10.0).unwrap()),
            )
            .unwrap();
        let scenario = QuenchScenario { seed: u64::from(id.0), ..QuenchScenario::quiet(0.001, 0) };
        sources.insert(id, SignalSource::VoltageTap { scenario });
        fast.push(id);
    }
    let pres = registry
        .register(ChannelDescriptor::new("CRYO", "PRES", ChannelKind::Slow, "bar", "bar", identity()))
        .unwrap();
    sources.insert(
        pres,
        SignalSource::Slow {
            kind: SlowKind::Pressure,
            params: SlowChannelParams { baseline: 1.2, amplitude: 0.05, freq_hz: 0.5 },
        },
    );
    let flow = registry
        .register(ChannelDescriptor::new("CRYO", "FLOW", ChannelKind::Slow, "g/s", "g/s", identity()))
        .unwrap();
    sources.insert(
        flow,
        SignalSource::Slow {
            kind: SlowKind::FlowRate,
            params: SlowChannelParams { baseline: 5.0, amplitude: 0.2, freq_hz: 0.3 },
        },
    );

    // Bookkeeping channels the engine publishes: the trigger stream,
    // session status, and the network drop counter.
    let trig = registry
        .register(ChannelDescriptor::new("SSTF", "QUENCH_TRIG", ChannelKind::Slow, "V", "V", identity()))
        .unwrap();
    let status = registry
        .register(ChannelDescriptor::new("SSTF", "STATUS", ChannelKind::Slow, "", "", identity()))
        .unwrap();
    let drops = registry
        .register(ChannelDescriptor::new("SSTF", "NET_DROPS", ChannelKind::Slow, "events", "events", identity()))
        .unwrap();
    let _ = trig;
    let registry = Arc::new(registry);

    let hub = Hub::new(registry.clone(), Some(drops));
    let server = serve("127.0.0.1:0", hub.clone(), ServerConfig::default()).unwrap();
    println!("serving live values on {}", server.local_addr());

    // A client subscribes before the session starts, so it sees every
    // slow pressure scan.
    let client = Client::connect(server.local_addr()).unwrap();
    let sub = client.subscribe("CRYO.PRES").unwrap();

    let root = std::env::temp_dir().join("cryodaq-dual-rate-demo");
    let _ = std::fs::remove_dir_all(&root);
    let archive = Archive::open(&root).unwrap();

    let mut cfg = AcquisitionConfig::new("SSTF", Utc.with_ymd_and_hms(2026, 8, 15, 9, 0, 0).unwrap());
    cfg.fast_rate_hz = 20_000.0;
    cfg.slow_period_s = 0.25;
    cfg.duration_s = 2.0;
    cfg.fast_channels = fast;
    cfg.slow_channels = vec![pres, flow];

    let handle = run_session(
        &cfg,
        SessionInputs {
            registry: &registry,
            sources: &sources,
            supply: CurrentRamp { max_amps: 1000.0, duration_s: 2.0 },
            detector: Some(DetectorConfig {
                threshold_volts: 0.1,
                hold_time_s: 0.002,
                mutual_inductance_h: 0.0,
            }),
            archive: &archive,
            hub: Some(&hub),
        },
    )
    .unwrap();

    println!("session {} {:?}", handle.session_id, handle.status);
    for (id, stats) in &handle.channel_stats {
        println!(
            "  {:<10} generated {:>6}, archived {:>6}, gaps {}",
            registry.get(*id).full_name(),
            stats.generated,
            stats.archived,
            stats.gap_samples
        );
    }

    // Everything the slow scan published is waiting on the wire.
    let mut events = 0;
    while let Ok(Some(v)) = sub.recv_timeout(std::time::Duration::from_millis(200)) {
        events += 1;
        if events <= 3 {
            println!("live event: {} t={} value={:.4}", v.name, v.time_index, v.calibrated);
        }
    }
    println!("client saw {events} pressure events (9 scans on [0, 2] at 0.25 s)");

    // STATUS triples are [time, code, gap count]; 1.0 means completed.
    let st = hub.live().read(status);
    println!("final status code: {} with {} gap samples", st[1], st[2]);

    drop(sub);
    drop(client);
    server.shutdown();
    println!("archive tree at {}", root.display());
}
