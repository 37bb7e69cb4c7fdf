//! Serve live channel values over TCP and monitor them from a client:
//! get, put, and subscription, all in one process.
//!
//!     cargo run --example live_monitor

use std::sync::Arc;
use std::time::Duration;

use cryodaq::netproto::{serve, Client, Hub, ServerConfig};
use cryodaq::registry::{CalibrationTable, ChannelDescriptor, ChannelKind, Registry};

fn main() {
    let mut registry = Registry::new();
    let pres = registry
        .register(ChannelDescriptor::new(
            "CRYO",
            "PRES",
            ChannelKind::Slow,
            "bar",
            "bar",
            Arc::new(CalibrationTable::Identity),
        ))
        .unwrap();
    // Setpoints are the only writable channels; PUTs to anything else
    // are rejected as read-only.
    let setpt = registry
        .register(
            ChannelDescriptor::new(
                "PS01",
                "SETPT",
                ChannelKind::Slow,
                "A",
                "A",
                Arc::new(CalibrationTable::Identity),
            )
            .writable(),
        )
        .unwrap();
    let registry = Arc::new(registry);

    // The hub owns the live value table; the engine (or here, the demo
    // loop) publishes into it and the server fans events out.
    let hub = Hub::new(registry.clone(), None);
    hub.write_live(setpt, [0.0, 75.0, 75.0]);

    let server = serve("127.0.0.1:0", hub.clone(), ServerConfig::default()).unwrap();
    println!("serving on {}", server.local_addr());

    let client = Client::connect(server.local_addr()).unwrap();

    // GET reads whatever the live table holds right now.
    let v = client.get("PS01.SETPT").unwrap();
    println!("get PS01.SETPT -> t={}, value={}", v.time_index, v.calibrated);

    // PUT writes a setpoint; the reply carries the stored value.
    let stored = client.put("PS01.SETPT", [0.1, 80.0, 80.0]).unwrap();
    println!("put PS01.SETPT 80 -> stored {}", stored.calibrated);
    println!("live table now holds {:?}", hub.live().read(setpt));

    // Subscriptions deliver every published event, in order. Publish a
    // few pressure readings from a background thread while the client
    // drains them.
    let sub = client.subscribe("CRYO.PRES").unwrap();
    let publisher = {
        let hub = hub.clone();
        std::thread::spawn(move || {
            for k in 0..5 {
                let t = k as f64 * 0.5;
                let bar = 1.2 + 0.01 * k as f64;
                hub.publish(pres, [t, bar, bar], false);
                std::thread::sleep(Duration::from_millis(20));
            }
        })
    };
    for _ in 0..5 {
        let event = sub.recv_timeout(Duration::from_secs(2)).unwrap().expect("event");
        println!("event {} t={} value={}", event.name, event.time_index, event.calibrated);
    }
    publisher.join().unwrap();

    sub.unsubscribe().unwrap();
    drop(client);
    server.shutdown();
    println!("done");
}
