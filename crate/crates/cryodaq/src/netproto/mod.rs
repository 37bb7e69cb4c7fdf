//! Channel-access-style network protocol: live values over TCP.
//!
//! Length-prefixed binary frames carry get/put requests, monitor
//! subscriptions, and pushed events for channel values. This is a
//! minimal from-scratch protocol (the semantics of a channel-access
//! system — network transparency, monitors, one namespace — without
//! any wire compatibility); `docs/PROTOCOL.md` is the normative frame
//! grammar.

pub mod client;
pub mod live;
pub mod server;
pub mod wire;

pub use client::{Client, Subscription, SubscriptionEnd, DEFAULT_REPLY_TIMEOUT};
pub use live::{Hub, LiveTable, Outbound};
pub use server::{serve, Server, ServerConfig};
pub use wire::{ErrorCode, Message, WireValue, MAX_FRAME_BYTES, PROTOCOL_VERSION};

use thiserror::Error;

/// Data name of the hub's dropped-event counter channel.
pub const DROPS_DATA_NAME: &str = "NET_DROPS";

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error("channel {0} not found")]
    NotFound(String),
    #[error("channel {0} is read-only")]
    ReadOnly(String),
    #[error("protocol violation: {0}")]
    Malformed(String),
    #[error("no reply within timeout")]
    Timeout,
    #[error("connection closed")]
    ConnectionClosed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::time::Duration;

    use crate::registry::{
        CalibrationTable, ChannelDescriptor, ChannelId, ChannelKind, Registry,
    };

    fn test_registry() -> Arc<Registry> {
        let mut reg = Registry::new();
        let identity = Arc::new(CalibrationTable::identity());
        reg.register(ChannelDescriptor::new(
            "TS01", "TEMP", ChannelKind::Slow, "V", "K", identity.clone(),
        ))
        .unwrap();
        reg.register(ChannelDescriptor::new(
            "MAG01", "VT01", ChannelKind::Fast, "V", "V", identity.clone(),
        ))
        .unwrap();
        reg.register(
            ChannelDescriptor::new("PS01", "SET", ChannelKind::Slow, "A", "A", identity)
                .writable(),
        )
        .unwrap();
        Arc::new(reg)
    }

    fn start() -> (Server, Arc<Hub>) {
        let hub = Hub::new(test_registry(), None);
        let server = serve("127.0.0.1:0", hub.clone(), ServerConfig::default()).unwrap();
        (server, hub)
    }

    #[test]
    fn get_mirrors_the_live_table_exactly() {
        let (server, hub) = start();
        hub.write_live(ChannelId(0), [2.0, 1.0, 152.25]);

        let client = Client::connect(server.local_addr()).unwrap();
        let v = client.get("TS01.TEMP").unwrap();
        assert_eq!(v.name, "TS01.TEMP");
        assert_eq!(v.triple(), [2.0, 1.0, 152.25]);

        // Transparency across arbitrary table states, bit-exact.
        for k in 0..100u32 {
            let triple = [k as f64 * 0.1, -(k as f64), 1.0 / (k as f64 + 1.0)];
            hub.write_live(ChannelId(1), triple);
            let got = client.get("MAG01.VT01").unwrap().triple();
            for (g, w) in got.iter().zip(triple.iter()) {
                assert_eq!(g.to_bits(), w.to_bits());
            }
        }
        drop(client);
        server.shutdown();
    }

    #[test]
    fn unknown_channel_keeps_connection_usable() {
        let (server, _hub) = start();
        let client = Client::connect(server.local_addr()).unwrap();
        match client.get("NO.SUCH") {
            Err(ProtoError::NotFound(name)) => assert_eq!(name, "NO.SUCH"),
            other => panic!("want NotFound, got {other:?}"),
        }
        assert!(client.get("TS01.TEMP").is_ok(), "connection must survive NotFound");
        drop(client);
        server.shutdown();
    }

    #[test]
    fn put_round_trips_on_writable_channels_only() {
        let (server, _hub) = start();
        let client = Client::connect(server.local_addr()).unwrap();

        let stored = client.put("PS01.SET", [0.0, 42.5, 42.5]).unwrap();
        assert_eq!(stored.triple(), [0.0, 42.5, 42.5]);
        assert_eq!(client.get("PS01.SET").unwrap().triple(), [0.0, 42.5, 42.5]);

        match client.put("TS01.TEMP", [0.0, 1.0, 1.0]) {
            Err(ProtoError::ReadOnly(name)) => assert_eq!(name, "TS01.TEMP"),
            other => panic!("want ReadOnly, got {other:?}"),
        }
        match client.put("NO.SUCH", [0.0; 3]) {
            Err(ProtoError::NotFound(_)) => {}
            other => panic!("want NotFound, got {other:?}"),
        }
        drop(client);
        server.shutdown();
    }

    #[test]
    fn subscription_delivers_each_publish_in_order() {
        let (server, hub) = start();
        let client = Client::connect(server.local_addr()).unwrap();
        let sub = client.subscribe("TS01.TEMP").unwrap();

        assert_eq!(sub.recv_timeout(Duration::from_millis(100)).unwrap(), None,
            "no publishes yet, no events");

        for k in 0..3 {
            hub.publish(ChannelId(0), [k as f64, 10.0 + k as f64, 20.0 + k as f64], false);
        }
        let mut times = Vec::new();
        for _ in 0..3 {
            times.push(sub.recv().unwrap().time_index);
        }
        assert_eq!(times, vec![0.0, 1.0, 2.0]);

        sub.unsubscribe().unwrap();
        hub.publish(ChannelId(0), [3.0, 0.0, 0.0], false);
        // The stream must end without that event.
        let client2 = Client::connect(server.local_addr()).unwrap();
        drop(client2);
        drop(client);
        server.shutdown();
    }

    #[test]
    fn unsubscribed_stream_ends_cleanly() {
        let (server, hub) = start();
        let client = Client::connect(server.local_addr()).unwrap();
        let sub = client.subscribe("TS01.TEMP").unwrap();
        hub.publish(ChannelId(0), [0.0, 1.0, 1.0], false);
        assert!(sub.recv_timeout(Duration::from_secs(2)).unwrap().is_some());

        let rx_probe = {
            let (server_done_tx, server_done_rx) = crossbeam_channel::bounded(1);
            let s = sub;
            std::thread::spawn(move || {
                s.unsubscribe().unwrap();
                server_done_tx.send(()).unwrap();
            });
            server_done_rx
        };
        rx_probe.recv_timeout(Duration::from_secs(5)).unwrap();

        // New subscription object: events after unsubscribe never appear.
        let sub2 = client.subscribe("TS01.TEMP").unwrap();
        hub.publish(ChannelId(0), [9.0, 9.0, 9.0], false);
        let v = sub2.recv().unwrap();
        assert_eq!(v.time_index, 9.0);
        drop(client);
        server.shutdown();
    }

    #[test]
    fn two_clients_see_identical_event_sequences() {
        let (server, hub) = start();
        let a = Client::connect(server.local_addr()).unwrap();
        let b = Client::connect(server.local_addr()).unwrap();
        let sub_a = a.subscribe("TS01.TEMP").unwrap();
        let sub_b = b.subscribe("TS01.TEMP").unwrap();

        for k in 0..10 {
            hub.publish(ChannelId(0), [k as f64, k as f64 + 0.5, k as f64 + 1.5], false);
        }
        for k in 0..10 {
            let va = sub_a.recv().unwrap();
            let vb = sub_b.recv().unwrap();
            assert_eq!(va.time_index, k as f64);
            assert_eq!(va.triple(), vb.triple());
        }
        drop((a, b));
        server.shutdown();
    }

    #[test]
    fn connection_loss_is_distinct_from_not_found() {
        let (server, hub) = start();
        let client = Client::connect(server.local_addr()).unwrap();
        let sub = client.subscribe("TS01.TEMP").unwrap();
        hub.publish(ChannelId(0), [1.0, 1.0, 1.0], false);
        assert!(sub.recv_timeout(Duration::from_secs(2)).unwrap().is_some());

        server.shutdown();
        // A request on a dead connection is a connection error, never
        // NotFound.
        let mut saw_closed = false;
        for _ in 0..50 {
            match client.get("TS01.TEMP") {
                Err(ProtoError::ConnectionClosed) | Err(ProtoError::Io(_)) => {
                    saw_closed = true;
                    break;
                }
                Err(ProtoError::NotFound(_)) => panic!("connection loss reported as NotFound"),
                Err(ProtoError::Timeout) => panic!("connection loss reported as timeout"),
                _ => std::thread::sleep(Duration::from_millis(20)),
            }
        }
        assert!(saw_closed, "request on dead connection must fail");
        assert_eq!(sub.recv(), Err(SubscriptionEnd::ConnectionLost));
    }

    #[test]
    fn non_hello_first_frame_is_rejected_and_closed() {
        use std::io::Read;
        let (server, _hub) = start();
        let mut raw = std::net::TcpStream::connect(server.local_addr()).unwrap();
        wire::write_message(&mut raw, &Message::Get { name: "TS01.TEMP".into() }).unwrap();

        match wire::read_message(&mut raw).unwrap() {
            Message::Error { code, .. } => assert_eq!(code, ErrorCode::Malformed),
            other => panic!("want ERROR, got {other:?}"),
        }
        // Then the server closes: next read is EOF.
        let mut buf = [0u8; 1];
        assert_eq!(raw.read(&mut buf).unwrap(), 0);
        server.shutdown();
    }

    #[test]
    fn malformed_frame_is_rejected_and_closed() {
        use std::io::{Read, Write};
        let (server, _hub) = start();
        let mut raw = std::net::TcpStream::connect(server.local_addr()).unwrap();
        wire::write_message(&mut raw, &Message::Hello { version: PROTOCOL_VERSION }).unwrap();
        match wire::read_message(&mut raw).unwrap() {
            Message::Hello { .. } => {}
            other => panic!("want HELLO, got {other:?}"),
        }

        // Oversized frame length.
        raw.write_all(&(MAX_FRAME_BYTES + 1).to_le_bytes()).unwrap();
        raw.write_all(&[0u8; 16]).unwrap();
        match wire::read_message(&mut raw).unwrap() {
            Message::Error { code, .. } => assert_eq!(code, ErrorCode::Malformed),
            other => panic!("want ERROR, got {other:?}"),
        }
        let mut buf = [0u8; 1];
        assert_eq!(raw.read(&mut buf).unwrap(), 0, "connection must close");
        server.shutdown();
    }

    #[test]
    fn stalled_subscriber_drops_oldest_but_never_triggers() {
        let hub = Hub::new(test_registry(), None);
        let server = serve(
            "127.0.0.1:0",
            hub.clone(),
            ServerConfig { outbound_capacity: 16 },
        )
        .unwrap();

        // The stalled client subscribes to the flooded channel and never
        // reads; the healthy client watches a lightly used channel.
        let stalled = Client::connect(server.local_addr()).unwrap();
        let stalled_sub = stalled.subscribe("TS01.TEMP").unwrap();
        let healthy = Client::connect(server.local_addr()).unwrap();
        let healthy_sub = healthy.subscribe("MAG01.VT01").unwrap();

        // 50k events overflow the stalled client's socket buffer and
        // then its 16-slot queue; its writer blocking must not delay
        // anyone else.
        let publisher = {
            let hub = hub.clone();
            std::thread::spawn(move || {
                for k in 0..50_000u64 {
                    hub.publish(ChannelId(0), [k as f64, 0.0, 0.0], false);
                    if k % 5000 == 0 {
                        hub.publish(ChannelId(1), [k as f64, 1.0, 1.0], false);
                    }
                }
                hub.publish(ChannelId(0), [50_000.0, 99.0, 99.0], true);
                hub.publish(ChannelId(1), [50_001.0, 99.0, 99.0], true);
            })
        };

        // Healthy stream: all 10 ordinary events plus the trigger, in
        // order, nothing dropped (11 events never exceed its queue).
        let mut healthy_events = Vec::new();
        while let Ok(Some(v)) = healthy_sub.recv_timeout(Duration::from_secs(10)) {
            healthy_events.push(v.time_index);
            if v.raw == 99.0 {
                break;
            }
        }
        publisher.join().unwrap();
        assert_eq!(healthy_events.len(), 11, "unaffected client must miss nothing");
        assert!(healthy_events.windows(2).all(|w| w[0] < w[1]));

        assert!(hub.dropped_events() > 0, "stalled client must have dropped events");

        // The stalled stream lost ordinary events but stays ordered and
        // still contains the trigger.
        let mut stalled_times = Vec::new();
        let mut stalled_saw_trigger = false;
        while let Ok(Some(v)) = stalled_sub.recv_timeout(Duration::from_secs(5)) {
            stalled_times.push(v.time_index);
            if v.raw == 99.0 {
                stalled_saw_trigger = true;
                break;
            }
        }
        assert!(stalled_saw_trigger, "trigger event must survive the drops");
        assert!(stalled_times.windows(2).all(|w| w[0] < w[1]));
        assert!(
            (stalled_times.len() as u64) < 50_001,
            "the stalled stream should actually have lost events"
        );
        drop((stalled, healthy));
        server.shutdown();
    }
}
