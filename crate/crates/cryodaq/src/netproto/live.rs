//! Live value table and event fan-out.
//!
//! The live table holds the most recent `(time_index, raw, calibrated)`
//! triple per channel, seeded to zeros. One writer (the acquisition
//! engine) and any number of readers; a per-channel lock means a reader
//! never sees a torn triple.
//!
//! The hub fans published samples out to subscribers as encoded EVENT
//! frames. Each subscriber hands the hub a bounded outbound queue; when
//! a slow client's queue fills, the oldest ordinary event is dropped and
//! counted, but trigger events are never dropped — protection
//! visibility outranks monitor fidelity.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};

use crate::netproto::wire::{Message, WireValue};
use crate::registry::{ChannelId, Registry};

#[derive(Debug)]
pub struct LiveTable {
    slots: Vec<RwLock<[f64; 3]>>,
}

impl LiveTable {
    /// One slot per registered channel, all starting at `(0, 0, 0)`.
    pub fn new(channel_count: usize) -> Self {
        LiveTable {
            slots: (0..channel_count).map(|_| RwLock::new([0.0; 3])).collect(),
        }
    }

    pub fn read(&self, id: ChannelId) -> [f64; 3] {
        *self.slots[id.index()].read().unwrap()
    }

    pub fn write(&self, id: ChannelId, triple: [f64; 3]) {
        *self.slots[id.index()].write().unwrap() = triple;
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// What goes down a client connection, in order.
#[derive(Debug)]
pub enum OutFrame {
    /// Direct reply to a request; never dropped.
    Reply(Vec<u8>),
    /// Monitor event; droppable unless it carries a quench trigger.
    Event { bytes: Vec<u8>, trigger: bool },
}

impl OutFrame {
    fn droppable(&self) -> bool {
        matches!(self, OutFrame::Event { trigger: false, .. })
    }

    pub fn bytes(&self) -> &[u8] {
        match self {
            OutFrame::Reply(b) => b,
            OutFrame::Event { bytes, .. } => bytes,
        }
    }
}

/// Bounded outbound queue feeding one connection's writer thread.
#[derive(Debug)]
pub struct Outbound {
    q: Mutex<VecDeque<OutFrame>>,
    ready: Condvar,
    capacity: usize,
    closed: AtomicBool,
}

impl Outbound {
    pub fn new(capacity: usize) -> Arc<Self> {
        Arc::new(Outbound {
            q: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
            capacity: capacity.max(1),
            closed: AtomicBool::new(false),
        })
    }

    /// Queue a reply frame. Replies bypass the capacity check: they are
    /// paced by the client's own requests.
    pub fn push_reply(&self, bytes: Vec<u8>) {
        let mut q = self.q.lock().unwrap();
        q.push_back(OutFrame::Reply(bytes));
        self.ready.notify_one();
    }

    /// Queue an event frame. Returns the number of ordinary events that
    /// had to be dropped to make room (0 or 1). A full queue with
    /// nothing droppable still accepts the frame: trigger events and
    /// replies must get through.
    pub fn push_event(&self, bytes: Vec<u8>, trigger: bool) -> u64 {
        let mut q = self.q.lock().unwrap();
        let mut dropped = 0;
        if q.len() >= self.capacity {
            if let Some(pos) = q.iter().position(|f| f.droppable()) {
                q.remove(pos);
                dropped = 1;
            }
        }
        q.push_back(OutFrame::Event { bytes, trigger });
        self.ready.notify_one();
        dropped
    }

    /// Blocking pop; `None` once closed and drained.
    pub fn pop(&self) -> Option<OutFrame> {
        let mut q = self.q.lock().unwrap();
        loop {
            if let Some(frame) = q.pop_front() {
                return Some(frame);
            }
            if self.closed.load(Ordering::Acquire) {
                return None;
            }
            q = self.ready.wait(q).unwrap();
        }
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
        self.ready.notify_all();
    }
}

struct Subscriber {
    client_id: u64,
    out: Arc<Outbound>,
}

/// Publisher state shared by the acquisition engine and the server.
pub struct Hub {
    registry: Arc<Registry>,
    live: LiveTable,
    subs: Vec<Mutex<Vec<Subscriber>>>,
    dropped_events: AtomicU64,
    /// Stats channel updated with the cumulative drop count, if
    /// registered (`<facility>.NET_DROPS`).
    drops_channel: Option<ChannelId>,
}

impl Hub {
    pub fn new(registry: Arc<Registry>, drops_channel: Option<ChannelId>) -> Arc<Self> {
        let n = registry.len();
        Arc::new(Hub {
            registry,
            live: LiveTable::new(n),
            subs: (0..n).map(|_| Mutex::new(Vec::new())).collect(),
            dropped_events: AtomicU64::new(0),
            drops_channel,
        })
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn live(&self) -> &LiveTable {
        &self.live
    }

    pub fn dropped_events(&self) -> u64 {
        self.dropped_events.load(Ordering::Relaxed)
    }

    /// Update the live table and fan an EVENT out to subscribers.
    /// Holding the per-channel subscriber lock across both steps keeps
    /// publish and unsubscribe serialized: after an unsubscribe
    /// acknowledgment is queued, no further events for that channel can
    /// reach that client.
    pub fn publish(&self, id: ChannelId, triple: [f64; 3], trigger: bool) {
        let subs = self.subs[id.index()].lock().unwrap();
        self.live.write(id, triple);
        if subs.is_empty() {
            return;
        }
        let value = WireValue::new(self.registry.get(id).full_name(), triple);
        let frame = Message::Event { value }.encode();
        let mut dropped = 0;
        for sub in subs.iter() {
            dropped += sub.out.push_event(frame.clone(), trigger);
        }
        drop(subs);
        if dropped > 0 {
            self.note_drops(dropped);
        }
    }

    /// Update the live table without generating events (fast-path and
    /// setpoint writes).
    pub fn write_live(&self, id: ChannelId, triple: [f64; 3]) {
        self.live.write(id, triple);
    }

    fn note_drops(&self, n: u64) {
        let total = self.dropped_events.fetch_add(n, Ordering::Relaxed) + n;
        if let Some(id) = self.drops_channel {
            let t = total as f64;
            self.live.write(id, [t, t, t]);
        }
    }

    /// Attach a client's outbound queue to a channel. Idempotent per
    /// client: subscribing twice does not double events.
    pub fn subscribe(&self, id: ChannelId, client_id: u64, out: Arc<Outbound>) {
        let mut subs = self.subs[id.index()].lock().unwrap();
        if subs.iter().any(|s| s.client_id == client_id) {
            return;
        }
        subs.push(Subscriber { client_id, out });
    }

    pub fn unsubscribe(&self, id: ChannelId, client_id: u64) {
        let mut subs = self.subs[id.index()].lock().unwrap();
        subs.retain(|s| s.client_id != client_id);
    }

    /// Detach a disconnected client everywhere.
    pub fn unsubscribe_all(&self, client_id: u64) {
        for ch in &self.subs {
            ch.lock().unwrap().retain(|s| s.client_id != client_id);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netproto::wire;
    use crate::registry::{CalibrationTable, ChannelDescriptor, ChannelKind};

    fn registry() -> Arc<Registry> {
        let mut reg = Registry::new();
        for (dev, data) in [("TS01", "TEMP"), ("MAG01", "VT01")] {
            reg.register(ChannelDescriptor::new(
                dev,
                data,
                ChannelKind::Slow,
                "V",
                "K",
                Arc::new(CalibrationTable::identity()),
            ))
            .unwrap();
        }
        Arc::new(reg)
    }

    fn decode_event(frame: &OutFrame) -> WireValue {
        let (op, payload) = wire::read_frame(&mut frame.bytes()).unwrap();
        match wire::Message::decode(op, &payload).unwrap() {
            wire::Message::Event { value } => value,
            other => panic!("expected event, got {other:?}"),
        }
    }

    #[test]
    fn live_table_starts_zeroed_and_updates() {
        let table = LiveTable::new(2);
        assert_eq!(table.read(ChannelId(0)), [0.0; 3]);
        table.write(ChannelId(1), [2.0, 1.0, 152.25]);
        assert_eq!(table.read(ChannelId(1)), [2.0, 1.0, 152.25]);
        assert_eq!(table.read(ChannelId(0)), [0.0; 3]);
    }

    #[test]
    fn publish_updates_live_and_fans_out_in_order() {
        let hub = Hub::new(registry(), None);
        let out = Outbound::new(16);
        hub.subscribe(ChannelId(0), 1, out.clone());

        for k in 0..3 {
            hub.publish(ChannelId(0), [k as f64, 1.0, 1.0], false);
        }
        assert_eq!(hub.live().read(ChannelId(0)), [2.0, 1.0, 1.0]);
        for k in 0..3 {
            let v = decode_event(&out.pop().unwrap());
            assert_eq!(v.name, "TS01.TEMP");
            assert_eq!(v.time_index, k as f64);
        }
    }

    #[test]
    fn unsubscribed_channels_stay_silent() {
        let hub = Hub::new(registry(), None);
        let out = Outbound::new(16);
        hub.subscribe(ChannelId(0), 1, out.clone());
        hub.publish(ChannelId(1), [1.0, 1.0, 1.0], false);
        hub.unsubscribe(ChannelId(0), 1);
        hub.publish(ChannelId(0), [2.0, 1.0, 1.0], false);
        out.close();
        assert!(out.pop().is_none(), "no events for other channels or after unsubscribe");
    }

    #[test]
    fn duplicate_subscribe_is_idempotent() {
        let hub = Hub::new(registry(), None);
        let out = Outbound::new(16);
        hub.subscribe(ChannelId(0), 1, out.clone());
        hub.subscribe(ChannelId(0), 1, out.clone());
        hub.publish(ChannelId(0), [1.0, 2.0, 3.0], false);
        out.close();
        assert!(out.pop().is_some());
        assert!(out.pop().is_none(), "one subscription, one event");
    }

    #[test]
    fn full_queue_drops_oldest_ordinary_event_only() {
        let hub = Hub::new(registry(), None);
        let out = Outbound::new(2);
        hub.subscribe(ChannelId(0), 1, out.clone());

        hub.publish(ChannelId(0), [0.0, 0.0, 0.0], false);
        hub.publish(ChannelId(0), [1.0, 0.0, 0.0], true); // trigger
        hub.publish(ChannelId(0), [2.0, 0.0, 0.0], false); // drops t=0
        hub.publish(ChannelId(0), [3.0, 0.0, 0.0], false); // drops t=2

        assert_eq!(hub.dropped_events(), 2);
        out.close();
        let times: Vec<f64> = std::iter::from_fn(|| out.pop())
            .map(|f| decode_event(&f).time_index)
            .collect();
        assert_eq!(times, vec![1.0, 3.0], "trigger survives, oldest ordinary events dropped");
    }

    #[test]
    fn full_queue_never_drops_triggers_or_replies() {
        let hub = Hub::new(registry(), None);
        let out = Outbound::new(1);
        hub.subscribe(ChannelId(0), 1, out.clone());

        out.push_reply(b"reply".to_vec());
        hub.publish(ChannelId(0), [0.0, 0.0, 0.0], true);
        hub.publish(ChannelId(0), [1.0, 0.0, 0.0], true);
        assert_eq!(hub.dropped_events(), 0);

        out.close();
        let mut frames = Vec::new();
        while let Some(f) = out.pop() {
            frames.push(f);
        }
        assert_eq!(frames.len(), 3, "reply and both triggers all delivered");
    }

    #[test]
    fn torn_triples_are_never_observed() {
        let table = Arc::new(LiveTable::new(1));
        let stop = Arc::new(AtomicBool::new(false));
        let writer = {
            let (table, stop) = (table.clone(), stop.clone());
            std::thread::spawn(move || {
                let mut k = 0.0;
                while !stop.load(Ordering::Relaxed) {
                    // All three fields always equal; a torn read breaks that.
                    table.write(ChannelId(0), [k, k, k]);
                    k += 1.0;
                }
            })
        };
        for _ in 0..200_000 {
            let [a, b, c] = table.read(ChannelId(0));
            assert!(a == b && b == c, "torn read: ({a}, {b}, {c})");
        }
        stop.store(true, Ordering::Relaxed);
        writer.join().unwrap();
    }
}
