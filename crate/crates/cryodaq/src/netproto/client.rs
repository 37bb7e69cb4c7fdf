//! Client side of the channel-access protocol.
//!
//! A connection runs one background reader thread that routes VALUE and
//! ERROR frames to the thread waiting on a request and EVENT frames to
//! the matching subscription sink. Requests are serialized per
//! connection (one outstanding at a time) with a reply timeout, default
//! 5 s. Connection loss is reported distinctly from server-side errors:
//! pending requests fail with `ConnectionClosed` and subscriptions end
//! with `ConnectionLost` after draining delivered events.

use std::collections::HashMap;
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError, Sender};

use crate::netproto::wire::{self, ErrorCode, Message, WireValue, PROTOCOL_VERSION};
use crate::netproto::ProtoError;

pub const DEFAULT_REPLY_TIMEOUT: Duration = Duration::from_secs(5);

struct Inner {
    writer: Mutex<TcpStream>,
    /// Holding this receiver's lock is holding the right to transact.
    reply_rx: Mutex<Receiver<Message>>,
    subs: Mutex<HashMap<String, Sender<WireValue>>>,
    lost: AtomicBool,
    timeout: Duration,
}

pub struct Client {
    inner: Arc<Inner>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ProtoError> {
        Self::connect_with_timeout(addr, DEFAULT_REPLY_TIMEOUT)
    }

    pub fn connect_with_timeout(
        addr: impl ToSocketAddrs,
        timeout: Duration,
    ) -> Result<Self, ProtoError> {
        let mut stream = TcpStream::connect(addr)?;

        // Handshake synchronously before the reader thread exists.
        stream.set_read_timeout(Some(timeout))?;
        wire::write_message(&mut stream, &Message::Hello { version: PROTOCOL_VERSION })
            .map_err(wire_to_proto)?;
        match wire::read_message(&mut stream).map_err(wire_to_proto)? {
            Message::Hello { version } if version == PROTOCOL_VERSION => {}
            Message::Hello { version } => {
                return Err(ProtoError::Malformed(format!(
                    "server speaks protocol version {version}, not {PROTOCOL_VERSION}"
                )))
            }
            Message::Error { code, message } => return Err(server_error(code, message)),
            other => {
                return Err(ProtoError::Malformed(format!(
                    "expected HELLO reply, got opcode {:#04x}",
                    other.opcode()
                )))
            }
        }
        stream.set_read_timeout(None)?;

        let (reply_tx, reply_rx) = crossbeam_channel::unbounded();
        let inner = Arc::new(Inner {
            writer: Mutex::new(stream.try_clone()?),
            reply_rx: Mutex::new(reply_rx),
            subs: Mutex::new(HashMap::new()),
            lost: AtomicBool::new(false),
            timeout,
        });

        {
            let inner = inner.clone();
            let mut read_stream = stream;
            std::thread::spawn(move || {
                loop {
                    match wire::read_message(&mut read_stream) {
                        Ok(Message::Event { value }) => {
                            let subs = inner.subs.lock().unwrap();
                            if let Some(sink) = subs.get(&value.name) {
                                let _ = sink.send(value);
                            }
                        }
                        Ok(msg @ (Message::Value { .. } | Message::Error { .. })) => {
                            let _ = reply_tx.send(msg);
                        }
                        Ok(_) => {} // stray frames are ignored, not fatal
                        Err(_) => break,
                    }
                }
                inner.lost.store(true, Ordering::Release);
                // Dropping the sinks ends every subscription stream once
                // already-delivered events are drained.
                inner.subs.lock().unwrap().clear();
                // reply_tx drops here; a waiting transact() sees Disconnected.
            });
        }

        Ok(Client { inner })
    }

    /// Current live value of a channel.
    pub fn get(&self, name: &str) -> Result<WireValue, ProtoError> {
        match self.transact(Message::Get { name: name.into() })? {
            Message::Value { value } => Ok(value),
            other => Err(unexpected_reply(other)),
        }
    }

    /// Write a setpoint channel; returns the stored value.
    pub fn put(&self, name: &str, triple: [f64; 3]) -> Result<WireValue, ProtoError> {
        let value = WireValue::new(name, triple);
        match self.transact(Message::Put { value })? {
            Message::Value { value } => Ok(value),
            other => Err(unexpected_reply(other)),
        }
    }

    /// Start monitoring a channel. The returned subscription yields
    /// every EVENT the server publishes for it, in order.
    pub fn subscribe(&self, name: &str) -> Result<Subscription, ProtoError> {
        let (tx, rx) = crossbeam_channel::unbounded();
        // Register the sink before the server can start publishing:
        // an event may legally arrive ahead of the subscribe ack.
        self.inner.subs.lock().unwrap().insert(name.to_string(), tx);
        match self.transact(Message::Subscribe { name: name.into() }) {
            Ok(Message::Value { .. }) => Ok(Subscription {
                name: name.to_string(),
                rx,
                inner: self.inner.clone(),
            }),
            Ok(other) => {
                self.inner.subs.lock().unwrap().remove(name);
                Err(unexpected_reply(other))
            }
            Err(e) => {
                self.inner.subs.lock().unwrap().remove(name);
                Err(e)
            }
        }
    }

    fn transact(&self, msg: Message) -> Result<Message, ProtoError> {
        self.inner.transact(msg)
    }
}

impl Inner {
    fn transact(&self, msg: Message) -> Result<Message, ProtoError> {
        let rx = self.reply_rx.lock().unwrap();
        {
            let mut writer = self.writer.lock().unwrap();
            wire::write_message(&mut *writer, &msg).map_err(|e| {
                if self.lost.load(Ordering::Acquire) {
                    ProtoError::ConnectionClosed
                } else {
                    wire_to_proto(e)
                }
            })?;
        }
        match rx.recv_timeout(self.timeout) {
            Ok(Message::Error { code, message }) => Err(server_error(code, message)),
            Ok(reply) => Ok(reply),
            Err(RecvTimeoutError::Timeout) => Err(ProtoError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(ProtoError::ConnectionClosed),
        }
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        if let Ok(writer) = self.inner.writer.lock() {
            let _ = writer.shutdown(Shutdown::Both);
        }
    }
}

/// Why a subscription stopped yielding events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubscriptionEnd {
    /// `unsubscribe()` completed; the stream is cleanly finished.
    Unsubscribed,
    /// The connection died; there may be undelivered events.
    ConnectionLost,
}

pub struct Subscription {
    name: String,
    rx: Receiver<WireValue>,
    inner: Arc<Inner>,
}

impl Subscription {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Next event, blocking. `Err` is the explicit end-of-stream signal.
    pub fn recv(&self) -> Result<WireValue, SubscriptionEnd> {
        self.rx.recv().map_err(|_| self.end_reason())
    }

    /// Next event or `Ok(None)` on timeout.
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<WireValue>, SubscriptionEnd> {
        match self.rx.recv_timeout(timeout) {
            Ok(v) => Ok(Some(v)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(self.end_reason()),
        }
    }

    pub fn try_recv(&self) -> Result<Option<WireValue>, SubscriptionEnd> {
        match self.rx.try_recv() {
            Ok(v) => Ok(Some(v)),
            Err(crossbeam_channel::TryRecvError::Empty) => Ok(None),
            Err(crossbeam_channel::TryRecvError::Disconnected) => Err(self.end_reason()),
        }
    }

    fn end_reason(&self) -> SubscriptionEnd {
        if self.inner.lost.load(Ordering::Acquire) {
            SubscriptionEnd::ConnectionLost
        } else {
            SubscriptionEnd::Unsubscribed
        }
    }

    /// Stop delivery. After the server's acknowledgment no further
    /// events for this channel arrive; events already delivered can
    /// still be drained from the subscription before it reports
    /// `Unsubscribed`.
    pub fn unsubscribe(self) -> Result<(), ProtoError> {
        match self.inner.transact(Message::Unsubscribe { name: self.name.clone() })? {
            Message::Value { .. } => {
                self.inner.subs.lock().unwrap().remove(&self.name);
                Ok(())
            }
            other => Err(unexpected_reply(other)),
        }
    }
}

fn wire_to_proto(e: wire::WireError) -> ProtoError {
    match e {
        wire::WireError::Io(io) => ProtoError::Io(io),
        other => ProtoError::Malformed(other.to_string()),
    }
}

fn server_error(code: ErrorCode, message: String) -> ProtoError {
    match code {
        ErrorCode::NotFound => ProtoError::NotFound(message),
        ErrorCode::ReadOnly => ProtoError::ReadOnly(message),
        ErrorCode::Malformed => ProtoError::Malformed(message),
    }
}

fn unexpected_reply(msg: Message) -> ProtoError {
    ProtoError::Malformed(format!("unexpected reply opcode {:#04x}", msg.opcode()))
}
