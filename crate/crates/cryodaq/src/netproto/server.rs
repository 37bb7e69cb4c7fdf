//! TCP server side of the channel-access protocol.
//!
//! One reader and one writer thread per connection. The first frame on
//! a connection must be HELLO with a matching protocol version;
//! anything else is answered with ERROR(Malformed) and the connection
//! closed. After that, GET/PUT/SUBSCRIBE/UNSUBSCRIBE are served against
//! the hub's live table; subscription events arrive through the
//! connection's bounded outbound queue. An unknown channel name is an
//! ERROR(NotFound) reply and the connection stays usable; a malformed
//! frame is an ERROR(Malformed) reply followed by close.

use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::netproto::live::{Hub, Outbound};
use crate::netproto::wire::{
    self, ErrorCode, Message, WireValue, PROTOCOL_VERSION,
};
use crate::registry::ChannelId;

#[derive(Debug, Clone, Copy)]
pub struct ServerConfig {
    /// Outbound event-queue capacity per client. Replies and trigger
    /// events may exceed it; ordinary monitor events get dropped
    /// oldest-first beyond it.
    pub outbound_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { outbound_capacity: 1024 }
    }
}

struct ConnEntry {
    client_id: u64,
    stream: TcpStream,
    out: Arc<Outbound>,
    reader: Option<JoinHandle<()>>,
    writer: Option<JoinHandle<()>>,
}

/// A running server; dropping it without `shutdown()` leaves detached
/// threads running until process exit, so tests and the daemon call
/// `shutdown()` explicitly.
pub struct Server {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    conns: Arc<Mutex<Vec<ConnEntry>>>,
}

/// Bind `endpoint` (`host:port`, port 0 for ephemeral) and serve the
/// hub's channels until `shutdown()`.
pub fn serve(
    endpoint: impl ToSocketAddrs,
    hub: Arc<Hub>,
    cfg: ServerConfig,
) -> io::Result<Server> {
    let listener = TcpListener::bind(endpoint)?;
    let local_addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let conns: Arc<Mutex<Vec<ConnEntry>>> = Arc::new(Mutex::new(Vec::new()));
    let next_id = AtomicU64::new(1);

    let accept = {
        let (stop, conns) = (stop.clone(), conns.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::Acquire) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let client_id = next_id.fetch_add(1, Ordering::Relaxed);
                if let Ok(entry) = spawn_connection(stream, client_id, hub.clone(), cfg, conns.clone()) {
                    conns.lock().unwrap().push(entry);
                }
            }
        })
    };

    Ok(Server { local_addr, stop, accept: Some(accept), conns })
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Stop accepting, close every connection, and join all threads.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::Release);
        // Nudge the accept loop out of its blocking accept.
        let _ = TcpStream::connect(self.local_addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let entries: Vec<ConnEntry> = std::mem::take(&mut *self.conns.lock().unwrap());
        for mut entry in entries {
            let _ = entry.stream.shutdown(Shutdown::Both);
            entry.out.close();
            if let Some(h) = entry.reader.take() {
                let _ = h.join();
            }
            if let Some(h) = entry.writer.take() {
                let _ = h.join();
            }
        }
    }
}

fn spawn_connection(
    stream: TcpStream,
    client_id: u64,
    hub: Arc<Hub>,
    cfg: ServerConfig,
    conns: Arc<Mutex<Vec<ConnEntry>>>,
) -> io::Result<ConnEntry> {
    let out = Outbound::new(cfg.outbound_capacity);
    let reader_stream = stream.try_clone()?;
    let mut writer_stream = stream.try_clone()?;

    let writer = {
        let out = out.clone();
        std::thread::spawn(move || {
            use std::io::Write;
            while let Some(frame) = out.pop() {
                if writer_stream.write_all(frame.bytes()).is_err() {
                    break;
                }
            }
            let _ = writer_stream.shutdown(Shutdown::Both);
        })
    };

    let reader = {
        let out = out.clone();
        std::thread::spawn(move || {
            serve_connection(reader_stream, client_id, &hub, &out);
            hub.unsubscribe_all(client_id);
            // Let the writer flush anything queued (final error replies
            // included), then drop the registry entry: threads that
            // finished on their own are detached, not leaked.
            out.close();
            let mut conns = conns.lock().unwrap();
            conns.retain(|c| c.client_id != client_id);
        })
    };

    Ok(ConnEntry {
        client_id,
        stream,
        out,
        reader: Some(reader),
        writer: Some(writer),
    })
}

fn reply_error(out: &Outbound, code: ErrorCode, message: impl Into<String>) {
    out.push_reply(Message::Error { code, message: message.into() }.encode());
}

fn serve_connection(mut stream: TcpStream, client_id: u64, hub: &Hub, out: &Arc<Outbound>) {
    // HELLO gate: first frame must announce a compatible version.
    match wire::read_message(&mut stream) {
        Ok(Message::Hello { version }) if version == PROTOCOL_VERSION => {
            out.push_reply(Message::Hello { version: PROTOCOL_VERSION }.encode());
        }
        Ok(_) => {
            reply_error(out, ErrorCode::Malformed, "expected HELLO");
            return;
        }
        Err(_) => return,
    }

    loop {
        let msg = match wire::read_message(&mut stream) {
            Ok(msg) => msg,
            Err(wire::WireError::Io(_)) => return,
            Err(e) => {
                reply_error(out, ErrorCode::Malformed, e.to_string());
                return;
            }
        };
        match msg {
            Message::Get { name } => match resolve(hub, &name) {
                Ok(id) => reply_value(out, hub, id),
                Err(e) => reply_error(out, ErrorCode::NotFound, e),
            },
            Message::Put { value } => match resolve(hub, &value.name) {
                Ok(id) => {
                    if hub.registry().get(id).writable {
                        hub.write_live(id, value.triple());
                        reply_value(out, hub, id);
                    } else {
                        reply_error(out, ErrorCode::ReadOnly, value.name);
                    }
                }
                Err(e) => reply_error(out, ErrorCode::NotFound, e),
            },
            Message::Subscribe { name } => match resolve(hub, &name) {
                Ok(id) => {
                    hub.subscribe(id, client_id, out.clone());
                    reply_value(out, hub, id);
                }
                Err(e) => reply_error(out, ErrorCode::NotFound, e),
            },
            Message::Unsubscribe { name } => match resolve(hub, &name) {
                Ok(id) => {
                    // Removing under the channel lock happens before the
                    // ack is queued: no events for this channel can
                    // follow the ack.
                    hub.unsubscribe(id, client_id);
                    reply_value(out, hub, id);
                }
                Err(e) => reply_error(out, ErrorCode::NotFound, e),
            },
            // Server-to-client opcodes arriving here are protocol abuse.
            Message::Hello { .. } | Message::Event { .. } | Message::Value { .. }
            | Message::Error { .. } => {
                reply_error(out, ErrorCode::Malformed, "unexpected opcode");
                return;
            }
        }
    }
}

fn resolve(hub: &Hub, name: &str) -> Result<ChannelId, String> {
    hub.registry()
        .resolve_full_name(name)
        .map_err(|_| name.to_string())
}

fn reply_value(out: &Outbound, hub: &Hub, id: ChannelId) {
    let value = WireValue::new(hub.registry().get(id).full_name(), hub.live().read(id));
    out.push_reply(Message::Value { value }.encode());
}
