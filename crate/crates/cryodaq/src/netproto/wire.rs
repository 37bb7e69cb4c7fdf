//! Frame codec for the channel-access wire protocol.
//!
//! Every frame is `u32 LE length` (byte count of opcode + payload),
//! one opcode byte, then an opcode-specific payload; largest legal
//! frame body is 64 KiB. Strings are UTF-8 prefixed by a `u16 LE`
//! length; floats are little-endian IEEE-754 float64, matching the
//! archive format. The full grammar lives in `docs/PROTOCOL.md`.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const OP_HELLO: u8 = 0x01;
pub const OP_GET: u8 = 0x02;
pub const OP_PUT: u8 = 0x03;
pub const OP_SUBSCRIBE: u8 = 0x04;
pub const OP_EVENT: u8 = 0x05;
pub const OP_UNSUBSCRIBE: u8 = 0x06;
pub const OP_ERROR: u8 = 0x07;
pub const OP_VALUE: u8 = 0x08;

pub const PROTOCOL_VERSION: u16 = 1;

/// Maximum legal frame body (opcode + payload): 64 KiB.
pub const MAX_FRAME_BYTES: u32 = 64 * 1024;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame length {0} outside 1..={MAX_FRAME_BYTES}")]
    BadLength(u32),
    #[error("unknown opcode {0:#04x}")]
    BadOpcode(u8),
    #[error("payload truncated or oversized for opcode {0:#04x}")]
    BadPayload(u8),
    #[error("name is not UTF-8")]
    BadName,
    #[error("unknown error code {0}")]
    BadErrorCode(u8),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    NotFound = 1,
    ReadOnly = 2,
    Malformed = 3,
}

impl ErrorCode {
    pub fn from_u8(code: u8) -> Option<Self> {
        match code {
            1 => Some(ErrorCode::NotFound),
            2 => Some(ErrorCode::ReadOnly),
            3 => Some(ErrorCode::Malformed),
            _ => None,
        }
    }
}

/// A live channel value in transit: full channel name plus the
/// `(time_index, raw, calibrated)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct WireValue {
    pub name: String,
    pub time_index: f64,
    pub raw: f64,
    pub calibrated: f64,
}

impl WireValue {
    pub fn new(name: impl Into<String>, triple: [f64; 3]) -> Self {
        WireValue {
            name: name.into(),
            time_index: triple[0],
            raw: triple[1],
            calibrated: triple[2],
        }
    }

    pub fn triple(&self) -> [f64; 3] {
        [self.time_index, self.raw, self.calibrated]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello { version: u16 },
    Get { name: String },
    Put { value: WireValue },
    Subscribe { name: String },
    Event { value: WireValue },
    Unsubscribe { name: String },
    Error { code: ErrorCode, message: String },
    Value { value: WireValue },
}

impl Message {
    pub fn opcode(&self) -> u8 {
        match self {
            Message::Hello { .. } => OP_HELLO,
            Message::Get { .. } => OP_GET,
            Message::Put { .. } => OP_PUT,
            Message::Subscribe { .. } => OP_SUBSCRIBE,
            Message::Event { .. } => OP_EVENT,
            Message::Unsubscribe { .. } => OP_UNSUBSCRIBE,
            Message::Error { .. } => OP_ERROR,
            Message::Value { .. } => OP_VALUE,
        }
    }

    /// Serialize to a complete frame including the length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.encode_payload();
        let body_len = 1 + payload.len() as u32;
        let mut frame = Vec::with_capacity(4 + body_len as usize);
        frame.extend_from_slice(&body_len.to_le_bytes());
        frame.push(self.opcode());
        frame.extend_from_slice(&payload);
        frame
    }

    fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Hello { version } => out.extend_from_slice(&version.to_le_bytes()),
            Message::Get { name } | Message::Subscribe { name } | Message::Unsubscribe { name } => {
                put_name(&mut out, name)
            }
            Message::Put { value } | Message::Event { value } | Message::Value { value } => {
                put_name(&mut out, &value.name);
                out.extend_from_slice(&value.time_index.to_le_bytes());
                out.extend_from_slice(&value.raw.to_le_bytes());
                out.extend_from_slice(&value.calibrated.to_le_bytes());
            }
            Message::Error { code, message } => {
                out.push(*code as u8);
                put_name(&mut out, message);
            }
        }
        out
    }

    /// Decode a frame body (opcode + payload). The payload must be
    /// consumed exactly; trailing bytes are an error.
    pub fn decode(opcode: u8, payload: &[u8]) -> Result<Message, WireError> {
        let mut rd = PayloadReader { buf: payload, pos: 0, opcode };
        let msg = match opcode {
            OP_HELLO => Message::Hello { version: rd.u16()? },
            OP_GET => Message::Get { name: rd.name()? },
            OP_PUT => Message::Put { value: rd.value()? },
            OP_SUBSCRIBE => Message::Subscribe { name: rd.name()? },
            OP_EVENT => Message::Event { value: rd.value()? },
            OP_UNSUBSCRIBE => Message::Unsubscribe { name: rd.name()? },
            OP_ERROR => {
                let code = rd.u8()?;
                let code = ErrorCode::from_u8(code).ok_or(WireError::BadErrorCode(code))?;
                Message::Error { code, message: rd.name()? }
            }
            OP_VALUE => Message::Value { value: rd.value()? },
            other => return Err(WireError::BadOpcode(other)),
        };
        rd.finish()?;
        Ok(msg)
    }
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    debug_assert!(name.len() <= u16::MAX as usize);
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

struct PayloadReader<'a> {
    buf: &'a [u8],
    pos: usize,
    opcode: u8,
}

impl PayloadReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::BadPayload(self.opcode));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String, WireError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| WireError::BadName)
    }

    fn value(&mut self) -> Result<WireValue, WireError> {
        Ok(WireValue {
            name: self.name()?,
            time_index: self.f64()?,
            raw: self.f64()?,
            calibrated: self.f64()?,
        })
    }

    fn finish(self) -> Result<(), WireError> {
        if self.pos != self.buf.len() {
            return Err(WireError::BadPayload(self.opcode));
        }
        Ok(())
    }
}

/// Read one frame body from the stream. Blocks until a full frame
/// arrives; EOF before the length prefix surfaces as `Io(UnexpectedEof)`.
pub fn read_frame(r: &mut impl Read) -> Result<(u8, Vec<u8>), WireError> {
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let len = u32::from_le_bytes(len_buf);
    if !(1..=MAX_FRAME_BYTES).contains(&len) {
        return Err(WireError::BadLength(len));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok((body[0], body[1..].to_vec()))
}

pub fn read_message(r: &mut impl Read) -> Result<Message, WireError> {
    let (opcode, payload) = read_frame(r)?;
    Message::decode(opcode, &payload)
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<(), WireError> {
    w.write_all(&msg.encode())?;
    Ok(())
}
