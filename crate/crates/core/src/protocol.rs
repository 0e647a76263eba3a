//! Binary protocol spoken with the logit server.
//!
//! Every message is a frame `{u32 length, u8 opcode, payload}` where `length`
//! counts the opcode byte plus the payload. All integers are little-endian.
//!
//! | opcode | request payload                         | reply payload                                           |
//! |--------|-----------------------------------------|---------------------------------------------------------|
//! | OPEN 1 | model id, UTF-8                         | u64 session, u32 vocab, u32 window, u8 flags, 32B fingerprint |
//! | CLOSE 2| u64 session                             | empty                                                   |
//! | RESET 3| u64 session                             | empty                                                   |
//! | TOKENIZE 4 | u64 session, text bytes             | u32 count, count x u32 ids                              |
//! | DETOKENIZE 5 | u64 session, u32 count, count x u32 ids | text bytes                                      |
//! | PREDICT 6 | u64 session, u8 has_commit, u32 token | u32 n, n x u16 frequencies                             |
//!
//! Errors are replied with opcode `request | 0x80` and a u16 status code.

use std::io::{self, Read, Write};

use thiserror::Error;

/// Upper bound on a frame body; larger length prefixes are treated as corrupt.
pub const MAX_FRAME: u32 = 64 << 20;
pub const ERROR_BIT: u8 = 0x80;
/// OPEN reply flag: distributions are reproducible across hosts.
pub const FLAG_CROSS_HOST: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Opcode {
    Open = 1,
    Close = 2,
    Reset = 3,
    Tokenize = 4,
    Detokenize = 5,
    Predict = 6,
}

impl Opcode {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Opcode::Open,
            2 => Opcode::Close,
            3 => Opcode::Reset,
            4 => Opcode::Tokenize,
            5 => Opcode::Detokenize,
            6 => Opcode::Predict,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    ModelNotLoaded,
    SessionUnknown,
    ContextOverflow,
    NotInvertible,
    UnknownModel,
    BadRequest,
    Other(u16),
}

impl Status {
    pub fn code(self) -> u16 {
        match self {
            Status::ModelNotLoaded => 1,
            Status::SessionUnknown => 2,
            Status::ContextOverflow => 3,
            Status::NotInvertible => 4,
            Status::UnknownModel => 5,
            Status::BadRequest => 6,
            Status::Other(c) => c,
        }
    }

    pub fn from_code(code: u16) -> Self {
        match code {
            1 => Status::ModelNotLoaded,
            2 => Status::SessionUnknown,
            3 => Status::ContextOverflow,
            4 => Status::NotInvertible,
            5 => Status::UnknownModel,
            6 => Status::BadRequest,
            c => Status::Other(c),
        }
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("frame length {0} out of range")]
    BadLength(u32),
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("malformed {0:?} payload")]
    Malformed(Opcode),
    #[error("empty frame")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenInfo {
    pub session: u64,
    pub vocab_size: u32,
    pub context_window: u32,
    pub flags: u8,
    pub tokenizer_fingerprint: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Open { model_id: String },
    Close { session: u64 },
    Reset { session: u64 },
    Tokenize { session: u64, text: Vec<u8> },
    Detokenize { session: u64, ids: Vec<u32> },
    Predict { session: u64, commit: Option<u32> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Opened(OpenInfo),
    Closed,
    Reset,
    Tokens(Vec<u32>),
    Text(Vec<u8>),
    Distribution(Vec<u16>),
    Error { opcode: Opcode, status: Status },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    op: Opcode,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.bytes.len() < n {
            return Err(WireError::Malformed(self.op));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.bytes)
    }

    fn done(&self) -> Result<(), WireError> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(WireError::Malformed(self.op))
        }
    }

    fn u32_list(&mut self) -> Result<Vec<u32>, WireError> {
        let count = self.u32()? as usize;
        if self.bytes.len() / 4 < count {
            return Err(WireError::Malformed(self.op));
        }
        (0..count).map(|_| self.u32()).collect()
    }
}

fn frame(opcode: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + payload.len());
    out.extend_from_slice(&(payload.len() as u32 + 1).to_le_bytes());
    out.push(opcode);
    out.extend_from_slice(payload);
    out
}

fn push_ids(out: &mut Vec<u8>, ids: &[u32]) {
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
}

impl Request {
    pub fn opcode(&self) -> Opcode {
        match self {
            Request::Open { .. } => Opcode::Open,
            Request::Close { .. } => Opcode::Close,
            Request::Reset { .. } => Opcode::Reset,
            Request::Tokenize { .. } => Opcode::Tokenize,
            Request::Detokenize { .. } => Opcode::Detokenize,
            Request::Predict { .. } => Opcode::Predict,
        }
    }

    /// Complete frame, length prefix included.
    pub fn to_frame(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            Request::Open { model_id } => p.extend_from_slice(model_id.as_bytes()),
            Request::Close { session } | Request::Reset { session } => {
                p.extend_from_slice(&session.to_le_bytes())
            }
            Request::Tokenize { session, text } => {
                p.extend_from_slice(&session.to_le_bytes());
                p.extend_from_slice(text);
            }
            Request::Detokenize { session, ids } => {
                p.extend_from_slice(&session.to_le_bytes());
                push_ids(&mut p, ids);
            }
            Request::Predict { session, commit } => {
                p.extend_from_slice(&session.to_le_bytes());
                p.push(commit.is_some() as u8);
                p.extend_from_slice(&commit.unwrap_or(0).to_le_bytes());
            }
        }
        frame(self.opcode() as u8, &p)
    }

    /// Parse a frame body (opcode and payload, no length prefix).
    pub fn from_body(body: &[u8]) -> Result<Self, WireError> {
        let (&code, payload) = body.split_first().ok_or(WireError::Empty)?;
        let op = Opcode::from_u8(code).ok_or(WireError::UnknownOpcode(code))?;
        let mut c = Cursor { bytes: payload, op };
        let req = match op {
            Opcode::Open => Request::Open {
                model_id: String::from_utf8(c.rest().to_vec())
                    .map_err(|_| WireError::Malformed(op))?,
            },
            Opcode::Close => Request::Close { session: c.u64()? },
            Opcode::Reset => Request::Reset { session: c.u64()? },
            Opcode::Tokenize => Request::Tokenize {
                session: c.u64()?,
                text: c.rest().to_vec(),
            },
            Opcode::Detokenize => Request::Detokenize {
                session: c.u64()?,
                ids: c.u32_list()?,
            },
            Opcode::Predict => {
                let session = c.u64()?;
                let flag = c.u8()?;
                let token = c.u32()?;
                let commit = match flag {
                    0 => None,
                    1 => Some(token),
                    _ => return Err(WireError::Malformed(op)),
                };
                Request::Predict { session, commit }
            }
        };
        c.done()?;
        Ok(req)
    }
}

impl Reply {
    pub fn to_frame(&self) -> Vec<u8> {
        let mut p = Vec::new();
        let code = match self {
            Reply::Opened(info) => {
                p.extend_from_slice(&info.session.to_le_bytes());
                p.extend_from_slice(&info.vocab_size.to_le_bytes());
                p.extend_from_slice(&info.context_window.to_le_bytes());
                p.push(info.flags);
                p.extend_from_slice(&info.tokenizer_fingerprint);
                Opcode::Open as u8
            }
            Reply::Closed => Opcode::Close as u8,
            Reply::Reset => Opcode::Reset as u8,
            Reply::Tokens(ids) => {
                push_ids(&mut p, ids);
                Opcode::Tokenize as u8
            }
            Reply::Text(text) => {
                p.extend_from_slice(text);
                Opcode::Detokenize as u8
            }
            Reply::Distribution(freqs) => {
                p.extend_from_slice(&(freqs.len() as u32).to_le_bytes());
                for f in freqs {
                    p.extend_from_slice(&f.to_le_bytes());
                }
                Opcode::Predict as u8
            }
            Reply::Error { opcode, status } => {
                p.extend_from_slice(&status.code().to_le_bytes());
                *opcode as u8 | ERROR_BIT
            }
        };
        frame(code, &p)
    }

    pub fn from_body(body: &[u8]) -> Result<Self, WireError> {
        let (&code, payload) = body.split_first().ok_or(WireError::Empty)?;
        let op = Opcode::from_u8(code & !ERROR_BIT).ok_or(WireError::UnknownOpcode(code))?;
        let mut c = Cursor { bytes: payload, op };
        let reply = if code & ERROR_BIT != 0 {
            Reply::Error {
                opcode: op,
                status: Status::from_code(c.u16()?),
            }
        } else {
            match op {
                Opcode::Open => {
                    let session = c.u64()?;
                    let vocab_size = c.u32()?;
                    let context_window = c.u32()?;
                    let flags = c.u8()?;
                    let tokenizer_fingerprint = c.take(32)?.try_into().unwrap();
                    Reply::Opened(OpenInfo {
                        session,
                        vocab_size,
                        context_window,
                        flags,
                        tokenizer_fingerprint,
                    })
                }
                Opcode::Close => Reply::Closed,
                Opcode::Reset => Reply::Reset,
                Opcode::Tokenize => Reply::Tokens(c.u32_list()?),
                Opcode::Detokenize => Reply::Text(c.rest().to_vec()),
                Opcode::Predict => {
                    let n = c.u32()? as usize;
                    if c.bytes.len() / 2 < n {
                        return Err(WireError::Malformed(op));
                    }
                    Reply::Distribution((0..n).map(|_| c.u16()).collect::<Result<_, _>>()?)
                }
            }
        };
        c.done()?;
        Ok(reply)
    }
}

/// Read one frame body (opcode + payload).
pub fn read_frame<R: Read>(r: &mut R) -> Result<Vec<u8>, WireError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len);
    if len == 0 || len > MAX_FRAME {
        return Err(WireError::BadLength(len));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(body)
}

pub fn write_frame<W: Write>(w: &mut W, frame: &[u8]) -> Result<(), WireError> {
    w.write_all(frame)?;
    w.flush()?;
    Ok(())
}
