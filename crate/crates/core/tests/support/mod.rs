//! In-process stand-in for the logit server, speaking the real wire protocol.
//!
//! Tokenizer: every byte is a token, plus a few two-byte merges. Text with a
//! 0xFF byte is declared not invertible. Distributions are a pure function of
//! the last two context tokens, quantized with the same rule as the client.

#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use ppress::container::sha256;
use ppress::model::QuantizedDistribution;
use ppress::predictors::RemoteEndpoint;
use ppress::protocol::{read_frame, write_frame, Opcode, OpenInfo, Reply, Request, Status};

pub const MODEL: &str = "mock-lm";
pub const MERGES: [&[u8; 2]; 8] = [b"th", b"he", b"in", b"er", b"an", b" t", b"e ", b"d "];

#[derive(Clone, Debug)]
pub struct MockOptions {
    pub merges: Vec<[u8; 2]>,
    pub window: u32,
    pub flags: u8,
    /// From this context length on, even-numbered sessions predict differently.
    pub drift_after: Option<usize>,
    /// Reply with frequencies summing to TOTAL - 1.
    pub bad_sum: bool,
}

impl Default for MockOptions {
    fn default() -> Self {
        MockOptions {
            merges: MERGES.iter().map(|m| **m).collect(),
            window: 4096,
            flags: 1,
            drift_after: None,
            bad_sum: false,
        }
    }
}

struct Session {
    context: Vec<u32>,
}

struct Shared {
    opts: MockOptions,
    sessions: Mutex<HashMap<u64, Session>>,
    next_id: AtomicU64,
    predicts: AtomicU64,
    stop: AtomicBool,
}

pub struct MockServer {
    address: String,
    shared: Arc<Shared>,
}

impl MockServer {
    pub fn start(opts: MockOptions) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        listener.set_nonblocking(true).expect("nonblocking");
        let address = listener.local_addr().unwrap().to_string();
        let shared = Arc::new(Shared {
            opts,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            predicts: AtomicU64::new(0),
            stop: AtomicBool::new(false),
        });
        let s = shared.clone();
        thread::spawn(move || {
            while !s.stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let s = s.clone();
                        thread::spawn(move || serve(stream, &s));
                    }
                    Err(_) => thread::sleep(Duration::from_millis(2)),
                }
            }
        });
        MockServer { address, shared }
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    pub fn endpoint(&self) -> RemoteEndpoint {
        RemoteEndpoint::new(self.address.clone()).with_timeout(Duration::from_secs(10))
    }

    pub fn sessions_opened(&self) -> u64 {
        self.shared.next_id.load(Ordering::Relaxed) - 1
    }

    pub fn predict_calls(&self) -> u64 {
        self.shared.predicts.load(Ordering::Relaxed)
    }

    pub fn vocab_size(&self) -> u32 {
        256 + self.shared.opts.merges.len() as u32
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
    }
}

fn serve(stream: TcpStream, shared: &Shared) {
    stream.set_nonblocking(false).ok();
    let mut reader = BufReader::new(stream.try_clone().expect("clone"));
    let mut writer = BufWriter::new(stream);
    while let Ok(body) = read_frame(&mut reader) {
        let reply = match Request::from_body(&body) {
            Ok(req) => handle(shared, req),
            Err(_) => Reply::Error {
                opcode: Opcode::from_u8(body[0] & 0x7f).unwrap_or(Opcode::Open),
                status: Status::BadRequest,
            },
        };
        if write_frame(&mut writer, &reply.to_frame()).is_err() {
            return;
        }
    }
}

fn fingerprint(opts: &MockOptions) -> [u8; 32] {
    let flat: Vec<u8> = opts.merges.iter().flatten().copied().collect();
    sha256(&flat)
}

pub fn tokenize(merges: &[[u8; 2]], text: &[u8]) -> Vec<u32> {
    let mut ids = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let merged = (i + 1 < text.len())
            .then(|| merges.iter().position(|m| m[..] == text[i..i + 2]))
            .flatten();
        match merged {
            Some(m) => {
                ids.push(256 + m as u32);
                i += 2;
            }
            None => {
                ids.push(u32::from(text[i]));
                i += 1;
            }
        }
    }
    ids
}

fn detokenize(merges: &[[u8; 2]], ids: &[u32]) -> Option<Vec<u8>> {
    let mut out = Vec::new();
    for &id in ids {
        match id {
            0..=255 => out.push(id as u8),
            _ => out.extend_from_slice(merges.get(id as usize - 256)?),
        }
    }
    Some(out)
}

/// Frequencies the mock serves after `context`.
pub fn mock_distribution(opts: &MockOptions, session: u64, context: &[u32]) -> Vec<u16> {
    let vocab = 256 + opts.merges.len();
    let mut probs = vec![1.0f64; vocab + 1];
    let a = context
        .len()
        .checked_sub(2)
        .map_or(0, |i| context[i] as usize);
    let b = context.last().map_or(0, |&t| t as usize);
    probs[(a * 31 + b * 7 + 1) % vocab] += 400.0;
    probs[(b + 1) % vocab] += 150.0;
    probs[b' ' as usize] += 60.0;
    probs[b'e' as usize] += 40.0;
    if context.len() > 3 {
        probs[vocab] += 2.0;
    }
    if let Some(from) = opts.drift_after {
        if context.len() >= from && session.is_multiple_of(2) {
            probs[(b + 2) % vocab] += 900.0;
        }
    }
    let q = QuantizedDistribution::quantize_slice(&probs).expect("valid probabilities");
    let mut freqs: Vec<u16> = q.freqs().iter().map(|&f| f as u16).collect();
    if opts.bad_sum {
        let i = freqs.iter().position(|&f| f > 1).unwrap();
        freqs[i] -= 1;
    }
    freqs
}

fn handle(shared: &Shared, req: Request) -> Reply {
    let opts = &shared.opts;
    let err = |opcode, status| Reply::Error { opcode, status };
    let mut sessions = shared.sessions.lock().unwrap();
    match req {
        Request::Open { model_id } => {
            if model_id != MODEL {
                return err(Opcode::Open, Status::UnknownModel);
            }
            let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
            sessions.insert(
                id,
                Session {
                    context: Vec::new(),
                },
            );
            Reply::Opened(OpenInfo {
                session: id,
                vocab_size: 256 + opts.merges.len() as u32,
                context_window: opts.window,
                flags: opts.flags,
                tokenizer_fingerprint: fingerprint(opts),
            })
        }
        Request::Close { session } => match sessions.remove(&session) {
            Some(_) => Reply::Closed,
            None => err(Opcode::Close, Status::SessionUnknown),
        },
        Request::Reset { session } => match sessions.get_mut(&session) {
            Some(s) => {
                s.context.clear();
                Reply::Reset
            }
            None => err(Opcode::Reset, Status::SessionUnknown),
        },
        Request::Tokenize { session, text } => {
            if !sessions.contains_key(&session) {
                return err(Opcode::Tokenize, Status::SessionUnknown);
            }
            if text.contains(&0xff) {
                return err(Opcode::Tokenize, Status::NotInvertible);
            }
            Reply::Tokens(tokenize(&opts.merges, &text))
        }
        Request::Detokenize { session, ids } => {
            if !sessions.contains_key(&session) {
                return err(Opcode::Detokenize, Status::SessionUnknown);
            }
            match detokenize(&opts.merges, &ids) {
                Some(text) => Reply::Text(text),
                None => err(Opcode::Detokenize, Status::NotInvertible),
            }
        }
        Request::Predict { session, commit } => {
            shared.predicts.fetch_add(1, Ordering::Relaxed);
            let vocab = 256 + opts.merges.len() as u32;
            let Some(s) = sessions.get_mut(&session) else {
                return err(Opcode::Predict, Status::SessionUnknown);
            };
            if let Some(t) = commit {
                if t >= vocab {
                    return err(Opcode::Predict, Status::BadRequest);
                }
                if s.context.len() >= opts.window as usize {
                    return err(Opcode::Predict, Status::ContextOverflow);
                }
                s.context.push(t);
            }
            Reply::Distribution(mock_distribution(opts, session, &s.context))
        }
    }
}
