//! Client side of the logit-server protocol.

use std::io::ErrorKind;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::model::{
    Alphabet, Predictor, PredictorDescriptor, PredictorError, QuantizedDistribution, TOTAL,
};
use crate::protocol::{
    read_frame, write_frame, Opcode, OpenInfo, Reply, Request, Status, WireError,
};

/// Environment variable consulted when no endpoint is given explicitly.
pub const ENDPOINT_ENV: &str = "PPRESS_ENDPOINT";

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteEndpoint {
    pub address: String,
    pub timeout: Duration,
}

impl RemoteEndpoint {
    pub fn new(address: impl Into<String>) -> Self {
        RemoteEndpoint {
            address: address.into(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .map(Self::new)
    }
}

fn unavailable(e: impl std::fmt::Display) -> PredictorError {
    PredictorError::RemoteUnavailable(e.to_string())
}

fn violation(e: impl std::fmt::Display) -> PredictorError {
    PredictorError::RemoteProtocolViolation(e.to_string())
}

/// One open session on a logit server.
pub struct RemoteSession {
    stream: TcpStream,
    info: OpenInfo,
    model_id: String,
    closed: bool,
}

impl std::fmt::Debug for RemoteSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteSession")
            .field("model_id", &self.model_id)
            .field("info", &self.info)
            .finish()
    }
}

impl RemoteSession {
    pub fn open(endpoint: &RemoteEndpoint, model_id: &str) -> Result<Self, PredictorError> {
        let addrs = endpoint
            .address
            .to_socket_addrs()
            .map_err(|e| unavailable(format!("{}: {e}", endpoint.address)))?;
        let mut last = None;
        let mut stream = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, endpoint.timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        let stream = stream.ok_or_else(|| match last {
            Some(e) => unavailable(format!("{}: {e}", endpoint.address)),
            None => unavailable(format!("{}: no addresses", endpoint.address)),
        })?;
        stream
            .set_read_timeout(Some(endpoint.timeout))
            .and_then(|_| stream.set_write_timeout(Some(endpoint.timeout)))
            .and_then(|_| stream.set_nodelay(true))
            .map_err(unavailable)?;
        let mut session = RemoteSession {
            stream,
            info: OpenInfo {
                session: 0,
                vocab_size: 0,
                context_window: 0,
                flags: 0,
                tokenizer_fingerprint: [0; 32],
            },
            model_id: model_id.to_string(),
            closed: true,
        };
        match session.call(&Request::Open {
            model_id: model_id.to_string(),
        })? {
            Reply::Opened(info) => {
                if Alphabet::external(info.vocab_size).is_err() {
                    return Err(violation(format!(
                        "vocabulary of {} tokens does not fit 16-bit frequencies",
                        info.vocab_size
                    )));
                }
                session.info = info;
                session.closed = false;
                Ok(session)
            }
            other => Err(unexpected(Opcode::Open, &other)),
        }
    }

    pub fn info(&self) -> &OpenInfo {
        &self.info
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::external(self.info.vocab_size).expect("validated on open")
    }

    // Error replies come back as `Ok(Err(status))` so callers can act on them.
    fn exchange(&mut self, req: &Request) -> Result<Result<Reply, Status>, PredictorError> {
        write_frame(&mut self.stream, &req.to_frame()).map_err(wire_error)?;
        let body = read_frame(&mut self.stream).map_err(wire_error)?;
        let reply = Reply::from_body(&body).map_err(violation)?;
        match reply {
            Reply::Error { opcode, status } if opcode == req.opcode() => Ok(Err(status)),
            Reply::Error { opcode, .. } => Err(violation(format!("error reply for {opcode:?}"))),
            reply => Ok(Ok(reply)),
        }
    }

    fn call(&mut self, req: &Request) -> Result<Reply, PredictorError> {
        self.exchange(req)?
            .map_err(|status| self.status_error(req.opcode(), status))
    }

    fn status_error(&self, op: Opcode, status: Status) -> PredictorError {
        match status {
            Status::ContextOverflow => PredictorError::ContextOverflow {
                window: self.info.context_window as usize,
            },
            Status::ModelNotLoaded | Status::UnknownModel => {
                unavailable(format!("{status:?} for model {}", self.model_id))
            }
            other => violation(format!("{op:?} replied {other:?}")),
        }
    }

    /// Token ids for `text`, or `None` when the server declares the text not
    /// invertible.
    pub fn tokenize(&mut self, text: &[u8]) -> Result<Option<Vec<u32>>, PredictorError> {
        let req = Request::Tokenize {
            session: self.info.session,
            text: text.to_vec(),
        };
        match self.exchange(&req)? {
            Ok(Reply::Tokens(ids)) => Ok(Some(ids)),
            Ok(other) => Err(unexpected(Opcode::Tokenize, &other)),
            Err(Status::NotInvertible) => Ok(None),
            Err(status) => Err(self.status_error(Opcode::Tokenize, status)),
        }
    }

    pub fn detokenize(&mut self, ids: &[u32]) -> Result<Option<Vec<u8>>, PredictorError> {
        let req = Request::Detokenize {
            session: self.info.session,
            ids: ids.to_vec(),
        };
        match self.exchange(&req)? {
            Ok(Reply::Text(text)) => Ok(Some(text)),
            Ok(other) => Err(unexpected(Opcode::Detokenize, &other)),
            Err(Status::NotInvertible) => Ok(None),
            Err(status) => Err(self.status_error(Opcode::Detokenize, status)),
        }
    }

    pub fn reset(&mut self) -> Result<(), PredictorError> {
        match self.call(&Request::Reset {
            session: self.info.session,
        })? {
            Reply::Reset => Ok(()),
            other => Err(unexpected(Opcode::Reset, &other)),
        }
    }

    /// Commit `commit` (if any) to the context and fetch the next distribution.
    pub fn predict(
        &mut self,
        commit: Option<u32>,
    ) -> Result<QuantizedDistribution, PredictorError> {
        let reply = self.call(&Request::Predict {
            session: self.info.session,
            commit,
        })?;
        let Reply::Distribution(freqs) = reply else {
            return Err(unexpected(Opcode::Predict, &reply));
        };
        let expected = self.info.vocab_size as usize + 1;
        if freqs.len() != expected {
            return Err(violation(format!(
                "distribution has {} entries, expected {expected}",
                freqs.len()
            )));
        }
        let sum: u32 = freqs.iter().map(|&f| u32::from(f)).sum();
        if sum != TOTAL {
            return Err(violation(format!("frequencies sum to {sum}")));
        }
        QuantizedDistribution::from_freqs(freqs.into_iter().map(u32::from).collect())
            .map_err(violation)
    }

    pub fn close(mut self) -> Result<(), PredictorError> {
        self.closed = true;
        match self.call(&Request::Close {
            session: self.info.session,
        })? {
            Reply::Closed => Ok(()),
            other => Err(unexpected(Opcode::Close, &other)),
        }
    }
}

impl Drop for RemoteSession {
    fn drop(&mut self) {
        if !self.closed {
            self.closed = true;
            let frame = Request::Close {
                session: self.info.session,
            }
            .to_frame();
            if write_frame(&mut self.stream, &frame).is_ok() {
                let _ = read_frame(&mut self.stream);
            }
        }
    }
}

fn wire_error(e: WireError) -> PredictorError {
    match e {
        WireError::Io(io) => match io.kind() {
            ErrorKind::UnexpectedEof | ErrorKind::InvalidData => violation(io),
            _ => unavailable(io),
        },
        other => violation(other),
    }
}

fn unexpected(op: Opcode, reply: &Reply) -> PredictorError {
    violation(format!("unexpected reply to {op:?}: {reply:?}"))
}

/// Predictor backed by a remote language model session.
///
/// `update` stores the observed token; the next `predict` commits it and
/// fetches the new distribution in one round trip.
#[derive(Debug)]
pub struct RemotePredictor {
    session: RemoteSession,
    alphabet: Alphabet,
    pending: Option<u32>,
    cached: Option<QuantizedDistribution>,
    context_len: usize,
}

impl RemotePredictor {
    pub fn connect(endpoint: &RemoteEndpoint, model_id: &str) -> Result<Self, PredictorError> {
        Ok(Self::from_session(RemoteSession::open(endpoint, model_id)?))
    }

    pub fn from_session(session: RemoteSession) -> Self {
        RemotePredictor {
            alphabet: session.alphabet(),
            session,
            pending: None,
            cached: None,
            context_len: 0,
        }
    }

    pub fn session(&mut self) -> &mut RemoteSession {
        &mut self.session
    }

    pub fn tokenizer_fingerprint(&self) -> [u8; 32] {
        self.session.info.tokenizer_fingerprint
    }

    pub fn model_id(&self) -> &str {
        self.session.model_id()
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    fn flush_pending(&mut self) -> Result<(), PredictorError> {
        if let Some(token) = self.pending.take() {
            self.session.predict(Some(token))?;
        }
        Ok(())
    }
}

impl Predictor for RemotePredictor {
    fn descriptor(&self) -> PredictorDescriptor {
        PredictorDescriptor::new(
            "remote",
            vec![
                ("model_id".into(), self.session.model_id.clone()),
                ("vocab_size".into(), self.alphabet.size().to_string()),
            ],
        )
    }

    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn context_window(&self) -> usize {
        self.session.info.context_window as usize
    }

    fn predict(&mut self) -> Result<&QuantizedDistribution, PredictorError> {
        if self.cached.is_none() {
            let dist = self.session.predict(self.pending.take())?;
            self.cached = Some(dist);
        }
        Ok(self.cached.as_ref().expect("filled above"))
    }

    fn update(&mut self, symbol: u32) -> Result<(), PredictorError> {
        if symbol == self.alphabet.eos() {
            return self.reset_context();
        }
        if symbol > self.alphabet.eos() {
            return Err(PredictorError::InvalidSymbol {
                symbol,
                size: self.alphabet.size(),
            });
        }
        self.flush_pending()?;
        self.pending = Some(symbol);
        self.cached = None;
        self.context_len += 1;
        Ok(())
    }

    fn reset_context(&mut self) -> Result<(), PredictorError> {
        self.pending = None;
        self.cached = None;
        self.context_len = 0;
        self.session.reset()
    }

    fn is_adaptive(&self) -> bool {
        false
    }
}
