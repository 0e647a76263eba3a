//! Compress and decompress pipeline.
//!
//! Text is mapped to symbols (bytes, or token ids from a remote tokenizer),
//! split into chunks, and every chunk is coded by a fresh coder followed by
//! end-of-stream. Each chunk starts from an empty predictor context. Adaptive
//! predictors keep their learned counts across chunks, so their chunks are
//! coded in order by one instance; other predictors code chunk groups in
//! parallel.

mod format;

use thiserror::Error;

pub use format::{
    sha256, ChunkRecord, Container, ContainerHeader, CHUNK_OVERHEAD, FLAG_FALLBACK,
    FLAG_SEQUENTIAL, MAGIC,
};

use crate::coder::{CoderError, Decoder, Encoder};
use crate::model::{Alphabet, AlphabetKind, Predictor, PredictorError, TokenSequence};
use crate::predictors::{
    BoxedPredictor, OrderKPredictor, PredictorConfig, Registry, RegistryError, RemoteEndpoint,
    RemotePredictor, RemoteSession, FALLBACK_ORDER,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContainerError {
    #[error("not a ppress container")]
    BadMagic,
    #[error("container is truncated")]
    Truncated,
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("coder: {0}")]
    Coder(#[from] CoderError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("tokenizer does not reproduce the input text")]
    TokenizationNotInvertible,
    #[error("tokenizer fingerprint or vocabulary differs from the one recorded in the container")]
    TokenizerMismatch,
    #[error("chunk size {chunk} exceeds the model context window of {window} tokens")]
    ChunkExceedsWindow { chunk: usize, window: usize },
    #[error("chunk {index}: {reason}")]
    CorruptChunk { index: usize, reason: String },
    #[error("{}", digest_message(*.nondeterministic_predictor))]
    DigestMismatch { nondeterministic_predictor: bool },
}

fn digest_message(nondeterministic: bool) -> &'static str {
    if nondeterministic {
        "digest mismatch: the predictor is not deterministic (probe contexts disagree)"
    } else {
        "digest mismatch: container is corrupt"
    }
}

impl ContainerError {
    /// True for every failure that means the container bytes are damaged.
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            ContainerError::BadMagic
                | ContainerError::Truncated
                | ContainerError::Malformed(_)
                | ContainerError::Coder(_)
                | ContainerError::CorruptChunk { .. }
                | ContainerError::DigestMismatch { .. }
        )
    }
}

/// Result of [`compress`].
#[derive(Debug, Clone)]
pub struct Compressed {
    pub container: Container,
    /// Set when a remote tokenizer could not represent the input and the
    /// pipeline switched to bytes.
    pub fallback: Option<String>,
}

impl Compressed {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.container.to_bytes()
    }
}

/// Original size over compressed size.
pub fn compression_ratio(original_bytes: u64, compressed_bytes: u64) -> f64 {
    original_bytes as f64 / compressed_bytes as f64
}

fn chunk_ranges(len: usize, chunk_size: usize) -> Vec<std::ops::Range<usize>> {
    if len == 0 {
        return Vec::new();
    }
    if chunk_size == 0 {
        #[allow(clippy::single_range_in_vec_init)]
        return vec![0..len];
    }
    (0..len)
        .step_by(chunk_size)
        .map(|start| start..(start + chunk_size).min(len))
        .collect()
}

/// Code one chunk followed by end-of-stream. The predictor must be at an empty
/// context; observing end-of-stream leaves it at one again.
pub fn encode_chunk<P: Predictor + ?Sized>(
    predictor: &mut P,
    symbols: &[u32],
) -> Result<Vec<u8>, ContainerError> {
    let eos = predictor.alphabet().eos();
    let mut enc = Encoder::new();
    for &s in symbols.iter().chain(std::iter::once(&eos)) {
        let dist = predictor.predict()?;
        enc.encode(dist, s as usize)?;
        predictor.update(s)?;
    }
    Ok(enc.finish())
}

/// Decode one chunk, checking it ends after exactly `token_count` symbols.
pub fn decode_chunk<P: Predictor + ?Sized>(
    predictor: &mut P,
    payload: &[u8],
    token_count: usize,
    index: usize,
) -> Result<Vec<u32>, ContainerError> {
    let eos = predictor.alphabet().eos() as usize;
    let mut dec = Decoder::new(payload)?;
    let mut out = Vec::with_capacity(token_count);
    loop {
        let dist = predictor.predict()?;
        let s = dec.decode(dist)?;
        predictor.update(s as u32)?;
        if s == eos {
            break;
        }
        if out.len() == token_count {
            return Err(ContainerError::CorruptChunk {
                index,
                reason: format!("no end-of-stream after {token_count} symbols"),
            });
        }
        out.push(s as u32);
    }
    if out.len() != token_count {
        return Err(ContainerError::CorruptChunk {
            index,
            reason: format!("ended after {} of {token_count} symbols", out.len()),
        });
    }
    Ok(out)
}

/// Token ids from the server's tokenizer, verified to detokenize back to
/// `text` before any coding starts.
pub fn tokenize_bind(
    text: &[u8],
    session: &mut RemoteSession,
) -> Result<TokenSequence, ContainerError> {
    let ids = session
        .tokenize(text)?
        .ok_or(ContainerError::TokenizationNotInvertible)?;
    let alphabet = session.alphabet();
    let tokens = TokenSequence::new(alphabet, ids).map_err(|e| {
        ContainerError::Predictor(PredictorError::RemoteProtocolViolation(e.to_string()))
    })?;
    match session.detokenize(tokens.symbols())? {
        Some(back) if back == text => Ok(tokens),
        _ => Err(ContainerError::TokenizationNotInvertible),
    }
}

// How fresh predictors are obtained for chunk workers.
enum Source<'a> {
    Local(&'a Registry, PredictorConfig),
    Remote(RemoteEndpoint, String),
}

impl Source<'_> {
    fn build(&self) -> Result<BoxedPredictor, ContainerError> {
        match self {
            Source::Local(registry, config) => Ok(registry.build_local(config)?),
            Source::Remote(endpoint, model) => {
                Ok(Box::new(RemotePredictor::connect(endpoint, model)?))
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn worker_count() -> usize {
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
fn worker_count() -> usize {
    1
}

// Run `job` over contiguous groups of chunks, one predictor per group.
fn run_groups<T, F>(
    source: &Source<'_>,
    n_chunks: usize,
    first: Option<BoxedPredictor>,
    sequential: bool,
    job: F,
) -> Result<Vec<T>, ContainerError>
where
    T: Send,
    F: Fn(&mut dyn Predictor, usize) -> Result<T, ContainerError> + Sync,
{
    let groups = if sequential {
        1
    } else {
        worker_count().clamp(1, n_chunks.max(1))
    };
    let per_group = n_chunks.div_ceil(groups.max(1)).max(1);
    let run = |g: usize, predictor: Option<BoxedPredictor>| -> Result<Vec<T>, ContainerError> {
        let mut predictor = match predictor {
            Some(p) => p,
            None => source.build()?,
        };
        let start = g * per_group;
        let end = (start + per_group).min(n_chunks);
        (start..end).map(|i| job(predictor.as_mut(), i)).collect()
    };
    if groups <= 1 {
        return run(0, first);
    }
    drop(first);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<T>, ContainerError>> = {
        use rayon::prelude::*;
        (0..groups).into_par_iter().map(|g| run(g, None)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<T>, ContainerError>> = (0..groups).map(|g| run(g, None)).collect();
    let mut out = Vec::with_capacity(n_chunks);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Compress `text` with the predictor described by `config`.
pub fn compress(
    text: &[u8],
    config: &PredictorConfig,
    chunk_size: usize,
    registry: &Registry,
) -> Result<Compressed, ContainerError> {
    if chunk_size > u32::MAX as usize {
        return Err(ContainerError::Malformed(format!(
            "chunk size {chunk_size} too large"
        )));
    }
    let digest = sha256(text);
    let mut flags = 0u8;
    let mut fallback = None;

    let (source, first, symbols, fingerprint) = match config {
        PredictorConfig::Remote { model_id, .. } => {
            let endpoint = registry.endpoint_for(config)?;
            let mut remote = RemotePredictor::connect(&endpoint, model_id)?;
            match tokenize_bind(text, remote.session()) {
                Ok(tokens) => {
                    let window = remote.context_window();
                    let longest = if chunk_size == 0 {
                        tokens.len()
                    } else {
                        chunk_size
                    };
                    if window > 0 && longest > window {
                        return Err(ContainerError::ChunkExceedsWindow {
                            chunk: longest,
                            window,
                        });
                    }
                    let fp = remote.tokenizer_fingerprint();
                    let first: BoxedPredictor = Box::new(remote);
                    (
                        Source::Remote(endpoint, model_id.clone()),
                        Some(first),
                        tokens.into_symbols(),
                        fp,
                    )
                }
                Err(ContainerError::TokenizationNotInvertible) => {
                    flags |= FLAG_FALLBACK;
                    fallback = Some(format!(
                        "tokenizer of {model_id} cannot reproduce the input; coded as bytes with orderk:{FALLBACK_ORDER}"
                    ));
                    let config = PredictorConfig::OrderK { k: FALLBACK_ORDER };
                    let first: BoxedPredictor = Box::new(
                        OrderKPredictor::bytes(FALLBACK_ORDER).expect("fallback order is valid"),
                    );
                    (
                        Source::Local(registry, config),
                        Some(first),
                        TokenSequence::from_bytes(text).into_symbols(),
                        [0; 32],
                    )
                }
                Err(e) => return Err(e),
            }
        }
        local => {
            let first = registry.build_local(local)?;
            (
                Source::Local(registry, local.clone()),
                Some(first),
                TokenSequence::from_bytes(text).into_symbols(),
                [0; 32],
            )
        }
    };

    let first = first.expect("always built above");
    let descriptor = first.descriptor();
    let alphabet = first.alphabet();
    let sequential = first.is_adaptive();
    if sequential {
        flags |= FLAG_SEQUENTIAL;
    }
    let ranges = chunk_ranges(symbols.len(), chunk_size);
    let payloads = run_groups(&source, ranges.len(), Some(first), sequential, |p, i| {
        encode_chunk(p, &symbols[ranges[i].clone()])
    })?;
    let chunks = ranges
        .iter()
        .zip(payloads)
        .map(|(r, payload)| ChunkRecord {
            token_count: r.len() as u32,
            payload,
        })
        .collect();
    Ok(Compressed {
        container: Container {
            header: ContainerHeader {
                flags,
                alphabet,
                predictor: descriptor,
                chunk_size: chunk_size as u32,
                original_len: text.len() as u64,
                tokenizer_fingerprint: fingerprint,
                digest,
            },
            chunks,
        },
        fallback,
    })
}

/// Parse and decompress container bytes.
pub fn decompress(bytes: &[u8], registry: &Registry) -> Result<Vec<u8>, ContainerError> {
    let container = Container::from_bytes(bytes)?;
    decompress_container(&container, registry)
}

pub fn decompress_container(
    container: &Container,
    registry: &Registry,
) -> Result<Vec<u8>, ContainerError> {
    let header = &container.header;
    let config = registry.resolve(&header.predictor)?;
    let chunk_size = header.chunk_size as usize;
    for (index, c) in container.chunks.iter().enumerate() {
        if chunk_size > 0 && c.token_count as usize > chunk_size {
            return Err(ContainerError::CorruptChunk {
                index,
                reason: format!("{} symbols exceed chunk size {chunk_size}", c.token_count),
            });
        }
    }

    let (source, first) = match &config {
        PredictorConfig::Remote { model_id, .. } => {
            let endpoint = registry.endpoint_for(&config)?;
            let remote = RemotePredictor::connect(&endpoint, model_id)?;
            if remote.tokenizer_fingerprint() != header.tokenizer_fingerprint
                || remote.alphabet() != header.alphabet
            {
                return Err(ContainerError::TokenizerMismatch);
            }
            let first: BoxedPredictor = Box::new(remote);
            (Source::Remote(endpoint, model_id.clone()), first)
        }
        local => {
            if header.alphabet.kind() != AlphabetKind::Bytes256
                || header.tokenizer_fingerprint != [0; 32]
            {
                return Err(ContainerError::TokenizerMismatch);
            }
            (
                Source::Local(registry, local.clone()),
                registry.build_local(local)?,
            )
        }
    };
    if first.alphabet() != header.alphabet {
        return Err(ContainerError::TokenizerMismatch);
    }
    let sequential = first.is_adaptive() || header.sequential();

    let decoded = run_groups(
        &source,
        container.chunks.len(),
        Some(first),
        sequential,
        |p, i| {
            let c = &container.chunks[i];
            decode_chunk(p, &c.payload, c.token_count as usize, i)
        },
    )?;
    let symbols: Vec<u32> = decoded.into_iter().flatten().collect();

    let text = match &config {
        PredictorConfig::Remote { model_id, .. } => {
            let endpoint = registry.endpoint_for(&config)?;
            let mut session = RemoteSession::open(&endpoint, model_id)?;
            if symbols.is_empty() {
                Vec::new()
            } else {
                session
                    .detokenize(&symbols)?
                    .ok_or(ContainerError::DigestMismatch {
                        nondeterministic_predictor: false,
                    })?
            }
        }
        _ => symbols.iter().map(|&s| s as u8).collect(),
    };

    if text.len() as u64 != header.original_len || sha256(&text) != header.digest {
        let nondeterministic = !probe_determinism(&source, &symbols, header.alphabet);
        return Err(ContainerError::DigestMismatch {
            nondeterministic_predictor: nondeterministic,
        });
    }
    Ok(text)
}

const PROBE_LEN: usize = 256;

/// Replay a probe context through two fresh predictors and report whether
/// they agree on every distribution.
fn probe_determinism(source: &Source<'_>, symbols: &[u32], alphabet: Alphabet) -> bool {
    let probe: Vec<u32> = symbols
        .iter()
        .copied()
        .filter(|&s| s < alphabet.size())
        .take(PROBE_LEN)
        .collect();
    let (Ok(mut a), Ok(mut b)) = (source.build(), source.build()) else {
        // cannot tell; report corruption
        return true;
    };
    for &s in probe.iter().chain(std::iter::once(&alphabet.eos())) {
        match (a.predict(), b.predict()) {
            (Ok(da), Ok(db)) if da == db => {}
            _ => return false,
        }
        if a.update(s).is_err() || b.update(s).is_err() {
            return false;
        }
    }
    true
}
