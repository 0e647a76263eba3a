//! On-disk container layout. All integers little-endian.
//!
//! ```text
//! magic            8   "PPRESS01"
//! flags            u8  bit 0: remote tokenization fell back to bytes
//!                      bit 1: chunks were coded sequentially by one predictor
//! alphabet kind    u8  0 = bytes, 1 = external vocabulary
//! alphabet size    u32
//! predictor id     u16 length + UTF-8
//! param count      u16, then per param: u16 length + key, u16 length + value
//! chunk size       u32 symbols per chunk, 0 = unchunked
//! original length  u64 bytes
//! tokenizer        32  fingerprint, all zero for bytes
//! digest           32  SHA-256 of the original bytes
//! chunk count      u32
//! chunks           u32 token count, u32 payload length, payload
//! ```

use sha2::{Digest, Sha256};

use super::ContainerError;
use crate::model::{Alphabet, AlphabetKind, PredictorDescriptor};

pub const MAGIC: &[u8; 8] = b"PPRESS01";
pub const FLAG_FALLBACK: u8 = 0x01;
pub const FLAG_SEQUENTIAL: u8 = 0x02;
/// Framing bytes per chunk record.
pub const CHUNK_OVERHEAD: usize = 8;

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerHeader {
    pub flags: u8,
    pub alphabet: Alphabet,
    pub predictor: PredictorDescriptor,
    pub chunk_size: u32,
    pub original_len: u64,
    pub tokenizer_fingerprint: [u8; 32],
    pub digest: [u8; 32],
}

impl ContainerHeader {
    pub fn fell_back(&self) -> bool {
        self.flags & FLAG_FALLBACK != 0
    }

    pub fn sequential(&self) -> bool {
        self.flags & FLAG_SEQUENTIAL != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkRecord {
    pub token_count: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub header: ContainerHeader,
    pub chunks: Vec<ChunkRecord>,
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.bytes.len() < n {
            return Err(ContainerError::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn array32(&mut self) -> Result<[u8; 32], ContainerError> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    fn string(&mut self, what: &str) -> Result<String, ContainerError> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| ContainerError::Malformed(format!("{what} is not UTF-8")))
    }
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.push(h.flags);
        out.push(h.alphabet.kind().code());
        out.extend_from_slice(&h.alphabet.size().to_le_bytes());
        push_str(&mut out, &h.predictor.id);
        out.extend_from_slice(&(h.predictor.params.len() as u16).to_le_bytes());
        for (k, v) in &h.predictor.params {
            push_str(&mut out, k);
            push_str(&mut out, v);
        }
        out.extend_from_slice(&h.chunk_size.to_le_bytes());
        out.extend_from_slice(&h.original_len.to_le_bytes());
        out.extend_from_slice(&h.tokenizer_fingerprint);
        out.extend_from_slice(&h.digest);
        out.extend_from_slice(&(self.chunks.len() as u32).to_le_bytes());
        for c in &self.chunks {
            out.extend_from_slice(&c.token_count.to_le_bytes());
            out.extend_from_slice(&(c.payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&c.payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = Reader { bytes };
        if r.take(MAGIC.len()).map_err(|_| ContainerError::BadMagic)? != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let flags = r.u8()?;
        if flags & !(FLAG_FALLBACK | FLAG_SEQUENTIAL) != 0 {
            return Err(ContainerError::Malformed(format!(
                "unknown flags {flags:#04x}"
            )));
        }
        let kind = r.u8()?;
        let size = r.u32()?;
        let alphabet = match AlphabetKind::from_code(kind) {
            Some(AlphabetKind::Bytes256) if size == 256 => Alphabet::bytes(),
            Some(AlphabetKind::ExternalVocab) => {
                Alphabet::external(size).map_err(|e| ContainerError::Malformed(e.to_string()))?
            }
            _ => {
                return Err(ContainerError::Malformed(format!(
                    "alphabet kind {kind} with size {size}"
                )))
            }
        };
        let id = r.string("predictor id")?;
        let n_params = r.u16()?;
        let mut params = Vec::with_capacity(n_params as usize);
        for _ in 0..n_params {
            let k = r.string("parameter key")?;
            let v = r.string("parameter value")?;
            params.push((k, v));
        }
        let predictor = PredictorDescriptor::new(id, params);
        let chunk_size = r.u32()?;
        let original_len = r.u64()?;
        let tokenizer_fingerprint = r.array32()?;
        let digest = r.array32()?;
        let n_chunks = r.u32()?;
        // each record needs at least its framing
        if (n_chunks as usize).saturating_mul(CHUNK_OVERHEAD) > r.bytes.len() {
            return Err(ContainerError::Truncated);
        }
        let mut chunks = Vec::with_capacity(n_chunks as usize);
        for _ in 0..n_chunks {
            let token_count = r.u32()?;
            let len = r.u32()? as usize;
            chunks.push(ChunkRecord {
                token_count,
                payload: r.take(len)?.to_vec(),
            });
        }
        if !r.bytes.is_empty() {
            return Err(ContainerError::Malformed(format!(
                "{} trailing bytes",
                r.bytes.len()
            )));
        }
        Ok(Container {
            header: ContainerHeader {
                flags,
                alphabet,
                predictor,
                chunk_size,
                original_len,
                tokenizer_fingerprint,
                digest,
            },
            chunks,
        })
    }

    /// Size of `to_bytes()` without building it.
    pub fn encoded_len(&self) -> usize {
        self.header_len()
            + self
                .chunks
                .iter()
                .map(|c| CHUNK_OVERHEAD + c.payload.len())
                .sum::<usize>()
    }

    pub fn header_len(&self) -> usize {
        let p = &self.header.predictor;
        MAGIC.len()
            + 1
            + 1
            + 4
            + 2
            + p.id.len()
            + 2
            + p.params
                .iter()
                .map(|(k, v)| 4 + k.len() + v.len())
                .sum::<usize>()
            + 4
            + 8
            + 32
            + 32
            + 4
    }

    pub fn payload_len(&self) -> usize {
        self.chunks.iter().map(|c| c.payload.len()).sum()
    }

    pub fn token_count(&self) -> u64 {
        self.chunks.iter().map(|c| u64::from(c.token_count)).sum()
    }
}
