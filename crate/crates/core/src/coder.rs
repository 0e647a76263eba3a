//! Integer arithmetic coder.
//!
//! The interval is held in 32 active bits of a 64-bit register with an
//! inclusive upper bound, so the width is `high - low + 1`. Settled leading
//! bits are shifted out MSB-first; straddles around the midpoint are deferred
//! as pending bits and emitted, complemented, after the next settled bit.

use thiserror::Error;

use crate::model::{QuantizedDistribution, TOTAL};

pub const PRECISION: u32 = 32;
const WHOLE: u64 = 1 << PRECISION;
const HALF: u64 = WHOLE / 2;
const QUARTER: u64 = WHOLE / 4;
const MASK: u64 = WHOLE - 1;

/// Zero bits a decoder may read past the physical end of a stream. A
/// well-formed stream never needs more than `PRECISION - 2`.
const MAX_OVERRUN_BITS: u64 = PRECISION as u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoderError {
    #[error("interval underflow: width {width} cannot resolve a table of total {total}")]
    IntervalUnderflow { width: u64, total: u32 },
    #[error("encoder already finalized")]
    DoubleFinalize,
    #[error("bit stream ended before the interval resolved")]
    SourceExhausted,
    #[error("symbol {symbol} is outside a table of {len} entries")]
    InvalidSymbol { symbol: usize, len: usize },
}

/// MSB-first bit writer.
#[derive(Debug, Default, Clone)]
pub struct BitSink {
    bytes: Vec<u8>,
    current: u8,
    filled: u8,
    bits: u64,
}

impl BitSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: bool) {
        self.current = (self.current << 1) | bit as u8;
        self.filled += 1;
        self.bits += 1;
        if self.filled == 8 {
            self.bytes.push(self.current);
            self.current = 0;
            self.filled = 0;
        }
    }

    pub fn bits_written(&self) -> u64 {
        self.bits
    }

    /// Pad the last partial byte with zero bits and return the buffer.
    pub fn into_bytes(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.bytes.push(self.current << (8 - self.filled));
        }
        self.bytes
    }
}

/// MSB-first bit reader that yields zeros for a bounded distance past the end.
#[derive(Debug, Clone)]
pub struct BitSource<'a> {
    bytes: &'a [u8],
    position: u64,
}

impl<'a> BitSource<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitSource { bytes, position: 0 }
    }

    pub fn next_bit(&mut self) -> Result<bool, CoderError> {
        let byte = (self.position / 8) as usize;
        let bit = match self.bytes.get(byte) {
            Some(b) => (b >> (7 - (self.position % 8))) & 1 == 1,
            None => {
                if self.position - self.bytes.len() as u64 * 8 >= MAX_OVERRUN_BITS {
                    return Err(CoderError::SourceExhausted);
                }
                false
            }
        };
        self.position += 1;
        Ok(bit)
    }

    pub fn bits_read(&self) -> u64 {
        self.position
    }
}

// New [low, high] after selecting `symbol` from `dist`. Shared by both sides so
// the encoder and decoder intervals move in lockstep.
#[inline]
fn narrow(low: u64, high: u64, dist: &QuantizedDistribution, symbol: usize) -> (u64, u64) {
    let width = high - low + 1;
    let total = u64::from(TOTAL);
    let lo = u64::from(dist.cum(symbol));
    let hi = u64::from(dist.cum(symbol + 1));
    (low + width * lo / total, low + width * hi / total - 1)
}

#[inline]
fn check_width(low: u64, high: u64) -> Result<(), CoderError> {
    let width = high.wrapping_sub(low).wrapping_add(1);
    if low >= high || width <= 2 * u64::from(TOTAL) {
        return Err(CoderError::IntervalUnderflow {
            width,
            total: TOTAL,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    sink: BitSink,
    finalized: bool,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Encoder {
    pub fn new() -> Self {
        Encoder {
            low: 0,
            high: MASK,
            pending: 0,
            sink: BitSink::new(),
            finalized: false,
        }
    }

    /// Current `(low, high)` interval, inclusive.
    pub fn state(&self) -> (u64, u64) {
        (self.low, self.high)
    }

    pub fn pending_bits(&self) -> u64 {
        self.pending
    }

    pub fn bits_written(&self) -> u64 {
        self.sink.bits_written()
    }

    fn emit(&mut self, bit: bool) {
        self.sink.push(bit);
        for _ in 0..self.pending {
            self.sink.push(!bit);
        }
        self.pending = 0;
    }

    pub fn encode(
        &mut self,
        dist: &QuantizedDistribution,
        symbol: usize,
    ) -> Result<(), CoderError> {
        if self.finalized {
            return Err(CoderError::DoubleFinalize);
        }
        if symbol >= dist.len() {
            return Err(CoderError::InvalidSymbol {
                symbol,
                len: dist.len(),
            });
        }
        let (low, high) = narrow(self.low, self.high, dist, symbol);
        self.low = low;
        self.high = high;
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < HALF + QUARTER {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
        check_width(self.low, self.high)
    }

    /// Emit the tail that pins a value inside the final interval. Reading the
    /// stream as a binary fraction padded with zeros lands on that value.
    pub fn finalize(&mut self) -> Result<(), CoderError> {
        if self.finalized {
            return Err(CoderError::DoubleFinalize);
        }
        self.finalized = true;
        self.pending += 1;
        if self.low < QUARTER {
            self.emit(false);
        } else {
            self.emit(true);
        }
        Ok(())
    }

    /// Finalize if needed and return the byte stream.
    pub fn finish(mut self) -> Vec<u8> {
        if !self.finalized {
            // cannot fail: not yet finalized
            let _ = self.finalize();
        }
        self.sink.into_bytes()
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    low: u64,
    high: u64,
    value: u64,
    source: BitSource<'a>,
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, CoderError> {
        let mut source = BitSource::new(bytes);
        let mut value = 0u64;
        for _ in 0..PRECISION {
            value = (value << 1) | source.next_bit()? as u64;
        }
        Ok(Decoder {
            low: 0,
            high: MASK,
            value,
            source,
        })
    }

    pub fn state(&self) -> (u64, u64) {
        (self.low, self.high)
    }

    pub fn bits_read(&self) -> u64 {
        self.source.bits_read()
    }

    pub fn decode(&mut self, dist: &QuantizedDistribution) -> Result<usize, CoderError> {
        let width = self.high - self.low + 1;
        let total = u64::from(TOTAL);
        let offset = self.value - self.low;
        let target = ((offset + 1) * total - 1) / width;
        let symbol = dist.symbol_at(target as u32);
        let (low, high) = narrow(self.low, self.high, dist, symbol);
        self.low = low;
        self.high = high;
        loop {
            if self.high < HALF {
                // nothing to subtract
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < HALF + QUARTER {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = (self.value << 1) | self.source.next_bit()? as u64;
        }
        check_width(self.low, self.high)?;
        Ok(symbol)
    }
}
