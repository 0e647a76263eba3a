//! Symbols, quantized distributions and the predictor abstraction.
//!
//! Every distribution handed to the coder is an integer frequency table whose
//! entries sum to exactly [`TOTAL`]. The last slot of every table is the
//! reserved end-of-stream symbol.

use std::fmt;

use thiserror::Error;

/// Log2 of the quantization denominator.
pub const TOTAL_BITS: u32 = 16;
/// Fixed quantization denominator shared by every distribution.
pub const TOTAL: u32 = 1 << TOTAL_BITS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("probability at index {index} is not finite")]
    NonFiniteProbability { index: usize },
    #[error("probability at index {index} is negative")]
    NegativeProbability { index: usize },
    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("probability vector has no positive mass")]
    NoPositiveMass,
    #[error("{0} symbols cannot each receive a nonzero share of {TOTAL}")]
    TooManySymbols(usize),
    #[error("frequency table must have at least two entries")]
    TooFewSymbols,
    #[error("frequency at index {index} is zero")]
    ZeroFrequency { index: usize },
    #[error("frequencies sum to {0}, expected {TOTAL}")]
    BadTotal(u64),
    #[error("alphabet size {0} is outside [2, {max}]", max = TOTAL - 1)]
    BadAlphabetSize(u32),
    #[error("symbol {symbol} is outside the alphabet of size {size}")]
    SymbolOutOfRange { symbol: u32, size: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphabetKind {
    Bytes256,
    ExternalVocab,
}

impl AlphabetKind {
    pub fn code(self) -> u8 {
        match self {
            AlphabetKind::Bytes256 => 0,
            AlphabetKind::ExternalVocab => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(AlphabetKind::Bytes256),
            1 => Some(AlphabetKind::ExternalVocab),
            _ => None,
        }
    }
}

/// The symbol space. Real symbols are `0..size`; `size` itself is the
/// end-of-stream terminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alphabet {
    kind: AlphabetKind,
    size: u32,
}

impl Alphabet {
    pub const fn bytes() -> Self {
        Alphabet {
            kind: AlphabetKind::Bytes256,
            size: 256,
        }
    }

    /// A model vocabulary. The table must still fit the floor of one unit per
    /// slot, so `size + 1` may not exceed [`TOTAL`].
    pub fn external(size: u32) -> Result<Self, ModelError> {
        if !(2..TOTAL).contains(&size) {
            return Err(ModelError::BadAlphabetSize(size));
        }
        Ok(Alphabet {
            kind: AlphabetKind::ExternalVocab,
            size,
        })
    }

    pub fn kind(&self) -> AlphabetKind {
        self.kind
    }

    /// Number of real symbols, excluding end-of-stream.
    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn eos(&self) -> u32 {
        self.size
    }

    /// Length of every distribution over this alphabet.
    pub fn slots(&self) -> usize {
        self.size as usize + 1
    }
}

/// A symbol stream over an alphabet. Never contains the terminator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    alphabet: Alphabet,
    symbols: Vec<u32>,
}

impl TokenSequence {
    pub fn new(alphabet: Alphabet, symbols: Vec<u32>) -> Result<Self, ModelError> {
        if let Some(&bad) = symbols.iter().find(|&&s| s >= alphabet.size) {
            return Err(ModelError::SymbolOutOfRange {
                symbol: bad,
                size: alphabet.size,
            });
        }
        Ok(TokenSequence { alphabet, symbols })
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        TokenSequence {
            alphabet: Alphabet::bytes(),
            symbols: bytes.iter().map(|&b| u32::from(b)).collect(),
        }
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn into_symbols(self) -> Vec<u32> {
        self.symbols
    }
}

/// Integer frequency table summing to [`TOTAL`], with every entry at least 1.
#[derive(Clone)]
pub struct QuantizedDistribution {
    freqs: Vec<u32>,
    // cum[i] = sum of freqs[..i]; cum.len() == freqs.len() + 1
    cum: Vec<u32>,
    // requantize working space
    scratch: Vec<u64>,
    sorted: Vec<u64>,
}

impl PartialEq for QuantizedDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.freqs == other.freqs
    }
}

impl Eq for QuantizedDistribution {}

impl fmt::Debug for QuantizedDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantizedDistribution")
            .field("freqs", &self.freqs)
            .finish()
    }
}

impl QuantizedDistribution {
    pub fn from_freqs(freqs: Vec<u32>) -> Result<Self, ModelError> {
        if freqs.len() < 2 {
            return Err(ModelError::TooFewSymbols);
        }
        if let Some(index) = freqs.iter().position(|&f| f == 0) {
            return Err(ModelError::ZeroFrequency { index });
        }
        let sum: u64 = freqs.iter().map(|&f| u64::from(f)).sum();
        if sum != u64::from(TOTAL) {
            return Err(ModelError::BadTotal(sum));
        }
        let mut dist = QuantizedDistribution {
            freqs,
            cum: Vec::new(),
            scratch: Vec::new(),
            sorted: Vec::new(),
        };
        dist.rebuild_cum();
        Ok(dist)
    }

    /// Flat distribution over `slots` entries; the leftover units go to the
    /// lowest indices.
    pub fn uniform(slots: usize) -> Result<Self, ModelError> {
        let probs = vec![1.0; slots];
        let mut dist = QuantizedDistribution {
            freqs: Vec::new(),
            cum: Vec::new(),
            scratch: Vec::new(),
            sorted: Vec::new(),
        };
        dist.requantize(&probs)?;
        Ok(dist)
    }

    /// Quantize a probability vector over `alphabet.slots()` entries.
    pub fn quantize(probs: &[f64], alphabet: &Alphabet) -> Result<Self, ModelError> {
        if probs.len() != alphabet.slots() {
            return Err(ModelError::LengthMismatch {
                expected: alphabet.slots(),
                actual: probs.len(),
            });
        }
        Self::quantize_slice(probs)
    }

    /// Quantize without an alphabet; the table length is `probs.len()`.
    pub fn quantize_slice(probs: &[f64]) -> Result<Self, ModelError> {
        let mut dist = QuantizedDistribution {
            freqs: Vec::with_capacity(probs.len()),
            cum: Vec::with_capacity(probs.len() + 1),
            scratch: Vec::new(),
            sorted: Vec::new(),
        };
        dist.requantize(probs)?;
        Ok(dist)
    }

    /// Overwrite this table with the quantization of `probs`, reusing the
    /// allocations.
    ///
    /// Largest-remainder rounding, then every zero entry is raised to 1 and the
    /// resulting surplus is taken from the most probable entry (lowest index on
    /// ties). If that entry cannot absorb it, the remainder is drawn from the
    /// next-largest entries in turn.
    pub fn requantize(&mut self, probs: &[f64]) -> Result<(), ModelError> {
        let n = probs.len();
        if n < 2 {
            return Err(ModelError::TooFewSymbols);
        }
        if n > TOTAL as usize {
            return Err(ModelError::TooManySymbols(n));
        }
        let mut sum = 0.0f64;
        let mut argmax = 0usize;
        for (index, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(ModelError::NonFiniteProbability { index });
            }
            if p < 0.0 {
                return Err(ModelError::NegativeProbability { index });
            }
            if p > probs[argmax] {
                argmax = index;
            }
            sum += p;
        }
        if sum <= 0.0 || !sum.is_finite() {
            return Err(ModelError::NoPositiveMass);
        }

        let total = f64::from(TOTAL);
        self.freqs.resize(n, 0);
        // Non-negative floats order like their raw bits.
        self.scratch.resize(n, 0);
        let mut positive = 0usize;
        let mut assigned: i64 = 0;
        for ((f, r), &p) in self
            .freqs
            .iter_mut()
            .zip(self.scratch.iter_mut())
            .zip(probs)
        {
            let scaled = (p / sum * total).min(total);
            // scaled >= 0, so truncation is floor
            let base = scaled as u32;
            *f = base;
            assigned += i64::from(base);
            let rem = (scaled - f64::from(base)).to_bits();
            *r = rem;
            positive += usize::from(rem != 0);
        }

        let mut deficit = i64::from(TOTAL) - assigned;
        let take = usize::try_from(deficit).unwrap_or(0).min(positive);
        let mut threshold = u64::MAX;
        let mut at_threshold = 0;
        if take > 0 {
            // the take-th largest remainder; everything above it gets a unit,
            // ties at it go to the lowest indices
            self.sorted.clear();
            self.sorted.extend_from_slice(&self.scratch);
            let (above, &mut t, _) = self
                .sorted
                .select_nth_unstable_by(take - 1, |a, b| b.cmp(a));
            threshold = t;
            at_threshold = take - above.iter().filter(|&&r| r > t).count();
            deficit -= take as i64;
        }
        for (f, &r) in self.freqs.iter_mut().zip(&self.scratch) {
            if r > threshold || (r == threshold && at_threshold > 0) {
                if r == threshold {
                    at_threshold -= 1;
                }
                *f += 1;
            } else if *f == 0 {
                *f = 1;
                deficit -= 1;
            }
        }

        // deficit is now TOTAL - sum(freqs), usually zero or negative.
        if deficit != 0 {
            let target = i64::from(self.freqs[argmax]) + deficit;
            if target >= 1 {
                self.freqs[argmax] = target as u32;
            } else {
                self.absorb_surplus(argmax, deficit);
            }
        }
        self.rebuild_cum();
        debug_assert_eq!(self.cum[n], TOTAL);
        Ok(())
    }

    // Spread a negative residual over the largest entries, keeping each >= 1.
    fn absorb_surplus(&mut self, first: usize, deficit: i64) {
        let mut surplus = -deficit;
        let mut order: Vec<usize> = (0..self.freqs.len()).collect();
        order.sort_by(|&a, &b| self.freqs[b].cmp(&self.freqs[a]).then(a.cmp(&b)));
        order.retain(|&i| i != first);
        order.insert(0, first);
        for index in order {
            if surplus == 0 {
                break;
            }
            let spare = i64::from(self.freqs[index]) - 1;
            let take = spare.min(surplus);
            self.freqs[index] -= take as u32;
            surplus -= take;
        }
    }

    fn rebuild_cum(&mut self) {
        self.cum.resize(self.freqs.len() + 1, 0);
        let mut acc = 0u32;
        for (c, &f) in self.cum[1..].iter_mut().zip(&self.freqs) {
            acc += f;
            *c = acc;
        }
    }

    pub fn total(&self) -> u32 {
        TOTAL
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }

    pub fn freq(&self, symbol: usize) -> u32 {
        self.freqs[symbol]
    }

    /// Cumulative frequency of all symbols before `symbol`.
    pub fn cum(&self, symbol: usize) -> u32 {
        self.cum[symbol]
    }

    /// Symbol whose cumulative range `[cum[s], cum[s + 1])` contains `target`.
    pub fn symbol_at(&self, target: u32) -> usize {
        debug_assert!(target < TOTAL);
        // first index with cum > target, minus one
        self.cum.partition_point(|&c| c <= target) - 1
    }

    pub fn probability(&self, symbol: usize) -> f64 {
        f64::from(self.freqs[symbol]) / f64::from(TOTAL)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.freqs.len()).map(|s| self.probability(s)).collect()
    }

    /// Little-endian u16 per entry, the layout used on the wire.
    pub fn to_u16_le(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.freqs.len() * 2);
        for &f in &self.freqs {
            out.extend_from_slice(&(f as u16).to_le_bytes());
        }
        out
    }
}

/// Ideal code length of `symbol` under `dist`, in bits.
pub fn self_information_bits(dist: &QuantizedDistribution, symbol: usize) -> f64 {
    f64::from(TOTAL_BITS) - f64::from(dist.freq(symbol)).log2()
}

pub fn entropy_bits(dist: &QuantizedDistribution) -> f64 {
    (0..dist.len())
        .map(|s| dist.probability(s) * self_information_bits(dist, s))
        .sum()
}

/// Expected code length when symbols follow `p` but are coded with `q`.
pub fn cross_entropy_bits(
    p: &QuantizedDistribution,
    q: &QuantizedDistribution,
) -> Result<f64, ModelError> {
    check_same_len(p, q)?;
    Ok((0..p.len())
        .map(|s| p.probability(s) * self_information_bits(q, s))
        .sum())
}

/// Extra bits per symbol paid for coding `p`-distributed symbols with `q`.
pub fn kl_divergence_bits(
    p: &QuantizedDistribution,
    q: &QuantizedDistribution,
) -> Result<f64, ModelError> {
    check_same_len(p, q)?;
    let kl: f64 = p
        .freqs
        .iter()
        .zip(&q.freqs)
        .map(|(&pf, &qf)| {
            let pi = f64::from(pf) / f64::from(TOTAL);
            pi * (f64::from(pf) / f64::from(qf)).log2()
        })
        .sum();
    // Rounding can leave a tiny negative residue for p == q.
    Ok(kl.max(0.0))
}

fn check_same_len(p: &QuantizedDistribution, q: &QuantizedDistribution) -> Result<(), ModelError> {
    if p.len() != q.len() {
        return Err(ModelError::LengthMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    Ok(())
}

/// Stable identity of a predictor as recorded in container headers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PredictorDescriptor {
    pub id: String,
    /// Sorted by key.
    pub params: Vec<(String, String)>,
}

impl PredictorDescriptor {
    pub fn new(id: impl Into<String>, mut params: Vec<(String, String)>) -> Self {
        params.sort();
        PredictorDescriptor {
            id: id.into(),
            params,
        }
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for PredictorDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            let sep = if i == 0 { '(' } else { ',' };
            write!(f, "{sep}{k}={v}")?;
        }
        if !self.params.is_empty() {
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictorError {
    #[error("remote predictor unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote predictor violated the protocol: {0}")]
    RemoteProtocolViolation(String),
    #[error("remote context overflow: window is {window} tokens")]
    ContextOverflow { window: usize },
    #[error("symbol {symbol} is outside the alphabet of size {size}")]
    InvalidSymbol { symbol: u32, size: u32 },
}

/// A deterministic next-symbol model shared by encoder and decoder.
///
/// `predict` reports the distribution for the next symbol given everything
/// passed to `update` since the last context reset. It must not change what a
/// subsequent `predict` returns; only `update` and `reset_context` advance the
/// model.
pub trait Predictor {
    fn descriptor(&self) -> PredictorDescriptor;

    fn alphabet(&self) -> Alphabet;

    /// Maximum context length in symbols, 0 for unbounded.
    fn context_window(&self) -> usize {
        0
    }

    fn predict(&mut self) -> Result<&QuantizedDistribution, PredictorError>;

    /// Advance by one observed symbol. Observing end-of-stream also resets the
    /// context.
    fn update(&mut self, symbol: u32) -> Result<(), PredictorError>;

    fn reset_context(&mut self) -> Result<(), PredictorError>;

    /// True when learned state carries over between chunks, which forces
    /// chunks to be coded in order by a single instance.
    fn is_adaptive(&self) -> bool;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(freqs: &[u32]) -> QuantizedDistribution {
        QuantizedDistribution::from_freqs(freqs.to_vec()).unwrap()
    }

    #[test]
    fn quantize_dyadic_split_is_exact() {
        let q = QuantizedDistribution::quantize_slice(&[0.5, 0.25, 0.25]).unwrap();
        assert_eq!(q.freqs(), &[32768, 16384, 16384]);
    }

    #[test]
    fn quantize_applies_floor_and_charges_argmax() {
        let q = QuantizedDistribution::quantize_slice(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(q.freqs(), &[65534, 1, 1]);
    }

    #[test]
    fn quantize_thirds_breaks_ties_toward_low_index() {
        let third = 1.0 / 3.0;
        let q = QuantizedDistribution::quantize_slice(&[third, third, third]).unwrap();
        let f = q.freqs();
        assert_eq!(f.iter().sum::<u32>(), TOTAL);
        let max = *f.iter().max().unwrap();
        let min = *f.iter().min().unwrap();
        assert!(max - min <= 1);
        // exhaustive: the single extra unit sits on index 0 and nowhere else
        for (i, &x) in f.iter().enumerate() {
            assert_eq!(x, if i == 0 { 21846 } else { 21845 });
        }
    }

    #[test]
    fn quantize_rejects_bad_inputs() {
        let a = Alphabet::external(2).unwrap();
        assert_eq!(
            QuantizedDistribution::quantize(&[0.5, 0.5], &a),
            Err(ModelError::LengthMismatch {
                expected: 3,
                actual: 2
            })
        );
        assert_eq!(
            QuantizedDistribution::quantize(&[0.5, f64::NAN, 0.5], &a),
            Err(ModelError::NonFiniteProbability { index: 1 })
        );
        assert_eq!(
            QuantizedDistribution::quantize(&[f64::INFINITY, 0.0, 0.5], &a),
            Err(ModelError::NonFiniteProbability { index: 0 })
        );
        assert_eq!(
            QuantizedDistribution::quantize(&[0.0, 0.0, 0.0], &a),
            Err(ModelError::NoPositiveMass)
        );
    }

    #[test]
    fn quantize_unnormalized_input_is_scaled() {
        let q = QuantizedDistribution::quantize_slice(&[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(q.freqs(), &[32768, 16384, 16384]);
    }

    #[test]
    fn floor_surplus_spreads_when_argmax_is_small() {
        // 40000 slots, mass only on the first 30000: argmax alone cannot pay
        // for 10000 floor units.
        let mut probs = vec![1.0; 30000];
        probs.extend(std::iter::repeat_n(0.0, 10000));
        let q = QuantizedDistribution::quantize_slice(&probs).unwrap();
        assert_eq!(q.freqs().iter().map(|&f| u64::from(f)).sum::<u64>(), 65536);
        assert!(q.freqs().iter().all(|&f| f >= 1));
    }

    #[test]
    fn too_many_symbols_is_an_error() {
        let probs = vec![1.0; TOTAL as usize + 1];
        assert_eq!(
            QuantizedDistribution::quantize_slice(&probs),
            Err(ModelError::TooManySymbols(TOTAL as usize + 1))
        );
    }

    #[test]
    fn from_freqs_validates() {
        assert!(matches!(
            QuantizedDistribution::from_freqs(vec![65536, 0]),
            Err(ModelError::ZeroFrequency { index: 1 })
        ));
        assert!(matches!(
            QuantizedDistribution::from_freqs(vec![100, 200]),
            Err(ModelError::BadTotal(300))
        ));
    }

    #[test]
    fn symbol_lookup_matches_cumulative_ranges() {
        let d = dist(&[16384, 1, 49151]);
        assert_eq!(d.symbol_at(0), 0);
        assert_eq!(d.symbol_at(16383), 0);
        assert_eq!(d.symbol_at(16384), 1);
        assert_eq!(d.symbol_at(16385), 2);
        assert_eq!(d.symbol_at(65535), 2);
    }

    #[test]
    fn self_information_examples() {
        assert_eq!(self_information_bits(&dist(&[32768, 32768]), 0), 1.0);
        assert!((self_information_bits(&dist(&[65534, 1, 1]), 1) - 16.0).abs() < 1e-4);
        // -log2(0.75)
        let expected = -(0.75f64).log2();
        assert!((self_information_bits(&dist(&[16384, 49152]), 1) - expected).abs() < 1e-6);
        assert!((expected - 0.415037).abs() < 1e-6);
    }

    #[test]
    fn kl_examples_show_asymmetry() {
        let half = dist(&[32768, 32768]);
        let skew = dist(&[49152, 16384]);
        assert_eq!(kl_divergence_bits(&half, &half).unwrap(), 0.0);
        let forward = 0.75 * 1.5f64.log2() + 0.25 * 0.5f64.log2();
        let backward = 0.5 * (0.5f64 / 0.75).log2() + 0.5 * 2.0f64.log2();
        assert!((kl_divergence_bits(&skew, &half).unwrap() - forward).abs() < 1e-12);
        assert!((kl_divergence_bits(&half, &skew).unwrap() - backward).abs() < 1e-12);
        assert!((forward - 0.188722).abs() < 1e-5);
        assert!((backward - 0.207518).abs() < 1e-5);
        assert!(matches!(
            kl_divergence_bits(&half, &dist(&[1, 1, 65534])),
            Err(ModelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn alphabet_bounds() {
        assert_eq!(Alphabet::bytes().slots(), 257);
        assert_eq!(Alphabet::bytes().eos(), 256);
        assert!(Alphabet::external(1).is_err());
        assert!(Alphabet::external(TOTAL).is_err());
        assert!(Alphabet::external(TOTAL - 1).is_ok());
        assert!(TokenSequence::new(Alphabet::external(5).unwrap(), vec![0, 4]).is_ok());
        assert!(TokenSequence::new(Alphabet::external(5).unwrap(), vec![5]).is_err());
    }

    #[test]
    fn descriptor_display_is_sorted() {
        let d = PredictorDescriptor::new(
            "remote",
            vec![
                ("vocab_size".into(), "9".into()),
                ("model_id".into(), "m".into()),
            ],
        );
        assert_eq!(d.to_string(), "remote(model_id=m,vocab_size=9)");
        assert_eq!(d.param("model_id"), Some("m"));
    }
}
