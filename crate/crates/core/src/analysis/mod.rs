//! Corpus compressibility statistics: n-gram frequency mass, entropy per byte
//! at character, subword and word granularity, and mutual information between
//! adjacent words.
//!
//! All estimates are plug-in (maximum likelihood) with no bias correction.
//! A word is a maximal run of non-whitespace characters (Unicode whitespace);
//! punctuation stays attached.

mod bpe;
mod report;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bpe::{pretokenize, Bpe, DEFAULT_MERGES};
pub use report::{
    summary_table, to_jsonl, CorpusSummary, Record, FORMAT_VERSION, WORD_TOKENIZATION,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("n-gram order {0} outside 1..=4")]
    BadOrder(usize),
    #[error("unknown granularity {0:?}; expected char, subword or word")]
    UnknownGranularity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Char,
    Subword,
    Word,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Char, Granularity::Subword, Granularity::Word];
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Char => "char",
            Granularity::Subword => "subword",
            Granularity::Word => "word",
        })
    }
}

impl FromStr for Granularity {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "char" => Ok(Granularity::Char),
            "subword" | "bpe" => Ok(Granularity::Subword),
            "word" => Ok(Granularity::Word),
            other => Err(AnalysisError::UnknownGranularity(other.into())),
        }
    }
}

/// UTF-8 characters as byte slices. Each invalid byte is its own token.
pub fn char_tokens(text: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::with_capacity(text.len());
    let mut offset = 0;
    for chunk in text.utf8_chunks() {
        let valid = chunk.valid();
        for (i, c) in valid.char_indices() {
            out.push(&text[offset + i..offset + i + c.len_utf8()]);
        }
        offset += valid.len();
        for _ in chunk.invalid() {
            out.push(&text[offset..offset + 1]);
            offset += 1;
        }
    }
    out
}

/// Whitespace-separated words. Invalid UTF-8 bytes count as word content.
pub fn word_tokens(text: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut offset = 0;
    for chunk in text.utf8_chunks() {
        for (i, c) in chunk.valid().char_indices() {
            let at = offset + i;
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    out.push(&text[s..at]);
                }
            } else if start.is_none() {
                start = Some(at);
            }
        }
        offset += chunk.valid().len();
        if !chunk.invalid().is_empty() && start.is_none() {
            start = Some(offset);
        }
        offset += chunk.invalid().len();
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub granularity: Granularity,
    /// Bits per token.
    pub h_token: f64,
    /// Mean token length in bytes.
    pub l_avg: f64,
    /// Bits per byte, `h_token / l_avg`.
    pub h_byte: f64,
    pub token_count: u64,
    pub distinct_tokens: u64,
}

/// Plug-in entropy of a token stream's empirical distribution.
pub fn entropy_of<T: AsRef<[u8]> + Eq + std::hash::Hash>(
    granularity: Granularity,
    tokens: &[T],
) -> Result<EntropyReport, AnalysisError> {
    if tokens.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let mut counts: HashMap<&T, u64> = HashMap::new();
    let mut bytes = 0u64;
    for t in tokens {
        *counts.entry(t).or_default() += 1;
        bytes += t.as_ref().len() as u64;
    }
    let n = tokens.len() as f64;
    let mut freqs: Vec<u64> = counts.values().copied().collect();
    // fixed summation order keeps results bit-identical across runs
    freqs.sort_unstable();
    let h_token = plug_in_entropy(&freqs, n);
    let l_avg = bytes as f64 / n;
    Ok(EntropyReport {
        granularity,
        h_token,
        l_avg,
        h_byte: h_token / l_avg,
        token_count: tokens.len() as u64,
        distinct_tokens: freqs.len() as u64,
    })
}

fn plug_in_entropy(sorted_counts: &[u64], n: f64) -> f64 {
    let h: f64 = sorted_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Entropy report at `granularity`. Subword granularity trains a
/// [`DEFAULT_MERGES`] vocabulary on `text` itself.
pub fn entropy_report(
    text: &[u8],
    granularity: Granularity,
) -> Result<EntropyReport, AnalysisError> {
    match granularity {
        Granularity::Char => entropy_of(granularity, &char_tokens(text)),
        Granularity::Word => entropy_of(granularity, &word_tokens(text)),
        Granularity::Subword => {
            let bpe = Bpe::train(text, DEFAULT_MERGES);
            subword_entropy(text, &bpe)
        }
    }
}

/// Subword entropy under an already trained vocabulary.
pub fn subword_entropy(text: &[u8], bpe: &Bpe) -> Result<EntropyReport, AnalysisError> {
    entropy_of(Granularity::Subword, &bpe.encode(text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramProfile {
    pub n: usize,
    /// Most frequent grams, count descending then lexicographic.
    pub top_items: Vec<(Vec<String>, u64)>,
    pub total_grams: u64,
    pub distinct_grams: u64,
    pub top10_mass_percent: f64,
}

/// Entries kept in [`NGramProfile::top_items`].
pub const TOP_ITEMS: usize = 10;

/// Sliding-window n-gram counts over the word stream.
pub fn ngram_profile(text: &[u8], n: usize) -> Result<NGramProfile, AnalysisError> {
    if !(1..=4).contains(&n) {
        return Err(AnalysisError::BadOrder(n));
    }
    let words = word_tokens(text);
    if words.len() < n {
        return Err(AnalysisError::EmptyCorpus);
    }
    let mut counts: HashMap<&[&[u8]], u64> = HashMap::new();
    for w in words.windows(n) {
        *counts.entry(w).or_default() += 1;
    }
    let mut ranked: Vec<(&[&[u8]], u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let total = (words.len() + 1 - n) as u64;
    let top10: u64 = ranked.iter().take(10).map(|(_, c)| c).sum();
    Ok(NGramProfile {
        n,
        top_items: ranked
            .iter()
            .take(TOP_ITEMS)
            .map(|(g, c)| {
                (
                    g.iter()
                        .map(|w| String::from_utf8_lossy(w).into_owned())
                        .collect(),
                    *c,
                )
            })
            .collect(),
        total_grams: total,
        distinct_grams: ranked.len() as u64,
        top10_mass_percent: top10 as f64 / total as f64 * 100.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInfoReport {
    pub mi_bits: f64,
    pub pair_count: u64,
    /// Entropy of the first-position marginal.
    pub h_first: f64,
    /// Entropy of the second-position marginal.
    pub h_second: f64,
}

/// Plug-in mutual information between adjacent words.
pub fn mutual_information(text: &[u8]) -> Result<MutualInfoReport, AnalysisError> {
    mutual_information_of(&word_tokens(text))
}

pub fn mutual_information_of<T: Eq + std::hash::Hash + Ord>(
    words: &[T],
) -> Result<MutualInfoReport, AnalysisError> {
    if words.len() < 2 {
        return Err(AnalysisError::EmptyCorpus);
    }
    let mut joint: HashMap<(&T, &T), u64> = HashMap::new();
    let mut first: HashMap<&T, u64> = HashMap::new();
    let mut second: HashMap<&T, u64> = HashMap::new();
    for w in words.windows(2) {
        *joint.entry((&w[0], &w[1])).or_default() += 1;
        *first.entry(&w[0]).or_default() += 1;
        *second.entry(&w[1]).or_default() += 1;
    }
    let n = (words.len() - 1) as f64;
    let mut cells: Vec<((&T, &T), u64)> = joint.into_iter().collect();
    cells.sort_unstable();
    let mi: f64 = cells
        .iter()
        .map(|&((a, b), c)| {
            let pxy = c as f64 / n;
            let px = first[a] as f64 / n;
            let py = second[b] as f64 / n;
            pxy * (pxy / (px * py)).log2()
        })
        .sum();
    let sorted = |m: HashMap<&T, u64>| {
        let mut v: Vec<u64> = m.into_values().collect();
        v.sort_unstable();
        v
    };
    Ok(MutualInfoReport {
        mi_bits: mi.max(0.0),
        pair_count: n as u64,
        h_first: plug_in_entropy(&sorted(first), n),
        h_second: plug_in_entropy(&sorted(second), n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_tokens_split_utf8_and_isolate_bad_bytes() {
        let t = "aé€".as_bytes();
        assert_eq!(
            char_tokens(t),
            vec![&b"a"[..], "é".as_bytes(), "€".as_bytes()]
        );
        let bad = [b'a', 0xff, 0xfe, b'b'];
        assert_eq!(char_tokens(&bad).len(), 4);
    }

    #[test]
    fn words_split_on_unicode_whitespace() {
        let t = "  hello,\u{3000}world!\n\tok ".as_bytes();
        assert_eq!(
            word_tokens(t),
            vec![&b"hello,"[..], "world!".as_bytes(), b"ok"]
        );
        assert_eq!(
            word_tokens(&[b'a', 0xff, b' ', 0xfe]),
            vec![&[b'a', 0xff][..], &[0xfe]]
        );
        assert!(word_tokens(b"   ").is_empty());
    }

    #[test]
    fn uniform_bytes_have_eight_bits() {
        let text: Vec<u8> = (0..=255u8).collect();
        let r = entropy_of(Granularity::Char, &text.chunks(1).collect::<Vec<_>>()).unwrap();
        assert!((r.h_token - 8.0).abs() < 1e-9);
        assert_eq!(r.l_avg, 1.0);
        assert!((r.h_byte - 8.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_text_has_zero_entropy() {
        let r = entropy_report(b"aaaa", Granularity::Char).unwrap();
        assert_eq!(r.h_token, 0.0);
        assert_eq!(r.h_byte, 0.0);
        assert_eq!(
            entropy_report(b"", Granularity::Char),
            Err(AnalysisError::EmptyCorpus)
        );
        assert_eq!(
            entropy_report(b" \n", Granularity::Word),
            Err(AnalysisError::EmptyCorpus)
        );
    }

    #[test]
    fn ngram_examples() {
        let p = ngram_profile(b"a a a a", 1).unwrap();
        assert_eq!(p.top10_mass_percent, 100.0);
        assert_eq!(p.top_items, vec![(vec!["a".to_string()], 4)]);
        let p = ngram_profile(b"a b c d", 2).unwrap();
        assert_eq!(p.total_grams, 3);
        assert_eq!(p.top10_mass_percent, 100.0);
        assert_eq!(p.top_items[0], (vec!["a".to_string(), "b".to_string()], 1));
        assert!(ngram_profile(b"a b", 3).is_err());
        assert_eq!(ngram_profile(b"a", 5), Err(AnalysisError::BadOrder(5)));
    }

    #[test]
    fn ngram_ties_sort_lexicographically() {
        let p = ngram_profile(b"c b a c b a z", 1).unwrap();
        let order: Vec<&str> = p.top_items.iter().map(|(g, _)| g[0].as_str()).collect();
        assert_eq!(order, vec!["a", "b", "c", "z"]);
    }

    #[test]
    fn alternating_words_match_hand_formula() {
        let r = mutual_information(b"a b a b a b a b").unwrap();
        let expected = 4.0 / 7.0 * (7.0f64 / 4.0).log2() + 3.0 / 7.0 * (7.0f64 / 3.0).log2();
        assert!((r.mi_bits - expected).abs() < 1e-12);
        assert_eq!(r.pair_count, 7);
    }

    #[test]
    fn factorizing_pairs_have_zero_information() {
        // words a a b b a: pairs aa ab bb ba, each once
        let r = mutual_information(b"a a b b a").unwrap();
        assert!(r.mi_bits.abs() < 1e-12, "{}", r.mi_bits);
    }

    #[test]
    fn granularity_parses() {
        assert_eq!("bpe".parse(), Ok(Granularity::Subword));
        assert!("byte".parse::<Granularity>().is_err());
    }
}
