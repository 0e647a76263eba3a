//! Byte-level pair-merge vocabulary trained on the analyzed text.
//!
//! Text is cut into pre-tokens made of a whitespace run followed by a word, so
//! leading whitespace stays attached to the word after it. Training repeatedly
//! merges the most frequent adjacent pair; ties go to the lexicographically
//! smallest pair of byte strings. Training stops after the requested number
//! of merges or once no pair occurs twice.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};

pub const DEFAULT_MERGES: usize = 8000;

/// Pre-tokens of `text`: `[whitespace*][non-whitespace*]`.
pub fn pretokenize(text: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev_ws = true;
    let mut offset = 0;
    for chunk in text.utf8_chunks() {
        for (i, c) in chunk.valid().char_indices() {
            let ws = c.is_whitespace();
            if ws && !prev_ws {
                out.push(&text[start..offset + i]);
                start = offset + i;
            }
            prev_ws = ws;
        }
        offset += chunk.valid().len();
        if !chunk.invalid().is_empty() {
            prev_ws = false;
        }
        offset += chunk.invalid().len();
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

#[derive(Debug, Clone)]
pub struct Bpe {
    tokens: Vec<Vec<u8>>,
    /// (left, right) -> (rank, merged id)
    ranks: HashMap<(u32, u32), (usize, u32)>,
    merges: usize,
}

type PairKey = (Reverse<u64>, Vec<u8>, Vec<u8>, u32, u32);

struct Trainer {
    tokens: Vec<Vec<u8>>,
    ids: HashMap<Vec<u8>, u32>,
    counts: HashMap<(u32, u32), u64>,
    ordered: BTreeSet<PairKey>,
    containing: HashMap<(u32, u32), HashSet<usize>>,
}

impl Trainer {
    fn key(&self, pair: (u32, u32), count: u64) -> PairKey {
        (
            Reverse(count),
            self.tokens[pair.0 as usize].clone(),
            self.tokens[pair.1 as usize].clone(),
            pair.0,
            pair.1,
        )
    }

    fn adjust(&mut self, pair: (u32, u32), delta: i64, word: usize) {
        let old = self.counts.get(&pair).copied().unwrap_or(0);
        if old > 0 {
            let k = self.key(pair, old);
            self.ordered.remove(&k);
        }
        let new = (old as i64 + delta) as u64;
        if new > 0 {
            let k = self.key(pair, new);
            self.ordered.insert(k);
            self.counts.insert(pair, new);
        } else {
            self.counts.remove(&pair);
        }
        if delta > 0 {
            self.containing.entry(pair).or_default().insert(word);
        }
    }

    fn intern(&mut self, bytes: Vec<u8>) -> u32 {
        if let Some(&id) = self.ids.get(&bytes) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(bytes.clone());
        self.ids.insert(bytes, id);
        id
    }
}

fn merge_in_place(word: &mut Vec<u32>, pair: (u32, u32), merged: u32) {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && (word[i], word[i + 1]) == pair {
            out.push(merged);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    *word = out;
}

impl Bpe {
    pub fn train(text: &[u8], max_merges: usize) -> Self {
        let mut piece_counts: HashMap<&[u8], u64> = HashMap::new();
        for p in pretokenize(text) {
            *piece_counts.entry(p).or_default() += 1;
        }
        let mut pieces: Vec<(&[u8], u64)> = piece_counts.into_iter().collect();
        pieces.sort_unstable();
        let mut words: Vec<Vec<u32>> = pieces
            .iter()
            .map(|(p, _)| p.iter().map(|&b| u32::from(b)).collect())
            .collect();
        let freq: Vec<u64> = pieces.iter().map(|&(_, c)| c).collect();

        let tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let mut t = Trainer {
            tokens,
            ids,
            counts: HashMap::new(),
            ordered: BTreeSet::new(),
            containing: HashMap::new(),
        };
        for (w, word) in words.iter().enumerate() {
            for p in word.windows(2) {
                t.adjust((p[0], p[1]), freq[w] as i64, w);
            }
        }

        let mut ranks = HashMap::new();
        while ranks.len() < max_merges {
            let Some(best) = t.ordered.first() else { break };
            if best.0 .0 < 2 {
                break;
            }
            let pair = (best.3, best.4);
            if ranks.contains_key(&pair) {
                // already merged everywhere; only a stale count can land here
                let k = t.ordered.pop_first();
                debug_assert!(k.is_some());
                t.counts.remove(&pair);
                continue;
            }
            let mut merged_bytes = t.tokens[pair.0 as usize].clone();
            merged_bytes.extend_from_slice(&t.tokens[pair.1 as usize]);
            let merged = t.intern(merged_bytes);
            ranks.insert(pair, (ranks.len(), merged));

            let mut affected: Vec<usize> = t
                .containing
                .remove(&pair)
                .map(|s| s.into_iter().collect())
                .unwrap_or_default();
            affected.sort_unstable();
            for w in affected {
                let c = freq[w] as i64;
                let old = words[w].clone();
                if !old.windows(2).any(|p| (p[0], p[1]) == pair) {
                    continue;
                }
                for p in old.windows(2) {
                    t.adjust((p[0], p[1]), -c, w);
                }
                merge_in_place(&mut words[w], pair, merged);
                for p in words[w].clone().windows(2) {
                    t.adjust((p[0], p[1]), c, w);
                }
            }
        }
        let merges = ranks.len();
        Bpe {
            tokens: t.tokens,
            ranks,
            merges,
        }
    }

    pub fn merges(&self) -> usize {
        self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    fn encode_piece(&self, piece: &[u8]) -> Vec<u32> {
        let mut word: Vec<u32> = piece.iter().map(|&b| u32::from(b)).collect();
        loop {
            let best = word
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0], p[1])).map(|&r| ((p[0], p[1]), r)))
                .min_by_key(|&(_, (rank, _))| rank);
            let Some((pair, (_, merged))) = best else {
                return word;
            };
            merge_in_place(&mut word, pair, merged);
        }
    }

    /// Subword tokens of `text` as byte slices.
    pub fn encode<'a>(&'a self, text: &[u8]) -> Vec<&'a [u8]> {
        let mut cache: HashMap<&[u8], Vec<u32>> = HashMap::new();
        let mut out = Vec::new();
        for piece in pretokenize(text) {
            let ids = cache
                .entry(piece)
                .or_insert_with(|| self.encode_piece(piece));
            out.extend(ids.iter().map(|&id| self.tokens[id as usize].as_slice()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretokens_carry_leading_whitespace() {
        let p = pretokenize(b"hello  world\n");
        assert_eq!(p, vec![&b"hello"[..], b"  world", b"\n"]);
        assert_eq!(pretokenize(b"  a").concat(), b"  a");
        assert!(pretokenize(b"").is_empty());
    }

    #[test]
    fn encoding_concatenates_back_to_input() {
        let text = "the cat sat on the mat; the cat ate. naïve café".as_bytes();
        let bpe = Bpe::train(text, 50);
        assert_eq!(bpe.encode(text).concat(), text);
        assert!(bpe.merges() > 0);
    }

    #[test]
    fn most_frequent_pair_merges_first_with_lexicographic_ties() {
        // (" ", "c"), ("a", "b") and ("c", "d") all occur three times
        let bpe = Bpe::train(b"ab ab ab cd cd cd", 1);
        assert_eq!(bpe.merges(), 1);
        assert_eq!(bpe.encode(b" cd"), vec![&b" c"[..], b"d"]);
        assert_eq!(bpe.encode(b"ab"), vec![&b"a"[..], b"b"]);
        // then (" c", "d") since " c" sorts before "a"
        let bpe = Bpe::train(b"ab ab ab cd cd cd", 3);
        assert_eq!(bpe.encode(b"ab"), vec![&b"ab"[..]]);
    }

    #[test]
    fn stops_when_no_pair_repeats() {
        let bpe = Bpe::train(b"abcdef", 100);
        assert_eq!(bpe.merges(), 0);
    }

    #[test]
    fn training_segmentation_matches_encoding() {
        let text = b"low lower lowest newer newest wider low low";
        let bpe = Bpe::train(text, 20);
        let again = Bpe::train(text, 20);
        assert_eq!(bpe.encode(text), again.encode(text));
        assert!(bpe.encode(text).len() < text.len());
    }
}
