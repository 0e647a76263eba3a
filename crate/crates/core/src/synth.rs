//! Deterministic synthetic corpora.
//!
//! `schema_comments` imitates the free-text comment columns of the TPC-H
//! generator: grammar-built pseudo sentences over a small fixed vocabulary,
//! cut to a random length per row.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NOUNS: &[&str] = &[
    "foxes",
    "ideas",
    "theodolites",
    "pinto beans",
    "instructions",
    "dependencies",
    "excuses",
    "platelets",
    "asymptotes",
    "courts",
    "dolphins",
    "multipliers",
    "sauternes",
    "warthogs",
    "frets",
    "dinos",
    "attainments",
    "somas",
    "Tiresias",
    "patterns",
    "forges",
    "braids",
    "hockey players",
    "frays",
    "warhorses",
    "dugouts",
    "notornis",
    "epitaphs",
    "pearls",
    "tithes",
    "waters",
    "orbits",
    "gifts",
    "sheaves",
    "depths",
    "sentiments",
    "decoys",
    "realms",
    "pains",
    "grouches",
    "escapades",
    "accounts",
    "deposits",
    "requests",
    "packages",
    "theodolites",
    "pending requests",
    "regular deposits",
    "express accounts",
    "final packages",
];

const VERBS: &[&str] = &[
    "sleep",
    "wake",
    "are",
    "cajole",
    "haggle",
    "nag",
    "use",
    "boost",
    "affix",
    "detect",
    "integrate",
    "maintain",
    "nod",
    "was",
    "lose",
    "sublate",
    "solve",
    "thrash",
    "promise",
    "engage",
    "hinder",
    "print",
    "x-ray",
    "breach",
    "eat",
    "grow",
    "impress",
    "mold",
    "poach",
    "serve",
    "run",
    "dazzle",
    "snooze",
    "doze",
    "unwind",
    "kindle",
    "play",
    "hang",
    "believe",
    "doubt",
];

const ADJECTIVES: &[&str] = &[
    "furious",
    "sly",
    "careful",
    "blithe",
    "quick",
    "fluffy",
    "slow",
    "quiet",
    "ruthless",
    "thin",
    "close",
    "dogged",
    "daring",
    "brave",
    "stealthy",
    "permanent",
    "enticing",
    "idle",
    "busy",
    "regular",
    "final",
    "ironic",
    "even",
    "bold",
    "silent",
    "pending",
    "express",
    "special",
    "unusual",
];

const ADVERBS: &[&str] = &[
    "sometimes",
    "always",
    "never",
    "furiously",
    "slyly",
    "carefully",
    "blithely",
    "quickly",
    "fluffily",
    "slowly",
    "quietly",
    "ruthlessly",
    "thinly",
    "closely",
    "doggedly",
    "daringly",
    "bravely",
    "stealthily",
    "permanently",
    "enticingly",
    "idly",
    "busily",
    "regularly",
    "finally",
    "ironically",
    "evenly",
    "boldly",
    "silently",
];

const PREPOSITIONS: &[&str] = &[
    "about",
    "above",
    "according to",
    "across",
    "after",
    "against",
    "along",
    "alongside of",
    "among",
    "around",
    "at",
    "atop",
    "before",
    "behind",
    "beneath",
    "beside",
    "besides",
    "between",
    "beyond",
    "by",
    "despite",
    "during",
    "except",
    "for",
    "from",
    "in place of",
    "inside",
    "instead of",
    "into",
    "near",
    "of",
    "on",
    "outside",
    "over",
    "past",
    "since",
    "through",
    "throughout",
    "to",
    "toward",
    "under",
    "until",
    "up",
    "upon",
    "without",
    "with",
    "within",
];

const AUXILIARIES: &[&str] = &[
    "do",
    "may",
    "might",
    "shall",
    "will",
    "would",
    "can",
    "could",
    "should",
    "ought to",
    "must",
    "will have to",
    "shall have to",
    "could have to",
    "should have to",
    "must have to",
    "need to",
    "try to",
];

const TERMINATORS: &[&str] = &[".", ";", ":", "?", "!", "--"];

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("non-empty word list")
}

fn noun_phrase(rng: &mut ChaCha8Rng, out: &mut String) {
    match rng.gen_range(0..4) {
        0 => out.push_str(pick(rng, NOUNS)),
        1 => {
            out.push_str(pick(rng, ADJECTIVES));
            out.push(' ');
            out.push_str(pick(rng, NOUNS));
        }
        2 => {
            out.push_str(pick(rng, ADJECTIVES));
            out.push_str(", ");
            out.push_str(pick(rng, ADJECTIVES));
            out.push(' ');
            out.push_str(pick(rng, NOUNS));
        }
        _ => {
            out.push_str(pick(rng, ADVERBS));
            out.push(' ');
            out.push_str(pick(rng, ADJECTIVES));
            out.push(' ');
            out.push_str(pick(rng, NOUNS));
        }
    }
}

fn verb_phrase(rng: &mut ChaCha8Rng, out: &mut String) {
    let form = rng.gen_range(0..4);
    if form & 1 == 1 {
        out.push_str(pick(rng, AUXILIARIES));
        out.push(' ');
    }
    out.push_str(pick(rng, VERBS));
    if form & 2 == 2 {
        out.push(' ');
        out.push_str(pick(rng, ADVERBS));
    }
}

fn sentence(rng: &mut ChaCha8Rng, out: &mut String) {
    noun_phrase(rng, out);
    out.push(' ');
    verb_phrase(rng, out);
    match rng.gen_range(0..5) {
        0 | 1 => {}
        2 | 3 => {
            out.push(' ');
            out.push_str(pick(rng, PREPOSITIONS));
            out.push_str(" the ");
            noun_phrase(rng, out);
        }
        _ => {
            out.push(' ');
            out.push_str(pick(rng, VERBS));
            out.push(' ');
            noun_phrase(rng, out);
        }
    }
    out.push_str(pick(rng, TERMINATORS));
}

/// `rows` comment lines, each between 19 and 116 characters.
pub fn schema_comments(seed: u64, rows: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let mut line = String::new();
    for _ in 0..rows {
        let target = rng.gen_range(19..=116);
        line.clear();
        while line.len() < target {
            if !line.is_empty() {
                line.push(' ');
            }
            sentence(&mut rng, &mut line);
        }
        // every word list entry is ASCII
        line.truncate(target);
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// `pattern` repeated to exactly `len` bytes.
pub fn periodic(pattern: &[u8], len: usize) -> Vec<u8> {
    pattern.iter().copied().cycle().take(len).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_are_deterministic_and_bounded() {
        let a = schema_comments(1, 200);
        assert_eq!(a, schema_comments(1, 200));
        assert_ne!(a, schema_comments(2, 200));
        assert_eq!(a.lines().count(), 200);
        assert!(a.lines().all(|l| (1..=116).contains(&l.len())));
        assert!(a.is_ascii());
    }

    #[test]
    fn periodic_repeats_pattern() {
        assert_eq!(periodic(b"abc", 7), b"abcabca");
        assert!(periodic(b"abc", 0).is_empty());
    }
}
