//! Container round trips, framing limits and failure behaviour.

use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ppress::container::{compress, decompress, Container, ContainerError, CHUNK_OVERHEAD};
use ppress::predictors::{PredictorConfig, Registry, RegistryError};
use ppress::synth;

fn corpora_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpora")
}

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn orderk(k: usize) -> PredictorConfig {
    PredictorConfig::OrderK { k }
}

fn registry() -> Registry {
    Registry::standard()
}

fn pack(text: &[u8], config: &PredictorConfig, chunk: usize) -> Vec<u8> {
    compress(text, config, chunk, &registry())
        .unwrap()
        .to_bytes()
}

#[test]
fn every_corpus_round_trips() {
    let mut seen = 0;
    for entry in std::fs::read_dir(corpora_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "txt") {
            continue;
        }
        let text = std::fs::read(&path).unwrap();
        for (config, chunk) in [(orderk(4), 0), (orderk(2), 256)] {
            let bytes = pack(&text, &config, chunk);
            assert_eq!(
                decompress(&bytes, &registry()).unwrap(),
                text,
                "{}",
                path.display()
            );
        }
        seen += 1;
    }
    assert_eq!(seen, 10);
}

#[test]
fn every_truncation_fails() {
    let text = b"It was the best of times, it was the worst of times.";
    for (config, chunk) in [
        (orderk(3), 0),
        (orderk(1), 16),
        (PredictorConfig::Uniform, 7),
    ] {
        let bytes = pack(text, &config, chunk);
        for cut in 0..bytes.len() {
            let r = decompress(&bytes[..cut], &registry());
            assert!(r.is_err(), "{config} cut at {cut} decoded");
            assert!(r.unwrap_err().is_corruption());
        }
    }
}

#[test]
fn bit_flips_never_yield_wrong_text() {
    let text = std::fs::read(corpora_dir().join("wiki.txt")).unwrap();
    let text = &text[..4000];
    let bytes = pack(text, &orderk(2), 512);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let mut bad = bytes.clone();
        let i = rng.gen_range(0..bad.len());
        bad[i] ^= 1 << rng.gen_range(0..8);
        match decompress(&bad, &registry()) {
            Ok(out) => assert_eq!(out, text),
            Err(e) => assert!(
                e.is_corruption()
                    || matches!(
                        e,
                        ContainerError::Registry(_) | ContainerError::TokenizerMismatch
                    ),
                "{e:?}"
            ),
        }
    }
}

#[test]
fn missing_predictor_is_refused() {
    let bytes = pack(b"abracadabra", &orderk(3), 0);
    let only_k2 = Registry::empty().offer(orderk(2));
    match decompress(&bytes, &only_k2) {
        Err(ContainerError::Registry(RegistryError::UnknownPredictor(d))) => {
            assert_eq!(d.id, "orderk");
            assert_eq!(d.param("k"), Some("3"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn framing_overhead_is_bounded() {
    let text = synth::schema_comments(1, 200);
    for chunk in [0, 16, 64, 256, 1000] {
        for config in [PredictorConfig::Uniform, orderk(0), orderk(8)] {
            let c = compress(text.as_bytes(), &config, chunk, &registry())
                .unwrap()
                .container;
            let n = c.chunks.len();
            assert!(c.header_len() <= 128, "{}", c.header_len());
            assert_eq!(
                c.encoded_len(),
                c.header_len() + n * CHUNK_OVERHEAD + c.payload_len()
            );
            assert_eq!(c.to_bytes().len(), c.encoded_len());
            assert_eq!(c.token_count(), text.len() as u64);
        }
    }
}

#[test]
fn random_bytes_do_not_compress() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut data = vec![0u8; 1 << 20];
    rng.fill_bytes(&mut data);
    for config in [PredictorConfig::Uniform, orderk(0)] {
        let bytes = pack(&data, &config, 0);
        let ratio = data.len() as f64 / bytes.len() as f64;
        assert!(ratio <= 1.01, "{config}: {ratio}");
        assert_eq!(decompress(&bytes, &registry()).unwrap(), data);
    }
}

#[test]
fn repetition_compresses_well() {
    let text = b"abab".repeat(1000);
    let bytes = pack(&text, &orderk(2), 256);
    let ratio = text.len() as f64 / bytes.len() as f64;
    assert!(ratio > 10.0, "{ratio}");
}

#[test]
fn higher_order_helps_periodic_text() {
    for pattern in [&b"a"[..], b"ab", b"abc", b"abca", b"a1b2c3d4"] {
        let text = synth::periodic(pattern, 20_000);
        let period = (1..=pattern.len())
            .find(|&p| (p..text.len()).all(|i| text[i] == text[i - p]))
            .unwrap();
        let mut last = usize::MAX;
        for k in period..=8 {
            let size = pack(&text, &orderk(k), 0).len();
            assert!(size <= last, "pattern {pattern:?} k={k}: {size} > {last}");
            last = size;
        }
    }
}

#[test]
fn empty_input() {
    for chunk in [0, 1, 64] {
        let c = compress(b"", &orderk(2), chunk, &registry())
            .unwrap()
            .container;
        assert!(c.chunks.is_empty());
        assert_eq!(decompress(&c.to_bytes(), &registry()).unwrap(), b"");
    }
}

#[test]
fn output_is_deterministic() {
    let text = synth::schema_comments(9, 300);
    for config in [PredictorConfig::Uniform, orderk(4)] {
        let a = pack(text.as_bytes(), &config, 64);
        let b = pack(text.as_bytes(), &config, 64);
        assert_eq!(a, b);
        assert_eq!(Container::from_bytes(&a).unwrap().to_bytes(), a);
    }
}

const FIXTURE_TEXT: &[u8] = b"The quick brown fox jumps over the lazy dog. \
The quick brown fox jumps over the lazy dog again, and again.\n";

/// Containers written by an earlier build; decoding them pins the format.
/// Set `PPRESS_BLESS=1` to rewrite them.
#[test]
fn golden_containers() {
    let cases = [
        ("uniform-c0.ppz", PredictorConfig::Uniform, 0),
        ("orderk2-c16.ppz", orderk(2), 16),
        ("orderk4-c0.ppz", orderk(4), 0),
    ];
    let dir = fixtures_dir();
    let bless = std::env::var_os("PPRESS_BLESS").is_some();
    for (name, config, chunk) in cases {
        let path = dir.join(name);
        let fresh = pack(FIXTURE_TEXT, &config, chunk);
        if bless {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &fresh).unwrap();
        }
        let stored = std::fs::read(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        assert_eq!(
            decompress(&stored, &registry()).unwrap(),
            FIXTURE_TEXT,
            "{name}"
        );
        assert_eq!(fresh, stored, "{name} encodes differently");
    }
}

fn any_config() -> impl Strategy<Value = PredictorConfig> {
    prop_oneof![
        Just(PredictorConfig::Uniform),
        (0usize..=8).prop_map(|k| PredictorConfig::OrderK { k }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn round_trips_arbitrary_bytes(
        text in proptest::collection::vec(any::<u8>(), 0..3000),
        config in any_config(),
        chunk in prop_oneof![Just(0usize), 1usize..600],
    ) {
        let c = compress(&text, &config, chunk, &registry()).unwrap().container;
        let expected_chunks = match (text.len(), chunk) {
            (0, _) => 0,
            (_, 0) => 1,
            (n, c) => n.div_ceil(c),
        };
        prop_assert_eq!(c.chunks.len(), expected_chunks);
        prop_assert_eq!(decompress(&c.to_bytes(), &registry()).unwrap(), text);
    }

    #[test]
    fn round_trips_text_like_input(
        text in "[a-c ]{0,2000}",
        k in 0usize..=8,
        chunk in prop_oneof![Just(0usize), 1usize..300],
    ) {
        let bytes = pack(text.as_bytes(), &orderk(k), chunk);
        prop_assert_eq!(decompress(&bytes, &registry()).unwrap(), text.as_bytes());
    }
}
