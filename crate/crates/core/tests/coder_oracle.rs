//! Integer coder against an exact rational coder.

mod oracle;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ppress::coder::{Decoder, Encoder};
use ppress::model::{self_information_bits, QuantizedDistribution};

/// One coding problem: a table per step and the symbols, ending with EOS
/// (the last slot of every table).
struct Instance {
    tables: Vec<QuantizedDistribution>,
    symbols: Vec<usize>,
}

fn random_table(rng: &mut ChaCha8Rng, slots: usize) -> QuantizedDistribution {
    let probs: Vec<f64> = match rng.gen_range(0..4) {
        0 => (0..slots).map(|_| rng.gen::<f64>()).collect(),
        // one dominant symbol, the rest pinned near the floor
        1 => {
            let hot = rng.gen_range(0..slots);
            (0..slots)
                .map(|i| if i == hot { 1.0 } else { 1e-9 })
                .collect()
        }
        // many exact zeros
        2 => (0..slots)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    0.0
                } else {
                    rng.gen::<f64>()
                }
            })
            .chain(std::iter::once(1e-3))
            .take(slots)
            .collect(),
        _ => (0..slots).map(|i| 1.0 / (i + 1) as f64).collect(),
    };
    let probs = if probs.iter().all(|&p| p == 0.0) {
        vec![1.0; slots]
    } else {
        probs
    };
    QuantizedDistribution::quantize_slice(&probs).unwrap()
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let slots = rng.gen_range(2..=40);
    let len = rng.gen_range(0..=64);
    let per_step = rng.gen_bool(0.3);
    let shared = random_table(rng, slots);
    let mut tables = Vec::with_capacity(len + 1);
    let mut symbols = Vec::with_capacity(len + 1);
    for i in 0..=len {
        let t = if per_step {
            random_table(rng, slots)
        } else {
            shared.clone()
        };
        // sample in proportion to the table so long runs stay plausible
        let s = if i == len {
            slots - 1
        } else {
            let target = rng.gen_range(0..t.total());
            t.symbol_at(target).min(slots - 2)
        };
        tables.push(t);
        symbols.push(s);
    }
    Instance { tables, symbols }
}

fn integer_encode(inst: &Instance) -> (Vec<u8>, u64) {
    let mut enc = Encoder::new();
    for (t, &s) in inst.tables.iter().zip(&inst.symbols) {
        enc.encode(t, s).unwrap();
    }
    enc.finalize().unwrap();
    let bits = enc.bits_written();
    (enc.finish(), bits)
}

fn integer_decode(inst: &Instance, bytes: &[u8]) -> Vec<usize> {
    let mut dec = Decoder::new(bytes).unwrap();
    let eos = inst.tables[0].len() - 1;
    let mut out = Vec::new();
    loop {
        let s = dec.decode(&inst.tables[out.len()]).unwrap();
        out.push(s);
        if s == eos {
            return out;
        }
    }
}

#[test]
fn matches_rational_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c0d_e001);
    let mut worst_gap = f64::MIN;
    for n in 0..1000 {
        let inst = instance(&mut rng);
        let (bytes, bits) = integer_encode(&inst);
        let decoded = integer_decode(&inst, &bytes);
        assert_eq!(decoded, inst.symbols, "instance {n}");

        let steps: Vec<_> = inst
            .tables
            .iter()
            .zip(inst.symbols.iter().copied())
            .collect();
        let (m, oracle_bits) = oracle::rational_encode(&steps);
        let oracle_decoded =
            oracle::rational_decode(&m, oracle_bits, |i| &inst.tables[i], inst.symbols.len());
        assert_eq!(oracle_decoded, decoded, "instance {n}");
        assert!(
            bits <= oracle_bits + 64,
            "instance {n}: {bits} vs {oracle_bits}"
        );
        let ideal: f64 = steps
            .iter()
            .map(|&(t, s)| self_information_bits(t, s))
            .sum();
        worst_gap = worst_gap.max(bits as f64 - ideal);
    }
    // the oracle may land on a short dyadic by luck, so the tight bound is
    // against self-information: truncation loss plus the two finishing bits
    assert!(worst_gap <= 3.0, "worst gap {worst_gap}");
}

#[test]
fn short_known_message_fits_in_six_bytes() {
    let t = QuantizedDistribution::from_freqs(vec![32768, 16384, 16384]).unwrap();
    let steps = [(&t, 0), (&t, 0), (&t, 1), (&t, 2)];
    let mut enc = Encoder::new();
    for (d, s) in steps {
        enc.encode(d, s).unwrap();
    }
    let bytes = enc.finish();
    assert!(bytes.len() <= 6, "{} bytes", bytes.len());

    let mut dec = Decoder::new(&bytes).unwrap();
    let got: Vec<usize> = (0..4).map(|_| dec.decode(&t).unwrap()).collect();
    assert_eq!(got, [0, 0, 1, 2]);

    let (m, bits) = oracle::rational_encode(&steps);
    // self-information is 1 + 1 + 2 + 2 bits, and the dyadic interval is hit exactly
    assert_eq!(bits, 6);
    assert_eq!(oracle::rational_decode(&m, bits, |_| &t, 4), [0, 0, 1, 2]);
}

#[test]
fn decoder_tracks_encoder_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let inst = instance(&mut rng);
        let mut enc = Encoder::new();
        let mut states = Vec::new();
        for (t, &s) in inst.tables.iter().zip(&inst.symbols) {
            enc.encode(t, s).unwrap();
            states.push(enc.state());
        }
        let bytes = enc.finish();
        let mut dec = Decoder::new(&bytes).unwrap();
        for (i, t) in inst.tables.iter().enumerate() {
            assert_eq!(dec.decode(t).unwrap(), inst.symbols[i]);
            assert_eq!(dec.state(), states[i], "step {i}");
        }
    }
}

#[test]
fn cost_is_bounded_by_self_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let inst = instance(&mut rng);
        let ideal: f64 = inst
            .tables
            .iter()
            .zip(&inst.symbols)
            .map(|(t, &s)| self_information_bits(t, s))
            .sum();
        let (_, bits) = integer_encode(&inst);
        assert!((bits as f64) <= ideal + 64.0, "{bits} vs {ideal}");
        assert!((bits as f64) >= ideal.floor(), "{bits} vs {ideal}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn round_trips_any_sequence(
        freqs in proptest::collection::vec(1u32..5000, 2..64),
        picks in proptest::collection::vec(any::<prop::sample::Index>(), 0..400),
    ) {
        let probs: Vec<f64> = freqs.iter().map(|&f| f64::from(f)).collect();
        let t = QuantizedDistribution::quantize_slice(&probs).unwrap();
        let eos = t.len() - 1;
        let mut symbols: Vec<usize> = picks.iter().map(|i| i.index(eos)).collect();
        symbols.push(eos);
        let mut enc = Encoder::new();
        for &s in &symbols {
            enc.encode(&t, s).unwrap();
        }
        let bytes = enc.finish();
        let mut dec = Decoder::new(&bytes).unwrap();
        let got: Vec<usize> = symbols.iter().map(|_| dec.decode(&t).unwrap()).collect();
        prop_assert_eq!(got, symbols);
    }
}
