//! Reference implementations used only by tests: an exact rational
//! arithmetic coder and plain plug-in entropy estimators.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use ppress::model::{QuantizedDistribution, TOTAL};

fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact interval coder. Encoding returns the shortest binary fraction inside
/// the final interval as `(numerator, bits)`.
pub fn rational_encode(steps: &[(&QuantizedDistribution, usize)]) -> (BigInt, u64) {
    let mut low = BigRational::zero();
    let mut width = BigRational::one();
    let total = u64::from(TOTAL);
    for &(dist, s) in steps {
        low += &width * ratio(u64::from(dist.cum(s)), total);
        width *= ratio(u64::from(dist.freq(s)), total);
    }
    let high = &low + &width;
    let mut k = 0u64;
    loop {
        let scale = BigRational::from_integer(BigInt::one() << k);
        let m = (&low * &scale).ceil();
        if &m / &scale < high {
            return (m.to_integer(), k);
        }
        k += 1;
    }
}

/// Decode `count` symbols from `m / 2^bits`, asking `next` for each table.
pub fn rational_decode<'a>(
    m: &BigInt,
    bits: u64,
    mut next: impl FnMut(usize) -> &'a QuantizedDistribution,
    count: usize,
) -> Vec<usize> {
    let x = BigRational::new(m.clone(), BigInt::one() << bits);
    let mut low = BigRational::zero();
    let mut width = BigRational::one();
    let total = u64::from(TOTAL);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let dist = next(i);
        let t = ((&x - &low) / &width * BigRational::from_integer(BigInt::from(total))).floor();
        let t: u32 = t
            .to_integer()
            .try_into()
            .expect("value inside the interval");
        let s = (0..dist.len())
            .find(|&s| dist.cum(s) <= t && t < dist.cum(s) + dist.freq(s))
            .expect("some symbol covers t");
        low += &width * ratio(u64::from(dist.cum(s)), total);
        width *= ratio(u64::from(dist.freq(s)), total);
        out.push(s);
    }
    out
}

pub fn plug_in_entropy<K: Ord>(counts: &BTreeMap<K, u64>) -> f64 {
    let n: u64 = counts.values().sum();
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// Bits per byte of the empirical distribution over UTF-8 characters; bytes
/// outside valid UTF-8 count as one token each.
pub fn char_entropy_per_byte(text: &[u8]) -> f64 {
    let mut counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    let mut tokens = 0u64;
    let mut rest = text;
    while !rest.is_empty() {
        let len = match std::str::from_utf8(rest) {
            Ok(s) => s.chars().next().unwrap().len_utf8(),
            Err(e) if e.valid_up_to() > 0 => std::str::from_utf8(&rest[..e.valid_up_to()])
                .unwrap()
                .chars()
                .next()
                .unwrap()
                .len_utf8(),
            Err(_) => 1,
        };
        *counts.entry(rest[..len].to_vec()).or_default() += 1;
        tokens += 1;
        rest = &rest[len..];
    }
    plug_in_entropy(&counts) * tokens as f64 / text.len() as f64
}

pub fn words(text: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(text)
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Plug-in mutual information between adjacent items.
pub fn adjacent_mi<T: Ord>(items: &[T]) -> f64 {
    let mut joint: BTreeMap<(&T, &T), u64> = BTreeMap::new();
    let mut first: BTreeMap<&T, u64> = BTreeMap::new();
    let mut second: BTreeMap<&T, u64> = BTreeMap::new();
    for w in items.windows(2) {
        *joint.entry((&w[0], &w[1])).or_default() += 1;
        *first.entry(&w[0]).or_default() += 1;
        *second.entry(&w[1]).or_default() += 1;
    }
    // I(X;Y) = H(X) + H(Y) - H(X,Y)
    plug_in_entropy(&first) + plug_in_entropy(&second) - plug_in_entropy(&joint)
}
