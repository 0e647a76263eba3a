//! Browser bindings for the demo page in `www/`.
//!
//! Each export takes the text from the page and returns JSON. The plain Rust
//! functions underneath are what the tests call.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ppress::analysis::{entropy_report, mutual_information, Granularity};
use ppress::container::{compress, compression_ratio, decompress};
use ppress::model::{self_information_bits, Predictor};
use ppress::predictors::{OrderKPredictor, PredictorConfig, Registry};

/// Largest order the page offers.
pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub chunk: usize,
    pub bytes: usize,
    pub ratio: f64,
}

fn check_order(k: usize) -> Result<(), String> {
    if k > MAX_ORDER {
        return Err(format!("order {k} is above {MAX_ORDER}"));
    }
    Ok(())
}

/// Compressed size and ratio of `text` under order-`k` for each chunk size.
/// Every container is decoded again before it is reported.
pub fn sweep(text: &[u8], k: usize, chunks: &[usize]) -> Result<Vec<SweepPoint>, String> {
    check_order(k)?;
    let registry = Registry::standard();
    let config = PredictorConfig::OrderK { k };
    chunks
        .iter()
        .map(|&chunk| {
            let bytes = compress(text, &config, chunk, &registry)
                .map_err(|e| e.to_string())?
                .container
                .to_bytes();
            let back = decompress(&bytes, &registry).map_err(|e| e.to_string())?;
            if back != text {
                return Err(format!("chunk {chunk}: round trip differs"));
            }
            Ok(SweepPoint {
                chunk,
                bytes: bytes.len(),
                ratio: compression_ratio(text.len() as u64, bytes.len() as u64),
            })
        })
        .collect()
}

/// Bits the adaptive order-`k` model spends on each byte of `text`.
pub fn surprise(text: &[u8], k: usize) -> Result<Vec<f64>, String> {
    check_order(k)?;
    let mut p = OrderKPredictor::bytes(k).map_err(|e| format!("order {} too large", e.0))?;
    let mut out = Vec::with_capacity(text.len());
    for &b in text {
        let dist = p.predict().map_err(|e| e.to_string())?;
        out.push(self_information_bits(dist, b as usize));
        p.update(b as u32).map_err(|e| e.to_string())?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Redundancy {
    /// Bits per byte at character granularity.
    pub char_bits: f64,
    /// Bits per byte at word granularity.
    pub word_bits: f64,
    /// Adjacent-word mutual information, when there are at least two words.
    pub mi_bits: Option<f64>,
    pub words: u64,
}

pub fn redundancy_report(text: &[u8]) -> Result<Redundancy, String> {
    let c = entropy_report(text, Granularity::Char).map_err(|e| e.to_string())?;
    let w = entropy_report(text, Granularity::Word).map_err(|e| e.to_string())?;
    let mi = mutual_information(text).ok().map(|m| m.mi_bits);
    Ok(Redundancy {
        char_bits: c.h_byte,
        word_bits: w.h_byte,
        mi_bits: mi,
        words: w.token_count,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON array of `{chunk, bytes, ratio}`.
#[wasm_bindgen]
pub fn chunk_sweep(text: &str, k: usize, chunks: Vec<u32>) -> Result<String, JsError> {
    let chunks: Vec<usize> = chunks.into_iter().map(|c| c as usize).collect();
    to_js(sweep(text.as_bytes(), k, &chunks))
}

/// Bits per byte, one entry per UTF-8 byte of `text`.
#[wasm_bindgen]
pub fn surprise_trace(text: &str, k: usize) -> Result<Vec<f64>, JsError> {
    surprise(text.as_bytes(), k).map_err(|e| JsError::new(&e))
}

/// JSON object `{char_bits, word_bits, mi_bits, words}`.
#[wasm_bindgen]
pub fn redundancy(text: &str) -> Result<String, JsError> {
    to_js(redundancy_report(text.as_bytes()))
}
