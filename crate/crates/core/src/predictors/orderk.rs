//! Adaptive order-k context model with count-proportional backoff.
//!
//! Each context of length `j <= k` keeps sparse symbol counts. The estimate for
//! the next symbol blends the maximum-likelihood estimate of every seen context
//! from order 0 up to order k:
//!
//! ```text
//! p_j = w_j * counts_j / total_j + (1 - w_j) * p_(j-1),   w_j = total_j / (total_j + |A|)
//! ```
//!
//! with `p_(-1)` uniform over all slots. Unseen contexts are skipped.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use crate::model::{
    Alphabet, Predictor, PredictorDescriptor, PredictorError, QuantizedDistribution,
};

pub const MAX_ORDER: usize = 8;

/// Contexts stored before the model stops creating new ones.
pub const MAX_CONTEXTS: usize = 1 << 20;
/// Symbol counters stored before the model stops creating new ones.
pub const MAX_COUNTERS: usize = 1 << 22;

const RESCALE_AT: u32 = 1 << 30;
const NIL: u32 = u32::MAX;

#[derive(Default)]
struct ContextHasher(u64);

impl Hasher for ContextHasher {
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = mix(self.0 ^ u64::from(b));
        }
    }

    fn write_u128(&mut self, v: u128) {
        self.0 = mix(self.0 ^ (v as u64) ^ ((v >> 64) as u64).rotate_left(29));
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

type ContextMap = HashMap<u128, u32, BuildHasherDefault<ContextHasher>>;

#[derive(Debug, Clone, Copy)]
struct Node {
    total: u32,
    head: u32,
}

#[derive(Debug, Clone, Copy)]
struct Counter {
    symbol: u32,
    count: u32,
    next: u32,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("order {0} exceeds the maximum of {MAX_ORDER}")]
pub struct OrderTooLarge(pub usize);

pub struct OrderKPredictor {
    k: usize,
    alphabet: Alphabet,
    history: [u32; MAX_ORDER],
    history_len: usize,
    // contexts[j - 1] maps an order-j context key to its node; node 0 is order 0
    contexts: Vec<ContextMap>,
    nodes: Vec<Node>,
    counters: Vec<Counter>,
    probs: Vec<f64>,
    dist: QuantizedDistribution,
    stale: bool,
}

impl std::fmt::Debug for OrderKPredictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OrderKPredictor")
            .field("k", &self.k)
            .field("contexts", &self.nodes.len())
            .field("counters", &self.counters.len())
            .finish()
    }
}

impl OrderKPredictor {
    pub fn new(k: usize, alphabet: Alphabet) -> Result<Self, OrderTooLarge> {
        if k > MAX_ORDER {
            return Err(OrderTooLarge(k));
        }
        let slots = alphabet.slots();
        Ok(OrderKPredictor {
            k,
            alphabet,
            history: [0; MAX_ORDER],
            history_len: 0,
            contexts: (0..k).map(|_| ContextMap::default()).collect(),
            nodes: vec![Node {
                total: 0,
                head: NIL,
            }],
            counters: Vec::new(),
            probs: vec![0.0; slots],
            dist: QuantizedDistribution::uniform(slots)
                .expect("alphabet slots are bounded by the quantization total"),
            stale: false,
        })
    }

    pub fn bytes(k: usize) -> Result<Self, OrderTooLarge> {
        Self::new(k, Alphabet::bytes())
    }

    pub fn order(&self) -> usize {
        self.k
    }

    /// Number of stored contexts, order 0 included.
    pub fn context_count(&self) -> usize {
        self.nodes.len()
    }

    // Key of the order-j context: the last j symbols, 16 bits each, most
    // recent in the low bits.
    fn key(&self, j: usize) -> u128 {
        let mut key = 0u128;
        for i in 0..j {
            let sym = self.history[self.history_len - 1 - i];
            key |= u128::from(sym) << (16 * i);
        }
        key
    }

    fn node(&self, j: usize) -> Option<u32> {
        if j == 0 {
            return Some(0);
        }
        self.contexts[j - 1].get(&self.key(j)).copied()
    }

    fn max_order_now(&self) -> usize {
        self.k.min(self.history_len)
    }

    fn refresh(&mut self) {
        let size = f64::from(self.alphabet.size());
        // (node, weight of its ML estimate), highest order first
        let mut levels = [(0u32, 0.0f64); MAX_ORDER + 1];
        let mut n_levels = 0;
        let mut remaining = 1.0f64;
        for j in (0..=self.max_order_now()).rev() {
            let Some(id) = self.node(j) else { continue };
            let total = self.nodes[id as usize].total;
            if total == 0 {
                continue;
            }
            let t = f64::from(total);
            let w = t / (t + size);
            levels[n_levels] = (id, remaining * w);
            n_levels += 1;
            remaining *= size / (t + size);
        }
        let flat = remaining / self.probs.len() as f64;
        self.probs.fill(flat);
        for &(id, coef) in &levels[..n_levels] {
            let node = self.nodes[id as usize];
            let scale = coef / f64::from(node.total);
            let mut c = node.head;
            while c != NIL {
                let counter = self.counters[c as usize];
                self.probs[counter.symbol as usize] += scale * f64::from(counter.count);
                c = counter.next;
            }
        }
        self.dist
            .requantize(&self.probs)
            .expect("blended probabilities are finite with positive mass");
        self.stale = false;
    }

    fn bump(&mut self, id: u32, symbol: u32) {
        let node = self.nodes[id as usize];
        let mut prev = NIL;
        let mut c = node.head;
        while c != NIL {
            if self.counters[c as usize].symbol == symbol {
                break;
            }
            prev = c;
            c = self.counters[c as usize].next;
        }
        if c == NIL {
            if self.counters.len() >= MAX_COUNTERS {
                return;
            }
            c = self.counters.len() as u32;
            self.counters.push(Counter {
                symbol,
                count: 0,
                next: node.head,
            });
            self.nodes[id as usize].head = c;
        } else if prev != NIL {
            // move to front
            self.counters[prev as usize].next = self.counters[c as usize].next;
            self.counters[c as usize].next = self.nodes[id as usize].head;
            self.nodes[id as usize].head = c;
        }
        self.counters[c as usize].count += 1;
        self.nodes[id as usize].total += 1;
        if self.nodes[id as usize].total >= RESCALE_AT {
            self.rescale(id);
        }
    }

    fn rescale(&mut self, id: u32) {
        let mut total = 0;
        let mut c = self.nodes[id as usize].head;
        while c != NIL {
            let counter = &mut self.counters[c as usize];
            counter.count = counter.count.div_ceil(2);
            total += counter.count;
            c = counter.next;
        }
        self.nodes[id as usize].total = total;
    }
}

impl Predictor for OrderKPredictor {
    fn descriptor(&self) -> PredictorDescriptor {
        PredictorDescriptor::new("orderk", vec![("k".into(), self.k.to_string())])
    }

    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn predict(&mut self) -> Result<&QuantizedDistribution, PredictorError> {
        if self.stale {
            self.refresh();
        }
        Ok(&self.dist)
    }

    fn update(&mut self, symbol: u32) -> Result<(), PredictorError> {
        if symbol > self.alphabet.eos() {
            return Err(PredictorError::InvalidSymbol {
                symbol,
                size: self.alphabet.size(),
            });
        }
        for j in 0..=self.max_order_now() {
            let id = match self.node(j) {
                Some(id) => id,
                None => {
                    if self.nodes.len() >= MAX_CONTEXTS {
                        continue;
                    }
                    let id = self.nodes.len() as u32;
                    self.nodes.push(Node {
                        total: 0,
                        head: NIL,
                    });
                    let key = self.key(j);
                    self.contexts[j - 1].insert(key, id);
                    id
                }
            };
            self.bump(id, symbol);
        }
        if symbol == self.alphabet.eos() {
            self.history_len = 0;
        } else if self.k > 0 {
            if self.history_len == self.k {
                self.history.copy_within(1..self.k, 0);
                self.history_len -= 1;
            }
            self.history[self.history_len] = symbol;
            self.history_len += 1;
        }
        self.stale = true;
        Ok(())
    }

    /// Clears the sliding context; learned counts are kept.
    fn reset_context(&mut self) -> Result<(), PredictorError> {
        self.history_len = 0;
        self.stale = true;
        Ok(())
    }

    fn is_adaptive(&self) -> bool {
        true
    }
}
