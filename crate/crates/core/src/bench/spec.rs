//! Experiment description, read from TOML.
//!
//! ```toml
//! chunk_sizes = [16, 32, 64, 128, 256]   # chunk_size axis
//! orders = [0, 1, 2, 3, 4]               # predictor_order axis
//! scales = [1, 4, 16]                    # corpus_scale axis
//! repetitions = 1
//! ablations = ["chunk_size"]
//!
//! [[corpus]]
//! id = "wiki"
//! path = "wiki.txt"                      # relative to the spec file
//! sha256 = "..."                         # optional pin
//! natural = true
//!
//! [[compressor]]
//! id = "orderk4"
//! predictor = "orderk:4"
//! chunk_size = 0                         # 0 = unchunked
//!
//! [[external]]
//! id = "gzip-9"
//! compress = ["gzip", "-9", "-c", "{input}"]      # stdout when no {output}
//! decompress = ["gzip", "-d", "-c", "{input}"]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::predictors::PredictorConfig;

pub const DEFAULT_CHUNK_SIZES: [usize; 5] = [16, 32, 64, 128, 256];
pub const DEFAULT_ORDERS: [usize; 5] = [0, 1, 2, 3, 4];
pub const DEFAULT_SCALES: [usize; 3] = [1, 4, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    ChunkSize,
    PredictorOrder,
    CorpusScale,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::ChunkSize, Axis::PredictorOrder, Axis::CorpusScale];

    pub fn name(self) -> &'static str {
        match self {
            Axis::ChunkSize => "chunk_size",
            Axis::PredictorOrder => "predictor_order",
            Axis::CorpusScale => "corpus_scale",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub sha256: Option<String>,
    /// Natural-language text, as opposed to code, tables or generated data.
    #[serde(default)]
    pub natural: bool,
    /// Include in ablation grids.
    #[serde(default = "yes")]
    pub ablate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalSpec {
    pub id: String,
    pub predictor: String,
    #[serde(default)]
    pub chunk_size: usize,
    /// Include in the chunk-size and corpus-scale grids.
    #[serde(default = "yes")]
    pub ablate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    pub id: String,
    pub compress: Vec<String>,
    /// Required; checked during validation so the error names the entry.
    #[serde(default)]
    pub decompress: Option<Vec<String>>,
}

fn yes() -> bool {
    true
}

fn default_chunk_sizes() -> Vec<usize> {
    DEFAULT_CHUNK_SIZES.to_vec()
}

fn default_orders() -> Vec<usize> {
    DEFAULT_ORDERS.to_vec()
}

fn default_scales() -> Vec<usize> {
    DEFAULT_SCALES.to_vec()
}

fn default_repetitions() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, rename = "corpus")]
    pub corpora: Vec<CorpusSpec>,
    #[serde(default, rename = "compressor")]
    pub compressors: Vec<InternalSpec>,
    #[serde(default)]
    pub external: Vec<ExternalSpec>,
    #[serde(default = "default_chunk_sizes")]
    pub chunk_sizes: Vec<usize>,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "default_scales")]
    pub scales: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub ablations: Vec<Axis>,
    /// Add a redundancy table for every corpus.
    #[serde(default)]
    pub analysis: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 = one per core.
    #[serde(default)]
    pub workers: usize,
}

/// An internal compressor after its predictor string has been parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InternalCompressor {
    pub id: String,
    pub config: PredictorConfig,
    pub chunk_size: usize,
    pub ablate: bool,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| BenchError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Read a spec file and resolve relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let mut spec = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for c in &mut spec.corpora {
            if c.path.is_relative() {
                c.path = base.join(&c.path);
            }
        }
        if let Some(out) = &mut spec.output_dir {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.compressors.is_empty() && self.external.is_empty() {
            return Err(BenchError::EmptyCompressorList);
        }
        if self.corpora.is_empty() {
            return Err(BenchError::Spec("no corpora listed".into()));
        }
        if self.repetitions == 0 {
            return Err(BenchError::Spec("repetitions must be at least 1".into()));
        }
        let mut ids: Vec<&str> = self.compressors.iter().map(|c| c.id.as_str()).collect();
        ids.extend(self.external.iter().map(|e| e.id.as_str()));
        for (name, mut list) in [
            ("compressor", ids),
            (
                "corpus",
                self.corpora.iter().map(|c| c.id.as_str()).collect(),
            ),
        ] {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(BenchError::Spec(format!("duplicate {name} id {:?}", w[0])));
            }
        }
        self.internal()?;
        for e in &self.external {
            match &e.decompress {
                None => return Err(BenchError::MissingDecompress(e.id.clone())),
                Some(d) if d.is_empty() => return Err(BenchError::MissingDecompress(e.id.clone())),
                Some(_) => {}
            }
            if e.compress.is_empty() {
                return Err(BenchError::Spec(format!(
                    "external {:?} has an empty command",
                    e.id
                )));
            }
        }
        for c in &self.corpora {
            if let Some(d) = &c.sha256 {
                if d.len() != 64 || !d.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(BenchError::Spec(format!(
                        "corpus {:?}: bad sha256 pin",
                        c.id
                    )));
                }
            }
        }
        for axis in &self.ablations {
            let values = self.axis_values(*axis);
            if values.is_empty() {
                return Err(BenchError::Spec(format!(
                    "{} axis has no values",
                    axis.name()
                )));
            }
            if *axis == Axis::CorpusScale && values.contains(&0) {
                return Err(BenchError::Spec("corpus scale 0".into()));
            }
            if *axis == Axis::PredictorOrder
                && values.iter().any(|&k| k > crate::predictors::MAX_ORDER)
            {
                return Err(BenchError::Spec("order above the supported maximum".into()));
            }
        }
        Ok(())
    }

    pub fn internal(&self) -> Result<Vec<InternalCompressor>, BenchError> {
        self.compressors
            .iter()
            .map(|c| {
                let config = c
                    .predictor
                    .parse()
                    .map_err(|e| BenchError::Spec(format!("compressor {:?}: {e}", c.id)))?;
                Ok(InternalCompressor {
                    id: c.id.clone(),
                    config,
                    chunk_size: c.chunk_size,
                    ablate: c.ablate,
                })
            })
            .collect()
    }

    pub fn axis_values(&self, axis: Axis) -> &[usize] {
        match axis {
            Axis::ChunkSize => &self.chunk_sizes,
            Axis::PredictorOrder => &self.orders,
            Axis::CorpusScale => &self.scales,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[corpus]]
        id = "a"
        path = "a.txt"

        [[compressor]]
        id = "k2"
        predictor = "orderk:2"
    "#;

    #[test]
    fn defaults_fill_in() {
        let s = ExperimentSpec::from_toml(MINIMAL).unwrap();
        assert_eq!(s.chunk_sizes, vec![16, 32, 64, 128, 256]);
        assert_eq!(s.scales, vec![1, 4, 16]);
        assert_eq!(s.repetitions, 1);
        assert_eq!(
            s.internal().unwrap()[0].config,
            PredictorConfig::OrderK { k: 2 }
        );
    }

    #[test]
    fn empty_compressor_list_is_rejected() {
        let r = ExperimentSpec::from_toml("[[corpus]]\nid = \"a\"\npath = \"a\"\n");
        assert!(matches!(r, Err(BenchError::EmptyCompressorList)));
    }

    #[test]
    fn external_needs_decompress() {
        let text =
            format!("{MINIMAL}\n[[external]]\nid = \"gz\"\ncompress = [\"gzip\", \"{{input}}\"]\n");
        assert!(matches!(
            ExperimentSpec::from_toml(&text),
            Err(BenchError::MissingDecompress(id)) if id == "gz"
        ));
    }

    #[test]
    fn bad_entries_are_rejected() {
        for extra in [
            "[[compressor]]\nid = \"k2\"\npredictor = \"uniform\"\n",
            "[[compressor]]\nid = \"x\"\npredictor = \"lzma\"\n",
            "ablations = [\"colour\"]\n",
            "unknown_key = 1\n",
        ] {
            let text = if extra.starts_with("[[") {
                format!("{MINIMAL}\n{extra}")
            } else {
                format!("{extra}\n{MINIMAL}")
            };
            assert!(ExperimentSpec::from_toml(&text).is_err(), "{extra}");
        }
    }
}
