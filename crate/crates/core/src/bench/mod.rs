//! Benchmark harness: internal predictors and external compressors over a
//! corpus list, with chunk-size, order and corpus-scale ablations.

mod report;
mod spec;

use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{emit_report, render_ablation, render_report, to_jsonl, REPORT_FORMAT};
pub use spec::{
    Axis, CorpusSpec, ExperimentSpec, ExternalSpec, InternalCompressor, InternalSpec,
    DEFAULT_CHUNK_SIZES, DEFAULT_ORDERS, DEFAULT_SCALES,
};

use crate::analysis::{AnalysisError, CorpusSummary};
use crate::container::{compress, compression_ratio, decompress, ContainerError};
use crate::model::PredictorError;
use crate::predictors::{PredictorConfig, Registry, RegistryError};

/// Ablation over corpus scale passes when the ratio spread stays below this.
pub const SCALE_STABILITY: f64 = 0.20;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error("experiment spec lists no compressors")]
    EmptyCompressorList,
    #[error("external compressor {0:?} has no decompress command")]
    MissingDecompress(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corpus {id:?}: sha256 {actual} does not match pinned {expected}")]
    CorpusDigest {
        id: String,
        expected: String,
        actual: String,
    },
    #[error("{compressor} on {corpus}: {error}")]
    Internal {
        corpus: String,
        compressor: String,
        error: ContainerError,
    },
    #[error("{compressor} on {corpus}: round trip does not reproduce the input")]
    Verification { corpus: String, compressor: String },
    #[error("{compressor} on {corpus}: repetitions produced different output")]
    Nondeterministic { corpus: String, compressor: String },
    #[error("analysis of {corpus}: {error}")]
    Analysis {
        corpus: String,
        error: AnalysisError,
    },
    #[error("no rows to report")]
    NoRows,
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub corpus: String,
    pub compressor: String,
    pub kind: RowKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub axis: Option<Axis>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub axis_value: Option<usize>,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    /// Coded payload without container framing; equals `compressed_bytes`
    /// for external tools.
    pub payload_bytes: u64,
    pub ratio: f64,
    pub payload_ratio: f64,
    pub seconds: f64,
    pub lossless_verified: bool,
    /// False for external tools, whose output is not checked across runs.
    pub deterministic: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl ResultRow {
    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &ResultRow) -> bool {
        ResultRow {
            seconds: 0.0,
            ..self.clone()
        } == ResultRow {
            seconds: 0.0,
            ..other.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub corpus: String,
    pub compressor: String,
    pub reason: String,
}

/// Per-corpus summary of one ablation series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub corpus: String,
    pub compressor: String,
    pub values: Vec<usize>,
    pub ratios: Vec<f64>,
    pub non_decreasing: bool,
    pub strictly_increasing: bool,
    /// `max / min - 1` over the series.
    pub spread: f64,
    /// Chunk axis only: the 16 to 64 gain exceeds the 128 to 256 gain.
    pub tapering: Option<bool>,
}

impl Verdict {
    fn new(corpus: &str, compressor: &str, axis: Axis, points: &[(usize, f64)]) -> Self {
        let values: Vec<usize> = points.iter().map(|p| p.0).collect();
        let ratios: Vec<f64> = points.iter().map(|p| p.1).collect();
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let at = |v: usize| points.iter().find(|p| p.0 == v).map(|p| p.1);
        let tapering = match (axis, at(16), at(64), at(128), at(256)) {
            (Axis::ChunkSize, Some(a), Some(b), Some(c), Some(d)) => Some(b - a > d - c),
            _ => None,
        };
        Verdict {
            corpus: corpus.into(),
            compressor: compressor.into(),
            non_decreasing: ratios.windows(2).all(|w| w[1] >= w[0]),
            strictly_increasing: ratios.windows(2).all(|w| w[1] > w[0]),
            spread: if min > 0.0 {
                max / min - 1.0
            } else {
                f64::INFINITY
            },
            tapering,
            values,
            ratios,
        }
    }

    /// One-word judgement for the axis.
    pub fn summary(&self, axis: Axis) -> &'static str {
        match axis {
            Axis::ChunkSize => match (self.non_decreasing, self.tapering) {
                (true, Some(true)) => "non-decreasing, tapering",
                (true, _) => "non-decreasing",
                (false, _) => "not monotone",
            },
            Axis::PredictorOrder => {
                if self.strictly_increasing {
                    "strictly increasing"
                } else if self.non_decreasing {
                    "non-decreasing"
                } else {
                    "not monotone"
                }
            }
            Axis::CorpusScale => {
                if self.spread < SCALE_STABILITY {
                    "stable"
                } else {
                    "unstable"
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub axis: Axis,
    pub rows: Vec<ResultRow>,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub rows: Vec<ResultRow>,
    pub skipped: Vec<Skipped>,
    pub redundancy: Vec<CorpusSummary>,
    pub ablations: Vec<Ablation>,
}

impl Outcome {
    /// Internal rows never reach here unverified; external failures do.
    pub fn external_failures(&self) -> usize {
        self.rows
            .iter()
            .chain(self.ablations.iter().flat_map(|a| &a.rows))
            .filter(|r| !r.lossless_verified)
            .count()
    }
}

struct Corpus {
    id: String,
    path: PathBuf,
    text: Vec<u8>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn load_corpora(spec: &ExperimentSpec, ablation: bool) -> Result<Vec<Corpus>, BenchError> {
    spec.corpora
        .iter()
        .filter(|c| !ablation || c.ablate)
        .map(|c| {
            let text = std::fs::read(&c.path).map_err(|e| BenchError::io(&c.path, e))?;
            if let Some(expected) = &c.sha256 {
                let actual = hex(&crate::container::sha256(&text));
                if !actual.eq_ignore_ascii_case(expected) {
                    return Err(BenchError::CorpusDigest {
                        id: c.id.clone(),
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
            Ok(Corpus {
                id: c.id.clone(),
                path: c.path.clone(),
                text,
            })
        })
        .collect()
}

/// First `scale / max_scale` of `text`, cut back to a line end when one is
/// available.
pub fn scale_prefix(text: &[u8], scale: usize, max_scale: usize) -> &[u8] {
    let target = text.len() * scale / max_scale.max(1);
    let head = &text[..target.min(text.len())];
    match head.iter().rposition(|&b| b == b'\n') {
        Some(i) if target < text.len() && i > 0 => &head[..=i],
        _ => head,
    }
}

enum Job<'a> {
    Internal {
        corpus: &'a Corpus,
        text: &'a [u8],
        compressor: InternalCompressor,
        axis: Option<(Axis, usize)>,
    },
    External {
        corpus: &'a Corpus,
        tool: &'a ExternalSpec,
    },
}

enum JobResult {
    Row(ResultRow),
    Skip(Skipped),
}

fn remote_unavailable(e: &ContainerError) -> bool {
    matches!(
        e,
        ContainerError::Predictor(PredictorError::RemoteUnavailable(_))
            | ContainerError::Registry(RegistryError::NoEndpoint)
            | ContainerError::Registry(RegistryError::Predictor(
                PredictorError::RemoteUnavailable(_)
            ))
    )
}

fn run_internal(
    corpus: &Corpus,
    text: &[u8],
    c: &InternalCompressor,
    axis: Option<(Axis, usize)>,
    repetitions: usize,
    registry: &Registry,
) -> Result<JobResult, BenchError> {
    let fail = |error| BenchError::Internal {
        corpus: corpus.id.clone(),
        compressor: c.id.clone(),
        error,
    };
    let mut best = f64::INFINITY;
    let mut first: Option<(Vec<u8>, u64)> = None;
    for _ in 0..repetitions {
        let start = Instant::now();
        let packed = match compress(text, &c.config, c.chunk_size, registry) {
            Ok(p) => p,
            Err(e) if remote_unavailable(&e) => {
                return Ok(JobResult::Skip(Skipped {
                    corpus: corpus.id.clone(),
                    compressor: c.id.clone(),
                    reason: e.to_string(),
                }))
            }
            Err(e) => return Err(fail(e)),
        };
        let bytes = packed.to_bytes();
        best = best.min(start.elapsed().as_secs_f64());
        match &first {
            Some((b, _)) if *b != bytes => {
                return Err(BenchError::Nondeterministic {
                    corpus: corpus.id.clone(),
                    compressor: c.id.clone(),
                })
            }
            Some(_) => {}
            None => first = Some((bytes, packed.container.payload_len() as u64)),
        }
    }
    let (bytes, payload) = first.expect("at least one repetition");
    let restored = decompress(&bytes, registry).map_err(fail)?;
    if restored != text {
        return Err(BenchError::Verification {
            corpus: corpus.id.clone(),
            compressor: c.id.clone(),
        });
    }
    let original = text.len() as u64;
    Ok(JobResult::Row(ResultRow {
        corpus: corpus.id.clone(),
        compressor: c.id.clone(),
        kind: RowKind::Internal,
        axis: axis.map(|a| a.0),
        axis_value: axis.map(|a| a.1),
        original_bytes: original,
        compressed_bytes: bytes.len() as u64,
        payload_bytes: payload,
        ratio: compression_ratio(original, bytes.len() as u64),
        payload_ratio: compression_ratio(original, payload.max(1)),
        seconds: best,
        lossless_verified: true,
        deterministic: true,
        note: None,
    }))
}

// Substitute {input} and {output}; returns the argv and whether stdout is the
// output.
fn expand(template: &[String], input: &Path, output: &Path) -> (Vec<String>, bool) {
    let mut to_stdout = true;
    let argv = template
        .iter()
        .map(|a| {
            if a.contains("{output}") {
                to_stdout = false;
            }
            a.replace("{input}", &input.to_string_lossy())
                .replace("{output}", &output.to_string_lossy())
        })
        .collect();
    (argv, to_stdout)
}

enum ToolRun {
    Ok,
    Missing(String),
    Failed(String),
}

fn run_tool(template: &[String], input: &Path, output: &Path) -> ToolRun {
    let (argv, to_stdout) = expand(template, input, output);
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .stdin(Stdio::null())
        .stderr(Stdio::piped());
    if to_stdout {
        match std::fs::File::create(output) {
            Ok(f) => {
                cmd.stdout(f);
            }
            Err(e) => return ToolRun::Failed(format!("{}: {e}", output.display())),
        }
    } else {
        cmd.stdout(Stdio::null());
    }
    match cmd.output() {
        Err(e) if e.kind() == ErrorKind::NotFound => {
            ToolRun::Missing(format!("{} not found", argv[0]))
        }
        Err(e) => ToolRun::Failed(format!("{}: {e}", argv[0])),
        Ok(out) if !out.status.success() => ToolRun::Failed(format!(
            "{} exited with {}: {}",
            argv[0],
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )),
        Ok(_) => ToolRun::Ok,
    }
}

fn run_external(
    corpus: &Corpus,
    tool: &ExternalSpec,
    repetitions: usize,
) -> Result<JobResult, BenchError> {
    let dir = tempfile::tempdir().map_err(|e| BenchError::io(Path::new("tempdir"), e))?;
    let packed = dir.path().join("packed");
    let restored = dir.path().join("restored");
    let original = corpus.text.len() as u64;
    let mut row = ResultRow {
        corpus: corpus.id.clone(),
        compressor: tool.id.clone(),
        kind: RowKind::External,
        axis: None,
        axis_value: None,
        original_bytes: original,
        compressed_bytes: 0,
        payload_bytes: 0,
        ratio: 0.0,
        payload_ratio: 0.0,
        seconds: 0.0,
        lossless_verified: false,
        deterministic: false,
        note: None,
    };
    let input = std::fs::canonicalize(&corpus.path).map_err(|e| BenchError::io(&corpus.path, e))?;
    let mut best = f64::INFINITY;
    for _ in 0..repetitions {
        let start = Instant::now();
        match run_tool(&tool.compress, &input, &packed) {
            ToolRun::Ok => best = best.min(start.elapsed().as_secs_f64()),
            ToolRun::Missing(reason) => {
                return Ok(JobResult::Skip(Skipped {
                    corpus: corpus.id.clone(),
                    compressor: tool.id.clone(),
                    reason,
                }))
            }
            ToolRun::Failed(reason) => {
                row.note = Some(reason);
                return Ok(JobResult::Row(row));
            }
        }
    }
    row.seconds = best;
    let size = std::fs::metadata(&packed).map(|m| m.len()).unwrap_or(0);
    row.compressed_bytes = size;
    row.payload_bytes = size;
    if size > 0 {
        row.ratio = compression_ratio(original, size);
        row.payload_ratio = row.ratio;
    }
    let decompress = tool.decompress.as_deref().unwrap_or_default();
    match run_tool(decompress, &packed, &restored) {
        ToolRun::Ok => match std::fs::read(&restored) {
            Ok(back) if back == corpus.text && size > 0 => row.lossless_verified = true,
            Ok(_) => row.note = Some("decompressed output differs from the input".into()),
            Err(e) => row.note = Some(format!("reading decompressed output: {e}")),
        },
        ToolRun::Missing(reason) | ToolRun::Failed(reason) => row.note = Some(reason),
    }
    Ok(JobResult::Row(row))
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

fn execute(
    jobs: Vec<Job<'_>>,
    spec: &ExperimentSpec,
    registry: &Registry,
) -> Result<(Vec<ResultRow>, Vec<Skipped>), BenchError> {
    let results: Vec<Result<JobResult, BenchError>> = pool(spec.workers).install(|| {
        jobs.par_iter()
            .map(|job| match job {
                Job::Internal {
                    corpus,
                    text,
                    compressor,
                    axis,
                } => run_internal(corpus, text, compressor, *axis, spec.repetitions, registry),
                Job::External { corpus, tool } => run_external(corpus, tool, spec.repetitions),
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            JobResult::Row(row) => rows.push(row),
            JobResult::Skip(s) => skipped.push(s),
        }
    }
    Ok((rows, skipped))
}

/// Every compressor on every corpus.
pub fn run_experiment(spec: &ExperimentSpec, registry: &Registry) -> Result<Outcome, BenchError> {
    spec.validate()?;
    let corpora = load_corpora(spec, false)?;
    let internal = spec.internal()?;
    let mut jobs = Vec::new();
    for corpus in &corpora {
        for c in &internal {
            jobs.push(Job::Internal {
                corpus,
                text: &corpus.text,
                compressor: c.clone(),
                axis: None,
            });
        }
        for tool in &spec.external {
            jobs.push(Job::External { corpus, tool });
        }
    }
    let (rows, mut skipped) = execute(jobs, spec, registry)?;
    let mut redundancy = Vec::new();
    if spec.analysis {
        let summaries = pool(spec.workers).install(|| {
            corpora
                .par_iter()
                .map(|c| (c, CorpusSummary::compute(&c.id, &c.text)))
                .collect::<Vec<_>>()
        });
        for (c, s) in summaries {
            match s {
                Ok(s) => redundancy.push(s),
                // Text without enough words (a single repeated token, say).
                Err(error @ AnalysisError::EmptyCorpus) => skipped.push(Skipped {
                    corpus: c.id.clone(),
                    compressor: "analysis".into(),
                    reason: error.to_string(),
                }),
                Err(error) => {
                    return Err(BenchError::Analysis {
                        corpus: c.id.clone(),
                        error,
                    })
                }
            }
        }
    }
    Ok(Outcome {
        rows,
        skipped,
        redundancy,
        ablations: Vec::new(),
    })
}

/// One row per axis value and corpus (and internal compressor, for the chunk
/// and scale axes), with a verdict per series.
pub fn ablation_grid(
    spec: &ExperimentSpec,
    axis: Axis,
    registry: &Registry,
) -> Result<Ablation, BenchError> {
    spec.validate()?;
    let corpora = load_corpora(spec, true)?;
    let values = spec.axis_values(axis).to_vec();
    let max_scale = values.iter().copied().max().unwrap_or(1);
    let internal: Vec<InternalCompressor> = match axis {
        Axis::PredictorOrder => vec![InternalCompressor {
            id: "orderk".into(),
            config: PredictorConfig::OrderK { k: 0 },
            chunk_size: 0,
            ablate: true,
        }],
        _ => spec.internal()?.into_iter().filter(|c| c.ablate).collect(),
    };
    let mut jobs = Vec::new();
    for corpus in &corpora {
        for c in &internal {
            for &v in &values {
                let mut c = c.clone();
                let mut text: &[u8] = &corpus.text;
                match axis {
                    Axis::ChunkSize => c.chunk_size = v,
                    Axis::PredictorOrder => c.config = PredictorConfig::OrderK { k: v },
                    Axis::CorpusScale => text = scale_prefix(&corpus.text, v, max_scale),
                }
                jobs.push(Job::Internal {
                    corpus,
                    text,
                    compressor: c,
                    axis: Some((axis, v)),
                });
            }
        }
    }
    let (rows, _) = execute(jobs, spec, registry)?;
    let mut verdicts = Vec::new();
    for corpus in &corpora {
        for c in &internal {
            let points: Vec<(usize, f64)> = rows
                .iter()
                .filter(|r| r.corpus == corpus.id && r.compressor == c.id)
                .map(|r| (r.axis_value.expect("axis rows carry a value"), r.ratio))
                .collect();
            if !points.is_empty() {
                verdicts.push(Verdict::new(&corpus.id, &c.id, axis, &points));
            }
        }
    }
    Ok(Ablation {
        axis,
        rows,
        verdicts,
    })
}

/// The main experiment plus every ablation the experiment file lists.
pub fn run_all(spec: &ExperimentSpec, registry: &Registry) -> Result<Outcome, BenchError> {
    let mut outcome = run_experiment(spec, registry)?;
    for &axis in &spec.ablations {
        outcome.ablations.push(ablation_grid(spec, axis, registry)?);
    }
    Ok(outcome)
}
