//! The `ppress` command: compress, decompress, analyze and bench.

pub mod args;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{CommandFactory, Parser};

use ppress::analysis::{
    entropy_report, mutual_information, ngram_profile, summary_table, to_jsonl, AnalysisError,
    CorpusSummary, Granularity, Record,
};
use ppress::bench::{emit_report, run_all, ExperimentSpec};
use ppress::container::{compress, decompress_container, Container};
use ppress::predictors::{PredictorConfig, Registry, RemoteEndpoint};

use args::{
    AnalyzeArgs, BenchArgs, Cli, Command, CompressArgs, DecompressArgs, PredictorArgs, RemoteArgs,
};
use config::FileConfig;
pub use error::{Failure, EXIT_DIGEST, EXIT_IO, EXIT_OK, EXIT_REMOTE, EXIT_TOOL, EXIT_USAGE};

/// Default suffix for containers.
pub const SUFFIX: &str = "pp";

/// The parser, for help output and introspection.
pub fn command() -> clap::Command {
    Cli::command()
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("ppress: {f}");
            f.code()
        }
    }
}

/// Flags merged with the config file.
#[derive(Debug, Clone)]
struct Settings {
    verbosity: u8,
    predictor: Option<PredictorConfig>,
    chunk: Option<usize>,
    endpoint: Option<String>,
    timeout: Option<Duration>,
}

impl Settings {
    fn say(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 1 {
            println!("{}", msg.as_ref());
        }
    }

    fn detail(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 2 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn warn(&self, msg: impl AsRef<str>) {
        eprintln!("warning: {}", msg.as_ref());
    }
}

fn parse_predictor(s: &str) -> Result<PredictorConfig, Failure> {
    s.parse().map_err(|e| Failure::Usage(format!("{e}")))
}

fn flag_predictor(p: &PredictorArgs) -> Result<Option<PredictorConfig>, Failure> {
    if let Some(s) = &p.predictor {
        return parse_predictor(s).map(Some);
    }
    if p.uniform {
        return Ok(Some(PredictorConfig::Uniform));
    }
    if let Some(k) = p.order {
        return parse_predictor(&format!("orderk:{k}")).map(Some);
    }
    if let Some(r) = &p.remote {
        return parse_predictor(&format!("remote:{r}")).map(Some);
    }
    Ok(None)
}

fn timeout(secs: f64) -> Result<Duration, Failure> {
    Duration::try_from_secs_f64(secs)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| {
            Failure::Usage(format!(
                "timeout must be a positive number of seconds, got {secs}"
            ))
        })
}

/// Validate flags, then read the config file and let it override them.
fn settings(
    cli: &Cli,
    predictor: Option<&PredictorArgs>,
    chunk: Option<usize>,
    remote: Option<&RemoteArgs>,
) -> Result<Settings, Failure> {
    let mut s = Settings {
        verbosity: if cli.quiet { 0 } else { 1 + cli.verbose },
        predictor: predictor.map(flag_predictor).transpose()?.flatten(),
        chunk,
        endpoint: remote.and_then(|r| r.endpoint.clone()),
        timeout: remote.and_then(|r| r.timeout).map(timeout).transpose()?,
    };
    if let Some(path) = &cli.config {
        let file = FileConfig::load(path)?;
        if let Some(p) = &file.predictor {
            s.predictor = Some(parse_predictor(p)?);
        }
        if file.chunk.is_some() {
            s.chunk = file.chunk;
        }
        if file.endpoint.is_some() {
            s.endpoint = file.endpoint;
        }
        if let Some(t) = file.timeout {
            s.timeout = Some(timeout(t)?);
        }
        if let Some(v) = file.verbosity {
            s.verbosity = v;
        }
    }
    Ok(s)
}

fn registry(s: &Settings) -> Registry {
    let mut reg = Registry::standard();
    let own = match &s.predictor {
        Some(PredictorConfig::Remote { endpoint, .. }) => endpoint.clone(),
        _ => None,
    };
    let address = s
        .endpoint
        .clone()
        .or(own)
        .or_else(|| reg.remote_endpoint().map(|e| e.address.clone()));
    if let Some(address) = address {
        let mut ep = RemoteEndpoint::new(address);
        if let Some(t) = s.timeout {
            ep = ep.with_timeout(t);
        }
        reg = reg.with_remote(ep);
    }
    reg
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    match &cli.command {
        Command::Compress(a) => {
            let s = settings(&cli, Some(&a.predictor), a.chunk, Some(&a.remote))?;
            cmd_compress(a, &s)
        }
        Command::Decompress(a) => {
            let s = settings(&cli, Some(&a.predictor), None, Some(&a.remote))?;
            cmd_decompress(a, &s)
        }
        Command::Analyze(a) => {
            let s = settings(&cli, None, None, None)?;
            cmd_analyze(a, &s)
        }
        Command::Bench(a) => {
            let s = settings(&cli, None, None, Some(&a.remote))?;
            cmd_bench(a, &s)
        }
    }
}

fn with_suffix(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(SUFFIX);
    PathBuf::from(name)
}

fn without_suffix(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == SUFFIX) {
        path.with_extension("")
    } else {
        let mut name = path.as_os_str().to_owned();
        name.push(".out");
        PathBuf::from(name)
    }
}

fn check_output(path: &Path, force: bool) -> Result<(), Failure> {
    if !force && path.exists() {
        return Err(Failure::Usage(format!(
            "{} exists; pass --force to replace it",
            path.display()
        )));
    }
    Ok(())
}

/// Write through a temporary file in the destination directory and rename it
/// into place, so a failure never leaves a partial file.
fn write_atomic(path: &Path, bytes: &[u8], force: bool) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".ppress-")
        .tempfile_in(dir)
        .map_err(|e| Failure::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Failure::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Failure::io(path, e))?;
    let persisted = if force {
        tmp.persist(path).map(drop)
    } else {
        tmp.persist_noclobber(path).map(drop)
    };
    persisted.map_err(|e| Failure::io(path, e.error))
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::io(path, e))
}

fn cmd_compress(a: &CompressArgs, s: &Settings) -> Result<i32, Failure> {
    let config = s
        .predictor
        .clone()
        .unwrap_or(PredictorConfig::OrderK { k: 4 });
    let chunk = s.chunk.unwrap_or(0);
    let output = a.output.clone().unwrap_or_else(|| with_suffix(&a.input));
    check_output(&output, a.force)?;
    let text = read_input(&a.input)?;
    let packed = compress(&text, &config, chunk, &registry(s))?;
    if let Some(note) = &packed.fallback {
        s.warn(note);
    }
    let bytes = packed.to_bytes();
    write_atomic(&output, &bytes, a.force)?;
    let c = &packed.container;
    s.detail(format!(
        "predictor {}, {} chunk(s), header {} bytes, payload {} bytes",
        c.header.predictor,
        c.chunks.len(),
        c.header_len(),
        c.payload_len()
    ));
    s.say(format!(
        "{}: {} -> {} bytes, ratio {:.3}",
        a.input.display(),
        text.len(),
        bytes.len(),
        ppress::container::compression_ratio(text.len() as u64, bytes.len() as u64)
    ));
    Ok(EXIT_OK)
}

/// Whether a flag names the predictor recorded in the header.
fn same_predictor(flag: &PredictorConfig, container: &Container) -> bool {
    let recorded = &container.header.predictor;
    match flag {
        PredictorConfig::Remote { model_id, .. } => {
            recorded.id == "remote" && recorded.param("model_id") == Some(model_id.as_str())
        }
        local => local.local_descriptor().as_ref() == Some(recorded),
    }
}

fn cmd_decompress(a: &DecompressArgs, s: &Settings) -> Result<i32, Failure> {
    let output = a.output.clone().unwrap_or_else(|| without_suffix(&a.input));
    check_output(&output, a.force)?;
    let bytes = read_input(&a.input)?;
    let container = Container::from_bytes(&bytes)?;
    if let Some(flag) = &s.predictor {
        if !same_predictor(flag, &container) {
            s.warn(format!(
                "ignoring predictor {flag}; the container was written with {}",
                container.header.predictor
            ));
        }
    }
    let text = decompress_container(&container, &registry(s))?;
    write_atomic(&output, &text, a.force)?;
    s.say(format!(
        "{}: {} -> {} bytes",
        a.input.display(),
        bytes.len(),
        text.len()
    ));
    Ok(EXIT_OK)
}

fn parse_orders(s: &str) -> Result<std::ops::RangeInclusive<usize>, Failure> {
    let bad = || {
        Failure::Usage(format!(
            "bad n-gram range {s:?}; expected N or A..B within 1..4"
        ))
    };
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (lo, hi.strip_prefix('=').unwrap_or(hi)),
        None => (s, s),
    };
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo < 1 || hi > 4 || lo > hi {
        return Err(bad());
    }
    Ok(lo..=hi)
}

fn parse_granularities(s: &str) -> Result<Vec<Granularity>, Failure> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.parse::<Granularity>().map_err(Failure::from))
        .collect()
}

fn collect_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in paths {
        let meta = std::fs::metadata(p).map_err(|e| Failure::io(p, e))?;
        if meta.is_dir() {
            let mut inside: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Failure::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file())
                .filter(|f| {
                    !f.file_name()
                        .is_some_and(|n| n.to_string_lossy().starts_with('.'))
                })
                .collect();
            inside.sort();
            files.extend(inside);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Failure::Usage("no files to analyze".into()));
    }
    Ok(files)
}

/// A measure that needs tokens the file does not have is skipped, not fatal.
fn measured<T>(
    r: Result<T, AnalysisError>,
    s: &Settings,
    what: &str,
) -> Result<Option<T>, Failure> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e @ AnalysisError::EmptyCorpus) => {
            s.warn(format!("{what}: {e}; skipped"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_analyze(a: &AnalyzeArgs, s: &Settings) -> Result<i32, Failure> {
    let orders = a.ngram.as_deref().map(parse_orders).transpose()?;
    let granularities = a.entropy.as_deref().map(parse_granularities).transpose()?;
    let files = collect_files(&a.paths)?;
    let summary_only = orders.is_none() && granularities.is_none() && !a.mi;

    let mut summaries = Vec::new();
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for f in &files {
        let text = read_input(f)?;
        let name = f.display().to_string();
        if summary_only {
            summaries.extend(measured(CorpusSummary::compute(&name, &text), s, &name)?);
            continue;
        }
        for n in orders.clone().into_iter().flatten() {
            let Some(p) = measured(ngram_profile(&text, n), s, &format!("{name} ngram n={n}"))?
            else {
                continue;
            };
            lines.push(format!(
                "{name}\tngram n={n} total={} distinct={} top10={:.2}%",
                p.total_grams, p.distinct_grams, p.top10_mass_percent
            ));
            if s.verbosity >= 2 {
                for (gram, count) in &p.top_items {
                    lines.push(format!("{name}\t  {count}\t{}", gram.join(" ")));
                }
            }
            records.push(Record::ngram(&name, p));
        }
        for g in granularities.iter().flatten() {
            let Some(r) = measured(entropy_report(&text, *g), s, &format!("{name} entropy {g}"))?
            else {
                continue;
            };
            lines.push(format!(
                "{name}\tentropy {g} h_token={:.4} l_avg={:.4} h_byte={:.4} tokens={} distinct={}",
                r.h_token, r.l_avg, r.h_byte, r.token_count, r.distinct_tokens
            ));
            records.push(Record::entropy(&name, r));
        }
        if let Some(r) =
            a.mi.then(|| measured(mutual_information(&text), s, &format!("{name} mi")))
                .transpose()?
                .flatten()
        {
            lines.push(format!(
                "{name}\tmi bits={:.4} pairs={}",
                r.mi_bits, r.pair_count
            ));
            records.push(Record::mutual_info(&name, r));
        }
    }
    if summary_only {
        if a.json {
            for r in &summaries {
                println!("{}", serde_json::to_string(r).expect("summaries serialize"));
            }
        } else {
            print!("{}", summary_table(&summaries));
        }
    } else if a.json {
        print!("{}", to_jsonl(&records));
    } else {
        for l in lines {
            println!("{l}");
        }
    }
    Ok(EXIT_OK)
}

fn cmd_bench(a: &BenchArgs, s: &Settings) -> Result<i32, Failure> {
    let mut spec = ExperimentSpec::load(&a.spec)?;
    if let Some(w) = a.workers {
        spec.workers = w;
    }
    if a.no_ablations {
        spec.ablations.clear();
    }
    let dir = a
        .output
        .clone()
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bench-report"));
    let outcome = run_all(&spec, &registry(s))?;
    emit_report(&outcome, &dir)?;
    for skip in &outcome.skipped {
        s.say(format!(
            "skipped {} on {}: {}",
            skip.compressor, skip.corpus, skip.reason
        ));
    }
    let failures = outcome.external_failures();
    s.say(format!(
        "{} rows, {} skipped, {} quarantined; report in {}",
        outcome.rows.len()
            + outcome
                .ablations
                .iter()
                .map(|x| x.rows.len())
                .sum::<usize>(),
        outcome.skipped.len(),
        failures,
        dir.display()
    ));
    if failures > 0 {
        return Err(Failure::Tool(format!(
            "{failures} external compressor run(s) failed; see the quarantine section of {}",
            dir.join("report.md").display()
        )));
    }
    Ok(EXIT_OK)
}
