//! Rendering of bench outcomes. Output depends only on the rows passed in.

use std::fmt::Write as _;
use std::path::Path;

use super::{Ablation, BenchError, Outcome, ResultRow, RowKind};
use crate::analysis::summary_table;

pub const REPORT_FORMAT: &str = "ppress-bench/1";

pub fn to_jsonl(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("rows serialize"));
        out.push('\n');
    }
    out
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

fn matrix(out: &mut String, rows: &[&ResultRow], value: impl Fn(&ResultRow) -> f64) {
    let corpora = first_seen(rows.iter().map(|r| r.corpus.as_str()));
    let compressors = first_seen(rows.iter().map(|r| r.compressor.as_str()));
    out.push_str("| compressor |");
    for c in &corpora {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(corpora.len()));
    out.push('\n');
    for m in &compressors {
        let _ = write!(out, "| {m} |");
        for c in &corpora {
            match rows.iter().find(|r| r.corpus == *c && r.compressor == *m) {
                Some(r) => {
                    let _ = write!(out, " {:.2} |", value(r));
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
}

pub fn render_report(outcome: &Outcome) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Compression report\n\n<!-- {REPORT_FORMAT} -->\n");
    out.push_str("Ratio is original bytes over compressed bytes.\n");

    let verified: Vec<&ResultRow> = outcome
        .rows
        .iter()
        .filter(|r| r.lossless_verified)
        .collect();
    let internal: Vec<&ResultRow> = verified
        .iter()
        .copied()
        .filter(|r| r.kind == RowKind::Internal)
        .collect();
    let external: Vec<&ResultRow> = verified
        .iter()
        .copied()
        .filter(|r| r.kind == RowKind::External)
        .collect();

    if !internal.is_empty() {
        out.push_str("\n## Predictor-driven coding, with header\n\n");
        matrix(&mut out, &internal, |r| r.ratio);
        out.push_str("\n## Predictor-driven coding, payload only\n\n");
        matrix(&mut out, &internal, |r| r.payload_ratio);
    }
    if !external.is_empty() {
        out.push_str("\n## Baseline compressors\n\n");
        matrix(&mut out, &external, |r| r.ratio);
    }
    if !outcome.redundancy.is_empty() {
        out.push_str("\n## Redundancy\n\n");
        out.push_str(&summary_table(&outcome.redundancy));
    }

    out.push_str("\n## Rows\n\n");
    out.push_str("| corpus | compressor | original | compressed | payload | ratio | payload ratio | seconds | deterministic |\n");
    out.push_str("|---|---|---:|---:|---:|---:|---:|---:|---|\n");
    for r in &verified {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {:.2} | {:.2} | {:.3} | {} |",
            r.corpus,
            r.compressor,
            r.original_bytes,
            r.compressed_bytes,
            r.payload_bytes,
            r.ratio,
            r.payload_ratio,
            r.seconds,
            match (r.kind, r.deterministic) {
                (RowKind::External, _) => "n/a",
                (_, true) => "yes",
                (_, false) => "no",
            },
        );
    }

    out.push_str("\n## Skipped\n\n");
    if outcome.skipped.is_empty() {
        out.push_str("(none)\n");
    }
    for s in &outcome.skipped {
        let _ = writeln!(out, "- {} / {}: {}", s.corpus, s.compressor, s.reason);
    }

    out.push_str("\n## Quarantine\n\n");
    let bad: Vec<&ResultRow> = outcome
        .rows
        .iter()
        .chain(outcome.ablations.iter().flat_map(|a| &a.rows))
        .filter(|r| !r.lossless_verified)
        .collect();
    if bad.is_empty() {
        out.push_str("(none)\n");
    } else {
        out.push_str("| corpus | compressor | note |\n|---|---|---|\n");
        for r in bad {
            let _ = writeln!(
                out,
                "| {} | {} | {} |",
                r.corpus,
                r.compressor,
                r.note.as_deref().unwrap_or("not verified")
            );
        }
    }
    out
}

pub fn render_ablation(ablations: &[Ablation]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Ablations\n\n<!-- {REPORT_FORMAT} -->");
    for a in ablations {
        let _ = writeln!(out, "\n## {}\n", a.axis.name());
        let mut values: Vec<usize> = a.verdicts.iter().flat_map(|v| v.values.clone()).collect();
        values.sort_unstable();
        values.dedup();
        out.push_str("| corpus | compressor |");
        for v in &values {
            let _ = write!(out, " {v} |");
        }
        out.push_str(" spread | verdict |\n|---|---|");
        out.push_str(&"---:|".repeat(values.len()));
        out.push_str("---:|---|\n");
        for v in &a.verdicts {
            let _ = write!(out, "| {} | {} |", v.corpus, v.compressor);
            for x in &values {
                match v.values.iter().position(|y| y == x) {
                    Some(i) => {
                        let _ = write!(out, " {:.2} |", v.ratios[i]);
                    }
                    None => out.push_str(" - |"),
                }
            }
            let _ = writeln!(out, " {:.1}% | {} |", v.spread * 100.0, v.summary(a.axis));
        }
    }
    out
}

/// Write `results.jsonl`, `report.md` and, when ablations ran,
/// `ablation.md` into `dir`. Files are written to temporaries and renamed.
pub fn emit_report(outcome: &Outcome, dir: &Path) -> Result<(), BenchError> {
    if outcome.rows.is_empty() && outcome.skipped.is_empty() && outcome.ablations.is_empty() {
        return Err(BenchError::NoRows);
    }
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut all: Vec<ResultRow> = outcome.rows.clone();
    all.extend(
        outcome
            .ablations
            .iter()
            .flat_map(|a| a.rows.iter().cloned()),
    );
    let mut files = vec![
        ("results.jsonl", to_jsonl(&all)),
        ("report.md", render_report(outcome)),
    ];
    if !outcome.ablations.is_empty() {
        files.push(("ablation.md", render_ablation(&outcome.ablations)));
    }
    for (name, body) in files {
        let path = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, body).map_err(|e| BenchError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| BenchError::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::Skipped;
    use super::*;

    fn row(corpus: &str, compressor: &str, kind: RowKind, verified: bool) -> ResultRow {
        ResultRow {
            corpus: corpus.into(),
            compressor: compressor.into(),
            kind,
            axis: None,
            axis_value: None,
            original_bytes: 1_000_000,
            compressed_bytes: 250_000,
            payload_bytes: 249_000,
            ratio: 4.0,
            payload_ratio: 1_000_000.0 / 249_000.0,
            seconds: 0.5,
            lossless_verified: verified,
            deterministic: kind == RowKind::Internal,
            note: (!verified).then(|| "tool crashed".to_string()),
        }
    }

    #[test]
    fn quarantine_section_always_present() {
        let o = Outcome {
            rows: vec![row("a", "k", RowKind::Internal, true)],
            skipped: vec![],
            redundancy: vec![],
            ablations: vec![],
        };
        let r = render_report(&o);
        assert!(r.contains("## Quarantine\n\n(none)\n"));
        assert!(r.contains("| k | 4.00 |"));
        assert!(r.contains("| k | 4.02 |"));
    }

    #[test]
    fn unverified_rows_only_appear_in_quarantine() {
        let o = Outcome {
            rows: vec![
                row("a", "k", RowKind::Internal, true),
                row("a", "gz", RowKind::External, false),
            ],
            skipped: vec![Skipped {
                corpus: "a".into(),
                compressor: "zstd".into(),
                reason: "zstd not found".into(),
            }],
            redundancy: vec![],
            ablations: vec![],
        };
        let r = render_report(&o);
        assert!(!r.contains("Baseline compressors"));
        assert!(r.contains("| a | gz | tool crashed |"));
        assert!(r.contains("- a / zstd: zstd not found"));
    }
}
