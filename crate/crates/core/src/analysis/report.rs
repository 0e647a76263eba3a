//! Line-delimited records and a human-readable redundancy table.

use serde::{Deserialize, Serialize};

use super::{
    entropy_report, mutual_information, ngram_profile, AnalysisError, EntropyReport, Granularity,
    MutualInfoReport, NGramProfile,
};

/// Stamped on every record so readers can reject formats they do not know.
pub const FORMAT_VERSION: &str = "ppress-analysis/1";

/// How words are cut, stated in every report.
pub const WORD_TOKENIZATION: &str = "unicode-whitespace split, punctuation attached";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Ngram {
        format: String,
        corpus: String,
        word_tokenization: String,
        #[serde(flatten)]
        profile: NGramProfile,
    },
    Entropy {
        format: String,
        corpus: String,
        word_tokenization: String,
        #[serde(flatten)]
        report: EntropyReport,
    },
    MutualInfo {
        format: String,
        corpus: String,
        word_tokenization: String,
        #[serde(flatten)]
        report: MutualInfoReport,
    },
}

impl Record {
    pub fn ngram(corpus: &str, profile: NGramProfile) -> Self {
        Record::Ngram {
            format: FORMAT_VERSION.into(),
            corpus: corpus.into(),
            word_tokenization: WORD_TOKENIZATION.into(),
            profile,
        }
    }

    pub fn entropy(corpus: &str, report: EntropyReport) -> Self {
        Record::Entropy {
            format: FORMAT_VERSION.into(),
            corpus: corpus.into(),
            word_tokenization: WORD_TOKENIZATION.into(),
            report,
        }
    }

    pub fn mutual_info(corpus: &str, report: MutualInfoReport) -> Self {
        Record::MutualInfo {
            format: FORMAT_VERSION.into(),
            corpus: corpus.into(),
            word_tokenization: WORD_TOKENIZATION.into(),
            report,
        }
    }
}

pub fn to_jsonl(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// One row of the redundancy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub corpus: String,
    pub bytes: u64,
    /// Top-10 mass for n = 1..=4, in percent.
    pub top10_mass: [f64; 4],
    pub char_e: EntropyReport,
    pub subword_e: EntropyReport,
    pub word_e: EntropyReport,
    pub mi: MutualInfoReport,
}

impl CorpusSummary {
    pub fn compute(corpus: &str, text: &[u8]) -> Result<Self, AnalysisError> {
        let mut top10_mass = [0.0; 4];
        for (n, slot) in top10_mass.iter_mut().enumerate() {
            *slot = ngram_profile(text, n + 1)?.top10_mass_percent;
        }
        Ok(CorpusSummary {
            corpus: corpus.into(),
            bytes: text.len() as u64,
            top10_mass,
            char_e: entropy_report(text, Granularity::Char)?,
            subword_e: entropy_report(text, Granularity::Subword)?,
            word_e: entropy_report(text, Granularity::Word)?,
            mi: mutual_information(text)?,
        })
    }
}

/// Markdown table with one row per corpus. Entropies are bits per byte.
pub fn summary_table(rows: &[CorpusSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<!-- {FORMAT_VERSION}; words: {WORD_TOKENIZATION} -->\n"
    ));
    out.push_str("| corpus | bytes | top10 1g % | top10 2g % | top10 3g % | top10 4g % | Char-E | BPE-E | Word-E | MI |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |\n",
            r.corpus,
            r.bytes,
            r.top10_mass[0],
            r.top10_mass[1],
            r.top10_mass[2],
            r.top10_mass[3],
            r.char_e.h_byte,
            r.subword_e.h_byte,
            r.word_e.h_byte,
            r.mi.mi_bits,
        ));
    }
    out
}
