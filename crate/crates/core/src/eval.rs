//! Similarity measures and the hallucination index.
//!
//! Contextual similarity compares a response with the prompt, factual
//! accuracy compares it with the ground-truth text, and the hallucination
//! index is the mean of the two. Each is reported under three measures:
//! cosine similarity (as a percentage), dot product and Euclidean distance.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ragstore::{EmbeddingProvider, EmbeddingVector};

fn check_dims(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    Ok(())
}

pub fn dot_product(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    check_dims(u, v)?;
    Ok(u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum())
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    let dot = dot_product(u, v)?;
    let nu = dot_product(u, u)?.sqrt();
    let nv = dot_product(v, v)?.sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn euclidean_distance(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    check_dims(u, v)?;
    Ok(u.values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// The three measures for one comparison; cosine is scaled by 100.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub cosine_pct: f64,
    pub dot: f64,
    pub euclidean: f64,
}

impl SimilarityReport {
    fn map2(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        SimilarityReport {
            cosine_pct: f(self.cosine_pct, other.cosine_pct),
            dot: f(self.dot, other.dot),
            euclidean: f(self.euclidean, other.euclidean),
        }
    }

    /// Component-wise arithmetic mean; `None` for an empty input.
    pub fn mean<'a>(reports: impl IntoIterator<Item = &'a SimilarityReport>) -> Option<Self> {
        let mut n = 0usize;
        let sum = reports.into_iter().fold(SimilarityReport::default(), |acc, r| {
            n += 1;
            acc.map2(*r, |a, b| a + b)
        });
        (n > 0).then(|| {
            let n = n as f64;
            SimilarityReport {
                cosine_pct: sum.cosine_pct / n,
                dot: sum.dot / n,
                euclidean: sum.euclidean / n,
            }
        })
    }
}

pub fn similarity_report(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<SimilarityReport> {
    Ok(SimilarityReport {
        cosine_pct: cosine_similarity(u, v)? * 100.0,
        dot: dot_product(u, v)?,
        euclidean: euclidean_distance(u, v)?,
    })
}

/// Mean of contextual similarity and factual accuracy, measure by measure.
pub fn hallucination_index(contextual: &SimilarityReport, factual: &SimilarityReport) -> SimilarityReport {
    contextual.map2(*factual, |c, f| (c + f) / 2.0)
}

/// Percentage change of `with_value` relative to `without_value`.
pub fn relative_change(with_value: f64, without_value: f64) -> Result<f64> {
    if without_value == 0.0 {
        return Err(Error::InvalidArgument("relative change against zero".into()));
    }
    Ok(100.0 * (with_value - without_value) / without_value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented_prompt: Option<String>,
    pub response: String,
    pub ground_truth: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HallucinationReport {
    pub contextual: SimilarityReport,
    pub factual: SimilarityReport,
    pub index: SimilarityReport,
}

impl HallucinationReport {
    pub fn new(contextual: SimilarityReport, factual: SimilarityReport) -> Self {
        HallucinationReport {
            contextual,
            factual,
            index: hallucination_index(&contextual, &factual),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScores {
    pub report: HallucinationReport,
    /// Response against the augmented prompt, when the record has one.
    pub contextual_augmented: Option<SimilarityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub records: usize,
    pub report: HallucinationReport,
    pub contextual_augmented: Option<SimilarityReport>,
}

fn embed_one(embedder: &dyn EmbeddingProvider, text: &str) -> Result<EmbeddingVector> {
    embedder
        .embed(&[text.to_string()])?
        .pop()
        .ok_or_else(|| Error::Provider(crate::error::ProviderError::Malformed("empty embedding batch".into())))
}

/// Scores one record: response against prompt (contextual) and against the
/// ground truth (factual).
pub fn score_record(record: &EvalRecord, embedder: &dyn EmbeddingProvider) -> Result<RecordScores> {
    if record.prompt.trim().is_empty() || record.ground_truth.trim().is_empty() {
        return Err(Error::InvalidArgument("prompt and ground truth must be non-empty".into()));
    }
    let response = embed_one(embedder, &record.response)?;
    let prompt = embed_one(embedder, &record.prompt)?;
    let truth = embed_one(embedder, &record.ground_truth)?;
    let contextual_augmented = match &record.augmented_prompt {
        Some(p) => Some(similarity_report(&response, &embed_one(embedder, p)?)?),
        None => None,
    };
    Ok(RecordScores {
        report: HallucinationReport::new(
            similarity_report(&response, &prompt)?,
            similarity_report(&response, &truth)?,
        ),
        contextual_augmented,
    })
}

pub fn evaluate_condition(
    records: &[EvalRecord],
    embedder: &dyn EmbeddingProvider,
) -> Result<(Vec<RecordScores>, ConditionSummary)> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to evaluate".into()));
    }
    let scores = records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            score_record(r, embedder).map_err(|e| Error::Record {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let contextual = SimilarityReport::mean(scores.iter().map(|s| &s.report.contextual)).unwrap();
    let factual = SimilarityReport::mean(scores.iter().map(|s| &s.report.factual)).unwrap();
    let augmented: Vec<_> = scores.iter().filter_map(|s| s.contextual_augmented.as_ref()).collect();
    let contextual_augmented = if augmented.len() == scores.len() {
        SimilarityReport::mean(augmented)
    } else {
        None
    };
    let summary = ConditionSummary {
        records: scores.len(),
        report: HallucinationReport::new(contextual, factual),
        contextual_augmented,
    };
    Ok((scores, summary))
}

/// With- versus without-subsumption summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTables {
    pub with_subsumptions: ConditionSummary,
    pub without_subsumptions: ConditionSummary,
}

pub fn evaluate_batch(
    records_with: &[EvalRecord],
    records_without: &[EvalRecord],
    embedder: &dyn EmbeddingProvider,
) -> Result<EvaluationTables> {
    Ok(EvaluationTables {
        with_subsumptions: evaluate_condition(records_with, embedder)?.1,
        without_subsumptions: evaluate_condition(records_without, embedder)?.1,
    })
}

/// Rounds to six significant digits for display.
pub fn format_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn format_change(with: f64, without: f64) -> String {
    relative_change(with, without).map_or_else(|_| "n/a".into(), |c| format!("{c:.4}"))
}

const MEASURES: [&str; 3] = ["Cosine Similarity", "Dot Product", "Euclidean Distance"];

fn fields(r: &SimilarityReport) -> [f64; 3] {
    [r.cosine_pct, r.dot, r.euclidean]
}

impl EvaluationTables {
    /// Relative change (%) of each measure of each table, with against without.
    pub fn relative_changes(&self) -> [(String, [Option<f64>; 3]); 3] {
        let w = &self.with_subsumptions.report;
        let wo = &self.without_subsumptions.report;
        let change = |a: &SimilarityReport, b: &SimilarityReport| {
            let (fa, fb) = (fields(a), fields(b));
            [0, 1, 2].map(|i| relative_change(fa[i], fb[i]).ok())
        };
        [
            ("Contextual Similarity".into(), change(&w.contextual, &wo.contextual)),
            ("Factual Accuracy".into(), change(&w.factual, &wo.factual)),
            ("Hallucination Index".into(), change(&w.index, &wo.index)),
        ]
    }

    /// Three tab-separated tables (contextual similarity, factual accuracy,
    /// hallucination index), the augmented-prompt diagnostic, and notes.
    pub fn to_tsv(&self) -> String {
        let w = &self.with_subsumptions;
        let wo = &self.without_subsumptions;
        let mut out = String::new();
        let mut table = |title: &str, with: Option<&SimilarityReport>, without: &SimilarityReport| {
            let _ = writeln!(
                out,
                "{title}\twith subsumptions (s)\twithout subsumptions\trelative change (%)"
            );
            for (i, measure) in MEASURES.iter().enumerate() {
                let b = fields(without)[i];
                match with {
                    Some(with) => {
                        let a = fields(with)[i];
                        let _ = writeln!(
                            out,
                            "{measure}\t{}\t{}\t{}",
                            format_significant(a),
                            format_significant(b),
                            format_change(a, b)
                        );
                    }
                    None => {
                        let _ = writeln!(out, "{measure}\t-\t{}\t-", format_significant(b));
                    }
                }
            }
            out.push('\n');
        };
        table("Contextual Similarity", Some(&w.report.contextual), &wo.report.contextual);
        table("Factual Accuracy", Some(&w.report.factual), &wo.report.factual);
        table("Hallucination Index", Some(&w.report.index), &wo.report.index);
        table(
            "Contextual Similarity (augmented prompt)",
            w.contextual_augmented.as_ref(),
            &wo.report.contextual,
        );
        let _ = writeln!(out, "# records\twith={}\twithout={}", w.records, wo.records);
        let contextual = &self.relative_changes()[0].1;
        let shown: Vec<String> = contextual
            .iter()
            .zip(MEASURES)
            .map(|(c, m)| match c {
                Some(c) => format!("{m} {c:+.4}%"),
                None => format!("{m} n/a"),
            })
            .collect();
        let _ = writeln!(
            out,
            "# note: contextual similarity change differs by measure ({}); no single figure summarizes it",
            shown.join(", ")
        );
        out
    }
}
