//! Equivalence alignment between a source and a target ontology.
//!
//! Candidate pairs come from token blocking (a shared normalized token of at
//! least three characters); each candidate is scored by a [`SynonymyScorer`]
//! and accepted when its score reaches the threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use rayon::prelude::*;

use crate::error::{Error, ProviderError, Result};
use crate::eval::cosine_similarity;
use crate::model::{normalize_label, ClassIri, Ontology, OntologyClass};
use crate::ragstore::{EmbeddingProvider, EmbeddingVector};

pub const DEFAULT_EQUIVALENCE_THRESHOLD: f64 = 0.9;
const MIN_BLOCKING_TOKEN_CHARS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassPair {
    pub source: ClassIri,
    pub target: ClassIri,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceMapping {
    pub pair: ClassPair,
    pub score: f64,
    pub accepted: bool,
}

/// Scores how likely two classes denote the same concept.
pub trait SynonymyScorer: Sync {
    fn name(&self) -> &str;

    /// A value in `[0, 1]`.
    fn score(&self, a: &OntologyClass, b: &OntologyClass) -> Result<f64, ProviderError>;

    /// Upper bound on concurrent `score` calls; `None` means unrestricted.
    fn max_in_flight(&self) -> Option<usize> {
        None
    }
}

/// Deterministic string-similarity baseline; see [`lexical_score`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl SynonymyScorer for LexicalScorer {
    fn name(&self) -> &str {
        "lexical"
    }

    fn score(&self, a: &OntologyClass, b: &OntologyClass) -> Result<f64, ProviderError> {
        Ok(lexical_score(a, b))
    }
}

/// Cosine similarity of the embedded display labels, clamped at zero.
pub struct EmbeddingScorer<P> {
    provider: P,
    max_in_flight: Option<usize>,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<P: EmbeddingProvider> EmbeddingScorer<P> {
    pub fn new(provider: P, max_in_flight: Option<usize>) -> Self {
        EmbeddingScorer {
            provider,
            max_in_flight,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn vector(&self, text: String) -> Result<EmbeddingVector, ProviderError> {
        if let Some(v) = self.cache.lock().unwrap().get(&text) {
            return Ok(v.clone());
        }
        let mut out = self.provider.embed(std::slice::from_ref(&text))?;
        let v = out
            .pop()
            .ok_or_else(|| ProviderError::Malformed("empty embedding batch".into()))?;
        self.cache.lock().unwrap().insert(text, v.clone());
        Ok(v)
    }
}

impl<P: EmbeddingProvider> SynonymyScorer for EmbeddingScorer<P> {
    fn name(&self) -> &str {
        "embedding"
    }

    fn score(&self, a: &OntologyClass, b: &OntologyClass) -> Result<f64, ProviderError> {
        let va = self.vector(normalize_label(&a.display_label()))?;
        let vb = self.vector(normalize_label(&b.display_label()))?;
        match cosine_similarity(&va, &vb) {
            Ok(c) => Ok(c.clamp(0.0, 1.0)),
            Err(Error::ZeroVector) => Ok(0.0),
            Err(e) => Err(ProviderError::Failed(e.to_string())),
        }
    }

    fn max_in_flight(&self) -> Option<usize> {
        self.max_in_flight
    }
}

fn normalized_names(class: &OntologyClass) -> BTreeSet<String> {
    class
        .names()
        .iter()
        .map(|n| normalize_label(n))
        .filter(|n| !n.is_empty())
        .collect()
}

fn blocking_tokens(class: &OntologyClass) -> BTreeSet<String> {
    normalized_names(class)
        .iter()
        .flat_map(|n| {
            n.split(|c: char| !c.is_alphanumeric())
                .filter(|t| t.chars().count() >= MIN_BLOCKING_TOKEN_CHARS)
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Pairs whose names share at least one token of three or more characters,
/// ordered by source IRI then target IRI.
pub fn candidate_pairs(source: &Ontology, target: &Ontology) -> Vec<ClassPair> {
    let mut index: BTreeMap<String, BTreeSet<&ClassIri>> = BTreeMap::new();
    for class in target.classes() {
        for token in blocking_tokens(class) {
            index.entry(token).or_default().insert(class.iri());
        }
    }
    let mut pairs = Vec::new();
    for class in source.classes() {
        let targets: BTreeSet<&ClassIri> = blocking_tokens(class)
            .iter()
            .filter_map(|t| index.get(t))
            .flatten()
            .copied()
            .collect();
        pairs.extend(targets.into_iter().map(|t| ClassPair {
            source: class.iri().clone(),
            target: t.clone(),
        }));
    }
    pairs
}

/// Full cross product, for runs without blocking.
pub fn all_pairs(source: &Ontology, target: &Ontology) -> Vec<ClassPair> {
    source
        .iris()
        .flat_map(|s| {
            target.iris().map(move |t| ClassPair {
                source: s.clone(),
                target: t.clone(),
            })
        })
        .collect()
}

fn string_similarity(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let ta: BTreeSet<&str> = a.split_whitespace().collect();
    let tb: BTreeSet<&str> = b.split_whitespace().collect();
    let union = ta.union(&tb).count();
    let jaccard = if union == 0 {
        0.0
    } else {
        ta.intersection(&tb).count() as f64 / union as f64
    };
    let longest = a.chars().count().max(b.chars().count());
    let edit = if longest == 0 {
        0.0
    } else {
        1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
    };
    jaccard.max(edit)
}

/// Best string similarity over every (name of `a`, name of `b`) pair, where
/// names are the display label plus synonyms after normalization. Equal
/// strings score 1; otherwise the larger of token Jaccard and one minus the
/// length-normalized edit distance.
pub fn lexical_score(a: &OntologyClass, b: &OntologyClass) -> f64 {
    let names_b = normalized_names(b);
    normalized_names(a)
        .iter()
        .flat_map(|x| names_b.iter().map(move |y| string_similarity(x, y)))
        .fold(0.0, f64::max)
}

/// Runs `scorer` over `items` in a pool bounded by the scorer's in-flight
/// limit, checking that every score lies in `[0, 1]`. Results keep input order.
pub(crate) fn score_concurrently<'o, T: Sync>(
    items: &[T],
    scorer: &dyn SynonymyScorer,
    classes: impl Fn(&T) -> Result<(&'o OntologyClass, &'o OntologyClass)> + Sync,
) -> Result<Vec<f64>> {
    let workers = scorer
        .max_in_flight()
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start scoring pool: {e}")))?;
    pool.install(|| {
        items
            .par_iter()
            .map(|item| {
                let (a, b) = classes(item)?;
                let fail = |message: String| Error::Scorer {
                    scorer: scorer.name().to_string(),
                    source_iri: a.iri().to_string(),
                    target_iri: b.iri().to_string(),
                    message,
                };
                let score = scorer.score(a, b).map_err(|e| fail(e.to_string()))?;
                if !(0.0..=1.0).contains(&score) {
                    return Err(fail(format!("score {score} outside [0, 1]")));
                }
                Ok(score)
            })
            .collect()
    })
}

/// Scores the blocked candidate pairs and flags those at or above `threshold`.
pub fn align(
    source: &Ontology,
    target: &Ontology,
    scorer: &dyn SynonymyScorer,
    threshold: f64,
) -> Result<Vec<EquivalenceMapping>> {
    align_pairs(source, target, &candidate_pairs(source, target), scorer, threshold)
}

/// Scores the given pairs; output is sorted by pair.
pub fn align_pairs(
    source: &Ontology,
    target: &Ontology,
    pairs: &[ClassPair],
    scorer: &dyn SynonymyScorer,
    threshold: f64,
) -> Result<Vec<EquivalenceMapping>> {
    if threshold.is_nan() {
        return Err(Error::InvalidArgument("threshold is NaN".into()));
    }
    let scores = score_concurrently(pairs, scorer, |p| {
        Ok((source.class(&p.source)?, target.class(&p.target)?))
    })?;
    let mut mappings: Vec<_> = pairs
        .iter()
        .zip(scores)
        .map(|(pair, score)| EquivalenceMapping {
            pair: pair.clone(),
            score,
            accepted: score >= threshold,
        })
        .collect();
    mappings.sort_by(|a, b| a.pair.cmp(&b.pair));
    Ok(mappings)
}

pub const MAPPINGS_HEADER: &str = "source_iri\ttarget_iri\tscore\trelation";

/// TSV of the accepted mappings, one header line, sorted by pair.
pub fn write_mappings_tsv(mappings: &[EquivalenceMapping]) -> String {
    let mut accepted: Vec<_> = mappings.iter().filter(|m| m.accepted).collect();
    accepted.sort_by(|a, b| a.pair.cmp(&b.pair));
    let mut out = String::from(MAPPINGS_HEADER);
    out.push('\n');
    for m in accepted {
        out.push_str(&format!("{}\t{}\t{}\tEQUIV\n", m.pair.source, m.pair.target, m.score));
    }
    out
}

/// Reads a mappings TSV; every row is treated as accepted.
pub fn read_mappings_tsv(text: &str) -> Result<Vec<EquivalenceMapping>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 && line.starts_with("source_iri") || line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("mappings line {}: {what}", idx + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 tab-separated columns"));
        }
        if cols[3] != "EQUIV" {
            return Err(bad("relation must be EQUIV"));
        }
        let score: f64 = cols[2].parse().map_err(|_| bad("score is not a number"))?;
        out.push(EquivalenceMapping {
            pair: ClassPair {
                source: ClassIri::new(cols[0])?,
                target: ClassIri::new(cols[1])?,
            },
            score,
            accepted: true,
        });
    }
    Ok(out)
}
