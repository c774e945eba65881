//! Subsumption candidates derived from equivalence mappings.
//!
//! For an accepted equivalence `c1 ≡ c2`, every descendant `d` of `c2` in the
//! target ontology yields a positive pair `(c1, d)`. Negatives pair `c1` with
//! target classes drawn at random (seeded) outside the positive set.
//! Pairs are then scored and those at or above the threshold are compiled
//! into a label dictionary for prompt infiltration.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{score_concurrently, EquivalenceMapping, SynonymyScorer};
use crate::error::{Error, Result};
use crate::model::{normalize_label, ClassIri, Ontology};

pub const DEFAULT_SUBSUMPTION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NEGATIVES_PER_POSITIVE: usize = 1;
pub const DEFAULT_MAX_PER_ANCHOR: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

/// `anchor` is a source class `c1`; `candidate` a target class related to it.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsumptionPair {
    pub anchor: ClassIri,
    pub candidate: ClassIri,
    pub polarity: Polarity,
    pub score: Option<f64>,
}

/// Every `(c1, d)` with `c1 ≡ c2` accepted and `d` a descendant of `c2`.
pub fn positive_pairs(
    source: &Ontology,
    target: &Ontology,
    equivalences: &[EquivalenceMapping],
) -> Result<BTreeSet<(ClassIri, ClassIri)>> {
    let mut positives = BTreeSet::new();
    for mapping in equivalences.iter().filter(|m| m.accepted) {
        source.class(&mapping.pair.source)?;
        for d in target.subclass_closure(&mapping.pair.target)? {
            positives.insert((mapping.pair.source.clone(), d));
        }
    }
    Ok(positives)
}

/// Positives in `(anchor, candidate)` order, followed by
/// `negatives_per_positive` sampled negatives for each positive in turn.
/// The output depends only on the inputs and `seed`.
pub fn build_subsumption_corpus(
    source: &Ontology,
    target: &Ontology,
    equivalences: &[EquivalenceMapping],
    negatives_per_positive: usize,
    seed: u64,
) -> Result<Vec<SubsumptionPair>> {
    if negatives_per_positive > 0 && target.len() < 2 {
        return Err(Error::InvalidArgument(
            "negative sampling needs a target ontology with at least 2 classes".into(),
        ));
    }
    let positives = positive_pairs(source, target, equivalences)?;
    let mut corpus: Vec<SubsumptionPair> = positives
        .iter()
        .map(|(anchor, candidate)| SubsumptionPair {
            anchor: anchor.clone(),
            candidate: candidate.clone(),
            polarity: Polarity::Positive,
            score: None,
        })
        .collect();
    if negatives_per_positive == 0 || positives.is_empty() {
        return Ok(corpus);
    }

    let pool: Vec<&ClassIri> = target.iris().collect();
    let mut per_anchor: BTreeMap<&ClassIri, usize> = BTreeMap::new();
    for (anchor, _) in &positives {
        *per_anchor.entry(anchor).or_default() += 1;
    }
    if let Some((anchor, _)) = per_anchor.iter().find(|(_, n)| **n >= pool.len()) {
        return Err(Error::InvalidArgument(format!(
            "every target class is a positive for {anchor}; no negatives can be drawn"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (anchor, _) in &positives {
        for _ in 0..negatives_per_positive {
            let negative = loop {
                let pick = pool[rng.random_range(0..pool.len())];
                if !positives.contains(&(anchor.clone(), pick.clone())) {
                    break pick;
                }
            };
            corpus.push(SubsumptionPair {
                anchor: anchor.clone(),
                candidate: negative.clone(),
                polarity: Polarity::Negative,
                score: None,
            });
        }
    }
    Ok(corpus)
}

/// Scores every pair on (anchor class, candidate class).
pub fn score_subsumptions(
    pairs: &[SubsumptionPair],
    source: &Ontology,
    target: &Ontology,
    scorer: &dyn SynonymyScorer,
) -> Result<Vec<SubsumptionPair>> {
    let scores = score_concurrently(pairs, scorer, |p| {
        Ok((source.class(&p.anchor)?, target.class(&p.candidate)?))
    })?;
    Ok(pairs
        .iter()
        .zip(scores)
        .map(|(p, score)| SubsumptionPair {
            score: Some(score),
            ..p.clone()
        })
        .collect())
}

/// Pairs whose score is at least `threshold`, carrying their scores.
pub fn predict_subsumptions(
    pairs: &[SubsumptionPair],
    source: &Ontology,
    target: &Ontology,
    scorer: &dyn SynonymyScorer,
    threshold: f64,
) -> Result<Vec<SubsumptionPair>> {
    accept_scored(&score_subsumptions(pairs, source, target, scorer)?, threshold)
}

/// Already-scored pairs at or above `threshold`. Unscored pairs are an error.
pub fn accept_scored(scored: &[SubsumptionPair], threshold: f64) -> Result<Vec<SubsumptionPair>> {
    if threshold.is_nan() {
        return Err(Error::InvalidArgument("threshold is NaN".into()));
    }
    let mut accepted = Vec::new();
    for p in scored {
        let score = p.score.ok_or_else(|| {
            Error::InvalidArgument(format!("pair {} -> {} has no score", p.anchor, p.candidate))
        })?;
        if score >= threshold {
            accepted.push(p.clone());
        }
    }
    Ok(accepted)
}

/// Normalized source label → display labels of related target classes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsumptionDictionary {
    entries: BTreeMap<String, Vec<String>>,
}

impl SubsumptionDictionary {
    /// Keys are normalized; entries sharing a key are merged in order and
    /// labels deduplicated. Empty keys are dropped.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, Vec<String>)>) -> Self {
        let mut merged: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (key, labels) in entries {
            let key = normalize_label(&key);
            if key.is_empty() {
                continue;
            }
            let list = merged.entry(key).or_default();
            for label in labels {
                if !label.trim().is_empty() && !list.contains(&label) {
                    list.push(label);
                }
            }
        }
        SubsumptionDictionary { entries: merged }
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pretty JSON object with sorted keys.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("dictionary JSON is always serializable");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        Ok(Self::from_entries(raw))
    }
}

/// Groups accepted pairs by the anchor's normalized label. Each list holds
/// candidate display labels, best score first (ties by label), without
/// duplicates, cut to `max_per_anchor`.
pub fn build_dictionary(
    accepted: &[SubsumptionPair],
    source: &Ontology,
    target: &Ontology,
    max_per_anchor: usize,
) -> Result<SubsumptionDictionary> {
    let mut best: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for pair in accepted {
        let key = normalize_label(&source.class(&pair.anchor)?.display_label());
        let label = target.class(&pair.candidate)?.display_label();
        if key.is_empty() {
            continue;
        }
        let score = pair.score.unwrap_or(0.0);
        let slot = best.entry(key).or_default().entry(label).or_insert(f64::NEG_INFINITY);
        *slot = slot.max(score);
    }
    let entries = best.into_iter().map(|(key, labels)| {
        let mut ranked: Vec<(String, f64)> = labels.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_per_anchor);
        (key, ranked.into_iter().map(|(l, _)| l).collect())
    });
    Ok(SubsumptionDictionary::from_entries(entries))
}

pub const CORPUS_HEADER: &str = "anchor_iri\tcandidate_iri\tpolarity\tscore";
pub const SUBSUMPTIONS_HEADER: &str = "anchor_iri\tcandidate_iri\tscore\trelation";

pub fn write_corpus_tsv(pairs: &[SubsumptionPair]) -> String {
    let mut out = format!("{CORPUS_HEADER}\n");
    for p in pairs {
        let score = p.score.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!("{}\t{}\t{}\t{score}\n", p.anchor, p.candidate, p.polarity.as_str()));
    }
    out
}

pub fn read_corpus_tsv(text: &str) -> Result<Vec<SubsumptionPair>> {
    parse_rows(text, "anchor_iri", |cols, bad| {
        let polarity = match cols[2] {
            "positive" => Polarity::Positive,
            "negative" => Polarity::Negative,
            _ => return Err(bad("polarity must be positive or negative")),
        };
        let score = match cols[3] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("score is not a number"))?),
        };
        Ok(SubsumptionPair {
            anchor: ClassIri::new(cols[0])?,
            candidate: ClassIri::new(cols[1])?,
            polarity,
            score,
        })
    })
}

/// Accepted subsumptions; `SUBSUMED_BY` reads "candidate is subsumed by anchor".
pub fn write_subsumptions_tsv(accepted: &[SubsumptionPair]) -> String {
    let mut out = format!("{SUBSUMPTIONS_HEADER}\n");
    for p in accepted {
        let score = p.score.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!("{}\t{}\t{score}\tSUBSUMED_BY\n", p.anchor, p.candidate));
    }
    out
}

/// Reads accepted subsumptions. Polarity is not recorded in this file and
/// is reported as positive.
pub fn read_subsumptions_tsv(text: &str) -> Result<Vec<SubsumptionPair>> {
    parse_rows(text, "anchor_iri", |cols, bad| {
        if cols[3] != "SUBSUMED_BY" {
            return Err(bad("relation must be SUBSUMED_BY"));
        }
        let score = match cols[2] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("score is not a number"))?),
        };
        Ok(SubsumptionPair {
            anchor: ClassIri::new(cols[0])?,
            candidate: ClassIri::new(cols[1])?,
            polarity: Polarity::Positive,
            score,
        })
    })
}

fn parse_rows<T>(
    text: &str,
    header_prefix: &str,
    row: impl Fn(&[&str], &dyn Fn(&str) -> Error) -> Result<T>,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if (idx == 0 && line.starts_with(header_prefix)) || line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", idx + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 tab-separated columns"));
        }
        out.push(row(&cols, &bad)?);
    }
    Ok(out)
}
