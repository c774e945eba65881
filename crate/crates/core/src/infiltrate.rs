//! Prompt infiltration: prompt tokens are matched against the subsumption
//! dictionary and the mapped concept labels are appended to the prompt.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::subsume::SubsumptionDictionary;

pub const DEFAULT_MAX_APPEND_TOTAL: usize = 6;

const SUFFIX_OPEN: &str = "(related: ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPrompt {
    pub tokens: Vec<String>,
    pub original: String,
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(prompt: &str) -> TokenizedPrompt {
    let tokens = prompt
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    TokenizedPrompt {
        tokens,
        original: prompt.to_string(),
    }
}

pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppendMode {
    /// `<prompt> (related: a, b)`
    #[default]
    Suffix,
    /// `<prompt> a b`
    Bare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfiltrateOptions {
    pub max_append_total: usize,
    /// Also match n-grams within edit distance 1 of a key (keys of 4+ chars).
    pub fuzzy: bool,
    pub mode: AppendMode,
}

impl Default for InfiltrateOptions {
    fn default() -> Self {
        InfiltrateOptions {
            max_append_total: DEFAULT_MAX_APPEND_TOTAL,
            fuzzy: false,
            mode: AppendMode::Suffix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedPrompt {
    pub text: String,
    pub appended_terms: Vec<String>,
    pub matched_keys: Vec<String>,
    /// Dictionary key each appended term came from, parallel to `appended_terms`.
    pub term_sources: Vec<String>,
}

impl AugmentedPrompt {
    /// The normalized prompt with nothing appended.
    pub fn unchanged(prompt: &str) -> Self {
        AugmentedPrompt {
            text: normalize_whitespace(prompt),
            appended_terms: Vec::new(),
            matched_keys: Vec::new(),
            term_sources: Vec::new(),
        }
    }
}

/// Splits a normalized prompt into its question and any trailing
/// `(related: …)` groups.
fn split_suffix(normalized: &str) -> (&str, &str) {
    let mut question = normalized;
    while question.ends_with(')') {
        match question.rfind(SUFFIX_OPEN) {
            Some(0) => question = "",
            Some(pos) if question[..pos].ends_with(' ') => question = question[..pos].trim_end(),
            _ => break,
        }
    }
    (question, normalized[question.len()..].trim_start())
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Longest-first n-gram matching of `tokens` against dictionary keys; every
/// token joins at most one match. Returns `(position, key)` in prompt order.
fn match_keys(tokens: &[String], dict: &SubsumptionDictionary, fuzzy: bool) -> Vec<(usize, String)> {
    let mut by_len: BTreeMap<usize, BTreeMap<Vec<String>, &str>> = BTreeMap::new();
    for key in dict.keys() {
        let key_tokens = tokenize(key).tokens;
        if !key_tokens.is_empty() {
            by_len
                .entry(key_tokens.len())
                .or_default()
                .entry(key_tokens)
                .or_insert(key);
        }
    }
    let mut consumed = vec![false; tokens.len()];
    let mut matches = Vec::new();
    for (&n, keys) in by_len.iter().rev() {
        if n > tokens.len() {
            continue;
        }
        for start in 0..=tokens.len() - n {
            if consumed[start..start + n].iter().any(|c| *c) {
                continue;
            }
            let window = &tokens[start..start + n];
            let hit = keys.get(window).copied().or_else(|| {
                if !fuzzy {
                    return None;
                }
                let joined = window.join(" ");
                keys.iter()
                    .filter(|(_, key)| key.chars().count() >= 4)
                    .find(|(kt, _)| strsim::levenshtein(&joined, &kt.join(" ")) <= 1)
                    .map(|(_, key)| *key)
            });
            if let Some(key) = hit {
                consumed[start..start + n].iter_mut().for_each(|c| *c = true);
                matches.push((start, key.to_string()));
            }
        }
    }
    matches.sort();
    matches
}

/// Appends the dictionary labels of every concept mentioned in `prompt`.
///
/// Terms already present in the question are skipped. Terms already listed
/// in an existing `(related: …)` suffix count against `max_append_total`
/// but are not repeated, so infiltrating an augmented prompt adds nothing.
pub fn infiltrate(prompt: &str, dict: &SubsumptionDictionary, options: &InfiltrateOptions) -> AugmentedPrompt {
    let normalized = normalize_whitespace(prompt);
    let (question, suffix) = split_suffix(&normalized);
    let question_tokens = tokenize(question).tokens;
    let suffix_tokens = tokenize(suffix).tokens;

    let mut matched_keys: Vec<String> = Vec::new();
    for (_, key) in match_keys(&question_tokens, dict, options.fuzzy) {
        if !matched_keys.contains(&key) {
            matched_keys.push(key);
        }
    }

    let mut appended_terms = Vec::new();
    let mut term_sources = Vec::new();
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut budget = options.max_append_total;
    'keys: for key in &matched_keys {
        for term in dict.get(key).unwrap_or_default() {
            if budget == 0 {
                break 'keys;
            }
            let term_tokens = tokenize(term).tokens;
            if term_tokens.is_empty() || !seen.insert(term_tokens.clone()) {
                continue;
            }
            if contains_run(&question_tokens, &term_tokens) {
                continue;
            }
            budget -= 1;
            if contains_run(&suffix_tokens, &term_tokens) {
                continue;
            }
            appended_terms.push(term.clone());
            term_sources.push(key.clone());
        }
    }

    let text = if appended_terms.is_empty() {
        normalized
    } else {
        match options.mode {
            AppendMode::Suffix => format!("{normalized} {SUFFIX_OPEN}{})", appended_terms.join(", ")),
            AppendMode::Bare => format!("{normalized} {}", appended_terms.join(" ")),
        }
    };
    AugmentedPrompt {
        text,
        appended_terms,
        matched_keys,
        term_sources,
    }
}
