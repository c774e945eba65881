//! Ontology data model: classes identified by IRI, with labels, synonyms
//! and asserted `is_a` parents.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute IRI naming an ontology class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ClassIri(String);

impl ClassIri {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() {
            return Err(Error::InvalidIri {
                iri: value,
                reason: "empty",
            });
        }
        if value.chars().any(char::is_whitespace) {
            return Err(Error::InvalidIri {
                iri: value,
                reason: "contains whitespace",
            });
        }
        Ok(ClassIri(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// See [`local_name`].
    pub fn local_name(&self) -> Result<&str> {
        local_name(self)
    }
}

impl fmt::Display for ClassIri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for ClassIri {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        ClassIri::new(value)
    }
}

impl From<ClassIri> for String {
    fn from(iri: ClassIri) -> String {
        iri.0
    }
}

/// Fragment after the first `#`, or else the last `/`-separated segment.
pub fn local_name(iri: &ClassIri) -> Result<&str> {
    let s = iri.as_str();
    let name = match s.split_once('#') {
        Some((_, fragment)) => fragment,
        None => s.rsplit('/').next().unwrap_or(""),
    };
    if name.is_empty() {
        return Err(Error::InvalidIri {
            iri: s.to_string(),
            reason: "no local name",
        });
    }
    Ok(name)
}

fn is_dash(c: char) -> bool {
    matches!(c, '_' | '-' | '\u{2010}'..='\u{2015}' | '\u{2212}')
}

/// Canonical form used to compare labels across ontologies: lowercase,
/// underscores and dashes become spaces, whitespace collapsed and trimmed.
pub fn normalize_label(raw: &str) -> String {
    let replaced: String = raw
        .chars()
        .map(|c| if is_dash(c) { ' ' } else { c })
        .collect::<String>()
        .to_lowercase();
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyClass {
    iri: ClassIri,
    label: String,
    synonyms: BTreeSet<String>,
    parents: BTreeSet<ClassIri>,
}

impl OntologyClass {
    pub fn new(iri: ClassIri, label: impl Into<String>) -> Self {
        OntologyClass {
            iri,
            label: label.into(),
            synonyms: BTreeSet::new(),
            parents: BTreeSet::new(),
        }
    }

    /// Adds a synonym; empty strings are ignored.
    pub fn with_synonym(mut self, synonym: impl Into<String>) -> Self {
        self.add_synonym(synonym);
        self
    }

    /// Adds an asserted parent; a self-reference is ignored.
    pub fn with_parent(mut self, parent: ClassIri) -> Self {
        self.add_parent(parent);
        self
    }

    pub(crate) fn add_synonym(&mut self, synonym: impl Into<String>) -> bool {
        let synonym = synonym.into();
        if synonym.is_empty() {
            return false;
        }
        self.synonyms.insert(synonym);
        true
    }

    pub(crate) fn add_parent(&mut self, parent: ClassIri) -> bool {
        if parent == self.iri {
            return false;
        }
        self.parents.insert(parent);
        true
    }

    pub fn iri(&self) -> &ClassIri {
        &self.iri
    }

    /// The label as supplied, possibly empty.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn synonyms(&self) -> &BTreeSet<String> {
        &self.synonyms
    }

    pub fn parents(&self) -> &BTreeSet<ClassIri> {
        &self.parents
    }

    /// Supplied label, or the normalized IRI local name when none was given.
    pub fn display_label(&self) -> String {
        if !self.label.trim().is_empty() {
            return self.label.clone();
        }
        self.iri
            .local_name()
            .map(normalize_label)
            .unwrap_or_else(|_| self.iri.to_string())
    }

    /// Display label followed by the synonyms.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec![self.display_label()];
        names.extend(self.synonyms.iter().cloned());
        names
    }
}

/// A problem found by [`Ontology::validate`]. Neither kind prevents use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    DanglingParent { class: ClassIri, parent: ClassIri },
    Cycle { class: ClassIri },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::DanglingParent { class, parent } => {
                write!(f, "{class}: parent {parent} is not defined in this ontology")
            }
            ValidationIssue::Cycle { class } => write!(f, "{class}: participates in an is_a cycle"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    id: String,
    classes: BTreeMap<ClassIri, OntologyClass>,
    children: BTreeMap<ClassIri, BTreeSet<ClassIri>>,
}

impl Ontology {
    /// Builds an ontology; a later class with the same IRI replaces an earlier one.
    pub fn new(id: impl Into<String>, classes: impl IntoIterator<Item = OntologyClass>) -> Result<Self> {
        let classes: BTreeMap<_, _> = classes.into_iter().map(|c| (c.iri.clone(), c)).collect();
        if classes.is_empty() {
            return Err(Error::Parse("ontology has no classes".into()));
        }
        let mut children: BTreeMap<ClassIri, BTreeSet<ClassIri>> = BTreeMap::new();
        for class in classes.values() {
            for parent in &class.parents {
                children
                    .entry(parent.clone())
                    .or_default()
                    .insert(class.iri.clone());
            }
        }
        Ok(Ontology {
            id: id.into(),
            classes,
            children,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, iri: &ClassIri) -> Option<&OntologyClass> {
        self.classes.get(iri)
    }

    pub fn class(&self, iri: &ClassIri) -> Result<&OntologyClass> {
        self.get(iri)
            .ok_or_else(|| Error::UnknownClass(iri.to_string()))
    }

    /// Classes in IRI order.
    pub fn classes(&self) -> impl Iterator<Item = &OntologyClass> {
        self.classes.values()
    }

    pub fn iris(&self) -> impl Iterator<Item = &ClassIri> {
        self.classes.keys()
    }

    /// Direct asserted children of `iri`.
    pub fn children(&self, iri: &ClassIri) -> impl Iterator<Item = &ClassIri> {
        self.children.get(iri).into_iter().flatten()
    }

    /// All transitive descendants of `iri`, excluding `iri` itself.
    pub fn subclass_closure(&self, iri: &ClassIri) -> Result<BTreeSet<ClassIri>> {
        self.class(iri)?;
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&ClassIri> = self.children(iri).collect();
        while let Some(next) = queue.pop_front() {
            if next == iri || !seen.insert(next.clone()) {
                continue;
            }
            queue.extend(self.children(next));
        }
        Ok(seen)
    }

    /// All transitive ancestors of `iri` reachable through defined classes.
    pub fn superclass_closure(&self, iri: &ClassIri) -> Result<BTreeSet<ClassIri>> {
        let start = self.class(iri)?;
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&ClassIri> = start.parents.iter().collect();
        while let Some(next) = queue.pop_front() {
            if !seen.insert(next.clone()) {
                continue;
            }
            if let Some(class) = self.classes.get(next) {
                queue.extend(class.parents.iter());
            }
        }
        seen.remove(iri);
        Ok(seen)
    }

    /// Reports dangling parent references and classes on is_a cycles.
    pub fn validate(&self) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        for class in self.classes.values() {
            for parent in &class.parents {
                if !self.classes.contains_key(parent) {
                    issues.push(ValidationIssue::DanglingParent {
                        class: class.iri.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }
        for iri in self.classes.keys() {
            let on_cycle = self
                .children(iri)
                .any(|child| child == iri || self.reaches_down(child, iri));
            if on_cycle {
                issues.push(ValidationIssue::Cycle { class: iri.clone() });
            }
        }
        issues
    }

    fn reaches_down(&self, from: &ClassIri, target: &ClassIri) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(next) = stack.pop() {
            if next == target {
                return true;
            }
            if seen.insert(next) {
                stack.extend(self.children(next));
            }
        }
        false
    }
}
