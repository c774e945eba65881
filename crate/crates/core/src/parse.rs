//! Readers for the OBO flat-file subset and the JSON interchange format,
//! plus the JSON writer.
//!
//! The OBO reader understands `[Term]` stanzas with `id`, `name`, `is_a`,
//! `synonym` and `is_obsolete` tags. Everything else is skipped silently.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassIri, Ontology, OntologyClass};

const OBO_PURL: &str = "http://purl.obolibrary.org/obo/";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    /// 1-based line number in the input.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ParseReport {
    pub ontology: Ontology,
    pub warnings: Vec<ParseWarning>,
}

/// Converts an OBO identifier such as `GO:0001` to its PURL IRI.
/// Identifiers that are already HTTP(S) IRIs are kept unchanged.
pub fn obo_id_to_iri(id: &str) -> Result<ClassIri> {
    if id.starts_with("http://") || id.starts_with("https://") {
        return ClassIri::new(id);
    }
    match id.split_once(':') {
        Some((prefix, local)) if !prefix.is_empty() && !local.is_empty() => {
            ClassIri::new(format!("{OBO_PURL}{prefix}_{local}"))
        }
        _ if !id.is_empty() && !id.contains(':') => ClassIri::new(format!("{OBO_PURL}{id}")),
        _ => Err(Error::InvalidIri {
            iri: id.to_string(),
            reason: "not an OBO identifier",
        }),
    }
}

#[derive(Default)]
struct Stanza {
    start_line: usize,
    id: Option<(usize, String)>,
    name: Option<String>,
    parents: Vec<(usize, String)>,
    synonyms: Vec<String>,
    obsolete: bool,
}

/// Strips a trailing `! comment` and `{qualifier}` block from a tag value.
fn strip_trailing(value: &str) -> &str {
    let value = value.split('!').next().unwrap_or("");
    let value = value.split('{').next().unwrap_or("");
    value.trim()
}

/// Text between the first pair of unescaped double quotes.
fn quoted_text(value: &str) -> Option<String> {
    let start = value.find('"')? + 1;
    let mut out = String::new();
    let mut chars = value[start..].chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => out.push(chars.next()?),
            '"' => return Some(out),
            c => out.push(c),
        }
    }
    None
}

pub fn parse_obo(text: &str) -> Result<ParseReport> {
    let mut warnings = Vec::new();
    let mut ontology_id = None;
    let mut stanzas = Vec::new();
    let mut current: Option<Stanza> = None;
    let mut in_term = false;
    let mut in_header = true;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('!') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            stanzas.extend(current.take());
            in_header = false;
            in_term = line == "[Term]";
            if in_term {
                current = Some(Stanza {
                    start_line: line_no,
                    ..Stanza::default()
                });
            }
            continue;
        }
        let Some((tag, value)) = line.split_once(':') else {
            continue;
        };
        let value = value.trim();
        let Some(stanza) = current.as_mut().filter(|_| in_term) else {
            if in_header && tag.trim() == "ontology" {
                ontology_id = Some(strip_trailing(value).to_string());
            }
            continue;
        };
        match tag.trim() {
            "id" => stanza.id = Some((line_no, strip_trailing(value).to_string())),
            "name" => stanza.name = Some(value.to_string()),
            "is_a" => stanza.parents.push((line_no, strip_trailing(value).to_string())),
            "synonym" => match quoted_text(value) {
                Some(s) if !s.is_empty() => stanza.synonyms.push(s),
                _ => warnings.push(ParseWarning {
                    line: line_no,
                    message: "synonym without quoted text".into(),
                }),
            },
            "is_obsolete" => stanza.obsolete = strip_trailing(value) == "true",
            _ => {}
        }
    }
    stanzas.extend(current.take());

    let mut classes: BTreeMap<ClassIri, OntologyClass> = BTreeMap::new();
    for stanza in stanzas {
        if stanza.obsolete {
            continue;
        }
        let Some((id_line, id)) = stanza.id else {
            warnings.push(ParseWarning {
                line: stanza.start_line,
                message: "[Term] stanza without id; skipped".into(),
            });
            continue;
        };
        let iri = match obo_id_to_iri(&id) {
            Ok(iri) => iri,
            Err(e) => {
                warnings.push(ParseWarning {
                    line: id_line,
                    message: format!("{e}; stanza skipped"),
                });
                continue;
            }
        };
        let mut class = OntologyClass::new(iri.clone(), stanza.name.unwrap_or_default());
        for synonym in stanza.synonyms {
            class.add_synonym(synonym);
        }
        for (line, parent) in stanza.parents {
            match obo_id_to_iri(&parent) {
                Ok(p) => {
                    if !class.add_parent(p) {
                        warnings.push(ParseWarning {
                            line,
                            message: format!("{id} is_a itself; ignored"),
                        });
                    }
                }
                Err(e) => warnings.push(ParseWarning {
                    line,
                    message: format!("{e}; is_a ignored"),
                }),
            }
        }
        if classes.insert(iri, class).is_some() {
            warnings.push(ParseWarning {
                line: id_line,
                message: format!("duplicate id {id}; later stanza wins"),
            });
        }
    }
    if classes.is_empty() {
        return Err(Error::Parse("no [Term] stanzas with a valid id".into()));
    }
    let ontology = Ontology::new(ontology_id.unwrap_or_else(|| "obo".into()), classes.into_values())?;
    Ok(ParseReport { ontology, warnings })
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonOntology {
    #[serde(default)]
    id: String,
    classes: Vec<JsonClass>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonClass {
    iri: String,
    #[serde(default)]
    label: String,
    #[serde(default)]
    synonyms: Vec<String>,
    #[serde(default)]
    parents: Vec<String>,
}

/// Line of the `nth` (0-based) `"iri"` key in `text`, 1-based.
fn line_of_iri_key(text: &str, nth: usize) -> usize {
    text.match_indices("\"iri\"")
        .nth(nth)
        .map(|(pos, _)| text[..pos].matches('\n').count() + 1)
        .unwrap_or(1)
}

pub fn parse_json_ontology(text: &str) -> Result<ParseReport> {
    let doc: JsonOntology = serde_json::from_str(text)?;
    let mut warnings = Vec::new();
    let mut classes: BTreeMap<ClassIri, OntologyClass> = BTreeMap::new();
    for (index, raw) in doc.classes.into_iter().enumerate() {
        let iri = ClassIri::new(raw.iri)?;
        let mut class = OntologyClass::new(iri.clone(), raw.label);
        for synonym in raw.synonyms {
            if !class.add_synonym(synonym) {
                warnings.push(ParseWarning {
                    line: line_of_iri_key(text, index),
                    message: format!("{iri}: empty synonym dropped"),
                });
            }
        }
        for parent in raw.parents {
            if !class.add_parent(ClassIri::new(parent)?) {
                warnings.push(ParseWarning {
                    line: line_of_iri_key(text, index),
                    message: format!("{iri}: self parent dropped"),
                });
            }
        }
        if classes.insert(iri.clone(), class).is_some() {
            warnings.push(ParseWarning {
                line: line_of_iri_key(text, index),
                message: format!("duplicate IRI {iri}; later entry wins"),
            });
        }
    }
    if classes.is_empty() {
        return Err(Error::Parse("ontology has no classes".into()));
    }
    let ontology = Ontology::new(doc.id, classes.into_values())?;
    Ok(ParseReport { ontology, warnings })
}

/// JSON interchange form with classes sorted by IRI.
pub fn serialize_ontology(ontology: &Ontology) -> String {
    let doc = JsonOntology {
        id: ontology.id().to_string(),
        classes: ontology
            .classes()
            .map(|c| JsonClass {
                iri: c.iri().to_string(),
                label: c.label().to_string(),
                synonyms: c.synonyms().iter().cloned().collect(),
                parents: c.parents().iter().map(ToString::to_string).collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("ontology JSON is always serializable");
    out.push('\n');
    out
}

/// Picks the reader from the content: JSON when the first non-blank
/// character is `{`, OBO otherwise.
pub fn parse_ontology(text: &str) -> Result<ParseReport> {
    if text.trim_start().starts_with('{') {
        parse_json_ontology(text)
    } else {
        parse_obo(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn purl(id: &str) -> ClassIri {
        obo_id_to_iri(id).unwrap()
    }

    #[test]
    fn obo_id_conversion() {
        assert_eq!(purl("GO:0001").as_str(), "http://purl.obolibrary.org/obo/GO_0001");
        assert_eq!(purl("http://x.org/a#B").as_str(), "http://x.org/a#B");
        assert!(obo_id_to_iri(":1").is_err());
        assert!(obo_id_to_iri("GO:").is_err());
    }

    #[test]
    fn single_stanza() {
        let report = parse_obo("[Term]\nid: T:1\nname: fever\nis_a: T:0 ! sign\n").unwrap();
        let o = &report.ontology;
        assert_eq!(o.len(), 1);
        let c = o.get(&purl("T:1")).unwrap();
        assert_eq!(c.label(), "fever");
        assert_eq!(c.parents().iter().collect::<Vec<_>>(), vec![&purl("T:0")]);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn obsolete_terms_are_skipped_silently() {
        let text = "[Term]\nid: T:1\nname: a\n\n[Term]\nid: T:2\nname: b\nis_obsolete: true\n";
        let report = parse_obo(text).unwrap();
        assert_eq!(report.ontology.len(), 1);
        assert!(report.ontology.get(&purl("T:2")).is_none());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn header_only_is_a_hard_error() {
        let err = parse_obo("format-version: 1.2\nontology: symp\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn missing_id_warns_and_skips() {
        let text = "ontology: t\n\n[Term]\nname: orphan\n\n[Term]\nid: T:1\nname: kept\n";
        let report = parse_obo(text).unwrap();
        assert_eq!(report.ontology.id(), "t");
        assert_eq!(report.ontology.len(), 1);
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].line, 3);
    }

    #[test]
    fn synonyms_typedefs_crlf_and_qualifiers() {
        let text = "[Term]\r\nid: T:1\r\nname: fever\r\nsynonym: \"pyrexia\" EXACT []\r\n\
                    synonym: \"high \\\"temp\\\"\" BROAD [PMID:1]\r\nis_a: T:0 {source=\"x\"} ! sign\r\n\
                    xref: FOO:1\r\n\r\n[Typedef]\r\nid: part_of\r\nname: part of\r\n";
        let report = parse_obo(text).unwrap();
        let c = report.ontology.get(&purl("T:1")).unwrap();
        let synonyms: Vec<_> = c.synonyms().iter().map(String::as_str).collect();
        assert_eq!(synonyms, vec!["high \"temp\"", "pyrexia"]);
        assert!(c.parents().contains(&purl("T:0")));
        assert_eq!(report.ontology.len(), 1);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn json_minimal_document() {
        let report = parse_json_ontology(r#"{"id":"t","classes":[{"iri":"http://x/#A","label":"a"}]}"#).unwrap();
        assert_eq!(report.ontology.len(), 1);
        assert_eq!(report.ontology.id(), "t");
    }

    #[test]
    fn json_duplicate_iri_last_wins_with_warning() {
        let text = "{\"id\":\"t\",\"classes\":[\n{\"iri\":\"http://x/#A\",\"label\":\"first\"},\n{\"iri\":\"http://x/#A\",\"label\":\"second\"}\n]}";
        let report = parse_json_ontology(text).unwrap();
        assert_eq!(report.ontology.len(), 1);
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].line, 3);
        let iri = ClassIri::new("http://x/#A").unwrap();
        assert_eq!(report.ontology.get(&iri).unwrap().label(), "second");
    }

    #[test]
    fn json_errors() {
        assert!(parse_json_ontology(r#"{"id":"t","classes":[]}"#).is_err());
        assert!(parse_json_ontology(r#"{"id":"t","classes":[{"label":"a"}]}"#).is_err());
        assert!(parse_json_ontology("{not json").is_err());
        assert!(parse_json_ontology(r#"{"classes":[{"iri":"has space"}]}"#).is_err());
    }

    #[test]
    fn serialize_sorts_and_round_trips() {
        let text = r#"{"id":"t","classes":[
            {"iri":"http://x/#B","label":"b","parents":["http://x/#A"],"synonyms":["bee"]},
            {"iri":"http://x/#A","label":"a"}]}"#;
        let o = parse_json_ontology(text).unwrap().ontology;
        let json = serialize_ontology(&o);
        assert!(json.find("http://x/#A\"").unwrap() < json.find("http://x/#B\"").unwrap());
        assert_eq!(parse_json_ontology(&json).unwrap().ontology, o);
    }

    #[test]
    fn obo_round_trips_through_json() {
        let text = "ontology: five\n\
            [Term]\nid: F:1\nname: sign\n\n\
            [Term]\nid: F:2\nname: pain\nis_a: F:1\n\n\
            [Term]\nid: F:3\nname: abdominal pain\nis_a: F:2\nsynonym: \"belly ache\" EXACT []\n\n\
            [Term]\nid: F:4\nname: chest pain\nis_a: F:2\nis_a: EXT:9\n\n\
            [Term]\nid: F:5\nname: fever\nis_a: F:1\n";
        let obo = parse_obo(text).unwrap().ontology;
        let json = parse_json_ontology(&serialize_ontology(&obo)).unwrap().ontology;
        let shape = |o: &Ontology| {
            o.classes()
                .map(|c| (c.iri().clone(), c.parents().clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(obo.len(), 5);
        assert_eq!(shape(&obo), shape(&json));
        assert_eq!(obo, json);
    }

    #[test]
    fn detects_format_from_content() {
        assert!(parse_ontology("  {\"classes\":[{\"iri\":\"http://x/#A\"}]}").is_ok());
        assert!(parse_ontology("[Term]\nid: A:1\n").is_ok());
    }
}
