//! Corpus records, JSONL ingestion and persistence.
//!
//! Spans are byte offsets into the document text. Every ingestion path
//! checks that an entity's surface is exactly the substring at its span,
//! that spans are non-overlapping, and that they are sorted by start.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scoring::ScoreVector;

/// One extracted entity occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    pub label: String,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreVector>,
}

impl Entity {
    pub fn new(surface: impl Into<String>, label: impl Into<String>, start: usize, end: usize) -> Self {
        Entity {
            surface: surface.into(),
            label: label.into(),
            start,
            end,
            scores: None,
        }
    }

    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn overlaps(&self, other: &Entity) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, String>>,
}

impl Document {
    /// Builds a document and checks the entity invariants.
    pub fn new(id: impl Into<String>, text: impl Into<String>, entities: Vec<Entity>) -> Result<Self> {
        let doc = Document {
            id: id.into(),
            text: text.into(),
            entities,
            meta: None,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn without_entities(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            entities: Vec::new(),
            meta: None,
        }
    }

    /// Returns a copy carrying `entities` instead of the current list.
    pub fn with_entities(&self, entities: Vec<Entity>) -> Result<Self> {
        let doc = Document {
            entities,
            ..self.clone()
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        validate_entities(&self.id, &self.text, &self.entities)
    }
}

pub(crate) fn validate_entities(doc_id: &str, text: &str, entities: &[Entity]) -> Result<()> {
    let invalid = |reason: String| Error::InvalidEntity {
        doc: doc_id.to_string(),
        reason,
    };
    let mut prev_end = 0usize;
    for (i, e) in entities.iter().enumerate() {
        if e.start >= e.end {
            return Err(invalid(format!("entity {i} has empty or inverted span {}..{}", e.start, e.end)));
        }
        if e.label.is_empty() {
            return Err(invalid(format!("entity {i} has an empty label")));
        }
        if e.end > text.len() {
            return Err(invalid(format!("entity {i} span {}..{} exceeds text length {}", e.start, e.end, text.len())));
        }
        match text.get(e.start..e.end) {
            Some(s) if s == e.surface => {}
            Some(s) => {
                return Err(invalid(format!("entity {i} surface '{}' does not match text '{s}'", e.surface)));
            }
            None => return Err(invalid(format!("entity {i} span is not on a character boundary"))),
        }
        if i > 0 && e.start < prev_end {
            return Err(invalid(format!("entity {i} overlaps or precedes entity {}", i - 1)));
        }
        prev_end = e.end;
    }
    Ok(())
}

/// Output of the generalization step for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymizedDocument {
    pub id: String,
    pub text: String,
    pub generalized: Vec<GeneralizedEntity>,
    pub kept: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedEntity {
    pub surface: String,
    pub label: String,
    pub start: usize,
    pub end: usize,
    pub descriptor: String,
}

impl GeneralizedEntity {
    pub fn from_entity(entity: &Entity, descriptor: impl Into<String>) -> Self {
        GeneralizedEntity {
            surface: entity.surface.clone(),
            label: entity.label.clone(),
            start: entity.start,
            end: entity.end,
            descriptor: descriptor.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub source_path: String,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids.
    pub fn new(docs: Vec<Document>, source_path: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for d in &docs {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Corpus {
            docs,
            source_path: source_path.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.id == id)
    }

    /// Corpus view of anonymized output: same ids, transformed texts.
    pub fn from_anonymized(docs: &[AnonymizedDocument], source_path: impl Into<String>) -> Result<Self> {
        Corpus::new(
            docs.iter()
                .map(|d| Document::without_entities(d.id.clone(), d.text.clone()))
                .collect(),
            source_path,
        )
    }
}

/// Reads a JSONL corpus.
///
/// `id_field` defaults to `"id"`; a line without it gets its zero-based line
/// index as id. An `"entities"` array, when present, is parsed and checked.
pub fn load_corpus(path: impl AsRef<Path>, text_field: &str, id_field: Option<&str>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let id_field = id_field.unwrap_or("id");

    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: lineno,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::MalformedLine {
            line: lineno,
            message: "expected a JSON object".into(),
        })?;
        let text = match obj.get(text_field) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                return Err(Error::MalformedLine {
                    line: lineno,
                    message: format!("field '{text_field}' is not a string"),
                })
            }
            None => {
                return Err(Error::MissingField {
                    field: text_field.to_string(),
                    line: lineno,
                })
            }
        };
        let id = match obj.get(id_field) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            Some(_) => {
                return Err(Error::MalformedLine {
                    line: lineno,
                    message: format!("field '{id_field}' must be a string or number"),
                })
            }
            None => idx.to_string(),
        };
        let entities: Vec<Entity> = match obj.get("entities") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::MalformedLine {
                line: lineno,
                message: format!("bad entities: {e}"),
            })?,
            None => Vec::new(),
        };
        let meta: Option<BTreeMap<String, String>> = match obj.get("meta") {
            Some(v) => Some(serde_json::from_value(v.clone()).map_err(|e| Error::MalformedLine {
                line: lineno,
                message: format!("bad meta: {e}"),
            })?),
            None => None,
        };
        let doc = Document {
            id,
            text,
            entities,
            meta,
        };
        doc.validate()?;
        docs.push(doc);
    }
    Corpus::new(docs, path.display().to_string())
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(&corpus.docs, path)
}

/// Anonymized lines carry `id`, `text`, `generalized` and `kept`.
pub fn write_anonymized(docs: &[AnonymizedDocument], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(docs, path)
}

pub fn load_anonymized(path: impl AsRef<Path>) -> Result<Vec<AnonymizedDocument>> {
    read_jsonl(path)
}

/// Reads typed JSONL records; blank lines are skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn default_ids_are_line_indices() {
        let f = write_lines(&[r#"{"text":"a"}"#, r#"{"text":"b"}"#]);
        let c = load_corpus(f.path(), "text", None).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.docs[0].id, "0");
        assert_eq!(c.docs[1].id, "1");
        assert!(c.docs[0].entities.is_empty());
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let f = write_lines(&[]);
        assert!(load_corpus(f.path(), "text", None).unwrap().is_empty());
    }

    #[test]
    fn missing_text_field_names_field_and_line() {
        let f = write_lines(&[r#"{"q": 1}"#]);
        let err = load_corpus(f.path(), "text", None).unwrap_err();
        assert_eq!(err.to_string(), "missing field 'text' at line 1");
    }

    #[test]
    fn malformed_line_carries_line_number() {
        let f = write_lines(&[r#"{"text":"a"}"#, "{not json"]);
        match load_corpus(f.path(), "text", None).unwrap_err() {
            Error::MalformedLine { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_lines(&[r#"{"id":"x","text":"a"}"#, r#"{"id":"x","text":"b"}"#]);
        assert!(matches!(
            load_corpus(f.path(), "text", None),
            Err(Error::DuplicateId(id)) if id == "x"
        ));
    }

    #[test]
    fn custom_fields() {
        let f = write_lines(&[r#"{"qid":7,"body":"hello"}"#]);
        let c = load_corpus(f.path(), "body", Some("qid")).unwrap();
        assert_eq!(c.docs[0].id, "7");
        assert_eq!(c.docs[0].text, "hello");
    }

    #[test]
    fn stale_entity_rejected_on_load() {
        let f = write_lines(&[
            r#"{"text":"hello world","entities":[{"surface":"world","label":"x","start":0,"end":5}]}"#,
        ]);
        assert!(matches!(
            load_corpus(f.path(), "text", None),
            Err(Error::InvalidEntity { .. })
        ));
    }

    #[test]
    fn document_rejects_overlap_and_bad_spans() {
        let text = "New York City";
        let a = Entity::new("New York", "city name", 0, 8);
        let b = Entity::new("York", "city name", 4, 8);
        assert!(Document::new("d", text, vec![a.clone(), b]).is_err());
        assert!(Document::new("d", text, vec![Entity::new("", "x", 3, 3)]).is_err());
        assert!(Document::new("d", text, vec![Entity::new("New", "", 0, 3)]).is_err());
        assert!(Document::new("d", text, vec![Entity::new("City!", "x", 9, 14)]).is_err());
        assert!(Document::new("d", text, vec![a]).is_ok());
    }

    #[test]
    fn write_then_load_round_trips() {
        let doc = Document::new(
            "d1",
            "I am 32 year old male, ünïcode",
            vec![Entity::new("32 year old", "person age", 5, 16), Entity::new("male", "gender", 17, 21)],
        )
        .unwrap();
        let corpus = Corpus::new(vec![doc, Document::without_entities("d2", "")], "mem").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        write_corpus(&corpus, &p).unwrap();
        let back = load_corpus(&p, "text", None).unwrap();
        assert_eq!(back.docs, corpus.docs);
    }

    #[test]
    fn anonymized_lines_carry_generalized_list() {
        let src = Entity::new("male", "gender", 5, 9);
        let anon = AnonymizedDocument {
            id: "a".into(),
            text: "I am a gender".into(),
            generalized: vec![GeneralizedEntity::from_entity(&src, "a gender")],
            kept: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("anon.jsonl");
        write_anonymized(std::slice::from_ref(&anon), &p).unwrap();
        let raw = std::fs::read_to_string(&p).unwrap();
        let v: Value = serde_json::from_str(raw.lines().next().unwrap()).unwrap();
        assert_eq!(v["generalized"][0]["descriptor"], "a gender");
        assert_eq!(v["generalized"][0]["start"], 5);
        let c = load_corpus(&p, "text", None).unwrap();
        assert_eq!(c.docs[0].text, "I am a gender");
        assert_eq!(load_anonymized(&p).unwrap(), vec![anon]);
    }

    #[test]
    fn write_to_unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("missing-dir").join("c.jsonl");
        let err = write_corpus(&Corpus::default(), &p).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("missing-dir"));
    }
}
