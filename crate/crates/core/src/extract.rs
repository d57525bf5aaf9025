//! Entity extraction.
//!
//! The reference extractor is a case-insensitive lexicon matcher plus three
//! regex families (ages, phone-like digit runs, emails). Candidates from all
//! sources are resolved into a non-overlapping set: longest match first, then
//! earliest start, then lexicographically smallest label.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{validate_entities, Entity};
use crate::embed::{http_client, post_json, BackendKind};
use crate::error::{Error, Result};
use crate::generalize::GeneralizationMap;
use crate::jsonmap::object_entries;

pub const AGE_LABEL: &str = "person age";
pub const PHONE_LABEL: &str = "phone number";
pub const EMAIL_LABEL: &str = "email address";

/// Table keys of the default generalization map.
pub fn default_labels() -> Vec<String> {
    GeneralizationMap::default_table().labels().map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorSpec {
    pub kind: BackendKind,
    #[serde(default = "default_labels")]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl ExtractorSpec {
    pub fn reference(lexicon_path: impl Into<PathBuf>) -> Self {
        ExtractorSpec {
            kind: BackendKind::Reference,
            labels: default_labels(),
            lexicon_path: Some(lexicon_path.into()),
            endpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BackendKind::Reference if self.lexicon_path.is_none() => {
                Err(Error::Config("reference extractor requires lexicon_path".into()))
            }
            BackendKind::Remote if self.endpoint.is_none() => {
                Err(Error::Config("remote extractor requires an endpoint".into()))
            }
            _ if self.labels.is_empty() => Err(Error::Config("extractor label list is empty".into())),
            _ => Ok(()),
        }
    }
}

pub trait EntityExtractor: Send + Sync {
    fn extract(&self, text: &str) -> Result<Vec<Entity>>;
}

/// Reads a lexicon file: a JSON object mapping surface string to label.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&src)
}

pub fn parse_lexicon(src: &str) -> Result<Vec<(String, String)>> {
    object_entries(src, "lexicon")?
        .into_iter()
        .map(|(surface, v)| match v {
            serde_json::Value::String(label) if !label.is_empty() && !surface.is_empty() => Ok((surface, label)),
            _ => Err(Error::Config(format!("lexicon entry '{surface}' must map a non-empty surface to a non-empty label"))),
        })
        .collect()
}

struct Patterns {
    age: Regex,
    phone: Regex,
    email: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        age: Regex::new(r"(?i)\b\d{1,3} years? old\b").unwrap(),
        phone: Regex::new(r"\+?\d(?:[\d\-.]*\d)?").unwrap(),
        email: Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,}").unwrap(),
    })
}

fn is_word_byte_before(text: &str, pos: usize) -> bool {
    text[..pos].chars().next_back().is_some_and(char::is_alphanumeric)
}

fn is_word_byte_after(text: &str, pos: usize) -> bool {
    text[pos..].chars().next().is_some_and(char::is_alphanumeric)
}

/// Match must not start or end inside a word.
fn on_word_boundary(text: &str, start: usize, end: usize) -> bool {
    let first_word = text[start..].chars().next().is_some_and(char::is_alphanumeric);
    let last_word = text[..end].chars().next_back().is_some_and(char::is_alphanumeric);
    !(first_word && is_word_byte_before(text, start)) && !(last_word && is_word_byte_after(text, end))
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Candidate {
    start: usize,
    end: usize,
    label: String,
}

/// Longest first, then earliest start, then smallest label; keep non-overlapping.
fn resolve(text: &str, mut cands: Vec<Candidate>) -> Vec<Entity> {
    cands.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(a.start.cmp(&b.start))
            .then(a.label.cmp(&b.label))
    });
    let mut taken: Vec<Candidate> = Vec::new();
    for c in cands {
        if taken.iter().all(|t| c.end <= t.start || t.end <= c.start) {
            taken.push(c);
        }
    }
    taken.sort_by_key(|c| c.start);
    taken
        .into_iter()
        .map(|c| Entity::new(&text[c.start..c.end], c.label, c.start, c.end))
        .collect()
}

pub struct ReferenceExtractor {
    labels: BTreeSet<String>,
    lexicon_labels: Vec<String>,
    matcher: Option<AhoCorasick>,
}

impl std::fmt::Debug for ReferenceExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceExtractor")
            .field("labels", &self.labels.len())
            .field("lexicon", &self.lexicon_labels.len())
            .finish()
    }
}

impl ReferenceExtractor {
    pub fn new(lexicon: Vec<(String, String)>, labels: impl IntoIterator<Item = String>) -> Result<Self> {
        let (surfaces, lexicon_labels): (Vec<String>, Vec<String>) = lexicon.into_iter().unzip();
        let matcher = if surfaces.is_empty() {
            None
        } else {
            Some(
                AhoCorasickBuilder::new()
                    .ascii_case_insensitive(true)
                    .match_kind(MatchKind::Standard)
                    .build(&surfaces)
                    .map_err(|e| Error::Config(format!("lexicon: {e}")))?,
            )
        };
        Ok(ReferenceExtractor {
            labels: labels.into_iter().collect(),
            lexicon_labels,
            matcher,
        })
    }

    pub fn from_spec(spec: &ExtractorSpec) -> Result<Self> {
        spec.validate()?;
        let path = spec
            .lexicon_path
            .as_ref()
            .ok_or_else(|| Error::Config("reference extractor requires lexicon_path".into()))?;
        ReferenceExtractor::new(load_lexicon(path)?, spec.labels.iter().cloned())
    }

    fn allowed(&self, label: &str) -> bool {
        self.labels.contains(label)
    }

    fn candidates(&self, text: &str) -> Vec<Candidate> {
        let mut out = Vec::new();
        if let Some(m) = &self.matcher {
            for hit in m.find_overlapping_iter(text) {
                let label = &self.lexicon_labels[hit.pattern().as_usize()];
                if self.allowed(label) && on_word_boundary(text, hit.start(), hit.end()) {
                    out.push(Candidate {
                        start: hit.start(),
                        end: hit.end(),
                        label: label.clone(),
                    });
                }
            }
        }
        let p = patterns();
        if self.allowed(AGE_LABEL) {
            out.extend(p.age.find_iter(text).map(|m| Candidate {
                start: m.start(),
                end: m.end(),
                label: AGE_LABEL.into(),
            }));
        }
        if self.allowed(PHONE_LABEL) {
            for m in p.phone.find_iter(text) {
                let digits = m.as_str().bytes().filter(u8::is_ascii_digit).count();
                if (7..=15).contains(&digits) && on_word_boundary(text, m.start(), m.end()) {
                    out.push(Candidate {
                        start: m.start(),
                        end: m.end(),
                        label: PHONE_LABEL.into(),
                    });
                }
            }
        }
        if self.allowed(EMAIL_LABEL) {
            out.extend(p.email.find_iter(text).map(|m| Candidate {
                start: m.start(),
                end: m.end(),
                label: EMAIL_LABEL.into(),
            }));
        }
        out.sort_by(|a, b| (a.start, a.end, &a.label).cmp(&(b.start, b.end, &b.label)));
        out.dedup();
        out
    }
}

impl EntityExtractor for ReferenceExtractor {
    fn extract(&self, text: &str) -> Result<Vec<Entity>> {
        Ok(resolve(text, self.candidates(text)))
    }
}

#[derive(Serialize)]
struct NerRequest<'a> {
    text: &'a str,
    labels: &'a [String],
}

#[derive(Deserialize)]
struct NerEntity {
    text: String,
    label: String,
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct NerResponse {
    entities: Vec<NerEntity>,
}

/// HTTP client for `POST {endpoint}/ner`.
#[derive(Debug, Clone)]
pub struct RemoteExtractor {
    endpoint: String,
    labels: Vec<String>,
    client: reqwest::blocking::Client,
}

impl RemoteExtractor {
    pub fn new(endpoint: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let endpoint = endpoint.into();
        Ok(RemoteExtractor {
            client: http_client(&endpoint)?,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            labels,
        })
    }
}

impl EntityExtractor for RemoteExtractor {
    fn extract(&self, text: &str) -> Result<Vec<Entity>> {
        let url = format!("{}/ner", self.endpoint);
        let resp: NerResponse = post_json(
            &self.client,
            &url,
            &self.endpoint,
            &NerRequest {
                text,
                labels: &self.labels,
            },
        )?;
        let contract = |message: String| Error::Contract {
            endpoint: self.endpoint.clone(),
            message,
        };
        let mut cands = Vec::with_capacity(resp.entities.len());
        for e in resp.entities {
            if e.start >= e.end || text.get(e.start..e.end) != Some(e.text.as_str()) {
                return Err(contract(format!(
                    "entity '{}' at {}..{} does not match the text bytes",
                    e.text, e.start, e.end
                )));
            }
            if !self.labels.contains(&e.label) {
                return Err(contract(format!("unrequested label '{}'", e.label)));
            }
            cands.push(Candidate {
                start: e.start,
                end: e.end,
                label: e.label,
            });
        }
        let out = resolve(text, cands);
        validate_entities("<remote>", text, &out)?;
        Ok(out)
    }
}

/// Backend selected by an [`ExtractorSpec`].
#[derive(Debug)]
pub enum Extractor {
    Reference(ReferenceExtractor),
    Remote(RemoteExtractor),
}

impl Extractor {
    pub fn from_spec(spec: &ExtractorSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match spec.kind {
            BackendKind::Reference => Extractor::Reference(ReferenceExtractor::from_spec(spec)?),
            BackendKind::Remote => Extractor::Remote(RemoteExtractor::new(
                spec.endpoint.as_deref().unwrap_or_default(),
                spec.labels.clone(),
            )?),
        })
    }
}

impl EntityExtractor for Extractor {
    fn extract(&self, text: &str) -> Result<Vec<Entity>> {
        match self {
            Extractor::Reference(e) => e.extract(text),
            Extractor::Remote(e) => e.extract(text),
        }
    }
}

pub fn extract_entities(spec: &ExtractorSpec, text: &str) -> Result<Vec<Entity>> {
    Extractor::from_spec(spec)?.extract(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(s, l)| (s.to_string(), l.to_string())).collect()
    }

    fn extractor(pairs: &[(&str, &str)]) -> ReferenceExtractor {
        ReferenceExtractor::new(lex(pairs), default_labels()).unwrap()
    }

    #[test]
    fn age_and_gender_from_lexicon() {
        let x = extractor(&[("32 year old", "person age"), ("male", "gender")]);
        let ents = x.extract("I am 32 year old male").unwrap();
        assert_eq!(ents.len(), 2);
        assert_eq!((ents[0].surface.as_str(), ents[0].label.as_str()), ("32 year old", "person age"));
        assert_eq!(ents[0].span(), (5, 16));
        assert_eq!((ents[1].surface.as_str(), ents[1].label.as_str()), ("male", "gender"));
    }

    #[test]
    fn no_hits_is_empty() {
        let x = extractor(&[("male", "gender")]);
        assert!(x.extract("nothing to see here").unwrap().is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let x = extractor(&[("New York", "city name"), ("York", "county")]);
        let ents = x.extract("New York").unwrap();
        assert_eq!(ents.len(), 1);
        assert_eq!(ents[0].surface, "New York");
        assert_eq!(ents[0].label, "city name");
    }

    #[test]
    fn equal_length_ties_prefer_earlier_then_label() {
        let x = extractor(&[("ab cd", "city name"), ("cd ef", "county")]);
        let ents = x.extract("ab cd ef").unwrap();
        assert_eq!(ents.len(), 1);
        assert_eq!(ents[0].surface, "ab cd");

        let x = extractor(&[("Paris", "county"), ("paris", "city name")]);
        let ents = x.extract("to Paris").unwrap();
        assert_eq!(ents[0].label, "city name");
    }

    #[test]
    fn lexicon_match_respects_word_boundaries() {
        let x = extractor(&[("male", "gender")]);
        assert!(x.extract("a female patient").unwrap().is_empty());
        assert_eq!(x.extract("MALE, 40").unwrap()[0].surface, "MALE");
    }

    #[test]
    fn regex_families() {
        let x = extractor(&[]);
        let ents = x
            .extract("Age 45 years old, call 555-123-4567 or mail jo.doe@example.com now")
            .unwrap();
        let labels: Vec<_> = ents.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, vec![AGE_LABEL, PHONE_LABEL, EMAIL_LABEL]);
        assert_eq!(ents[1].surface, "555-123-4567");
        assert_eq!(ents[2].surface, "jo.doe@example.com");
        // short digit runs are not phones
        assert!(x.extract("room 12345").unwrap().is_empty());
    }

    #[test]
    fn labels_outside_request_are_dropped() {
        let x = ReferenceExtractor::new(lex(&[("male", "gender")]), vec!["person age".to_string()]).unwrap();
        assert!(x.extract("male").unwrap().is_empty());
    }

    #[test]
    fn lexicon_parse_errors_are_config_errors() {
        assert!(matches!(parse_lexicon("[]"), Err(Error::Config(_))));
        assert!(matches!(parse_lexicon(r#"{"a": 3}"#), Err(Error::Config(_))));
        assert!(matches!(parse_lexicon(r#"{"a": "x", "a": "y"}"#), Err(Error::Config(_))));
    }

    #[test]
    fn spec_validation() {
        let mut s = ExtractorSpec::reference("x.json");
        s.lexicon_path = None;
        assert!(s.validate().is_err());
        let r = ExtractorSpec {
            kind: BackendKind::Remote,
            labels: default_labels(),
            lexicon_path: None,
            endpoint: None,
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn default_labels_cover_regex_families() {
        let labels = default_labels();
        for l in [AGE_LABEL, PHONE_LABEL, EMAIL_LABEL] {
            assert!(labels.iter().any(|x| x == l));
        }
    }

    proptest! {
        #[test]
        fn spans_sorted_disjoint_and_exact(words in prop::collection::vec(
            prop::sample::select(vec!["new", "york", "new york", "male", "ann", "ann lee", "x", "42 years old", "5551234"]), 0..12)) {
            let x = extractor(&[("new york", "city name"), ("york", "county"), ("male", "gender"),
                               ("ann", "person full name"), ("ann lee", "person full name"), ("lee", "person full name")]);
            let text = words.join(" ");
            let ents = x.extract(&text).unwrap();
            prop_assert!(validate_entities("p", &text, &ents).is_ok());
            for w in ents.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            prop_assert_eq!(&ents, &x.extract(&text).unwrap());
        }
    }
}
