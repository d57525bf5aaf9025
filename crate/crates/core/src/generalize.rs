//! Masking and label-to-descriptor generalization.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde_json::Value;

use crate::corpus::{AnonymizedDocument, Document, Entity, GeneralizedEntity};
use crate::error::{Error, Result};
use crate::jsonmap::object_entries;
use crate::select::Selection;

pub const DEFAULT_MAP_JSON: &str = include_str!("../data/generalization_map.json");
pub const DEFAULT_FALLBACK: &str = "certain information";
pub const FALLBACK_KEY: &str = "_fallback";

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationMap {
    entries: BTreeMap<String, String>,
    fallback: String,
}

impl GeneralizationMap {
    pub fn new(entries: BTreeMap<String, String>, fallback: impl Into<String>) -> Result<Self> {
        let map = GeneralizationMap {
            entries,
            fallback: fallback.into(),
        };
        map.validate()?;
        Ok(map)
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut fallback = DEFAULT_FALLBACK.to_string();
        for (k, v) in object_entries(src, "generalization map")? {
            let Value::String(desc) = v else {
                return Err(Error::Config(format!("descriptor for '{k}' must be a string")));
            };
            if k == FALLBACK_KEY {
                fallback = desc;
            } else {
                entries.insert(k, desc);
            }
        }
        GeneralizationMap::new(entries, fallback)
    }

    /// The built-in label table.
    pub fn default_table() -> &'static GeneralizationMap {
        static MAP: OnceLock<GeneralizationMap> = OnceLock::new();
        MAP.get_or_init(|| GeneralizationMap::parse(DEFAULT_MAP_JSON).expect("built-in map is valid"))
    }

    fn validate(&self) -> Result<()> {
        if self.fallback.is_empty() {
            return Err(Error::Config("empty fallback descriptor".into()));
        }
        for (label, desc) in &self.entries {
            if desc.is_empty() {
                return Err(Error::Config(format!("empty descriptor for label '{label}'")));
            }
            if self.entries.contains_key(desc) {
                return Err(Error::Config(format!("descriptor '{desc}' is also a label")));
            }
        }
        Ok(())
    }

    /// Rejects descriptors that contain a lexicon surface (case-insensitive,
    /// whole-word), which would make generalized text re-extractable.
    pub fn check_against_lexicon<'a>(&self, surfaces: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let descs: Vec<String> = self
            .entries
            .values()
            .chain(std::iter::once(&self.fallback))
            .map(|d| format!(" {} ", crate::embed::tokenize(d).join(" ")))
            .collect();
        for s in surfaces {
            let needle = format!(" {} ", crate::embed::tokenize(s).join(" "));
            if needle.trim().is_empty() {
                continue;
            }
            if let Some(d) = descs.iter().find(|d| d.contains(&needle)) {
                return Err(Error::Config(format!("descriptor '{}' contains lexicon surface '{s}'", d.trim())));
            }
        }
        Ok(())
    }

    pub fn descriptor(&self, label: &str) -> &str {
        self.entries.get(label).map(String::as_str).unwrap_or(&self.fallback)
    }

    pub fn fallback(&self) -> &str {
        &self.fallback
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_generalization_map(path: impl AsRef<Path>) -> Result<GeneralizationMap> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GeneralizationMap::parse(&src)
}

fn check_span(text: &str, entity: &Entity) -> Result<()> {
    match text.get(entity.start..entity.end) {
        Some(s) if s == entity.surface => Ok(()),
        found => Err(Error::StaleSpan {
            start: entity.start,
            end: entity.end,
            expected: entity.surface.clone(),
            found: found.unwrap_or("<out of range>").to_string(),
        }),
    }
}

/// Replaces the entity's bytes with `placeholder`.
pub fn mask_entity(text: &str, entity: &Entity, placeholder: &str) -> Result<String> {
    check_span(text, entity)?;
    let mut out = String::with_capacity(text.len() - (entity.end - entity.start) + placeholder.len());
    out.push_str(&text[..entity.start]);
    out.push_str(placeholder);
    out.push_str(&text[entity.end..]);
    Ok(out)
}

/// Substitutes each selected entity with its descriptor, right to left.
pub fn generalize_document(doc: &Document, sel: &Selection, map: &GeneralizationMap) -> Result<AnonymizedDocument> {
    sel.check_against(doc)?;
    let mut text = doc.text.clone();
    let mut order: Vec<usize> = sel.generalize_set.iter().copied().collect();
    order.sort_by_key(|&i| std::cmp::Reverse(doc.entities[i].start));
    for &i in &order {
        let e = &doc.entities[i];
        text = mask_entity(&text, e, map.descriptor(&e.label))?;
    }
    let generalized = sel
        .generalize_set
        .iter()
        .map(|&i| {
            let e = &doc.entities[i];
            GeneralizedEntity::from_entity(e, map.descriptor(&e.label))
        })
        .collect();
    let kept = sel.keep_set.iter().map(|&i| doc.entities[i].clone()).collect();
    Ok(AnonymizedDocument {
        id: doc.id.clone(),
        text,
        generalized,
        kept,
    })
}
