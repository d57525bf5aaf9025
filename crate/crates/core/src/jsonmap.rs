//! Order-preserving JSON object reader that reports duplicate keys, which
//! `serde_json::Map` would silently collapse.

use std::fmt;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde_json::Value;

use crate::error::{Error, Result};

struct Entries(Vec<(String, Value)>);

impl<'de> serde::Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V)
    }
}

/// Parses a JSON object into its entries in file order, rejecting duplicate keys.
pub(crate) fn object_entries(src: &str, what: &str) -> Result<Vec<(String, Value)>> {
    let Entries(entries) =
        serde_json::from_str(src).map_err(|e| Error::Config(format!("{what}: {e}")))?;
    let mut seen = std::collections::HashSet::new();
    for (k, _) in &entries {
        if !seen.insert(k.as_str()) {
            return Err(Error::Config(format!("{what}: duplicate key '{k}'")));
        }
    }
    Ok(entries)
}
