//! False-positive filters applied to raw extraction candidates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::extract::{ImportBinding, PtmOccurrence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterId {
    /// Call text inside a comment or string literal. The parser never emits
    /// these, so this filter exists only as a log category.
    CommentOrString,
    UnboundCallee,
    ExamplePath,
    VendoredPath,
}

impl FilterId {
    pub fn number(self) -> u8 {
        match self {
            FilterId::CommentOrString => 1,
            FilterId::UnboundCallee => 2,
            FilterId::ExamplePath => 3,
            FilterId::VendoredPath => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub filter: FilterId,
    pub occurrence: PtmOccurrence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub example_segments: Vec<String>,
    pub vendored_segments: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        FilterConfig {
            example_segments: v(&[
                "example",
                "examples",
                "demo",
                "demos",
                "tutorial",
                "tutorials",
                "notebooks",
            ]),
            vendored_segments: v(&[
                "site-packages",
                "vendor",
                "third_party",
                "node_modules",
                ".venv",
                "venv",
            ]),
        }
    }
}

fn path_segments(path: &str) -> Vec<String> {
    let mut parts: Vec<&str> = path.split(['/', '\\']).filter(|s| !s.is_empty()).collect();
    if let Some(last) = parts.pop() {
        let stem = last.rsplit_once('.').map_or(last, |(s, _)| s);
        parts.push(stem);
    }
    parts.into_iter().map(str::to_ascii_lowercase).collect()
}

impl FilterConfig {
    fn matches(segments: &[String], path: &str) -> bool {
        let set: BTreeSet<String> = segments.iter().map(|s| s.to_ascii_lowercase()).collect();
        path_segments(path).iter().any(|s| set.contains(s))
    }

    pub fn is_example_path(&self, path: &str) -> bool {
        Self::matches(&self.example_segments, path)
    }

    pub fn is_vendored_path(&self, path: &str) -> bool {
        Self::matches(&self.vendored_segments, path)
    }
}

/// Whether the occurrence's callee resolves into its signature's library
/// through one of the file's import bindings.
pub fn callee_bound(o: &PtmOccurrence, bindings: &[ImportBinding]) -> bool {
    let lib = &o.signature.library_name;
    let Some(q) = &o.callee else { return false };
    q.starts_with(&format!("{lib}."))
        && bindings
            .iter()
            .any(|b| b.library == *lib || b.module.starts_with(&format!("{lib}.")))
}

/// Splits candidates into kept occurrences and dropped ones, tagging each
/// drop with the first filter that rejected it.
pub fn apply_fp_filters(
    occurrences: Vec<PtmOccurrence>,
    bindings: &[ImportBinding],
    config: &FilterConfig,
) -> (Vec<PtmOccurrence>, Vec<Dropped>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for o in occurrences {
        let filter = if !callee_bound(&o, bindings) {
            Some(FilterId::UnboundCallee)
        } else if config.is_example_path(&o.file_path) {
            Some(FilterId::ExamplePath)
        } else if config.is_vendored_path(&o.file_path) {
            Some(FilterId::VendoredPath)
        } else {
            None
        };
        match filter {
            Some(filter) => dropped.push(Dropped {
                filter,
                occurrence: o,
            }),
            None => kept.push(o),
        }
    }
    (kept, dropped)
}
