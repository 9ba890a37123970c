//! Reuse-signature catalog and the local PTM-name index.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUILTIN_CATALOG: &str = include_str!("../data/signatures.csv");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog line {line}, field `{field}`: {message}")]
    Format {
        line: u64,
        field: &'static str,
        message: String,
    },
    #[error("catalog contains no signatures")]
    Empty,
}

#[derive(Debug, Error)]
#[error("cannot load PTM index {path}: {source}")]
pub struct IndexLoadError {
    pub path: String,
    #[source]
    pub source: std::io::Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    /// A module-level function, or a constructor imported by name.
    Function,
    /// Called on any object rooted in the library, including instances.
    Method,
    /// Called on a class or module imported from the library.
    Classmethod,
}

impl FromStr for CallKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "function" => Ok(CallKind::Function),
            "method" => Ok(CallKind::Method),
            "classmethod" => Ok(CallKind::Classmethod),
            other => Err(format!("unknown call kind `{other}`")),
        }
    }
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CallKind::Function => "function",
            CallKind::Method => "method",
            CallKind::Classmethod => "classmethod",
        })
    }
}

/// Which call argument carries the PTM identifier.
///
/// Written as `0`, `repo_id`, or `0|repo_id` (keyword wins when both match).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArgSpec {
    pub position: Option<usize>,
    pub keyword: Option<String>,
}

impl ArgSpec {
    pub fn position(p: usize) -> Self {
        Self {
            position: Some(p),
            keyword: None,
        }
    }

    pub fn keyword(k: &str) -> Self {
        Self {
            position: None,
            keyword: Some(k.to_string()),
        }
    }
}

impl FromStr for ArgSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = ArgSpec {
            position: None,
            keyword: None,
        };
        for part in s.split('|').map(str::trim) {
            if part.is_empty() {
                return Err("empty argument component".into());
            }
            if part.bytes().all(|b| b.is_ascii_digit()) {
                if spec.position.is_some() {
                    return Err("more than one position".into());
                }
                spec.position = Some(part.parse().map_err(|e| format!("{e}"))?);
            } else if is_identifier(part) {
                if spec.keyword.is_some() {
                    return Err("more than one keyword".into());
                }
                spec.keyword = Some(part.to_string());
            } else {
                return Err(format!("`{part}` is neither an index nor a parameter name"));
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for ArgSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.position, &self.keyword) {
            (Some(p), Some(k)) => write!(f, "{p}|{k}"),
            (Some(p), None) => write!(f, "{p}"),
            (None, Some(k)) => f.write_str(k),
            (None, None) => Ok(()),
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_alphabetic())
        && chars.all(|c| c == '_' || c.is_alphanumeric())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReuseSignature {
    pub library_name: String,
    pub call_pattern: String,
    pub call_kind: CallKind,
    pub ptm_arg: ArgSpec,
}

impl ReuseSignature {
    pub fn new(library: &str, call: &str, kind: CallKind, arg: ArgSpec) -> Self {
        Self {
            library_name: library.to_string(),
            call_pattern: call.to_string(),
            call_kind: kind,
            ptm_arg: arg,
        }
    }

    pub fn key(&self) -> (&str, &str, CallKind) {
        (&self.library_name, &self.call_pattern, self.call_kind)
    }
}

impl fmt::Display for ReuseSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}({})",
            self.library_name, self.call_pattern, self.call_kind
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatalogWarning {
    pub line: u64,
    pub message: String,
}

/// Validated, deduplicated signature catalog. Sorted by
/// `(library, call, kind)`, so input order never matters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    signatures: Vec<ReuseSignature>,
    pub warnings: Vec<CatalogWarning>,
}

#[derive(Debug, Deserialize)]
struct CatalogRecord {
    library: String,
    call: String,
    kind: String,
    arg: String,
}

impl Catalog {
    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The bundled catalog. It covers common hub libraries only.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_CATALOG).expect("bundled catalog is valid")
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut by_key: BTreeMap<(String, String, CallKind), (ReuseSignature, u64)> =
            BTreeMap::new();
        let mut warnings = Vec::new();
        let headers = rdr
            .headers()
            .map_err(|e| format_err(1, "header", &e.to_string()))?
            .clone();
        for row in rdr.records() {
            let row = row.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                format_err(line, "record", &e.to_string())
            })?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let rec: CatalogRecord = row
                .deserialize(Some(&headers))
                .map_err(|e| format_err(line, "record", &e.to_string()))?;
            if rec.library.is_empty() {
                return Err(format_err(line, "library", "must be non-empty"));
            }
            if !rec.library.split('.').all(is_identifier) {
                return Err(format_err(line, "library", "not an importable module name"));
            }
            if rec.call.is_empty() {
                return Err(format_err(line, "call", "must be non-empty"));
            }
            if !is_identifier(&rec.call) {
                return Err(format_err(line, "call", "not a valid identifier"));
            }
            let kind: CallKind = rec
                .kind
                .parse()
                .map_err(|m: String| format_err(line, "kind", &m))?;
            let arg: ArgSpec = rec
                .arg
                .parse()
                .map_err(|m: String| format_err(line, "arg", &m))?;
            let sig = ReuseSignature {
                library_name: rec.library,
                call_pattern: rec.call,
                call_kind: kind,
                ptm_arg: arg,
            };
            let key = (sig.library_name.clone(), sig.call_pattern.clone(), kind);
            match by_key.get(&key) {
                Some((existing, first_line)) if *existing == sig => warnings.push(CatalogWarning {
                    line,
                    message: format!("duplicate of line {first_line}: {sig} collapsed"),
                }),
                Some((_, first_line)) => {
                    return Err(format_err(
                        line,
                        "arg",
                        &format!("conflicts with line {first_line} for {sig}"),
                    ))
                }
                None => {
                    by_key.insert(key, (sig, line));
                }
            }
        }
        if by_key.is_empty() {
            return Err(CatalogError::Empty);
        }
        Ok(Catalog {
            signatures: by_key.into_values().map(|(s, _)| s).collect(),
            warnings,
        })
    }

    pub fn from_signatures(sigs: impl IntoIterator<Item = ReuseSignature>) -> Self {
        let set: BTreeSet<ReuseSignature> = sigs.into_iter().collect();
        let mut signatures: Vec<_> = set.into_iter().collect();
        signatures.sort_by(|a, b| a.key().cmp(&b.key()));
        signatures.dedup_by(|a, b| a.key() == b.key());
        Catalog {
            signatures,
            warnings: Vec::new(),
        }
    }

    pub fn signatures(&self) -> &[ReuseSignature] {
        &self.signatures
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn libraries(&self) -> BTreeSet<&str> {
        self.signatures
            .iter()
            .map(|s| s.library_name.as_str())
            .collect()
    }

    pub fn has_library(&self, library: &str) -> bool {
        self.signatures.iter().any(|s| s.library_name == library)
    }

    pub fn with_call<'a>(&'a self, call: &'a str) -> impl Iterator<Item = &'a ReuseSignature> + 'a {
        self.signatures
            .iter()
            .filter(move |s| s.call_pattern == call)
    }

    /// Every distinct call pattern; used as a cheap textual pre-screen.
    pub fn call_patterns(&self) -> BTreeSet<&str> {
        self.signatures
            .iter()
            .map(|s| s.call_pattern.as_str())
            .collect()
    }

    /// Serializes back to the catalog file format.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("library,call,kind,arg\n");
        for s in &self.signatures {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.library_name, s.call_pattern, s.call_kind, s.ptm_arg
            ));
        }
        out
    }
}

fn format_err(line: u64, field: &'static str, message: &str) -> CatalogError {
    CatalogError::Format {
        line,
        field,
        message: message.to_string(),
    }
}

/// Metadata derived from an identifier's shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PtmMeta {
    pub namespace: Option<String>,
    pub name: String,
    pub version: Option<String>,
}

pub fn ptm_meta(id: &str) -> PtmMeta {
    let (namespace, name) = match id.rsplit_once('/') {
        Some((ns, n)) => (Some(ns.to_string()), n.to_string()),
        None => (None, id.to_string()),
    };
    PtmMeta {
        namespace,
        version: has_version_token(id),
        name,
    }
}

/// Exact-match identifier index. Immutable after load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PtmIndex {
    entries: BTreeSet<String>,
}

impl PtmIndex {
    pub fn load(path: &Path) -> Result<Self, IndexLoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| IndexLoadError {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&text))
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Self { entries }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }
}

impl FromIterator<String> for PtmIndex {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().map(|s| s.trim().to_string()).collect(),
        }
    }
}

fn version_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:[vV]\d+(?:\.\d+){0,2}|\d+\.\d+(?:\.\d+)?)$").unwrap())
}

/// Returns the last version-like token of the identifier's name part.
///
/// Tokens are separated by `-` or `_`; a token is version-like when it is
/// `v<digits>[.<digits>[.<digits>]]` or `<digits>.<digits>[.<digits>]`.
pub fn has_version_token(ptm_id: &str) -> Option<String> {
    let name = ptm_id.rsplit('/').next().unwrap_or(ptm_id);
    name.split(['-', '_'])
        .rfind(|t| version_token_re().is_match(t))
        .map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_from_pretrained_entry() {
        let c = Catalog::parse("library,call,kind,arg\ntransformers,from_pretrained,method,0\n")
            .unwrap();
        assert_eq!(c.len(), 1);
        let s = &c.signatures()[0];
        assert_eq!(s.library_name, "transformers");
        assert_eq!(s.call_pattern, "from_pretrained");
        assert_eq!(s.call_kind, CallKind::Method);
        assert_eq!(s.ptm_arg, ArgSpec::position(0));
    }

    #[test]
    fn identical_entries_collapse_with_warning() {
        let c = Catalog::parse(
            "library,call,kind,arg\ntransformers,from_pretrained,method,0\ntransformers,from_pretrained,method,0\n",
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.warnings.len(), 1);
        assert_eq!(c.warnings[0].line, 3);
    }

    #[test]
    fn empty_call_pattern_is_format_error() {
        let err = Catalog::parse("library,call,kind,arg\ntransformers,,method,0\n").unwrap_err();
        match err {
            CatalogError::Format { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "call");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conflicting_arg_is_rejected() {
        let err = Catalog::parse(
            "library,call,kind,arg\nspacy,load,function,0\nspacy,load,function,name\n",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            CatalogError::Format {
                field: "arg",
                line: 3,
                ..
            }
        ));
    }

    #[test]
    fn empty_catalog_errors() {
        assert!(matches!(
            Catalog::parse("library,call,kind,arg\n# nothing\n"),
            Err(CatalogError::Empty)
        ));
    }

    #[test]
    fn bad_kind_is_reported() {
        let err = Catalog::parse("library,call,kind,arg\nspacy,load,lambda,0\n").unwrap_err();
        assert!(matches!(err, CatalogError::Format { field: "kind", .. }));
    }

    #[test]
    fn builtin_catalog_parses() {
        let c = Catalog::builtin();
        assert!(c.has_library("transformers"));
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn index_dedups_and_skips_comments() {
        let idx = PtmIndex::parse("bert-base-uncased\nopenmmlab/upernet-swin-large\n");
        assert_eq!(idx.len(), 2);
        let idx = PtmIndex::parse("# header\n bert-base-uncased \nbert-base-uncased\n\n");
        assert_eq!(idx.len(), 1);
        assert!(idx.contains("bert-base-uncased"));
        assert!(PtmIndex::parse("").is_empty());
    }

    #[test]
    fn version_tokens() {
        assert_eq!(
            has_version_token("gte-base-en-v1.5").as_deref(),
            Some("v1.5")
        );
        assert_eq!(has_version_token("bert-base-uncased"), None);
        assert_eq!(
            has_version_token("yujiepan/whisper-v3-tiny-random").as_deref(),
            Some("v3")
        );
        assert_eq!(
            has_version_token("org/model-2.0.1").as_deref(),
            Some("2.0.1")
        );
        assert_eq!(has_version_token("Llama-2-7b"), None);
        assert_eq!(has_version_token("vicuna"), None);
    }

    #[test]
    fn meta_splits_namespace() {
        let m = ptm_meta("BAAI/bge-small-en-v1.5");
        assert_eq!(m.namespace.as_deref(), Some("BAAI"));
        assert_eq!(m.name, "bge-small-en-v1.5");
        assert_eq!(m.version.as_deref(), Some("v1.5"));
    }
}
