//! Library dependency baseline from the four Python manifest formats.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::change::{pair_instances, ChangeKind, Instance, MigrationAnnotations, PairRef};
use crate::filters::FilterConfig;
use crate::git::{GitError, Repo};
use crate::history::ReleaseLine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifestKind {
    Requirements,
    Environment,
    Pipfile,
    Pyproject,
}

impl ManifestKind {
    /// Identifies the manifest kind from a file name.
    pub fn from_path(path: &str) -> Option<ManifestKind> {
        let name = path.rsplit('/').next().unwrap_or(path);
        let lower = name.to_ascii_lowercase();
        match lower.as_str() {
            "pipfile" => Some(ManifestKind::Pipfile),
            "pyproject.toml" => Some(ManifestKind::Pyproject),
            "environment.yml" | "environment.yaml" => Some(ManifestKind::Environment),
            _ if lower.starts_with("requirements") && lower.ends_with(".txt") => {
                Some(ManifestKind::Requirements)
            }
            _ => None,
        }
    }
}

impl fmt::Display for ManifestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ManifestKind::Requirements => "requirements.txt",
            ManifestKind::Environment => "environment.yml",
            ManifestKind::Pipfile => "Pipfile",
            ManifestKind::Pyproject => "pyproject.toml",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEntry {
    pub name: String,
    /// Raw specifier with whitespace removed; may be empty.
    pub version_spec: String,
    pub source_file: ManifestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extras: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markers: Option<String>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDiagnostic {
    pub line: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed {kind} at line {line}: {message}")]
pub struct ManifestParseError {
    pub kind: ManifestKind,
    pub line: u32,
    pub message: String,
}

/// Lowercases and collapses runs of `.`, `-` and `_` into a single `-`.
pub fn normalize_name(name: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[-_.]+").expect("valid regex"));
    re.replace_all(&name.trim().to_ascii_lowercase(), "-")
        .into_owned()
}

fn requirement_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^([A-Za-z0-9](?:[A-Za-z0-9._-]*[A-Za-z0-9])?)\s*(\[[^\]]*\])?\s*([^;]*?)\s*(?:;\s*(.*?))?\s*$",
        )
        .expect("valid regex")
    })
}

fn strip_spaces(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Parses one PEP 508 style requirement. Returns `None` when the text does
/// not start with a distribution name.
pub fn parse_requirement(text: &str, kind: ManifestKind, line: u32) -> Option<DependencyEntry> {
    let c = requirement_re().captures(text.trim())?;
    let mut spec = c.get(3).map_or("", |m| m.as_str()).trim().to_string();
    if spec.starts_with('(') && spec.ends_with(')') {
        spec = spec[1..spec.len() - 1].to_string();
    }
    let spec = if let Some(rest) = spec.strip_prefix('@') {
        format!("@{}", rest.trim())
    } else {
        strip_spaces(&spec)
    };
    if !spec.is_empty() && !spec.starts_with(['<', '>', '=', '!', '~', '@', '*']) {
        return None;
    }
    Some(DependencyEntry {
        name: normalize_name(&c[1]),
        version_spec: spec,
        source_file: kind,
        extras: c.get(2).map(|m| strip_spaces(m.as_str())),
        markers: c
            .get(4)
            .map(|m| m.as_str().trim().to_string())
            .filter(|m| !m.is_empty()),
        line,
    })
}

/// Renders an entry back as a requirements line.
pub fn to_requirement_line(e: &DependencyEntry) -> String {
    let mut s = e.name.clone();
    if let Some(x) = &e.extras {
        s.push_str(x);
    }
    if e.version_spec.starts_with('@') {
        s.push(' ');
    }
    s.push_str(&e.version_spec);
    if let Some(m) = &e.markers {
        s.push_str(" ; ");
        s.push_str(m);
    }
    s
}

pub type ParsedManifest = (Vec<DependencyEntry>, Vec<ManifestDiagnostic>);

pub fn parse_manifest(
    bytes: &[u8],
    kind: ManifestKind,
) -> Result<ParsedManifest, ManifestParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ManifestParseError {
        kind,
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let (entries, mut diags) = match kind {
        ManifestKind::Requirements => parse_requirements(text)?,
        ManifestKind::Environment => parse_environment(text)?,
        ManifestKind::Pipfile => parse_pipfile(text)?,
        ManifestKind::Pyproject => parse_pyproject(text)?,
    };
    let entries = dedup(entries, &mut diags);
    Ok((entries, diags))
}

fn dedup(
    entries: Vec<DependencyEntry>,
    diags: &mut Vec<ManifestDiagnostic>,
) -> Vec<DependencyEntry> {
    let mut by_name: BTreeMap<String, DependencyEntry> = BTreeMap::new();
    for e in entries {
        if let Some(prev) = by_name.get(&e.name) {
            diags.push(ManifestDiagnostic {
                line: e.line,
                message: format!(
                    "duplicate entry for {} (line {} overridden)",
                    e.name, prev.line
                ),
            });
        }
        by_name.insert(e.name.clone(), e);
    }
    let mut v: Vec<DependencyEntry> = by_name.into_values().collect();
    v.sort_by_key(|e| e.line);
    v
}

fn parse_requirements(text: &str) -> Result<ParsedManifest, ManifestParseError> {
    let mut entries = Vec::new();
    let mut diags = Vec::new();
    let mut logical = String::new();
    let mut start = 0u32;
    for (i, raw) in text.lines().enumerate() {
        let n = i as u32 + 1;
        if logical.is_empty() {
            start = n;
        }
        if let Some(cont) = raw.strip_suffix('\\') {
            logical.push_str(cont);
            logical.push(' ');
            continue;
        }
        logical.push_str(raw);
        let line = std::mem::take(&mut logical);
        let line = strip_comment(&line);
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(opt) = line.strip_prefix('-') {
            let what = match opt.split_whitespace().next().unwrap_or("") {
                "r" | "-requirement" => "include directive",
                "c" | "-constraint" => "constraint include",
                "e" | "-editable" => "editable install",
                _ => "option line",
            };
            diags.push(ManifestDiagnostic {
                line: start,
                message: format!("skipped {what}: {line}"),
            });
            continue;
        }
        if is_local_path(line) {
            diags.push(ManifestDiagnostic {
                line: start,
                message: format!("skipped local or URL install: {line}"),
            });
            continue;
        }
        match parse_requirement(line, ManifestKind::Requirements, start) {
            Some(e) => entries.push(e),
            None => {
                return Err(ManifestParseError {
                    kind: ManifestKind::Requirements,
                    line: start,
                    message: format!("not a requirement: {line}"),
                })
            }
        }
    }
    Ok((entries, diags))
}

fn strip_comment(line: &str) -> &str {
    if line.trim_start().starts_with('#') {
        return "";
    }
    match line.find(" #").or_else(|| line.find("\t#")) {
        Some(i) => &line[..i],
        None => line,
    }
}

fn is_local_path(s: &str) -> bool {
    s.starts_with('.')
        || s.starts_with('/')
        || s.starts_with('~')
        || s.starts_with("file:")
        || (s.contains("://") && !s.contains('@'))
        || s.ends_with(".whl")
        || s.ends_with(".tar.gz")
        || s.ends_with(".zip")
}

/// Minimal reader for the `dependencies:` list of a conda environment file,
/// including its nested `pip:` list.
fn parse_environment(text: &str) -> Result<ParsedManifest, ManifestParseError> {
    let err = |line: u32, message: String| ManifestParseError {
        kind: ManifestKind::Environment,
        line,
        message,
    };
    let mut entries = Vec::new();
    let mut diags = Vec::new();
    let mut in_deps = false;
    let mut deps_indent: Option<usize> = None;
    let mut pip_indent: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i as u32 + 1;
        if raw.contains('\t') && raw.trim_start().len() != raw.len() && raw.starts_with('\t') {
            return Err(err(n, "tab indentation".into()));
        }
        let body = strip_comment(raw);
        if body.trim().is_empty() || body.trim() == "---" {
            continue;
        }
        let indent = body.len() - body.trim_start().len();
        let t = body.trim();
        if indent == 0 {
            in_deps = false;
            pip_indent = None;
            if let Some(rest) = t.strip_prefix("dependencies:") {
                if !rest.trim().is_empty() {
                    return Err(err(n, "inline dependencies value".into()));
                }
                in_deps = true;
                deps_indent = None;
            } else if !t.contains(':') && !t.starts_with('-') {
                return Err(err(n, format!("unexpected top-level text: {t}")));
            }
            continue;
        }
        if !in_deps {
            continue;
        }
        let Some(item) = t.strip_prefix('-') else {
            if pip_indent.is_some() {
                continue;
            }
            return Err(err(n, format!("expected list item: {t}")));
        };
        let item = item.trim().trim_matches(|c| c == '"' || c == '\'');
        if let Some(p) = pip_indent {
            if indent > p {
                if item.starts_with('-') || is_local_path(item) {
                    diags.push(ManifestDiagnostic {
                        line: n,
                        message: format!("skipped pip option or local install: {item}"),
                    });
                    continue;
                }
                let e = parse_requirement(item, ManifestKind::Environment, n)
                    .ok_or_else(|| err(n, format!("not a requirement: {item}")))?;
                entries.push(e);
                continue;
            }
            pip_indent = None;
        }
        let d = *deps_indent.get_or_insert(indent);
        if indent != d {
            return Err(err(n, "inconsistent list indentation".into()));
        }
        if item == "pip:" {
            pip_indent = Some(indent);
            continue;
        }
        let item = item.rsplit_once("::").map_or(item, |(_, s)| s);
        let (name, spec) = split_conda(item);
        if name.is_empty() {
            return Err(err(n, format!("not a package spec: {item}")));
        }
        let name = normalize_name(name);
        if name == "python" || name == "pip" {
            continue;
        }
        entries.push(DependencyEntry {
            name,
            version_spec: strip_spaces(spec),
            source_file: ManifestKind::Environment,
            extras: None,
            markers: None,
            line: n,
        });
    }
    Ok((entries, diags))
}

fn split_conda(item: &str) -> (&str, &str) {
    let cut = item
        .find(['=', '<', '>', '!', '~', ' '])
        .unwrap_or(item.len());
    (item[..cut].trim(), item[cut..].trim())
}

fn toml_line_of(text: &str, key: &str) -> u32 {
    let quoted = format!("\"{key}\"");
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.starts_with(&format!("{key} "))
                || t.starts_with(&format!("{key}="))
                || t.starts_with(&quoted)
                || t.starts_with(&format!("\"{key}"))
        })
        .map_or(0, |i| i as u32 + 1)
}

fn toml_table_entries(
    text: &str,
    table: &toml::Table,
    kind: ManifestKind,
    entries: &mut Vec<DependencyEntry>,
    diags: &mut Vec<ManifestDiagnostic>,
) {
    for (name, v) in table {
        let line = toml_line_of(text, name);
        let norm = normalize_name(name);
        if norm == "python" {
            continue;
        }
        let (spec, extras, markers) = match v {
            toml::Value::String(s) => (s.clone(), None, None),
            toml::Value::Table(t) => {
                if t.contains_key("path")
                    || t.contains_key("file")
                    || t.get("editable").and_then(|e| e.as_bool()) == Some(true)
                        && !t.contains_key("version")
                {
                    diags.push(ManifestDiagnostic {
                        line,
                        message: format!("skipped local install: {name}"),
                    });
                    continue;
                }
                let spec = if let Some(v) = t.get("version").and_then(|v| v.as_str()) {
                    v.to_string()
                } else if let Some(g) = t.get("git").and_then(|v| v.as_str()) {
                    format!("@git+{g}")
                } else {
                    String::new()
                };
                let extras = t.get("extras").and_then(|x| x.as_array()).map(|a| {
                    let names: Vec<&str> = a.iter().filter_map(|v| v.as_str()).collect();
                    format!("[{}]", names.join(","))
                });
                let markers = t
                    .get("markers")
                    .and_then(|m| m.as_str())
                    .map(str::to_string);
                (spec, extras, markers)
            }
            toml::Value::Array(_) => {
                diags.push(ManifestDiagnostic {
                    line,
                    message: format!("multiple constraint sets for {name}; kept first"),
                });
                let first = v
                    .as_array()
                    .and_then(|a| a.first())
                    .and_then(|t| t.get("version"))
                    .and_then(|v| v.as_str())
                    .unwrap_or("")
                    .to_string();
                (first, None, None)
            }
            _ => {
                diags.push(ManifestDiagnostic {
                    line,
                    message: format!("unsupported value for {name}"),
                });
                continue;
            }
        };
        let spec = strip_spaces(&spec);
        entries.push(DependencyEntry {
            name: norm,
            version_spec: if spec == "*" { String::new() } else { spec },
            source_file: kind,
            extras,
            markers,
            line,
        });
    }
}

fn parse_toml(text: &str, kind: ManifestKind) -> Result<toml::Table, ManifestParseError> {
    text.parse::<toml::Table>().map_err(|e| ManifestParseError {
        kind,
        line: e
            .span()
            .map_or(0, |s| text[..s.start].matches('\n').count() as u32 + 1),
        message: e.message().to_string(),
    })
}

fn parse_pipfile(text: &str) -> Result<ParsedManifest, ManifestParseError> {
    let doc = parse_toml(text, ManifestKind::Pipfile)?;
    let mut entries = Vec::new();
    let mut diags = Vec::new();
    for section in ["packages", "dev-packages"] {
        if let Some(t) = doc.get(section).and_then(|v| v.as_table()) {
            toml_table_entries(text, t, ManifestKind::Pipfile, &mut entries, &mut diags);
        }
    }
    Ok((entries, diags))
}

fn parse_pyproject(text: &str) -> Result<ParsedManifest, ManifestParseError> {
    let kind = ManifestKind::Pyproject;
    let doc = parse_toml(text, kind)?;
    let mut entries = Vec::new();
    let mut diags = Vec::new();
    let mut pep508 = |s: &str, diags: &mut Vec<ManifestDiagnostic>| {
        let line = text
            .lines()
            .position(|l| l.contains(s))
            .map_or(0, |i| i as u32 + 1);
        if is_local_path(s) {
            diags.push(ManifestDiagnostic {
                line,
                message: format!("skipped local install: {s}"),
            });
            return Ok(());
        }
        match parse_requirement(s, kind, line) {
            Some(e) => {
                entries.push(e);
                Ok(())
            }
            None => Err(ManifestParseError {
                kind,
                line,
                message: format!("not a requirement: {s}"),
            }),
        }
    };
    if let Some(project) = doc.get("project").and_then(|v| v.as_table()) {
        if let Some(deps) = project.get("dependencies").and_then(|v| v.as_array()) {
            for d in deps.iter().filter_map(|v| v.as_str()) {
                pep508(d, &mut diags)?;
            }
        }
        if let Some(opt) = project
            .get("optional-dependencies")
            .and_then(|v| v.as_table())
        {
            for group in opt.values().filter_map(|v| v.as_array()) {
                for d in group.iter().filter_map(|v| v.as_str()) {
                    pep508(d, &mut diags)?;
                }
            }
        }
    }
    if let Some(poetry) = doc
        .get("tool")
        .and_then(|t| t.get("poetry"))
        .and_then(|v| v.as_table())
    {
        let mut tables = Vec::new();
        for key in ["dependencies", "dev-dependencies"] {
            if let Some(t) = poetry.get(key).and_then(|v| v.as_table()) {
                tables.push(t);
            }
        }
        if let Some(groups) = poetry.get("group").and_then(|v| v.as_table()) {
            for g in groups.values() {
                if let Some(t) = g.get("dependencies").and_then(|v| v.as_table()) {
                    tables.push(t);
                }
            }
        }
        for t in tables {
            toml_table_entries(text, t, kind, &mut entries, &mut diags);
        }
    }
    Ok((entries, diags))
}

// ---- curated pairs and validation ---------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnalogousPairs {
    pairs: BTreeSet<(String, String)>,
}

impl AnalogousPairs {
    pub fn load(path: &Path) -> std::io::Result<(Self, Vec<ManifestDiagnostic>)> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// One `name_a,name_b` pair per line; `#` comments and an optional
    /// header are allowed. The result is closed under symmetry.
    pub fn parse(text: &str) -> (Self, Vec<ManifestDiagnostic>) {
        let mut pairs = BTreeSet::new();
        let mut diags = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if i == 0 && parts == ["name_a", "name_b"] {
                continue;
            }
            if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
                diags.push(ManifestDiagnostic {
                    line: i as u32 + 1,
                    message: format!("malformed pair: {line:?}"),
                });
                continue;
            }
            let (a, b) = (normalize_name(parts[0]), normalize_name(parts[1]));
            pairs.insert((a.clone(), b.clone()));
            pairs.insert((b, a));
        }
        (AnalogousPairs { pairs }, diags)
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.contains(&(a.to_string(), b.to_string()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ManifestCandidate {
    pub pair: PairRef,
    pub name_from: String,
    pub name_to: String,
    pub file: String,
    pub commit: String,
}

/// Second-stage check for candidates not found in the curated list.
pub trait MigrationValidator {
    /// `Some(true)` confirms, `Some(false)` rejects, `None` abstains.
    fn validate(&self, candidate: &ManifestCandidate) -> Option<bool>;
}

impl MigrationValidator for MigrationAnnotations {
    fn validate(&self, c: &ManifestCandidate) -> Option<bool> {
        self.verdict(&c.pair, &c.file, &c.commit, &c.name_from, &c.name_to)
            .map(|a| a.confirmed())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validation {
    CuratedPair,
    Validator,
    Rejected,
}

// ---- diffing --------------------------------------------------------------------

/// Parsed manifests of one revision keyed by repository path.
pub type ManifestSnapshot = BTreeMap<String, Vec<DependencyEntry>>;

/// Dependencies entering and leaving one manifest in one commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCommitChange {
    pub commit: String,
    pub file: String,
    pub removed: Vec<(String, u32)>,
    pub added: Vec<(String, u32)>,
    /// Names whose specifier changed.
    pub updated: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestChange {
    pub id: String,
    pub pair: PairRef,
    pub kind: ChangeKind,
    pub name_from: Option<String>,
    pub name_to: Option<String>,
    pub spec_from: Option<String>,
    pub spec_to: Option<String>,
    pub file: String,
    pub commit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<Validation>,
}

pub struct DiffInputs<'a> {
    pub pair: &'a PairRef,
    pub commits: &'a [ManifestCommitChange],
    pub curated: &'a AnalogousPairs,
    pub validator: &'a dyn MigrationValidator,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDiff {
    pub changes: Vec<ManifestChange>,
    pub candidates: Vec<ManifestCandidate>,
}

/// Classifies dependency changes between two releases, per manifest file.
pub fn diff_manifests(
    prev: &ManifestSnapshot,
    next: &ManifestSnapshot,
    inputs: &DiffInputs<'_>,
) -> ManifestDiff {
    let files: BTreeSet<&String> = prev.keys().chain(next.keys()).collect();
    let empty = Vec::new();
    let mut out = ManifestDiff::default();
    for file in files {
        let a: BTreeMap<&str, &DependencyEntry> = prev
            .get(file)
            .unwrap_or(&empty)
            .iter()
            .map(|e| (e.name.as_str(), e))
            .collect();
        let b: BTreeMap<&str, &DependencyEntry> = next
            .get(file)
            .unwrap_or(&empty)
            .iter()
            .map(|e| (e.name.as_str(), e))
            .collect();
        let mut removed: BTreeMap<String, u64> = BTreeMap::new();
        let mut added: BTreeMap<String, u64> = BTreeMap::new();
        let mut updates = Vec::new();
        for (n, ea) in &a {
            match b.get(n) {
                None => {
                    removed.insert(n.to_string(), 1);
                }
                Some(eb) if eb.version_spec != ea.version_spec => updates.push((*ea, *eb)),
                _ => {}
            }
        }
        for n in b.keys() {
            if !a.contains_key(n) {
                added.insert(n.to_string(), 1);
            }
        }
        let file_commits: Vec<&ManifestCommitChange> =
            inputs.commits.iter().filter(|c| &c.file == file).collect();
        let bound = removed.len().min(added.len()) as u64;
        let mut rem_budget = removed.clone();
        let mut add_budget = added.clone();
        let mut remaining = bound;
        let mut migrations = Vec::new();
        for ch in &file_commits {
            if remaining == 0 {
                break;
            }
            let r: Vec<Instance> = ch
                .removed
                .iter()
                .map(|(n, l)| Instance { id: n, line: *l })
                .collect();
            let ad: Vec<Instance> = ch
                .added
                .iter()
                .map(|(n, l)| Instance { id: n, line: *l })
                .collect();
            let picks = pair_instances(&r, &ad, &mut rem_budget, &mut add_budget, remaining);
            remaining -= picks.len() as u64;
            for (i, j) in picks {
                let cand = ManifestCandidate {
                    pair: inputs.pair.clone(),
                    name_from: r[i].id.to_string(),
                    name_to: ad[j].id.to_string(),
                    file: file.clone(),
                    commit: ch.commit.clone(),
                };
                out.candidates.push(cand.clone());
                let validation = if inputs.curated.contains(&cand.name_from, &cand.name_to) {
                    Validation::CuratedPair
                } else if inputs.validator.validate(&cand) == Some(true) {
                    Validation::Validator
                } else {
                    Validation::Rejected
                };
                if validation != Validation::Rejected {
                    migrations.push((cand, validation));
                }
            }
        }
        let locate = |name: &str, pick: fn(&ManifestCommitChange) -> Vec<&str>| {
            file_commits
                .iter()
                .rev()
                .find(|c| pick(c).contains(&name))
                .map(|c| c.commit.clone())
        };
        for (cand, validation) in &migrations {
            removed.remove(&cand.name_from);
            added.remove(&cand.name_to);
            out.changes.push(ManifestChange {
                id: String::new(),
                pair: inputs.pair.clone(),
                kind: ChangeKind::Migration,
                spec_from: a
                    .get(cand.name_from.as_str())
                    .map(|e| e.version_spec.clone()),
                spec_to: b.get(cand.name_to.as_str()).map(|e| e.version_spec.clone()),
                name_from: Some(cand.name_from.clone()),
                name_to: Some(cand.name_to.clone()),
                file: file.clone(),
                commit: Some(cand.commit.clone()),
                validation: Some(*validation),
            });
        }
        for n in removed.keys() {
            out.changes.push(ManifestChange {
                id: String::new(),
                pair: inputs.pair.clone(),
                kind: ChangeKind::Removal,
                name_from: Some(n.clone()),
                name_to: None,
                spec_from: a.get(n.as_str()).map(|e| e.version_spec.clone()),
                spec_to: None,
                file: file.clone(),
                commit: locate(n, |c| c.removed.iter().map(|(n, _)| n.as_str()).collect()),
                validation: None,
            });
        }
        for n in added.keys() {
            out.changes.push(ManifestChange {
                id: String::new(),
                pair: inputs.pair.clone(),
                kind: ChangeKind::Addition,
                name_from: None,
                name_to: Some(n.clone()),
                spec_from: None,
                spec_to: b.get(n.as_str()).map(|e| e.version_spec.clone()),
                file: file.clone(),
                commit: locate(n, |c| c.added.iter().map(|(n, _)| n.as_str()).collect()),
                validation: None,
            });
        }
        for (ea, eb) in updates {
            out.changes.push(ManifestChange {
                id: String::new(),
                pair: inputs.pair.clone(),
                kind: ChangeKind::Update,
                name_from: Some(ea.name.clone()),
                name_to: Some(eb.name.clone()),
                spec_from: Some(ea.version_spec.clone()),
                spec_to: Some(eb.version_spec.clone()),
                file: file.clone(),
                commit: locate(&ea.name, |c| c.updated.iter().map(String::as_str).collect()),
                validation: None,
            });
        }
    }
    for (i, c) in out.changes.iter_mut().enumerate() {
        c.id = format!("{}#{}/l{}", c.pair.line_id, c.pair.pair_index, i);
    }
    out
}

// ---- mining ---------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHistory {
    pub snapshots: Vec<ManifestSnapshot>,
    /// Per release pair, dependency changes per commit and manifest.
    pub changes: Vec<Vec<ManifestCommitChange>>,
    pub diagnostics: Vec<(String, ManifestDiagnostic)>,
    /// Files skipped as malformed, with the error.
    pub errors: Vec<(String, String)>,
}

fn is_manifest(path: &str, filters: &FilterConfig) -> bool {
    ManifestKind::from_path(path).is_some() && !filters.is_vendored_path(path)
}

struct ManifestReader<'a> {
    repo: &'a Repo,
    cache: HashMap<String, Result<ParsedManifest, ManifestParseError>>,
}

impl ManifestReader<'_> {
    fn parse(&mut self, blob: &str, path: &str) -> Result<(), GitError> {
        if self.cache.contains_key(blob) {
            return Ok(());
        }
        let kind = ManifestKind::from_path(path).expect("manifest path");
        let bytes = self.repo.read_blobs(&[blob.to_string()])?.remove(0);
        self.cache
            .insert(blob.to_string(), parse_manifest(&bytes, kind));
        Ok(())
    }

    fn entries(&self, blob: &str) -> Vec<DependencyEntry> {
        match self.cache.get(blob) {
            Some(Ok((e, _))) => e.clone(),
            _ => Vec::new(),
        }
    }
}

/// Manifest snapshots and per-commit dependency changes for a release line.
pub fn mine_manifests(
    repo: &Repo,
    line: &ReleaseLine,
    filters: &FilterConfig,
) -> Result<ManifestHistory, GitError> {
    let mut reader = ManifestReader {
        repo,
        cache: HashMap::new(),
    };
    let mut hist = ManifestHistory::default();
    let mut seen_diag = BTreeSet::new();
    let tip = &line.releases.last().expect("non-empty line").commit;
    let chain = repo.first_parent(tip)?;
    for r in &line.releases {
        let mut snap = ManifestSnapshot::new();
        for e in repo.ls_tree(&r.commit)? {
            if !is_manifest(&e.path, filters) {
                continue;
            }
            reader.parse(&e.blob, &e.path)?;
            match &reader.cache[&e.blob] {
                Ok((entries, diags)) => {
                    if seen_diag.insert(e.blob.clone()) {
                        for d in diags {
                            hist.diagnostics.push((e.path.clone(), d.clone()));
                        }
                    }
                    snap.insert(e.path.clone(), entries.clone());
                }
                Err(err) => {
                    if seen_diag.insert(e.blob.clone()) {
                        hist.errors.push((e.path.clone(), err.to_string()));
                    }
                }
            }
        }
        hist.snapshots.push(snap);
    }
    for w in line.positions.windows(2) {
        let mut pair_changes = Vec::new();
        for pos in w[0] + 1..=w[1] {
            let c = &chain[pos];
            let parent = &chain[pos - 1].id;
            for d in repo.diff_raw(parent, &c.id)? {
                let old = d.old_path.as_ref().zip(d.old_blob.as_ref());
                let new = d.new_path.as_ref().zip(d.new_blob.as_ref());
                let path = d
                    .new_path
                    .clone()
                    .or(d.old_path.clone())
                    .unwrap_or_default();
                if !is_manifest(&path, filters) {
                    continue;
                }
                let mut side =
                    |s: Option<(&String, &String)>| -> Result<Vec<DependencyEntry>, GitError> {
                        match s {
                            Some((p, b)) if is_manifest(p, filters) => {
                                reader.parse(b, p)?;
                                Ok(reader.entries(b))
                            }
                            _ => Ok(Vec::new()),
                        }
                    };
                let before = side(old)?;
                let after = side(new)?;
                let bmap: BTreeMap<&str, &DependencyEntry> =
                    before.iter().map(|e| (e.name.as_str(), e)).collect();
                let amap: BTreeMap<&str, &DependencyEntry> =
                    after.iter().map(|e| (e.name.as_str(), e)).collect();
                let removed: Vec<(String, u32)> = before
                    .iter()
                    .filter(|e| !amap.contains_key(e.name.as_str()))
                    .map(|e| (e.name.clone(), e.line))
                    .collect();
                let added: Vec<(String, u32)> = after
                    .iter()
                    .filter(|e| !bmap.contains_key(e.name.as_str()))
                    .map(|e| (e.name.clone(), e.line))
                    .collect();
                let updated: Vec<String> = after
                    .iter()
                    .filter(|e| {
                        bmap.get(e.name.as_str())
                            .is_some_and(|p| p.version_spec != e.version_spec)
                    })
                    .map(|e| e.name.clone())
                    .collect();
                if removed.is_empty() && added.is_empty() && updated.is_empty() {
                    continue;
                }
                pair_changes.push(ManifestCommitChange {
                    commit: c.id.clone(),
                    file: path,
                    removed,
                    added,
                    updated,
                });
            }
        }
        hist.changes.push(pair_changes);
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn req(text: &str) -> Vec<DependencyEntry> {
        parse_manifest(text.as_bytes(), ManifestKind::Requirements)
            .unwrap()
            .0
    }

    #[test]
    fn requirement_with_range() {
        let e = &req("torch>=2.1,<3\n")[0];
        assert_eq!(e.name, "torch");
        assert_eq!(e.version_spec, ">=2.1,<3");
    }

    #[test]
    fn name_normalization() {
        assert_eq!(req("Typing_Extensions==4.8.0")[0].name, "typing-extensions");
        assert_eq!(normalize_name("zope.interface"), "zope-interface");
        assert_eq!(normalize_name("A__B--c..D"), "a-b-c-d");
        assert_eq!(normalize_name("Pillow"), "pillow");
    }

    #[test]
    fn comment_only_file() {
        assert!(req("# nothing here\n\n   # still nothing\n").is_empty());
    }

    #[test]
    fn requirements_skips_with_diagnostics() {
        let (e, d) = parse_manifest(
            b"-r base.txt\n-e .\n./local/pkg\nnumpy  # pinned elsewhere\nrequests[socks] >= 2.0 ; python_version>'3.8'\n--index-url https://x\n",
            ManifestKind::Requirements,
        )
        .unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[1].extras.as_deref(), Some("[socks]"));
        assert_eq!(e[1].markers.as_deref(), Some("python_version>'3.8'"));
        assert_eq!(d.len(), 4);
    }

    #[test]
    fn requirements_malformed() {
        assert!(parse_manifest(b"numpy\n!!!\n", ManifestKind::Requirements).is_err());
    }

    #[test]
    fn duplicate_names_keep_last() {
        let (e, d) = parse_manifest(b"numpy==1\nNumPy==2\n", ManifestKind::Requirements).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].version_spec, "==2");
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn environment_file() {
        let text = "name: env\nchannels:\n  - conda-forge\ndependencies:\n  - python=3.10\n  - conda-forge::pytorch=2.0\n  - numpy >=1.24\n  - pip\n  - pip:\n    - transformers==4.40\n    - -e .\nprefix: /opt\n";
        let (e, d) = parse_manifest(text.as_bytes(), ManifestKind::Environment).unwrap();
        let names: Vec<(&str, &str)> = e
            .iter()
            .map(|e| (e.name.as_str(), e.version_spec.as_str()))
            .collect();
        assert_eq!(
            names,
            vec![
                ("pytorch", "=2.0"),
                ("numpy", ">=1.24"),
                ("transformers", "==4.40")
            ]
        );
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn environment_malformed() {
        assert!(parse_manifest(b"dependencies: [a, b]\n", ManifestKind::Environment).is_err());
    }

    #[test]
    fn pipfile() {
        let text = "[packages]\nrequests = \"*\"\nDjango = {version = \">=4\", extras = [\"bcrypt\"]}\nlocal = {path = \".\"}\n\n[dev-packages]\npytest = \"==8.0\"\n\n[requires]\npython_version = \"3.11\"\n";
        let (e, d) = parse_manifest(text.as_bytes(), ManifestKind::Pipfile).unwrap();
        let names: Vec<(&str, &str)> = e
            .iter()
            .map(|e| (e.name.as_str(), e.version_spec.as_str()))
            .collect();
        assert_eq!(
            names,
            vec![("requests", ""), ("django", ">=4"), ("pytest", "==8.0")]
        );
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn pyproject_pep621_and_poetry() {
        let text = r#"
[project]
name = "x"
dependencies = ["httpx>=0.27", "rich"]
[project.optional-dependencies]
dev = ["pytest"]
[tool.poetry.dependencies]
python = "^3.10"
torch = "^2.2"
[tool.poetry.group.docs.dependencies]
mkdocs = { version = "^1.5" }
"#;
        let (e, _) = parse_manifest(text.as_bytes(), ManifestKind::Pyproject).unwrap();
        let mut names: Vec<&str> = e.iter().map(|e| e.name.as_str()).collect();
        names.sort();
        assert_eq!(names, vec!["httpx", "mkdocs", "pytest", "rich", "torch"]);
        assert!(parse_manifest(b"[project\n", ManifestKind::Pyproject).is_err());
    }

    #[test]
    fn manifest_kind_from_path() {
        assert_eq!(
            ManifestKind::from_path("a/requirements-dev.txt"),
            Some(ManifestKind::Requirements)
        );
        assert_eq!(
            ManifestKind::from_path("Pipfile"),
            Some(ManifestKind::Pipfile)
        );
        assert_eq!(ManifestKind::from_path("Pipfile.lock"), None);
        assert_eq!(ManifestKind::from_path("setup.py"), None);
    }

    #[test]
    fn analogous_pairs() {
        let (p, d) = AnalogousPairs::parse("name_a,name_b\nrequests,httpx\nrequests,httpx\na,\n");
        assert!(p.contains("requests", "httpx"));
        assert!(p.contains("httpx", "requests"));
        assert_eq!(p.len(), 2);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, 4);
    }

    fn snap(file: &str, text: &str) -> ManifestSnapshot {
        [(file.to_string(), req(text))].into_iter().collect()
    }

    fn pair() -> PairRef {
        PairRef {
            line_id: "r@main".into(),
            pair_index: 0,
        }
    }

    #[test]
    fn update_and_identity() {
        let a = snap("requirements.txt", "requests==2.31\n");
        let b = snap("requirements.txt", "requests==2.32\n");
        let cur = AnalogousPairs::default();
        let ann = MigrationAnnotations::default();
        let inputs = DiffInputs {
            pair: &pair(),
            commits: &[],
            curated: &cur,
            validator: &ann,
        };
        let d = diff_manifests(&a, &b, &inputs);
        assert_eq!(d.changes.len(), 1);
        assert_eq!(d.changes[0].kind, ChangeKind::Update);
        assert!(diff_manifests(&a, &a, &inputs).changes.is_empty());
    }

    #[test]
    fn curated_migration_and_split_commits() {
        let a = snap("requirements.txt", "requests\nflask\n");
        let b = snap("requirements.txt", "httpx\nfastapi\n");
        let (cur, _) = AnalogousPairs::parse("requests,httpx\nflask,fastapi\n");
        let ann = MigrationAnnotations::default();
        let commits = vec![
            ManifestCommitChange {
                commit: "c1".into(),
                file: "requirements.txt".into(),
                removed: vec![("requests".into(), 1)],
                added: vec![("httpx".into(), 1)],
                updated: vec![],
            },
            ManifestCommitChange {
                commit: "c2".into(),
                file: "requirements.txt".into(),
                removed: vec![("flask".into(), 2)],
                added: vec![],
                updated: vec![],
            },
            ManifestCommitChange {
                commit: "c3".into(),
                file: "requirements.txt".into(),
                removed: vec![],
                added: vec![("fastapi".into(), 2)],
                updated: vec![],
            },
        ];
        let inputs = DiffInputs {
            pair: &pair(),
            commits: &commits,
            curated: &cur,
            validator: &ann,
        };
        let d = diff_manifests(&a, &b, &inputs);
        let kinds: Vec<(ChangeKind, Option<&str>, Option<&str>)> = d
            .changes
            .iter()
            .map(|c| (c.kind, c.name_from.as_deref(), c.name_to.as_deref()))
            .collect();
        assert_eq!(
            kinds,
            vec![
                (ChangeKind::Migration, Some("requests"), Some("httpx")),
                (ChangeKind::Removal, Some("flask"), None),
                (ChangeKind::Addition, None, Some("fastapi")),
            ]
        );
        assert_eq!(d.changes[1].commit.as_deref(), Some("c2"));
    }

    #[test]
    fn validator_confirms_uncurated() {
        let a = snap("requirements.txt", "nose\n");
        let b = snap("requirements.txt", "pytest\n");
        let cur = AnalogousPairs::default();
        let ann = MigrationAnnotations::parse(
            "line_id,pair_index,file,commit,ptm_from,ptm_to,verdict,note\nr@main,0,requirements.txt,c1,nose,pytest,Y,\n",
        )
        .unwrap();
        let commits = vec![ManifestCommitChange {
            commit: "c1".into(),
            file: "requirements.txt".into(),
            removed: vec![("nose".into(), 1)],
            added: vec![("pytest".into(), 1)],
            updated: vec![],
        }];
        let inputs = DiffInputs {
            pair: &pair(),
            commits: &commits,
            curated: &cur,
            validator: &ann,
        };
        let d = diff_manifests(&a, &b, &inputs);
        assert_eq!(d.changes.len(), 1);
        assert_eq!(d.changes[0].validation, Some(Validation::Validator));
    }

    fn arb_entry() -> impl Strategy<Value = String> {
        (
            "[a-z][a-z0-9]{0,6}([-_.][a-z0-9]{1,4})?",
            proptest::option::of("(==|>=|<=|~=|!=)[0-9]{1,2}(\\.[0-9]{1,2}){0,2}"),
            proptest::option::of("\\[[a-z]{1,5}\\]"),
        )
            .prop_map(|(n, s, x)| format!("{n}{}{}", x.unwrap_or_default(), s.unwrap_or_default()))
    }

    proptest! {
        #[test]
        fn requirements_round_trip(lines in proptest::collection::vec(arb_entry(), 0..8)) {
            let text = lines.join("\n");
            let first = req(&text);
            let rendered: Vec<String> = first.iter().map(to_requirement_line).collect();
            let second = req(&rendered.join("\n"));
            let strip = |v: &[DependencyEntry]| -> Vec<(String, String, Option<String>)> {
                v.iter().map(|e| (e.name.clone(), e.version_spec.clone(), e.extras.clone())).collect()
            };
            prop_assert_eq!(strip(&first), strip(&second));
        }

        #[test]
        fn migrations_conserve(n_rem in 0usize..4, n_add in 0usize..4) {
            let a: Vec<String> = (0..n_rem).map(|i| format!("old{i}")).collect();
            let b: Vec<String> = (0..n_add).map(|i| format!("new{i}")).collect();
            let sa = snap("r.txt", &a.join("\n"));
            let sb = snap("r.txt", &b.join("\n"));
            let commits = vec![ManifestCommitChange {
                commit: "c".into(), file: "r.txt".into(),
                removed: a.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect(),
                added: b.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect(),
                updated: vec![],
            }];
            let mut pairs = String::new();
            for x in &a { for y in &b { pairs.push_str(&format!("{x},{y}\n")); } }
            let (cur, _) = AnalogousPairs::parse(&pairs);
            let ann = MigrationAnnotations::default();
            let inputs = DiffInputs { pair: &pair(), commits: &commits, curated: &cur, validator: &ann };
            let d = diff_manifests(&sa, &sb, &inputs);
            let n = |k| d.changes.iter().filter(|c| c.kind == k).count();
            prop_assert_eq!(n(ChangeKind::Migration), n_rem.min(n_add));
            prop_assert_eq!(n(ChangeKind::Removal) + n(ChangeKind::Migration), n_rem);
            prop_assert_eq!(n(ChangeKind::Addition) + n(ChangeKind::Migration), n_add);
        }
    }
}
