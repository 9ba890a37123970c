//! Documentation artifacts around change events and their annotation sheets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::change::ChangeKind;
use crate::git::{GitError, Repo};
use crate::history::PairCommit;
use crate::python::lexer::tokenize;
use crate::stats::{cohens_kappa, DegenerateAgreementError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    CommitMessage,
    PrDescription,
    Issue,
    ReleaseNote,
    MarkdownFile,
    CodeComment,
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArtifactKind::CommitMessage => "commit_message",
            ArtifactKind::PrDescription => "pr_description",
            ArtifactKind::Issue => "issue",
            ArtifactKind::ReleaseNote => "release_note",
            ArtifactKind::MarkdownFile => "markdown_file",
            ArtifactKind::CodeComment => "code_comment",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocArtifact {
    pub id: String,
    pub kind: ArtifactKind,
    pub text: String,
    /// Commit id, `path:line`, tag or `#number`.
    pub source: String,
    pub events: Vec<String>,
}

/// A changed call site whose nearby comments are harvested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub rev: String,
    pub path: String,
    pub line: u32,
}

/// What the harvester needs to know about one change event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRef {
    pub id: String,
    pub kind: ChangeKind,
    pub file: Option<String>,
    pub commit: Option<String>,
    /// PTM ids or library names involved.
    pub terms: Vec<String>,
    #[serde(default)]
    pub anchors: Vec<Anchor>,
}

// ---- PR / issue sidecar ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub number: u64,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub linked_commits: Vec<String>,
    /// `pr` or `issue`; when absent, records with linked commits are pull
    /// requests.
    #[serde(default)]
    pub kind: Option<String>,
}

impl IssueRecord {
    pub fn artifact_kind(&self) -> ArtifactKind {
        match self.kind.as_deref() {
            Some("issue") => ArtifactKind::Issue,
            Some(_) => ArtifactKind::PrDescription,
            None if self.linked_commits.is_empty() => ArtifactKind::Issue,
            None => ArtifactKind::PrDescription,
        }
    }

    fn links(&self, commit: &str) -> bool {
        self.linked_commits
            .iter()
            .any(|c| c.len() >= 7 && commit.starts_with(c.as_str()))
    }
}

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IssueIndex {
    by_number: BTreeMap<u64, IssueRecord>,
}

impl IssueIndex {
    pub fn load(path: &Path) -> Result<Self, SidecarError> {
        let text = std::fs::read_to_string(path).map_err(|source| SidecarError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, SidecarError> {
        let mut by_number = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: IssueRecord = serde_json::from_str(line).map_err(|e| SidecarError::Line {
                line: i + 1,
                message: e.to_string(),
            })?;
            by_number.insert(r.number, r);
        }
        Ok(IssueIndex { by_number })
    }

    pub fn get(&self, n: u64) -> Option<&IssueRecord> {
        self.by_number.get(&n)
    }

    pub fn linking(&self, commit: &str) -> impl Iterator<Item = &IssueRecord> {
        let commit = commit.to_string();
        self.by_number.values().filter(move |r| r.links(&commit))
    }
}

/// Same-repository numeric references such as `#12`.
pub fn issue_refs(text: &str) -> BTreeSet<u64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?:^|[^\w/#])#(\d+)\b").expect("valid regex"));
    re.captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

// ---- keyword screen -------------------------------------------------------------

pub const DEFAULT_VERBS: &[&str] = &[
    "add", "added", "remove", "removed", "drop", "migrate", "migrated", "replace", "replaced",
    "switch", "update", "upgrade",
];

/// Name fragments too generic to signal a specific model.
const TOKEN_STOPLIST: &[&str] = &[
    "base",
    "large",
    "small",
    "tiny",
    "mini",
    "medium",
    "uncased",
    "cased",
    "model",
    "models",
    "the",
    "and",
    "v1",
    "v2",
    "v3",
    "en",
    "multilingual",
    "pretrained",
    "finetuned",
    "hub",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordConfig {
    pub verbs: Vec<String>,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        KeywordConfig {
            verbs: DEFAULT_VERBS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn contains_word(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut from = 0;
    while let Some(i) = hay[from..].find(needle) {
        let s = from + i;
        let e = s + needle.len();
        let before = hay[..s].chars().next_back();
        let after = hay[e..].chars().next();
        let starts_word = needle.chars().next().is_some_and(is_word);
        let ends_word = needle.chars().next_back().is_some_and(is_word);
        let ok_b = !starts_word || before.is_none_or(|c| !is_word(c));
        let ok_a = !ends_word || after.is_none_or(|c| !is_word(c));
        if ok_b && ok_a {
            return true;
        }
        from = s + needle.chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Full id, basename and distinctive basename tokens of a PTM id.
pub fn ptm_terms(id: &str) -> Vec<String> {
    let full = id.to_lowercase();
    let base = full.rsplit('/').next().unwrap_or(&full).to_string();
    let mut out = vec![full.clone()];
    if base != full {
        out.push(base.clone());
    }
    for t in base.split(|c: char| !c.is_alphanumeric()) {
        if t.len() >= 3
            && !TOKEN_STOPLIST.contains(&t)
            && !t.chars().all(|c| c.is_ascii_digit())
            && !out.iter().any(|o| o == t)
        {
            out.push(t.to_string());
        }
    }
    out
}

/// Case-insensitive whole-word hits of the event's identifiers and the
/// change-verb lexicon in `text`.
pub fn keyword_screen(text: &str, terms: &[String], cfg: &KeywordConfig) -> BTreeSet<String> {
    let hay = text.to_lowercase();
    let mut hits = BTreeSet::new();
    for t in terms {
        for term in ptm_terms(t) {
            if contains_word(&hay, &term) {
                hits.insert(term);
            }
        }
    }
    for v in &cfg.verbs {
        let v = v.to_lowercase();
        if contains_word(&hay, &v) {
            hits.insert(v);
        }
    }
    hits
}

fn mentions(text: &str, id: &str) -> bool {
    let hay = text.to_lowercase();
    let full = id.to_lowercase();
    let base = full.rsplit('/').next().unwrap_or(&full);
    contains_word(&hay, &full) || contains_word(&hay, base)
}

// ---- harvesting -----------------------------------------------------------------

/// Lines around a changed call site searched for comments.
pub const COMMENT_WINDOW: u32 = 3;

pub struct HarvestInput<'a> {
    /// Stable key of the release pair used as artifact id prefix.
    pub pair_key: &'a str,
    /// Commit of the later release.
    pub target_commit: &'a str,
    pub release_note: Option<&'a str>,
    pub commits: &'a [PairCommit],
    pub events: &'a [EventRef],
    pub issues: &'a IssueIndex,
}

#[derive(Default)]
struct Collector {
    by_id: BTreeMap<String, DocArtifact>,
}

impl Collector {
    fn add(
        &mut self,
        id: String,
        kind: ArtifactKind,
        text: String,
        source: String,
        events: &[&str],
    ) {
        if events.is_empty() || text.trim().is_empty() {
            return;
        }
        let a = self.by_id.entry(id.clone()).or_insert_with(|| DocArtifact {
            id,
            kind,
            text,
            source,
            events: Vec::new(),
        });
        for e in events {
            if !a.events.iter().any(|x| x == e) {
                a.events.push(e.to_string());
            }
        }
        a.events.sort();
    }

    fn issue(&mut self, key: &str, r: &IssueRecord, events: &[&str]) {
        let kind = r.artifact_kind();
        let tag = if kind == ArtifactKind::Issue {
            "issue"
        } else {
            "pr"
        };
        let text = if r.body.is_empty() {
            r.title.clone()
        } else {
            format!("{}\n\n{}", r.title, r.body)
        };
        self.add(
            format!("{key}/{tag}/{}", r.number),
            kind,
            text,
            format!("#{}", r.number),
            events,
        );
    }
}

fn short(id: &str) -> &str {
    &id[..id.len().min(12)]
}

/// Candidate documentation for the events of one release pair.
pub fn harvest(repo: &Repo, input: &HarvestInput<'_>) -> Result<Vec<DocArtifact>, GitError> {
    let key = input.pair_key;
    let mut col = Collector::default();

    for c in input.commits {
        let linked: Vec<&str> = input
            .events
            .iter()
            .filter(|e| e.file.as_ref().is_some_and(|f| c.paths.contains(f)))
            .map(|e| e.id.as_str())
            .collect();
        if linked.is_empty() {
            continue;
        }
        let msg = repo.commit_message(&c.id)?;
        for n in issue_refs(&msg) {
            if let Some(r) = input.issues.get(n) {
                col.issue(key, r, &linked);
            }
        }
        for r in input.issues.linking(&c.id) {
            col.issue(key, r, &linked);
        }
        col.add(
            format!("{key}/commit/{}", short(&c.id)),
            ArtifactKind::CommitMessage,
            msg,
            c.id.clone(),
            &linked,
        );
    }

    let all: Vec<&str> = input.events.iter().map(|e| e.id.as_str()).collect();
    if let Some(note) = input.release_note.filter(|n| !n.trim().is_empty()) {
        for n in issue_refs(note) {
            if let Some(r) = input.issues.get(n) {
                col.issue(key, r, &all);
            }
        }
        col.add(
            format!("{key}/release"),
            ArtifactKind::ReleaseNote,
            note.to_string(),
            input.target_commit.to_string(),
            &all,
        );
    }

    let md: BTreeSet<&String> = input
        .commits
        .iter()
        .flat_map(|c| &c.paths)
        .filter(|p| p.to_ascii_lowercase().ends_with(".md"))
        .collect();
    for path in md {
        let Some(bytes) = repo.show_file(input.target_commit, path)? else {
            continue;
        };
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let linked: Vec<&str> = input
            .events
            .iter()
            .filter(|e| e.terms.iter().any(|t| mentions(&text, t)))
            .map(|e| e.id.as_str())
            .collect();
        col.add(
            format!("{key}/md/{path}"),
            ArtifactKind::MarkdownFile,
            text,
            path.clone(),
            &linked,
        );
    }

    let mut sources: BTreeMap<(String, String), Option<Vec<(u32, String)>>> = BTreeMap::new();
    for e in input.events {
        for a in &e.anchors {
            let k = (a.rev.clone(), a.path.clone());
            if !sources.contains_key(&k) {
                let comments = repo.show_file(&a.rev, &a.path)?.and_then(|b| {
                    let text = String::from_utf8_lossy(&b).into_owned();
                    tokenize(&text)
                        .ok()
                        .map(|l| l.comments.into_iter().map(|c| (c.line, c.text)).collect())
                });
                sources.insert(k.clone(), comments);
            }
            let Some(Some(comments)) = sources.get(&k) else {
                continue;
            };
            let near: Vec<&(u32, String)> = comments
                .iter()
                .filter(|(l, _)| l.abs_diff(a.line) <= COMMENT_WINDOW)
                .collect();
            if near.is_empty() {
                continue;
            }
            let lines: Vec<String> = near.iter().map(|(l, _)| l.to_string()).collect();
            let text: Vec<&str> = near.iter().map(|(_, t)| t.as_str()).collect();
            col.add(
                format!(
                    "{key}/comment/{}:{}@{}",
                    a.path,
                    lines.join(","),
                    short(&a.rev)
                ),
                ArtifactKind::CodeComment,
                text.join("\n"),
                format!("{}:{}", a.path, near[0].0),
                &[e.id.as_str()],
            );
        }
    }

    Ok(col.by_id.into_values().collect())
}

// ---- annotations ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Code {
    pub code: String,
    pub sub_theme: String,
    pub theme: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub artifact_id: String,
    pub documented: bool,
    pub rationale: bool,
    #[serde(default)]
    pub keypoints: Vec<String>,
    #[serde(default)]
    pub codes: Vec<Code>,
}

#[derive(Debug, Error)]
pub enum AnnotationSchemaError {
    #[error("reading annotations: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

/// One row of the flat annotation sheet. Artifacts with several codes take
/// several rows with the same id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetRow {
    pub artifact_id: String,
    pub kind: String,
    pub excerpt: String,
    pub hits: String,
    pub documented: String,
    pub rationale: String,
    pub keypoints: String,
    pub code: String,
    pub sub_theme: String,
    pub theme: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub annotations: BTreeMap<String, Annotation>,
}

fn parse_bool(s: &str) -> Result<Option<bool>, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "1" | "true" | "yes" | "y" => Ok(Some(true)),
        "0" | "false" | "no" | "n" => Ok(Some(false)),
        other => Err(format!("not a boolean: {other:?}")),
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(';')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(str::to_string)
        .collect()
}

pub const EXCERPT_CHARS: usize = 300;

fn excerpt(text: &str) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    flat.chars().take(EXCERPT_CHARS).collect()
}

impl AnnotationSet {
    pub fn get(&self, artifact_id: &str) -> Option<&Annotation> {
        self.annotations.get(artifact_id)
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    /// Reads a CSV sheet, or JSON lines when the file ends in `.jsonl`.
    pub fn load(path: &Path) -> Result<Self, AnnotationSchemaError> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "jsonl") {
            Self::parse_jsonl(&text)
        } else {
            Self::parse_csv(&text)
        }
    }

    /// Rows whose `documented` cell is blank are unlabeled and skipped.
    pub fn parse_csv(text: &str) -> Result<Self, AnnotationSchemaError> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, r) in rdr.deserialize::<SheetRow>().enumerate() {
            let row = i + 1;
            let r = r.map_err(|e| AnnotationSchemaError::Row {
                row,
                message: e.to_string(),
            })?;
            rows.push((row, r));
        }
        Self::from_rows(rows)
    }

    fn from_rows(rows: Vec<(usize, SheetRow)>) -> Result<Self, AnnotationSchemaError> {
        let mut set = AnnotationSet::default();
        for (row, r) in rows {
            let err = |message: String| AnnotationSchemaError::Row { row, message };
            let documented = parse_bool(&r.documented).map_err(err)?;
            let rationale = parse_bool(&r.rationale).map_err(err)?;
            let has_code = !r.code.trim().is_empty();
            let Some(documented) = documented else {
                if rationale.is_some() || has_code {
                    return Err(err("labels present but documented is blank".into()));
                }
                continue;
            };
            let rationale = rationale.unwrap_or(false);
            let code = has_code.then(|| Code {
                code: r.code.trim().to_string(),
                sub_theme: r.sub_theme.trim().to_string(),
                theme: r.theme.trim().to_string(),
            });
            let a = Annotation {
                artifact_id: r.artifact_id.trim().to_string(),
                documented,
                rationale,
                keypoints: split_list(&r.keypoints),
                codes: code.into_iter().collect(),
            };
            set.insert(row, a)?;
        }
        Ok(set)
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, AnnotationSchemaError> {
        let mut set = AnnotationSet::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let a: Annotation =
                serde_json::from_str(line).map_err(|e| AnnotationSchemaError::Row {
                    row: i + 1,
                    message: e.to_string(),
                })?;
            set.insert(i + 1, a)?;
        }
        Ok(set)
    }

    fn insert(&mut self, row: usize, a: Annotation) -> Result<(), AnnotationSchemaError> {
        let err = |message: &str| AnnotationSchemaError::Row {
            row,
            message: message.to_string(),
        };
        if a.artifact_id.is_empty() {
            return Err(err("missing artifact_id"));
        }
        if a.rationale && !a.documented {
            return Err(err("rationale requires documented"));
        }
        if !a.codes.is_empty() && !a.rationale {
            return Err(err("codes require rationale"));
        }
        match self.annotations.get_mut(&a.artifact_id) {
            Some(prev) => {
                if prev.documented != a.documented || prev.rationale != a.rationale {
                    return Err(err("conflicting labels for the same artifact"));
                }
                for k in a.keypoints {
                    if !prev.keypoints.contains(&k) {
                        prev.keypoints.push(k);
                    }
                }
                for c in a.codes {
                    if !prev.codes.contains(&c) {
                        prev.codes.push(c);
                    }
                }
            }
            None => {
                self.annotations.insert(a.artifact_id.clone(), a);
            }
        }
        Ok(())
    }

    /// Flat sheet rows, one per code (or one for uncoded artifacts).
    pub fn to_rows(&self) -> Vec<SheetRow> {
        let mut out = Vec::new();
        for a in self.annotations.values() {
            let base = SheetRow {
                artifact_id: a.artifact_id.clone(),
                documented: a.documented.to_string(),
                rationale: a.rationale.to_string(),
                keypoints: a.keypoints.join("; "),
                ..SheetRow::default()
            };
            if a.codes.is_empty() {
                out.push(base.clone());
            }
            for c in &a.codes {
                out.push(SheetRow {
                    code: c.code.clone(),
                    sub_theme: c.sub_theme.clone(),
                    theme: c.theme.clone(),
                    ..base.clone()
                });
            }
        }
        out
    }
}

pub fn rows_to_csv(rows: &[SheetRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record([
        "artifact_id",
        "kind",
        "excerpt",
        "hits",
        "documented",
        "rationale",
        "keypoints",
        "code",
        "sub_theme",
        "theme",
    ])
    .expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Blank sheet with one row per artifact, most keyword hits first.
pub fn export_annotation_sheet(
    artifacts: &[DocArtifact],
    events: &[EventRef],
    cfg: &KeywordConfig,
) -> Vec<SheetRow> {
    let terms: BTreeMap<&str, &[String]> = events
        .iter()
        .map(|e| (e.id.as_str(), e.terms.as_slice()))
        .collect();
    let mut rows: Vec<(usize, SheetRow)> = artifacts
        .iter()
        .map(|a| {
            let mut hits = BTreeSet::new();
            for e in &a.events {
                if let Some(t) = terms.get(e.as_str()) {
                    hits.extend(keyword_screen(&a.text, t, cfg));
                }
            }
            let n = hits.len();
            (
                n,
                SheetRow {
                    artifact_id: a.id.clone(),
                    kind: a.kind.to_string(),
                    excerpt: excerpt(&a.text),
                    hits: hits.into_iter().collect::<Vec<_>>().join(";"),
                    ..SheetRow::default()
                },
            )
        })
        .collect();
    rows.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| a.1.artifact_id.cmp(&b.1.artifact_id))
    });
    rows.into_iter().map(|(_, r)| r).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub artifacts: usize,
    pub documented_kappa: Option<f64>,
    pub rationale_kappa: Option<f64>,
}

/// Kappa on binary labels of two raters, over the artifacts both labeled.
pub fn interrater_agreement(a: &AnnotationSet, b: &AnnotationSet) -> Agreement {
    let common: Vec<(&Annotation, &Annotation)> = a
        .annotations
        .iter()
        .filter_map(|(k, x)| b.get(k).map(|y| (x, y)))
        .collect();
    let kappa = |f: fn(&Annotation) -> bool| -> Result<f64, DegenerateAgreementError> {
        let la: Vec<bool> = common.iter().map(|(x, _)| f(x)).collect();
        let lb: Vec<bool> = common.iter().map(|(_, y)| f(y)).collect();
        cohens_kappa(&la, &lb)
    };
    Agreement {
        artifacts: common.len(),
        documented_kappa: kappa(|x| x.documented).ok(),
        rationale_kappa: kappa(|x| x.rationale).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn screen_listing_example() {
        let hits = keyword_screen(
            "Remove superseeded roberta.py script",
            &["FacebookAI/roberta-base".to_string()],
            &KeywordConfig::default(),
        );
        assert_eq!(hits, strs(&["remove", "roberta"]));
    }

    #[test]
    fn screen_empty_and_unrelated() {
        let cfg = KeywordConfig::default();
        let t = vec!["google/flan-t5-xl".to_string()];
        assert!(keyword_screen("", &t, &cfg).is_empty());
        assert!(keyword_screen("Bump bert-base-uncased to newer weights", &t, &cfg).is_empty());
        let hits = keyword_screen("Use GOOGLE/FLAN-T5-XL everywhere", &t, &cfg);
        assert!(hits.contains("google/flan-t5-xl"));
        assert!(hits.contains("flan-t5-xl"));
        assert!(hits.contains("flan"));
    }

    #[test]
    fn word_boundaries() {
        assert!(!contains_word("address", "add"));
        assert!(contains_word("(add)", "add"));
        assert!(contains_word("x roberta.py", "roberta"));
        assert!(!contains_word("xroberta", "roberta"));
    }

    #[test]
    fn refs() {
        let r = issue_refs("Merge pull request #12 from x/y; see #3 and owner/repo#9 and ##4");
        assert_eq!(r, [12, 3].into_iter().collect());
    }

    #[test]
    fn sidecar_kinds() {
        let idx = IssueIndex::parse(
            "{\"number\": 1, \"title\": \"t\", \"body\": \"b\", \"linked_commits\": [\"abcdef0123\"]}\n{\"number\": 2, \"title\": \"bug\", \"body\": \"\", \"linked_commits\": []}\n",
        )
        .unwrap();
        assert_eq!(
            idx.get(1).unwrap().artifact_kind(),
            ArtifactKind::PrDescription
        );
        assert_eq!(idx.get(2).unwrap().artifact_kind(), ArtifactKind::Issue);
        assert_eq!(idx.linking("abcdef0123456789").count(), 1);
        assert!(IssueIndex::parse("{bad").is_err());
    }

    const HEADER: &str =
        "artifact_id,kind,excerpt,hits,documented,rationale,keypoints,code,sub_theme,theme\n";

    #[test]
    fn rationale_without_documented_is_rejected() {
        let e = AnnotationSet::parse_csv(&format!("{HEADER}a1,commit_message,x,,false,true,,,,\n"))
            .unwrap_err();
        assert!(matches!(e, AnnotationSchemaError::Row { row: 1, .. }));
        let e =
            AnnotationSet::parse_csv(&format!("{HEADER}a1,commit_message,x,,true,false,,c,s,t\n"))
                .unwrap_err();
        assert!(matches!(e, AnnotationSchemaError::Row { row: 1, .. }));
    }

    #[test]
    fn multi_code_rows_merge() {
        let s = AnnotationSet::parse_csv(&format!(
            "{HEADER}a1,commit_message,x,,true,true,faster,perf,speed,quality\na1,commit_message,x,,yes,y,smaller,size,footprint,quality\na2,issue,y,,,,,,,\n"
        ))
        .unwrap();
        assert_eq!(s.len(), 1);
        let a = s.get("a1").unwrap();
        assert_eq!(a.codes.len(), 2);
        assert_eq!(a.keypoints, vec!["faster", "smaller"]);
        let back = AnnotationSet::parse_csv(&rows_to_csv(&s.to_rows())).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn blank_export_loads_empty() {
        let arts = vec![DocArtifact {
            id: "p/commit/abc".into(),
            kind: ArtifactKind::CommitMessage,
            text: "Swin Upernet model added".into(),
            source: "abc".into(),
            events: vec!["e1".into()],
        }];
        let ev = vec![EventRef {
            id: "e1".into(),
            kind: ChangeKind::Addition,
            file: None,
            commit: None,
            terms: vec!["openmmlab/upernet-swin-tiny".into()],
            anchors: vec![],
        }];
        let rows = export_annotation_sheet(&arts, &ev, &KeywordConfig::default());
        assert_eq!(rows[0].hits, "added;swin;upernet");
        let set = AnnotationSet::parse_csv(&rows_to_csv(&rows)).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn jsonl_annotations() {
        let s = AnnotationSet::parse_jsonl(
            "{\"artifact_id\":\"a\",\"documented\":true,\"rationale\":false}\n",
        )
        .unwrap();
        assert!(s.get("a").unwrap().documented);
        assert!(AnnotationSet::parse_jsonl(
            "{\"artifact_id\":\"a\",\"documented\":false,\"rationale\":true}\n"
        )
        .is_err());
    }

    fn set(labels: &[(bool, bool)]) -> AnnotationSet {
        let mut s = AnnotationSet::default();
        for (i, (d, r)) in labels.iter().enumerate() {
            s.insert(
                i,
                Annotation {
                    artifact_id: format!("a{i}"),
                    documented: *d,
                    rationale: *r,
                    keypoints: vec![],
                    codes: vec![],
                },
            )
            .unwrap();
        }
        s
    }

    #[test]
    fn agreement() {
        let a = set(&[(true, true), (true, false), (false, false), (false, false)]);
        let b = set(&[(true, true), (false, false), (true, false), (false, false)]);
        let g = interrater_agreement(&a, &b);
        assert_eq!(g.artifacts, 4);
        assert_eq!(g.documented_kappa, Some(0.0));
        assert_eq!(g.rationale_kappa, Some(1.0));
        let c = set(&[(false, false), (false, false)]);
        assert_eq!(interrater_agreement(&c, &c).documented_kappa, None);
    }
}
