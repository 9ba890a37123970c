//! Releases, release lines, release-quality filtering and per-release
//! PTM snapshots.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, PtmIndex};
use crate::extract::{
    decode_source, extract_occurrences, Diagnostic, FileSnapshot, ImportBinding, PtmOccurrence,
};
use crate::filters::{apply_fp_filters, Dropped, FilterConfig};
use crate::git::{GitError, Repo};
use crate::multiset::Multiset;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("repository has no tags")]
    NoReleases,
    #[error("none of the {} tags is reachable from any branch", .tags.len())]
    AmbiguousCoverage { tags: Vec<String> },
    #[error("cannot snapshot {commit}: {source}")]
    Snapshot {
        commit: String,
        #[source]
        source: GitError,
    },
    #[error("release metadata {path}:{line}: {message}")]
    Sidecar {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Git(#[from] GitError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SemVer {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prerelease: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build: Option<String>,
}

fn semver_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^v?(0|[1-9]\d*|\d+)\.(\d+)\.(\d+)(?:-([0-9A-Za-z.-]+))?(?:\+([0-9A-Za-z.-]+))?$",
        )
        .expect("valid regex")
    })
}

impl SemVer {
    pub fn parse(tag: &str) -> Option<SemVer> {
        let c = semver_re().captures(tag)?;
        Some(SemVer {
            major: c[1].parse().ok()?,
            minor: c[2].parse().ok()?,
            patch: c[3].parse().ok()?,
            prerelease: c.get(4).map(|m| m.as_str().to_string()),
            build: c.get(5).map(|m| m.as_str().to_string()),
        })
    }
}

impl fmt::Display for SemVer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)?;
        if let Some(p) = &self.prerelease {
            write!(f, "-{p}")?;
        }
        if let Some(b) = &self.build {
            write!(f, "+{b}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Release {
    pub tag: String,
    pub commit: String,
    pub timestamp: DateTime<Utc>,
    pub semver: Option<SemVer>,
    pub is_prerelease: bool,
    pub is_draft: bool,
}

fn looks_prerelease(tag: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:^|[^a-z])(alpha|beta|rc|dev|pre|preview)(?:[^a-z]|$)")
            .expect("valid regex")
    })
    .is_match(tag)
}

impl Release {
    /// Builds a release from a tag, deriving SemVer and prerelease status
    /// from the tag name. Non-SemVer tags count as prereleases when they
    /// carry a marker such as `rc` or `beta`.
    pub fn from_tag(tag: &str, commit: &str, timestamp: DateTime<Utc>) -> Release {
        let semver = SemVer::parse(tag);
        let is_prerelease = match &semver {
            Some(v) => v.prerelease.is_some(),
            None => looks_prerelease(tag),
        };
        Release {
            tag: tag.to_string(),
            commit: commit.to_string(),
            timestamp,
            semver,
            is_prerelease,
            is_draft: false,
        }
    }
}

/// One record of the optional release-metadata sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseMeta {
    pub tag: String,
    #[serde(default)]
    pub is_draft: Option<bool>,
    #[serde(default)]
    pub is_prerelease: Option<bool>,
    #[serde(default)]
    pub published_at: Option<DateTime<Utc>>,
    /// Release notes, if the forge had any.
    #[serde(default)]
    pub body: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReleaseMetadata {
    by_tag: BTreeMap<String, ReleaseMeta>,
}

impl ReleaseMetadata {
    pub fn load(path: &Path) -> Result<Self, HistoryError> {
        let text = std::fs::read_to_string(path).map_err(|e| HistoryError::Sidecar {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|(line, message)| HistoryError::Sidecar {
            path: path.display().to_string(),
            line,
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, (usize, String)> {
        let mut by_tag = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let m: ReleaseMeta = serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?;
            by_tag.insert(m.tag.clone(), m);
        }
        Ok(ReleaseMetadata { by_tag })
    }

    pub fn get(&self, tag: &str) -> Option<&ReleaseMeta> {
        self.by_tag.get(tag)
    }

    fn apply(&self, r: &mut Release) {
        if let Some(m) = self.get(&r.tag) {
            if let Some(d) = m.is_draft {
                r.is_draft = d;
            }
            if let Some(p) = m.is_prerelease {
                r.is_prerelease = p;
            }
            if let Some(t) = m.published_at {
                r.timestamp = t;
            }
        }
    }
}

/// All tags of the repository as releases, sorted by tag name.
pub fn list_releases(repo: &Repo, meta: &ReleaseMetadata) -> Result<Vec<Release>, HistoryError> {
    let tags = repo.tags()?;
    let mut out = Vec::with_capacity(tags.len());
    for t in tags {
        let secs = repo.commit_time(&t.commit)?;
        let ts = Utc
            .timestamp_opt(secs, 0)
            .single()
            .ok_or_else(|| GitError::Parse(format!("bad commit time {secs}")))?;
        let mut r = Release::from_tag(&t.name, &t.commit, ts);
        meta.apply(&mut r);
        out.push(r);
    }
    Ok(out)
}

// ---- release filtering --------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReleasePolicy {
    pub min_releases: usize,
    pub min_median_interval_days: f64,
    pub max_median_interval_days: f64,
    pub max_releases_per_year: f64,
    pub min_releases_per_year: f64,
    /// A repository needs at least one release on or after this date.
    pub recency_cutoff: NaiveDate,
    pub semver_ratio: f64,
}

impl Default for ReleasePolicy {
    fn default() -> Self {
        ReleasePolicy {
            min_releases: 2,
            min_median_interval_days: 7.0,
            max_median_interval_days: 365.0,
            max_releases_per_year: 52.0,
            min_releases_per_year: 1.0 / 3.0,
            recency_cutoff: NaiveDate::from_ymd_opt(2025, 1, 1).expect("valid date"),
            semver_ratio: 0.8,
        }
    }
}

impl ReleasePolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_median_interval_days > 0.0
            && self.max_median_interval_days >= self.min_median_interval_days)
        {
            return Err("interval bounds must be positive and ordered".into());
        }
        if !(self.min_releases_per_year >= 0.0
            && self.max_releases_per_year >= self.min_releases_per_year)
        {
            return Err("activity bounds must be non-negative and ordered".into());
        }
        if !(0.0..=1.0).contains(&self.semver_ratio) {
            return Err("semver_ratio must lie in [0, 1]".into());
        }
        if self.min_releases < 2 {
            return Err("min_releases must be at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Rejection {
    TooFewReleases { remaining: usize },
    MedianInterval { days: f64 },
    ActivityTooHigh { per_year: f64 },
    ActivityTooLow { per_year: f64 },
    Inactive { last_release: DateTime<Utc> },
    SemverRatio { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseFilterReport {
    /// Surviving releases in the input order.
    pub kept: Vec<Release>,
    /// Tags removed as drafts or prereleases.
    pub removed: Vec<String>,
    pub rejections: Vec<Rejection>,
}

impl ReleaseFilterReport {
    pub fn accepted(&self) -> bool {
        self.rejections.is_empty()
    }
}

pub fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    })
}

const SECS_PER_DAY: f64 = 86_400.0;

/// Applies the release-quality rules. Rejections are reported, not raised;
/// every failing rule is listed.
pub fn filter_releases(releases: &[Release], policy: &ReleasePolicy) -> ReleaseFilterReport {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for r in releases {
        if r.is_draft || r.is_prerelease {
            removed.push(r.tag.clone());
        } else {
            kept.push(r.clone());
        }
    }
    let mut rejections = Vec::new();
    if kept.len() < policy.min_releases {
        rejections.push(Rejection::TooFewReleases {
            remaining: kept.len(),
        });
    }
    let mut times: Vec<i64> = kept.iter().map(|r| r.timestamp.timestamp()).collect();
    times.sort_unstable();
    if times.len() >= 2 {
        let mut gaps: Vec<f64> = times
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 / SECS_PER_DAY)
            .collect();
        let span_days = (times[times.len() - 1] - times[0]) as f64 / SECS_PER_DAY;
        let med = median(&mut gaps).expect("non-empty");
        if med < policy.min_median_interval_days || med > policy.max_median_interval_days {
            rejections.push(Rejection::MedianInterval { days: med });
        }
        let per_year = if span_days > 0.0 {
            (times.len() - 1) as f64 * 365.0 / span_days
        } else {
            f64::INFINITY
        };
        if per_year > policy.max_releases_per_year {
            rejections.push(Rejection::ActivityTooHigh { per_year });
        } else if per_year < policy.min_releases_per_year {
            rejections.push(Rejection::ActivityTooLow { per_year });
        }
    }
    if let Some(last) = kept.iter().map(|r| r.timestamp).max() {
        if last.date_naive() < policy.recency_cutoff {
            rejections.push(Rejection::Inactive { last_release: last });
        }
    }
    if !kept.is_empty() {
        let ok = kept.iter().filter(|r| r.semver.is_some()).count();
        let ratio = ok as f64 / kept.len() as f64;
        if ratio < policy.semver_ratio {
            rejections.push(Rejection::SemverRatio { ratio });
        }
    }
    ReleaseFilterReport {
        kept,
        removed,
        rejections,
    }
}

// ---- release lines ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseLine {
    pub repo: String,
    pub branch: String,
    pub releases: Vec<Release>,
    /// First-parent positions of each release's commit on the branch.
    pub positions: Vec<usize>,
}

impl ReleaseLine {
    pub fn id(&self) -> String {
        format!("{}@{}", self.repo, self.branch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiscovery {
    pub lines: Vec<ReleaseLine>,
    /// Tags whose commits no branch reaches. Flagged, not fatal.
    pub unreachable_tags: Vec<String>,
}

/// A branch described by its first-parent chain (oldest first) and the set
/// of every commit reachable from its tip.
pub struct BranchHistory {
    pub name: String,
    pub first_parent: Vec<String>,
    pub ancestors: HashSet<String>,
}

/// Assigns releases to branches. Pure counterpart of
/// [`identify_release_lines`].
pub fn assign_release_lines(
    repo_id: &str,
    releases: &[Release],
    branches: &[BranchHistory],
) -> Result<LineDiscovery, HistoryError> {
    if releases.is_empty() {
        return Err(HistoryError::NoReleases);
    }
    let mut reachable: HashSet<&str> = HashSet::new();
    let mut lines = Vec::new();
    for b in branches {
        let candidate = releases.iter().any(|r| b.ancestors.contains(&r.commit));
        if !candidate {
            continue;
        }
        for r in releases {
            if b.ancestors.contains(&r.commit) {
                reachable.insert(&r.tag);
            }
        }
        let pos: HashMap<&str, usize> = b
            .first_parent
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut on_line: Vec<(usize, &Release)> = releases
            .iter()
            .filter_map(|r| pos.get(r.commit.as_str()).map(|p| (*p, r)))
            .collect();
        on_line.sort_by(|(pa, a), (pb, b)| {
            pa.cmp(pb)
                .then_with(|| a.semver.cmp(&b.semver))
                .then_with(|| a.tag.cmp(&b.tag))
        });
        if on_line.len() < 2 {
            continue;
        }
        lines.push(ReleaseLine {
            repo: repo_id.to_string(),
            branch: b.name.clone(),
            positions: on_line.iter().map(|(p, _)| *p).collect(),
            releases: on_line.into_iter().map(|(_, r)| r.clone()).collect(),
        });
    }
    let mut unreachable: Vec<String> = releases
        .iter()
        .filter(|r| !reachable.contains(r.tag.as_str()))
        .map(|r| r.tag.clone())
        .collect();
    unreachable.sort();
    if unreachable.len() == releases.len() {
        return Err(HistoryError::AmbiguousCoverage { tags: unreachable });
    }
    lines.sort_by(|a, b| a.branch.cmp(&b.branch));
    Ok(LineDiscovery {
        lines,
        unreachable_tags: unreachable,
    })
}

/// Reconstructs release lines from the repository's branches.
pub fn identify_release_lines(
    repo: &Repo,
    repo_id: &str,
    releases: &[Release],
) -> Result<LineDiscovery, HistoryError> {
    if releases.is_empty() {
        return Err(HistoryError::NoReleases);
    }
    let mut histories = Vec::new();
    for b in repo.branches()? {
        histories.push(BranchHistory {
            first_parent: repo
                .first_parent(&b.tip)?
                .into_iter()
                .map(|c| c.id)
                .collect(),
            ancestors: repo.ancestors(&b.tip)?,
            name: b.name,
        });
    }
    assign_release_lines(repo_id, releases, &histories)
}

// ---- snapshots ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseSnapshot {
    pub tag: String,
    pub commit: String,
    pub ptms: Multiset<String>,
    pub files: Vec<FileSnapshot>,
}

impl ReleaseSnapshot {
    pub fn from_files(tag: &str, commit: &str, files: Vec<FileSnapshot>) -> Self {
        let mut ptms = Multiset::new();
        for f in &files {
            ptms.extend_sum(&f.counts());
        }
        ReleaseSnapshot {
            tag: tag.to_string(),
            commit: commit.to_string(),
            ptms,
            files,
        }
    }
}

/// PTM instances added to and removed from one logical file by one commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitFileChange {
    pub commit: String,
    pub file_id: String,
    pub path: String,
    pub removed: Vec<(String, u32)>,
    pub added: Vec<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCommit {
    pub id: String,
    pub time: i64,
    pub paths: Vec<String>,
}

/// Everything mined for one release line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineHistory {
    pub line: ReleaseLine,
    pub snapshots: Vec<ReleaseSnapshot>,
    /// For pair `i` (releases `i`, `i+1`): PTM changes per commit and file.
    pub changes: Vec<Vec<CommitFileChange>>,
    /// For pair `i`: first-parent commits after release `i` up to and
    /// including release `i+1`.
    pub commits: Vec<Vec<PairCommit>>,
    pub diagnostics: Vec<Diagnostic>,
    pub dropped: Vec<Dropped>,
}

pub struct SnapshotContext<'a> {
    pub catalog: &'a Catalog,
    pub index: &'a PtmIndex,
    pub filters: &'a FilterConfig,
}

pub fn is_source_path(path: &str) -> bool {
    path.ends_with(".py")
}

#[derive(Clone)]
struct BlobAnalysis {
    occurrences: Vec<PtmOccurrence>,
    bindings: Vec<ImportBinding>,
    diagnostics: Vec<Diagnostic>,
}

/// Extraction results keyed by blob id. Only the path-dependent parts
/// (file_path stamps and path filters) are recomputed per use.
struct BlobCache<'a> {
    repo: &'a Repo,
    ctx: &'a SnapshotContext<'a>,
    patterns: Vec<String>,
    map: HashMap<String, Option<BlobAnalysis>>,
}

impl<'a> BlobCache<'a> {
    fn new(repo: &'a Repo, ctx: &'a SnapshotContext<'a>) -> Self {
        BlobCache {
            repo,
            ctx,
            patterns: ctx
                .catalog
                .call_patterns()
                .into_iter()
                .map(String::from)
                .collect(),
            map: HashMap::new(),
        }
    }

    fn ensure(&mut self, wanted: &[(String, String)]) -> Result<(), GitError> {
        let mut missing: Vec<(String, String)> = Vec::new();
        let mut seen = HashSet::new();
        for (blob, path) in wanted {
            if !self.map.contains_key(blob) && seen.insert(blob.clone()) {
                missing.push((blob.clone(), path.clone()));
            }
        }
        if missing.is_empty() {
            return Ok(());
        }
        let ids: Vec<String> = missing.iter().map(|(b, _)| b.clone()).collect();
        let contents = self.repo.read_blobs(&ids)?;
        let ctx = self.ctx;
        let patterns = &self.patterns;
        let results: Vec<(String, Option<BlobAnalysis>)> = missing
            .into_par_iter()
            .zip(contents.into_par_iter())
            .map(|((blob, path), bytes)| {
                let (src, decode_diag) = decode_source(&bytes, &path);
                if !patterns.iter().any(|p| src.contains(p.as_str())) {
                    return (blob, None);
                }
                let ex = extract_occurrences(&src, &path, ctx.catalog, ctx.index);
                let mut diagnostics = ex.diagnostics;
                diagnostics.extend(decode_diag);
                (
                    blob,
                    Some(BlobAnalysis {
                        occurrences: ex.occurrences,
                        bindings: ex.bindings,
                        diagnostics,
                    }),
                )
            })
            .collect();
        self.map.extend(results);
        Ok(())
    }

    /// Filtered occurrences of `blob` when it sits at `path`.
    fn analyse(
        &self,
        blob: &str,
        path: &str,
    ) -> (Vec<PtmOccurrence>, Vec<Dropped>, Vec<Diagnostic>) {
        let Some(Some(a)) = self.map.get(blob) else {
            return (Vec::new(), Vec::new(), Vec::new());
        };
        let occ: Vec<PtmOccurrence> = a
            .occurrences
            .iter()
            .cloned()
            .map(|mut o| {
                o.file_path = path.to_string();
                o
            })
            .collect();
        let (kept, dropped) = apply_fp_filters(occ, &a.bindings, self.ctx.filters);
        let diags = a
            .diagnostics
            .iter()
            .cloned()
            .map(|mut d| {
                d.file_path = path.to_string();
                d
            })
            .collect();
        (kept, dropped, diags)
    }
}

/// Snapshot of one revision with file ids equal to paths.
pub fn snapshot_release(
    repo: &Repo,
    release: &Release,
    ctx: &SnapshotContext<'_>,
) -> Result<(ReleaseSnapshot, Vec<Diagnostic>), HistoryError> {
    let mut cache = BlobCache::new(repo, ctx);
    let ids = BTreeMap::new();
    let (snap, diags, _) = snapshot_at(&mut cache, &release.tag, &release.commit, &ids)?;
    Ok((snap, diags))
}

fn snapshot_at(
    cache: &mut BlobCache<'_>,
    tag: &str,
    commit: &str,
    file_ids: &BTreeMap<String, String>,
) -> Result<(ReleaseSnapshot, Vec<Diagnostic>, Vec<Dropped>), HistoryError> {
    let wrap = |source| HistoryError::Snapshot {
        commit: commit.to_string(),
        source,
    };
    let entries: Vec<(String, String)> = cache
        .repo
        .ls_tree(commit)
        .map_err(wrap)?
        .into_iter()
        .filter(|e| is_source_path(&e.path))
        .map(|e| (e.blob, e.path))
        .collect();
    cache.ensure(&entries).map_err(wrap)?;
    let mut files = Vec::new();
    let mut diags = Vec::new();
    let mut dropped = Vec::new();
    for (blob, path) in &entries {
        let (occ, d, dg) = cache.analyse(blob, path);
        diags.extend(dg);
        dropped.extend(d);
        if occ.is_empty() {
            continue;
        }
        files.push(FileSnapshot {
            file_path: path.clone(),
            file_id: file_ids.get(path).cloned().unwrap_or_else(|| path.clone()),
            revision: commit.to_string(),
            occurrences: occ,
        });
    }
    files.sort_by(|a, b| a.file_path.cmp(&b.file_path));
    Ok((
        ReleaseSnapshot::from_files(tag, commit, files),
        diags,
        dropped,
    ))
}

/// Logical file identities along a first-parent walk.
#[derive(Debug, Default)]
struct FileIds {
    by_path: BTreeMap<String, String>,
    in_use: BTreeSet<String>,
}

impl FileIds {
    fn seed<'p>(&mut self, paths: impl IntoIterator<Item = &'p str>) {
        for p in paths {
            self.by_path.insert(p.to_string(), p.to_string());
            self.in_use.insert(p.to_string());
        }
    }

    fn id(&self, path: &str) -> String {
        self.by_path
            .get(path)
            .cloned()
            .unwrap_or_else(|| path.to_string())
    }

    fn add(&mut self, path: &str, commit: &str) {
        let id = if self.in_use.contains(path) {
            format!("{path}@{}", &commit[..commit.len().min(12)])
        } else {
            path.to_string()
        };
        self.in_use.insert(id.clone());
        self.by_path.insert(path.to_string(), id);
    }

    fn delete(&mut self, path: &str) {
        if let Some(id) = self.by_path.remove(path) {
            self.in_use.remove(&id);
        }
    }

    fn rename(&mut self, from: &str, to: &str) {
        let id = self
            .by_path
            .remove(from)
            .unwrap_or_else(|| from.to_string());
        self.delete(to);
        self.in_use.insert(id.clone());
        self.by_path.insert(to.to_string(), id);
    }
}

fn instance_diff(
    before: &[PtmOccurrence],
    after: &[PtmOccurrence],
) -> (Vec<(String, u32)>, Vec<(String, u32)>) {
    let group = |occ: &[PtmOccurrence]| {
        let mut m: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for o in occ {
            m.entry(o.ptm_id.clone()).or_default().push(o.line);
        }
        m
    };
    let b = group(before);
    let a = group(after);
    let ids: BTreeSet<&String> = b.keys().chain(a.keys()).collect();
    let mut removed = Vec::new();
    let mut added = Vec::new();
    for id in ids {
        let bl = b.get(id).cloned().unwrap_or_default();
        let al = a.get(id).cloned().unwrap_or_default();
        // instances whose line survives are treated as untouched first
        let pick = |from: &[u32], other: &[u32], n: usize| -> Vec<u32> {
            let mut moved: Vec<u32> = from
                .iter()
                .copied()
                .filter(|l| !other.contains(l))
                .collect();
            let mut stayed: Vec<u32> = from.iter().copied().filter(|l| other.contains(l)).collect();
            moved.append(&mut stayed);
            moved.truncate(n);
            moved.sort_unstable();
            moved
        };
        if bl.len() > al.len() {
            for l in pick(&bl, &al, bl.len() - al.len()) {
                removed.push((id.clone(), l));
            }
        } else if al.len() > bl.len() {
            for l in pick(&al, &bl, al.len() - bl.len()) {
                added.push((id.clone(), l));
            }
        }
    }
    (removed, added)
}

/// Mines snapshots, per-commit file changes and rename-aware file ids for
/// one release line.
pub fn mine_line(
    repo: &Repo,
    line: &ReleaseLine,
    ctx: &SnapshotContext<'_>,
) -> Result<LineHistory, HistoryError> {
    let tip = &line.releases.last().expect("line has releases").commit;
    let chain = repo.first_parent(tip)?;
    let mut cache = BlobCache::new(repo, ctx);
    let mut ids = FileIds::default();

    let first = &line.releases[0];
    let wrap = |commit: &str| {
        let commit = commit.to_string();
        move |source| HistoryError::Snapshot { commit, source }
    };
    let tree0 = repo.ls_tree(&first.commit).map_err(wrap(&first.commit))?;
    ids.seed(tree0.iter().map(|e| e.path.as_str()));

    let mut diagnostics = Vec::new();
    let mut dropped = Vec::new();
    let mut snapshots = Vec::new();
    let (s0, d0, x0) = snapshot_at(&mut cache, &first.tag, &first.commit, &ids.by_path)?;
    snapshots.push(s0);
    diagnostics.extend(d0);
    dropped.extend(x0);

    let empty = repo.empty_tree()?;
    let mut changes = Vec::new();
    let mut commits = Vec::new();
    for w in line.positions.windows(2) {
        let (from, to) = (w[0], w[1]);
        let mut pair_changes = Vec::new();
        let mut pair_commits = Vec::new();
        for pos in from + 1..=to {
            let c = &chain[pos];
            let parent = if pos == 0 {
                empty.clone()
            } else {
                chain[pos - 1].id.clone()
            };
            let diff = repo.diff_raw(&parent, &c.id).map_err(wrap(&c.id))?;
            let mut wanted = Vec::new();
            for d in &diff {
                if let (Some(p), Some(b)) = (&d.old_path, &d.old_blob) {
                    if is_source_path(p) {
                        wanted.push((b.clone(), p.clone()));
                    }
                }
                if let (Some(p), Some(b)) = (&d.new_path, &d.new_blob) {
                    if is_source_path(p) {
                        wanted.push((b.clone(), p.clone()));
                    }
                }
            }
            cache.ensure(&wanted).map_err(wrap(&c.id))?;
            let mut paths = Vec::new();
            for d in &diff {
                match d.status {
                    'A' => ids.add(d.new_path.as_deref().unwrap_or_default(), &c.id),
                    'D' => {}
                    'R' => ids.rename(
                        d.old_path.as_deref().unwrap_or_default(),
                        d.new_path.as_deref().unwrap_or_default(),
                    ),
                    _ => {}
                }
                let path = d
                    .new_path
                    .clone()
                    .or_else(|| d.old_path.clone())
                    .unwrap_or_default();
                paths.push(path.clone());
                let src_side = |p: &Option<String>, b: &Option<String>| match (p, b) {
                    (Some(p), Some(b)) if is_source_path(p) => cache.analyse(b, p).0,
                    _ => Vec::new(),
                };
                let before = src_side(&d.old_path, &d.old_blob);
                let after = src_side(&d.new_path, &d.new_blob);
                let file_id = ids.id(&path);
                if d.status == 'D' {
                    ids.delete(&path);
                }
                let (removed, added) = instance_diff(&before, &after);
                if !removed.is_empty() || !added.is_empty() {
                    pair_changes.push(CommitFileChange {
                        commit: c.id.clone(),
                        file_id,
                        path,
                        removed,
                        added,
                    });
                }
            }
            paths.sort();
            pair_commits.push(PairCommit {
                id: c.id.clone(),
                time: c.time,
                paths,
            });
        }
        let rel = line
            .releases
            .iter()
            .zip(&line.positions)
            .find(|(_, p)| **p == to)
            .map(|(r, _)| r)
            .expect("position belongs to a release");
        let (s, d, x) = if from == to {
            let prev = snapshots.last().expect("snapshot");
            let s: ReleaseSnapshot = ReleaseSnapshot {
                tag: rel.tag.clone(),
                ..prev.clone()
            };
            (s, Vec::new(), Vec::new())
        } else {
            snapshot_at(&mut cache, &rel.tag, &rel.commit, &ids.by_path)?
        };
        snapshots.push(s);
        diagnostics.extend(d);
        dropped.extend(x);
        changes.push(pair_changes);
        commits.push(pair_commits);
    }
    // tags sharing a commit map onto the same position; re-tag in order
    for (s, r) in snapshots.iter_mut().zip(&line.releases) {
        s.tag = r.tag.clone();
    }
    diagnostics.sort_by(|a, b| {
        (&a.file_path, a.line, &a.message).cmp(&(&b.file_path, b.line, &b.message))
    });
    diagnostics.dedup();
    Ok(LineHistory {
        line: line.clone(),
        snapshots,
        changes,
        commits,
        diagnostics,
        dropped,
    })
}
