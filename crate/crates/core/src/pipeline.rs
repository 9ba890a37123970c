//! Stage orchestration over the run store.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, PtmIndex, ReuseSignature};
use crate::change::{
    anchor_t1, annotation_template, classify_pair, confirm_migrations, diff_pair,
    find_migration_candidates, ChangeEvent, ChangeKind, MigrationAnnotations, MigrationCandidate,
    PairRef,
};
use crate::config::{ConfigError, RunConfig};
use crate::docs::{
    export_annotation_sheet, harvest, rows_to_csv, Anchor, AnnotationSet, DocArtifact, EventRef,
    HarvestInput, IssueIndex,
};
use crate::extract::{Diagnostic, FileSnapshot};
use crate::filters::Dropped;
use crate::git::Repo;
use crate::history::{
    filter_releases, identify_release_lines, list_releases, mine_line, CommitFileChange,
    HistoryError, PairCommit, Rejection, ReleaseLine, ReleaseMetadata, SnapshotContext,
};
use crate::manifest::{
    diff_manifests, mine_manifests, AnalogousPairs, DiffInputs, ManifestCandidate, ManifestChange,
    ManifestDiagnostic, Validation,
};
use crate::metrics::{
    cadence, change_frequency, doc_metrics, growth, kind_breakdown, lifecycle_stages, ratio,
    CadenceSummary, ChangeFrequency, DocArtifactLabel, DocEvent, DocMetrics, EventPoint,
    GrowthSummary, KindBreakdown, LineSummary, STAGES,
};
use crate::multiset::Multiset;
use crate::stats::{apply_bonferroni, mann_whitney_u, median, wilcoxon_signed_rank, StatResult};
use crate::store::{InputHasher, RunStore, StageEntry, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Catalog,
    Lines,
    Snapshot,
    Diff,
    Baseline,
    Harvest,
    Metrics,
    Stats,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Catalog,
        Stage::Lines,
        Stage::Snapshot,
        Stage::Diff,
        Stage::Baseline,
        Stage::Harvest,
        Stage::Metrics,
        Stage::Stats,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Catalog => "catalog",
            Stage::Lines => "lines",
            Stage::Snapshot => "snapshot",
            Stage::Diff => "diff",
            Stage::Baseline => "baseline",
            Stage::Harvest => "harvest",
            Stage::Metrics => "metrics",
            Stage::Stats => "stats",
            Stage::Report => "report",
        }
    }

    /// Stages that must have completed before this one runs.
    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Catalog | Stage::Lines => &[],
            Stage::Snapshot => &[Stage::Catalog, Stage::Lines],
            Stage::Diff => &[Stage::Snapshot],
            Stage::Baseline => &[Stage::Diff],
            Stage::Harvest => &[Stage::Diff],
            Stage::Metrics => &[Stage::Diff, Stage::Harvest],
            Stage::Stats => &[Stage::Metrics],
            Stage::Report => &[Stage::Metrics, Stage::Stats],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Error)]
#[error("report needs completed stages: {}", .missing.join(", "))]
pub struct ReportPrereqError {
    pub missing: Vec<String>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed{}: {message}", .record.as_ref().map(|r| format!(" at {r}")).unwrap_or_default())]
    Stage {
        stage: Stage,
        record: Option<String>,
        message: String,
    },
    #[error(transparent)]
    Prereq(#[from] ReportPrereqError),
    #[error("integrity check failed with {} problem(s)", .0.len())]
    Integrity(Vec<String>),
}

impl PipelineError {
    fn stage(stage: Stage, record: impl Into<Option<String>>, e: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            record: record.into(),
            message: e.to_string(),
        }
    }
}

fn store_err(stage: Stage) -> impl Fn(StoreError) -> PipelineError {
    move |e| PipelineError::stage(stage, None, e)
}

// ---- records ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Ptm,
    Library,
}

impl Domain {
    pub fn prefix(self) -> &'static str {
        match self {
            Domain::Ptm => "ptm",
            Domain::Library => "lib",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoRecord {
    pub repo_id: String,
    pub path: PathBuf,
    pub tags: usize,
    pub removed_tags: Vec<String>,
    pub rejections: Vec<Rejection>,
    pub unreachable_tags: Vec<String>,
    pub lines: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRecord {
    pub line_id: String,
    pub repo_id: String,
    pub repo_path: PathBuf,
    pub line: ReleaseLine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub line_id: String,
    pub release_index: usize,
    pub tag: String,
    pub commit: String,
    pub ptms: Multiset<String>,
    pub files: Vec<FileSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairChangesRecord {
    pub line_id: String,
    pub pair_index: usize,
    pub changes: Vec<CommitFileChange>,
    pub commits: Vec<PairCommit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiagnostic {
    pub line_id: String,
    pub diagnostic: Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDropped {
    pub line_id: String,
    pub dropped: Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub line_id: String,
    pub n_releases: usize,
    /// `None` for lines that never contain a PTM.
    pub t1: Option<usize>,
    pub pairs: Vec<usize>,
    pub count_t1: u64,
    pub count_end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub line_id: String,
    pub pair_index: usize,
    pub from_tag: String,
    pub to_tag: String,
    pub additions: u64,
    pub removals: u64,
    pub migration_bound: u64,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    #[serde(flatten)]
    pub candidate: MigrationCandidate,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryCountRecord {
    pub line_id: String,
    pub release_index: usize,
    pub manifests: Vec<String>,
    pub dependencies: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryCandidateRecord {
    #[serde(flatten)]
    pub candidate: ManifestCandidate,
    pub validation: Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestIssue {
    pub line_id: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<ManifestDiagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub domain: Domain,
    #[serde(flatten)]
    pub artifact: DocArtifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub lines: usize,
    pub releases: usize,
    pub pairs: usize,
    pub frequency: ChangeFrequency,
    pub total_events: usize,
    pub kinds: Vec<KindBreakdown>,
    pub changed_lines: usize,
    pub change_line_rate: Option<f64>,
    pub cadence_overall: CadenceSummary,
    pub cadence_addition: CadenceSummary,
    pub cadence_removal: CadenceSummary,
    pub cadence_migration: CadenceSummary,
    pub growth: GrowthSummary,
    pub stages: [u64; STAGES],
    pub artifacts_harvested: usize,
    /// `None` when no annotation sheet was supplied.
    pub docs: Option<DocMetrics>,
    pub line_summaries: Vec<LineSummary>,
}

impl DomainMetrics {
    pub fn kind(&self, k: ChangeKind) -> Option<&KindBreakdown> {
        self.kinds.iter().find(|b| b.kind == k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub repositories: usize,
    pub ptm: DomainMetrics,
    /// `None` when the baseline stage has not run.
    pub library: Option<DomainMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    /// `wilcoxon` (paired, per line) or `mann_whitney` (population).
    pub family: String,
    /// `overall`, `addition`, `removal` or `migration`.
    pub change_type: String,
    pub n_ptm: usize,
    pub n_library: usize,
    pub median_ptm: Option<f64>,
    pub median_library: Option<f64>,
    pub result: Option<StatResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn pair_key(domain: Domain, line_id: &str, pair_index: usize) -> String {
    format!("{}:{}#{}", domain.prefix(), line_id, pair_index)
}

// ---- pipeline -----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub store: RunStore,
    /// Re-run stages even when their inputs are unchanged.
    pub force: bool,
}

impl Pipeline {
    /// Validates the configuration and opens the store; nothing runs yet.
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let store = RunStore::open(&config.out).map_err(|e| {
            PipelineError::Config(ConfigError::Invalid(format!("output directory: {e}")))
        })?;
        Ok(Pipeline {
            config,
            store,
            force: false,
        })
    }

    /// Runs every stage in order. `skip` names stages to leave out.
    pub fn run_all(&self, skip: &[Stage]) -> Result<Vec<(Stage, Outcome)>, PipelineError> {
        let mut out = Vec::new();
        for st in Stage::ALL {
            if skip.contains(&st) {
                self.store.forget_stage(st.name()).map_err(store_err(st))?;
                continue;
            }
            out.push((st, self.run_stage(st)?));
        }
        Ok(out)
    }

    pub fn completed(&self) -> BTreeSet<String> {
        self.store.stages().into_keys().collect()
    }

    pub fn run_stage(&self, stage: Stage) -> Result<Outcome, PipelineError> {
        let done = self.completed();
        let missing: Vec<String> = stage
            .requires()
            .iter()
            .filter(|s| !done.contains(s.name()))
            .map(|s| s.name().to_string())
            .collect();
        if !missing.is_empty() {
            if stage == Stage::Report {
                return Err(ReportPrereqError { missing }.into());
            }
            return Err(PipelineError::stage(
                stage,
                None,
                format!("requires stages: {}", missing.join(", ")),
            ));
        }
        let hash = self.input_hash(stage);
        if !self.force && self.store.is_fresh(stage.name(), &hash) {
            info!("stage {stage}: inputs unchanged, skipped");
            return Ok(Outcome::Skipped);
        }
        info!("stage {stage}: running");
        let outputs = match stage {
            Stage::Catalog => self.stage_catalog()?,
            Stage::Lines => self.stage_lines()?,
            Stage::Snapshot => self.stage_snapshot()?,
            Stage::Diff => self.stage_diff()?,
            Stage::Baseline => self.stage_baseline()?,
            Stage::Harvest => self.stage_harvest()?,
            Stage::Metrics => self.stage_metrics()?,
            Stage::Stats => self.stage_stats()?,
            Stage::Report => crate::report::write_reports(&self.store)
                .map_err(|e| PipelineError::stage(stage, None, e))?,
        };
        self.store
            .record_stage(
                stage.name(),
                StageEntry {
                    input_hash: hash,
                    outputs,
                },
            )
            .map_err(store_err(stage))?;
        Ok(Outcome::Ran)
    }

    fn upstream(&self, h: &mut InputHasher, streams: &[&str]) {
        for s in streams {
            h.add(s, self.store.stream_hash(s).unwrap_or_default().as_bytes());
        }
    }

    fn input_hash(&self, stage: Stage) -> String {
        let c = &self.config;
        let a = &c.annotations;
        let mut h = InputHasher::new(stage.name());
        match stage {
            Stage::Catalog => {
                h.add_file("catalog", c.catalog.as_deref());
            }
            Stage::Lines => {
                h.add_json("policy", &c.policy);
                for r in &c.repos {
                    h.add("repo", r.id().as_bytes());
                    h.add("path", r.path.to_string_lossy().as_bytes());
                    h.add_file("releases", r.releases.as_deref());
                    let refs = Repo::open(&r.path)
                        .and_then(|repo| {
                            repo.run(&["for-each-ref", "--format=%(refname) %(objectname)"])
                        })
                        .unwrap_or_default();
                    h.add("refs", &refs);
                }
            }
            Stage::Snapshot => {
                self.upstream(&mut h, &["catalog", "lines"]);
                h.add_file("index", c.index.as_deref());
                h.add_json("filters", &c.filters);
            }
            Stage::Diff => {
                self.upstream(&mut h, &["snapshots", "line_changes"]);
                h.add_file("migrations", a.migrations.as_deref());
            }
            Stage::Baseline => {
                self.upstream(&mut h, &["lines", "windows"]);
                h.add_json("filters", &c.filters);
                h.add_file("analogous", a.analogous_pairs.as_deref());
                h.add_file("library_migrations", a.library_migrations.as_deref());
            }
            Stage::Harvest => {
                self.upstream(
                    &mut h,
                    &[
                        "lines",
                        "windows",
                        "line_changes",
                        "events",
                        "library_events",
                    ],
                );
                h.add_json("keywords", &c.keywords);
                for r in &c.repos {
                    h.add_file("releases", r.releases.as_deref());
                    h.add_file("issues", r.issues.as_deref());
                }
            }
            Stage::Metrics => {
                self.upstream(
                    &mut h,
                    &[
                        "repos",
                        "windows",
                        "events",
                        "library_events",
                        "library_counts",
                        "artifacts",
                    ],
                );
                h.add_file("ptm_sheet", a.ptm_sheet.as_deref());
                h.add_file("library_sheet", a.library_sheet.as_deref());
                h.add_file("library_sample", a.library_sample.as_deref());
            }
            Stage::Stats => {
                self.upstream(&mut h, &["metrics"]);
                h.add_json("stats", &c.stats);
            }
            Stage::Report => {
                self.upstream(&mut h, &["metrics", "stats"]);
            }
        }
        h.finish()
    }

    fn write<T: Serialize>(
        &self,
        stage: Stage,
        outputs: &mut BTreeMap<String, String>,
        stream: &str,
        records: &[T],
    ) -> Result<(), PipelineError> {
        let h = self
            .store
            .write_stream(stream, records)
            .map_err(store_err(stage))?;
        outputs.insert(stream.to_string(), h);
        Ok(())
    }

    fn read<T: serde::de::DeserializeOwned>(
        &self,
        stage: Stage,
        stream: &str,
    ) -> Result<Vec<T>, PipelineError> {
        self.store.read_stream(stream).map_err(store_err(stage))
    }

    fn write_file(
        &self,
        stage: Stage,
        outputs: &mut BTreeMap<String, String>,
        rel: &str,
        bytes: &[u8],
    ) -> Result<(), PipelineError> {
        crate::store::write_atomic(&self.store.root().join(rel), bytes)
            .map_err(store_err(stage))?;
        outputs.insert(rel.to_string(), crate::store::sha256_hex(bytes));
        Ok(())
    }

    // ---- stages -----------------------------------------------------------------

    fn stage_catalog(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let st = Stage::Catalog;
        let cat = match &self.config.catalog {
            Some(p) => Catalog::load(p)
                .map_err(|e| PipelineError::stage(st, p.display().to_string(), e))?,
            None => Catalog::builtin(),
        };
        let mut out = BTreeMap::new();
        self.write(st, &mut out, "catalog", cat.signatures())?;
        Ok(out)
    }

    fn stage_lines(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let st = Stage::Lines;
        let results: Vec<Result<(RepoRecord, Vec<LineRecord>), PipelineError>> = self
            .config
            .repos
            .par_iter()
            .map(|rc| {
                let id = rc.id();
                let fail = |e: &dyn fmt::Display| PipelineError::stage(st, id.clone(), e);
                let repo = Repo::open(&rc.path).map_err(|e| fail(&e))?;
                let meta = match &rc.releases {
                    Some(p) => ReleaseMetadata::load(p).map_err(|e| fail(&e))?,
                    None => ReleaseMetadata::default(),
                };
                let releases = list_releases(&repo, &meta).map_err(|e| fail(&e))?;
                let report = filter_releases(&releases, &self.config.policy);
                let mut rec = RepoRecord {
                    repo_id: id.clone(),
                    path: rc.path.clone(),
                    tags: releases.len(),
                    removed_tags: report.removed.clone(),
                    rejections: report.rejections.clone(),
                    unreachable_tags: Vec::new(),
                    lines: Vec::new(),
                    excluded: None,
                };
                if !report.accepted() {
                    rec.excluded = Some("release policy".into());
                    return Ok((rec, Vec::new()));
                }
                match identify_release_lines(&repo, &id, &report.kept) {
                    Ok(d) => {
                        rec.unreachable_tags = d.unreachable_tags;
                        let lines: Vec<LineRecord> = d
                            .lines
                            .into_iter()
                            .map(|l| LineRecord {
                                line_id: l.id(),
                                repo_id: id.clone(),
                                repo_path: rc.path.clone(),
                                line: l,
                            })
                            .collect();
                        rec.lines = lines.iter().map(|l| l.line_id.clone()).collect();
                        if lines.is_empty() {
                            rec.excluded = Some("no release line with two releases".into());
                        }
                        Ok((rec, lines))
                    }
                    Err(
                        e @ (HistoryError::NoReleases | HistoryError::AmbiguousCoverage { .. }),
                    ) => {
                        warn!("{id}: {e}");
                        rec.excluded = Some(e.to_string());
                        Ok((rec, Vec::new()))
                    }
                    Err(e) => Err(fail(&e)),
                }
            })
            .collect();
        let mut repos = Vec::new();
        let mut lines = Vec::new();
        for r in results {
            let (rec, ls) = r?;
            repos.push(rec);
            lines.extend(ls);
        }
        let mut out = BTreeMap::new();
        self.write(st, &mut out, "repos", &repos)?;
        self.write(st, &mut out, "lines", &lines)?;
        Ok(out)
    }

    fn stage_snapshot(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let st = Stage::Snapshot;
        let sigs: Vec<ReuseSignature> = self.read(st, "catalog")?;
        let catalog = Catalog::from_signatures(sigs);
        let index = match &self.config.index {
            Some(p) => PtmIndex::load(p)
                .map_err(|e| PipelineError::stage(st, p.display().to_string(), e))?,
            None => PtmIndex::default(),
        };
        let lines: Vec<LineRecord> = self.read(st, "lines")?;
        let ctx = SnapshotContext {
            catalog: &catalog,
            index: &index,
            filters: &self.config.filters,
        };
        let mined: Vec<Result<_, PipelineError>> = lines
            .par_iter()
            .map(|l| {
                let fail = |e: &dyn fmt::Display| PipelineError::stage(st, l.line_id.clone(), e);
                let repo = Repo::open(&l.repo_path).map_err(|e| fail(&e))?;
                mine_line(&repo, &l.line, &ctx).map_err(|e| fail(&e))
            })
            .collect();
        let mut snaps = Vec::new();
        let mut changes = Vec::new();
        let mut diags = Vec::new();
        let mut dropped = Vec::new();
        for (l, m) in lines.iter().zip(mined) {
            let h = m?;
            for (i, s) in h.snapshots.into_iter().enumerate() {
                snaps.push(SnapshotRecord {
                    line_id: l.line_id.clone(),
                    release_index: i,
                    tag: s.tag,
                    commit: s.commit,
                    ptms: s.ptms,
                    files: s.files,
                });
            }
            for (i, (c, cm)) in h.changes.into_iter().zip(h.commits).enumerate() {
                changes.push(PairChangesRecord {
                    line_id: l.line_id.clone(),
                    pair_index: i,
                    changes: c,
                    commits: cm,
                });
            }
            diags.extend(h.diagnostics.into_iter().map(|d| LineDiagnostic {
                line_id: l.line_id.clone(),
                diagnostic: d,
            }));
            dropped.extend(h.dropped.into_iter().map(|d| LineDropped {
                line_id: l.line_id.clone(),
                dropped: d,
            }));
        }
        let mut out = BTreeMap::new();
        self.write(st, &mut out, "snapshots", &snaps)?;
        self.write(st, &mut out, "line_changes", &changes)?;
        self.write(st, &mut out, "diagnostics", &diags)?;
        self.write(st, &mut out, "dropped", &dropped)?;
        Ok(out)
    }

    fn stage_diff(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let st = Stage::Diff;
        let snaps: Vec<SnapshotRecord> = self.read(st, "snapshots")?;
        let changes: Vec<PairChangesRecord> = self.read(st, "line_changes")?;
        let ann = match &self.config.annotations.migrations {
            Some(p) => MigrationAnnotations::load(p)
                .map_err(|e| PipelineError::stage(st, p.display().to_string(), e))?,
            None => MigrationAnnotations::default(),
        };
        let by_line = group_snapshots(&snaps);
        let change_map: BTreeMap<(&str, usize), &PairChangesRecord> = changes
            .iter()
            .map(|c| ((c.line_id.as_str(), c.pair_index), c))
            .collect();
        let mut windows = Vec::new();
        let mut pairs = Vec::new();
        let mut events = Vec::new();
        let mut candidates = Vec::new();
        for (line_id, ss) in &by_line {
            let ms: Vec<Multiset<String>> = ss.iter().map(|s| s.ptms.clone()).collect();
            let Ok(w) = anchor_t1(&ms) else {
                windows.push(WindowRecord {
                    line_id: line_id.to_string(),
                    n_releases: ss.len(),
                    t1: None,
                    pairs: Vec::new(),
                    count_t1: 0,
                    count_end: 0,
                });
                continue;
            };
            windows.push(WindowRecord {
                line_id: line_id.to_string(),
                n_releases: ss.len(),
                t1: Some(w.t1),
                pairs: w.pairs.clone(),
                count_t1: ms[w.t1].len(),
                count_end: ms[ms.len() - 1].len(),
            });
            for &i in &w.pairs {
                let pair = PairRef {
                    line_id: line_id.to_string(),
                    pair_index: i,
                };
                let delta = diff_pair(&ms[i], &ms[i + 1]);
                let ch: &[CommitFileChange] = change_map
                    .get(&(*line_id, i))
                    .map_or(&[], |c| c.changes.as_slice());
                let cands = find_migration_candidates(&pair, &delta, ch);
                let (confirmed, _) = confirm_migrations(&cands, &ann);
                let evs = classify_pair(&pair, &delta, ch, &confirmed, false);
                let confirmed_set: BTreeSet<&MigrationCandidate> =
                    confirmed.iter().copied().collect();
                for c in &cands {
                    candidates.push(CandidateRecord {
                        candidate: c.clone(),
                        confirmed: confirmed_set.contains(c),
                    });
                }
                pairs.push(PairRecord {
                    line_id: line_id.to_string(),
                    pair_index: i,
                    from_tag: ss[i].tag.clone(),
                    to_tag: ss[i + 1].tag.clone(),
                    additions: delta.additions,
                    removals: delta.removals,
                    migration_bound: delta.migration_bound,
                    events: evs.len(),
                });
                events.extend(evs);
            }
        }
        let all: Vec<MigrationCandidate> = candidates.iter().map(|c| c.candidate.clone()).collect();
        for w in ann.unknown(&all) {
            warn!(
                "migration annotation row {} matches no candidate ({} {} -> {})",
                w.row, w.annotation.line_id, w.annotation.ptm_from, w.annotation.ptm_to
            );
        }
        let mut out = BTreeMap::new();
        self.write(st, &mut out, "windows", &windows)?;
        self.write(st, &mut out, "pairs", &pairs)?;
        self.write(st, &mut out, "events", &events)?;
        self.write(st, &mut out, "candidates", &candidates)?;
        let template = annotation_template(&all).to_csv();
        self.write_file(
            st,
            &mut out,
            "annotations/migration_candidates.csv",
            template.as_bytes(),
        )?;
        Ok(out)
    }

    fn stage_baseline(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let st = Stage::Baseline;
        let lines: Vec<LineRecord> = self.read(st, "lines")?;
        let windows: Vec<WindowRecord> = self.read(st, "windows")?;
        let a = &self.config.annotations;
        let curated = match &a.analogous_pairs {
            Some(p) => {
                let (pairs, diags) = AnalogousPairs::load(p)
                    .map_err(|e| PipelineError::stage(st, p.display().to_string(), e))?;
                for d in diags {
                    warn!("{}:{}: {}", p.display(), d.line, d.message);
                }
                pairs
            }
            None => AnalogousPairs::default(),
        };
        let validator = match &a.library_migrations {
            Some(p) => MigrationAnnotations::load(p)
                .map_err(|e| PipelineError::stage(st, p.display().to_string(), e))?,
            None => MigrationAnnotations::default(),
        };
        let win: BTreeMap<&str, &WindowRecord> =
            windows.iter().map(|w| (w.line_id.as_str(), w)).collect();
        let active: Vec<(&LineRecord, &WindowRecord)> = lines
            .iter()
            .filter_map(|l| {
                win.get(l.line_id.as_str())
                    .filter(|w| w.t1.is_some())
                    .map(|w| (l, *w))
            })
            .collect();
        let mined: Vec<Result<_, PipelineError>> = active
            .par_iter()
            .map(|(l, _)| {
                let fail = |e: &dyn fmt::Display| PipelineError::stage(st, l.line_id.clone(), e);
                let repo = Repo::open(&l.repo_path).map_err(|e| fail(&e))?;
                mine_manifests(&repo, &l.line, &self.config.filters).map_err(|e| fail(&e))
            })
            .collect();
        let mut counts = Vec::new();
        let mut events = Vec::new();
        let mut cands = Vec::new();
        let mut issues = Vec::new();
        for ((l, w), m) in active.iter().zip(mined) {
            let h = m?;
            for (i, s) in h.snapshots.iter().enumerate() {
                counts.push(LibraryCountRecord {
                    line_id: l.line_id.clone(),
                    release_index: i,
                    manifests: s.keys().cloned().collect(),
                    dependencies: s.values().map(|v| v.len() as u64).sum(),
                });
            }
            for &i in &w.pairs {
                let pair = PairRef {
                    line_id: l.line_id.clone(),
                    pair_index: i,
                };
                let inputs = DiffInputs {
                    pair: &pair,
                    commits: &h.changes[i],
                    curated: &curated,
                    validator: &validator,
                };
                let d = diff_manifests(&h.snapshots[i], &h.snapshots[i + 1], &inputs);
                let validation: BTreeMap<(&str, &str, &str, &str), Validation> = d
                    .changes
                    .iter()
                    .filter_map(|c| {
                        Some((
                            (
                                c.name_from.as_deref()?,
                                c.name_to.as_deref()?,
                                c.file.as_str(),
                                c.commit.as_deref()?,
                            ),
                            c.validation?,
                        ))
                    })
                    .collect();
                for c in &d.candidates {
                    let v = validation
                        .get(&(
                            c.name_from.as_str(),
                            c.name_to.as_str(),
                            c.file.as_str(),
                            c.commit.as_str(),
                        ))
                        .copied()
                        .unwrap_or(Validation::Rejected);
                    cands.push(LibraryCandidateRecord {
                        candidate: c.clone(),
                        validation: v,
                    });
                }
                events.extend(d.changes);
            }
            for (path, d) in h.diagnostics {
                issues.push(ManifestIssue {
                    line_id: l.line_id.clone(),
                    path,
                    diagnostic: Some(d),
                    error: None,
                });
            }
            for (path, e) in h.errors {
                warn!("{}: skipped malformed manifest {path}: {e}", l.line_id);
                issues.push(ManifestIssue {
                    line_id: l.line_id.clone(),
                    path,
                    diagnostic: None,
                    error: Some(e),
                });
            }
        }
        let mut out = BTreeMap::new();
        self.write(st, &mut out, "library_counts", &counts)?;
        self.write(st, &mut out, "library_events", &events)?;
        self.write(st, &mut out, "library_candidates", &cands)?;
        self.write(st, &mut out, "manifest_issues", &issues)?;
        Ok(out)
    }

    fn stage_harvest(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let st = Stage::Harvest;
        let lines: Vec<LineRecord> = self.read(st, "lines")?;
        let changes: Vec<PairChangesRecord> = self.read(st, "line_changes")?;
        let events: Vec<ChangeEvent> = self.read(st, "events")?;
        let lib_events: Vec<ManifestChange> = if self.store.has_stream("library_events")
            && self.completed().contains(Stage::Baseline.name())
        {
            self.read(st, "library_events")?
        } else {
            Vec::new()
        };
        let repos: BTreeMap<String, &crate::config::RepoConfig> =
            self.config.repos.iter().map(|r| (r.id(), r)).collect();
        let change_map: BTreeMap<(&str, usize), &PairChangesRecord> = changes
            .iter()
            .map(|c| ((c.line_id.as_str(), c.pair_index), c))
            .collect();

        let line_map: BTreeMap<&str, &LineRecord> =
            lines.iter().map(|l| (l.line_id.as_str(), l)).collect();
        // pair -> events, per domain
        let mut work: BTreeMap<(String, usize), (Vec<EventRef>, Vec<EventRef>)> = BTreeMap::new();
        for e in &events {
            let pc = change_map.get(&(e.pair.line_id.as_str(), e.pair.pair_index));
            work.entry((e.pair.line_id.clone(), e.pair.pair_index))
                .or_default()
                .0
                .push(ptm_event_ref(
                    e,
                    pc.copied(),
                    from_commit(&line_map, &e.pair),
                ));
        }
        for e in &lib_events {
            work.entry((e.pair.line_id.clone(), e.pair.pair_index))
                .or_default()
                .1
                .push(library_event_ref(e));
        }

        struct RepoCtx {
            repo: Repo,
            meta: ReleaseMetadata,
            issues: IssueIndex,
            tag_messages: BTreeMap<String, String>,
        }
        let mut ctxs: BTreeMap<String, RepoCtx> = BTreeMap::new();
        for l in &lines {
            if ctxs.contains_key(&l.repo_id) {
                continue;
            }
            let fail = |e: &dyn fmt::Display| PipelineError::stage(st, l.repo_id.clone(), e);
            let repo = Repo::open(&l.repo_path).map_err(|e| fail(&e))?;
            let rc = repos.get(&l.repo_id);
            let meta = match rc.and_then(|r| r.releases.as_ref()) {
                Some(p) => ReleaseMetadata::load(p).map_err(|e| fail(&e))?,
                None => ReleaseMetadata::default(),
            };
            let issues = match rc.and_then(|r| r.issues.as_ref()) {
                Some(p) => IssueIndex::load(p).map_err(|e| fail(&e))?,
                None => IssueIndex::default(),
            };
            let tag_messages = repo
                .tags()
                .map_err(|e| fail(&e))?
                .into_iter()
                .filter_map(|t| t.message.map(|m| (t.name, m)))
                .collect();
            ctxs.insert(
                l.repo_id.clone(),
                RepoCtx {
                    repo,
                    meta,
                    issues,
                    tag_messages,
                },
            );
        }

        let jobs: Vec<(&(String, usize), &(Vec<EventRef>, Vec<EventRef>))> = work.iter().collect();
        let harvested: Vec<Result<Vec<ArtifactRecord>, PipelineError>> = jobs
            .par_iter()
            .map(|((line_id, i), (ptm, lib))| {
                let fail =
                    |e: &dyn fmt::Display| PipelineError::stage(st, format!("{line_id}#{i}"), e);
                let l = line_map
                    .get(line_id.as_str())
                    .ok_or_else(|| fail(&"events reference an unknown line"))?;
                let ctx = &ctxs[&l.repo_id];
                let target = &l.line.releases[i + 1];
                let note = ctx
                    .meta
                    .get(&target.tag)
                    .and_then(|m| m.body.clone())
                    .or_else(|| ctx.tag_messages.get(&target.tag).cloned());
                let commits: &[PairCommit] = change_map
                    .get(&(line_id.as_str(), *i))
                    .map_or(&[], |c| c.commits.as_slice());
                let mut out = Vec::new();
                for (domain, evs) in [(Domain::Ptm, ptm), (Domain::Library, lib)] {
                    if evs.is_empty() {
                        continue;
                    }
                    let key = pair_key(domain, line_id, *i);
                    let input = HarvestInput {
                        pair_key: &key,
                        target_commit: &target.commit,
                        release_note: note.as_deref(),
                        commits,
                        events: evs,
                        issues: &ctx.issues,
                    };
                    let arts = harvest(&ctx.repo, &input).map_err(|e| fail(&e))?;
                    out.extend(arts.into_iter().map(|a| ArtifactRecord {
                        domain,
                        artifact: a,
                    }));
                }
                Ok(out)
            })
            .collect();
        let mut artifacts = Vec::new();
        for h in harvested {
            artifacts.extend(h?);
        }
        let mut out = BTreeMap::new();
        self.write(st, &mut out, "artifacts", &artifacts)?;
        for domain in [Domain::Ptm, Domain::Library] {
            let arts: Vec<DocArtifact> = artifacts
                .iter()
                .filter(|a| a.domain == domain)
                .map(|a| a.artifact.clone())
                .collect();
            let refs: Vec<EventRef> = work
                .values()
                .flat_map(|(p, l)| if domain == Domain::Ptm { p } else { l })
                .cloned()
                .collect();
            let rows = export_annotation_sheet(&arts, &refs, &self.config.keywords);
            let name = match domain {
                Domain::Ptm => "annotations/ptm_sheet.csv",
                Domain::Library => "annotations/library_sheet.csv",
            };
            self.write_file(st, &mut out, name, rows_to_csv(&rows).as_bytes())?;
        }
        Ok(out)
    }

    fn stage_metrics(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let st = Stage::Metrics;
        let repos: Vec<RepoRecord> = self.read(st, "repos")?;
        let windows: Vec<WindowRecord> = self.read(st, "windows")?;
        let events: Vec<ChangeEvent> = self.read(st, "events")?;
        let artifacts: Vec<ArtifactRecord> = self.read(st, "artifacts")?;
        let has_baseline = self.completed().contains(Stage::Baseline.name());
        let a = &self.config.annotations;
        let load_sheet = |p: &Option<PathBuf>| -> Result<Option<AnnotationSet>, PipelineError> {
            p.as_ref()
                .map(|p| {
                    AnnotationSet::load(p)
                        .map_err(|e| PipelineError::stage(st, p.display().to_string(), e))
                })
                .transpose()
        };
        let ptm_sheet = load_sheet(&a.ptm_sheet)?;
        let lib_sheet = load_sheet(&a.library_sheet)?;

        let active: Vec<&WindowRecord> = windows.iter().filter(|w| w.t1.is_some()).collect();
        let ptm_points: Vec<(String, usize, ChangeKind, String)> = events
            .iter()
            .map(|e| {
                (
                    e.pair.line_id.clone(),
                    e.pair.pair_index,
                    e.kind,
                    e.id.clone(),
                )
            })
            .collect();
        let ptm_lines = summaries(&active, &ptm_points, |w| (w.count_t1, w.count_end));
        let ptm_art: Vec<&ArtifactRecord> = artifacts
            .iter()
            .filter(|x| x.domain == Domain::Ptm)
            .collect();
        let ptm = domain_metrics(ptm_lines, &ptm_points, &ptm_art, ptm_sheet.as_ref(), None);

        let library = if has_baseline {
            let lib_events: Vec<ManifestChange> = self.read(st, "library_events")?;
            let counts: Vec<LibraryCountRecord> = self.read(st, "library_counts")?;
            let cmap: BTreeMap<(&str, usize), u64> = counts
                .iter()
                .map(|c| ((c.line_id.as_str(), c.release_index), c.dependencies))
                .collect();
            let points: Vec<(String, usize, ChangeKind, String)> = lib_events
                .iter()
                .map(|e| {
                    (
                        e.pair.line_id.clone(),
                        e.pair.pair_index,
                        e.kind,
                        e.id.clone(),
                    )
                })
                .collect();
            let lines = summaries(&active, &points, |w| {
                let t1 = w.t1.unwrap_or(0);
                let get = |i: usize| cmap.get(&(w.line_id.as_str(), i)).copied().unwrap_or(0);
                (get(t1), get(w.n_releases - 1))
            });
            let sample = match &a.library_sample {
                Some(p) => Some(
                    std::fs::read_to_string(p)
                        .map_err(|e| PipelineError::stage(st, p.display().to_string(), e))?
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty() && !l.starts_with('#'))
                        .map(str::to_string)
                        .collect::<BTreeSet<String>>(),
                ),
                None => None,
            };
            let arts: Vec<&ArtifactRecord> = artifacts
                .iter()
                .filter(|x| x.domain == Domain::Library)
                .collect();
            Some(domain_metrics(
                lines,
                &points,
                &arts,
                lib_sheet.as_ref(),
                sample.as_ref(),
            ))
        } else {
            None
        };
        let repositories = repos
            .iter()
            .filter(|r| {
                r.lines
                    .iter()
                    .any(|l| active.iter().any(|w| &w.line_id == l))
            })
            .count();
        let rec = MetricsRecord {
            repositories,
            ptm,
            library,
        };
        let mut out = BTreeMap::new();
        self.write(st, &mut out, "metrics", &[rec])?;
        Ok(out)
    }

    fn stage_stats(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let st = Stage::Stats;
        let m: Vec<MetricsRecord> = self.read(st, "metrics")?;
        let m = m
            .into_iter()
            .next()
            .ok_or_else(|| PipelineError::stage(st, None, "empty metrics stream"))?;
        let rows = cadence_tests(&m, self.config.stats.alpha);
        let mut out = BTreeMap::new();
        self.write(st, &mut out, "stats", &rows)?;
        Ok(out)
    }

    /// Referential integrity across the store.
    pub fn check(&self) -> Result<Vec<String>, PipelineError> {
        crate::report::check_store(&self.store)
            .map_err(|e| PipelineError::stage(Stage::Report, None, e))
    }
}

fn group_snapshots(snaps: &[SnapshotRecord]) -> BTreeMap<&str, Vec<&SnapshotRecord>> {
    let mut by: BTreeMap<&str, Vec<&SnapshotRecord>> = BTreeMap::new();
    for s in snaps {
        by.entry(s.line_id.as_str()).or_default().push(s);
    }
    for v in by.values_mut() {
        v.sort_by_key(|s| s.release_index);
    }
    by
}

fn from_commit(lines: &BTreeMap<&str, &LineRecord>, pair: &PairRef) -> Option<String> {
    lines
        .get(pair.line_id.as_str())
        .and_then(|l| l.line.releases.get(pair.pair_index))
        .map(|r| r.commit.clone())
}

/// Removed instances are anchored in the commit's parent: the previous
/// window commit, or the earlier release for the first one.
fn ptm_event_ref(
    e: &ChangeEvent,
    pc: Option<&PairChangesRecord>,
    from: Option<String>,
) -> EventRef {
    let mut anchors = Vec::new();
    let mut path = None;
    if let (Some(pc), Some(file), Some(commit)) = (pc, &e.file, &e.commit) {
        let parent = match pc.commits.iter().position(|c| &c.id == commit) {
            Some(0) => from,
            Some(p) => Some(pc.commits[p - 1].id.clone()),
            None => None,
        };
        if let Some(ch) = pc
            .changes
            .iter()
            .find(|c| &c.commit == commit && &c.file_id == file)
        {
            path = Some(ch.path.clone());
            if let Some(to) = &e.ptm_to {
                if let Some((_, l)) = ch.added.iter().find(|(p, _)| p == to) {
                    anchors.push(Anchor {
                        rev: commit.clone(),
                        path: ch.path.clone(),
                        line: *l,
                    });
                }
            }
            if let (Some(from), Some(parent)) = (&e.ptm_from, parent) {
                if let Some((_, l)) = ch.removed.iter().find(|(p, _)| p == from) {
                    anchors.push(Anchor {
                        rev: parent,
                        path: ch.path.clone(),
                        line: *l,
                    });
                }
            }
        }
    }
    EventRef {
        id: e.id.clone(),
        kind: e.kind,
        file: path.or_else(|| e.file.clone()),
        commit: e.commit.clone(),
        terms: e.ptm_from.iter().chain(&e.ptm_to).cloned().collect(),
        anchors,
    }
}

fn library_event_ref(e: &ManifestChange) -> EventRef {
    let mut terms: Vec<String> = e.name_from.iter().chain(&e.name_to).cloned().collect();
    terms.dedup();
    EventRef {
        id: e.id.clone(),
        kind: e.kind,
        file: Some(e.file.clone()),
        commit: e.commit.clone(),
        terms,
        anchors: Vec::new(),
    }
}

fn summaries(
    windows: &[&WindowRecord],
    points: &[(String, usize, ChangeKind, String)],
    counts: impl Fn(&WindowRecord) -> (u64, u64),
) -> Vec<LineSummary> {
    let mut by: BTreeMap<&str, Vec<EventPoint>> = BTreeMap::new();
    for (l, i, k, _) in points {
        by.entry(l.as_str()).or_default().push(EventPoint {
            pair_index: *i,
            kind: *k,
        });
    }
    windows
        .iter()
        .map(|w| {
            let (count_t1, count_end) = counts(w);
            LineSummary {
                line_id: w.line_id.clone(),
                n_releases: w.n_releases,
                t1: w.t1.unwrap_or(0),
                pairs: w.pairs.clone(),
                count_t1,
                count_end,
                events: by.remove(w.line_id.as_str()).unwrap_or_default(),
            }
        })
        .collect()
}

fn domain_metrics(
    lines: Vec<LineSummary>,
    points: &[(String, usize, ChangeKind, String)],
    artifacts: &[&ArtifactRecord],
    sheet: Option<&AnnotationSet>,
    sample: Option<&BTreeSet<String>>,
) -> DomainMetrics {
    let kinds = kind_breakdown(
        &lines,
        &[
            ChangeKind::Addition,
            ChangeKind::Removal,
            ChangeKind::Migration,
            ChangeKind::Update,
        ],
    );
    let changed_lines = lines.iter().filter(|l| !l.events.is_empty()).count();
    let docs = sheet.map(|s| {
        let evs: Vec<DocEvent> = points
            .iter()
            .filter(|(_, _, _, id)| sample.is_none_or(|s| s.contains(id)))
            .map(|(l, i, k, id)| DocEvent {
                id: id.clone(),
                pair: format!("{l}#{i}"),
                kind: *k,
            })
            .collect();
        let labels: Vec<DocArtifactLabel> = artifacts
            .iter()
            .filter_map(|a| {
                s.get(&a.artifact.id).map(|ann| DocArtifactLabel {
                    artifact_id: a.artifact.id.clone(),
                    events: a.artifact.events.clone(),
                    documented: ann.documented,
                    rationale: ann.rationale,
                })
            })
            .collect();
        doc_metrics(&evs, &labels)
    });
    DomainMetrics {
        lines: lines.len(),
        releases: lines.iter().map(|l| l.releases_from_t1()).sum(),
        pairs: lines.iter().map(|l| l.pairs.len()).sum(),
        frequency: change_frequency(&lines),
        total_events: points.len(),
        kinds,
        changed_lines,
        change_line_rate: ratio(changed_lines, lines.len()),
        cadence_overall: cadence(&lines, None),
        cadence_addition: cadence(&lines, Some(ChangeKind::Addition)),
        cadence_removal: cadence(&lines, Some(ChangeKind::Removal)),
        cadence_migration: cadence(&lines, Some(ChangeKind::Migration)),
        growth: growth(&lines),
        stages: lifecycle_stages(&lines),
        artifacts_harvested: artifacts.len(),
        docs,
        line_summaries: lines,
    }
}

/// PTM against library cadence: paired per line and at population level,
/// each family corrected for its four change types.
pub fn cadence_tests(m: &MetricsRecord, alpha: f64) -> Vec<StatRow> {
    let types: [(&str, fn(&DomainMetrics) -> &CadenceSummary); 4] = [
        ("overall", |d| &d.cadence_overall),
        ("addition", |d| &d.cadence_addition),
        ("removal", |d| &d.cadence_removal),
        ("migration", |d| &d.cadence_migration),
    ];
    let Some(lib) = &m.library else {
        return Vec::new();
    };
    let mut paired = Vec::new();
    let mut population = Vec::new();
    for (name, pick) in types {
        let p = pick(&m.ptm);
        let l = pick(lib);
        let lmap: BTreeMap<&str, f64> = l
            .records
            .iter()
            .map(|r| (r.line_id.as_str(), r.cadence))
            .collect();
        let both: Vec<(f64, f64)> = p
            .records
            .iter()
            .filter_map(|r| lmap.get(r.line_id.as_str()).map(|c| (r.cadence, *c)))
            .collect();
        let (a, b): (Vec<f64>, Vec<f64>) = both.into_iter().unzip();
        let res = wilcoxon_signed_rank(&a, &b);
        paired.push(StatRow {
            family: "wilcoxon".into(),
            change_type: name.into(),
            n_ptm: a.len(),
            n_library: b.len(),
            median_ptm: median(&a),
            median_library: median(&b),
            note: res.as_ref().err().map(|e| e.to_string()),
            result: res.ok(),
        });
        let pa: Vec<f64> = p.records.iter().map(|r| r.cadence).collect();
        let lb: Vec<f64> = l.records.iter().map(|r| r.cadence).collect();
        let res = mann_whitney_u(&pa, &lb);
        population.push(StatRow {
            family: "mann_whitney".into(),
            change_type: name.into(),
            n_ptm: pa.len(),
            n_library: lb.len(),
            median_ptm: p.median,
            median_library: l.median,
            note: res.as_ref().err().map(|e| e.to_string()),
            result: res.ok(),
        });
    }
    for fam in [&mut paired, &mut population] {
        let corrected = crate::stats::bonferroni(alpha, fam.len());
        let mut results: Vec<StatResult> = fam.iter().filter_map(|r| r.result.clone()).collect();
        apply_bonferroni(&mut results, alpha);
        let mut it = results.into_iter();
        for r in fam.iter_mut() {
            if r.result.is_some() {
                let mut x = it.next().expect("one result per row");
                x.alpha_corrected = Some(corrected);
                x.significant = x.p_value.map(|p| p < corrected);
                r.result = Some(x);
            }
        }
    }
    paired.extend(population);
    paired
}

/// Opens `path` as a run configuration, reporting problems as config errors.
pub fn load_config(path: &Path) -> Result<RunConfig, PipelineError> {
    Ok(RunConfig::load(path)?)
}
