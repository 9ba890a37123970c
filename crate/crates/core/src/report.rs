//! Report tables rendered from the metrics and stats streams, plus the
//! store-wide integrity check.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::change::{ChangeEvent, ChangeKind};
use crate::manifest::ManifestChange;
use crate::pipeline::{
    ArtifactRecord, Domain, DomainMetrics, LineRecord, MetricsRecord, PairRecord, SnapshotRecord,
    StatRow, WindowRecord,
};
use crate::store::{sha256_hex, write_atomic, RunStore, StoreError};

/// One value with the counts it was computed from, when it is a ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerator: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denominator: Option<u64>,
}

impl Cell {
    fn count(n: usize) -> Cell {
        Cell {
            value: Some(n as f64),
            numerator: None,
            denominator: None,
        }
    }

    fn value(v: Option<f64>) -> Cell {
        Cell {
            value: v,
            numerator: None,
            denominator: None,
        }
    }

    fn ratio(num: usize, den: usize) -> Cell {
        Cell {
            value: (den > 0).then(|| num as f64 / den as f64),
            numerator: Some(num as u64),
            denominator: Some(den as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub section: String,
    pub metric: String,
    pub ptm: Cell,
    /// `None` without a library baseline.
    pub library: Option<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRow {
    pub domain: Domain,
    pub line_id: String,
    pub n_releases: usize,
    pub t1: usize,
    pub pairs: usize,
    pub count_t1: u64,
    pub count_end: u64,
    pub additions: usize,
    pub removals: usize,
    pub migrations: usize,
    pub updates: usize,
    pub cadence_overall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocRow {
    pub domain: Domain,
    /// `all` or a change kind.
    pub scope: String,
    pub metric: String,
    pub cell: Cell,
}

pub fn summary_rows(m: &MetricsRecord) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let mut push = |section: &str, metric: &str, f: &dyn Fn(&DomainMetrics) -> Cell| {
        rows.push(SummaryRow {
            section: section.into(),
            metric: metric.into(),
            ptm: f(&m.ptm),
            library: m.library.as_ref().map(f),
        });
    };
    push("dataset", "repositories", &|_| Cell::count(m.repositories));
    push("dataset", "release_lines", &|d| Cell::count(d.lines));
    push("dataset", "releases", &|d| Cell::count(d.releases));
    push("dataset", "release_pairs", &|d| Cell::count(d.pairs));
    push("dataset", "events", &|d| Cell::count(d.total_events));
    push("frequency", "changed_pair_share", &|d| {
        Cell::ratio(d.frequency.changed_pairs, d.frequency.total_pairs)
    });
    push("frequency", "changed_line_share", &|d| {
        Cell::ratio(d.changed_lines, d.lines)
    });
    for k in [
        ChangeKind::Addition,
        ChangeKind::Removal,
        ChangeKind::Migration,
        ChangeKind::Update,
    ] {
        push("change_types", &format!("{k}_event_share"), &|d| {
            let b = d.kind(k);
            Cell::ratio(b.map_or(0, |b| b.events), d.total_events)
        });
        push("change_types", &format!("{k}_line_share"), &|d| {
            let b = d.kind(k);
            Cell::ratio(b.map_or(0, |b| b.lines), d.lines)
        });
    }
    push("cadence", "median_overall", &|d| {
        Cell::value(d.cadence_overall.median)
    });
    push("cadence", "median_addition", &|d| {
        Cell::value(d.cadence_addition.median)
    });
    push("cadence", "median_removal", &|d| {
        Cell::value(d.cadence_removal.median)
    });
    push("cadence", "median_migration", &|d| {
        Cell::value(d.cadence_migration.median)
    });
    push("growth", "net_growth_share", &|d| {
        Cell::ratio(d.growth.net_growth_lines, d.growth.lines_with_changes)
    });
    push("growth", "addition_only_share", &|d| {
        Cell::ratio(d.growth.addition_only_lines, d.growth.net_growth_lines)
    });
    push("growth", "median_growth_factor", &|d| {
        Cell::value(d.growth.median_factor)
    });
    for s in 0..crate::metrics::STAGES {
        push("lifecycle", &format!("stage_{}", s + 1), &|d| {
            let total: u64 = d.stages.iter().sum();
            Cell::ratio(d.stages[s] as usize, total as usize)
        });
    }
    rows
}

pub fn line_rows(m: &MetricsRecord) -> Vec<LineRow> {
    let mut out = Vec::new();
    let domains = [
        (Domain::Ptm, Some(&m.ptm)),
        (Domain::Library, m.library.as_ref()),
    ];
    for (domain, d) in domains {
        let Some(d) = d else { continue };
        let cad: BTreeMap<&str, f64> = d
            .cadence_overall
            .records
            .iter()
            .map(|r| (r.line_id.as_str(), r.cadence))
            .collect();
        for l in &d.line_summaries {
            let n = |k| l.count(Some(k));
            out.push(LineRow {
                domain,
                line_id: l.line_id.clone(),
                n_releases: l.n_releases,
                t1: l.t1,
                pairs: l.pairs.len(),
                count_t1: l.count_t1,
                count_end: l.count_end,
                additions: n(ChangeKind::Addition),
                removals: n(ChangeKind::Removal),
                migrations: n(ChangeKind::Migration),
                updates: n(ChangeKind::Update),
                cadence_overall: cad.get(l.line_id.as_str()).copied(),
            });
        }
    }
    out
}

pub fn doc_rows(m: &MetricsRecord) -> Vec<DocRow> {
    let mut out = Vec::new();
    let domains = [
        (Domain::Ptm, Some(&m.ptm)),
        (Domain::Library, m.library.as_ref()),
    ];
    for (domain, d) in domains {
        let Some(doc) = d.and_then(|d| d.docs.as_ref()) else {
            continue;
        };
        let c = &doc.counts;
        let mut push = |scope: &str, metric: &str, cell: Cell| {
            out.push(DocRow {
                domain,
                scope: scope.into(),
                metric: metric.into(),
                cell,
            })
        };
        push(
            "all",
            "documentation_rate",
            Cell::ratio(c.documented_events, c.events),
        );
        push(
            "all",
            "pair_documentation_rate",
            Cell::ratio(c.documented_pairs, c.changed_pairs),
        );
        push(
            "all",
            "rationale_rate",
            Cell::ratio(c.rationale_events, c.events),
        );
        push(
            "all",
            "rationale_rate_documented",
            Cell::ratio(c.rationale_events, c.documented_events),
        );
        push(
            "all",
            "rationale_rate_artifacts",
            Cell::ratio(c.rationale_artifacts, c.artifacts),
        );
        if let Some(d) = d {
            push(
                "all",
                "artifacts_harvested",
                Cell::count(d.artifacts_harvested),
            );
        }
        for k in &doc.by_kind {
            let scope = k.kind.to_string();
            push(
                &scope,
                "documentation_rate",
                Cell::ratio(k.documented, k.events),
            );
            push(&scope, "rationale_rate", Cell::ratio(k.rationale, k.events));
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_cell(c: Option<&Cell>) -> [String; 3] {
    match c {
        Some(c) => [
            fmt_opt(c.value),
            c.numerator.map(|n| n.to_string()).unwrap_or_default(),
            c.denominator.map(|n| n.to_string()).unwrap_or_default(),
        ],
        None => Default::default(),
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn summary_csv(rows: &[SummaryRow]) -> Vec<u8> {
    csv_bytes(
        &[
            "section",
            "metric",
            "ptm",
            "ptm_num",
            "ptm_den",
            "library",
            "library_num",
            "library_den",
        ],
        rows.iter().map(|r| {
            let mut v = vec![r.section.clone(), r.metric.clone()];
            v.extend(fmt_cell(Some(&r.ptm)));
            v.extend(fmt_cell(r.library.as_ref()));
            v
        }),
    )
}

pub fn lines_csv(rows: &[LineRow]) -> Vec<u8> {
    csv_bytes(
        &[
            "domain",
            "line_id",
            "n_releases",
            "t1",
            "pairs",
            "count_t1",
            "count_end",
            "additions",
            "removals",
            "migrations",
            "updates",
            "cadence_overall",
        ],
        rows.iter().map(|r| {
            vec![
                r.domain.prefix().to_string(),
                r.line_id.clone(),
                r.n_releases.to_string(),
                r.t1.to_string(),
                r.pairs.to_string(),
                r.count_t1.to_string(),
                r.count_end.to_string(),
                r.additions.to_string(),
                r.removals.to_string(),
                r.migrations.to_string(),
                r.updates.to_string(),
                fmt_opt(r.cadence_overall),
            ]
        }),
    )
}

pub fn stats_csv(rows: &[StatRow]) -> Vec<u8> {
    csv_bytes(
        &[
            "family",
            "change_type",
            "n_ptm",
            "n_library",
            "median_ptm",
            "median_library",
            "statistic",
            "p_value",
            "exact",
            "effect",
            "effect_size",
            "alpha_corrected",
            "significant",
            "note",
        ],
        rows.iter().map(|r| {
            let res = r.result.as_ref();
            vec![
                r.family.clone(),
                r.change_type.clone(),
                r.n_ptm.to_string(),
                r.n_library.to_string(),
                fmt_opt(r.median_ptm),
                fmt_opt(r.median_library),
                fmt_opt(res.map(|x| x.statistic)),
                fmt_opt(res.and_then(|x| x.p_value)),
                res.map(|x| x.exact.to_string()).unwrap_or_default(),
                res.map(|x| x.effect.name().to_string()).unwrap_or_default(),
                fmt_opt(res.map(|x| x.effect.value())),
                fmt_opt(res.and_then(|x| x.alpha_corrected)),
                res.and_then(|x| x.significant)
                    .map(|s| s.to_string())
                    .unwrap_or_default(),
                r.note.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn docs_csv(rows: &[DocRow]) -> Vec<u8> {
    csv_bytes(
        &[
            "domain",
            "scope",
            "metric",
            "value",
            "numerator",
            "denominator",
        ],
        rows.iter().map(|r| {
            let mut v = vec![
                r.domain.prefix().to_string(),
                r.scope.clone(),
                r.metric.clone(),
            ];
            v.extend(fmt_cell(Some(&r.cell)));
            v
        }),
    )
}

/// Writes `report/{summary,lines,stats,documentation}.{json,csv}` and
/// returns their relative paths with content hashes.
pub fn write_reports(store: &RunStore) -> Result<BTreeMap<String, String>, StoreError> {
    let metrics: Vec<MetricsRecord> = store.read_stream("metrics")?;
    let stats: Vec<StatRow> = store.read_stream("stats")?;
    let Some(m) = metrics.first() else {
        return Err(StoreError::Record {
            path: store.stream_path("metrics").display().to_string(),
            line: 0,
            message: "empty metrics stream".into(),
        });
    };
    let summary = summary_rows(m);
    let lines = line_rows(m);
    let docs = doc_rows(m);
    let files: Vec<(&str, Vec<u8>, Vec<u8>)> = vec![
        ("summary", to_json(&summary), summary_csv(&summary)),
        ("lines", to_json(&lines), lines_csv(&lines)),
        ("stats", to_json(&stats), stats_csv(&stats)),
        ("documentation", to_json(&docs), docs_csv(&docs)),
    ];
    let mut out = BTreeMap::new();
    for (name, json, csv) in files {
        for (ext, bytes) in [("json", json), ("csv", csv)] {
            let rel = format!("report/{name}.{ext}");
            write_atomic(&store.root().join(&rel), &bytes)?;
            out.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok(out)
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable report");
    b.push(b'\n');
    b
}

fn read_or_empty<T: serde::de::DeserializeOwned>(
    store: &RunStore,
    stream: &str,
) -> Result<Vec<T>, StoreError> {
    if store.has_stream(stream) {
        store.read_stream(stream)
    } else {
        Ok(Vec::new())
    }
}

/// Cross-stream referential integrity. Returns one message per problem.
pub fn check_store(store: &RunStore) -> Result<Vec<String>, StoreError> {
    let lines: Vec<LineRecord> = read_or_empty(store, "lines")?;
    let snaps: Vec<SnapshotRecord> = read_or_empty(store, "snapshots")?;
    let windows: Vec<WindowRecord> = read_or_empty(store, "windows")?;
    let pairs: Vec<PairRecord> = read_or_empty(store, "pairs")?;
    let events: Vec<ChangeEvent> = read_or_empty(store, "events")?;
    let lib: Vec<ManifestChange> = read_or_empty(store, "library_events")?;
    let arts: Vec<ArtifactRecord> = read_or_empty(store, "artifacts")?;
    let mut problems = Vec::new();

    let line_ids: BTreeSet<&str> = lines.iter().map(|l| l.line_id.as_str()).collect();
    for s in &snaps {
        if !line_ids.contains(s.line_id.as_str()) {
            problems.push(format!(
                "snapshot {}@{} names unknown line",
                s.line_id, s.tag
            ));
        }
    }
    let mut windowed: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for w in &windows {
        if !line_ids.contains(w.line_id.as_str()) {
            problems.push(format!("window for unknown line {}", w.line_id));
        }
        if w.pairs.iter().any(|&p| p + 1 >= w.n_releases) {
            problems.push(format!(
                "window for {} has a pair past the last release",
                w.line_id
            ));
        }
        windowed.insert(w.line_id.as_str(), w.pairs.iter().copied().collect());
    }
    let in_window = |line: &str, i: usize| windowed.get(line).is_some_and(|p| p.contains(&i));
    for p in &pairs {
        if !in_window(&p.line_id, p.pair_index) {
            problems.push(format!(
                "pair {}#{} outside its window",
                p.line_id, p.pair_index
            ));
        }
    }
    let mut ids = BTreeSet::new();
    for (id, line, i) in events
        .iter()
        .map(|e| (&e.id, &e.pair.line_id, e.pair.pair_index))
        .chain(
            lib.iter()
                .map(|e| (&e.id, &e.pair.line_id, e.pair.pair_index)),
        )
    {
        if !ids.insert(id.as_str()) {
            problems.push(format!("duplicate event id {id}"));
        }
        if !in_window(line, i) {
            problems.push(format!("event {id} outside its line's window"));
        }
    }
    let mut art_ids = BTreeSet::new();
    for a in &arts {
        if !art_ids.insert(a.artifact.id.as_str()) {
            problems.push(format!("duplicate artifact id {}", a.artifact.id));
        }
        if a.artifact.events.is_empty() {
            problems.push(format!("artifact {} links no event", a.artifact.id));
        }
        for e in &a.artifact.events {
            if !ids.contains(e.as_str()) {
                problems.push(format!(
                    "artifact {} links unknown event {e}",
                    a.artifact.id
                ));
            }
        }
    }
    Ok(problems)
}
