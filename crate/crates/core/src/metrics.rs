//! Frequency, cadence, growth, lifecycle and documentation measures.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::change::ChangeKind;
use crate::stats::median;

/// Compact view of one analyzed release line in either domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSummary {
    pub line_id: String,
    /// Releases in the whole line.
    pub n_releases: usize,
    /// Index of the first release with a non-empty snapshot.
    pub t1: usize,
    /// Retained pair indices.
    pub pairs: Vec<usize>,
    pub count_t1: u64,
    pub count_end: u64,
    pub events: Vec<EventPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPoint {
    pub pair_index: usize,
    pub kind: ChangeKind,
}

impl LineSummary {
    /// Releases from t1 onward, inclusive.
    pub fn releases_from_t1(&self) -> usize {
        self.n_releases - self.t1
    }

    pub fn count(&self, kind: Option<ChangeKind>) -> usize {
        self.events
            .iter()
            .filter(|e| kind_matches(e.kind, kind))
            .count()
    }
}

/// `None` selects every kind.
fn kind_matches(k: ChangeKind, sel: Option<ChangeKind>) -> bool {
    sel.is_none_or(|s| k == s)
}

pub fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeFrequency {
    pub changed_pairs: usize,
    pub total_pairs: usize,
    pub proportion: Option<f64>,
}

pub fn change_frequency(lines: &[LineSummary]) -> ChangeFrequency {
    let mut changed = 0;
    let mut total = 0;
    for l in lines {
        let with_events: BTreeSet<usize> = l.events.iter().map(|e| e.pair_index).collect();
        total += l.pairs.len();
        changed += l.pairs.iter().filter(|p| with_events.contains(p)).count();
    }
    ChangeFrequency {
        changed_pairs: changed,
        total_pairs: total,
        proportion: ratio(changed, total),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadenceRecord {
    pub line_id: String,
    /// `None` for all kinds together.
    pub kind: Option<ChangeKind>,
    pub n_releases: usize,
    pub n_events: usize,
    pub cadence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadenceSummary {
    pub records: Vec<CadenceRecord>,
    pub median: Option<f64>,
}

/// Releases per event for every line with at least one event of `kind`.
pub fn cadence(lines: &[LineSummary], kind: Option<ChangeKind>) -> CadenceSummary {
    let records: Vec<CadenceRecord> = lines
        .iter()
        .filter_map(|l| {
            let n_events = l.count(kind);
            (n_events > 0).then(|| CadenceRecord {
                line_id: l.line_id.clone(),
                kind,
                n_releases: l.releases_from_t1(),
                n_events,
                cadence: l.releases_from_t1() as f64 / n_events as f64,
            })
        })
        .collect();
    let values: Vec<f64> = records.iter().map(|r| r.cadence).collect();
    CadenceSummary {
        median: median(&values),
        records,
    }
}

pub const STAGES: usize = 6;
pub const MIN_STAGE_RELEASES: usize = 6;

/// Stage of release index `p` in a line of `n` releases.
pub fn stage_of(p: usize, n: usize) -> usize {
    assert!(n >= 2 && p < n, "release index out of range");
    ((STAGES * p) / (n - 1)).min(STAGES - 1)
}

/// Addition events per lifecycle stage, over lines with enough releases.
/// An event belongs to the later release of its pair.
pub fn lifecycle_stages(lines: &[LineSummary]) -> [u64; STAGES] {
    let mut h = [0u64; STAGES];
    for l in lines.iter().filter(|l| l.n_releases >= MIN_STAGE_RELEASES) {
        for e in l.events.iter().filter(|e| e.kind == ChangeKind::Addition) {
            h[stage_of(e.pair_index + 1, l.n_releases)] += 1;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRecord {
    pub line_id: String,
    pub count_t1: u64,
    pub count_end: u64,
    pub factor: f64,
    pub addition_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    pub records: Vec<GrowthRecord>,
    pub lines_with_changes: usize,
    pub net_growth_lines: usize,
    pub net_growth_share: Option<f64>,
    pub addition_only_lines: usize,
    /// Over net-growth lines only.
    pub addition_only_share: Option<f64>,
    /// Over net-growth lines only.
    pub median_factor: Option<f64>,
}

pub fn growth(lines: &[LineSummary]) -> GrowthSummary {
    let records: Vec<GrowthRecord> = lines
        .iter()
        .filter(|l| l.count_t1 > 0)
        .map(|l| {
            let n = |k| l.count(Some(k));
            GrowthRecord {
                line_id: l.line_id.clone(),
                count_t1: l.count_t1,
                count_end: l.count_end,
                factor: l.count_end as f64 / l.count_t1 as f64,
                addition_only: n(ChangeKind::Addition) > 0
                    && n(ChangeKind::Removal) == 0
                    && n(ChangeKind::Migration) == 0,
            }
        })
        .collect();
    let changed: BTreeSet<&str> = lines
        .iter()
        .filter(|l| l.count(None) > 0)
        .map(|l| l.line_id.as_str())
        .collect();
    let growing: Vec<&GrowthRecord> = records
        .iter()
        .filter(|r| changed.contains(r.line_id.as_str()) && r.count_end > r.count_t1)
        .collect();
    let add_only = growing.iter().filter(|r| r.addition_only).count();
    let factors: Vec<f64> = growing.iter().map(|r| r.factor).collect();
    GrowthSummary {
        lines_with_changes: changed.len(),
        net_growth_lines: growing.len(),
        net_growth_share: ratio(growing.len(), changed.len()),
        addition_only_lines: add_only,
        addition_only_share: ratio(add_only, growing.len()),
        median_factor: median(&factors),
        records,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindBreakdown {
    pub kind: ChangeKind,
    pub events: usize,
    pub share: Option<f64>,
    /// Lines with at least one event of this kind.
    pub lines: usize,
    pub line_rate: Option<f64>,
}

/// Event shares and line rates per change kind.
pub fn kind_breakdown(lines: &[LineSummary], kinds: &[ChangeKind]) -> Vec<KindBreakdown> {
    let total: usize = lines.iter().map(|l| l.events.len()).sum();
    kinds
        .iter()
        .map(|&k| {
            let events: usize = lines.iter().map(|l| l.count(Some(k))).sum();
            let with = lines.iter().filter(|l| l.count(Some(k)) > 0).count();
            KindBreakdown {
                kind: k,
                events,
                share: ratio(events, total),
                lines: with,
                line_rate: ratio(with, lines.len()),
            }
        })
        .collect()
}

// ---- documentation ------------------------------------------------------------

/// An event as seen by the documentation metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocEvent {
    pub id: String,
    /// Release pair key, e.g. `"repo@main#3"`.
    pub pair: String,
    pub kind: ChangeKind,
}

/// Artifact labels as they enter the metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocArtifactLabel {
    pub artifact_id: String,
    pub events: Vec<String>,
    pub documented: bool,
    pub rationale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocCounts {
    pub events: usize,
    pub documented_events: usize,
    pub rationale_events: usize,
    pub changed_pairs: usize,
    pub documented_pairs: usize,
    pub artifacts: usize,
    pub rationale_artifacts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocMetrics {
    pub counts: DocCounts,
    pub documentation_rate: Option<f64>,
    pub pair_documentation_rate: Option<f64>,
    pub rationale_rate: Option<f64>,
    pub rationale_rate_documented: Option<f64>,
    pub rationale_rate_artifacts: Option<f64>,
    pub by_kind: Vec<KindDocRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindDocRates {
    pub kind: ChangeKind,
    pub events: usize,
    pub documented: usize,
    pub rationale: usize,
    pub documentation_rate: Option<f64>,
    pub rationale_rate: Option<f64>,
}

/// The five coverage ratios. An event is documented (or carries a
/// rationale) when any artifact linked to it is labeled so. Only artifacts
/// linked to at least one event in `events` are counted.
pub fn doc_metrics(events: &[DocEvent], artifacts: &[DocArtifactLabel]) -> DocMetrics {
    let ids: BTreeSet<&str> = events.iter().map(|e| e.id.as_str()).collect();
    let mut documented: BTreeSet<&str> = BTreeSet::new();
    let mut rationale: BTreeSet<&str> = BTreeSet::new();
    let mut n_art = 0;
    let mut n_art_rat = 0;
    for a in artifacts {
        let linked: Vec<&str> = a
            .events
            .iter()
            .map(String::as_str)
            .filter(|e| ids.contains(e))
            .collect();
        if linked.is_empty() {
            continue;
        }
        n_art += 1;
        let rat = a.rationale && a.documented;
        if rat {
            n_art_rat += 1;
        }
        for e in linked {
            if a.documented {
                documented.insert(e);
            }
            if rat {
                rationale.insert(e);
            }
        }
    }
    let pairs: BTreeSet<&str> = events.iter().map(|e| e.pair.as_str()).collect();
    let doc_pairs: BTreeSet<&str> = events
        .iter()
        .filter(|e| documented.contains(e.id.as_str()))
        .map(|e| e.pair.as_str())
        .collect();
    let mut kinds: BTreeMap<ChangeKind, (usize, usize, usize)> = BTreeMap::new();
    for e in events {
        let k = kinds.entry(e.kind).or_default();
        k.0 += 1;
        k.1 += documented.contains(e.id.as_str()) as usize;
        k.2 += rationale.contains(e.id.as_str()) as usize;
    }
    let counts = DocCounts {
        events: ids.len(),
        documented_events: documented.len(),
        rationale_events: rationale.len(),
        changed_pairs: pairs.len(),
        documented_pairs: doc_pairs.len(),
        artifacts: n_art,
        rationale_artifacts: n_art_rat,
    };
    DocMetrics {
        documentation_rate: ratio(counts.documented_events, counts.events),
        pair_documentation_rate: ratio(counts.documented_pairs, counts.changed_pairs),
        rationale_rate: ratio(counts.rationale_events, counts.events),
        rationale_rate_documented: ratio(counts.rationale_events, counts.documented_events),
        rationale_rate_artifacts: ratio(counts.rationale_artifacts, counts.artifacts),
        by_kind: kinds
            .into_iter()
            .map(|(kind, (n, d, r))| KindDocRates {
                kind,
                events: n,
                documented: d,
                rationale: r,
                documentation_rate: ratio(d, n),
                rationale_rate: ratio(r, n),
            })
            .collect(),
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ChangeKind::*;

    fn line(
        id: &str,
        n: usize,
        t1: usize,
        c: (u64, u64),
        ev: &[(usize, ChangeKind)],
    ) -> LineSummary {
        LineSummary {
            line_id: id.into(),
            n_releases: n,
            t1,
            pairs: (t1..n - 1).collect(),
            count_t1: c.0,
            count_end: c.1,
            events: ev
                .iter()
                .map(|&(p, k)| EventPoint {
                    pair_index: p,
                    kind: k,
                })
                .collect(),
        }
    }

    #[test]
    fn frequency_two_of_four() {
        let l = line(
            "a",
            5,
            0,
            (1, 1),
            &[(0, Addition), (0, Removal), (2, Update)],
        );
        let f = change_frequency(&[l]);
        assert_eq!(
            (f.changed_pairs, f.total_pairs, f.proportion),
            (2, 4, Some(0.5))
        );
    }

    #[test]
    fn cadence_examples() {
        let l = line("a", 10, 2, (1, 3), &[(3, Addition), (6, Addition)]);
        let c = cadence(std::slice::from_ref(&l), Some(Addition));
        assert_eq!(c.records[0].cadence, 4.0);
        assert_eq!(c.median, Some(4.0));
        assert!(cadence(&[l], Some(Removal)).records.is_empty());
    }

    #[test]
    fn cadence_five_lines() {
        // releases from t1: 6, 8, 9, 4, 12; additions: 2, 1, 3, 4, 2
        let ls = vec![
            line("a", 6, 0, (1, 1), &[(0, Addition), (1, Addition)]),
            line("b", 10, 2, (1, 1), &[(2, Addition)]),
            line(
                "c",
                9,
                0,
                (1, 1),
                &[(0, Addition), (1, Addition), (2, Addition)],
            ),
            line(
                "d",
                4,
                0,
                (1, 1),
                &[(0, Addition), (1, Addition), (2, Addition), (2, Addition)],
            ),
            line("e", 12, 0, (1, 1), &[(0, Addition), (5, Addition)]),
        ];
        // cadences 3, 8, 3, 1, 6
        assert_eq!(cadence(&ls, Some(Addition)).median, Some(3.0));
        let mut twice = ls.clone();
        twice.extend(ls.iter().cloned());
        assert_eq!(cadence(&twice, Some(Addition)).median, Some(3.0));
    }

    #[test]
    fn overall_cadence_counts_every_kind() {
        let l = line(
            "a",
            9,
            1,
            (1, 1),
            &[(1, Addition), (2, Update), (3, Removal)],
        );
        let c = cadence(&[l], None);
        assert_eq!(c.records[0].n_events, 3);
        assert_eq!(c.median, Some(8.0 / 3.0));
    }

    #[test]
    fn stage_boundaries() {
        assert_eq!(stage_of(6, 7), 5);
        assert_eq!(stage_of(0, 6), 0);
        let s: Vec<usize> = [1, 5, 10].iter().map(|&p| stage_of(p, 12)).collect();
        assert_eq!(s, vec![0, 2, 5]);
        assert_eq!(stage_of(5, 6), 5);
    }

    #[test]
    fn short_lines_excluded_from_stages() {
        let short = line("s", 5, 0, (1, 1), &[(0, Addition)]);
        let long = line(
            "l",
            12,
            0,
            (1, 1),
            &[(0, Addition), (4, Addition), (9, Addition), (3, Removal)],
        );
        assert_eq!(lifecycle_stages(&[short, long]), [1, 0, 1, 0, 0, 1]);
    }

    #[test]
    fn growth_examples() {
        let ls = vec![
            line("a", 5, 0, (2, 4), &[(0, Addition), (1, Addition)]),
            line(
                "b",
                5,
                0,
                (1, 3),
                &[(0, Addition), (1, Migration), (2, Addition)],
            ),
            line("c", 5, 0, (3, 2), &[(0, Removal)]),
            line("d", 5, 0, (2, 2), &[(0, Migration)]),
            line("e", 5, 0, (1, 1), &[]),
            line("f", 5, 0, (1, 5), &[(0, Addition), (3, Addition)]),
        ];
        let g = growth(&ls);
        assert_eq!(g.records[0].factor, 2.0);
        assert!(g.records[0].addition_only);
        assert_eq!(g.lines_with_changes, 5);
        assert_eq!(g.net_growth_lines, 3);
        assert_eq!(g.net_growth_share, Some(0.6));
        assert_eq!(g.addition_only_lines, 2);
        assert_eq!(g.addition_only_share, Some(2.0 / 3.0));
        // factors 2, 3, 5
        assert_eq!(g.median_factor, Some(3.0));
    }

    #[test]
    fn breakdown_shares() {
        let ls = vec![
            line(
                "a",
                5,
                0,
                (1, 1),
                &[(0, Addition), (1, Addition), (2, Removal)],
            ),
            line("b", 5, 0, (1, 1), &[(0, Addition)]),
            line("c", 5, 0, (1, 1), &[]),
        ];
        let b = kind_breakdown(&ls, &[Addition, Removal, Migration]);
        assert_eq!(b[0].events, 3);
        assert_eq!(b[0].share, Some(0.75));
        assert_eq!(b[0].line_rate, Some(2.0 / 3.0));
        assert_eq!(b[2].share, Some(0.0));
    }

    fn ev(id: &str, pair: &str, kind: ChangeKind) -> DocEvent {
        DocEvent {
            id: id.into(),
            pair: pair.into(),
            kind,
        }
    }

    fn art(id: &str, evs: &[&str], d: bool, r: bool) -> DocArtifactLabel {
        DocArtifactLabel {
            artifact_id: id.into(),
            events: evs.iter().map(|s| s.to_string()).collect(),
            documented: d,
            rationale: r,
        }
    }

    #[test]
    fn doc_three_of_ten() {
        let events: Vec<DocEvent> = (0..10)
            .map(|i| ev(&format!("e{i}"), &format!("p{}", i / 2), Addition))
            .collect();
        let arts = vec![
            art("a1", &["e0", "e1"], true, true),
            art("a2", &["e4"], true, true),
            art("a3", &["e5", "e6"], false, false),
            art("a4", &["zz"], true, true),
        ];
        let m = doc_metrics(&events, &arts);
        assert_eq!(m.documentation_rate, Some(0.3));
        assert_eq!(m.rationale_rate_documented, Some(1.0));
        assert_eq!(m.pair_documentation_rate, Some(0.4));
        assert_eq!(m.rationale_rate_artifacts, Some(2.0 / 3.0));
    }

    proptest! {
        #[test]
        fn doc_metrics_bounded(
            labels in proptest::collection::vec((0usize..12, any::<bool>(), any::<bool>()), 0..20),
        ) {
            let events: Vec<DocEvent> = (0..12).map(|i| ev(&format!("e{i}"), &format!("p{}", i % 5), Addition)).collect();
            let arts: Vec<DocArtifactLabel> = labels
                .iter()
                .enumerate()
                .map(|(i, (e, d, r))| art(&format!("a{i}"), &[&format!("e{e}")], *d, *r && *d))
                .collect();
            let m = doc_metrics(&events, &arts);
            for v in [m.documentation_rate, m.pair_documentation_rate, m.rationale_rate, m.rationale_rate_documented, m.rationale_rate_artifacts].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(m.rationale_rate.unwrap() <= m.documentation_rate.unwrap());
        }

        #[test]
        fn stage_histogram_totals(n in 2usize..20, ps in proptest::collection::vec(0usize..19, 0..10)) {
            let ev: Vec<(usize, ChangeKind)> = ps.into_iter().filter(|p| *p + 1 < n).map(|p| (p, Addition)).collect();
            let l = line("x", n, 0, (1, 1), &ev);
            let h = lifecycle_stages(std::slice::from_ref(&l));
            let want = if n >= MIN_STAGE_RELEASES { ev.len() as u64 } else { 0 };
            prop_assert_eq!(h.iter().sum::<u64>(), want);
        }
    }
}
