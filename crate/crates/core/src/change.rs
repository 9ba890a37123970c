//! Release-pair deltas, migration candidates and change events.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::CommitFileChange;
use crate::multiset::Multiset;

/// Multiset delta between two adjacent release snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleasePairDelta {
    /// Every id present in either snapshot, including zero deltas.
    pub deltas: BTreeMap<String, i64>,
    /// A: total positive change.
    pub additions: u64,
    /// R: total negative change.
    pub removals: u64,
    /// U = min(A, R), the most migrations the pair can contain.
    pub migration_bound: u64,
}

impl ReleasePairDelta {
    pub fn has_changes(&self) -> bool {
        self.additions > 0 || self.removals > 0
    }
}

pub fn diff_pair(prev: &Multiset<String>, next: &Multiset<String>) -> ReleasePairDelta {
    let deltas = prev.delta_to(next);
    let additions: u64 = deltas.values().filter(|d| **d > 0).map(|d| *d as u64).sum();
    let removals: u64 = deltas
        .values()
        .filter(|d| **d < 0)
        .map(|d| d.unsigned_abs())
        .sum();
    ReleasePairDelta {
        deltas,
        additions,
        removals,
        migration_bound: additions.min(removals),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeKind {
    Addition,
    Removal,
    Migration,
    /// Library version-spec change; never produced for PTMs.
    Update,
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChangeKind::Addition => "addition",
            ChangeKind::Removal => "removal",
            ChangeKind::Migration => "migration",
            ChangeKind::Update => "update",
        })
    }
}

/// Identifies a release pair within the run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairRef {
    pub line_id: String,
    pub pair_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MigrationCandidate {
    pub pair: PairRef,
    pub ptm_from: String,
    pub ptm_to: String,
    pub file: String,
    pub commit: String,
    pub line_from: u32,
    pub line_to: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub id: String,
    pub pair: PairRef,
    pub kind: ChangeKind,
    pub ptm_from: Option<String>,
    pub ptm_to: Option<String>,
    /// Logical file id, when the event could be attributed to a file.
    pub file: Option<String>,
    pub commit: Option<String>,
    pub first_adoption: bool,
}

/// One instance of an id entering or leaving a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance<'a> {
    pub id: &'a str,
    pub line: u32,
}

/// Greedy nearest-line pairing of removed and added instances that share a
/// file and commit. Ties break on (from id, to id, from line, to line).
/// Budgets cap how many pairings each id may take part in.
pub fn pair_instances(
    removed: &[Instance<'_>],
    added: &[Instance<'_>],
    rem_budget: &mut BTreeMap<String, u64>,
    add_budget: &mut BTreeMap<String, u64>,
    limit: u64,
) -> Vec<(usize, usize)> {
    let mut options: Vec<(u32, &str, &str, u32, u32, usize, usize)> = Vec::new();
    for (i, r) in removed.iter().enumerate() {
        for (j, a) in added.iter().enumerate() {
            if r.id != a.id {
                options.push((r.line.abs_diff(a.line), r.id, a.id, r.line, a.line, i, j));
            }
        }
    }
    options.sort();
    let mut used_r = vec![false; removed.len()];
    let mut used_a = vec![false; added.len()];
    let mut out = Vec::new();
    for (_, rid, aid, _, _, i, j) in options {
        if out.len() as u64 >= limit {
            break;
        }
        if used_r[i] || used_a[j] {
            continue;
        }
        let rb = rem_budget.get(rid).copied().unwrap_or(0);
        let ab = add_budget.get(aid).copied().unwrap_or(0);
        if rb == 0 || ab == 0 {
            continue;
        }
        rem_budget.insert(rid.to_string(), rb - 1);
        add_budget.insert(aid.to_string(), ab - 1);
        used_r[i] = true;
        used_a[j] = true;
        out.push((i, j));
    }
    out
}

fn budgets(delta: &ReleasePairDelta) -> (BTreeMap<String, u64>, BTreeMap<String, u64>) {
    let rem = delta
        .deltas
        .iter()
        .filter(|(_, d)| **d < 0)
        .map(|(k, d)| (k.clone(), d.unsigned_abs()))
        .collect();
    let add = delta
        .deltas
        .iter()
        .filter(|(_, d)| **d > 0)
        .map(|(k, d)| (k.clone(), *d as u64))
        .collect();
    (rem, add)
}

/// Candidates from removals and additions that co-occur in one logical file
/// within one first-parent commit. Commits are visited in the given order.
pub fn find_migration_candidates(
    pair: &PairRef,
    delta: &ReleasePairDelta,
    changes: &[CommitFileChange],
) -> Vec<MigrationCandidate> {
    let (mut rem_budget, mut add_budget) = budgets(delta);
    let mut remaining = delta.migration_bound;
    let mut out = Vec::new();
    for ch in changes {
        if remaining == 0 {
            break;
        }
        let removed: Vec<Instance> = ch
            .removed
            .iter()
            .map(|(id, line)| Instance { id, line: *line })
            .collect();
        let added: Vec<Instance> = ch
            .added
            .iter()
            .map(|(id, line)| Instance { id, line: *line })
            .collect();
        let picks = pair_instances(
            &removed,
            &added,
            &mut rem_budget,
            &mut add_budget,
            remaining,
        );
        remaining -= picks.len() as u64;
        for (i, j) in picks {
            out.push(MigrationCandidate {
                pair: pair.clone(),
                ptm_from: removed[i].id.to_string(),
                ptm_to: added[j].id.to_string(),
                file: ch.file_id.clone(),
                commit: ch.commit.clone(),
                line_from: removed[i].line,
                line_to: added[j].line,
            });
        }
    }
    out
}

// ---- annotations ----------------------------------------------------------------

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("annotation row {row}: {message}")]
    Row { row: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationAnnotation {
    pub line_id: String,
    pub pair_index: usize,
    pub file: String,
    pub commit: String,
    pub ptm_from: String,
    pub ptm_to: String,
    pub verdict: String,
    #[serde(default)]
    pub note: String,
}

impl MigrationAnnotation {
    pub fn confirmed(&self) -> bool {
        self.verdict.eq_ignore_ascii_case("y")
    }

    fn matches(&self, pair: &PairRef, file: &str, commit: &str, from: &str, to: &str) -> bool {
        self.line_id == pair.line_id
            && self.pair_index == pair.pair_index
            && self.file == file
            && self.ptm_from == from
            && self.ptm_to == to
            && !self.commit.is_empty()
            && commit.starts_with(&self.commit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnknownAnnotationWarning {
    pub row: usize,
    pub annotation: MigrationAnnotation,
}

/// Candidate verdicts keyed by the candidate's coordinates. Commit ids may
/// be abbreviated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MigrationAnnotations {
    pub rows: Vec<MigrationAnnotation>,
}

impl MigrationAnnotations {
    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, AnnotationError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<MigrationAnnotation>() {
            let a = rec.map_err(|e| AnnotationError::Row {
                row: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let v = a.verdict.to_ascii_uppercase();
            if v != "Y" && v != "N" {
                return Err(AnnotationError::Row {
                    row: rows.len() as u64 + 2,
                    message: format!("verdict must be Y or N, got {:?}", a.verdict),
                });
            }
            rows.push(a);
        }
        Ok(MigrationAnnotations { rows })
    }

    pub fn verdict(
        &self,
        pair: &PairRef,
        file: &str,
        commit: &str,
        from: &str,
        to: &str,
    ) -> Option<&MigrationAnnotation> {
        self.rows
            .iter()
            .rev()
            .find(|a| a.matches(pair, file, commit, from, to))
    }

    /// Annotations that match none of `candidates`.
    pub fn unknown(&self, candidates: &[MigrationCandidate]) -> Vec<UnknownAnnotationWarning> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                !candidates
                    .iter()
                    .any(|c| a.matches(&c.pair, &c.file, &c.commit, &c.ptm_from, &c.ptm_to))
            })
            .map(|(i, a)| UnknownAnnotationWarning {
                row: i + 2,
                annotation: a.clone(),
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Blank annotation rows for every candidate, for human review.
pub fn annotation_template(candidates: &[MigrationCandidate]) -> MigrationAnnotations {
    MigrationAnnotations {
        rows: candidates
            .iter()
            .map(|c| MigrationAnnotation {
                line_id: c.pair.line_id.clone(),
                pair_index: c.pair.pair_index,
                file: c.file.clone(),
                commit: c.commit.clone(),
                ptm_from: c.ptm_from.clone(),
                ptm_to: c.ptm_to.clone(),
                verdict: String::new(),
                note: String::new(),
            })
            .collect(),
    }
}

/// Splits candidates into confirmed (`Y`) and rejected or unannotated.
pub fn confirm_migrations<'c>(
    candidates: &'c [MigrationCandidate],
    annotations: &MigrationAnnotations,
) -> (Vec<&'c MigrationCandidate>, Vec<&'c MigrationCandidate>) {
    candidates.iter().partition(|c| {
        annotations
            .verdict(&c.pair, &c.file, &c.commit, &c.ptm_from, &c.ptm_to)
            .is_some_and(MigrationAnnotation::confirmed)
    })
}

/// Builds the final event list of one pair. Confirmed candidates become
/// migrations; every other unit of Δ becomes an addition or removal,
/// attributed to the first unconsumed file/commit change that carries it.
pub fn classify_pair(
    pair: &PairRef,
    delta: &ReleasePairDelta,
    changes: &[CommitFileChange],
    confirmed: &[&MigrationCandidate],
    first_adoption: bool,
) -> Vec<ChangeEvent> {
    let mut events = Vec::new();
    let mut rem_left: BTreeMap<&str, u64> = BTreeMap::new();
    let mut add_left: BTreeMap<&str, u64> = BTreeMap::new();
    for (k, d) in &delta.deltas {
        if *d < 0 {
            rem_left.insert(k, d.unsigned_abs());
        } else if *d > 0 {
            add_left.insert(k, *d as u64);
        }
    }
    // instances already consumed by confirmed migrations
    let mut used: BTreeSet<(String, String, String, u32, bool)> = BTreeSet::new();
    for c in confirmed {
        *rem_left
            .get_mut(c.ptm_from.as_str())
            .expect("candidate within budget") -= 1;
        *add_left
            .get_mut(c.ptm_to.as_str())
            .expect("candidate within budget") -= 1;
        used.insert((
            c.commit.clone(),
            c.file.clone(),
            c.ptm_from.clone(),
            c.line_from,
            false,
        ));
        used.insert((
            c.commit.clone(),
            c.file.clone(),
            c.ptm_to.clone(),
            c.line_to,
            true,
        ));
        events.push(ChangeEvent {
            id: String::new(),
            pair: pair.clone(),
            kind: ChangeKind::Migration,
            ptm_from: Some(c.ptm_from.clone()),
            ptm_to: Some(c.ptm_to.clone()),
            file: Some(c.file.clone()),
            commit: Some(c.commit.clone()),
            first_adoption: false,
        });
    }
    let mut locate = |id: &str, added: bool| -> (Option<String>, Option<String>) {
        // latest change carrying the id wins: it is the one that left the
        // final state
        for ch in changes.iter().rev() {
            let list = if added { &ch.added } else { &ch.removed };
            for (pid, line) in list {
                let key = (
                    ch.commit.clone(),
                    ch.file_id.clone(),
                    pid.clone(),
                    *line,
                    added,
                );
                if pid == id && !used.contains(&key) {
                    used.insert(key);
                    return (Some(ch.file_id.clone()), Some(ch.commit.clone()));
                }
            }
        }
        (None, None)
    };
    for (id, n) in &rem_left {
        for _ in 0..*n {
            let (file, commit) = locate(id, false);
            events.push(ChangeEvent {
                id: String::new(),
                pair: pair.clone(),
                kind: ChangeKind::Removal,
                ptm_from: Some(id.to_string()),
                ptm_to: None,
                file,
                commit,
                first_adoption: false,
            });
        }
    }
    for (id, n) in &add_left {
        for _ in 0..*n {
            let (file, commit) = locate(id, true);
            events.push(ChangeEvent {
                id: String::new(),
                pair: pair.clone(),
                kind: ChangeKind::Addition,
                ptm_from: None,
                ptm_to: Some(id.to_string()),
                file,
                commit,
                first_adoption,
            });
        }
    }
    for (i, e) in events.iter_mut().enumerate() {
        e.id = format!("{}#{}/e{}", pair.line_id, pair.pair_index, i);
    }
    events
}

// ---- t1 anchoring -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no release of the line contains a PTM")]
pub struct EmptyLineResult;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisWindow {
    /// Index of the first release with a non-empty snapshot.
    pub t1: usize,
    /// Retained pair indices; pair `i` is releases (`i`, `i+1`).
    pub pairs: Vec<usize>,
}

pub fn anchor_t1(snapshots: &[Multiset<String>]) -> Result<AnalysisWindow, EmptyLineResult> {
    let t1 = snapshots
        .iter()
        .position(|s| !s.is_empty())
        .ok_or(EmptyLineResult)?;
    let pairs = (t1..snapshots.len().saturating_sub(1))
        .filter(|&i| !(snapshots[i].is_empty() && snapshots[i + 1].is_empty()))
        .collect();
    Ok(AnalysisWindow { t1, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiset::ms;
    use proptest::prelude::*;

    fn pair() -> PairRef {
        PairRef {
            line_id: "r@main".into(),
            pair_index: 0,
        }
    }

    fn change(
        commit: &str,
        file: &str,
        removed: &[(&str, u32)],
        added: &[(&str, u32)],
    ) -> CommitFileChange {
        let own = |v: &[(&str, u32)]| v.iter().map(|(a, b)| (a.to_string(), *b)).collect();
        CommitFileChange {
            commit: commit.into(),
            file_id: file.into(),
            path: file.into(),
            removed: own(removed),
            added: own(added),
        }
    }

    #[test]
    fn worked_example_delta() {
        let d = diff_pair(
            &ms(&[("A", 2), ("B", 1), ("C", 1)]),
            &ms(&[("A", 1), ("B", 1), ("D", 1), ("E", 1)]),
        );
        let expect: BTreeMap<String, i64> = [("A", -1), ("B", 0), ("C", -1), ("D", 1), ("E", 1)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        assert_eq!(d.deltas, expect);
        assert_eq!((d.additions, d.removals, d.migration_bound), (2, 2, 2));
    }

    #[test]
    fn trivial_deltas() {
        let s = ms(&[("X", 2)]);
        let d = diff_pair(&s, &s);
        assert_eq!((d.additions, d.removals, d.migration_bound), (0, 0, 0));
        let d = diff_pair(&Multiset::new(), &ms(&[("X", 3)]));
        assert_eq!((d.additions, d.removals, d.migration_bound), (3, 0, 0));
    }

    #[test]
    fn worked_example_candidates() {
        let d = diff_pair(
            &ms(&[("A", 2), ("B", 1), ("C", 1)]),
            &ms(&[("A", 1), ("B", 1), ("D", 1), ("E", 1)]),
        );
        let changes = vec![
            change("c1", "f1.py", &[("A", 10)], &[("E", 10)]),
            change("c1", "f2.py", &[("C", 4)], &[]),
            change("c2", "f2.py", &[], &[("D", 7)]),
        ];
        let c = find_migration_candidates(&pair(), &d, &changes);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].ptm_from.as_str(), c[0].ptm_to.as_str()), ("A", "E"));

        let ann = MigrationAnnotations::parse(
            "line_id,pair_index,file,commit,ptm_from,ptm_to,verdict,note\nr@main,0,f1.py,c1,A,E,Y,\n",
        )
        .unwrap();
        let (yes, no) = confirm_migrations(&c, &ann);
        assert_eq!((yes.len(), no.len()), (1, 0));
        let events = classify_pair(&pair(), &d, &changes, &yes, false);
        let kinds: Vec<(ChangeKind, Option<&str>, Option<&str>)> = events
            .iter()
            .map(|e| (e.kind, e.ptm_from.as_deref(), e.ptm_to.as_deref()))
            .collect();
        assert_eq!(
            kinds,
            vec![
                (ChangeKind::Migration, Some("A"), Some("E")),
                (ChangeKind::Removal, Some("C"), None),
                (ChangeKind::Addition, None, Some("D")),
            ]
        );
        assert_eq!(events[2].commit.as_deref(), Some("c2"));
    }

    #[test]
    fn file_mismatch_gives_no_candidate() {
        let d = diff_pair(&ms(&[("A", 1)]), &ms(&[("B", 1)]));
        let changes = vec![
            change("c1", "f1.py", &[], &[("B", 1)]),
            change("c1", "f2.py", &[("A", 1)], &[]),
        ];
        assert!(find_migration_candidates(&pair(), &d, &changes).is_empty());
    }

    #[test]
    fn commit_mismatch_gives_no_candidate() {
        let d = diff_pair(&ms(&[("A", 1)]), &ms(&[("B", 1)]));
        let changes = vec![
            change("c1", "f1.py", &[("A", 1)], &[]),
            change("c2", "f1.py", &[], &[("B", 1)]),
        ];
        assert!(find_migration_candidates(&pair(), &d, &changes).is_empty());
    }

    #[test]
    fn nearest_line_pairing() {
        let d = diff_pair(&ms(&[("A", 1), ("B", 1)]), &ms(&[("X", 1), ("Y", 1)]));
        let changes = vec![change(
            "c",
            "f",
            &[("A", 10), ("B", 50)],
            &[("X", 49), ("Y", 11)],
        )];
        let c = find_migration_candidates(&pair(), &d, &changes);
        let got: Vec<(&str, &str)> = c
            .iter()
            .map(|c| (c.ptm_from.as_str(), c.ptm_to.as_str()))
            .collect();
        assert_eq!(got, vec![("A", "Y"), ("B", "X")]);
    }

    #[test]
    fn unannotated_candidate_splits() {
        let d = diff_pair(&ms(&[("A", 1)]), &ms(&[("E", 1)]));
        let changes = vec![change("c1", "f", &[("A", 1)], &[("E", 1)])];
        let c = find_migration_candidates(&pair(), &d, &changes);
        let (yes, _) = confirm_migrations(&c, &MigrationAnnotations::default());
        let e = classify_pair(&pair(), &d, &changes, &yes, true);
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].kind, ChangeKind::Removal);
        assert_eq!(e[1].kind, ChangeKind::Addition);
        assert!(e[1].first_adoption);
    }

    #[test]
    fn unknown_annotation_warns() {
        let ann = MigrationAnnotations::parse(
            "line_id,pair_index,file,commit,ptm_from,ptm_to,verdict,note\nr@main,3,f,c9,Q,Z,Y,ghost\n",
        )
        .unwrap();
        let w = ann.unknown(&[]);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].row, 2);
        let (yes, _) = confirm_migrations(&[], &ann);
        assert!(yes.is_empty());
    }

    #[test]
    fn bad_verdict_rejected() {
        let r = MigrationAnnotations::parse(
            "line_id,pair_index,file,commit,ptm_from,ptm_to,verdict,note\nl,0,f,c,A,B,maybe,\n",
        );
        assert!(matches!(r, Err(AnnotationError::Row { .. })));
    }

    #[test]
    fn abbreviated_commit_matches() {
        let ann = MigrationAnnotations::parse(
            "line_id,pair_index,file,commit,ptm_from,ptm_to,verdict,note\nr@main,0,f,abc1234,A,E,y,\n",
        )
        .unwrap();
        assert!(ann
            .verdict(&pair(), "f", "abc1234deadbeef", "A", "E")
            .is_some_and(MigrationAnnotation::confirmed));
    }

    #[test]
    fn t1_examples() {
        let line = |counts: &[u64]| -> Vec<Multiset<String>> {
            counts
                .iter()
                .map(|&c| {
                    if c == 0 {
                        Multiset::new()
                    } else {
                        ms(&[("m", c)])
                    }
                })
                .collect()
        };
        let w = anchor_t1(&line(&[0, 0, 2, 2, 3])).unwrap();
        assert_eq!((w.t1, w.pairs.clone()), (2, vec![2, 3]));
        let w = anchor_t1(&line(&[1, 0, 0, 1])).unwrap();
        assert_eq!(w.pairs, vec![0, 2]);
        assert_eq!(anchor_t1(&line(&[0, 0])), Err(EmptyLineResult));
    }

    fn arb_ms() -> impl Strategy<Value = Multiset<String>> {
        proptest::collection::vec(0u64..=4, 6).prop_map(|cs| {
            cs.iter()
                .enumerate()
                .map(|(i, c)| (((b'A' + i as u8) as char).to_string(), *c))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn antisymmetry(a in arb_ms(), b in arb_ms()) {
            let ab = diff_pair(&a, &b);
            let ba = diff_pair(&b, &a);
            prop_assert_eq!(ab.additions, ba.removals);
            prop_assert_eq!(ab.removals, ba.additions);
        }

        #[test]
        fn triangle(a in arb_ms(), b in arb_ms(), c in arb_ms()) {
            let d12 = diff_pair(&a, &b).deltas;
            let d23 = diff_pair(&b, &c).deltas;
            let d13 = diff_pair(&a, &c).deltas;
            for (k, v) in &d13 {
                let lhs = d12.get(k).copied().unwrap_or(0) + d23.get(k).copied().unwrap_or(0);
                prop_assert_eq!(*v, lhs);
            }
        }

        #[test]
        fn conservation_and_bound(
            a in arb_ms(),
            b in arb_ms(),
            confirm_mask in proptest::collection::vec(any::<bool>(), 0..12),
        ) {
            let d = diff_pair(&a, &b);
            // one synthetic commit touching one file carrying every instance change
            let mut removed = Vec::new();
            let mut added = Vec::new();
            for (k, v) in &d.deltas {
                for i in 0..v.unsigned_abs() {
                    if *v < 0 { removed.push((k.clone(), i as u32)); } else { added.push((k.clone(), i as u32)); }
                }
            }
            let changes = vec![CommitFileChange { commit: "c".into(), file_id: "f".into(), path: "f".into(), removed, added }];
            let cands = find_migration_candidates(&pair(), &d, &changes);
            prop_assert!(cands.len() as u64 <= d.migration_bound);
            let confirmed: Vec<&MigrationCandidate> = cands
                .iter()
                .zip(confirm_mask.iter().chain(std::iter::repeat(&false)))
                .filter(|(_, y)| **y)
                .map(|(c, _)| c)
                .collect();
            let ev = classify_pair(&pair(), &d, &changes, &confirmed, false);
            let n = |k| ev.iter().filter(|e| e.kind == k).count() as u64;
            prop_assert_eq!(n(ChangeKind::Addition) + n(ChangeKind::Migration), d.additions);
            prop_assert_eq!(n(ChangeKind::Removal) + n(ChangeKind::Migration), d.removals);
        }
    }
}
