//! Acceptance suite. Each criterion runs in isolation with its time budget
//! and prints one PASS/FAIL line; the test fails if any criterion does.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use ptmevo_core::change::{
    classify_pair, diff_pair, find_migration_candidates, ChangeEvent, ChangeKind,
    MigrationCandidate, PairRef,
};
use ptmevo_core::config::RunConfig;
use ptmevo_core::docs::{rows_to_csv, SheetRow};
use ptmevo_core::extract::extract_occurrences;
use ptmevo_core::git::Repo;
use ptmevo_core::history::{
    filter_releases, identify_release_lines, list_releases, CommitFileChange, Rejection, Release,
    ReleaseMetadata, ReleasePolicy,
};
use ptmevo_core::metrics::{lifecycle_stages, stage_of, EventPoint, LineSummary};
use ptmevo_core::multiset::ms;
use ptmevo_core::pipeline::{load_config, Pipeline};
use ptmevo_core::stats::{
    bonferroni, cliffs_delta, cohens_kappa, mann_whitney_u, wilcoxon_differences, Effect,
    EXACT_LIMIT,
};
use ptmevo_core::testkit::{scenario, FixtureRepo, Scenario};
use ptmevo_core::{
    apply_fp_filters, Catalog, FilterConfig, FilterId, Multiset, PtmIndex, Resolution,
};

fn run(n: usize, name: &str, budget: Option<Duration>, f: impl FnOnce()) -> bool {
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f));
    let took = start.elapsed();
    let (ok, detail) = match res {
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!(": {msg}"))
        }
        Ok(()) => match budget {
            Some(b) if took > b => (false, format!(": over the {b:?} budget")),
            _ => (true, String::new()),
        },
    };
    // straight to the stderr handle, past the test harness's capture
    let _ = writeln!(
        std::io::stderr().lock(),
        "criterion {n}: {} ({name}, {took:.2?}){detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

#[test]
fn acceptance() {
    let secs = |s| Some(Duration::from_secs(s));
    let results = [
        (
            1,
            run(1, "worked multiset example", secs(1), worked_example),
        ),
        (
            2,
            run(2, "multiset algebra oracle", secs(5), multiset_oracle),
        ),
        (
            3,
            run(3, "static analysis corpus", secs(10), extraction_corpus),
        ),
        (4, run(4, "release lines", secs(5), release_lines)),
        (5, run(5, "release filtering", None, release_filtering)),
        (
            6,
            run(6, "statistics oracles", secs(30), statistics_oracles),
        ),
        (7, run(7, "lifecycle staging", None, lifecycle_staging)),
        (8, run(8, "end-to-end report", secs(60), end_to_end)),
        (9, run(9, "determinism", None, determinism)),
    ];
    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---- 1 ------------------------------------------------------------------------------

fn change(
    commit: &str,
    file: &str,
    removed: &[(&str, u32)],
    added: &[(&str, u32)],
) -> CommitFileChange {
    let own = |xs: &[(&str, u32)]| xs.iter().map(|(id, l)| (id.to_string(), *l)).collect();
    CommitFileChange {
        commit: commit.into(),
        file_id: file.into(),
        path: file.into(),
        removed: own(removed),
        added: own(added),
    }
}

type Owned = (ChangeKind, Option<String>, Option<String>, Option<String>);

fn worked_example() {
    let prev = ms(&[("A", 2), ("B", 1), ("C", 1)]);
    let next = ms(&[("A", 1), ("B", 1), ("D", 1), ("E", 1)]);
    let d = diff_pair(&prev, &next);
    let want: BTreeMap<String, i64> = [("A", -1), ("B", 0), ("C", -1), ("D", 1), ("E", 1)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    assert_eq!(d.deltas, want);
    assert_eq!((d.additions, d.removals, d.migration_bound), (2, 2, 2));

    // A is swapped for E inside one file and commit; C and D move elsewhere
    let pair = PairRef {
        line_id: "demo@main".into(),
        pair_index: 0,
    };
    let changes = vec![
        change("c1", "src/model.py", &[("A", 12)], &[("E", 12)]),
        change("c2", "src/legacy.py", &[("C", 4)], &[]),
        change("c3", "src/search.py", &[], &[("D", 7)]),
    ];
    let cands = find_migration_candidates(&pair, &d, &changes);
    let got: Vec<(&str, &str, &str, &str)> = cands
        .iter()
        .map(|c| {
            (
                c.ptm_from.as_str(),
                c.ptm_to.as_str(),
                c.file.as_str(),
                c.commit.as_str(),
            )
        })
        .collect();
    assert_eq!(got, vec![("A", "E", "src/model.py", "c1")]);

    type Row<'a> = (
        ChangeKind,
        Option<&'a str>,
        Option<&'a str>,
        Option<&'a str>,
    );
    let view = |evs: &'_ [ChangeEvent]| -> Vec<Owned> {
        evs.iter()
            .map(|e| (e.kind, e.ptm_from.clone(), e.ptm_to.clone(), e.file.clone()))
            .collect()
    };
    let own = |rows: Vec<Row>| -> Vec<Owned> {
        rows.into_iter()
            .map(|(k, a, b, f)| {
                (
                    k,
                    a.map(String::from),
                    b.map(String::from),
                    f.map(String::from),
                )
            })
            .collect()
    };

    let confirmed: Vec<&MigrationCandidate> = cands.iter().collect();
    let events = classify_pair(&pair, &d, &changes, &confirmed, false);
    assert_eq!(
        view(&events),
        own(vec![
            (
                ChangeKind::Migration,
                Some("A"),
                Some("E"),
                Some("src/model.py")
            ),
            (ChangeKind::Removal, Some("C"), None, Some("src/legacy.py")),
            (ChangeKind::Addition, None, Some("D"), Some("src/search.py")),
        ])
    );

    // an unconfirmed candidate leaves every unit independent
    let events = classify_pair(&pair, &d, &changes, &[], false);
    assert_eq!(
        view(&events),
        own(vec![
            (ChangeKind::Removal, Some("A"), None, Some("src/model.py")),
            (ChangeKind::Removal, Some("C"), None, Some("src/legacy.py")),
            (ChangeKind::Addition, None, Some("D"), Some("src/search.py")),
            (ChangeKind::Addition, None, Some("E"), Some("src/model.py")),
        ])
    );
}

// ---- 2 ------------------------------------------------------------------------------

const ALPHABET: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn random_snapshot(rng: &mut StdRng) -> Multiset<String> {
    let mut m = Multiset::new();
    for k in ALPHABET {
        m.insert_n(k.to_string(), rng.random_range(0..=4));
    }
    m
}

fn instances(m: &Multiset<String>) -> Vec<String> {
    m.iter()
        .flat_map(|(k, n)| std::iter::repeat_n(k.clone(), *n as usize))
        .collect()
}

/// Matches instances one by one: whatever is left over was removed or added.
fn brute_force_aru(prev: &Multiset<String>, next: &Multiset<String>) -> (u64, u64, u64) {
    let mut pool = instances(prev);
    let mut added = 0u64;
    for x in instances(next) {
        match pool.iter().position(|y| *y == x) {
            Some(i) => {
                pool.swap_remove(i);
            }
            None => added += 1,
        }
    }
    let removed = pool.len() as u64;
    (added, removed, added.min(removed))
}

fn multiset_oracle() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    for _ in 0..1000 {
        let (p, n) = (random_snapshot(&mut rng), random_snapshot(&mut rng));
        let d = diff_pair(&p, &n);
        assert_eq!(
            (d.additions, d.removals, d.migration_bound),
            brute_force_aru(&p, &n),
            "prev={p:?} next={n:?}"
        );
    }
    for _ in 0..200 {
        let s: Vec<Multiset<String>> = (0..3).map(|_| random_snapshot(&mut rng)).collect();
        let (d12, d23, d13) = (
            s[0].delta_to(&s[1]),
            s[1].delta_to(&s[2]),
            s[0].delta_to(&s[2]),
        );
        for k in ALPHABET {
            let at = |m: &BTreeMap<String, i64>| m.get(k).copied().unwrap_or(0);
            assert_eq!(at(&d13), at(&d12) + at(&d23), "key {k} in {s:?}");
        }
    }
}

// ---- 3 ------------------------------------------------------------------------------

fn corpus_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/extraction")
}

fn python_files(dir: &Path, base: &Path, out: &mut Vec<String>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .expect("read corpus dir")
        .map(|e| e.expect("dir entry").path())
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            python_files(&p, base, out);
        } else if p.extension().is_some_and(|e| e == "py") {
            let rel = p.strip_prefix(base).expect("under corpus root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
}

type Site = (String, u32, String);

fn extraction_corpus() {
    let root = corpus_root();
    let mut files = Vec::new();
    python_files(&root, &root, &mut files);
    assert_eq!(files.len(), 30, "corpus size");

    let mut labels: BTreeSet<Site> = BTreeSet::new();
    let mut rdr = csv::Reader::from_path(root.join("labels.csv")).expect("labels.csv");
    for r in rdr.deserialize::<(String, u32, String)>() {
        let site = r.expect("label row");
        assert!(labels.insert(site.clone()), "duplicate label {site:?}");
    }

    let catalog = Catalog::builtin();
    let index = PtmIndex::default();
    let filters = FilterConfig::default();
    let mut kept: BTreeSet<Site> = BTreeSet::new();
    let mut drop_kinds: BTreeSet<FilterId> = BTreeSet::new();
    let mut resolutions: BTreeSet<Resolution> = BTreeSet::new();
    let mut raw_in_comment_file = Vec::new();
    for f in &files {
        let src = std::fs::read_to_string(root.join(f)).expect("read corpus file");
        let ex = extract_occurrences(&src, f, &catalog, &index);
        if f == "src/comments_only.py" {
            raw_in_comment_file = ex.occurrences.iter().map(|o| o.line).collect();
        }
        let (k, dropped) = apply_fp_filters(ex.occurrences, &ex.bindings, &filters);
        drop_kinds.extend(dropped.iter().map(|d| d.filter));
        for o in k {
            resolutions.insert(o.resolution);
            let site = (o.file_path.clone(), o.line, o.ptm_id.clone());
            assert!(kept.insert(site.clone()), "duplicate occurrence {site:?}");
        }
    }

    let hit = kept.intersection(&labels).count() as f64;
    let precision = hit / kept.len() as f64;
    let recall = hit / labels.len() as f64;
    let extra: Vec<&Site> = kept.difference(&labels).collect();
    let missed: Vec<&Site> = labels.difference(&kept).collect();
    assert!(
        precision == 1.0 && recall == 1.0,
        "precision {precision} recall {recall}; unexpected {extra:?}; missed {missed:?}"
    );

    // every false-positive category is exercised, not just absent
    assert_eq!(
        raw_in_comment_file,
        vec![12],
        "calls in comments or strings became candidates"
    );
    for f in [
        FilterId::UnboundCallee,
        FilterId::ExamplePath,
        FilterId::VendoredPath,
    ] {
        assert!(drop_kinds.contains(&f), "no candidate dropped by {f:?}");
    }
    for r in [
        Resolution::Literal,
        Resolution::Variable,
        Resolution::ConditionalBranch,
        Resolution::Attribute,
        Resolution::ClassDefault,
    ] {
        assert!(
            resolutions.contains(&r),
            "no kept occurrence resolved as {r:?}"
        );
    }
}

// ---- 4 ------------------------------------------------------------------------------

fn release_lines() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut r = FixtureRepo::init(tmp.path());
    r.write("pkg/__init__.py", "")
        .write("pkg/version.py", "VERSION = \"0.0.0\"\n");
    let root = r.commit("Initial skeleton", 0);

    r.write("pkg/version.py", "VERSION = \"1.0.0\"\n");
    r.commit("Release 1.0.0", 10);
    r.tag("v1.0.0");

    r.branch("feature", &root).checkout("feature");
    r.write("pkg/extra.py", "def extra():\n    return 1\n");
    r.commit("Add extra helper", 12);
    r.tag("v1.0.5");

    r.checkout("main");
    r.merge("feature", "Merge branch feature", 20);
    for (minor, d) in [(1, 30), (2, 40), (3, 50)] {
        r.write("pkg/version.py", &format!("VERSION = \"1.{minor}.0\"\n"));
        r.commit(&format!("Release 1.{minor}.0"), d);
        r.tag(&format!("v1.{minor}.0"));
    }

    r.branch("release-0.x", &root).checkout("release-0.x");
    for (minor, d) in [(1, 5), (2, 15)] {
        r.write("pkg/version.py", &format!("VERSION = \"0.{minor}.0\"\n"));
        r.commit(&format!("Release 0.{minor}.0"), d);
        r.tag(&format!("v0.{minor}.0"));
    }
    r.checkout("main");

    let repo = Repo::open(tmp.path()).expect("open fixture");
    let releases = list_releases(&repo, &ReleaseMetadata::default()).expect("tags");
    assert_eq!(releases.len(), 7);
    let found = identify_release_lines(&repo, "fixture", &releases).expect("lines");
    let got: Vec<(String, Vec<String>)> = found
        .lines
        .iter()
        .map(|l| {
            (
                l.branch.clone(),
                l.releases.iter().map(|x| x.tag.clone()).collect(),
            )
        })
        .collect();
    let tags = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    assert_eq!(
        got,
        vec![
            (
                "main".to_string(),
                tags(&["v1.0.0", "v1.1.0", "v1.2.0", "v1.3.0"])
            ),
            ("release-0.x".to_string(), tags(&["v0.1.0", "v0.2.0"])),
        ]
    );
    for l in &found.lines {
        assert!(
            l.positions.windows(2).all(|w| w[0] < w[1]),
            "order of {}",
            l.branch
        );
    }
    // the side tag is reachable from main, so it is not flagged either
    assert!(
        found.unreachable_tags.is_empty(),
        "{:?}",
        found.unreachable_tags
    );
}

// ---- 5 ------------------------------------------------------------------------------

fn at(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 12, 0, 0).unwrap()
}

/// Releases `gap` days apart, the last one at `end`.
fn spaced(tags: &[&str], gap: i64, end: DateTime<Utc>) -> Vec<Release> {
    let n = tags.len() as i64;
    tags.iter()
        .enumerate()
        .map(|(i, t)| {
            let ts = end - chrono::Duration::days(gap * (n - 1 - i as i64));
            Release::from_tag(t, &format!("{i:040x}"), ts)
        })
        .collect()
}

fn release_filtering() {
    let policy = ReleasePolicy::default();
    let end = at(2025, 6, 1);

    let clean = filter_releases(&spaced(&["v1.0.0", "v1.1.0", "v1.2.0"], 30, end), &policy);
    assert!(clean.accepted(), "{:?}", clean.rejections);

    let pre = filter_releases(
        &spaced(&["v1.0.0", "v1.1.0-rc.1", "v1.1.0", "v1.2.0"], 20, end),
        &policy,
    );
    assert_eq!(pre.removed, vec!["v1.1.0-rc.1".to_string()]);
    let kept: Vec<&str> = pre.kept.iter().map(|r| r.tag.as_str()).collect();
    assert_eq!(kept, vec!["v1.0.0", "v1.1.0", "v1.2.0"]);
    assert!(pre.accepted(), "{:?}", pre.rejections);

    let single = filter_releases(&spaced(&["v1.0.0"], 30, end), &policy);
    assert_eq!(
        single.rejections,
        vec![Rejection::TooFewReleases { remaining: 1 }]
    );

    let slow = filter_releases(&spaced(&["v1.0.0", "v2.0.0", "v3.0.0"], 400, end), &policy);
    assert_eq!(
        slow.rejections,
        vec![Rejection::MedianInterval { days: 400.0 }]
    );

    let stale_end = at(2024, 10, 1);
    let stale = filter_releases(
        &spaced(&["v1.0.0", "v1.1.0", "v1.2.0"], 30, stale_end),
        &policy,
    );
    assert_eq!(
        stale.rejections,
        vec![Rejection::Inactive {
            last_release: stale_end
        }]
    );

    let loose = filter_releases(
        &spaced(
            &["v1.0.0", "build-17", "v1.1.0", "build-18", "v1.2.0"],
            30,
            end,
        ),
        &policy,
    );
    assert_eq!(
        loose.rejections,
        vec![Rejection::SemverRatio { ratio: 0.6 }]
    );
}

// ---- 6 ------------------------------------------------------------------------------

/// Doubled midranks by counting: 2 * (#less + (#equal + 1) / 2).
fn doubled_ranks(xs: &[f64]) -> Vec<i64> {
    xs.iter()
        .map(|x| {
            let less = xs.iter().filter(|y| *y < x).count() as i64;
            let equal = xs.iter().filter(|y| *y == x).count() as i64;
            2 * less + equal + 1
        })
        .collect()
}

/// Enumerates all 2^n sign assignments over the nonzero differences.
fn brute_wilcoxon(diffs: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let r2 = doubled_ranks(&abs);
    let total2: i64 = r2.iter().sum();
    let obs2: i64 = nz
        .iter()
        .zip(&r2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let n = nz.len();
    let mut extreme = 0u64;
    for mask in 0u32..(1 << n) {
        let s2: i64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| r2[i]).sum();
        if (2 * s2 - total2).abs() >= (2 * obs2 - total2).abs() {
            extreme += 1;
        }
    }
    (obs2 as f64 / 2.0, extreme as f64 / (1u64 << n) as f64)
}

/// Enumerates every C(n_a + n_b, n_a) assignment of pooled ranks to sample a.
fn brute_mann_whitney(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r2 = doubled_ranks(&pooled);
    let (na, n) = (a.len(), pooled.len());
    let centre2 = (na * (n + 1)) as i64;
    let obs2: i64 = r2[..na].iter().sum();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        total += 1;
        let s2: i64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| r2[i]).sum();
        if (s2 - centre2).abs() >= (obs2 - centre2).abs() {
            extreme += 1;
        }
    }
    // U by pair counting, ties count half
    let mut u = 0.0;
    for x in a {
        for y in b {
            u += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    (u, extreme as f64 / total as f64)
}

fn brute_cliffs(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0i64;
    for x in a {
        for y in b {
            s += (x > y) as i64 - (x < y) as i64;
        }
    }
    s as f64 / (a.len() * b.len()) as f64
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn statistics_oracles() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0006);
    for n in 1..=EXACT_LIMIT {
        for _ in 0..25 {
            let diffs: Vec<f64> = (0..n)
                .map(|_| {
                    let v = rng.random_range(1..=5) as f64;
                    if rng.random_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect();
            let (w, p) = brute_wilcoxon(&diffs);
            let got = wilcoxon_differences(&diffs).expect("wilcoxon");
            assert!(got.exact);
            assert!(
                close(got.statistic, w),
                "W+ {} vs {w} for {diffs:?}",
                got.statistic
            );
            let gp = got.p_value.unwrap();
            assert!(close(gp, p), "wilcoxon p {gp} vs {p} for {diffs:?}");
        }
    }
    for na in 1..EXACT_LIMIT {
        for nb in 1..=EXACT_LIMIT - na {
            for _ in 0..4 {
                let mut draw = |k| {
                    (0..k)
                        .map(|_| rng.random_range(0..6) as f64)
                        .collect::<Vec<_>>()
                };
                let (a, b) = (draw(na), draw(nb));
                let (u, p) = brute_mann_whitney(&a, &b);
                let got = mann_whitney_u(&a, &b).expect("mwu");
                assert!(got.exact);
                assert!(
                    close(got.statistic, u),
                    "U {} vs {u} for {a:?} {b:?}",
                    got.statistic
                );
                let gp = got.p_value.unwrap();
                assert!(close(gp, p), "mwu p {gp} vs {p} for {a:?} {b:?}");
                let delta = brute_cliffs(&a, &b);
                assert!(close(cliffs_delta(&a, &b).unwrap(), delta));
                assert_eq!(
                    got.effect,
                    Effect::CliffsDelta(cliffs_delta(&a, &b).unwrap())
                );
            }
        }
    }
    assert_eq!(cliffs_delta(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
    assert_eq!(cliffs_delta(&[1.0, 2.0], &[5.0, 6.0]).unwrap(), -1.0);
    assert_eq!(
        cohens_kappa(&[1, 0, 1, 1, 0], &[1, 0, 1, 1, 0]).unwrap(),
        1.0
    );
    assert_eq!(cohens_kappa(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), 0.0);
    assert_eq!(cohens_kappa(&[1, 0, 1, 0], &[0, 1, 0, 1]).unwrap(), -1.0);
    assert_eq!(bonferroni(0.05, 4), 0.0125);
}

// ---- 7 ------------------------------------------------------------------------------

fn summary(n_releases: usize, additions_at: &[usize]) -> LineSummary {
    LineSummary {
        line_id: format!("line{n_releases}"),
        n_releases,
        t1: 0,
        pairs: (0..n_releases - 1).collect(),
        count_t1: 1,
        count_end: 1 + additions_at.len() as u64,
        events: additions_at
            .iter()
            .map(|p| EventPoint {
                pair_index: p - 1,
                kind: ChangeKind::Addition,
            })
            .collect(),
    }
}

fn lifecycle_staging() {
    // stage k covers fractions [k/6, (k+1)/6); fraction 1.0 folds into the last
    for n in 2..=40usize {
        for p in 0..n {
            let want = (0..6).rev().find(|k| k * (n - 1) <= 6 * p).unwrap().min(5);
            assert_eq!(stage_of(p, n), want, "p={p} n={n}");
        }
    }
    let seven: Vec<usize> = (0..7).map(|p| stage_of(p, 7)).collect();
    assert_eq!(seven, vec![0, 1, 2, 3, 4, 5, 5]);
    let twelve: Vec<usize> = [1, 5, 10].iter().map(|p| stage_of(*p, 12)).collect();
    assert_eq!(twelve, vec![0, 2, 5]);

    assert_eq!(
        lifecycle_stages(&[summary(12, &[1, 5, 10])]),
        [1, 0, 1, 0, 0, 1]
    );
    assert_eq!(lifecycle_stages(&[summary(5, &[1, 2, 4])]), [0; 6]);
    assert_eq!(lifecycle_stages(&[summary(6, &[5])]), [0, 0, 0, 0, 0, 1]);
    let mut with_removal = summary(12, &[5]);
    with_removal.events.push(EventPoint {
        pair_index: 0,
        kind: ChangeKind::Removal,
    });
    assert_eq!(lifecycle_stages(&[with_removal]), [0, 0, 1, 0, 0, 0]);
}

// ---- 8 ------------------------------------------------------------------------------

fn short(sha: &str) -> &str {
    &sha[..12]
}

/// Hand labels (documented, rationale) for every artifact the scenario
/// should yield.
fn ptm_labels(s: &Scenario) -> BTreeMap<String, (bool, bool)> {
    let (a, b) = (&s.alpha, &s.beta);
    let rows = [
        (
            format!("ptm:alpha@main#1/commit/{}", short(&a["c3"])),
            true,
            false,
        ),
        ("ptm:alpha@main#1/pr/3".to_string(), true, true),
        (
            format!("ptm:alpha@main#1/comment/app/gen.py:3@{}", short(&a["c3"])),
            true,
            true,
        ),
        (
            format!("ptm:alpha@main#2/commit/{}", short(&a["c5"])),
            true,
            true,
        ),
        ("ptm:alpha@main#2/release".to_string(), true, true),
        ("ptm:alpha@main#2/md/CHANGELOG.md".to_string(), true, false),
        (
            format!(
                "ptm:alpha@main#2/comment/app/model.py:5@{}",
                short(&a["c5"])
            ),
            true,
            true,
        ),
        (
            format!("ptm:alpha@main#4/commit/{}", short(&a["c8"])),
            true,
            false,
        ),
        (
            format!("ptm:alpha@main#4/commit/{}", short(&a["c9"])),
            true,
            false,
        ),
        (
            format!("ptm:alpha@main#4/comment/app/gen.py:3@{}", short(&a["c7"])),
            false,
            false,
        ),
        (
            format!("ptm:beta@main#0/commit/{}", short(&b["c2"])),
            true,
            false,
        ),
        ("ptm:beta@main#0/release".to_string(), true, true),
        (
            format!("ptm:beta@main#1/commit/{}", short(&b["c3"])),
            false,
            false,
        ),
        ("ptm:beta@main#1/issue/7".to_string(), false, false),
        ("ptm:beta@main#1/release".to_string(), false, false),
        (
            format!("ptm:beta@main#3/commit/{}", short(&b["c5"])),
            true,
            false,
        ),
        ("ptm:beta@main#3/release".to_string(), false, false),
        (
            format!("ptm:beta@main#3/comment/app.py:7@{}", short(&b["c5"])),
            true,
            true,
        ),
    ];
    rows.into_iter().map(|(id, d, r)| (id, (d, r))).collect()
}

fn library_labels(s: &Scenario) -> BTreeMap<String, (bool, bool)> {
    let (a, b) = (&s.alpha, &s.beta);
    let rows = [
        (
            format!("lib:alpha@main#1/commit/{}", short(&a["c3"])),
            false,
            false,
        ),
        ("lib:alpha@main#1/pr/3".to_string(), false, false),
        (
            format!("lib:alpha@main#2/commit/{}", short(&a["c5"])),
            false,
            false,
        ),
        ("lib:alpha@main#2/release".to_string(), false, false),
        (
            format!("lib:alpha@main#3/commit/{}", short(&a["c7"])),
            true,
            false,
        ),
        (
            format!("lib:alpha@main#4/commit/{}", short(&a["c8"])),
            false,
            false,
        ),
        (
            format!("lib:beta@main#0/commit/{}", short(&b["c2"])),
            false,
            false,
        ),
        ("lib:beta@main#0/release".to_string(), false, false),
        (
            format!("lib:beta@main#1/commit/{}", short(&b["c3"])),
            true,
            true,
        ),
        ("lib:beta@main#1/issue/7".to_string(), false, false),
        ("lib:beta@main#1/release".to_string(), false, false),
    ];
    rows.into_iter().map(|(id, d, r)| (id, (d, r))).collect()
}

fn yn(v: bool) -> String {
    if v { "Y" } else { "N" }.to_string()
}

/// Fills an exported sheet from `labels` and writes it to `dest`. The
/// exported id set must equal the hand-enumerated one.
fn label_sheet(exported: &Path, labels: &BTreeMap<String, (bool, bool)>, dest: &Path) {
    let mut rdr = csv::Reader::from_path(exported).expect("exported sheet");
    let mut rows: Vec<SheetRow> = rdr.deserialize().map(|r| r.expect("sheet row")).collect();
    let ids: BTreeSet<&String> = rows.iter().map(|r| &r.artifact_id).collect();
    let want: BTreeSet<&String> = labels.keys().collect();
    assert_eq!(ids, want, "artifacts in {}", exported.display());
    for r in &mut rows {
        let (d, why) = labels[&r.artifact_id];
        r.documented = yn(d);
        r.rationale = yn(why);
    }
    std::fs::write(dest, rows_to_csv(&rows)).expect("write labeled sheet");
}

/// Runs the scenario once, labels both exported sheets and returns the
/// configuration that points at them.
fn labeled_scenario(root: &Path) -> (Scenario, RunConfig) {
    let s = scenario(root);
    let mut cfg = load_config(&s.config).expect("config");
    Pipeline::new(cfg.clone())
        .expect("pipeline")
        .run_all(&[])
        .expect("first run");
    let (ptm, lib) = (root.join("labels_ptm.csv"), root.join("labels_lib.csv"));
    label_sheet(
        &cfg.out.join("annotations/ptm_sheet.csv"),
        &ptm_labels(&s),
        &ptm,
    );
    label_sheet(
        &cfg.out.join("annotations/library_sheet.csv"),
        &library_labels(&s),
        &lib,
    );
    cfg.annotations.ptm_sheet = Some(ptm);
    cfg.annotations.library_sheet = Some(lib);
    (s, cfg)
}

fn read_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).expect("report csv");
    rdr.deserialize().map(|r| r.expect("report row")).collect()
}

#[derive(Debug, Clone, Copy)]
enum Want {
    Value(f64),
    Ratio(u64, u64),
}

/// `cols` names the value, numerator and denominator columns.
fn check_cell(row: &BTreeMap<String, String>, cols: [&str; 3], want: Want) {
    let get = |i: usize| row[cols[i]].clone();
    let value: f64 = get(0).parse().unwrap_or_else(|_| panic!("{row:?}"));
    match want {
        Want::Value(v) => {
            assert!(close(value, v), "{row:?}: {} expected {v}", cols[0]);
            assert!(get(1).is_empty() && get(2).is_empty(), "{row:?}");
        }
        Want::Ratio(n, d) => {
            assert_eq!((get(1), get(2)), (n.to_string(), d.to_string()), "{row:?}");
            assert!(close(value, n as f64 / d as f64), "{row:?}");
        }
    }
}

fn median2(a: f64, b: f64) -> f64 {
    (a + b) / 2.0
}

fn expected_summary() -> Vec<(&'static str, &'static str, Want, Want)> {
    use Want::{Ratio as R, Value as V};
    // cadence = releases from t1 / events; alpha spans 5 releases from t1,
    // beta 5 from its first release
    vec![
        ("dataset", "repositories", V(2.0), V(2.0)),
        ("dataset", "release_lines", V(2.0), V(2.0)),
        ("dataset", "releases", V(10.0), V(10.0)),
        ("dataset", "release_pairs", V(8.0), V(8.0)),
        ("dataset", "events", V(8.0), V(6.0)),
        ("frequency", "changed_pair_share", R(6, 8), R(6, 8)),
        ("frequency", "changed_line_share", R(2, 2), R(2, 2)),
        ("change_types", "addition_event_share", R(6, 8), R(2, 6)),
        ("change_types", "addition_line_share", R(2, 2), R(2, 2)),
        ("change_types", "removal_event_share", R(1, 8), R(1, 6)),
        ("change_types", "removal_line_share", R(1, 2), R(1, 2)),
        ("change_types", "migration_event_share", R(1, 8), R(1, 6)),
        ("change_types", "migration_line_share", R(1, 2), R(1, 2)),
        ("change_types", "update_event_share", R(0, 8), R(2, 6)),
        ("change_types", "update_line_share", R(0, 2), R(1, 2)),
        (
            "cadence",
            "median_overall",
            V(median2(1.0, 5.0 / 3.0)),
            V(median2(5.0 / 4.0, 5.0 / 2.0)),
        ),
        ("cadence", "median_addition", V(5.0 / 3.0), V(5.0)),
        ("cadence", "median_removal", V(5.0), V(5.0)),
        ("cadence", "median_migration", V(5.0), V(5.0)),
        ("growth", "net_growth_share", R(2, 2), R(1, 2)),
        ("growth", "addition_only_share", R(1, 2), R(0, 1)),
        (
            "growth",
            "median_growth_factor",
            V(median2(4.0 / 2.0, 4.0 / 1.0)),
            V(3.0 / 2.0),
        ),
        ("lifecycle", "stage_1", R(0, 3), R(0, 1)),
        ("lifecycle", "stage_2", R(0, 3), R(0, 1)),
        ("lifecycle", "stage_3", R(1, 3), R(1, 1)),
        ("lifecycle", "stage_4", R(0, 3), R(0, 1)),
        ("lifecycle", "stage_5", R(0, 3), R(0, 1)),
        ("lifecycle", "stage_6", R(2, 3), R(0, 1)),
    ]
}

fn expected_documentation() -> BTreeMap<(&'static str, &'static str, &'static str), Want> {
    use Want::{Ratio as R, Value as V};
    [
        (("ptm", "all", "documentation_rate"), R(7, 8)),
        (("ptm", "all", "pair_documentation_rate"), R(5, 6)),
        (("ptm", "all", "rationale_rate"), R(4, 8)),
        (("ptm", "all", "rationale_rate_documented"), R(4, 7)),
        (("ptm", "all", "rationale_rate_artifacts"), R(7, 18)),
        (("ptm", "all", "artifacts_harvested"), V(18.0)),
        (("ptm", "addition", "documentation_rate"), R(5, 6)),
        (("ptm", "addition", "rationale_rate"), R(3, 6)),
        (("ptm", "removal", "documentation_rate"), R(1, 1)),
        (("ptm", "removal", "rationale_rate"), R(0, 1)),
        (("ptm", "migration", "documentation_rate"), R(1, 1)),
        (("ptm", "migration", "rationale_rate"), R(1, 1)),
        (("lib", "all", "documentation_rate"), R(2, 6)),
        (("lib", "all", "pair_documentation_rate"), R(2, 6)),
        (("lib", "all", "rationale_rate"), R(1, 6)),
        (("lib", "all", "rationale_rate_documented"), R(1, 2)),
        (("lib", "all", "rationale_rate_artifacts"), R(1, 11)),
        (("lib", "all", "artifacts_harvested"), V(11.0)),
        (("lib", "addition", "documentation_rate"), R(0, 2)),
        (("lib", "addition", "rationale_rate"), R(0, 2)),
        (("lib", "removal", "documentation_rate"), R(0, 1)),
        (("lib", "removal", "rationale_rate"), R(0, 1)),
        (("lib", "migration", "documentation_rate"), R(1, 1)),
        (("lib", "migration", "rationale_rate"), R(1, 1)),
        (("lib", "update", "documentation_rate"), R(1, 2)),
        (("lib", "update", "rationale_rate"), R(0, 2)),
    ]
    .into_iter()
    .collect()
}

fn end_to_end() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let (_, cfg) = labeled_scenario(tmp.path());
    let p = Pipeline::new(cfg.clone()).expect("pipeline");
    p.run_all(&[]).expect("labeled run");
    let problems = p.check().expect("check");
    assert!(problems.is_empty(), "integrity: {problems:?}");
    let report = cfg.out.join("report");

    let rows = read_rows(&report.join("summary.csv"));
    let want = expected_summary();
    let keys: Vec<(String, String)> = rows
        .iter()
        .map(|r| (r["section"].clone(), r["metric"].clone()))
        .collect();
    let want_keys: Vec<(String, String)> = want
        .iter()
        .map(|(s, m, _, _)| (s.to_string(), m.to_string()))
        .collect();
    assert_eq!(keys, want_keys, "summary layout");
    for (row, (_, _, ptm, lib)) in rows.iter().zip(&want) {
        check_cell(row, ["ptm", "ptm_num", "ptm_den"], *ptm);
        check_cell(row, ["library", "library_num", "library_den"], *lib);
    }

    let want = expected_documentation();
    let mut seen = BTreeSet::new();
    for row in read_rows(&report.join("documentation.csv")) {
        let key = (
            row["domain"].as_str(),
            row["scope"].as_str(),
            row["metric"].as_str(),
        );
        match want.iter().find(|(k, _)| (k.0, k.1, k.2) == key) {
            Some((k, w)) => {
                check_cell(&row, ["value", "numerator", "denominator"], *w);
                seen.insert(*k);
            }
            // kinds without events carry no rate
            None => assert_eq!(
                row["denominator"], "0",
                "unexpected documentation row {row:?}"
            ),
        }
    }
    let missing: Vec<_> = want.keys().filter(|k| !seen.contains(*k)).collect();
    assert!(
        missing.is_empty(),
        "documentation rows missing: {missing:?}"
    );
    for d in [(7, 8, 4, 8), (2, 6, 1, 6)] {
        // rationale never exceeds documentation
        assert!(d.2 as f64 / d.3 as f64 <= d.0 as f64 / d.1 as f64);
    }

    let stats = read_rows(&report.join("stats.csv"));
    let find = |fam: &str, ty: &str| {
        stats
            .iter()
            .find(|r| r["family"] == fam && r["change_type"] == ty)
            .unwrap_or_else(|| panic!("no stats row {fam}/{ty}"))
            .clone()
    };
    let num = |r: &BTreeMap<String, String>, k: &str| -> f64 {
        r[k].parse().unwrap_or_else(|_| panic!("{k} in {r:?}"))
    };
    // (family, type, statistic, p, effect): brute-forced by hand above
    for (fam, ty, stat, pv, eff) in [
        ("wilcoxon", "overall", 0.0, 0.5, -1.0),
        ("wilcoxon", "addition", 0.0, 0.5, -1.0),
        ("mann_whitney", "overall", 1.0, 4.0 / 6.0, -0.5),
        ("mann_whitney", "addition", 0.0, 2.0 / 6.0, -1.0),
        ("mann_whitney", "removal", 0.5, 1.0, 0.0),
        ("mann_whitney", "migration", 0.5, 1.0, 0.0),
    ] {
        let r = find(fam, ty);
        assert!(close(num(&r, "statistic"), stat), "{r:?}");
        assert!(close(num(&r, "p_value"), pv), "{r:?}");
        assert!(close(num(&r, "effect_size"), eff), "{r:?}");
        assert!(close(num(&r, "alpha_corrected"), 0.0125), "{r:?}");
        assert_eq!(r["significant"], "false");
    }
    assert!(find("wilcoxon", "removal")["note"].contains("all differences are zero"));
    assert!(find("wilcoxon", "migration")["note"].contains("no paired observations"));
}

// ---- 9 ------------------------------------------------------------------------------

fn report_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).expect("report dir") {
        let p = e.expect("entry").path();
        out.insert(
            p.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&p).expect("report file"),
        );
    }
    out
}

fn determinism() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let (_, cfg) = labeled_scenario(tmp.path());
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut p = Pipeline::new(cfg.clone()).expect("pipeline");
        p.force = true;
        p.run_all(&[]).expect("forced run");
        runs.push(report_bytes(&cfg.out.join("report")));
    }
    assert_eq!(runs[0].len(), 8, "report files: {:?}", runs[0].keys());
    assert!(runs[0] == runs[1], "report files differ between runs");
}
