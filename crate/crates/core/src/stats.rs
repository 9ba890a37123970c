//! Non-parametric tests, effect sizes and multiple-testing correction.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest sample size (after zero-drop, or combined for two samples) that
/// gets an exact p-value.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("degenerate sample: {0}")]
pub struct DegenerateSampleError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("agreement is undefined: {0}")]
pub struct DegenerateAgreementError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WilcoxonSignedRank,
    MannWhitneyU,
    CohensD,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::WilcoxonSignedRank => "wilcoxon_signed_rank",
            TestKind::MannWhitneyU => "mann_whitney_u",
            TestKind::CohensD => "cohens_d",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Effect {
    RankBiserialR(f64),
    CliffsDelta(f64),
    D(f64),
}

impl Effect {
    pub fn name(&self) -> &'static str {
        match self {
            Effect::RankBiserialR(_) => "rank_biserial_r",
            Effect::CliffsDelta(_) => "cliffs_delta",
            Effect::D(_) => "cohens_d",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Effect::RankBiserialR(v) | Effect::CliffsDelta(v) | Effect::D(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub test: TestKind,
    pub statistic: f64,
    /// `None` for tests without a p-value (Cohen's d).
    pub p_value: Option<f64>,
    pub exact: bool,
    pub effect: Effect,
    pub n_a: usize,
    pub n_b: usize,
    pub alpha_corrected: Option<f64>,
    pub significant: Option<bool>,
}

/// Average ranks (1-based) of `values`, plus the sizes of tie groups.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

fn normal_two_sided(z: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * n.cdf(-z.abs())).min(1.0)
}

/// Number of ways to reach each sum using each weight at most once,
/// optionally restricted to subsets of exactly `size` items.
fn subset_sum_counts(weights: &[u64], size: Option<usize>) -> BTreeMap<u64, f64> {
    let total: u64 = weights.iter().sum();
    let k_max = size.unwrap_or(0);
    // table[k][s]: subsets of size k (or any size when unrestricted) with sum s
    let rows = if size.is_some() { k_max + 1 } else { 1 };
    let mut table = vec![vec![0f64; total as usize + 1]; rows];
    table[0][0] = 1.0;
    for &w in weights {
        let w = w as usize;
        if size.is_some() {
            for k in (1..rows).rev() {
                for s in (w..=total as usize).rev() {
                    let add = table[k - 1][s - w];
                    table[k][s] += add;
                }
            }
        } else {
            for s in (w..=total as usize).rev() {
                let add = table[0][s - w];
                table[0][s] += add;
            }
        }
    }
    table[rows - 1]
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0.0)
        .map(|(s, c)| (s as u64, *c))
        .collect()
}

/// Two-sided p: probability of a statistic at least as far from the centre
/// as the observed one. All quantities are doubled to stay integral.
fn two_sided_from_counts(counts: &BTreeMap<u64, f64>, observed: u64, centre2: u64) -> f64 {
    let dev = (2 * observed).abs_diff(centre2);
    let total: f64 = counts.values().sum();
    let extreme: f64 = counts
        .iter()
        .filter(|(s, _)| (2 * **s).abs_diff(centre2) >= dev)
        .map(|(_, c)| c)
        .sum();
    (extreme / total).min(1.0)
}

/// Paired signed-rank test on `a[i] - b[i]`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<StatResult, DegenerateSampleError> {
    if a.len() != b.len() {
        return Err(DegenerateSampleError(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut r = wilcoxon_differences(&diffs)?;
    r.n_b = b.len();
    Ok(r)
}

/// Signed-rank test on differences directly. Zeros are dropped.
pub fn wilcoxon_differences(diffs: &[f64]) -> Result<StatResult, DegenerateSampleError> {
    if diffs.is_empty() {
        return Err(DegenerateSampleError("no paired observations".into()));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nz.is_empty() {
        return Err(DegenerateSampleError("all differences are zero".into()));
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    // `+ 0.0` turns the empty sum's -0.0 into 0.0
    let w_plus: f64 = nz
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum::<f64>()
        + 0.0;
    let w_minus: f64 = nz
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d < 0.0)
        .map(|(_, r)| r)
        .sum::<f64>()
        + 0.0;
    let n = nz.len();
    let r = (w_plus - w_minus) / (w_plus + w_minus);
    let exact = n <= EXACT_LIMIT;
    let p = if exact {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let total: u64 = doubled.iter().sum();
        let counts = subset_sum_counts(&doubled, None);
        two_sided_from_counts(&counts, (2.0 * w_plus).round() as u64, total)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            normal_two_sided((w_plus - mean) / var.sqrt())
        }
    };
    Ok(StatResult {
        test: TestKind::WilcoxonSignedRank,
        statistic: w_plus,
        p_value: Some(p),
        exact,
        effect: Effect::RankBiserialR(r),
        n_a: diffs.len(),
        n_b: diffs.len(),
        alpha_corrected: None,
        significant: None,
    })
}

/// `(#{a > b} - #{a < b}) / (n_a * n_b)` by direct pair counting.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<f64, DegenerateSampleError> {
    if a.is_empty() || b.is_empty() {
        return Err(DegenerateSampleError("empty sample".into()));
    }
    let mut gt = 0i64;
    let mut lt = 0i64;
    for x in a {
        for y in b {
            if x > y {
                gt += 1;
            } else if x < y {
                lt += 1;
            }
        }
    }
    Ok((gt - lt) as f64 / (a.len() * b.len()) as f64)
}

/// Two-sample rank-sum test. The statistic is U for sample `a`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<StatResult, DegenerateSampleError> {
    let delta = cliffs_delta(a, b)?;
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r_a: f64 = ranks[..na].iter().sum();
    let u_a = r_a - (na * (na + 1)) as f64 / 2.0;
    let n = na + nb;
    let exact = n <= EXACT_LIMIT;
    let p = if exact {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let counts = subset_sum_counts(&doubled, Some(na));
        // rank sum of `a` under the null, centred at na * (n + 1) / 2
        let centre2 = (na * (n + 1)) as u64;
        let observed2 = (2.0 * r_a).round() as u64;
        let dev = (2 * observed2).abs_diff(2 * centre2);
        let total: f64 = counts.values().sum();
        let extreme: f64 = counts
            .iter()
            .filter(|(s, _)| (2 * **s).abs_diff(2 * centre2) >= dev)
            .map(|(_, c)| c)
            .sum();
        (extreme / total).min(1.0)
    } else {
        let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
        let mean = naf * nbf / 2.0;
        let var = naf * nbf / 12.0 * ((nf + 1.0) - tie_sum(&ties) / (nf * (nf - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let diff = (u_a - mean).abs() - 0.5;
            normal_two_sided(diff.max(0.0) / var.sqrt())
        }
    };
    Ok(StatResult {
        test: TestKind::MannWhitneyU,
        statistic: u_a,
        p_value: Some(p),
        exact,
        effect: Effect::CliffsDelta(delta),
        n_a: na,
        n_b: nb,
        alpha_corrected: None,
        significant: None,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standardized mean difference with the pooled, Bessel-corrected SD.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<StatResult, DegenerateSampleError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(DegenerateSampleError("each sample needs two values".into()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let ss = |x: &[f64], m: f64| x.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    let pooled = (ss(a, ma) + ss(b, mb)) / (a.len() + b.len() - 2) as f64;
    if pooled <= 0.0 {
        return Err(DegenerateSampleError("pooled variance is zero".into()));
    }
    let d = (ma - mb) / pooled.sqrt();
    Ok(StatResult {
        test: TestKind::CohensD,
        statistic: d,
        p_value: None,
        exact: true,
        effect: Effect::D(d),
        n_a: a.len(),
        n_b: b.len(),
        alpha_corrected: None,
        significant: None,
    })
}

pub fn bonferroni(alpha: f64, m: usize) -> f64 {
    assert!(m >= 1, "bonferroni needs at least one test");
    alpha / m as f64
}

/// Corrects `alpha` for the size of `results` and flags each result.
pub fn apply_bonferroni(results: &mut [StatResult], alpha: f64) {
    if results.is_empty() {
        return;
    }
    let corrected = bonferroni(alpha, results.len());
    for r in results {
        r.alpha_corrected = Some(corrected);
        r.significant = r.p_value.map(|p| p < corrected);
    }
}

/// Cohen's kappa for two raters over the same items.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, DegenerateAgreementError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(DegenerateAgreementError(format!(
            "need equal, non-empty label lists ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ma: BTreeMap<&T, f64> = BTreeMap::new();
    let mut mb: BTreeMap<&T, f64> = BTreeMap::new();
    for x in a {
        *ma.entry(x).or_default() += 1.0;
    }
    for y in b {
        *mb.entry(y).or_default() += 1.0;
    }
    let pe: f64 = ma
        .iter()
        .map(|(k, ca)| ca * mb.get(k).copied().unwrap_or(0.0))
        .sum::<f64>()
        / (n * n);
    if (1.0 - pe).abs() < 1e-15 {
        return Err(DegenerateAgreementError(
            "expected agreement is 1 (single category)".into(),
        ));
    }
    Ok((po - pe) / (1.0 - pe))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}
