//! Paired nonparametric tests across timepoints: Friedman (with an exact
//! permutation variant for small samples) and the Wilcoxon signed-rank test.

use std::collections::HashMap;

use super::special::{chi2_sf, normal_sf};
use super::{Method, StatsError, TestResult};

const TIE_RTOL: f64 = 1e-9;

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

/// 1-based mid-ranks and tie-group sizes. Values within a relative 1e-9 of
/// each other count as tied.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && nearly_equal(values[order[j]], values[order[i]]) {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

fn check_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<usize, StatsError> {
    if rows.len() < 2 {
        return Err(StatsError::InsufficientRows(rows.len()));
    }
    let k = rows[0].as_ref().len();
    if k < 2 {
        return Err(StatsError::InvalidInput("need at least two treatments".into()));
    }
    for row in rows {
        let row = row.as_ref();
        if row.len() != k {
            return Err(StatsError::InvalidInput("rows have different lengths".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::InvalidInput("non-finite score".into()));
        }
    }
    Ok(k)
}

struct FriedmanParts {
    rank_sums: Vec<f64>,
    statistic: f64,
    tie_denominator: f64,
}

fn friedman_parts<R: AsRef<[f64]>>(rows: &[R], k: usize) -> FriedmanParts {
    let n = rows.len() as f64;
    let kf = k as f64;
    let mut rank_sums = vec![0.0; k];
    let mut tie_sum = 0.0;
    for row in rows {
        let (ranks, ties) = midranks(row.as_ref());
        for (s, r) in rank_sums.iter_mut().zip(&ranks) {
            *s += r;
        }
        tie_sum += ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    }
    let ss: f64 = rank_sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (n * kf * (kf + 1.0)) * ss - 3.0 * n * (kf + 1.0);
    let tie_denominator = 1.0 - tie_sum / (n * (kf * kf * kf - kf));
    FriedmanParts {
        rank_sums,
        statistic: raw,
        tie_denominator,
    }
}

/// Friedman test over `n` complete rows of `k` repeated measures, with
/// within-row mid-ranks, tie-corrected statistic and a chi-square (k - 1 df)
/// p-value.
pub fn friedman_test<R: AsRef<[f64]>>(rows: &[R]) -> Result<TestResult, StatsError> {
    let k = check_rows(rows)?;
    let parts = friedman_parts(rows, k);
    if parts.tie_denominator <= 1e-12 {
        return Ok(TestResult::new(Some(0.0), 1.0, Method::Friedman));
    }
    let stat = (parts.statistic / parts.tie_denominator).max(0.0);
    Ok(TestResult::new(
        Some(stat),
        chi2_sf(stat, (k - 1) as f64),
        Method::Friedman,
    ))
}

/// Row rank sums, exposed for reporting.
pub fn friedman_rank_sums<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<f64>, StatsError> {
    let k = check_rows(rows)?;
    Ok(friedman_parts(rows, k).rank_sums)
}

fn permutations(v: &[i64]) -> Vec<Vec<i64>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Friedman test with the exact permutation p-value: each row's rank vector
/// is permuted uniformly over all `k!` orderings independently, and the
/// p-value is the probability of a rank-sum configuration at least as
/// extreme as the observed one.
///
/// The null distribution of the rank sums is built by convolution over rows,
/// so the cost grows with the number of distinct rank-sum vectors rather
/// than `(k!)^n`. Limited to `k <= 6`.
pub fn friedman_exact<R: AsRef<[f64]>>(rows: &[R]) -> Result<TestResult, StatsError> {
    let k = check_rows(rows)?;
    if k > 6 {
        return Err(StatsError::InvalidInput(
            "exact Friedman supports at most 6 treatments".into(),
        ));
    }
    let parts = friedman_parts(rows, k);
    if parts.tie_denominator <= 1e-12 {
        return Ok(TestResult::new(Some(0.0), 1.0, Method::FriedmanExact));
    }
    // doubled mid-ranks are integers
    let doubled_rows: Vec<Vec<i64>> = rows
        .iter()
        .map(|r| {
            midranks(r.as_ref())
                .0
                .iter()
                .map(|x| (2.0 * x).round() as i64)
                .collect()
        })
        .collect();
    let observed: i64 = {
        let mut sums = vec![0i64; k];
        for row in &doubled_rows {
            for (s, r) in sums.iter_mut().zip(row) {
                *s += r;
            }
        }
        sums.iter().map(|s| s * s).sum()
    };

    let mut dist: HashMap<Vec<i64>, f64> = HashMap::new();
    dist.insert(vec![0; k], 1.0);
    for row in &doubled_rows {
        let perms = permutations(row);
        let w = 1.0 / perms.len() as f64;
        let mut next: HashMap<Vec<i64>, f64> = HashMap::with_capacity(dist.len() * 2);
        for (sums, p) in &dist {
            for perm in &perms {
                let key: Vec<i64> = sums.iter().zip(perm).map(|(s, r)| s + r).collect();
                *next.entry(key).or_insert(0.0) += p * w;
            }
        }
        dist = next;
    }
    let mut tail: Vec<f64> = dist
        .iter()
        .filter(|(sums, _)| sums.iter().map(|s| s * s).sum::<i64>() >= observed)
        .map(|(_, p)| *p)
        .collect();
    // order-independent summation
    tail.sort_by(f64::total_cmp);
    let p: f64 = tail.iter().sum();
    let stat = (parts.statistic / parts.tie_denominator).max(0.0);
    Ok(TestResult::new(Some(stat), p.min(1.0), Method::FriedmanExact))
}

/// Largest effective sample size for which the exact null distribution is used.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Two-sided Wilcoxon signed-rank test on differences `y - x`.
///
/// Zero differences are dropped. The statistic is W+, the rank sum of
/// positive differences. With at most 25 non-zero differences and no tied
/// magnitudes the p-value comes from the exact null distribution; otherwise
/// from the normal approximation with tie-corrected variance and a 0.5
/// continuity correction.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<TestResult, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::InvalidInput("no pairs".into()));
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite score".into()));
    }
    let diffs: Vec<f64> = pairs
        .iter()
        .filter(|(x, y)| !nearly_equal(*x, *y))
        .map(|(x, y)| y - x)
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::NoNonzeroDifferences);
    }
    let n = diffs.len();
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&magnitudes);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    if n <= WILCOXON_EXACT_MAX_N && ties.is_empty() {
        let counts = signed_rank_counts(n);
        let total: f64 = counts.iter().sum();
        let w = w_plus.round() as usize;
        let lower: f64 = counts[..=w].iter().sum::<f64>() / total;
        let upper: f64 = counts[w..].iter().sum::<f64>() / total;
        let p = (2.0 * lower.min(upper)).min(1.0);
        return Ok(TestResult::new(Some(w_plus), p, Method::WilcoxonExact));
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_adj: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_adj;
    if var <= 0.0 {
        return Ok(TestResult::new(Some(w_plus), 1.0, Method::WilcoxonNormal));
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let p = (2.0 * normal_sf(z)).min(1.0);
    Ok(TestResult::new(Some(w_plus), p, Method::WilcoxonNormal))
}

/// Number of sign assignments of ranks `1..=n` giving each W+ value.
fn signed_rank_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for w in (r..=max).rev() {
            counts[w] += counts[w - r];
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midranks_with_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![2]);
    }

    #[test]
    fn friedman_constant_rows() {
        let rows = vec![[5.0, 5.0, 5.0]; 5];
        let r = friedman_test(&rows).unwrap();
        assert_eq!(r.statistic, Some(0.0));
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn friedman_identical_orderings() {
        let rows = vec![[1.0, 2.0, 3.0]; 6];
        assert_eq!(friedman_rank_sums(&rows).unwrap(), vec![6.0, 12.0, 18.0]);
        let r = friedman_test(&rows).unwrap();
        assert!((r.statistic.unwrap() - 12.0).abs() < 1e-12);
        assert!((r.p_value - (-6.0f64).exp()).abs() < 1e-14);
        assert!((r.p_value - 0.00248).abs() < 1e-5);
    }

    #[test]
    fn friedman_needs_two_rows() {
        assert!(matches!(
            friedman_test(&[[1.0, 2.0, 3.0]]),
            Err(StatsError::InsufficientRows(1))
        ));
    }

    #[test]
    fn wilcoxon_all_zero() {
        assert!(matches!(
            wilcoxon_signed_rank(&[(1.0, 1.0), (2.0, 2.0)]),
            Err(StatsError::NoNonzeroDifferences)
        ));
    }

    #[test]
    fn wilcoxon_all_positive() {
        let pairs: Vec<(f64, f64)> = (1..=6).map(|d| (0.0, d as f64)).collect();
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert_eq!(r.method, Method::WilcoxonExact);
        assert_eq!(r.statistic, Some(21.0));
        assert!((r.p_value - 0.03125).abs() < 1e-15);
    }

    #[test]
    fn wilcoxon_balanced_signs() {
        // W+ = 1 + 4 = 5 = n(n+1)/4
        let r = wilcoxon_signed_rank(&[(0.0, 1.0), (0.0, -2.0), (0.0, -3.0), (0.0, 4.0)]).unwrap();
        assert_eq!(r.method, Method::WilcoxonExact);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn wilcoxon_ties_use_normal() {
        let r = wilcoxon_signed_rank(&[(0.0, 1.0), (0.0, 1.0), (0.0, -1.0), (0.0, 2.0)]).unwrap();
        assert_eq!(r.method, Method::WilcoxonNormal);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn wilcoxon_large_sample_normal() {
        let pairs: Vec<(f64, f64)> = (0..40).map(|i| (0.0, (i as f64) - 10.5)).collect();
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert_eq!(r.method, Method::WilcoxonNormal);
        // statrs-free sanity: strong positive shift
        assert!(r.p_value < 1e-3);
    }

    proptest! {
        #[test]
        fn friedman_monotone_invariance(rows in prop::collection::vec(prop::array::uniform3(0u8..6), 2..12)) {
            let rows: Vec<[f64; 3]> = rows.iter().map(|r| r.map(f64::from)).collect();
            let transformed: Vec<[f64; 3]> = rows.iter().map(|r| r.map(|v| (v * 0.7).exp() + 3.0 * v)).collect();
            let a = friedman_test(&rows).unwrap();
            let b = friedman_test(&transformed).unwrap();
            prop_assert!((a.statistic.unwrap() - b.statistic.unwrap()).abs() < 1e-9);
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.p_value));
        }

        #[test]
        fn wilcoxon_p_in_unit_interval(d in prop::collection::vec(-5i32..6, 1..40)) {
            let pairs: Vec<(f64, f64)> = d.iter().map(|&v| (0.0, v as f64)).collect();
            if let Ok(r) = wilcoxon_signed_rank(&pairs) {
                prop_assert!((0.0..=1.0).contains(&r.p_value));
            }
        }
    }
}
