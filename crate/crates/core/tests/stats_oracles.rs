//! Statistical routines against brute-force and independent oracles.

use proptest::prelude::*;
use rehab_core::stats::{
    chi_square_test, conditional_mle_odds_ratio, fisher_exact, friedman_exact, friedman_test, wilcoxon_signed_rank,
    ContingencyTable2x2, Method, NoncentralHypergeometric,
};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Hypergeometric};

fn table(a: u64, b: u64, c: u64, d: u64) -> ContingencyTable2x2 {
    ContingencyTable2x2::new(a, b, c, d).unwrap()
}

/// Two-sided Fisher p by enumerating every table with the observed margins,
/// using statrs' hypergeometric pmf.
fn fisher_oracle(t: &ContingencyTable2x2) -> f64 {
    let r1 = t.a + t.b;
    let c1 = t.a + t.c;
    let n = t.a + t.b + t.c + t.d;
    let lo = c1.saturating_sub(n - r1);
    let hi = r1.min(c1);
    let h = Hypergeometric::new(n, r1, c1).unwrap();
    let p_obs = h.pmf(t.a);
    (lo..=hi)
        .map(|x| h.pmf(x))
        .filter(|p| *p <= p_obs * (1.0 + 1e-7))
        .sum::<f64>()
        .min(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn fisher_matches_enumeration(a in 0u64..20, b in 0u64..20, c in 0u64..20, d in 0u64..20) {
        prop_assume!(a + b + c + d > 0);
        let t = table(a, b, c, d);
        let p = fisher_exact(&t).p_value;
        let oracle = fisher_oracle(&t);
        prop_assert!((p - oracle).abs() < 1e-10, "{:?} {} {}", t, p, oracle);
    }

    #[test]
    fn pearson_p_matches_statrs(a in 1u64..60, b in 1u64..60, c in 1u64..60, d in 1u64..60) {
        let t = table(a, b, c, d);
        let r = chi_square_test(&t, false).unwrap();
        let stat = r.statistic.unwrap();
        let oracle = 1.0 - ChiSquared::new(1.0).unwrap().cdf(stat);
        prop_assert!((r.p_value - oracle).abs() < 1e-9);
    }

    #[test]
    fn mle_solves_the_mean_equation(a in 0u64..25, b in 0u64..25, c in 0u64..25, d in 0u64..25) {
        prop_assume!(a + b > 0 && c + d > 0 && a + c > 0 && b + d > 0);
        let t = table(a, b, c, d);
        let est = conditional_mle_odds_ratio(&t, 0.95);
        let dist = NoncentralHypergeometric::from_table(&t);
        if est.or_value > 0.0 && est.or_value.is_finite() {
            prop_assert!((dist.mean(est.or_value.ln()) - a as f64).abs() < 1e-8);
        }
        if est.ci_low > 0.0 && est.ci_low.is_finite() {
            prop_assert!((dist.upper_tail(a, est.ci_low.ln()).0 - 0.025).abs() < 1e-8);
        }
        if est.ci_high.is_finite() {
            prop_assert!((dist.lower_tail(a, est.ci_high.ln()).0 - 0.025).abs() < 1e-8);
        }
    }
}

#[test]
fn central_probabilities_match_statrs_hypergeometric() {
    let t = table(10, 6, 16, 77);
    let dist = NoncentralHypergeometric::from_table(&t);
    let h = Hypergeometric::new(109, 16, 26).unwrap();
    for (i, p) in dist.probabilities(0.0).iter().enumerate() {
        let x = dist.lo() + i as u64;
        assert!((p - h.pmf(x)).abs() < 1e-13);
    }
}

/// Every sign assignment of the ranks 1..=n is equally likely under H0.
fn wilcoxon_oracle(diffs: &[f64]) -> f64 {
    let n = diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut rank = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = (r + 1) as f64;
    }
    let observed: f64 = (0..n).filter(|&i| diffs[i] > 0.0).map(|i| rank[i]).sum();
    let mean = (n * (n + 1)) as f64 / 4.0;
    let dev = (observed - mean).abs();
    let total = 1u64 << n;
    let extreme = (0..total)
        .filter(|mask| {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| rank[i]).sum();
            (w - mean).abs() >= dev - 1e-9
        })
        .count();
    extreme as f64 / total as f64
}

#[test]
fn wilcoxon_exact_matches_sign_enumeration() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for n in 1..=12 {
        for _ in 0..10 {
            let pairs: Vec<(f64, f64)> = (0..n).map(|_| (0.0, rng.random_range(-5.0..5.0) + 0.3)).collect();
            let diffs: Vec<f64> = pairs.iter().map(|(x, y)| y - x).collect();
            let r = wilcoxon_signed_rank(&pairs).unwrap();
            assert_eq!(r.method, Method::WilcoxonExact);
            assert!((r.p_value - wilcoxon_oracle(&diffs)).abs() < 1e-12, "n={n}");
        }
    }
}

fn friedman_oracle(rows: &[Vec<f64>]) -> f64 {
    // all (k!)^n within-row orderings of the observed ranks
    let k = rows[0].len();
    let ranked: Vec<Vec<f64>> = rows.iter().map(|r| rehab_core::stats::midranks(r).0).collect();
    let perms = permutations(k);
    let stat = |rs: &[Vec<f64>]| {
        let mut sums = vec![0.0; k];
        for r in rs {
            for (s, v) in sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        sums.iter().map(|s| s * s).sum::<f64>()
    };
    let observed = stat(&ranked);
    let n = rows.len();
    let total = perms.len().pow(n as u32);
    let mut hits = 0usize;
    let mut current = ranked.clone();
    for code in 0..total {
        let mut c = code;
        for (i, row) in current.iter_mut().enumerate() {
            let p = &perms[c % perms.len()];
            c /= perms.len();
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = ranked[i][p[j]];
            }
        }
        if stat(&current) >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn friedman_exact_matches_permutation_enumeration() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    for n in 2..=5 {
        for _ in 0..5 {
            // integer scores so ties occur
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.random_range(0..4) as f64).collect())
                .collect();
            if rows.iter().all(|r| r.iter().all(|v| *v == r[0])) {
                continue;
            }
            let exact = friedman_exact(&rows).unwrap().p_value;
            assert!((exact - friedman_oracle(&rows)).abs() < 1e-9, "{rows:?}");
        }
    }
}

#[test]
fn friedman_chi_square_p_matches_statrs() {
    let rows = vec![
        vec![30.0, 32.5, 35.0],
        vec![41.0, 40.0, 44.0],
        vec![28.0, 33.0, 33.0],
        vec![50.0, 52.0, 51.0],
        vec![38.0, 39.0, 45.0],
    ];
    let r = friedman_test(&rows).unwrap();
    let oracle = 1.0 - ChiSquared::new(2.0).unwrap().cdf(r.statistic.unwrap());
    assert!((r.p_value - oracle).abs() < 1e-12);
}
