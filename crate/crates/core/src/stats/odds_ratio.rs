//! Odds ratios for 2x2 tables: the sample cross-product ratio with a Woolf
//! interval, and the conditional maximum-likelihood estimate under Fisher's
//! noncentral hypergeometric distribution with an exact test-inversion
//! interval.

use serde::{Deserialize, Serialize};

use super::special::ln_choose;
use super::{ContingencyTable2x2, StatsError};

/// 97.5% standard normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrEstimator {
    Sample,
    ConditionalMle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioEstimate {
    pub estimator: OrEstimator,
    /// `+inf` when the estimate diverges; NaN when it is undefined
    /// (a single table is compatible with the margins).
    pub or_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

impl OddsRatioEstimate {
    pub fn is_defined(&self) -> bool {
        !self.or_value.is_nan()
    }
}

/// Distribution of the top-left cell given the table margins, with weights
/// `C(r1, x) C(r2, c1 - x) psi^x` over `x` in `[lo, hi]`.
///
/// Probabilities are evaluated in log space and normalised after shifting by
/// the largest log-weight, so large margins do not overflow.
#[derive(Debug, Clone)]
pub struct NoncentralHypergeometric {
    lo: u64,
    log_w: Vec<f64>,
}

impl NoncentralHypergeometric {
    /// Margins: `r1` improved, `r2` not improved, `c1` exposed.
    pub fn new(r1: u64, r2: u64, c1: u64) -> Self {
        let lo = c1.saturating_sub(r2);
        let hi = r1.min(c1);
        let log_w = (lo..=hi).map(|x| ln_choose(r1, x) + ln_choose(r2, c1 - x)).collect();
        NoncentralHypergeometric { lo, log_w }
    }

    pub fn from_table(t: &ContingencyTable2x2) -> Self {
        Self::new(t.improved(), t.not_improved(), t.exposed())
    }

    pub fn lo(&self) -> u64 {
        self.lo
    }

    pub fn hi(&self) -> u64 {
        self.lo + self.log_w.len() as u64 - 1
    }

    pub fn support_size(&self) -> usize {
        self.log_w.len()
    }

    /// Probabilities over the support at `psi = exp(log_psi)`.
    pub fn probabilities(&self, log_psi: f64) -> Vec<f64> {
        let z: Vec<f64> = self
            .log_w
            .iter()
            .enumerate()
            .map(|(i, w)| w + (self.lo + i as u64) as f64 * log_psi)
            .collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|v| v / total).collect()
    }

    fn support(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.log_w.len()).map(move |i| (self.lo + i as u64) as f64)
    }

    pub fn mean(&self, log_psi: f64) -> f64 {
        self.moments(log_psi).0
    }

    /// Mean and variance; the variance is the derivative of the mean in `log_psi`.
    pub fn moments(&self, log_psi: f64) -> (f64, f64) {
        let p = self.probabilities(log_psi);
        let mean: f64 = self.support().zip(&p).map(|(x, p)| x * p).sum();
        let var: f64 = self.support().zip(&p).map(|(x, p)| (x - mean).powi(2) * p).sum();
        (mean, var)
    }

    /// `P(X >= x0)` and its derivative in `log_psi`.
    pub fn upper_tail(&self, x0: u64, log_psi: f64) -> (f64, f64) {
        self.tail(log_psi, |x| x >= x0 as f64)
    }

    /// `P(X <= x0)` and its derivative in `log_psi`.
    pub fn lower_tail(&self, x0: u64, log_psi: f64) -> (f64, f64) {
        self.tail(log_psi, |x| x <= x0 as f64)
    }

    fn tail(&self, log_psi: f64, keep: impl Fn(f64) -> bool) -> (f64, f64) {
        let p = self.probabilities(log_psi);
        let mean: f64 = self.support().zip(&p).map(|(x, p)| x * p).sum();
        let mut prob = 0.0;
        let mut deriv = 0.0;
        for (x, p) in self.support().zip(&p) {
            if keep(x) {
                prob += p;
                deriv += p * (x - mean);
            }
        }
        (prob, deriv)
    }
}

/// Root of an increasing function of `t` via geometric bracketing plus a
/// Newton / bisection hybrid. `f` returns the value and its derivative.
fn solve_increasing(f: impl Fn(f64) -> (f64, f64)) -> f64 {
    let mut lo = -1.0;
    let mut hi = 1.0;
    while f(lo).0 > 0.0 && lo > -1e4 {
        hi = lo;
        lo *= 2.0;
    }
    while f(hi).0 < 0.0 && hi < 1e4 {
        lo = hi;
        hi *= 2.0;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..500 {
        let (v, dv) = f(t);
        if v == 0.0 {
            return t;
        }
        if v > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo <= 1e-15 * (1.0 + t.abs()) || v.abs() < 1e-14 {
            break;
        }
        let newton = t - v / dv;
        t = if dv > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    t
}

/// Conditional maximum-likelihood odds ratio with an exact confidence
/// interval obtained by inverting the two one-sided tests.
///
/// The estimate solves `E_psi[X] = a`; it is 0 when `a` is the smallest
/// value compatible with the margins and `+inf` when it is the largest.
/// The lower limit solves `P_psi(X >= a) = (1 - level) / 2` and the upper
/// limit `P_psi(X <= a) = (1 - level) / 2`.
pub fn conditional_mle_odds_ratio(table: &ContingencyTable2x2, level: f64) -> OddsRatioEstimate {
    let dist = NoncentralHypergeometric::from_table(table);
    let mut est = OddsRatioEstimate {
        estimator: OrEstimator::ConditionalMle,
        or_value: f64::NAN,
        ci_low: f64::NAN,
        ci_high: f64::NAN,
        level,
    };
    if dist.support_size() == 1 {
        return est;
    }
    let a = table.a;
    let half_alpha = (1.0 - level) / 2.0;
    let (lo, hi) = (dist.lo(), dist.hi());

    est.or_value = if a == lo {
        0.0
    } else if a == hi {
        f64::INFINITY
    } else {
        solve_increasing(|t| {
            let (m, v) = dist.moments(t);
            (m - a as f64, v)
        })
        .exp()
    };
    est.ci_low = if a == lo {
        0.0
    } else {
        solve_increasing(|t| {
            let (p, dp) = dist.upper_tail(a, t);
            (p - half_alpha, dp)
        })
        .exp()
    };
    est.ci_high = if a == hi {
        f64::INFINITY
    } else {
        solve_increasing(|t| {
            let (p, dp) = dist.lower_tail(a, t);
            (half_alpha - p, -dp)
        })
        .exp()
    };
    est
}

/// Sample odds ratio `(a d) / (b c)` with a 95% Woolf (log-normal) interval.
///
/// `b c = 0 < a d` gives `+inf`; `a d = 0 < b c` gives 0; both zero is an
/// error. When any cell is zero the interval is computed after adding 0.5 to
/// every cell.
pub fn sample_odds_ratio(table: &ContingencyTable2x2) -> Result<OddsRatioEstimate, StatsError> {
    let ad = table.a as f64 * table.d as f64;
    let bc = table.b as f64 * table.c as f64;
    let or_value = match (ad == 0.0, bc == 0.0) {
        (true, true) => return Err(StatsError::UndefinedOddsRatio),
        (false, true) => f64::INFINITY,
        (true, false) => 0.0,
        (false, false) => ad / bc,
    };
    let shift = if table.min_cell() == 0 { 0.5 } else { 0.0 };
    let [a, b, c, d] = table.cells().map(|v| v as f64 + shift);
    let log_or = (a * d / (b * c)).ln();
    let se = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
    Ok(OddsRatioEstimate {
        estimator: OrEstimator::Sample,
        or_value,
        ci_low: (log_or - Z_975 * se).exp(),
        ci_high: (log_or + Z_975 * se).exp(),
        level: 0.95,
    })
}
