use super::odds_ratio::NoncentralHypergeometric;
use super::special::chi2_sf;
use super::{ContingencyTable2x2, Method, StatsError, TestResult};

/// Relative tolerance under which two table probabilities count as equal in
/// the two-sided Fisher sum.
const FISHER_TIE_RTOL: f64 = 1e-7;

/// Pearson chi-square test with 1 degree of freedom, optionally with the
/// Yates continuity correction `(|O - E| - min(0.5, |O - E|))^2 / E`.
pub fn chi_square_test(table: &ContingencyTable2x2, yates: bool) -> Result<TestResult, StatsError> {
    if table.improved() == 0 || table.not_improved() == 0 || table.exposed() == 0 || table.unexposed() == 0 {
        return Err(StatsError::DegenerateMargin);
    }
    let observed = table.cells().map(|c| c as f64);
    let expected = table.expected();
    let mut stat = 0.0;
    for (o, e) in observed.iter().zip(&expected) {
        let mut dev = (o - e).abs();
        if yates {
            dev -= dev.min(0.5);
        }
        stat += dev * dev / e;
    }
    let method = if yates { Method::Chi2Yates } else { Method::Chi2Pearson };
    Ok(TestResult::new(Some(stat), chi2_sf(stat, 1.0), method))
}

/// Two-sided Fisher exact test: total probability, under the central
/// hypergeometric distribution with the table's margins, of every table no
/// more likely than the observed one.
pub fn fisher_exact(table: &ContingencyTable2x2) -> TestResult {
    let dist = NoncentralHypergeometric::from_table(table);
    if dist.support_size() == 1 {
        return TestResult::new(None, 1.0, Method::FisherExact);
    }
    let probs = dist.probabilities(0.0);
    let observed = probs[(table.a - dist.lo()) as usize];
    let cutoff = observed * (1.0 + FISHER_TIE_RTOL);
    let p: f64 = probs.iter().filter(|&&p| p <= cutoff).sum();
    TestResult::new(None, p, Method::FisherExact)
}
