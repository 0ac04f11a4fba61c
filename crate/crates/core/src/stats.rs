//! Small hypothesis tests for paired comparisons and sampling checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} categories")]
    TooFewCategories(usize),
    #[error("no observations")]
    Empty,
}

/// Direction of the alternative hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// The first sample tends to be larger.
    Greater,
    /// The first sample tends to be smaller.
    Less,
    TwoSided,
}

/// Outcome of a sign test on paired observations. Ties are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    /// Pairs where the first sample is larger.
    pub wins: usize,
    /// Pairs where the first sample is smaller.
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

/// `P(X ≥ k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(k: usize, n: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let b = Binomial::new(0.5, n as u64).expect("p = 0.5 is valid");
    b.sf(k as u64 - 1)
}

/// Sign-test p-value for `wins` against `losses` under the given alternative.
pub fn sign_test_counts(wins: usize, losses: usize, alternative: Alternative) -> f64 {
    let n = wins + losses;
    match alternative {
        Alternative::Greater => binomial_upper_tail(wins, n),
        Alternative::Less => binomial_upper_tail(losses, n),
        Alternative::TwoSided => (2.0 * binomial_upper_tail(wins.max(losses), n)).min(1.0),
    }
}

/// Sign test on paired samples `a[i]` vs `b[i]`. Differences with magnitude
/// at most `tie_tol` count as ties.
pub fn paired_sign_test(a: &[f64], b: &[f64], tie_tol: f64, alternative: Alternative) -> Result<SignTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        if d.abs() <= tie_tol {
            ties += 1;
        } else if d > 0.0 {
            wins += 1;
        } else {
            losses += 1;
        }
    }
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value: sign_test_counts(wins, losses, alternative),
    })
}

/// Pearson chi-square statistic and p-value for `counts` against the
/// uniform distribution over its categories.
pub fn chi_square_uniform(counts: &[u64]) -> Result<(f64, f64), StatsError> {
    if counts.len() < 2 {
        return Err(StatsError::TooFewCategories(2));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::Empty);
    }
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("positive degrees of freedom");
    Ok((stat, dist.sf(stat)))
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
