//! Descriptive statistics and two-sample t-tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    /// Unequal variances, Welch-Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `n_a + n_b - 2` degrees of freedom.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// Two-tailed p-value.
    pub p_value: f64,
    pub significant: bool,
}

pub fn summarize(samples: &[f64]) -> Result<SampleSummary> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("samples", "all samples must be finite"));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(SampleSummary {
        n,
        mean,
        std: (ss / (n - 1) as f64).sqrt(),
    })
}

impl SampleSummary {
    pub fn new(n: usize, mean: f64, std: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientData(format!("summary needs n >= 2, got {n}")));
        }
        if !mean.is_finite() || !std.is_finite() || std < 0.0 {
            return Err(Error::param("summary", format!("mean={mean}, std={std}")));
        }
        Ok(SampleSummary { n, mean, std })
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }
}

/// Welch two-sample two-tailed t-test at the given confidence (e.g. 0.95).
pub fn t_test(a: &SampleSummary, b: &SampleSummary, confidence: f64) -> Result<TTestResult> {
    t_test_with(a, b, confidence, TTestKind::Welch)
}

pub fn t_test_with(a: &SampleSummary, b: &SampleSummary, confidence: f64, kind: TTestKind) -> Result<TTestResult> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::param("confidence", format!("must lie in (0, 1), got {confidence}")));
    }
    for s in [a, b] {
        SampleSummary::new(s.n, s.mean, s.std)?;
    }
    let (na, nb) = (a.n as f64, b.n as f64);
    let diff = a.mean - b.mean;

    let (se2, df) = match kind {
        TTestKind::Welch => {
            let (qa, qb) = (a.variance() / na, b.variance() / nb);
            let se2 = qa + qb;
            let denom = qa * qa / (na - 1.0) + qb * qb / (nb - 1.0);
            let df = if denom > 0.0 { se2 * se2 / denom } else { na + nb - 2.0 };
            (se2, df)
        }
        TTestKind::Pooled => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * a.variance() + (nb - 1.0) * b.variance()) / df;
            (pooled * (1.0 / na + 1.0 / nb), df)
        }
    };

    let alpha = 1.0 - confidence;
    if se2 == 0.0 {
        // Both samples are constant.
        let (t, p) = if diff == 0.0 { (0.0, 1.0) } else { (diff.signum() * f64::INFINITY, 0.0) };
        return Ok(TTestResult {
            t_statistic: t,
            degrees_of_freedom: df,
            p_value: p,
            significant: p < alpha,
        });
    }

    let t = diff / se2.sqrt();
    let p = student_t_two_tailed(t, df);
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        significant: p < alpha,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    // The lower tail keeps full relative precision far from the centre.
    (2.0 * student_t_cdf(-t.abs(), df)).min(1.0)
}

/// Cumulative distribution function of Student's t.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom must be positive")
        .cdf(t)
}
