//! Output analysis for replication samples.
//!
//! Summaries, Student-t confidence intervals, coefficient of variation,
//! the required-replication calculator for rare-event estimation, and
//! the tree-vs-simulation agreement test. All quantile lookups are
//! backed by `statrs`; the estimators and decision logic live here.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("EMPTY_SAMPLE: at least one observation is required")]
    EmptySample,
    #[error("CI_UNDEFINED: a confidence interval needs at least two observations")]
    CiUndefined,
    #[error("P_ZERO: event probability is zero; no finite replication budget suffices")]
    PZero,
    #[error("probability {0} outside (0,1]")]
    ProbabilityOutOfRange(f64),
    #[error("confidence level {0} outside (0,1)")]
    ConfidenceOutOfRange(f64),
    #[error("relative half-width {0} must be > 0")]
    NonpositiveHalfWidth(f64),
}

/// Quantile of the standard normal at `p` in (0, 1).
pub fn standard_normal_quantile(p: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    normal.inverse_cdf(p)
}

/// Two-sided critical z for a confidence level, e.g. 0.95 -> 1.95996.
pub fn two_sided_z(confidence: f64) -> f64 {
    standard_normal_quantile(1.0 - (1.0 - confidence) / 2.0)
}

/// Two-sided critical t for `df` degrees of freedom.
pub fn two_sided_t(confidence: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid Student-t");
    dist.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Summary of one metric over a replication sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance (divisor n-1); 0 for n = 1.
    pub sample_variance: f64,
    pub confidence: f64,
    /// Student-t half-width; `None` for n < 2.
    pub ci_half_width: Option<f64>,
    /// Coefficient of variation stdev/mean; `None` when the mean is 0.
    pub cv: Option<f64>,
}

impl SummaryStats {
    pub fn ci_half_width(&self) -> Result<f64, StatsError> {
        self.ci_half_width.ok_or(StatsError::CiUndefined)
    }
}

/// Standard unbiased estimators plus a Student-t confidence interval.
pub fn summarize(samples: &[f64], confidence: f64) -> Result<SummaryStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if !(0.0 < confidence && confidence < 1.0) {
        return Err(StatsError::ConfidenceOutOfRange(confidence));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sample_variance = if n > 1 {
        samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let ci_half_width = if n > 1 {
        let t = two_sided_t(confidence, (n - 1) as f64);
        Some(t * (sample_variance / n as f64).sqrt())
    } else {
        None
    };
    let cv = if mean != 0.0 {
        Some(sample_variance.sqrt() / mean)
    } else {
        None
    };
    Ok(SummaryStats { n, mean, sample_variance, confidence, ci_half_width, cv })
}

/// Replications needed so the normal-approximation CI half-width of a
/// Bernoulli-`p` mean is at most `rel_halfwidth * p`:
/// `ceil(z^2 (1-p) / (rel_halfwidth^2 p))`.
pub fn required_replications(
    p: f64,
    rel_halfwidth: f64,
    confidence: f64,
) -> Result<u64, StatsError> {
    if p == 0.0 {
        return Err(StatsError::PZero);
    }
    if !(0.0 < p && p <= 1.0) {
        return Err(StatsError::ProbabilityOutOfRange(p));
    }
    if !(rel_halfwidth > 0.0) {
        return Err(StatsError::NonpositiveHalfWidth(rel_halfwidth));
    }
    if !(0.0 < confidence && confidence < 1.0) {
        return Err(StatsError::ConfidenceOutOfRange(confidence));
    }
    let z = two_sided_z(confidence);
    let required = z * z * (1.0 - p) / (rel_halfwidth * rel_halfwidth * p);
    Ok(required.ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AgreementVerdict {
    Consistent,
    Inconsistent,
}

impl std::fmt::Display for AgreementVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AgreementVerdict::Consistent => f.write_str("CONSISTENT"),
            AgreementVerdict::Inconsistent => f.write_str("INCONSISTENT"),
        }
    }
}

/// Result of the one-sample two-sided t-test against an analytic value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementOutcome {
    pub verdict: AgreementVerdict,
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub alpha: f64,
}

impl AgreementOutcome {
    pub fn is_consistent(&self) -> bool {
        self.verdict == AgreementVerdict::Consistent
    }
}

/// One-sample two-sided t-test of H0: mean == `analytic_value`.
///
/// Zero-variance samples are consistent iff the mean equals the
/// analytic value exactly.
pub fn agreement_test(
    samples: &[f64],
    analytic_value: f64,
    alpha: f64,
) -> Result<AgreementOutcome, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::EmptySample);
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(StatsError::ConfidenceOutOfRange(alpha));
    }
    let n = samples.len();
    let stats = summarize(samples, 1.0 - alpha)?;
    let df = n - 1;
    if stats.sample_variance == 0.0 {
        let exact = stats.mean == analytic_value;
        return Ok(AgreementOutcome {
            verdict: if exact {
                AgreementVerdict::Consistent
            } else {
                AgreementVerdict::Inconsistent
            },
            t_statistic: if exact {
                0.0
            } else if stats.mean > analytic_value {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            degrees_of_freedom: df,
            alpha,
        });
    }
    let se = (stats.sample_variance / n as f64).sqrt();
    let t = (stats.mean - analytic_value) / se;
    let critical = two_sided_t(1.0 - alpha, df as f64);
    let verdict = if t.abs() > critical {
        AgreementVerdict::Inconsistent
    } else {
        AgreementVerdict::Consistent
    };
    Ok(AgreementOutcome { verdict, t_statistic: t, degrees_of_freedom: df, alpha })
}
