//! Monte Carlo estimates and inequality verdicts.

use serde::{Deserialize, Serialize};

/// Two-sided normal quantile for 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A mean with its 95% normal half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Estimate {
    /// A value known without sampling error.
    pub fn exact(value: f64) -> Self {
        Estimate {
            mean: value,
            half_width: 0.0,
            n: 1,
        }
    }

    /// Sample mean of `values` with a CLT interval. Summation is serial and in
    /// index order, so the result does not depend on how `values` was built.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                half_width: f64::INFINITY,
                n: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = if n < 2 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            Z95 * (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        };
        Estimate { mean, half_width, n }
    }

    /// Mean of `values` centred on `center`, for delta-method intervals whose
    /// point estimate is computed separately.
    pub fn with_influence(center: f64, influence: &[f64]) -> Self {
        let spread = Estimate::from_samples(influence);
        Estimate {
            mean: center,
            half_width: spread.half_width,
            n: spread.n,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width
    }

    pub fn scale(&self, c: f64) -> Self {
        Estimate {
            mean: c * self.mean,
            half_width: c.abs() * self.half_width,
            n: self.n,
        }
    }

    /// `self − other` for independent estimates, widths in quadrature.
    pub fn minus(&self, other: &Estimate) -> Self {
        Estimate {
            mean: self.mean - other.mean,
            half_width: self.half_width.hypot(other.half_width),
            n: self.n.min(other.n),
        }
    }

    pub fn plus(&self, other: &Estimate) -> Self {
        Estimate {
            mean: self.mean + other.mean,
            half_width: self.half_width.hypot(other.half_width),
            n: self.n.min(other.n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    HoldsWithinCi,
    Violated,
}

impl Verdict {
    /// `slack ≥ 0` holds; `slack + tolerance ≥ 0` holds within the interval.
    pub fn classify(slack: f64, tolerance: f64) -> Verdict {
        if slack >= 0.0 {
            Verdict::Holds
        } else if slack + tolerance >= 0.0 {
            Verdict::HoldsWithinCi
        } else {
            Verdict::Violated
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::HoldsWithinCi => "holds-within-CI",
            Verdict::Violated => "violated",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters a check was run with; absent ones are omitted from JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckParams {
    pub s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
}

/// `lhs ≤ rhs`, judged with Monte Carlo and discretization uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// `rhs − lhs`.
    pub slack: f64,
    /// Sampling half-widths in quadrature plus any deterministic error bound.
    pub tolerance: f64,
    pub verdict: Verdict,
    pub params: CheckParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(name: &str, lhs: Estimate, rhs: Estimate, extra_error: f64, params: CheckParams) -> Self {
        let slack = rhs.mean - lhs.mean;
        let tolerance = lhs.half_width.hypot(rhs.half_width) + extra_error;
        CheckReport {
            name: name.to_string(),
            lhs,
            rhs,
            slack,
            tolerance,
            verdict: Verdict::classify(slack, tolerance),
            params,
            notes: Vec::new(),
        }
    }

    /// Builds a report from a slack whose interval was computed jointly,
    /// e.g. from paired samples.
    pub fn from_slack(
        name: &str,
        lhs: Estimate,
        rhs: Estimate,
        slack: Estimate,
        extra_error: f64,
        params: CheckParams,
    ) -> Self {
        let tolerance = slack.half_width + extra_error;
        CheckReport {
            name: name.to_string(),
            lhs,
            rhs,
            slack: slack.mean,
            tolerance,
            verdict: Verdict::classify(slack.mean, tolerance),
            params,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn is_violated(&self) -> bool {
        self.verdict == Verdict::Violated
    }
}
