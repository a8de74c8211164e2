//! Curvature-dimension constants and the convergence rates derived from them.
//!
//! For a step-2 Carnot group,
//!
//! ```text
//! κ  = sup_{|x|=1} Σⱼ Σₖ (Σᵢ γᵢⱼᵏ xᵢ)²
//! ρ₂ = ¼ inf_{|z|=1} Σᵢⱼ (Σₖ γᵢⱼᵏ zₖ)²
//! ```
//!
//! Both objectives are quadratic forms on the unit sphere, so κ is the top
//! eigenvalue of `Mᵢᵢ' = Σⱼₖ γᵢⱼᵏ γᵢ'ⱼᵏ` and 4ρ₂ the bottom eigenvalue of
//! `Nₖₗ = Σᵢⱼ γᵢⱼᵏ γᵢⱼˡ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::ValidatedSpec;
use crate::linalg::symmetric_eigen;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("rate λ_ε = {lambda} is not positive at ε = {epsilon}")]
    RateNotPositive { epsilon: f64, lambda: f64 },
    #[error("no ε gives a positive rate (ρ₁ = {0} ≤ 0)")]
    NoPositiveRate(f64),
    #[error("invalid constants: {0}")]
    Invalid(String),
}

impl ConstantsError {
    pub fn code(&self) -> &'static str {
        match self {
            ConstantsError::NonPositiveEpsilon(_) => "NonPositiveEpsilon",
            ConstantsError::RateNotPositive { .. } => "RateNotPositive",
            ConstantsError::NoPositiveRate(_) => "NoPositiveRate",
            ConstantsError::Invalid(_) => "InvalidConstants",
        }
    }
}

/// The tuple in `Γ₂ + εΓ₂ᶻ ≥ (ρ₁ − κ/ε)Γ + (ρ₂ + ρ₃ε)Γᶻ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdConstants {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub kappa: f64,
}

impl CdConstants {
    pub fn new(rho1: f64, rho2: f64, rho3: f64, kappa: f64) -> Result<Self, ConstantsError> {
        let c = CdConstants {
            rho1,
            rho2,
            rho3,
            kappa,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConstantsError> {
        if ![self.rho1, self.rho2, self.rho3, self.kappa]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(ConstantsError::Invalid("non-finite entry".into()));
        }
        if !(self.rho2 > 0.0) {
            return Err(ConstantsError::Invalid(format!("rho2 must be positive, got {}", self.rho2)));
        }
        if self.kappa < 0.0 {
            return Err(ConstantsError::Invalid(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Constants of `Δ_H − sE` on a Carnot group: the drift adds `sΓ` to Γ₂
    /// and `2sΓᶻ` to Γ₂ᶻ, giving `ρ₁ = s`, `ρ₃ = 2s`.
    pub fn carnot_ou(spec: &ValidatedSpec, s: f64) -> Self {
        CdConstants {
            rho1: s,
            rho2: rho2(spec),
            rho3: 2.0 * s,
            kappa: kappa(spec),
        }
    }

    /// `1 + 2κ/ρ₂`, the factor shared by the reverse inequalities and the
    /// Harnack bounds.
    pub fn reverse_factor(&self) -> f64 {
        1.0 + 2.0 * self.kappa / self.rho2
    }
}

/// `M` with `Mᵢᵢ' = Σⱼₖ γᵢⱼᵏ γᵢ'ⱼᵏ`.
pub fn kappa_matrix(spec: &ValidatedSpec) -> Vec<Vec<f64>> {
    let (n, m) = (spec.n(), spec.m());
    let mut mat = vec![vec![0.0; n]; n];
    for i in 0..n {
        for ip in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..m {
                    s += spec.structure_constant(i, j, k) * spec.structure_constant(ip, j, k);
                }
            }
            mat[i][ip] = s;
        }
    }
    mat
}

/// `N` with `Nₖₗ = Σᵢⱼ γᵢⱼᵏ γᵢⱼˡ`.
pub fn rho2_matrix(spec: &ValidatedSpec) -> Vec<Vec<f64>> {
    let (n, m) = (spec.n(), spec.m());
    let mut mat = vec![vec![0.0; m]; m];
    for k in 0..m {
        for l in 0..m {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += spec.structure_constant(i, j, k) * spec.structure_constant(i, j, l);
                }
            }
            mat[k][l] = s;
        }
    }
    mat
}

pub fn kappa(spec: &ValidatedSpec) -> f64 {
    symmetric_eigen(&kappa_matrix(spec)).max()
}

pub fn rho2(spec: &ValidatedSpec) -> f64 {
    0.25 * symmetric_eigen(&rho2_matrix(spec)).min()
}

/// `λ_ε = min{ρ₁ − κ/ε, ρ₂/ε + ρ₃}`.
pub fn lambda_eps(c: &CdConstants, epsilon: f64) -> Result<f64, ConstantsError> {
    if !(epsilon > 0.0) {
        return Err(ConstantsError::NonPositiveEpsilon(epsilon));
    }
    Ok((c.rho1 - c.kappa / epsilon).min(c.rho2 / epsilon + c.rho3))
}

/// `C = e (1 + 2λ_ε ε/ρ₂)(1 + 2κ/ρ₂)`.
pub fn prefactor_c(c: &CdConstants, epsilon: f64) -> Result<f64, ConstantsError> {
    let lambda = lambda_eps(c, epsilon)?;
    if !(lambda > 0.0) {
        return Err(ConstantsError::RateNotPositive { epsilon, lambda });
    }
    Ok(std::f64::consts::E * (1.0 + 2.0 * lambda * epsilon / c.rho2) * c.reverse_factor())
}

/// An ε together with the rate and prefactor it yields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePlan {
    pub epsilon: f64,
    pub lambda: f64,
    pub prefactor: f64,
}

impl RatePlan {
    pub fn at(c: &CdConstants, epsilon: f64) -> Result<Self, ConstantsError> {
        let prefactor = prefactor_c(c, epsilon)?;
        Ok(RatePlan {
            epsilon,
            lambda: lambda_eps(c, epsilon)?,
            prefactor,
        })
    }

    /// `ln C − 2λt`, the log of the contraction factor at time `t`.
    pub fn log_bound(&self, t: f64) -> f64 {
        self.prefactor.ln() - 2.0 * self.lambda * t
    }

    /// Earliest time the quantitative decay bounds apply, `1/(2λ_ε)`.
    pub fn onset(&self) -> f64 {
        1.0 / (2.0 * self.lambda)
    }
}

fn objective(c: &CdConstants, epsilon: f64, t: f64) -> f64 {
    match RatePlan::at(c, epsilon) {
        Ok(plan) => plan.log_bound(t),
        Err(_) => f64::INFINITY,
    }
}

/// Points on the log grid used by [`optimal_eps_for_time`].
pub const OPT_GRID_POINTS: usize = 400;

/// Range of ε searched, relative to the admissibility threshold `κ/ρ₁`.
pub fn eps_search_range(c: &CdConstants) -> (f64, f64) {
    let lo = if c.kappa > 0.0 {
        c.kappa / c.rho1
    } else {
        1e-9
    };
    (lo, lo.max(1.0) * 1e6)
}

/// Minimizes `ln C(ε) − 2λ_ε t` over admissible ε.
///
/// A log-spaced scan brackets the minimum, then golden-section search refines
/// it inside the bracket. Deterministic.
pub fn optimal_eps_for_time(c: &CdConstants, t: f64) -> Result<RatePlan, ConstantsError> {
    if !(c.rho1 > 0.0) {
        return Err(ConstantsError::NoPositiveRate(c.rho1));
    }
    let (lo, hi) = eps_search_range(c);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (1..=OPT_GRID_POINTS)
        .map(|i| llo + (lhi - llo) * i as f64 / OPT_GRID_POINTS as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&u| objective(c, u.exp(), t)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    if !values[best].is_finite() {
        return Err(ConstantsError::NoPositiveRate(c.rho1));
    }

    let mut a = if best == 0 { llo } else { grid[best - 1] };
    let mut b = if best + 1 == grid.len() { lhi } else { grid[best + 1] };
    let f = |u: f64| objective(c, u.exp(), t);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    let (u, fu) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let eps = if fu <= values[best] { u.exp() } else { grid[best].exp() };
    RatePlan::at(c, eps)
}
