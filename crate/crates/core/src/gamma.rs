//! Pointwise Γ-calculus for `L_s = Δ_H − sE`.
//!
//! All quantities are evaluated from a single Taylor jet of the test function:
//! first derivatives for Γ and Γᶻ, second for `L`, third for Γ₂ and Γ₂ᶻ.
//! Derived functions such as `Γ(f)` or `Lf` are never rebuilt as expressions;
//! they stay jets at the evaluation point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::CdConstants;
use crate::group::{Field, Point, ValidatedSpec};
use crate::jet::{eval_jet, eval_jet_coords, vf_apply, Expr, Jet, JetError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GammaError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("drift strength must be a finite non-negative number, got {0}")]
    NegativeDrift(f64),
    #[error("Lyapunov witness is {value} < 1 at {at:?}")]
    WBelowOne { value: f64, at: Vec<f64> },
    #[error("invalid region: {0}")]
    Region(String),
}

impl GammaError {
    pub fn code(&self) -> &'static str {
        match self {
            GammaError::Jet(e) => e.code(),
            GammaError::NonPositiveEpsilon(_) => "NonPositiveEpsilon",
            GammaError::NegativeDrift(_) => "NegativeDrift",
            GammaError::WBelowOne { .. } => "WBelowOne",
            GammaError::Region(_) => "InvalidRegion",
        }
    }
}

/// A group together with the drift strength of `L_s = Δ_H − sE`.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    spec: ValidatedSpec,
    s: f64,
}

impl OperatorContext {
    pub fn new(spec: ValidatedSpec, s: f64) -> Result<Self, GammaError> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(GammaError::NegativeDrift(s));
        }
        Ok(OperatorContext { spec, s })
    }

    pub fn spec(&self) -> &ValidatedSpec {
        &self.spec
    }

    pub fn drift(&self) -> f64 {
        self.s
    }

    /// Same group, different drift.
    pub fn with_drift(&self, s: f64) -> Result<Self, GammaError> {
        OperatorContext::new(self.spec.clone(), s)
    }

    pub fn horizontal(&self, f: &Jet) -> Result<Vec<Jet>, JetError> {
        (0..self.spec.n())
            .map(|i| vf_apply(&self.spec, Field::X(i), f))
            .collect()
    }

    pub fn vertical(&self, f: &Jet) -> Result<Vec<Jet>, JetError> {
        (0..self.spec.m())
            .map(|k| vf_apply(&self.spec, Field::Z(k), f))
            .collect()
    }

    /// Jet of `Γ(f, g) = Σᵢ Xᵢf Xᵢg`; one order lower than the inputs.
    pub fn gamma_jet(&self, f: &Jet, g: &Jet) -> Result<Jet, JetError> {
        bilinear(&self.horizontal(f)?, &self.horizontal(g)?, f)
    }

    /// Jet of `Γᶻ(f, g) = Σₖ Zₖf Zₖg`.
    pub fn gamma_z_jet(&self, f: &Jet, g: &Jet) -> Result<Jet, JetError> {
        bilinear(&self.vertical(f)?, &self.vertical(g)?, f)
    }

    /// Jet of `Δ_H f − s E f`; two orders lower.
    pub fn l_jet(&self, f: &Jet) -> Result<Jet, JetError> {
        if f.order() < 2 {
            return Err(JetError::OrderExhausted {
                needed: 2,
                have: f.order(),
            });
        }
        let mut acc = Jet::constant(f.center(), f.order() - 2, 0.0)?;
        for i in 0..self.spec.n() {
            let xi = vf_apply(&self.spec, Field::X(i), f)?;
            acc = acc.add(&vf_apply(&self.spec, Field::X(i), &xi)?);
        }
        if self.s != 0.0 {
            let ef = vf_apply(&self.spec, Field::Euler, f)?;
            acc = acc.sub(&ef.scale(self.s));
        }
        Ok(acc)
    }

    /// Γ, Γᶻ, Γ₂ and Γ₂ᶻ of `f` from one jet of order ≥ 3.
    pub fn snapshot(&self, f: &Jet) -> Result<GammaSnapshot, JetError> {
        if f.order() < 3 {
            return Err(JetError::OrderExhausted {
                needed: 3,
                have: f.order(),
            });
        }
        let f = f.truncate(3);
        let gamma = self.gamma_jet(&f, &f)?;
        let gamma_z = self.gamma_z_jet(&f, &f)?;
        let lf = self.l_jet(&f)?;
        let gamma2 = 0.5 * self.l_jet(&gamma)?.value() - self.gamma_jet(&f, &lf)?.value();
        let gamma2_z = 0.5 * self.l_jet(&gamma_z)?.value() - self.gamma_z_jet(&f, &lf)?.value();
        Ok(GammaSnapshot {
            gamma: gamma.value(),
            gamma_z: gamma_z.value(),
            gamma2,
            gamma2_z,
        })
    }

    fn jet(&self, f: &Expr, p: &Point, order: usize) -> Result<Jet, JetError> {
        eval_jet(f, p, order)
    }

    pub fn gamma(&self, f: &Expr, g: &Expr, p: &Point) -> Result<f64, GammaError> {
        let (jf, jg) = (self.jet(f, p, 1)?, self.jet(g, p, 1)?);
        Ok(self.gamma_jet(&jf, &jg)?.value())
    }

    pub fn gamma_z(&self, f: &Expr, g: &Expr, p: &Point) -> Result<f64, GammaError> {
        let (jf, jg) = (self.jet(f, p, 1)?, self.jet(g, p, 1)?);
        Ok(self.gamma_z_jet(&jf, &jg)?.value())
    }

    pub fn apply_l(&self, f: &Expr, p: &Point) -> Result<f64, GammaError> {
        Ok(self.l_jet(&self.jet(f, p, 2)?)?.value())
    }

    pub fn gamma2(&self, f: &Expr, p: &Point) -> Result<f64, GammaError> {
        Ok(self.snapshot(&self.jet(f, p, 3)?)?.gamma2)
    }

    pub fn gamma2_z(&self, f: &Expr, p: &Point) -> Result<f64, GammaError> {
        Ok(self.snapshot(&self.jet(f, p, 3)?)?.gamma2_z)
    }

    /// `Γ(f, Γᶻ(f)) − Γᶻ(f, Γ(f))`.
    pub fn check_a2(&self, f: &Expr, p: &Point) -> Result<f64, GammaError> {
        Ok(self.a2_parts(&self.jet(f, p, 2)?)?.residual())
    }

    pub fn a2_parts(&self, f: &Jet) -> Result<A2Parts, JetError> {
        let gz = self.gamma_z_jet(f, f)?;
        let g = self.gamma_jet(f, f)?;
        let f1 = f.truncate(1);
        Ok(A2Parts {
            lhs: self.gamma_jet(&f1, &gz)?.value(),
            rhs: self.gamma_z_jet(&f1, &g)?.value(),
        })
    }

    /// `Γ₂ + εΓ₂ᶻ − (ρ₁ − κ/ε)Γ − (ρ₂ + ρ₃ε)Γᶻ` at `p`.
    pub fn cd_slack(&self, f: &Expr, p: &Point, epsilon: f64, c: &CdConstants) -> Result<f64, GammaError> {
        let snap = self.snapshot(&self.jet(f, p, 3)?)?;
        snap.cd_slack(epsilon, c)
    }

    /// `½(L(fg) − g Lf − f Lg)`, straight from the definition.
    pub fn carre_oracle(&self, f: &Expr, g: &Expr, p: &Point) -> Result<f64, GammaError> {
        let (jf, jg) = (self.jet(f, p, 2)?, self.jet(g, p, 2)?);
        let lfg = self.l_jet(&jf.mul(&jg))?.value();
        let lf = self.l_jet(&jf)?.value();
        let lg = self.l_jet(&jg)?.value();
        Ok(0.5 * (lfg - jg.value() * lf - jf.value() * lg))
    }

    /// Sup over a grid of `(Γ(W) + Γᶻ(W))/W²` and of `LW/W`.
    pub fn check_lyapunov(&self, w: &Expr, region: &Region, grid: usize) -> Result<LyapunovRatios, GammaError> {
        region.validate(self.spec.dim())?;
        if grid < 2 {
            return Err(GammaError::Region("grid resolution must be at least 2".into()));
        }
        let d = self.spec.dim();
        let n = self.spec.n();
        let total = grid.pow(d as u32);
        let ratios: Result<Vec<(f64, f64)>, GammaError> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let mut rest = flat;
                let coords: Vec<f64> = (0..d)
                    .map(|a| {
                        let i = rest % grid;
                        rest /= grid;
                        let (lo, hi) = (region.lower[a], region.upper[a]);
                        lo + (hi - lo) * i as f64 / (grid - 1) as f64
                    })
                    .collect();
                let j = eval_jet_coords(w, &coords, n, 2)?;
                let wv = j.value();
                if !(wv >= 1.0) {
                    return Err(GammaError::WBelowOne { value: wv, at: coords });
                }
                let g = self.gamma_jet(&j, &j)?.value() + self.gamma_z_jet(&j, &j)?.value();
                let lw = self.l_jet(&j)?.value();
                Ok((g / (wv * wv), lw / wv))
            })
            .collect();
        let ratios = ratios?;
        let sup = |sel: fn(&(f64, f64)) -> f64| ratios.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        Ok(LyapunovRatios {
            gradient_ratio: sup(|r| r.0),
            generator_ratio: sup(|r| r.1),
            points: total,
        })
    }
}

fn bilinear(a: &[Jet], b: &[Jet], like: &Jet) -> Result<Jet, JetError> {
    let order = a.first().map(|j| j.order()).unwrap_or(0);
    let mut acc = Jet::constant(like.center(), order, 0.0)?;
    for (x, y) in a.iter().zip(b) {
        acc = acc.add(&x.mul(y));
    }
    Ok(acc)
}

/// The four Γ-quantities of one function at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSnapshot {
    pub gamma: f64,
    pub gamma_z: f64,
    pub gamma2: f64,
    pub gamma2_z: f64,
}

impl GammaSnapshot {
    pub fn cd_slack(&self, epsilon: f64, c: &CdConstants) -> Result<f64, GammaError> {
        if !(epsilon > 0.0) {
            return Err(GammaError::NonPositiveEpsilon(epsilon));
        }
        Ok(self.gamma2 + epsilon * self.gamma2_z
            - (c.rho1 - c.kappa / epsilon) * self.gamma
            - (c.rho2 + c.rho3 * epsilon) * self.gamma_z)
    }

    /// Magnitude of the terms entering [`GammaSnapshot::cd_slack`], for
    /// relative rounding tolerances.
    pub fn scale(&self, epsilon: f64, c: &CdConstants) -> f64 {
        self.gamma2.abs()
            + epsilon * self.gamma2_z.abs()
            + (c.rho1 - c.kappa / epsilon).abs() * self.gamma
            + (c.rho2 + c.rho3 * epsilon).abs() * self.gamma_z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2Parts {
    pub lhs: f64,
    pub rhs: f64,
}

impl A2Parts {
    pub fn residual(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// Axis-aligned box in ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn cube(dim: usize, half_width: f64) -> Self {
        Region {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    fn validate(&self, dim: usize) -> Result<(), GammaError> {
        if self.lower.len() != dim || self.upper.len() != dim {
            return Err(GammaError::Region(format!("expected {dim} bounds per side")));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(GammaError::Region("lower bound exceeds upper bound".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRatios {
    /// `sup (Γ(W) + Γᶻ(W)) / W²`.
    pub gradient_ratio: f64,
    /// `sup LW / W`.
    pub generator_ratio: f64,
    pub points: usize,
}
