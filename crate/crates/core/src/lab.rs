//! Monte Carlo checks of the functional inequalities satisfied by `Q_t`.
//!
//! Every check produces a [`CheckReport`] comparing `lhs ≤ rhs`. When both
//! sides are built from the same sample paths the slack interval is computed
//! from paired per-path influence values; otherwise half-widths are combined
//! in quadrature. Finite-difference stencil error is added linearly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{lambda_eps, prefactor_c, CdConstants, ConstantsError};
use crate::corpus::CorpusConfig;
use crate::distance::{distance, exp_moment, invariant_pair_distances, BracketedEstimate, DistanceError};
use crate::gamma::{GammaError, OperatorContext};
use crate::group::{Point, ValidatedSpec};
use crate::jet::{eval_jet, eval_jet_coords, parse_expr, Expr, ExprError, JetError};
use crate::report::{CheckParams, CheckReport, Estimate};
use crate::rng::derive_seed;
use crate::sim::{
    estimate_entropy_decay, estimate_gradient_decay, estimate_variance_decay, frame_weights,
    invariant_columns, mehler_paths, stencil_samples, SimConfig, SimError,
};

/// Absolute tolerance for pointwise curvature slack.
pub const CD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gamma(#[from] GammaError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl LabError {
    pub fn code(&self) -> &'static str {
        match self {
            LabError::Sim(e) => e.code(),
            LabError::Gamma(e) => e.code(),
            LabError::Distance(e) => e.code(),
            LabError::Constants(e) => e.code(),
            LabError::Jet(e) => e.code(),
            LabError::Expr(e) => e.code(),
            LabError::Precondition(_) => "Precondition",
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64], m: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// `E[a] − (E[u])²` from paired columns, with the `Var/N` bias of the
/// squared mean removed. Returns the estimate and per-path influence.
fn variance_parts(u: &[f64], sq: &[f64]) -> (f64, Vec<f64>) {
    let nf = u.len() as f64;
    let m = mean(u);
    let value = mean(sq) - m * m + sample_var(u, m) / nf;
    let influence = u.iter().zip(sq).map(|(a, b)| b - 2.0 * m * a).collect();
    (value, influence)
}

/// `E[u ln u] − E[u] ln E[u]` from paired columns, bias-corrected.
fn entropy_parts(u: &[f64], ulnu: &[f64]) -> (f64, Vec<f64>) {
    let nf = u.len() as f64;
    let m = mean(u);
    let value = mean(ulnu) - m * m.ln() + sample_var(u, m) / (2.0 * nf * m);
    let influence = u.iter().zip(ulnu).map(|(a, b)| b - (m.ln() + 1.0) * a).collect();
    (value, influence)
}

fn paired(values: &[f64], c: f64) -> Vec<f64> {
    values.iter().map(|v| c * v).collect()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Least-squares slope of `ln value` against `t`, over positive values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `θ` in `value ≈ A e^{−θt}`.
    pub exponent: f64,
    /// `2λ_ε`, the guaranteed rate.
    pub reference: f64,
    pub points: usize,
}

pub fn fit_decay_exponent(curve: &[(f64, Estimate)], reference: f64) -> DecayFit {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(_, e)| e.mean > 0.0)
        .map(|(t, e)| (*t, e.mean.ln()))
        .collect();
    let k = pts.len() as f64;
    let exponent = if pts.len() < 2 {
        f64::NAN
    } else {
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        -sxy / sxx
    };
    DecayFit {
        exponent,
        reference,
        points: pts.len(),
    }
}

/// True when no step of the curve increases by more than its combined
/// half-width.
pub fn nonincreasing_within_ci(curve: &[(f64, Estimate)]) -> bool {
    curve
        .windows(2)
        .all(|w| w[1].1.mean - w[0].1.mean <= w[0].1.half_width.hypot(w[1].1.half_width))
}

/// `N_t` at one time, with the integrability threshold it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtEstimate {
    pub t: f64,
    pub value: BracketedEstimate,
    /// Exponent `c = βC/((α−1)t)` in `∬ exp(c d²)`.
    pub c: f64,
}

/// A group, a drift, its curvature constants and sampler settings.
#[derive(Debug, Clone)]
pub struct Lab {
    ctx: OperatorContext,
    consts: CdConstants,
    cfg: SimConfig,
}

impl Lab {
    pub fn new(spec: ValidatedSpec, s: f64, consts: CdConstants, cfg: SimConfig) -> Result<Self, LabError> {
        consts.validate()?;
        cfg.validate()?;
        if !(s > 0.0) {
            return Err(SimError::NonPositiveDrift(s).into());
        }
        Ok(Lab {
            ctx: OperatorContext::new(spec, s)?,
            consts,
            cfg,
        })
    }

    /// The group's own constants at drift `s`.
    pub fn carnot(spec: ValidatedSpec, s: f64, cfg: SimConfig) -> Result<Self, LabError> {
        let c = CdConstants::carnot_ou(&spec, s);
        Lab::new(spec, s, c, cfg)
    }

    pub fn spec(&self) -> &ValidatedSpec {
        self.ctx.spec()
    }

    pub fn s(&self) -> f64 {
        self.ctx.drift()
    }

    pub fn constants(&self) -> &CdConstants {
        &self.consts
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn with_config(&self, cfg: SimConfig) -> Self {
        Lab { cfg, ..self.clone() }
    }

    pub fn parse(&self, f: &str) -> Result<Expr, LabError> {
        Ok(parse_expr(f, self.spec().n(), self.spec().m())?)
    }

    fn lambda(&self, epsilon: f64) -> Result<f64, LabError> {
        let l = lambda_eps(&self.consts, epsilon)?;
        if !(l > 0.0) {
            return Err(ConstantsError::RateNotPositive { epsilon, lambda: l }.into());
        }
        Ok(l)
    }

    fn params(&self) -> CheckParams {
        CheckParams {
            s: self.s(),
            ..CheckParams::default()
        }
    }

    fn point(&self, x: &Point) -> Result<Vec<f64>, LabError> {
        if x.x.len() != self.spec().n() || x.z.len() != self.spec().m() {
            return Err(SimError::PointShape {
                n: self.spec().n(),
                m: self.spec().m(),
                got_n: x.x.len(),
                got_m: x.z.len(),
            }
            .into());
        }
        Ok(x.coords())
    }

    /// `Γ(f) + εΓᶻ(f)` at flat coordinates.
    fn energy_density(&self, f: &Expr, y: &[f64], epsilon: f64) -> Result<f64, SimError> {
        let j = eval_jet_coords(f, y, self.spec().n(), 1)?;
        let g = self.ctx.gamma_jet(&j, &j).map_err(GammaError::from)?.value();
        let gz = self.ctx.gamma_z_jet(&j, &j).map_err(GammaError::from)?.value();
        Ok(g + epsilon * gz)
    }

    /// Columns `[f, f², Γ(f) + εΓᶻ(f)]`.
    fn poincare_integrand<'a>(
        &'a self,
        f: &'a Expr,
        epsilon: f64,
    ) -> impl Fn(&[f64], &mut [f64]) -> Result<(), SimError> + Sync + 'a {
        move |y, out| {
            let v = f.eval(y, self.spec().n());
            if !v.is_finite() {
                return Err(SimError::NonFinite { at: y.to_vec() });
            }
            out[0] = v;
            out[1] = v * v;
            out[2] = self.energy_density(f, y, epsilon)?;
            Ok(())
        }
    }

    /// Columns `[f, f ln f, (Γ(f) + εΓᶻ(f))/f]` for positive `f`.
    fn logsob_integrand<'a>(
        &'a self,
        f: &'a Expr,
        epsilon: f64,
    ) -> impl Fn(&[f64], &mut [f64]) -> Result<(), SimError> + Sync + 'a {
        move |y, out| {
            let v = f.eval(y, self.spec().n());
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::NonPositiveFunction { value: v, at: y.to_vec() });
            }
            out[0] = v;
            out[1] = v * v.ln();
            out[2] = self.energy_density(f, y, epsilon)? / v;
            Ok(())
        }
    }

    /// `Q_t(f²) − (Q_t f)² ≤ ((1 − e^{−2λ_ε t})/λ_ε) Q_t(Γ(f) + εΓᶻ(f))` at `x`.
    pub fn check_poincare(&self, f: &Expr, t: f64, x: &Point, epsilon: f64) -> Result<CheckReport, LabError> {
        let lambda = self.lambda(epsilon)?;
        let coords = self.point(x)?;
        let cols = mehler_paths(self.spec(), self.s(), t, &coords, &self.cfg, 3, self.poincare_integrand(f, epsilon))?;
        let k = -(-2.0 * lambda * t).exp_m1() / lambda;
        let params = CheckParams {
            epsilon: Some(epsilon),
            t: Some(t),
            f: Some(f.to_string()),
            x: Some(coords),
            ..self.params()
        };
        Ok(variance_report("poincare", &cols, k, params))
    }

    /// `∫f² dμ − (∫f dμ)² ≤ (1/λ_ε) ∫(Γ(f) + εΓᶻ(f)) dμ`.
    pub fn check_poincare_mu(&self, f: &Expr, epsilon: f64) -> Result<CheckReport, LabError> {
        let lambda = self.lambda(epsilon)?;
        let cols = invariant_columns(self.spec(), self.s(), &self.cfg, 3, self.poincare_integrand(f, epsilon))?;
        let params = CheckParams {
            epsilon: Some(epsilon),
            f: Some(f.to_string()),
            ..self.params()
        };
        Ok(variance_report("poincare-mu", &cols, 1.0 / lambda, params))
    }

    /// `Q_t(f ln f) − Q_t f ln Q_t f ≤ ((1 − e^{−2λ_ε t})/(2λ_ε)) Q_t((Γ(f) + εΓᶻ(f))/f)`.
    pub fn check_logsob(&self, f: &Expr, t: f64, x: &Point, epsilon: f64) -> Result<CheckReport, LabError> {
        let lambda = self.lambda(epsilon)?;
        let coords = self.point(x)?;
        let cols = mehler_paths(self.spec(), self.s(), t, &coords, &self.cfg, 3, self.logsob_integrand(f, epsilon))?;
        let k = -(-2.0 * lambda * t).exp_m1() / (2.0 * lambda);
        let params = CheckParams {
            epsilon: Some(epsilon),
            t: Some(t),
            f: Some(f.to_string()),
            x: Some(coords),
            ..self.params()
        };
        Ok(entropy_report("logsob", &cols, k, params))
    }

    /// `∫f ln f dμ − ∫f dμ ln ∫f dμ ≤ (1/(2λ_ε)) ∫(Γ(f) + εΓᶻ(f))/f dμ`.
    pub fn check_logsob_mu(&self, f: &Expr, epsilon: f64) -> Result<CheckReport, LabError> {
        let lambda = self.lambda(epsilon)?;
        let cols = invariant_columns(self.spec(), self.s(), &self.cfg, 3, self.logsob_integrand(f, epsilon))?;
        let params = CheckParams {
            epsilon: Some(epsilon),
            f: Some(f.to_string()),
            ..self.params()
        };
        Ok(entropy_report("logsob-mu", &cols, 0.5 / lambda, params))
    }

    fn require_positive_time(t: f64) -> Result<(), LabError> {
        if !(t > 0.0) {
            return Err(LabError::Precondition(format!("t must be positive, got {t}")));
        }
        Ok(())
    }

    /// `Γ(Q_t f) + ρ₂t Γᶻ(Q_t f) ≤ (1/2t)(1 + 2κ/ρ₂)[Q_t(f²) − (Q_t f)²]` at `x`.
    pub fn check_reverse_poincare(&self, f: &Expr, t: f64, x: &Point) -> Result<CheckReport, LabError> {
        Self::require_positive_time(t)?;
        let coords = self.point(x)?;
        let st = stencil_samples(self.spec(), self.s(), f, t, x, &self.cfg)?;
        let weights = frame_weights(self.spec(), self.consts.rho2 * t);
        let (grad, grad_inf) = st.weighted_gradient_with_influence(&weights);
        let k = self.consts.reverse_factor() / (2.0 * t);
        let (var, var_inf) = variance_parts(&st.base, &st.base_sq);
        let rhs_inf = paired(&var_inf, k);
        let rhs = Estimate::with_influence(k * var, &rhs_inf);
        let slack = Estimate::with_influence(k * var - grad.value.mean, &diff(&rhs_inf, &grad_inf));
        let params = CheckParams {
            t: Some(t),
            f: Some(f.to_string()),
            x: Some(coords),
            ..self.params()
        };
        Ok(CheckReport::from_slack("reverse-poincare", grad.value, rhs, slack, grad.stencil_error, params)
            .with_note(format!("stencil error {:.3e}", grad.stencil_error)))
    }

    /// `Q_t f Γ(ln Q_t f) + ρ₂t Q_t f Γᶻ(ln Q_t f) ≤ (1/t)(1 + 2κ/ρ₂)[Q_t(f ln f) − Q_t f ln Q_t f]`.
    pub fn check_reverse_logsob(&self, f: &Expr, t: f64, x: &Point) -> Result<CheckReport, LabError> {
        Self::require_positive_time(t)?;
        let coords = self.point(x)?;
        let st = stencil_samples(self.spec(), self.s(), f, t, x, &self.cfg)?;
        if let Some(i) = st.base_entropy.iter().position(|v| !v.is_finite()) {
            return Err(SimError::NonPositiveFunction {
                value: st.base[i],
                at: coords,
            }
            .into());
        }
        let weights = frame_weights(self.spec(), self.consts.rho2 * t);
        let (grad, grad_inf) = st.weighted_gradient_with_influence(&weights);
        let u = mean(&st.base);
        // Γ(ln v)·v = Γ(v)/v
        let g = grad.value.mean;
        let lhs_val = g / u;
        let lhs_inf: Vec<f64> = grad_inf
            .iter()
            .zip(&st.base)
            .map(|(gi, b)| gi / u - g * (b - u) / (u * u))
            .collect();
        let k = self.consts.reverse_factor() / t;
        let (ent, ent_inf) = entropy_parts(&st.base, &st.base_entropy);
        let rhs_inf = paired(&ent_inf, k);
        let lhs = Estimate::with_influence(lhs_val, &lhs_inf);
        let rhs = Estimate::with_influence(k * ent, &rhs_inf);
        let slack = Estimate::with_influence(k * ent - lhs_val, &diff(&rhs_inf, &lhs_inf));
        let stencil = grad.stencil_error / u;
        let params = CheckParams {
            t: Some(t),
            f: Some(f.to_string()),
            x: Some(coords),
            ..self.params()
        };
        Ok(CheckReport::from_slack("reverse-logsob", lhs, rhs, slack, stencil, params)
            .with_note(format!("stencil error {stencil:.3e}")))
    }

    /// `Γ(Q_t f) + εΓᶻ(Q_t f) ≤ e^{−2λ_ε t} Q_t(Γ(f) + εΓᶻ(f))` at `x`.
    pub fn check_gradient_decay(&self, f: &Expr, t: f64, x: &Point, epsilon: f64) -> Result<CheckReport, LabError> {
        let lambda = self.lambda(epsilon)?;
        Ok(estimate_gradient_decay(self.spec(), self.s(), f, t, x, epsilon, lambda, &self.cfg)?)
    }

    fn distance_upper(&self, x: &Point, y: &Point) -> Result<(f64, bool), LabError> {
        let d = distance(self.spec(), x, y)?;
        Ok((d.upper, d.is_exact()))
    }

    /// `(Q_t f)^α(x) ≤ Q_t(f^α)(y) exp((α/(α−1)) ((1 + 2κ/ρ₂)/(4t)) d²(x, y))`.
    pub fn check_wang_harnack(&self, f: &Expr, alpha: f64, t: f64, x: &Point, y: &Point) -> Result<CheckReport, LabError> {
        Self::require_positive_time(t)?;
        if !(alpha > 1.0) {
            return Err(LabError::Precondition(format!("alpha must exceed 1, got {alpha}")));
        }
        let (cx, cy) = (self.point(x)?, self.point(y)?);
        let n = self.spec().n();
        let nonneg = |y: &[f64], out: &mut [f64]| -> Result<(), SimError> {
            let v = f.eval(y, n);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SimError::NonPositiveFunction { value: v, at: y.to_vec() });
            }
            out[0] = v;
            out[1] = v.powf(alpha);
            Ok(())
        };
        let at_x = mehler_paths(self.spec(), self.s(), t, &cx, &self.cfg, 2, nonneg)?;
        let at_y = mehler_paths(self.spec(), self.s(), t, &cy, &self.cfg, 2, nonneg)?;
        let (d, exact) = self.distance_upper(x, y)?;
        let weight = (alpha / (alpha - 1.0) * self.consts.reverse_factor() / (4.0 * t) * d * d).exp();
        let u = &at_x[0];
        let m = mean(u);
        let nf = u.len() as f64;
        let bias = 0.5 * alpha * (alpha - 1.0) * m.powf(alpha - 2.0) * sample_var(u, m) / nf;
        let lhs_val = m.powf(alpha) - if m > 0.0 { bias } else { 0.0 };
        let slope = alpha * m.powf(alpha - 1.0);
        let lhs_inf: Vec<f64> = u.iter().map(|v| slope * v).collect();
        let rhs_inf = paired(&at_y[1], weight);
        let rhs_val = weight * mean(&at_y[1]);
        let lhs = Estimate::with_influence(lhs_val, &lhs_inf);
        let rhs = Estimate::with_influence(rhs_val, &rhs_inf);
        let slack = Estimate::with_influence(rhs_val - lhs_val, &diff(&rhs_inf, &lhs_inf));
        let params = CheckParams {
            alpha: Some(alpha),
            t: Some(t),
            f: Some(f.to_string()),
            x: Some(cx),
            y: Some(cy),
            ..self.params()
        };
        let report = CheckReport::from_slack("wang-harnack", lhs, rhs, slack, 0.0, params);
        Ok(if exact {
            report
        } else {
            report.with_note("distance upper bound used; verdict may over-accept")
        })
    }

    /// `Q_t(ln f)(x) ≤ ln Q_t f(y) + ((1 + 2κ/ρ₂)/(4t)) d²(x, y)`.
    pub fn check_log_harnack(&self, f: &Expr, t: f64, x: &Point, y: &Point) -> Result<CheckReport, LabError> {
        Self::require_positive_time(t)?;
        let (cx, cy) = (self.point(x)?, self.point(y)?);
        let n = self.spec().n();
        let positive = |y: &[f64], out: &mut [f64]| -> Result<(), SimError> {
            let v = f.eval(y, n);
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::NonPositiveFunction { value: v, at: y.to_vec() });
            }
            out[0] = v;
            out[1] = v.ln();
            Ok(())
        };
        let at_x = mehler_paths(self.spec(), self.s(), t, &cx, &self.cfg, 2, positive)?;
        let at_y = mehler_paths(self.spec(), self.s(), t, &cy, &self.cfg, 2, positive)?;
        let (d, exact) = self.distance_upper(x, y)?;
        let cost = self.consts.reverse_factor() / (4.0 * t) * d * d;
        let lhs_val = mean(&at_x[1]);
        let u = &at_y[0];
        let m = mean(u);
        let nf = u.len() as f64;
        let rhs_val = m.ln() + sample_var(u, m) / (2.0 * nf * m * m) + cost;
        let rhs_inf: Vec<f64> = u.iter().map(|v| v / m).collect();
        let lhs = Estimate::from_samples(&at_x[1]);
        let rhs = Estimate::with_influence(rhs_val, &rhs_inf);
        let slack = Estimate::with_influence(rhs_val - lhs_val, &diff(&rhs_inf, &at_x[1]));
        let params = CheckParams {
            t: Some(t),
            f: Some(f.to_string()),
            x: Some(cx),
            y: Some(cy),
            ..self.params()
        };
        let report = CheckReport::from_slack("log-harnack", lhs, rhs, slack, 0.0, params);
        Ok(if exact {
            report
        } else {
            report.with_note("distance upper bound used; verdict may over-accept")
        })
    }

    /// `N_t = ∬ exp((β/(α−1)) C d²(x, y)/t) dμ dμ` with `C = 1 + 2κ/ρ₂`, on
    /// a time grid. The same pairs are used at every `t`.
    #[allow(non_snake_case)]
    pub fn estimate_Nt(&self, alpha: f64, beta: f64, times: &[f64]) -> Result<Vec<NtEstimate>, LabError> {
        if !(beta > alpha && alpha > 1.0) {
            return Err(LabError::Precondition(format!("need β > α > 1, got α = {alpha}, β = {beta}")));
        }
        if times.iter().any(|t| !(*t > 0.0)) {
            return Err(LabError::Precondition("times must be positive".into()));
        }
        let (pairs, method) = invariant_pair_distances(self.spec(), self.s(), &self.cfg)?;
        Ok(times
            .iter()
            .map(|&t| {
                let c = beta / (alpha - 1.0) * self.consts.reverse_factor() / t;
                NtEstimate {
                    t,
                    value: exp_moment(&pairs, method, c),
                    c,
                }
            })
            .collect())
    }

    /// Time beyond which `N_t` is finite when `E_{c₀}` is.
    pub fn nt_threshold(&self, alpha: f64, beta: f64, c0: f64) -> f64 {
        beta * self.consts.reverse_factor() / ((alpha - 1.0) * c0)
    }

    /// `‖Q_t f‖_β ≤ N_t^{1/β} ‖f‖_α` in `L^p(μ)`.
    pub fn check_hyperbound(&self, f: &Expr, alpha: f64, beta: f64, t: f64) -> Result<CheckReport, LabError> {
        let nt = self.estimate_Nt(alpha, beta, &[t])?[0];
        let n = self.spec().n();
        let abs_pow = |y: &[f64], out: &mut [f64]| -> Result<(), SimError> {
            let v = f.eval(y, n);
            if !v.is_finite() {
                return Err(SimError::NonFinite { at: y.to_vec() });
            }
            out[0] = v.abs().powf(alpha);
            Ok(())
        };
        let norm_alpha = invariant_columns(self.spec(), self.s(), &self.cfg, 1, abs_pow)?;
        let fa = Estimate::from_samples(&norm_alpha[0]);
        // ∫ |Q_t f|^β dμ by nested sampling with the inner-noise bias removed
        let inner = self.cfg;
        let moments = nested_power(self.spec(), self.s(), f, t, beta, &inner)?;
        let qb = Estimate::from_samples(&moments);
        let lhs = power_root(&qb, beta);
        let rhs_norm = power_root(&fa, alpha);
        let nt_root = power_root(&nt.value.lower, beta);
        let rhs = Estimate {
            mean: nt_root.mean * rhs_norm.mean,
            half_width: (nt_root.half_width * rhs_norm.mean).hypot(nt_root.mean * rhs_norm.half_width),
            n: rhs_norm.n,
        };
        let params = CheckParams {
            alpha: Some(alpha),
            beta: Some(beta),
            t: Some(t),
            f: Some(f.to_string()),
            ..self.params()
        };
        let mut report = CheckReport::new("hyperbound", lhs, rhs, 0.0, params);
        if nt.value.heavy_tail {
            report = report.with_note(format!(
                "N_t sample is heavy-tailed (largest term {:.0}% of the sum); the estimate understates N_t",
                100.0 * nt.value.max_share
            ));
        }
        Ok(report)
    }

    fn entropy_pre(&self, epsilon: f64, times: &[f64]) -> Result<(f64, f64, Vec<f64>), LabError> {
        let lambda = self.lambda(epsilon)?;
        let c = prefactor_c(&self.consts, epsilon)?;
        let mut grid = vec![0.0];
        grid.extend(times.iter().copied().filter(|t| *t > 0.0));
        Ok((lambda, c, grid))
    }

    /// `Ent_μ(Q_t f) ≤ C e^{−2λ_ε t} Ent_μ(f)` on a time grid, plus the
    /// fitted decay exponent.
    pub fn check_entropy_decay(&self, f: &Expr, times: &[f64], epsilon: f64) -> Result<(Vec<CheckReport>, DecayFit), LabError> {
        let (lambda, c, grid) = self.entropy_pre(epsilon, times)?;
        let curve = estimate_entropy_decay(self.spec(), self.s(), f, &grid, &self.cfg)?;
        Ok(self.contraction_reports("entropy-decay", f, &curve, lambda, c, epsilon))
    }

    /// `‖Q_t f − ∫f dμ‖² ≤ C e^{−2λ_ε t} ‖f − ∫f dμ‖²` on a time grid, plus
    /// the fitted decay exponent.
    pub fn check_l2_decay(&self, f: &Expr, times: &[f64], epsilon: f64) -> Result<(Vec<CheckReport>, DecayFit), LabError> {
        let (lambda, c, grid) = self.entropy_pre(epsilon, times)?;
        let curve = estimate_variance_decay(self.spec(), self.s(), f, &grid, &self.cfg)?;
        Ok(self.contraction_reports("l2-decay", f, &curve, lambda, c, epsilon))
    }

    fn contraction_reports(
        &self,
        name: &str,
        f: &Expr,
        curve: &[(f64, Estimate)],
        lambda: f64,
        c: f64,
        epsilon: f64,
    ) -> (Vec<CheckReport>, DecayFit) {
        let start = curve[0].1;
        let onset = 0.5 / lambda;
        let reports = curve[1..]
            .iter()
            .map(|(t, e)| {
                let rhs = start.scale(c * (-2.0 * lambda * t).exp());
                let params = CheckParams {
                    epsilon: Some(epsilon),
                    t: Some(*t),
                    f: Some(f.to_string()),
                    ..self.params()
                };
                let r = CheckReport::new(name, *e, rhs, 0.0, params);
                if *t < onset {
                    r.with_note(format!("t below 1/(2λ_ε) = {onset}; bound not guaranteed here"))
                } else {
                    r
                }
            })
            .collect();
        (reports, fit_decay_exponent(curve, 2.0 * lambda))
    }

    /// `Var_μ(Q_t f) ≤ (e^{−2λ_ε t}/λ_ε) ∫(Γ(f) + εΓᶻ(f)) dμ` on a time grid.
    pub fn check_variance_energy(&self, f: &Expr, times: &[f64], epsilon: f64) -> Result<(Vec<(f64, Estimate)>, Vec<CheckReport>), LabError> {
        let lambda = self.lambda(epsilon)?;
        let curve = estimate_variance_decay(self.spec(), self.s(), f, times, &self.cfg)?;
        let energy = invariant_columns(self.spec(), self.s(), &self.cfg, 1, |y, out| {
            out[0] = self.energy_density(f, y, epsilon)?;
            Ok(())
        })?;
        let energy = Estimate::from_samples(&energy[0]);
        let reports = curve
            .iter()
            .map(|(t, v)| {
                let rhs = energy.scale((-2.0 * lambda * t).exp() / lambda);
                let params = CheckParams {
                    epsilon: Some(epsilon),
                    t: Some(*t),
                    f: Some(f.to_string()),
                    ..self.params()
                };
                CheckReport::new("variance-energy", *v, rhs, 0.0, params)
            })
            .collect();
        Ok((curve, reports))
    }

    /// Minimum of `Γ₂ + εΓ₂ᶻ − (ρ₁ − κ/ε)Γ − (ρ₂ + ρ₃ε)Γᶻ` over a corpus.
    pub fn check_cd_corpus(&self, corpus: &CorpusConfig) -> Result<(CheckReport, Vec<SlackRow>), LabError> {
        let (n, m) = (self.spec().n(), self.spec().m());
        let rows: Result<Vec<SlackRow>, LabError> = (0..corpus.samples)
            .into_par_iter()
            .map(|id| {
                let sample = corpus.sample(n, m, id);
                let jet = eval_jet(&sample.f, &sample.point, 3)?;
                let snap = self.ctx.snapshot(&jet)?;
                Ok(SlackRow {
                    sample_id: id,
                    epsilon: sample.epsilon,
                    slack: snap.cd_slack(sample.epsilon, &self.consts)?,
                })
            })
            .collect();
        let rows = rows?;
        let worst = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
        let worst = if rows.is_empty() { 0.0 } else { worst };
        let report = CheckReport::new(
            "cd-slack",
            Estimate::exact(0.0),
            Estimate::exact(worst),
            CD_TOLERANCE,
            self.params(),
        )
        .with_note(format!("{} samples, minimum slack {worst:.3e}", rows.len()));
        Ok((report, rows))
    }

    /// Largest `|Γ(f, Γᶻ(f)) − Γᶻ(f, Γ(f))|` over a corpus, relative to
    /// `1 + |Γ(f, Γᶻ(f))|`.
    pub fn check_a2_corpus(&self, corpus: &CorpusConfig) -> Result<CheckReport, LabError> {
        let (n, m) = (self.spec().n(), self.spec().m());
        let worst: Result<Vec<f64>, LabError> = (0..corpus.samples)
            .into_par_iter()
            .map(|id| {
                let sample = corpus.sample(n, m, id);
                let parts = self.ctx.a2_parts(&eval_jet(&sample.f, &sample.point, 2)?)?;
                Ok(parts.residual().abs() / (1.0 + parts.lhs.abs()))
            })
            .collect();
        let worst = worst?.into_iter().fold(0.0, f64::max);
        Ok(CheckReport::new(
            "a2-symmetry",
            Estimate::exact(worst),
            Estimate::exact(0.0),
            1e-10,
            self.params(),
        ))
    }
}

/// One row of a slack sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackRow {
    pub sample_id: usize,
    pub epsilon: f64,
    pub slack: f64,
}

fn variance_report(name: &str, cols: &[Vec<f64>], k: f64, params: CheckParams) -> CheckReport {
    let (var, var_inf) = variance_parts(&cols[0], &cols[1]);
    let rhs_inf = paired(&cols[2], k);
    let rhs = Estimate::from_samples(&rhs_inf);
    let lhs = Estimate::with_influence(var, &var_inf);
    let slack = Estimate::with_influence(rhs.mean - var, &diff(&rhs_inf, &var_inf));
    CheckReport::from_slack(name, lhs, rhs, slack, 0.0, params)
}

fn entropy_report(name: &str, cols: &[Vec<f64>], k: f64, params: CheckParams) -> CheckReport {
    let (ent, ent_inf) = entropy_parts(&cols[0], &cols[1]);
    let rhs_inf = paired(&cols[2], k);
    let rhs = Estimate::from_samples(&rhs_inf);
    let lhs = Estimate::with_influence(ent, &ent_inf);
    let slack = Estimate::with_influence(rhs.mean - ent, &diff(&rhs_inf, &ent_inf));
    CheckReport::from_slack(name, lhs, rhs, slack, 0.0, params)
}

/// `E^{1/p}` with a delta-method interval.
fn power_root(e: &Estimate, p: f64) -> Estimate {
    let m = e.mean.max(0.0);
    let root = m.powf(1.0 / p);
    let slope = if m > 0.0 { root / (p * m) } else { 0.0 };
    Estimate {
        mean: root,
        half_width: slope * e.half_width,
        n: e.n,
    }
}

/// Per-outer-sample values of `|Q_t f(x)|^β`, second-order corrected for the
/// inner Monte Carlo noise.
fn nested_power(spec: &ValidatedSpec, s: f64, f: &Expr, t: f64, beta: f64, cfg: &SimConfig) -> Result<Vec<f64>, LabError> {
    let n = spec.n();
    let inner_seed = derive_seed(cfg.seed, 0x4e74);
    let outer = invariant_columns(spec, s, cfg, spec.dim(), |y, out| {
        out.copy_from_slice(y);
        Ok(())
    })?;
    (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = outer.iter().map(|col| col[i]).collect();
            let inner = SimConfig {
                seed: derive_seed(inner_seed, i as u64),
                paths: cfg.inner_paths,
                ..*cfg
            };
            let cols = mehler_paths(spec, s, t, &x, &inner, 1, |y, out| {
                out[0] = f.eval(y, n);
                Ok(())
            })?;
            let u = &cols[0];
            let m = mean(u);
            let a = m.abs();
            let correction = if a > 0.0 {
                0.5 * beta * (beta - 1.0) * a.powf(beta - 2.0) * sample_var(u, m) / u.len() as f64
            } else {
                0.0
            };
            Ok(a.powf(beta) - correction)
        })
        .collect()
}

/// A check named in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckSpec {
    Poincare { f: String, t: f64, x: Vec<f64>, epsilon: f64 },
    PoincareMu { f: String, epsilon: f64 },
    Logsob { f: String, t: f64, x: Vec<f64>, epsilon: f64 },
    LogsobMu { f: String, epsilon: f64 },
    ReversePoincare { f: String, t: f64, x: Vec<f64> },
    ReverseLogsob { f: String, t: f64, x: Vec<f64> },
    GradientDecay { f: String, t: f64, x: Vec<f64>, epsilon: f64 },
    WangHarnack { f: String, alpha: f64, t: f64, x: Vec<f64>, y: Vec<f64> },
    LogHarnack { f: String, t: f64, x: Vec<f64>, y: Vec<f64> },
    EntropyDecay { f: String, times: Vec<f64>, epsilon: f64 },
    L2Decay { f: String, times: Vec<f64>, epsilon: f64 },
    VarianceEnergy { f: String, times: Vec<f64>, epsilon: f64 },
    Hyperbound { f: String, alpha: f64, beta: f64, t: f64 },
    CdSlack {
        #[serde(default)]
        corpus: CorpusConfig,
    },
    A2Symmetry {
        #[serde(default)]
        corpus: CorpusConfig,
    },
}

impl Lab {
    fn pt(&self, v: &[f64]) -> Result<Point, LabError> {
        let p = Point::from_coords(v, self.spec().n().min(v.len()));
        self.point(&p)?;
        Ok(p)
    }

    /// Runs one scenario check.
    pub fn run(&self, check: &CheckSpec) -> Result<Vec<CheckReport>, LabError> {
        use CheckSpec::*;
        let one = |r: CheckReport| vec![r];
        Ok(match check {
            Poincare { f, t, x, epsilon } => one(self.check_poincare(&self.parse(f)?, *t, &self.pt(x)?, *epsilon)?),
            PoincareMu { f, epsilon } => one(self.check_poincare_mu(&self.parse(f)?, *epsilon)?),
            Logsob { f, t, x, epsilon } => one(self.check_logsob(&self.parse(f)?, *t, &self.pt(x)?, *epsilon)?),
            LogsobMu { f, epsilon } => one(self.check_logsob_mu(&self.parse(f)?, *epsilon)?),
            ReversePoincare { f, t, x } => one(self.check_reverse_poincare(&self.parse(f)?, *t, &self.pt(x)?)?),
            ReverseLogsob { f, t, x } => one(self.check_reverse_logsob(&self.parse(f)?, *t, &self.pt(x)?)?),
            GradientDecay { f, t, x, epsilon } => {
                one(self.check_gradient_decay(&self.parse(f)?, *t, &self.pt(x)?, *epsilon)?)
            }
            WangHarnack { f, alpha, t, x, y } => {
                one(self.check_wang_harnack(&self.parse(f)?, *alpha, *t, &self.pt(x)?, &self.pt(y)?)?)
            }
            LogHarnack { f, t, x, y } => one(self.check_log_harnack(&self.parse(f)?, *t, &self.pt(x)?, &self.pt(y)?)?),
            EntropyDecay { f, times, epsilon } => {
                let (reports, fit) = self.check_entropy_decay(&self.parse(f)?, times, *epsilon)?;
                annotate_fit(reports, &fit)
            }
            L2Decay { f, times, epsilon } => {
                let (reports, fit) = self.check_l2_decay(&self.parse(f)?, times, *epsilon)?;
                annotate_fit(reports, &fit)
            }
            VarianceEnergy { f, times, epsilon } => self.check_variance_energy(&self.parse(f)?, times, *epsilon)?.1,
            Hyperbound { f, alpha, beta, t } => one(self.check_hyperbound(&self.parse(f)?, *alpha, *beta, *t)?),
            CdSlack { corpus } => one(self.check_cd_corpus(corpus)?.0),
            A2Symmetry { corpus } => one(self.check_a2_corpus(corpus)?),
        })
    }

    /// Runs every check on its own random stream and returns the reports
    /// sorted by check name.
    pub fn run_all(&self, checks: &[CheckSpec]) -> Result<Vec<CheckReport>, LabError> {
        let results: Result<Vec<Vec<CheckReport>>, LabError> = checks
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let lab = self.with_config(self.cfg.with_seed(derive_seed(self.cfg.seed, i as u64)));
                lab.run(c)
            })
            .collect();
        let mut all: Vec<CheckReport> = results?.into_iter().flatten().collect();
        all.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(all)
    }
}

fn annotate_fit(reports: Vec<CheckReport>, fit: &DecayFit) -> Vec<CheckReport> {
    reports
        .into_iter()
        .map(|r| {
            r.with_note(format!(
                "fitted exponent {:.4} against 2λ_ε = {:.4}",
                fit.exponent, fit.reference
            ))
        })
        .collect()
}
