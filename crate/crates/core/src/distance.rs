//! Carnot–Carathéodory distance: exact on the Heisenberg group, two-sided
//! homogeneous bounds on every other step-2 group.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{Point, ValidatedSpec};
use crate::linalg::{norm, singular_values, symmetric_eigen, spectral_norm};
use crate::report::Estimate;
use crate::rng::derive_seed;
use crate::sim::{SimConfig, SimError};

/// Newton tolerance on the geodesic angle.
pub const ANGLE_TOLERANCE: f64 = 1e-12;
/// A sample whose term exceeds this share of the sum flags a heavy tail.
pub const HEAVY_TAIL_SHARE: f64 = 0.1;

const TAG_PAIRS: u64 = 11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("exact distance needs a Heisenberg group (n = 2, m = 1), got n = {n}, m = {m}")]
    NotHeisenberg { n: usize, m: usize },
    #[error("point does not match the group dimensions")]
    PointShape,
    #[error("c0 must be positive, got {0}")]
    NonPositiveC0(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl DistanceError {
    pub fn code(&self) -> &'static str {
        match self {
            DistanceError::NotHeisenberg { .. } => "NotHeisenberg",
            DistanceError::PointShape => "PointShape",
            DistanceError::NonPositiveC0(_) => "NonPositiveC0",
            DistanceError::Sim(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMethod {
    HeisenbergExact,
    HomogeneousBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub lower: f64,
    pub upper: f64,
    pub method: DistanceMethod,
}

impl DistanceResult {
    fn exact(d: f64) -> Self {
        DistanceResult {
            lower: d,
            upper: d,
            method: DistanceMethod::HeisenbergExact,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.method == DistanceMethod::HeisenbergExact
    }
}

fn relative(spec: &ValidatedSpec, p: &[f64], q: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = p.iter().map(|v| -v).collect();
    let mut out = vec![0.0; spec.dim()];
    spec.mul_coords(&inv, q, &mut out);
    out
}

fn coords_of(spec: &ValidatedSpec, p: &Point) -> Result<Vec<f64>, DistanceError> {
    if p.x.len() != spec.n() || p.z.len() != spec.m() {
        return Err(DistanceError::PointShape);
    }
    Ok(p.coords())
}

/// `(φ − sin φ) / (8 sin²(φ/2))`: enclosed area over squared chord for a
/// circular arc of angle `φ`.
fn area_ratio(phi: f64) -> f64 {
    let h = (0.5 * phi).sin();
    let num = if phi < 1e-3 {
        // φ − sin φ without cancellation
        let p2 = phi * phi;
        phi * p2 / 6.0 * (1.0 - p2 / 20.0 * (1.0 - p2 / 42.0))
    } else {
        phi - phi.sin()
    };
    num / (8.0 * h * h)
}

fn area_ratio_derivative(phi: f64) -> f64 {
    let h = (0.5 * phi).sin();
    let c = (0.5 * phi).cos();
    let num = if phi < 1e-3 { phi * phi / 2.0 } else { 1.0 - phi.cos() };
    let f = if phi < 1e-3 {
        phi * phi * phi / 6.0
    } else {
        phi - phi.sin()
    };
    (num * h - f * c) / (8.0 * h * h * h)
}

/// Solves `area_ratio(φ) = w` on `(0, 2π)`.
fn geodesic_angle(w: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let (mut lo, mut hi) = (0.0, two_pi);
    let mut phi = (12.0 * w).min(std::f64::consts::PI);
    for _ in 0..200 {
        let r = area_ratio(phi) - w;
        if r > 0.0 {
            hi = phi;
        } else {
            lo = phi;
        }
        let d = area_ratio_derivative(phi);
        let mut next = phi - r / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - phi).abs() <= ANGLE_TOLERANCE * next.max(1.0) || hi - lo <= ANGLE_TOLERANCE {
            return next;
        }
        phi = next;
    }
    phi
}

/// `d(0, (x, y, z))` for the law `z += ½λ(x₁y₂ − x₂y₁)`.
fn heis_norm(x: f64, y: f64, z: f64, lambda: f64) -> f64 {
    let r = x.hypot(y);
    let area = (z / lambda).abs();
    if area == 0.0 {
        return r;
    }
    if r == 0.0 {
        return (4.0 * std::f64::consts::PI * area).sqrt();
    }
    let w = area / (r * r);
    let phi = geodesic_angle(w);
    let half = 0.5 * phi;
    // φ / (2 sin(φ/2)) → 1 as φ → 0
    let stretch = if half < 1e-8 { 1.0 + half * half / 6.0 } else { half / half.sin() };
    r * stretch
}

/// Exact Carnot–Carathéodory distance on a Heisenberg group.
pub fn heis_distance(spec: &ValidatedSpec, p: &Point, q: &Point) -> Result<f64, DistanceError> {
    if spec.n() != 2 || spec.m() != 1 {
        return Err(DistanceError::NotHeisenberg { n: spec.n(), m: spec.m() });
    }
    let g = relative(spec, &coords_of(spec, p)?, &coords_of(spec, q)?);
    Ok(heis_norm(g[0], g[1], g[2], spec.b(0, 0, 1)))
}

/// `(‖x‖⁴ + ‖z‖²)^{1/4}`.
pub fn homogeneous_norm(spec: &ValidatedSpec, g: &[f64]) -> f64 {
    let (x, z) = g.split_at(spec.n());
    let a = norm(x);
    (a.powi(4) + norm(z).powi(2)).sqrt().sqrt()
}

/// Constants `c₁ ≤ d/N ≤ c₂` for a group.
///
/// Upper: reach `(x, 0)` by a segment, then `(0, z)` by circles in planes
/// `(eᵢ, eⱼ)` whose bracket vectors form an invertible `m × m` matrix `W`.
/// This gives `d ≤ ‖x‖ + K√‖z‖` with `K² = 4π m^{3/2} / σ_min(W)`.
///
/// Lower: `d ≥ ‖x‖`, and a horizontal curve of length `L` reaches at most
/// `‖z‖ ≤ β L²/4` with `β ≥ sup_{|u|=1} ‖Σ uₖB⁽ᵏ⁾‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalence {
    pub c1: f64,
    pub c2: f64,
    pub k: f64,
    pub beta: f64,
}

pub fn norm_equivalence(spec: &ValidatedSpec) -> NormEquivalence {
    let (n, m) = (spec.n(), spec.m());
    let mut chosen: Vec<Vec<f64>> = Vec::new();
    'pairs: for i in 0..n {
        for j in i + 1..n {
            let w: Vec<f64> = (0..m).map(|k| spec.b(k, i, j)).collect();
            let mut trial = chosen.clone();
            trial.push(w);
            let sv = singular_values(&trial);
            let smallest = sv.last().copied().unwrap_or(0.0);
            if smallest > 1e-9 * sv[0] {
                chosen = trial;
                if chosen.len() == m {
                    break 'pairs;
                }
            }
        }
    }
    let sigma_min = singular_values(&chosen).last().copied().unwrap_or(0.0);
    let mf = m as f64;
    let k = (4.0 * std::f64::consts::PI * mf * mf.sqrt() / sigma_min).sqrt();
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| {
                    let (ma, mb) = (spec.matrix(a), spec.matrix(b));
                    ma.iter().zip(mb).map(|(ra, rb)| crate::linalg::dot(ra, rb)).sum()
                })
                .collect()
        })
        .collect();
    let frob = symmetric_eigen(&gram).max().max(0.0).sqrt();
    let triangle = (0..m).map(|a| spectral_norm(spec.matrix(a)).powi(2)).sum::<f64>().sqrt();
    let beta = frob.min(triangle);
    NormEquivalence {
        c1: (2.0 / beta.sqrt()).min(1.0) * 2f64.powf(-0.25),
        c2: 2f64.powf(0.75) * k.max(1.0),
        k,
        beta,
    }
}

/// `c₁N(p⁻¹q) ≤ d(p, q) ≤ c₂N(p⁻¹q)`.
pub fn homogeneous_bounds(spec: &ValidatedSpec, p: &Point, q: &Point) -> Result<DistanceResult, DistanceError> {
    let eq = norm_equivalence(spec);
    let g = relative(spec, &coords_of(spec, p)?, &coords_of(spec, q)?);
    Ok(bounds_with(&eq, spec, &g))
}

fn bounds_with(eq: &NormEquivalence, spec: &ValidatedSpec, g: &[f64]) -> DistanceResult {
    let nn = homogeneous_norm(spec, g);
    DistanceResult {
        lower: eq.c1 * nn,
        upper: eq.c2 * nn,
        method: DistanceMethod::HomogeneousBounds,
    }
}

/// Exact distance on Heisenberg groups, homogeneous bounds elsewhere.
pub fn distance(spec: &ValidatedSpec, p: &Point, q: &Point) -> Result<DistanceResult, DistanceError> {
    if spec.n() == 2 && spec.m() == 1 {
        return Ok(DistanceResult::exact(heis_distance(spec, p, q)?));
    }
    homogeneous_bounds(spec, p, q)
}

/// `d(x, y)` for independent pairs `x, y ~ μ`, as `(lower, upper)`.
pub fn invariant_pair_distances(
    spec: &ValidatedSpec,
    s: f64,
    cfg: &SimConfig,
) -> Result<(Vec<(f64, f64)>, DistanceMethod), DistanceError> {
    cfg.validate()?;
    if !(s > 0.0) {
        return Err(SimError::NonPositiveDrift(s).into());
    }
    let exact = spec.n() == 2 && spec.m() == 1;
    let eq = norm_equivalence(spec);
    let seed = derive_seed(cfg.seed, TAG_PAIRS);
    let t = 0.5 / s;
    let heat = SimConfig {
        paths: 2,
        ..*cfg
    };
    let pairs = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let sub = heat.with_seed(derive_seed(seed, i as u64));
            let ens = crate::sim::sample_heat(spec, t, &sub).expect("validated config");
            let (a, b) = (ens.endpoints[0].coords(), ens.endpoints[1].coords());
            let g = relative(spec, &a, &b);
            if exact {
                let d = heis_norm(g[0], g[1], g[2], spec.b(0, 0, 1));
                (d, d)
            } else {
                let r = bounds_with(&eq, spec, &g);
                (r.lower, r.upper)
            }
        })
        .collect();
    let method = if exact {
        DistanceMethod::HeisenbergExact
    } else {
        DistanceMethod::HomogeneousBounds
    };
    Ok((pairs, method))
}

/// Moment estimate bracketed by the lower and upper distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketedEstimate {
    pub lower: Estimate,
    pub upper: Estimate,
    pub method: DistanceMethod,
    /// Largest single term over the sum, for the upper bracket.
    pub max_share: f64,
    pub heavy_tail: bool,
}

fn bracketed<F>(pairs: &[(f64, f64)], method: DistanceMethod, h: F) -> BracketedEstimate
where
    F: Fn(f64) -> f64,
{
    let lower: Vec<f64> = pairs.iter().map(|p| h(p.0)).collect();
    let upper: Vec<f64> = pairs.iter().map(|p| h(p.1)).collect();
    let sum: f64 = upper.iter().sum();
    let max = upper.iter().cloned().fold(0.0, f64::max);
    let max_share = if sum > 0.0 { max / sum } else { 0.0 };
    BracketedEstimate {
        lower: Estimate::from_samples(&lower),
        upper: Estimate::from_samples(&upper),
        method,
        max_share,
        heavy_tail: !(max_share <= HEAVY_TAIL_SHARE),
    }
}

/// `D = ∬ d²(x, y) dμ(x) dμ(y)`.
#[allow(non_snake_case)]
pub fn estimate_D2(spec: &ValidatedSpec, s: f64, cfg: &SimConfig) -> Result<BracketedEstimate, DistanceError> {
    let (pairs, method) = invariant_pair_distances(spec, s, cfg)?;
    Ok(bracketed(&pairs, method, |d| d * d))
}

/// `E_{c₀} = ∬ exp(c₀ d²(x, y)) dμ(x) dμ(y)`.
pub fn estimate_exp_integrability(
    spec: &ValidatedSpec,
    s: f64,
    c0: f64,
    cfg: &SimConfig,
) -> Result<BracketedEstimate, DistanceError> {
    if !(c0 > 0.0) {
        return Err(DistanceError::NonPositiveC0(c0));
    }
    let (pairs, method) = invariant_pair_distances(spec, s, cfg)?;
    Ok(exp_moment(&pairs, method, c0))
}

/// `∬ exp(c d²) dμ dμ` from precomputed pair distances.
pub fn exp_moment(pairs: &[(f64, f64)], method: DistanceMethod, c: f64) -> BracketedEstimate {
    bracketed(pairs, method, |d| (c * d * d).exp())
}
