//! Samplers for horizontal Brownian motion, the invariant measure and the
//! Ornstein–Uhlenbeck semigroup `Q_t = e^{t L_s}`, with Monte Carlo
//! estimators built on them.
//!
//! `Q_t` is sampled two ways. The Mehler route uses
//! `Q_t f(x) = E f(δ_c x · g)` with `g ~ p_a`, `c = e^{−st}` and
//! `a = (1 − e^{−2st})/(2s)`. The SDE route integrates
//!
//! ```text
//! dx = −s x dt + √2 dB
//! dz = −2s z dt + (√2/2) xᵀB⁽ᵏ⁾ dB
//! ```
//!
//! with Euler–Maruyama. Both use antithetic pairs: the second member of a
//! pair reuses the first one's Gaussian draws with the opposite sign.
//!
//! Path `i` of any sampler reads only its own random stream, and per-path
//! results are reduced serially in index order, so estimates are identical
//! for every thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gamma::{GammaError, OperatorContext};
use crate::group::{Point, ValidatedSpec};
use crate::jet::{eval_jet_coords, Expr, JetError};
use crate::linalg::dot;
use crate::report::{CheckParams, CheckReport, Estimate};
use crate::rng::{derive_seed, stream};

const TAG_HEAT: u64 = 1;
const TAG_MEHLER: u64 = 2;
const TAG_SDE: u64 = 3;
const TAG_INNER: u64 = 4;
const TAG_NESTED: u64 = 5;
const TAG_PAIR: u64 = 6;

/// Finite-difference step for derivatives of `Q_t f`.
pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("drift strength must be positive, got {0}")]
    NonPositiveDrift(f64),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("times must be non-negative and increasing")]
    UnsortedTimes,
    #[error("point has shape ({got_n}, {got_m}), expected ({n}, {m})")]
    PointShape {
        n: usize,
        m: usize,
        got_n: usize,
        got_m: usize,
    },
    #[error("function must be positive, got {value} at {at:?}")]
    NonPositiveFunction { value: f64, at: Vec<f64> },
    #[error("function is not finite at {at:?}")]
    NonFinite { at: Vec<f64> },
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Gamma(#[from] GammaError),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::NegativeTime(_) => "NegativeTime",
            SimError::NonPositiveDrift(_) => "NonPositiveDrift",
            SimError::NonPositiveEpsilon(_) => "NonPositiveEpsilon",
            SimError::InvalidConfig(_) => "InvalidConfig",
            SimError::UnsortedTimes => "UnsortedTimes",
            SimError::PointShape { .. } => "PointShape",
            SimError::NonPositiveFunction { .. } => "NonPositiveFunction",
            SimError::NonFinite { .. } => "NonFinite",
            SimError::Jet(e) => e.code(),
            SimError::Gamma(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub paths: usize,
    pub steps_per_unit_time: usize,
    /// Drift strength used by callers that do not pass one explicitly.
    pub s: f64,
    /// Inner sample count for nested estimators.
    pub inner_paths: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            paths: 10_000,
            steps_per_unit_time: 256,
            s: 1.0,
            inner_paths: 1_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.paths < 1 {
            return Err(SimError::InvalidConfig("paths must be at least 1".into()));
        }
        if self.steps_per_unit_time < 16 {
            return Err(SimError::InvalidConfig(
                "steps_per_unit_time must be at least 16".into(),
            ));
        }
        if self.inner_paths < 2 {
            return Err(SimError::InvalidConfig("inner_paths must be at least 2".into()));
        }
        if !(self.s >= 0.0) || !self.s.is_finite() {
            return Err(SimError::InvalidConfig("s must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SimConfig { seed, ..self }
    }

    pub fn with_paths(self, paths: usize) -> Self {
        SimConfig { paths, ..self }
    }

    pub fn with_inner(self, inner_paths: usize) -> Self {
        SimConfig { inner_paths, ..self }
    }

    /// Euler steps used for a horizon `t`.
    pub fn steps_for(&self, t: f64) -> usize {
        if t <= 0.0 {
            0
        } else {
            ((t * self.steps_per_unit_time as f64).ceil() as usize).max(1)
        }
    }

    fn inner(&self, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            paths: self.inner_paths,
            ..*self
        }
    }
}

/// Endpoints of independent paths, with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub endpoints: Vec<Point>,
    pub config: SimConfig,
    pub horizon: f64,
}

/// Heat time and dilation factor of the Mehler representation at time `t`.
pub fn mehler_params(s: f64, t: f64) -> (f64, f64) {
    if s == 0.0 {
        (t, 1.0)
    } else {
        (-(-2.0 * s * t).exp_m1() / (2.0 * s), (-s * t).exp())
    }
}

fn check_time(t: f64) -> Result<(), SimError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(SimError::NegativeTime(t));
    }
    Ok(())
}

fn check_drift(s: f64) -> Result<(), SimError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(SimError::NonPositiveDrift(s));
    }
    Ok(())
}

fn check_point(spec: &ValidatedSpec, p: &Point) -> Result<(), SimError> {
    if p.x.len() != spec.n() || p.z.len() != spec.m() {
        return Err(SimError::PointShape {
            n: spec.n(),
            m: spec.m(),
            got_n: p.x.len(),
            got_m: p.z.len(),
        });
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<(), SimError> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::UnsortedTimes);
    }
    Ok(())
}

fn finite(value: f64, at: &[f64]) -> Result<f64, SimError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SimError::NonFinite { at: at.to_vec() })
    }
}

/// Horizontal Brownian motion from the origin, generator `Δ_H`, run for `t`.
///
/// `dx` is scratch of length `2n`.
fn heat_endpoint(spec: &ValidatedSpec, t: f64, steps: usize, rng: &mut ChaCha8Rng, out: &mut [f64], dx: &mut [f64]) {
    out.fill(0.0);
    if steps == 0 {
        return;
    }
    let n = spec.n();
    let h = t / steps as f64;
    let sd = (2.0 * h).sqrt();
    for _ in 0..steps {
        for d in dx[..n].iter_mut() {
            *d = sd * rng.sample::<f64, _>(StandardNormal);
        }
        let (x, z) = out.split_at_mut(n);
        spec.add_half_twist(x, &dx[..n], z);
        add_bridge_area(spec, h, dx, rng, z);
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi += d;
        }
    }
}

/// Adds the area a step of length `h` encloses beyond its chord. Given the
/// increment `Δ = dx[..n]`, the bridge means `Y ~ N(0, h³/6)` contribute
/// `YᵀBΔ/h`, and each pair's residual bridge area is drawn as `N(0, h²/3)`,
/// which matches the exact second moments. Writes `Y` into `dx[n..]`.
fn add_bridge_area(spec: &ValidatedSpec, h: f64, dx: &mut [f64], rng: &mut ChaCha8Rng, z: &mut [f64]) {
    let n = spec.n();
    let (inc, y) = dx.split_at_mut(n);
    let sd_y = (h * h * h / 6.0).sqrt();
    for v in y[..n].iter_mut() {
        *v = sd_y * rng.sample::<f64, _>(StandardNormal);
    }
    let sd_l = (h * h / 3.0).sqrt();
    for (k, zk) in z.iter_mut().enumerate() {
        let mat = spec.matrix(k);
        let acc: f64 = y.iter().zip(mat).map(|(yi, row)| yi * dot(row, inc)).sum();
        *zk += acc / h;
    }
    for i in 0..n {
        for j in i + 1..n {
            let l = sd_l * rng.sample::<f64, _>(StandardNormal);
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += spec.b(k, i, j) * l;
            }
        }
    }
}

/// `δ_c x · g`.
fn mehler_point(spec: &ValidatedSpec, c: f64, x: &[f64], g: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    let n = spec.n();
    for (a, (s, v)) in scratch.iter_mut().zip(x).enumerate() {
        *s = if a < n { c * v } else { c * c * v };
    }
    spec.mul_coords(scratch, g, out);
}

fn negate(g: &[f64], out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(g) {
        *o = -v;
    }
}

struct Scratch {
    g: Vec<f64>,
    g_inv: Vec<f64>,
    dx: Vec<f64>,
    tmp: Vec<f64>,
    y: Vec<f64>,
    out: Vec<f64>,
    out2: Vec<f64>,
}

impl Scratch {
    fn new(spec: &ValidatedSpec, k: usize) -> Self {
        let d = spec.dim();
        Scratch {
            g: vec![0.0; d],
            g_inv: vec![0.0; d],
            dx: vec![0.0; 2 * spec.n()],
            tmp: vec![0.0; d],
            y: vec![0.0; d],
            out: vec![0.0; k],
            out2: vec![0.0; k],
        }
    }
}

fn transpose(rows: Vec<Vec<f64>>, k: usize) -> Vec<Vec<f64>> {
    let mut cols = vec![Vec::with_capacity(rows.len()); k];
    for row in rows {
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    cols
}

/// Per-path values of `k` functionals under `Q_t(x, ·)`, Mehler route.
///
/// `h(y, out)` writes the functionals at the sampled point `y`. Each path is
/// an antithetic pair `(g, g⁻¹)`; the returned columns hold pair averages.
pub fn mehler_paths<H>(
    spec: &ValidatedSpec,
    s: f64,
    t: f64,
    x: &[f64],
    cfg: &SimConfig,
    k: usize,
    h: H,
) -> Result<Vec<Vec<f64>>, SimError>
where
    H: Fn(&[f64], &mut [f64]) -> Result<(), SimError> + Sync,
{
    cfg.validate()?;
    check_time(t)?;
    let (a, c) = mehler_params(s, t);
    let steps = cfg.steps_for(a);
    let seed = derive_seed(cfg.seed, TAG_MEHLER);
    let rows: Result<Vec<Vec<f64>>, SimError> = (0..cfg.paths)
        .into_par_iter()
        .map_init(
            || Scratch::new(spec, k),
            |sc, p| {
                let mut rng = stream(seed, p as u64);
                heat_endpoint(spec, a, steps, &mut rng, &mut sc.g, &mut sc.dx);
                negate(&sc.g, &mut sc.g_inv);
                mehler_point(spec, c, x, &sc.g, &mut sc.tmp, &mut sc.y);
                h(&sc.y, &mut sc.out)?;
                mehler_point(spec, c, x, &sc.g_inv, &mut sc.tmp, &mut sc.y);
                h(&sc.y, &mut sc.out2)?;
                Ok(sc.out.iter().zip(&sc.out2).map(|(u, v)| 0.5 * (u + v)).collect())
            },
        )
        .collect();
    Ok(transpose(rows?, k))
}

fn scalar<'a>(f: &'a Expr, n: usize) -> impl Fn(&[f64], &mut [f64]) -> Result<(), SimError> + Sync + 'a {
    move |y, out| {
        out[0] = finite(f.eval(y, n), y)?;
        Ok(())
    }
}

/// Horizontal Brownian endpoints at time `t`.
pub fn sample_heat(spec: &ValidatedSpec, t: f64, cfg: &SimConfig) -> Result<PathEnsemble, SimError> {
    cfg.validate()?;
    check_time(t)?;
    let steps = cfg.steps_for(t);
    let seed = derive_seed(cfg.seed, TAG_HEAT);
    let n = spec.n();
    let endpoints = (0..cfg.paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; spec.dim()], vec![0.0; 2 * n]),
            |(g, dx), p| {
                let mut rng = stream(seed, p as u64);
                heat_endpoint(spec, t, steps, &mut rng, g, dx);
                Point::from_coords(g, n)
            },
        )
        .collect();
    Ok(PathEnsemble {
        endpoints,
        config: *cfg,
        horizon: t,
    })
}

/// Samples of `μ = p_{1/(2s)}`, the invariant law of `L_s`.
pub fn sample_invariant(spec: &ValidatedSpec, s: f64, cfg: &SimConfig) -> Result<PathEnsemble, SimError> {
    check_drift(s)?;
    sample_heat(spec, 0.5 / s, cfg)
}

/// Writes the `i`-th invariant sample, the same point `sample_invariant`
/// returns at index `i`.
fn invariant_point(spec: &ValidatedSpec, s: f64, cfg: &SimConfig, i: usize, out: &mut [f64], dx: &mut [f64]) {
    let t = 0.5 / s;
    let mut rng = stream(derive_seed(cfg.seed, TAG_HEAT), i as u64);
    heat_endpoint(spec, t, cfg.steps_for(t), &mut rng, out, dx);
}

/// `Q_t f(x)` by the Mehler representation.
pub fn mehler_qt(spec: &ValidatedSpec, s: f64, f: &Expr, t: f64, x: &Point, cfg: &SimConfig) -> Result<Estimate, SimError> {
    check_point(spec, x)?;
    check_time(t)?;
    if t == 0.0 {
        let c = x.coords();
        return Ok(Estimate::exact(finite(f.eval(&c, spec.n()), &c)?));
    }
    let cols = mehler_paths(spec, s, t, &x.coords(), cfg, 1, scalar(f, spec.n()))?;
    Ok(Estimate::from_samples(&cols[0]))
}

/// `Q_{t_outer}(Q_{t_inner} f)(x)` by nested Mehler sampling; an independent
/// estimate of `Q_{t_outer + t_inner} f(x)`.
pub fn mehler_qt_nested(
    spec: &ValidatedSpec,
    s: f64,
    f: &Expr,
    t_outer: f64,
    t_inner: f64,
    x: &Point,
    cfg: &SimConfig,
) -> Result<Estimate, SimError> {
    check_point(spec, x)?;
    check_time(t_inner)?;
    let n = spec.n();
    let outer_cfg = cfg.with_seed(derive_seed(cfg.seed, TAG_NESTED));
    let inner_seed = derive_seed(cfg.seed, TAG_INNER);
    let cols = mehler_paths(spec, s, t_outer, &x.coords(), &outer_cfg, 1, |y, out| {
        // The inner seed must depend on the outer sample, not on call order.
        let key = y.iter().fold(inner_seed, |acc, v| derive_seed(acc, v.to_bits()));
        let inner = cfg.inner(key);
        let est = mehler_paths(spec, s, t_inner, y, &inner, 1, scalar(f, n))?;
        out[0] = Estimate::from_samples(&est[0]).mean;
        Ok(())
    })?;
    Ok(Estimate::from_samples(&cols[0]))
}

/// `Q_t f(x)` by Euler–Maruyama integration of the `L_s`-diffusion.
pub fn sde_qt(spec: &ValidatedSpec, s: f64, f: &Expr, t: f64, x: &Point, cfg: &SimConfig) -> Result<Estimate, SimError> {
    cfg.validate()?;
    check_point(spec, x)?;
    check_time(t)?;
    let start = x.coords();
    let n = spec.n();
    let d = spec.dim();
    let steps = cfg.steps_for(t);
    let seed = derive_seed(cfg.seed, TAG_SDE);
    let values: Result<Vec<f64>, SimError> = (0..cfg.paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; d], vec![0.0; 2 * n], vec![0.0; spec.m()], vec![0.0; spec.m()]),
            |(plus, minus, noise, twist, area), p| {
                let mut rng = stream(seed, p as u64);
                plus.copy_from_slice(&start);
                minus.copy_from_slice(&start);
                if steps > 0 {
                    let dt = t / steps as f64;
                    let sd = (2.0 * dt).sqrt();
                    for _ in 0..steps {
                        for v in noise[..n].iter_mut() {
                            *v = sd * rng.sample::<f64, _>(StandardNormal);
                        }
                        area.fill(0.0);
                        add_bridge_area(spec, dt, noise, &mut rng, area);
                        euler_step(spec, s, dt, plus, &noise[..n], twist, area);
                        for v in noise[..n].iter_mut() {
                            *v = -*v;
                        }
                        euler_step(spec, s, dt, minus, &noise[..n], twist, area);
                    }
                }
                let a = finite(f.eval(plus, n), plus)?;
                let b = finite(f.eval(minus, n), minus)?;
                Ok(0.5 * (a + b))
            },
        )
        .collect();
    Ok(Estimate::from_samples(&values?))
}

/// `area` is the bridge correction of [`add_bridge_area`]; it is even in the
/// noise, so both antithetic copies share it.
fn euler_step(spec: &ValidatedSpec, s: f64, dt: f64, state: &mut [f64], noise: &[f64], twist: &mut [f64], area: &[f64]) {
    let n = spec.n();
    twist.fill(0.0);
    spec.add_half_twist(&state[..n], noise, twist);
    let (x, z) = state.split_at_mut(n);
    for (xi, dw) in x.iter_mut().zip(noise) {
        *xi += -s * *xi * dt + dw;
    }
    for ((zk, tw), ar) in z.iter_mut().zip(twist.iter()).zip(area) {
        *zk += -2.0 * s * *zk * dt + tw + ar;
    }
}

/// `∫ g dμ` for a function of flat coordinates `[x.., z..]`.
pub fn estimate_mu_integral<G>(spec: &ValidatedSpec, s: f64, g: G, cfg: &SimConfig) -> Result<Estimate, SimError>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    check_drift(s)?;
    let values: Vec<f64> = (0..cfg.paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; spec.dim()], vec![0.0; 2 * spec.n()]),
            |(y, dx), i| {
                invariant_point(spec, s, cfg, i, y, dx);
                g(y)
            },
        )
        .collect();
    Ok(Estimate::from_samples(&values))
}

/// Per-sample values of `k` functionals at points of `μ`, one column each.
pub fn invariant_columns<H>(spec: &ValidatedSpec, s: f64, cfg: &SimConfig, k: usize, h: H) -> Result<Vec<Vec<f64>>, SimError>
where
    H: Fn(&[f64], &mut [f64]) -> Result<(), SimError> + Sync,
{
    cfg.validate()?;
    check_drift(s)?;
    let rows: Result<Vec<Vec<f64>>, SimError> = (0..cfg.paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; spec.dim()], vec![0.0; 2 * spec.n()]),
            |(y, dx), i| {
                invariant_point(spec, s, cfg, i, y, dx);
                let mut out = vec![0.0; k];
                h(y, &mut out)?;
                Ok(out)
            },
        )
        .collect();
    Ok(transpose(rows?, k))
}

/// `∫ (Q_t f − f) dμ`, one Mehler pair per invariant sample.
pub fn estimate_invariance_defect(spec: &ValidatedSpec, s: f64, f: &Expr, t: f64, cfg: &SimConfig) -> Result<Estimate, SimError> {
    cfg.validate()?;
    check_drift(s)?;
    check_time(t)?;
    let n = spec.n();
    let (a, c) = mehler_params(s, t);
    let steps = cfg.steps_for(a);
    let seed = derive_seed(cfg.seed, TAG_PAIR);
    let values: Result<Vec<f64>, SimError> = (0..cfg.paths)
        .into_par_iter()
        .map_init(
            || Scratch::new(spec, 0),
            |sc, i| {
                let mut x = vec![0.0; spec.dim()];
                invariant_point(spec, s, cfg, i, &mut x, &mut sc.dx);
                let mut rng = stream(seed, i as u64);
                heat_endpoint(spec, a, steps, &mut rng, &mut sc.g, &mut sc.dx);
                negate(&sc.g, &mut sc.g_inv);
                mehler_point(spec, c, &x, &sc.g, &mut sc.tmp, &mut sc.y);
                let up = finite(f.eval(&sc.y, n), &sc.y)?;
                mehler_point(spec, c, &x, &sc.g_inv, &mut sc.tmp, &mut sc.y);
                let down = finite(f.eval(&sc.y, n), &sc.y)?;
                Ok(0.5 * (up + down) - finite(f.eval(&x, n), &x)?)
            },
        )
        .collect();
    Ok(Estimate::from_samples(&values?))
}

/// Inner mean and unbiased inner variance of `f` under `Q_t(x, ·)` for each
/// outer sample `x ~ μ`.
fn nested_moments(spec: &ValidatedSpec, s: f64, f: &Expr, t: f64, cfg: &SimConfig) -> Result<Vec<(f64, f64)>, SimError> {
    let n = spec.n();
    let inner_seed = derive_seed(cfg.seed, TAG_INNER);
    (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut x = vec![0.0; spec.dim()];
            let mut dx = vec![0.0; 2 * n];
            invariant_point(spec, s, cfg, i, &mut x, &mut dx);
            let inner = cfg.inner(derive_seed(inner_seed, i as u64));
            let cols = mehler_paths(spec, s, t, &x, &inner, 1, scalar(f, n))?;
            let e = Estimate::from_samples(&cols[0]);
            let m = cols[0].len() as f64;
            let var = if m > 1.0 {
                cols[0].iter().map(|v| (v - e.mean) * (v - e.mean)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            Ok((e.mean, var))
        })
        .collect()
}

/// `Var_μ(Q_t f)` on a time grid, by nested sampling with the inner-noise
/// bias removed.
///
/// The same outer points and inner random streams are used at every time,
/// so the curve is smooth in `t`.
pub fn estimate_variance_decay(
    spec: &ValidatedSpec,
    s: f64,
    f: &Expr,
    times: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<(f64, Estimate)>, SimError> {
    cfg.validate()?;
    check_drift(s)?;
    check_times(times)?;
    times
        .iter()
        .map(|&t| {
            let moments = nested_moments(spec, s, f, t, cfg)?;
            Ok((t, variance_from_moments(&moments, cfg.inner_paths)))
        })
        .collect()
}

fn variance_from_moments(moments: &[(f64, f64)], inner: usize) -> Estimate {
    let big_n = moments.len() as f64;
    let mean = moments.iter().map(|m| m.0).sum::<f64>() / big_n;
    let correction: Vec<f64> = moments
        .iter()
        .map(|(m, v)| (m - mean) * (m - mean) * big_n / (big_n - 1.0).max(1.0) - v / inner as f64)
        .collect();
    let center = correction.iter().sum::<f64>() / big_n;
    Estimate::with_influence(center, &correction)
}

/// `Ent_μ(Q_t f)` on a time grid for a positive `f`, with the second-order
/// plug-in bias of `u ln u` removed at both levels.
pub fn estimate_entropy_decay(
    spec: &ValidatedSpec,
    s: f64,
    f: &Expr,
    times: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<(f64, Estimate)>, SimError> {
    cfg.validate()?;
    check_drift(s)?;
    check_times(times)?;
    times
        .iter()
        .map(|&t| {
            let moments = nested_moments(spec, s, f, t, cfg)?;
            Ok((t, entropy_from_moments(&moments, cfg.inner_paths)?))
        })
        .collect()
}

fn entropy_from_moments(moments: &[(f64, f64)], inner: usize) -> Result<Estimate, SimError> {
    let big_n = moments.len() as f64;
    if let Some((m, _)) = moments.iter().find(|(m, _)| !(*m > 0.0)) {
        return Err(SimError::NonPositiveFunction { value: *m, at: vec![] });
    }
    let mean = moments.iter().map(|m| m.0).sum::<f64>() / big_n;
    let spread = moments.iter().map(|(m, _)| (m - mean) * (m - mean)).sum::<f64>() / (big_n - 1.0).max(1.0);
    let first: Vec<f64> = moments
        .iter()
        .map(|(m, v)| m * m.ln() - v / (2.0 * inner as f64 * m))
        .collect();
    let first_mean = first.iter().sum::<f64>() / big_n;
    let center = first_mean - (mean * mean.ln() - spread / (2.0 * big_n * mean));
    let influence: Vec<f64> = first
        .iter()
        .zip(moments)
        .map(|(a, (m, _))| a - (mean.ln() + 1.0) * (m - mean))
        .collect();
    Ok(Estimate::with_influence(center, &influence))
}

/// Difference quotients of `Q_t f` at `x` along every frame direction, from
/// one set of Mehler samples shared by all stencil points.
#[derive(Debug, Clone)]
pub struct StencilSamples {
    /// Pair-averaged `f`, `f²` and `f ln f` at the centre.
    pub base: Vec<f64>,
    pub base_sq: Vec<f64>,
    pub base_entropy: Vec<f64>,
    /// `step[a][p]`: central quotient with step `h` in direction `a`.
    pub step: Vec<Vec<f64>>,
    /// Same with step `2h`.
    pub double_step: Vec<Vec<f64>>,
    pub h: f64,
}

/// `u ln u`, NaN off the positive axis.
pub fn entropy_term(u: f64) -> f64 {
    if u > 0.0 {
        u * u.ln()
    } else {
        f64::NAN
    }
}

/// `x · (h e_a)`: right translation, so quotients approximate `X_i` and `Z_k`.
fn translate(spec: &ValidatedSpec, x: &[f64], a: usize, h: f64, out: &mut [f64]) {
    let mut e = vec![0.0; spec.dim()];
    e[a] = h;
    spec.mul_coords(x, &e, out);
}

pub fn stencil_samples(
    spec: &ValidatedSpec,
    s: f64,
    f: &Expr,
    t: f64,
    x: &Point,
    cfg: &SimConfig,
) -> Result<StencilSamples, SimError> {
    check_point(spec, x)?;
    let h = FD_STEP;
    let d = spec.dim();
    let n = spec.n();
    let center = x.coords();
    // Stencil points in a fixed order: centre, then (+h, −h, +2h, −2h) per axis.
    let mut points = vec![center.clone()];
    for a in 0..d {
        for step in [h, -h, 2.0 * h, -2.0 * h] {
            let mut p = vec![0.0; d];
            translate(spec, &center, a, step, &mut p);
            points.push(p);
        }
    }
    let (a_t, c) = mehler_params(s, t);
    let steps = cfg.steps_for(a_t);
    let seed = derive_seed(cfg.seed, TAG_MEHLER);
    cfg.validate()?;
    check_time(t)?;
    let rows: Result<Vec<Vec<f64>>, SimError> = (0..cfg.paths)
        .into_par_iter()
        .map_init(
            || Scratch::new(spec, 0),
            |sc, p| {
                let mut rng = stream(seed, p as u64);
                heat_endpoint(spec, a_t, steps, &mut rng, &mut sc.g, &mut sc.dx);
                negate(&sc.g, &mut sc.g_inv);
                let mut centre = [0.0; 2];
                for (slot, g) in [&sc.g, &sc.g_inv].into_iter().enumerate() {
                    mehler_point(spec, c, &points[0], g, &mut sc.tmp, &mut sc.y);
                    centre[slot] = finite(f.eval(&sc.y, n), &sc.y)?;
                }
                let sq = 0.5 * (centre[0] * centre[0] + centre[1] * centre[1]);
                let ent = 0.5 * (entropy_term(centre[0]) + entropy_term(centre[1]));
                let mut row = vec![sq, ent];
                for q in &points {
                        mehler_point(spec, c, q, &sc.g, &mut sc.tmp, &mut sc.y);
                        let up = finite(f.eval(&sc.y, n), &sc.y)?;
                        mehler_point(spec, c, q, &sc.g_inv, &mut sc.tmp, &mut sc.y);
                        let down = finite(f.eval(&sc.y, n), &sc.y)?;
                        row.push(0.5 * (up + down));
                }
                Ok(row)
            },
        )
        .collect();
    let rows = rows?;
    let mut out = StencilSamples {
        base: rows.iter().map(|r| r[2]).collect(),
        base_sq: rows.iter().map(|r| r[0]).collect(),
        base_entropy: rows.iter().map(|r| r[1]).collect(),
        step: vec![Vec::with_capacity(rows.len()); d],
        double_step: vec![Vec::with_capacity(rows.len()); d],
        h,
    };
    for r in &rows {
        for a in 0..d {
            let k = 3 + 4 * a;
            out.step[a].push((r[k] - r[k + 1]) / (2.0 * h));
            out.double_step[a].push((r[k + 2] - r[k + 3]) / (4.0 * h));
        }
    }
    Ok(out)
}

/// `Σ_a w_a (∂_a u)²` from per-path quotients, with the `Var/N` bias of the
/// squared means removed. Returns the estimate and its per-path influence.
fn weighted_square(quotients: &[Vec<f64>], weights: &[f64]) -> (f64, Vec<f64>) {
    let big_n = quotients[0].len();
    let nf = big_n as f64;
    let mut value = 0.0;
    let mut influence = vec![0.0; big_n];
    for (q, w) in quotients.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let e = Estimate::from_samples(q);
        let var = if big_n > 1 {
            q.iter().map(|v| (v - e.mean) * (v - e.mean)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        value += w * (e.mean * e.mean - var / nf);
        for (inf, v) in influence.iter_mut().zip(q) {
            *inf += 2.0 * w * e.mean * (v - e.mean);
        }
    }
    (value, influence)
}

/// `Σ_a w_a (∂_a Q_t f)²` at `x` with its sampling interval and a Richardson
/// estimate of the stencil error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEstimate {
    pub value: Estimate,
    pub stencil_error: f64,
}

impl StencilSamples {
    pub fn weighted_gradient(&self, weights: &[f64]) -> GradientEstimate {
        self.weighted_gradient_with_influence(weights).0
    }

    /// As [`StencilSamples::weighted_gradient`], plus the per-path influence
    /// values for intervals of quantities built from the same paths.
    pub fn weighted_gradient_with_influence(&self, weights: &[f64]) -> (GradientEstimate, Vec<f64>) {
        let (v, influence) = weighted_square(&self.step, weights);
        let (v2, _) = weighted_square(&self.double_step, weights);
        let g = GradientEstimate {
            value: Estimate::with_influence(v, &influence),
            stencil_error: (v - v2).abs() / 3.0,
        };
        (g, influence)
    }

    pub fn mean(&self) -> Estimate {
        Estimate::from_samples(&self.base)
    }
}

/// Weights `(1, …, 1, ε, …, ε)` selecting `Γ + εΓᶻ`.
pub fn frame_weights(spec: &ValidatedSpec, epsilon: f64) -> Vec<f64> {
    (0..spec.dim()).map(|a| if a < spec.n() { 1.0 } else { epsilon }).collect()
}

/// Checks `Γ(Q_t f) + εΓᶻ(Q_t f) ≤ e^{−2λ_ε t} Q_t(Γ(f) + εΓᶻ(f))` at `x`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gradient_decay(
    spec: &ValidatedSpec,
    s: f64,
    f: &Expr,
    t: f64,
    x: &Point,
    epsilon: f64,
    lambda: f64,
    cfg: &SimConfig,
) -> Result<CheckReport, SimError> {
    if !(epsilon > 0.0) {
        return Err(SimError::NonPositiveEpsilon(epsilon));
    }
    check_time(t)?;
    let stencil = stencil_samples(spec, s, f, t, x, cfg)?;
    let lhs = stencil.weighted_gradient(&frame_weights(spec, epsilon));
    let ctx = OperatorContext::new(spec.clone(), s)?;
    let rhs_raw = q_gamma(spec, &ctx, s, f, t, x, epsilon, cfg)?;
    let rhs = rhs_raw.scale((-2.0 * lambda * t).exp());
    let params = CheckParams {
        s,
        epsilon: Some(epsilon),
        t: Some(t),
        f: Some(f.to_string()),
        x: Some(x.coords()),
        ..CheckParams::default()
    };
    Ok(CheckReport::new("gradient-decay", lhs.value, rhs, lhs.stencil_error, params))
}

/// `Q_t(Γ(f) + εΓᶻ(f))(x)` with jet-computed integrands.
#[allow(clippy::too_many_arguments)]
pub fn q_gamma(
    spec: &ValidatedSpec,
    ctx: &OperatorContext,
    s: f64,
    f: &Expr,
    t: f64,
    x: &Point,
    epsilon: f64,
    cfg: &SimConfig,
) -> Result<Estimate, SimError> {
    check_point(spec, x)?;
    let n = spec.n();
    let integrand = |y: &[f64], out: &mut [f64]| -> Result<(), SimError> {
        let j = eval_jet_coords(f, y, n, 1)?;
        let g = ctx.gamma_jet(&j, &j)?.value() + epsilon * ctx.gamma_z_jet(&j, &j)?.value();
        out[0] = finite(g, y)?;
        Ok(())
    };
    if t == 0.0 {
        let mut out = [0.0];
        integrand(&x.coords(), &mut out)?;
        return Ok(Estimate::exact(out[0]));
    }
    let cols = mehler_paths(spec, s, t, &x.coords(), cfg, 1, integrand)?;
    Ok(Estimate::from_samples(&cols[0]))
}
