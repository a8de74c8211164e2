//! Dense truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] of order `k` at a center `p` stores, for every multi-index `α`
//! with `|α| ≤ k`, the Taylor coefficient `∂^α f(p) / α!`. Storing scaled
//! coefficients makes products plain truncated Cauchy products; the raw
//! partial derivatives are recovered by [`Jet::derivative`].
//!
//! Multi-indices are enumerated degree by degree, so the coefficients of a
//! lower-order jet are a prefix of those of a higher-order one.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::group::MAX_DIM;

/// Highest jet order supported.
pub const MAX_ORDER: usize = 4;

/// Order used by the Γ-calculus by default.
pub const DEFAULT_ORDER: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("jet order {0} exceeds the maximum {MAX_ORDER}")]
    OrderTooHigh(usize),
    #[error("jet order exhausted: need order ≥ {needed}, have {have}")]
    OrderExhausted { needed: usize, have: usize },
    #[error("log of non-positive value {0}")]
    LogOfNonPositive(f64),
    #[error("ambient dimension {0} exceeds the limit {MAX_DIM}")]
    DimensionTooLarge(usize),
}

impl JetError {
    pub fn code(&self) -> &'static str {
        match self {
            JetError::OrderTooHigh(_) => "OrderTooHigh",
            JetError::OrderExhausted { .. } => "OrderExhausted",
            JetError::LogOfNonPositive(_) => "LogOfNonPositive",
            JetError::DimensionTooLarge(_) => "DimensionTooLarge",
        }
    }
}

const NONE: u32 = u32::MAX;

/// Multi-index tables for one ambient dimension, shared by all jets of that
/// dimension.
#[derive(Debug)]
pub struct Layout {
    dim: usize,
    /// `exps[idx * dim + v]` is the exponent of variable `v`.
    exps: Vec<u8>,
    degree: Vec<u8>,
    /// `count[q]` multi-indices have degree ≤ q.
    count: [usize; MAX_ORDER + 2],
    /// `raise[idx * dim + v]` is the index of `α + e_v`, or `NONE`.
    raise: Vec<u32>,
    /// Product pairs `(i, j, i ⊕ j)` sorted by total degree.
    pairs: Vec<(u32, u32, u32)>,
    /// `pair_count[q]` pairs have total degree ≤ q.
    pair_count: [usize; MAX_ORDER + 2],
    /// `α!` for each multi-index.
    factorial: Vec<f64>,
}

impl Layout {
    /// Shared layout for ambient dimension `dim`.
    pub fn get(dim: usize) -> Arc<Layout> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Layout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("layout cache poisoned");
        guard
            .entry(dim)
            .or_insert_with(|| Arc::new(Layout::build(dim)))
            .clone()
    }

    fn build(dim: usize) -> Layout {
        assert!(dim <= MAX_DIM, "dimension {dim} too large");
        let mut exps: Vec<u8> = Vec::new();
        let mut degree = Vec::new();
        let mut count = [0usize; MAX_ORDER + 2];
        let mut index: HashMap<Vec<u8>, u32> = HashMap::new();
        // degree-by-degree, lexicographically descending within a degree
        for q in 0..=MAX_ORDER {
            let mut cur = vec![0u8; dim];
            enumerate(dim, q, 0, &mut cur, &mut |alpha| {
                index.insert(alpha.to_vec(), degree.len() as u32);
                exps.extend_from_slice(alpha);
                degree.push(q as u8);
            });
            count[q] = degree.len();
        }
        count[MAX_ORDER + 1] = degree.len();
        let len = degree.len();

        let mut raise = vec![NONE; len * dim];
        for idx in 0..len {
            for v in 0..dim {
                let mut a = exps[idx * dim..(idx + 1) * dim].to_vec();
                a[v] += 1;
                if let Some(&j) = index.get(&a) {
                    raise[idx * dim + v] = j;
                }
            }
        }

        let mut pairs = Vec::new();
        for i in 0..len {
            let di = degree[i] as usize;
            for j in 0..count[MAX_ORDER - di] {
                let mut k = i;
                for v in 0..dim {
                    for _ in 0..exps[j * dim + v] {
                        k = raise[k * dim + v] as usize;
                    }
                }
                pairs.push((di + degree[j] as usize, i as u32, j as u32, k as u32));
            }
        }
        pairs.sort_by_key(|p| p.0);
        let mut pair_count = [0usize; MAX_ORDER + 2];
        for q in 0..=MAX_ORDER {
            pair_count[q] = pairs.iter().filter(|p| p.0 <= q).count();
        }
        pair_count[MAX_ORDER + 1] = pairs.len();
        let pairs = pairs.into_iter().map(|(_, i, j, k)| (i, j, k)).collect();

        let factorial = (0..len)
            .map(|idx| {
                exps[idx * dim..(idx + 1) * dim]
                    .iter()
                    .map(|&e| (1..=e as u32).product::<u32>() as f64)
                    .product()
            })
            .collect();

        Layout {
            dim,
            exps,
            degree,
            count,
            raise,
            pairs,
            pair_count,
            factorial,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of coefficients of an order-`q` jet, `C(dim + q, q)`.
    pub fn len(&self, q: usize) -> usize {
        self.count[q]
    }

    pub fn exponents(&self, idx: usize) -> &[u8] {
        &self.exps[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn degree(&self, idx: usize) -> usize {
        self.degree[idx] as usize
    }

    /// Index of a multi-index, if its degree is at most [`MAX_ORDER`].
    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        let mut idx = 0usize;
        for (v, &e) in alpha.iter().enumerate() {
            for _ in 0..e {
                let r = self.raise[idx * self.dim + v];
                if r == NONE {
                    return None;
                }
                idx = r as usize;
            }
        }
        Some(idx)
    }

    #[inline]
    fn raise(&self, idx: usize, v: usize) -> Option<usize> {
        let r = self.raise[idx * self.dim + v];
        (r != NONE).then_some(r as usize)
    }
}

fn enumerate(dim: usize, remaining: usize, v: usize, cur: &mut Vec<u8>, out: &mut impl FnMut(&[u8])) {
    if v + 1 == dim || dim == 0 {
        if dim > 0 {
            cur[v] = remaining as u8;
        }
        out(cur);
        if dim > 0 {
            cur[v] = 0;
        }
        return;
    }
    for e in (0..=remaining).rev() {
        cur[v] = e as u8;
        enumerate(dim, remaining - e, v + 1, cur, out);
    }
    cur[v] = 0;
}

/// Truncated Taylor expansion of a scalar function at a point.
#[derive(Clone, Debug)]
pub struct Jet {
    layout: Arc<Layout>,
    order: usize,
    center: Vec<f64>,
    coeffs: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order && self.center == other.center && self.coeffs == other.coeffs
    }
}

impl Jet {
    fn check_order(order: usize) -> Result<(), JetError> {
        if order > MAX_ORDER {
            Err(JetError::OrderTooHigh(order))
        } else {
            Ok(())
        }
    }

    pub fn constant(center: &[f64], order: usize, value: f64) -> Result<Jet, JetError> {
        Self::check_order(order)?;
        if center.len() > MAX_DIM {
            return Err(JetError::DimensionTooLarge(center.len()));
        }
        let layout = Layout::get(center.len());
        let mut coeffs = vec![0.0; layout.len(order)];
        coeffs[0] = value;
        Ok(Jet {
            layout,
            order,
            center: center.to_vec(),
            coeffs,
        })
    }

    /// Jet of the coordinate function `p ↦ p[slot]`.
    pub fn coordinate(center: &[f64], order: usize, slot: usize) -> Result<Jet, JetError> {
        let mut j = Jet::constant(center, order, center[slot])?;
        if order >= 1 {
            let mut alpha = vec![0u8; center.len()];
            alpha[slot] = 1;
            let idx = j.layout.index_of(&alpha).expect("degree-1 index");
            j.coeffs[idx] = 1.0;
        }
        Ok(j)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Raw Taylor coefficients `∂^α f / α!`, in layout order.
    pub fn taylor_coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// `∂^α f(center)`, or `None` when `|α|` exceeds the jet order.
    pub fn derivative(&self, alpha: &[u8]) -> Option<f64> {
        let deg: usize = alpha.iter().map(|&e| e as usize).sum();
        if deg > self.order || alpha.len() != self.dim() {
            return None;
        }
        let idx = self.layout.index_of(alpha)?;
        Some(self.coeffs[idx] * self.layout.factorial[idx])
    }

    /// First partial derivatives.
    pub fn gradient(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|v| {
                if self.order == 0 {
                    return 0.0;
                }
                let idx = self.layout.raise(0, v).expect("degree-1 index");
                self.coeffs[idx]
            })
            .collect()
    }

    /// Drops coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order);
        Jet {
            layout: self.layout.clone(),
            order,
            center: self.center.clone(),
            coeffs: self.coeffs[..self.layout.len(order)].to_vec(),
        }
    }

    fn zeros_like(&self, order: usize) -> Jet {
        Jet {
            layout: self.layout.clone(),
            order,
            center: self.center.clone(),
            coeffs: vec![0.0; self.layout.len(order)],
        }
    }

    pub fn scale(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn add_constant(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    pub fn add(&self, other: &Jet) -> Jet {
        let order = self.order.min(other.order);
        let mut out = self.truncate(order);
        for (o, v) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *o += v;
        }
        out
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        let order = self.order.min(other.order);
        let mut out = self.truncate(order);
        for (o, v) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *o -= v;
        }
        out
    }

    /// Truncated product at the smaller of the two orders.
    pub fn mul(&self, other: &Jet) -> Jet {
        let order = self.order.min(other.order);
        let mut out = self.zeros_like(order);
        let pairs = &self.layout.pairs[..self.layout.pair_count[order]];
        for &(i, j, k) in pairs {
            out.coeffs[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        out
    }

    /// `Σ_{j≤q} a_j hʲ` where `h = self − value`, evaluated by Horner's rule.
    fn compose(&self, series: &[f64]) -> Jet {
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let q = self.order;
        let mut acc = self.zeros_like(q);
        acc.coeffs[0] = series[q];
        for j in (0..q).rev() {
            acc = acc.mul(&h);
            acc.coeffs[0] += series[j];
        }
        acc
    }

    pub fn powi(&self, e: u32) -> Jet {
        let u0 = self.value();
        let q = self.order;
        // generalized binomial: C(e, j) u0^(e-j)
        let series: Vec<f64> = (0..=q)
            .map(|j| {
                if j as u32 > e {
                    return 0.0;
                }
                let mut binom = 1.0;
                for r in 0..j {
                    binom *= (e as f64 - r as f64) / (r as f64 + 1.0);
                }
                binom * u0.powi((e - j as u32) as i32)
            })
            .collect();
        self.compose(&series)
    }

    pub fn exp(&self) -> Jet {
        let e0 = self.value().exp();
        let mut fact = 1.0;
        let series: Vec<f64> = (0..=self.order)
            .map(|j| {
                if j > 0 {
                    fact *= j as f64;
                }
                e0 / fact
            })
            .collect();
        self.compose(&series)
    }

    pub fn ln(&self) -> Result<Jet, JetError> {
        let u0 = self.value();
        if !(u0 > 0.0) {
            return Err(JetError::LogOfNonPositive(u0));
        }
        let series: Vec<f64> = (0..=self.order)
            .map(|j| {
                if j == 0 {
                    u0.ln()
                } else {
                    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                    sign / (j as f64 * u0.powi(j as i32))
                }
            })
            .collect();
        Ok(self.compose(&series))
    }

    fn trig(&self, phase: usize) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let mut fact = 1.0;
        let series: Vec<f64> = (0..=self.order)
            .map(|j| {
                if j > 0 {
                    fact *= j as f64;
                }
                cycle[(j + phase) % 4] / fact
            })
            .collect();
        self.compose(&series)
    }

    pub fn sin(&self) -> Jet {
        self.trig(0)
    }

    pub fn cos(&self) -> Jet {
        self.trig(1)
    }

    /// `∂f/∂p_v`, one order lower.
    pub fn partial(&self, v: usize) -> Result<Jet, JetError> {
        if self.order == 0 {
            return Err(JetError::OrderExhausted { needed: 1, have: 0 });
        }
        let mut out = self.zeros_like(self.order - 1);
        for (idx, o) in out.coeffs.iter_mut().enumerate() {
            let up = self.layout.raise(idx, v).expect("raise within order");
            let e = self.layout.exponents(up)[v] as f64;
            *o = e * self.coeffs[up];
        }
        Ok(out)
    }

    /// Multiplies by the local coordinate `h_v = p_v − center_v`, truncating
    /// at the current order.
    pub fn mul_local_coordinate(&self, v: usize) -> Jet {
        let mut out = self.zeros_like(self.order);
        let top = self.layout.len(self.order);
        for idx in 0..self.layout.len(self.order.saturating_sub(1)) {
            if let Some(up) = self.layout.raise(idx, v) {
                if up < top {
                    out.coeffs[up] += self.coeffs[idx];
                }
            }
        }
        out
    }
}
