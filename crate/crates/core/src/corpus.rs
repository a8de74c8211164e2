//! Seeded random test functions and evaluation points.
//!
//! Polynomials of total degree at most four with uniform coefficients, and
//! Gaussian bumps `A·exp(−Σ wₐ(uₐ − cₐ)²)`. Sample `i` of a corpus depends
//! only on `(seed, i)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::group::Point;
use crate::jet::{Expr, Layout};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub samples: usize,
    pub max_degree: usize,
    pub coefficient_bound: f64,
    /// Points are drawn uniformly from `[−box, box]^(n+m)`.
    #[serde(rename = "box")]
    pub half_box: f64,
    pub epsilon_range: (f64, f64),
    /// Fraction of samples that are bumps rather than polynomials.
    pub bump_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 20_240_611,
            samples: 10_000,
            max_degree: 4,
            coefficient_bound: 2.0,
            half_box: 3.0,
            epsilon_range: (0.1, 10.0),
            bump_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSample {
    pub id: usize,
    pub f: Expr,
    pub point: Point,
    pub epsilon: f64,
}

/// Dense random polynomial in `dim` variables.
pub fn random_polynomial<R: Rng>(rng: &mut R, n: usize, m: usize, degree: usize, bound: f64) -> Expr {
    let dim = n + m;
    let layout = Layout::get(dim);
    let mut terms: Vec<Expr> = Vec::new();
    for idx in 0..layout.len(degree.min(crate::jet::MAX_ORDER)) {
        let c = rng.random_range(-bound..=bound);
        let mut term = Expr::constant(c);
        for (slot, &e) in layout.exponents(idx).iter().enumerate() {
            if e == 0 {
                continue;
            }
            let v = if slot < n { Expr::x(slot) } else { Expr::z(slot - n) };
            let factor = if e == 1 { v } else { v.pow(e as u32) };
            term = term * factor;
        }
        terms.push(term);
    }
    terms.into_iter().reduce(|a, b| a + b).unwrap_or(Expr::constant(0.0))
}

/// `A·exp(−Σ wₐ(uₐ − cₐ)²)`.
pub fn random_bump<R: Rng>(rng: &mut R, n: usize, m: usize, half_box: f64) -> Expr {
    let amplitude = rng.random_range(0.5..=2.0);
    let mut q: Option<Expr> = None;
    for slot in 0..n + m {
        let w = rng.random_range(0.05..=0.5);
        let c = rng.random_range(-half_box..=half_box);
        let v = if slot < n { Expr::x(slot) } else { Expr::z(slot - n) };
        let term = Expr::constant(w) * (v - Expr::constant(c)).pow(2);
        q = Some(match q {
            None => term,
            Some(acc) => acc + term,
        });
    }
    Expr::constant(amplitude) * (-q.expect("dimension is positive")).exp()
}

pub fn random_point<R: Rng>(rng: &mut R, n: usize, m: usize, half_box: f64) -> Point {
    let coords: Vec<f64> = (0..n + m).map(|_| rng.random_range(-half_box..=half_box)).collect();
    Point::from_coords(&coords, n)
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

impl CorpusConfig {
    pub fn sample(&self, n: usize, m: usize, id: usize) -> CorpusSample {
        let mut rng = stream(self.seed, id as u64);
        let f = if rng.random_bool(self.bump_fraction.clamp(0.0, 1.0)) {
            random_bump(&mut rng, n, m, self.half_box)
        } else {
            let degree = rng.random_range(1..=self.max_degree.max(1));
            random_polynomial(&mut rng, n, m, degree, self.coefficient_bound)
        };
        let point = random_point(&mut rng, n, m, self.half_box);
        let epsilon = log_uniform(&mut rng, self.epsilon_range);
        CorpusSample { id, f, point, epsilon }
    }

    pub fn generate(&self, n: usize, m: usize) -> Vec<CorpusSample> {
        (0..self.samples)
            .into_par_iter()
            .map(|id| self.sample(n, m, id))
            .collect()
    }
}
