//! Small dense symmetric eigenproblems.
//!
//! Every matrix in this crate that needs a spectrum is at most 16×16 and
//! symmetric, so a cyclic Jacobi sweep is both the simplest and the most
//! accurate option. Matrices are plain row-major `Vec<Vec<f64>>`.

/// Off-diagonal Frobenius norm below which iteration stops, relative to the
/// Frobenius norm of the input.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

/// Sweep cap for [`symmetric_eigen`].
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
    /// Number of full sweeps performed.
    pub sweeps: usize,
}

impl SymmetricEigen {
    pub fn max(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    pub fn min(&self) -> f64 {
        *self.values.first().unwrap_or(&0.0)
    }
}

fn off_norm(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i][j] * a[i][j];
            }
        }
    }
    s.sqrt()
}

fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cyclic Jacobi eigen-decomposition.
///
/// The input is symmetrized as `(A + Aᵀ)/2` before rotating, so tiny
/// asymmetries from accumulated sums do not matter.
pub fn symmetric_eigen(input: &[Vec<f64>]) -> SymmetricEigen {
    let n = input.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (input[i][j] + input[j][i])).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let scale = frobenius(&a).max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS && off_norm(&a) > JACOBI_TOLERANCE * scale {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    SymmetricEigen {
        values: order.iter().map(|&i| a[i][i]).collect(),
        vectors: order
            .iter()
            .map(|&i| (0..n).map(|k| v[k][i]).collect())
            .collect(),
        sweeps,
    }
}

/// Singular values of the matrix whose rows are `rows`, descending.
///
/// One-sided (Hestenes) Jacobi: rows are rotated pairwise until mutually
/// orthogonal, and the singular values are the final row norms. Unlike the
/// Gram-matrix route this keeps relative accuracy near machine epsilon for
/// the small singular values that decide rank.
pub fn singular_values(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut u: Vec<Vec<f64>> = rows.to_vec();
    let r = u.len();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..r {
            for q in (p + 1)..r {
                let alpha = dot(&u[p], &u[p]);
                let beta = dot(&u[q], &u[q]);
                let gamma = dot(&u[p], &u[q]);
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (head, tail) = u.split_at_mut(q);
                for (a, b) in head[p].iter_mut().zip(tail[0].iter_mut()) {
                    let x = *a;
                    let y = *b;
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = u.iter().map(|row| norm(row)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank of the rows of `rows` (each row a vector of equal length).
///
/// Singular values at or below `rel_threshold × σ_max` count as zero.
pub fn row_rank(rows: &[Vec<f64>], rel_threshold: f64) -> usize {
    let sv = singular_values(rows);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_threshold * smax).count()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Spectral norm of a (not necessarily square) matrix.
pub fn spectral_norm(a: &[Vec<f64>]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let cols = a[0].len();
    let ata: Vec<Vec<f64>> = (0..cols)
        .map(|i| {
            (0..cols)
                .map(|j| a.iter().map(|r| r[i] * r[j]).sum())
                .collect()
        })
        .collect();
    symmetric_eigen(&ata).max().max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_is_its_own_spectrum() {
        let a = vec![vec![3.0, 0.0], vec![0.0, -1.0]];
        let e = symmetric_eigen(&a);
        assert_eq!(e.values, vec![-1.0, 3.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let e = symmetric_eigen(&a);
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        let v = &e.vectors[1];
        assert!((v[0].abs() - v[1].abs()).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_random_matrix() {
        // fixed pseudo-random symmetric 5x5
        let mut s = 7u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let n = 5;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let x = next();
                a[i][j] = x;
                a[j][i] = x;
            }
        }
        let e = symmetric_eigen(&a);
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n)
                    .map(|k| e.values[k] * e.vectors[k][i] * e.vectors[k][j])
                    .sum();
                assert!((r - a[i][j]).abs() < 1e-12, "{i},{j}: {r} vs {}", a[i][j]);
            }
        }
        let trace: f64 = (0..n).map(|i| a[i][i]).sum();
        assert!((e.values.iter().sum::<f64>() - trace).abs() < 1e-12);
    }

    #[test]
    fn rank_detects_dependence() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]];
        assert_eq!(row_rank(&rows, 1e-10), 1);
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        assert_eq!(row_rank(&rows, 1e-10), 2);
        assert_eq!(row_rank(&[vec![0.0, 0.0]], 1e-10), 0);
        // dependent up to 1e-13 relative perturbation still reads as rank 1
        let rows = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0 + 1e-13]];
        assert_eq!(row_rank(&rows, 1e-10), 1);
        let rows = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0 + 1e-6]];
        assert_eq!(row_rank(&rows, 1e-10), 2);
    }

    #[test]
    fn singular_values_of_diagonal() {
        let sv = singular_values(&[vec![0.0, -3.0], vec![2.0, 0.0]]);
        assert!((sv[0] - 3.0).abs() < 1e-15 && (sv[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_norm_of_rotation_generator() {
        let b = vec![vec![0.0, 1.0], vec![-1.0, 0.0]];
        assert!((spectral_norm(&b) - 1.0).abs() < 1e-14);
    }
}
