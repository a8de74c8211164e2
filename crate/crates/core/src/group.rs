//! Step-2 Carnot groups in exponential coordinates.
//!
//! A group is ℝⁿ×ℝᵐ with product
//!
//! ```text
//! (x, z) · (x', z') = (x + x', z + z' + ½ (xᵀB⁽¹⁾x', …, xᵀB⁽ᵐ⁾x'))
//! ```
//!
//! for skew-symmetric `n×n` matrices `B⁽ᵏ⁾`. The structure constants are read
//! straight off the matrices, `γᵢⱼᵏ = B⁽ᵏ⁾ᵢⱼ`, and the left-invariant frame is
//!
//! ```text
//! Xᵢ = ∂/∂xᵢ − ½ Σⱼ Σₖ γᵢⱼᵏ xⱼ ∂/∂zₖ,   Zₖ = ∂/∂zₖ,
//! E  = Σ xᵢ ∂/∂xᵢ + 2 Σ zₖ ∂/∂zₖ.
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Largest ambient dimension `n + m` accepted.
pub const MAX_DIM: usize = 16;

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// Absolute tolerance on `B + Bᵀ`, relative to the largest entry.
const SKEW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("{pointer}: matrix B^({matrix}) is not skew-symmetric at ({row}, {col})")]
    SkewSymmetryViolation {
        pointer: String,
        matrix: usize,
        row: usize,
        col: usize,
    },
    #[error("{pointer}: matrix B^({matrix}) is linearly dependent on the previous ones (rank {rank} < {expected})")]
    DependentMatrices {
        pointer: String,
        matrix: usize,
        rank: usize,
        expected: usize,
    },
    #[error("{pointer}: bracket map has rank {rank} < {expected}, the horizontal layer does not generate the vertical one")]
    NotBracketGenerating {
        pointer: String,
        rank: usize,
        expected: usize,
    },
    #[error("{pointer}: {message}")]
    Shape { pointer: String, message: String },
    #[error("{pointer}: entry is not finite")]
    NonFinite { pointer: String },
    #[error("dilation scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("point has dimensions ({got_n}, {got_m}), group expects ({n}, {m})")]
    PointShape {
        n: usize,
        m: usize,
        got_n: usize,
        got_m: usize,
    },
    #[error("invalid group-spec JSON: {0}")]
    Json(String),
}

impl GroupError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            GroupError::SkewSymmetryViolation { .. } => "SkewSymmetryViolation",
            GroupError::DependentMatrices { .. } => "DependentMatrices",
            GroupError::NotBracketGenerating { .. } => "NotBracketGenerating",
            GroupError::Shape { .. } => "ShapeMismatch",
            GroupError::NonFinite { .. } => "NonFinite",
            GroupError::NonPositiveScale(_) => "NonPositiveScale",
            GroupError::PointShape { .. } => "PointShape",
            GroupError::Json(_) => "InvalidJson",
        }
    }
}

/// User-facing description of a group, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub n: usize,
    pub m: usize,
    /// `B[k][i][j]`, row-major.
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
}

impl GroupSpec {
    pub fn from_json(text: &str) -> Result<Self, GroupError> {
        serde_json::from_str(text).map_err(|e| GroupError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("group spec serializes")
    }
}

/// The three-dimensional Heisenberg group, `B⁽¹⁾ = [[0, 1], [−1, 0]]`.
pub fn builtin_heisenberg() -> GroupSpec {
    GroupSpec {
        name: "heisenberg".into(),
        n: 2,
        m: 1,
        b: vec![vec![vec![0.0, 1.0], vec![-1.0, 0.0]]],
    }
}

/// `copies` independent Heisenberg factors: `n = 2·copies`, `m = copies`,
/// block-diagonal `B⁽ᵏ⁾`.
pub fn heisenberg_product(copies: usize) -> GroupSpec {
    let n = 2 * copies;
    let b = (0..copies)
        .map(|k| {
            let mut mat = vec![vec![0.0; n]; n];
            mat[2 * k][2 * k + 1] = 1.0;
            mat[2 * k + 1][2 * k] = -1.0;
            mat
        })
        .collect();
    GroupSpec {
        name: format!("heisenberg^{copies}"),
        n,
        m: copies,
        b,
    }
}

/// A spec that has passed [`validate_spec`]. Immutable; cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSpec {
    spec: GroupSpec,
    bracket_rank: usize,
}

fn pointer(parts: &[usize]) -> String {
    let mut s = String::from("/B");
    for p in parts {
        s.push('/');
        s.push_str(&p.to_string());
    }
    s
}

/// Checks shape, skew-symmetry, non-degeneracy, linear independence and the
/// bracket-generating condition, in that order.
pub fn validate_spec(spec: GroupSpec) -> Result<ValidatedSpec, GroupError> {
    let (n, m) = (spec.n, spec.m);
    if n < 2 {
        return Err(GroupError::Shape {
            pointer: "/n".into(),
            message: format!("horizontal dimension must be at least 2, got {n}"),
        });
    }
    if m < 1 {
        return Err(GroupError::Shape {
            pointer: "/m".into(),
            message: "vertical dimension must be at least 1".into(),
        });
    }
    if n + m > MAX_DIM {
        return Err(GroupError::Shape {
            pointer: "/n".into(),
            message: format!("n + m = {} exceeds the limit {MAX_DIM}", n + m),
        });
    }
    if spec.b.len() != m {
        return Err(GroupError::Shape {
            pointer: "/B".into(),
            message: format!("expected {m} matrices, found {}", spec.b.len()),
        });
    }
    for (k, mat) in spec.b.iter().enumerate() {
        if mat.len() != n {
            return Err(GroupError::Shape {
                pointer: pointer(&[k]),
                message: format!("expected {n} rows, found {}", mat.len()),
            });
        }
        for (i, row) in mat.iter().enumerate() {
            if row.len() != n {
                return Err(GroupError::Shape {
                    pointer: pointer(&[k, i]),
                    message: format!("expected {n} columns, found {}", row.len()),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(GroupError::NonFinite {
                    pointer: pointer(&[k, i, j]),
                });
            }
        }
    }

    for (k, mat) in spec.b.iter().enumerate() {
        let scale = mat
            .iter()
            .flatten()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            .max(1.0);
        for i in 0..n {
            for j in i..n {
                if (mat[i][j] + mat[j][i]).abs() > SKEW_TOLERANCE * scale {
                    return Err(GroupError::SkewSymmetryViolation {
                        pointer: pointer(&[k, i, j]),
                        matrix: k,
                        row: i,
                        col: j,
                    });
                }
            }
        }
    }

    // A zero matrix contributes no bracket direction at all.
    for (k, mat) in spec.b.iter().enumerate() {
        if mat.iter().flatten().all(|v| *v == 0.0) {
            return Err(GroupError::NotBracketGenerating {
                pointer: pointer(&[k]),
                rank: linalg::row_rank(&flattened(&spec), RANK_THRESHOLD),
                expected: m,
            });
        }
    }

    let flat = flattened(&spec);
    for k in 1..=m {
        let rank = linalg::row_rank(&flat[..k], RANK_THRESHOLD);
        if rank < k {
            return Err(GroupError::DependentMatrices {
                pointer: pointer(&[k - 1]),
                matrix: k - 1,
                rank,
                expected: k,
            });
        }
    }

    let bracket_rank = linalg::row_rank(&bracket_matrix(&spec), RANK_THRESHOLD);
    if bracket_rank < m {
        return Err(GroupError::NotBracketGenerating {
            pointer: "/B".into(),
            rank: bracket_rank,
            expected: m,
        });
    }

    Ok(ValidatedSpec { spec, bracket_rank })
}

fn flattened(spec: &GroupSpec) -> Vec<Vec<f64>> {
    spec.b
        .iter()
        .map(|mat| mat.iter().flatten().copied().collect())
        .collect()
}

/// `m × n(n−1)/2` matrix of `γᵢⱼᵏ` over pairs `i < j`.
fn bracket_matrix(spec: &GroupSpec) -> Vec<Vec<f64>> {
    spec.b
        .iter()
        .map(|mat| {
            let mut row = Vec::with_capacity(spec.n * (spec.n - 1) / 2);
            for i in 0..spec.n {
                for j in (i + 1)..spec.n {
                    row.push(mat[i][j]);
                }
            }
            row
        })
        .collect()
}

impl ValidatedSpec {
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Horizontal dimension.
    pub fn n(&self) -> usize {
        self.spec.n
    }

    /// Vertical dimension.
    pub fn m(&self) -> usize {
        self.spec.m
    }

    /// Ambient dimension `n + m`.
    pub fn dim(&self) -> usize {
        self.spec.n + self.spec.m
    }

    pub fn bracket_rank(&self) -> usize {
        self.bracket_rank
    }

    /// `B⁽ᵏ⁾ᵢⱼ`.
    #[inline]
    pub fn b(&self, k: usize, i: usize, j: usize) -> f64 {
        self.spec.b[k][i][j]
    }

    pub fn matrix(&self, k: usize) -> &[Vec<f64>] {
        &self.spec.b[k]
    }

    /// `γᵢⱼᵏ = ⟨[eᵢ, eⱼ], εₖ⟩`.
    #[inline]
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.spec.b[k][i][j]
    }

    pub fn origin(&self) -> Point {
        Point::origin(self.n(), self.m())
    }

    fn check(&self, p: &Point) -> Result<(), GroupError> {
        if p.x.len() != self.n() || p.z.len() != self.m() {
            return Err(GroupError::PointShape {
                n: self.n(),
                m: self.m(),
                got_n: p.x.len(),
                got_m: p.z.len(),
            });
        }
        Ok(())
    }

    /// `½ xᵀB⁽ᵏ⁾y` for every `k`, added into `out`.
    #[inline]
    pub fn add_half_twist(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mat = &self.spec.b[k];
            let mut acc = 0.0;
            for (i, xi) in x.iter().enumerate() {
                if *xi == 0.0 {
                    continue;
                }
                acc += xi * linalg::dot(&mat[i], y);
            }
            *o += 0.5 * acc;
        }
    }

    /// Group product on flat coordinate slices `[x.., z..]`.
    pub fn mul_coords(&self, p: &[f64], q: &[f64], out: &mut [f64]) {
        let n = self.n();
        for a in 0..self.dim() {
            out[a] = p[a] + q[a];
        }
        self.add_half_twist(&p[..n], &q[..n], &mut out[n..]);
    }

    pub fn group_mul(&self, p: &Point, q: &Point) -> Result<Point, GroupError> {
        self.check(p)?;
        self.check(q)?;
        let x: Vec<f64> = p.x.iter().zip(&q.x).map(|(a, b)| a + b).collect();
        let mut z: Vec<f64> = p.z.iter().zip(&q.z).map(|(a, b)| a + b).collect();
        self.add_half_twist(&p.x, &q.x, &mut z);
        Ok(Point { x, z })
    }

    /// `(x, z)⁻¹ = (−x, −z)`; the twist term vanishes because `xᵀBx = 0`.
    pub fn group_inv(&self, p: &Point) -> Result<Point, GroupError> {
        self.check(p)?;
        Ok(Point {
            x: p.x.iter().map(|v| -v).collect(),
            z: p.z.iter().map(|v| -v).collect(),
        })
    }

    /// `δₜ(x, z) = (t x, t² z)`.
    pub fn dilate(&self, t: f64, p: &Point) -> Result<Point, GroupError> {
        if !(t > 0.0) {
            return Err(GroupError::NonPositiveScale(t));
        }
        self.check(p)?;
        Ok(Point {
            x: p.x.iter().map(|v| t * v).collect(),
            z: p.z.iter().map(|v| t * t * v).collect(),
        })
    }

    /// Coefficients of one field at `p` in the ambient basis
    /// `(∂x₁ … ∂xₙ, ∂z₁ … ∂zₘ)`.
    pub fn field_at(&self, field: Field, p: &Point) -> Vec<f64> {
        let affine = self.field_affine(field);
        let coords = p.coords();
        affine.eval(&coords)
    }

    pub fn frame_at(&self, p: &Point) -> Result<Frame, GroupError> {
        self.check(p)?;
        Ok(Frame {
            horizontal: (0..self.n()).map(|i| self.field_at(Field::X(i), p)).collect(),
            vertical: (0..self.m()).map(|k| self.field_at(Field::Z(k), p)).collect(),
            euler: self.field_at(Field::Euler, p),
        })
    }

    /// Every frame field has coefficients affine in the ambient coordinates.
    pub fn field_affine(&self, field: Field) -> AffineField {
        let (n, d) = (self.n(), self.dim());
        let mut af = AffineField {
            constant: vec![0.0; d],
            linear: vec![vec![0.0; d]; d],
        };
        match field {
            Field::X(i) => {
                assert!(i < n, "X_{} out of range", i + 1);
                af.constant[i] = 1.0;
                for k in 0..self.m() {
                    for j in 0..n {
                        af.linear[n + k][j] = -0.5 * self.structure_constant(i, j, k);
                    }
                }
            }
            Field::Z(k) => {
                assert!(k < self.m(), "Z_{} out of range", k + 1);
                af.constant[n + k] = 1.0;
            }
            Field::Euler => {
                for a in 0..d {
                    af.linear[a][a] = if a < n { 1.0 } else { 2.0 };
                }
            }
        }
        af
    }
}

/// One of the distinguished vector fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    /// Horizontal left-invariant field `X_{i+1}` (zero-based index).
    X(usize),
    /// Vertical field `Z_{k+1}` (zero-based index).
    Z(usize),
    /// Weighted Euler field, the generator of `δ_{eˢ}`.
    Euler,
}

/// `c(p) = constant + linear · p`, coefficient-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    pub constant: Vec<f64>,
    /// `linear[a][b] = ∂c_a/∂p_b`.
    pub linear: Vec<Vec<f64>>,
}

impl AffineField {
    pub fn eval(&self, coords: &[f64]) -> Vec<f64> {
        self.constant
            .iter()
            .zip(&self.linear)
            .map(|(c, row)| c + linalg::dot(row, coords))
            .collect()
    }
}

/// The frame `X₁…Xₙ, Z₁…Zₘ, E` evaluated at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub horizontal: Vec<Vec<f64>>,
    pub vertical: Vec<Vec<f64>>,
    pub euler: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl Point {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Self {
        Point { x, z }
    }

    pub fn origin(n: usize, m: usize) -> Self {
        Point {
            x: vec![0.0; n],
            z: vec![0.0; m],
        }
    }

    /// Splits flat `[x.., z..]` coordinates.
    pub fn from_coords(coords: &[f64], n: usize) -> Self {
        Point {
            x: coords[..n].to_vec(),
            z: coords[n..].to_vec(),
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.x.clone();
        c.extend_from_slice(&self.z);
        c
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.z).all(|v| v.is_finite())
    }

    /// Parses `"1,2,3"` into `(x, z)` for a group with horizontal dimension `n`.
    pub fn parse(text: &str, n: usize, m: usize) -> Result<Self, String> {
        let vals: Result<Vec<f64>, _> = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect();
        let vals = vals.map_err(|e| format!("bad coordinate list {text:?}: {e}"))?;
        if vals.len() != n + m {
            return Err(format!(
                "expected {} coordinates, got {}",
                n + m,
                vals.len()
            ));
        }
        Ok(Point::from_coords(&vals, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heis() -> ValidatedSpec {
        validate_spec(builtin_heisenberg()).unwrap()
    }

    fn pt(v: &[f64]) -> Point {
        Point::from_coords(v, 2)
    }

    #[test]
    fn heisenberg_is_valid_with_rank_one() {
        assert_eq!(heis().bracket_rank(), 1);
    }

    #[test]
    fn zero_matrix_is_not_bracket_generating() {
        let mut s = builtin_heisenberg();
        s.b[0] = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let err = validate_spec(s).unwrap_err();
        assert!(matches!(err, GroupError::NotBracketGenerating { .. }), "{err}");
        assert_eq!(err.code(), "NotBracketGenerating");
    }

    #[test]
    fn asymmetric_entry_is_rejected_with_location() {
        let mut s = builtin_heisenberg();
        s.b[0] = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        match validate_spec(s).unwrap_err() {
            GroupError::SkewSymmetryViolation {
                pointer,
                matrix,
                row,
                col,
            } => {
                assert_eq!((matrix, row, col), (0, 0, 1));
                assert_eq!(pointer, "/B/0/0/1");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicated_matrix_is_dependent() {
        let mut s = heisenberg_product(2);
        s.b[1] = s.b[0].iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
        let err = validate_spec(s).unwrap_err();
        assert!(matches!(err, GroupError::DependentMatrices { matrix: 1, .. }), "{err}");
    }

    #[test]
    fn wrong_shapes_are_reported() {
        let mut s = builtin_heisenberg();
        s.m = 2;
        assert!(matches!(validate_spec(s).unwrap_err(), GroupError::Shape { .. }));
        let mut s = builtin_heisenberg();
        s.b[0][1] = vec![-1.0];
        match validate_spec(s).unwrap_err() {
            GroupError::Shape { pointer, .. } => assert_eq!(pointer, "/B/0/1"),
            e => panic!("{e}"),
        }
        let mut s = builtin_heisenberg();
        s.b[0][1][0] = f64::NAN;
        assert!(matches!(validate_spec(s).unwrap_err(), GroupError::NonFinite { .. }));
    }

    #[test]
    fn heisenberg_group_law() {
        let g = heis();
        let r = g.group_mul(&pt(&[1.0, 0.0, 0.0]), &pt(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(r, pt(&[1.0, 1.0, 0.5]));
        let p = pt(&[0.3, -2.0, 5.0]);
        assert_eq!(g.group_mul(&p, &g.origin()).unwrap(), p);
        assert_eq!(g.group_mul(&g.origin(), &p).unwrap(), p);
    }

    #[test]
    fn inverse_and_dilation_examples() {
        let g = heis();
        assert_eq!(g.group_inv(&pt(&[1.0, 2.0, 3.0])).unwrap(), pt(&[-1.0, -2.0, -3.0]));
        assert_eq!(g.group_inv(&g.origin()).unwrap(), g.origin());
        assert_eq!(g.dilate(2.0, &pt(&[1.0, 1.0, 1.0])).unwrap(), pt(&[2.0, 2.0, 4.0]));
        let p = pt(&[0.1, 0.2, 0.3]);
        assert_eq!(g.dilate(1.0, &p).unwrap(), p);
        assert_eq!(g.dilate(0.0, &p).unwrap_err(), GroupError::NonPositiveScale(0.0));
        assert!(g.dilate(-1.0, &p).is_err());
    }

    #[test]
    fn heisenberg_frame_matches_closed_form() {
        let g = heis();
        let (x, y, z) = (0.7, -1.3, 2.0);
        let f = g.frame_at(&pt(&[x, y, z])).unwrap();
        assert_eq!(f.horizontal[0], vec![1.0, 0.0, -y / 2.0]);
        assert_eq!(f.horizontal[1], vec![0.0, 1.0, x / 2.0]);
        assert_eq!(f.vertical[0], vec![0.0, 0.0, 1.0]);
        let e = g.frame_at(&pt(&[1.0, 0.0, 3.0])).unwrap().euler;
        assert_eq!(e, vec![1.0, 0.0, 6.0]);
    }

    #[test]
    fn point_shape_is_checked() {
        let g = heis();
        assert!(matches!(
            g.group_mul(&Point::origin(3, 1), &g.origin()),
            Err(GroupError::PointShape { .. })
        ));
    }

    #[test]
    fn json_round_trip_and_parse() {
        let text = r#"{"name":"h","n":2,"m":1,"B":[[[0,1],[-1,0]]]}"#;
        let s = GroupSpec::from_json(text).unwrap();
        assert_eq!(s.b, builtin_heisenberg().b);
        assert_eq!(GroupSpec::from_json(&s.to_json()).unwrap(), s);
        assert!(matches!(GroupSpec::from_json("{"), Err(GroupError::Json(_))));
        assert_eq!(Point::parse("1, 2,3", 2, 1).unwrap(), pt(&[1.0, 2.0, 3.0]));
        assert!(Point::parse("1,2", 2, 1).is_err());
    }
}
