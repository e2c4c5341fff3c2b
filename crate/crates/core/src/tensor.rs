//! Traceless symmetric 3×3 tensors (the space S₀), the quartic bulk
//! potential and the vacuum manifold.
//!
//! A [`QTensor`] stores five coordinates in a fixed orthonormal basis of S₀
//! under the Frobenius product `A:B = A_ij B_ij`, so `|Q|² = Σ c_k²` and the
//! bulk gradient is an ordinary 5-vector gradient.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT6: f64 = 2.449_489_742_783_178;

/// Tolerance used by [`QTensor::from_matrix`].
pub const MATRIX_TOL: f64 = 1e-10;

/// A point of S₀ in the basis
/// `E1 = diag(2,-1,-1)/√6`, `E2 = diag(0,1,-1)/√2`,
/// `E3 = (e1e2+e2e1)/√2`, `E4 = (e1e3+e3e1)/√2`, `E5 = (e2e3+e3e2)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QTensor(pub [f64; 5]);

impl QTensor {
    pub const ZERO: QTensor = QTensor([0.0; 5]);

    pub fn new(c: [f64; 5]) -> Self {
        QTensor(c)
    }

    /// Coordinates of a symmetric traceless matrix, rejecting inputs that
    /// leave S₀ by more than `tol` (absolute, scaled by `1 + |M|`).
    pub fn from_matrix_tol(m: &Matrix3<f64>, tol: f64) -> Result<Self> {
        let asym = (m - m.transpose()).norm();
        let trace = m.trace();
        let scale = 1.0 + m.norm();
        if asym > tol * scale || trace.abs() > tol * scale {
            return Err(Error::NotInS0 { asym, trace });
        }
        Ok(Self::project(m))
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        Self::from_matrix_tol(m, MATRIX_TOL)
    }

    /// Orthogonal projection of an arbitrary 3×3 matrix onto S₀.
    pub fn project(m: &Matrix3<f64>) -> Self {
        let s = |i: usize, j: usize| 0.5 * (m[(i, j)] + m[(j, i)]);
        QTensor([
            (2.0 * m[(0, 0)] - m[(1, 1)] - m[(2, 2)]) / SQRT6,
            (m[(1, 1)] - m[(2, 2)]) / SQRT2,
            SQRT2 * s(0, 1),
            SQRT2 * s(0, 2),
            SQRT2 * s(1, 2),
        ])
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let [c1, c2, c3, c4, c5] = self.0;
        let d0 = 2.0 * c1 / SQRT6;
        let d1 = -c1 / SQRT6 + c2 / SQRT2;
        let d2 = -c1 / SQRT6 - c2 / SQRT2;
        let (o01, o02, o12) = (c3 / SQRT2, c4 / SQRT2, c5 / SQRT2);
        Matrix3::new(d0, o01, o02, o01, d1, o12, o02, o12, d2)
    }

    /// `s (n⊗n − I/3)` for a director `n` (normalized internally).
    pub fn uniaxial(n: [f64; 3], s: f64) -> Self {
        let v = Vector3::from(n).normalize();
        let m = (v * v.transpose() - Matrix3::identity() / 3.0) * s;
        Self::project(&m)
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &QTensor) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    /// `(tr Q², tr Q³)`.
    pub fn invariants(&self) -> (f64, f64) {
        (self.norm_sq(), tr_cube(&self.0))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Eigenvalues in descending order with matching unit eigenvectors.
    pub fn eigen(&self) -> ([f64; 3], [[f64; 3]; 3]) {
        let eig = SymmetricEigen::new(self.to_matrix());
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals = idx.map(|i| eig.eigenvalues[i]);
        let vecs = idx.map(|i| {
            let c = eig.eigenvectors.column(i);
            [c[0], c[1], c[2]]
        });
        (vals, vecs)
    }

    /// Gap between the largest and middle eigenvalue together with the
    /// leading eigenvector.
    pub fn leading_director(&self) -> (f64, [f64; 3]) {
        let (vals, vecs) = self.eigen();
        (vals[0] - vals[1], vecs[0])
    }
}

/// `tr Q³` directly from coordinates; `tr Q³ = 3 det Q` on S₀.
fn tr_cube(c: &[f64; 5]) -> f64 {
    let [c1, c2, c3, c4, c5] = *c;
    let d0 = 2.0 * c1 / SQRT6;
    let d1 = -c1 / SQRT6 + c2 / SQRT2;
    let d2 = -c1 / SQRT6 - c2 / SQRT2;
    let (a, b, e) = (c3 / SQRT2, c4 / SQRT2, c5 / SQRT2);
    let det = d0 * (d1 * d2 - e * e) - a * (a * d2 - e * b) + b * (a * e - d1 * b);
    3.0 * det
}

impl Add for QTensor {
    type Output = QTensor;
    fn add(mut self, rhs: QTensor) -> QTensor {
        self += rhs;
        self
    }
}

impl AddAssign for QTensor {
    fn add_assign(&mut self, rhs: QTensor) {
        for k in 0..5 {
            self.0[k] += rhs.0[k];
        }
    }
}

impl Sub for QTensor {
    type Output = QTensor;
    fn sub(mut self, rhs: QTensor) -> QTensor {
        self -= rhs;
        self
    }
}

impl SubAssign for QTensor {
    fn sub_assign(&mut self, rhs: QTensor) {
        for k in 0..5 {
            self.0[k] -= rhs.0[k];
        }
    }
}

impl Mul<QTensor> for f64 {
    type Output = QTensor;
    fn mul(self, rhs: QTensor) -> QTensor {
        QTensor(rhs.0.map(|c| self * c))
    }
}

impl Neg for QTensor {
    type Output = QTensor;
    fn neg(self) -> QTensor {
        QTensor(self.0.map(|c| -c))
    }
}

/// Coefficients of the bulk potential
/// `f(Q) = k − (a/2) tr Q² − (b/3) tr Q³ + (c/4) (tr Q²)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
    pub s_star: f64,
    /// Bulk-potential threshold separating defect cores from the
    /// near-vacuum region.
    pub eta_core: f64,
}

impl MaterialParams {
    /// Derives `k`, `s_*` and the default core threshold from `(a, b, c)`.
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && c > 0.0) || !(a + b + c).is_finite() {
            return Err(Error::InvalidParams(format!(
                "need a >= 0, b >= 0, c > 0; got a={a}, b={b}, c={c}"
            )));
        }
        let s_star = s_star(a, b, c);
        let mut mp = MaterialParams {
            a,
            b,
            c,
            k: additive_k(a, b, c),
            s_star,
            eta_core: 0.0,
        };
        mp.eta_core = default_eta_core(&mp);
        Ok(mp)
    }

    pub fn with_eta_core(mut self, eta_core: f64) -> Self {
        self.eta_core = eta_core;
        self
    }

    /// `|Q|` on the vacuum manifold.
    pub fn vacuum_norm(&self) -> f64 {
        (2.0f64 / 3.0).sqrt() * self.s_star
    }

    /// The uniform L^∞ bound `M = 2 √(2/3) s_*` kept along the flow.
    pub fn linf_bound(&self) -> f64 {
        2.0 * self.vacuum_norm()
    }

    /// Upper bound on the operator norm of the Hessian of `f` on `|Q| ≤ m`.
    pub fn hessian_bound(&self, m: f64) -> f64 {
        self.a + 2.0 * (2.0f64 / 3.0).sqrt() * self.b * m + 3.0 * self.c * m * m
    }

    /// f along the uniaxial ray `s (n⊗n − I/3)`.
    pub fn uniaxial_potential(&self, s: f64) -> f64 {
        self.k - self.a * s * s / 3.0 - 2.0 * self.b * s.powi(3) / 27.0 + self.c * s.powi(4) / 9.0
    }
}

pub fn s_star(a: f64, b: f64, c: f64) -> f64 {
    (b + (b * b + 24.0 * a * c).sqrt()) / (4.0 * c)
}

/// The constant making `inf f = 0`, from the uniaxial reduction
/// `f(s) = k − a s²/3 − 2b s³/27 + c s⁴/9` evaluated at `s_*`.
pub fn additive_k(a: f64, b: f64, c: f64) -> f64 {
    let s = s_star(a, b, c);
    a * s * s / 3.0 + 2.0 * b * s.powi(3) / 27.0 - c * s.powi(4) / 9.0
}

/// Half the bulk potential at the midpoint of two vacuum states with
/// orthogonal directors.
pub fn default_eta_core(mp: &MaterialParams) -> f64 {
    let p = QTensor::uniaxial([1.0, 0.0, 0.0], mp.s_star);
    let q = QTensor::uniaxial([0.0, 1.0, 0.0], mp.s_star);
    0.5 * bulk_potential(&(0.5 * (p + q)), mp)
}

pub fn bulk_potential(q: &QTensor, mp: &MaterialParams) -> f64 {
    let (t2, t3) = q.invariants();
    mp.k - 0.5 * mp.a * t2 - mp.b / 3.0 * t3 + 0.25 * mp.c * t2 * t2
}

/// The S₀ gradient `−aQ − b(Q² − |Q|²I/3) + c|Q|²Q` of the bulk potential.
pub fn bulk_gradient(q: &QTensor, mp: &MaterialParams) -> QTensor {
    let t2 = q.norm_sq();
    let sq = square_traceless(q);
    let lin = -mp.a + mp.c * t2;
    let mut g = [0.0; 5];
    for k in 0..5 {
        g[k] = lin * q.0[k] - mp.b * sq.0[k];
    }
    QTensor(g)
}

/// Traceless part of Q², in coordinates.
fn square_traceless(q: &QTensor) -> QTensor {
    let m = q.to_matrix();
    QTensor::project(&(m * m))
}

/// Nearest point of the vacuum manifold, `s_*(n⊗n − I/3)` with `n` the
/// leading eigenvector. Fails when the leading eigenvalue is not separated
/// from the middle one by more than `1e-8 (1 + |Q|)`.
pub fn project_vacuum(q: &QTensor, mp: &MaterialParams) -> Result<QTensor> {
    project_vacuum_tol(q, mp, 1e-8 * (1.0 + q.norm()))
}

pub fn project_vacuum_tol(q: &QTensor, mp: &MaterialParams, gap_tol: f64) -> Result<QTensor> {
    let (gap, n) = q.leading_director();
    if !(gap > gap_tol) {
        return Err(Error::DegenerateTensor { gap, tol: gap_tol });
    }
    Ok(QTensor::uniaxial(n, mp.s_star))
}

/// Distance from `q` to the vacuum manifold (via the projection).
pub fn vacuum_distance(q: &QTensor, mp: &MaterialParams) -> Result<f64> {
    Ok((*q - project_vacuum(q, mp)?).norm())
}
