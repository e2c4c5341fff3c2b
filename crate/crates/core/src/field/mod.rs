//! Q-tensor fields on uniform 2D or 3D grids.
//!
//! Nodes are stored x-fastest. A 2D grid is treated as a single z-layer and
//! its functionals are per unit length of the invariant z-axis.

mod bc;
mod ops;
mod phi;
pub mod qf1;

pub use bc::{constant_bc, disclination_bc, hedgehog_bc, BoundaryData, Domain};
pub use ops::directional_tensor;
pub use ops::{
    directional_energy, el_residual, energy, energy_density, gradient_tensor, hessian_norm,
    laplacian, lp_gradient_norm, node_gradient_sq, theta, theta_with, Densities, EnergyParts,
    Residual,
};
pub(crate) use ops::{energy_gradient_into, energy_nodes, quadratic_form, total_energy_and_linf};
pub use phi::PhiCutoff;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{MaterialParams, QTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    ndim: usize,
    dims: [usize; 3],
    h: f64,
    origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: &[usize], h: f64, origin: &[f64]) -> Result<Self> {
        let ndim = dims.len();
        if !(ndim == 2 || ndim == 3) {
            return Err(Error::InvalidGrid(format!(
                "expected 2 or 3 dims, got {ndim}"
            )));
        }
        if origin.len() != ndim {
            return Err(Error::InvalidGrid("origin length differs from dims".into()));
        }
        if dims.iter().any(|&n| n < 4) {
            return Err(Error::InvalidGrid(format!(
                "every axis needs >= 4 nodes, got {dims:?}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive, got {h}"
            )));
        }
        let mut d = [1usize; 3];
        let mut o = [0.0; 3];
        d[..ndim].copy_from_slice(dims);
        o[..ndim].copy_from_slice(origin);
        Ok(GridSpec {
            ndim,
            dims: d,
            h,
            origin: o,
        })
    }

    /// A grid whose geometric center is the coordinate origin.
    pub fn centered(dims: &[usize], h: f64) -> Result<Self> {
        let origin: Vec<f64> = dims.iter().map(|&n| -0.5 * (n as f64 - 1.0) * h).collect();
        Self::new(dims, h, &origin)
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    /// Active dimensions (length `ndim`).
    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.ndim]
    }

    /// Dimensions padded with 1 to three axes.
    pub fn dims3(&self) -> [usize; 3] {
        self.dims
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.ndim]
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `h^ndim`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.ndim as i32)
    }

    pub fn strides(&self) -> [usize; 3] {
        [1, self.dims[0], self.dims[0] * self.dims[1]]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    /// Physical position of a node (z = 0 on 2D grids).
    #[inline]
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        std::array::from_fn(|a| self.origin[a] + c[a] as f64 * self.h)
    }

    /// Physical bounding box `[lo, hi]` per active axis.
    pub fn bounds(&self) -> [[f64; 2]; 3] {
        std::array::from_fn(|a| {
            [
                self.origin[a],
                self.origin[a] + (self.dims[a] as f64 - 1.0) * self.h,
            ]
        })
    }

    /// True for nodes on the outer layer of the grid along an active axis.
    #[inline]
    pub fn is_edge(&self, idx: usize) -> bool {
        let c = self.coords(idx);
        (0..self.ndim).any(|a| c[a] == 0 || c[a] + 1 == self.dims[a])
    }

    /// Euclidean distance from `x` to the boundary of the bounding box
    /// (negative outside).
    pub fn distance_to_boundary(&self, x: [f64; 3]) -> f64 {
        let b = self.bounds();
        (0..self.ndim)
            .map(|a| (x[a] - b[a][0]).min(b[a][1] - x[a]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Nodes with `|y − x| < radius`, visiting only the bounding box.
    /// Returns `None` when the ball reaches an edge node or leaves the grid.
    pub fn ball_nodes(&self, x: [f64; 3], radius: f64) -> Option<Vec<usize>> {
        let (lo, hi) = self.index_box(x, radius)?;
        let r2 = radius * radius;
        let mut out = Vec::new();
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let idx = self.index(i, j, k);
                    if dist_sq(self.position(idx), x) < r2 {
                        out.push(idx);
                    }
                }
            }
        }
        Some(out)
    }

    /// Index box of a ball, requiring it to stay away from edge nodes.
    fn index_box(&self, x: [f64; 3], radius: f64) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut empty = false;
        for a in 0..self.ndim {
            let t_lo = ((x[a] - radius - self.origin[a]) / self.h).floor() as i64 + 1;
            let t_hi = ((x[a] + radius - self.origin[a]) / self.h).ceil() as i64 - 1;
            if t_lo < 1 || t_hi > self.dims[a] as i64 - 2 {
                return None;
            }
            if t_hi < t_lo {
                empty = true;
            } else {
                lo[a] = t_lo as usize;
                hi[a] = t_hi as usize;
            }
        }
        if empty {
            return Some(([1, 1, 1], [0, 0, 0]));
        }
        Some((lo, hi))
    }
}

#[inline]
pub(crate) fn dist_sq(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// A node set for integrals. Geometric regions must stay off the grid's
/// outer layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Every node, including the outer layer.
    All,
    Ball {
        center: [f64; 3],
        radius: f64,
    },
    Annulus {
        center: [f64; 3],
        inner: f64,
        outer: f64,
    },
    /// Axis-aligned box `lo <= y <= hi`.
    Box {
        lo: [f64; 3],
        hi: [f64; 3],
    },
    Nodes(Vec<usize>),
}

impl Region {
    pub fn nodes(&self, grid: &GridSpec) -> Result<Vec<usize>> {
        match self {
            Region::All => Ok((0..grid.len()).collect()),
            Region::Ball { center, radius } => grid
                .ball_nodes(*center, *radius)
                .ok_or(Error::RegionOutOfDomain),
            Region::Annulus {
                center,
                inner,
                outer,
            } => {
                let ball = grid
                    .ball_nodes(*center, *outer)
                    .ok_or(Error::RegionOutOfDomain)?;
                let r2 = inner * inner;
                Ok(ball
                    .into_iter()
                    .filter(|&i| dist_sq(grid.position(i), *center) > r2)
                    .collect())
            }
            Region::Box { lo, hi } => {
                let mut ilo = [0usize; 3];
                let mut ihi = [0usize; 3];
                for a in 0..3 {
                    if a >= grid.ndim() {
                        continue;
                    }
                    let l = ((lo[a] - grid.origin[a]) / grid.h - 1e-9).ceil() as i64;
                    let u = ((hi[a] - grid.origin[a]) / grid.h + 1e-9).floor() as i64;
                    if l < 1 || u > grid.dims[a] as i64 - 2 || u < l {
                        return Err(Error::RegionOutOfDomain);
                    }
                    ilo[a] = l as usize;
                    ihi[a] = u as usize;
                }
                let mut out = Vec::new();
                for k in ilo[2]..=ihi[2] {
                    for j in ilo[1]..=ihi[1] {
                        for i in ilo[0]..=ihi[0] {
                            out.push(grid.index(i, j, k));
                        }
                    }
                }
                Ok(out)
            }
            Region::Nodes(v) => {
                if v.iter().any(|&i| i >= grid.len()) {
                    return Err(Error::RegionOutOfDomain);
                }
                Ok(v.clone())
            }
        }
    }
}

/// A Q-tensor field with Dirichlet mask and elastic parameter ε.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldQ {
    pub grid: GridSpec,
    pub values: Vec<QTensor>,
    /// `true` marks Dirichlet nodes, which the solver never modifies.
    pub boundary_mask: Vec<bool>,
    pub epsilon: f64,
    pub params: MaterialParams,
}

impl FieldQ {
    /// A constant field with the outer layer fixed.
    pub fn constant(
        grid: GridSpec,
        value: QTensor,
        epsilon: f64,
        params: MaterialParams,
    ) -> Result<Self> {
        let n = grid.len();
        let mask = (0..n).map(|i| grid.is_edge(i)).collect();
        Self::from_parts(grid, vec![value; n], mask, epsilon, params)
    }

    pub fn from_parts(
        grid: GridSpec,
        values: Vec<QTensor>,
        boundary_mask: Vec<bool>,
        epsilon: f64,
        params: MaterialParams,
    ) -> Result<Self> {
        if values.len() != grid.len() || boundary_mask.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} nodes, got {} values and {} mask entries",
                grid.len(),
                values.len(),
                boundary_mask.len()
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(FieldQ {
            grid,
            values,
            boundary_mask,
            epsilon,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bulk_at(&self, idx: usize) -> f64 {
        crate::tensor::bulk_potential(&self.values[idx], &self.params)
    }

    /// Trilinear (bilinear in 2D) interpolation at a physical point inside the grid.
    pub fn sample(&self, x: [f64; 3]) -> Option<QTensor> {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..g.ndim() {
            let t = (x[a] - g.origin[a]) / g.h;
            if !(t >= 0.0 && t <= (g.dims[a] - 1) as f64) {
                return None;
            }
            let b = (t.floor() as usize).min(g.dims[a] - 2);
            base[a] = b;
            frac[a] = t - b as f64;
        }
        let mut acc = QTensor::ZERO;
        let corners = 1usize << g.ndim();
        for corner in 0..corners {
            let mut w = 1.0;
            let mut c = base;
            for a in 0..g.ndim() {
                if corner >> a & 1 == 1 {
                    c[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * self.values[g.index(c[0], c[1], c[2])];
            }
        }
        Some(acc)
    }

    /// Largest `|Q|` over the field.
    pub fn linf_norm(&self) -> f64 {
        crate::par::max(self.len(), |i| self.values[i].norm())
    }
}
