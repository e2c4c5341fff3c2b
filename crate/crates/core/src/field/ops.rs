//! Discrete differential operators and integrals.
//!
//! The Dirichlet density at a node averages the squared forward and backward
//! differences along each axis, `|∇Q|² = Σ_a ½(|D⁺_a Q|² + |D⁻_a Q|²)`, with a
//! missing neighbor contributing nothing. Summed over all nodes this is the
//! edge energy whose gradient is the 7-point (5-point in 2D) Laplacian with
//! natural boundary conditions, i.e. exactly the functional the solver
//! decreases.

use serde::{Deserialize, Serialize};

use super::{dist_sq, FieldQ, GridSpec, PhiCutoff, Region};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{bulk_gradient, bulk_potential, QTensor};

#[inline]
fn neighbors(grid: &GridSpec, idx: usize, a: usize) -> (Option<usize>, Option<usize>) {
    let c = grid.coords(idx);
    let s = grid.strides()[a];
    let plus = (c[a] + 1 < grid.dims3()[a]).then(|| idx + s);
    let minus = (c[a] > 0).then(|| idx - s);
    (plus, minus)
}

/// `|∇_h Q|²` at a node.
pub fn node_gradient_sq(field: &FieldQ, idx: usize) -> f64 {
    let g = &field.grid;
    let q = field.values[idx];
    let mut acc = 0.0;
    for a in 0..g.ndim() {
        let (p, m) = neighbors(g, idx, a);
        if let Some(p) = p {
            acc += 0.5 * (field.values[p] - q).norm_sq();
        }
        if let Some(m) = m {
            acc += 0.5 * (q - field.values[m]).norm_sq();
        }
    }
    acc / (g.h() * g.h())
}

/// Symmetric 3×3 tensor `G_ab ≈ ∂_a Q : ∂_b Q` whose trace is
/// [`node_gradient_sq`]. Off-diagonal entries use central differences.
pub fn gradient_tensor(field: &FieldQ, idx: usize) -> [[f64; 3]; 3] {
    let g = &field.grid;
    let h = g.h();
    let q = field.values[idx];
    let mut central = [QTensor::ZERO; 3];
    let mut out = [[0.0; 3]; 3];
    for a in 0..g.ndim() {
        let (p, m) = neighbors(g, idx, a);
        let mut diag = 0.0;
        if let Some(p) = p {
            diag += 0.5 * (field.values[p] - q).norm_sq();
        }
        if let Some(m) = m {
            diag += 0.5 * (q - field.values[m]).norm_sq();
        }
        out[a][a] = diag / (h * h);
        central[a] = match (p, m) {
            (Some(p), Some(m)) => (0.5 / h) * (field.values[p] - field.values[m]),
            (Some(p), None) => (1.0 / h) * (field.values[p] - q),
            (None, Some(m)) => (1.0 / h) * (q - field.values[m]),
            (None, None) => QTensor::ZERO,
        };
    }
    for a in 0..3 {
        for b in (a + 1)..3 {
            let v = central[a].dot(&central[b]);
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    out
}

/// Frobenius norm of the discrete Hessian `D²Q` (all five components);
/// `None` on the outer layer.
pub fn hessian_norm(field: &FieldQ, idx: usize) -> Option<f64> {
    let g = &field.grid;
    if g.is_edge(idx) {
        return None;
    }
    let h2 = g.h() * g.h();
    let s = g.strides();
    let v = &field.values;
    let q = v[idx];
    let mut acc = 0.0;
    for a in 0..g.ndim() {
        let d = (1.0 / h2) * (v[idx + s[a]] + v[idx - s[a]] - 2.0 * q);
        acc += d.norm_sq();
        for b in (a + 1)..g.ndim() {
            let d = (0.25 / h2)
                * (v[idx + s[a] + s[b]] - v[idx + s[a] - s[b]] - v[idx - s[a] + s[b]]
                    + v[idx - s[a] - s[b]]);
            acc += 2.0 * d.norm_sq();
        }
    }
    Some(acc.sqrt())
}

/// `e_ε = ½|∇Q|² + f(Q)/ε²` at a node.
pub fn energy_density(field: &FieldQ, idx: usize) -> f64 {
    0.5 * node_gradient_sq(field, idx) + field.bulk_at(idx) / (field.epsilon * field.epsilon)
}

/// Laplacian with natural boundary conditions at missing neighbors.
#[inline]
pub fn laplacian(grid: &GridSpec, values: &[QTensor], idx: usize) -> QTensor {
    let q = values[idx];
    let mut acc = QTensor::ZERO;
    for a in 0..grid.ndim() {
        let (p, m) = neighbors(grid, idx, a);
        if let Some(p) = p {
            acc += values[p] - q;
        }
        if let Some(m) = m {
            acc += values[m] - q;
        }
    }
    (1.0 / (grid.h() * grid.h())) * acc
}

/// Per-node gradient and bulk densities, computed once for repeated
/// integrals over the same field.
#[derive(Debug, Clone)]
pub struct Densities {
    pub gradient_sq: Vec<f64>,
    pub bulk: Vec<f64>,
    pub inv_eps_sq: f64,
}

impl Densities {
    pub fn new(field: &FieldQ) -> Self {
        let n = field.len();
        Densities {
            gradient_sq: par::map(n, |i| node_gradient_sq(field, i)),
            bulk: par::map(n, |i| field.bulk_at(i)),
            inv_eps_sq: 1.0 / (field.epsilon * field.epsilon),
        }
    }

    #[inline]
    pub fn energy(&self, idx: usize) -> f64 {
        0.5 * self.gradient_sq[idx] + self.bulk[idx] * self.inv_eps_sq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub dirichlet: f64,
    pub bulk: f64,
    pub total: f64,
}

/// `E_ε` over a region, split into its Dirichlet and bulk parts.
pub fn energy(field: &FieldQ, region: &Region) -> Result<EnergyParts> {
    let nodes = region.nodes(&field.grid)?;
    Ok(energy_nodes(field, &nodes))
}

pub(crate) fn energy_nodes(field: &FieldQ, nodes: &[usize]) -> EnergyParts {
    let w = field.grid.cell_volume();
    let dirichlet = w * par::sum(nodes.len(), |t| 0.5 * node_gradient_sq(field, nodes[t]));
    let bulk =
        w / (field.epsilon * field.epsilon) * par::sum(nodes.len(), |t| field.bulk_at(nodes[t]));
    EnergyParts {
        dirichlet,
        bulk,
        total: dirichlet + bulk,
    }
}

/// Discrete Euler-Lagrange residual `|−ε²Δ_h Q + Df(Q)|` per node (zero on
/// Dirichlet nodes) and its maximum.
#[derive(Debug, Clone)]
pub struct Residual {
    pub sup: f64,
    pub per_node: Vec<f64>,
}

pub fn el_residual(field: &FieldQ) -> Residual {
    let eps2 = field.epsilon * field.epsilon;
    let per_node = par::map(field.len(), |i| {
        if field.boundary_mask[i] {
            return 0.0;
        }
        let lap = laplacian(&field.grid, &field.values, i);
        (bulk_gradient(&field.values[i], &field.params) - eps2 * lap).norm()
    });
    let sup = per_node.iter().copied().fold(0.0, f64::max);
    Residual { sup, per_node }
}

/// `Θ_r^φ(Q, x) = (1/r) ∫ e_ε(Q) φ(|y−x|²/r²) dy`, node-sampled over the
/// support ball `|y − x| < √T r` where `T` ends the cutoff's support.
pub fn theta(field: &FieldQ, x: [f64; 3], r: f64, phi: &PhiCutoff) -> Result<f64> {
    theta_impl(field, x, r, phi, |i| energy_density(field, i))
}

/// [`theta`] with precomputed densities.
pub fn theta_with(
    field: &FieldQ,
    densities: &Densities,
    x: [f64; 3],
    r: f64,
    phi: &PhiCutoff,
) -> Result<f64> {
    theta_impl(field, x, r, phi, |i| densities.energy(i))
}

fn theta_impl<F>(field: &FieldQ, x: [f64; 3], r: f64, phi: &PhiCutoff, density: F) -> Result<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let radius = phi.support_end().sqrt() * r;
    let nodes = field
        .grid
        .ball_nodes(x, radius)
        .ok_or(Error::SupportExceedsDomain { radius })?;
    let inv_r2 = 1.0 / (r * r);
    let grid = &field.grid;
    let s = par::sum(nodes.len(), |t| {
        let i = nodes[t];
        density(i) * phi.eval(dist_sq(grid.position(i), x) * inv_r2)
    });
    Ok(s * grid.cell_volume() / r)
}

/// `(1/r) Σ_{B_r(x)} G h^n`, the ball average of [`gradient_tensor`].
pub fn directional_tensor(field: &FieldQ, x: [f64; 3], r: f64) -> Result<[[f64; 3]; 3]> {
    let nodes = Region::Ball {
        center: x,
        radius: r,
    }
    .nodes(&field.grid)?;
    let tensors = par::map(nodes.len(), |t| gradient_tensor(field, nodes[t]));
    let mut acc = [[0.0; 3]; 3];
    for g in &tensors {
        for a in 0..3 {
            for b in 0..3 {
                acc[a][b] += g[a][b];
            }
        }
    }
    let w = field.grid.cell_volume() / r;
    Ok(acc.map(|row| row.map(|v| v * w)))
}

/// `(1/r) ∫_{B_r(x)} |v·∇Q|²`.
pub fn directional_energy(field: &FieldQ, v: [f64; 3], x: [f64; 3], r: f64) -> Result<f64> {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!(
            "direction must be a unit vector, |v| = {norm}"
        )));
    }
    let g = directional_tensor(field, x, r)?;
    Ok(quadratic_form(&g, v))
}

pub(crate) fn quadratic_form(g: &[[f64; 3]; 3], v: [f64; 3]) -> f64 {
    let mut acc = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            acc += v[a] * g[a][b] * v[b];
        }
    }
    acc
}

/// `(Σ |∇_h Q|^p h^n)^{1/p}` over a region.
pub fn lp_gradient_norm(field: &FieldQ, p: f64, region: &Region) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "p must lie in [1, inf), got {p}"
        )));
    }
    let nodes = region.nodes(&field.grid)?;
    let s = par::sum(nodes.len(), |t| {
        node_gradient_sq(field, nodes[t]).powf(0.5 * p)
    });
    Ok((s * field.grid.cell_volume()).powf(1.0 / p))
}

/// `Df(Q)/ε² − Δ_h Q`, the L² gradient of the discrete energy (divided by
/// the cell volume), written into `out`; zero on Dirichlet nodes.
pub(crate) fn energy_gradient_into(field: &FieldQ, out: &mut [QTensor]) {
    let inv_eps2 = 1.0 / (field.epsilon * field.epsilon);
    par::for_each_mut(out, |i, o| {
        *o = if field.boundary_mask[i] {
            QTensor::ZERO
        } else {
            inv_eps2 * bulk_gradient(&field.values[i], &field.params)
                - laplacian(&field.grid, &field.values, i)
        };
    });
}

/// Total discrete energy together with the largest `|Q|`.
pub(crate) fn total_energy_and_linf(field: &FieldQ) -> (f64, f64) {
    let n = field.len();
    let w = field.grid.cell_volume();
    let inv_eps2 = 1.0 / (field.epsilon * field.epsilon);
    let e = par::sum(n, |i| {
        0.5 * node_gradient_sq(field, i)
            + inv_eps2 * bulk_potential(&field.values[i], &field.params)
    });
    (w * e, field.linf_norm())
}
