//! Boundary data families. Each generator fixes the Dirichlet nodes to the
//! vacuum-valued formula `s_*(n⊗n − I/3)` and initializes the free nodes
//! with the same director and an amplitude ramp `s_* t/√(1+t²)`, `t = ρ/ε`,
//! regularizing the defect.

use serde::{Deserialize, Serialize};

use super::{dist_sq, FieldQ, GridSpec};
use crate::error::{Error, Result};
use crate::tensor::{MaterialParams, QTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryData {
    /// Radial director `x̂` about `center`.
    Hedgehog {
        center: [f64; 3],
    },
    /// Straight line through `through` parallel to coordinate axis `axis`;
    /// the director turns by `2π·winding` around it, in the transverse plane.
    Disclination {
        axis: usize,
        through: [f64; 3],
        winding: f64,
    },
    Constant {
        director: [f64; 3],
    },
}

/// Where the Dirichlet data is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// The grid's outer layer. For a disclination the two faces normal to
    /// its axis are left free (natural boundary condition).
    Box,
    /// Every node with `|x − center| >= radius`, plus the outer layer.
    Ball { center: [f64; 3], radius: f64 },
}

fn transverse_frame(axis: usize) -> ([f64; 3], [f64; 3]) {
    match axis {
        0 => ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
        1 => ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
        _ => ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
    }
}

impl BoundaryData {
    /// Distance to the defect set (infinite for constant data).
    pub fn defect_distance(&self, x: [f64; 3]) -> f64 {
        match self {
            BoundaryData::Hedgehog { center } => dist_sq(x, *center).sqrt(),
            BoundaryData::Disclination { axis, through, .. } => {
                let (u, v) = transverse_frame(*axis);
                let d: [f64; 3] = std::array::from_fn(|a| x[a] - through[a]);
                let pu = d[0] * u[0] + d[1] * u[1] + d[2] * u[2];
                let pv = d[0] * v[0] + d[1] * v[1] + d[2] * v[2];
                pu.hypot(pv)
            }
            BoundaryData::Constant { .. } => f64::INFINITY,
        }
    }

    /// Unit director at `x` (arbitrary but fixed on the defect set).
    pub fn director(&self, x: [f64; 3]) -> [f64; 3] {
        match self {
            BoundaryData::Hedgehog { center } => {
                let d: [f64; 3] = std::array::from_fn(|a| x[a] - center[a]);
                let r = dist_sq(x, *center).sqrt();
                if r == 0.0 {
                    [0.0, 0.0, 1.0]
                } else {
                    d.map(|c| c / r)
                }
            }
            BoundaryData::Disclination {
                axis,
                through,
                winding,
            } => {
                let (u, v) = transverse_frame(*axis);
                let d: [f64; 3] = std::array::from_fn(|a| x[a] - through[a]);
                let pu = d[0] * u[0] + d[1] * u[1] + d[2] * u[2];
                let pv = d[0] * v[0] + d[1] * v[1] + d[2] * v[2];
                let angle = winding * pv.atan2(pu);
                let (s, c) = angle.sin_cos();
                std::array::from_fn(|a| c * u[a] + s * v[a])
            }
            BoundaryData::Constant { director } => {
                let n = dist_sq(*director, [0.0; 3]).sqrt();
                director.map(|c| c / n)
            }
        }
    }

    /// Boundary value: the vacuum tensor with this director.
    pub fn vacuum_value(&self, x: [f64; 3], params: &MaterialParams) -> QTensor {
        QTensor::uniaxial(self.director(x), params.s_star)
    }

    /// Initial value for free nodes.
    pub fn initial_value(&self, x: [f64; 3], params: &MaterialParams, epsilon: f64) -> QTensor {
        let t = self.defect_distance(x) / epsilon;
        let ramp = if t.is_finite() {
            t / (1.0 + t * t).sqrt()
        } else {
            1.0
        };
        QTensor::uniaxial(self.director(x), params.s_star * ramp)
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        match self {
            BoundaryData::Disclination { axis, winding, .. } => {
                if *axis > 2 || (grid.ndim() == 2 && *axis != 2) {
                    return Err(Error::DegenerateGeometry(format!(
                        "disclination axis {axis} is not available on a {}D grid",
                        grid.ndim()
                    )));
                }
                if !((2.0 * winding).fract() == 0.0 && *winding != 0.0) {
                    return Err(Error::DegenerateGeometry(format!(
                        "winding must be a nonzero multiple of 1/2, got {winding}"
                    )));
                }
            }
            BoundaryData::Constant { director } => {
                if dist_sq(*director, [0.0; 3]) == 0.0 {
                    return Err(Error::DegenerateGeometry("zero director".into()));
                }
            }
            BoundaryData::Hedgehog { .. } => {}
        }
        Ok(())
    }

    fn is_natural_face(&self, grid: &GridSpec, idx: usize) -> bool {
        let BoundaryData::Disclination { axis, .. } = self else {
            return false;
        };
        if grid.ndim() != 3 {
            return false;
        }
        let c = grid.coords(idx);
        let d = grid.dims3();
        let on_axis_face = c[*axis] == 0 || c[*axis] + 1 == d[*axis];
        let on_other_face = (0..3)
            .filter(|&a| a != *axis)
            .any(|a| c[a] == 0 || c[a] + 1 == d[a]);
        on_axis_face && !on_other_face
    }

    /// Builds the Dirichlet mask, boundary values and initial interior.
    pub fn build(
        &self,
        grid: &GridSpec,
        params: &MaterialParams,
        epsilon: f64,
        domain: Domain,
    ) -> Result<FieldQ> {
        self.validate(grid)?;
        let n = grid.len();
        let mut mask = vec![false; n];
        let mut values = vec![QTensor::ZERO; n];
        let tiny = 1e-9 * grid.h();
        for idx in 0..n {
            let x = grid.position(idx);
            let fixed = match domain {
                Domain::Box => grid.is_edge(idx) && !self.is_natural_face(grid, idx),
                Domain::Ball { center, radius } => {
                    grid.is_edge(idx) || dist_sq(x, center) >= radius * radius
                }
            };
            mask[idx] = fixed;
            if fixed {
                if self.defect_distance(x) < tiny {
                    return Err(Error::DegenerateGeometry(format!(
                        "defect passes through boundary node at {x:?}"
                    )));
                }
                values[idx] = self.vacuum_value(x, params);
            } else {
                values[idx] = self.initial_value(x, params, epsilon);
            }
        }
        FieldQ::from_parts(grid.clone(), values, mask, epsilon, *params)
    }
}

pub fn hedgehog_bc(
    grid: &GridSpec,
    params: &MaterialParams,
    epsilon: f64,
    center: [f64; 3],
    domain: Domain,
) -> Result<FieldQ> {
    BoundaryData::Hedgehog { center }.build(grid, params, epsilon, domain)
}

pub fn disclination_bc(
    grid: &GridSpec,
    params: &MaterialParams,
    epsilon: f64,
    axis: usize,
    through: [f64; 3],
    winding: f64,
) -> Result<FieldQ> {
    BoundaryData::Disclination {
        axis,
        through,
        winding,
    }
    .build(grid, params, epsilon, Domain::Box)
}

pub fn constant_bc(
    grid: &GridSpec,
    params: &MaterialParams,
    epsilon: f64,
    director: [f64; 3],
) -> Result<FieldQ> {
    BoundaryData::Constant { director }.build(grid, params, epsilon, Domain::Box)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::bulk_potential;

    fn params() -> MaterialParams {
        MaterialParams::new(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn hedgehog_boundary_is_vacuum() {
        let g = GridSpec::centered(&[10, 10, 10], 0.2).unwrap();
        let f = hedgehog_bc(&g, &params(), 0.4, [0.0; 3], Domain::Box).unwrap();
        for i in 0..g.len() {
            if f.boundary_mask[i] {
                assert!(bulk_potential(&f.values[i], &f.params).abs() < 1e-12);
            }
        }
        assert_eq!(f.boundary_mask.iter().filter(|m| **m).count(), 1000 - 512);
    }

    #[test]
    fn ball_domain_masks_exterior() {
        let g = GridSpec::centered(&[12, 12, 12], 0.1).unwrap();
        let dom = Domain::Ball {
            center: [0.0; 3],
            radius: 0.4,
        };
        let f = hedgehog_bc(&g, &params(), 0.2, [0.0; 3], dom).unwrap();
        for i in 0..g.len() {
            let r = dist_sq(g.position(i), [0.0; 3]).sqrt();
            assert_eq!(f.boundary_mask[i], r >= 0.4 || g.is_edge(i));
        }
    }

    #[test]
    fn defect_on_boundary_node_is_rejected() {
        let g = GridSpec::new(&[6, 6, 6], 1.0, &[0.0; 3]).unwrap();
        let err = hedgehog_bc(&g, &params(), 1.0, [0.0; 3], Domain::Box).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
        let err = disclination_bc(&g, &params(), 1.0, 2, [0.0, 2.0, 0.0], 0.5).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
    }

    #[test]
    fn disclination_leaves_axis_faces_free() {
        let g = GridSpec::centered(&[6, 6, 6], 1.0).unwrap();
        let f = disclination_bc(&g, &params(), 1.0, 2, [0.0; 3], 0.5).unwrap();
        assert!(!f.boundary_mask[g.index(2, 2, 0)]);
        assert!(f.boundary_mask[g.index(0, 2, 0)]);
        assert!(f.boundary_mask[g.index(0, 2, 3)]);
        assert!(disclination_bc(&g, &params(), 1.0, 2, [0.0; 3], 0.3).is_err());
    }

    #[test]
    fn half_winding_director_flips_around_the_axis() {
        let bc = BoundaryData::Disclination {
            axis: 2,
            through: [0.0; 3],
            winding: 0.5,
        };
        let a = bc.director([1.0, 1e-12, 0.0]);
        let b = bc.director([1.0, -1e-12, 0.0]);
        assert!((a[0] + b[0]).abs() < 1e-9 || (a[0] - b[0]).abs() < 1e-9);
        let n = bc.director([0.0, 1.0, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n[0] - s).abs() < 1e-12 && (n[1] - s).abs() < 1e-12);
    }
}
