//! Landau-de Gennes Q-tensor fields at small elastic parameter.
//!
//! The crate minimizes the discrete Landau-de Gennes energy on uniform grids
//! and measures the quantities that control the small-ε regime: the weighted
//! monotonicity quantity Θ, regular scales and bad sets, covering numbers,
//! bulk-potential integrals, L^p gradient norms, and the topology of
//! disclination lines.
//!
//! Module map:
//!
//! * [`tensor`]: algebra of traceless symmetric 3×3 tensors and the bulk potential.
//! * [`field`]: grids, fields, boundary data, energies, Θ, QF1 persistence.
//! * [`solver`]: gradient-flow minimization.
//! * [`scales`]: regular scales, bad sets, coverings, and the associated audits.
//! * [`defects`]: cores, loop classification in π₁(ℝP²), cross-section scans.
//! * [`experiments`]: ε-sweeps, verdicts and reports.

pub mod calibration;
mod conv;
pub mod defects;
pub mod error;
pub mod experiments;
pub mod field;
pub mod par;
pub mod scales;
pub mod solver;
pub mod tensor;
pub mod vtk;

pub use error::{Error, Result};
pub use field::{FieldQ, GridSpec, PhiCutoff, Region};
pub use tensor::{MaterialParams, QTensor};
