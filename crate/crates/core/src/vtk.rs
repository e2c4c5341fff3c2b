//! Legacy VTK structured-points export of `f(Q)` and `|∇Q|`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Densities, FieldQ};

/// ASCII legacy VTK with two point scalars, `f` and `grad_norm`, in node
/// order (x fastest).
pub fn encode(field: &FieldQ) -> String {
    let g = &field.grid;
    let d = g.dims3();
    let o = g.origin();
    let oz = if g.ndim() == 3 { o[2] } else { 0.0 };
    let dens = Densities::new(field);
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "Q-tensor field eps={:e}", field.epsilon);
    let _ = writeln!(s, "ASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", d[0], d[1], d[2]);
    let _ = writeln!(s, "ORIGIN {:e} {:e} {:e}", o[0], o[1], oz);
    let h = g.h();
    let _ = writeln!(s, "SPACING {h:e} {h:e} {h:e}");
    let _ = writeln!(s, "POINT_DATA {}", g.len());
    let _ = writeln!(s, "SCALARS f double 1\nLOOKUP_TABLE default");
    for v in &dens.bulk {
        let _ = writeln!(s, "{v:e}");
    }
    let _ = writeln!(s, "SCALARS grad_norm double 1\nLOOKUP_TABLE default");
    for v in &dens.gradient_sq {
        let _ = writeln!(s, "{:e}", v.sqrt());
    }
    s
}

pub fn write(path: impl AsRef<Path>, field: &FieldQ) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(field)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{disclination_bc, GridSpec};
    use crate::tensor::MaterialParams;

    #[test]
    fn header_and_point_counts() {
        let grid = GridSpec::centered(&[5, 4, 6], 0.5).unwrap();
        let mp = MaterialParams::new(1.0, 1.0, 1.0).unwrap();
        let f = disclination_bc(&grid, &mp, 0.5, 2, [0.0; 3], 0.5).unwrap();
        let text = encode(&f);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[4], "DIMENSIONS 5 4 6");
        assert_eq!(lines[7], "POINT_DATA 120");
        assert_eq!(lines.len(), 10 + 2 * 120 + 2);
        let values: Vec<f64> = lines[10..130].iter().map(|l| l.parse().unwrap()).collect();
        assert!(values.iter().all(|v| *v >= -1e-12));
    }
}
