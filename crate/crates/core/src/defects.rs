//! Defect cores, loop classes in π₁(ℝP²) = Z/2, and cross-section scans of
//! disclination cylinders.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{disclination_bc, FieldQ, GridSpec};
use crate::par;
use crate::tensor::{bulk_potential, MaterialParams, QTensor};

/// Nodes with `f(Q) > eta_core`.
pub fn core_mask(field: &FieldQ, eta_core: f64) -> Vec<bool> {
    par::map(field.len(), |i| field.bulk_at(i) > eta_core)
}

/// Volume (area in 2D) covered by the marked nodes.
pub fn mask_volume(grid: &GridSpec, mask: &[bool]) -> f64 {
    mask.iter().filter(|&&m| m).count() as f64 * grid.cell_volume()
}

/// Closed polygonal loop through interior points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    /// Vertices with `points.first() == points.last()`.
    pub points: Vec<[f64; 3]>,
    /// Samples per polygon edge.
    pub density: usize,
    /// Smallest admissible leading-eigenvalue gap along the loop.
    pub gap_tol: f64,
}

impl LoopSpec {
    pub fn new(points: Vec<[f64; 3]>, density: usize) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidLoop(format!(
                "need at least 3 distinct vertices, got {}",
                points.len()
            )));
        }
        if points.first() != points.last() {
            return Err(Error::InvalidLoop("first and last vertex differ".into()));
        }
        if density == 0 {
            return Err(Error::InvalidLoop("density must be positive".into()));
        }
        Ok(LoopSpec {
            points,
            density,
            gap_tol: 1e-6,
        })
    }

    /// Circle of the given radius in the plane normal to coordinate `axis`,
    /// with vertices at most `h` apart.
    pub fn circle(grid: &GridSpec, center: [f64; 3], axis: usize, radius: f64) -> Result<Self> {
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        let n = ((2.0 * PI * radius / grid.h()).ceil() as usize).max(8);
        let mut points: Vec<[f64; 3]> = (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                let mut p = center;
                p[u] += radius * a.cos();
                p[v] += radius * a.sin();
                p
            })
            .collect();
        points.push(points[0]);
        Self::new(points, 4)
    }

    /// The loop traversed backwards.
    pub fn reversed(&self) -> Self {
        let mut l = self.clone();
        l.points.reverse();
        l
    }

    /// The same loop starting from vertex `k`.
    pub fn rotated(&self, k: usize) -> Self {
        let m = self.points.len() - 1;
        let mut points: Vec<[f64; 3]> = (0..m).map(|j| self.points[(j + k) % m]).collect();
        points.push(points[0]);
        LoopSpec {
            points,
            ..self.clone()
        }
    }

    /// `self` followed by `other`; both must start at the same vertex.
    pub fn concat(&self, other: &LoopSpec) -> Result<Self> {
        if self.points[0] != other.points[0] {
            return Err(Error::InvalidLoop("loops do not share a basepoint".into()));
        }
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points[1..]);
        Ok(LoopSpec {
            points,
            density: self.density.max(other.density),
            gap_tol: self.gap_tol.max(other.gap_tol),
        })
    }

    fn samples(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity((self.points.len() - 1) * self.density + 1);
        for w in self.points.windows(2) {
            for j in 0..self.density {
                let t = j as f64 / self.density as f64;
                out.push(std::array::from_fn(|a| w[0][a] + t * (w[1][a] - w[0][a])));
            }
        }
        out.push(self.points[0]);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopClass {
    Trivial,
    Nontrivial,
}

impl LoopClass {
    /// Group law of Z/2.
    pub fn compose(self, other: LoopClass) -> LoopClass {
        if self == other {
            LoopClass::Trivial
        } else {
            LoopClass::Nontrivial
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopResult {
    pub class: LoopClass,
    /// Smallest leading-eigenvalue gap along the loop.
    pub min_gap: f64,
}

/// Z/2 class of a closed sequence of directors by sign propagation; the
/// last entry revisits the first sample.
pub fn classify_directors(dirs: &[[f64; 3]]) -> Result<LoopClass> {
    if dirs.len() < 2 {
        return Err(Error::InvalidLoop("need at least two samples".into()));
    }
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let mut cur = dirs[0];
    for (i, &n) in dirs.iter().enumerate().skip(1) {
        let d = dot(cur, n);
        if d.abs() < 0.5 {
            return Err(Error::LoopUndersampled {
                sample: i,
                dot: d.abs(),
            });
        }
        cur = if d < 0.0 { n.map(|c| -c) } else { n };
    }
    Ok(if dot(cur, dirs[0]) < 0.0 {
        LoopClass::Nontrivial
    } else {
        LoopClass::Trivial
    })
}

/// Class of `Q` restricted to the loop, read off the leading eigenvector.
pub fn loop_class(field: &FieldQ, lp: &LoopSpec) -> Result<LoopResult> {
    let h = field.grid.h();
    for (i, w) in lp.points.windows(2).enumerate() {
        let d = (0..3)
            .map(|a| (w[1][a] - w[0][a]).powi(2))
            .sum::<f64>()
            .sqrt();
        if d > 2.0 * h * (1.0 + 1e-12) {
            return Err(Error::InvalidLoop(format!(
                "vertices {i} and {} are {d:.4} > 2h apart",
                i + 1
            )));
        }
    }
    let samples = lp.samples();
    let mut dirs = Vec::with_capacity(samples.len());
    let mut min_gap = f64::INFINITY;
    for (i, &x) in samples.iter().enumerate() {
        let q = field.sample(x).ok_or_else(|| {
            Error::InvalidLoop(format!("sample {i} at {x:?} lies outside the grid"))
        })?;
        let (gap, n) = q.leading_director();
        if bulk_potential(&q, &field.params) >= field.params.eta_core || gap <= lp.gap_tol {
            return Err(Error::LoopThroughCore { sample: i });
        }
        min_gap = min_gap.min(gap);
        dirs.push(n);
    }
    Ok(LoopResult {
        class: classify_directors(&dirs)?,
        min_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopVerdict {
    pub id: String,
    pub class: Option<LoopClass>,
    pub min_gap: Option<f64>,
    pub error: Option<String>,
}

/// Classifies each loop; failures are reported per loop.
pub fn classify_loops(field: &FieldQ, loops: &[(String, LoopSpec)]) -> Vec<LoopVerdict> {
    par::map(loops.len(), |t| {
        let (id, lp) = &loops[t];
        match loop_class(field, lp) {
            Ok(r) => LoopVerdict {
                id: id.clone(),
                class: Some(r.class),
                min_gap: Some(r.min_gap),
                error: None,
            },
            Err(e) => LoopVerdict {
                id: id.clone(),
                class: None,
                min_gap: None,
                error: Some(e.to_string()),
            },
        }
    })
}

pub fn loop_verdicts_jsonl(verdicts: &[LoopVerdict]) -> Result<String> {
    let mut s = String::new();
    for v in verdicts {
        s.push_str(&serde_json::to_string(v)?);
        s.push('\n');
    }
    Ok(s)
}

/// Solid cylinder `{|x_⊥ − through_⊥| < radius, t_lo <= x_axis <= t_hi}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub axis: usize,
    pub through: [f64; 3],
    pub radius: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Cylinder {
    fn transverse_sq(&self, x: [f64; 3]) -> f64 {
        (0..3)
            .filter(|&a| a != self.axis)
            .map(|a| (x[a] - self.through[a]).powi(2))
            .sum()
    }

    /// Node lists per slab (grid layer along the axis), with layer coordinates.
    fn slabs(&self, grid: &GridSpec) -> Result<Vec<(f64, Vec<usize>)>> {
        if self.axis >= grid.ndim().max(3) || (grid.ndim() == 2 && self.axis != 2) {
            return Err(Error::DegenerateGeometry(format!(
                "axis {} unavailable",
                self.axis
            )));
        }
        if !(self.radius > 0.0) || self.t_lo > self.t_hi {
            return Err(Error::InvalidParams(format!("invalid cylinder {self:?}")));
        }
        let b = grid.bounds();
        let h = grid.h();
        for a in (0..grid.ndim()).filter(|&a| a != self.axis) {
            if self.through[a] - self.radius <= b[a][0] || self.through[a] + self.radius >= b[a][1]
            {
                return Err(Error::RegionOutOfDomain);
            }
        }
        if grid.ndim() == 3 && (self.t_lo < b[self.axis][0] || self.t_hi > b[self.axis][1]) {
            return Err(Error::RegionOutOfDomain);
        }
        let d = grid.dims3();
        let r2 = self.radius * self.radius;
        let mut per_layer: Vec<(f64, Vec<usize>)> = Vec::new();
        for layer in 0..d[self.axis] {
            let t = if grid.ndim() == 2 {
                0.0
            } else {
                grid.origin()[self.axis] + layer as f64 * h
            };
            if grid.ndim() == 3 && (t < self.t_lo - 1e-12 || t > self.t_hi + 1e-12) {
                continue;
            }
            per_layer.push((t, Vec::new()));
        }
        for idx in 0..grid.len() {
            let x = grid.position(idx);
            if self.transverse_sq(x) >= r2 {
                continue;
            }
            let t = if grid.ndim() == 2 { 0.0 } else { x[self.axis] };
            if let Some(slot) = per_layer
                .iter_mut()
                .find(|(lt, _)| (lt - t).abs() < 0.5 * h)
            {
                slot.1.push(idx);
            }
        }
        Ok(per_layer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabResult {
    pub t: f64,
    pub found: bool,
    /// Node with the largest `f` in the slab disk when `found`.
    pub y: Option<[f64; 3]>,
    pub max_f: f64,
}

/// For every grid slab of the cylinder, looks for a node with
/// `f > eta_core` in the disk.
pub fn cross_section_scan(
    field: &FieldQ,
    cyl: &Cylinder,
    eta_core: f64,
) -> Result<Vec<SlabResult>> {
    let slabs = cyl.slabs(&field.grid)?;
    Ok(par::map(slabs.len(), |s| {
        let (t, nodes) = &slabs[s];
        let mut best: Option<(f64, usize)> = None;
        for &i in nodes {
            let f = field.bulk_at(i);
            if best.is_none_or(|(b, _)| f > b) {
                best = Some((f, i));
            }
        }
        let max_f = best.map_or(0.0, |(f, _)| f);
        let found = max_f > eta_core;
        SlabResult {
            t: *t,
            found,
            y: best.filter(|_| found).map(|(_, i)| field.grid.position(i)),
            max_f,
        }
    }))
}

pub fn scan_csv(rows: &[SlabResult]) -> String {
    let mut s = String::from("t,found,y_x,y_y,y_z,max_f\n");
    for r in rows {
        let y =
            r.y.map_or(["".to_string(), "".to_string(), "".to_string()], |y| {
                y.map(|c| format!("{c:.10e}"))
            });
        s.push_str(&format!(
            "{:.10e},{},{},{},{},{:.10e}\n",
            r.t, r.found, y[0], y[1], y[2], r.max_f
        ));
    }
    s
}

/// `∫_cyl f(Q) / ε²`.
pub fn sharpness_lower_bound(field: &FieldQ, cyl: &Cylinder) -> Result<f64> {
    let nodes: Vec<usize> = cyl
        .slabs(&field.grid)?
        .into_iter()
        .flat_map(|(_, n)| n)
        .collect();
    let sum = par::sum(nodes.len(), |t| field.bulk_at(nodes[t]));
    Ok(sum * field.grid.cell_volume() / (field.epsilon * field.epsilon))
}

/// A labelled loop over a synthetic field.
pub struct CorpusCase {
    pub name: String,
    pub field: usize,
    pub lp: LoopSpec,
    pub expected: LoopClass,
}

/// Analytic director fields and loops with known classes: loops around
/// half-winding lines (nontrivial), around integer-winding lines, in a
/// constant field, and away from the line (trivial).
pub fn synthetic_corpus(mp: &MaterialParams) -> Result<(Vec<FieldQ>, Vec<CorpusCase>)> {
    let grid = GridSpec::centered(&[40, 40, 12], 0.05)?;
    let eps = 0.05;
    let through = [0.03, -0.02, 0.0];
    let fields = vec![
        disclination_bc(&grid, mp, eps, 2, through, 0.5)?,
        disclination_bc(&grid, mp, eps, 2, through, -0.5)?,
        disclination_bc(&grid, mp, eps, 2, through, 1.0)?,
        disclination_bc(&grid, mp, eps, 2, through, -1.0)?,
        crate::field::constant_bc(&grid, mp, eps, [0.3, 0.4, 0.5])?,
    ];
    let mut cases = Vec::new();
    let mut push = |name: String, field: usize, lp: LoopSpec, expected| {
        cases.push(CorpusCase {
            name,
            field,
            lp,
            expected,
        })
    };
    let radii = [0.25, 0.4, 0.55, 0.7];
    for (f, tag, class) in [
        (0, "half", LoopClass::Nontrivial),
        (1, "minus_half", LoopClass::Nontrivial),
        (2, "one", LoopClass::Trivial),
        (3, "minus_one", LoopClass::Trivial),
    ] {
        for (k, &r) in radii.iter().enumerate() {
            let z = -0.2 + 0.15 * k as f64;
            let c = [through[0] + 0.05 * k as f64, through[1], z];
            push(
                format!("{tag}_circle_{k}"),
                f,
                LoopSpec::circle(&grid, c, 2, r)?,
                class,
            );
        }
        push(
            format!("{tag}_square"),
            f,
            square(&grid, [through[0], through[1], 0.1], 0.6),
            class,
        );
    }
    for k in 0..5 {
        let c = [-0.4 + 0.2 * k as f64, 0.5, 0.0];
        let f = if k % 2 == 0 { 0 } else { 3 };
        push(
            format!("off_line_{k}"),
            f,
            LoopSpec::circle(&grid, c, 2, 0.2)?,
            LoopClass::Trivial,
        );
    }
    for k in 0..4 {
        push(
            format!("constant_{k}"),
            4,
            LoopSpec::circle(&grid, [0.0, 0.0, 0.05 * k as f64], 2, 0.2 + 0.15 * k as f64)?,
            LoopClass::Trivial,
        );
    }
    push(
        "constant_square".into(),
        4,
        square(&grid, [0.0; 3], 0.8),
        LoopClass::Trivial,
    );
    Ok((fields, cases))
}

fn square(grid: &GridSpec, c: [f64; 3], side: f64) -> LoopSpec {
    let half = side / 2.0;
    let corners = [
        [-half, -half],
        [half, -half],
        [half, half],
        [-half, half],
        [-half, -half],
    ];
    let mut points = Vec::new();
    for w in corners.windows(2) {
        let len = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        let n = (len / grid.h()).ceil() as usize;
        for j in 0..n {
            let t = j as f64 / n as f64;
            points.push([
                c[0] + w[0][0] + t * (w[1][0] - w[0][0]),
                c[1] + w[0][1] + t * (w[1][1] - w[0][1]),
                c[2],
            ]);
        }
    }
    points.push(points[0]);
    LoopSpec::new(points, 4).expect("square loop is closed")
}

/// Field of two parallel half-winding lines: the director angle is the sum
/// of the half-angles about each line.
pub fn two_line_field(
    grid: &GridSpec,
    mp: &MaterialParams,
    eps: f64,
    a: [f64; 2],
    b: [f64; 2],
) -> Result<FieldQ> {
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.position(i);
            let ang =
                0.5 * (x[1] - a[1]).atan2(x[0] - a[0]) + 0.5 * (x[1] - b[1]).atan2(x[0] - b[0]);
            let da = (x[0] - a[0]).hypot(x[1] - a[1]);
            let db = (x[0] - b[0]).hypot(x[1] - b[1]);
            let ramp = |d: f64| (d / eps) / (1.0 + (d / eps).powi(2)).sqrt();
            QTensor::uniaxial([ang.cos(), ang.sin(), 0.0], mp.s_star * ramp(da) * ramp(db))
        })
        .collect();
    let mask = (0..grid.len()).map(|i| grid.is_edge(i)).collect();
    FieldQ::from_parts(grid.clone(), values, mask, eps, *mp)
}
