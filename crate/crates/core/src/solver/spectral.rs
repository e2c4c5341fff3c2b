//! Exact solves of `(I − τΔ_h) X = b` when the Dirichlet set is a union of
//! whole box faces. The operator then diagonalizes in a sine basis along
//! Dirichlet axes and a cosine basis along natural axes.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::field::{FieldQ, GridSpec};
use crate::par;
use crate::tensor::QTensor;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    /// Both end nodes fixed; free coordinates `1..n-1`.
    Dirichlet,
    /// All nodes free, missing neighbors contribute nothing.
    Natural,
    /// Single-layer axis of a 2D grid.
    Trivial,
}

struct Axis {
    kind: Kind,
    offset: usize,
    len: usize,
    eig: Vec<f64>,
    fwd: Option<Arc<dyn Fft<f64>>>,
    inv: Option<Arc<dyn Fft<f64>>>,
    /// `e^{iπk/(2n)}` for the cosine transforms.
    twiddle: Vec<Complex<f64>>,
}

impl Axis {
    fn new(kind: Kind, n: usize, h: f64, planner: &mut FftPlanner<f64>) -> Self {
        let (offset, len) = match kind {
            Kind::Dirichlet => (1, n - 2),
            Kind::Natural | Kind::Trivial => (0, n),
        };
        let (eig, size) = match kind {
            Kind::Dirichlet => {
                let m1 = (len + 1) as f64;
                (
                    (1..=len)
                        .map(|k| (2.0 - 2.0 * (PI * k as f64 / m1).cos()) / (h * h))
                        .collect(),
                    2 * (len + 1),
                )
            }
            Kind::Natural => {
                let nn = len as f64;
                (
                    (0..len)
                        .map(|k| (2.0 - 2.0 * (PI * k as f64 / nn).cos()) / (h * h))
                        .collect(),
                    2 * len,
                )
            }
            Kind::Trivial => (vec![0.0; len], 0),
        };
        let (fwd, inv) = if kind == Kind::Trivial {
            (None, None)
        } else {
            (
                Some(planner.plan_fft_forward(size)),
                Some(planner.plan_fft_inverse(size)),
            )
        };
        let twiddle = if kind == Kind::Natural {
            (0..len)
                .map(|k| Complex::from_polar(1.0, PI * k as f64 / (2.0 * len as f64)))
                .collect()
        } else {
            Vec::new()
        };
        Axis {
            kind,
            offset,
            len,
            eig,
            fwd,
            inv,
            twiddle,
        }
    }

    fn transform(&self, line: &[f64], out: &mut [f64], inverse: bool, buf: &mut Vec<Complex<f64>>) {
        let n = self.len;
        match self.kind {
            Kind::Trivial => out.copy_from_slice(line),
            Kind::Dirichlet => {
                // DST-I through the odd extension; it is its own inverse up
                // to the factor 2/(n+1).
                let size = 2 * (n + 1);
                buf.clear();
                buf.resize(size, Complex::default());
                for (j, &x) in line.iter().enumerate() {
                    buf[j + 1] = Complex::new(x, 0.0);
                    buf[size - j - 1] = Complex::new(-x, 0.0);
                }
                self.fwd.as_ref().unwrap().process(buf);
                let scale = if inverse { 2.0 / (n + 1) as f64 } else { 1.0 };
                for (k, o) in out.iter_mut().enumerate() {
                    *o = -0.5 * buf[k + 1].im * scale;
                }
            }
            Kind::Natural if !inverse => {
                // DCT-II through the even extension.
                let size = 2 * n;
                buf.clear();
                buf.resize(size, Complex::default());
                for (j, &x) in line.iter().enumerate() {
                    buf[j] = Complex::new(x, 0.0);
                    buf[size - 1 - j] = Complex::new(x, 0.0);
                }
                self.fwd.as_ref().unwrap().process(buf);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = 0.5 * (buf[k] * self.twiddle[k].conj()).re;
                }
            }
            Kind::Natural => {
                // DCT-III, the inverse of the above.
                let size = 2 * n;
                buf.clear();
                buf.resize(size, Complex::default());
                let nn = n as f64;
                for (k, &c) in line.iter().enumerate() {
                    let w = if k == 0 { 1.0 / nn } else { 2.0 / nn };
                    buf[k] = self.twiddle[k] * (w * c);
                }
                self.inv.as_ref().unwrap().process(buf);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = buf[j].re;
                }
            }
        }
    }
}

pub(crate) struct SeparableSolver {
    axes: [Axis; 3],
    grid: GridSpec,
}

impl SeparableSolver {
    /// Returns a solver when the mask is exactly the union of some pairs of
    /// opposite box faces.
    pub(crate) fn detect(field: &FieldQ) -> Option<Self> {
        let grid = &field.grid;
        let d = grid.dims3();
        let mid = [d[0] / 2, d[1] / 2, d[2] / 2];
        let mut kinds = [Kind::Trivial; 3];
        for a in 0..grid.ndim() {
            let mut c = mid;
            c[a] = 0;
            kinds[a] = if field.boundary_mask[grid.index(c[0], c[1], c[2])] {
                Kind::Dirichlet
            } else {
                Kind::Natural
            };
        }
        let consistent = (0..grid.len()).all(|i| {
            let c = grid.coords(i);
            let fixed =
                (0..3).any(|a| kinds[a] == Kind::Dirichlet && (c[a] == 0 || c[a] + 1 == d[a]));
            fixed == field.boundary_mask[i]
        });
        if !consistent {
            return None;
        }
        let mut planner = FftPlanner::new();
        let h = grid.h();
        let axes = [0, 1, 2].map(|a| Axis::new(kinds[a], d[a], h, &mut planner));
        Some(SeparableSolver {
            axes,
            grid: grid.clone(),
        })
    }

    fn free_dims(&self) -> [usize; 3] {
        [self.axes[0].len, self.axes[1].len, self.axes[2].len]
    }

    /// Applies the 1D transform along `axis` to every line of `work`.
    fn sweep(&self, work: &mut [QTensor], axis: usize, inverse: bool) {
        let ax = &self.axes[axis];
        if ax.kind == Kind::Trivial {
            return;
        }
        let fd = self.free_dims();
        let stride = [1, fd[0], fd[0] * fd[1]][axis];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        let (o0, o1) = (others[0], others[1]);
        let fs = [1, fd[0], fd[0] * fd[1]];
        let lines = fd[o0] * fd[o1];
        let src: &[QTensor] = work;
        let out: Vec<Vec<QTensor>> = par::map(lines, |l| {
            let base = (l % fd[o0]) * fs[o0] + (l / fd[o0]) * fs[o1];
            let n = ax.len;
            let mut buf = Vec::with_capacity(2 * (n + 1));
            let mut line = vec![0.0; n];
            let mut tr = vec![0.0; n];
            let mut res = vec![QTensor::ZERO; n];
            for comp in 0..5 {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = src[base + j * stride].0[comp];
                }
                ax.transform(&line, &mut tr, inverse, &mut buf);
                for (j, v) in tr.iter().enumerate() {
                    res[j].0[comp] = *v;
                }
            }
            res
        });
        for (l, res) in out.into_iter().enumerate() {
            let base = (l % fd[o0]) * fs[o0] + (l / fd[o0]) * fs[o1];
            for (j, v) in res.into_iter().enumerate() {
                work[base + j * stride] = v;
            }
        }
    }

    /// Solves `(I − τΔ_h) X = rhs` on free nodes with `X = values` on the
    /// Dirichlet faces, writing the free-node solution into `out`.
    pub(crate) fn solve(&self, values: &[QTensor], rhs: &[QTensor], tau: f64, out: &mut [QTensor]) {
        let grid = &self.grid;
        let fd = self.free_dims();
        let off = [
            self.axes[0].offset,
            self.axes[1].offset,
            self.axes[2].offset,
        ];
        let h2 = grid.h() * grid.h();
        let to_grid = |f: usize| {
            let c = [f % fd[0], (f / fd[0]) % fd[1], f / (fd[0] * fd[1])];
            grid.index(c[0] + off[0], c[1] + off[1], c[2] + off[2])
        };
        let total = fd[0] * fd[1] * fd[2];
        let d = grid.dims3();
        // Fixed neighbors move to the right-hand side.
        let mut work: Vec<QTensor> = par::map(total, |f| {
            let i = to_grid(f);
            let c = grid.coords(i);
            let s = grid.strides();
            let mut b = rhs[i];
            for a in 0..3 {
                if self.axes[a].kind != Kind::Dirichlet {
                    continue;
                }
                if c[a] == 1 {
                    b += (tau / h2) * values[i - s[a]];
                }
                if c[a] + 2 == d[a] {
                    b += (tau / h2) * values[i + s[a]];
                }
            }
            b
        });
        for a in 0..3 {
            self.sweep(&mut work, a, false);
        }
        let (e0, e1, e2) = (&self.axes[0].eig, &self.axes[1].eig, &self.axes[2].eig);
        par::for_each_mut(&mut work, |f, v| {
            let c = [f % fd[0], (f / fd[0]) % fd[1], f / (fd[0] * fd[1])];
            let denom = 1.0 + tau * (e0[c[0]] + e1[c[1]] + e2[c[2]]);
            *v = (1.0 / denom) * *v;
        });
        for a in (0..3).rev() {
            self.sweep(&mut work, a, true);
        }
        for (f, v) in work.into_iter().enumerate() {
            out[to_grid(f)] = v;
        }
    }
}
