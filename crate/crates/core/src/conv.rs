//! Ball sums `Σ_{|y−x|<r} u(y)` at every node through FFT convolution.
//!
//! The transform box is the grid itself, so sums wrap around periodically.
//! They are exact for nodes whose ball stays inside the grid, which is the
//! only case the callers query.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::field::GridSpec;
use crate::par;

pub(crate) struct BallSums {
    dims: [usize; 3],
    h: f64,
    fwd: [Option<Arc<dyn Fft<f64>>>; 3],
    inv: [Option<Arc<dyn Fft<f64>>>; 3],
}

impl BallSums {
    pub(crate) fn new(grid: &GridSpec) -> Self {
        let dims = grid.dims3();
        let mut planner = FftPlanner::new();
        let plan = |d: usize, planner: &mut FftPlanner<f64>, inverse: bool| {
            (d > 1).then(|| {
                if inverse {
                    planner.plan_fft_inverse(d)
                } else {
                    planner.plan_fft_forward(d)
                }
            })
        };
        let fwd = [0, 1, 2].map(|a| plan(dims[a], &mut planner, false));
        let inv = [0, 1, 2].map(|a| plan(dims[a], &mut planner, true));
        BallSums {
            dims,
            h: grid.h(),
            fwd,
            inv,
        }
    }

    fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    fn transform(&self, data: &mut Vec<Complex<f64>>, inverse: bool) {
        let d = self.dims;
        let strides = [1, d[0], d[0] * d[1]];
        for a in 0..3 {
            let plan = if inverse { &self.inv[a] } else { &self.fwd[a] };
            let Some(plan) = plan else { continue };
            let n = d[a];
            let lines = self.len() / n;
            let others: Vec<usize> = (0..3).filter(|&b| b != a).collect();
            let (o0, o1) = (others[0], others[1]);
            let base = |l: usize| (l % d[o0]) * strides[o0] + (l / d[o0]) * strides[o1];
            // Gather lines contiguously, transform, scatter back.
            let src: &[Complex<f64>] = data;
            let mut lined: Vec<Complex<f64>> =
                par::map(self.len(), |k| src[base(k / n) + (k % n) * strides[a]]);
            par::for_each_chunk_mut(&mut lined, n, |_, chunk| plan.process(chunk));
            let out: Vec<Complex<f64>> = par::map(self.len(), |i| {
                let c = [i % d[0], (i / d[0]) % d[1], i / (d[0] * d[1])];
                let l = match a {
                    0 => c[1] + c[2] * d[1],
                    1 => c[0] + c[2] * d[0],
                    _ => c[0] + c[1] * d[0],
                };
                lined[l * n + c[a]]
            });
            debug_assert_eq!(lines * n, out.len());
            *data = out;
        }
    }

    /// Spectrum of a real node field.
    pub(crate) fn spectrum(&self, u: &[f64]) -> Vec<Complex<f64>> {
        let mut data: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    fn kernel_spectrum(&self, radius: f64) -> Vec<Complex<f64>> {
        let d = self.dims;
        let rr = (radius / self.h).powi(2);
        let wrap = |c: usize, n: usize| {
            let c = c as f64;
            let n = n as f64;
            if c <= n / 2.0 {
                c
            } else {
                c - n
            }
        };
        let ker: Vec<f64> = par::map(self.len(), |i| {
            let c = [i % d[0], (i / d[0]) % d[1], i / (d[0] * d[1])];
            let s: f64 = (0..3).map(|a| wrap(c[a], d[a]).powi(2)).sum();
            if s < rr {
                1.0
            } else {
                0.0
            }
        });
        self.spectrum(&ker)
    }

    /// Ball sums of the field whose spectrum is `spec`, at every node.
    pub(crate) fn ball_sums(&self, spec: &[Complex<f64>], radius: f64) -> Vec<f64> {
        let ker = self.kernel_spectrum(radius);
        let mut prod: Vec<Complex<f64>> = par::map(self.len(), |i| spec[i] * ker[i]);
        self.transform(&mut prod, true);
        let scale = 1.0 / self.len() as f64;
        prod.iter().map(|z| z.re * scale).collect()
    }
}
