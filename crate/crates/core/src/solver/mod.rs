//! Gradient-flow minimization of the discrete energy under Dirichlet data.
//!
//! Both schemes follow the L² flow `∂_t Q = Δ_h Q − Df(Q)/ε²` on free nodes.
//! The explicit scheme is forward Euler; the semi-implicit scheme solves
//! `(I − τΔ_h) Q⁺ = Q − τ Df(Q)/ε²`, which removes the `h²` step restriction.
//! That system is solved with sine/cosine transforms when the Dirichlet set
//! is made of whole box faces and by conjugate gradients otherwise. Every
//! step is checked against the discrete energy and halved until the energy does not increase.

use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{energy_gradient_into, total_energy_and_linf};
use crate::field::{laplacian, qf1, FieldQ};
use crate::par;
use crate::tensor::{MaterialParams, QTensor};

mod spectral;

use spectral::SeparableSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Explicit,
    SemiImplicit,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Explicit => "explicit",
            Scheme::SemiImplicit => "semi-implicit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Bound on `sup |−ε²Δ_h Q + Df(Q)|` over free nodes.
    pub residual_tol: f64,
    /// Fraction of the stability bound used as the initial step.
    pub step_safety: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Trace (and checkpoint) cadence in iterations.
    pub log_every: usize,
    /// Write the current field in QF1 format every `log_every` iterations.
    pub checkpoint: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 20_000,
            residual_tol: 1e-4,
            step_safety: 0.9,
            scheme: Scheme::SemiImplicit,
            seed: 0,
            log_every: 10,
            checkpoint: None,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 || !(self.residual_tol > 0.0) {
            return Err(Error::InvalidParams(
                "need max_iters >= 1 and residual_tol > 0".into(),
            ));
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "step_safety must lie in (0, 1], got {}",
                self.step_safety
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// Accepted steps.
    pub iterations: usize,
    pub rejected_steps: usize,
    pub final_energy: f64,
    pub final_residual: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Largest `|Q|` seen along the flow.
    pub linf_max: f64,
    /// Accepted iterates with `|Q| > 2√(2/3) s_*` somewhere.
    pub linf_violations: usize,
    /// The flow stalled: no step size decreased the energy.
    pub stalled: bool,
    pub trace: Vec<TraceRow>,
}

impl ConvergenceReport {
    /// `iter,energy,residual,step` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,energy,residual,step\n");
        for r in &self.trace {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e}\n",
                r.iter, r.energy, r.residual, r.step
            ));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(self.to_csv().as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Tighter Lipschitz bound of `Df` on `|Q| <= m` than
/// [`MaterialParams::hessian_bound`].
fn bulk_lipschitz(mp: &MaterialParams, m: f64) -> f64 {
    let quad = (mp.c * m * m - mp.a)
        .abs()
        .max((3.0 * mp.c * m * m - mp.a).abs());
    quad + 2.0 * (2.0f64 / 3.0).sqrt() * mp.b * m
}

/// Largest step for which forward Euler decreases the energy, given the
/// current `|Q|` bound: `2 / (4n/h² + L_f/ε²)`.
pub fn explicit_step_bound(field: &FieldQ) -> f64 {
    let h = field.grid.h();
    let n = field.grid.ndim() as f64;
    let m = field.linf_norm().max(field.params.vacuum_norm());
    let lf = bulk_lipschitz(&field.params, m);
    2.0 / (4.0 * n / (h * h) + lf / (field.epsilon * field.epsilon))
}

/// Step bound of the semi-implicit scheme, `2ε²/L_f`.
pub fn semi_implicit_step_bound(field: &FieldQ) -> f64 {
    let m = field.linf_norm().max(field.params.vacuum_norm());
    2.0 * field.epsilon * field.epsilon / bulk_lipschitz(&field.params, m)
}

/// One forward-Euler step `Q ← Q − τ(−Δ_h Q + Df(Q)/ε²)` on free nodes.
pub fn flow_step(field: &FieldQ, tau: f64) -> FieldQ {
    let mut grad = vec![QTensor::ZERO; field.len()];
    energy_gradient_into(field, &mut grad);
    explicit_from_gradient(field, &grad, tau)
}

fn explicit_from_gradient(field: &FieldQ, grad: &[QTensor], tau: f64) -> FieldQ {
    let mut out = field.clone();
    par::for_each_mut(&mut out.values, |i, q| {
        if !field.boundary_mask[i] {
            *q -= tau * grad[i];
        }
    });
    out
}

/// One semi-implicit step, Laplacian implicit and bulk term explicit.
pub fn semi_implicit_step(field: &FieldQ, tau: f64) -> FieldQ {
    let mut grad = vec![QTensor::ZERO; field.len()];
    energy_gradient_into(field, &mut grad);
    let fast = SeparableSolver::detect(field);
    semi_implicit_from_gradient(field, &grad, tau, fast.as_ref())
}

/// Solves `(I − τΔ_h) X = Q − τ Df(Q)/ε²` with `X = Q` on Dirichlet nodes.
fn semi_implicit_from_gradient(
    field: &FieldQ,
    grad: &[QTensor],
    tau: f64,
    fast: Option<&SeparableSolver>,
) -> FieldQ {
    let n = field.len();
    let mask = &field.boundary_mask;
    let grid = &field.grid;
    // rhs = Q − τ Df/ε², assembled from the gradient (grad = Df/ε² − ΔQ).
    let rhs: Vec<QTensor> = par::map(n, |i| {
        if mask[i] {
            QTensor::ZERO
        } else {
            field.values[i] - tau * (grad[i] + laplacian(grid, &field.values, i))
        }
    });
    if let Some(solver) = fast {
        let mut x = field.clone();
        solver.solve(&field.values, &rhs, tau, &mut x.values);
        return x;
    }
    // CG from the explicit step.
    let mut x = explicit_from_gradient(field, grad, tau);
    let apply = |v: &[QTensor], out: &mut [QTensor]| {
        par::for_each_mut(out, |i, o| {
            *o = if mask[i] {
                QTensor::ZERO
            } else {
                v[i] - tau * laplacian(grid, v, i)
            };
        });
    };
    let dot = |a: &[QTensor], b: &[QTensor]| par::sum(n, |i| a[i].dot(&b[i]));

    let mut ax = vec![QTensor::ZERO; n];
    apply(&x.values, &mut ax);
    let mut r: Vec<QTensor> = par::map(n, |i| {
        if mask[i] {
            QTensor::ZERO
        } else {
            rhs[i] - ax[i]
        }
    });
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = rr * 1e-14;
    let mut ap = vec![QTensor::ZERO; n];
    let mut iters = 0;
    while rr > target && rr > 0.0 && iters < 500 {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        par::for_each_mut(&mut x.values, |i, q| {
            if !mask[i] {
                *q += alpha * p[i];
            }
        });
        par::for_each_mut(&mut r, |i, v| *v -= alpha * ap[i]);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        par::for_each_mut(&mut p, |i, v| *v = r[i] + beta * *v);
        iters += 1;
    }
    x
}

/// Gradient flow to a discrete critical point.
///
/// Terminates when the Euler-Lagrange residual drops below
/// `opts.residual_tol` or after `opts.max_iters` accepted steps; in the
/// latter case the report carries `converged = false`.
pub fn minimize(init: FieldQ, opts: &SolveOptions) -> Result<(FieldQ, ConvergenceReport)> {
    opts.validate()?;
    let mut field = init;
    let n = field.len();
    let eps2 = field.epsilon * field.epsilon;
    let linf_bound = field.params.linf_bound();
    let (mut energy, mut linf) = total_energy_and_linf(&field);
    if !energy.is_finite() {
        return Err(Error::NonFiniteEnergy { iteration: 0 });
    }
    let bound = |f: &FieldQ| match opts.scheme {
        Scheme::Explicit => explicit_step_bound(f),
        Scheme::SemiImplicit => semi_implicit_step_bound(f),
    };
    // The bulk Lipschitz bound is pessimistic; the semi-implicit step may grow
    // past it while the energy keeps decreasing.
    let growth_cap = match opts.scheme {
        Scheme::Explicit => 1.0,
        Scheme::SemiImplicit => 4.0,
    };
    let mut tau = opts.step_safety * bound(&field);
    let fast = match opts.scheme {
        Scheme::SemiImplicit => SeparableSolver::detect(&field),
        Scheme::Explicit => None,
    };
    let mut grad = vec![QTensor::ZERO; n];
    let mut report = ConvergenceReport {
        converged: false,
        iterations: 0,
        rejected_steps: 0,
        final_energy: energy,
        final_residual: f64::INFINITY,
        scheme: opts.scheme,
        seed: opts.seed,
        linf_max: linf,
        linf_violations: usize::from(linf > linf_bound * (1.0 + 1e-12)),
        stalled: false,
        trace: Vec::new(),
    };
    let log_every = opts.log_every.max(1);

    loop {
        energy_gradient_into(&field, &mut grad);
        let residual = eps2 * par::max(n, |i| grad[i].norm());
        let iter = report.iterations;
        if iter.is_multiple_of(log_every) {
            report.trace.push(TraceRow {
                iter,
                energy,
                residual,
                step: tau,
            });
            if let Some(path) = &opts.checkpoint {
                if iter > 0 {
                    qf1::write(path, &field)?;
                }
            }
        }
        report.final_residual = residual;
        if residual <= opts.residual_tol {
            report.converged = true;
            break;
        }
        if iter >= opts.max_iters {
            break;
        }
        let mut halvings = 0;
        let accepted = loop {
            let trial = match opts.scheme {
                Scheme::Explicit => explicit_from_gradient(&field, &grad, tau),
                Scheme::SemiImplicit => {
                    semi_implicit_from_gradient(&field, &grad, tau, fast.as_ref())
                }
            };
            let (e_trial, linf_trial) = total_energy_and_linf(&trial);
            if e_trial.is_finite() && e_trial <= energy {
                break Some((trial, e_trial, linf_trial));
            }
            report.rejected_steps += 1;
            halvings += 1;
            tau *= 0.5;
            if halvings > 60 {
                if !e_trial.is_finite() {
                    return Err(Error::NonFiniteEnergy { iteration: iter });
                }
                break None;
            }
        };
        let Some((next, e_next, linf_next)) = accepted else {
            report.stalled = true;
            break;
        };
        field = next;
        energy = e_next;
        linf = linf_next;
        report.iterations += 1;
        report.linf_max = report.linf_max.max(linf);
        if linf > linf_bound * (1.0 + 1e-12) {
            report.linf_violations += 1;
        }
        tau = (tau * 1.25).min(growth_cap * opts.step_safety * bound(&field));
    }
    report.final_energy = energy;
    if report.trace.last().map(|r| r.iter) != Some(report.iterations) {
        report.trace.push(TraceRow {
            iter: report.iterations,
            energy,
            residual: report.final_residual,
            step: tau,
        });
    }
    Ok((field, report))
}

/// Solves a decreasing list of ε, warm-starting each solve from the
/// previous solution. A failed solve restarts the next one from `init`.
pub fn continuation_sweep(
    init: &FieldQ,
    eps_list: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<Result<(FieldQ, ConvergenceReport)>>> {
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParams(
            "eps list must be strictly decreasing".into(),
        ));
    }
    let h = init.grid.h();
    if let Some(e) = eps_list.iter().find(|&&e| !(e >= 2.0 * h)) {
        return Err(Error::InvalidParams(format!(
            "eps {e} is below 2h = {}",
            2.0 * h
        )));
    }
    let mut out = Vec::with_capacity(eps_list.len());
    let mut warm: Option<FieldQ> = None;
    for &eps in eps_list {
        let mut start = warm.take().unwrap_or_else(|| init.clone());
        start.epsilon = eps;
        let result = minimize(start, opts);
        if let Ok((f, _)) = &result {
            warm = Some(f.clone());
        }
        out.push(result);
    }
    Ok(out)
}

/// Adds independent uniform noise of the given amplitude to every
/// coordinate of every free node.
pub fn perturb(field: &FieldQ, amplitude: f64, seed: u64) -> FieldQ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = field.clone();
    for (q, &fixed) in out.values.iter_mut().zip(&field.boundary_mask) {
        if !fixed {
            for c in q.0.iter_mut() {
                *c += amplitude * rng.gen_range(-1.0..1.0);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationAudit {
    pub trials: usize,
    /// Trials whose perturbed energy fell below the unperturbed one.
    pub lowered: usize,
    pub min_increase: f64,
}

/// Necessary-condition check for local minimality: random small
/// perturbations of the free nodes should never lower the energy.
pub fn perturbation_audit(
    field: &FieldQ,
    trials: usize,
    amplitude: f64,
    seed: u64,
) -> PerturbationAudit {
    let (e0, _) = total_energy_and_linf(field);
    let mut lowered = 0;
    let mut min_increase = f64::INFINITY;
    for t in 0..trials {
        let p = perturb(field, amplitude, seed.wrapping_add(t as u64));
        let (e, _) = total_energy_and_linf(&p);
        let d = e - e0;
        if d < 0.0 {
            lowered += 1;
        }
        min_increase = min_increase.min(d);
    }
    PerturbationAudit {
        trials,
        lowered,
        min_increase,
    }
}

/// Total discrete energy of a field (the functional the flow decreases).
pub fn total_energy(field: &FieldQ) -> f64 {
    total_energy_and_linf(field).0
}
