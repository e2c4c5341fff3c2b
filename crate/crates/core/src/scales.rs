//! Regular scales, bad sets, coverings and the audits built on them.
//!
//! Scales are suprema over the radius ladder `{h, 2h, …}` capped at the
//! distance to the grid boundary, so a reported scale is the largest passing
//! rung. Whole-region bad sets use FFT ball sums ([`crate::conv`]) and agree
//! node for node with the per-node definitions.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::BallSums;
use crate::error::{Error, Result};
use crate::field::{
    directional_tensor, energy, energy_nodes, hessian_norm, node_gradient_sq, theta_with,
    Densities, FieldQ, GridSpec, PhiCutoff, Region,
};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    /// Energy-density threshold of the type II scale.
    pub lambda: f64,
    /// Clearing-out constant.
    pub eta_clear: f64,
    pub sigma: f64,
    pub theta: f64,
    pub beta: f64,
}

impl ScaleParams {
    pub fn new(lambda: f64, eta_clear: f64, sigma: f64, theta: f64, beta: f64) -> Result<Self> {
        let p = ScaleParams {
            lambda,
            eta_clear,
            sigma,
            theta,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda > 0.0
            && self.eta_clear > 0.0
            && self.sigma > 0.0
            && self.sigma < 0.5
            && self.theta > 0.0
            && self.theta < 1.0
            && self.beta > 0.0
            && self.beta <= 0.5;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "invalid scale parameters {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BadKind {
    I,
    II,
}

impl std::fmt::Display for BadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BadKind::I => "I",
            BadKind::II => "II",
        })
    }
}

/// Lattice offsets sorted by length, shared by the per-node scans.
struct Offsets {
    /// `(offset in index space, squared length in units of h²)`.
    list: Vec<([i64; 3], i64)>,
}

impl Offsets {
    fn new(ndim: usize, reach: i64) -> Self {
        let zr = if ndim == 3 { reach } else { 0 };
        let mut list = Vec::new();
        for k in -zr..=zr {
            for j in -reach..=reach {
                for i in -reach..=reach {
                    let d2 = i * i + j * j + k * k;
                    if d2 <= reach * reach {
                        list.push(([i, j, k], d2));
                    }
                }
            }
        }
        list.sort_by_key(|&(o, d2)| (d2, o));
        Offsets { list }
    }
}

/// Per-field data reused by every scale query.
pub struct ScaleContext<'a> {
    field: &'a FieldQ,
    densities: Densities,
    /// `h^n e_ε` per node.
    weighted: Vec<f64>,
    /// Smallest radius at which a node alone breaks the type I condition.
    type_i_radius: Vec<f64>,
    offsets: OnceLock<Offsets>,
    sums: OnceLock<BallSums>,
}

impl<'a> ScaleContext<'a> {
    pub fn new(field: &'a FieldQ) -> Self {
        let densities = Densities::new(field);
        let w = field.grid.cell_volume();
        let weighted = par::map(field.len(), |i| w * densities.energy(i));
        let type_i_radius = par::map(field.len(), |i| {
            let g = node_gradient_sq(field, i).sqrt();
            match hessian_norm(field, i) {
                // Positive root of H r² + g r = 1.
                Some(hh) => {
                    let den = g + (g * g + 4.0 * hh).sqrt();
                    if den > 0.0 {
                        2.0 / den
                    } else {
                        f64::INFINITY
                    }
                }
                None => 0.0,
            }
        });
        ScaleContext {
            field,
            densities,
            weighted,
            type_i_radius,
            offsets: OnceLock::new(),
            sums: OnceLock::new(),
        }
    }

    pub fn field(&self) -> &FieldQ {
        self.field
    }

    pub fn densities(&self) -> &Densities {
        &self.densities
    }

    fn grid(&self) -> &GridSpec {
        &self.field.grid
    }

    fn offsets(&self) -> &Offsets {
        self.offsets.get_or_init(|| {
            let d = self.grid().dims3();
            let reach = (d[0].max(d[1]).max(d[2]) / 2 + 1) as i64;
            Offsets::new(self.grid().ndim(), reach)
        })
    }

    fn sums(&self) -> &BallSums {
        self.sums.get_or_init(|| BallSums::new(self.grid()))
    }

    /// Number of ladder rungs available at a node.
    fn rungs(&self, idx: usize) -> usize {
        let g = self.grid();
        let cap = g.distance_to_boundary(g.position(idx));
        (cap / g.h() * (1.0 + 1e-12)).floor().max(0.0) as usize
    }

    fn shifted(&self, idx: usize, o: [i64; 3]) -> usize {
        let c = self.grid().coords(idx);
        self.grid().index(
            (c[0] as i64 + o[0]) as usize,
            (c[1] as i64 + o[1]) as usize,
            (c[2] as i64 + o[2]) as usize,
        )
    }

    /// Type I regular scale at a node: the largest rung `r` with
    /// `r (|∇Q| + r|D²Q|) <= 1` on `B_r`, or 0.
    pub fn regular_scale_i(&self, idx: usize) -> f64 {
        let h = self.grid().h();
        let k_max = self.rungs(idx);
        // A rung r fails iff some z has |z − x| < r and ρ_z < r, so the
        // scale is the largest rung not above min_z max(|z − x|, ρ_z).
        let limit = k_max as f64 * h;
        let mut best = f64::INFINITY;
        for &(o, d2) in &self.offsets().list {
            let d = (d2 as f64).sqrt() * h;
            if d >= best.min(limit) {
                break;
            }
            let z = self.shifted(idx, o);
            best = best.min(d.max(self.type_i_radius[z]));
        }
        let bound = best.min(limit);
        ((bound / h) * (1.0 + 1e-12)).floor() * h
    }

    /// Type II regular scale at a node: the largest rung `r` with
    /// `E_ε(B_r) <= Λ r`, or 0.
    pub fn regular_scale_ii(&self, idx: usize, lambda: f64) -> f64 {
        let h = self.grid().h();
        let k_max = self.rungs(idx) as i64;
        let mut acc = 0.0;
        let mut best = 0.0;
        let list = &self.offsets().list;
        let mut t = 0;
        for k in 1..=k_max {
            while t < list.len() && list[t].1 < k * k {
                acc += self.weighted[self.shifted(idx, list[t].0)];
                t += 1;
            }
            if acc <= lambda * k as f64 * h {
                best = k as f64 * h;
            }
        }
        best
    }

    fn first_rung(&self, r: f64) -> usize {
        ((r / self.grid().h()) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    /// Bad-set masks over `nodes` at each radius: entry `[j][t]` is true iff
    /// the scale of `nodes[t]` is below `radii[j]`.
    pub fn bad_sets(
        &self,
        kind: BadKind,
        radii: &[f64],
        lambda: f64,
        nodes: &[usize],
    ) -> Result<Vec<Vec<bool>>> {
        let h = self.grid().h();
        if radii.iter().any(|&r| !(r >= h * (1.0 - 1e-12))) {
            return Err(Error::InvalidParams(format!(
                "bad-set radii must be >= h = {h}"
            )));
        }
        if nodes.iter().any(|&i| i >= self.field.len()) {
            return Err(Error::RegionOutOfDomain);
        }
        match kind {
            BadKind::I => Ok(radii.iter().map(|&r| self.bad_i(r, nodes)).collect()),
            BadKind::II => Ok(self.bad_ii(radii, lambda, nodes)),
        }
    }

    fn bad_i(&self, r: f64, nodes: &[usize]) -> Vec<bool> {
        let h = self.grid().h();
        let k0 = self.first_rung(r);
        let rho = k0 as f64 * h;
        let seeds: Vec<f64> = self
            .type_i_radius
            .iter()
            .map(|&p| if p < rho { 1.0 } else { 0.0 })
            .collect();
        let bs = self.sums();
        let counts = bs.ball_sums(&bs.spectrum(&seeds), rho);
        nodes
            .iter()
            .map(|&i| self.rungs(i) < k0 || counts[i] > 0.5)
            .collect()
    }

    fn bad_ii(&self, radii: &[f64], lambda: f64, nodes: &[usize]) -> Vec<Vec<bool>> {
        let h = self.grid().h();
        let k_min = radii.iter().map(|&r| self.first_rung(r)).min().unwrap_or(1);
        let caps: Vec<usize> = nodes.iter().map(|&i| self.rungs(i)).collect();
        let k_top = caps.iter().copied().max().unwrap_or(0);
        // Largest passing rung >= k_min per node, scanning rungs downwards.
        let mut best = vec![0usize; nodes.len()];
        let bs = self.sums();
        let spec = bs.spectrum(&self.weighted);
        for k in (k_min..=k_top).rev() {
            let open: Vec<usize> = (0..nodes.len())
                .filter(|&t| best[t] == 0 && caps[t] >= k)
                .collect();
            if open.is_empty() {
                continue;
            }
            let rho = k as f64 * h;
            let sums = bs.ball_sums(&spec, rho);
            let bound = lambda * rho;
            for t in open {
                let i = nodes[t];
                let mut e = sums[i];
                if (e - bound).abs() <= 1e-9 * (1.0 + bound.abs()) {
                    e = self.ball_energy_direct(i, rho);
                }
                if e <= bound {
                    best[t] = k;
                }
            }
        }
        radii
            .iter()
            .map(|&r| {
                let k0 = self.first_rung(r);
                best.iter().map(|&b| b < k0).collect()
            })
            .collect()
    }

    fn ball_energy_direct(&self, idx: usize, rho: f64) -> f64 {
        let kk = (rho / self.grid().h()).round() as i64;
        self.offsets()
            .list
            .iter()
            .take_while(|&&(_, d2)| d2 < kk * kk)
            .map(|&(o, _)| self.weighted[self.shifted(idx, o)])
            .sum()
    }
}

/// Radius ladder `{h, 2h, …}` up to the distance from `x` to the boundary.
pub fn radius_ladder(grid: &GridSpec, x: [f64; 3]) -> Vec<f64> {
    let cap = grid.distance_to_boundary(x);
    let k = (cap / grid.h() * (1.0 + 1e-12)).floor().max(0.0) as usize;
    (1..=k).map(|i| i as f64 * grid.h()).collect()
}

pub fn regular_scale_i(field: &FieldQ, idx: usize) -> f64 {
    ScaleContext::new(field).regular_scale_i(idx)
}

pub fn regular_scale_ii(field: &FieldQ, idx: usize, lambda: f64) -> f64 {
    ScaleContext::new(field).regular_scale_ii(idx, lambda)
}

/// Bad set at one radius over a region, as a list of node indices.
pub fn bad_set(
    field: &FieldQ,
    r: f64,
    lambda: f64,
    kind: BadKind,
    region: &Region,
) -> Result<Vec<usize>> {
    let nodes = region.nodes(&field.grid)?;
    let ctx = ScaleContext::new(field);
    let mask = ctx.bad_sets(kind, &[r], lambda, &nodes)?.remove(0);
    Ok(nodes
        .into_iter()
        .zip(mask)
        .filter_map(|(i, b)| b.then_some(i))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub radius: f64,
    pub count: usize,
    pub centers: Vec<usize>,
}

fn for_each_in_ball(grid: &GridSpec, x: [f64; 3], r: f64, mut f: impl FnMut(usize)) {
    let d = grid.dims3();
    let o = grid.origin();
    let h = grid.h();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..grid.ndim() {
        let l = ((x[a] - r - o[a]) / h).floor().max(0.0) as usize;
        let u = (((x[a] + r - o[a]) / h).ceil().max(0.0) as usize).min(d[a] - 1);
        lo[a] = l;
        hi[a] = u;
    }
    let r2 = r * r;
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let idx = grid.index(i, j, k);
                let p = grid.position(idx);
                let dd = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2) + (p[2] - x[2]).powi(2);
                if dd < r2 {
                    f(idx);
                }
            }
        }
    }
}

/// Greedy cover of a node set by balls `B_r` centred at nodes of the set:
/// repeatedly open a ball at the first uncovered node in index order.
pub fn greedy_cover(grid: &GridSpec, nodes: &[usize], r: f64) -> Result<Cover> {
    if !(r >= grid.h() * (1.0 - 1e-12)) {
        return Err(Error::InvalidParams(format!(
            "cover radius must be >= h, got {r}"
        )));
    }
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut member = vec![false; grid.len()];
    for &i in &sorted {
        member[i] = true;
    }
    let mut covered = vec![false; grid.len()];
    let mut centers = Vec::new();
    for &i in &sorted {
        if covered[i] {
            continue;
        }
        centers.push(i);
        for_each_in_ball(grid, grid.position(i), r, |j| {
            if member[j] {
                covered[j] = true;
            }
        });
    }
    Ok(Cover {
        radius: r,
        count: centers.len(),
        centers,
    })
}

/// Independent check that every node lies strictly within `r` of a center.
pub fn verify_cover(grid: &GridSpec, nodes: &[usize], cover: &Cover) -> bool {
    let mut covered = vec![false; grid.len()];
    for &c in &cover.centers {
        for_each_in_ball(grid, grid.position(c), cover.radius, |j| covered[j] = true);
    }
    nodes.iter().all(|&i| covered[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScales {
    pub index: usize,
    pub position: [f64; 3],
    pub r_i: f64,
    pub r_ii: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverEntry {
    pub kind: BadKind,
    pub radius: f64,
    pub bad_nodes: usize,
    pub cover: Cover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub lambda: f64,
    pub sigma: f64,
    pub nodes: Vec<NodeScales>,
    pub covers: Vec<CoverEntry>,
}

impl ScaleReport {
    pub fn scales_csv(&self) -> String {
        let mut s = String::from("node,x,y,z,r_I,r_II\n");
        for n in &self.nodes {
            s.push_str(&format!(
                "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                n.index, n.position[0], n.position[1], n.position[2], n.r_i, n.r_ii
            ));
        }
        s
    }

    /// Covering table with the σ-compensated product `N r^{1+σ}`.
    pub fn covering_csv(&self) -> String {
        let mut s = String::from("kind,r,bad_nodes,N,N_r_pow\n");
        for c in &self.covers {
            s.push_str(&format!(
                "{},{:.10e},{},{},{:.10e}\n",
                c.kind,
                c.radius,
                c.bad_nodes,
                c.cover.count,
                c.cover.count as f64 * c.radius.powf(1.0 + self.sigma)
            ));
        }
        s
    }
}

/// Per-node scales on every `stride`-th node of `region` (per axis), plus
/// bad sets and greedy covers of both kinds at each radius. Coverings use
/// the nodes of `region` at least the largest radius from the boundary, so
/// every rung is available there.
pub fn scale_report(
    field: &FieldQ,
    params: &ScaleParams,
    region: &Region,
    radii: &[f64],
    stride: usize,
) -> Result<ScaleReport> {
    params.validate()?;
    let nodes = region.nodes(&field.grid)?;
    let ctx = ScaleContext::new(field);
    let stride = stride.max(1);
    let sampled: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|&i| field.grid.coords(i).iter().all(|c| c % stride == 0))
        .collect();
    let scales = par::map(sampled.len(), |t| {
        let i = sampled[t];
        NodeScales {
            index: i,
            position: field.grid.position(i),
            r_i: ctx.regular_scale_i(i),
            r_ii: ctx.regular_scale_ii(i, params.lambda),
        }
    });
    let reach = radii.iter().copied().fold(0.0, f64::max);
    let nodes: Vec<usize> = nodes
        .into_iter()
        .filter(|&i| field.grid.distance_to_boundary(field.grid.position(i)) >= reach)
        .collect();
    let mut covers = Vec::new();
    for kind in [BadKind::I, BadKind::II] {
        let masks = ctx.bad_sets(kind, radii, params.lambda, &nodes)?;
        for (&r, mask) in radii.iter().zip(masks) {
            let bad: Vec<usize> = nodes
                .iter()
                .zip(&mask)
                .filter_map(|(&i, &b)| b.then_some(i))
                .collect();
            let cover = greedy_cover(&field.grid, &bad, r)?;
            covers.push(CoverEntry {
                kind,
                radius: r,
                bad_nodes: bad.len(),
                cover,
            });
        }
    }
    Ok(ScaleReport {
        lambda: params.lambda,
        sigma: params.sigma,
        nodes: scales,
        covers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearingOut {
    /// `E(B_2r) <= η r log(r/ε)`.
    pub hypothesis: bool,
    /// `E(B_r) <= C r`.
    pub conclusion: bool,
    pub hypothesis_margin: f64,
    pub conclusion_margin: f64,
    /// Hypothesis true and conclusion false.
    pub counterexample: bool,
}

/// Evaluates the clearing-out implication at `(x, r)` with constants
/// `eta` and `c`.
pub fn clearing_out_audit(
    field: &FieldQ,
    x: [f64; 3],
    r: f64,
    eta: f64,
    c: f64,
) -> Result<ClearingOut> {
    if !(r > field.epsilon / eta) {
        return Err(Error::InvalidParams(format!(
            "clearing-out needs r > eps/eta = {}, got {r}",
            field.epsilon / eta
        )));
    }
    let outer = energy(
        field,
        &Region::Ball {
            center: x,
            radius: 2.0 * r,
        },
    )?
    .total;
    let inner = energy(
        field,
        &Region::Ball {
            center: x,
            radius: r,
        },
    )?
    .total;
    let hyp_bound = eta * r * (r / field.epsilon).ln();
    let hypothesis = outer <= hyp_bound;
    let conclusion = inner <= c * r;
    Ok(ClearingOut {
        hypothesis,
        conclusion,
        hypothesis_margin: hyp_bound - outer,
        conclusion_margin: c * r - inner,
        counterexample: hypothesis && !conclusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodRadius {
    pub radius: f64,
    pub s: f64,
    /// `Θ_{e^s}` at the returned sample.
    pub f_value: f64,
    /// `(2/(ε² e^s)) ∫_{B_{e^s}} f(Q)` at the returned sample.
    pub g_value: f64,
    /// `log(f(s₂)/f(s₁)) / (s₂ − s₁)` over the whole interval.
    pub lambda: f64,
    /// `λ f − g`; nonnegative iff the selection inequality holds.
    pub margin: f64,
    pub holds: bool,
}

/// Searches `s ∈ [¼ log ε, ⅛ log ε]` on `samples` uniform points for the
/// minimizer of `g/f` and checks `g <= λ f` there.
pub fn good_radius(
    field: &FieldQ,
    x: [f64; 3],
    phi: &PhiCutoff,
    samples: usize,
) -> Result<GoodRadius> {
    let eps = field.epsilon;
    if !(eps < 1.0) {
        return Err(Error::InvalidParams(format!(
            "good radius needs eps < 1, got {eps}"
        )));
    }
    let upper = eps.powf(0.125);
    let min = 4.0 * field.grid.h();
    if upper < min {
        return Err(Error::IntervalTooNarrow { upper, min });
    }
    let samples = samples.max(33);
    let (s1, s2) = (0.25 * eps.ln(), 0.125 * eps.ln());
    let densities = Densities::new(field);
    let eval = |s: f64| -> Result<(f64, f64)> {
        let r = s.exp();
        let f = theta_with(field, &densities, x, r, phi)?;
        let nodes = Region::Ball {
            center: x,
            radius: r,
        }
        .nodes(&field.grid)?;
        let bulk = energy_nodes(field, &nodes).bulk * eps * eps;
        Ok((f, 2.0 * bulk / (eps * eps * r)))
    };
    let mut pts = Vec::with_capacity(samples);
    for t in 0..samples {
        let s = s1 + (s2 - s1) * t as f64 / (samples - 1) as f64;
        pts.push((s, eval(s)?));
    }
    let (f1, f2) = (pts[0].1 .0, pts[samples - 1].1 .0);
    let lambda = if f1 > 0.0 && f2 > 0.0 {
        (f2 / f1).ln() / (s2 - s1)
    } else {
        0.0
    };
    let ratio = |f: f64, g: f64| {
        if f > 0.0 {
            g / f
        } else if g > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let &(s, (f, g)) = pts
        .iter()
        .min_by(|a, b| ratio(a.1 .0, a.1 .1).total_cmp(&ratio(b.1 .0, b.1 .1)))
        .expect("at least one sample");
    let margin = lambda * f - g;
    Ok(GoodRadius {
        radius: s.exp(),
        s,
        f_value: f,
        g_value: g,
        lambda,
        margin,
        holds: margin >= 0.0,
    })
}

/// `∫_{B_r(x)} f(Q) / ε³` under the bounded-energy hypothesis
/// `r⁻¹ E_ε(B_4r(x)) <= m`.
pub fn bulk_decay_audit(field: &FieldQ, x: [f64; 3], r: f64, m: f64) -> Result<f64> {
    let outer = energy(
        field,
        &Region::Ball {
            center: x,
            radius: 4.0 * r,
        },
    )?;
    let scaled = outer.total / r;
    if scaled > m {
        return Err(Error::HypothesisViolated {
            scaled_energy: scaled,
            bound: m,
        });
    }
    let inner = energy(
        field,
        &Region::Ball {
            center: x,
            radius: r,
        },
    )?;
    let eps = field.epsilon;
    // The bulk part of E_ε carries 1/ε².
    Ok(inner.bulk * eps * eps / eps.powi(3))
}

/// Near-uniform directions on the upper hemisphere (a Fibonacci lattice).
pub fn hemisphere_design(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            [rho * a.cos(), rho * a.sin(), z]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flatness {
    pub direction: [f64; 3],
    pub value: f64,
    /// Best value over the design before refinement.
    pub design_value: f64,
    /// Largest over smallest directional energy.
    pub anisotropy: f64,
}

/// Direction minimizing `(1/r)∫_{B_r(x)} |v·∇Q|²`: a 64-point design, then
/// refinement by the quadratic form's lowest eigenvector.
pub fn directional_flatness(field: &FieldQ, x: [f64; 3], r: f64) -> Result<Flatness> {
    let g = directional_tensor(field, x, r)?;
    let form = |v: [f64; 3]| crate::field::quadratic_form(&g, v);
    let design = hemisphere_design(64);
    let (mut best_v, mut best) = (design[0], form(design[0]));
    for &v in &design[1..] {
        let q = form(v);
        if q < best {
            best = q;
            best_v = v;
        }
    }
    let m = nalgebra::Matrix3::from_fn(|a, b| g[a][b]);
    let eig = m.symmetric_eigen();
    let (lo, hi) = {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        (idx[0], idx[2])
    };
    let col = eig.eigenvectors.column(lo);
    let mut v = [col[0], col[1], col[2]];
    let dot = v[0] * best_v[0] + v[1] * best_v[1] + v[2] * best_v[2];
    if dot < 0.0 {
        v = v.map(|c| -c);
    }
    let refined = form(v);
    let (direction, value) = if refined <= best {
        (v, refined)
    } else {
        (best_v, best)
    };
    let lo_val = eig.eigenvalues[lo].max(0.0);
    let anisotropy = if lo_val > 0.0 {
        eig.eigenvalues[hi] / lo_val
    } else {
        f64::INFINITY
    };
    Ok(Flatness {
        direction,
        value,
        design_value: best,
        anisotropy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityAudit {
    pub checks: usize,
    pub violations: usize,
    /// Smallest `(Θ_R − Θ_r) / max(Θ_R, 1)` over consecutive radii.
    pub worst_margin: f64,
}

/// Checks `Θ_R >= Θ_r` for consecutive radii at every center, with relative
/// tolerance `rel_tol·max(Θ_R, 1)`.
pub fn theta_monotonicity_audit(
    field: &FieldQ,
    centers: &[[f64; 3]],
    radii: &[f64],
    phi: &PhiCutoff,
    rel_tol: f64,
) -> Result<MonotonicityAudit> {
    let densities = Densities::new(field);
    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut audit = MonotonicityAudit {
        checks: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
    };
    for &x in centers {
        let thetas = sorted
            .iter()
            .map(|&r| theta_with(field, &densities, x, r, phi))
            .collect::<Result<Vec<_>>>()?;
        for w in thetas.windows(2) {
            let scale = w[1].max(1.0);
            let margin = (w[1] - w[0]) / scale;
            audit.checks += 1;
            audit.worst_margin = audit.worst_margin.min(margin);
            if margin < -rel_tol {
                audit.violations += 1;
            }
        }
    }
    Ok(audit)
}

/// `n` uniform random points whose distance to the boundary is at least
/// `clearance`.
pub fn random_centers(
    grid: &GridSpec,
    n: usize,
    clearance: f64,
    seed: u64,
) -> Result<Vec<[f64; 3]>> {
    let b = grid.bounds();
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..grid.ndim() {
        lo[a] = b[a][0] + clearance;
        hi[a] = b[a][1] - clearance;
        if !(hi[a] > lo[a]) {
            return Err(Error::SupportExceedsDomain { radius: clearance });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            std::array::from_fn(|a| {
                if a < grid.ndim() {
                    rng.gen_range(lo[a]..hi[a])
                } else {
                    0.0
                }
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenAudit {
    pub checked: usize,
    /// Points satisfying all three smallness conditions.
    pub screened: usize,
    /// Screened points with `r^Λ < r/2`.
    pub violations: usize,
}

/// Screen of the line-regularity criterion: at each node `x`, with
/// `δ = η log(1/ε)`, require `Θ_r(x) − Θ_{βr}(x) < δ`, a direction `v` with
/// `(1/r)∫_{B_r(x)}|v·∇Q|² < δ`, and a second point `y ∈ B_r(x)` outside the
/// `σr`-tube about `x + span v` with `Θ_r(y) − Θ_{βr}(y) < δ`. Screened
/// points are checked against `r^Λ(x) >= r/2`.
pub fn theta_screen_audit(
    ctx: &ScaleContext<'_>,
    nodes: &[usize],
    r: f64,
    params: &ScaleParams,
    phi: &PhiCutoff,
) -> Result<ScreenAudit> {
    let field = ctx.field();
    let delta = params.eta_clear * (1.0 / field.epsilon).ln();
    let diff = |x: [f64; 3]| -> Result<f64> {
        Ok(theta_with(field, ctx.densities(), x, r, phi)?
            - theta_with(field, ctx.densities(), x, params.beta * r, phi)?)
    };
    let design = hemisphere_design(32);
    let mut audit = ScreenAudit {
        checked: 0,
        screened: 0,
        violations: 0,
    };
    for &i in nodes {
        let x = field.grid.position(i);
        audit.checked += 1;
        if diff(x)? >= delta {
            continue;
        }
        let flat = directional_flatness(field, x, r)?;
        if flat.value >= delta {
            continue;
        }
        let v = flat.direction;
        let mut second = false;
        for u in &design {
            let y: [f64; 3] = std::array::from_fn(|a| x[a] + 0.5 * r * u[a]);
            let along = (0..3).map(|a| (y[a] - x[a]) * v[a]).sum::<f64>();
            let perp2 = (0..3)
                .map(|a| (y[a] - x[a] - along * v[a]).powi(2))
                .sum::<f64>();
            if perp2.sqrt() < params.sigma * r {
                continue;
            }
            if diff(y)? < delta {
                second = true;
                break;
            }
        }
        if !second {
            continue;
        }
        audit.screened += 1;
        if ctx.regular_scale_ii(i, params.lambda) < 0.5 * r {
            audit.violations += 1;
        }
    }
    Ok(audit)
}
