//! ε-sweeps over boundary-data families, per-ε measurements, and verdicts.
//!
//! A sweep solves a strictly decreasing list of ε with warm starts, measures
//! every converged field on a fixed compact box `K`, and persists the fields
//! and records. Verdicts consume records only, after re-checking the energy
//! envelope and L^∞ hypotheses; a sweep that violates them gets
//! [`Outcome::NotApplicable`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{sha256_hex, Calibration};
use crate::error::{Error, Result};
use crate::field::{
    constant_bc, disclination_bc, energy, hedgehog_bc, lp_gradient_norm, qf1, Domain, FieldQ,
    GridSpec, PhiCutoff, Region,
};
use crate::scales::{self, BadKind, ScaleContext, ScaleParams};
use crate::solver::{minimize, Scheme, SolveOptions};
use crate::tensor::MaterialParams;

pub const LP_EXPONENTS: [f64; 4] = [1.2, 1.5, 1.8, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcFamily {
    Hedgehog,
    Disclination,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub bc: BcFamily,
    /// Director winding about the z axis (disclination family only).
    pub winding: f64,
    pub grid: Vec<usize>,
    pub h: f64,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    /// Compact box `[lo, hi]` per axis (z ignored on 2D grids).
    pub k_box: [[f64; 2]; 3],
    pub scale: ScaleParams,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Hex SHA-256 of the config text.
    pub hash: String,
}

const KEYS: [&str; 12] = [
    "bc",
    "winding",
    "grid",
    "h",
    "eps",
    "K",
    "lambda",
    "eta_clear",
    "sigma",
    "theta",
    "seed",
    "out_dir",
];

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config {
            line,
            message: format!("`{key}`: `{}` is not a finite number", v.trim()),
        })
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(line, key, s)).collect()
}

fn parse_winding(line: usize, v: &str) -> Result<f64> {
    let v = v.trim();
    let w = match v.split_once('/') {
        Some((n, d)) => parse_f64(line, "winding", n)? / parse_f64(line, "winding", d)?,
        None => parse_f64(line, "winding", v)?,
    };
    if (2.0 * w).fract() != 0.0 || w == 0.0 {
        return Err(Error::Config {
            line,
            message: format!("`winding` must be a nonzero multiple of 1/2, got `{v}`"),
        });
    }
    Ok(w)
}

/// Parses the line-oriented `key = value` config. `#` starts a comment.
/// Scale parameter `beta` comes from the calibration.
pub fn parse_config(text: &str, cal: &Calibration) -> Result<SweepConfig> {
    let mut seen: BTreeMap<&str, (usize, String)> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let k = k.trim();
        let key = KEYS
            .iter()
            .find(|&&known| known == k)
            .ok_or_else(|| Error::Config {
                line,
                message: format!("unknown key `{k}`"),
            })?;
        if seen.insert(key, (line, v.trim().to_string())).is_some() {
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    let get = |k: &str| {
        seen.get(k)
            .cloned()
            .ok_or_else(|| Error::MissingKey(k.to_string()))
    };

    let (l, v) = get("bc")?;
    let bc = match v.as_str() {
        "hedgehog" => BcFamily::Hedgehog,
        "disclination" => BcFamily::Disclination,
        "constant" => BcFamily::Constant,
        other => {
            return Err(Error::Config {
                line: l,
                message: format!("unknown bc `{other}`"),
            })
        }
    };
    let (l, v) = get("winding")?;
    let winding = parse_winding(l, &v)?;
    let (l, v) = get("grid")?;
    let grid: Vec<usize> = v
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config {
            line: l,
            message: format!("`grid`: expected comma-separated node counts, got `{v}`"),
        })?;
    if !(grid.len() == 2 || grid.len() == 3) || grid.iter().any(|&d| d < 8) {
        return Err(Error::Config {
            line: l,
            message: "`grid` needs 2 or 3 counts, each >= 8".into(),
        });
    }
    if bc == BcFamily::Hedgehog && grid.len() != 3 {
        return Err(Error::Config {
            line: l,
            message: "hedgehog data needs a 3D grid".into(),
        });
    }
    let (l, v) = get("h")?;
    let h = parse_f64(l, "h", &v)?;
    if !(h > 0.0) {
        return Err(Error::Config {
            line: l,
            message: "`h` must be positive".into(),
        });
    }
    let (l, v) = get("eps")?;
    let eps = parse_list(l, "eps", &v)?;
    if eps.is_empty() || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config {
            line: l,
            message: "`eps` must be strictly decreasing".into(),
        });
    }
    if let Some(e) = eps
        .iter()
        .find(|&&e| !(e >= 3.0 * h * (1.0 - 1e-12) && e < 1.0))
    {
        return Err(Error::Config {
            line: l,
            message: format!("eps {e} outside [3h, 1) with h = {h}"),
        });
    }
    let (l, v) = get("K")?;
    let kv = parse_list(l, "K", &v)?;
    if kv.len() != 2 * grid.len() {
        return Err(Error::Config {
            line: l,
            message: format!("`K` needs {} numbers (lo,hi per axis)", 2 * grid.len()),
        });
    }
    let mut k_box = [[0.0; 2]; 3];
    let g = GridSpec::centered(&grid, h)?;
    let b = g.bounds();
    for a in 0..grid.len() {
        let (lo, hi) = (kv[2 * a], kv[2 * a + 1]);
        let margin = 0.1 * (b[a][1] - b[a][0]);
        if !(lo < hi) || lo < b[a][0] + margin || hi > b[a][1] - margin {
            return Err(Error::Config {
                line: l,
                message: format!(
                    "`K` axis {a}: [{lo}, {hi}] must keep a margin of {margin:.4} inside [{}, {}]",
                    b[a][0], b[a][1]
                ),
            });
        }
        k_box[a] = [lo, hi];
    }
    let num = |k: &str| -> Result<f64> {
        let (l, v) = get(k)?;
        parse_f64(l, k, &v)
    };
    let scale = ScaleParams::new(
        num("lambda")?,
        num("eta_clear")?,
        num("sigma")?,
        num("theta")?,
        cal.scales.beta,
    )
    .map_err(|e| Error::Config {
        line: seen["lambda"].0,
        message: e.to_string(),
    })?;
    let seed = match seen.get("seed") {
        Some((l, v)) => v.parse::<u64>().map_err(|_| Error::Config {
            line: *l,
            message: format!("`seed` must be a nonnegative integer, got `{v}`"),
        })?,
        None => 0,
    };
    let (_, out_dir) = get("out_dir")?;
    Ok(SweepConfig {
        bc,
        winding,
        grid,
        h,
        eps,
        k_box,
        scale,
        seed,
        out_dir: PathBuf::from(out_dir),
        hash: sha256_hex(text.as_bytes()),
    })
}

pub fn load_config(path: impl AsRef<Path>, cal: &Calibration) -> Result<SweepConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, cal)
}

impl SweepConfig {
    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::centered(&self.grid, self.h)
    }

    pub fn k_region(&self) -> Region {
        let lo = std::array::from_fn(|a| self.k_box[a][0]);
        let hi = std::array::from_fn(|a| self.k_box[a][1]);
        Region::Box { lo, hi }
    }

    /// Boundary data at the first ε: the disclination axis is z through
    /// the origin, the hedgehog sits at the origin, the constant director
    /// is z.
    pub fn initial_field(&self, mp: &MaterialParams) -> Result<FieldQ> {
        let grid = self.grid_spec()?;
        let eps = self.eps[0];
        match self.bc {
            BcFamily::Hedgehog => hedgehog_bc(&grid, mp, eps, [0.0; 3], Domain::Box),
            BcFamily::Disclination => disclination_bc(&grid, mp, eps, 2, [0.0; 3], self.winding),
            BcFamily::Constant => constant_bc(&grid, mp, eps, [0.0, 0.0, 1.0]),
        }
    }

    /// Fixed solver settings for every sweep.
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_iters: 5000,
            residual_tol: 1e-5,
            scheme: Scheme::SemiImplicit,
            seed: self.seed,
            log_every: 10,
            ..Default::default()
        }
    }

    /// Length of the disclination line inside the grid (node-volume
    /// convention: `n_z h`); 1 on planar grids, where energies are per unit
    /// length.
    pub fn line_length(&self) -> f64 {
        if self.grid.len() == 3 {
            self.grid[2] as f64 * self.h
        } else {
            1.0
        }
    }

    /// Four dyadic covering radii from the smallest multiple of `h` above
    /// `ε_min^θ`.
    pub fn cover_radii(&self) -> Vec<f64> {
        let e_min = *self.eps.last().expect("nonempty eps");
        let k = (e_min.powf(self.scale.theta) / self.h * (1.0 + 1e-12)).floor() + 1.0;
        (0..4).map(|j| k * self.h * 2f64.powi(j)).collect()
    }

    fn cover_kind(&self) -> BadKind {
        match self.bc {
            BcFamily::Hedgehog => BadKind::I,
            _ => BadKind::II,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverCount {
    pub radius: f64,
    /// Radius at which the bad set was queried.
    pub bad_radius: f64,
    pub bad_nodes: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub linf: f64,
    pub energy: f64,
    pub dirichlet: f64,
    pub bulk: f64,
    pub energy_k: f64,
    pub dirichlet_k: f64,
    /// `∫_K f / ε²`, the bulk part of the energy on `K`.
    pub bulk_k: f64,
    /// `‖∇Q‖_{L^p(K)}` for [`LP_EXPONENTS`].
    pub lp: Vec<f64>,
    pub cover_kind: BadKind,
    pub cover: Vec<CoverCount>,
    pub monotonicity_checks: usize,
    pub monotonicity_violations: usize,
    pub monotonicity_worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub epsilon: f64,
    pub message: String,
}

pub struct Sweep {
    pub config: SweepConfig,
    pub records: Vec<SweepRecord>,
    pub failures: Vec<SweepFailure>,
    /// Solved fields in record order.
    pub fields: Vec<FieldQ>,
}

/// Measures a solved field for a sweep record.
pub fn measure(
    field: &FieldQ,
    cfg: &SweepConfig,
    cal: &Calibration,
    converged: bool,
    iterations: usize,
    residual: f64,
) -> Result<SweepRecord> {
    let k = cfg.k_region();
    let all = energy(field, &Region::All)?;
    let ek = energy(field, &k)?;
    let lp = LP_EXPONENTS
        .iter()
        .map(|&p| lp_gradient_norm(field, p, &k))
        .collect::<Result<Vec<_>>>()?;

    let grid = &field.grid;
    let radii = cfg.cover_radii();
    let kind = cfg.cover_kind();
    let bad_radii: Vec<f64> = match kind {
        BadKind::I => radii
            .iter()
            .map(|r| r * cal.scales.point_cover_eta)
            .collect(),
        BadKind::II => radii.clone(),
    };
    let reach = bad_radii.iter().copied().fold(0.0, f64::max);
    // Nodes of K far enough from the boundary for every queried rung.
    let nodes: Vec<usize> = k
        .nodes(grid)?
        .into_iter()
        .filter(|&i| grid.distance_to_boundary(grid.position(i)) >= reach)
        .collect();
    let ctx = ScaleContext::new(field);
    let masks = ctx.bad_sets(kind, &bad_radii, cfg.scale.lambda, &nodes)?;
    let mut cover = Vec::with_capacity(radii.len());
    for ((&r, &br), mask) in radii.iter().zip(&bad_radii).zip(masks) {
        let bad: Vec<usize> = nodes
            .iter()
            .zip(&mask)
            .filter_map(|(&i, &b)| b.then_some(i))
            .collect();
        let c = scales::greedy_cover(grid, &bad, r)?;
        cover.push(CoverCount {
            radius: r,
            bad_radius: br,
            bad_nodes: bad.len(),
            count: c.count,
        });
    }

    let (checks, violations, worst) = monotonicity(field, cfg.seed, cal.bands.monotonicity_tol)?;
    Ok(SweepRecord {
        epsilon: field.epsilon,
        converged,
        iterations,
        residual,
        linf: field.linf_norm(),
        energy: all.total,
        dirichlet: all.dirichlet,
        bulk: all.bulk,
        energy_k: ek.total,
        dirichlet_k: ek.dirichlet,
        bulk_k: ek.bulk,
        lp,
        cover_kind: kind,
        cover,
        monotonicity_checks: checks,
        monotonicity_violations: violations,
        monotonicity_worst: worst,
    })
}

/// Θ monotonicity at 20 seeded random centers and 5 dyadic radii up to
/// `12h`, with the cutoff support inside the grid. Small grids shrink the
/// top radius; radii below `h/2` resolve nothing and are dropped.
pub fn monotonicity(field: &FieldQ, seed: u64, rel_tol: f64) -> Result<(usize, usize, f64)> {
    let phi = PhiCutoff::default();
    let grid = &field.grid;
    let b = grid.bounds();
    let half = (0..grid.ndim())
        .map(|a| 0.5 * (b[a][1] - b[a][0]))
        .fold(f64::INFINITY, f64::min);
    let root_t = phi.support_end().sqrt();
    let h = grid.h();
    let r_max = (12.0 * h).min((half - 2.0 * h) / root_t);
    let centers = scales::random_centers(grid, 20, root_t * r_max + 1.01 * h, seed)?;
    let radii: Vec<f64> = (0..5)
        .map(|j| r_max / 2f64.powi(j))
        .filter(|&r| r >= 0.5 * h)
        .collect();
    let a = scales::theta_monotonicity_audit(field, &centers, &radii, &phi, rel_tol)?;
    // Zero checks leave the margin infinite, which JSON cannot carry.
    let worst = if a.checks == 0 { 0.0 } else { a.worst_margin };
    Ok((a.checks, a.violations, worst))
}

/// Solves and measures every ε, warm-starting from the previous solution.
/// Per-ε failures are recorded and the sweep continues from the last good
/// field. With `persist`, fields go to `out_dir/field_<i>.qf1`.
pub fn run_sweep(cfg: &SweepConfig, cal: &Calibration, persist: bool) -> Result<Sweep> {
    let mp = cal.material_params()?;
    let init = cfg.initial_field(&mp)?;
    let opts = cfg.solve_options();
    if persist {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    }
    let mut sweep = Sweep {
        config: cfg.clone(),
        records: Vec::new(),
        failures: Vec::new(),
        fields: Vec::new(),
    };
    let mut warm = init.clone();
    for (i, &eps) in cfg.eps.iter().enumerate() {
        let mut start = warm.clone();
        start.epsilon = eps;
        let outcome = minimize(start, &opts).and_then(|(f, rep)| {
            let rec = measure(
                &f,
                cfg,
                cal,
                rep.converged,
                rep.iterations,
                rep.final_residual,
            )?;
            Ok((f, rec))
        });
        match outcome {
            Ok((f, rec)) => {
                if persist {
                    qf1::write(cfg.out_dir.join(format!("field_{i}.qf1")), &f)?;
                }
                warm = f.clone();
                sweep.records.push(rec);
                sweep.fields.push(f);
            }
            Err(e) => sweep.failures.push(SweepFailure {
                epsilon: eps,
                message: e.to_string(),
            }),
        }
    }
    Ok(sweep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(x, y)`. `r2` is 1 for an exact fit,
/// including constant data.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientRecords {
            needed: 2,
            got: n.min(y.len()),
        });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub outcome: Outcome,
    pub metrics: BTreeMap<String, f64>,
    pub note: String,
}

impl Verdict {
    fn new(
        name: &str,
        pass: bool,
        metrics: BTreeMap<String, f64>,
        note: impl Into<String>,
    ) -> Self {
        Verdict {
            name: name.into(),
            outcome: if pass { Outcome::Pass } else { Outcome::Fail },
            metrics,
            note: note.into(),
        }
    }

    fn not_applicable(name: &str, note: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            outcome: Outcome::NotApplicable,
            metrics: BTreeMap::new(),
            note: note.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub holds: bool,
    /// Envelope constant fitted at the coarsest ε.
    pub m_energy: f64,
    pub m_linf: f64,
    pub reason: String,
}

/// Re-checks the standing hypotheses on a sweep: every solve converged,
/// `E_ε <= envelope·M_0 (log(1/ε) + 1)` with `M_0` fitted at the coarsest
/// ε, and `‖Q‖_∞ <= 2√(2/3) s_*`.
pub fn hypothesis_guard(records: &[SweepRecord], mp: &MaterialParams, envelope: f64) -> Hypothesis {
    let m_linf = mp.linf_bound();
    let Some(first) = records.first() else {
        return Hypothesis {
            holds: false,
            m_energy: 0.0,
            m_linf,
            reason: "no records".into(),
        };
    };
    let env = |e: f64| (1.0 / e).ln() + 1.0;
    let m_energy = envelope * first.energy / env(first.epsilon);
    let mut reasons = Vec::new();
    for r in records {
        if !r.converged {
            reasons.push(format!("eps {} did not converge", r.epsilon));
        }
        if r.energy > m_energy * env(r.epsilon) * (1.0 + 1e-12) {
            reasons.push(format!(
                "eps {}: energy {} above envelope",
                r.epsilon, r.energy
            ));
        }
        if r.linf > m_linf {
            reasons.push(format!("eps {}: |Q|_inf {} > {m_linf}", r.epsilon, r.linf));
        }
    }
    Hypothesis {
        holds: reasons.is_empty(),
        m_energy,
        m_linf,
        reason: reasons.join("; "),
    }
}

fn guard(
    name: &str,
    records: &[SweepRecord],
    mp: &MaterialParams,
    cal: &Calibration,
    needed: usize,
) -> Result<Option<Verdict>> {
    if records.len() < needed {
        return Err(Error::InsufficientRecords {
            needed,
            got: records.len(),
        });
    }
    let h = hypothesis_guard(records, mp, cal.bands.envelope_factor);
    Ok((!h.holds).then(|| Verdict::not_applicable(name, h.reason)))
}

/// Linear fit of `E_ε` against `log(1/ε)`, compared with `oracle_slope`.
pub fn verdict_energy_log(
    records: &[SweepRecord],
    mp: &MaterialParams,
    oracle_slope: f64,
    cal: &Calibration,
) -> Result<Verdict> {
    let name = "energy_log";
    if let Some(v) = guard(name, records, mp, cal, 4)? {
        return Ok(v);
    }
    let x: Vec<f64> = records.iter().map(|r| (1.0 / r.epsilon).ln()).collect();
    let y: Vec<f64> = records.iter().map(|r| r.energy).collect();
    let fit = linear_fit(&x, &y)?;
    let rel = fit.slope / oracle_slope - 1.0;
    let pass = fit.r2 >= cal.bands.r2_min && rel.abs() <= cal.bands.slope_tol;
    let metrics = BTreeMap::from([
        ("slope".into(), fit.slope),
        ("intercept".into(), fit.intercept),
        ("r2".into(), fit.r2),
        ("oracle_slope".into(), oracle_slope),
        ("slope_rel_err".into(), rel),
    ]);
    Ok(Verdict::new(name, pass, metrics, ""))
}

/// `∫_K f/ε²` stays in `[ref/factor, factor·ref]` with `ref` at the
/// coarsest ε; the minimum ratio is the sharpness floor.
pub fn verdict_bulk_uniformity(
    records: &[SweepRecord],
    mp: &MaterialParams,
    cal: &Calibration,
) -> Result<Verdict> {
    let name = "bulk_uniformity";
    if let Some(v) = guard(name, records, mp, cal, 4)? {
        return Ok(v);
    }
    let reference = records[0].bulk_k;
    let factor = cal.bands.bulk_factor;
    let mut metrics = BTreeMap::from([("reference".into(), reference)]);
    if reference == 0.0 {
        let pass = records.iter().all(|r| r.bulk_k == 0.0);
        return Ok(Verdict::new(name, pass, metrics, "zero reference"));
    }
    let ratios: Vec<f64> = records.iter().map(|r| r.bulk_k / reference).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    metrics.insert("min_ratio".into(), lo);
    metrics.insert("max_ratio".into(), hi);
    metrics.insert("sharpness_floor".into(), cal.bands.sharpness_floor);
    let pass = lo >= 1.0 / factor && lo >= cal.bands.sharpness_floor && hi <= factor;
    Ok(Verdict::new(name, pass, metrics, ""))
}

/// Bounded L^p norms below the critical exponent and logarithmic growth of
/// the squared L² norm, at least `½·slope·log 2` per halving of ε.
pub fn verdict_lp_compactness(
    records: &[SweepRecord],
    mp: &MaterialParams,
    slope: f64,
    cal: &Calibration,
) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    for (j, &p) in LP_EXPONENTS.iter().enumerate() {
        let name = format!("lp_{p}");
        if let Some(v) = guard(&name, records, mp, cal, 4)? {
            out.push(v);
            continue;
        }
        let vals: Vec<f64> = records.iter().map(|r| r.lp[j]).collect();
        if p < 2.0 {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(0.0, f64::max);
            let variation = if hi == 0.0 { 0.0 } else { hi / lo - 1.0 };
            let metrics = BTreeMap::from([
                ("min".into(), lo),
                ("max".into(), hi),
                ("variation".into(), variation),
            ]);
            out.push(Verdict::new(
                &name,
                variation <= cal.bands.lp_variation,
                metrics,
                "",
            ));
        } else {
            if vals.iter().all(|&v| v == 0.0) {
                out.push(Verdict::not_applicable(
                    &name,
                    "all norms vanish; no growth to test",
                ));
                continue;
            }
            let need = 0.5 * slope * 2f64.ln();
            let mut worst = f64::INFINITY;
            for w in records.windows(2) {
                let steps = (w[0].epsilon / w[1].epsilon).log2();
                let j2 = LP_EXPONENTS.len() - 1;
                let gain = (w[1].lp[j2].powi(2) - w[0].lp[j2].powi(2)) / steps;
                worst = worst.min(gain);
            }
            let metrics = BTreeMap::from([
                ("min_gain_per_halving".into(), worst),
                ("required".into(), need),
            ]);
            out.push(Verdict::new(&name, worst >= need, metrics, ""));
        }
    }
    Ok(out)
}

/// `max_r N(r) r^{1+σ} <= factor · min_r N(r) r^{1+σ}` on the finest-ε
/// record. An empty bad set passes.
pub fn verdict_covering(records: &[SweepRecord], sigma: f64, cal: &Calibration) -> Result<Verdict> {
    let name = "covering";
    let last = records
        .last()
        .ok_or(Error::InsufficientRecords { needed: 1, got: 0 })?;
    if last.cover.len() < 4 {
        return Err(Error::InsufficientRecords {
            needed: 4,
            got: last.cover.len(),
        });
    }
    let prods: Vec<f64> = last
        .cover
        .iter()
        .map(|c| c.count as f64 * c.radius.powf(1.0 + sigma))
        .collect();
    let lo = prods.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = prods.iter().copied().fold(0.0, f64::max);
    let mut metrics = BTreeMap::from([
        ("min_product".into(), lo),
        ("max_product".into(), hi),
        ("sigma".into(), sigma),
    ]);
    for c in &last.cover {
        metrics.insert(format!("N_{:.6}", c.radius), c.count as f64);
    }
    let pass = hi <= cal.bands.cover_factor * lo;
    Ok(Verdict::new(
        name,
        pass,
        metrics,
        format!("finest eps = {}", last.epsilon),
    ))
}

/// Point-defect covering: counts over every record and radius stay within
/// `factor` of the smallest nonzero count.
pub fn verdict_point_cover(records: &[SweepRecord], cal: &Calibration) -> Result<Verdict> {
    let name = "point_cover";
    if records.is_empty() {
        return Err(Error::InsufficientRecords { needed: 1, got: 0 });
    }
    let counts: Vec<usize> = records
        .iter()
        .flat_map(|r| r.cover.iter().map(|c| c.count))
        .collect();
    let hi = counts.iter().copied().max().unwrap_or(0);
    let lo = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    let metrics = BTreeMap::from([
        ("max_count".into(), hi as f64),
        ("min_nonzero_count".into(), lo as f64),
    ]);
    let pass = hi == 0 || hi as f64 <= cal.bands.cover_factor * lo as f64;
    Ok(Verdict::new(name, pass, metrics, ""))
}

/// Every value within `factor` of every other (max/min <= factor).
pub fn verdict_band(name: &str, values: &[f64], factor: f64) -> Verdict {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
    let metrics = BTreeMap::from([
        ("min".into(), lo),
        ("max".into(), hi),
        ("ratio".into(), ratio),
    ]);
    Verdict::new(name, ratio <= factor, metrics, "")
}

/// Verdicts appropriate to the sweep's family.
pub fn standard_verdicts(sweep: &Sweep, cal: &Calibration) -> Result<Vec<Verdict>> {
    let mp = cal.material_params()?;
    let recs = &sweep.records;
    let mut out = Vec::new();
    match sweep.config.bc {
        BcFamily::Disclination if sweep.config.winding.fract() != 0.0 => {
            let oracle = 0.5 * PI * mp.s_star * mp.s_star * sweep.config.line_length();
            let e = verdict_energy_log(recs, &mp, oracle, cal)?;
            let slope = e.metrics.get("slope").copied().unwrap_or(oracle);
            out.push(e);
            out.push(verdict_bulk_uniformity(recs, &mp, cal)?);
            out.extend(verdict_lp_compactness(recs, &mp, slope, cal)?);
            out.push(verdict_covering(recs, 0.5, cal)?);
        }
        BcFamily::Hedgehog => {
            out.push(verdict_point_cover(recs, cal)?);
            let energies: Vec<f64> = recs.iter().map(|r| r.energy).collect();
            out.push(verdict_band(
                "energy_bounded",
                &energies,
                1.0 + cal.bands.hedgehog_energy_spread,
            ));
        }
        _ => {
            out.push(verdict_bulk_uniformity(recs, &mp, cal)?);
            out.push(verdict_covering(recs, 0.5, cal)?);
        }
    }
    out.push(verdict_monotonicity(recs));
    Ok(out)
}

/// No Θ decrease beyond the calibrated tolerance on any record.
pub fn verdict_monotonicity(records: &[SweepRecord]) -> Verdict {
    let name = "monotonicity";
    let checks: usize = records.iter().map(|r| r.monotonicity_checks).sum();
    if checks == 0 {
        return Verdict::not_applicable(name, "grid too coarse for two resolved radii");
    }
    let violations: usize = records.iter().map(|r| r.monotonicity_violations).sum();
    let worst = records
        .iter()
        .filter(|r| r.monotonicity_checks > 0)
        .map(|r| r.monotonicity_worst)
        .fold(f64::INFINITY, f64::min);
    let metrics = BTreeMap::from([
        ("checks".into(), checks as f64),
        ("violations".into(), violations as f64),
        ("worst_margin".into(), worst),
    ]);
    Verdict::new(name, violations == 0, metrics, "")
}

const CSV_HEADER: &str =
    "# columns: eps, log(1/eps), converged, iterations, residual, linf, E, E_dirichlet, E_bulk, \
E_K, E_K_dirichlet, int_K f/eps^2, Lp(K) for p = 1.2 1.5 1.8 2.0, monotonicity violations, \
monotonicity worst margin, then per covering radius r: r, N(r)\n";

/// One row per record; a header comment documents the columns.
pub fn records_csv(records: &[SweepRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push_str("eps,log_inv_eps,converged,iterations,residual,linf,E,E_dir,E_bulk,E_K,E_K_dir,bulk_K,L1.2,L1.5,L1.8,L2.0,mono_viol,mono_worst,cover\n");
    for r in records {
        let cover: Vec<String> = r
            .cover
            .iter()
            .map(|c| format!("{:.10e}:{}", c.radius, c.count))
            .collect();
        s.push_str(&format!(
            "{:.10e},{:.10e},{},{},{:.6e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{:.10e},{}\n",
            r.epsilon,
            (1.0 / r.epsilon).ln(),
            r.converged,
            r.iterations,
            r.residual,
            r.linf,
            r.energy,
            r.dirichlet,
            r.bulk,
            r.energy_k,
            r.dirichlet_k,
            r.bulk_k,
            r.lp[0],
            r.lp[1],
            r.lp[2],
            r.lp[3],
            r.monotonicity_violations,
            r.monotonicity_worst,
            cover.join(";"),
        ));
    }
    s
}

pub fn verdicts_json(verdicts: &[Verdict]) -> Result<String> {
    Ok(serde_json::to_string_pretty(verdicts)? + "\n")
}

pub fn read_verdicts(path: impl AsRef<Path>) -> Result<Vec<Verdict>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `records.csv`, `records.json` and `verdicts.json` into `dir`.
pub fn emit_report(
    dir: impl AsRef<Path>,
    records: &[SweepRecord],
    verdicts: &[Verdict],
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("records.csv", records_csv(records))?;
    write(
        "records.json",
        serde_json::to_string_pretty(records)? + "\n",
    )?;
    write("verdicts.json", verdicts_json(verdicts)?)?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<SweepRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
# small disclination sweep
bc = disclination
winding = 1/2
grid = 16,16,8
h = 0.125
eps = 0.5, 0.375
K = -0.5,0.5,-0.5,0.5,-0.3,0.3
lambda = 1.5
eta_clear = 0.25
sigma = 0.25
theta = 0.9
out_dir = out
";

    #[test]
    fn config_round_trips_all_keys() {
        let cal = Calibration::default();
        let c = parse_config(BASE, &cal).unwrap();
        assert_eq!(c.bc, BcFamily::Disclination);
        assert_eq!(c.winding, 0.5);
        assert_eq!(c.grid, vec![16, 16, 8]);
        assert_eq!(c.eps, vec![0.5, 0.375]);
        assert_eq!(c.k_box[2], [-0.3, 0.3]);
        assert_eq!(c.seed, 0);
        assert_eq!(c.scale.beta, cal.scales.beta);
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let cal = Calibration::default();
        let unknown = BASE.replace("theta = 0.9", "theta = 0.9\nfoo = 1");
        assert!(matches!(
            parse_config(&unknown, &cal),
            Err(Error::Config { line: 12, .. })
        ));
        let missing = BASE.replace("lambda = 1.5\n", "");
        assert!(matches!(parse_config(&missing, &cal), Err(Error::MissingKey(k)) if k == "lambda"));
        let small_eps = BASE.replace("0.5, 0.375", "0.5, 0.25");
        assert!(matches!(
            parse_config(&small_eps, &cal),
            Err(Error::Config { line: 6, .. })
        ));
        let wide_k = BASE.replace("-0.5,0.5,-0.5", "-0.9,0.5,-0.5");
        assert!(matches!(
            parse_config(&wide_k, &cal),
            Err(Error::Config { line: 7, .. })
        ));
        let bad_w = BASE.replace("1/2", "1/3");
        assert!(matches!(
            parse_config(&bad_w, &cal),
            Err(Error::Config { line: 3, .. })
        ));
        let dup = BASE.replace("h = 0.125", "h = 0.125\nh = 0.1");
        assert!(matches!(
            parse_config(&dup, &cal),
            Err(Error::Config { line: 6, .. })
        ));
    }

    #[test]
    fn fit_recovers_exact_lines() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
        assert_eq!(linear_fit(&x, &[2.0; 4]).unwrap().r2, 1.0);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn cover_radii_start_above_eps_theta() {
        let cal = Calibration::default();
        let text = BASE
            .replace("16,16,8", "96,96,96")
            .replace("h = 0.125", "h = 0.0208333333333333333")
            .replace("0.5, 0.375", "0.5, 0.25, 0.125, 0.0625")
            .replace(
                "-0.5,0.5,-0.5,0.5,-0.3,0.3",
                "-0.75,0.75,-0.75,0.75,-0.75,0.75",
            );
        let c = parse_config(&text, &cal).unwrap();
        let r = c.cover_radii();
        assert!((r[0] / c.h - 4.0).abs() < 1e-9 && (r[3] / r[0] - 8.0).abs() < 1e-12);
        assert!(r[0] > 0.0625f64.powf(0.9));
    }

    fn record(eps: f64, energy: f64) -> SweepRecord {
        SweepRecord {
            epsilon: eps,
            converged: true,
            iterations: 1,
            residual: 0.0,
            linf: 1.0,
            energy,
            dirichlet: energy,
            bulk: 0.0,
            energy_k: energy,
            dirichlet_k: energy,
            bulk_k: 1.0,
            lp: vec![1.0, 1.0, 1.0, 1.0],
            cover_kind: BadKind::II,
            cover: vec![],
            monotonicity_checks: 0,
            monotonicity_violations: 0,
            monotonicity_worst: 1.0,
        }
    }

    #[test]
    fn guard_flags_blow_up_and_unconverged_runs() {
        let mp = MaterialParams::new(1.0, 1.0, 1.0).unwrap();
        let good: Vec<SweepRecord> = [0.5, 0.25, 0.125, 0.0625]
            .iter()
            .map(|&e: &f64| record(e, 5.0 * ((1.0 / e).ln() + 1.0)))
            .collect();
        assert!(hypothesis_guard(&good, &mp, 2.0).holds);
        let mut blow = good.clone();
        blow[3].energy = 1e3;
        assert!(!hypothesis_guard(&blow, &mp, 2.0).holds);
        let mut stuck = good.clone();
        stuck[1].converged = false;
        let cal = Calibration::default();
        let v = verdict_bulk_uniformity(&stuck, &mp, &cal).unwrap();
        assert_eq!(v.outcome, Outcome::NotApplicable);
        assert!(matches!(
            verdict_bulk_uniformity(&good[..2], &mp, &cal),
            Err(Error::InsufficientRecords { needed: 4, got: 2 })
        ));
    }

    #[test]
    fn empty_bad_sets_pass_the_covering_verdict() {
        let cal = Calibration::default();
        let mut r = record(0.1, 1.0);
        r.cover = (0..4)
            .map(|j| CoverCount {
                radius: 0.1 * 2f64.powi(j),
                bad_radius: 0.1,
                bad_nodes: 0,
                count: 0,
            })
            .collect();
        assert!(verdict_covering(&[r.clone()], 0.5, &cal).unwrap().passed());
        // A line: N ∝ 1/r keeps N r^{3/2} within a factor 2^{3/2}.
        for (j, c) in r.cover.iter_mut().enumerate() {
            c.count = 64 >> j;
        }
        assert!(verdict_covering(&[r.clone()], 0.5, &cal).unwrap().passed());
        // Volume-filling growth N ∝ r^{-3} fails.
        for (j, c) in r.cover.iter_mut().enumerate() {
            c.count = 512 >> (3 * j);
        }
        assert!(!verdict_covering(&[r], 0.5, &cal).unwrap().passed());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![record(0.5, 1.0), record(0.25, 2.0)];
        let v = vec![verdict_band("x", &[1.0, 2.0], 4.0)];
        emit_report(dir.path(), &recs, &v).unwrap();
        assert_eq!(read_verdicts(dir.path().join("verdicts.json")).unwrap(), v);
        assert_eq!(read_records(dir.path().join("records.json")).unwrap(), recs);
        let csv = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
        assert!(csv.starts_with("# columns"));
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(records_csv(&[]).lines().count(), 2);
    }
}
