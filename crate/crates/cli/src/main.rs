//! `ldg`: solve, sweep and analyze Q-tensor fields.
//!
//! Exit codes: 0 on success, 2 when a solve did not converge, 1 on error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ldg::calibration::{sha256_hex, Calibration};
use ldg::defects::{self, Cylinder, LoopSpec};
use ldg::experiments::{self, SweepConfig};
use ldg::field::{qf1, FieldQ, Region};
use ldg::scales;
use ldg::solver::minimize;
use ldg::{vtk, Error, Result};

#[derive(Parser)]
#[command(name = "ldg", version, about = "Landau-de Gennes Q-tensor lab")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Calibration TOML (defaults to the built-in file).
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the config's ε list with warm starts and keep the last field.
    Minimize {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ε-sweep and write records, verdicts and fields.
    Sweep {
        config: PathBuf,
        /// Overrides the config's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regular scales and bad-set coverings of a stored field.
    Scales(ScalesArgs),
    /// Loop classification and cylinder scans of a stored field.
    Defects(DefectsArgs),
    /// Plot-ready CSV from a `records.json`.
    Report {
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Legacy VTK export of f(Q) and |∇Q|.
    Vtk {
        field: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ScalesArgs {
    field: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta_clear: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Comma-separated covering radii (default: dyadic from 4h, sized to the grid).
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// Box `lo,hi` per axis (default: every node).
    #[arg(long, value_delimiter = ',')]
    region: Option<Vec<f64>>,
    /// Record per-node scales at every `stride`-th node.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Args)]
struct DefectsArgs {
    field: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines loop file.
    #[arg(long)]
    loops: Option<PathBuf>,
    /// `axis,x,y,z,radius,t_lo,t_hi`.
    #[arg(long, value_delimiter = ',')]
    cylinder: Option<Vec<f64>>,
}

/// One line of a loop file: explicit vertices or a circle.
#[derive(Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum LoopLine {
    Points {
        id: String,
        points: Vec<[f64; 3]>,
        #[serde(default = "default_density")]
        density: usize,
    },
    Circle {
        id: String,
        center: [f64; 3],
        axis: usize,
        radius: f64,
    },
}

fn default_density() -> usize {
    4
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    input_hash: String,
    calibration_hash: String,
    version: &'static str,
    threads: Option<usize>,
    outputs: Vec<String>,
    created_unix: u64,
}

struct Ctx {
    cal: Calibration,
    threads: Option<usize>,
}

impl Ctx {
    fn manifest(
        &self,
        dir: &Path,
        name: &str,
        command: &str,
        input: &[u8],
        outputs: Vec<String>,
    ) -> Result<()> {
        let m = Manifest {
            command: command.into(),
            input_hash: sha256_hex(input),
            calibration_hash: self.cal.hash.clone(),
            version: env!("CARGO_PKG_VERSION"),
            threads: self.threads,
            outputs,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        write(&dir.join(name), serde_json::to_string_pretty(&m)? + "\n")
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parent(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_config(ctx: &Ctx, path: &Path) -> Result<(SweepConfig, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8_lossy(&bytes);
    Ok((experiments::parse_config(&text, &ctx.cal)?, bytes))
}

fn cmd_minimize(ctx: &Ctx, config: &Path, out: &Path) -> Result<ExitCode> {
    let (cfg, bytes) = load_config(ctx, config)?;
    let mp = ctx.cal.material_params()?;
    let opts = cfg.solve_options();
    let mut field = cfg.initial_field(&mp)?;
    let mut converged = true;
    let mut last = None;
    for &eps in &cfg.eps {
        field.epsilon = eps;
        let (f, rep) = minimize(field, &opts)?;
        converged &= rep.converged;
        field = f;
        last = Some(rep);
    }
    let dir = parent(out);
    mkdir(&dir)?;
    qf1::write(out, &field)?;
    let csv = out.with_extension("convergence.csv");
    if let Some(rep) = &last {
        rep.write_csv(&csv)?;
    }
    let manifest = format!("{}.manifest.json", file_name(out));
    ctx.manifest(
        &dir,
        &manifest,
        "minimize",
        &bytes,
        vec![file_name(out), file_name(&csv)],
    )?;
    Ok(if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_sweep(ctx: &Ctx, config: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let (mut cfg, bytes) = load_config(ctx, config)?;
    if let Some(o) = out {
        cfg.out_dir = o.to_path_buf();
    }
    let sweep = experiments::run_sweep(&cfg, &ctx.cal, true)?;
    let verdicts = experiments::standard_verdicts(&sweep, &ctx.cal)?;
    experiments::emit_report(&cfg.out_dir, &sweep.records, &verdicts)?;
    if !sweep.failures.is_empty() {
        write(
            &cfg.out_dir.join("failures.json"),
            serde_json::to_string_pretty(&sweep.failures)? + "\n",
        )?;
    }
    for v in &verdicts {
        println!("{:<18} {:?}", v.name, v.outcome);
    }
    let mut outputs = vec![
        "records.csv".into(),
        "records.json".into(),
        "verdicts.json".into(),
    ];
    outputs.extend((0..sweep.records.len()).map(|i| format!("field_{i}.qf1")));
    ctx.manifest(&cfg.out_dir, "manifest.json", "sweep", &bytes, outputs)?;
    let ok = sweep.failures.is_empty() && sweep.records.iter().all(|r| r.converged);
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn box_region(v: &[f64], field: &FieldQ) -> Result<Region> {
    let nd = field.grid.ndim();
    if v.len() != 2 * nd {
        return Err(Error::InvalidParams(format!(
            "--region needs {} numbers",
            2 * nd
        )));
    }
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..nd {
        lo[a] = v[2 * a];
        hi[a] = v[2 * a + 1];
    }
    Ok(Region::Box { lo, hi })
}

/// Dyadic radii from 4h that leave a covering region of at least half the
/// grid's half-width; never fewer than one radius.
fn default_radii(field: &FieldQ) -> Vec<f64> {
    let g = &field.grid;
    let b = g.bounds();
    let half = (0..g.ndim())
        .map(|a| 0.5 * (b[a][1] - b[a][0]))
        .fold(f64::INFINITY, f64::min);
    let h = g.h();
    let mut r: Vec<f64> = (0..4)
        .map(|j| 4.0 * h * 2f64.powi(j))
        .take_while(|&r| r <= 0.5 * half)
        .collect();
    if r.is_empty() {
        r.push(h);
    }
    r
}

fn cmd_scales(ctx: &Ctx, a: &ScalesArgs) -> Result<ExitCode> {
    let bytes = read_bytes(&a.field)?;
    let field = qf1::decode(&bytes)?;
    let s = &ctx.cal.scales;
    let params = scales::ScaleParams::new(
        a.lambda.unwrap_or(s.lambda),
        a.eta_clear.unwrap_or(s.eta_clear),
        a.sigma.unwrap_or(s.sigma),
        a.theta.unwrap_or(s.theta),
        s.beta,
    )?;
    let radii = match &a.radii {
        Some(r) => r.clone(),
        None => default_radii(&field),
    };
    let region = match &a.region {
        Some(v) => box_region(v, &field)?,
        None => Region::All,
    };
    let report = scales::scale_report(&field, &params, &region, &radii, a.stride.max(1))?;
    mkdir(&a.out)?;
    write(&a.out.join("scales.csv"), report.scales_csv())?;
    write(&a.out.join("covering.csv"), report.covering_csv())?;
    ctx.manifest(
        &a.out,
        "manifest.json",
        "scales",
        &bytes,
        vec!["scales.csv".into(), "covering.csv".into()],
    )?;
    Ok(ExitCode::SUCCESS)
}

fn parse_loops(path: &Path, field: &FieldQ) -> Result<Vec<(String, LoopSpec)>> {
    let text = String::from_utf8_lossy(&read_bytes(path)?).into_owned();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: LoopLine = serde_json::from_str(line).map_err(|e| Error::Config {
            line: n + 1,
            message: e.to_string(),
        })?;
        let entry = match parsed {
            LoopLine::Points {
                id,
                points,
                density,
            } => (id, LoopSpec::new(points, density)),
            LoopLine::Circle {
                id,
                center,
                axis,
                radius,
            } => (id, LoopSpec::circle(&field.grid, center, axis, radius)),
        };
        let spec = entry.1.map_err(|e| Error::Config {
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push((entry.0, spec));
    }
    Ok(out)
}

fn cmd_defects(ctx: &Ctx, a: &DefectsArgs) -> Result<ExitCode> {
    let bytes = read_bytes(&a.field)?;
    let field = qf1::decode(&bytes)?;
    if a.loops.is_none() && a.cylinder.is_none() {
        return Err(Error::InvalidParams(
            "give --loops and/or --cylinder".into(),
        ));
    }
    mkdir(&a.out)?;
    let mut outputs = Vec::new();
    if let Some(path) = &a.loops {
        let loops = parse_loops(path, &field)?;
        let verdicts = defects::classify_loops(&field, &loops);
        let text = defects::loop_verdicts_jsonl(&verdicts)?;
        print!("{text}");
        write(&a.out.join("loops.jsonl"), text)?;
        outputs.push("loops.jsonl".to_string());
    }
    if let Some(c) = &a.cylinder {
        if c.len() != 7 || c[0].fract() != 0.0 || !(0.0..3.0).contains(&c[0]) {
            return Err(Error::InvalidParams(
                "--cylinder needs axis,x,y,z,radius,t_lo,t_hi".into(),
            ));
        }
        let cyl = Cylinder {
            axis: c[0] as usize,
            through: [c[1], c[2], c[3]],
            radius: c[4],
            t_lo: c[5],
            t_hi: c[6],
        };
        let eta = ctx.cal.material.eta_core;
        let rows = defects::cross_section_scan(&field, &cyl, eta)?;
        let found = rows.iter().filter(|r| r.found).count();
        println!("cylinder: {found}/{} slabs above eta = {eta}", rows.len());
        write(&a.out.join("scan.csv"), defects::scan_csv(&rows))?;
        outputs.push("scan.csv".to_string());
    }
    ctx.manifest(&a.out, "manifest.json", "defects", &bytes, outputs)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(ctx: &Ctx, records: &Path, out: &Path) -> Result<ExitCode> {
    let bytes = read_bytes(records)?;
    let recs: Vec<experiments::SweepRecord> = serde_json::from_slice(&bytes)?;
    mkdir(out)?;
    write(&out.join("records.csv"), experiments::records_csv(&recs))?;
    ctx.manifest(
        out,
        "manifest.json",
        "report",
        &bytes,
        vec!["records.csv".into()],
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_vtk(ctx: &Ctx, field: &Path, out: &Path) -> Result<ExitCode> {
    let bytes = read_bytes(field)?;
    let f = qf1::decode(&bytes)?;
    let dir = parent(out);
    mkdir(&dir)?;
    vtk::write(out, &f)?;
    let manifest = format!("{}.manifest.json", file_name(out));
    ctx.manifest(&dir, &manifest, "vtk", &bytes, vec![file_name(out)])?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    ldg::par::init_threads(cli.threads);
    let cal = match &cli.calibration {
        Some(p) => Calibration::load(p)?,
        None => Calibration::default(),
    };
    let ctx = Ctx {
        cal,
        threads: cli.threads,
    };
    match &cli.command {
        Command::Minimize { config, out } => cmd_minimize(&ctx, config, out),
        Command::Sweep { config, out } => cmd_sweep(&ctx, config, out.as_deref()),
        Command::Scales(a) => cmd_scales(&ctx, a),
        Command::Defects(a) => cmd_defects(&ctx, a),
        Command::Report { records, out } => cmd_report(&ctx, records, out),
        Command::Vtk { field, out } => cmd_vtk(&ctx, field, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
