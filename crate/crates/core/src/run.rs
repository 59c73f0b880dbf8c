//! Experiment runners behind the `tmx` subcommands. Each writes its CSV/JSON
//! artifacts plus `manifest.toml` into the configured output directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::blowup::{self, Annulus, DiagnoseOptions};
use crate::bounds::{upper_bound, verify_exceeds, BoundOptions};
use crate::bubble::{liouville_mass, BubbleProfile};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::functional::{Functional, TmParams};
use crate::green::{solve_green, weighted_g_squared};
use crate::maximizer::{continuation_sweep, maximize_subcritical, Init, MaximizeOptions, MaximizerResult};
use crate::mesh::{build_mesh_with, Mesh};
use crate::spectral::{EigenOptions, FeSpace, SpectralData, Subspace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Mesh,
    Eigs,
    Maximize,
    Sweep,
    Green,
    Bubble,
    Bound,
    Verify,
    Diagnose,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Mesh,
        Command::Eigs,
        Command::Maximize,
        Command::Sweep,
        Command::Green,
        Command::Bubble,
        Command::Bound,
        Command::Verify,
        Command::Diagnose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Mesh => "mesh",
            Command::Eigs => "eigs",
            Command::Maximize => "maximize",
            Command::Sweep => "sweep",
            Command::Green => "green",
            Command::Bubble => "bubble",
            Command::Bound => "bound",
            Command::Verify => "verify",
            Command::Diagnose => "diagnose",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown command `{s}`")))
    }
}

/// How a completed run ended; failures before any artifact are errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    NonConvergence,
    Overflow,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub command: Command,
    pub outcome: Outcome,
    pub config_sha256: String,
    pub artifacts: Vec<PathBuf>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_OVERFLOW: i32 = 4;

pub fn exit_code(result: &Result<RunSummary>) -> i32 {
    match result {
        Ok(s) => match s.outcome {
            Outcome::Ok => EXIT_OK,
            Outcome::NonConvergence => EXIT_NONCONVERGENCE,
            Outcome::Overflow => EXIT_OVERFLOW,
        },
        Err(e) => error_exit_code(e),
    }
}

pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidDomain(_)
        | Error::OriginOutside
        | Error::InvalidParameter(_)
        | Error::Parse(_)
        | Error::Resonance { .. }
        | Error::NotANorm(_) => EXIT_CONFIG,
        Error::EigenNonConvergence { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_OTHER,
    }
}

struct Artifacts {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path, hash: String) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), hash, written: Vec::new() })
    }

    fn raw(&mut self, name: &str, body: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.written.push(path);
        Ok(())
    }

    /// CSV or text body behind a `# config_sha256` comment line.
    fn text(&mut self, name: &str, body: Vec<u8>) -> Result<()> {
        let mut out = format!("# config_sha256 {}\n", self.hash).into_bytes();
        out.extend(body);
        self.raw(name, &out)
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut body = Vec::new();
        write(&mut body)?;
        self.text(name, body)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            config_sha256: &'a str,
            #[serde(flatten)]
            value: &'a T,
        }
        let body = serde_json::to_vec_pretty(&Wrapped { config_sha256: &self.hash, value })?;
        self.raw(name, &body)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: &'a str,
    config: &'a RunConfig,
}

fn build_space(cfg: &RunConfig) -> Result<FeSpace> {
    Ok(FeSpace::new(build_mesh_with(&cfg.domain_spec()?, &cfg.mesh_options())?))
}

fn eigen_options(cfg: &RunConfig) -> EigenOptions {
    EigenOptions { tol: cfg.eig_tol, ..EigenOptions::default() }
}

/// Eigenpairs covering at least `level + 1` distinct eigenvalues.
fn spectral_data(space: &FeSpace, cfg: &RunConfig) -> Result<SpectralData> {
    let mut count = cfg.eig_count;
    loop {
        let data = space.eigenpairs(count, &eigen_options(cfg))?;
        if data.n_groups() > cfg.level {
            return Ok(data);
        }
        count *= 2;
    }
}

fn subspace(space: &FeSpace, cfg: &RunConfig) -> Result<Option<Subspace>> {
    if cfg.level == 0 {
        return Ok(None);
    }
    spectral_data(space, cfg)?.subspace(cfg.level).map(Some)
}

fn maximize_options(cfg: &RunConfig) -> MaximizeOptions {
    MaximizeOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        restarts: cfg.restarts,
        seed: cfg.seed,
        init: Init::Eigenfunction,
        ..MaximizeOptions::default()
    }
}

fn outcome_of(results: &[MaximizerResult], overflow: bool) -> Outcome {
    if overflow || results.iter().any(|r| r.flags.overflow) {
        Outcome::Overflow
    } else if results.iter().any(|r| !r.flags.converged) {
        Outcome::NonConvergence
    } else {
        Outcome::Ok
    }
}

fn write_sweep_csv(results: &[MaximizerResult], w: &mut Vec<u8>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["eps", "value", "c", "x", "y", "lambda", "norm", "iterations", "residual", "converged", "overflow"])?;
    for r in results {
        wr.write_record([
            format!("{:.6e}", r.params.eps),
            format!("{:.12e}", r.value),
            format!("{:.12e}", r.c),
            format!("{:.6e}", r.x[0]),
            format!("{:.6e}", r.x[1]),
            format!("{:.12e}", r.lambda),
            format!("{:.12e}", r.norm),
            r.iterations.to_string(),
            format!("{:.3e}", r.residual),
            r.flags.converged.to_string(),
            r.flags.overflow.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

fn field_dump(mesh: &Mesh, nodal: &[f64]) -> Result<Vec<u8>> {
    let mut body = Vec::new();
    mesh.write_text(&mut body, Some(nodal))?;
    Ok(body)
}

/// Run `command` under `cfg` (already validated) inside a pool of
/// `cfg.jobs` threads.
pub fn run(command: Command, cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(command, cfg))
}

fn run_inner(command: Command, cfg: &RunConfig) -> Result<RunSummary> {
    let hash = cfg.hash();
    let mut out = Artifacts::new(&cfg.output, hash.clone())?;
    let manifest = toml::to_string(&Manifest { command: command.name(), config_sha256: &hash, config: cfg })
        .map_err(|e| Error::Parse(e.to_string()))?;
    out.raw("manifest.toml", manifest.as_bytes())?;

    let outcome = match command {
        Command::Mesh => {
            let space = build_space(cfg)?;
            let mesh = &space.mesh;
            #[derive(Serialize)]
            struct MeshInfo {
                nodes: usize,
                triangles: usize,
                dofs: usize,
                rings: usize,
                area: f64,
                h: f64,
                weighted_volume: f64,
            }
            out.json(
                "mesh.json",
                &MeshInfo {
                    nodes: mesh.n_nodes(),
                    triangles: mesh.triangles.len(),
                    dofs: mesh.n_dofs(),
                    rings: mesh.rings.len(),
                    area: mesh.area(),
                    h: mesh.h,
                    weighted_volume: space.node_weights(cfg.beta)?.volume(),
                },
            )?;
            let mut body = Vec::new();
            mesh.write_text(&mut body, None)?;
            out.text("mesh.txt", body)?;
            Outcome::Ok
        }
        Command::Eigs => {
            let space = build_space(cfg)?;
            let data = spectral_data(&space, cfg)?;
            out.csv("eigs.csv", |w| data.write_csv(w))?;
            out.json("eigs.json", &data)?;
            Outcome::Ok
        }
        Command::Maximize => {
            let space = build_space(cfg)?;
            let sub = subspace(&space, cfg)?;
            let params = TmParams::new(cfg.beta, cfg.alpha, cfg.eps)?;
            let r = maximize_subcritical(&space, params, sub.as_ref(), &maximize_options(cfg))?;
            out.json("maximize.json", &r)?;
            out.csv("maximize_log.csv", |w| {
                let mut wr = csv::Writer::from_writer(w);
                wr.write_record(["iteration", "value", "residual", "tau"])?;
                for rec in &r.log {
                    wr.write_record([
                        rec.iteration.to_string(),
                        format!("{:.12e}", rec.value),
                        format!("{:.3e}", rec.residual),
                        format!("{:.3e}", rec.tau),
                    ])?;
                }
                wr.flush()?;
                Ok(())
            })?;
            out.text("maximize_field.txt", field_dump(&space.mesh, &r.nodal(&space))?)?;
            outcome_of(std::slice::from_ref(&r), false)
        }
        Command::Sweep => {
            let space = build_space(cfg)?;
            let sub = subspace(&space, cfg)?;
            let template = TmParams::new(cfg.beta, cfg.alpha, cfg.eps_schedule[0])?;
            let sweep = continuation_sweep(&space, template, &cfg.eps_schedule, sub.as_ref(), &maximize_options(cfg))?;
            out.csv("sweep.csv", |w| write_sweep_csv(&sweep.results, w))?;
            out.json("sweep.json", &sweep)?;
            if let Some(last) = sweep.results.last() {
                out.text("sweep_last_field.txt", field_dump(&space.mesh, &last.nodal(&space))?)?;
            }
            outcome_of(&sweep.results, sweep.stopped_at.is_some())
        }
        Command::Green => {
            let space = build_space(cfg)?;
            let sub = subspace(&space, cfg)?;
            let g = solve_green(&space, cfg.alpha, sub.as_ref())?;
            #[derive(Serialize)]
            struct GreenInfo<'a> {
                #[serde(flatten)]
                green: &'a crate::green::GreenFunction,
                beta: f64,
                weighted_g_squared: f64,
            }
            let wg2 = weighted_g_squared(&space, &g, cfg.beta)?;
            out.json("green.json", &GreenInfo { green: &g, beta: cfg.beta, weighted_g_squared: wg2 })?;
            let mut body = Vec::new();
            g.write_dump(&space, &mut body)?;
            out.text("green_field.txt", body)?;
            Outcome::Ok
        }
        Command::Bubble => {
            let b = BubbleProfile::new(cfg.beta)?;
            let r = cfg.bubble_radius;
            #[derive(Serialize)]
            struct BubbleInfo {
                beta: f64,
                a: f64,
                radius: Option<f64>,
                mass: f64,
                energy: Option<f64>,
                energy_asymptotic: Option<f64>,
                liouville_mass: f64,
            }
            let finite = |v: f64| v.is_finite().then_some(v);
            out.json(
                "bubble.json",
                &BubbleInfo {
                    beta: cfg.beta,
                    a: b.a,
                    radius: finite(r),
                    mass: b.mass(r),
                    energy: finite(b.energy(r)),
                    energy_asymptotic: finite(b.energy_asymptotic(r)),
                    liouville_mass: liouville_mass(cfg.beta)?,
                },
            )?;
            let top = if r.is_finite() { r } else { 1e3 };
            out.csv("bubble.csv", |w| {
                let mut wr = csv::Writer::from_writer(w);
                wr.write_record(["r", "phi0", "mass", "energy"])?;
                let n = 200;
                let lo = (top * 1e-6).ln();
                for k in 0..=n {
                    let rr = (lo + (top.ln() - lo) * k as f64 / n as f64).exp();
                    wr.write_record([
                        format!("{rr:.9e}"),
                        format!("{:.12e}", b.phi0(rr)),
                        format!("{:.12e}", b.mass(rr)),
                        format!("{:.12e}", b.energy(rr)),
                    ])?;
                }
                wr.flush()?;
                Ok(())
            })?;
            Outcome::Ok
        }
        Command::Bound => {
            let space = build_space(cfg)?;
            let sub = subspace(&space, cfg)?;
            let g = solve_green(&space, cfg.alpha, sub.as_ref())?;
            let volume = space.node_weights(cfg.beta)?.volume();
            #[derive(Serialize)]
            struct BoundInfo {
                beta: f64,
                alpha: f64,
                level: usize,
                a0: f64,
                weighted_volume: f64,
                bound: f64,
            }
            out.json(
                "bound.json",
                &BoundInfo {
                    beta: cfg.beta,
                    alpha: cfg.alpha,
                    level: cfg.level,
                    a0: g.a0,
                    weighted_volume: volume,
                    bound: upper_bound(cfg.beta, g.a0, volume),
                },
            )?;
            Outcome::Ok
        }
        Command::Verify => {
            let opts = BoundOptions { h: cfg.h, r_min_factor: cfg.bound_r_min_factor, ratio: cfg.bound_ratio };
            let level = (cfg.level > 0).then_some(cfg.level);
            let report = verify_exceeds(&cfg.domain_spec()?, &opts, cfg.beta, cfg.alpha, level, &cfg.bound_eps)?;
            out.csv("verify.csv", |w| report.write_csv(w))?;
            out.json("verify.json", &report)?;
            out.raw("verify.gp", report.plot_script("verify.csv").as_bytes())?;
            Outcome::Ok
        }
        Command::Diagnose => {
            let space = build_space(cfg)?;
            let sub = subspace(&space, cfg)?;
            let template = TmParams::new(cfg.beta, cfg.alpha, cfg.eps_schedule[0])?;
            let sweep = continuation_sweep(&space, template, &cfg.eps_schedule, sub.as_ref(), &maximize_options(cfg))?;
            let opts = DiagnoseOptions {
                delta: cfg.delta,
                profile_radius: cfg.profile_radius,
                gammas: cfg.truncation_levels.clone(),
                ..DiagnoseOptions::default()
            };
            let rows = blowup::diagnose_sweep(&space, &sweep.results, &opts)?;
            out.csv("diagnose.csv", |w| blowup::write_diagnostics_csv(&rows, w))?;
            let weak = match sweep.results.last() {
                Some(last) => {
                    let g = solve_green(&space, cfg.alpha, sub.as_ref())?;
                    let f = Functional::new(&space, last.params)?;
                    let annulus = Annulus { inner: cfg.annulus_inner, outer: cfg.annulus_outer };
                    Some(blowup::weak_limit_compare(&f, &last.nodal(&space), last.c, &g, annulus, 0.5)?)
                }
                None => None,
            };
            #[derive(Serialize)]
            struct DiagnoseInfo<'a> {
                stopped_at: Option<f64>,
                rows: &'a [blowup::DiagnosticRow],
                weak_limit: Option<blowup::WeakLimitReport>,
            }
            out.json("diagnose.json", &DiagnoseInfo { stopped_at: sweep.stopped_at, rows: &rows, weak_limit: weak })?;
            out.raw("diagnose.gp", diagnose_plot_script("diagnose.csv").as_bytes())?;
            outcome_of(&sweep.results, sweep.stopped_at.is_some())
        }
    };
    Ok(RunSummary { command, outcome, config_sha256: hash, artifacts: out.written })
}

fn diagnose_plot_script(csv_name: &str) -> String {
    format!(
        "set datafile separator ','\nset logscale x\nset xlabel 'eps'\nset key top left\n\
         plot '{csv_name}' every ::1 using 1:2 with linespoints title 'c', \\\n     \
         '{csv_name}' every ::1 using 1:7 with linespoints title 'energy fraction', \\\n     \
         '{csv_name}' every ::1 using 1:8 with linespoints title 'profile deviation'\n"
    )
}
