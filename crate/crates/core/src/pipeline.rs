//! reduce -> branch -> stability -> homotopy -> evolution, with file emission.
//!
//! Signs are processed concurrently (bounded by `SKTSHADOW_THREADS`); all
//! files are written afterwards in a fixed order so runs are byte-reproducible.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{neumann_eigenpair, Domain1D};
use crate::config::RunConfig;
use crate::error::{Result, SktError};
use crate::evolution::{growth_rate, GrowthMeasurement, GrowthOptions};
use crate::output::{self, BRANCH_HEADER, SERIES_HEADER, SPECTRUM_HEADER};
use crate::reduction::{reduce, ReducedRoot, Sign};
use crate::solver::{continue_branch, eta_homotopy, Branch, StationaryProblem};
use crate::spectra::{assemble_pencil, eigen_near_zero, EigenResult};

pub const THREADS_ENV: &str = "SKTSHADOW_THREADS";

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const ACCEPTANCE: i32 = 4;
}

/// Exit code for an error that aborts a command.
pub fn exit_code(err: &SktError) -> i32 {
    match err {
        SktError::Config(_) => exit::CONFIG,
        SktError::Io(_) | SktError::MissingArtifacts(_) => exit::IO,
        _ => exit::NUMERICAL,
    }
}

/// Thread cap from the environment (unset: rayon's default).
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(SktError::Config(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
    }
}

/// Run `f` inside a pool honoring the thread cap.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| SktError::Config(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageFailure {
    pub stage: &'static str,
    pub sign: Sign,
    pub eps: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub sign: Sign,
    pub passed: bool,
    pub value: f64,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub status: &'static str,
    pub failures: Vec<StageFailure>,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub summary: Summary,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.summary.failures.is_empty() {
            exit::OK
        } else {
            exit::NUMERICAL
        }
    }
}

#[derive(Debug, Default)]
struct SignOutcome {
    root: Option<ReducedRoot>,
    branch: Option<Branch>,
    eigen: Vec<EigenResult>,
    homotopy: Option<(Branch, Vec<EigenResult>)>,
    growth: Vec<(f64, GrowthMeasurement)>,
    failure: Option<StageFailure>,
}

fn fail(stage: &'static str, sign: Sign, eps: Option<f64>, e: SktError) -> StageFailure {
    StageFailure { stage, sign, eps, error: e.to_string() }
}

fn run_sign(cfg: &RunConfig, dom: &Arc<Domain1D>, sign: Sign) -> SignOutcome {
    let mut out = SignOutcome::default();
    if let Err(f) = run_sign_stages(cfg, dom, sign, &mut out) {
        out.failure = Some(f);
    }
    out
}

fn run_sign_stages(
    cfg: &RunConfig,
    dom: &Arc<Domain1D>,
    sign: Sign,
    out: &mut SignOutcome,
) -> std::result::Result<(), StageFailure> {
    let p = cfg.params;
    let j = cfg.mode.j;
    let mode = neumann_eigenpair(dom, j).map_err(|e| fail("reduce", sign, None, e))?;
    let root = reduce(&p, &mode, sign).map_err(|e| fail("reduce", sign, None, e))?;
    out.root = Some(root.clone());
    if !cfg.stages.branch {
        return Ok(());
    }
    let grid = cfg.epsilon.grid();
    let newton = cfg.newton.options();
    let template =
        StationaryProblem::new(p, Arc::clone(dom), j, grid[0], 0.0).map_err(|e| fail("branch", sign, None, e))?;
    let mut branch = continue_branch(&template, &grid, sign, &newton).map_err(|e| {
        let eps = match &e {
            SktError::BranchBroken { eps, .. } => Some(*eps),
            _ => None,
        };
        fail("branch", sign, eps, e)
    })?;
    if cfg.stages.stability {
        for k in 0..branch.points.len() {
            let pt = &branch.points[k];
            match assemble_pencil(pt, &template, root.mu0).and_then(|pen| eigen_near_zero(&pen)) {
                Ok(e) => {
                    branch.points[k].sigma = Some(e.sigma);
                    out.eigen.push(e);
                }
                Err(e) => {
                    let eps = pt.eps;
                    out.branch = Some(branch);
                    return Err(fail("stability", sign, Some(eps), e));
                }
            }
        }
    }
    out.branch = Some(branch.clone());

    let pick = |x: f64| branch.points.iter().position(|pt| (pt.eps - x).abs() <= 1e-12 * x);
    if cfg.stages.homotopy && !cfg.alpha.is_empty() {
        let eps = cfg.homotopy_eps.unwrap_or(grid[0]);
        let idx = pick(eps).expect("validated homotopy eps");
        let start = &branch.points[idx];
        let mut hb = eta_homotopy(start, &template, &cfg.alpha, sign, &newton)
            .map_err(|e| fail("homotopy", sign, Some(eps), e))?;
        let mut eig = Vec::new();
        if cfg.stages.stability {
            for pt in hb.points.iter_mut() {
                let e = assemble_pencil(pt, &template, root.mu0)
                    .and_then(|pen| eigen_near_zero(&pen))
                    .map_err(|e| fail("homotopy", sign, Some(eps), e))?;
                pt.sigma = Some(e.sigma);
                eig.push(e);
            }
        }
        out.homotopy = Some((hb, eig));
    }

    if cfg.stages.evolution && cfg.stages.stability {
        let targets = if cfg.evolution_eps.is_empty() { vec![grid[0]] } else { cfg.evolution_eps.clone() };
        for eps in targets {
            let idx = pick(eps).expect("validated evolution eps");
            let e = &out.eigen[idx];
            let g = growth_rate(&branch.points[idx], &e.eigfield, e.sigma, &template, &GrowthOptions::default())
                .map_err(|err| fail("evolution", sign, Some(eps), err))?;
            out.growth.push((branch.points[idx].eps, g));
        }
    }
    Ok(())
}

fn checks_for(sign: Sign, o: &SignOutcome, cfg: &RunConfig, lambda_j: f64) -> Vec<Check> {
    let mut c = Vec::new();
    let mut push = |name: &str, passed: bool, value: f64, expected: &str| {
        c.push(Check { name: name.to_string(), sign, passed, value, expected: expected.to_string() });
    };
    if let Some(r) = &o.root {
        let m = r.inequalities;
        let margin = m.i.margin.min(m.ii.margin).min(m.iii.margin);
        push("reduction_inequalities", r.inequalities.all_hold(), margin, "min margin > 0");
        push("nondegeneracy", r.det_value >= r.lower_bound, r.det_value - r.lower_bound, "det - lower >= 0");
        push("c0_negative", r.c0 < 0.0, r.c0, "< 0");
    }
    if let Some(b) = &o.branch {
        let worst = b.points.iter().map(|p| p.residual_norm / p.phi.sup_norm().max(1.0)).fold(0.0, f64::max);
        push("branch_converged", worst <= cfg.newton.tol, worst, &format!("<= {:e}", cfg.newton.tol));
        let pos = b.points.iter().map(|p| p.u_min().min(p.w.iter().copied().fold(f64::INFINITY, f64::min))).fold(f64::INFINITY, f64::min);
        push("branch_positive", pos > 0.0, pos, "> 0");
    }
    if !o.eigen.is_empty() {
        let smin = o.eigen.iter().map(|e| e.sigma).fold(f64::INFINITY, f64::min);
        push("sigma_positive", smin > 0.0, smin, "> 0");
        let rmax = o.eigen.iter().map(|e| e.residual).fold(0.0, f64::max);
        push("eigen_residual", rmax <= 1e-8, rmax, "<= 1e-8");
        if let Some(b) = &o.branch {
            if let Some((pt, e)) = b.points.iter().zip(&o.eigen).last() {
                let dev = (e.sigma / (pt.eps * lambda_j) - 1.0).abs();
                push("sigma_over_eps_lambda_smallest_eps", dev <= 0.05, dev, "|ratio - 1| <= 0.05");
            }
        }
    }
    if let (Some((hb, eig)), Some(b)) = (&o.homotopy, &o.branch) {
        let base = b.points.iter().zip(&o.eigen).find(|(p, _)| (p.eps - hb.points[0].eps).abs() <= 1e-12 * p.eps);
        if let Some((_, e0)) = base {
            for (pt, e) in hb.points.iter().zip(eig) {
                let dev = (e.sigma / e0.sigma - 1.0).abs();
                push(&format!("homotopy_sigma_alpha_{:e}", pt.alpha()), dev <= 0.1, dev, "|sigma/sigma_shadow - 1| <= 0.1");
            }
        }
    }
    if let Some(b) = &o.branch {
        for (eps, g) in &o.growth {
            if let Some((_, e)) = b.points.iter().zip(&o.eigen).find(|(p, _)| p.eps == *eps) {
                let dev = (g.sigma_measured / e.sigma - 1.0).abs();
                push(&format!("growth_rate_eps_{eps:e}"), dev <= 0.1, dev, "|measured/sigma - 1| <= 0.1");
                push(&format!("growth_r2_eps_{eps:e}"), g.r_squared >= 0.999, g.r_squared, ">= 0.999");
            }
        }
    }
    c
}

fn write_outputs(dir: &Path, sign: Sign, o: &SignOutcome, dom: &Domain1D, lambda_j: f64, files: &mut Vec<String>) -> Result<()> {
    let tag = sign.as_str();
    let mut record = |name: String| files.push(name);
    if let Some(r) = &o.root {
        let name = format!("reduction_{tag}.json");
        output::write_json(&dir.join(&name), r)?;
        record(name);
    }
    if let Some(b) = &o.branch {
        let rows: Vec<Vec<f64>> = b.points.iter().map(|p| output::branch_row(p, lambda_j)).collect();
        let name = format!("branch_{tag}.csv");
        output::write_csv(&dir.join(&name), BRANCH_HEADER, &rows)?;
        record(name);
        let prof = dir.join("profiles");
        std::fs::create_dir_all(&prof)?;
        for (i, p) in b.points.iter().enumerate() {
            let fields: [(&str, &[f64]); 4] =
                [("u", &p.u), ("w", &p.w), ("phi", p.phi.first()), ("psi", p.phi.second())];
            for (field, values) in fields {
                let name = format!("profiles/{tag}_{i:02}_{field}.csv");
                output::write_profile(&dir.join(&name), dom.nodes(), values)?;
                record(name);
            }
        }
        if !o.eigen.is_empty() {
            let rows: Vec<Vec<f64>> =
                b.points.iter().zip(&o.eigen).map(|(p, e)| output::spectrum_row(p.eps, e, lambda_j)).collect();
            let name = format!("spectrum_{tag}.csv");
            output::write_csv(&dir.join(&name), SPECTRUM_HEADER, &rows)?;
            record(name);
        }
    }
    if let Some((hb, _)) = &o.homotopy {
        let rows: Vec<Vec<f64>> = hb.points.iter().map(|p| output::branch_row(p, lambda_j)).collect();
        let name = format!("homotopy_{tag}.csv");
        output::write_csv(&dir.join(&name), BRANCH_HEADER, &rows)?;
        record(name);
    }
    for (i, (_, g)) in o.growth.iter().enumerate() {
        let name = format!("timeseries_{tag}_{i:02}.csv");
        output::write_csv(&dir.join(&name), SERIES_HEADER, &output::series_rows(&g.series))?;
        record(name);
    }
    Ok(())
}

/// Execute a configuration; numerical failures are reported in the summary
/// (and by [`RunReport::exit_code`]), configuration and I/O failures as errors.
pub fn run(config_path: &Path) -> Result<RunReport> {
    let (cfg, base) = RunConfig::load(config_path)?;
    run_config(&cfg, &base)
}

pub fn run_config(cfg: &RunConfig, base: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let out_dir = cfg.output_dir(base);
    std::fs::create_dir_all(&out_dir)?;
    let mut dom = Domain1D::new(cfg.domain.length, cfg.domain.n).map_err(|e| SktError::Config(e.to_string()))?;
    if cfg.domain.dealias {
        dom = dom.with_dealiasing();
    }
    let dom = Arc::new(dom);
    let lambda_j = neumann_eigenpair(&dom, cfg.mode.j).map_err(|e| SktError::Config(e.to_string()))?.lambda();
    let signs = cfg.mode.sign.signs();
    let outcomes: Vec<SignOutcome> = with_pool(|| signs.par_iter().map(|&s| run_sign(cfg, &dom, s)).collect())?;

    let mut files = Vec::new();
    let mut checks = Vec::new();
    let mut failures = Vec::new();
    for (&sign, o) in signs.iter().zip(&outcomes) {
        write_outputs(&out_dir, sign, o, &dom, lambda_j, &mut files)?;
        checks.extend(checks_for(sign, o, cfg, lambda_j));
        if let Some(f) = &o.failure {
            failures.push(f.clone());
        }
    }
    files.push("summary.json".into());
    let summary = Summary { status: if failures.is_empty() { "ok" } else { "failed" }, failures, checks, files };
    output::write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(RunReport { out_dir, summary })
}
