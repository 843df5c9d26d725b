//! Subcommand bodies. Reports go to files under the output directory,
//! diagnostics to the log.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use super::config::RunConfig;
use super::{CommonArgs, Command, EXIT_NO_SOLUTION, EXIT_OK, EXIT_UNSUPPORTED};
use crate::analysis::{apriori_bounds, estimate_sigma_stars_with, ext_real, HypothesisReport};
use crate::continuation::{
    bound_slack, find_threshold, flat_on_constants, sweep, trace_branch, verify_alternative, SolutionBranch,
    Termination, ThresholdReport, WindowVerdict,
};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::solver::{
    averaged_defect, constant_guess, solve_fixed_point, solve_lambda_ramp, solve_neumann, Solution,
};

pub fn dispatch(cmd: Command, args: &CommonArgs) -> Result<i32> {
    let path = args.config.as_ref().ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    match cmd {
        Command::Solve => cmd_solve(&cfg, args, &out),
        Command::Threshold => cmd_threshold(&cfg, args, &out),
        Command::Sweep => cmd_sweep(&cfg, args, &out),
        Command::Neumann => cmd_neumann(&cfg, args, &out),
        Command::Check => cmd_check(&cfg, args, &out),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn profile_csv(header: &str, u: &GridFunction, du: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for (k, (v, d)) in u.values().iter().zip(du).enumerate() {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", u.node(k), v, d));
    }
    out
}

#[derive(Serialize)]
struct SolveSummary {
    s: f64,
    converged: bool,
    #[serde(serialize_with = "ext_real")]
    residual: f64,
    mean_identity_defect: f64,
    mean: f64,
    min: f64,
    max: f64,
    iterations: usize,
    newton_steps: usize,
    #[serde(serialize_with = "ext_real")]
    k0: f64,
    #[serde(serialize_with = "ext_real")]
    k1: f64,
    bounds_hold: Option<bool>,
}

pub fn cmd_solve(cfg: &RunConfig, args: &CommonArgs, out: &Path) -> Result<i32> {
    let mut pb = cfg.periodic_problem()?;
    if let Some(s) = args.s {
        pb = pb.with_s(s);
    }
    let opts = cfg.solve_options(args.grid)?;
    let guess = constant_guess(&pb, &opts, args.guess.unwrap_or(cfg.solve.guess))?;
    let mut sol = solve_fixed_point(&pb, &guess, &opts)?;
    if !sol.converged {
        info!("plain iteration failed, retrying along the homotopy");
        let ramp = solve_lambda_ramp(&pb, &guess, &opts)?;
        if ramp.converged {
            sol = ramp;
        }
    }
    if sol.converged && flat_on_constants(&pb, &sol, &opts) {
        warn!("iteration stopped on a flat tail of the forcing at mean {}", sol.mean_value);
        sol.converged = false;
    }
    let (k0, k1, bounds_hold) = match apriori_bounds(&pb) {
        Ok(b) => {
            let holds = sol.u.oscillation() <= b.k0 && sol.max_slope() <= b.k1 + bound_slack(b.k1);
            (b.k0, b.k1, sol.converged.then_some(holds))
        }
        Err(_) => (f64::INFINITY, f64::INFINITY, None),
    };
    let summary = SolveSummary {
        s: pb.s,
        converged: sol.converged,
        residual: sol.residual,
        mean_identity_defect: averaged_defect(&pb, &sol.u),
        mean: sol.mean_value,
        min: sol.u.min(),
        max: sol.u.max(),
        iterations: sol.iterations,
        newton_steps: sol.newton_steps,
        k0,
        k1,
        bounds_hold,
    };
    write(out, "solution.csv", &profile_csv("t,u,du", &sol.u, &sol.u.derivative_periodic()))?;
    write(out, "solution.json", &to_json(&summary)?)?;
    if sol.converged {
        Ok(EXIT_OK)
    } else {
        warn!("no convergence at s = {} (residual {:e})", pb.s, sol.residual);
        Ok(EXIT_NO_SOLUTION)
    }
}

#[derive(Serialize)]
struct ThresholdOutput<'a> {
    report: &'a ThresholdReport,
    windows: Vec<WindowVerdict>,
}

pub fn cmd_threshold(cfg: &RunConfig, args: &CommonArgs, out: &Path) -> Result<i32> {
    let pb = cfg.periodic_problem()?;
    let plan = cfg.sweep_plan(&pb, args.grid, args.seed)?;
    let report = match find_threshold(&pb, &plan) {
        Ok(r) => r,
        Err(Error::UnsupportedFamily) => {
            warn!("the hypotheses hold on neither side; no threshold theory applies");
            return Ok(EXIT_UNSUPPORTED);
        }
        Err(e) => return Err(e),
    };
    let windows = verify_alternative(&pb, &report);
    write(out, "threshold.json", &to_json(&ThresholdOutput { report: &report, windows })?)?;
    Ok(EXIT_OK)
}

pub fn cmd_sweep(cfg: &RunConfig, args: &CommonArgs, out: &Path) -> Result<i32> {
    let pb = cfg.periodic_problem()?;
    let plan = cfg.sweep_plan(&pb, args.grid, args.seed)?;
    let samples = sweep(&pb, &plan)?;
    let mut table = String::from("s,count\n");
    for r in &samples {
        table.push_str(&format!("{:.16e},{}\n", r.s, r.count()));
    }
    let mut branches: Vec<(String, SolutionBranch)> = Vec::new();
    if let Some(best) = samples.iter().max_by_key(|r| r.count()).filter(|r| r.count() > 0) {
        let opts = cfg.branch_options(&plan);
        for (i, sol) in best.solutions.iter().enumerate() {
            for (tag, dir) in [("up", 1.0), ("down", -1.0)] {
                match trace_branch(&pb, sol, dir, &opts) {
                    Ok(b) => branches.push((format!("branch_{i}_{tag}.csv"), b)),
                    Err(e) => warn!("branch {i} ({tag}) not traced: {e}"),
                }
            }
        }
    }
    write(out, "counts.csv", &table)?;
    let mut index = Vec::new();
    for (name, b) in &branches {
        write(out, name, &b.to_csv())?;
        index.push(BranchEntry { file: name.clone(), points: b.points.len(), termination: b.termination, folds: b.folds.clone() });
    }
    write(out, "branches.json", &to_json(&index)?)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BranchEntry {
    file: String,
    points: usize,
    termination: Termination,
    folds: Vec<f64>,
}

#[derive(Serialize)]
struct NeumannSummary {
    s: f64,
    solutions: Vec<NeumannEntry>,
}

#[derive(Serialize)]
struct NeumannEntry {
    file: String,
    guess: f64,
    mean: f64,
    min: f64,
    max: f64,
    residual: f64,
}

pub fn cmd_neumann(cfg: &RunConfig, args: &CommonArgs, out: &Path) -> Result<i32> {
    let (bvp, guesses) = cfg.radial_problem(args.s)?;
    let opts = cfg.solve_options(args.grid)?;
    let mut found: Vec<(f64, Solution)> = Vec::new();
    for &g in &guesses {
        let u0 = GridFunction::constant(bvp.a, bvp.b - bvp.a, opts.n, g)?;
        let sol = solve_neumann(&bvp, &u0, &opts)?;
        if sol.converged && !found.iter().any(|(_, f)| f.same_as(&sol)) {
            found.push((g, sol));
        }
    }
    found.sort_by(|a, b| a.1.mean_value.total_cmp(&b.1.mean_value));
    if found.is_empty() {
        warn!("no Neumann solution from the guesses {guesses:?} at s = {}", bvp.s);
        return Ok(EXIT_NO_SOLUTION);
    }
    let mut entries = Vec::new();
    for (i, (g, sol)) in found.iter().enumerate() {
        let name = format!("neumann_{i}.csv");
        write(out, &name, &profile_csv("r,v,dv", &sol.u, &sol.u.derivative_nonperiodic()))?;
        entries.push(NeumannEntry {
            file: name,
            guess: *g,
            mean: sol.mean_value,
            min: sol.u.min(),
            max: sol.u.max(),
            residual: sol.residual,
        });
    }
    write(out, "neumann.json", &to_json(&NeumannSummary { s: bvp.s, solutions: entries })?)?;
    Ok(EXIT_OK)
}

pub fn cmd_check(cfg: &RunConfig, args: &CommonArgs, out: &Path) -> Result<i32> {
    let mut pb = cfg.periodic_problem()?;
    if let Some(s) = args.s {
        pb = pb.with_s(s);
    }
    let opts = cfg.solve_options(args.grid)?;
    let report: HypothesisReport = estimate_sigma_stars_with(&pb, &opts);
    let json = to_json(&report)?;
    print!("{json}");
    if args.out.is_some() {
        write(out, "check.json", &json)?;
    }
    Ok(EXIT_OK)
}
