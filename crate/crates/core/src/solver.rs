//! Fixed-point solvers: damped Picard iteration followed by a Newton phase
//! with a finite-difference Jacobian, for the periodic map, its fixed-mean
//! projection and the Neumann map.

use log::{debug, trace};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::operators::OperatorWorkspace;
use crate::problem::{Forcing, NeumannWeightedBVP, PeriodicProblem};

/// Picard residual below which the Newton phase starts.
pub const NEWTON_SWITCH: f64 = 1e-3;
const MAX_NEWTON: usize = 40;
const STALL_LIMIT: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Number of grid cells.
    pub n: usize,
    pub max_iter: usize,
    /// Max-norm tolerance on `G u - u`.
    pub tol_fix: f64,
    /// Initial Picard damping in `]0, 1]`.
    pub damping: f64,
    pub newton_polish: bool,
    /// Homotopy parameter in `]0, 1]`.
    pub lambda: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { n: 128, max_iter: 500, tol_fix: 1e-10, damping: 0.5, newton_polish: true, lambda: 1.0 }
    }
}

impl SolveOptions {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < crate::grid::MIN_CELLS {
            return Err(Error::InvalidGrid(format!("grid size {} is below {}", self.n, crate::grid::MIN_CELLS)));
        }
        if !(self.tol_fix > 0.0) {
            return Err(Error::Config(format!("tol_fix must be positive, got {}", self.tol_fix)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in ]0, 1], got {}", self.damping)));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!("lambda must lie in ]0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `1e6 (1 + |s|)`.
pub fn blowup_cap(s: f64) -> f64 {
    1e6 * (1.0 + s.abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct Solution {
    pub u: GridFunction,
    /// `max |G u - u|` for the map that produced the solution.
    pub residual: f64,
    pub mean_value: f64,
    /// Parameter value; for fixed-mean solves the induced level.
    pub s: f64,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    pub newton_steps: usize,
}

impl Solution {
    /// Forward differences `D+ u` on the cells.
    pub fn forward_slopes(&self) -> Vec<f64> {
        let h = self.u.step();
        self.u.values().windows(2).map(|w| (w[1] - w[0]) / h).collect()
    }

    pub fn max_slope(&self) -> f64 {
        self.forward_slopes().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Two solutions agree iff `|u1 - u2| <= 1e-5 (1 + |u1|)` in max norm.
    pub fn same_as(&self, other: &Solution) -> bool {
        self.u.cells() == other.u.cells() && self.u.sup_distance(&other.u) <= 1e-5 * (1.0 + self.u.max_abs())
    }
}

/// Keeps converged solutions, removes duplicates and sorts by mean value.
pub fn dedup_solutions(sols: impl IntoIterator<Item = Solution>) -> Vec<Solution> {
    let mut out: Vec<Solution> = Vec::new();
    for s in sols.into_iter().filter(|s| s.converged) {
        if !out.iter().any(|o| o.same_as(&s)) {
            out.push(s);
        }
    }
    out.sort_by(|a, b| a.mean_value.total_cmp(&b.mean_value));
    out
}

/// `|mean g(., u) - s|` over the periodic nodes.
pub fn averaged_defect(pb: &PeriodicProblem, u: &GridFunction) -> f64 {
    (mean_forcing(pb, u) - pb.s).abs()
}

/// `mean g(., u)` over the periodic nodes.
pub fn mean_forcing(pb: &PeriodicProblem, u: &GridFunction) -> f64 {
    let n = u.cells();
    let sum: f64 = (0..n).map(|k| pb.g(u.node(k), u.values()[k])).sum();
    sum / n as f64
}

struct Outcome {
    x: Vec<f64>,
    residual: f64,
    iterations: usize,
    newton_steps: usize,
    converged: bool,
    diverged: bool,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Generic driver for `x = M(x)` on `R^n`.
fn run_engine<M>(map: &M, x0: Vec<f64>, opts: &SolveOptions, cap: f64) -> Outcome
where
    M: Fn(&[f64], &mut OperatorWorkspace) -> Result<Vec<f64>> + Sync,
{
    let n = x0.len();
    let mut ws = OperatorWorkspace::new(n);
    let fail = |x: Vec<f64>, iterations, newton_steps| Outcome {
        x,
        residual: f64::INFINITY,
        iterations,
        newton_steps,
        converged: false,
        diverged: true,
    };
    let mut x = x0;
    let mut gx = match map(&x, &mut ws) {
        Ok(v) => v,
        Err(e) => {
            debug!("initial evaluation failed: {e}");
            return fail(x, 0, 0);
        }
    };
    let mut r = sup_diff(&gx, &x);
    let mut best = r;
    let mut d = opts.damping;
    let mut stall = 0usize;
    let mut it = 0usize;

    while it < opts.max_iter && r > opts.tol_fix {
        if opts.newton_polish && (r < NEWTON_SWITCH || d < 1e-3 || stall >= STALL_LIMIT) {
            break;
        }
        it += 1;
        let cand: Vec<f64> = x.iter().zip(&gx).map(|(a, b)| a + d * (b - a)).collect();
        if sup(&cand) > cap {
            return fail(cand, it, 0);
        }
        let gc = match map(&cand, &mut ws) {
            Ok(v) => v,
            Err(e) => {
                debug!("evaluation failed during Picard: {e}");
                return fail(cand, it, 0);
            }
        };
        let rc = sup_diff(&gc, &cand);
        if rc < r || (!opts.newton_polish && d < 1e-4) {
            x = cand;
            gx = gc;
            r = rc;
            d = (1.2 * d).min(1.0);
            if r < 0.9 * best {
                best = r;
                stall = 0;
            } else {
                stall += 1;
            }
        } else {
            d *= 0.5;
            stall += 1;
        }
    }
    trace!("Picard stopped after {it} iterations, residual {r:e}, damping {d:e}");

    let mut newton_steps = 0;
    if opts.newton_polish && r > opts.tol_fix {
        match newton(map, &mut x, &mut gx, &mut r, opts, cap, &mut ws) {
            Ok(steps) => newton_steps = steps,
            Err(steps) => return fail(x, it, steps),
        }
    } else if opts.newton_polish {
        if let Ok(steps) = newton(map, &mut x, &mut gx, &mut r, opts, cap, &mut ws) {
            newton_steps = steps;
        }
    }
    Outcome { converged: r <= opts.tol_fix, x, residual: r, iterations: it, newton_steps, diverged: false }
}

/// Newton on `F(x) = x - M(x)` with Armijo backtracking. Continues past the
/// tolerance while each step gains a factor of ten, at most two extra steps.
/// `Err` signals divergence.
fn newton<M>(
    map: &M,
    x: &mut Vec<f64>,
    gx: &mut Vec<f64>,
    r: &mut f64,
    opts: &SolveOptions,
    cap: f64,
    ws: &mut OperatorWorkspace,
) -> std::result::Result<usize, usize>
where
    M: Fn(&[f64], &mut OperatorWorkspace) -> Result<Vec<f64>> + Sync,
{
    let n = x.len();
    let mut extra = 0;
    for step in 0..MAX_NEWTON {
        if *r <= opts.tol_fix {
            if extra >= 2 || *r < 1e-15 * (1.0 + sup(x)) {
                return Ok(step);
            }
            extra += 1;
        }
        let f: Vec<f64> = x.iter().zip(gx.iter()).map(|(a, b)| a - b).collect();
        let base_x: &[f64] = x;
        let base_g: &[f64] = gx;
        let columns: Vec<Option<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map_init(
                || OperatorWorkspace::new(n),
                |w, j| {
                    let eps = 1e-6 * (1.0 + base_x[j].abs());
                    let mut xp = base_x.to_vec();
                    xp[j] += eps;
                    let gp = map(&xp, w).ok()?;
                    Some(
                        (0..n)
                            .map(|i| (if i == j { 1.0 } else { 0.0 }) - (gp[i] - base_g[i]) / eps)
                            .collect(),
                    )
                },
            )
            .collect();
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for (j, col) in columns.into_iter().enumerate() {
            match col {
                Some(c) => jac.set_column(j, &DVector::from_vec(c)),
                None => return Ok(step),
            }
        }
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let dx = match jac.lu().solve(&rhs) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => dx,
            _ => return Ok(step),
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut escaped = false;
        for _ in 0..25 {
            let xt: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + alpha * b).collect();
            if sup(&xt) > cap {
                escaped = true;
                alpha *= 0.5;
                continue;
            }
            if let Ok(gt) = map(&xt, ws) {
                let rt = sup_diff(&gt, &xt);
                if rt <= (1.0 - 1e-4 * alpha) * *r {
                    let gain = *r / rt.max(f64::MIN_POSITIVE);
                    *x = xt;
                    *gx = gt;
                    *r = rt;
                    accepted = true;
                    if *r <= opts.tol_fix && extra > 0 && gain < 10.0 {
                        return Ok(step + 1);
                    }
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return if escaped && *r > NEWTON_SWITCH { Err(step) } else { Ok(step) };
        }
    }
    Ok(MAX_NEWTON)
}

pub(crate) fn periodic_map<'a>(
    pb: &'a PeriodicProblem,
    lambda: f64,
) -> impl Fn(&[f64], &mut OperatorWorkspace) -> Result<Vec<f64>> + Sync + 'a {
    move |x: &[f64], ws: &mut OperatorWorkspace| {
        let n = x.len();
        let mut full = Vec::with_capacity(n + 1);
        full.extend_from_slice(x);
        full.push(x[0]);
        let mut out = vec![0.0; n + 1];
        ws.gcal_lambda_into(pb, &full, lambda, &mut out)?;
        out.truncate(n);
        Ok(out)
    }
}

/// Fixed point of `G_lambda` from the periodic initial guess `u0`.
pub fn solve_fixed_point(pb: &PeriodicProblem, u0: &GridFunction, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    if !u0.is_periodic_class() {
        return Err(Error::Precondition("initial guess is not periodic".into()));
    }
    if (u0.length() - pb.period).abs() > 1e-12 * pb.period {
        return Err(Error::Precondition(format!(
            "initial guess spans {} but the period is {}",
            u0.length(),
            pb.period
        )));
    }
    let map = periodic_map(pb, opts.lambda);
    let out = run_engine(&map, u0.periodic_values().to_vec(), opts, blowup_cap(pb.s));
    finish_periodic(pb, out)
}

fn finish_periodic(pb: &PeriodicProblem, out: Outcome) -> Result<Solution> {
    let values = if out.x.iter().all(|v| v.is_finite()) { out.x } else { vec![0.0; out.x.len()] };
    let u = GridFunction::from_periodic_values(pb.period, values)?;
    Ok(Solution {
        mean_value: u.mean(),
        u,
        residual: out.residual,
        s: pb.s,
        converged: out.converged,
        diverged: out.diverged,
        iterations: out.iterations,
        newton_steps: out.newton_steps,
    })
}

/// Constant initial guess on the periodic grid of `opts`.
pub fn constant_guess(pb: &PeriodicProblem, opts: &SolveOptions, c: f64) -> Result<GridFunction> {
    GridFunction::constant(0.0, pb.period, opts.n, c)
}

/// Solves along `lambda = 0.1, 0.325, 0.55, 0.775, 1`, each stage started
/// from the previous one.
pub fn solve_lambda_ramp(pb: &PeriodicProblem, u0: &GridFunction, opts: &SolveOptions) -> Result<Solution> {
    let mut guess = u0.clone();
    let mut last = None;
    for k in 0..5 {
        let lambda = 0.1 + 0.225 * k as f64;
        let stage = SolveOptions { lambda, ..*opts };
        let sol = solve_fixed_point(pb, &guess, &stage)?;
        if sol.diverged {
            return Ok(sol);
        }
        guess = sol.u.clone();
        last = Some(sol);
    }
    Ok(last.expect("five stages"))
}

/// Solves the mean-projected problem
/// `(phi(v'))' + f(m + v) v' + lambda (g(t, m + v) - mean g(., m + v)) = 0`
/// for mean-free `v` and returns `u = m + v` with `s` set to the induced
/// level `mean g(., u)`.
pub fn solve_fixed_mean(pb: &PeriodicProblem, u_bar: f64, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    if !u_bar.is_finite() {
        return Err(Error::Domain { context: "solve_fixed_mean", value: u_bar });
    }
    let n = opts.n;
    let period = pb.period;
    let lambda = opts.lambda;
    let h = period / n as f64;
    let map = move |x: &[f64], ws: &mut OperatorWorkspace| -> Result<Vec<f64>> {
        let mut w = Vec::with_capacity(n + 1);
        for k in 0..n {
            let t = period * k as f64 / n as f64;
            let u = u_bar + x[k];
            let mut v = lambda * pb.g(t, u);
            if pb.friction.is_some() {
                let prev = if k == 0 { x[n - 1] } else { x[k - 1] };
                let next = if k + 1 == n { x[0] } else { x[k + 1] };
                v += pb.friction_at(u) * (next - prev) / (2.0 * h);
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { what: "fixed-mean forcing", t, u });
            }
            w.push(-v);
        }
        w.push(w[0]);
        let mut out = vec![0.0; n + 1];
        ws.kernel_into(&pb.phi, &w, h, &mut out)?;
        out.truncate(n);
        let m = out.iter().sum::<f64>() / n as f64;
        for v in out.iter_mut() {
            *v -= m;
        }
        Ok(out)
    };
    let out = run_engine(&map, vec![0.0; n], opts, blowup_cap(u_bar));
    let shift = out.x.iter().sum::<f64>() / n as f64;
    let mut values: Vec<f64> = out.x.iter().map(|v| u_bar + (v - shift)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        values = vec![u_bar; n];
    }
    let u = GridFunction::from_periodic_values(period, values)?;
    let level = mean_forcing(pb, &u);
    Ok(Solution {
        mean_value: u_bar,
        u,
        residual: out.residual,
        s: level,
        converged: out.converged,
        diverged: out.diverged,
        iterations: out.iterations,
        newton_steps: out.newton_steps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Above,
    Below,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Above => 1.0,
            Side::Below => -1.0,
        }
    }
}

/// A solution lying entirely beyond `+-d` with its induced level.
#[derive(Clone, Debug, Serialize)]
pub struct TailCertificate {
    pub solution: Solution,
    /// `mean g(., u)`: the parameter for which `u` solves the problem.
    pub g0: f64,
    pub u_bar: f64,
    /// Oscillation bound used to place `u_bar`.
    pub k: f64,
    /// `int_0^T rho` with `|g(t, u)| <= rho(t)` on the chosen side.
    pub rho_l1: f64,
}

fn side_points(side: Side) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=2000).map(|i| 10.0 * i as f64 / 2000.0).collect();
    pts.extend((1..=600).map(|i| 10f64.powf(1.0 + 3.0 * i as f64 / 600.0)));
    pts.into_iter().map(|p| side.sign() * p).collect()
}

/// `int_0^T sup_{u on side} |g(t, u)| dt`, or a precondition error when `g`
/// is not bounded on that side.
pub fn side_bound_l1(pb: &PeriodicProblem, side: Side) -> Result<f64> {
    let pts = side_points(side);
    let unbounded = || {
        Error::Precondition(format!(
            "forcing is not bounded for u {} 0",
            if side == Side::Above { ">=" } else { "<=" }
        ))
    };
    match &pb.forcing {
        Forcing::Weighted(w) => {
            let tail = if side == Side::Above { w.omega_plus } else { w.omega_minus };
            if !tail.is_finite() {
                return Err(unbounded());
            }
            let mut qmax = tail.abs();
            for &u in &pts {
                let v = (w.q)(u).abs();
                if !v.is_finite() {
                    return Err(unbounded());
                }
                qmax = qmax.max(v);
            }
            Ok(pb.period * (w.a.mean(pb.period) * qmax) + w.e.l1_norm(pb.period))
        }
        Forcing::Raw(g) => {
            let m = 256;
            let mut total = 0.0;
            for k in 0..m {
                let t = pb.period * k as f64 / m as f64;
                let mut near = 0.0f64;
                let mut far = 0.0f64;
                for &u in &pts {
                    let v = g(t, u).abs();
                    if !v.is_finite() {
                        return Err(unbounded());
                    }
                    if u.abs() <= 1e3 {
                        near = near.max(v);
                    } else {
                        far = far.max(v);
                    }
                }
                if far > 2.0 * near + 1.0 {
                    return Err(unbounded());
                }
                total += near.max(far);
            }
            Ok(total * pb.period / m as f64)
        }
    }
}

/// A periodic solution with `min u >= d` (side above) or `max u <= -d`
/// (side below), found by a fixed-mean solve at `u_bar = +-(d + K)` where
/// `K = K_b T / (b - |rho|_1)`, `b = max(2 |rho|_1, 1)`.
pub fn find_bounded_tail_solution(
    pb: &PeriodicProblem,
    d: f64,
    side: Side,
    opts: &SolveOptions,
) -> Result<TailCertificate> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Precondition(format!("tail distance must be positive, got {d}")));
    }
    let rho_l1 = side_bound_l1(pb, side)?;
    let b = (2.0 * rho_l1).max(1.0);
    let kb = pb.phi.coercivity_constant(b)?;
    let k = kb * pb.period / (b - rho_l1);
    let u_bar = side.sign() * (d + k);
    let solution = solve_fixed_mean(pb, u_bar, opts)?;
    let (ok, measured) = match side {
        Side::Above => (solution.u.min() >= d, solution.u.min()),
        Side::Below => (solution.u.max() <= -d, solution.u.max()),
    };
    if !solution.converged || !ok {
        return Err(Error::BoundViolation { required: side.sign() * d, measured });
    }
    Ok(TailCertificate { g0: solution.s, solution, u_bar, k, rho_l1 })
}

/// Fixed point of the Neumann map from `u0` on `[a, b]`.
pub fn solve_neumann(bvp: &NeumannWeightedBVP, u0: &GridFunction, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    if (u0.start() - bvp.a).abs() > 1e-12 || (u0.length() - (bvp.b - bvp.a)).abs() > 1e-12 {
        return Err(Error::Precondition("initial guess does not span the Neumann interval".into()));
    }
    let map = |x: &[f64], ws: &mut OperatorWorkspace| -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        ws.gcal_neumann_into(bvp, x, &mut out)?;
        Ok(out)
    };
    let out = run_engine(&map, u0.values().to_vec(), opts, blowup_cap(bvp.s));
    let values = if out.x.iter().all(|v| v.is_finite()) { out.x } else { vec![0.0; u0.values().len()] };
    let u = u0.with_values(values)?;
    Ok(Solution {
        mean_value: u.mean(),
        u,
        residual: out.residual,
        s: bvp.s,
        converged: out.converged,
        diverged: out.diverged,
        iterations: out.iterations,
        newton_steps: out.newton_steps,
    })
}
