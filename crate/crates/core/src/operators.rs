//! Discrete fixed-point operators for the periodic and Neumann problems.
//!
//! The periodic map is `G u = P u + Q N u + K N u` with `P u = u(0)`, `Q` the
//! mean, `N u = -(f(u) u' + g(t, u) - s)` and `K` the solution operator of
//! `(phi(u'))' = w - mean(w)`, `u(0) = 0`.
//!
//! `K` is discretized on a staggered grid: `phi(u')` lives at cell midpoints
//! and equals `c + W` there, where `W` is the cumulative integral of the
//! mean-free datum. This keeps `u'` at points where `c + W` is smooth in
//! `t`, so the discrete residual `D-(phi(D+ u)) - w` is second order for
//! every `phi`, including p-Laplacians whose inverse is not Lipschitz at 0.

use crate::error::{Error, Result};
use crate::grid::{trapezoid_mean, GridFunction};
use crate::phi::PhiOperator;
use crate::problem::{NeumannWeightedBVP, PeriodicProblem};

/// Tolerance on `mean(phi^-1(c + W))` when solving for the constant `c`.
pub const TOL_C: f64 = 1e-13;

/// Reusable scratch buffers. Holds no state between calls.
#[derive(Clone, Debug, Default)]
pub struct OperatorWorkspace {
    cum: Vec<f64>,
    mid: Vec<f64>,
    nem: Vec<f64>,
}

impl OperatorWorkspace {
    pub fn new(n: usize) -> Self {
        Self { cum: vec![0.0; n + 1], mid: vec![0.0; n], nem: vec![0.0; n + 1] }
    }

    fn resize(&mut self, n: usize) {
        self.cum.resize(n + 1, 0.0);
        self.mid.resize(n, 0.0);
        self.nem.resize(n + 1, 0.0);
    }

    /// Writes `K w` into `out`. `w` and `out` hold `n + 1` node values on a
    /// grid of step `h`.
    pub fn kernel_into(&mut self, phi: &PhiOperator, w: &[f64], h: f64, out: &mut [f64]) -> Result<()> {
        let n = w.len() - 1;
        self.resize(n);
        let w_mean = trapezoid_mean(w);
        let wt = |k: usize| w[k % n] - w_mean;
        let slope = |k: usize| (wt(k + 1) - wt((k + n - 1) % n)) / (2.0 * h);
        // Cumulative trapezoid with the Euler-Maclaurin end correction; the
        // correction vanishes at t = T for periodic data.
        let d0 = slope(0);
        self.cum[0] = 0.0;
        let mut trap = 0.0;
        for k in 0..n {
            trap += 0.5 * h * (wt(k) + wt(k + 1));
            self.cum[k + 1] = trap - h * h / 12.0 * (slope(k + 1) - d0);
        }
        self.cum[n] = 0.0;
        // Cubic Hermite data on each cell: midpoint values for phi^-1, cell
        // averages for the linear case.
        let weight = if phi.is_identity() { 1.0 / 12.0 } else { 1.0 / 8.0 };
        let mut scale = 0.0f64;
        for k in 0..n {
            self.mid[k] = 0.5 * (self.cum[k] + self.cum[k + 1]) + weight * h * (wt(k) - wt(k + 1));
            scale = scale.max(self.mid[k].abs());
        }
        let c = if phi.is_identity() {
            -self.mid.iter().sum::<f64>() / n as f64
        } else {
            let mid = &self.mid;
            solve_constant(|c| mid.iter().map(|&m| phi.inverse(c + m)).sum::<Result<f64>>().map(|v| v / n as f64), scale)?
        };
        out[0] = 0.0;
        for k in 0..n {
            out[k + 1] = out[k] + h * phi.inverse(c + self.mid[k])?;
        }
        Ok(())
    }

    /// Writes `G_lambda u = u(0) + lambda Q N u + K(lambda N u)` into `out`
    /// for periodic node values `u` (length `n + 1`).
    pub fn gcal_lambda_into(&mut self, pb: &PeriodicProblem, u: &[f64], lambda: f64, out: &mut [f64]) -> Result<()> {
        let n = u.len() - 1;
        self.resize(n);
        let mut nem = std::mem::take(&mut self.nem);
        nemytskii_into(pb, u, &mut nem)?;
        for v in nem.iter_mut() {
            *v *= lambda;
        }
        let qn = trapezoid_mean(&nem);
        let h = pb.period / n as f64;
        let result = self.kernel_into(&pb.phi, &nem, h, out);
        self.nem = nem;
        result?;
        let base = u[0] + qn;
        for v in out.iter_mut() {
            *v += base;
        }
        Ok(())
    }

    /// Writes the Neumann map into `out` for node values `u` on `[a, b]`.
    pub fn gcal_neumann_into(&mut self, bvp: &NeumannWeightedBVP, u: &[f64], out: &mut [f64]) -> Result<()> {
        let n = u.len() - 1;
        self.resize(n);
        let len = bvp.b - bvp.a;
        let dt = len / n as f64;
        for k in 0..=n {
            let t = bvp.a + len * k as f64 / n as f64;
            let v = bvp.h(t, u[k]);
            if !v.is_finite() {
                return Err(Error::NonFinite { what: "neumann forcing", t, u: u[k] });
            }
            self.nem[k] = v;
        }
        // Flux at midpoints: int_a^{t_{k+1/2}} h, with the cell rule matched
        // to the nodal balance.
        let mut flux = 0.5 * dt * self.nem[0];
        let mut total = flux;
        let mut acc = 0.0;
        for k in 0..n {
            if k > 0 {
                flux += dt * self.nem[k];
            }
            let tm = bvp.a + len * (k as f64 + 0.5) / n as f64;
            let z = (bvp.zeta)(tm);
            if !(z > 0.0) {
                return Err(Error::InvalidProblem(format!("zeta({tm}) = {z} is not positive")));
            }
            acc += dt * bvp.phi.inverse(-flux / z)?;
            self.mid[k] = acc;
        }
        total += dt * self.nem[1..n].iter().sum::<f64>() + 0.5 * dt * self.nem[n];
        let base = u[0] - total / len;
        out[0] = base;
        for k in 0..n {
            out[k + 1] = base + self.mid[k];
        }
        Ok(())
    }
}

/// Solves the increasing equation `f(c) = 0` by a bracketed Illinois
/// iteration. The bracket starts at `+-(1 + scale)` and grows geometrically.
fn solve_constant(f: impl Fn(f64) -> Result<f64>, scale: f64) -> Result<f64> {
    let mut lo = -(1.0 + scale);
    let mut hi = 1.0 + scale;
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    let mut grow = 0;
    while flo > 0.0 || fhi < 0.0 {
        grow += 1;
        if grow > 60 {
            return Err(Error::BracketFailure);
        }
        if flo > 0.0 {
            lo *= 2.0;
            flo = f(lo)?;
        }
        if fhi < 0.0 {
            hi *= 2.0;
            fhi = f(hi)?;
        }
    }
    if flo.abs() <= TOL_C {
        return Ok(lo);
    }
    if fhi.abs() <= TOL_C {
        return Ok(hi);
    }
    let mut side = 0i8;
    for _ in 0..400 {
        let mut c = (lo * fhi - hi * flo) / (fhi - flo);
        if !(c > lo && c < hi) {
            c = 0.5 * (lo + hi);
        }
        let fc = f(c)?;
        if fc.abs() <= TOL_C || hi - lo <= 4.0 * f64::EPSILON * (1.0 + c.abs()) {
            return Ok(c);
        }
        if fc < 0.0 {
            lo = c;
            flo = fc;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = c;
            fhi = fc;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Periodic node values of `N u = -(f(u) u' + g(t, u) - s)`.
fn nemytskii_into(pb: &PeriodicProblem, u: &[f64], out: &mut [f64]) -> Result<()> {
    let n = u.len() - 1;
    let h = pb.period / n as f64;
    for k in 0..n {
        let t = pb.period * k as f64 / n as f64;
        let mut v = pb.g(t, u[k]) - pb.s;
        if pb.friction.is_some() {
            let prev = if k == 0 { u[n - 1] } else { u[k - 1] };
            v += pb.friction_at(u[k]) * (u[k + 1] - prev) / (2.0 * h);
        }
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "nemytskii", t, u: u[k] });
        }
        out[k] = -v;
    }
    out[n] = out[0];
    Ok(())
}

/// Trapezoid mean over one period.
pub fn mean(u: &GridFunction) -> f64 {
    u.mean()
}

pub fn nemytskii(pb: &PeriodicProblem, u: &GridFunction) -> Result<GridFunction> {
    let mut out = vec![0.0; u.values().len()];
    nemytskii_into(pb, u.values(), &mut out)?;
    u.with_values(out)
}

pub fn kernel_k(phi: &PhiOperator, w: &GridFunction) -> Result<GridFunction> {
    let mut out = vec![0.0; w.values().len()];
    OperatorWorkspace::new(w.cells()).kernel_into(phi, w.values(), w.step(), &mut out)?;
    w.with_values(out)
}

/// `K - Q K` on mean-free data.
pub fn kernel_k_tilde(phi: &PhiOperator, w: &GridFunction) -> Result<GridFunction> {
    let m = w.mean();
    if m.abs() > 1e-10 * (1.0 + w.max_abs()) {
        return Err(Error::Precondition(format!("kernel_k_tilde needs mean-free data, mean = {m:e}")));
    }
    let k = kernel_k(phi, w)?;
    let km = k.mean();
    Ok(k.map(|v| v - km))
}

pub fn gcal(pb: &PeriodicProblem, u: &GridFunction) -> Result<GridFunction> {
    gcal_lambda(pb, u, 1.0)
}

pub fn gcal_lambda(pb: &PeriodicProblem, u: &GridFunction, lambda: f64) -> Result<GridFunction> {
    let mut out = vec![0.0; u.values().len()];
    OperatorWorkspace::new(u.cells()).gcal_lambda_into(pb, u.values(), lambda, &mut out)?;
    u.with_values(out)
}

pub fn gcal_neumann(bvp: &NeumannWeightedBVP, u: &GridFunction) -> Result<GridFunction> {
    let mut out = vec![0.0; u.values().len()];
    OperatorWorkspace::new(u.cells()).gcal_neumann_into(bvp, u.values(), &mut out)?;
    u.with_values(out)
}

/// Discrete left-hand side minus `s`,
/// `D-(phi(D+ u)) + f(u) D0 u + g(t, u) - s`, at the periodic nodes
/// `0 .. n-1`.
pub fn periodic_residual(pb: &PeriodicProblem, u: &GridFunction) -> Result<Vec<f64>> {
    let n = u.cells();
    let h = u.step();
    let v = u.values();
    let mut flux = Vec::with_capacity(n);
    for k in 0..n {
        flux.push(pb.phi.eval((v[k + 1] - v[k]) / h)?);
    }
    let mut nem = vec![0.0; n + 1];
    nemytskii_into(pb, v, &mut nem)?;
    Ok((0..n)
        .map(|k| {
            let prev = if k == 0 { flux[n - 1] } else { flux[k - 1] };
            (flux[k] - prev) / h - nem[k]
        })
        .collect())
}

/// `(zeta phi(D+ u))` differenced at the interior nodes plus `h(t, u)`.
pub fn neumann_residual(bvp: &NeumannWeightedBVP, u: &GridFunction) -> Result<Vec<f64>> {
    let n = u.cells();
    let len = bvp.b - bvp.a;
    let dt = len / n as f64;
    let v = u.values();
    let mut flux = Vec::with_capacity(n);
    for k in 0..n {
        let tm = bvp.a + len * (k as f64 + 0.5) / n as f64;
        flux.push((bvp.zeta)(tm) * bvp.phi.eval((v[k + 1] - v[k]) / dt)?);
    }
    Ok((1..n)
        .map(|k| {
            let t = bvp.a + len * k as f64 / n as f64;
            (flux[k] - flux[k - 1]) / dt + bvp.h(t, v[k])
        })
        .collect())
}
