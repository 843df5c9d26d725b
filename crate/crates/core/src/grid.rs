//! Functions sampled on a uniform grid of `[start, start + length]`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest admissible number of subintervals.
pub const MIN_CELLS: usize = 16;

/// `n + 1` node values `u(t_k)`, `t_k = start + k * length / n`. For periodic
/// data node `n` duplicates node `0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridFunction {
    start: f64,
    length: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(start: f64, length: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_CELLS + 1 {
            return Err(Error::InvalidGrid(format!(
                "need at least {} nodes, got {}",
                MIN_CELLS + 1,
                values.len()
            )));
        }
        if !(length.is_finite() && length > 0.0 && start.is_finite()) {
            return Err(Error::InvalidGrid(format!("bad interval start {start}, length {length}")));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at node {k}")));
        }
        Ok(Self { start, length, values })
    }

    pub fn from_fn(start: f64, length: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..=n).map(|k| f(start + length * k as f64 / n as f64)).collect();
        Self::new(start, length, values)
    }

    /// Samples `f` on `[0, period]` and copies node `0` into node `n`.
    pub fn periodic(period: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = (0..n).map(|k| f(period * k as f64 / n as f64)).collect();
        values.push(*values.first().unwrap_or(&0.0));
        Self::new(0.0, period, values)
    }

    pub fn constant(start: f64, length: f64, n: usize, c: f64) -> Result<Self> {
        Self::new(start, length, vec![c; n + 1])
    }

    /// Periodic grid from the `n` independent values `u_0 .. u_{n-1}`.
    pub fn from_periodic_values(period: f64, mut values: Vec<f64>) -> Result<Self> {
        let first = *values.first().ok_or_else(|| Error::InvalidGrid("no values".into()))?;
        values.push(first);
        Self::new(0.0, period, values)
    }

    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn step(&self) -> f64 {
        self.length / self.cells() as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.start + self.length * k as f64 / self.cells() as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| self.node(k))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The `n` independent values of periodic data.
    pub fn periodic_values(&self) -> &[f64] {
        &self.values[..self.cells()]
    }

    /// Trapezoid mean over the interval.
    pub fn mean(&self) -> f64 {
        trapezoid_mean(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    /// `|u_0 - u_n|`.
    pub fn periodic_defect(&self) -> f64 {
        (self.values[0] - self.values[self.cells()]).abs()
    }

    pub fn is_periodic_class(&self) -> bool {
        self.periodic_defect() <= 1e-10 * (1.0 + self.max_abs())
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction { start: self.start, length: self.length, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != self.values.len() {
            return Err(Error::InvalidGrid(format!("expected {} values, got {}", self.values.len(), values.len())));
        }
        GridFunction::new(self.start, self.length, values)
    }

    /// Centered differences with the periodic stencil.
    pub fn derivative_periodic(&self) -> Vec<f64> {
        let n = self.cells();
        let h2 = 2.0 * self.step();
        let v = &self.values;
        let mut d = Vec::with_capacity(n + 1);
        for k in 0..n {
            let prev = if k == 0 { v[n - 1] } else { v[k - 1] };
            d.push((v[k + 1] - prev) / h2);
        }
        d.push(d[0]);
        d
    }

    /// Centered differences inside, second-order one-sided at the ends.
    pub fn derivative_nonperiodic(&self) -> Vec<f64> {
        let n = self.cells();
        let h = self.step();
        let v = &self.values;
        let mut d = Vec::with_capacity(n + 1);
        d.push((-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h));
        for k in 1..n {
            d.push((v[k + 1] - v[k - 1]) / (2.0 * h));
        }
        d.push((3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * h));
        d
    }
}

/// Trapezoid mean of node values on a uniform grid.
pub fn trapezoid_mean(values: &[f64]) -> f64 {
    let n = values.len() - 1;
    let inner: f64 = values[1..n].iter().sum();
    (0.5 * (values[0] + values[n]) + inner) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn means() {
        let c = GridFunction::constant(0.0, 1.0, 32, 3.0).unwrap();
        assert_eq!(c.mean(), 3.0);
        let cosine = GridFunction::periodic(1.0, 128, |t| (2.0 * PI * t).cos()).unwrap();
        assert!(cosine.mean().abs() < 1e-12);
        let ramp = GridFunction::from_fn(0.0, 1.0, 64, |t| t).unwrap();
        assert!((ramp.mean() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(GridFunction::new(0.0, 1.0, vec![0.0; 10]).is_err());
        let mut v = vec![0.0; 17];
        v[3] = f64::NAN;
        assert!(GridFunction::new(0.0, 1.0, v).is_err());
        assert!(GridFunction::new(0.0, -1.0, vec![0.0; 17]).is_err());
    }

    #[test]
    fn derivatives_are_second_order() {
        let err = |n: usize| {
            let u = GridFunction::periodic(1.0, n, |t| (2.0 * PI * t).sin()).unwrap();
            u.derivative_periodic()
                .iter()
                .zip(u.nodes())
                .fold(0.0f64, |m, (d, t)| m.max((d - 2.0 * PI * (2.0 * PI * t).cos()).abs()))
        };
        let order = (err(64) / err(128)).log2();
        assert!(order > 1.9, "order {order}");

        let err_np = |n: usize| {
            let u = GridFunction::from_fn(1.0, 1.0, n, |t| t * t * t).unwrap();
            u.derivative_nonperiodic()
                .iter()
                .zip(u.nodes())
                .fold(0.0f64, |m, (d, t)| m.max((d - 3.0 * t * t).abs()))
        };
        let order = (err_np(64) / err_np(128)).log2();
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn periodic_helpers() {
        let u = GridFunction::from_periodic_values(2.0, (0..20).map(|k| k as f64).collect()).unwrap();
        assert_eq!(u.cells(), 20);
        assert_eq!(u.values()[20], 0.0);
        assert!(u.is_periodic_class());
        assert_eq!(u.periodic_values().len(), 20);
        assert_eq!(u.step(), 0.1);
    }
}
