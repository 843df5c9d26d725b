//! Bundled weighted examples with `a = 1`, `e = 0`, `f = 0`, `T = 1` and the
//! linear operator `u''`.

use std::f64::consts::{FRAC_PI_2, E};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::phi::{PhiOperator, ScalarMap};
use crate::problem::{Forcing, PeriodicProblem, WeightedForcing};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExampleName {
    /// `q(u) = |u|`.
    Ex41,
    /// `q(u) = exp(-u^2)`.
    Ex42,
    /// `q(u) = (e^u + 1) u^2 / (u^2 + 1)`.
    Ex43,
    /// `q(u) = u exp(-u^2)`.
    Ex44,
    /// A rational-Gaussian blend with limits `-1` at both ends.
    Ex45,
    /// `q(u) = u^3`.
    Ex46a,
    /// `q(u) = atan(u)`.
    Ex46b,
}

impl ExampleName {
    pub const ALL: [ExampleName; 7] = [
        ExampleName::Ex41,
        ExampleName::Ex42,
        ExampleName::Ex43,
        ExampleName::Ex44,
        ExampleName::Ex45,
        ExampleName::Ex46a,
        ExampleName::Ex46b,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleName::Ex41 => "ex41",
            ExampleName::Ex42 => "ex42",
            ExampleName::Ex43 => "ex43",
            ExampleName::Ex44 => "ex44",
            ExampleName::Ex45 => "ex45",
            ExampleName::Ex46a => "ex46a",
            ExampleName::Ex46b => "ex46b",
        }
    }
}

impl fmt::Display for ExampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExampleName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownExample(s.to_string()))
    }
}

/// `q` of the double-threshold example.
pub fn ex45_q(u: f64) -> f64 {
    let u2 = u * u;
    let u4 = u2 * u2;
    let u6 = u4 * u2;
    let g = (-u2).exp();
    (g + 2.0) * (u6 - u4 - u2 + 1.0) / (u6 + 1.0) + 5.0 * g - 3.0
}

fn ex43_q(u: f64) -> f64 {
    if u > 700.0 {
        return u.exp();
    }
    (u.exp() + 1.0) * u * u / (u * u + 1.0)
}

/// The weighted forcing of an example with `a = 1`, `e = 0`.
pub fn example_forcing(name: ExampleName) -> WeightedForcing {
    let inf = f64::INFINITY;
    let (q, om, op, q_inf, q_sup): (ScalarMap, f64, f64, Option<f64>, Option<f64>) = match name {
        ExampleName::Ex41 => (Arc::new(|u: f64| u.abs()), inf, inf, Some(0.0), Some(inf)),
        ExampleName::Ex42 => (Arc::new(|u: f64| (-u * u).exp()), 0.0, 0.0, Some(0.0), Some(1.0)),
        ExampleName::Ex43 => (Arc::new(ex43_q), 1.0, inf, Some(0.0), Some(inf)),
        ExampleName::Ex44 => {
            let m = (2.0 * E).powf(-0.5);
            (Arc::new(|u: f64| u * (-u * u).exp()), 0.0, 0.0, Some(-m), Some(m))
        }
        ExampleName::Ex45 => (Arc::new(ex45_q), -1.0, -1.0, None, Some(5.0)),
        ExampleName::Ex46a => (Arc::new(|u: f64| u * u * u), -inf, inf, Some(-inf), Some(inf)),
        ExampleName::Ex46b => (Arc::new(|u: f64| u.atan()), -FRAC_PI_2, FRAC_PI_2, Some(-FRAC_PI_2), Some(FRAC_PI_2)),
    };
    let mut w = WeightedForcing::constant_coefficient(q, om, op);
    w.q_inf = q_inf;
    w.q_sup = q_sup;
    w
}

/// The example problem at `s = 0`; every field can be overridden afterwards.
pub fn load_example(name: ExampleName) -> PeriodicProblem {
    PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Weighted(example_forcing(name)), 0.0)
        .expect("bundled examples are valid")
}

/// `u'' + u = s + forcing(t)` with `T = 1`.
pub fn linear(forcing: impl Fn(f64) -> f64 + Send + Sync + 'static) -> PeriodicProblem {
    PeriodicProblem::new(
        1.0,
        PhiOperator::identity(),
        Forcing::Raw(Arc::new(move |t, u| u - forcing(t))),
        0.0,
    )
    .expect("linear fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_values() {
        let q = |n| example_forcing(n).q;
        assert_eq!(q(ExampleName::Ex42)(0.0), 1.0);
        assert_eq!(q(ExampleName::Ex41)(-3.0), 3.0);
        let w = example_forcing(ExampleName::Ex45);
        assert_eq!((w.omega_minus, w.omega_plus), (-1.0, -1.0));
        assert_eq!(ex45_q(0.0), 5.0);
    }

    #[test]
    fn parse_names() {
        for n in ExampleName::ALL {
            assert_eq!(n.as_str().parse::<ExampleName>().unwrap(), n);
        }
        assert!(matches!("ex47".parse::<ExampleName>(), Err(Error::UnknownExample(_))));
    }

    #[test]
    fn declared_limits_match_far_field() {
        for n in ExampleName::ALL {
            example_forcing(n).check_limits().unwrap_or_else(|e| panic!("{n}: {e}"));
        }
    }

    #[test]
    fn ex45_limits_and_extrema() {
        // The tails approach -1 from below.
        for u in [10.0, 100.0, 1000.0] {
            assert!(ex45_q(u) < -1.0 && ex45_q(-u) < -1.0);
            assert!((ex45_q(u) + 1.0).abs() < 3.0 / (u * u));
        }
        let r = example_forcing(ExampleName::Ex45).q_range();
        assert_eq!(r.sup, 5.0);
        assert!(r.inf < -1.6 && r.inf > -1.62, "inf q = {}", r.inf);
        assert!((r.inf_at.abs() - 1.439).abs() < 1e-2);
    }
}
