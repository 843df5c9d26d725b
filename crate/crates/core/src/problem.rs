//! Problem instances: periodic Liénard problems in raw or weighted form,
//! their normalization and reflection, and the radial Neumann reduction.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::phi::{PhiOperator, ScalarMap};

/// A map `(t, u) -> R`.
pub type PairMap = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Number of cells used when computing statistics of time data.
const STAT_CELLS: usize = 4096;

/// A function of time, either closed form or sampled.
#[derive(Clone)]
pub enum TimeFunction {
    Constant(f64),
    Map(ScalarMap),
    /// Values at equispaced nodes over `[0, span]`, linearly interpolated.
    Samples { values: Vec<f64>, span: f64 },
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFunction::Constant(c) => write!(f, "Constant({c})"),
            TimeFunction::Map(_) => f.write_str("Map(..)"),
            TimeFunction::Samples { values, span } => {
                write!(f, "Samples {{ len: {}, span: {span} }}", values.len())
            }
        }
    }
}

impl TimeFunction {
    pub fn map(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TimeFunction::Map(Arc::new(f))
    }

    pub fn samples(values: Vec<f64>, span: f64) -> Result<Self> {
        if values.len() < 2 || !(span > 0.0) {
            return Err(Error::InvalidProblem("sampled data needs at least two values and a positive span".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("sampled data contains non-finite values".into()));
        }
        Ok(TimeFunction::Samples { values, span })
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant(c) => *c,
            TimeFunction::Map(f) => f(t),
            TimeFunction::Samples { values, span } => {
                let last = values.len() - 1;
                let x = (t / span * last as f64).clamp(0.0, last as f64);
                let i = (x.floor() as usize).min(last - 1);
                let w = x - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            TimeFunction::Constant(c) => Some(*c),
            _ => None,
        }
    }

    fn nodes(&self, period: f64) -> Vec<f64> {
        (0..=STAT_CELLS)
            .map(|k| self.eval(period * k as f64 / STAT_CELLS as f64))
            .collect()
    }

    /// Trapezoid mean over `[0, period]`.
    pub fn mean(&self, period: f64) -> f64 {
        if let TimeFunction::Constant(c) = self {
            return *c;
        }
        let v = self.nodes(period);
        let inner: f64 = v[1..STAT_CELLS].iter().sum();
        (0.5 * (v[0] + v[STAT_CELLS]) + inner) / STAT_CELLS as f64
    }

    /// `(min, max)` over a sampling of `[0, period]`.
    pub fn range(&self, period: f64) -> (f64, f64) {
        match self {
            TimeFunction::Constant(c) => (*c, *c),
            TimeFunction::Samples { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
            TimeFunction::Map(_) => self
                .nodes(period)
                .into_iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v))),
        }
    }

    /// Trapezoid approximation of `int_0^period |f|`.
    pub fn l1_norm(&self, period: f64) -> f64 {
        if let TimeFunction::Constant(c) = self {
            return c.abs() * period;
        }
        let v = self.nodes(period);
        let inner: f64 = v[1..STAT_CELLS].iter().map(|x| x.abs()).sum();
        (0.5 * (v[0].abs() + v[STAT_CELLS].abs()) + inner) * period / STAT_CELLS as f64
    }
}

/// Extreme values of `q`, either declared or located by a scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QRange {
    pub inf: f64,
    /// Scan point realizing the smallest scanned value.
    pub inf_at: f64,
    /// False when the infimum is only approached along a tail.
    pub inf_attained: bool,
    pub sup: f64,
    pub sup_at: f64,
    pub sup_attained: bool,
}

/// The weighted forcing `a(t) q(u) - e(t)`.
#[derive(Clone)]
pub struct WeightedForcing {
    pub a: TimeFunction,
    pub q: ScalarMap,
    pub e: TimeFunction,
    /// Declared limit of `q` at `-inf`.
    pub omega_minus: f64,
    /// Declared limit of `q` at `+inf`.
    pub omega_plus: f64,
    /// Optional exact `inf q`, overriding the scan.
    pub q_inf: Option<f64>,
    /// Optional exact `sup q`, overriding the scan.
    pub q_sup: Option<f64>,
}

impl fmt::Debug for WeightedForcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightedForcing")
            .field("a", &self.a)
            .field("e", &self.e)
            .field("omega_minus", &self.omega_minus)
            .field("omega_plus", &self.omega_plus)
            .field("q_inf", &self.q_inf)
            .field("q_sup", &self.q_sup)
            .finish_non_exhaustive()
    }
}

/// Scan abscissae: dense on `[-10, 10]`, logarithmic out to `|u| = 1e4`.
fn scan_points() -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=20_000).map(|i| -10.0 + 1e-3 * i as f64).collect();
    for i in 1..=2000 {
        let x = 10f64.powf(1.0 + 3.0 * i as f64 / 2000.0);
        pts.push(x);
        pts.push(-x);
    }
    pts
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

impl WeightedForcing {
    /// Constant-coefficient forcing `q(u)` with `a = 1`, `e = 0`.
    pub fn constant_coefficient(q: ScalarMap, omega_minus: f64, omega_plus: f64) -> Self {
        Self {
            a: TimeFunction::Constant(1.0),
            q,
            e: TimeFunction::Constant(0.0),
            omega_minus,
            omega_plus,
            q_inf: None,
            q_sup: None,
        }
    }

    pub fn min_omega(&self) -> f64 {
        self.omega_minus.min(self.omega_plus)
    }

    pub fn max_omega(&self) -> f64 {
        self.omega_minus.max(self.omega_plus)
    }

    /// Extremes of `q` by scan on `|u| <= 1e4` combined with the declared
    /// tails, with golden-section refinement at interior extrema.
    pub fn q_range(&self) -> QRange {
        let q = &self.q;
        let pts = scan_points();
        let mut lo = (f64::INFINITY, 0.0, 0usize);
        let mut hi = (f64::NEG_INFINITY, 0.0, 0usize);
        for (i, &x) in pts.iter().enumerate() {
            let v = q(x);
            if v < lo.0 {
                lo = (v, x, i);
            }
            if v > hi.0 {
                hi = (v, x, i);
            }
        }
        let refine = |best: (f64, f64, usize), sign: f64| -> (f64, f64) {
            let (v, x, i) = best;
            if i == 0 || i >= 20_000 {
                return (x, v);
            }
            let f = |y: f64| sign * q(y);
            let (xr, fr) = golden_min(&f, pts[i - 1], pts[i + 1]);
            if fr < sign * v {
                (xr, sign * fr)
            } else {
                (x, v)
            }
        };
        let (inf_at, scan_inf) = refine(lo, 1.0);
        let (sup_at, scan_sup) = refine(hi, -1.0);
        let tail_inf = self.min_omega();
        let tail_sup = self.max_omega();
        let tol = 1e-12;
        let inf_attained = scan_inf < tail_inf - tol * (1.0 + scan_inf.abs());
        let sup_attained = scan_sup > tail_sup + tol * (1.0 + scan_sup.abs());
        QRange {
            inf: self.q_inf.unwrap_or(scan_inf.min(tail_inf)),
            inf_at,
            inf_attained,
            sup: self.q_sup.unwrap_or(scan_sup.max(tail_sup)),
            sup_at,
            sup_attained,
        }
    }

    /// Far-field consistency of the declared limits: for finite limits
    /// `|q(+-U) - omega|` must be non-increasing along `U = 1e2, 1e3, 1e4`;
    /// for infinite limits `q(+-U)` must move toward the declared sign.
    pub fn check_limits(&self) -> Result<()> {
        for (sign, omega, label) in [(-1.0, self.omega_minus, "omega_minus"), (1.0, self.omega_plus, "omega_plus")] {
            let probes: Vec<f64> = [1e2, 1e3, 1e4].iter().map(|&u| (self.q)(sign * u)).collect();
            let ok = if omega.is_finite() {
                let d: Vec<f64> = probes.iter().map(|v| (v - omega).abs()).collect();
                d[1] <= d[0] + 1e-12 && d[2] <= d[1] + 1e-12 && d[2] <= 1e-2 * (1.0 + omega.abs())
            } else if omega.is_nan() {
                false
            } else {
                let s = omega.signum();
                s * probes[1] >= s * probes[0] && s * probes[2] >= s * probes[1] && s * probes[2] > s * probes[0]
            };
            if !ok {
                return Err(Error::InvalidProblem(format!(
                    "declared {label} = {omega} is inconsistent with q on the far field: {probes:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
pub enum Forcing {
    Raw(PairMap),
    Weighted(WeightedForcing),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Raw(_) => f.write_str("Raw(..)"),
            Forcing::Weighted(w) => w.fmt(f),
        }
    }
}

/// `(phi(u'))' + f(u) u' + g(t, u) = s` with `T`-periodic boundary conditions.
#[derive(Clone)]
pub struct PeriodicProblem {
    pub period: f64,
    pub phi: PhiOperator,
    pub friction: Option<ScalarMap>,
    pub forcing: Forcing,
    pub s: f64,
}

impl fmt::Debug for PeriodicProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicProblem")
            .field("period", &self.period)
            .field("phi", &self.phi)
            .field("friction", &self.friction.as_ref().map(|_| ".."))
            .field("forcing", &self.forcing)
            .field("s", &self.s)
            .finish()
    }
}

impl PeriodicProblem {
    pub fn new(period: f64, phi: PhiOperator, forcing: Forcing, s: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidProblem(format!("period must be positive, got {period}")));
        }
        if !s.is_finite() {
            return Err(Error::InvalidProblem(format!("parameter s must be finite, got {s}")));
        }
        if let Forcing::Weighted(w) = &forcing {
            let (amin, _) = w.a.range(period);
            if amin < 0.0 {
                return Err(Error::InvalidProblem(format!("weight a takes the negative value {amin}")));
            }
            if !(w.a.mean(period) > 0.0) {
                return Err(Error::InvalidProblem("weight a must have positive mean".into()));
            }
        }
        Ok(Self { period, phi, friction: None, forcing, s })
    }

    pub fn with_friction(mut self, f: ScalarMap) -> Self {
        self.friction = Some(f);
        self
    }

    pub fn with_s(&self, s: f64) -> Self {
        let mut pb = self.clone();
        pb.s = s;
        pb
    }

    pub fn with_phi(mut self, phi: PhiOperator) -> Self {
        self.phi = phi;
        self
    }

    pub fn weighted(&self) -> Option<&WeightedForcing> {
        match &self.forcing {
            Forcing::Weighted(w) => Some(w),
            Forcing::Raw(_) => None,
        }
    }

    /// True when `a` and `e` are constant, so constants solve the problem
    /// exactly at the roots of the forcing.
    pub fn is_constant_coefficient(&self) -> bool {
        match &self.forcing {
            Forcing::Weighted(w) => w.a.as_constant().is_some() && w.e.as_constant().is_some(),
            Forcing::Raw(_) => false,
        }
    }

    #[inline]
    pub fn friction_at(&self, u: f64) -> f64 {
        match &self.friction {
            Some(f) => f(u),
            None => 0.0,
        }
    }

    /// `g(t, u)` without the parameter.
    #[inline]
    pub fn g(&self, t: f64, u: f64) -> f64 {
        match &self.forcing {
            Forcing::Raw(g) => g(t, u),
            Forcing::Weighted(w) => w.a.eval(t) * (w.q)(u) - w.e.eval(t),
        }
    }

    /// `g(t, u) - s`.
    pub fn forcing_eval(&self, t: f64, u: f64) -> Result<f64> {
        if !t.is_finite() || !u.is_finite() {
            return Err(Error::Domain { context: "forcing_eval", value: if t.is_finite() { u } else { t } });
        }
        let v = self.g(t, u) - self.s;
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "forcing", t, u });
        }
        Ok(v)
    }

    /// The mirrored problem of the unknown `-u`: `phi(x) -> -phi(-x)`,
    /// `f(x) -> f(-x)`, `g(t, x) -> -g(t, -x)`, `s -> -s`.
    pub fn reflected(&self) -> Self {
        let forcing = match &self.forcing {
            Forcing::Raw(g) => {
                let g = g.clone();
                Forcing::Raw(Arc::new(move |t, x| -g(t, -x)))
            }
            Forcing::Weighted(w) => {
                let q = w.q.clone();
                let e = match &w.e {
                    TimeFunction::Constant(c) => TimeFunction::Constant(-c),
                    TimeFunction::Samples { values, span } => TimeFunction::Samples {
                        values: values.iter().map(|v| -v).collect(),
                        span: *span,
                    },
                    TimeFunction::Map(m) => {
                        let m = m.clone();
                        TimeFunction::map(move |t| -m(t))
                    }
                };
                Forcing::Weighted(WeightedForcing {
                    a: w.a.clone(),
                    q: Arc::new(move |x| -q(-x)),
                    e,
                    omega_minus: -w.omega_plus,
                    omega_plus: -w.omega_minus,
                    q_inf: w.q_sup.map(|v| -v),
                    q_sup: w.q_inf.map(|v| -v),
                })
            }
        };
        let friction = self.friction.as_ref().map(|f| {
            let f = f.clone();
            Arc::new(move |x: f64| f(-x)) as ScalarMap
        });
        Self {
            period: self.period,
            phi: self.phi.reflected(),
            friction,
            forcing,
            s: -self.s,
        }
    }
}

/// Which extreme of `q` a normalization shift was anchored at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shift {
    /// Nothing to do.
    Identity,
    /// Only the mean of `e` was moved into the parameter.
    MeanOnly,
    /// `q_1 = q - m` with `m = inf q - eps`.
    Lower { m: f64 },
    /// `q_1 = q - m` with `m = sup q + eps`.
    Upper { m: f64 },
}

/// A normalized problem together with the affine parameter map
/// `s' = s + offset`.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub problem: PeriodicProblem,
    pub shift: Shift,
    pub offset: f64,
}

impl Normalized {
    pub fn to_normalized(&self, s: f64) -> f64 {
        s + self.offset
    }

    pub fn to_original(&self, s_prime: f64) -> f64 {
        s_prime - self.offset
    }
}

fn combine_e(w: &WeightedForcing, e_mean: f64, a_mean: f64, m: f64) -> TimeFunction {
    match (w.e.as_constant(), w.a.as_constant()) {
        (Some(_), Some(_)) => TimeFunction::Constant(0.0),
        _ => {
            let a = w.a.clone();
            let e = w.e.clone();
            TimeFunction::map(move |t| e.eval(t) - e_mean - (a.eval(t) - a_mean) * m)
        }
    }
}

/// Shifts a weighted problem to `mean(e) = 0` and, when `q` is bounded below
/// (above), to `min omega > 0` (`max omega < 0`). Equivalent to the original
/// under `s' = s + mean(e) - mean(a) m`.
pub fn normalize_weighted(pb: &PeriodicProblem) -> Result<Normalized> {
    let w = pb
        .weighted()
        .ok_or_else(|| Error::InvalidProblem("normalization needs weighted forcing".into()))?;
    let range = w.q_range();
    let bounded_below = range.inf.is_finite();
    let bounded_above = range.sup.is_finite();
    if !bounded_below && !bounded_above {
        return Err(Error::CannotNormalize);
    }
    let side = if bounded_below {
        (w.min_omega() <= 0.0).then_some(false)
    } else {
        (w.max_omega() >= 0.0).then_some(true)
    };
    match side {
        Some(upper) => normalize_with(pb, upper, &range),
        None => {
            let e_mean = w.e.mean(pb.period);
            if e_mean.abs() <= 1e-10 * (1.0 + w.e.range(pb.period).1.abs()) {
                return Ok(Normalized { problem: pb.clone(), shift: Shift::Identity, offset: 0.0 });
            }
            let mut w1 = w.clone();
            w1.e = combine_e(w, e_mean, 0.0, 0.0);
            let mut problem = pb.clone();
            problem.forcing = Forcing::Weighted(w1);
            problem.s = pb.s + e_mean;
            Ok(Normalized { problem, shift: Shift::MeanOnly, offset: e_mean })
        }
    }
}

/// Normalization anchored at the chosen extreme of `q`, regardless of the
/// sign of the limits. `upper = false` shifts by `inf q - eps`.
pub fn normalize_at(pb: &PeriodicProblem, upper: bool) -> Result<Normalized> {
    let w = pb
        .weighted()
        .ok_or_else(|| Error::InvalidProblem("normalization needs weighted forcing".into()))?;
    normalize_with(pb, upper, &w.q_range())
}

fn normalize_with(pb: &PeriodicProblem, upper: bool, range: &QRange) -> Result<Normalized> {
    let w = pb.weighted().expect("weighted forcing");
    let m = if upper {
        if !range.sup.is_finite() {
            return Err(Error::CannotNormalize);
        }
        range.sup + 1e-3 * (1.0 + range.sup.abs())
    } else {
        if !range.inf.is_finite() {
            return Err(Error::CannotNormalize);
        }
        range.inf - 1e-3 * (1.0 + range.inf.abs())
    };
    let e_mean = w.e.mean(pb.period);
    let a_mean = w.a.mean(pb.period);
    let q = w.q.clone();
    let w1 = WeightedForcing {
        a: w.a.clone(),
        q: Arc::new(move |u| q(u) - m),
        e: combine_e(w, e_mean, a_mean, m),
        omega_minus: w.omega_minus - m,
        omega_plus: w.omega_plus - m,
        q_inf: Some(range.inf - m),
        q_sup: Some(range.sup - m),
    };
    let offset = e_mean - a_mean * m;
    let mut problem = pb.clone();
    problem.forcing = Forcing::Weighted(w1);
    problem.s = pb.s + offset;
    let shift = if upper { Shift::Upper { m } } else { Shift::Lower { m } };
    Ok(Normalized { problem, shift, offset })
}

/// `(zeta(t) phi(u'))' + g(t, u) = p(t) s` on `[a, b]` with `u'(a) = u'(b) = 0`.
#[derive(Clone)]
pub struct NeumannWeightedBVP {
    pub a: f64,
    pub b: f64,
    pub zeta: ScalarMap,
    pub weight: ScalarMap,
    pub phi: PhiOperator,
    pub g: PairMap,
    pub s: f64,
}

impl fmt::Debug for NeumannWeightedBVP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NeumannWeightedBVP")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("phi", &self.phi)
            .field("s", &self.s)
            .finish_non_exhaustive()
    }
}

impl NeumannWeightedBVP {
    pub fn new(a: f64, b: f64, zeta: ScalarMap, weight: ScalarMap, phi: PhiOperator, g: PairMap, s: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidProblem(format!("need a < b, got [{a}, {b}]")));
        }
        for k in 0..=1024 {
            let t = a + (b - a) * k as f64 / 1024.0;
            if !(zeta(t) > 0.0) {
                return Err(Error::InvalidProblem(format!("zeta({t}) = {} is not positive", zeta(t))));
            }
            if !(weight(t) > 0.0) {
                return Err(Error::InvalidProblem(format!("p({t}) = {} is not positive", weight(t))));
            }
        }
        Ok(Self { a, b, zeta, weight, phi, g, s })
    }

    /// `h(t, u) = g(t, u) - p(t) s`.
    #[inline]
    pub fn h(&self, t: f64, u: f64) -> f64 {
        (self.g)(t, u) - (self.weight)(t) * self.s
    }

    pub fn with_s(&self, s: f64) -> Self {
        let mut bvp = self.clone();
        bvp.s = s;
        bvp
    }
}

/// Radial solutions of `div(A(|grad u|) grad u) + G(|x|, u) = s` on the
/// annulus `R_i < |x| < R_e` in `R^N` with homogeneous Neumann data.
#[derive(Clone)]
pub struct RadialNeumannProblem {
    pub dimension: u32,
    pub r_inner: f64,
    pub r_outer: f64,
    pub phi: PhiOperator,
    pub g: PairMap,
    pub s: f64,
}

impl fmt::Debug for RadialNeumannProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialNeumannProblem")
            .field("dimension", &self.dimension)
            .field("r_inner", &self.r_inner)
            .field("r_outer", &self.r_outer)
            .field("phi", &self.phi)
            .field("s", &self.s)
            .finish_non_exhaustive()
    }
}

impl RadialNeumannProblem {
    /// `amplitude = None` means `A = 1`, the Laplacian. Otherwise
    /// `x -> A(|x|) x` must pass the custom homeomorphism checks.
    pub fn new(
        dimension: u32,
        r_inner: f64,
        r_outer: f64,
        amplitude: Option<ScalarMap>,
        g: PairMap,
        s: f64,
    ) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidProblem(format!("dimension must be at least 2, got {dimension}")));
        }
        if !(r_inner > 0.0 && r_inner < r_outer && r_outer.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "need 0 < R_i < R_e, got R_i = {r_inner}, R_e = {r_outer}"
            )));
        }
        let phi = match amplitude {
            None => PhiOperator::identity(),
            Some(amp) => PhiOperator::custom(
                Arc::new(move |x: f64| if x == 0.0 { 0.0 } else { amp(x.abs()) * x }),
                1.0,
            )?,
        };
        Ok(Self { dimension, r_inner, r_outer, phi, g, s })
    }
}

/// The weighted ODE satisfied by radial profiles: `zeta = p = t^(N-1)` and
/// `g(t, u) = t^(N-1) G(t, u)` on `[R_i, R_e]`.
pub fn reduce_radial(rp: &RadialNeumannProblem) -> NeumannWeightedBVP {
    let k = (rp.dimension - 1) as i32;
    let g = rp.g.clone();
    NeumannWeightedBVP {
        a: rp.r_inner,
        b: rp.r_outer,
        zeta: Arc::new(move |t: f64| t.powi(k)),
        weight: Arc::new(move |t: f64| t.powi(k)),
        phi: rp.phi.clone(),
        g: Arc::new(move |t, u| t.powi(k) * g(t, u)),
        s: rp.s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian() -> PeriodicProblem {
        let w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| (-u * u).exp()), 0.0, 0.0);
        PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Weighted(w), 0.5).unwrap()
    }

    #[test]
    fn forcing_eval_examples() {
        let raw = PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Raw(Arc::new(|_, u| u)), 0.0).unwrap();
        assert_eq!(raw.forcing_eval(0.3, 2.0).unwrap(), 2.0);
        assert_eq!(gaussian().forcing_eval(0.1, 0.0).unwrap(), 0.5);
        let w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u.abs()), f64::INFINITY, f64::INFINITY);
        let abs = PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Weighted(w), 1.0).unwrap();
        assert_eq!(abs.forcing_eval(0.0, -1.0).unwrap(), 0.0);
        assert!(abs.forcing_eval(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        let mut w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u), -1.0, 1.0);
        w.a = TimeFunction::map(|t| (2.0 * PI * t).cos());
        assert!(PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Weighted(w), 0.0).is_err());
    }

    #[test]
    fn sampled_time_function_interpolates() {
        let f = TimeFunction::samples(vec![0.0, 2.0, 4.0], 1.0).unwrap();
        assert!((f.eval(0.25) - 1.0).abs() < 1e-15);
        assert!((f.eval(1.0) - 4.0).abs() < 1e-15);
        assert!((f.mean(1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn q_range_of_sign_changing_gaussian() {
        let w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u * (-u * u).exp()), 0.0, 0.0);
        let r = w.q_range();
        let m = (2.0 * std::f64::consts::E).powf(-0.5);
        assert!((r.inf + m).abs() < 1e-12);
        assert!((r.sup - m).abs() < 1e-12);
        assert!((r.inf_at + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(r.inf_attained && r.sup_attained);
    }

    #[test]
    fn limit_consistency_check() {
        let ok = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u.atan()), -PI / 2.0, PI / 2.0);
        assert!(ok.check_limits().is_ok());
        let bad = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u.atan()), 0.0, PI / 2.0);
        assert!(bad.check_limits().is_err());
    }

    #[test]
    fn normalization_shift_and_back_map() {
        let w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u * (-u * u).exp()), 0.0, 0.0);
        let pb = PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Weighted(w), 0.1).unwrap();
        let n = normalize_weighted(&pb).unwrap();
        let min_q = -(2.0 * std::f64::consts::E).powf(-0.5);
        let eps = 1e-3 * (1.0 + min_q.abs());
        match n.shift {
            Shift::Lower { m } => assert!((m - (min_q - eps)).abs() < 1e-12),
            other => panic!("unexpected shift {other:?}"),
        }
        assert!((n.problem.s - (0.1 - (min_q - eps))).abs() < 1e-12);
        let w1 = n.problem.weighted().unwrap();
        assert!(w1.min_omega() > 0.0);
        for s in [-3.0, 0.0, 0.123456789, 7.5] {
            assert!((n.to_original(n.to_normalized(s)) - s).abs() <= 1e-14);
        }
        for u in [-2.0, -0.3, 0.0, 1.7] {
            for t in [0.0, 0.4] {
                assert!((pb.forcing_eval(t, u).unwrap() - n.problem.forcing_eval(t, u).unwrap()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u * (-u * u).exp()), 0.0, 0.0);
        w.a = TimeFunction::map(|t| 1.0 + 0.5 * (2.0 * PI * t).cos());
        w.e = TimeFunction::map(|t| 0.3 + (2.0 * PI * t).sin());
        let pb = PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Weighted(w), 0.2).unwrap();
        let once = normalize_weighted(&pb).unwrap();
        let twice = normalize_weighted(&once.problem).unwrap();
        assert_eq!(twice.shift, Shift::Identity);
        assert!((once.problem.s - twice.problem.s).abs() <= 1e-12);
        for k in 0..50 {
            let t = k as f64 / 50.0;
            let u = -3.0 + 6.0 * k as f64 / 49.0;
            let a = once.problem.forcing_eval(t, u).unwrap();
            let b = twice.problem.forcing_eval(t, u).unwrap();
            assert!((a - b).abs() <= 1e-12);
            assert!((a - pb.forcing_eval(t, u).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalization_identity_and_errors() {
        let w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u.abs()), f64::INFINITY, f64::INFINITY);
        let pb = PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Weighted(w), 0.0).unwrap();
        assert_eq!(normalize_weighted(&pb).unwrap().shift, Shift::Identity);

        let mut w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u.abs()), f64::INFINITY, f64::INFINITY);
        w.e = TimeFunction::map(|t| (2.0 * PI * t).cos());
        let pb = PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Weighted(w), 0.0).unwrap();
        let n = normalize_weighted(&pb).unwrap();
        assert_eq!(n.shift, Shift::Identity);
        assert!((n.problem.weighted().unwrap().e.eval(0.0) - 1.0).abs() < 1e-15);

        let w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u * u * u), f64::NEG_INFINITY, f64::INFINITY);
        let pb = PeriodicProblem::new(1.0, PhiOperator::identity(), Forcing::Weighted(w), 0.0).unwrap();
        assert!(matches!(normalize_weighted(&pb), Err(Error::CannotNormalize)));
    }

    #[test]
    fn reflection_is_an_involution_on_values() {
        let mut w = WeightedForcing::constant_coefficient(Arc::new(|u: f64| u * (-u * u).exp()), 0.0, 0.0);
        w.e = TimeFunction::map(|t| (2.0 * PI * t).sin());
        let pb = PeriodicProblem::new(1.0, PhiOperator::p_laplacian(3.0).unwrap(), Forcing::Weighted(w), 0.2)
            .unwrap()
            .with_friction(Arc::new(|u: f64| 1.0 + u));
        let r = pb.reflected();
        assert_eq!(r.s, -0.2);
        for (t, u) in [(0.1, 0.5), (0.7, -1.2)] {
            assert!((r.forcing_eval(t, -u).unwrap() + pb.forcing_eval(t, u).unwrap()).abs() < 1e-15);
            assert_eq!(r.friction_at(-u), pb.friction_at(u));
        }
        let rr = r.reflected();
        assert!((rr.forcing_eval(0.3, 0.8).unwrap() - pb.forcing_eval(0.3, 0.8).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn radial_reduction() {
        let rp = RadialNeumannProblem::new(2, 1.0, 2.0, None, Arc::new(|_, u| u * u), 4.0).unwrap();
        let bvp = reduce_radial(&rp);
        assert_eq!((bvp.a, bvp.b), (1.0, 2.0));
        assert_eq!((bvp.zeta)(1.5), 1.5);
        for c in [2.0, -2.0] {
            for t in [1.0, 1.3, 2.0] {
                assert!(bvp.h(t, c).abs() < 1e-14);
            }
        }
        let rp3 = RadialNeumannProblem::new(3, 1.0, 3.0, None, Arc::new(|_, u| u), 0.0).unwrap();
        assert_eq!((reduce_radial(&rp3).zeta)(2.0), 4.0);
        assert!(RadialNeumannProblem::new(1, 1.0, 2.0, None, Arc::new(|_, u| u), 0.0).is_err());
        assert!(RadialNeumannProblem::new(2, 2.0, 1.0, None, Arc::new(|_, u| u), 0.0).is_err());
    }

    #[test]
    fn radial_custom_amplitude() {
        let amp: ScalarMap = Arc::new(|r: f64| 1.0 + r * r);
        let rp = RadialNeumannProblem::new(2, 1.0, 2.0, Some(amp), Arc::new(|_, u| u), 0.0).unwrap();
        assert!((rp.phi.eval(2.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((rp.phi.eval(-2.0).unwrap() + 10.0).abs() < 1e-12);
    }
}
