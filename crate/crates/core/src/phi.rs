//! Increasing homeomorphisms `phi` of the real line with `phi(0) = 0`.
//!
//! Built-in kinds are the p-Laplacian `|x|^(p-2) x` and the (p,q)-Laplacian
//! `(|x|^(p-2) + |x|^(q-2)) x`. A custom forward map can be supplied together
//! with a bracket hint; its inverse is computed by bracketed bisection.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A scalar map `R -> R` shared between threads.
pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absolute tolerance on `|phi(x) - y|` for the bisection inverse.
pub const ATOL_INV: f64 = 1e-12;

const OVERFLOW_GUARD: f64 = 1e150;

#[derive(Clone)]
pub enum PhiKind {
    PLaplacian { p: f64 },
    PqLaplacian { p: f64, q: f64 },
    /// User supplied forward map. `bracket` is the initial half-width used
    /// when bracketing the inverse.
    Custom { forward: ScalarMap, bracket: f64 },
}

impl fmt::Debug for PhiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiKind::PLaplacian { p } => write!(f, "PLaplacian {{ p: {p} }}"),
            PhiKind::PqLaplacian { p, q } => write!(f, "PqLaplacian {{ p: {p}, q: {q} }}"),
            PhiKind::Custom { bracket, .. } => write!(f, "Custom {{ bracket: {bracket} }}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhiOperator {
    kind: PhiKind,
}

impl PhiOperator {
    pub fn p_laplacian(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidPhi(format!("p-Laplacian needs p > 1, got {p}")));
        }
        Ok(Self { kind: PhiKind::PLaplacian { p } })
    }

    /// The identity map, i.e. the linear operator `u''`.
    pub fn identity() -> Self {
        Self { kind: PhiKind::PLaplacian { p: 2.0 } }
    }

    pub fn pq_laplacian(p: f64, q: f64) -> Result<Self> {
        if !(p.is_finite() && q.is_finite() && 1.0 < p && p < q) {
            return Err(Error::InvalidPhi(format!(
                "(p,q)-Laplacian needs 1 < p < q, got p = {p}, q = {q}"
            )));
        }
        Ok(Self { kind: PhiKind::PqLaplacian { p, q } })
    }

    /// Wraps a user map. Checks `|phi(0)| <= 1e-12`, strict increase on a
    /// sample grid and divergence along `+-10^k`. Global monotonicity is a
    /// hypothesis the caller is responsible for.
    pub fn custom(forward: ScalarMap, bracket: f64) -> Result<Self> {
        let bracket = if bracket.is_finite() && bracket > 0.0 { bracket } else { 1.0 };
        let zero = forward(0.0);
        if !(zero.abs() <= 1e-12) {
            return Err(Error::InvalidPhi(format!("phi(0) = {zero}, expected 0")));
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=4000 {
            let x = -50.0 + 0.025 * i as f64;
            let y = forward(x);
            if !y.is_finite() || y <= prev {
                return Err(Error::InvalidPhi(format!(
                    "custom map is not strictly increasing near x = {x}"
                )));
            }
            prev = y;
        }
        // Growth along |x| = 10^k must not die out geometrically, which rules
        // out bounded maps such as atan.
        let size = |x: f64| forward(x).abs().min(forward(-x).abs());
        let first = size(10.0) - size(1.0);
        let last = size(1e8) - size(1e7);
        if !(first > 0.0 && last >= 1e-3 * first) {
            return Err(Error::InvalidPhi("custom map does not look surjective".into()));
        }
        Ok(Self { kind: PhiKind::Custom { forward, bracket } })
    }

    pub fn kind(&self) -> &PhiKind {
        &self.kind
    }

    /// True when `phi` is the identity, which lets the kernel operator skip
    /// the bisection for its integration constant.
    pub fn is_identity(&self) -> bool {
        matches!(self.kind, PhiKind::PLaplacian { p } if p == 2.0)
    }

    /// True for the built-in kinds, which are odd maps.
    pub fn is_odd(&self) -> bool {
        !matches!(self.kind, PhiKind::Custom { .. })
    }

    #[inline]
    fn forward_unchecked(&self, x: f64) -> f64 {
        match &self.kind {
            PhiKind::PLaplacian { p } => {
                if *p == 2.0 {
                    x
                } else {
                    x.signum() * x.abs().powf(p - 1.0)
                }
            }
            PhiKind::PqLaplacian { p, q } => {
                let a = x.abs();
                if a == 0.0 {
                    0.0
                } else {
                    (a.powf(p - 2.0) + a.powf(q - 2.0)) * x
                }
            }
            PhiKind::Custom { forward, .. } => forward(x),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain { context: "phi_eval", value: x });
        }
        Ok(self.forward_unchecked(x))
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::Domain { context: "phi_inverse", value: y });
        }
        match &self.kind {
            PhiKind::PLaplacian { p } => {
                if *p == 2.0 {
                    Ok(y)
                } else {
                    Ok(y.signum() * y.abs().powf(1.0 / (p - 1.0)))
                }
            }
            PhiKind::PqLaplacian { .. } => self.bisect_inverse(y, 1.0),
            PhiKind::Custom { bracket, .. } => self.bisect_inverse(y, *bracket),
        }
    }

    fn bisect_inverse(&self, y: f64, half_width: f64) -> Result<f64> {
        if y == 0.0 && self.forward_unchecked(0.0) == 0.0 {
            return Ok(0.0);
        }
        let mut lo = -half_width;
        let mut hi = half_width;
        while self.forward_unchecked(hi) < y {
            lo = hi;
            hi *= 2.0;
            if hi > OVERFLOW_GUARD || !self.forward_unchecked(hi).is_finite() {
                return Err(Error::Unbounded { y });
            }
        }
        while self.forward_unchecked(lo) > y {
            hi = lo;
            lo *= 2.0;
            if lo < -OVERFLOW_GUARD || !self.forward_unchecked(lo).is_finite() {
                return Err(Error::Unbounded { y });
            }
        }
        loop {
            let mid = 0.5 * (lo + hi);
            let fm = self.forward_unchecked(mid);
            if (fm - y).abs() <= ATOL_INV || mid <= lo || mid >= hi {
                return Ok(mid);
            }
            if fm < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    /// `x -> -phi(-x)`, the operator seen by the reflected unknown `-u`.
    pub fn reflected(&self) -> Self {
        match &self.kind {
            PhiKind::Custom { forward, bracket } => {
                let f = forward.clone();
                Self {
                    kind: PhiKind::Custom {
                        forward: Arc::new(move |x| -f(-x)),
                        bracket: *bracket,
                    },
                }
            }
            _ => self.clone(),
        }
    }

    /// `K_b = sup_x (b|x| - phi(x) x)`, so that `phi(x) x >= b|x| - K_b`.
    ///
    /// Bounded scan over `|x| <= max(100, 10 phi^-1(10 b))` followed by a
    /// golden-section refinement on either side of the best scan node.
    pub fn coercivity_constant(&self, b: f64) -> Result<f64> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Domain { context: "coercivity_constant", value: b });
        }
        let reach = self.inverse(10.0 * b)?.abs().max(self.inverse(-10.0 * b)?.abs());
        let window = 100f64.max(10.0 * reach);
        let gap = |x: f64| b * x.abs() - self.forward_unchecked(x) * x;

        const SCAN: usize = 20_000;
        let step = 2.0 * window / SCAN as f64;
        let mut best_i = 0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=SCAN {
            let x = -window + step * i as f64;
            let v = gap(x);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        if best_i == 0 || best_i == SCAN {
            return Err(Error::CoercivityFailure { b, window });
        }
        let x_best = -window + step * best_i as f64;
        let left = golden_max(&gap, x_best - step, x_best);
        let right = golden_max(&gap, x_best, x_best + step);
        Ok(best.max(left).max(right).max(0.0))
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc > fd {
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
    f(a).max(f(b)).max(fc).max(fd)
}
