//! Parameter sweeps in `s`: multi-start solution counts, threshold
//! localization by bisection, pseudo-arclength branch tracing and the
//! window checks of the alternatives.

use std::f64::consts::PI;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    apriori_bounds, averaged_map, estimate_sigma_stars_with, ext_real, ext_real_opt, DegreeWindow, Family, HypothesisReport,
    WindowEdge,
};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::operators::OperatorWorkspace;
use crate::problem::PeriodicProblem;
use crate::solver::{constant_guess, dedup_solutions, periodic_map, solve_fixed_point, Solution, SolveOptions};

/// Initial guesses for the multi-start solves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartPolicy {
    /// Constants are spread over `[-m, m]`.
    pub m: f64,
    /// Number of constant starts.
    pub k: usize,
    /// Reuse solutions of neighbouring samples as extra starts.
    pub warm: bool,
    /// Relative amplitude of the random perturbation added to warm starts.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for StartPolicy {
    fn default() -> Self {
        Self { m: 10.0, k: 21, warm: true, jitter: 1e-3, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub s_min: f64,
    pub s_max: f64,
    pub n_samples: usize,
    pub starts: StartPolicy,
    pub solve_opts: SolveOptions,
    /// Bisection tolerance; `1e-4 (1 + |s_max - s_min|)` when unset.
    pub tol_s0: Option<f64>,
}

impl SweepPlan {
    pub fn new(s_min: f64, s_max: f64, n_samples: usize) -> Result<Self> {
        let plan = Self {
            s_min,
            s_max,
            n_samples,
            starts: StartPolicy::default(),
            solve_opts: SolveOptions { n: 64, ..SolveOptions::default() },
            tol_s0: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Plan whose start range covers the tail distance of the hypothesis
    /// probes: `m = max(10, 2 d)`.
    pub fn for_problem(pb: &PeriodicProblem, s_min: f64, s_max: f64, n_samples: usize) -> Result<Self> {
        let mut plan = Self::new(s_min, s_max, n_samples)?;
        let report = estimate_sigma_stars_with(pb, &plan.solve_opts);
        plan.starts.m = 10f64.max(2.0 * report.tail_d.unwrap_or(0.0));
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_min < self.s_max) || !self.s_min.is_finite() || !self.s_max.is_finite() {
            return Err(Error::Config(format!("need s_min < s_max, got [{}, {}]", self.s_min, self.s_max)));
        }
        if self.n_samples < 2 {
            return Err(Error::Config("a sweep needs at least two samples".into()));
        }
        if self.starts.k < 3 {
            return Err(Error::Config(format!("need at least three constant starts, got {}", self.starts.k)));
        }
        if !(self.starts.m > 0.0 && self.starts.m.is_finite()) {
            return Err(Error::Config(format!("start range must be positive, got {}", self.starts.m)));
        }
        if !(self.starts.jitter >= 0.0) {
            return Err(Error::Config("jitter must be non-negative".into()));
        }
        if let Some(t) = self.tol_s0 {
            if !(t > 0.0) {
                return Err(Error::Config(format!("tol_s0 must be positive, got {t}")));
            }
        }
        self.solve_opts.validate()
    }

    pub fn tol_s0(&self) -> f64 {
        self.tol_s0.unwrap_or(1e-4 * (1.0 + (self.s_max - self.s_min).abs()))
    }

    pub fn samples(&self) -> Vec<f64> {
        let n = self.n_samples - 1;
        (0..=n)
            .map(|i| if i == n { self.s_max } else { self.s_min + (self.s_max - self.s_min) * i as f64 / n as f64 })
            .collect()
    }

    pub fn constant_starts(&self) -> Vec<f64> {
        let k = self.starts.k - 1;
        let m = self.starts.m;
        (0..=k).map(|i| -m + 2.0 * m * i as f64 / k as f64).collect()
    }
}

/// Distinct converged solutions from the constant starts of `plan`.
/// The count is a lower bound on the number of periodic solutions.
pub fn count_solutions(pb: &PeriodicProblem, s: f64, plan: &SweepPlan) -> Result<(usize, Vec<Solution>)> {
    count_solutions_warm(pb, s, plan, &[])
}

/// As [`count_solutions`] with extra starts, perturbed by a seeded jitter.
pub fn count_solutions_warm(
    pb: &PeriodicProblem,
    s: f64,
    plan: &SweepPlan,
    warm: &[GridFunction],
) -> Result<(usize, Vec<Solution>)> {
    plan.validate()?;
    let pb_s = pb.with_s(s);
    let opts = plan.solve_opts;
    let mut starts: Vec<GridFunction> = plan
        .constant_starts()
        .into_iter()
        .map(|c| constant_guess(&pb_s, &opts, c))
        .collect::<Result<_>>()?;
    if plan.starts.warm {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.starts.seed ^ s.to_bits());
        for w in warm.iter().filter(|w| w.cells() == opts.n) {
            starts.push(w.clone());
            if plan.starts.jitter > 0.0 {
                let amp = plan.starts.jitter * (1.0 + w.max_abs());
                let phase = rng.gen::<f64>() * 2.0 * PI;
                let shift = rng.gen::<f64>() - 0.5;
                let values: Vec<f64> = (0..opts.n)
                    .map(|k| {
                        let t = k as f64 / opts.n as f64;
                        w.values()[k] + amp * (shift + (2.0 * PI * t + phase).cos())
                    })
                    .collect();
                starts.push(GridFunction::from_periodic_values(pb.period, values)?);
            }
        }
    }
    let results: Vec<Solution> = starts
        .par_iter()
        .map(|u0| solve_fixed_point(&pb_s, u0, &opts))
        .collect::<Result<Vec<_>>>()?;
    let sols: Vec<Solution> =
        dedup_solutions(results).into_iter().filter(|x| !flat_on_constants(&pb_s, x, &opts)).collect();
    debug!("s = {s}: {} distinct solutions", sols.len());
    Ok((sols.len(), sols))
}

/// A solution whose mean sits where the averaged forcing is flat to within
/// the solver tolerance, as on a vanishing tail of `g`.
pub(crate) fn flat_on_constants(pb: &PeriodicProblem, sol: &Solution, opts: &SolveOptions) -> bool {
    let xi = sol.mean_value;
    let d = 1e-3 * (1.0 + xi.abs());
    let level = 1e2 * opts.tol_fix * (1.0 + pb.s.abs());
    averaged_map(pb, xi - d).abs().max(averaged_map(pb, xi + d).abs()) <= level
}

/// Solutions found at one sample of a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SampleResult {
    pub s: f64,
    pub solutions: Vec<Solution>,
}

impl SampleResult {
    pub fn count(&self) -> usize {
        self.solutions.len()
    }
}

/// Counts on the sample grid of `plan`, each sample warm-started from the
/// previous one. Samples with no solutions inside a solvable block are
/// retried from both neighbours.
pub fn sweep(pb: &PeriodicProblem, plan: &SweepPlan) -> Result<Vec<SampleResult>> {
    plan.validate()?;
    let mut out: Vec<SampleResult> = Vec::with_capacity(plan.n_samples);
    let mut warm: Vec<GridFunction> = Vec::new();
    for s in plan.samples() {
        let (_, sols) = count_solutions_warm(pb, s, plan, &warm)?;
        warm = sols.iter().map(|x| x.u.clone()).collect();
        out.push(SampleResult { s, solutions: sols });
    }
    for i in (0..out.len()).rev() {
        let (_, sols) = {
            let mut warm: Vec<GridFunction> = Vec::new();
            if i + 1 < out.len() {
                warm.extend(out[i + 1].solutions.iter().map(|x| x.u.clone()));
            }
            if i > 0 {
                warm.extend(out[i - 1].solutions.iter().map(|x| x.u.clone()));
            }
            if warm.is_empty() {
                continue;
            }
            let mut found = count_solutions_warm(pb, out[i].s, plan, &warm)?;
            let merged = dedup_solutions(found.1.drain(..).chain(out[i].solutions.drain(..)));
            (merged.len(), merged)
        };
        out[i].solutions = sols;
    }
    Ok(out)
}

/// Which side of the solvable set a threshold bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSide {
    /// No solutions below, solutions above.
    Lower,
    /// Solutions below, none above.
    Upper,
}

#[derive(Clone, Debug, Serialize)]
pub struct Threshold {
    pub side: ThresholdSide,
    /// Bracket midpoint.
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub refined: bool,
    pub bisection_steps: usize,
    /// Where the bracket end points came from.
    pub origin: String,
    pub witness_s: f64,
    pub witness: Option<Solution>,
}

impl Threshold {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CountSample {
    pub s: f64,
    pub count: usize,
    pub means: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundCertificate {
    pub s: f64,
    #[serde(serialize_with = "ext_real")]
    pub k0: f64,
    #[serde(serialize_with = "ext_real")]
    pub k1: f64,
    /// Largest observed `max u - min u` and `|u'|` among the solutions.
    pub oscillation: f64,
    pub slope: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdReport {
    pub family: Family,
    /// `AP`, `BM` or `AP+BM`.
    pub pattern: String,
    /// Lower threshold for type I and mixed families, upper for type II.
    pub s0: Threshold,
    /// Upper threshold of a mixed family.
    pub s1: Option<Threshold>,
    pub tol_s0: f64,
    pub counts: Vec<CountSample>,
    pub window_checks: Vec<DegreeWindow>,
    pub bound_certificates: Vec<BoundCertificate>,
    pub hypotheses: HypothesisReport,
    /// Samples outside a single contiguous solvable block.
    pub consistent: bool,
    pub violations: Vec<String>,
}

struct Bisector<'a> {
    pb: &'a PeriodicProblem,
    plan: &'a SweepPlan,
    tol: f64,
    extra: Vec<SampleResult>,
}

impl Bisector<'_> {
    fn count(&mut self, s: f64, warm: &[GridFunction]) -> Result<Vec<Solution>> {
        let (_, sols) = count_solutions_warm(self.pb, s, self.plan, warm)?;
        self.extra.push(SampleResult { s, solutions: sols.clone() });
        Ok(sols)
    }

    /// Bisects between a solvable `yes` and an unsolvable `no`.
    fn run(&mut self, side: ThresholdSide, yes: (f64, Vec<Solution>), no: f64, origin: String) -> Result<Threshold> {
        let (mut ys, mut ysols) = yes;
        let mut ns = no;
        let mut steps = 0;
        let limit = ((ys - ns).abs() / self.tol).log2().ceil().max(0.0) as usize + 8;
        while (ys - ns).abs() > self.tol && steps < limit {
            steps += 1;
            let mid = 0.5 * (ys + ns);
            let warm: Vec<GridFunction> = ysols.iter().map(|x| x.u.clone()).collect();
            let sols = self.count(mid, &warm)?;
            if sols.is_empty() {
                ns = mid;
            } else {
                ys = mid;
                ysols = sols;
            }
        }
        let (lo, hi) = if ys < ns { (ys, ns) } else { (ns, ys) };
        let mid = 0.5 * (lo + hi);
        let warm: Vec<GridFunction> = ysols.iter().map(|x| x.u.clone()).collect();
        let at_mid = self.count(mid, &warm)?;
        let (witness_s, witness) = match at_mid.into_iter().next() {
            Some(w) => (mid, Some(w)),
            None => (ys, ysols.into_iter().next()),
        };
        info!("threshold ({side:?}) in [{lo}, {hi}] after {steps} bisection steps");
        Ok(Threshold { side, value: mid, lo, hi, refined: true, bisection_steps: steps, origin, witness_s, witness })
    }

    /// Walks away from `from` in direction `dir` until the count vanishes.
    fn expand_to_empty(&mut self, from: f64, dir: f64, warm: &[GridFunction]) -> Result<Option<f64>> {
        let mut step = (self.plan.s_max - self.plan.s_min).abs().max(1.0);
        let mut s = from;
        let mut warm = warm.to_vec();
        for _ in 0..12 {
            s += dir * step;
            let sols = self.count(s, &warm)?;
            if sols.is_empty() {
                return Ok(Some(s));
            }
            warm = sols.iter().map(|x| x.u.clone()).collect();
            step *= 2.0;
        }
        Ok(None)
    }
}

/// Theory probe with solutions guaranteed: inside `]g0, sigma*[` for the
/// lower threshold, inside `]nu*, g0[` for the upper one.
fn theory_yes_probe(h: &HypothesisReport, side: ThresholdSide) -> Option<f64> {
    match side {
        ThresholdSide::Lower => {
            let g0 = h.h2_pair.as_ref()?.g0;
            let top = h.sigma_star?;
            (top > g0).then(|| g0 + 0.5 * (top - g0).min(1.0 + g0.abs()))
        }
        ThresholdSide::Upper => {
            let g0 = h.h2_pair_ii.as_ref()?.g0;
            let bottom = h.nu_star?;
            (bottom < g0).then(|| g0 - 0.5 * (g0 - bottom).min(1.0 + g0.abs()))
        }
    }
}

/// Locates the thresholds of a classified problem.
pub fn find_threshold(pb: &PeriodicProblem, plan: &SweepPlan) -> Result<ThresholdReport> {
    plan.validate()?;
    let hyp = estimate_sigma_stars_with(pb, &plan.solve_opts);
    if hyp.family == Family::Neither {
        return Err(Error::UnsupportedFamily);
    }
    let tol = plan.tol_s0();
    let mut samples = sweep(pb, plan)?;
    let yes: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].count() > 0).collect();
    let contiguous = yes.windows(2).all(|w| w[1] == w[0] + 1);
    let mut violations = Vec::new();
    if !contiguous {
        violations.push(format!(
            "solvable samples are not contiguous: {:?}",
            samples.iter().map(|r| r.count()).collect::<Vec<_>>()
        ));
    }
    let mut bis = Bisector { pb, plan, tol, extra: Vec::new() };

    let locate = |side: ThresholdSide, bis: &mut Bisector| -> Result<Threshold> {
        let as_warm = |r: &SampleResult| r.solutions.iter().map(|x| x.u.clone()).collect::<Vec<_>>();
        let (edge, neighbour) = match side {
            ThresholdSide::Lower => (yes.first().copied(), yes.first().and_then(|&i| i.checked_sub(1))),
            ThresholdSide::Upper => (yes.last().copied(), yes.last().map(|&i| i + 1).filter(|&j| j < samples.len())),
        };
        let yes_end = match edge {
            Some(i) => (samples[i].s, samples[i].solutions.clone(), "sweep".to_string()),
            None => {
                let s = theory_yes_probe(&hyp, side).ok_or_else(|| {
                    Error::Precondition("no solvable sample and no theory probe available".into())
                })?;
                let sols = bis.count(s, &[])?;
                if sols.is_empty() {
                    return Err(Error::Precondition(format!("no solutions found at the theory probe s = {s}")));
                }
                (s, sols, "theory probe".to_string())
            }
        };
        let unrefined = |lo: f64, hi: f64, origin: String, yes_end: (f64, Vec<Solution>)| Threshold {
            side,
            value: 0.5 * (lo + hi),
            lo,
            hi,
            refined: false,
            bisection_steps: 0,
            origin,
            witness_s: yes_end.0,
            witness: yes_end.1.into_iter().next(),
        };
        let dir = if side == ThresholdSide::Lower { -1.0 } else { 1.0 };
        let no_end = match neighbour {
            Some(j) => Some((samples[j].s, format!("{} / sweep", yes_end.2))),
            None => {
                let bound = match side {
                    ThresholdSide::Lower => hyp.level_floor,
                    ThresholdSide::Upper => hyp.level_ceiling,
                };
                let mut found = None;
                if let Some(b) = bound {
                    let s = b + dir * 1e-2 * (1.0 + b.abs());
                    if dir * (s - yes_end.0) > 0.0 && bis.count(s, &[])?.is_empty() {
                        found = Some((s, format!("{} / mean-identity bound", yes_end.2)));
                    }
                }
                if found.is_none() {
                    let warm = edge.map(|i| as_warm(&samples[i])).unwrap_or_default();
                    found = bis
                        .expand_to_empty(yes_end.0, dir, &warm)?
                        .map(|s| (s, format!("{} / expansion", yes_end.2)));
                }
                found
            }
        };
        match no_end {
            Some((ns, origin)) if contiguous => bis.run(side, (yes_end.0, yes_end.1), ns, origin),
            Some((ns, origin)) => {
                let (lo, hi) = if ns < yes_end.0 { (ns, yes_end.0) } else { (yes_end.0, ns) };
                Ok(unrefined(lo, hi, origin, (yes_end.0, yes_end.1)))
            }
            None => Err(Error::Precondition(format!("no unsolvable parameter found beyond s = {}", yes_end.0))),
        }
    };

    let (s0, s1, pattern) = match hyp.family {
        Family::TypeI => (locate(ThresholdSide::Lower, &mut bis)?, None, "AP"),
        Family::TypeII => (locate(ThresholdSide::Upper, &mut bis)?, None, "BM"),
        Family::Mixed => {
            let lo = locate(ThresholdSide::Lower, &mut bis)?;
            let hi = locate(ThresholdSide::Upper, &mut bis)?;
            (lo, Some(hi), "AP+BM")
        }
        Family::Neither => unreachable!(),
    };
    samples.extend(bis.extra);
    samples.sort_by(|a, b| a.s.total_cmp(&b.s));
    samples.dedup_by(|a, b| a.s == b.s);

    let lower = if s0.side == ThresholdSide::Lower { Some(&s0) } else { None };
    let upper = match (&s1, s0.side) {
        (Some(t), _) => Some(t),
        (None, ThresholdSide::Upper) => Some(&s0),
        _ => None,
    };
    for r in &samples {
        let c = r.count();
        if let Some(t) = lower {
            if r.s < t.lo - tol && c > 0 {
                violations.push(format!("{c} solutions at s = {} below the lower threshold", r.s));
            }
            if let Some(top) = hyp.sigma_star_star {
                if r.s > t.hi + tol && r.s < top && c < 2 {
                    violations.push(format!("only {c} solutions at s = {} inside ]s0, sigma**[", r.s));
                }
            }
        }
        if let Some(t) = upper {
            if r.s > t.hi + tol && c > 0 {
                violations.push(format!("{c} solutions at s = {} above the upper threshold", r.s));
            }
            if let Some(bottom) = hyp.nu_star_star {
                if r.s < t.lo - tol && r.s > bottom && c < 2 {
                    violations.push(format!("only {c} solutions at s = {} inside ]nu**, s0[", r.s));
                }
            }
        }
    }

    let mut bound_certificates = Vec::new();
    for r in &samples {
        let (k0, k1) = match apriori_bounds(&pb.with_s(r.s)) {
            Ok(b) => (b.k0, b.k1),
            Err(e) => {
                debug!("no a-priori bounds at s = {}: {e}", r.s);
                (f64::INFINITY, f64::INFINITY)
            }
        };
        let oscillation = r.solutions.iter().map(|x| x.u.oscillation()).fold(0.0, f64::max);
        let slope = r.solutions.iter().map(|x| x.max_slope()).fold(0.0, f64::max);
        let holds = oscillation <= k0 && slope <= k1 + bound_slack(k1);
        if !holds {
            violations.push(format!("a-priori bounds violated at s = {}", r.s));
        }
        bound_certificates.push(BoundCertificate { s: r.s, k0, k1, oscillation, slope, holds });
    }

    let mut window_checks = Vec::new();
    let k_of = |s: f64| apriori_bounds(&pb.with_s(s)).map(|b| b.k1 + 1.0).unwrap_or(f64::INFINITY);
    let reach = plan.starts.m;
    if let (Some(t), Some(pair)) = (lower, hyp.h2_pair.as_ref()) {
        let top = hyp.sigma_star_star.unwrap_or(f64::INFINITY);
        for r in samples.iter().filter(|r| r.s > t.hi.max(pair.g0) && r.s < top).take(3) {
            let pb_s = pb.with_s(r.s);
            let upper_edge = WindowEdge::Level(pair.u0);
            if let Ok(w) = DegreeWindow::new(&pb_s, WindowEdge::Level(-reach), upper_edge, k_of(r.s)) {
                window_checks.push(w);
            }
        }
    }
    if let (Some(t), Some(pair)) = (upper, hyp.h2_pair_ii.as_ref()) {
        let bottom = hyp.nu_star_star.unwrap_or(f64::NEG_INFINITY);
        for r in samples.iter().filter(|r| r.s < t.lo.min(pair.g0) && r.s > bottom).take(3) {
            let pb_s = pb.with_s(r.s);
            let lower_edge = WindowEdge::Level(pair.u0);
            if let Ok(w) = DegreeWindow::new(&pb_s, lower_edge, WindowEdge::Level(reach), k_of(r.s)) {
                window_checks.push(w);
            }
        }
    }
    if !violations.is_empty() {
        warn!("threshold report has {} violations", violations.len());
    }
    Ok(ThresholdReport {
        family: hyp.family,
        pattern: pattern.to_string(),
        s0,
        s1,
        tol_s0: tol,
        counts: samples
            .iter()
            .map(|r| CountSample { s: r.s, count: r.count(), means: r.solutions.iter().map(|x| x.mean_value).collect() })
            .collect(),
        window_checks,
        bound_certificates,
        hypotheses: hyp,
        consistent: contiguous,
        violations,
    })
}

/// Slack for comparing discrete slopes with the slope bound.
pub fn bound_slack(k1: f64) -> f64 {
    1e-6 * (1.0 + k1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Nonexistence,
    Existence,
    Multiplicity,
    SideCondition,
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowVerdict {
    pub name: String,
    pub kind: WindowKind,
    #[serde(serialize_with = "ext_real")]
    pub lo: f64,
    #[serde(serialize_with = "ext_real")]
    pub hi: f64,
    /// Closed at the end points.
    pub closed: bool,
    pub passed: bool,
    /// `(s, count)` samples inside the window.
    pub witnesses: Vec<(f64, usize)>,
    #[serde(serialize_with = "ext_real_opt")]
    pub level: Option<f64>,
    pub note: Option<String>,
}

/// Checks the measured counts against each window prescribed by the
/// hypotheses and the located thresholds.
pub fn verify_alternative(_pb: &PeriodicProblem, report: &ThresholdReport) -> Vec<WindowVerdict> {
    let hyp = &report.hypotheses;
    let tol = report.tol_s0;
    let mut specs: Vec<(String, WindowKind, f64, f64, bool)> = Vec::new();
    if let Some(f) = hyp.level_floor {
        specs.push((format!("no solutions for s below the mean floor {f}"), WindowKind::Nonexistence,
            f64::NEG_INFINITY, f, !hyp.floor_attained));
    }
    if let Some(c) = hyp.level_ceiling {
        specs.push((format!("no solutions for s above the mean ceiling {c}"), WindowKind::Nonexistence,
            c, f64::INFINITY, !hyp.ceiling_attained));
    }
    let lower = Some(&report.s0).filter(|t| t.side == ThresholdSide::Lower);
    let upper = report.s1.as_ref().or(Some(&report.s0).filter(|t| t.side == ThresholdSide::Upper));
    if let Some(t) = lower {
        specs.push(("no solutions below s0".into(), WindowKind::Nonexistence, f64::NEG_INFINITY, t.lo - tol, false));
        if let Some(top) = hyp.sigma_star {
            specs.push(("at least one solution on ]s0, sigma*[".into(), WindowKind::Existence, t.hi + tol, top, false));
        }
        if let Some(top) = hyp.sigma_star_star {
            specs.push(("at least two solutions on ]s0, sigma**[".into(), WindowKind::Multiplicity, t.hi + tol, top, false));
        }
    }
    if let Some(t) = upper {
        let name = if lower.is_some() { "s1" } else { "s0" };
        specs.push((format!("no solutions above {name}"), WindowKind::Nonexistence, t.hi + tol, f64::INFINITY, false));
        if let Some(bottom) = hyp.nu_star {
            specs.push((format!("at least one solution on ]nu*, {name}[") , WindowKind::Existence, bottom, t.lo - tol, false));
        }
        if let Some(bottom) = hyp.nu_star_star {
            specs.push((format!("at least two solutions on ]nu**, {name}["), WindowKind::Multiplicity, bottom, t.lo - tol, false));
        }
    }
    let mut out: Vec<WindowVerdict> = specs
        .into_iter()
        .map(|(name, kind, lo, hi, closed)| {
            let inside = |s: f64| if closed { s >= lo && s <= hi } else { s > lo && s < hi };
            let witnesses: Vec<(f64, usize)> =
                report.counts.iter().filter(|c| inside(c.s)).map(|c| (c.s, c.count)).collect();
            let need = |c: usize| match kind {
                WindowKind::Nonexistence => c == 0,
                WindowKind::Existence => c >= 1,
                WindowKind::Multiplicity => c >= 2,
                WindowKind::SideCondition => true,
            };
            let (passed, note) = if witnesses.is_empty() {
                (false, Some("insufficient data".to_string()))
            } else {
                (witnesses.iter().all(|&(_, c)| need(c)), None)
            };
            WindowVerdict { name, kind, lo, hi, closed, passed, witnesses, level: None, note }
        })
        .collect();
    let sides = [
        ("lower side condition: cond-ex1 or cond-ex2", [hyp.cond_ex1, hyp.cond_ex2], report.family.has_type_i()),
        ("upper side condition: cond-ex3 or cond-ex4", [hyp.cond_ex3, hyp.cond_ex4], report.family.has_type_ii()),
    ];
    for (name, flags, relevant) in sides {
        if !relevant {
            continue;
        }
        let data = !report.counts.is_empty();
        out.push(WindowVerdict {
            name: name.into(),
            kind: WindowKind::SideCondition,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            closed: false,
            passed: data && flags.iter().any(|f| *f == Some(true)),
            witnesses: Vec::new(),
            level: None,
            note: (!data).then(|| "insufficient data".to_string()),
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchOptions {
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_points: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// Largest admissible `|u_{i+1} - u_i|` between consecutive points.
    pub jump_cap: f64,
    /// Tracing stops once `|u|` exceeds this.
    pub u_cap: f64,
    /// Weight of `s` in the arclength norm.
    pub theta: f64,
    pub tol: f64,
    /// Fold refinement levels, each dividing the step by eight.
    pub fold_refinements: usize,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            h0: 0.02,
            h_min: 1e-7,
            h_max: 0.1,
            max_points: 2000,
            s_min: f64::NEG_INFINITY,
            s_max: f64::INFINITY,
            jump_cap: 1.0,
            u_cap: 1e3,
            theta: 2.0,
            tol: 1e-10,
            fold_refinements: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Increasing,
    Decreasing,
    Fold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    LeftRange,
    Unbounded,
    /// Reached a region where the averaged forcing is flat.
    FlatTail,
    MaxPoints,
    StepCollapse,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchPoint {
    pub s: f64,
    pub solution: Solution,
    pub orientation: Orientation,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionBranch {
    pub points: Vec<BranchPoint>,
    /// First confirmed fold.
    pub fold_s: Option<f64>,
    pub folds: Vec<f64>,
    pub termination: Termination,
}

impl SolutionBranch {
    /// `s,u_mean,u_min,u_max,residual,fold_flag` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,u_mean,u_min,u_max,residual,fold_flag\n");
        for p in &self.points {
            let u = &p.solution.u;
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                p.s,
                p.solution.mean_value,
                u.min(),
                u.max(),
                p.solution.residual,
                u8::from(p.orientation == Orientation::Fold)
            ));
        }
        out
    }
}

/// A point `(x, s)` of the augmented space; `x` holds periodic values.
#[derive(Clone, Debug)]
struct Pt {
    x: Vec<f64>,
    s: f64,
}

struct Tracer<'a> {
    pb: &'a PeriodicProblem,
    opts: BranchOptions,
}

impl Tracer<'_> {
    fn residual(&self, x: &[f64], s: f64, ws: &mut OperatorWorkspace) -> Option<Vec<f64>> {
        let pb_s = self.pb.with_s(s);
        let g = periodic_map(&pb_s, 1.0)(x, ws).ok()?;
        let r: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn dot(&self, a: &Pt, b: &Pt) -> f64 {
        let n = a.x.len() as f64;
        a.x.iter().zip(&b.x).map(|(p, q)| p * q).sum::<f64>() / n + self.opts.theta * a.s * b.s
    }

    fn diff(a: &Pt, b: &Pt) -> Pt {
        Pt { x: a.x.iter().zip(&b.x).map(|(p, q)| p - q).collect(), s: a.s - b.s }
    }

    fn tangent(&self, from: &Pt, to: &Pt) -> Pt {
        let d = Self::diff(to, from);
        let norm = self.dot(&d, &d).sqrt().max(f64::MIN_POSITIVE);
        Pt { x: d.x.iter().map(|v| v / norm).collect(), s: d.s / norm }
    }

    /// Newton on `x - G_s(x) = 0`, `<X - P, tau> = 0`.
    fn correct(&self, pred: &Pt, tau: &Pt) -> Option<(Pt, f64)> {
        let n = pred.x.len();
        let mut ws = OperatorWorkspace::new(n);
        let mut cur = pred.clone();
        let aug = |p: &Pt, ws: &mut OperatorWorkspace| -> Option<Vec<f64>> {
            let mut r = self.residual(&p.x, p.s, ws)?;
            let d = Self::diff(p, pred);
            r.push(self.dot(&d, tau));
            Some(r)
        };
        let mut f = aug(&cur, &mut ws)?;
        for _ in 0..15 {
            let r = f[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if r <= self.opts.tol && f[n].abs() <= self.opts.tol {
                return Some((cur, r));
            }
            let base = cur.clone();
            let base_f = f.clone();
            let columns: Vec<Option<Vec<f64>>> = (0..=n)
                .into_par_iter()
                .map_init(
                    || OperatorWorkspace::new(n),
                    |w, j| {
                        let mut p = base.clone();
                        let eps = if j < n { 1e-7 * (1.0 + p.x[j].abs()) } else { 1e-7 * (1.0 + p.s.abs()) };
                        if j < n {
                            p.x[j] += eps;
                        } else {
                            p.s += eps;
                        }
                        let fp = aug(&p, w)?;
                        Some(fp.iter().zip(&base_f).map(|(a, b)| (a - b) / eps).collect())
                    },
                )
                .collect();
            let mut jac = DMatrix::<f64>::zeros(n + 1, n + 1);
            for (j, col) in columns.into_iter().enumerate() {
                jac.set_column(j, &DVector::from_vec(col?));
            }
            let rhs = DVector::from_iterator(n + 1, f.iter().map(|v| -v));
            let dx = jac.lu().solve(&rhs)?;
            if !dx.iter().all(|v| v.is_finite()) {
                return None;
            }
            for k in 0..n {
                cur.x[k] += dx[k];
            }
            cur.s += dx[n];
            f = aug(&cur, &mut ws)?;
        }
        let r = f[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (r <= 10.0 * self.opts.tol && f[n].abs() <= 10.0 * self.opts.tol).then_some((cur, r))
    }

    /// One accepted step from `cur` along the secant `prev -> cur`.
    fn step(&self, prev: &Pt, cur: &Pt, h: &mut f64) -> Option<(Pt, f64)> {
        let tau = self.tangent(prev, cur);
        while *h >= self.opts.h_min {
            let pred = Pt { x: cur.x.iter().zip(&tau.x).map(|(a, t)| a + *h * t).collect(), s: cur.s + *h * tau.s };
            if let Some((next, r)) = self.correct(&pred, &tau) {
                let jump = next.x.iter().zip(&cur.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                let forward = self.dot(&Self::diff(&next, cur), &tau) > 0.0;
                if jump <= self.opts.jump_cap && forward {
                    return Some((next, r));
                }
            }
            *h *= 0.5;
        }
        None
    }

    /// Continues past a corner where the arclength corrector fails: keeps the
    /// predicted state and reverses `s`, then solves at fixed `s`.
    fn corner_jump(&self, prev: &Pt, cur: &Pt, h: f64) -> Option<(Pt, f64)> {
        let tau = self.tangent(prev, cur);
        if tau.s.abs() < 1e-3 {
            return None;
        }
        let n = cur.x.len();
        let opts = SolveOptions { n, ..SolveOptions::default() };
        let mut hh = h.max(1e3 * self.opts.h_min);
        for _ in 0..12 {
            let s = cur.s - hh * tau.s;
            let guess: Vec<f64> = cur.x.iter().zip(&tau.x).map(|(a, t)| a + hh * t).collect();
            let sol = GridFunction::from_periodic_values(self.pb.period, guess)
                .and_then(|g| solve_fixed_point(&self.pb.with_s(s), &g, &opts));
            if let Ok(sol) = sol {
                let next = Pt { x: sol.u.periodic_values().to_vec(), s };
                let d = Self::diff(&next, cur);
                let advance: f64 = d.x.iter().zip(&tau.x).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                let jump = d.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if sol.converged && advance > 0.0 && jump <= self.opts.jump_cap {
                    return Some((next, sol.residual));
                }
            }
            hh *= 2.0;
            if hh > self.opts.h_max {
                break;
            }
        }
        None
    }

    /// Extreme `s` near a turning point between `prev` and `cur`, traced again
    /// with smaller steps.
    fn refine_fold(&self, prev: &Pt, cur: &Pt, h: f64, sign: f64, depth: usize) -> f64 {
        let mut best = if sign > 0.0 { prev.s.max(cur.s) } else { prev.s.min(cur.s) };
        if depth == 0 {
            return best;
        }
        let mut a = prev.clone();
        let mut b = cur.clone();
        let mut hs = h / 8.0;
        let mut before: Option<(Pt, Pt)> = None;
        for _ in 0..48 {
            let Some((c, _)) = self.step(&a, &b, &mut hs) else { break };
            hs = (1.5 * hs).min(h / 8.0);
            let turned = sign * (c.s - b.s) < 0.0;
            if sign > 0.0 {
                best = best.max(c.s);
            } else {
                best = best.min(c.s);
            }
            if turned {
                before = Some((a.clone(), b.clone()));
                break;
            }
            a = b;
            b = c;
        }
        match before {
            Some((p, q)) => {
                let inner = self.refine_fold(&p, &q, hs, sign, depth - 1);
                if sign > 0.0 {
                    best.max(inner)
                } else {
                    best.min(inner)
                }
            }
            None => best,
        }
    }
}

/// Pseudo-arclength continuation in `(s, u)` from a converged seed.
pub fn trace_branch(pb: &PeriodicProblem, seed: &Solution, direction: f64, opts: &BranchOptions) -> Result<SolutionBranch> {
    if !seed.converged {
        return Err(Error::Precondition("branch seed has not converged".into()));
    }
    if direction != 1.0 && direction != -1.0 {
        return Err(Error::Precondition(format!("direction must be +1 or -1, got {direction}")));
    }
    let n = seed.u.cells();
    let solve_opts = SolveOptions { n, ..SolveOptions::default() };
    let tracer = Tracer { pb, opts: *opts };
    let to_solution = |p: &Pt, r: f64| -> Result<Solution> {
        let u = GridFunction::from_periodic_values(pb.period, p.x.clone())?;
        Ok(Solution {
            mean_value: u.mean(),
            u,
            residual: r,
            s: p.s,
            converged: true,
            diverged: false,
            iterations: 0,
            newton_steps: 0,
        })
    };

    let start = Pt { x: seed.u.periodic_values().to_vec(), s: seed.s };
    let mut points = vec![BranchPoint { s: seed.s, solution: seed.clone(), orientation: Orientation::Increasing }];
    let mut h0 = opts.h0;
    let mut second = None;
    while h0 >= opts.h_min {
        let s1 = seed.s + direction * h0;
        let sol = solve_fixed_point(&pb.with_s(s1), &seed.u, &solve_opts)?;
        if sol.converged && sol.u.sup_distance(&seed.u) <= opts.jump_cap {
            second = Some(sol);
            break;
        }
        h0 *= 0.5;
    }
    let Some(second) = second else {
        return Ok(SolutionBranch { points, fold_s: None, folds: Vec::new(), termination: Termination::StepCollapse });
    };
    let mut prev = start;
    let mut cur = Pt { x: second.u.periodic_values().to_vec(), s: second.s };
    points.push(BranchPoint { s: second.s, solution: second, orientation: Orientation::Increasing });

    let mut h = opts.h0;
    let mut last_h = opts.h0;
    let mut folds = Vec::new();
    let mut pending: Option<(usize, Pt, Pt, f64)> = None;
    let mut dir = (cur.s - prev.s).signum();
    let mut termination = Termination::MaxPoints;
    while points.len() < opts.max_points {
        let inside = cur.s >= opts.s_min && cur.s <= opts.s_max;
        if !inside {
            termination = Termination::LeftRange;
            break;
        }
        if cur.x.iter().any(|v| v.abs() > opts.u_cap) {
            termination = Termination::Unbounded;
            break;
        }
        let mut step_h = h;
        let Some((next, r)) =
            tracer.step(&prev, &cur, &mut step_h).or_else(|| tracer.corner_jump(&prev, &cur, last_h))
        else {
            termination = Termination::StepCollapse;
            break;
        };
        last_h = step_h.max(opts.h_min);
        h = (1.5 * step_h).min(opts.h_max);
        let ds = next.s - cur.s;
        if ds.abs() > 1e-6 * step_h {
            let sgn = ds.signum();
            if let Some((idx, p, q, sign)) = pending.take() {
                // Confirmed when the new direction persists for a second step.
                if sgn == -sign {
                    let fold = tracer.refine_fold(&p, &q, step_h, sign, opts.fold_refinements);
                    folds.push(fold);
                    points[idx].orientation = Orientation::Fold;
                }
            }
            if dir != 0.0 && sgn != dir {
                pending = Some((points.len() - 1, prev.clone(), cur.clone(), dir));
            }
            dir = sgn;
        }
        let sol = to_solution(&next, r)?;
        let flat = flat_on_constants(&pb.with_s(next.s), &sol, &solve_opts);
        points.push(BranchPoint { s: next.s, solution: sol, orientation: Orientation::Increasing });
        if flat {
            termination = Termination::FlatTail;
            break;
        }
        prev = cur;
        cur = next;
    }
    let len = points.len();
    for i in 0..len {
        if points[i].orientation == Orientation::Fold {
            continue;
        }
        let ds = if i + 1 < len { points[i + 1].s - points[i].s } else { points[i].s - points[i - 1].s };
        points[i].orientation = if ds >= 0.0 { Orientation::Increasing } else { Orientation::Decreasing };
    }
    Ok(SolutionBranch { fold_s: folds.first().copied(), folds, points, termination })
}
