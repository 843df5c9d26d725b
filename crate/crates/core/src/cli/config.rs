//! TOML run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::continuation::{BranchOptions, StartPolicy, SweepPlan};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fixtures::{example_forcing, ExampleName};
use crate::phi::{PhiOperator, ScalarMap};
use crate::problem::{
    Forcing, NeumannWeightedBVP, PairMap, PeriodicProblem, RadialNeumannProblem, TimeFunction, WeightedForcing,
};
use crate::solver::SolveOptions;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub problem: Option<ProblemSection>,
    pub weighted: Option<WeightedSection>,
    #[serde(default)]
    pub solver: SolveOptions,
    pub sweep: Option<SweepSection>,
    pub branch: Option<BranchOptions>,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub output: OutputSection,
    pub radial: Option<RadialSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum PhiSection {
    Identity,
    P { p: f64 },
    Pq { p: f64, q: f64 },
}

impl PhiSection {
    pub fn build(&self) -> Result<PhiOperator> {
        match *self {
            PhiSection::Identity => Ok(PhiOperator::identity()),
            PhiSection::P { p } => PhiOperator::p_laplacian(p),
            PhiSection::Pq { p, q } => PhiOperator::pq_laplacian(p, q),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Bundled example used as the base problem.
    pub example: Option<String>,
    pub period: Option<f64>,
    pub phi: Option<PhiSection>,
    /// Friction `f(u)`.
    pub friction: Option<String>,
    /// Raw forcing `g(t, u)`; excludes `[weighted]`.
    pub g: Option<String>,
    #[serde(default)]
    pub s: f64,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedSection {
    /// `a(t)`.
    pub a: Option<String>,
    /// `q(u)`.
    pub q: Option<String>,
    /// `e(t)`.
    pub e: Option<String>,
    pub omega_minus: Option<f64>,
    pub omega_plus: Option<f64>,
    pub q_inf: Option<f64>,
    pub q_sup: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub s_min: f64,
    pub s_max: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub starts: Option<StartPolicy>,
    pub tol_s0: Option<f64>,
}

fn default_samples() -> usize {
    41
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    /// Constant initial guess.
    #[serde(default)]
    pub guess: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialSection {
    pub dimension: u32,
    pub r_inner: f64,
    pub r_outer: f64,
    /// `A(r)` with the variable `r`; the Laplacian when absent.
    pub amplitude: Option<String>,
    /// `G(r, u)` with the variables `r` (or `t`) and `u`.
    pub g: String,
    #[serde(default)]
    pub s: f64,
    /// Constant initial guesses.
    #[serde(default = "default_guesses")]
    pub guesses: Vec<f64>,
}

fn default_guesses() -> Vec<f64> {
    vec![-3.0, 3.0]
}

fn parse_expr(key: &str, source: &str) -> Result<Expr> {
    Expr::parse(source).map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn time_function(key: &str, source: &str) -> Result<TimeFunction> {
    let ex = parse_expr(key, source)?;
    if ex.uses_u() {
        return Err(Error::Config(format!("{key} may depend on t only")));
    }
    Ok(match ex.as_constant() {
        Some(c) => TimeFunction::Constant(c),
        None => TimeFunction::map(move |t| ex.eval(t, 0.0)),
    })
}

fn scalar_map(key: &str, source: &str) -> Result<ScalarMap> {
    let ex = parse_expr(key, source)?;
    if ex.uses_t() {
        return Err(Error::Config(format!("{key} may depend on u only")));
    }
    Ok(Arc::new(move |u| ex.eval(0.0, u)))
}

fn pair_map(key: &str, source: &str) -> Result<PairMap> {
    let ex = parse_expr(key, source)?;
    Ok(Arc::new(move |t, u| ex.eval(t, u)))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn periodic_problem(&self) -> Result<PeriodicProblem> {
        let sec = self.problem.as_ref().ok_or_else(|| Error::Config("missing [problem] section".into()))?;
        let example = sec
            .example
            .as_deref()
            .map(|n| n.parse::<ExampleName>().map_err(|e| Error::Config(format!("problem.example: {e}"))))
            .transpose()?;
        let forcing = match (&sec.g, &self.weighted) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("problem.g and [weighted] are mutually exclusive".into()));
            }
            (Some(g), None) => {
                if example.is_some() {
                    return Err(Error::Config("problem.g cannot be combined with problem.example".into()));
                }
                Forcing::Raw(pair_map("problem.g", g)?)
            }
            (None, w) => {
                let w = w.clone().unwrap_or_default();
                let mut base = match example {
                    Some(name) => example_forcing(name),
                    None => {
                        let q = w.q.as_deref().ok_or_else(|| {
                            Error::Config("weighted.q is required without problem.example".into())
                        })?;
                        let (Some(om), Some(op)) = (w.omega_minus, w.omega_plus) else {
                            return Err(Error::Config(
                                "weighted.omega_minus and weighted.omega_plus are required with weighted.q".into(),
                            ));
                        };
                        let mut f = WeightedForcing::constant_coefficient(scalar_map("weighted.q", q)?, om, op);
                        f.q_inf = None;
                        f.q_sup = None;
                        f
                    }
                };
                if let (Some(q), Some(_)) = (w.q.as_deref(), example) {
                    let (Some(om), Some(op)) = (w.omega_minus, w.omega_plus) else {
                        return Err(Error::Config("overriding weighted.q needs both omega limits".into()));
                    };
                    base.q = scalar_map("weighted.q", q)?;
                    base.omega_minus = om;
                    base.omega_plus = op;
                    base.q_inf = None;
                    base.q_sup = None;
                } else {
                    if let Some(om) = w.omega_minus {
                        base.omega_minus = om;
                    }
                    if let Some(op) = w.omega_plus {
                        base.omega_plus = op;
                    }
                }
                if let Some(a) = &w.a {
                    base.a = time_function("weighted.a", a)?;
                }
                if let Some(e) = &w.e {
                    base.e = time_function("weighted.e", e)?;
                }
                if w.q_inf.is_some() {
                    base.q_inf = w.q_inf;
                }
                if w.q_sup.is_some() {
                    base.q_sup = w.q_sup;
                }
                Forcing::Weighted(base)
            }
        };
        let phi = match &sec.phi {
            Some(p) => p.build().map_err(|e| Error::Config(format!("problem.phi: {e}")))?,
            None => PhiOperator::identity(),
        };
        let period = sec.period.unwrap_or(1.0);
        let mut pb = PeriodicProblem::new(period, phi, forcing, sec.s).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(f) = &sec.friction {
            pb = pb.with_friction(scalar_map("problem.friction", f)?);
        }
        Ok(pb)
    }

    pub fn solve_options(&self, grid: Option<usize>) -> Result<SolveOptions> {
        let mut opts = self.solver;
        if let Some(n) = grid {
            opts.n = n;
        }
        opts.validate().map_err(|e| Error::Config(format!("[solver]: {e}")))?;
        Ok(opts)
    }

    pub fn sweep_plan(&self, pb: &PeriodicProblem, grid: Option<usize>, seed: Option<u64>) -> Result<SweepPlan> {
        let sec = self.sweep.as_ref().ok_or_else(|| Error::Config("missing [sweep] section".into()))?;
        let mut plan = SweepPlan::for_problem(pb, sec.s_min, sec.s_max, sec.samples)
            .map_err(|e| Error::Config(format!("[sweep]: {e}")))?;
        if let Some(starts) = sec.starts {
            plan.starts = starts;
        }
        plan.starts.seed = seed.unwrap_or(self.seed);
        plan.solve_opts = self.solve_options(grid)?;
        plan.tol_s0 = sec.tol_s0;
        plan.validate().map_err(|e| Error::Config(format!("[sweep]: {e}")))?;
        Ok(plan)
    }

    pub fn branch_options(&self, plan: &SweepPlan) -> BranchOptions {
        self.branch.unwrap_or(BranchOptions {
            s_min: plan.s_min,
            s_max: plan.s_max,
            u_cap: 10.0 * plan.starts.m,
            ..BranchOptions::default()
        })
    }

    pub fn radial_problem(&self, s: Option<f64>) -> Result<(NeumannWeightedBVP, Vec<f64>)> {
        let sec = self.radial.as_ref().ok_or_else(|| Error::Config("missing [radial] section".into()))?;
        let amplitude = match &sec.amplitude {
            Some(src) => {
                let ex = parse_expr("radial.amplitude", src)?;
                if ex.uses_u() {
                    return Err(Error::Config("radial.amplitude may depend on r only".into()));
                }
                Some(Arc::new(move |r: f64| ex.eval(r, 0.0)) as ScalarMap)
            }
            None => None,
        };
        let rp = RadialNeumannProblem::new(
            sec.dimension,
            sec.r_inner,
            sec.r_outer,
            amplitude,
            pair_map("radial.g", &sec.g)?,
            s.unwrap_or(sec.s),
        )
        .map_err(|e| Error::Config(format!("[radial]: {e}")))?;
        if sec.guesses.is_empty() {
            return Err(Error::Config("radial.guesses must not be empty".into()));
        }
        Ok((crate::problem::reduce_radial(&rp), sec.guesses.clone()))
    }
}
