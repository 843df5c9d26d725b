use std::f64::consts::PI;

use phiperiodic::analysis::{check_strict_lower, check_strict_upper};
use phiperiodic::continuation::{
    count_solutions, count_solutions_warm, find_threshold, sweep, trace_branch, BranchOptions, SweepPlan,
};
use phiperiodic::fixtures::{load_example, ExampleName};
use phiperiodic::operators::kernel_k;
use phiperiodic::solver::{averaged_defect, solve_fixed_point, SolveOptions};
use phiperiodic::{GridFunction, PhiOperator};
use proptest::prelude::*;

fn trig(c: [f64; 4]) -> impl Fn(f64) -> f64 {
    move |t| {
        let x = 2.0 * PI * t;
        c[0] * x.cos() + c[1] * x.sin() + c[2] * (2.0 * x).cos() + c[3] * (3.0 * x).sin()
    }
}

fn residual(phi: &PhiOperator, u: &GridFunction, w: &GridFunction) -> f64 {
    let h = u.step();
    let v = u.values();
    let flux = |k: usize| phi.eval((v[k + 1] - v[k]) / h).unwrap();
    let wbar = w.mean();
    (1..u.cells()).map(|k| ((flux(k) - flux(k - 1)) / h - (w.values()[k] - wbar)).abs()).fold(0.0, f64::max)
}

fn plan(pb: &phiperiodic::PeriodicProblem, a: f64, b: f64, k: usize) -> SweepPlan {
    let mut p = SweepPlan::for_problem(pb, a, b, k).unwrap();
    p.solve_opts = SolveOptions::default().with_n(64);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_residual_decays(c in prop::array::uniform4(-1.0f64..1.0), p in prop::sample::select(vec![2.0, 3.0, 4.0])) {
        prop_assume!(c.iter().map(|x| x.abs()).sum::<f64>() > 0.1);
        let phi = PhiOperator::p_laplacian(p).unwrap();
        let f = trig(c);
        let mut res = Vec::new();
        for n in [64usize, 128, 256, 512] {
            let w = GridFunction::periodic(1.0, n, &f).unwrap();
            let u = kernel_k(&phi, &w).unwrap();
            prop_assert!(u.values()[0].abs() <= 1e-12 && u.values()[n].abs() <= 1e-10);
            res.push(residual(&phi, &u, &w));
        }
        let order = res.windows(2).map(|e| (e[0] / e[1]).log2()).fold(f64::INFINITY, f64::min);
        prop_assert!(order >= 1.8 || res[3] <= 1e-12, "residuals {:?}", res);
    }

    #[test]
    fn kernel_commutes_with_reflection(c in prop::array::uniform4(-1.0f64..1.0), p in 1.5f64..4.0) {
        let phi = PhiOperator::p_laplacian(p).unwrap();
        let n = 128;
        let f = trig(c);
        let w = GridFunction::periodic(1.0, n, &f).unwrap();
        let wr = GridFunction::periodic(1.0, n, |t| -f(1.0 - t)).unwrap();
        let u = kernel_k(&phi, &w).unwrap();
        let ur = kernel_k(&phi, &wr).unwrap();
        for k in 0..=n {
            prop_assert!((ur.values()[k] + u.values()[n - k]).abs() <= 1e-9 * (1.0 + u.max_abs()));
        }
    }

    #[test]
    fn strict_pair_traps_a_solution(s in 0.3f64..2.0, low in 0.1f64..1.0, high in 0.1f64..0.9) {
        let pb = load_example(ExampleName::Ex41).with_s(s);
        let n = 64;
        let margin = 1e-6 * (1.0 + s);
        let a = move |t: f64| -s - low + 0.01 * low * (2.0 * PI * t).cos();
        let alpha = GridFunction::periodic(1.0, n, a).unwrap();
        let beta = GridFunction::constant(0.0, 1.0, n, -s + high * s).unwrap();
        prop_assert!(check_strict_lower(&pb, &alpha, margin).unwrap().holds);
        prop_assert!(check_strict_upper(&pb, &beta, margin).unwrap().holds);
        let start = GridFunction::periodic(1.0, n, |t| 0.5 * (a(t) + beta.values()[0])).unwrap();
        let sol = solve_fixed_point(&pb, &start, &SolveOptions::default().with_n(n)).unwrap();
        prop_assert!(sol.converged);
        for k in 0..=n {
            let v = sol.u.values()[k];
            prop_assert!(alpha.values()[k] <= v + 1e-9 && v <= beta.values()[k] + 1e-9, "node {} value {}", k, v);
        }
    }
}

#[test]
fn counts_form_an_interval() {
    for (name, a, b) in [(ExampleName::Ex41, -1.0, 2.0), (ExampleName::Ex42, -0.5, 1.5), (ExampleName::Ex43, -1.0, 4.0)] {
        let pb = load_example(name);
        let samples = sweep(&pb, &plan(&pb, a, b, 21)).unwrap();
        let hits: Vec<usize> = samples.iter().enumerate().filter(|(_, r)| r.count() > 0).map(|(i, _)| i).collect();
        assert!(!hits.is_empty());
        assert_eq!(hits.last().unwrap() - hits[0] + 1, hits.len(), "{name:?}: {hits:?}");
    }
}

#[test]
fn bisection_step_budget() {
    for (name, a, b) in [(ExampleName::Ex41, -1.0, 2.0), (ExampleName::Ex42, -0.5, 1.5)] {
        let pb = load_example(name);
        let p = plan(&pb, a, b, 11);
        let rep = find_threshold(&pb, &p).unwrap();
        let budget = ((b - a) / p.tol_s0()).log2().ceil() as usize;
        assert!(rep.s0.bisection_steps <= budget, "{name:?}: {} steps", rep.s0.bisection_steps);
        assert!(rep.s0.width() <= p.tol_s0());
    }
}

#[test]
fn warm_starts_only_add_solutions() {
    let pb = load_example(ExampleName::Ex42);
    let p = plan(&pb, -0.5, 1.5, 5);
    for s in [0.3, 0.6, 0.9] {
        let (_, cold) = count_solutions(&pb, s, &p).unwrap();
        let (_, near) = count_solutions(&pb, s + 0.02, &p).unwrap();
        let warm: Vec<GridFunction> = near.iter().map(|x| x.u.clone()).collect();
        let (_, both) = count_solutions_warm(&pb, s, &p, &warm).unwrap();
        for c in &cold {
            assert!(both.iter().any(|w| w.same_as(c)), "s = {s}: lost the solution with mean {}", c.mean_value);
        }
    }
}

#[test]
fn fold_matches_threshold_and_branches_keep_the_mean_identity() {
    for (name, a, b, s, dir) in [(ExampleName::Ex42, -0.5, 1.5, 0.5, 1.0), (ExampleName::Ex41, -1.0, 2.0, 1.0, -1.0)] {
        let pb = load_example(name);
        let p = plan(&pb, a, b, 11);
        let rep = find_threshold(&pb, &p).unwrap();
        let (_, sols) = count_solutions(&pb, s, &p).unwrap();
        let opts = BranchOptions { s_min: a, s_max: b, ..BranchOptions::default() };
        let br = trace_branch(&pb, sols.last().unwrap(), dir, &opts).unwrap();
        let fold = br.fold_s.expect("fold");
        assert!((fold - rep.s0.value).abs() <= 5.0 * p.tol_s0(), "{name:?}: fold {fold}, s0 {}", rep.s0.value);
        let n = p.solve_opts.n as f64;
        let tol_avg = 10.0 * p.solve_opts.tol_fix + 10.0 / (n * n);
        for pt in &br.points {
            let d = averaged_defect(&pb.with_s(pt.s), &pt.solution.u);
            assert!(d <= tol_avg, "{name:?}: defect {d:e} at s = {}", pt.s);
        }
    }
}

#[test]
fn double_threshold_on_a_wide_range() {
    let pb = load_example(ExampleName::Ex45);
    let p = plan(&pb, -3.0, 6.0, 37);
    let samples = sweep(&pb, &p).unwrap();
    let mut profile: Vec<usize> = Vec::new();
    for c in samples.iter().map(|r| r.count().min(2)) {
        if profile.last() != Some(&c) {
            profile.push(c);
        }
    }
    assert!(profile == [0, 2, 0] || profile == [0, 2, 1, 0], "{:?}", samples.iter().map(|r| r.count()).collect::<Vec<_>>());
    let rep = find_threshold(&pb, &p).unwrap();
    let s1 = rep.s1.expect("upper threshold");
    assert!(rep.s0.value < -1.0 && s1.value > -1.0);
    assert!((s1.value - 5.0).abs() <= 1e-2, "s1 = {}", s1.value);
}
