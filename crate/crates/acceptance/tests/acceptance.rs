//! Acceptance criteria for the solver, threshold search, analysis and CLI.
//! One PASS/FAIL line per criterion; the process fails if any criterion does.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use phiperiodic::analysis::{apriori_bounds, brouwer_degree_interval};
use phiperiodic::cli;
use phiperiodic::continuation::{
    bound_slack, count_solutions, find_threshold, sweep, verify_alternative, SweepPlan, ThresholdSide, WindowKind,
};
use phiperiodic::fixtures::{linear, load_example, ExampleName};
use phiperiodic::operators::{kernel_k, neumann_residual};
use phiperiodic::problem::{normalize_weighted, reduce_radial, RadialNeumannProblem, TimeFunction};
use phiperiodic::solver::{averaged_defect, find_bounded_tail_solution, solve_neumann, Side, Solution, SolveOptions};
use phiperiodic::{GridFunction, PeriodicProblem, PhiOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Periodic solutions collected for the bound certificates.
#[derive(Default)]
struct Collected {
    items: Vec<(String, PeriodicProblem, Solution)>,
}

impl Collected {
    fn add(&mut self, tag: &str, pb: &PeriodicProblem, sols: &[Solution]) {
        for s in sols {
            self.items.push((tag.to_string(), pb.with_s(s.s), s.clone()));
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn plan(a: f64, b: f64, k: usize, pb: &PeriodicProblem) -> Result<SweepPlan, String> {
    SweepPlan::for_problem(pb, a, b, k).map_err(err)
}

fn kernel_residual(phi: &PhiOperator, u: &GridFunction, w: &GridFunction) -> f64 {
    let n = u.cells();
    let h = u.step();
    let v = u.values();
    let wbar = w.mean();
    let flux = |k: usize| phi.eval((v[k + 1] - v[k]) / h).unwrap();
    (1..n).map(|k| ((flux(k) - flux(k - 1)) / h - (w.values()[k] - wbar)).abs()).fold(0.0, f64::max)
}

fn c1_kernel(_: &mut Collected) -> Outcome {
    let cos = |t: f64| (2.0 * PI * t).cos();
    let mut notes = Vec::new();
    for p in [2.0, 3.0, 4.0] {
        let phi = PhiOperator::p_laplacian(p).map_err(err)?;
        let mut residuals = Vec::new();
        for n in [64usize, 128, 256, 512] {
            let w = GridFunction::periodic(1.0, n, cos).map_err(err)?;
            let u = kernel_k(&phi, &w).map_err(err)?;
            let ends = u.values()[0].abs().max(u.values()[n].abs());
            ensure(ends <= 1e-10, || format!("p = {p}, n = {n}: boundary values {ends:e}"))?;
            residuals.push(kernel_residual(&phi, &u, &w));
            if n == 512 && p == 2.0 {
                let exact = |t: f64| -(cos(t) - 1.0) / (4.0 * PI * PI);
                let d = u.nodes().zip(u.values()).map(|(t, v)| (v - exact(t)).abs()).fold(0.0, f64::max);
                ensure(d <= 1e-6, || format!("closed form deviation {d:e}"))?;
                notes.push(format!("closed form {d:.1e}"));
            }
        }
        let last = residuals[3];
        ensure(last <= 1e-3, || format!("p = {p}: discrete residual {last:e} at n = 512"))?;
        let order = residuals.windows(2).map(|e| (e[0] / e[1]).log2()).fold(f64::INFINITY, f64::min);
        ensure(order >= 1.8, || format!("p = {p}: residual order {order:.2} from {residuals:?}"))?;
        notes.push(format!("p={p} residual {last:.1e} order {order:.2}"));
    }
    Ok(notes.join(", "))
}

fn c2_valley(col: &mut Collected) -> Outcome {
    let pb = load_example(ExampleName::Ex41);
    let p = plan(-1.0, 2.0, 31, &pb)?;
    let rep = find_threshold(&pb, &p).map_err(err)?;
    ensure(rep.s0.value.abs() <= 1e-3, || format!("s0 = {}", rep.s0.value))?;
    if let Some(w) = &rep.s0.witness {
        col.add("ex41 witness", &pb, std::slice::from_ref(w));
    }
    let (c, _) = count_solutions(&pb, -0.5, &p).map_err(err)?;
    ensure(c == 0, || format!("{c} solutions at s = -0.5"))?;
    let (c, sols) = count_solutions(&pb, 0.0, &p).map_err(err)?;
    ensure(c >= 1, || "no solution at s = 0".into())?;
    ensure(sols.iter().all(|x| x.u.max_abs() <= 1e-4), || "solution at s = 0 is not near 0".into())?;
    col.add("ex41", &pb, &sols);
    for s in [0.5, 1.0, 2.0] {
        let (c, sols) = count_solutions(&pb, s, &p).map_err(err)?;
        ensure(c >= 2, || format!("{c} solutions at s = {s}"))?;
        for target in [s, -s] {
            let hit = sols.iter().any(|x| x.u.values().iter().all(|v| (v - target).abs() <= 1e-4));
            ensure(hit, || format!("no solution near {target} at s = {s}"))?;
        }
        col.add("ex41", &pb, &sols);
    }
    Ok(format!("s0 = {:.3e}, bracket [{:.3e}, {:.3e}]", rep.s0.value, rep.s0.lo, rep.s0.hi))
}

fn c3_gaussian(col: &mut Collected) -> Outcome {
    let pb = load_example(ExampleName::Ex42);
    let p = plan(-0.5, 1.5, 21, &pb)?;
    let rep = find_threshold(&pb, &p).map_err(err)?;
    ensure((rep.s0.value - 1.0).abs() <= 1e-3, || format!("s0 = {}", rep.s0.value))?;
    ensure(rep.s0.side == ThresholdSide::Upper, || "threshold is not an upper one".into())?;
    let yes = rep.s0.lo;
    for (s, want) in [(1.2, 0usize), (yes, 1), (0.5, 2), (-0.3, 0)] {
        let (c, sols) = count_solutions(&pb, s, &p).map_err(err)?;
        let ok = if want == 0 { c == 0 } else { c >= want };
        ensure(ok, || format!("{c} solutions at s = {s}, expected {}{want}", if want == 0 { "" } else { ">= " }))?;
        col.add("ex42", &pb, &sols);
    }
    let windows = verify_alternative(&pb, &rep);
    let floor = windows
        .iter()
        .find(|w| w.kind == WindowKind::Nonexistence && w.lo == f64::NEG_INFINITY && w.hi == 0.0 && w.closed)
        .ok_or("missing the s <= 0 window")?;
    ensure(floor.passed, || format!("window failed: {:?}", floor.witnesses))?;
    Ok(format!("s0 = {:.6}, s <= 0 window on {} samples", rep.s0.value, floor.witnesses.len()))
}

fn c4_mixed(col: &mut Collected) -> Outcome {
    let pb = load_example(ExampleName::Ex43);
    let p = plan(-1.0, 4.0, 21, &pb)?;
    let rep = find_threshold(&pb, &p).map_err(err)?;
    ensure(rep.s0.side == ThresholdSide::Lower, || "threshold is not a lower one".into())?;
    ensure(rep.s0.value < 1.0, || format!("s0 = {} is not below 1", rep.s0.value))?;
    ensure(rep.s0.width() <= 1e-3, || format!("bracket width {}", rep.s0.width()))?;
    for s in [1.5, 3.0] {
        let (c, sols) = count_solutions(&pb, s, &p).map_err(err)?;
        ensure(c >= 1, || format!("no solution at s = {s}"))?;
        col.add("ex43", &pb, &sols);
    }
    let below = rep.s0.value - 0.1;
    let (c, _) = count_solutions(&pb, below, &p).map_err(err)?;
    ensure(c == 0, || format!("{c} solutions at s0 - 0.1"))?;
    Ok(format!("s0 = {:.3e}, bracket width {:.1e}", rep.s0.value, rep.s0.width()))
}

/// Counts reduced to `0`, `1`, `2+` with repeats removed.
fn profile(counts: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for c in counts.iter().map(|&c| c.min(2)) {
        if out.last() != Some(&c) {
            out.push(c);
        }
    }
    out
}

fn c5_double(col: &mut Collected) -> Outcome {
    let pb = load_example(ExampleName::Ex45);
    let p = plan(-3.0, 1.0, 41, &pb)?;
    let samples = sweep(&pb, &p).map_err(err)?;
    for r in &samples {
        col.add("ex45", &pb, &r.solutions);
    }
    let counts: Vec<usize> = samples.iter().map(|r| r.count()).collect();
    let rep = find_threshold(&pb, &p).map_err(err)?;
    let s1 = rep.s1.as_ref().ok_or("no upper threshold")?;
    let shape = profile(&counts);
    let text = format!(
        "counts {counts:?}, profile {shape:?}, s0 in [{:.4}, {:.4}], s1 in [{:.4}, {:.4}]",
        rep.s0.lo, rep.s0.hi, s1.lo, s1.hi
    );
    let expected = [vec![0, 2, 0], vec![0, 1, 2, 0], vec![0, 2, 1, 0], vec![0, 1, 2, 1, 0]];
    ensure(expected.contains(&shape), || format!("profile is not 0/1/2-2/1/0: {text}"))?;
    ensure(rep.s0.width() <= 1e-2 && s1.width() <= 1e-2, || format!("brackets too wide: {text}"))?;
    ensure(rep.s0.value < -1.0 && -1.0 < s1.value, || format!("ordering fails: {text}"))?;
    Ok(text)
}

fn c6_weights(col: &mut Collected) -> Outcome {
    let base = load_example(ExampleName::Ex42);
    let weights: [(&str, TimeFunction); 2] = [
        ("1 + 0.9 cos", TimeFunction::map(|t| 1.0 + 0.9 * (2.0 * PI * t).cos())),
        ("max(0, cos)", TimeFunction::map(|t| (2.0 * PI * t).cos().max(0.0))),
    ];
    let mut notes = Vec::new();
    for (name, a) in weights {
        let mut pb = base.clone();
        if let phiperiodic::Forcing::Weighted(w) = &mut pb.forcing {
            w.a = a;
        }
        let p = plan(-0.5, 1.5, 21, &pb)?;
        let rep = find_threshold(&pb, &p).map_err(err)?;
        ensure(rep.family.has_type_ii(), || format!("{name}: family {:?}", rep.family))?;
        ensure(rep.violations.is_empty(), || format!("{name}: {:?}", rep.violations))?;
        let failed: Vec<String> =
            verify_alternative(&pb, &rep).into_iter().filter(|w| !w.passed).map(|w| w.name).collect();
        ensure(failed.is_empty(), || format!("{name}: failed windows {failed:?}"))?;
        let samples = sweep(&pb, &p).map_err(err)?;
        let mut found = 0;
        for r in &samples {
            let pb_s = pb.with_s(r.s);
            for x in &r.solutions {
                let d = averaged_defect(&pb_s, &x.u);
                ensure(d <= 1e-6, || format!("{name}: mean identity defect {d:e} at s = {}", r.s))?;
                let b = apriori_bounds(&pb_s).map_err(err)?;
                ensure(x.u.oscillation() <= b.k0, || format!("{name}: oscillation above K0 at s = {}", r.s))?;
            }
            found += r.count();
            col.add("ex42 weighted", &pb, &r.solutions);
        }
        notes.push(format!("{name}: s0 = {:.4}, {found} solutions", rep.s0.value));
    }
    Ok(notes.join("; "))
}

fn c7_reflection(col: &mut Collected) -> Outcome {
    let pb = load_example(ExampleName::Ex44);
    let norm = normalize_weighted(&pb).map_err(err)?;
    let p = plan(-1.0, 1.0, 5, &norm.problem)?;
    let mirror = norm.problem.reflected();
    let mut pairs = 0;
    for s in [-0.3, -0.1, 0.2, 0.35] {
        let s1 = norm.to_normalized(s);
        let (_, a) = count_solutions(&norm.problem, s1, &p).map_err(err)?;
        let (_, b) = count_solutions(&mirror, -s1, &p).map_err(err)?;
        ensure(a.len() == b.len(), || format!("{} vs {} solutions at s = {s}", a.len(), b.len()))?;
        for x in &a {
            let hit = b.iter().any(|y| {
                x.u.values().iter().zip(y.u.values()).all(|(p, q)| (p + q).abs() <= 1e-6)
            });
            ensure(hit, || format!("no mirrored partner at s = {s}"))?;
        }
        pairs += a.len();
        col.add("ex44 normalized", &norm.problem, &a);
        col.add("ex44 reflected", &mirror, &b);
    }
    Ok(format!("{pairs} mirrored pairs"))
}

fn c8_tails(col: &mut Collected) -> Outcome {
    let opts = SolveOptions::default().with_n(64);
    let mut notes = Vec::new();
    for (name, side) in [(ExampleName::Ex42, Side::Above), (ExampleName::Ex43, Side::Below)] {
        let pb = load_example(name);
        let cert = find_bounded_tail_solution(&pb, 1.0, side, &opts).map_err(err)?;
        let u = &cert.solution.u;
        let w = pb.weighted().ok_or("weighted fixture")?;
        let level = w.a.mean(pb.period) * (w.q)(cert.u_bar) - w.e.mean(pb.period);
        match side {
            Side::Above => ensure(u.min() >= 1.0, || format!("{name:?}: min u = {}", u.min()))?,
            Side::Below => ensure(u.max() <= -1.0, || format!("{name:?}: max u = {}", u.max()))?,
        }
        ensure((cert.g0 - level).abs() <= 1e-3, || format!("{name:?}: g0 = {}, a q(u) = {level}", cert.g0))?;
        ensure(u.oscillation() <= 1e-10, || format!("{name:?}: oscillation {:e}", u.oscillation()))?;
        ensure(cert.solution.residual <= 1e-10, || format!("{name:?}: residual {:e}", cert.solution.residual))?;
        col.add(&format!("{name:?} tail"), &pb.with_s(cert.g0), &[Solution { s: cert.g0, ..cert.solution.clone() }]);
        notes.push(format!("{}: mean {:.3}, g0 {:.6}", name.as_str(), cert.u_bar, cert.g0));
    }
    Ok(notes.join("; "))
}

fn c9_degree(_: &mut Collected) -> Outcome {
    let pb = load_example(ExampleName::Ex42).with_s(0.5);
    let d = [
        brouwer_degree_interval(&pb, -3.0, 0.0).map_err(err)?,
        brouwer_degree_interval(&pb, 0.0, 3.0).map_err(err)?,
        brouwer_degree_interval(&pb, -3.0, 3.0).map_err(err)?,
    ];
    ensure(d == [1, -1, 0], || format!("degrees {d:?}"))?;
    let lin = linear(|t| (2.0 * PI * t).cos());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let mut x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        x.sort_by(f64::total_cmp);
        let pb = lin.with_s(rng.gen_range(-5.0..5.0));
        let whole = brouwer_degree_interval(&pb, x[0], x[2]).map_err(err)?;
        let parts =
            brouwer_degree_interval(&pb, x[0], x[1]).map_err(err)? + brouwer_degree_interval(&pb, x[1], x[2]).map_err(err)?;
        ensure(whole == parts, || format!("additivity fails on {x:?}"))?;
    }
    Ok(format!("degrees {d:?}, 100 additive triples"))
}

fn c10_neumann(_: &mut Collected) -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let config = dir.path().join("radial.toml");
    std::fs::write(
        &config,
        "[radial]\ndimension = 2\nr_inner = 1.0\nr_outer = 2.0\ng = \"u^2\"\ns = 4.0\nguesses = [-3.0, 3.0]\n",
    )
    .map_err(err)?;
    let run = |s: f64, out: &Path| {
        cli::run([
            "phiperiodic".to_string(),
            "neumann".into(),
            "--config".into(),
            config.display().to_string(),
            "--out".into(),
            out.display().to_string(),
            format!("--s={s}"),
        ])
    };
    let out = dir.path().join("pos");
    let code = run(4.0, &out);
    ensure(code == 0, || format!("exit code {code} at s = 4"))?;
    let text = std::fs::read_to_string(out.join("neumann.json")).map_err(err)?;
    let json: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
    let sols = json["solutions"].as_array().ok_or("no solutions array")?;
    for target in [-2.0, 2.0] {
        let hit = sols.iter().any(|s| {
            let lo = s["min"].as_f64().unwrap_or(f64::NAN);
            let hi = s["max"].as_f64().unwrap_or(f64::NAN);
            (lo - target).abs() <= 1e-6 && (hi - target).abs() <= 1e-6
        });
        ensure(hit, || format!("no constant solution {target}: {text}"))?;
    }
    let code = run(-1.0, &dir.path().join("neg"));
    ensure(code == cli::EXIT_NO_SOLUTION, || format!("exit code {code} at s = -1"))?;

    let rp = RadialNeumannProblem::new(
        2,
        1.0,
        2.0,
        None,
        Arc::new(|r: f64, u: f64| u * u - (2.0 * PI * (r - 1.0)).cos()),
        4.0,
    )
    .map_err(err)?;
    let bvp = reduce_radial(&rp);
    let opts = SolveOptions::default().with_n(512);
    let u0 = GridFunction::constant(1.0, 1.0, 512, 2.0).map_err(err)?;
    let sol = solve_neumann(&bvp, &u0, &opts).map_err(err)?;
    ensure(sol.converged, || "nonconstant problem did not converge".into())?;
    let r = neumann_residual(&bvp, &sol.u).map_err(err)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(r <= 1e-4, || format!("discrete residual {r:e}"))?;
    Ok(format!("v = +-2 found, s = -1 rejected, nonconstant residual {r:.1e}"))
}

fn c11_bounds(col: &Collected) -> Outcome {
    let mut violations = Vec::new();
    for (tag, pb, sol) in &col.items {
        match apriori_bounds(pb) {
            Ok(b) => {
                let osc = sol.u.oscillation();
                let slope = sol.max_slope();
                if osc > b.k0 || slope > b.k1 + bound_slack(b.k1) {
                    violations.push(format!("{tag} at s = {}: osc {osc:e} vs {:e}, slope {slope:e} vs {:e}", sol.s, b.k0, b.k1));
                }
            }
            Err(e) => violations.push(format!("{tag} at s = {}: no bounds ({e})", sol.s)),
        }
    }
    ensure(!col.items.is_empty(), || "no solutions collected".into())?;
    ensure(violations.is_empty(), || format!("{} violations: {:?}", violations.len(), &violations[..violations.len().min(5)]))?;
    Ok(format!("{} solutions certified", col.items.len()))
}

type Criterion = fn(&mut Collected) -> Outcome;

fn main() {
    let criteria: [(u32, &str, f64, Criterion); 10] = [
        (1, "kernel operator correctness", 1.0, c1_kernel),
        (2, "constant-solution oracle (valley)", 30.0, c2_valley),
        (3, "upper alternative oracle (Gaussian)", 30.0, c3_gaussian),
        (4, "mixed alternative (exponential valley)", 60.0, c4_mixed),
        (5, "double trichotomy on [-3, 1]", 120.0, c5_double),
        (6, "nonconstant weights", 120.0, c6_weights),
        (7, "reflection duality", 60.0, c7_reflection),
        (8, "fixed-mean tail certificate", 10.0, c8_tails),
        (9, "degree bookkeeping", 1.0, c9_degree),
        (10, "radial Neumann reduction", 10.0, c10_neumann),
    ];
    let mut col = Collected::default();
    let mut failed = 0;
    let mut report = |id: u32, name: &str, limit: Option<f64>, secs: f64, outcome: Outcome| {
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if secs > l => Err(format!("runtime {secs:.2} s exceeds {l} s")),
            (o, _) => o,
        };
        let limit = limit.map(|l| format!(", limit {l} s")).unwrap_or_default();
        match outcome {
            Ok(msg) => println!("PASS [{id:>2}] {name} ({secs:.2} s{limit}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name} ({secs:.2} s{limit}): {msg}");
            }
        }
    };
    for (id, name, limit, f) in criteria {
        let start = Instant::now();
        let outcome = f(&mut col);
        report(id, name, Some(limit), start.elapsed().as_secs_f64(), outcome);
    }
    let start = Instant::now();
    let outcome = c11_bounds(&col);
    report(11, "a-priori bound certificates", None, start.elapsed().as_secs_f64(), outcome);
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
