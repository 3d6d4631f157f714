//! Acceptance criteria A1–A10. Runs without the libtest harness so that one
//! PASS/FAIL line per criterion is always printed; exits non-zero on any FAIL.

use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use gcflow::flow::{Advance, Case, Flow, FlowConfig, FlowResult, FlowStatus, InitialBody};
use gcflow::functionals::{ma_residual, Problem};
use gcflow::geometry::{assemble_state, lemma_ur_check, pushforward_weight};
use gcflow::harmonics::HarmonicSeries;
use gcflow::oracle::{ellipse_oracle, newton_solve, sphere_radius_for_volume, NewtonProblem};
use gcflow::orlicz::{DensitySpec, PhiSpec};
use gcflow::sphere::{Resolution, ScalarField, SphereGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn perturbed_circle() -> InitialBody {
    InitialBody::Harmonic(HarmonicSeries::constant(1.0).with_term(2, 2, 0.1))
}

fn conservation_config(n: usize) -> FlowConfig {
    let mut c = FlowConfig::new(
        Resolution::Circle(n),
        PhiSpec::power(2.0),
        DensitySpec::constant(1.0),
        perturbed_circle(),
        Case::II,
    );
    c.tol_stop = 1e-8;
    c.tol_theta = 1e-12;
    c.max_steps = 2_000_000;
    c
}

fn oracle_config() -> FlowConfig {
    let f = DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(2, 2, 0.2), true);
    let mut c = FlowConfig::new(
        Resolution::Circle(256),
        PhiSpec::power(2.0),
        f,
        InitialBody::Sphere { radius: 1.0 },
        Case::II,
    );
    c.tol_stop = 1e-9;
    c.tol_theta = 1e-12;
    c.max_steps = 2_000_000;
    c
}

struct Timed {
    result: FlowResult,
    elapsed: Duration,
}

fn timed_run(config: FlowConfig) -> Timed {
    let start = Instant::now();
    let result = gcflow::flow::run(config).expect("flow runs");
    Timed {
        result,
        elapsed: start.elapsed(),
    }
}

fn conservation_256() -> &'static Timed {
    static RUN: OnceLock<Timed> = OnceLock::new();
    RUN.get_or_init(|| timed_run(conservation_config(256)))
}

fn conservation_512() -> &'static Timed {
    static RUN: OnceLock<Timed> = OnceLock::new();
    RUN.get_or_init(|| timed_run(conservation_config(512)))
}

fn oracle_run() -> &'static Timed {
    static RUN: OnceLock<Timed> = OnceLock::new();
    RUN.get_or_init(|| timed_run(oracle_config()))
}

fn fixed_point_error(res: Resolution, phi: PhiSpec, case: Case) -> (f64, f64, Duration) {
    let cfg = FlowConfig::new(res, phi, DensitySpec::constant(1.0), InitialBody::Sphere { radius: 1.0 }, case);
    let start = Instant::now();
    let mut flow = Flow::new(cfg).unwrap();
    for _ in 0..500 {
        match flow.advance().unwrap() {
            Advance::Accepted(_) => {}
            other => panic!("sphere step failed: {other:?}"),
        }
    }
    let u_err = flow.state().u().iter().map(|u| (u - 1.0).abs()).fold(0.0, f64::max);
    let th_err = (flow.record().snapshot.theta - 1.0).abs();
    (u_err, th_err, start.elapsed())
}

fn a1_sphere_fixed_point() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (res, tol) in [
        (Resolution::Circle(256), 1e-8),
        (Resolution::LatLon { lat: 16, lon: 32 }, 1e-5),
    ] {
        for (phi, case) in [(PhiSpec::power(-1.0), Case::I), (PhiSpec::power(2.0), Case::II)] {
            let label = format!("n={} {}", res.dim(), phi);
            let (ue, te, dt) = fixed_point_error(res, phi, case);
            let ok = ue <= tol && te <= tol && dt < Duration::from_secs(10);
            pass &= ok;
            parts.push(format!("[{label}: sup|u-1|={ue:.1e} |θ-1|={te:.1e} {:.2}s]", dt.as_secs_f64()));
        }
    }
    (pass, parts.join(" "))
}

fn a2_volume_conservation() -> Outcome {
    let (a, b) = (conservation_256(), conservation_512());
    let (da, db) = (a.result.v_drift, b.result.v_drift);
    let ratio = da / db;
    let converged = a.result.status == FlowStatus::Converged && b.result.status == FlowStatus::Converged;
    let fast = a.elapsed < Duration::from_secs(30) && b.elapsed < Duration::from_secs(30);
    (converged && da <= 1e-4 && ratio >= 3.0 && fast,
        format!(
            "drift N=256 {da:.2e}, N=512 {db:.2e}, ratio {ratio:.1} (>= 3), runtimes {:.1}s / {:.1}s",
            a.elapsed.as_secs_f64(),
            b.elapsed.as_secs_f64()
        ),
    )
}

fn entropy_report(res: &FlowResult) -> (bool, f64, usize, usize) {
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for w in res.diagnostics.windows(2) {
        let (j0, j1) = (w[0].snapshot.j_phi, w[1].snapshot.j_phi);
        let slack = 1e-10 * j0.abs().max(1.0);
        worst = worst.max((j1 - j0) / slack);
        ok &= j1 - j0 <= slack;
    }
    (ok, worst, res.rejections.entropy_increase, res.attempts)
}

fn a3_entropy_monotone() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, run) in [("conservation", conservation_256()), ("oracle", oracle_run())] {
        let (ok, worst, rej, attempts) = entropy_report(&run.result);
        let frac = rej as f64 / attempts as f64;
        pass &= ok && frac < 0.01;
        parts.push(format!(
            "[{name}: max ΔJ/slack {worst:.2e}, J rejections {rej}/{attempts} attempts]"
        ));
    }
    (pass, parts.join(" "))
}

fn a4_conservation_pinned_limit() -> Outcome {
    let res = &conservation_256().result;
    let v0 = res.diagnostics[0].snapshot.v_phi;
    let rho = (v0 / std::f64::consts::PI).sqrt();
    let dev = res.state.u().iter().map(|u| (u - rho).abs()).fold(0.0, f64::max);
    (res.status == FlowStatus::Converged && dev <= 1e-4,
        format!("ρ∞ = {rho:.12}, sup|u - ρ∞| = {dev:.2e} (<= 1e-4)"),
    )
}

fn a5_oracle_equivalence() -> Outcome {
    let run = oracle_run();
    let res = &run.result;
    let grid = res.state.grid().clone();
    let density = oracle_config().density.sample(&grid).unwrap();
    let problem = Problem::new(PhiSpec::power(2.0), None, density).unwrap();
    let v0 = res.diagnostics[0].snapshot.v_phi;
    let rho = sphere_radius_for_volume(&grid, &problem, v0).unwrap();
    let np = NewtonProblem::new(grid.clone(), problem, v0).unwrap();
    let sol = newton_solve(&np, &ScalarField::constant(&grid, rho)).unwrap();
    let du = res
        .state
        .u()
        .iter()
        .zip(sol.u.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let dl = (res.lambda0 - sol.lambda).abs();
    (res.status == FlowStatus::Converged && du <= 1e-5 && dl <= 1e-5 && run.elapsed < Duration::from_secs(60),
        format!(
            "sup|u_flow - u_newton| = {du:.2e}, |λ0 - λ*| = {dl:.2e}, λ* = {:.10}, runtime {:.1}s",
            sol.lambda,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn a6_case_i_run() -> Outcome {
    let f = DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(1, 1, 0.3), false);
    let mut cfg = FlowConfig::new(
        Resolution::Circle(256),
        PhiSpec::power(-2.0),
        f,
        InitialBody::Sphere { radius: 1.0 },
        Case::I,
    );
    cfg.base_point = Some(1.0);
    cfg.tol_stop = 1e-7;
    cfg.tol_theta = 1e-12;
    cfg.max_steps = 2_000_000;
    let res = gcflow::flow::run(cfg).unwrap();
    let density = res
        .state
        .grid()
        .clone();
    let problem = Problem::new(
        PhiSpec::power(-2.0),
        Some(1.0),
        DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(1, 1, 0.3), false)
            .sample(&density)
            .unwrap(),
    )
    .unwrap();
    let residual = ma_residual(&res.state, &problem, res.lambda0).unwrap().sup;
    let within = res.diagnostics.iter().all(|r| res.guards.violation(r).is_none());
    let k_med = median(res.diagnostics.iter().map(|r| r.k_max).collect());
    let b_med = median(res.diagnostics.iter().map(|r| r.max_eig_b_max).collect());
    let bounded = res
        .diagnostics
        .iter()
        .all(|r| r.k_max < 10.0 * k_med && r.max_eig_b_max < 10.0 * b_med);
    let last = res.diagnostics.last().unwrap();
    (res.status == FlowStatus::Converged && residual <= 1e-4 && within && bounded,
        format!(
            "status {}, residual {residual:.2e}, λ0 = {:.10}, u ∈ [{:.4}, {:.4}], max|Du|/u {:.3e}, K_max {:.4}, monitors within rails: {within}",
            res.status, res.lambda0, last.u_min, last.u_max, last.grad_ratio_max, last.k_max
        ),
    )
}

fn weight_defect(n: usize) -> f64 {
    let grid = Arc::new(SphereGrid::circle(n).unwrap());
    let e = ellipse_oracle(1.5, 0.7, &grid).unwrap();
    let s = assemble_state(grid.clone(), e.u).unwrap();
    let w = pushforward_weight(&s).unwrap();
    (grid.quadrature(&w).unwrap() / (2.0 * std::f64::consts::PI) - 1.0).abs()
}

fn a7_pushforward_identity() -> Outcome {
    let (a, b) = (weight_defect(256), weight_defect(512));
    (b <= 1e-6 && a / b >= 3.5,
        format!("|Σw/2π - 1|: N=256 {a:.2e}, N=512 {b:.2e}, ratio {:.1}", a / b),
    )
}

fn curvature_radius_error(n: usize) -> f64 {
    let grid = Arc::new(SphereGrid::circle(n).unwrap());
    let e = ellipse_oracle(1.5, 0.7, &grid).unwrap();
    let s = assemble_state(grid.clone(), e.u).unwrap();
    (0..grid.len())
        .map(|i| (s.b()[i].xx / e.curvature_radius[i] - 1.0).abs())
        .fold(0.0, f64::max)
}

fn random_even_body(rng: &mut ChaCha8Rng, dim: usize) -> HarmonicSeries {
    let mut s = HarmonicSeries::constant(1.0);
    for l in [2u32, 4] {
        let ms: Vec<i32> = if dim == 1 {
            vec![l as i32, -(l as i32)]
        } else {
            (-(l as i32)..=l as i32).collect()
        };
        for m in ms {
            let scale = if l == 2 { 0.03 } else { 0.004 };
            s = s.with_term(l, m, rng.random_range(-scale..scale));
        }
    }
    s
}

fn a8_geometry_closed_forms() -> Outcome {
    let (a, b) = (curvature_radius_error(256), curvature_radius_error(512));
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = f64::INFINITY;
    let mut convex = 0;
    for k in 0..20 {
        let dim = 1 + k % 2;
        let grid = Arc::new(if dim == 1 {
            SphereGrid::circle(256).unwrap()
        } else {
            SphereGrid::lat_lon(16, 32).unwrap()
        });
        let series = random_even_body(&mut rng, dim);
        let u = ScalarField::from_fn(&grid, |x| series.eval(x));
        let s = assemble_state(grid, u).unwrap();
        if s.is_strictly_convex() {
            convex += 1;
        }
        let rep = lemma_ur_check(&s);
        worst = worst.min(rep.support_residual).min(rep.radial_residual);
    }
    (a <= 1e-4 && a / b >= 3.5 && worst >= -1e-8 && convex == 20,
        format!(
            "curvature radius rel. error N=256 {a:.2e}, N=512 {b:.2e} (ratio {:.1}); min inequality residual over 20 bodies {worst:.2e}",
            a / b
        ),
    )
}

fn a9_symmetry_preserved() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for run in [conservation_256(), oracle_run()] {
        for r in &run.result.diagnostics {
            worst = worst.max(r.odd_part);
            steps += 1;
        }
    }
    // an S² case with an even, non-constant density
    let f = DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(2, 1, 0.1), true);
    let u0 = InitialBody::Harmonic(HarmonicSeries::constant(1.0).with_term(2, -2, 0.05));
    let mut cfg = FlowConfig::new(Resolution::LatLon { lat: 16, lon: 32 }, PhiSpec::power(2.0), f, u0, Case::II);
    cfg.max_steps = 300;
    let res = gcflow::flow::run(cfg).unwrap();
    for r in &res.diagnostics {
        worst = worst.max(r.odd_part);
        steps += 1;
    }
    (worst <= 1e-12,
        format!("max sup|u(x) - u(-x)| over {steps} recorded states = {worst:.1e}"),
    )
}

fn fixed_step_end_state(dt: f64, t_end: f64) -> Vec<f64> {
    let mut cfg = conservation_config(64);
    cfg.dt0 = Some(dt);
    cfg.dt_min = dt;
    cfg.dt_max = dt;
    let mut flow = Flow::new(cfg).unwrap();
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        match flow.advance().unwrap() {
            Advance::Accepted(r) => assert_eq!(r.dt, dt),
            other => panic!("{other:?}"),
        }
    }
    flow.state().u().to_vec()
}

fn a10_temporal_order() -> Outcome {
    let (dt, t_end) = (2e-3, 0.2);
    let coarse = fixed_step_end_state(dt, t_end);
    let half = fixed_step_end_state(dt / 2.0, t_end);
    let reference = fixed_step_end_state(dt / 8.0, t_end);
    let dist = |a: &[f64]| a.iter().zip(&reference).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (e1, e2) = (dist(&coarse), dist(&half));
    (e1 / e2 >= 3.5,
        format!("end-state error vs dt/8: dt {e1:.2e}, dt/2 {e2:.2e}, ratio {:.2}", e1 / e2),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("A1", a1_sphere_fixed_point),
        ("A2", a2_volume_conservation),
        ("A3", a3_entropy_monotone),
        ("A4", a4_conservation_pinned_limit),
        ("A5", a5_oracle_equivalence),
        ("A6", a6_case_i_run),
        ("A7", a7_pushforward_identity),
        ("A8", a8_geometry_closed_forms),
        ("A9", a9_symmetry_preserved),
        ("A10", a10_temporal_order),
    ];
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(*f)).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| (false, "panicked".to_string())))
            .collect()
    });
    let mut failed = 0;
    for ((id, _), (pass, detail)) in criteria.iter().zip(outcomes) {
        println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
