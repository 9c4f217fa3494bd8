//! End-to-end acceptance checks, one test per criterion. Each test prints a
//! single `criterion N: PASS|FAIL ...` line (visible with `--nocapture`) and
//! fails if the criterion does not hold. Runs are serialized so the wall
//! clock limits measure one criterion at a time.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yann_cli::{cmd_benchmark, Run, RunConfig};
use yann_core::envs::{linearize_plant, EnvKind, EnvSpec};
use yann_core::mpqp::{evaluate_pwa, locate_region, PwaFunction};
use yann_core::numerics::{qp_solve, Matrix};
use yann_core::rl::{
    build_design, build_yann_critic_for, build_yann_policy, Adam, AgentConfig, AgentKind, Design,
};
use yann_core::yann::{build_exact_yann, build_zero_block, Network, Op, ZeroBlockSpec};

static SERIAL: Mutex<()> = Mutex::new(());

fn report(n: usize, ok: bool, detail: String) {
    let line = format!(
        "criterion {n}: {} {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    println!("{line}");
    assert!(ok, "{line}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn draw_box(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| rng.random_range(*l..=*h))
        .collect()
}

fn domain_samples(pwa: &PwaFunction, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = pwa.domain.bounding_box().unwrap();
    let mut rng = rng(seed);
    (0..n).map(|_| draw_box(&mut rng, &lo, &hi)).collect()
}

/// Bisection between points of different regions, to 1e-13 along the
/// segment.
fn facet_points(pwa: &PwaFunction, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = pwa.domain.bounding_box().unwrap();
    let mut rng = rng(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let a = draw_box(&mut rng, &lo, &hi);
        let b = draw_box(&mut rng, &lo, &hi);
        let (Some(ra), Some(rb)) = (locate_region(pwa, &a), locate_region(pwa, &b)) else {
            continue;
        };
        if ra == rb {
            continue;
        }
        let at = |t: f64| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect() };
        let (mut t0, mut t1) = (0.0, 1.0);
        let mut ok = true;
        while t1 - t0 > 1e-13 {
            let tm = 0.5 * (t0 + t1);
            match locate_region(pwa, &at(tm)) {
                Some(r) if r == ra => t0 = tm,
                Some(_) => t1 = tm,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            out.push(at(0.5 * (t0 + t1)));
        }
    }
    out
}

fn designs() -> Vec<(&'static str, Design)> {
    vec![
        ("pendulum", build_design(&EnvSpec::pendulum()).unwrap()),
        ("cstr", build_design(&EnvSpec::cstr()).unwrap()),
    ]
}

#[test]
fn criterion_01_pendulum_linearization() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let sys = linearize_plant(&EnvSpec::pendulum()).unwrap();
    let elapsed = t0.elapsed();
    // θ̈ = 15 sin θ + 3u about θ = 0; closed-form ZOH with a = √15
    let (a, dt) = (15f64.sqrt(), 0.05);
    let (c, s) = ((a * dt).cosh(), (a * dt).sinh());
    let exact_a = [[c, s / a], [a * s, c]];
    let exact_b = [3.0 * (c - 1.0) / (a * a), 3.0 * s / a];
    let reference_a = [[1.0188, 0.0503], [0.7547, 1.0188]];
    let reference_b = [0.0038, 0.1509];
    let mut vs_exact = 0.0f64;
    let mut vs_reference = 0.0f64;
    for i in 0..2 {
        vs_exact = vs_exact.max((sys.b[(i, 0)] - exact_b[i]).abs());
        vs_reference = vs_reference.max((sys.b[(i, 0)] - reference_b[i]).abs());
        for j in 0..2 {
            vs_exact = vs_exact.max((sys.a[(i, j)] - exact_a[i][j]).abs());
            vs_reference = vs_reference.max((sys.a[(i, j)] - reference_a[i][j]).abs());
        }
    }
    let ok = vs_exact < 1e-9 && vs_reference <= 5e-5 && elapsed < Duration::from_secs(1);
    report(1, ok, format!("|Δ| vs reference {vs_reference:.1e} (4 dp), vs closed form {vs_exact:.1e}, {elapsed:.2?}"));
}

#[test]
fn criterion_02_mpqp_matches_online_qp() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut details = Vec::new();
    let mut ok = true;
    for spec in [EnvSpec::pendulum(), EnvSpec::cstr()] {
        let t0 = Instant::now();
        let d = build_design(&spec).unwrap();
        let (lo, hi) = d.pwa.domain.bounding_box().unwrap();
        let n = lo.len();
        // finest regular grid that still has ≥ 500 feasible points, thinned to 500
        let mut k = 4usize;
        let pts = loop {
            let mut feasible = Vec::new();
            for mut idx in 0..k.pow(n as u32) {
                let t: Vec<f64> = (0..n)
                    .map(|j| {
                        let i = idx % k;
                        idx /= k;
                        lo[j] + (hi[j] - lo[j]) * (i as f64 + 0.5) / k as f64
                    })
                    .collect();
                let (h, f, poly) = d.mp.qp_at(&t).unwrap();
                let sol = qp_solve(&h, &f, &poly).unwrap();
                if sol.is_optimal() {
                    feasible.push((t, sol.x));
                }
            }
            if feasible.len() >= 500 {
                let stride = feasible.len() / 500;
                break feasible
                    .into_iter()
                    .step_by(stride)
                    .take(500)
                    .collect::<Vec<_>>();
            }
            k += 1;
        };
        let mut worst = 0.0f64;
        let mut uncovered = 0;
        for (t, x) in &pts {
            match evaluate_pwa(&d.pwa, t) {
                Some(u) => worst = worst.max(max_abs_diff(&u, &x[..d.mp.n_first])),
                None => uncovered += 1,
            }
        }
        let elapsed = t0.elapsed();
        ok &= pts.len() == 500
            && uncovered == 0
            && worst <= 1e-6
            && d.pwa.len() == 7
            && elapsed < Duration::from_secs(30);
        details.push(format!("{:?}: {} regions, max |Δu| {worst:.1e} over {} points, {uncovered} uncovered, {elapsed:.2?}", spec.kind, d.pwa.len(), pts.len()));
    }
    report(2, ok, details.join("; "));
}

#[test]
fn criterion_03_yann_exactness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut details = Vec::new();
    let mut ok = true;
    for (name, d) in designs() {
        let t0 = Instant::now();
        let exact = build_exact_yann(&d.pwa).unwrap();
        let actor = build_yann_policy(&d, &AgentConfig::for_env(d.spec.kind))
            .unwrap()
            .net;
        let samples = domain_samples(&d.pwa, 10_000, 3);
        let facets = facet_points(&d.pwa, 200, 4);
        for (what, net) in [("exact", &exact), ("actor", &actor)] {
            let mut worst = 0.0f64;
            let mut outside_nonzero = 0;
            for t in &samples {
                let y = net.forward(t).unwrap();
                match evaluate_pwa(&d.pwa, t) {
                    Some(u) => worst = worst.max(max_abs_diff(&y, &u)),
                    None => outside_nonzero += usize::from(y.iter().any(|v| *v != 0.0)),
                }
            }
            let mut worst_facet = 0.0f64;
            for t in &facets {
                worst_facet = worst_facet.max(max_abs_diff(
                    &net.forward(t).unwrap(),
                    &evaluate_pwa(&d.pwa, t).unwrap(),
                ));
            }
            ok &= worst <= 1e-9 && worst_facet <= 1e-6 && outside_nonzero == 0;
            details.push(format!(
                "{name} {what}: {worst:.1e} / facets {worst_facet:.1e}"
            ));
        }
        let elapsed = t0.elapsed();
        ok &= elapsed < Duration::from_secs(10);
        details.push(format!("{name} {elapsed:.2?}"));
    }
    report(3, ok, details.join(", "));
}

fn affine_weights(net: &Network, label: &str) -> Matrix {
    match &net.node(label).unwrap().op {
        Op::Affine(a) => a.weight.clone(),
        _ => panic!("{label} is not affine"),
    }
}

#[test]
fn criterion_04_zero_initialization() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut ok = true;
    let mut details = Vec::new();
    for hidden in [8, 9] {
        let spec = ZeroBlockSpec {
            rng_seed: 40 + hidden as u64,
            ..ZeroBlockSpec::new(3, hidden, 2)
        };
        let mut net = build_zero_block(&spec).unwrap();
        let mut rng = rng(hidden as u64);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            worst = worst.max(
                net.forward(&x)
                    .unwrap()
                    .iter()
                    .map(|v| v.abs())
                    .fold(0.0, f64::max),
            );
        }
        // two Adam steps on ½‖f(x) − y‖² with y ≠ 0, all inputs positive
        let w1_0 = affine_weights(&net, "zero.l1");
        let w2_0 = affine_weights(&net, "zero.l2");
        let mut opt = Adam::for_network(&net);
        let (x, y) = (vec![0.3, 0.7, 1.1], vec![1.0, -0.5]);
        for _ in 0..2 {
            let f = net.forward(&x).unwrap();
            let up: Vec<f64> = f.iter().zip(&y).map(|(a, b)| a - b).collect();
            let g = net.gradients(&x, &up).unwrap();
            opt.step_network(&mut net, &g, 1e-3).unwrap();
        }
        let w1 = affine_weights(&net, "zero.l1");
        let w2 = affine_weights(&net, "zero.l2");
        let half = hidden / 2;
        // initially row k + half mirrors row k; after the steps some pair no longer sums to zero
        let mirrored_before =
            (0..half).all(|k| (0..3).all(|j| w1_0[(k, j)] == -w1_0[(k + half, j)]));
        let broken =
            (0..half).any(|k| (0..3).any(|j| (w1[(k, j)] + w1[(k + half, j)]).abs() > 1e-12));
        let w2_changed = w2
            .as_slice()
            .iter()
            .zip(w2_0.as_slice())
            .any(|(a, b)| a != b);
        ok &= worst <= 1e-15 && mirrored_before && broken && w2_changed;
        details.push(format!(
            "h={hidden}: max |out| {worst:.0e}, mirror broken {broken}, layer-2 moved {w2_changed}"
        ));
    }
    report(4, ok, details.join("; "));
}

fn quad(c: &Matrix, z: &[f64]) -> f64 {
    z.iter().zip(c.matvec(z).unwrap()).map(|(a, b)| a * b).sum()
}

#[test]
fn criterion_05_critic_exactness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut ok = true;
    let mut details = Vec::new();
    for (name, d) in designs() {
        let cfg = AgentConfig::for_env(d.spec.kind);
        let net = build_yann_critic_for(&d, &cfg).unwrap();
        let (a, b, p, q, r, g) = (&d.sys.a, &d.sys.b, &d.mpc.p, &d.mpc.qw, &d.mpc.r, cfg.gamma);
        let at = a.transpose();
        let bt = b.transpose();
        let ss = q + &at.matmul(p).unwrap().matmul(a).unwrap().scale(g);
        let su = at.matmul(p).unwrap().matmul(b).unwrap().scale(g);
        let uu = r + &bt.matmul(p).unwrap().matmul(b).unwrap().scale(g);
        let mut rng = rng(5);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let s = draw_box(&mut rng, &d.spec.state_low, &d.spec.state_high);
            let u = draw_box(&mut rng, &d.spec.u_low, &d.spec.u_high);
            let cross: f64 = s
                .iter()
                .zip(su.matvec(&u).unwrap())
                .map(|(x, y)| x * y)
                .sum();
            let want = quad(&ss, &s) + 2.0 * cross + quad(&uu, &u);
            let got = net.forward(&[s, u].concat()).unwrap()[0];
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
        // P = Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA
        let atpb = at.matmul(p).unwrap().matmul(b).unwrap();
        let k = (r + &bt.matmul(p).unwrap().matmul(b).unwrap())
            .solve_matrix(&atpb.transpose())
            .unwrap();
        let rhs = &(q + &at.matmul(p).unwrap().matmul(a).unwrap()) - &atpb.matmul(&k).unwrap();
        let residual = (&rhs - p).max_abs();
        ok &= worst <= 1e-9 && residual <= 1e-8;
        details.push(format!(
            "{name}: Q error {worst:.1e}, Riccati residual {residual:.1e}"
        ));
    }
    report(5, ok, details.join("; "));
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(0.0, f64::max);
    max_abs_diff(a, b) / scale.max(1e-300)
}

fn fd_params(net: &Network, x: &[f64], w: &[f64]) -> Vec<f64> {
    let p0 = net.trainable_params();
    let mut work = net.clone();
    let eval = |net: &Network| {
        net.forward(x)
            .unwrap()
            .iter()
            .zip(w)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    (0..p0.len())
        .map(|k| {
            let h = 1e-6 * p0[k].abs().max(1.0);
            let mut p = p0.clone();
            p[k] += h;
            work.set_trainable_params(&p).unwrap();
            let up = eval(&work);
            p[k] -= 2.0 * h;
            work.set_trainable_params(&p).unwrap();
            (up - eval(&work)) / (2.0 * h)
        })
        .collect()
}

fn jitter(net: &mut Network, seed: u64) {
    let mut rng = rng(seed);
    let p: Vec<f64> = net
        .trainable_params()
        .iter()
        .map(|v| v + 0.05 * rng.random_range(-1.0..1.0))
        .collect();
    net.set_trainable_params(&p).unwrap();
}

#[test]
fn criterion_06_gradient_integrity() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut ok = true;
    let mut details = Vec::new();
    for (name, d) in designs() {
        let cfg = AgentConfig {
            train_quadratic: true,
            ..AgentConfig::for_env(d.spec.kind)
        };
        let mut actor = build_yann_policy(&d, &cfg).unwrap().net;
        let mut critic = build_yann_critic_for(&d, &cfg).unwrap();
        jitter(&mut actor, 61);
        jitter(&mut critic, 62);
        let mut worst_actor = 0.0f64;
        let mut n = 0;
        for t in domain_samples(&d.pwa, 5000, 63) {
            // differentiable: at least 1e-4 inside a region
            let Some(r) = locate_region(&d.pwa, &t) else {
                continue;
            };
            if d.pwa.regions[r].poly.max_violation(&t) > -1e-4 {
                continue;
            }
            let g = actor.gradients(&t, &[1.0]).unwrap().flatten(&actor);
            worst_actor = worst_actor.max(rel_err(&g, &fd_params(&actor, &t, &[1.0])));
            n += 1;
            if n == 20 {
                break;
            }
        }
        let mut rng = rng(64);
        let mut worst_critic = 0.0f64;
        for _ in 0..20 {
            let z = [
                draw_box(&mut rng, &d.spec.state_low, &d.spec.state_high),
                draw_box(&mut rng, &d.spec.u_low, &d.spec.u_high),
            ]
            .concat();
            let g = critic.gradients(&z, &[1.0]).unwrap().flatten(&critic);
            worst_critic = worst_critic.max(rel_err(&g, &fd_params(&critic, &z, &[1.0])));
        }
        ok &= n == 20 && worst_actor <= 1e-5 && worst_critic <= 1e-5;
        details.push(format!(
            "{name}: actor {worst_actor:.1e} ({n} pts), critic {worst_critic:.1e} (20 pts)"
        ));
    }
    report(6, ok, details.join("; "));
}

#[test]
fn criterion_07_parameter_counts() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut ok = true;
    let mut details = Vec::new();
    for (name, d, total, trainable) in [
        (
            "pendulum",
            build_design(&EnvSpec::pendulum()).unwrap(),
            15_188,
            12_880,
        ),
        (
            "cstr",
            build_design(&EnvSpec::cstr()).unwrap(),
            5_320,
            3_416,
        ),
    ] {
        let c = build_yann_policy(&d, &AgentConfig::for_env(d.spec.kind))
            .unwrap()
            .net
            .param_count();
        ok &= c.total == total && c.trainable == trainable;
        details.push(format!(
            "{name} actor {}/{} (expected {total}/{trainable})",
            c.total, c.trainable
        ));
    }
    report(7, ok, details.join("; "));
}

fn benchmark(
    env: &str,
    dir: &std::path::Path,
    extra: &[&str],
) -> yann_cli::commands::BenchmarkSuite {
    let mut o = vec![
        format!("env={env}"),
        format!(
            "out={}",
            serde_json::to_string(&dir.display().to_string()).unwrap()
        ),
    ];
    o.extend(extra.iter().map(|s| s.to_string()));
    let run = Run::new(RunConfig::resolve(None, &o).unwrap()).unwrap();
    cmd_benchmark(&run).unwrap()
}

#[test]
fn criterion_08_pendulum_benchmark_trend() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let s = benchmark("pendulum", dir.path(), &[]);
    let elapsed = t0.elapsed();
    println!("{}", s.table);
    let yann = s
        .reports
        .iter()
        .find(|r| r.agent == AgentKind::YannDdpg)
        .unwrap();
    let ddpg = s
        .reports
        .iter()
        .find(|r| r.agent == AgentKind::Ddpg)
        .unwrap();
    let a = yann.avg_initial <= ddpg.avg_initial / 3.0;
    let b = yann.avg_final <= 1.05 * yann.avg_initial;
    let ok = a
        && b
        && yann.train_episodes == 50
        && yann.rows.len() == 10
        && elapsed < Duration::from_secs(600);
    report(
        8,
        ok,
        format!(
            "(a) YANN-DDPG initial {:.2} vs DDPG initial {:.2} (ratio {:.2}); (b) YANN-DDPG final/initial {:.3}; {elapsed:.1?}",
            yann.avg_initial,
            ddpg.avg_initial,
            yann.avg_initial / ddpg.avg_initial,
            yann.avg_final / yann.avg_initial
        ),
    );
}

#[test]
fn criterion_09_reactor_safety() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let s = benchmark("cstr", dir.path(), &[]);
    let elapsed = t0.elapsed();
    println!("{}", s.table);
    let yann = s
        .reports
        .iter()
        .find(|r| r.agent == AgentKind::YannDdpg)
        .unwrap();
    let ddpg = s
        .reports
        .iter()
        .find(|r| r.agent == AgentKind::Ddpg)
        .unwrap();
    let ok = yann.train_violations == 0
        && yann.eval_violations == 0
        && yann.train_episodes == 50
        && elapsed < Duration::from_secs(900);
    report(
        9,
        ok,
        format!(
            "YANN-DDPG violations: training {}, evaluation {}; DDPG (reported only): training {}, evaluation {}; {elapsed:.1?}",
            yann.train_violations, yann.eval_violations, ddpg.train_violations, ddpg.eval_violations
        ),
    );
}

fn csv_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn criterion_10_benchmark_determinism() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = ["seed=3", "train_episodes=3", "eval_episodes=3"];
    benchmark("pendulum", a.path(), &cfg);
    benchmark("pendulum", b.path(), &cfg);
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    let same = !fa.is_empty() && fa == fb;
    report(
        10,
        same,
        format!(
            "{} CSV files compared: {}",
            fa.len(),
            fa.iter()
                .map(|f| f.0.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

#[test]
fn reactor_design_is_the_reference_model() {
    // guards the model criterion 2 and 9 run on
    let d = build_design(&EnvSpec::cstr()).unwrap();
    assert_eq!(d.spec.kind, EnvKind::Cstr);
    assert_eq!(d.sys.state_dim(), 4);
}
