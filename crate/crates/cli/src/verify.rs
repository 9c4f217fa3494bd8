//! Self-checks behind `yann verify`. Each check compares a construction
//! against an independent computation of the same quantity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use yann_core::envs::{
    linearize_plant, EnvKind, EnvSpec, PENDULUM_REFERENCE_A, PENDULUM_REFERENCE_B,
};
use yann_core::mpqp::{evaluate_pwa, locate_region, PwaFunction};
use yann_core::numerics::Matrix;
use yann_core::rl::{build_yann_critic_for, build_yann_policy, AgentConfig, Design};
use yann_core::yann::{build_exact_yann, build_zero_block, Network, ZeroBlockSpec};

pub const EXACT_TOL: f64 = 1e-9;
pub const FACET_TOL: f64 = 1e-6;
pub const MPQP_TOL: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-5;
pub const DARE_TOL: f64 = 1e-8;
pub const ZERO_TOL: f64 = 1e-15;
pub const LINEARIZATION_TOL: f64 = 5e-5;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The measured quantity (error, residual, …).
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    fn bound(name: impl Into<String>, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
            detail: detail.into(),
        }
    }

    fn failed(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            limit: f64::NAN,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        if self.value.is_nan() {
            format!("[{tag}] {}: {}", self.name, self.detail)
        } else {
            format!(
                "[{tag}] {}: {:.3e} (limit {:.0e}) {}",
                self.name, self.value, self.limit, self.detail
            )
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn domain_samples(pwa: &PwaFunction, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = pwa.domain.bounding_box().expect("bounded domain");
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            lo.iter()
                .zip(&hi)
                .map(|(l, h)| rng.random_range(*l..=*h))
                .collect()
        })
        .collect()
}

/// Points within ~1e-13 of a boundary shared by two regions, by bisection
/// along random segments.
pub fn facet_points(pwa: &PwaFunction, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = pwa.domain.bounding_box().expect("bounded domain");
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for _ in 0..1000 * n {
        if out.len() == n {
            break;
        }
        let a: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| rng.random_range(*l..=*h))
            .collect();
        let b: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| rng.random_range(*l..=*h))
            .collect();
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

pub fn linearization(spec: &EnvSpec) -> Option<Check> {
    if spec.kind != EnvKind::Pendulum {
        return None;
    }
    let name = "linearization vs reference";
    let sys = match linearize_plant(spec) {
        Ok(s) => s,
        Err(e) => return Some(Check::failed(name, e.to_string())),
    };
    let mut err = 0.0f64;
    for i in 0..2 {
        err = err.max((sys.b[(i, 0)] - PENDULUM_REFERENCE_B[i]).abs());
        for j in 0..2 {
            err = err.max((sys.a[(i, j)] - PENDULUM_REFERENCE_A[i][j]).abs());
        }
    }
    Some(Check::bound(
        name,
        err,
        LINEARIZATION_TOL,
        "max |A−A_ref|, |B−B_ref|",
    ))
}

/// Explicit law against the online QP at (up to) `want` feasible points of
/// a regular grid.
pub fn mpqp_vs_qp(design: &Design, want: usize) -> Check {
    let name = "mp-QP vs online QP";
    let pwa = &design.pwa;
    let (lo, hi) = match pwa.domain.bounding_box() {
        Ok(b) => b,
        Err(e) => return Check::failed(name, e.to_string()),
    };
    let n = lo.len();
    let mut k = 4usize;
    let pts = loop {
        let mut pts = Vec::new();
        for mut idx in 0..k.pow(n as u32) {
            let t: Vec<f64> = (0..n)
                .map(|j| {
                    let i = idx % k;
                    idx /= k;
                    lo[j] + (hi[j] - lo[j]) * (i as f64 + 0.5) / k as f64
                })
                .collect();
            if matches!(design.mp.optimal_value(&t), Ok(Some(_))) {
                pts.push(t);
            }
        }
        if pts.len() >= want || k > 200 {
            let stride = (pts.len() / want).max(1);
            break pts
                .into_iter()
                .step_by(stride)
                .take(want)
                .collect::<Vec<_>>();
        }
        k += 1;
    };
    let mut worst = 0.0f64;
    for t in &pts {
        let Ok(sol) = design.mp.solve_at(t) else {
            return Check::failed(name, format!("QP failed at {t:?}"));
        };
        let Some(u) = evaluate_pwa(pwa, t) else {
            return Check::failed(name, format!("feasible {t:?} is not covered"));
        };
        worst = worst.max(max_abs_diff(&u, &sol.x[..design.mp.n_first]));
    }
    Check::bound(
        name,
        worst,
        MPQP_TOL,
        format!("{} grid points, {} regions", pts.len(), pwa.len()),
    )
}

/// `net` against the law on random domain samples and facet points.
pub fn exactness(
    label: &str,
    net: &Network,
    pwa: &PwaFunction,
    samples: usize,
    facets: usize,
) -> Check {
    let name = format!("exactness ({label})");
    let mut worst = 0.0f64;
    for t in domain_samples(pwa, samples, 101) {
        let Ok(y) = net.forward(&t) else {
            return Check::failed(name, "network does not accept the parameter");
        };
        let want = evaluate_pwa(pwa, &t).unwrap_or_else(|| vec![0.0; pwa.n_u_applied]);
        worst = worst.max(max_abs_diff(&y, &want));
    }
    let mut worst_facet = 0.0f64;
    let fp = facet_points(pwa, facets, 102);
    for t in &fp {
        let y = net.forward(t).unwrap_or_default();
        worst_facet = worst_facet.max(max_abs_diff(
            &y,
            &evaluate_pwa(pwa, t).expect("facet points are covered"),
        ));
    }
    let mut c = Check::bound(
        name,
        worst,
        EXACT_TOL,
        format!(
            "{samples} samples; facets {worst_facet:.1e} over {} points",
            fp.len()
        ),
    );
    c.passed &= worst_facet <= FACET_TOL;
    c
}

pub fn zero_blocks(in_dim: usize, out_dim: usize, hidden: usize) -> Check {
    let mut worst = 0.0f64;
    for h in [hidden, hidden + 1] {
        let spec = ZeroBlockSpec {
            rng_seed: 7,
            ..ZeroBlockSpec::new(in_dim, h, out_dim)
        };
        let net = match build_zero_block(&spec) {
            Ok(n) => n,
            Err(e) => return Check::failed("zero blocks", e.to_string()),
        };
        let mut rng = rng(h as u64);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..in_dim).map(|_| rng.random_range(-10.0..10.0)).collect();
            let y = net.forward(&x).expect("dimensions match");
            worst = worst.max(y.iter().map(|v| v.abs()).fold(0.0, f64::max));
        }
    }
    Check::bound(
        "zero blocks",
        worst,
        ZERO_TOL,
        format!("widths {hidden} and {}", hidden + 1),
    )
}

fn quad(c: &Matrix, z: &[f64]) -> f64 {
    let cz = c.matvec(z).expect("square");
    z.iter().zip(&cz).map(|(a, b)| a * b).sum()
}

/// Fresh critic against the closed-form Q built from the blocks here.
pub fn critic_exactness(design: &Design, cfg: &AgentConfig) -> Check {
    let name = "critic exactness";
    let net = match build_yann_critic_for(design, cfg) {
        Ok(n) => n,
        Err(e) => return Check::failed(name, e.to_string()),
    };
    let (a, b, p, g) = (&design.sys.a, &design.sys.b, &design.mpc.p, cfg.gamma);
    let at = a.transpose();
    let bt = b.transpose();
    let pa = p.matmul(a).expect("square");
    let pb = p.matmul(b).expect("shape");
    let ss = &design.mpc.qw + &at.matmul(&pa).expect("shape").scale(g);
    let su = at.matmul(&pb).expect("shape").scale(g);
    let uu = &design.mpc.r + &bt.matmul(&pb).expect("shape").scale(g);
    let spec = &design.spec;
    let mut rng = rng(201);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s: Vec<f64> = spec
            .state_low
            .iter()
            .zip(&spec.state_high)
            .map(|(l, h)| rng.random_range(*l..=*h))
            .collect();
        let u: Vec<f64> = spec
            .u_low
            .iter()
            .zip(&spec.u_high)
            .map(|(l, h)| rng.random_range(*l..=*h))
            .collect();
        let cross: f64 = s
            .iter()
            .zip(su.matvec(&u).expect("shape"))
            .map(|(x, y)| x * y)
            .sum();
        let want = quad(&ss, &s) + 2.0 * cross + quad(&uu, &u);
        let got = net.forward(&[s, u].concat()).expect("dimensions match")[0];
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    Check::bound(name, worst, EXACT_TOL, "relative, 1000 random (s,u)")
}

/// `‖Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA − P‖∞`, relative to `‖P‖`.
pub fn dare_residual(design: &Design) -> Check {
    let (a, b, p, q, r) = (
        &design.sys.a,
        &design.sys.b,
        &design.mpc.p,
        &design.mpc.qw,
        &design.mpc.r,
    );
    let run = || -> yann_core::Result<f64> {
        let at = a.transpose();
        let atpb = at.matmul(p)?.matmul(b)?;
        let s = r + &b.transpose().matmul(p)?.matmul(b)?;
        let k = s.solve_matrix(&atpb.transpose())?;
        let rhs = &(q + &at.matmul(p)?.matmul(a)?) - &atpb.matmul(&k)?;
        Ok((&rhs - p).max_abs() / p.max_abs().max(1.0))
    };
    match run() {
        Ok(res) => Check::bound("Riccati residual", res, DARE_TOL, "relative to max |P|"),
        Err(e) => Check::failed("Riccati residual", e.to_string()),
    }
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
            .expect("dims")
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
            work.set_trainable_params(&p).expect("length");
            let up = eval(&work);
            p[k] -= 2.0 * h;
            work.set_trainable_params(&p).expect("length");
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
    net.set_trainable_params(&p).expect("length");
}

/// Backpropagated parameter gradients against central differences at 20
/// differentiable points each for actor and critic (parameters moved off
/// their symmetric start first).
pub fn gradients(design: &Design, cfg: &AgentConfig) -> Vec<Check> {
    let mut out = Vec::new();
    match build_yann_policy(design, cfg) {
        Ok(policy) => {
            let mut net = policy.net;
            jitter(&mut net, 301);
            let w = vec![1.0; design.pwa.n_u_applied];
            let mut worst = 0.0f64;
            let mut n = 0;
            for t in domain_samples(&design.pwa, 2000, 302) {
                let Some(r) = locate_region(&design.pwa, &t) else {
                    continue;
                };
                if design.pwa.regions[r].poly.max_violation(&t) > -1e-4 {
                    continue;
                }
                let g = net.gradients(&t, &w).expect("dims").flatten(&net);
                worst = worst.max(rel_err(&g, &fd_params(&net, &t, &w)));
                n += 1;
                if n == 20 {
                    break;
                }
            }
            out.push(Check::bound(
                "actor gradients",
                worst,
                GRAD_TOL,
                format!("{n} points"),
            ));
        }
        Err(e) => out.push(Check::failed("actor gradients", e.to_string())),
    }
    let mut critic_cfg = cfg.clone();
    critic_cfg.train_quadratic = true;
    match build_yann_critic_for(design, &critic_cfg) {
        Ok(mut net) => {
            jitter(&mut net, 303);
            let spec = &design.spec;
            let mut rng = rng(304);
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let mut z: Vec<f64> = spec
                    .state_low
                    .iter()
                    .zip(&spec.state_high)
                    .map(|(l, h)| rng.random_range(*l..=*h))
                    .collect();
                z.extend(
                    spec.u_low
                        .iter()
                        .zip(&spec.u_high)
                        .map(|(l, h)| rng.random_range(*l..=*h)),
                );
                let g = net.gradients(&z, &[1.0]).expect("dims").flatten(&net);
                worst = worst.max(rel_err(&g, &fd_params(&net, &z, &[1.0])));
            }
            out.push(Check::bound(
                "critic gradients",
                worst,
                GRAD_TOL,
                "20 points",
            ));
        }
        Err(e) => out.push(Check::failed("critic gradients", e.to_string())),
    }
    out
}

/// Every check for a design, in report order.
pub fn run_all(design: &Design, cfg: &AgentConfig, saved: &[(String, Network)]) -> Vec<Check> {
    let mut checks = Vec::new();
    checks.extend(linearization(&design.spec));
    checks.push(mpqp_vs_qp(design, 500));
    match build_exact_yann(&design.pwa) {
        Ok(net) => checks.push(exactness("exact YANN", &net, &design.pwa, 10_000, 200)),
        Err(e) => checks.push(Check::failed("exactness (exact YANN)", e.to_string())),
    }
    match build_yann_policy(design, cfg) {
        Ok(p) => checks.push(exactness("fresh actor", &p.net, &design.pwa, 10_000, 200)),
        Err(e) => checks.push(Check::failed("exactness (fresh actor)", e.to_string())),
    }
    for (label, net) in saved {
        checks.push(exactness(label, net, &design.pwa, 10_000, 200));
    }
    let n = design.sys.state_dim();
    checks.push(zero_blocks(n, design.sys.input_dim(), cfg.actor_hidden));
    checks.push(critic_exactness(design, cfg));
    checks.push(dare_residual(design));
    checks.extend(gradients(design, cfg));
    checks
}
