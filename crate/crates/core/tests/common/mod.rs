#![allow(dead_code)]

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yann_core::envs::EnvSpec;
use yann_core::mpqp::{locate_region, PwaFunction};
use yann_core::rl::{build_design, Design};

pub fn pendulum() -> &'static Design {
    static D: OnceLock<Design> = OnceLock::new();
    D.get_or_init(|| build_design(&EnvSpec::pendulum()).unwrap())
}

pub fn cstr() -> &'static Design {
    static D: OnceLock<Design> = OnceLock::new();
    D.get_or_init(|| build_design(&EnvSpec::cstr()).unwrap())
}

pub fn both() -> [(&'static str, &'static Design); 2] {
    [("pendulum", pendulum()), ("cstr", cstr())]
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draws from the parameter box.
pub fn domain_samples(pwa: &PwaFunction, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = pwa.domain.bounding_box().unwrap();
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

/// Points of the regular grid over the parameter box, `k` per axis.
pub fn grid(pwa: &PwaFunction, k: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = pwa.domain.bounding_box().unwrap();
    let n = lo.len();
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|j| {
                    let i = idx % k;
                    idx /= k;
                    lo[j] + (hi[j] - lo[j]) * (i as f64 + 0.5) / k as f64
                })
                .collect()
        })
        .collect()
}

/// Points within 1e-12 of a boundary between two regions, found by
/// bisecting random segments whose ends lie in different regions.
/// Returns `(point, region_a, region_b)`.
pub fn facet_points(pwa: &PwaFunction, n: usize, seed: u64) -> Vec<(Vec<f64>, usize, usize)> {
    let mut rng = rng(seed);
    let (lo, hi) = pwa.domain.bounding_box().unwrap();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        lo.iter()
            .zip(&hi)
            .map(|(l, h)| rng.random_range(*l..=*h))
            .collect()
    };
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        assert!(tries < 200 * n, "could not find enough facet points");
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let (Some(ra), Some(rb)) = (locate_region(pwa, &a), locate_region(pwa, &b)) else {
            continue;
        };
        if ra == rb {
            continue;
        }
        let at = |t: f64| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect() };
        let (mut t0, mut t1) = (0.0, 1.0);
        let mut r0 = ra;
        let mut r1 = rb;
        let mut ok = true;
        while t1 - t0 > 1e-13 {
            let tm = 0.5 * (t0 + t1);
            match locate_region(pwa, &at(tm)) {
                Some(r) if r == r0 => t0 = tm,
                Some(r) => {
                    t1 = tm;
                    r1 = r;
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        r0 = locate_region(pwa, &at(t0)).unwrap_or(r0);
        out.push((at(0.5 * (t0 + t1)), r0, r1));
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
