use crate::error::{Error, Result};

pub(crate) fn rk4_step(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let k1 = f(x);
    let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = f(&x2);
    let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = f(&x3);
    let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = f(&x4);
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// RK4 over `[0, span]` with step-doubling error control.
pub(crate) fn rk4_adaptive(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    span: f64,
    rel_tol: f64,
) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut h = span;
    let h_min = span * 1e-9;
    while t < span {
        h = h.min(span - t);
        let full = rk4_step(f, &x, h);
        let half = rk4_step(f, &x, 0.5 * h);
        let two = rk4_step(f, &half, 0.5 * h);
        let err = full
            .iter()
            .zip(&two)
            .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
            .fold(0.0f64, f64::max);
        if !err.is_finite() || two.iter().any(|v| !v.is_finite()) {
            if h <= h_min {
                return Err(Error::numeric("integration blew up"));
            }
            h *= 0.25;
            continue;
        }
        if err <= rel_tol || h <= h_min {
            // Richardson extrapolation of the two half steps
            x = two
                .iter()
                .zip(&full)
                .map(|(b, a)| b + (b - a) / 15.0)
                .collect();
            t += h;
            let grow = if err == 0.0 {
                4.0
            } else {
                (0.9 * (rel_tol / err).powf(0.2)).clamp(0.2, 4.0)
            };
            h *= grow;
        } else {
            h *= (0.9 * (rel_tol / err).powf(0.2)).clamp(0.1, 0.5);
        }
    }
    Ok(x)
}
