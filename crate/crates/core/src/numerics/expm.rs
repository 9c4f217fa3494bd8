//! Matrix exponential and zero-order-hold discretization.

use super::Matrix;
use crate::error::{Error, Result};

/// `exp(A)` by scaling and squaring around a degree-18 Taylor core.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::arg("matrix exponential of non-square matrix"));
    }
    if !a.is_finite() {
        return Err(Error::arg("matrix exponential of non-finite matrix"));
    }
    let n = a.rows();
    let norm = a.norm_inf();
    // scale so that ‖A/2ˢ‖ ≤ 1/2; the Taylor tail is then below 1e-22
    let mut s = 0u32;
    while norm / f64::from(2u32).powi(s as i32) > 0.5 {
        s += 1;
    }
    let scaled = a.scale(0.5f64.powi(s as i32));
    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=18 {
        term = term.matmul(&scaled)?.scale(1.0 / k as f64);
        result = &result + &term;
    }
    for _ in 0..s {
        result = result.matmul(&result)?;
    }
    Ok(result)
}

/// Exact discretization of `ṡ = Ac s + Bc u` with `u` held over `dt`:
/// `A = exp(Ac·dt)`, `B = ∫₀^dt exp(Ac τ) dτ · Bc`, both read off the
/// exponential of the block matrix `[[Ac, Bc], [0, 0]]·dt`.
pub fn zoh_discretize(ac: &Matrix, bc: &Matrix, dt: f64) -> Result<(Matrix, Matrix)> {
    if !ac.is_square() || bc.rows() != ac.rows() {
        return Err(Error::arg(format!(
            "ZOH shapes disagree: Ac {:?}, Bc {:?}",
            ac.shape(),
            bc.shape()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!(
            "sampling period must be positive, got {dt}"
        )));
    }
    let n = ac.rows();
    let m = bc.cols();
    let mut big = Matrix::zeros(n + m, n + m);
    big.set_block(0, 0, &ac.scale(dt));
    big.set_block(0, n, &bc.scale(dt));
    let e = expm(&big)?;
    let a = e.block(0, 0, n, n);
    let b = e.block(0, n, n, m);
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::numeric("discretized matrices are not finite"));
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_dynamics() {
        let (a, b) =
            zoh_discretize(&Matrix::zeros(2, 2), &Matrix::column(&[1.0, -2.0]), 0.3).unwrap();
        assert!((&a - &Matrix::identity(2)).max_abs() < 1e-15);
        assert!((b[(0, 0)] - 0.3).abs() < 1e-15 && (b[(1, 0)] + 0.6).abs() < 1e-15);
    }

    #[test]
    fn diagonal_matches_scalar_exponentials() {
        let d = [-3.0, 0.5, 2.0, -0.01];
        let (a, _) = zoh_discretize(&Matrix::diag(&d), &Matrix::zeros(4, 1), 0.7).unwrap();
        for (i, v) in d.iter().enumerate() {
            let want = (v * 0.7).exp();
            assert!((a[(i, i)] - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn pendulum_matches_reference_discretization() {
        let ac = Matrix::from_rows(&[[0.0, 1.0], [15.0, 0.0]]).unwrap();
        let bc = Matrix::column(&[0.0, 3.0]);
        let (a, b) = zoh_discretize(&ac, &bc, 0.05).unwrap();
        let want_a = [[1.0188, 0.0503], [0.7547, 1.0188]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[(i, j)] - want_a[i][j]).abs() < 5e-5);
            }
        }
        assert!((b[(0, 0)] - 0.0038).abs() < 5e-5 && (b[(1, 0)] - 0.1509).abs() < 5e-5);
    }

    #[test]
    fn rejects_bad_period() {
        assert!(zoh_discretize(&Matrix::identity(1), &Matrix::identity(1), 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn semigroup_property(
            entries in proptest::collection::vec(-2.0f64..2.0, 9),
            bcol in proptest::collection::vec(-1.0f64..1.0, 3),
            dt in 0.01f64..0.5,
        ) {
            let ac = Matrix::from_vec(3, 3, entries).unwrap();
            let bc = Matrix::column(&bcol);
            let (a1, b1) = zoh_discretize(&ac, &bc, dt).unwrap();
            let (a2, b2) = zoh_discretize(&ac, &bc, 2.0 * dt).unwrap();
            let sq = a1.matmul(&a1).unwrap();
            prop_assert!((&sq - &a2).max_abs() <= 1e-10);
            let comp = &a1.matmul(&b1).unwrap() + &b1;
            prop_assert!((&comp - &b2).max_abs() <= 1e-10);
        }
    }
}
