//! Half-space polytopes `{x : F x ≤ g}`.

use serde::{Deserialize, Serialize};

use super::{dot, lp_solve_with, norm2, Matrix, SolveStatus, Tolerances};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    #[serde(rename = "F")]
    a: Matrix,
    #[serde(rename = "g")]
    b: Vec<f64>,
}

impl Polytope {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::arg(format!(
                "polytope has {} rows in F but {} entries in g",
                a.rows(),
                b.len()
            )));
        }
        if !a.is_finite() || b.iter().any(|v| v.is_nan()) {
            return Err(Error::arg("polytope data must be finite"));
        }
        Ok(Polytope { a, b })
    }

    /// `lo ≤ x ≤ hi`, rows ordered as all upper bounds then all lower bounds.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::arg("box bounds differ in length"));
        }
        let n = lo.len();
        let mut a = Matrix::zeros(2 * n, n);
        let mut b = vec![0.0; 2 * n];
        for i in 0..n {
            a[(i, i)] = 1.0;
            b[i] = hi[i];
            a[(n + i, i)] = -1.0;
            b[n + i] = -lo[i];
        }
        Polytope::new(a, b)
    }

    /// `|x_i| ≤ bound_i`.
    pub fn symmetric_box(bound: &[f64]) -> Result<Self> {
        let lo: Vec<f64> = bound.iter().map(|b| -b).collect();
        Polytope::from_box(&lo, bound)
    }

    /// The whole space (no rows).
    pub fn universe(dim: usize) -> Self {
        Polytope {
            a: Matrix::zeros(0, dim),
            b: Vec::new(),
        }
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn row(&self, i: usize) -> (&[f64], f64) {
        (self.a.row(i), self.b[i])
    }

    /// Largest `F_i x − g_i`, i.e. the worst constraint violation (≤ 0 inside).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| dot(self.a.row(i), x) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.len()).all(|i| dot(self.a.row(i), x) <= self.b[i] + tol)
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        Polytope::new(
            self.a.vstack(&other.a)?,
            [self.b.as_slice(), other.b.as_slice()].concat(),
        )
    }

    pub fn select_rows(&self, idx: &[usize]) -> Polytope {
        Polytope {
            a: self.a.select_rows(idx),
            b: idx.iter().map(|&i| self.b[i]).collect(),
        }
    }

    /// Bounding box of a bounded polytope via `2·dim` LPs.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let tol = Tolerances::default();
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for j in 0..n {
            let mut c = vec![0.0; n];
            c[j] = 1.0;
            let s = lp_solve_with(&c, self, &tol)?;
            match s.status {
                SolveStatus::Optimal => lo[j] = s.x[j],
                SolveStatus::Infeasible => return Err(Error::EmptyPolytope),
                SolveStatus::Unbounded => return Err(Error::arg("polytope is unbounded")),
            }
            c[j] = -1.0;
            let s = lp_solve_with(&c, self, &tol)?;
            match s.status {
                SolveStatus::Optimal => hi[j] = s.x[j],
                SolveStatus::Infeasible => return Err(Error::EmptyPolytope),
                SolveStatus::Unbounded => return Err(Error::arg("polytope is unbounded")),
            }
        }
        Ok((lo, hi))
    }

    /// Scales every row of `F` (and `g`) to unit Euclidean norm. Rows with a
    /// vanishing normal are dropped when trivially satisfied; a violated
    /// `0 ≤ g` row makes the polytope empty.
    pub fn normalized(&self) -> Result<Polytope> {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..self.len() {
            let (r, g) = self.row(i);
            let nrm = norm2(r);
            if nrm <= 1e-12 {
                if g < -1e-12 {
                    return Err(Error::EmptyPolytope);
                }
                continue;
            }
            rows.push(r.iter().map(|v| v / nrm).collect::<Vec<f64>>());
            rhs.push(g / nrm);
        }
        if rows.is_empty() {
            return Ok(Polytope::universe(self.dim()));
        }
        Polytope::new(Matrix::from_rows(&rows)?, rhs)
    }
}

pub fn remove_redundant(poly: &Polytope) -> Result<Polytope> {
    remove_redundant_with(poly, &Tolerances::default())
}

/// Minimal half-space representation: rows are normalized, duplicates merged,
/// and every row implied by the remaining ones removed. Fails with
/// [`Error::EmptyPolytope`] when the set is empty.
pub fn remove_redundant_with(poly: &Polytope, tol: &Tolerances) -> Result<Polytope> {
    let norm = poly.normalized()?;
    let n = norm.dim();

    // duplicates: keep the tighter right-hand side, first occurrence order
    let mut keep: Vec<usize> = Vec::new();
    for i in 0..norm.len() {
        let (ri, gi) = norm.row(i);
        match keep.iter().position(|&k| {
            let (rk, _) = norm.row(k);
            ri.iter().zip(rk).all(|(x, y)| (x - y).abs() <= 1e-12)
        }) {
            Some(pos) => {
                if gi < norm.b[keep[pos]] {
                    keep[pos] = i;
                }
            }
            None => keep.push(i),
        }
    }
    keep.sort_unstable();

    let current = norm.select_rows(&keep);
    let feas = lp_solve_with(&vec![0.0; n], &current, tol)?;
    if feas.status == SolveStatus::Infeasible {
        return Err(Error::EmptyPolytope);
    }

    let mut kept = keep.clone();
    let mut i = 0;
    while i < kept.len() {
        let row = kept[i];
        let others: Vec<usize> = kept.iter().copied().filter(|&k| k != row).collect();
        let sub = norm.select_rows(&others);
        let (r, g) = norm.row(row);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let s = lp_solve_with(&neg, &sub, tol)?;
        let redundant = match s.status {
            SolveStatus::Optimal => -s.objective <= g + tol.redundancy,
            SolveStatus::Unbounded => false,
            // the subset of a feasible system cannot be infeasible
            SolveStatus::Infeasible => {
                return Err(Error::numeric("redundancy LP lost feasibility"))
            }
        };
        if redundant {
            kept.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(norm.select_rows(&kept))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Largest inscribed ball. The radius is capped at `1e6` so unbounded sets
/// still return a finite answer. `None` when the polytope is empty.
pub fn chebyshev_ball(poly: &Polytope) -> Result<Option<ChebyshevBall>> {
    const RADIUS_CAP: f64 = 1e6;
    let n = poly.dim();
    let q = poly.len();
    let mut a = Matrix::zeros(q + 2, n + 1);
    let mut b = vec![0.0; q + 2];
    for i in 0..q {
        let (r, g) = poly.row(i);
        a.row_mut(i)[..n].copy_from_slice(r);
        a[(i, n)] = norm2(r);
        b[i] = g;
    }
    a[(q, n)] = -1.0;
    a[(q + 1, n)] = 1.0;
    b[q + 1] = RADIUS_CAP;
    let lifted = Polytope::new(a, b)?;
    let mut c = vec![0.0; n + 1];
    c[n] = -1.0;
    let s = lp_solve_with(&c, &lifted, &Tolerances::default())?;
    match s.status {
        SolveStatus::Optimal => Ok(Some(ChebyshevBall {
            center: s.x[..n].to_vec(),
            radius: s.x[n],
        })),
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Unbounded => Err(Error::numeric("Chebyshev LP unbounded despite radius cap")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dominated_row_is_dropped() {
        let p = Polytope::new(Matrix::from_rows(&[[1.0], [1.0]]).unwrap(), vec![1.0, 2.0]).unwrap();
        let r = remove_redundant(&p).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.b(), &[1.0]);
    }

    #[test]
    fn duplicated_box_keeps_two_n_rows() {
        let b = Polytope::symmetric_box(&[1.0, 2.0, 3.0]).unwrap();
        let dup = b.intersect(&b).unwrap().intersect(&b).unwrap();
        let r = remove_redundant(&dup).unwrap();
        assert_eq!(r.len(), 6);
    }

    #[test]
    fn empty_polytope_is_reported() {
        let p = Polytope::from_box(&[1.0], &[0.0]).unwrap();
        assert!(matches!(remove_redundant(&p), Err(Error::EmptyPolytope)));
    }

    #[test]
    fn chebyshev_of_box() {
        let p = Polytope::from_box(&[0.0, 0.0], &[2.0, 1.0]).unwrap();
        let ball = chebyshev_ball(&p).unwrap().unwrap();
        assert!((ball.radius - 0.5).abs() < 1e-12);
    }

    fn random_polytope(seed: u64, dim: usize, rows: usize) -> Polytope {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Matrix::zeros(rows, dim);
        let mut b = vec![0.0; rows];
        for i in 0..rows {
            for j in 0..dim {
                a[(i, j)] = rng.random_range(-1.0..1.0);
            }
            b[i] = rng.random_range(0.2..1.5);
        }
        Polytope::symmetric_box(&vec![1.0; dim])
            .unwrap()
            .intersect(&Polytope::new(a, b).unwrap())
            .unwrap()
    }

    #[test]
    fn membership_unchanged_on_random_samples() {
        for seed in 0..5 {
            let p = random_polytope(seed, 3, 12);
            let r = remove_redundant(&p).unwrap();
            assert!(r.len() <= p.len());
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.2..1.2)).collect();
                // identical up to points within 1e-9 of a boundary
                if p.max_violation(&x).abs() > 1e-9 {
                    assert_eq!(p.contains(&x, 0.0), r.contains(&x, 0.0));
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn redundancy_removal_is_idempotent(seed in 0u64..10_000) {
            let p = random_polytope(seed, 2, 8);
            let once = remove_redundant(&p).unwrap();
            let twice = remove_redundant(&once).unwrap();
            prop_assert_eq!(once.len(), twice.len());
            for i in 0..once.len() {
                prop_assert!((once.b()[i] - twice.b()[i]).abs() < 1e-12);
            }
        }
    }
}
