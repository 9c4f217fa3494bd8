//! Combinatorial active-set enumeration for the condensed mp-QP.
//!
//! Candidate active sets are enumerated by increasing cardinality. A set is
//! only generated when all of its one-smaller subsets were feasible and
//! satisfied LICQ, because infeasibility and rank deficiency are inherited by
//! supersets. Each surviving set yields an affine law from its KKT system
//! and a polytope from primal and dual feasibility; lower-dimensional
//! polytopes are dropped.

use std::collections::HashSet;

use log::{debug, warn};

use super::pwa::{CriticalRegion, FacetRole, PwaFunction};
use crate::error::{Error, Result};
use crate::linctl::MpQpProblem;
use crate::numerics::{
    chebyshev_ball, lp_solve, norm2, remove_redundant, Matrix, Polytope, SolveStatus, Tolerances,
};

#[derive(Debug, Clone)]
pub struct MpQpOptions {
    pub tol: Tolerances,
    /// Rows whose normals and offsets agree within this are treated as one
    /// shared hyperplane.
    pub facet_match_tol: f64,
    /// Merge adjacent regions whose first-move laws coincide when their
    /// union is convex. The horizon tail often splits one first-move piece
    /// into several.
    pub merge_identical_laws: bool,
}

impl Default for MpQpOptions {
    fn default() -> Self {
        MpQpOptions {
            tol: Tolerances::default(),
            facet_match_tol: 1e-7,
            merge_identical_laws: true,
        }
    }
}

/// Statistics gathered while solving, for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct MpQpReport {
    pub candidates: usize,
    pub infeasible: usize,
    pub degenerate: usize,
    pub lower_dimensional: usize,
    pub merged: usize,
}

pub fn solve_mpqp(prob: &MpQpProblem) -> Result<PwaFunction> {
    solve_mpqp_with(prob, &MpQpOptions::default()).map(|(pwa, _)| pwa)
}

pub fn solve_mpqp_with(
    prob: &MpQpProblem,
    opts: &MpQpOptions,
) -> Result<(PwaFunction, MpQpReport)> {
    let hq = prob.h.scale(2.0);
    if !hq.is_positive_definite() {
        return Err(Error::arg("mp-QP Hessian is not positive definite"));
    }
    let domain = prob.domain();
    domain
        .bounding_box()
        .map_err(|_| Error::arg("parameter domain must be a bounded, nonempty polytope"))?;
    let hinv = hq.inverse()?;

    let param_only = prob.parameter_only_rows();
    let candidates: Vec<usize> = (0..prob.n_constraints())
        .filter(|i| !param_only.contains(i))
        .collect();

    // θ-only restrictions shared by every region
    let mut base = domain.clone();
    if !param_only.is_empty() {
        let a = prob.s.select_rows(&param_only).scale(-1.0);
        let b = param_only.iter().map(|&i| prob.w[i]).collect();
        base = base.intersect(&Polytope::new(a, b)?)?;
    }

    let mut report = MpQpReport::default();
    let mut regions = Vec::new();
    let mut level: Vec<Vec<usize>> = vec![Vec::new()];
    let max_card = prob.n_u.min(candidates.len());
    for card in 0..=max_card {
        let mut survivors: HashSet<Vec<usize>> = HashSet::new();
        for act in &level {
            report.candidates += 1;
            if !licq(&prob.g, act) {
                report.degenerate += 1;
                debug!("active set {act:?} violates LICQ, skipped");
                continue;
            }
            if !active_set_feasible(prob, &base, act)? {
                report.infeasible += 1;
                continue;
            }
            survivors.insert(act.clone());
            match build_region(prob, &hinv, &base, &candidates, act, &opts.tol) {
                Ok(Some(region)) => regions.push(region),
                Ok(None) => report.lower_dimensional += 1,
                Err(Error::Numeric(msg)) => {
                    report.degenerate += 1;
                    warn!("active set {act:?} skipped: singular KKT system ({msg})");
                }
                Err(e) => return Err(e),
            }
        }
        if card == max_card {
            break;
        }
        level = next_level(&survivors, &candidates, card + 1);
    }

    if regions.is_empty() {
        return Err(Error::EmptySolution);
    }
    regions.sort_by(|a, b| a.active_set.cmp(&b.active_set));
    if opts.merge_identical_laws {
        report.merged = merge_identical_laws(&mut regions, &opts.tol)?;
    }
    snap_shared_facets(&mut regions, opts.facet_match_tol);
    let pwa = PwaFunction::new(regions, domain, prob.n_first)?;
    Ok((pwa, report))
}

/// All sets of size `card` over `candidates` whose every `(card−1)`-subset
/// survived, in lexicographic order.
fn next_level(
    survivors: &HashSet<Vec<usize>>,
    candidates: &[usize],
    card: usize,
) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut parents: Vec<&Vec<usize>> = survivors.iter().collect();
    parents.sort();
    for parent in parents {
        for &c in candidates {
            if parent.last().is_some_and(|&l| c <= l) {
                continue;
            }
            let mut cand = parent.clone();
            cand.push(c);
            if cand.len() != card || seen.contains(&cand) {
                continue;
            }
            let all_subsets_ok = (0..cand.len()).all(|skip| {
                let sub: Vec<usize> = cand
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, v)| *v)
                    .collect();
                survivors.contains(&sub)
            });
            if all_subsets_ok {
                seen.insert(cand.clone());
                out.push(cand);
            }
        }
    }
    out.sort();
    out
}

fn licq(g: &Matrix, act: &[usize]) -> bool {
    if act.is_empty() {
        return true;
    }
    // Gram–Schmidt rank test on the active rows
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for &i in act {
        let mut v = g.row(i).to_vec();
        let n0 = norm2(&v);
        if n0 <= 1e-13 {
            return false;
        }
        for b in &basis {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let nv = norm2(&v);
        if nv <= 1e-10 * n0 {
            return false;
        }
        basis.push(v.iter().map(|x| x / nv).collect());
    }
    true
}

/// Is there a `(u, θ)` with the active rows at equality and every other row
/// (and the parameter domain) satisfied?
fn active_set_feasible(prob: &MpQpProblem, base: &Polytope, act: &[usize]) -> Result<bool> {
    let nu = prob.n_u;
    let nt = prob.n_theta;
    let q = prob.n_constraints();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for i in 0..q {
        // G u − S θ ≤ W
        let mut r = prob.g.row(i).to_vec();
        r.extend(prob.s.row(i).iter().map(|v| -v));
        if act.contains(&i) {
            rows.push(r.iter().map(|v| -v).collect());
            rhs.push(-prob.w[i]);
        }
        rows.push(r);
        rhs.push(prob.w[i]);
    }
    for i in 0..base.len() {
        let (a, b) = base.row(i);
        let mut r = vec![0.0; nu];
        r.extend_from_slice(a);
        rows.push(r);
        rhs.push(b);
    }
    let poly = Polytope::new(Matrix::from_rows(&rows)?, rhs)?;
    let s = lp_solve(&vec![0.0; nu + nt], &poly)?;
    Ok(s.status == SolveStatus::Optimal)
}

fn build_region(
    prob: &MpQpProblem,
    hinv: &Matrix,
    base: &Polytope,
    candidates: &[usize],
    act: &[usize],
    tol: &Tolerances,
) -> Result<Option<CriticalRegion>> {
    let nt = prob.n_theta;
    let (k_full, r_full, mult) = affine_law(prob, hinv, act)?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    // primal feasibility of the inactive rows: (G_i K − S_i) θ ≤ W_i − G_i r
    for &i in candidates {
        if act.contains(&i) {
            continue;
        }
        let gi = prob.g.row(i);
        let gk = k_full.tmatvec(gi)?;
        rows.push(gk.iter().zip(prob.s.row(i)).map(|(a, b)| a - b).collect());
        rhs.push(prob.w[i] - gi.iter().zip(&r_full).map(|(a, b)| a * b).sum::<f64>());
    }
    // dual feasibility: −L θ ≤ l
    if let Some((l_mat, l_vec)) = &mult {
        for j in 0..act.len() {
            rows.push(l_mat.row(j).iter().map(|v| -v).collect());
            rhs.push(l_vec[j]);
        }
    }
    let mut poly = base.clone();
    if !rows.is_empty() {
        poly = Polytope::new(Matrix::from_rows(&rows)?, rhs)?.intersect(base)?;
    }
    let poly = match remove_redundant(&poly) {
        Ok(p) => p,
        Err(Error::EmptyPolytope) => return Ok(None),
        Err(e) => return Err(e),
    };
    match chebyshev_ball(&poly)? {
        Some(ball) if ball.radius > tol.min_chebyshev_radius => {}
        _ => return Ok(None),
    }
    let m = prob.n_first;
    let k = k_full.block(0, 0, m, nt);
    let r = r_full[..m].to_vec();
    let facets = vec![FacetRole::Boundary; poly.len()];
    Ok(Some(CriticalRegion {
        poly,
        k,
        r,
        active_set: act.to_vec(),
        facets,
        merged_from: vec![act.to_vec()],
    }))
}

/// Full-horizon law `u = K θ + r` and multiplier law `λ = L θ + l` for an
/// active set.
#[allow(clippy::type_complexity)]
pub(crate) fn affine_law(
    prob: &MpQpProblem,
    hinv: &Matrix,
    act: &[usize],
) -> Result<(Matrix, Vec<f64>, Option<(Matrix, Vec<f64>)>)> {
    let hz = hinv.matmul(&prob.z)?;
    if act.is_empty() {
        return Ok((hz.scale(-1.0), vec![0.0; prob.n_u], None));
    }
    let ga = prob.g.select_rows(act);
    let sa = prob.s.select_rows(act);
    let wa: Vec<f64> = act.iter().map(|&i| prob.w[i]).collect();
    let gat = ga.transpose();
    let m = ga.matmul(hinv)?.matmul(&gat)?;
    let lu = m.lu()?;
    // λ = −M⁻¹ (S_A + G_A H⁻¹ Z) θ − M⁻¹ W_A
    let rhs = &sa + &ga.matmul(&hz)?;
    let l_mat = lu.solve_matrix(&rhs)?.scale(-1.0);
    let l_vec: Vec<f64> = lu.solve(&wa)?.iter().map(|v| -v).collect();
    // u = −H⁻¹ (Z + G_Aᵀ L) θ − H⁻¹ G_Aᵀ l
    let k_full = hinv.matmul(&(&prob.z + &gat.matmul(&l_mat)?))?.scale(-1.0);
    let r_full: Vec<f64> = hinv
        .matvec(&gat.matvec(&l_vec)?)?
        .iter()
        .map(|v| -v)
        .collect();
    Ok((k_full, r_full, Some((l_mat, l_vec))))
}

const LAW_MATCH_TOL: f64 = 1e-9;

/// Greedily merges pairs of regions with the same `(K, r)` whose union is
/// convex, keeping the earlier region's place in the ordering. Returns the
/// number of merges.
fn merge_identical_laws(regions: &mut Vec<CriticalRegion>, tol: &Tolerances) -> Result<usize> {
    let mut merges = 0;
    'outer: loop {
        for i in 0..regions.len() {
            for j in i + 1..regions.len() {
                let (a, b) = (&regions[i], &regions[j]);
                let same = (&a.k - &b.k).max_abs() <= LAW_MATCH_TOL
                    && a.r
                        .iter()
                        .zip(&b.r)
                        .all(|(x, y)| (x - y).abs() <= LAW_MATCH_TOL);
                if !same {
                    continue;
                }
                if let Some(hull) = convex_union(&a.poly, &b.poly, tol.redundancy)? {
                    let absorbed = regions.remove(j);
                    let keep = &mut regions[i];
                    keep.facets = vec![FacetRole::Boundary; hull.len()];
                    keep.poly = hull;
                    keep.merged_from.extend(absorbed.merged_from);
                    keep.merged_from.sort();
                    merges += 1;
                    debug!(
                        "merged region {:?} into {:?}",
                        absorbed.active_set, keep.active_set
                    );
                    continue 'outer;
                }
            }
        }
        return Ok(merges);
    }
}

/// `Some(P ∪ Q)` as a polytope when the union is convex.
///
/// The envelope (rows of each set that the other satisfies) contains the
/// union; the union is convex exactly when the envelope adds nothing, i.e.
/// when every part of the envelope cut off by a dropped row of one set lies
/// in the other set.
pub(crate) fn convex_union(p: &Polytope, q: &Polytope, tol: f64) -> Result<Option<Polytope>> {
    let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut dropped: Vec<(Vec<f64>, f64, &Polytope)> = Vec::new();
    for (a, other) in [(p, q), (q, p)] {
        for i in 0..a.len() {
            let (row, g) = a.row(i);
            if max_over(row, other)? <= g + tol {
                kept.push((row.to_vec(), g));
            } else {
                dropped.push((row.to_vec(), g, other));
            }
        }
    }
    if kept.is_empty() {
        return Ok(None);
    }
    let build = |rows: &[(Vec<f64>, f64)]| -> Result<Polytope> {
        let a: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        Polytope::new(Matrix::from_rows(&a)?, rows.iter().map(|r| r.1).collect())
    };
    let env = build(&kept)?;
    for (row, g, other) in &dropped {
        // env ∩ {row·x ≥ g} must lie inside `other`
        let mut piece = kept.clone();
        piece.push((row.iter().map(|v| -v).collect(), -g));
        let piece = build(&piece)?;
        for k in 0..other.len() {
            let (orow, og) = other.row(k);
            match lp_solve(&orow.iter().map(|v| -v).collect::<Vec<_>>(), &piece)? {
                s if s.status == SolveStatus::Optimal => {
                    if crate::numerics::dot(orow, &s.x) > og + tol {
                        return Ok(None);
                    }
                }
                s if s.status == SolveStatus::Infeasible => break,
                _ => return Ok(None),
            }
        }
    }
    match remove_redundant(&env) {
        Ok(hull) => Ok(Some(hull)),
        Err(Error::EmptyPolytope) => Ok(None),
        Err(e) => Err(e),
    }
}

fn max_over(row: &[f64], poly: &Polytope) -> Result<f64> {
    let s = lp_solve(&row.iter().map(|v| -v).collect::<Vec<_>>(), poly)?;
    Ok(match s.status {
        SolveStatus::Optimal => crate::numerics::dot(row, &s.x),
        SolveStatus::Unbounded => f64::INFINITY,
        SolveStatus::Infeasible => f64::NEG_INFINITY,
    })
}

/// Makes every hyperplane shared between regions bit-identical up to sign,
/// and marks which side owns it: the side of the earliest region (in stored
/// order) touching that hyperplane.
fn snap_shared_facets(regions: &mut [CriticalRegion], tol: f64) {
    struct Plane {
        normal: Vec<f64>,
        offset: f64,
        owner_sign: f64,
        members: Vec<(usize, usize, f64)>,
    }
    let mut planes: Vec<Plane> = Vec::new();
    for (ri, reg) in regions.iter().enumerate() {
        for row in 0..reg.poly.len() {
            let (a, b) = reg.poly.row(row);
            let found = planes.iter_mut().find_map(|p| {
                for sign in [1.0, -1.0] {
                    let same = a
                        .iter()
                        .zip(&p.normal)
                        .all(|(x, y)| (x - sign * y).abs() <= tol)
                        && (b - sign * p.offset).abs() <= tol * (1.0 + b.abs());
                    if same {
                        return Some((p, sign));
                    }
                }
                None
            });
            match found {
                Some((p, sign)) => p.members.push((ri, row, sign)),
                None => planes.push(Plane {
                    normal: a.to_vec(),
                    offset: b,
                    owner_sign: 1.0,
                    members: vec![(ri, row, 1.0)],
                }),
            }
        }
    }
    for p in &mut planes {
        let shared = p.members.iter().any(|m| m.2 < 0.0);
        if !shared {
            continue;
        }
        p.owner_sign = p.members[0].2;
        for &(ri, row, sign) in &p.members {
            let reg = &mut regions[ri];
            let n = reg.poly.dim();
            let mut a = reg.poly.a().clone();
            let mut b = reg.poly.b().to_vec();
            for j in 0..n {
                a[(row, j)] = if sign > 0.0 {
                    p.normal[j]
                } else {
                    -p.normal[j]
                };
            }
            b[row] = if sign > 0.0 { p.offset } else { -p.offset };
            reg.poly = Polytope::new(a, b).expect("same shape");
            reg.facets[row] = if sign == p.owner_sign {
                FacetRole::Owner
            } else {
                FacetRole::Yields
            };
        }
    }
}
