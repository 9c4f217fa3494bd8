use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Polytope};

/// How a region row relates to the neighbouring regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacetRole {
    /// Not shared with another region (domain or feasibility boundary).
    Boundary,
    /// Shared hyperplane; points on it belong to this side.
    Owner,
    /// Shared hyperplane owned by a region on the other side.
    Yields,
}

/// One piece `u = K θ + r` on `{θ : F θ ≤ g}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub poly: Polytope,
    #[serde(rename = "K")]
    pub k: Matrix,
    pub r: Vec<f64>,
    /// Indices into the mp-QP constraint rows held at equality.
    pub active_set: Vec<usize>,
    /// One entry per row of `poly`.
    pub facets: Vec<FacetRole>,
    /// Active sets of every piece folded into this region when adjacent
    /// pieces with the same first-move law were merged (includes
    /// `active_set`).
    #[serde(default)]
    pub merged_from: Vec<Vec<usize>>,
}

impl CriticalRegion {
    pub fn law(&self, theta: &[f64]) -> Vec<f64> {
        let mut u = self.k.matvec(theta).expect("shape validated");
        for (ui, ri) in u.iter_mut().zip(&self.r) {
            *ui += ri;
        }
        u
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        self.poly.contains(theta, tol)
    }
}

/// Explicit control law: the first move of the horizon as a piecewise-affine
/// function of the parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwaFunction {
    pub regions: Vec<CriticalRegion>,
    /// Parameter box the law was computed over.
    pub domain: Polytope,
    /// Output dimension (the first control move).
    pub n_u_applied: usize,
}

/// Containment tolerance used for point location (rows are unit-normalized,
/// so this is a distance).
pub const LOCATE_TOL: f64 = 1e-9;

impl PwaFunction {
    pub fn new(regions: Vec<CriticalRegion>, domain: Polytope, n_u_applied: usize) -> Result<Self> {
        let n = domain.dim();
        for (i, reg) in regions.iter().enumerate() {
            if reg.poly.dim() != n
                || reg.k.shape() != (n_u_applied, n)
                || reg.r.len() != n_u_applied
            {
                return Err(Error::arg(format!(
                    "region {i} has inconsistent dimensions"
                )));
            }
            if reg.facets.len() != reg.poly.len() {
                return Err(Error::arg(format!(
                    "region {i} facet roles do not match its rows"
                )));
            }
        }
        Ok(PwaFunction {
            regions,
            domain,
            n_u_applied,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Total number of half-space rows over all regions.
    pub fn total_rows(&self) -> usize {
        self.regions.iter().map(|r| r.poly.len()).sum()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: PwaFunction = serde_json::from_str(s)?;
        PwaFunction::new(raw.regions, raw.domain, raw.n_u_applied)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Index of the first region (in stored order) containing `theta`.
pub fn locate_region(pwa: &PwaFunction, theta: &[f64]) -> Option<usize> {
    if theta.len() != pwa.n_theta() || theta.iter().any(|v| !v.is_finite()) {
        return None;
    }
    pwa.regions
        .iter()
        .position(|r| r.contains(theta, LOCATE_TOL))
}

/// `K_i θ + r_i` of the first containing region; `None` outside every region.
pub fn evaluate_pwa(pwa: &PwaFunction, theta: &[f64]) -> Option<Vec<f64>> {
    locate_region(pwa, theta).map(|i| pwa.regions[i].law(theta))
}
