//! Band cost on the transformed matrix and its regularized variants.

use nalgebra::{DMatrix, DVector};

use crate::graph::WeightedGraph;
use crate::spectral::{self, SpectralPair};
use crate::{Error, Result};

use super::HyperParams;

/// Entries with magnitude above this count toward the l0 diagnostic.
pub const L0_THRESHOLD: f64 = 1e-8;

/// `||G - s+ (G o I)||_F^2 + ||G - s- (G o I)||_F^2` for a given
/// `G = U^T R U`, with `s+ = 1 + eps1` and `s- = 1 - eps2`.
pub(crate) fn band_cost_of(g: &DMatrix<f64>, eps1: f64, eps2: f64) -> f64 {
    let s_plus = 1.0 + eps1;
    let s_minus = 1.0 - eps2;
    let n = g.nrows();
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            let v = g[(i, j)];
            if i == j {
                total += (v - s_plus * v).powi(2) + (v - s_minus * v).powi(2);
            } else {
                total += 2.0 * v * v;
            }
        }
    }
    total
}

/// Band cost `E` of the transformed matrix `U^T R U`.
pub fn cost_e(r: &DMatrix<f64>, u: &DMatrix<f64>, eps1: f64, eps2: f64) -> Result<f64> {
    spectral::check_square(r)?;
    spectral::check_same_dim(r, u)?;
    spectral::check_orthonormal(u, 1e-8)?;
    Ok(band_cost_of(&(u.transpose() * r * u), eps1, eps2))
}

fn weight_penalty(w: &DVector<f64>, beta: f64) -> f64 {
    beta * (w.norm_squared() - 1.0)
}

pub(crate) fn cost_en_with(sp: &SpectralPair, g: &WeightedGraph, r: &DMatrix<f64>, hp: &HyperParams) -> Result<f64> {
    Ok(cost_e(r, sp.vectors(), hp.eps1, hp.eps2)? + weight_penalty(g.weights(), hp.beta))
}

/// `E_N = E + beta (w^T w - 1)` with `U` taken from the Laplacian of `g`.
pub fn cost_en(g: &WeightedGraph, r: &DMatrix<f64>, hp: &HyperParams) -> Result<f64> {
    check_graph_dim(g, r)?;
    let sp = spectral::sym_eig(&g.laplacian())?;
    cost_en_with(&sp, g, r, hp)
}

/// Sum of log absolute degrees; errors on an isolated vertex.
pub(crate) fn log_degree_sum(g: &WeightedGraph) -> Result<f64> {
    let deg = g.degree_vector();
    if let Some(v) = deg.iter().position(|d| *d <= 0.0) {
        return Err(Error::DisconnectedVertex(v));
    }
    Ok(deg.iter().map(|d| d.ln()).sum())
}

pub(crate) fn cost_sparse_with(
    sp: &SpectralPair,
    g: &WeightedGraph,
    r: &DMatrix<f64>,
    x: Option<&DVector<f64>>,
    hp: &HyperParams,
) -> Result<f64> {
    let mut cost = cost_en_with(sp, g, r, hp)?;
    if hp.alpha1 != 0.0 {
        cost -= hp.alpha1 * log_degree_sum(g)?;
    }
    if let Some(x) = x {
        if hp.alpha2 != 0.0 {
            cost += hp.alpha2 * (sp.vectors().transpose() * x).lp_norm(1);
        }
    }
    Ok(cost)
}

/// `E_N - alpha1 * 1^T log(A 1) + alpha2 * ||U^T x||_1`.
///
/// The l1 norm of the transformed signal stands in for its l0 count so the
/// objective stays differentiable; [`transform_l0`] reports the count itself.
pub fn cost_sparse(g: &WeightedGraph, r: &DMatrix<f64>, x: &DVector<f64>, hp: &HyperParams) -> Result<f64> {
    check_graph_dim(g, r)?;
    if x.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: format!("signal of length {}", g.n()),
            found: x.len().to_string(),
        });
    }
    // Fail on isolated vertices before paying for the eigensolve.
    log_degree_sum(g)?;
    let sp = spectral::sym_eig(&g.laplacian())?;
    cost_sparse_with(&sp, g, r, Some(x), hp)
}

/// Number of entries of `U^T x` above [`L0_THRESHOLD`] in magnitude.
pub fn transform_l0(u: &DMatrix<f64>, x: &DVector<f64>) -> usize {
    (u.transpose() * x).iter().filter(|v| v.abs() > L0_THRESHOLD).count()
}

pub(crate) fn check_graph_dim(g: &WeightedGraph, r: &DMatrix<f64>) -> Result<()> {
    if r.nrows() != g.n() || r.ncols() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", g.n()),
            found: format!("{}x{}", r.nrows(), r.ncols()),
        });
    }
    Ok(())
}
