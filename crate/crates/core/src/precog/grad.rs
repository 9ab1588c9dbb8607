//! Gradients of the band cost with respect to the eigenvector matrix and
//! the edge weights.
//!
//! Two routes lead from `dE/dU` to `dE/dw`. The perturbation route uses the
//! first-order eigenvector derivative of a symmetric matrix and is what the
//! optimizer runs by default. The chain route inverts `dL/du_kl` with a
//! pseudoinverse and takes a trace against each `Theta_i`; it is kept for
//! comparison and generally disagrees with finite differences.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::graph::{Theta, WeightedGraph};
use crate::spectral::{self, SpectralPair};
use crate::{Error, Result};

use super::cost::{check_graph_dim, log_degree_sum};
use super::{GradientMode, HyperParams};

/// Which closed form to use for `dE/dU`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EGradFormula {
    /// Exact ambient gradient of the band cost.
    Canonical,
    /// The closed form printed alongside the method, reproduced as-is.
    PaperAppendix,
}

impl FromStr for EGradFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "paper-appendix" => Ok(Self::PaperAppendix),
            other => Err(Error::Parse(format!("unknown gradient formula `{other}`"))),
        }
    }
}

/// `4 R U [2G - (2 - eps1^2 - eps2^2) (G o I)]` with `G = U^T R U`.
pub(crate) fn canonical_grad(r: &DMatrix<f64>, u: &DMatrix<f64>, eps1: f64, eps2: f64) -> DMatrix<f64> {
    let ru = r * u;
    let g = u.transpose() * &ru;
    let c = 2.0 - eps1 * eps1 - eps2 * eps2;
    let mut inner = g * 2.0;
    for i in 0..inner.nrows() {
        inner[(i, i)] *= 1.0 - 0.5 * c;
    }
    ru * inner * 4.0
}

fn appendix_grad(r: &DMatrix<f64>, u: &DMatrix<f64>, eps1: f64, eps2: f64) -> DMatrix<f64> {
    let n = r.nrows();
    let ru = r * u;
    let diag = DMatrix::from_diagonal(&(u.transpose() * &ru).diagonal());
    let bracket = r * 2.0
        - DMatrix::identity(n, n) * (2.0 * (2.0 - eps2 - eps2))
        - diag * ((1.0 + eps1).powi(2) + (1.0 - eps2).powi(2));
    bracket * ru * 2.0
}

/// `dE/dU` for the band cost.
pub fn grad_e_wrt_u(
    r: &DMatrix<f64>,
    u: &DMatrix<f64>,
    eps1: f64,
    eps2: f64,
    formula: EGradFormula,
) -> Result<DMatrix<f64>> {
    spectral::check_square(r)?;
    spectral::check_same_dim(r, u)?;
    Ok(match formula {
        EGradFormula::Canonical => canonical_grad(r, u, eps1, eps2),
        EGradFormula::PaperAppendix => appendix_grad(r, u, eps1, eps2),
    })
}

/// `U Gamma J^{kl} + J^{lk} Gamma U^T`: column `l` and row `l` both carry
/// `gamma_k u_k`.
pub fn dl_du(sp: &SpectralPair, k: usize, l: usize) -> Result<DMatrix<f64>> {
    let n = sp.n();
    for idx in [k, l] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
    }
    let gamma = sp.values()[k];
    let uk = sp.vectors().column(k);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, l)] += gamma * uk[i];
        m[(l, i)] += gamma * uk[i];
    }
    Ok(m)
}

/// The transposed pseudoinverses `pinv(dL/du_kl)^T` for every `(k, l)`,
/// shared by all edges of one iteration.
#[derive(Debug, Clone)]
pub struct PaperChain {
    n: usize,
    inverses: Vec<DMatrix<f64>>,
}

impl PaperChain {
    pub fn new(sp: &SpectralPair) -> Self {
        let n = sp.n();
        // dL/du_kl for the zero Laplacian eigenvalue is rounding noise.
        let floor = n as f64 * f64::EPSILON * sp.values().amax();
        let mut inverses = Vec::with_capacity(n * n);
        for l in 0..n {
            for k in 0..n {
                let d = dl_du(sp, k, l).expect("indices in range");
                inverses.push(spectral::pinv_with_floor(&d, floor).transpose());
            }
        }
        Self { n, inverses }
    }

    fn at(&self, k: usize, l: usize) -> &DMatrix<f64> {
        &self.inverses[l * self.n + k]
    }

    /// `du_kl/dw_i` for one edge, via the four-entry trace shortcut.
    pub fn du_dw(&self, theta: &Theta) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |k, l| theta.trace_with(self.at(k, l)))
    }

    /// `du_kl/dw` against an arbitrary dense `Theta`.
    pub fn du_dw_dense(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |k, l| (self.at(k, l) * theta).trace())
    }
}

/// Chain-route eigenvector derivative for a dense `Theta`:
/// entry `(k, l)` is `Tr(pinv(dL/du_kl)^T Theta)`.
pub fn du_dw_paper(sp: &SpectralPair, theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_theta(sp, theta)?;
    Ok(PaperChain::new(sp).du_dw_dense(theta))
}

/// Chain-route derivative for a graph edge using the sparse trace.
pub fn du_dw_paper_edge(sp: &SpectralPair, theta: &Theta) -> DMatrix<f64> {
    PaperChain::new(sp).du_dw(theta)
}

fn check_theta(sp: &SpectralPair, theta: &DMatrix<f64>) -> Result<()> {
    if theta.shape() != (sp.n(), sp.n()) {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", sp.n()),
            found: format!("{}x{}", theta.nrows(), theta.ncols()),
        });
    }
    Ok(())
}

fn check_gap(sp: &SpectralPair, threshold: f64) -> Result<()> {
    let gap = sp.min_gap();
    if gap < threshold {
        return Err(Error::DegenerateSpectrum { gap, threshold });
    }
    Ok(())
}

/// First-order eigenvector derivative: column `a` is
/// `sum_{b != a} (u_b^T Theta u_a) / (gamma_a - gamma_b) u_b`.
pub fn du_dw_perturbation(sp: &SpectralPair, theta: &DMatrix<f64>, degeneracy_gap: f64) -> Result<DMatrix<f64>> {
    check_theta(sp, theta)?;
    check_gap(sp, degeneracy_gap)?;
    let u = sp.vectors();
    let t = u.transpose() * theta * u;
    Ok(u * coupling(sp, |b, a| t[(b, a)]))
}

/// [`du_dw_perturbation`] for a graph edge; `U^T Theta U = d d^T` with `d`
/// the difference of the endpoint rows of `U`.
pub fn du_dw_perturbation_edge(sp: &SpectralPair, theta: &Theta, degeneracy_gap: f64) -> Result<DMatrix<f64>> {
    check_gap(sp, degeneracy_gap)?;
    let d = endpoint_difference(sp, theta);
    Ok(sp.vectors() * coupling(sp, |b, a| d[b] * d[a]))
}

fn endpoint_difference(sp: &SpectralPair, theta: &Theta) -> DVector<f64> {
    let u = sp.vectors();
    (u.row(theta.p) - u.row(theta.q)).transpose()
}

fn coupling(sp: &SpectralPair, numer: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let g = sp.values();
    DMatrix::from_fn(sp.n(), sp.n(), |b, a| if a == b { 0.0 } else { numer(b, a) / (g[a] - g[b]) })
}

/// `Tr(grad_u^T dU/dw_i)` for every edge, in the selected mode.
pub(crate) fn trace_terms(
    sp: &SpectralPair,
    g: &WeightedGraph,
    grad_u: &DMatrix<f64>,
    hp: &HyperParams,
) -> Result<DVector<f64>> {
    let m = g.topology().num_edges();
    match hp.gradient_mode {
        GradientMode::Perturbation => {
            check_gap(sp, hp.degeneracy_gap)?;
            // Tr(grad^T U C) = sum_{b,a} (U^T grad)_{ba} C_{ba}, and
            // C_{ba} = d_b d_a / (gamma_a - gamma_b), so each edge costs d^T K d.
            let h = sp.vectors().transpose() * grad_u;
            let k = coupling(sp, |b, a| h[(b, a)]);
            Ok(DVector::from_iterator(
                m,
                g.thetas().map(|theta| {
                    let d = endpoint_difference(sp, &theta);
                    d.dot(&(&k * &d))
                }),
            ))
        }
        GradientMode::PaperChain => {
            let chain = PaperChain::new(sp);
            Ok(DVector::from_iterator(m, g.thetas().map(|theta| grad_u.dot(&chain.du_dw(&theta)))))
        }
    }
}

/// `dE_N/dw`: the trace terms plus `2 beta w`.
pub fn grad_en_wrt_w(g: &WeightedGraph, r: &DMatrix<f64>, hp: &HyperParams) -> Result<DVector<f64>> {
    check_graph_dim(g, r)?;
    let sp = spectral::sym_eig(&g.laplacian())?;
    let grad_u = canonical_grad(r, sp.vectors(), hp.eps1, hp.eps2);
    Ok(trace_terms(&sp, g, &grad_u, hp)? + g.weights() * (2.0 * hp.beta))
}

/// `dE/dU` plus the signal-sparsity term `alpha2 x sign(U^T x)^T`.
pub(crate) fn objective_grad_u(
    sp: &SpectralPair,
    r: &DMatrix<f64>,
    x: Option<&DVector<f64>>,
    hp: &HyperParams,
) -> DMatrix<f64> {
    let mut grad_u = canonical_grad(r, sp.vectors(), hp.eps1, hp.eps2);
    if let (Some(x), true) = (x, hp.alpha2 != 0.0) {
        let s = (sp.vectors().transpose() * x).map(f64::signum);
        grad_u += x * s.transpose() * hp.alpha2;
    }
    grad_u
}

/// Gradient of `-alpha1 * sum log(|A| 1)` with respect to `w`.
pub(crate) fn log_degree_grad(g: &WeightedGraph, alpha1: f64) -> Result<DVector<f64>> {
    log_degree_sum(g)?;
    let deg = g.degree_vector();
    Ok(DVector::from_iterator(
        g.topology().num_edges(),
        g.thetas().zip(g.weights().iter()).map(|(t, w)| -alpha1 * w.signum() * (1.0 / deg[t.p] + 1.0 / deg[t.q])),
    ))
}

/// Gradient of the sparsity-regularized objective with respect to `w`.
pub fn grad_sparse_wrt_w(
    g: &WeightedGraph,
    r: &DMatrix<f64>,
    x: Option<&DVector<f64>>,
    hp: &HyperParams,
) -> Result<DVector<f64>> {
    check_graph_dim(g, r)?;
    let sp = spectral::sym_eig(&g.laplacian())?;
    let grad_u = objective_grad_u(&sp, r, x, hp);
    let mut grad = trace_terms(&sp, g, &grad_u, hp)? + g.weights() * (2.0 * hp.beta);
    if hp.alpha1 != 0.0 {
        grad += log_degree_grad(g, hp.alpha1)?;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use crate::{matgen, rng};
    use proptest::prelude::*;

    fn random_spd(seed: u64, n: usize) -> DMatrix<f64> {
        let mut r = rng::seeded(seed, 10);
        let a = DMatrix::from_vec(n, n, rng::normal_vec(&mut r, n * n));
        a.transpose() * &a / n as f64 + DMatrix::identity(n, n) * 0.1
    }

    fn random_orthonormal(seed: u64, n: usize) -> DMatrix<f64> {
        let mut r = rng::seeded(seed, 11);
        DMatrix::from_vec(n, n, rng::normal_vec(&mut r, n * n)).qr().q()
    }

    fn random_graph(seed: u64, n: usize) -> WeightedGraph {
        let t = Topology::banded(n, 2).unwrap();
        let mut r = rng::seeded(seed, 12);
        WeightedGraph::new(t.clone(), DVector::from_vec(rng::normal_vec(&mut r, t.num_edges()))).unwrap()
    }

    fn band_cost_ambient(r: &DMatrix<f64>, u: &DMatrix<f64>, e1: f64, e2: f64) -> f64 {
        let g = u.transpose() * r * u;
        let n = g.nrows();
        let mut t = 0.0;
        for s in [1.0 + e1, 1.0 - e2] {
            for i in 0..n {
                for j in 0..n {
                    let d = if i == j { g[(i, j)] } else { 0.0 };
                    t += (g[(i, j)] - s * d).powi(2);
                }
            }
        }
        t
    }

    fn fd_grad_u(r: &DMatrix<f64>, u: &DMatrix<f64>, e1: f64, e2: f64) -> DMatrix<f64> {
        let h = 1e-6;
        DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| {
            let mut up = u.clone();
            up[(i, j)] += h;
            let mut dn = u.clone();
            dn[(i, j)] -= h;
            (band_cost_ambient(r, &up, e1, e2) - band_cost_ambient(r, &dn, e1, e2)) / (2.0 * h)
        })
    }

    #[test]
    fn canonical_is_zero_at_identity() {
        let i = DMatrix::identity(4, 4);
        let g = grad_e_wrt_u(&i, &i, 0.0, 0.0, EGradFormula::Canonical).unwrap();
        assert_eq!(g, DMatrix::zeros(4, 4));
    }

    #[test]
    fn canonical_matches_finite_differences() {
        for seed in 0..6 {
            let n = 5;
            let r = random_spd(seed, n);
            let u = random_orthonormal(seed, n);
            let g = grad_e_wrt_u(&r, &u, 0.1, 0.2, EGradFormula::Canonical).unwrap();
            let fd = fd_grad_u(&r, &u, 0.1, 0.2);
            assert!((&g - &fd).norm() / fd.norm() <= 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn appendix_formula_differs_and_is_reported() {
        let r = random_spd(1, 5);
        let u = random_orthonormal(1, 5);
        let a = grad_e_wrt_u(&r, &u, 0.1, 0.1, EGradFormula::PaperAppendix).unwrap();
        let c = grad_e_wrt_u(&r, &u, 0.1, 0.1, EGradFormula::Canonical).unwrap();
        assert!((a - c).amax().is_finite());
        assert!("paper-appendix".parse::<EGradFormula>().is_ok());
        assert!("other".parse::<EGradFormula>().is_err());
    }

    #[test]
    fn dl_du_examples() {
        let sp =
            SpectralPair::from_parts(DMatrix::identity(3, 3), DVector::from_column_slice(&[2.0, 3.0, 5.0])).unwrap();
        let d = dl_du(&sp, 0, 0).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = 4.0;
        assert_eq!(d, expected);

        let zero = SpectralPair::from_parts(random_orthonormal(2, 4), DVector::zeros(4)).unwrap();
        assert_eq!(dl_du(&zero, 1, 2).unwrap(), DMatrix::zeros(4, 4));
        assert!(dl_du(&zero, 4, 0).is_err());
    }

    #[test]
    fn du_dw_paper_examples() {
        let g = random_graph(3, 5);
        let sp = spectral::sym_eig(&g.laplacian()).unwrap();
        let zero = du_dw_paper(&sp, &DMatrix::zeros(5, 5)).unwrap();
        assert_eq!(zero, DMatrix::zeros(5, 5));
        let theta = g.theta(2).unwrap();
        let base = du_dw_paper(&sp, &theta.to_dense()).unwrap();
        let scaled = du_dw_paper(&sp, &(theta.to_dense() * 3.0)).unwrap();
        assert!((scaled - &base * 3.0).amax() <= 1e-10 * base.amax().max(1.0));
    }

    #[test]
    fn du_dw_perturbation_stationary_when_theta_commutes() {
        let sp =
            SpectralPair::from_parts(DMatrix::identity(3, 3), DVector::from_column_slice(&[1.0, 2.0, 4.0])).unwrap();
        let theta = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -2.0, 0.5]));
        assert_eq!(du_dw_perturbation(&sp, &theta, 1e-8).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn du_dw_perturbation_rejects_degenerate() {
        let sp =
            SpectralPair::from_parts(DMatrix::identity(3, 3), DVector::from_column_slice(&[1.0, 1.0, 4.0])).unwrap();
        let theta = DMatrix::identity(3, 3);
        assert!(matches!(du_dw_perturbation(&sp, &theta, 1e-8), Err(Error::DegenerateSpectrum { .. })));
    }

    #[test]
    fn du_dw_perturbation_matches_finite_differences() {
        for seed in 0..5 {
            let n = 6;
            let g = random_graph(seed, n);
            let sp = spectral::sym_eig(&g.laplacian()).unwrap();
            if sp.min_gap() < 1e-2 {
                continue;
            }
            for (e, theta) in g.thetas().enumerate() {
                let analytic = du_dw_perturbation_edge(&sp, &theta, 1e-8).unwrap();
                let h = 1e-6;
                let mut wp = g.weights().clone();
                wp[e] += h;
                let mut wm = g.weights().clone();
                wm[e] -= h;
                let up = spectral::sym_eig(&WeightedGraph::new(g.topology().clone(), wp).unwrap().laplacian()).unwrap();
                let um = spectral::sym_eig(&WeightedGraph::new(g.topology().clone(), wm).unwrap().laplacian()).unwrap();
                let fd = (up.vectors() - um.vectors()) / (2.0 * h);
                let err = (&analytic - &fd).norm() / fd.norm().max(1e-12);
                assert!(err <= 1e-4, "seed {seed} edge {e}: {err}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn dl_du_sparsity(seed in any::<u64>(), n in 2usize..8) {
            let r = random_spd(seed, n);
            let sp = spectral::sym_eig(&r).unwrap();
            for k in 0..n {
                for l in 0..n {
                    let nnz = dl_du(&sp, k, l).unwrap().iter().filter(|v| **v != 0.0).count();
                    prop_assert!(nnz < 2 * n);
                }
            }
        }

        #[test]
        fn trace_shortcut_matches_dense_trace(seed in any::<u64>(), n in 3usize..7) {
            let g = random_graph(seed, n);
            let sp = spectral::sym_eig(&g.laplacian()).unwrap();
            let chain = PaperChain::new(&sp);
            let floor = n as f64 * f64::EPSILON * sp.values().amax();
            for theta in g.thetas() {
                let fast = chain.du_dw(&theta);
                let dense = theta.to_dense();
                let slow = DMatrix::from_fn(n, n, |k, l| {
                    let m = spectral::pinv_with_floor(&dl_du(&sp, k, l).unwrap(), floor).transpose();
                    (m.transpose() * &dense).trace()
                });
                prop_assert!((&fast - &slow).amax() <= 1e-10 * slow.amax().max(1.0));
            }
        }

        #[test]
        fn perturbation_is_skew_in_eigenbasis(seed in any::<u64>(), n in 3usize..8) {
            let g = random_graph(seed, n);
            let sp = spectral::sym_eig(&g.laplacian()).unwrap();
            prop_assume!(sp.min_gap() > 1e-6);
            for theta in g.thetas() {
                let du = du_dw_perturbation_edge(&sp, &theta, 1e-8).unwrap();
                let dense = du_dw_perturbation(&sp, &theta.to_dense(), 1e-8).unwrap();
                prop_assert!((&du - &dense).amax() <= 1e-9 * dense.amax().max(1.0));
                let s = sp.vectors().transpose() * &du;
                prop_assert!((&s + s.transpose()).amax() <= 1e-8 * s.amax().max(1.0));
            }
        }
    }

    #[test]
    fn beta_only_gradient_at_stationary_point() {
        // R = I keeps U^T R U = I for any U, so dE/dU vanishes.
        let g = random_graph(4, 5);
        let hp = HyperParams { beta: 0.25, eps1: 0.0, eps2: 0.0, ..HyperParams::default() };
        let grad = grad_en_wrt_w(&g, &DMatrix::identity(5, 5), &hp).unwrap();
        assert!((grad - g.weights() * 0.5).amax() < 1e-12);
    }

    #[test]
    fn sparse_gradient_matches_finite_differences() {
        let g = random_graph(8, 5);
        let r = matgen::ar1_autocorr(5, 0.7).unwrap();
        let x = DVector::from_column_slice(&[0.4, -1.1, 0.9, 2.0, -0.3]);
        let hp = HyperParams { alpha1: 0.3, alpha2: 0.2, ..HyperParams::default() };
        let grad = grad_sparse_wrt_w(&g, &r, Some(&x), &hp).unwrap();
        let h = 1e-6;
        for e in 0..g.topology().num_edges() {
            let eval = |delta: f64| {
                let mut w = g.weights().clone();
                w[e] += delta;
                let gg = WeightedGraph::new(g.topology().clone(), w).unwrap();
                super::super::cost::cost_sparse(&gg, &r, &x, &hp).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((grad[e] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "edge {e}: {} vs {fd}", grad[e]);
        }
    }
}
