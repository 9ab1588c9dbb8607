//! Undirected weighted graphs and their Laplacians.
//!
//! Vertices are zero-based. Each edge `(p, q)` is stored with `p < q`, and the
//! incidence column of an edge carries `+1` at the smaller endpoint.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Vertex count plus an ordered, duplicate-free edge list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Builds a topology from explicit edges. Pairs may be given in either
    /// orientation; they are stored as `(min, max)` in the order supplied.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("graph needs n >= 2, got {n}")));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for (a, b) in edges {
            let (p, q) = if a < b { (a, b) } else { (b, a) };
            if p == q {
                return Err(Error::InvalidInput(format!("self-loop at vertex {p}")));
            }
            if q >= n {
                return Err(Error::IndexOutOfRange { index: q, len: n });
            }
            if !seen.insert((p, q)) {
                return Err(Error::InvalidInput(format!("duplicate edge ({p}, {q})")));
            }
            out.push((p, q));
        }
        Ok(Self { n, edges: out })
    }

    /// All pairs with `0 < j - i <= band`, in lexicographic order.
    pub fn banded(n: usize, band: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("graph needs n >= 2, got {n}")));
        }
        if band == 0 {
            return Err(Error::InvalidInput("band must be at least 1".into()));
        }
        let edges = (0..n).flat_map(|i| (i + 1..n.min(i + band + 1)).map(move |j| (i, j))).collect();
        Ok(Self { n, edges })
    }

    pub fn full(n: usize) -> Result<Self> {
        Self::banded(n, n.max(2) - 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// `n x |E|` incidence matrix, `+1` at the smaller endpoint.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n, self.edges.len());
        for (e, &(p, q)) in self.edges.iter().enumerate() {
            b[(p, e)] = 1.0;
            b[(q, e)] = -1.0;
        }
        b
    }
}

/// Derivative of the Laplacian with respect to one edge weight.
///
/// Only the endpoints are stored; the dense form has `+1` at `(p,p)` and
/// `(q,q)` and `-1` at `(p,q)` and `(q,p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Theta {
    pub n: usize,
    pub p: usize,
    pub q: usize,
}

impl Theta {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.n, self.n);
        t[(self.p, self.p)] = 1.0;
        t[(self.q, self.q)] = 1.0;
        t[(self.p, self.q)] = -1.0;
        t[(self.q, self.p)] = -1.0;
        t
    }

    /// `a^T Theta b`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        (a[self.p] - a[self.q]) * (b[self.p] - b[self.q])
    }

    /// `Tr(M Theta)` for a dense `M`, touching only the four relevant entries.
    pub fn trace_with(&self, m: &DMatrix<f64>) -> f64 {
        let (p, q) = (self.p, self.q);
        m[(p, p)] + m[(q, q)] - m[(p, q)] - m[(q, p)]
    }
}

/// A topology with one real weight per edge. Weights may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    topology: Topology,
    weights: DVector<f64>,
}

impl WeightedGraph {
    pub fn new(topology: Topology, weights: DVector<f64>) -> Result<Self> {
        if weights.len() != topology.num_edges() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} weights", topology.num_edges()),
                found: format!("{}", weights.len()),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidInput(format!("weight {i} is not finite")));
        }
        Ok(Self { topology, weights })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.topology.n
    }

    /// `L = B diag(w) B^T`, accumulated edge by edge.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = DMatrix::zeros(n, n);
        for (&(p, q), &w) in self.topology.edges.iter().zip(self.weights.iter()) {
            l[(p, p)] += w;
            l[(q, q)] += w;
            l[(p, q)] -= w;
            l[(q, p)] -= w;
        }
        l
    }

    pub fn theta(&self, edge: usize) -> Result<Theta> {
        let &(p, q) = self
            .topology
            .edges
            .get(edge)
            .ok_or(Error::IndexOutOfRange { index: edge, len: self.topology.num_edges() })?;
        Ok(Theta { n: self.n(), p, q })
    }

    pub fn thetas(&self) -> impl Iterator<Item = Theta> + '_ {
        let n = self.n();
        self.topology.edges.iter().map(move |&(p, q)| Theta { n, p, q })
    }

    /// Weighted degree using `|w|`, the form the log-degree penalty needs.
    pub fn degree_vector(&self) -> DVector<f64> {
        self.degrees(f64::abs)
    }

    /// Weighted degree with signed weights (the diagonal of `L`).
    pub fn signed_degree_vector(&self) -> DVector<f64> {
        self.degrees(|w| w)
    }

    fn degrees(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut d = DVector::zeros(self.n());
        for (&(p, q), &w) in self.topology.edges.iter().zip(self.weights.iter()) {
            d[p] += f(w);
            d[q] += f(w);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::spectral::sym_eig;
    use proptest::prelude::*;

    fn graph(t: Topology, w: &[f64]) -> WeightedGraph {
        WeightedGraph::new(t, DVector::from_column_slice(w)).unwrap()
    }

    fn path3() -> Topology {
        Topology::banded(3, 1).unwrap()
    }

    #[test]
    fn banded_examples() {
        let t = Topology::banded(4, 2).unwrap();
        assert_eq!(t.edges(), &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(t.num_edges(), 2 * 4 - 3);
        assert_eq!(Topology::banded(2, 2).unwrap().edges(), &[(0, 1)]);
        assert_eq!(Topology::banded(5, 4).unwrap(), Topology::full(5).unwrap());
        assert!(matches!(Topology::banded(1, 2), Err(Error::InvalidDimension(_))));
        for n in 3..12 {
            assert_eq!(Topology::banded(n, 2).unwrap().num_edges(), 2 * n - 3);
        }
    }

    #[test]
    fn full_examples() {
        assert_eq!(Topology::full(3).unwrap().edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(Topology::full(2).unwrap().edges(), &[(0, 1)]);
        assert_eq!(Topology::full(10).unwrap().num_edges(), 45);
        assert!(Topology::full(1).is_err());
    }

    #[test]
    fn explicit_topology_validation() {
        assert!(Topology::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Topology::new(3, [(1, 1)]).is_err());
        assert!(Topology::new(3, [(0, 3)]).is_err());
        assert_eq!(Topology::new(3, [(2, 0)]).unwrap().edges(), &[(0, 2)]);
    }

    #[test]
    fn incidence_examples() {
        let b = Topology::full(2).unwrap().incidence_matrix();
        assert_eq!(b.as_slice(), &[1.0, -1.0]);
        let b = path3().incidence_matrix();
        assert_eq!(b, DMatrix::from_column_slice(3, 2, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]));
        let b = Topology::full(6).unwrap().incidence_matrix();
        for c in b.column_iter() {
            assert_eq!(c.sum(), 0.0);
        }
    }

    #[test]
    fn laplacian_examples() {
        let l = graph(Topology::full(2).unwrap(), &[1.0]).laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let l = graph(path3(), &[1.0, 1.0]).laplacian();
        assert_eq!(l, DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]));
    }

    #[test]
    fn theta_examples() {
        let g = graph(Topology::full(3).unwrap(), &[0.3, -1.2, 2.0]);
        let t = g.theta(1).unwrap();
        assert_eq!((t.p, t.q), (0, 2));
        let d = t.to_dense();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0]);
        assert_eq!(d, expected);
        assert_eq!(d.iter().filter(|v| **v != 0.0).count(), 4);
        assert_eq!(d.trace(), 2.0);
        assert_eq!(d * DVector::from_element(3, 1.0), DVector::zeros(3));
        assert!(matches!(g.theta(3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn degree_examples() {
        let d = graph(Topology::full(2).unwrap(), &[3.0]).degree_vector();
        assert_eq!(d.as_slice(), &[3.0, 3.0]);
        let d = graph(path3(), &[1.0, 2.0]).degree_vector();
        assert_eq!(d.as_slice(), &[1.0, 3.0, 2.0]);
        let g = graph(Topology::full(2).unwrap(), &[-1.0]);
        assert_eq!(g.degree_vector().as_slice(), &[1.0, 1.0]);
        assert_eq!(g.signed_degree_vector().as_slice(), &[-1.0, -1.0]);
    }

    /// Every graph on n <= 5 vertices (all edge subsets), random weights.
    #[test]
    fn laplacian_matches_elementwise_construction_exhaustive() {
        let mut rng = rng::seeded(11, 0);
        for n in 2..=5usize {
            let pairs: Vec<_> = Topology::full(n).unwrap().edges().to_vec();
            for mask in 1u32..(1 << pairs.len()) {
                let edges: Vec<_> =
                    pairs.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, e)| *e).collect();
                let t = Topology::new(n, edges.clone()).unwrap();
                let w = rng::normal_vec(&mut rng, edges.len());
                let g = graph(t, &w);
                let l = g.laplacian();
                let mut direct = DMatrix::<f64>::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        direct[(i, j)] = if i == j {
                            edges.iter().zip(&w).filter(|((p, q), _)| *p == i || *q == i).map(|(_, w)| *w).sum()
                        } else {
                            edges
                                .iter()
                                .zip(&w)
                                .find(|((p, q), _)| (*p, *q) == (i.min(j), i.max(j)))
                                .map_or(0.0, |(_, w)| -*w)
                        };
                    }
                }
                assert!((&l - &direct).amax() < 1e-12);
                let bwbt = {
                    let b = g.topology().incidence_matrix();
                    &b * DMatrix::from_diagonal(g.weights()) * b.transpose()
                };
                assert!((&l - &bwbt).amax() < 1e-12);
                assert!(l.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max) < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn nonnegative_weights_give_psd(seed in any::<u64>(), n in 2usize..9, band in 1usize..4) {
            let t = Topology::banded(n, band).unwrap();
            let mut r = rng::seeded(seed, 0);
            let w: Vec<f64> = rng::normal_vec(&mut r, t.num_edges()).iter().map(|v| v.abs()).collect();
            let l = graph(t, &w).laplacian();
            let sp = sym_eig(&l).unwrap();
            prop_assert!(sp.values()[0] >= -1e-10);
        }

        #[test]
        fn laplacian_is_linear_in_weights(seed in any::<u64>(), n in 2usize..9) {
            let t = Topology::full(n).unwrap();
            let mut r = rng::seeded(seed, 0);
            let g = graph(t, &rng::normal_vec(&mut r, n * (n - 1) / 2));
            let mut sum = DMatrix::<f64>::zeros(n, n);
            for (theta, w) in g.thetas().zip(g.weights().iter()) {
                sum += theta.to_dense() * *w;
            }
            prop_assert_eq!(sum, g.laplacian());
        }

        #[test]
        fn theta_ignores_incidence_sign_convention(seed in any::<u64>(), n in 2usize..8) {
            let t = Topology::banded(n, 2).unwrap();
            let b = t.incidence_matrix();
            let flipped = -&b;
            let mut r = rng::seeded(seed, 0);
            let g = graph(t.clone(), &rng::normal_vec(&mut r, t.num_edges()));
            for (e, theta) in g.thetas().enumerate() {
                let col = flipped.column(e);
                prop_assert_eq!(theta.to_dense(), col * col.transpose());
                let col = b.column(e);
                prop_assert_eq!(theta.to_dense(), col * col.transpose());
            }
        }
    }
}
