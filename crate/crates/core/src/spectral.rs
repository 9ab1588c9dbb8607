//! Dense symmetric eigensolver wrapper, condition numbers, power
//! normalization and the Moore-Penrose pseudoinverse.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Relative eigen-gap below which a spectrum is flagged degenerate.
pub const DEGENERACY_REL_GAP: f64 = 1e-9;

/// Eigenvectors (columns of `vectors`) and ascending eigenvalues.
///
/// Columns follow a canonical sign: the entry of largest magnitude is
/// positive, taking the first index when magnitudes tie.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    degenerate: bool,
}

impl SpectralPair {
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// True when some adjacent eigenvalues are closer than
    /// `DEGENERACY_REL_GAP` times the spectral radius.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Smallest gap between adjacent eigenvalues (infinity for n = 1).
    pub fn min_gap(&self) -> f64 {
        self.values.as_slice().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose()
    }

    /// Builds a pair from explicit parts, canonicalizing column signs. Used
    /// where a spectrum is constructed rather than computed.
    pub fn from_parts(vectors: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        if !vectors.is_square() || vectors.nrows() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{0}x{0} vectors", values.len()),
                found: format!("{}x{}", vectors.nrows(), vectors.ncols()),
            });
        }
        let mut vectors = vectors;
        canonicalize_signs(&mut vectors);
        let degenerate = degenerate(&values);
        Ok(Self { vectors, values, degenerate })
    }
}

fn degenerate(values: &DVector<f64>) -> bool {
    let radius = values.amax();
    values.as_slice().windows(2).any(|w| w[1] - w[0] < DEGENERACY_REL_GAP * radius)
}

fn canonicalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        // Magnitudes within a few ulps of the maximum count as ties.
        let top = col.amax() * (1.0 - 64.0 * f64::EPSILON);
        let best = col.iter().position(|x| x.abs() >= top).unwrap_or(0);
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

pub(crate) fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::InvalidDimension(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// Largest elementwise asymmetry `max |M - M^T|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let asym = asymmetry(m);
    // Absolute 1e-10 for unit-scale input, scaled up for large entries.
    if asym > 1e-10 * m.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Symmetric eigendecomposition with ascending eigenvalues and canonical
/// eigenvector signs. Bitwise deterministic for identical input.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<SpectralPair> {
    check_square(m)?;
    check_finite(m)?;
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(&order);
    canonicalize_signs(&mut vectors);
    let degenerate = degenerate(&values);
    Ok(SpectralPair { vectors, values, degenerate })
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_square(m)?;
    check_finite(m)?;
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(v))
}

/// `lambda_max / lambda_min` of a symmetric positive definite matrix.
pub fn cond_spd(m: &DMatrix<f64>) -> Result<f64> {
    let ev = sym_eigenvalues(m)?;
    let lo = ev[0];
    let hi = ev[ev.len() - 1];
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite(lo));
    }
    Ok(hi / lo)
}

/// `sigma_max / sigma_min` of a general square matrix.
pub fn cond_general(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m)?;
    check_finite(m)?;
    let sv = m.singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if hi == 0.0 || lo < 1e-14 * hi {
        return Err(Error::Singular(if hi == 0.0 { 0.0 } else { lo / hi }));
    }
    Ok(hi / lo)
}

/// A power-normalized matrix `S = D^{-1/2} R D^{-1/2}` and the diagonal `D`
/// it was scaled by.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAutocorr {
    pub s: DMatrix<f64>,
    pub diag: DVector<f64>,
}

pub fn power_normalize(r: &DMatrix<f64>) -> Result<NormalizedAutocorr> {
    let n = check_square(r)?;
    let diag = r.diagonal();
    if let Some(index) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::NonPositiveDiagonal { index, value: diag[index] });
    }
    let scale = diag.map(|d| d.sqrt().recip());
    let mut s = r.clone();
    for j in 0..n {
        for i in 0..n {
            s[(i, j)] *= scale[i] * scale[j];
        }
    }
    for i in 0..n {
        s[(i, i)] = 1.0;
    }
    Ok(NormalizedAutocorr { s, diag })
}

/// `||U^T U - I||_F`.
pub fn orthonormality_error(u: &DMatrix<f64>) -> f64 {
    let n = u.ncols();
    (u.transpose() * u - DMatrix::identity(n, n)).norm()
}

pub(crate) fn check_orthonormal(u: &DMatrix<f64>, tol: f64) -> Result<()> {
    check_square(u)?;
    let err = orthonormality_error(u);
    if !(err <= tol) {
        return Err(Error::NotOrthonormal(err));
    }
    Ok(())
}

pub(crate) fn check_same_dim(r: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<()> {
    if r.shape() != u.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", r.nrows(), r.ncols()),
            found: format!("{}x{}", u.nrows(), u.ncols()),
        });
    }
    Ok(())
}

/// Eigenvalues (ascending) of the power-normalized `U^T R U`.
pub fn split_normalized_spectrum(r: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_square(r)?;
    check_same_dim(r, u)?;
    check_orthonormal(u, 1e-8)?;
    let rt = u.transpose() * r * u;
    let rt = (&rt + rt.transpose()) * 0.5;
    sym_eigenvalues(&power_normalize(&rt)?.s)
}

/// Condition number after the unitary split `U^T R U` and power
/// normalization.
pub fn split_preconditioned_cond(r: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<f64> {
    let ev = split_normalized_spectrum(r, u)?;
    let lo = ev[0];
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite(lo));
    }
    Ok(ev[ev.len() - 1] / lo)
}

/// Moore-Penrose pseudoinverse through the SVD. Singular values below
/// `max(m, n) * eps * sigma_max` are treated as zero.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_with_floor(m, 0.0)
}

/// [`pinv`] with an extra absolute cutoff: singular values at or below
/// `floor` are also dropped, so a matrix that is zero relative to some
/// outer scale inverts to zero.
pub fn pinv_with_floor(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 || m.amax() == 0.0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let sigma = &svd.singular_values;
    let tol = (rows.max(cols) as f64 * f64::EPSILON * sigma.max()).max(floor);
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in sigma.iter().enumerate() {
        if s > tol {
            out += v_t.row(k).transpose() * u.column(k).transpose() * s.recip();
        }
    }
    out
}
