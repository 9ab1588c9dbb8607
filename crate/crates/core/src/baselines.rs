//! Classical preconditioners and the condition-ratio metric.
//!
//! Unitary-split preconditioners (DCT, DFT, learned) are scored on the
//! power-normalized `U^T A U`. Left preconditioners are scored on `M^{-1} A`
//! through its singular values, since that product is generally nonnormal.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};

use crate::spectral::{self, check_square};
use crate::{Error, Result};

/// Default relaxation factor for SOR and SSOR.
pub const DEFAULT_OMEGA: f64 = 1.5;

/// Orthonormal DCT-II matrix; row `k` is the `k`-th cosine basis vector.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |k, j| {
        if k == 0 {
            nf.sqrt().recip()
        } else {
            (2.0 / nf).sqrt() * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos()
        }
    })
}

/// Unitary DFT matrix with entries `exp(-2 pi i jk / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> DMatrix<Complex<f64>> {
    let scale = (n as f64).sqrt().recip();
    DMatrix::from_fn(n, n, |j, k| {
        // Reduce jk mod n first so the angle stays small and exact.
        let idx = (j * k) % n;
        Complex::from_polar(scale, -2.0 * PI * idx as f64 / n as f64)
    })
}

/// Split-preconditioned condition number under the DFT: `F^H R F`,
/// power-normalized by its (real) diagonal.
pub fn dft_split_cond(r: &DMatrix<f64>) -> Result<f64> {
    let n = check_square(r)?;
    let f = dft_matrix(n);
    let rc = r.map(|v| Complex::new(v, 0.0));
    let rt = f.adjoint() * rc * &f;
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = rt[(i, i)].re;
        if !(d > 0.0) {
            return Err(Error::NonPositiveDiagonal { index: i, value: d });
        }
        scale[i] = d.sqrt().recip();
    }
    let mut s = DMatrix::from_fn(n, n, |i, j| rt[(i, j)] * (scale[i] * scale[j]));
    // Force exact Hermitian symmetry before the eigensolve.
    s = (&s + s.adjoint()).map(|c| c * 0.5);
    let ev = s.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite(lo));
    }
    Ok(hi / lo)
}

/// How a left preconditioner applies `M^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum LeftFactor {
    Diagonal(DVector<f64>),
    /// Lower triangular `M`, applied by forward substitution.
    Lower(DMatrix<f64>),
    /// General invertible `M`, applied through LU.
    Dense(DMatrix<f64>),
    /// Incomplete LU with unit-lower `l` and upper `u`.
    Ilu {
        l: DMatrix<f64>,
        u: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preconditioner {
    UnitarySplit { label: String, u: DMatrix<f64> },
    Left { label: String, factor: LeftFactor },
}

impl Preconditioner {
    pub fn label(&self) -> &str {
        match self {
            Self::UnitarySplit { label, .. } | Self::Left { label, .. } => label,
        }
    }

    /// DCT-II as a split preconditioner. Columns of `u` are basis vectors.
    pub fn dct(n: usize) -> Self {
        Self::UnitarySplit { label: "dct".into(), u: dct_matrix(n).transpose() }
    }

    pub fn unitary(label: impl Into<String>, u: DMatrix<f64>) -> Result<Self> {
        spectral::check_orthonormal(&u, 1e-8)?;
        Ok(Self::UnitarySplit { label: label.into(), u })
    }

    /// The preconditioner matrix `M` (left) or `U` (split).
    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            Self::UnitarySplit { u, .. } => u.clone(),
            Self::Left { factor, .. } => match factor {
                LeftFactor::Diagonal(d) => DMatrix::from_diagonal(d),
                LeftFactor::Lower(m) | LeftFactor::Dense(m) => m.clone(),
                LeftFactor::Ilu { l, u } => l * u,
            },
        }
    }

    /// `M^{-1} A` for a left preconditioner.
    pub fn apply_left(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let Self::Left { factor, .. } = self else {
            return Err(Error::InvalidInput("not a left preconditioner".into()));
        };
        let singular = || Error::Singular(0.0);
        match factor {
            LeftFactor::Diagonal(d) => {
                let mut out = a.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row /= d[i];
                }
                Ok(out)
            }
            LeftFactor::Lower(m) => m.solve_lower_triangular(a).ok_or_else(singular),
            LeftFactor::Dense(m) => m.clone().lu().solve(a).ok_or_else(singular),
            LeftFactor::Ilu { l, u } => {
                let y = l.solve_lower_triangular(a).ok_or_else(singular)?;
                u.solve_upper_triangular(&y).ok_or_else(singular)
            }
        }
    }

    /// Condition number of `A` after preconditioning.
    pub fn condition_number(&self, a: &DMatrix<f64>) -> Result<f64> {
        match self {
            Self::UnitarySplit { u, .. } => spectral::split_preconditioned_cond(a, u),
            Self::Left { .. } => spectral::cond_general(&self.apply_left(a)?),
        }
    }
}

fn checked_diagonal(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_square(a)?;
    let d = a.diagonal();
    if let Some(i) = d.iter().position(|v| *v == 0.0) {
        return Err(Error::ZeroDiagonal(i));
    }
    Ok(d)
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega < 2.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("relaxation factor {omega} outside (0, 2)")))
    }
}

/// `D/omega + L_low`.
fn relaxed_lower(a: &DMatrix<f64>, omega: f64) -> DMatrix<f64> {
    let mut m = a.lower_triangle();
    for i in 0..m.nrows() {
        m[(i, i)] /= omega;
    }
    m
}

/// `M = diag(A)`.
pub fn jacobi_precond(a: &DMatrix<f64>) -> Result<Preconditioner> {
    Ok(Preconditioner::Left { label: "jacobi".into(), factor: LeftFactor::Diagonal(checked_diagonal(a)?) })
}

/// `M = D + L_low`.
pub fn gauss_seidel_precond(a: &DMatrix<f64>) -> Result<Preconditioner> {
    checked_diagonal(a)?;
    Ok(Preconditioner::Left { label: "gauss-seidel".into(), factor: LeftFactor::Lower(a.lower_triangle()) })
}

/// `M = D/omega + L_low`.
pub fn sor_precond(a: &DMatrix<f64>, omega: f64) -> Result<Preconditioner> {
    checked_diagonal(a)?;
    check_omega(omega)?;
    Ok(Preconditioner::Left { label: "sor".into(), factor: LeftFactor::Lower(relaxed_lower(a, omega)) })
}

/// `M = omega/(2-omega) (D/omega + L_low) D^{-1} (D/omega + L_low^T)`.
pub fn ssor_precond(a: &DMatrix<f64>, omega: f64) -> Result<Preconditioner> {
    let d = checked_diagonal(a)?;
    check_omega(omega)?;
    let lower = relaxed_lower(a, omega);
    let mut upper = a.upper_triangle();
    for i in 0..upper.nrows() {
        upper[(i, i)] /= omega;
    }
    let mut scaled = lower;
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= d[j];
    }
    let m = scaled * upper * (omega / (2.0 - omega));
    Ok(Preconditioner::Left { label: "ssor".into(), factor: LeftFactor::Dense(m) })
}

/// ILU(0): LU restricted to the nonzero pattern of `A`.
pub fn ilu0_precond(a: &DMatrix<f64>) -> Result<Preconditioner> {
    let (l, u) = ilu0_factors(a)?;
    Ok(Preconditioner::Left { label: "ilu0".into(), factor: LeftFactor::Ilu { l, u } })
}

/// Unit-lower and upper factors of ILU(0).
pub fn ilu0_factors(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = checked_diagonal(a)?.len();
    let pattern = a.map(|v| v != 0.0);
    let mut f = a.clone();
    for i in 1..n {
        for k in 0..i {
            if !pattern[(i, k)] {
                continue;
            }
            let pivot = f[(k, k)];
            if pivot == 0.0 {
                return Err(Error::IluBreakdown(k));
            }
            f[(i, k)] /= pivot;
            let lik = f[(i, k)];
            for j in k + 1..n {
                if pattern[(i, j)] {
                    f[(i, j)] -= lik * f[(k, j)];
                }
            }
        }
    }
    if let Some(i) = (0..n).find(|&i| f[(i, i)] == 0.0) {
        return Err(Error::IluBreakdown(i));
    }
    let mut l = f.lower_triangle();
    l.fill_diagonal(1.0);
    Ok((l, f.upper_triangle()))
}

/// `cond_method / cond_precog`, optionally as `log10`.
pub fn condition_ratio(cond_method: f64, cond_precog: f64, log10: bool) -> Result<f64> {
    if !(cond_method > 0.0 && cond_precog > 0.0) {
        return Err(Error::OutOfRange(format!(
            "condition numbers must be positive (got {cond_method}, {cond_precog})"
        )));
    }
    let ratio = cond_method / cond_precog;
    Ok(if log10 { ratio.log10() } else { ratio })
}
