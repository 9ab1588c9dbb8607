//! Test matrices and excitation signals.
//!
//! Every generator is a pure function of its parameters and seed.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::rng::{self, stream};
use crate::spectral;
use crate::{Error, Result};

/// Sparsity presets (nonzero fraction) for the sparse family.
pub const SPARSITY_PRESETS: [f64; 5] = [5.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0, 1.0 / 2.0, 1.0 / 5.0];

/// The eight `(rho1, rho2)` pairs used for the AR(2) comparisons.
pub const AR2_PRESETS: [(f64, f64); 8] =
    [(0.015, 0.01), (0.15, 0.1), (0.75, 0.7), (0.25, 0.01), (0.75, 0.1), (0.9, 0.01), (0.95, 0.1), (0.99, 0.7)];

pub const DEFAULT_RANDOM_PD_REG: f64 = 1e-3;
pub const DEFAULT_SHIFT_MARGIN: f64 = 0.1;

/// `H(i, j) = 1 / (i + j + 1)` (zero-based) plus `alpha I`.
pub fn hilbert(n: usize, alpha: f64) -> Result<DMatrix<f64>> {
    check_n(n)?;
    if !(alpha >= 0.0) {
        return Err(Error::OutOfRange(format!("hilbert alpha must be >= 0, got {alpha}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64 + if i == j { alpha } else { 0.0 }))
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be positive".into()));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("rho must lie in [0, 1), got {rho}")))
    }
}

/// Toeplitz `rho^|i-j|`.
pub fn ar1_autocorr(n: usize, rho: f64) -> Result<DMatrix<f64>> {
    check_n(n)?;
    check_rho(rho)?;
    Ok(DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32)))
}

/// Mixing weights `(c1, c2)` of the AR(2) autocorrelation.
pub fn ar2_coefficients(rho1: f64, rho2: f64) -> Result<(f64, f64)> {
    if !(rho1.abs() < 1.0 && rho2.abs() < 1.0) {
        return Err(Error::OutOfRange(format!("|rho| must be < 1, got ({rho1}, {rho2})")));
    }
    let denom = (rho1 - rho2) * (1.0 + rho1 * rho2);
    if rho1 == rho2 || 1.0 + rho1 * rho2 == 0.0 {
        return Err(Error::DegenerateParameters(format!("rho1 = {rho1}, rho2 = {rho2}")));
    }
    let c1 = rho1 * (1.0 - rho2 * rho2) / denom;
    let c2 = -rho2 * (1.0 - rho1 * rho1) / denom;
    Ok((c1, c2))
}

fn signed_toeplitz(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// `c1 R(rho1) + c2 R(rho2)`. Logs a warning when the result is not
/// positive definite at this size.
pub fn ar2_autocorr(n: usize, rho1: f64, rho2: f64) -> Result<DMatrix<f64>> {
    check_n(n)?;
    let (c1, c2) = ar2_coefficients(rho1, rho2)?;
    let mut r = signed_toeplitz(n, rho1) * c1 + signed_toeplitz(n, rho2) * c2;
    r.fill_diagonal(1.0);
    match spectral::sym_eigenvalues(&r) {
        Ok(ev) if ev[0] <= 0.0 => {
            log::warn!(
                "AR(2) autocorrelation ({rho1}, {rho2}) at n = {n} is not positive definite (min eigenvalue {:e})",
                ev[0]
            );
        }
        _ => {}
    }
    Ok(r)
}

/// `G^T G / n + reg I` with standard normal `G`.
pub fn random_pd(n: usize, seed: u64, reg: f64) -> Result<DMatrix<f64>> {
    check_n(n)?;
    if !(reg >= 0.0) {
        return Err(Error::OutOfRange(format!("regularizer must be >= 0, got {reg}")));
    }
    let mut rng = rng::seeded(seed, stream::MATRIX);
    let g = DMatrix::from_vec(n, n, rng::normal_vec(&mut rng, n * n));
    let mut r = g.transpose() * &g / n as f64;
    r = (&r + r.transpose()) * 0.5;
    for i in 0..n {
        r[(i, i)] += reg;
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePd {
    pub matrix: DMatrix<f64>,
    /// Fraction of nonzero entries in `matrix`.
    pub density: f64,
    /// Diagonal shift that was added to reach positive definiteness.
    pub shift: f64,
}

/// Random symmetric matrix on a seeded mask with `round(density * P)` of
/// the `P = n(n-1)/2` off-diagonal pairs, then shifted to be positive
/// definite with smallest eigenvalue `shift_margin`.
pub fn random_sparse_pd(n: usize, density: f64, seed: u64, shift_margin: f64) -> Result<SparsePd> {
    check_n(n)?;
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::OutOfRange(format!("density must lie in (0, 1], got {density}")));
    }
    if !(shift_margin > 0.0) {
        return Err(Error::OutOfRange(format!("shift margin must be positive, got {shift_margin}")));
    }
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let keep = (density * pairs.len() as f64).round() as usize;
    pairs.shuffle(&mut rng::seeded(seed, stream::MASK));
    pairs.truncate(keep);
    pairs.sort_unstable();

    let mut rng = rng::seeded(seed, stream::MATRIX);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = rng::normal(&mut rng);
    }
    for &(i, j) in &pairs {
        // Average of two draws, the symmetrized value of a Gaussian matrix.
        let v = 0.5 * (rng::normal(&mut rng) + rng::normal(&mut rng));
        a[(i, j)] = v;
        a[(j, i)] = v;
    }
    let lo = spectral::sym_eigenvalues(&a)?[0];
    let shift = lo.abs() + shift_margin;
    for i in 0..n {
        a[(i, i)] += shift;
    }
    let nnz = a.iter().filter(|v| **v != 0.0).count();
    Ok(SparsePd { density: nnz as f64 / (n * n) as f64, matrix: a, shift })
}

/// Unit-variance AR(1) sequence `x(k) = rho x(k-1) + sqrt(1 - rho^2) v(k)`.
pub fn ar1_signal(length: usize, rho: f64, seed: u64) -> Result<Vec<f64>> {
    check_rho(rho)?;
    let mut rng = rng::seeded(seed, stream::SIGNAL);
    let gain = (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(length);
    let mut prev = 0.0;
    for k in 0..length {
        let v = rng::normal(&mut rng);
        prev = if k == 0 { v } else { rho * prev + gain * v };
        out.push(prev);
    }
    Ok(out)
}

/// Unit-variance AR(2) sequence with real poles `rho1`, `rho2`:
/// `x(k) = (rho1 + rho2) x(k-1) - rho1 rho2 x(k-2) + v(k)`, scaled by the
/// stationary standard deviation after a burn-in.
pub fn ar2_signal(length: usize, rho1: f64, rho2: f64, seed: u64) -> Result<Vec<f64>> {
    ar2_coefficients(rho1, rho2)?;
    let a1 = rho1 + rho2;
    let a2 = -rho1 * rho2;
    // Stationary variance of the recursion driven by unit-variance noise.
    let var = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
    let scale = var.sqrt().recip();
    let rho_max = rho1.abs().max(rho2.abs());
    let burn_in = (10.0 / (1.0 - rho_max)).ceil() as usize + 100;
    let mut rng = rng::seeded(seed, stream::SIGNAL);
    let (mut x1, mut x2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(length);
    for k in 0..burn_in + length {
        let x = a1 * x1 + a2 * x2 + rng::normal(&mut rng);
        x2 = x1;
        x1 = x;
        if k >= burn_in {
            out.push(x * scale);
        }
    }
    Ok(out)
}

/// Biased sample autocorrelation matrix (Toeplitz) of a sequence.
pub fn sample_autocorr(x: &[f64], lags: usize) -> DMatrix<f64> {
    let len = x.len() as f64;
    let r: Vec<f64> =
        (0..lags).map(|m| x.iter().zip(x.iter().skip(m)).map(|(a, b)| a * b).sum::<f64>() / len).collect();
    DMatrix::from_fn(lags, lags, |i, j| r[i.abs_diff(j)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Hilbert,
    RandomPd,
    SparsePd,
    Ar1,
    Ar2,
    File,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Hilbert => "hilbert",
            Self::RandomPd => "random-pd",
            Self::SparsePd => "sparse-pd",
            Self::Ar1 => "ar1",
            Self::Ar2 => "ar2",
            Self::File => "file",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hilbert" => Self::Hilbert,
            "random-pd" => Self::RandomPd,
            "sparse-pd" => Self::SparsePd,
            "ar1" | "markov" => Self::Ar1,
            "ar2" => Self::Ar2,
            "file" => Self::File,
            other => return Err(Error::Parse(format!("unknown matrix family `{other}`"))),
        })
    }
}

/// Parameters of one generated matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSpec {
    Hilbert { n: usize, alpha: f64 },
    RandomPd { n: usize, reg: f64, seed: u64 },
    SparsePd { n: usize, density: f64, shift_margin: f64, seed: u64 },
    Ar1 { n: usize, rho: f64 },
    Ar2 { n: usize, rho1: f64, rho2: f64 },
}

impl MatrixSpec {
    pub fn family(&self) -> Family {
        match self {
            Self::Hilbert { .. } => Family::Hilbert,
            Self::RandomPd { .. } => Family::RandomPd,
            Self::SparsePd { .. } => Family::SparsePd,
            Self::Ar1 { .. } => Family::Ar1,
            Self::Ar2 { .. } => Family::Ar2,
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            Self::Hilbert { n, .. }
            | Self::RandomPd { n, .. }
            | Self::SparsePd { n, .. }
            | Self::Ar1 { n, .. }
            | Self::Ar2 { n, .. } => n,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match *self {
            Self::RandomPd { seed, .. } | Self::SparsePd { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Family parameters as `key=value` pairs joined by `;`.
    pub fn params(&self) -> String {
        match self {
            Self::Hilbert { alpha, .. } => format!("alpha={alpha}"),
            Self::RandomPd { reg, .. } => format!("reg={reg}"),
            Self::SparsePd { density, shift_margin, .. } => format!("density={density};shift_margin={shift_margin}"),
            Self::Ar1 { rho, .. } => format!("rho={rho}"),
            Self::Ar2 { rho1, rho2, .. } => format!("rho1={rho1};rho2={rho2}"),
        }
    }

    /// Short identifier, unique within a benchmark suite.
    pub fn id(&self) -> String {
        let mut id = format!("{}-n{}-{}", self.family(), self.n(), self.params());
        if let Some(seed) = self.seed() {
            id.push_str(&format!("-s{seed}"));
        }
        id
    }

    pub fn generate(&self) -> Result<DMatrix<f64>> {
        match *self {
            Self::Hilbert { n, alpha } => hilbert(n, alpha),
            Self::RandomPd { n, reg, seed } => random_pd(n, seed, reg),
            Self::SparsePd { n, density, shift_margin, seed } => {
                random_sparse_pd(n, density, seed, shift_margin).map(|s| s.matrix)
            }
            Self::Ar1 { n, rho } => ar1_autocorr(n, rho),
            Self::Ar2 { n, rho1, rho2 } => ar2_autocorr(n, rho1, rho2),
        }
    }
}

/// Writes `n` on the first line, then `n` rows of space-separated values
/// with 17 significant digits.
pub fn write_matrix<W: Write>(mut out: W, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(out, "{}", m.nrows())?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// 17 significant digits in exponent form; parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_matrix<R: BufRead>(input: R) -> Result<DMatrix<f64>> {
    let mut lines = input.lines().map(|l| l.map_err(|e| Error::Parse(e.to_string())));
    let mut next_nonempty = || -> Result<Option<String>> {
        for line in lines.by_ref() {
            let line = line?;
            if !line.trim().is_empty() {
                return Ok(Some(line));
            }
        }
        Ok(None)
    };
    let header = next_nonempty()?.ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let n: usize = header.trim().parse().map_err(|_| Error::Parse(format!("bad dimension line `{header}`")))?;
    check_n(n)?;
    let mut data = Vec::with_capacity(n * n);
    for row in 0..n {
        let line = next_nonempty()?.ok_or_else(|| Error::Parse(format!("missing row {}", row + 1)))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}` in row {}", row + 1))))
            .collect::<Result<_>>()?;
        if values.len() != n {
            return Err(Error::Parse(format!("row {} has {} entries, expected {n}", row + 1, values.len())));
        }
        data.extend(values);
    }
    if next_nonempty()?.is_some() {
        return Err(Error::Parse("trailing data after matrix".into()));
    }
    Ok(DMatrix::from_row_slice(n, n, &data))
}
