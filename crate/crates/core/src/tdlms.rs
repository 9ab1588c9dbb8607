//! LMS and transform-domain LMS adaptive filters for system identification.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::rng::{self, stream};
use crate::{matgen, spectral, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub taps: usize,
    pub step: f64,
    /// Smoothing factor of the per-bin power estimate.
    pub gamma_pow: f64,
    /// Floor added to the power estimate before dividing.
    pub delta_pow: f64,
    /// Orthonormal transform whose columns are the basis vectors; `None`
    /// runs plain LMS.
    pub transform: Option<DMatrix<f64>>,
}

impl FilterConfig {
    pub fn lms(taps: usize, step: f64) -> Self {
        Self { taps, step, gamma_pow: 0.99, delta_pow: 1e-6, transform: None }
    }

    pub fn transform_domain(step: f64, transform: DMatrix<f64>) -> Self {
        Self { transform: Some(transform.clone()), ..Self::lms(transform.nrows(), step) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::InvalidDimension("filter needs at least one tap".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::OutOfRange(format!("step must be positive, got {}", self.step)));
        }
        if !(self.gamma_pow > 0.0 && self.gamma_pow < 1.0) {
            return Err(Error::OutOfRange(format!("gamma_pow must lie in (0, 1), got {}", self.gamma_pow)));
        }
        if !(self.delta_pow > 0.0) {
            return Err(Error::OutOfRange(format!("delta_pow must be positive, got {}", self.delta_pow)));
        }
        if let Some(u) = &self.transform {
            if u.shape() != (self.taps, self.taps) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{0}x{0} transform", self.taps),
                    found: format!("{}x{}", u.nrows(), u.ncols()),
                });
            }
            spectral::check_orthonormal(u, 1e-8)?;
        }
        Ok(())
    }
}

/// Adaptive weights plus the per-bin power estimates (TDLMS only).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub weights: DVector<f64>,
    pub power: DVector<f64>,
}

impl FilterState {
    pub fn new(taps: usize) -> Self {
        Self { weights: DVector::zeros(taps), power: DVector::from_element(taps, 1.0) }
    }
}

/// One LMS update; returns the a priori error.
pub fn lms_step(state: &mut FilterState, x: &DVector<f64>, d: f64, step: f64) -> f64 {
    let e = d - state.weights.dot(x);
    state.weights.axpy(step * e, x, 1.0);
    e
}

/// One transform-domain update with power normalization; returns the a
/// priori error.
pub fn tdlms_step(state: &mut FilterState, x: &DVector<f64>, d: f64, cfg: &FilterConfig) -> f64 {
    let u = cfg.transform.as_ref().expect("tdlms_step needs a transform");
    let v = u.tr_mul(x);
    tdlms_step_transformed(state, &v, d, cfg)
}

fn tdlms_step_transformed(state: &mut FilterState, v: &DVector<f64>, d: f64, cfg: &FilterConfig) -> f64 {
    let g = cfg.gamma_pow;
    for (p, vi) in state.power.iter_mut().zip(v.iter()) {
        *p = g * *p + (1.0 - g) * vi * vi;
    }
    let e = d - state.weights.dot(v);
    for ((w, vi), p) in state.weights.iter_mut().zip(v.iter()).zip(state.power.iter()) {
        *w += cfg.step * e * vi / (p + cfg.delta_pow);
    }
    e
}

/// A filter that dispatches on whether a transform is configured.
#[derive(Debug, Clone)]
pub struct AdaptiveFilter {
    cfg: FilterConfig,
    state: FilterState,
}

impl AdaptiveFilter {
    pub fn new(cfg: FilterConfig) -> Result<Self> {
        cfg.validate()?;
        let state = FilterState::new(cfg.taps);
        Ok(Self { cfg, state })
    }

    pub fn step(&mut self, x: &DVector<f64>, d: f64) -> f64 {
        match self.cfg.transform {
            None => lms_step(&mut self.state, x, d, self.cfg.step),
            Some(_) => tdlms_step(&mut self.state, x, d, &self.cfg),
        }
    }

    /// The equivalent time-domain FIR coefficients (`U w` for TDLMS).
    pub fn equivalent_weights(&self) -> DVector<f64> {
        match &self.cfg.transform {
            None => self.state.weights.clone(),
            Some(u) => u * &self.state.weights,
        }
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }
}

/// Excitation process for a system-identification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSpec {
    White,
    Ar1 { rho: f64 },
    Ar2 { rho1: f64, rho2: f64 },
}

impl InputSpec {
    pub fn generate(&self, length: usize, seed: u64) -> Result<Vec<f64>> {
        match *self {
            Self::White => matgen::ar1_signal(length, 0.0, seed),
            Self::Ar1 { rho } => matgen::ar1_signal(length, rho, seed),
            Self::Ar2 { rho1, rho2 } => matgen::ar2_signal(length, rho1, rho2, seed),
        }
    }

    /// Theoretical autocorrelation matrix of the excitation.
    pub fn autocorr(&self, n: usize) -> Result<DMatrix<f64>> {
        match *self {
            Self::White => Ok(DMatrix::identity(n, n)),
            Self::Ar1 { rho } => matgen::ar1_autocorr(n, rho),
            Self::Ar2 { rho1, rho2 } => matgen::ar2_autocorr(n, rho1, rho2),
        }
    }
}

/// Per-iteration error and misalignment of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MseTrace {
    /// Squared a priori error `e(k)^2`.
    pub e2: Vec<f64>,
    /// `||w_hat - h||^2 / ||h||^2` after each update.
    pub misalignment: Vec<f64>,
}

impl MseTrace {
    pub fn len(&self) -> usize {
        self.e2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e2.is_empty()
    }

    pub fn misalignment_db(&self) -> impl Iterator<Item = f64> + '_ {
        self.misalignment.iter().map(|m| 10.0 * m.log10())
    }

    /// First iteration whose misalignment is at or below `db`.
    pub fn iterations_to_threshold(&self, db: f64) -> Option<usize> {
        self.misalignment_db().position(|m| m <= db)
    }

    pub fn thresholds(&self, dbs: &[f64]) -> Vec<(f64, Option<usize>)> {
        dbs.iter().map(|&db| (db, self.iterations_to_threshold(db))).collect()
    }

    /// CSV with columns `k,e2,misalignment_db`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,e2,misalignment_db")?;
        for (k, (e2, m)) in self.e2.iter().zip(self.misalignment_db()).enumerate() {
            writeln!(out, "{k},{},{}", matgen::format_float(*e2), matgen::format_float(m))?;
        }
        Ok(())
    }
}

/// Identifies the FIR `plant` from its noisy response to `input`.
///
/// `snr_db` sets the measurement noise relative to the power of the clean
/// plant output; pass `f64::INFINITY` for a noise-free run.
pub fn system_id_experiment(
    plant: &[f64],
    input: InputSpec,
    snr_db: f64,
    cfg: &FilterConfig,
    run_len: usize,
    seed: u64,
) -> Result<MseTrace> {
    cfg.validate()?;
    let n = cfg.taps;
    if plant.len() != n {
        return Err(Error::DimensionMismatch { expected: format!("{n} plant taps"), found: plant.len().to_string() });
    }
    let h = DVector::from_column_slice(plant);
    let h_energy = h.norm_squared();
    if h_energy == 0.0 {
        return Err(Error::InvalidInput("plant is identically zero".into()));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidInput("snr_db is NaN".into()));
    }
    let x = input.generate(run_len + n - 1, seed)?;
    let tap_vec = |k: usize| DVector::from_fn(n, |i, _| x[k + n - 1 - i]);
    let clean: Vec<f64> = (0..run_len).map(|k| h.dot(&tap_vec(k))).collect();
    let noise_std = if snr_db.is_infinite() {
        0.0
    } else {
        let power = clean.iter().map(|v| v * v).sum::<f64>() / run_len.max(1) as f64;
        (power / 10f64.powf(snr_db / 10.0)).sqrt()
    };
    let mut noise_rng = rng::seeded(seed, stream::NOISE);

    let mut filter = AdaptiveFilter::new(cfg.clone())?;
    let mut trace = MseTrace { e2: Vec::with_capacity(run_len), misalignment: Vec::with_capacity(run_len) };
    for (k, c) in clean.iter().enumerate() {
        let d = c + noise_std * rng::normal(&mut noise_rng);
        let e = filter.step(&tap_vec(k), d);
        trace.e2.push(e * e);
        trace.misalignment.push((filter.equivalent_weights() - &h).norm_squared() / h_energy);
    }
    Ok(trace)
}

/// Seeded random FIR plant with unit energy.
pub fn random_plant(taps: usize, seed: u64) -> Vec<f64> {
    let v = DVector::from_vec(rng::normal_vec(&mut rng::seeded(seed, stream::PLANT), taps));
    v.normalize().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::dct_matrix;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn lms_step_examples() {
        let mut s = FilterState::new(3);
        s.weights = v(&[0.1, 0.2, 0.3]);
        let e = lms_step(&mut s, &DVector::zeros(3), 2.0, 0.5);
        assert_eq!(e, 2.0);
        assert_eq!(s.weights, v(&[0.1, 0.2, 0.3]));

        let x = v(&[1.0, -1.0, 2.0]);
        let d = s.weights.dot(&x);
        assert_eq!(lms_step(&mut s, &x, d, 0.5), 0.0);
        assert_eq!(s.weights, v(&[0.1, 0.2, 0.3]));

        let mut s = FilterState::new(3);
        lms_step(&mut s, &v(&[1.0, 0.0, 0.0]), 1.0, 0.5);
        assert_eq!(s.weights, v(&[0.5, 0.0, 0.0]));
    }

    #[test]
    fn tdlms_step_examples() {
        let cfg = FilterConfig::transform_domain(0.1, DMatrix::identity(3, 3));
        let mut s = FilterState::new(3);
        s.weights = v(&[1.0, 2.0, 3.0]);
        assert_eq!(tdlms_step(&mut s, &DVector::zeros(3), 0.7, &cfg), 0.7);
        assert_eq!(s.weights, v(&[1.0, 2.0, 3.0]));

        // Identity transform with settled unit power is normalized LMS.
        let mut td = FilterState::new(3);
        let mut plain = FilterState::new(3);
        let x = v(&[0.3, -0.4, 0.2]);
        let cfg = FilterConfig { delta_pow: 1e-12, ..cfg };
        td.power = DVector::from_element(3, 1.0);
        let step = cfg.step;
        tdlms_step(&mut td, &x, 1.0, &cfg);
        let expected_power: Vec<f64> = x.iter().map(|xi| 0.99 + 0.01 * xi * xi).collect();
        assert_eq!(td.power.as_slice(), expected_power.as_slice());
        lms_step(&mut plain, &x, 1.0, step);
        for i in 0..3 {
            assert!((td.weights[i] * td.power[i] - plain.weights[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn transform_preserves_energy() {
        let u = dct_matrix(16).transpose();
        let x = matgen::ar1_signal(10_016, 0.9, 3).unwrap();
        for k in 0..10_000 {
            let xv = DVector::from_column_slice(&x[k..k + 16]);
            let tv = u.tr_mul(&xv);
            assert!((tv.norm() - xv.norm()).abs() <= 1e-10 * xv.norm().max(1.0));
        }
    }

    #[test]
    fn doubling_step_keeps_first_update_direction() {
        let x = v(&[0.5, -1.0, 0.25, 2.0]);
        let u = dct_matrix(4).transpose();
        for cfg in [FilterConfig::lms(4, 0.01), FilterConfig::transform_domain(0.01, u)] {
            let mut a = AdaptiveFilter::new(cfg.clone()).unwrap();
            let mut b = AdaptiveFilter::new(FilterConfig { step: 0.02, ..cfg }).unwrap();
            a.step(&x, 1.5);
            b.step(&x, 1.5);
            let sa: Vec<f64> = a.state().weights.iter().map(|w| w.signum()).collect();
            let sb: Vec<f64> = b.state().weights.iter().map(|w| w.signum()).collect();
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::lms(0, 0.1).validate().is_err());
        assert!(FilterConfig::lms(4, 0.0).validate().is_err());
        let bad = FilterConfig { transform: Some(DMatrix::identity(3, 3)), ..FilterConfig::lms(4, 0.1) };
        assert!(bad.validate().is_err());
        let not_unitary = FilterConfig::transform_domain(0.1, DMatrix::from_element(2, 2, 1.0));
        assert!(matches!(not_unitary.validate(), Err(Error::NotOrthonormal(_))));
    }

    #[test]
    fn white_noise_free_lms_converges() {
        let plant = random_plant(8, 1);
        let trace = system_id_experiment(&plant, InputSpec::White, f64::INFINITY, &FilterConfig::lms(8, 0.05), 4000, 2)
            .unwrap();
        assert_eq!(trace.len(), 4000);
        assert!(trace.misalignment_db().last().unwrap() < -60.0);
        assert!(trace.misalignment.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn white_input_lms_and_identity_tdlms_both_converge() {
        let plant = random_plant(8, 4);
        let lms = system_id_experiment(&plant, InputSpec::White, 40.0, &FilterConfig::lms(8, 0.02), 5000, 5).unwrap();
        let td = FilterConfig::transform_domain(0.02, DMatrix::identity(8, 8));
        let tdl = system_id_experiment(&plant, InputSpec::White, 40.0, &td, 5000, 5).unwrap();
        assert!(lms.iterations_to_threshold(-20.0).is_some());
        assert!(tdl.iterations_to_threshold(-20.0).is_some());
    }

    #[test]
    fn traces_are_deterministic_and_exportable() {
        let plant = random_plant(4, 1);
        let cfg = FilterConfig::lms(4, 0.05);
        let a = system_id_experiment(&plant, InputSpec::Ar1 { rho: 0.5 }, 30.0, &cfg, 200, 9).unwrap();
        let b = system_id_experiment(&plant, InputSpec::Ar1 { rho: 0.5 }, 30.0, &cfg, 200, 9).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,e2,misalignment_db\n0,"));
        assert_eq!(text.lines().count(), 201);
        assert!(system_id_experiment(&plant[..3], InputSpec::White, 30.0, &cfg, 10, 0).is_err());
        assert_eq!(a.thresholds(&[1e9]), vec![(1e9, Some(0))]);
    }
}
