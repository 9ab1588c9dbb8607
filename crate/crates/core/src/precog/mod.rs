//! Learning a unitary split preconditioner from edge weights.
//!
//! Each iteration forms `L = B diag(w) B^T`, takes its eigenvectors `U`,
//! scores `U^T R U` with the band cost and moves `w` along
//! `w <- w (1 - 2 beta) - mu Tr((dE/dU)^T dU/dw_i)`.

pub(crate) mod cost;
pub(crate) mod grad;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

pub use cost::{cost_e, cost_en, cost_sparse, transform_l0, L0_THRESHOLD};
pub use grad::{
    dl_du, du_dw_paper, du_dw_paper_edge, du_dw_perturbation, du_dw_perturbation_edge, grad_e_wrt_u, grad_en_wrt_w,
    grad_sparse_wrt_w, EGradFormula, PaperChain,
};

use crate::graph::{Topology, WeightedGraph};
use crate::rng::{self, stream};
use crate::spectral::{self, SpectralPair};
use crate::{Error, Result};

/// How `dU/dw_i` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Pseudoinverse of `dL/du_kl` traced against `Theta_i`.
    PaperChain,
    /// First-order eigenvector perturbation.
    #[default]
    Perturbation,
}

impl GradientMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PaperChain => "paper-chain",
            Self::Perturbation => "perturbation",
        }
    }
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-chain" => Ok(Self::PaperChain),
            "perturbation" => Ok(Self::Perturbation),
            other => Err(Error::Parse(format!("unknown gradient mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Step size, in (0, 1).
    pub mu: f64,
    /// Weight-norm regularizer.
    pub beta: f64,
    /// Upper band half-width: eigenvalues should stay below `1 + eps1`.
    pub eps1: f64,
    /// Lower band half-width: eigenvalues should stay above `1 - eps2`.
    pub eps2: f64,
    /// Log-degree penalty.
    pub alpha1: f64,
    /// Transformed-signal l1 penalty.
    pub alpha2: f64,
    pub max_iter: usize,
    /// Stop when `|E_N(t) - E_N(t-1)|` drops below this.
    pub tol: f64,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    /// Smallest tolerated gap between adjacent Laplacian eigenvalues.
    pub degeneracy_gap: f64,
    /// Stop as soon as the normalized spectrum lies in `[1 - eps2, 1 + eps1]`.
    pub band_exit: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            mu: 0.1,
            beta: 1e-3,
            eps1: 0.1,
            eps2: 0.1,
            alpha1: 0.0,
            alpha2: 0.0,
            max_iter: 300,
            tol: 1e-10,
            seed: 0,
            gradient_mode: GradientMode::Perturbation,
            degeneracy_gap: 1e-8,
            band_exit: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::OutOfRange(msg.into())) };
        check(self.mu > 0.0 && self.mu < 1.0, "mu must lie in (0, 1)")?;
        check(self.beta >= 0.0, "beta must be nonnegative")?;
        check(self.eps1 >= 0.0, "eps1 must be nonnegative")?;
        check((0.0..1.0).contains(&self.eps2), "eps2 must lie in [0, 1)")?;
        check(self.alpha1 >= 0.0 && self.alpha2 >= 0.0, "alpha1 and alpha2 must be nonnegative")?;
        check(self.max_iter > 0, "max_iter must be positive")?;
        check(self.tol > 0.0, "tol must be positive")?;
        check(self.degeneracy_gap > 0.0, "degeneracy_gap must be positive")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective value (E_N, plus sparsity terms when enabled).
    pub cost: f64,
    /// Split-preconditioned condition number of this iterate's `U`.
    pub cond: f64,
    pub grad_norm: f64,
    /// `||U^T U - I||_F` of this iterate.
    pub orthonormality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIter,
    Tolerance,
    TargetBand,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MaxIter => "max-iter",
            Self::Tolerance => "tolerance",
            Self::TargetBand => "target-band",
        })
    }
}

#[derive(Debug, Clone)]
pub struct PrecogResult {
    /// Eigenbasis with the best split-preconditioned condition number seen.
    pub u: DMatrix<f64>,
    pub w_final: DVector<f64>,
    pub w_best: DVector<f64>,
    pub best_cond: f64,
    pub best_iteration: usize,
    /// Condition number of the power-normalized input, no transform.
    pub baseline_cond: f64,
    pub history: Vec<IterationRecord>,
    pub reason: StopReason,
    pub jitters: usize,
}

impl PrecogResult {
    pub fn converged(&self) -> bool {
        self.reason != StopReason::MaxIter
    }

    /// Best-so-far condition number after each recorded iteration.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::INFINITY, |best, rec| {
                *best = best.min(rec.cond);
                Some(*best)
            })
            .collect()
    }
}

const MAX_CONSECUTIVE_JITTERS: usize = 5;
const JITTER_SCALE: f64 = 1e-6;

/// Runs the weight-learning loop on `R` over topology `t`.
pub fn optimize(r: &DMatrix<f64>, t: &Topology, hp: &HyperParams) -> Result<PrecogResult> {
    Optimizer::new(r, t, hp)?.run()
}

/// Same as [`optimize`], with a signal for the transformed-signal sparsity
/// term (`alpha2`).
pub fn optimize_with_signal(
    r: &DMatrix<f64>,
    t: &Topology,
    hp: &HyperParams,
    signal: &DVector<f64>,
) -> Result<PrecogResult> {
    if signal.len() != t.n() {
        return Err(Error::DimensionMismatch {
            expected: format!("signal of length {}", t.n()),
            found: signal.len().to_string(),
        });
    }
    Optimizer::new(r, t, hp)?.with_signal(signal.clone()).run()
}

/// Stateful form of [`optimize`]; callers may also start from their own
/// weights or observe each iteration.
pub struct Optimizer<'a> {
    r: &'a DMatrix<f64>,
    topology: &'a Topology,
    hp: &'a HyperParams,
    signal: Option<DVector<f64>>,
    init: Option<DVector<f64>>,
}

impl<'a> Optimizer<'a> {
    pub fn new(r: &'a DMatrix<f64>, topology: &'a Topology, hp: &'a HyperParams) -> Result<Self> {
        hp.validate()?;
        if r.shape() != (topology.n(), topology.n()) {
            return Err(Error::DimensionMismatch {
                expected: format!("{0}x{0}", topology.n()),
                found: format!("{}x{}", r.nrows(), r.ncols()),
            });
        }
        spectral::cond_spd(r)?;
        Ok(Self { r, topology, hp, signal: None, init: None })
    }

    pub fn with_signal(mut self, signal: DVector<f64>) -> Self {
        self.signal = Some(signal);
        self
    }

    pub fn with_initial_weights(mut self, w: DVector<f64>) -> Self {
        self.init = Some(w);
        self
    }

    fn uses_sparse_terms(&self) -> bool {
        self.hp.alpha1 != 0.0 || (self.hp.alpha2 != 0.0 && self.signal.is_some())
    }

    pub fn run(self) -> Result<PrecogResult> {
        self.run_observed(|_| {})
    }

    /// Runs the loop, calling `observe` after each recorded iteration.
    pub fn run_observed(self, mut observe: impl FnMut(&IterationRecord)) -> Result<PrecogResult> {
        let hp = self.hp;
        let r = self.r;
        let m = self.topology.num_edges();
        let mut w = match &self.init {
            Some(w) if w.len() == m => w.clone(),
            Some(w) => {
                return Err(Error::DimensionMismatch { expected: format!("{m} weights"), found: w.len().to_string() })
            }
            None => DVector::from_vec(rng::normal_vec(&mut rng::seeded(hp.seed, stream::WEIGHT_INIT), m)),
        };
        let mut jitter_rng = rng::seeded(hp.seed, stream::JITTER);
        let baseline_cond = spectral::cond_spd(&spectral::power_normalize(r)?.s)?;
        let band = (1.0 - hp.eps2, 1.0 + hp.eps1);

        let mut history = Vec::new();
        let mut best: Option<(f64, usize, DMatrix<f64>, DVector<f64>)> = None;
        let mut prev_cost: Option<f64> = None;
        let mut consecutive_jitters = 0;
        let mut jitters = 0;
        let mut reason = StopReason::MaxIter;
        let signal = self.signal.as_ref();

        let mut t = 0;
        while t < hp.max_iter {
            let g = WeightedGraph::new(self.topology.clone(), w.clone())
                .map_err(|e| Error::Diverged { iteration: t, what: e.to_string() })?;
            let sp = spectral::sym_eig(&g.laplacian())?;
            if sp.min_gap() < hp.degeneracy_gap {
                consecutive_jitters += 1;
                jitters += 1;
                if consecutive_jitters > MAX_CONSECUTIVE_JITTERS {
                    return Err(Error::DegenerateSpectrum { gap: sp.min_gap(), threshold: hp.degeneracy_gap });
                }
                let scale = JITTER_SCALE * w.norm();
                log::debug!("iteration {t}: eigen-gap {:e}, jittering weights", sp.min_gap());
                w += DVector::from_vec(rng::normal_vec(&mut jitter_rng, m)) * scale;
                continue;
            }
            consecutive_jitters = 0;

            let step = self.evaluate(&sp, &g, signal)?;
            let diverged = |what: &str| Error::Diverged { iteration: t, what: what.into() };
            if !step.cost.is_finite() {
                return Err(diverged("non-finite cost"));
            }
            if !step.trace.iter().all(|v| v.is_finite()) {
                return Err(diverged("non-finite gradient"));
            }
            let spectrum = spectral::split_normalized_spectrum(r, sp.vectors())?;
            let (lo, hi) = (spectrum[0], spectrum[spectrum.len() - 1]);
            if lo <= 0.0 {
                return Err(Error::NotPositiveDefinite(lo));
            }
            let cond = hi / lo;
            let grad_norm = (&step.trace + &w * (2.0 * hp.beta)).norm();
            let record = IterationRecord {
                iteration: t,
                cost: step.cost,
                cond,
                grad_norm,
                orthonormality: spectral::orthonormality_error(sp.vectors()),
            };
            observe(&record);
            history.push(record);
            if best.as_ref().is_none_or(|b| cond < b.0) {
                best = Some((cond, t, sp.vectors().clone(), w.clone()));
            }

            if hp.band_exit && lo >= band.0 && hi <= band.1 {
                reason = StopReason::TargetBand;
                break;
            }
            if prev_cost.is_some_and(|p| (step.cost - p).abs() < hp.tol) {
                reason = StopReason::Tolerance;
                break;
            }
            prev_cost = Some(step.cost);

            w = &w * (1.0 - 2.0 * hp.beta) - &step.trace * hp.mu;
            t += 1;
        }

        let (best_cond, best_iteration, u, w_best) =
            best.ok_or(Error::Diverged { iteration: 0, what: "no iteration completed".into() })?;
        Ok(PrecogResult { u, w_final: w, w_best, best_cond, best_iteration, baseline_cond, history, reason, jitters })
    }

    fn evaluate(&self, sp: &SpectralPair, g: &WeightedGraph, signal: Option<&DVector<f64>>) -> Result<Step> {
        let hp = self.hp;
        if self.uses_sparse_terms() {
            let cost = cost::cost_sparse_with(sp, g, self.r, signal, hp)?;
            let grad_u = grad::objective_grad_u(sp, self.r, signal, hp);
            let mut trace = grad::trace_terms(sp, g, &grad_u, hp)?;
            if hp.alpha1 != 0.0 {
                trace += grad::log_degree_grad(g, hp.alpha1)?;
            }
            Ok(Step { cost, trace })
        } else {
            let cost = cost::cost_en_with(sp, g, self.r, hp)?;
            let grad_u = grad::canonical_grad(self.r, sp.vectors(), hp.eps1, hp.eps2);
            Ok(Step { cost, trace: grad::trace_terms(sp, g, &grad_u, hp)? })
        }
    }
}

struct Step {
    cost: f64,
    /// Gradient terms excluding `2 beta w`.
    trace: DVector<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgen;

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::default().validate().is_ok());
        for bad in [
            HyperParams { mu: 1.0, ..Default::default() },
            HyperParams { mu: 0.0, ..Default::default() },
            HyperParams { eps2: 1.0, ..Default::default() },
            HyperParams { beta: -1.0, ..Default::default() },
            HyperParams { max_iter: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::OutOfRange(_))));
        }
        assert_eq!("paper-chain".parse::<GradientMode>().unwrap(), GradientMode::PaperChain);
        assert!("chain".parse::<GradientMode>().is_err());
    }

    #[test]
    fn identity_input_is_already_optimal() {
        let t = Topology::banded(6, 2).unwrap();
        let res = optimize(&DMatrix::identity(6, 6), &t, &HyperParams::default()).unwrap();
        assert!((res.best_cond - 1.0).abs() < 1e-10);
        assert!(res.converged());
        assert_eq!(res.history.len(), 1);
    }

    #[test]
    fn identity_input_stops_by_tolerance_without_band_exit() {
        let t = Topology::banded(6, 2).unwrap();
        // beta = 0 leaves w untouched on R = I, so E_N is flat.
        let hp = HyperParams { band_exit: false, beta: 0.0, ..Default::default() };
        let res = optimize(&DMatrix::identity(6, 6), &t, &hp).unwrap();
        assert_eq!(res.reason, StopReason::Tolerance);
        assert!((res.best_cond - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_spd_and_mismatched_input() {
        let t = Topology::banded(3, 2).unwrap();
        let not_pd = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -1.0, 1.0]));
        assert!(matches!(optimize(&not_pd, &t, &HyperParams::default()), Err(Error::NotPositiveDefinite(_))));
        assert!(optimize(&DMatrix::identity(4, 4), &t, &HyperParams::default()).is_err());
    }

    #[test]
    fn ar1_condition_improves() {
        let r = matgen::ar1_autocorr(10, 0.9).unwrap();
        let t = Topology::banded(10, 2).unwrap();
        let hp = HyperParams { seed: 7, mu: 1e-3, ..Default::default() };
        let res = optimize(&r, &t, &hp).unwrap();
        assert!(res.best_cond < res.baseline_cond, "{} vs {}", res.best_cond, res.baseline_cond);
        assert!(res.history.len() <= hp.max_iter);
        for rec in &res.history {
            assert!(rec.orthonormality <= 1e-10);
            assert!(rec.cost.is_finite());
        }
    }

    #[test]
    fn best_so_far_is_monotone() {
        let r = matgen::hilbert(10, 1e-4).unwrap();
        let t = Topology::banded(10, 2).unwrap();
        let res = optimize(&r, &t, &HyperParams { seed: 7, ..Default::default() }).unwrap();
        let best = res.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*best.last().unwrap(), res.best_cond);
        assert!(spectral::orthonormality_error(&res.u) <= 1e-10);
    }

    #[test]
    fn small_steps_decrease_cost() {
        let r = matgen::ar1_autocorr(8, 0.5).unwrap();
        let t = Topology::banded(8, 2).unwrap();
        let hp = HyperParams { mu: 1e-4, beta: 0.0, max_iter: 50, band_exit: false, seed: 3, ..Default::default() };
        let res = optimize(&r, &t, &hp).unwrap();
        assert_eq!(res.jitters, 0);
        for pair in res.history.windows(2) {
            assert!(pair[1].cost <= pair[0].cost + 1e-9, "{} -> {}", pair[0].cost, pair[1].cost);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let r = matgen::ar1_autocorr(6, 0.8).unwrap();
        let t = Topology::banded(6, 2).unwrap();
        let hp = HyperParams { max_iter: 40, seed: 11, ..Default::default() };
        let a = optimize(&r, &t, &hp).unwrap();
        let b = optimize(&r, &t, &hp).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn paper_chain_mode_runs() {
        let r = matgen::ar1_autocorr(5, 0.8).unwrap();
        let t = Topology::banded(5, 2).unwrap();
        let hp = HyperParams { max_iter: 5, gradient_mode: GradientMode::PaperChain, ..Default::default() };
        let res = optimize(&r, &t, &hp).unwrap();
        assert!(!res.history.is_empty());
    }

    #[test]
    fn sparse_terms_run_with_signal() {
        let r = matgen::ar1_autocorr(6, 0.8).unwrap();
        let t = Topology::banded(6, 2).unwrap();
        let x = DVector::from_column_slice(&[1.0, 0.5, -0.2, 0.3, 0.0, 2.0]);
        let hp = HyperParams { alpha1: 1e-3, alpha2: 1e-3, max_iter: 20, ..Default::default() };
        let res = optimize_with_signal(&r, &t, &hp, &x).unwrap();
        assert!(res.history.iter().all(|h| h.cost.is_finite()));
        assert!(optimize_with_signal(&r, &t, &hp, &DVector::zeros(3)).is_err());
    }
}
