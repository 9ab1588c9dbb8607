//! Browser demo bindings. Each exported function takes plain numbers and
//! returns a JSON string; the `*_report` functions underneath are ordinary
//! Rust and are what the native tests exercise.

use precog::baselines::{self, Preconditioner, DEFAULT_OMEGA};
use precog::graph::Topology;
use precog::matgen::MatrixSpec;
use precog::precog::{optimize, HyperParams};
use precog::tdlms::{self, FilterConfig, InputSpec};
use precog::{spectral, DMatrix};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest matrix the demo will learn a transform for.
pub const MAX_N: usize = 24;
/// Longest LMS run the demo will simulate.
pub const MAX_RUN_LEN: usize = 20_000;
/// Iteration cap for the learn panel.
pub const MAX_ITER: usize = 5_000;
/// Points per curve sent back to the page.
const CURVE_POINTS: usize = 400;

#[derive(Debug, Clone, Serialize)]
pub struct MethodCond {
    pub method: String,
    pub cond: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnReport {
    pub matrix_id: String,
    pub n: usize,
    pub cond_raw: f64,
    pub cond_normalized: f64,
    pub best_cond: f64,
    pub best_iteration: usize,
    /// Condition number of each iterate.
    pub history: Vec<f64>,
    pub methods: Vec<MethodCond>,
    /// Row-major `R`.
    pub matrix: Vec<f64>,
    /// Row-major power-normalized `U^T R U`.
    pub transformed: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub label: String,
    /// Iteration index of each point.
    pub k: Vec<usize>,
    /// Misalignment in dB, averaged over the window ending at `k`.
    pub db: Vec<f64>,
    /// First iteration at or below -20 dB.
    pub to_minus_20db: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LmsReport {
    pub taps: usize,
    pub learned_cond: f64,
    pub dct_cond: f64,
    pub curves: Vec<Curve>,
}

pub fn matrix_spec(family: &str, n: usize, param: f64, seed: u64) -> Result<MatrixSpec, String> {
    if !(2..=MAX_N).contains(&n) {
        return Err(format!("n must lie in 2..={MAX_N}"));
    }
    Ok(match family {
        "hilbert" => MatrixSpec::Hilbert { n, alpha: param },
        "random-pd" => MatrixSpec::RandomPd { n, reg: param, seed },
        "sparse-pd" => MatrixSpec::SparsePd { n, density: param, shift_margin: 0.1, seed },
        "ar1" => MatrixSpec::Ar1 { n, rho: param },
        other => return Err(format!("unknown family `{other}`")),
    })
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn comparisons(r: &DMatrix<f64>) -> Vec<MethodCond> {
    let n = r.nrows();
    let left = |p: precog::Result<Preconditioner>| p.and_then(|p| p.condition_number(r)).ok();
    vec![
        MethodCond { method: "dct".into(), cond: Preconditioner::dct(n).condition_number(r).ok() },
        MethodCond { method: "dft".into(), cond: baselines::dft_split_cond(r).ok() },
        MethodCond { method: "jacobi".into(), cond: left(baselines::jacobi_precond(r)) },
        MethodCond { method: "gauss-seidel".into(), cond: left(baselines::gauss_seidel_precond(r)) },
        MethodCond { method: "ssor".into(), cond: left(baselines::ssor_precond(r, DEFAULT_OMEGA)) },
    ]
}

/// Learns a transform for one generated matrix and compares it with the
/// fixed transforms and classical preconditioners.
pub fn learn_report(
    family: &str,
    n: usize,
    param: f64,
    seed: u64,
    mu: f64,
    max_iter: usize,
) -> Result<LearnReport, String> {
    if max_iter > MAX_ITER {
        return Err(format!("iterations must not exceed {MAX_ITER}"));
    }
    let spec = matrix_spec(family, n, param, seed)?;
    let r = spec.generate().map_err(|e| e.to_string())?;
    let hp = HyperParams { mu, max_iter, seed, band_exit: false, ..Default::default() };
    let t = Topology::full(n).map_err(|e| e.to_string())?;
    let res = optimize(&r, &t, &hp).map_err(|e| e.to_string())?;
    let g = res.u.transpose() * &r * &res.u;
    let transformed = spectral::power_normalize(&g).map_err(|e| e.to_string())?.s;
    Ok(LearnReport {
        matrix_id: spec.id(),
        n,
        cond_raw: spectral::cond_spd(&r).map_err(|e| e.to_string())?,
        cond_normalized: res.baseline_cond,
        best_cond: res.best_cond,
        best_iteration: res.best_iteration,
        history: res.history.iter().map(|h| h.cond).collect(),
        methods: comparisons(&r),
        matrix: row_major(&r),
        transformed: row_major(&transformed),
    })
}

fn curve(label: &str, trace: &tdlms::MseTrace) -> Curve {
    let len = trace.len();
    let window = len.div_ceil(CURVE_POINTS).max(1);
    let (mut k, mut db) = (Vec::new(), Vec::new());
    for (i, chunk) in trace.misalignment.chunks(window).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        k.push(i * window + chunk.len());
        db.push(10.0 * mean.log10());
    }
    Curve { label: label.into(), k, db, to_minus_20db: trace.iterations_to_threshold(-20.0) }
}

/// Runs plain LMS, DCT-LMS and LMS in a learned transform domain on the
/// same AR(1) system-identification problem.
pub fn lms_report(
    taps: usize,
    rho: f64,
    snr_db: f64,
    step: f64,
    run_len: usize,
    seed: u64,
) -> Result<LmsReport, String> {
    if !(2..=MAX_N).contains(&taps) {
        return Err(format!("taps must lie in 2..={MAX_N}"));
    }
    if run_len == 0 || run_len > MAX_RUN_LEN {
        return Err(format!("run length must lie in 1..={MAX_RUN_LEN}"));
    }
    let input = InputSpec::Ar1 { rho };
    let r = input.autocorr(taps).map_err(|e| e.to_string())?;
    let hp = HyperParams { max_iter: 500, seed, ..Default::default() };
    let learned = optimize(&r, &Topology::full(taps).map_err(|e| e.to_string())?, &hp).map_err(|e| e.to_string())?;
    let dct = baselines::dct_matrix(taps).transpose();
    let dct_cond = spectral::split_preconditioned_cond(&r, &dct).map_err(|e| e.to_string())?;
    let plant = tdlms::random_plant(taps, seed);
    let configs = [
        ("lms", FilterConfig::lms(taps, step)),
        ("dct-lms", FilterConfig::transform_domain(step, dct)),
        ("learned", FilterConfig::transform_domain(step, learned.u)),
    ];
    let mut curves = Vec::new();
    for (label, cfg) in &configs {
        let trace =
            tdlms::system_id_experiment(&plant, input, snr_db, cfg, run_len, seed).map_err(|e| e.to_string())?;
        curves.push(curve(label, &trace));
    }
    Ok(LmsReport { taps, learned_cond: learned.best_cond, dct_cond, curves })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn learn_transform(
    family: &str,
    n: usize,
    param: f64,
    seed: u32,
    mu: f64,
    max_iter: usize,
) -> Result<String, JsValue> {
    to_json(learn_report(family, n, param, seed as u64, mu, max_iter))
}

#[wasm_bindgen]
pub fn lms_convergence(
    taps: usize,
    rho: f64,
    snr_db: f64,
    step: f64,
    run_len: usize,
    seed: u32,
) -> Result<String, JsValue> {
    to_json(lms_report(taps, rho, snr_db, step, run_len, seed as u64))
}
