use clap::Args;
use nalgebra::{DMatrix, DVector};

use super::{CliError, CliResult, TopologyKind, EXIT_NUMERICAL, EXIT_OK};
use crate::graph::{Topology, WeightedGraph};
use crate::precog::cost::band_cost_of;
use crate::precog::grad::{canonical_grad, trace_terms};
use crate::precog::{cost_en, grad_en_wrt_w, GradientMode, HyperParams};
use crate::rng::{self, stream};
use crate::{matgen, spectral, Result};

pub const MAX_N: usize = 10;
pub const CANONICAL_TOL: f64 = 1e-5;
pub const PERTURBATION_TOL: f64 = 1e-3;
const MAX_RESAMPLES: usize = 10;
const FD_STEP: f64 = 1e-6;
/// Smallest Laplacian eigengap accepted at the sample point.
const MIN_GAP: f64 = 1e-3;

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = TopologyKind::Banded)]
    pub topology: TopologyKind,
    #[arg(long, default_value_t = 2)]
    pub band: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Mode whose w-gradient is checked against finite differences.
    #[arg(long, default_value = "perturbation")]
    pub mode: String,
    #[arg(long, default_value_t = 0.1)]
    pub eps1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub n: usize,
    pub attempts: usize,
    pub canonical_rel_err: f64,
    pub w_grad_rel_err: f64,
    pub paper_chain_discrepancy: f64,
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

fn fd_grad_u(r: &DMatrix<f64>, u: &DMatrix<f64>, eps1: f64, eps2: f64) -> DMatrix<f64> {
    let cost = |v: &DMatrix<f64>| band_cost_of(&(v.transpose() * r * v), eps1, eps2);
    DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| {
        let mut p = u.clone();
        p[(i, j)] += FD_STEP;
        let mut m = u.clone();
        m[(i, j)] -= FD_STEP;
        (cost(&p) - cost(&m)) / (2.0 * FD_STEP)
    })
}

fn fd_grad_w(g: &WeightedGraph, r: &DMatrix<f64>, hp: &HyperParams) -> Result<DVector<f64>> {
    let w = g.weights();
    let mut out = DVector::zeros(w.len());
    for i in 0..w.len() {
        let mut wp = w.clone();
        wp[i] += FD_STEP;
        let mut wm = w.clone();
        wm[i] -= FD_STEP;
        let ep = cost_en(&WeightedGraph::new(g.topology().clone(), wp)?, r, hp)?;
        let em = cost_en(&WeightedGraph::new(g.topology().clone(), wm)?, r, hp)?;
        out[i] = (ep - em) / (2.0 * FD_STEP);
    }
    Ok(out)
}

/// Runs both finite-difference checks at a seeded random point, redrawing
/// the weights while the Laplacian spectrum is nearly degenerate.
pub fn gradcheck(t: &Topology, seed: u64, mode: GradientMode, eps1: f64, eps2: f64) -> CliResult<GradcheckReport> {
    let n = t.n();
    if n > MAX_N {
        return Err(CliError::Usage(format!("gradcheck is limited to n <= {MAX_N}, got {n}")));
    }
    let r = matgen::random_pd(n, seed, 0.1)?;
    let hp = HyperParams { eps1, eps2, beta: 1e-3, gradient_mode: mode, ..Default::default() };
    let mut wrng = rng::seeded(seed, stream::WEIGHT_INIT);
    for attempt in 1..=MAX_RESAMPLES {
        let w = DVector::from_vec(rng::normal_vec(&mut wrng, t.num_edges()));
        let g = WeightedGraph::new(t.clone(), w)?;
        let sp = spectral::sym_eig(&g.laplacian())?;
        if sp.min_gap() < MIN_GAP {
            continue;
        }
        let u = sp.vectors();
        let analytic_u = canonical_grad(&r, u, eps1, eps2);
        let canonical_rel_err = rel_err(analytic_u.as_slice(), fd_grad_u(&r, u, eps1, eps2).as_slice());

        let analytic_w = grad_en_wrt_w(&g, &r, &hp)?;
        let w_grad_rel_err = rel_err(analytic_w.as_slice(), fd_grad_w(&g, &r, &hp)?.as_slice());

        let pert = trace_terms(
            &sp,
            &g,
            &analytic_u,
            &HyperParams { gradient_mode: GradientMode::Perturbation, ..hp.clone() },
        )?;
        let chain =
            trace_terms(&sp, &g, &analytic_u, &HyperParams { gradient_mode: GradientMode::PaperChain, ..hp.clone() })?;
        let paper_chain_discrepancy = rel_err(chain.as_slice(), pert.as_slice());
        return Ok(GradcheckReport {
            n,
            attempts: attempt,
            canonical_rel_err,
            w_grad_rel_err,
            paper_chain_discrepancy,
        });
    }
    Err(CliError::Numerical(format!("spectrum stayed degenerate after {MAX_RESAMPLES} draws")))
}

pub(super) fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult<i32> {
    if args.n > MAX_N {
        return Err(CliError::Usage(format!("gradcheck is limited to n <= {MAX_N}, got {}", args.n)));
    }
    let mode: GradientMode = args.mode.parse()?;
    let t = match args.topology {
        TopologyKind::Full => Topology::full(args.n)?,
        TopologyKind::Banded => Topology::banded(args.n, args.band)?,
    };
    let rep = gradcheck(&t, args.seed, mode, args.eps1, args.eps2)?;
    println!("n={} edges={} seed={} attempts={}", rep.n, t.num_edges(), args.seed, rep.attempts);
    println!("canonical_grad_u_rel_err={:e} (limit {CANONICAL_TOL:e})", rep.canonical_rel_err);
    println!("{mode}_grad_w_rel_err={:e} (limit {PERTURBATION_TOL:e})", rep.w_grad_rel_err);
    println!("paper_chain_vs_perturbation_rel_diff={:e}", rep.paper_chain_discrepancy);
    let ok = rep.canonical_rel_err <= CANONICAL_TOL && rep.w_grad_rel_err <= PERTURBATION_TOL;
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { EXIT_OK } else { EXIT_NUMERICAL })
}
