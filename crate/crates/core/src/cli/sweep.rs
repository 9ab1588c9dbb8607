use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nalgebra::DMatrix;

use super::{output, parse_list, resolve, CliResult, FileConfig, HyperArgs, Resolved};
use crate::matgen::{self, MatrixSpec};
use crate::precog::{self, HyperParams};
use crate::{spectral, Result};

pub const CSV_HEADER: [&str; 13] = [
    "sweep",
    "family",
    "matrix_id",
    "n",
    "value",
    "cond_raw",
    "cond_normalized",
    "cond_precog",
    "condition_ratio",
    "seed",
    "gradient_mode",
    "tool_version",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    /// Several weight initializations (consecutive seeds).
    Init,
    /// Best condition number after a given number of iterations.
    Iterations,
    /// Matrix size, at a fixed iteration budget.
    Length,
}

impl SweepKind {
    fn as_str(&self) -> &'static str {
        match self {
            Self::Init => "init",
            Self::Iterations => "iterations",
            Self::Length => "length",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub kind: SweepKind,
    /// Comma-separated: hilbert, random-pd, sparse, markov, ar2.
    #[arg(long, default_value = "hilbert,random-pd,sparse,markov,ar2")]
    pub families: String,
    /// Matrix size for the init and iterations sweeps.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub inits: u64,
    #[arg(long, default_value = "1,5,10,25,50,100,200,300")]
    pub checkpoints: String,
    #[arg(long, default_value = "4,6,8,10,12,14,16")]
    pub lengths: String,
    /// Iteration budget of the length sweep.
    #[arg(long, default_value_t = 15)]
    pub length_iters: usize,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// Representative matrix of a sweep family at size `n`.
pub fn family_spec(family: &str, n: usize, seed: u64) -> Result<MatrixSpec> {
    Ok(match family {
        "hilbert" => MatrixSpec::Hilbert { n, alpha: 1e-4 },
        "random-pd" => MatrixSpec::RandomPd { n, reg: matgen::DEFAULT_RANDOM_PD_REG, seed },
        "sparse" | "sparse-pd" => {
            MatrixSpec::SparsePd { n, density: 0.5, shift_margin: matgen::DEFAULT_SHIFT_MARGIN, seed }
        }
        "markov" | "ar1" => MatrixSpec::Ar1 { n, rho: 0.9 },
        "ar2" => MatrixSpec::Ar2 { n, rho1: 0.75, rho2: 0.7 },
        other => return Err(crate::Error::Parse(format!("unknown sweep family `{other}`"))),
    })
}

struct Row {
    family: String,
    matrix_id: String,
    n: usize,
    value: String,
    cond_raw: f64,
    cond_normalized: f64,
    cond_precog: std::result::Result<f64, &'static str>,
    seed: u64,
}

fn conds(r: &DMatrix<f64>) -> Result<(f64, f64)> {
    Ok((spectral::cond_spd(r)?, spectral::cond_spd(&spectral::power_normalize(r)?.s)?))
}

fn optimize_cond(r: &DMatrix<f64>, settings: &Resolved, hp: &HyperParams) -> Result<precog::PrecogResult> {
    precog::optimize(r, &settings.topology(r.nrows())?, hp)
}

fn sweep_rows(args: &SweepArgs, settings: &Resolved) -> CliResult<Vec<Row>> {
    let families: Vec<String> = parse_list(&args.families, "family")?;
    let base = &settings.hp;
    let mut rows = Vec::new();
    for fam in &families {
        match args.kind {
            SweepKind::Init => {
                let spec = family_spec(fam, args.n, base.seed)?;
                let r = spec.generate()?;
                let (cond_raw, cond_normalized) = conds(&r)?;
                for i in 0..args.inits {
                    let hp = HyperParams { seed: base.seed + i, ..base.clone() };
                    let c = optimize_cond(&r, settings, &hp).map(|x| x.best_cond).map_err(|e| e.kind());
                    rows.push(Row {
                        family: fam.clone(),
                        matrix_id: spec.id(),
                        n: args.n,
                        value: i.to_string(),
                        cond_raw,
                        cond_normalized,
                        cond_precog: c,
                        seed: hp.seed,
                    });
                }
            }
            SweepKind::Iterations => {
                let checkpoints: Vec<usize> = parse_list(&args.checkpoints, "checkpoint")?;
                let spec = family_spec(fam, args.n, base.seed)?;
                let r = spec.generate()?;
                let (cond_raw, cond_normalized) = conds(&r)?;
                let max = checkpoints.iter().copied().max().unwrap_or(1).max(1);
                // One long run: the best-so-far curve at iteration k equals
                // the result of a run capped at k iterations.
                let hp = HyperParams { max_iter: max, band_exit: false, ..base.clone() };
                let res = optimize_cond(&r, settings, &hp);
                for &k in &checkpoints {
                    let c = match &res {
                        Ok(res) => {
                            let best = res.best_so_far();
                            Ok(best[k.clamp(1, best.len()) - 1])
                        }
                        Err(e) => Err(e.kind()),
                    };
                    rows.push(Row {
                        family: fam.clone(),
                        matrix_id: spec.id(),
                        n: args.n,
                        value: k.to_string(),
                        cond_raw,
                        cond_normalized,
                        cond_precog: c,
                        seed: base.seed,
                    });
                }
            }
            SweepKind::Length => {
                for n in parse_list::<usize>(&args.lengths, "length")? {
                    let spec = family_spec(fam, n, base.seed)?;
                    let r = spec.generate()?;
                    let (cond_raw, cond_normalized) = conds(&r)?;
                    let hp = HyperParams { max_iter: args.length_iters, ..base.clone() };
                    let c = optimize_cond(&r, settings, &hp).map(|x| x.best_cond).map_err(|e| e.kind());
                    rows.push(Row {
                        family: fam.clone(),
                        matrix_id: spec.id(),
                        n,
                        value: n.to_string(),
                        cond_raw,
                        cond_normalized,
                        cond_precog: c,
                        seed: base.seed,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub(super) fn cmd_sweep(args: &SweepArgs, cfg: &FileConfig) -> CliResult<()> {
    let settings = resolve(&args.hyper, cfg)?;
    let rows = sweep_rows(args, &settings)?;
    let mut out = output(args.out.as_deref())?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(CSV_HEADER)?;
        for row in &rows {
            let (cond, ratio, status) = match row.cond_precog {
                Ok(c) => (c.to_string(), (row.cond_normalized / c).to_string(), "ok"),
                Err(kind) => (String::new(), String::new(), kind),
            };
            w.write_record([
                args.kind.as_str().to_string(),
                row.family.clone(),
                row.matrix_id.clone(),
                row.n.to_string(),
                row.value.clone(),
                row.cond_raw.to_string(),
                row.cond_normalized.to_string(),
                cond,
                ratio,
                row.seed.to_string(),
                settings.hp.gradient_mode.to_string(),
                crate::VERSION.to_string(),
                status.to_string(),
            ])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}
