use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::Args;
use nalgebra::DMatrix;

use super::{
    output, parse_list, read_matrix_file, resolve, CliError, CliResult, FileConfig, HyperArgs, MatrixArgs, Resolved,
};
use super::{EXIT_NUMERICAL, EXIT_OK};
use crate::baselines::{self, Preconditioner, DEFAULT_OMEGA};
use crate::matgen::{self, MatrixSpec};
use crate::{precog, spectral, Error, Result};

pub const CSV_HEADER: [&str; 15] = [
    "matrix_id",
    "n",
    "family",
    "params",
    "method",
    "cond_raw",
    "cond_method",
    "condition_ratio",
    "log10_ratio",
    "iterations",
    "wall_ms",
    "seed",
    "gradient_mode",
    "tool_version",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Precog,
    Dct,
    Dft,
    Jacobi,
    GaussSeidel,
    Sor,
    Ssor,
    Ilu0,
    None,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Self::Precog,
        Self::Dct,
        Self::Dft,
        Self::Jacobi,
        Self::GaussSeidel,
        Self::Sor,
        Self::Ssor,
        Self::Ilu0,
        Self::None,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Precog => "precog",
            Self::Dct => "dct",
            Self::Dft => "dft",
            Self::Jacobi => "jacobi",
            Self::GaussSeidel => "gauss-seidel",
            Self::Sor => "sor",
            Self::Ssor => "ssor",
            Self::Ilu0 => "ilu0",
            Self::None => "none",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::Parse(format!("unknown method `{s}`")))
    }
}

/// Preset matrix collections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Hilbert,
    RandomPd,
    Sparse,
    Markov,
    Ar2,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hilbert" => Self::Hilbert,
            "random-pd" => Self::RandomPd,
            "sparse" | "sparse-pd" => Self::Sparse,
            "markov" | "ar1" => Self::Markov,
            "ar2" => Self::Ar2,
            other => return Err(Error::Parse(format!("unknown suite `{other}`"))),
        })
    }
}

impl Suite {
    pub const ALL: [Suite; 5] = [Self::Hilbert, Self::RandomPd, Self::Sparse, Self::Markov, Self::Ar2];

    pub fn default_n(&self) -> usize {
        match self {
            Self::Sparse => 12,
            _ => 10,
        }
    }

    pub fn specs(&self, n: usize, seed: u64) -> Vec<MatrixSpec> {
        match self {
            Self::Hilbert => (0..=6).map(|k| MatrixSpec::Hilbert { n, alpha: 10f64.powi(-k) }).collect(),
            Self::RandomPd => {
                (0..5).map(|i| MatrixSpec::RandomPd { n, reg: matgen::DEFAULT_RANDOM_PD_REG, seed: seed + i }).collect()
            }
            Self::Sparse => matgen::SPARSITY_PRESETS
                .iter()
                .map(|&density| MatrixSpec::SparsePd { n, density, shift_margin: matgen::DEFAULT_SHIFT_MARGIN, seed })
                .collect(),
            Self::Markov => [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95]
                .into_iter()
                .map(|rho| MatrixSpec::Ar1 { n, rho })
                .collect(),
            Self::Ar2 => matgen::AR2_PRESETS.iter().map(|&(rho1, rho2)| MatrixSpec::Ar2 { n, rho1, rho2 }).collect(),
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Matrix text files (repeatable).
    #[arg(long)]
    pub matrix: Vec<PathBuf>,
    /// Preset collections: hilbert, random-pd, sparse, markov, ar2 (comma-separated).
    #[arg(long)]
    pub suite: Option<String>,
    /// Overrides the suite's matrix size.
    #[arg(long)]
    pub suite_n: Option<usize>,
    #[command(flatten)]
    pub gen: MatrixArgs,
    /// Comma-separated subset of precog,dct,dft,jacobi,gauss-seidel,sor,ssor,ilu0,none.
    #[arg(long)]
    pub methods: Option<String>,
    /// SOR / SSOR relaxation factor.
    #[arg(long)]
    pub omega: Option<f64>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Fill the wall_ms column (makes the report time-dependent).
    #[arg(long)]
    pub timing: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// Method, its condition number and iteration count, and wall time in ms.
type MethodOutcome = (Method, Result<(f64, Option<usize>)>, f64);

/// One row of the benchmark report.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub matrix_id: String,
    pub n: usize,
    pub family: String,
    pub params: String,
    pub method: Method,
    pub cond_raw: Option<f64>,
    pub cond_method: Option<f64>,
    pub condition_ratio: Option<f64>,
    pub log10_ratio: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_ms: Option<f64>,
    pub seed: u64,
    pub gradient_mode: String,
    pub status: String,
}

impl BenchmarkRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn fields(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        vec![
            self.matrix_id.clone(),
            self.n.to_string(),
            self.family.clone(),
            self.params.clone(),
            self.method.to_string(),
            f(self.cond_raw),
            f(self.cond_method),
            f(self.condition_ratio),
            f(self.log10_ratio),
            self.iterations.map_or(String::new(), |i| i.to_string()),
            f(self.wall_ms),
            self.seed.to_string(),
            self.gradient_mode.clone(),
            crate::VERSION.to_string(),
            self.status.clone(),
        ]
    }
}

/// A matrix to benchmark with its report metadata.
#[derive(Debug, Clone)]
pub struct BenchMatrix {
    pub id: String,
    pub family: String,
    pub params: String,
    pub matrix: DMatrix<f64>,
}

impl BenchMatrix {
    pub fn from_spec(spec: &MatrixSpec) -> Result<Self> {
        Ok(Self { id: spec.id(), family: spec.family().to_string(), params: spec.params(), matrix: spec.generate()? })
    }
}

/// Condition number of `a` under `method`, plus the optimizer iteration
/// count when applicable.
pub fn method_cond(a: &DMatrix<f64>, method: Method, settings: &Resolved, omega: f64) -> Result<(f64, Option<usize>)> {
    let n = a.nrows();
    let c = match method {
        Method::Precog => {
            let res = precog::optimize(a, &settings.topology(n)?, &settings.hp)?;
            return Ok((res.best_cond, Some(res.history.len())));
        }
        Method::Dct => Preconditioner::dct(n).condition_number(a)?,
        Method::Dft => baselines::dft_split_cond(a)?,
        Method::Jacobi => baselines::jacobi_precond(a)?.condition_number(a)?,
        Method::GaussSeidel => baselines::gauss_seidel_precond(a)?.condition_number(a)?,
        Method::Sor => baselines::sor_precond(a, omega)?.condition_number(a)?,
        Method::Ssor => baselines::ssor_precond(a, omega)?.condition_number(a)?,
        Method::Ilu0 => baselines::ilu0_precond(a)?.condition_number(a)?,
        Method::None => spectral::cond_spd(&spectral::power_normalize(a)?.s)?,
    };
    Ok((c, None))
}

/// Runs every method on every matrix. Rows come back sorted by
/// `(matrix_id, method)`.
pub fn run_bench(
    matrices: &[BenchMatrix],
    methods: &[Method],
    settings: &Resolved,
    omega: f64,
    timing: bool,
) -> Vec<BenchmarkRecord> {
    let mut methods: Vec<Method> = methods.to_vec();
    if !methods.contains(&Method::Precog) {
        methods.push(Method::Precog);
    }
    methods.sort_by_key(|m| m.as_str());
    methods.dedup();

    let mut rows = Vec::new();
    for bm in matrices {
        let cond_raw = spectral::cond_spd(&bm.matrix);
        let results: Vec<MethodOutcome> = methods
            .iter()
            .map(|&m| {
                let start = Instant::now();
                let r = match &cond_raw {
                    Ok(_) => method_cond(&bm.matrix, m, settings, omega),
                    Err(e) => Err(e.clone()),
                };
                (m, r, start.elapsed().as_secs_f64() * 1e3)
            })
            .collect();
        let precog_cond = results
            .iter()
            .find(|(m, _, _)| *m == Method::Precog)
            .and_then(|(_, r, _)| r.as_ref().ok().map(|(c, _)| *c));
        for (method, r, ms) in results {
            let (cond_method, iterations, status) = match r {
                Ok((c, it)) => (Some(c), it, "ok".to_string()),
                Err(e) => (None, None, e.kind().to_string()),
            };
            let ratio = match (cond_method, precog_cond) {
                (Some(c), Some(p)) => baselines::condition_ratio(c, p, false).ok(),
                _ => None,
            };
            rows.push(BenchmarkRecord {
                matrix_id: bm.id.clone(),
                n: bm.matrix.nrows(),
                family: bm.family.clone(),
                params: bm.params.clone(),
                method,
                cond_raw: cond_raw.as_ref().ok().copied(),
                cond_method,
                condition_ratio: ratio,
                log10_ratio: ratio.map(f64::log10),
                iterations,
                wall_ms: timing.then_some(ms),
                seed: settings.hp.seed,
                gradient_mode: settings.hp.gradient_mode.to_string(),
                status,
            });
        }
    }
    rows.sort_by(|a, b| (a.matrix_id.as_str(), a.method.as_str()).cmp(&(b.matrix_id.as_str(), b.method.as_str())));
    rows
}

pub fn write_csv<W: Write>(out: W, rows: &[BenchmarkRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}

fn collect_matrices(args: &BenchArgs, seed: u64) -> CliResult<Vec<BenchMatrix>> {
    let mut out = Vec::new();
    for path in &args.matrix {
        let m = read_matrix_file(path)?;
        let stem = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        out.push(BenchMatrix { id: stem, family: "file".into(), params: path.display().to_string(), matrix: m });
    }
    if args.gen.is_set() {
        out.push(BenchMatrix::from_spec(&args.gen.to_spec(seed)?)?);
    }
    if let Some(list) = &args.suite {
        for suite in parse_list::<Suite>(list, "suite")? {
            let n = args.suite_n.unwrap_or(suite.default_n());
            for spec in suite.specs(n, seed) {
                out.push(BenchMatrix::from_spec(&spec)?);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no matrices: give --matrix, --family, or --suite".into()));
    }
    let mut ids: Vec<&str> = out.iter().map(|m| m.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::Usage(format!("duplicate matrix id `{}`", w[0])));
    }
    Ok(out)
}

pub(super) fn cmd_bench(args: &BenchArgs, cfg: &FileConfig) -> CliResult<i32> {
    let settings = resolve(&args.hyper, cfg)?;
    let methods: Vec<Method> = match (&args.methods, &cfg.methods) {
        (Some(list), _) => parse_list(list, "method")?,
        (None, Some(list)) => list.iter().map(|s| s.parse()).collect::<Result<_>>()?,
        (None, None) => Method::ALL.to_vec(),
    };
    let omega = args.omega.or(cfg.omega).unwrap_or(DEFAULT_OMEGA);
    let matrices = collect_matrices(args, settings.hp.seed)?;
    let rows = run_bench(&matrices, &methods, &settings, omega, args.timing);
    let mut out = output(args.out.as_deref())?;
    write_csv(&mut out, &rows)?;
    out.flush()?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} rows failed", rows.len());
    }
    Ok(if failed == rows.len() { EXIT_NUMERICAL } else { EXIT_OK })
}
