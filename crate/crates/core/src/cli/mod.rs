//! Command-line front end: argument parsing, config files, and the
//! subcommands behind the `precog` binary.

pub mod bench;
pub mod gradcheck;
pub mod sweep;

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::graph::Topology;
use crate::matgen::{self, Family, MatrixSpec};
use crate::precog::{self, HyperParams, PrecogResult};
use crate::tdlms::{self, FilterConfig, InputSpec};
use crate::{baselines, spectral, Error};

pub use bench::{BenchmarkRecord, Method, Suite, CSV_HEADER};

pub const SEED_ENV: &str = "PRECOG_SEED";

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Io(_) => EXIT_USAGE,
            Self::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Self::Usage(e.to_string())
        } else {
            Self::Numerical(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "precog", version, about = "Learned unitary split preconditioners from graph Laplacian eigenbases")]
pub struct Cli {
    /// TOML file with flat keys (mu, beta, seed, methods, ...); flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a test matrix and print its condition number.
    Gen(GenArgs),
    /// Compare preconditioners on a set of matrices and write a CSV report.
    Bench(bench::BenchArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Learn a transform for one matrix.
    Precondition(PreconditionArgs),
    /// Run an LMS / transform-domain LMS system identification.
    Lms(LmsArgs),
    /// Parameter sweeps over initialization, iteration count, or size.
    Sweep(sweep::SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MatrixArgs {
    #[arg(long, value_name = "FAMILY")]
    pub family: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Hilbert diagonal regularizer.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub rho1: Option<f64>,
    #[arg(long)]
    pub rho2: Option<f64>,
    /// random-pd diagonal regularizer.
    #[arg(long)]
    pub reg: Option<f64>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub shift_margin: Option<f64>,
}

impl MatrixArgs {
    pub fn is_set(&self) -> bool {
        self.family.is_some()
    }

    pub fn to_spec(&self, seed: u64) -> CliResult<MatrixSpec> {
        let family: Family =
            self.family.as_deref().ok_or_else(|| CliError::Usage("--family is required".into()))?.parse()?;
        let n = self.n.ok_or_else(|| CliError::Usage("--n is required".into()))?;
        Ok(match family {
            Family::Hilbert => MatrixSpec::Hilbert { n, alpha: self.alpha.unwrap_or(0.0) },
            Family::RandomPd => {
                MatrixSpec::RandomPd { n, reg: self.reg.unwrap_or(matgen::DEFAULT_RANDOM_PD_REG), seed }
            }
            Family::SparsePd => MatrixSpec::SparsePd {
                n,
                density: self.density.ok_or_else(|| CliError::Usage("sparse-pd needs --density".into()))?,
                shift_margin: self.shift_margin.unwrap_or(matgen::DEFAULT_SHIFT_MARGIN),
                seed,
            },
            Family::Ar1 => {
                MatrixSpec::Ar1 { n, rho: self.rho.ok_or_else(|| CliError::Usage("ar1 needs --rho".into()))? }
            }
            Family::Ar2 => MatrixSpec::Ar2 {
                n,
                rho1: self.rho1.ok_or_else(|| CliError::Usage("ar2 needs --rho1".into()))?,
                rho2: self.rho2.ok_or_else(|| CliError::Usage("ar2 needs --rho2".into()))?,
            },
            Family::File => return Err(CliError::Usage("use --matrix FILE to read a matrix".into())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Full,
    Banded,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub eps1: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Defaults to $PRECOG_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "MODE")]
    pub gradient_mode: Option<String>,
    #[arg(long)]
    pub degeneracy_gap: Option<f64>,
    /// Keep iterating after the normalized spectrum enters the band.
    #[arg(long)]
    pub no_band_exit: bool,
    #[arg(long, value_enum)]
    pub topology: Option<TopologyKind>,
    /// Band width for the banded topology.
    #[arg(long)]
    pub band: Option<usize>,
}

/// Flat keys accepted in the `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mu: Option<f64>,
    pub beta: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub gradient_mode: Option<String>,
    pub degeneracy_gap: Option<f64>,
    pub band_exit: Option<bool>,
    pub topology: Option<TopologyKind>,
    pub band: Option<usize>,
    pub omega: Option<f64>,
    pub methods: Option<Vec<String>>,
    pub step: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Optimizer settings after merging flags, config file, and environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub hp: HyperParams,
    pub topology: TopologyKind,
    pub band: usize,
}

impl Resolved {
    pub fn topology(&self, n: usize) -> crate::Result<Topology> {
        match self.topology {
            TopologyKind::Full => Topology::full(n),
            TopologyKind::Banded => Topology::banded(n, self.band),
        }
    }
}

pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

pub fn resolve(args: &HyperArgs, cfg: &FileConfig) -> CliResult<Resolved> {
    let d = HyperParams::default();
    let mode = match args.gradient_mode.as_ref().or(cfg.gradient_mode.as_ref()) {
        Some(s) => s.parse()?,
        None => d.gradient_mode,
    };
    let hp = HyperParams {
        mu: args.mu.or(cfg.mu).unwrap_or(d.mu),
        beta: args.beta.or(cfg.beta).unwrap_or(d.beta),
        eps1: args.eps1.or(cfg.eps1).unwrap_or(d.eps1),
        eps2: args.eps2.or(cfg.eps2).unwrap_or(d.eps2),
        alpha1: args.alpha1.or(cfg.alpha1).unwrap_or(d.alpha1),
        alpha2: args.alpha2.or(cfg.alpha2).unwrap_or(d.alpha2),
        max_iter: args.max_iter.or(cfg.max_iter).unwrap_or(d.max_iter),
        tol: args.tol.or(cfg.tol).unwrap_or(d.tol),
        seed: match args.seed.or(cfg.seed) {
            Some(s) => s,
            None => env_seed()?.unwrap_or(d.seed),
        },
        gradient_mode: mode,
        degeneracy_gap: args.degeneracy_gap.or(cfg.degeneracy_gap).unwrap_or(d.degeneracy_gap),
        band_exit: if args.no_band_exit { false } else { cfg.band_exit.unwrap_or(d.band_exit) },
    };
    hp.validate()?;
    let band = args.band.or(cfg.band).unwrap_or(2);
    if band == 0 {
        return Err(CliError::Usage("--band must be positive".into()));
    }
    Ok(Resolved { hp, topology: args.topology.or(cfg.topology).unwrap_or(TopologyKind::Full), band })
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    /// Seed for the random families; defaults to $PRECOG_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; the matrix goes to stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreconditionArgs {
    /// Matrix text file; alternatively use the generator flags.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub gen: MatrixArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Where to write the learned `U`.
    #[arg(long, value_name = "FILE")]
    pub out_u: Option<PathBuf>,
    /// Per-iteration history CSV.
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    White,
    Ar1,
    Ar2,
}

#[derive(Debug, Args)]
pub struct LmsArgs {
    #[arg(long, default_value_t = 16)]
    pub taps: usize,
    #[arg(long, value_enum, default_value_t = InputKind::Ar1)]
    pub input: InputKind,
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    #[arg(long)]
    pub rho1: Option<f64>,
    #[arg(long)]
    pub rho2: Option<f64>,
    /// Measurement SNR in dB; `inf` for a noise-free run.
    #[arg(long, default_value_t = 30.0)]
    pub snr_db: f64,
    #[arg(long)]
    pub step: Option<f64>,
    /// `none` (plain LMS), `dct`, `precog`, or a matrix text file.
    #[arg(long, default_value = "precog")]
    pub transform: String,
    #[arg(long, default_value_t = 5000)]
    pub run_len: usize,
    /// Plant coefficients, one per line; a seeded random plant otherwise.
    #[arg(long)]
    pub plant: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Trace CSV (k, e2, misalignment_db); stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub const DEFAULT_LMS_STEP: f64 = 0.01;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("precog: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<i32> {
    let cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Gen(args) => cmd_gen(&args).map(|_| EXIT_OK),
        Command::Bench(args) => bench::cmd_bench(&args, &cfg),
        Command::Gradcheck(args) => gradcheck::cmd_gradcheck(&args),
        Command::Precondition(args) => cmd_precondition(&args, &cfg).map(|_| EXIT_OK),
        Command::Lms(args) => cmd_lms(&args, &cfg).map(|_| EXIT_OK),
        Command::Sweep(args) => sweep::cmd_sweep(&args, &cfg).map(|_| EXIT_OK),
    }
}

pub(crate) fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn read_matrix_file(path: &Path) -> CliResult<DMatrix<f64>> {
    let f = File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    matgen::read_matrix(BufReader::new(f)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn seed_or_env(seed: Option<u64>) -> CliResult<u64> {
    Ok(match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let spec = args.matrix.to_spec(seed_or_env(args.seed)?)?;
    let m = spec.generate()?;
    let cond = spectral::cond_spd(&m)?;
    let mut out = output(args.out.as_deref())?;
    matgen::write_matrix(&mut out, &m)?;
    out.flush()?;
    let line = format!("matrix_id={} cond_spd={}", spec.id(), cond);
    if args.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

fn load_matrix(path: Option<&Path>, gen: &MatrixArgs, seed: u64) -> CliResult<DMatrix<f64>> {
    match (path, gen.is_set()) {
        (Some(p), false) => read_matrix_file(p),
        (None, true) => Ok(gen.to_spec(seed)?.generate()?),
        (Some(_), true) => Err(CliError::Usage("give either --matrix or --family, not both".into())),
        (None, false) => Err(CliError::Usage("a matrix is required (--matrix FILE or --family ...)".into())),
    }
}

fn cmd_precondition(args: &PreconditionArgs, cfg: &FileConfig) -> CliResult<PrecogResult> {
    let settings = resolve(&args.hyper, cfg)?;
    let r = load_matrix(args.matrix.as_deref(), &args.gen, settings.hp.seed)?;
    let t = settings.topology(r.nrows())?;
    let res = precog::optimize(&r, &t, &settings.hp)?;
    if let Some(path) = &args.out_u {
        let mut out = output(Some(path))?;
        matgen::write_matrix(&mut out, &res.u)?;
        out.flush()?;
    }
    if let Some(path) = &args.history {
        write_history(path, &res, &settings.hp)?;
    }
    println!(
        "n={} baseline_cond={} best_cond={} best_iteration={} iterations={} stop={} jitters={} seed={} gradient_mode={} tool_version={}",
        r.nrows(),
        res.baseline_cond,
        res.best_cond,
        res.best_iteration,
        res.history.len(),
        res.reason,
        res.jitters,
        settings.hp.seed,
        settings.hp.gradient_mode,
        crate::VERSION
    );
    Ok(res)
}

fn write_history(path: &Path, res: &PrecogResult, hp: &HyperParams) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(output(Some(path))?);
    w.write_record([
        "iteration",
        "cost",
        "cond",
        "grad_norm",
        "orthonormality",
        "seed",
        "gradient_mode",
        "tool_version",
    ])?;
    for rec in &res.history {
        w.write_record([
            rec.iteration.to_string(),
            rec.cost.to_string(),
            rec.cond.to_string(),
            rec.grad_norm.to_string(),
            rec.orthonormality.to_string(),
            hp.seed.to_string(),
            hp.gradient_mode.to_string(),
            crate::VERSION.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_plant(path: &Path) -> CliResult<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    text.split_whitespace()
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("{}: bad coefficient `{t}`", path.display()))))
        .collect()
}

fn cmd_lms(args: &LmsArgs, cfg: &FileConfig) -> CliResult<()> {
    let settings = resolve(&args.hyper, cfg)?;
    let seed = settings.hp.seed;
    let n = args.taps;
    let input = match args.input {
        InputKind::White => InputSpec::White,
        InputKind::Ar1 => InputSpec::Ar1 { rho: args.rho },
        InputKind::Ar2 => InputSpec::Ar2 {
            rho1: args.rho1.ok_or_else(|| CliError::Usage("ar2 input needs --rho1".into()))?,
            rho2: args.rho2.ok_or_else(|| CliError::Usage("ar2 input needs --rho2".into()))?,
        },
    };
    let step = args.step.or(cfg.step).unwrap_or(DEFAULT_LMS_STEP);
    let transform = match args.transform.as_str() {
        "none" | "lms" => None,
        "dct" => Some(baselines::dct_matrix(n).transpose()),
        "precog" => {
            let r = input.autocorr(n)?;
            let res = precog::optimize(&r, &settings.topology(n)?, &settings.hp)?;
            eprintln!("learned transform: baseline_cond={} best_cond={}", res.baseline_cond, res.best_cond);
            Some(res.u)
        }
        path => Some(read_matrix_file(Path::new(path))?),
    };
    let fc = match transform {
        None => FilterConfig::lms(n, step),
        Some(u) => FilterConfig::transform_domain(step, u),
    };
    let plant = match &args.plant {
        Some(p) => read_plant(p)?,
        None => tdlms::random_plant(n, seed),
    };
    let trace = tdlms::system_id_experiment(&plant, input, args.snr_db, &fc, args.run_len, seed)?;
    let mut out = output(args.out.as_deref())?;
    trace.write_csv(&mut out)?;
    out.flush()?;
    let thresholds: Vec<String> = trace
        .thresholds(&[-10.0, -20.0, -30.0])
        .into_iter()
        .map(|(db, k)| format!("{db}dB={}", k.map_or("never".to_string(), |k| k.to_string())))
        .collect();
    eprintln!(
        "transform={} step={step} {} seed={seed} gradient_mode={} tool_version={}",
        args.transform,
        thresholds.join(" "),
        settings.hp.gradient_mode,
        crate::VERSION
    );
    Ok(())
}

/// Parses a comma-separated list.
pub(crate) fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

pub(crate) fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    split_list(s).map(|t| t.parse().map_err(|_| CliError::Usage(format!("bad {what} `{t}`")))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let cfg: FileConfig = toml::from_str("mu = 0.2\nseed = 5\ntopology = \"banded\"\nband = 3").unwrap();
        let args = HyperArgs { mu: Some(0.05), ..Default::default() };
        let r = resolve(&args, &cfg).unwrap();
        assert_eq!(r.hp.mu, 0.05);
        assert_eq!(r.hp.seed, 5);
        assert_eq!(r.topology, TopologyKind::Banded);
        assert_eq!(r.band, 3);
        assert!(toml::from_str::<FileConfig>("unknown_key = 1").is_err());
    }

    #[test]
    fn invalid_hyperparams_are_usage_errors() {
        let args = HyperArgs { mu: Some(2.0), ..Default::default() };
        assert_eq!(resolve(&args, &FileConfig::default()).unwrap_err().exit_code(), EXIT_USAGE);
        let args = HyperArgs { gradient_mode: Some("newton".into()), ..Default::default() };
        assert_eq!(resolve(&args, &FileConfig::default()).unwrap_err().exit_code(), EXIT_USAGE);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::NotPositiveDefinite(-1.0)).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::from(Error::Parse("x".into())).exit_code(), EXIT_USAGE);
    }
}
