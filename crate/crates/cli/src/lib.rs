//! Command-line front end: `denoise`, `bench`, `oracle` and `concentration`.
//!
//! Exit codes: 0 on success, 2 for bad flags or parameters, 3 for I/O and
//! parse failures, 4 when σ is outside the range covered by the risk theorem.

pub mod gridfile;

use std::io::Write;
use std::path::{Path, PathBuf};

use bandlet::estimator::{
    regime_lambda, selection_lines, Estimator, EstimatorConfig, EstimatorPlan,
};
use bandlet::selection::Selection;
use bandlet::synthlab::{concentration_experiment, risk_curve, sig10, RiskOptions, SceneSpec};
use bandlet::{Error, Image};
use clap::{Args, Parser, Subcommand};

/// Default `λ̃` of `bench`: small enough for the threshold to resolve the
/// benchmark scene at σ ≥ 1/32.
pub const BENCH_LAMBDA: f64 = 3.0;
/// Default transform order of `bench`; must exceed the scene's α.
pub const BENCH_ORDER: usize = 3;
pub const BENCH_SIGMAS: &str = "0.25,0.125,0.0625,0.03125";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Regime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Regime(_) => 4,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Input(_) => CliError::Io(e.to_string()),
            Error::OutOfRegime { .. } => CliError::Regime(e.to_string()),
            Error::Parameter(_) | Error::Spec(_) | Error::Undefined(_) => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bandlet",
    version,
    about = "Best-basis bandlet denoising and its experiments"
)]
pub struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise an image observed with known noise level.
    Denoise(DenoiseArgs),
    /// Monte Carlo risk curve on a synthetic scene.
    Bench(BenchArgs),
    /// Best-basis cost of a clean image and the oracle-inequality bound.
    Oracle(OracleArgs),
    /// Empirical check of the Gaussian concentration bound.
    Concentration(ConcentrationArgs),
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Text grid or PGM observation.
    #[arg(long)]
    pub input: PathBuf,
    /// Noise level σ in unit-square units (pixel noise is σ·side).
    #[arg(long)]
    pub sigma: f64,
    /// λ̃; defaults to the smallest value covered by the risk theorem.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Vanishing moments of the wavelet and of the Alpert transform.
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Output image; `.pgm` selects PGM, anything else the text grid.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the selected geometry and costs here.
    #[arg(long)]
    pub dump_geometry: Option<PathBuf>,
    /// Threshold in the wavelet basis only.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Comma-separated noise levels, each at most 1/4.
    #[arg(long, default_value = BENCH_SIGMAS)]
    pub sigmas: String,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = BENCH_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = BENCH_ORDER)]
    pub p: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also run wavelet thresholding on the same observations.
    #[arg(long)]
    pub compare_baseline: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Threshold T in unit-square units.
    #[arg(long = "T", allow_negative_numbers = true)]
    pub threshold: f64,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Noise level for the bound; defaults to the σ whose smallest
    /// admissible threshold is T.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub dump_geometry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    #[arg(long = "K")]
    pub k: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub u: f64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated subspace dimensions; defaults to powers of two up to
    /// K/8, or every dimension when all subsets are enumerated.
    #[arg(long)]
    pub dims: Option<String>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (result, buf) = pool.install(|| {
        let mut buf = Vec::new();
        let result = match &cli.command {
            Command::Denoise(a) => cmd_denoise(a, &mut buf),
            Command::Bench(a) => cmd_bench(a, &mut buf),
            Command::Oracle(a) => cmd_oracle(a, &mut buf),
            Command::Concentration(a) => cmd_concentration(a, &mut buf),
        };
        (result, buf)
    });
    out.write_all(&buf)?;
    result
}

fn estimator(p: usize) -> Result<Estimator, CliError> {
    Ok(Estimator::new(EstimatorConfig::for_order(p))?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Plan at the input's side; `σ = 0` thresholds at the smallest positive
/// number, which keeps every nonzero coefficient.
fn denoise_plan(
    est: &Estimator,
    sigma: f64,
    lambda: Option<f64>,
    side: usize,
) -> Result<EstimatorPlan, CliError> {
    if sigma == 0.0 {
        let mut plan = est
            .plan_from_sigma(0.25, lambda.unwrap_or(1.0))?
            .with_side(side, est)?;
        plan.sigma = 0.0;
        plan.j = -(side.trailing_zeros() as i32);
        plan.threshold = f64::MIN_POSITIVE;
        plan.lambda_tilde = lambda.unwrap_or(plan.regime_lambda);
        return Ok(plan);
    }
    let probe = est.plan_from_sigma(sigma, 1.0)?.with_side(side, est)?;
    let lambda = lambda.unwrap_or(probe.regime_lambda);
    Ok(est.plan_from_sigma(sigma, lambda)?.with_side(side, est)?)
}

pub fn cmd_denoise(a: &DenoiseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.sigma.is_finite() && a.sigma >= 0.0) {
        return Err(CliError::Usage(format!(
            "--sigma must be nonnegative, got {}",
            a.sigma
        )));
    }
    if a.lambda.is_some_and(|l| !(l.is_finite() && l > 0.0)) {
        return Err(CliError::Usage("--lambda must be positive".into()));
    }
    let est = estimator(a.p)?;
    let obs = gridfile::read_image(&a.input)?;
    let plan = denoise_plan(&est, a.sigma, a.lambda, obs.side())?;
    let (img, sel) = if a.baseline {
        est.denoise_wavelet_baseline(&obs, plan.threshold)?
    } else {
        est.denoise(&obs, &plan)?
    };
    if let Some(path) = &a.out {
        gridfile::write_image(path, &img)?;
    }
    if let Some(path) = &a.dump_geometry {
        write_text(path, &sel.summary_text())?;
    }
    writeln!(
        out,
        "mode={}",
        if a.baseline { "wavelet" } else { "bandlet" }
    )?;
    write!(out, "{}", plan.report_lines())?;
    write!(out, "{}", selection_lines(&sel))?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| CliError::Usage(format!("{flag}: bad entry {t:?}")))
        })
        .collect()
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sigmas: Vec<f64> = parse_list("--sigmas", &a.sigmas)?;
    let est = estimator(a.p)?;
    let opts = RiskOptions {
        trials: a.trials,
        lambda_tilde: a.lambda,
        seed: a.seed,
        compare_baseline: a.compare_baseline,
    };
    let report = risk_curve(&SceneSpec::curved_edge(a.alpha), &sigmas, &opts, &est)?;
    let csv = report.to_csv();
    match &a.out {
        Some(path) => write_text(path, &csv)?,
        None => write!(out, "{csv}")?,
    }
    writeln!(
        out,
        "slope={} stderr={} ci95=[{}, {}] lambda={} p={} trials={} seed={}",
        sig10(report.fit.slope),
        sig10(report.fit.stderr),
        sig10(report.fit.ci.0),
        sig10(report.fit.ci.1),
        a.lambda,
        a.p,
        a.trials,
        a.seed
    )?;
    Ok(())
}

pub fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.threshold.is_finite() && a.threshold > 0.0) {
        return Err(CliError::Usage(format!(
            "--T must be positive, got {}",
            a.threshold
        )));
    }
    let est = estimator(a.p)?;
    let f = gridfile::read_image(&a.input)?;
    let sigma = match a.sigma {
        Some(s) => s,
        None => est.sigma_for_threshold(a.threshold, f.side())?,
    };
    let report = est.oracle_cost(&f, a.threshold, sigma)?;
    if let Some(path) = &a.dump_geometry {
        write_text(path, &report.selection.summary_text())?;
    }
    writeln!(out, "p={}", a.p)?;
    writeln!(out, "side={}", f.side())?;
    writeln!(out, "regime_lambda={}", regime_lambda(a.p, report.k_n)?)?;
    write!(out, "{}", report.report_lines())?;
    Ok(())
}

pub fn cmd_concentration(a: &ConcentrationArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dims: Vec<usize> = match &a.dims {
        Some(s) => parse_list("--dims", s)?,
        None if a.k <= bandlet::synthlab::EXHAUSTIVE_MAX_K => (1..=a.k).collect(),
        None => std::iter::successors(Some(1usize), |d| Some(d * 2))
            .take_while(|&d| d <= (a.k / 8).max(1))
            .collect(),
    };
    let report = concentration_experiment(a.k, &dims, a.u, a.trials, a.seed)?;
    write!(out, "{}", report.to_table())?;
    Ok(())
}

/// Recomputes a selection from a dumped geometry and the image it came from.
pub fn selection_from_dump(
    est: &Estimator,
    img: &Image,
    dump: &str,
    threshold: f64,
) -> Result<Selection, CliError> {
    let (geometry, _) = bandlet::selection::parse_selection_summary(dump, &est.config().flow)?;
    let depth = est.config().depth_for(img.side())?;
    let pyr = bandlet::pyramid::dwt2(
        &bandlet::estimator::to_coefficient_units(img),
        depth,
        est.filter(),
    )?;
    Ok(bandlet::selection::evaluate_geometry(
        &pyr,
        &geometry,
        threshold,
        est.dictionary(),
    )?)
}
