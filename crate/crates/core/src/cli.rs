//! Command-line front end. Every report carries the resolved [`RunConfig`] so
//! an output file is enough to rerun the computation.

use crate::error::{domain, Error, Result};
use crate::estimate::{log_likelihood, mle_beta, stationarity_residual, HiringHistory, MleOutcome};
use crate::oracle::{exact_prob_binds, exact_rk};
use crate::powerlaw::TailExponent;
use crate::rooney::{
    beta_star, infinite_bias_positive, phi, phi2, phi_k_limit, prob_positive_given_change,
    prob_rule_binds, Bias, ModelParams, Threshold, Verdict,
};
use crate::simulate::{
    bounded_experiment, cond_exp_filtered_discrete, BoundedModel, EstimatorKind, PowerUnit,
    Simulation, Uniform, UnitDistribution,
};
use crate::surface::{linear_axis, log_axis, sweep, SurfaceGrid};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};
use std::fmt::{self, Write as _};
use std::io::Write as _;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

/// `φ` values this close to 1 are reported as the boundary case.
const VERDICT_TOLERANCE: f64 = 1e-12;

const MLE_CAVEAT: &str = "selection probabilities are the large-pool limit c/(1+c); \
     for pools of size n they carry a relative error of order (ln n)^2/n";

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "rooney-lab",
    version,
    about = "Decide, simulate and estimate the effect of the Rooney Rule under implicit bias"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Master seed; fully determines every stochastic result.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,

    /// Worker threads for simulations and sweeps: a positive count or `auto`.
    #[arg(long, global = true, env = "ROONEY_LAB_THREADS", default_value = "auto")]
    pub threads: Threads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    Auto,
    Count(NonZeroUsize),
}

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threads::Auto);
        }
        s.parse::<NonZeroUsize>()
            .map(Threads::Count)
            .map_err(|_| format!("expected a positive thread count or `auto`, got {s:?}"))
    }
}

impl fmt::Display for Threads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threads::Auto => f.write_str("auto"),
            Threads::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Threads {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threads::Auto => ser.serialize_str("auto"),
            Threads::Count(n) => ser.serialize_u64(n.get() as u64),
        }
    }
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Evaluate the decision function and say whether the rule helps.
    Phi(PhiArgs),
    /// Smallest bias beyond which the rule helps.
    Threshold(ThresholdArgs),
    /// Monte Carlo of the selection process beside the exact and asymptotic values.
    Simulate(SimulateArgs),
    /// Maximum-likelihood bias from a hiring history file.
    Mle(MleArgs),
    /// Sweep the threshold bias over an (alpha, delta) grid.
    Surface(SurfaceArgs),
    /// E[X | X > beta Y] on the four-point uniform example.
    DemoNonmono,
    /// Expected gain from the rule for bounded candidate values.
    Bounded(BoundedArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhiArgs {
    /// Fraction of X-candidates relative to Y-candidates, in (0, 1].
    #[arg(long)]
    pub alpha: f64,
    /// Multiplicative bias, > 1 or `inf`.
    #[arg(long)]
    pub beta: Bias,
    /// Tail exponent of the Pareto potential.
    #[arg(long)]
    pub delta: f64,
    /// Number of finalists.
    #[arg(long, default_value_t = 2)]
    pub k: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 2)]
    pub k: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    /// Median of block means for heavy tails (delta <= 1), plain mean otherwise.
    Auto,
    Mean,
    MedianOfMeans,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub alpha: f64,
    /// Multiplicative bias, >= 1 or `inf`.
    #[arg(long)]
    pub beta: Bias,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 2)]
    pub k: u64,
    /// Y-candidates per trial; there are round(alpha n) X-candidates.
    #[arg(long, default_value_t = 200)]
    pub n: u64,
    /// Finalist slots reserved for X-candidates.
    #[arg(long, default_value_t = 1)]
    pub ell: u64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    /// Estimator for the ratio and the utility change.
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Auto)]
    pub estimator: EstimatorChoice,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MleArgs {
    /// CSV with header `year,alpha,n,selected`.
    pub history: PathBuf,
    /// Tail exponent, taken as known. The `n` column is informational only.
    #[arg(long)]
    pub delta: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SurfaceArgs {
    #[arg(long, default_value_t = 0.01)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_max: f64,
    /// Log-spaced alpha points.
    #[arg(long, default_value_t = 40)]
    pub alpha_points: usize,
    #[arg(long, default_value_t = 0.05)]
    pub delta_min: f64,
    #[arg(long, default_value_t = 4.0)]
    pub delta_max: f64,
    /// Evenly spaced delta points.
    #[arg(long, default_value_t = 40)]
    pub delta_points: usize,
    #[arg(long, default_value_t = 2)]
    pub k: u64,
    /// Write the grid to this file (atomically) and print only a summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Emit the grid as a whitespace table for gnuplot.
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec {
    Uniform,
    Power(f64),
}

impl FromStr for DistSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "uniform" {
            return Ok(DistSpec::Uniform);
        }
        s.strip_prefix("power:")
            .and_then(|a| a.parse::<f64>().ok())
            .filter(|a| *a > 0.0 && a.is_finite())
            .map(DistSpec::Power)
            .ok_or_else(|| format!("expected `uniform` or `power:<shape>` with shape > 0, got {s:?}"))
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistSpec::Uniform => f.write_str("uniform"),
            DistSpec::Power(a) => write!(f, "power:{a}"),
        }
    }
}

impl Serialize for DistSpec {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundedArgs {
    /// `uniform` or `power:<shape>` (cdf x^shape on [0, 1]).
    #[arg(long, default_value = "uniform")]
    pub dist: DistSpec,
    /// Slope of the bias map b(x) = scale x; must lie in [0, 1).
    #[arg(long, default_value_t = 0.9)]
    pub bias_scale: f64,
    #[arg(long, default_value_t = 200)]
    pub n: u64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
}

/// Everything that determines a run's output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub master_seed: u64,
    pub output_format: OutputFormat,
    pub threads: Threads,
}

impl From<&Cli> for RunConfig {
    fn from(cli: &Cli) -> Self {
        RunConfig {
            command: cli.command.clone(),
            master_seed: cli.seed,
            output_format: cli.format,
            threads: cli.threads,
        }
    }
}

/// Exit status for a failed run: 2 for bad arguments, 1 for everything else.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Domain(_) => 2,
        _ => 1,
    }
}

/// Parses the process arguments, runs, prints, and maps failures to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let _ = std::io::stdout().lock().write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Runs the command inside a pool of the configured size and renders the report.
pub fn execute(cli: &Cli) -> Result<String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Threads::Count(n) = cli.threads {
        builder = builder.num_threads(n.get());
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Io(format!("cannot start worker threads: {e}")))?;
    let config = RunConfig::from(cli);
    pool.install(|| match &cli.command {
        Command::Phi(a) => render(&config, &cmd_phi(a)?),
        Command::Threshold(a) => render(&config, &cmd_threshold(a)?),
        Command::Simulate(a) => render(&config, &cmd_simulate(a, cli.seed)?),
        Command::Mle(a) => render(&config, &cmd_mle(a)?),
        Command::Surface(a) => cmd_surface(a, &config),
        Command::DemoNonmono => render(&config, &cmd_demo_nonmono()?),
        Command::Bounded(a) => render(&config, &cmd_bounded(a, cli.seed)?),
    })
}

trait Report: Serialize {
    fn text(&self) -> String;
}

#[derive(Serialize)]
struct Envelope<'a, R> {
    config: &'a RunConfig,
    result: &'a R,
}

fn render<R: Report>(config: &RunConfig, report: &R) -> Result<String> {
    match config.output_format {
        OutputFormat::Text => Ok(format!("{}# config {}\n", report.text(), config_json(config))),
        OutputFormat::Json => Ok(to_json(&Envelope {
            config,
            result: report,
        })),
        OutputFormat::Csv => flat_csv(&Envelope {
            config,
            result: report,
        }),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn config_json(config: &RunConfig) -> String {
    serde_json::to_string(config).expect("config serializes")
}

/// `key,value` rows with dotted paths for nested fields.
fn flat_csv<T: Serialize>(v: &T) -> Result<String> {
    fn walk(prefix: &str, v: &serde_json::Value, rows: &mut Vec<(String, String)>) {
        let join = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            serde_json::Value::Object(map) => {
                for (k, x) in map {
                    walk(&join(k), x, rows);
                }
            }
            serde_json::Value::Array(items) => {
                for (i, x) in items.iter().enumerate() {
                    walk(&join(&i.to_string()), x, rows);
                }
            }
            serde_json::Value::Null => rows.push((prefix.to_string(), String::new())),
            serde_json::Value::String(s) => rows.push((prefix.to_string(), s.clone())),
            other => rows.push((prefix.to_string(), other.to_string())),
        }
    }
    let value = serde_json::to_value(v).expect("reports serialize");
    let mut rows = Vec::new();
    walk("", &value, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["key", "value"]).map_err(io)?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| x.to_string())
}

#[derive(Debug, Serialize)]
struct PhiReport {
    alpha: f64,
    beta: Bias,
    delta: f64,
    k: u64,
    c: f64,
    phi_k: f64,
    /// Two-finalist closed form, evaluated independently when `k = 2`.
    phi_2_closed_form: Option<f64>,
    phi_k_infinite_bias: f64,
    verdict: Verdict,
    verdict_text: &'static str,
}

impl Report for PhiReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "alpha = {}, beta = {}, delta = {}, k = {}", self.alpha, self.beta, self.delta, self.k);
        let _ = writeln!(s, "c = alpha beta^-(1+delta)   {}", self.c);
        let _ = writeln!(s, "phi_k                       {}", self.phi_k);
        if let Some(p) = self.phi_2_closed_form {
            let _ = writeln!(s, "phi_2 (closed form)         {p}");
        }
        let _ = writeln!(s, "phi_k as beta -> inf        {}", self.phi_k_infinite_bias);
        let _ = writeln!(s, "verdict: {}", self.verdict_text);
        s
    }
}

fn cmd_phi(a: &PhiArgs) -> Result<PhiReport> {
    let delta = TailExponent::new(a.delta)?;
    let value = phi(a.alpha, a.beta, delta, a.k)?;
    let closed = if a.k == 2 {
        Some(phi2(a.alpha, a.beta.value(), delta)?)
    } else {
        None
    };
    let verdict = Verdict::classify(value, VERDICT_TOLERANCE);
    Ok(PhiReport {
        alpha: a.alpha,
        beta: a.beta,
        delta: a.delta,
        k: a.k,
        c: a.beta.c(a.alpha, delta),
        phi_k: value,
        phi_2_closed_form: closed,
        phi_k_infinite_bias: phi_k_limit(a.alpha, delta, a.k),
        verdict,
        verdict_text: verdict.describe(),
    })
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ThresholdOutcome {
    Finite,
    NoThreshold,
    MultiCrossing,
}

#[derive(Debug, Serialize)]
struct ThresholdReport {
    alpha: f64,
    delta: f64,
    k: u64,
    outcome: ThresholdOutcome,
    beta_star: Option<f64>,
    phi_at_beta_star: Option<f64>,
    phi_k_infinite_bias: f64,
    infinite_bias_positive: bool,
}

impl Report for ThresholdReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "alpha = {}, delta = {}, k = {}", self.alpha, self.delta, self.k);
        match (&self.outcome, self.beta_star) {
            (ThresholdOutcome::Finite, Some(b)) => {
                let _ = writeln!(s, "beta*                   {b}");
                let _ = writeln!(s, "phi_k(beta*)            {}", opt(self.phi_at_beta_star));
                let _ = writeln!(s, "the rule helps for every bias above beta*");
            }
            (ThresholdOutcome::MultiCrossing, _) => {
                let _ = writeln!(s, "beta*                   undetermined: phi_k is not monotone in beta");
            }
            _ => {
                let _ = writeln!(s, "beta*                   none: phi_k <= 1 for every bias");
            }
        }
        let _ = writeln!(s, "phi_k as beta -> inf    {}", self.phi_k_infinite_bias);
        s
    }
}

fn cmd_threshold(a: &ThresholdArgs) -> Result<ThresholdReport> {
    let delta = TailExponent::new(a.delta)?;
    let (outcome, b) = match beta_star(a.alpha, delta, a.k) {
        Ok(Threshold::Finite(b)) => (ThresholdOutcome::Finite, Some(b)),
        Ok(Threshold::NoThreshold) => (ThresholdOutcome::NoThreshold, None),
        Err(Error::MultiCrossing) => (ThresholdOutcome::MultiCrossing, None),
        Err(e) => return Err(e),
    };
    let at = match b {
        Some(b) if b > 1.0 => Some(phi(a.alpha, Bias::Finite(b), delta, a.k)?),
        _ => None,
    };
    Ok(ThresholdReport {
        alpha: a.alpha,
        delta: a.delta,
        k: a.k,
        outcome,
        beta_star: b,
        phi_at_beta_star: at,
        phi_k_infinite_bias: phi_k_limit(a.alpha, delta, a.k),
        infinite_bias_positive: infinite_bias_positive(a.alpha, delta),
    })
}

/// Monte Carlo estimate beside its exact and large-n counterparts.
#[derive(Debug, Serialize)]
struct Comparison {
    empirical: f64,
    std_error: f64,
    events: u64,
    estimator: String,
    exact: Option<f64>,
    asymptotic: Option<f64>,
    /// `(empirical - exact) / std_error`.
    z_vs_exact: Option<f64>,
    z_vs_asymptotic: Option<f64>,
}

impl Comparison {
    fn new(r: crate::simulate::EstimatorReport, exact: Option<f64>, asymptotic: Option<f64>) -> Self {
        let z = |v: Option<f64>| {
            v.filter(|_| r.std_error > 0.0)
                .map(|v| (r.point_estimate - v) / r.std_error)
        };
        Comparison {
            empirical: r.point_estimate,
            std_error: r.std_error,
            events: r.events,
            estimator: r.estimator_kind.to_string(),
            z_vs_exact: z(exact),
            z_vs_asymptotic: z(asymptotic),
            exact,
            asymptotic,
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    alpha: f64,
    beta: Bias,
    delta: f64,
    k: u64,
    n: u64,
    x_pool: u64,
    ell: u64,
    trials: u64,
    bind_rate: Comparison,
    r_k: Comparison,
    prob_positive_given_bind: Comparison,
    utility_change_given_bind: Comparison,
}

impl Report for SimulateReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "alpha = {}, beta = {}, delta = {}, k = {}, n = {} ({} X-candidates), ell = {}, trials = {}",
            self.alpha, self.beta, self.delta, self.k, self.n, self.x_pool, self.ell, self.trials
        );
        let _ = writeln!(
            s,
            "{:<26} {:>14} {:>12} {:>9} {:>14} {:>14} {:>9}",
            "quantity", "empirical", "std.err", "events", "exact", "asymptotic", "z(exact)"
        );
        let rows = [
            ("bind rate", &self.bind_rate),
            ("r_k", &self.r_k),
            ("P[gain | bind]", &self.prob_positive_given_bind),
            ("E[utility change | bind]", &self.utility_change_given_bind),
        ];
        for (name, c) in rows {
            let _ = writeln!(
                s,
                "{:<26} {:>14.8} {:>12.3e} {:>9} {:>14} {:>14} {:>9}",
                name,
                c.empirical,
                c.std_error,
                c.events,
                c.exact.map_or("-".into(), |v| format!("{v:.8}")),
                c.asymptotic.map_or("-".into(), |v| format!("{v:.8}")),
                c.z_vs_exact.map_or("-".into(), |v| format!("{v:.2}")),
            );
        }
        let _ = writeln!(s, "r_k uses the {} estimator; asymptotic r_k is phi_k", self.r_k.estimator);
        s
    }
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> Result<SimulateReport> {
    let delta = TailExponent::new(a.delta)?;
    let params = ModelParams::new(a.alpha, a.beta, delta, a.k, a.n)?;
    let kind = match a.estimator {
        EstimatorChoice::Auto => EstimatorKind::default_for(delta),
        EstimatorChoice::Mean => EstimatorKind::Mean,
        EstimatorChoice::MedianOfMeans => EstimatorKind::MedianOfMeans,
    };
    let summary = Simulation::new(params, a.ell, a.trials, seed)?.run();
    let rk = summary.rk(kind)?;
    let positive = summary.prob_positive()?;
    let change = summary.utility_change(kind)?;
    // Closed forms describe a single reserved slot.
    let single = a.ell == 1;
    let phi_value = match a.beta {
        Bias::Finite(b) if b <= 1.0 => None,
        _ => Some(phi(a.alpha, a.beta, delta, a.k)?),
    };
    Ok(SimulateReport {
        alpha: a.alpha,
        beta: a.beta,
        delta: a.delta,
        k: a.k,
        n: a.n,
        x_pool: params.x_pool(),
        ell: a.ell,
        trials: a.trials,
        bind_rate: Comparison::new(
            summary.bind_rate(),
            single.then(|| exact_prob_binds(&params)).transpose()?,
            single.then(|| prob_rule_binds(&params)),
        ),
        r_k: Comparison::new(
            rk,
            single.then(|| exact_rk(&params)).transpose()?,
            phi_value.filter(|_| single),
        ),
        prob_positive_given_bind: Comparison::new(
            positive,
            None,
            single.then(|| prob_positive_given_change(&params)),
        ),
        utility_change_given_bind: Comparison::new(change, None, None),
    })
}

#[derive(Debug, Serialize)]
struct MleReport {
    history: PathBuf,
    delta: f64,
    records: usize,
    x_selections: usize,
    mle: MleOutcome,
    beta_hat: Option<f64>,
    /// Stationarity residual at `β̂`; zero at an exact root.
    residual: Option<f64>,
    log_likelihood: Option<f64>,
    caveat: &'static str,
}

impl Report for MleReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: {} records, {} X-selections, delta = {}",
            self.history.display(),
            self.records,
            self.x_selections,
            self.delta
        );
        match self.mle {
            MleOutcome::Estimate { beta_hat, bias_toward_x } => {
                let _ = writeln!(s, "beta_hat          {beta_hat}");
                let _ = writeln!(s, "residual          {}", opt(self.residual));
                let _ = writeln!(s, "log-likelihood    {}", opt(self.log_likelihood));
                if bias_toward_x {
                    let _ = writeln!(s, "note: beta_hat < 1, the data favour X-candidates");
                }
            }
            MleOutcome::Degenerate { direction } => {
                let _ = writeln!(s, "no finite maximum: the likelihood increases as beta -> {}", match direction {
                    crate::estimate::Degeneracy::TowardInfinity => "inf",
                    crate::estimate::Degeneracy::TowardZero => "0",
                });
            }
        }
        let _ = writeln!(s, "note: {}", self.caveat);
        s
    }
}

fn cmd_mle(a: &MleArgs) -> Result<MleReport> {
    let delta = TailExponent::new(a.delta)?;
    let history = HiringHistory::from_path(&a.history, delta)?;
    let mle = mle_beta(&history);
    let beta_hat = match mle {
        MleOutcome::Estimate { beta_hat, .. } => Some(beta_hat),
        MleOutcome::Degenerate { .. } => None,
    };
    Ok(MleReport {
        history: a.history.clone(),
        delta: a.delta,
        records: history.len(),
        x_selections: history.x_selections(),
        mle,
        beta_hat,
        residual: beta_hat.map(|b| stationarity_residual(&history, b)),
        log_likelihood: beta_hat.map(|b| log_likelihood(&history, b)).transpose()?,
        caveat: MLE_CAVEAT,
    })
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum GridFormat {
    Csv,
    Json,
    Gnuplot,
}

#[derive(Debug, Serialize)]
struct SurfaceReport {
    k: u64,
    alpha_points: usize,
    delta_points: usize,
    finite_cells: usize,
    no_threshold_cells: usize,
    multi_crossing_cells: usize,
    out: Option<PathBuf>,
    file_format: Option<GridFormat>,
    grid: Option<SurfaceGrid>,
}

impl Report for SurfaceReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} x {} grid (k = {}): {} finite, {} without threshold, {} non-monotone",
            self.alpha_points,
            self.delta_points,
            self.k,
            self.finite_cells,
            self.no_threshold_cells,
            self.multi_crossing_cells
        );
        if let Some(p) = &self.out {
            let _ = writeln!(s, "wrote {}", p.display());
        }
        s
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn cmd_surface(a: &SurfaceArgs, config: &RunConfig) -> Result<String> {
    if a.alpha_points == 0 || a.delta_points == 0 {
        return Err(domain("axes need at least one point"));
    }
    if !(a.alpha_min > 0.0 && a.alpha_min <= a.alpha_max) || !(a.delta_min <= a.delta_max) {
        return Err(domain("axis bounds must satisfy 0 < min <= max"));
    }
    let alpha_axis = log_axis(a.alpha_min, a.alpha_max, a.alpha_points);
    let delta_axis = linear_axis(a.delta_min, a.delta_max, a.delta_points);
    let grid = sweep(&alpha_axis, &delta_axis, a.k)?;
    let stamp = format!("# config {}\n", config_json(config));
    let mut report = SurfaceReport {
        k: a.k,
        alpha_points: a.alpha_points,
        delta_points: a.delta_points,
        finite_cells: grid.count_finite(),
        no_threshold_cells: grid.count_no_threshold(),
        multi_crossing_cells: grid.count_multi_crossing(),
        out: a.out.clone(),
        file_format: None,
        grid: None,
    };
    if let Some(path) = &a.out {
        let (format, body) = if a.gnuplot {
            (GridFormat::Gnuplot, format!("{stamp}{}", grid.to_gnuplot()))
        } else if config.output_format == OutputFormat::Json {
            (GridFormat::Json, format!("{}\n", grid.to_json()))
        } else {
            (GridFormat::Csv, format!("{stamp}{}", grid.to_csv()))
        };
        write_atomic(path, &body)?;
        report.file_format = Some(format);
        return render(config, &report);
    }
    match config.output_format {
        OutputFormat::Text if a.gnuplot => Ok(format!("{stamp}{}", grid.to_gnuplot())),
        OutputFormat::Csv => Ok(format!("{stamp}{}", grid.to_csv())),
        OutputFormat::Json => {
            report.grid = Some(grid);
            render(config, &report)
        }
        OutputFormat::Text => {
            let mut s = report.text();
            s.push_str(&stamp);
            s.push_str(&grid.to_gnuplot());
            Ok(s)
        }
    }
}

#[derive(Debug, Serialize)]
struct DemoPoint {
    beta: f64,
    conditional_mean: f64,
}

#[derive(Debug, Serialize)]
struct DemoReport {
    support: Vec<f64>,
    weights: Vec<f64>,
    points: Vec<DemoPoint>,
}

impl Report for DemoReport {
    fn text(&self) -> String {
        let mut s = String::from("X, Y independent and uniform on {1, 5, 9, 13}\n");
        for p in &self.points {
            let _ = writeln!(s, "E[X | X > {} Y] = {}", p.beta, p.conditional_mean);
        }
        s.push_str("a larger bias screens out more X-candidates yet lowers the mean of those that pass\n");
        s
    }
}

fn cmd_demo_nonmono() -> Result<DemoReport> {
    let support = vec![1.0, 5.0, 9.0, 13.0];
    let weights = vec![0.25; 4];
    let points = [1.0, 2.0, 3.0, 4.0]
        .into_iter()
        .map(|beta| {
            Ok(DemoPoint {
                beta,
                conditional_mean: cond_exp_filtered_discrete(&support, &weights, beta)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DemoReport {
        support,
        weights,
        points,
    })
}

#[derive(Debug, Serialize)]
struct BoundedReport {
    distribution: String,
    bias_scale: f64,
    n: u64,
    trials: u64,
    events: u64,
    /// Estimate of `E[X_(n:n) - Y_(n-1:n) | the rule binds]`.
    estimate: f64,
    std_error: f64,
    ci95_low: f64,
    ci95_high: f64,
    ci_excludes_zero: bool,
}

impl Report for BoundedReport {
    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} values, b(x) = {} x, n = {}, {} trials ({} with the rule binding)",
            self.distribution, self.bias_scale, self.n, self.trials, self.events
        );
        let _ = writeln!(s, "E[gain | bind]    {} +/- {}", self.estimate, self.std_error);
        let _ = writeln!(s, "95% CI            [{}, {}]", self.ci95_low, self.ci95_high);
        s
    }
}

fn cmd_bounded(a: &BoundedArgs, seed: u64) -> Result<BoundedReport> {
    let dist: Arc<dyn UnitDistribution> = match a.dist {
        DistSpec::Uniform => Arc::new(Uniform),
        DistSpec::Power(shape) => Arc::new(PowerUnit::new(shape)?),
    };
    let model = BoundedModel::linear(dist, a.bias_scale)?;
    let r = bounded_experiment(&model, a.n, a.trials, seed)?;
    let (lo, hi) = (r.point_estimate - Z_95 * r.std_error, r.point_estimate + Z_95 * r.std_error);
    Ok(BoundedReport {
        distribution: model.distribution().name(),
        bias_scale: a.bias_scale,
        n: a.n,
        trials: a.trials,
        events: r.events,
        estimate: r.point_estimate,
        std_error: r.std_error,
        ci95_low: lo,
        ci95_high: hi,
        ci_excludes_zero: lo > 0.0 || hi < 0.0,
    })
}
