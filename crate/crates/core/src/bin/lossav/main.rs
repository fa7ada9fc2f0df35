//! Command-line front end: simulate, measure anomalies, estimate, and run
//! policy counterfactuals. Exit codes: 0 success, 2 invalid input, 3
//! numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lossav::{Error, Result};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "lossav", version, about = "Job search with loss aversion: simulation, anomaly and parameter estimation, policy counterfactuals")]
struct Cli {
    /// Worker threads for bootstrap, simulation and sweeps (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON run configuration; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(short = 'o', long = "out", global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate job seekers and write offers, realized wage changes and bin counts.
    Simulate(SimulateArgs),
    /// Bunching, discontinuity and curvature break at zero.
    Anomalies(AnomalyArgs),
    /// Minimum-distance estimate of loss aversion and the productivity distribution.
    Estimate(EstimateArgs),
    /// Counterfactuals: offer mix, subsidy pass-through, salary history bans, vacancies.
    Policy {
        #[command(subcommand)]
        cmd: PolicyCmd,
    },
    /// Nash-bargained wage change for one worker-firm pair.
    Bargain(BargainArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Distribution family of productivity and amenities (logistic or normal).
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_phi: Option<f64>,
    #[arg(long)]
    pub sigma_phi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_eps: Option<f64>,
    #[arg(long)]
    pub sigma_eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of job seekers.
    #[arg(long)]
    pub n: Option<u64>,
    /// Keep only bin counts (no per-offer or per-hire files).
    #[arg(long)]
    pub binned_only: bool,
    /// Also write rejected offers to offers.csv.
    #[arg(long)]
    pub record_rejected: bool,
    /// Half-width of the binned output, in log points.
    #[arg(long)]
    pub bin_range: Option<f64>,
    #[arg(long)]
    pub bin_width: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnomalyArgs {
    /// CSV with a `growth` column or `bin_mid,prop,count` rows.
    pub input: Option<PathBuf>,
    /// Local polynomial degree (1 or 2).
    #[arg(long)]
    pub degree: Option<usize>,
    /// Bandwidth in log points, or `rot` for the rule-of-thumb choice per side.
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Bootstrap draws for standard errors (0 skips them).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Fit range `lo,hi` (symmetric about zero).
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    /// Resample individual observations instead of bin counts (raw input only).
    #[arg(long)]
    pub resample_observations: bool,
    /// Binning of raw growth input.
    #[arg(long)]
    pub bin_range: Option<f64>,
    #[arg(long)]
    pub bin_width: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV with a `growth` column or `bin_mid,prop,count` rows.
    pub input: Option<PathBuf>,
    /// Match raw bin proportions instead of kernel-smoothed ones.
    #[arg(long)]
    pub raw_props: bool,
    /// Distribution family (logistic or normal).
    #[arg(long)]
    pub family: Option<String>,
    /// Weight moments by their inverse multinomial variance.
    #[arg(long)]
    pub optimal_weights: bool,
    /// Half-width of the estimation window.
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long)]
    pub include_zero_bin: bool,
    /// Fit the standard model only (lambda = 1).
    #[arg(long)]
    pub restrict_lambda: bool,
    /// Bootstrap draws for the moment covariance.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Use the multinomial covariance instead of the bootstrap.
    #[arg(long)]
    pub analytic_cov: bool,
    /// Starting point `lambda,mu_phi,sigma_phi`.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    /// Smoothing bandwidth for the kernel-smoothed moments.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_eps: Option<f64>,
    #[arg(long)]
    pub sigma_eps: Option<f64>,
    #[arg(long)]
    pub gof_scale: Option<f64>,
    #[arg(long)]
    pub qlr_scale: Option<f64>,
    /// Use the chi-square(1) critical value for the lambda = 1 test, ignoring the boundary.
    #[arg(long)]
    pub naive_qlr: bool,
    /// Binning of raw growth input.
    #[arg(long)]
    pub bin_range: Option<f64>,
    #[arg(long)]
    pub bin_width: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum PolicyCmd {
    /// Shares of cuts, matches and raises across lambda.
    Mix(MixArgs),
    /// Pass-through of a hiring subsidy.
    Subsidy(SubsidyArgs),
    /// Pass-through and wage changes when firms see current wages with noise.
    Ban(BanArgs),
    /// Optimal number of vacancies.
    Vacancies(VacancyArgs),
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    pub lambda_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct SubsidyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub lambda_grid: Option<String>,
    /// Subsidy in standard deviations of productivity.
    #[arg(long, conflicts_with = "delta")]
    pub delta_sd: Option<f64>,
    /// Subsidy in log points.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Productivity quadrature nodes.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Productivity points in mechanism.csv.
    #[arg(long)]
    pub mechanism_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BanArgs {
    #[command(flatten)]
    pub subsidy: SubsidyArgs,
    /// Scale of the noise in perceived current wages (0 = full information).
    #[arg(long)]
    pub eta_scale: Option<f64>,
    /// Quadrature nodes for the noise.
    #[arg(long)]
    pub eta_nodes: Option<usize>,
    /// Job seekers in the Monte Carlo wage-change distribution (0 skips it).
    #[arg(long)]
    pub mc_n: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VacancyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Quadratic vacancy cost parameter.
    #[arg(long)]
    pub c: Option<f64>,
    /// Expected profit per vacancy.
    #[arg(long, conflicts_with = "psi")]
    pub pbar: Option<f64>,
    /// Log productivity of the vacancy; expected profit is computed from the model.
    #[arg(long, allow_hyphen_values = true)]
    pub psi: Option<f64>,
    /// Current log wage of every job seeker met.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "wages")]
    pub wage: Option<f64>,
    /// Binned current log wages (`bin_mid,prop,count`).
    #[arg(long)]
    pub wages: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BargainArgs {
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub eps: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub phi: f64,
}

/// Resolved global settings shared by every command.
pub struct Ctx {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
}

pub const DEFAULT_SEED: u64 = 20_240_101;

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let threads = cli.threads.or(cfg.threads).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParam {
            name: "threads",
            reason: e.to_string(),
        })?;
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
        out: cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(".")),
        cfg,
    };
    pool.install(|| match cli.cmd {
        Command::Bargain(a) => commands::bargain(&a),
        cmd => {
            std::fs::create_dir_all(&ctx.out)?;
            match cmd {
                Command::Simulate(a) => commands::simulate(&ctx, &a),
                Command::Anomalies(a) => commands::anomalies(&ctx, &a),
                Command::Estimate(a) => commands::estimate(&ctx, &a),
                Command::Policy { cmd } => match cmd {
                    PolicyCmd::Mix(a) => commands::mix(&ctx, &a),
                    PolicyCmd::Subsidy(a) => commands::subsidy(&ctx, &a),
                    PolicyCmd::Ban(a) => commands::ban(&ctx, &a),
                    PolicyCmd::Vacancies(a) => commands::vacancies(&ctx, &a),
                },
                Command::Bargain(_) => unreachable!(),
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
