use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use huberlab::distributions::NoiseSpec;
use huberlab::harness::{
    run_baselines, run_bias_demo, run_bound_suite, run_rate_experiment, run_single_fit, write_baseline_report,
    write_bias_report, write_bound_report, write_rate_report, ExperimentConfig, DEFAULT_CONFIG,
};
use huberlab::loss::ScaleParam;
use huberlab::theory::{example1_risk_deriv_at_zero, oracle_shift, risk_deriv_at};
use huberlab::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_BOUND_VIOLATION: u8 = 3;

const DEFAULT_OUT: &str = "huberlab-out";
const ORACLE_GRID: [f64; 8] = [0.01, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Parser, Debug)]
#[command(name = "huberlab", version, about = "Huber-loss ERM with an adaptive scale: experiments and bound checks")]
struct Cli {
    /// Experiment config (TOML). The built-in default is used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override `master_seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override one config key, e.g. `--set replicates=5` or `--set model.bound=3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory (overrides `output_path`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one Huber ERM fit and print its diagnostics as JSON.
    Fit {
        /// Sample size; defaults to the first entry of `n_grid`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Print the population shift c(σ) and R'(0) over a σ grid.
    Oracle {
        #[arg(long, value_enum, default_value_t = OracleNoise::Config)]
        noise: OracleNoise,
        /// σ values to tabulate (repeatable); a default grid otherwise.
        #[arg(long)]
        sigma: Vec<f64>,
    },
    /// Error-versus-n sweep; writes rates.csv and rates_summary.json.
    Rates,
    /// Fitted offsets against the population shift; writes bias_demo.csv/.json.
    BiasDemo,
    /// Randomised bound-check suite; writes bounds.json.
    VerifyBounds,
    /// Huber against least squares and LAD on shared data; writes baselines.csv/.json.
    Baselines,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OracleNoise {
    Example1,
    ToyMixture,
    /// The noise of the configured model.
    Config,
}

/// An error together with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) | Error::Experiment(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path, &cli.overrides)?,
        None => ExperimentConfig::from_toml_with_overrides(DEFAULT_CONFIG, &cli.overrides)?,
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli, config: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.output_path.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli)?;
    let out = out_dir(&cli, &config);
    match &cli.command {
        Command::Fit { n } => fit(&config, *n),
        Command::Oracle { noise, sigma } => oracle(&config, *noise, sigma),
        Command::Rates => rates(&config, &out),
        Command::BiasDemo => bias_demo(&config, &out),
        Command::VerifyBounds => verify_bounds(&config, &out),
        Command::Baselines => baselines(&config, &out),
    }
}

fn fit(config: &ExperimentConfig, n: Option<usize>) -> Result<(), Failure> {
    let n = n.unwrap_or(config.n_grid[0]);
    let result = run_single_fit(config, n)?;
    for w in &result.estimator.diagnostics.warnings {
        log::warn!("{w}");
    }
    println!("{}", serde_json::to_string_pretty(&result).map_err(Error::from)?);
    Ok(())
}

fn oracle(config: &ExperimentConfig, noise: OracleNoise, sigmas: &[f64]) -> Result<(), Failure> {
    let spec = match noise {
        OracleNoise::Example1 => NoiseSpec::Example1,
        OracleNoise::ToyMixture => NoiseSpec::toy_mixture(),
        OracleNoise::Config => config.model.noise.clone(),
    };
    let grid: Vec<f64> = if sigmas.is_empty() { ORACLE_GRID.to_vec() } else { sigmas.to_vec() };
    let closed_form = spec == NoiseSpec::Example1;
    if closed_form {
        println!("{:>10}  {:>22}  {:>22}  {:>22}", "sigma", "c(sigma)", "R'(0)", "R'(0) closed form");
    } else {
        println!("{:>10}  {:>22}  {:>22}", "sigma", "c(sigma)", "R'(0)");
    }
    for s in grid {
        let sigma = ScaleParam::new(s)?;
        let c = oracle_shift(&spec, sigma)?;
        let d = risk_deriv_at(0.0, sigma, &spec)?;
        if closed_form {
            let exact = example1_risk_deriv_at_zero(sigma);
            println!("{s:>10}  {c:>22.15e}  {d:>22.15e}  {exact:>22.15e}");
        } else {
            println!("{s:>10}  {c:>22.15e}  {d:>22.15e}");
        }
    }
    Ok(())
}

fn rates(config: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let report = run_rate_experiment(config)?;
    write_rate_report(&report, out)?;
    for s in &report.series {
        println!("series {}:", s.label);
        for p in &s.points {
            println!(
                "  n = {:>7}  sigma = {:>10.4}  mean L2^2 = {:.6e}  ({} fits)",
                p.n, p.sigma, p.mean_l2_sq, p.completed
            );
        }
        match &s.slope {
            Some(f) => println!("  log-log slope {:.4} ± {:.4}", f.slope, f.stderr),
            None => println!("  log-log slope unavailable"),
        }
    }
    println!(
        "decomposition checks: {}/{} satisfied",
        report.decomposition_satisfied, report.decomposition_checked
    );
    println!("wrote {}", out.display());
    if !report.failures.is_empty() {
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!("{} of {} fits failed", report.failures.len(), report.failures.len() + report.rows.len()),
        });
    }
    if report.decomposition_satisfied < report.decomposition_checked {
        return Err(Failure {
            code: EXIT_BOUND_VIOLATION,
            message: "excess-risk decomposition bound violated".into(),
        });
    }
    Ok(())
}

fn bias_demo(config: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let report = run_bias_demo(config)?;
    write_bias_report(&report, out)?;
    println!(
        "{:>9} {:>8} {:>10} {:>14} {:>12} {:>14}  match",
        "policy", "n", "sigma", "offset", "stderr", "c(sigma)"
    );
    for r in &report.rows {
        println!(
            "{:>9} {:>8} {:>10.4} {:>14.6e} {:>12.3e} {:>14.6e}  {}",
            r.policy,
            r.n,
            r.sigma,
            r.offset,
            r.offset_stderr,
            r.oracle_shift,
            if r.matches_oracle() { "yes" } else { "no" }
        );
    }
    if let Some(ok) = report.adaptive_offsets_nonincreasing {
        println!("adaptive offsets nonincreasing: {ok}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn verify_bounds(config: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let report = run_bound_suite(&config.bounds, config.master_seed)?;
    write_bound_report(&report, out)?;
    for (name, t) in [
        ("comparison", &report.comparison),
        ("variance", &report.variance),
        ("bernstein", &report.bernstein),
        ("markov", &report.markov),
    ] {
        println!("{name:>10}: {}/{} satisfied ({} skipped)", t.satisfied, t.total, t.skipped);
    }
    println!("{}", report.tally_line());
    if !report.all_satisfied() {
        return Err(Failure {
            code: EXIT_BOUND_VIOLATION,
            message: format!("bound checks violated: {}", report.tally_line()),
        });
    }
    Ok(())
}

fn baselines(config: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let report = run_baselines(config)?;
    write_baseline_report(&report, out)?;
    println!(
        "{:>22} {:>8} {:>6} {:>12} {:>12} {:>12}",
        "method", "n", "fits", "median L2", "IQR", "mean L2^2"
    );
    for s in &report.summaries {
        println!(
            "{:>22} {:>8} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}",
            s.method, s.n, s.completed, s.median_l2, s.iqr_l2, s.mean_l2_sq
        );
    }
    println!("wrote {}", out.display());
    if !report.failures.is_empty() {
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!("{} fits failed", report.failures.len()),
        });
    }
    Ok(())
}
