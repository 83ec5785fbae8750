//! `neurofuzz` command-line front end.
//!
//! Exit status: 0 on success, 2 on usage or input errors, 1 on internal
//! errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neurofuzz_core::CriterionKind;

#[derive(Debug, Parser)]
#[command(name = "neurofuzz", version, about = "Coverage-guided fuzzing for small image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record per-neuron activation ranges over a labelled image directory.
    Profile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the fuzz loop and write a run directory.
    Fuzz(Box<FuzzArgs>),
    /// Compare predictions of a model and its binary16-truncated variant.
    Quantdiff {
        #[arg(long)]
        model: PathBuf,
        /// Fraction of parameters to truncate.
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        #[arg(long)]
        tests: PathBuf,
        /// JSON file receiving disagreement records and counts.
        #[arg(long)]
        out: PathBuf,
        /// Independent samplings with seeds rng_seed, rng_seed + 1, ...
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        repeats: u64,
    },
    /// Print the accuracy of a model on a labelled image directory.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tests: PathBuf,
    },
    /// Summarise a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Write `iteration coverage` rows (iteration 0 is the initial corpus).
        #[arg(long)]
        plot_data: Option<PathBuf>,
        /// Table row spacing in iterations; defaults to about 20 rows.
        #[arg(long)]
        every: Option<u64>,
    },
}

/// Flags override `--config`, which overrides built-in defaults.
#[derive(Debug, Args)]
struct FuzzArgs {
    #[arg(long)]
    model: PathBuf,
    /// Required for kmnc, nbc and snac.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON file mirroring the fuzz configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_criterion)]
    criterion: Option<CriterionKind>,
    #[arg(long)]
    budget_iters: Option<u64>,
    /// Wall-clock budget. Given alone, it replaces the iteration budget.
    #[arg(long)]
    budget_secs: Option<f64>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Keep every non-empty mutant batch instead of only coverage-gaining ones.
    #[arg(long)]
    unguided: bool,
    /// Also snapshot the final batch pool under `pool/`.
    #[arg(long)]
    save_pool: bool,
    /// NC threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// KMNC sections per neuron.
    #[arg(long)]
    k_sections: Option<usize>,
    /// TKNC / BKNC neurons per layer.
    #[arg(long)]
    top_k: Option<usize>,
    /// NBC / SNAC buckets per corner region.
    #[arg(long)]
    overflow_buckets: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    try_num: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p_min: Option<f64>,
    /// Mutation trials per iteration.
    #[arg(long)]
    trials: Option<usize>,
    /// Seeds sampled from the selected batch.
    #[arg(long)]
    sample_size: Option<usize>,
}

fn parse_criterion(s: &str) -> Result<CriterionKind, String> {
    s.parse().map_err(|e: neurofuzz_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // a panic is an internal error, not the default status 101
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(code) => code,
        Err(_) => ExitCode::from(1),
    }
}

fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Profile { model, data, out } => commands::profile(&model, &data, &out),
        Command::Fuzz(args) => commands::fuzz(&args),
        Command::Quantdiff {
            model,
            ratio,
            rng_seed,
            tests,
            out,
            repeats,
        } => commands::quantdiff(&model, ratio, rng_seed, &tests, &out, repeats as usize),
        Command::Eval { model, tests } => commands::eval(&model, &tests),
        Command::Report { run, plot_data, every } => commands::report(&run, plot_data.as_deref(), every),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
