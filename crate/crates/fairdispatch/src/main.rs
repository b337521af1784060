use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairdispatch::commands::{self, Context};
use fairdispatch::policy_spec::PolicySpec;
use fairdispatch::{CliError, Profile, RunConfig};
use fairdispatch_core::eval::LongTermConfig;

/// Fairness-aware same-day delivery dispatch: instance generation, deep
/// Q-learning, benchmark policies and evaluation.
#[derive(Debug, Parser)]
#[command(name = "fairdispatch", version)]
struct Cli {
    /// Run configuration (JSON). Overrides the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration used when no file is given.
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    /// Training seed, or the first instance seed for `gen`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluation worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the resolved configuration to `config.json` as a starting point for edits.
    Config,
    /// Write request instances and a manifest.
    Gen {
        #[arg(long)]
        count: u64,
    },
    /// Train a Q-network; the output directory becomes a run directory.
    Train,
    /// Evaluate a policy on the test pool.
    Eval {
        /// myopic, reject-all, bucket:<k>, bucket:search, reserved:<k>, weights:<file> or run:<dir>.
        #[arg(long)]
        policy: PolicySpec,
        /// Instances from `gen` instead of the configured test pool.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Write decision logs and route traces for the first N days.
        #[arg(long, default_value_t = 0)]
        logs: usize,
    },
    /// Train one run per alpha and write the Pareto table.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0])]
        alphas: Vec<f64>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Search the bucket threshold on the validation pool.
    BucketSearch {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Simulate a year of demand reacting to service rates.
    Longterm {
        #[arg(long)]
        policy: PolicySpec,
        /// Defaults to the configured threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 12)]
        months: usize,
        #[arg(long, default_value_t = 30)]
        days_per_month: usize,
    },
    /// Per-minute rate-based reward over the test pool.
    RewardProfile {
        #[arg(long, default_value = "myopic")]
        policy: PolicySpec,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let run_dir = match &cli.command {
        Command::Eval { policy: PolicySpec::Run(d), .. } | Command::Longterm { policy: PolicySpec::Run(d), .. } => Some(d.as_path()),
        _ => None,
    };
    let mut config = match (&cli.config, run_dir) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(dir)) if dir.join("config.json").is_file() => RunConfig::load(&dir.join("config.json"))?,
        _ => RunConfig::for_profile(cli.profile),
    };
    if let (Some(seed), false) = (cli.seed, matches!(cli.command, Command::Gen { .. })) {
        config.train.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    let ctx = Context::new(config, cli.jobs, cli.out.clone())?;
    let out = |name: &str| ctx.out.join(name).display().to_string();
    match &cli.command {
        Command::Config => {
            fairdispatch::formats::write_json(&ctx.out.join("config.json"), &ctx.config)?;
            println!("wrote {}", out("config.json"));
        }
        Command::Gen { count } => {
            let start = cli.seed.unwrap_or(ctx.config.pools.test.start);
            let m = commands::gen(&ctx, start, *count)?;
            println!("wrote {} instances, manifest {}", m.instances.len(), out("manifest.json"));
        }
        Command::Train => {
            let t = commands::train(&ctx)?;
            println!("{} checkpoints, {} gradient steps in {}", t.checkpoints.len(), t.gradient_steps, ctx.out.display());
        }
        Command::Eval { policy, manifest, logs } => {
            let s = commands::eval(&ctx, policy, manifest.as_deref(), *logs)?;
            let r = &s.report;
            println!(
                "{}: utility {:.2} r_total {:.4} r_min {:.4} regions {:?} objective({}) {:.4}",
                s.policy, r.utility, r.r_total, r.r_min, r.r_regions, s.alpha, s.objective
            );
        }
        Command::Sweep { alphas, manifest } => {
            let s = commands::sweep(&ctx, alphas, manifest.as_deref())?;
            for r in &s.rows {
                println!("alpha {:<6} r_total {:.4} r_min {:.4} utility {:.2}{}", r.alpha, r.r_total, r.r_min, r.utility, if r.dominated { " (dominated)" } else { "" });
            }
        }
        Command::BucketSearch { manifest } => {
            let s = commands::bucket_search(&ctx, manifest.as_deref())?;
            println!("threshold {} r_min {:.4} (validation), test regions {:?}", s.search.best, s.search.best_r_min, s.test.r_regions);
        }
        Command::Longterm { policy, threshold, months, days_per_month } => {
            let lt = LongTermConfig {
                months: *months,
                days_per_month: *days_per_month,
                threshold: threshold.unwrap_or(ctx.config.longterm_threshold),
                seed: ctx.config.pools.test.start,
            };
            let s = commands::longterm(&ctx, policy, &lt)?;
            println!("final lambda {:?}, wrote {}", s.final_lambda, out("longterm.csv"));
        }
        Command::RewardProfile { policy, alpha, manifest } => {
            let (_, s) = commands::reward_profile(&ctx, policy, *alpha, manifest.as_deref())?;
            println!("mean |reward| first half hour {:.5}, last hour {:.5}", s.first_half_hour, s.last_hour);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fairdispatch: {e}");
            e.exit_code()
        }
    }
}
