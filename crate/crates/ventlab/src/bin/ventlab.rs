//! Command-line entry point for the ventilation offline-RL laboratory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ventlab::pipeline::{
    eval_fqe_cmd, eval_online_cmd, gen_data_cmd, report_cmd, run_all_cmd, spawn_cohort_cmd,
    train_cmd, PolicySelector, RunConfig,
};

#[derive(Parser)]
#[command(name = "ventlab", version, about = "Digital-twin ventilation offline-RL laboratory")]
struct Cli {
    /// Bound on worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master-seed override for the loaded config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the digital-twin cohort file.
    SpawnCohort {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cohort size override.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Roll the scripted behavior policy into an offline episode dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy on an episode dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train a baseline instead of the full objective.
        #[arg(long, value_parser = ["ddqn", "cql", "bcq"])]
        baseline: Option<String>,
        /// Training-seed override.
        #[arg(long)]
        train_seed: Option<u64>,
    },
    /// Fitted Q-evaluation of a policy on the held-out split.
    EvalFqe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path, or "clinician" for the behavior reference.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop evaluation of a policy on the twin cohort.
    EvalOnline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path, or "clinician" for the behavior reference.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge evaluation reports into one comparison table.
    Report {
        #[arg(long = "fqe", num_args = 0..)]
        fqe: Vec<PathBuf>,
        #[arg(long = "online", num_args = 0..)]
        online: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline (cohort, data, four policies, reports).
    RunAll {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> ventlab::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .ok();
    }
    match cli.command {
        Command::SpawnCohort { config, out, n } => {
            let mut cfg = load_config(&config, cli.seed)?;
            if let Some(n) = n {
                cfg.cohort.n = n;
            }
            spawn_cohort_cmd(&cfg, &out)?;
            println!("cohort of {} twins -> {}", cfg.cohort.n, out.display());
        }
        Command::GenData { config, cohort, out } => {
            let cfg = load_config(&config, cli.seed)?;
            gen_data_cmd(&cfg, &cohort, &out)?;
            println!("episodes -> {}", out.display());
        }
        Command::Train { config, data, out, baseline, train_seed } => {
            let cfg = load_config(&config, cli.seed)?;
            train_cmd(&cfg, &data, &out, baseline.as_deref(), train_seed)?;
            println!(
                "{} checkpoint -> {}",
                baseline.as_deref().unwrap_or("tcql"),
                out.display()
            );
        }
        Command::EvalFqe { config, data, policy, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let report = eval_fqe_cmd(&cfg, &data, &PolicySelector::parse(&policy), &out)?;
            println!(
                "fqe[{}]: score {:.4} +/- {:.4} -> {}",
                report.policy_id,
                report.fqe_score.mean,
                report.fqe_score.std,
                out.display()
            );
        }
        Command::EvalOnline { config, cohort, data, policy, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let report =
                eval_online_cmd(&cfg, &cohort, &data, &PolicySelector::parse(&policy), &out)?;
            println!(
                "online[{}]: safety {:.2}% +/- {:.2} -> {}",
                report.policy_id,
                report.safety_rate_pct.mean,
                report.safety_rate_pct.std,
                out.display()
            );
        }
        Command::Report { fqe, online, out } => {
            report_cmd(&fqe, &online, &out)?;
            println!("comparison table -> {}", out.display());
        }
        Command::RunAll { config, out_dir } => {
            let cfg = load_config(&config, cli.seed)?;
            run_all_cmd(&cfg, &out_dir)?;
            println!("pipeline complete -> {}", out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
