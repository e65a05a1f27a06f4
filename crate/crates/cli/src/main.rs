//! Command-line front end: simulate presets, generate training data, fit
//! physical parameters, evaluate fits and plan through the simulator.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, VariantArg};
use error::CliError;

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  2  configuration error (unknown preset, invalid option, unreadable config)
  3  simulation failure (the message names the step)
  4  missing input file";

#[derive(Parser, Debug)]
#[command(name = "diffcontact", version, about = "Contact-rich rigid-body simulation, parameter fitting and planning", after_help = EXIT_HELP)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Preset name, e.g. BP5, CP3, Gyro.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Time step in seconds.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Steps to simulate (simulate) or steps per trajectory (generate).
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Contact model: exact (cm) or regularized (cmr).
    #[arg(long, value_enum, global = true)]
    variant: Option<VariantArg>,
    /// Regularizer of the cmr variant.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Gaussian noise added to the dataset before fitting.
    #[arg(long, global = true)]
    noise_sigma: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory of a preset from a seeded initial condition.
    #[command(after_help = "\
Writes trajectory.json and energy.csv.
energy.csv columns: t, E (total energy), phi_inf (max |equality constraint|), penetration_max")]
    Simulate,
    /// Generate a training dataset of short windows.
    #[command(after_help = "Writes dataset.json (ground-truth preset, options and windows).")]
    Generate {
        /// Number of trajectories.
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Fit masses, friction, restitution and potential constants to a dataset.
    #[command(after_help = "\
Writes fit.json and losses.csv.
losses.csv columns: epoch, loss (summed squared window error), rel_err (mean relative window error)")]
    Fit {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compare parameters with the truth on a held-out dataset.
    #[command(after_help = "\
Writes eval.json, eval.csv and relative_errors.csv.
eval.csv columns: class, mu_learned, mu_true, e_learned, e_true
relative_errors.csv columns: window, rel_err")]
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// fit.json to evaluate; the dataset's true parameters otherwise.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Optimize an initial velocity through the simulator.
    #[command(after_help = "\
Writes plan.json, loss.csv and rollout.json.
loss.csv columns: iter, loss (objective of the iterate), best (running minimum)")]
    Plan {
        /// billiards, throw_hit or throw_vertical.
        #[arg(long, default_value = "billiards")]
        task: String,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// fit.json whose parameters drive the plan; the preset's otherwise.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Write every preset as JSON.
    ExportPresets,
}

fn build_config(c: &Common, command: &Command) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &c.preset {
        cfg.preset = Some(p.clone());
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(dt) = c.dt {
        cfg.sim.dt = dt;
    }
    if let Some(n) = c.steps {
        cfg.sim.n_steps = n;
        cfg.dataset.rollout_steps = n;
    }
    if let Some(n) = c.epochs {
        cfg.fit.epochs = n;
    }
    if let Some(s) = c.noise_sigma {
        cfg.noise_sigma = s;
    }
    cfg.sim.contact.variant = config::variant(cfg.sim.contact.variant, c.variant, c.epsilon)?;
    match command {
        Command::Generate { trajectories: Some(n) } => cfg.dataset.n_traj = *n,
        Command::Plan { iters, lr, .. } => {
            if let Some(n) = iters {
                cfg.plan.iters = *n;
            }
            if let Some(lr) = lr {
                cfg.plan.lr = *lr;
            }
        }
        _ => {}
    }
    cfg.sync_sim();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = build_config(&cli.common, &cli.command)?;
    match &cli.command {
        Command::Simulate => commands::simulate_cmd(&cfg),
        Command::Generate { .. } => commands::generate_cmd(&cfg),
        Command::Fit { dataset } => commands::fit_cmd(&cfg, dataset.as_ref()),
        Command::Eval { dataset, fit } => commands::eval_cmd(&cfg, dataset.as_ref(), fit.as_ref()),
        Command::Plan { task, fit, .. } => commands::plan_cmd(&cfg, task, fit.as_ref()),
        Command::ExportPresets => commands::export_presets_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
