use std::path::{Path, PathBuf};
use std::process::ExitCode;

use auglab_cli::config::ExperimentConfig;
use auglab_cli::experiment::{run_until, Target};
use auglab_cli::sweep::run_sweep;
use auglab_cli::CliError;
use auglab_core::bounds::{full_report, BoundInputsDraft, Empirical};
use auglab_core::concentration::CliqueMode;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "auglab",
    version,
    about = "Augmentation concentration experiments on small encoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Approx,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the experiment seed and every seed derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Clique solver for the concentration stage.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Generates or loads the dataset and writes dataset.csv.
    GenData(Common),
    /// Trains the encoder; writes trace.csv and model.bin.
    Train(Common),
    /// Estimates sigma over the delta grid; writes concentration.csv.
    Concentration(Common),
    /// Trains (or loads --model) and writes eval.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Encoder checkpoint to evaluate instead of training.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Runs the full pipeline, or evaluates the bounds on a JSON input file.
    Bounds {
        #[arg(long, required_unless_present = "inputs")]
        config: Option<PathBuf>,
        /// JSON with bound inputs and an optional "empirical" object.
        #[arg(long, conflicts_with = "config")]
        inputs: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Runs the sweep in the config's [sweep] table; writes summary.csv.
    Sweep(Common),
}

#[derive(Deserialize)]
struct InputsFile {
    #[serde(flatten)]
    inputs: BoundInputsDraft,
    #[serde(default)]
    empirical: Empirical,
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.reseed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(mode) = common.mode {
        cfg.clique_mode = Some(match mode {
            Mode::Exact => CliqueMode::Exact,
            Mode::Approx => CliqueMode::DualApprox,
        });
    }
    Ok(cfg)
}

fn bounds_from_inputs(path: &Path, out: &Path) -> Result<(), CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: InputsFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let inputs = file.inputs.finish().map_err(CliError::config)?;
    let report = full_report(&inputs, &file.empirical).map_err(|e| match e {
        auglab_core::Error::Convention(_) | auglab_core::Error::MissingInputs(_) => CliError::config(e),
        e => CliError::stage("bounds", e),
    })?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    report
        .save(&out.join("bounds.csv"), &out.join("bounds.json"))
        .map_err(|e| CliError::stage("bounds", e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let staged = |common: &Common, target: Target, model: Option<&Path>| -> Result<(), CliError> {
        let cfg = load(common)?;
        run_until(&cfg, target, model).map(|_| ())
    };
    match cli.command {
        Command::GenData(c) => staged(&c, Target::Data, None),
        Command::Train(c) => staged(&c, Target::Train, None),
        Command::Concentration(c) => staged(&c, Target::Concentration, None),
        Command::Evaluate { common, model } => staged(&common, Target::Evaluate, model.as_deref()),
        Command::Bounds {
            config,
            inputs,
            seed,
            out,
            mode,
        } => match (config, inputs) {
            (_, Some(inputs)) => bounds_from_inputs(&inputs, &out.unwrap_or_else(|| PathBuf::from("."))),
            (Some(config), None) => staged(
                &Common {
                    config,
                    seed,
                    out,
                    mode,
                },
                Target::Bounds,
                None,
            ),
            (None, None) => Err(CliError::Config("bounds needs --config or --inputs".into())),
        },
        Command::Sweep(c) => {
            let cfg = load(&c)?;
            let spec = cfg
                .sweep
                .clone()
                .ok_or_else(|| CliError::Config("config has no [sweep] table".into()))?;
            let out = run_sweep(&cfg, &spec)?;
            for (level, err) in &out.failures {
                eprintln!("level {level} failed: {err}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
