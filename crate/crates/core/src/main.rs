use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sensor_select::experiment::{CliError, Experiment, ExperimentConfig};

/// Greedy sensor selection on the thermal block.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML). Defaults to the built-in desk preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Baseline seed, overriding `baselines.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and certify the reduced basis.
    BuildRb,
    /// Run the greedy selection.
    Select,
    /// Draw the random and reference sensor sets.
    Baselines,
    /// Evaluate all sensor sets with the full-order model.
    Evaluate,
    /// Write plot inputs and print the summary.
    Report,
    /// Run every step in order.
    Run,
    /// Print the effective configuration.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::desk(),
    };
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        config.baselines.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let exp = Experiment::new(config)?;
    let out = exp.out_dir().display().to_string();
    match cli.command {
        Command::BuildRb => {
            let rb = exp.build_rb()?;
            println!(
                "reduced basis: {} functions, max certified error {:e} -> {out}",
                rb.dim(),
                rb.certificate().eps_max
            );
        }
        Command::Select => {
            for (set, trace) in exp.select()? {
                let beta = trace.records.last().map_or(0.0, |r| r.beta);
                println!(
                    "{}: {} sensors, worst-case surrogate beta {beta:.4}{}",
                    set.id,
                    set.indices.len(),
                    if trace.target_reached { " (target reached)" } else { "" }
                );
            }
        }
        Command::Baselines => println!("{} baseline sets -> {out}", exp.baselines()?.len()),
        Command::Evaluate => {
            let evals = exp.evaluate()?;
            let failures: usize = evals.iter().map(|e| e.failures).sum();
            println!("{} sets evaluated, {failures} failed test points -> {out}", evals.len());
        }
        Command::Report => print!("{}", exp.report()?.text),
        Command::Run => print!("{}", exp.run_all()?.text),
        Command::ShowConfig => print!("{}", exp.config().to_toml_string()?),
    }
    Ok(())
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
