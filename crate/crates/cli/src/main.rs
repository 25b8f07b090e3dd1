use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nelson_fk_cli::{describe, run, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "nelson-fk", version, about = "Feynman–Kac experiments on truncated Fock space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run any configuration.
    Run(RunArgs),
    /// Print the parameter schema of a variant.
    Describe { variant: String },
    ValidateLevy(RunArgs),
    BuildHamiltonian(RunArgs),
    McRun(RunArgs),
    FkVsOracle(RunArgs),
    PositivityAudit(RunArgs),
    DispersionScan(RunArgs),
    RenormScan(RunArgs),
    TrotterCheck(RunArgs),
    FlowCheck(RunArgs),
    EvolutionCheck(RunArgs),
}

fn load(args: &RunArgs, expected: Option<&str>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|source| CliError::Io { path: args.config.display().to_string(), source })?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(kind) = expected {
        if cfg.experiment.kind() != kind {
            return Err(CliError::Usage(format!(
                "experiment.kind: `{}` given to the `{kind}` subcommand",
                cfg.experiment.kind()
            )));
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(o) = &args.output_dir {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, kind) = match &cli.command {
        Command::Describe { variant } => {
            return match describe(variant) {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            };
        }
        Command::Run(a) => (a, None),
        Command::ValidateLevy(a) => (a, Some("validate-levy")),
        Command::BuildHamiltonian(a) => (a, Some("build-hamiltonian")),
        Command::McRun(a) => (a, Some("mc-run")),
        Command::FkVsOracle(a) => (a, Some("fk-vs-oracle")),
        Command::PositivityAudit(a) => (a, Some("positivity-audit")),
        Command::DispersionScan(a) => (a, Some("dispersion-scan")),
        Command::RenormScan(a) => (a, Some("renorm-scan")),
        Command::TrotterCheck(a) => (a, Some("trotter-check")),
        Command::FlowCheck(a) => (a, Some("flow-check")),
        Command::EvolutionCheck(a) => (a, Some("evolution-check")),
    };
    match load(args, kind).and_then(|cfg| run(&cfg)) {
        Ok(out) => {
            println!("{:?}: wrote {} files to {}", out.status, out.files.len(), out.output_dir.display());
            ExitCode::from(out.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
