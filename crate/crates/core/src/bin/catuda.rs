use std::path::PathBuf;
use std::process::ExitCode;

use cat_uda::experiment::{self, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "catuda",
    about = "Cluster alignment with a teacher: synthetic domain adaptation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and write metrics, features and a summary.
    Run(Overrides),
    /// Print the fully resolved config without training.
    Validate(Overrides),
}

#[derive(Args)]
struct Overrides {
    config: PathBuf,
    /// Replace the configured seeds (comma separated).
    #[arg(long, value_delimiter = ',')]
    seed_override: Option<Vec<u64>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Overrides {
    fn load(&self) -> cat_uda::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seeds) = &self.seed_override {
            cfg.seeds = seeds.clone();
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(o) => o.load().map(|cfg| print!("{}", cfg.resolved_toml())),
        Command::Run(o) => o.load().and_then(|cfg| experiment::run(&cfg)).map(|s| {
            for r in &s.per_seed {
                println!("seed {}: target accuracy {:.4}", r.seed, r.target_accuracy);
            }
            println!("target accuracy {} (config {})", s.cell, &s.config_hash[..12]);
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
