//! `markovline`: runs experiments on expanding Markov maps from TOML configs.
//!
//! Exit status: 0 when every configured verdict passes, 2 when one fails, 1 on
//! config, IO or budget errors.

mod experiment;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    BuildCheck,
    ChainAnalyze,
    Evolve,
    Correlate,
    GgmSweep,
    AveCheck,
    Orbits,
    Cylinders,
}

impl Command {
    fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "markovline", version, about = "Experiments on Lebesgue-preserving expanding Markov maps")]
struct Cli {
    command: Command,
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV tables and summary.toml.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "MARKOVLINE_THREADS")]
    threads: Option<usize>,
    /// Dotted config key and TOML value, e.g. `correlate.n_max=500`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn execute(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let loaded = experiment::load(&cli.config, &cli.overrides)?;
    let seed = cli.seed.or(loaded.config.seed);
    let ctx = run::Ctx { config: &loaded.config, dir: &loaded.dir, seed };
    let report = match cli.command {
        Command::BuildCheck => run::build_check(&ctx),
        Command::ChainAnalyze => run::chain_analyze(&ctx),
        Command::Evolve => run::evolve(&ctx),
        Command::Correlate => run::correlate(&ctx),
        Command::GgmSweep => run::ggm_sweep(&ctx),
        Command::AveCheck => run::ave_check(&ctx),
        Command::Orbits => run::orbits(&ctx),
        Command::Cylinders => run::cylinders(&ctx),
    }
    .with_context(|| format!("{} `{}`", cli.command.name(), loaded.config.id))?;
    let mut header = toml::Table::new();
    header.insert("command".into(), cli.command.name().into());
    header.insert("id".into(), loaded.config.id.clone().into());
    if !loaded.config.description.is_empty() {
        header.insert("description".into(), loaded.config.description.clone().into());
    }
    header.insert("config_path".into(), loaded.path.display().to_string().into());
    if let Some(s) = seed {
        header.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    header.insert("config".into(), loaded.text.clone().into());
    report.write(&cli.out, header)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let pass = report.passed();
    println!("verdict: {}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
