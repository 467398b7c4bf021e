use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ltcas_cli::stages::{self, Workspace, CONFIG_FILE};
use ltcas_cli::{CliError, CliResult, ExperimentConfig, Generator, Variant};

#[derive(Parser)]
#[command(
    name = "ltcas",
    version,
    about = "Long-tailed classification with diffusion-synthesised samples and RL-driven batch composition"
)]
struct Cli {
    /// TOML experiment config. Later stages fall back to <out>/config.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the long-tailed shapes dataset and start a new manifest.
    GenData {
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        head_count: Option<usize>,
    },
    /// Train the synthesizers (class-only and sketch-supervised).
    TrainSynth {
        #[arg(long)]
        generator: Option<String>,
    },
    /// Sample the synthetic pools.
    SamplePool {
        #[arg(long)]
        generator: Option<String>,
    },
    /// Train classifiers for the configured variants.
    TrainClf {
        #[arg(long)]
        variant: Option<String>,
    },
    /// Evaluate trained classifiers on the test split.
    Eval {
        #[arg(long)]
        variant: Option<String>,
    },
    /// Write report.json and report.md from whatever has been evaluated.
    Report,
    /// Run every stage in order.
    Pipeline,
    /// Print the resolved config as TOML.
    ShowConfig,
}

fn resolve(cli: &Cli, fresh: bool) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let stored = cli.out.as_ref().map(|o| o.join(CONFIG_FILE));
            match stored.filter(|p| !fresh && p.exists()) {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default(),
            }
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Command::GenData {
        classes,
        ratio,
        head_count,
    } = &cli.command
    {
        if let Some(c) = classes {
            cfg.data.classes = *c;
        }
        if let Some(r) = ratio {
            cfg.data.imbalance_ratio = *r;
        }
        if let Some(h) = head_count {
            cfg.data.head_count = *h;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pick<T: std::str::FromStr<Err = CliError> + Copy>(
    arg: &Option<String>,
    all: Vec<T>,
) -> CliResult<Vec<T>> {
    match arg {
        Some(name) => Ok(vec![name.parse()?]),
        None => Ok(all),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let fresh = matches!(cli.command, Command::GenData { .. } | Command::Pipeline);
    let cfg = resolve(&cli, fresh)?;
    match &cli.command {
        Command::GenData { .. } => stages::gen_data(&mut Workspace::create(cfg)?),
        Command::TrainSynth { generator } => {
            let gens: Vec<Generator> = pick(generator, cfg.generators())?;
            stages::train_synth(&mut Workspace::open(cfg)?, &gens)
        }
        Command::SamplePool { generator } => {
            let gens: Vec<Generator> = pick(generator, cfg.generators())?;
            stages::sample_pool(&mut Workspace::open(cfg)?, &gens)
        }
        Command::TrainClf { variant } => {
            let vars: Vec<Variant> = pick(variant, cfg.variants.clone())?;
            stages::train_clf(&mut Workspace::open(cfg)?, &vars)
        }
        Command::Eval { variant } => {
            let vars: Vec<Variant> = pick(variant, cfg.variants.clone())?;
            stages::eval(&mut Workspace::open(cfg)?, &vars)
        }
        Command::Report => {
            let report = stages::report(&mut Workspace::open(cfg)?)?;
            print!("{}", report.to_markdown());
            Ok(())
        }
        Command::Pipeline => {
            let report = stages::pipeline(cfg)?;
            print!("{}", report.to_markdown());
            Ok(())
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
