use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dome::experiment::{
    analyze_stage, attack_stage, compare, load_data, load_model, run_experiment, train_stage, ExperimentConfig,
};
use dome::Result;

const BLOBS_QUICK: &str = include_str!("../../../../configs/blobs-quick.conf");

/// Train, attack and analyse DOME-family networks.
#[derive(Debug, Parser)]
#[command(name = "dome", version)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write the checkpoint and history.
    Train(RunArgs),
    /// Attack a trained model with FGSM and PGD.
    Attack(RunArgs),
    /// Embedding diagnostics and plots for a trained model.
    Analyze(RunArgs),
    /// Train, attack and analyse in one go.
    Run(RunArgs),
    /// Compare two completed runs as CSV.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Complete run on synthetic 2-D blobs with an MDOME head.
    DemoBlobs(Overrides),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Replace the config's seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Replace the config's artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Directory with the IDX files; overrides the config and DOME_DATA_DIR.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = self.out {
            cfg.out = out;
        }
        if let Some(data) = self.data {
            cfg.data_dir = Some(data);
        }
        cfg
    }
}

fn load_config(args: RunArgs) -> Result<ExperimentConfig> {
    let cfg = args.overrides.apply(ExperimentConfig::from_file(&args.config)?);
    cfg.validate()?;
    Ok(cfg)
}

fn report(cfg: &ExperimentConfig) {
    println!("artifacts in {}", cfg.out.display());
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => {
            let cfg = load_config(args)?;
            let (train, test) = load_data(&cfg)?;
            let (_, history) = train_stage(&cfg, &train, &test)?;
            if let Some(last) = history.epochs.last() {
                println!("train_acc {:.4}  test_acc {:.4}", last.train_acc, last.test_acc);
            }
            report(&cfg);
        }
        Command::Attack(args) => {
            let cfg = load_config(args)?;
            let net = load_model(&cfg)?;
            let (_, test) = load_data(&cfg)?;
            let s = attack_stage(&cfg, &net, &test)?;
            println!(
                "benign_acc {:.4}  fgsm_acc {:.4}  pgd_acc {:.4}  ({} examples)",
                s.benign_acc,
                s.fgsm_acc(),
                s.pgd_acc(),
                s.examples
            );
            report(&cfg);
        }
        Command::Analyze(args) => {
            let cfg = load_config(args)?;
            let net = load_model(&cfg)?;
            let (_, test) = load_data(&cfg)?;
            let r = analyze_stage(&cfg, &net, &test)?;
            println!("jsd_bits {:.4}  bbox_diagonal {:.4}", r.jsd_bits, r.bbox_diagonal);
            report(&cfg);
        }
        Command::Run(args) => summarize(&load_config(args)?)?,
        Command::DemoBlobs(overrides) => {
            let cfg = overrides.apply(ExperimentConfig::parse(BLOBS_QUICK)?);
            summarize(&cfg)?;
        }
        Command::Compare { run_a, run_b, out } => {
            let table = compare(&run_a, &run_b)?;
            match out {
                Some(path) => table.write_csv(BufWriter::new(File::create(path)?))?,
                None => table.write_csv(io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn summarize(cfg: &ExperimentConfig) -> Result<()> {
    let s = run_experiment(cfg)?;
    let last = s.history.epochs.last().expect("at least one epoch");
    let mut out = io::stdout().lock();
    writeln!(out, "test_acc {:.4}", last.test_acc)?;
    writeln!(
        out,
        "fgsm_acc {:.4}  pgd_acc {:.4}  ({} examples)",
        s.attacks.fgsm_acc(),
        s.attacks.pgd_acc(),
        s.attacks.examples
    )?;
    writeln!(out, "jsd_bits {:.4}  bbox_diagonal {:.4}", s.analysis.jsd_bits, s.analysis.bbox_diagonal)?;
    report(cfg);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
