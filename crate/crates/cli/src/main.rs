use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conewalk::harness::{default_workers, emit_outputs, run_experiment, ExperimentConfig, ExperimentKind, OutputFormat};
use conewalk::Error;

#[derive(Parser)]
#[command(name = "conewalk", version, about = "Simulate random walks on matrix cones and check their limit laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Group walk on p×q matrices, reporting ‖S_n‖² at the checkpoints.
    WalkGroup(RunArgs),
    /// Bessel hypergroup walk for each index in `mu_grid`.
    WalkBessel(RunArgs),
    /// Repeated single convolutions of two fixed points.
    Convolve(RunArgs),
    /// Monte Carlo normalizing constant of the contraction density.
    Kappa(RunArgs),
    /// Normalized limit statistic against its Gaussian limit.
    CltCheck(RunArgs),
    /// KS distance to the χ² limit along a grid of walk lengths.
    BerryEsseenScan(RunArgs),
    /// Structural checks of the convolution and the samplers.
    Axioms(RunArgs),
    /// Fourth-moment identity for scalar group walks.
    MomentIdentity(RunArgs),
}

impl Command {
    fn parts(&self) -> (ExperimentKind, &RunArgs) {
        match self {
            Command::WalkGroup(a) => (ExperimentKind::WalkGroup, a),
            Command::WalkBessel(a) => (ExperimentKind::WalkBessel, a),
            Command::Convolve(a) => (ExperimentKind::Convolve, a),
            Command::Kappa(a) => (ExperimentKind::Kappa, a),
            Command::CltCheck(a) => (ExperimentKind::CltCheck, a),
            Command::BerryEsseenScan(a) => (ExperimentKind::BerryEsseenScan, a),
            Command::Axioms(a) => (ExperimentKind::Axioms, a),
            Command::MomentIdentity(a) => (ExperimentKind::MomentIdentity, a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "CONEWALK_WORKERS")]
    workers: Option<usize>,
    /// Output directory (default: the config's `output_dir`, else `results`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
            Format::Both => OutputFormat::Both,
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_CONFIG })
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let (kind, args) = cli.command.parts();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.experiment != kind {
        return Err(Error::Config {
            field: "experiment".into(),
            message: format!("config describes `{}` but the subcommand is `{kind}`", cfg.experiment),
        });
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    let workers = args.workers.unwrap_or_else(default_workers);
    let record = run_experiment(&cfg, workers)?;
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let written = emit_outputs(&record, &dir, args.format.into())?;

    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    for c in &record.checks {
        println!(
            "{} {}: statistic {:e}, reference {:e}; {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.statistic,
            c.reference,
            c.detail
        );
    }
    for p in &written {
        log::info!("wrote {}", p.display());
    }
    println!(
        "{} `{}` in {:.2}s, {}/{} checks passed",
        kind,
        cfg.name,
        record.wall_time_secs,
        record.checks.iter().filter(|c| c.passed).count(),
        record.checks.len()
    );
    Ok(if record.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}
