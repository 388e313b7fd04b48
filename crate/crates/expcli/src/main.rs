use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use largen_exp::experiments::{chaos_rate, commuting_diagram, kappa_c, mass_curve, sample_gff, stationary_w2};
use largen_exp::{Config, Report, RunError};

#[derive(Parser)]
#[command(name = "largen", version, about = "Experiments on the spin O(N) model and its large-N limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coupling distance between the spin system and its mean-field companions.
    ChaosRate(Common),
    /// Gibbs-sampled covariance against the stationary Gaussian field.
    StationaryW2(Common),
    /// Self-consistent mass along a coupling grid.
    MassCurve(Common),
    /// Nearest-neighbour correlation along both limit orders.
    CommutingDiagram(Common),
    /// Critical coupling on Z^d.
    KappaC(Common),
    /// Exact samples of the finite-volume Gaussian field.
    SampleGff(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seeds.master`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 3 when any acceptance check fails.
    #[arg(long)]
    check: bool,
}

type Runner = fn(&Config) -> Result<Report, RunError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (runner, common): (Runner, Common) = match cli.command {
        Command::ChaosRate(c) => (chaos_rate::run, c),
        Command::StationaryW2(c) => (stationary_w2::run, c),
        Command::MassCurve(c) => (mass_curve::run, c),
        Command::CommutingDiagram(c) => (commuting_diagram::run, c),
        Command::KappaC(c) => (kappa_c::run, c),
        Command::SampleGff(c) => (sample_gff::run, c),
    };

    let mut cfg = match Config::load(&common.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = common.seed {
        cfg.seeds.master = Some(seed);
    }
    if let Some(out) = common.out {
        cfg.output.dir = Some(out);
    }

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    let report = match pool.install(|| runner(&cfg)) {
        Ok(r) => r,
        Err(RunError::Config(e)) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(1);
        }
    };

    println!("{} -> {}", report.experiment, report.out_dir.display());
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if common.check && !report.all_passed() {
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
