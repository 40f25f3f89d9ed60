use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sbmlab::report::Status;
use sbmlab::runner::write_artifacts;
use sbmlab::{exit, load_config, merge_reports, run_experiment, Kind, RunReport};

#[derive(Parser)]
#[command(name = "sbmlab", about = "Simulation and numerical checks for stable-branching super-Brownian motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Index of the first replica (for splitting a run across reports).
    #[arg(long)]
    first_replica: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with code 4 if any of the experiment's checks fail.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    Simulate(RunArgs),
    Duality(RunArgs),
    Tanaka(RunArgs),
    Moments(RunArgs),
    Jumps(RunArgs),
    Timechange(RunArgs),
    Stabletails(RunArgs),
    Criterion(RunArgs),
    Holder(RunArgs),
    Unbounded2d(RunArgs),
    /// Merge report.json files of one configuration into a new output directory.
    Merge {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        check: bool,
    },
}

fn print_summary(r: &RunReport) {
    println!(
        "{} config_hash={} replicas={} censoring={:.4} status={:?}",
        r.config.kind,
        r.config_hash,
        r.replicas.len(),
        r.censoring_rate,
        r.status
    );
    for d in &r.analysis.derived {
        println!("  {} = {}", d.name, d.value);
    }
    for c in &r.analysis.checks {
        println!("  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("  output: {}", r.config.out_dir.display());
}

fn finish(r: &RunReport, check: bool) -> ExitCode {
    print_summary(r);
    let code = if check && !r.all_checks_pass() {
        exit::CHECK_FAILED
    } else if r.status == Status::Degraded {
        exit::DEGRADED
    } else {
        exit::OK
    };
    ExitCode::from(code as u8)
}

fn run(kind: Kind, a: RunArgs) -> ExitCode {
    let mut cfg = match load_config(&a.config, Some(kind)) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(exit::VALIDATION as u8);
        }
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.replicas {
        cfg.replicas = r;
    }
    if let Some(f) = a.first_replica {
        cfg.first_replica = f;
    }
    if let Some(w) = a.workers {
        if w == 0 {
            eprintln!("invalid configuration: workers must be at least 1");
            return ExitCode::from(exit::VALIDATION as u8);
        }
        cfg.workers = w;
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    match run_experiment(&cfg) {
        Ok(r) => finish(&r, a.check),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::FAILURE as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (Kind::Simulate, a),
        Command::Duality(a) => (Kind::Duality, a),
        Command::Tanaka(a) => (Kind::Tanaka, a),
        Command::Moments(a) => (Kind::Moments, a),
        Command::Jumps(a) => (Kind::Jumps, a),
        Command::Timechange(a) => (Kind::Timechange, a),
        Command::Stabletails(a) => (Kind::Stabletails, a),
        Command::Criterion(a) => (Kind::Criterion, a),
        Command::Holder(a) => (Kind::Holder, a),
        Command::Unbounded2d(a) => (Kind::Unbounded2d, a),
        Command::Merge { reports, out, check } => {
            return match merge_reports(&reports).and_then(|mut r| {
                r.config.out_dir = out;
                write_artifacts(r)
            }) {
                Ok(r) => finish(&r, check),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(exit::FAILURE as u8)
                }
            };
        }
    };
    run(kind, args)
}
