use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use lattice_blockdiag::cli::{run, Overrides};
use lattice_blockdiag::flow::ConsistencyMode;

#[derive(Clone, Copy, ValueEnum)]
enum Consistency {
    Never,
    Final,
    EveryStep,
}

/// Block-diagonalize a lattice Hamiltonian described by a TOML config and
/// check the result by exact diagonalization.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Continue past steps whose unperturbed gap is below 1/2.
    #[arg(long)]
    force: bool,
    #[arg(long, value_enum)]
    check_consistency: Option<Consistency>,
    #[arg(long)]
    emit_csv: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Override the seed of the random potentials.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let consistency = args.check_consistency.map(|c| match c {
        Consistency::Never => ConsistencyMode::Never,
        Consistency::Final => ConsistencyMode::Final,
        Consistency::EveryStep => ConsistencyMode::EveryStep,
    });
    let ov = Overrides { force: args.force, consistency, csv: args.emit_csv, report: args.report, seed: args.seed };
    std::process::exit(run(&args.config, &ov));
}
