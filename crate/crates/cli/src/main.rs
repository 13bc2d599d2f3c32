use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use foliation_cli::{run, Command, Overrides};

#[derive(Parser)]
#[command(name = "foliation-lab", version, about = "Experiments on singular holomorphic foliations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Foliated form, identity check and divisor split
    Inspect(Common),
    /// Locate and classify singular points
    Classify(Common),
    /// Blow-up reduction tree and divisor graph
    Reduce(Common),
    /// Trace contracting trajectories and draw a portrait
    Trace(Common),
    /// Holonomy maps and derivative checks
    Holonomy(Common),
    /// Dulac and generalized Dulac transforms
    Dulac(Common),
    /// Renormalization pseudogroup experiments
    Renorm(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Residual tolerance for singular points, integrator rtol elsewhere
    #[arg(long)]
    tol: Option<f64>,
    /// Blow-up depth limit
    #[arg(long)]
    max_depth: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("FOLIATION_LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Ignored if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let (cmd, args) = match cli.command {
        Cmd::Inspect(a) => (Command::Inspect, a),
        Cmd::Classify(a) => (Command::Classify, a),
        Cmd::Reduce(a) => (Command::Reduce, a),
        Cmd::Trace(a) => (Command::Trace, a),
        Cmd::Holonomy(a) => (Command::Holonomy, a),
        Cmd::Dulac(a) => (Command::Dulac, a),
        Cmd::Renorm(a) => (Command::Renorm, a),
    };
    let ov = Overrides { seed: args.seed, tol: args.tol, max_depth: args.max_depth };
    let code = run(cmd, &args.scenario, &args.out, &ov);
    ExitCode::from(code as u8)
}
