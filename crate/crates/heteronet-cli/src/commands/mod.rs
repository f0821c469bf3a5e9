pub mod analyze;
pub mod markov;
pub mod realize;
pub mod report;
pub mod simulate;
pub mod verify;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "heteronet",
    version,
    about = "Realize directed graphs as robust heteroclinic networks and analyze the induced switching dynamics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Check the structural hypotheses (transitivity; no 1-/2-cycles or
    /// delta-cliques) and report splitting vertices and the cycle
    /// decomposition. Exit 0 if eligible, 2 if not.
    Analyze(AnalyzeArgs),
    /// Build the system manifest for a graph: field parameters, gate
    /// verdict, equilibria with eigenvalues, absorbing annulus.
    Realize(RealizeArgs),
    /// Integrate one trajectory (RK4, or stochastic Heun with --sde) and
    /// write it as CSV with a terminal-status sidecar.
    Simulate(SimulateArgs),
    /// Estimate the Markov switching process by pushing unstable-sphere
    /// samples through the flow; classify every node and extract the
    /// equable almost-complete subnetwork.
    Markov(MarkovArgs),
    /// Pretty-print a system manifest (and optionally a classification
    /// report).
    Report(ReportArgs),
    /// Re-run a recorded command and byte-compare its outputs.
    Verify(VerifyArgs),
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Graph file: JSON document or `src -> dst` edge list.
    pub graph: PathBuf,
    /// Write the structural report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Export the graph in DOT format.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Args)]
pub struct RealizeArgs {
    /// Graph file: JSON document or `src -> dst` edge list.
    pub graph: PathBuf,
    /// Expansion rate, 0 < epsilon < 1.
    #[arg(long, default_value_t = 0.02)]
    pub epsilon: f64,
    /// Transverse contraction rate, eta > 0.
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    /// Realize even if the gate rejects the graph (guarantees void).
    #[arg(long)]
    pub force: bool,
    /// Output manifest path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// System manifest from `realize`.
    pub system: PathBuf,
    /// Comma-separated initial state, e.g. "0,1,0.001,0".
    #[arg(long, conflicts_with = "node")]
    pub x0: Option<String>,
    /// Start on the unstable sphere of this node (vertex label).
    #[arg(long)]
    pub node: Option<String>,
    /// Radius of the unstable-sphere displacement used with --node.
    #[arg(long, default_value_t = 1e-3)]
    pub perturb: f64,
    /// Noise amplitude alpha; switches to the stochastic Heun scheme.
    #[arg(long)]
    pub sde: Option<f64>,
    /// Step size (defaults: 0.01 for ODE, 0.2 for SDE).
    #[arg(long)]
    pub step: Option<f64>,
    /// Integration horizon in time units.
    #[arg(long, default_value_t = 1000.0)]
    pub time: f64,
    /// Master seed (noise stream and --node direction).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write states satisfying this predicate (e.g. "x1^2<0.1") to
    /// <out stem>.section.csv.
    #[arg(long)]
    pub section: Option<String>,
    /// Trajectory CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct MarkovArgs {
    /// System manifest from `realize`.
    pub system: PathBuf,
    /// Monte-Carlo samples per node.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Unstable-sphere radius.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    /// Master seed; per-node streams derive from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Minimum probability for a positive-measure connection.
    #[arg(long, default_value_t = 0.01)]
    pub p_min: f64,
    /// Maximum escape+unresolved fraction for almost-completeness.
    #[arg(long, default_value_t = 0.005)]
    pub eps_escape: f64,
    /// Exclusivity clearance radius.
    #[arg(long, default_value_t = 0.1)]
    pub r_excl: f64,
    /// Integrator step for the sample pushforward.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Per-sample integration horizon.
    #[arg(long, default_value_t = 2000.0)]
    pub max_time: f64,
    /// Classification report path (the chain matrix lands next to it).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// System manifest from `realize`.
    pub system: PathBuf,
    /// Classification report from `markov` to summarize alongside.
    #[arg(long)]
    pub classification: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Run manifest (`<out>.run.json`) written by a previous command.
    pub manifest: PathBuf,
}
