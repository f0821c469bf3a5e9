//! Construction and analysis of robust heteroclinic networks from directed graphs.
//!
//! The pipeline goes: check a digraph against the structural hypotheses
//! ([`digraph`]), synthesize the polynomial vector field that realizes it
//! ([`realize`]), integrate trajectories deterministically or with additive
//! noise ([`integrate`]), and estimate the induced Markov switching process
//! between saddles ([`analysis`]).

pub mod analysis;
pub mod digraph;
pub mod integrate;
pub mod realize;
pub mod seed;

pub use analysis::{
    build_switching_chain, classify_node, equable_core, estimate_transitions, omega_node,
    sample_unstable_sphere, separatrix_refine, simulate_chain, ClassifyThresholds,
    NodeClassification, OmegaOutcome, SwitchingChain, TransitionEstimate,
};
pub use digraph::{Digraph, DigraphError, GateReport};
pub use integrate::{
    integrate_ode, integrate_sde, section_crossings, IntegrateError, IntegratorConfig, NoiseConfig,
    Terminal, Trajectory,
};
pub use realize::{
    EquilibriumInfo, EquilibriumKind, RealizationParams, RealizeError, RealizedSystem,
    SystemManifest,
};

/// Configure the global thread pool used by the Monte-Carlo drivers.
///
/// `None` leaves rayon's default (one thread per core). Returns an error if a
/// pool was already installed, which is harmless to ignore.
pub fn init_threads(threads: Option<usize>) -> Result<(), rayon::ThreadPoolBuildError> {
    match threads {
        Some(t) if t > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global(),
        _ => Ok(()),
    }
}
