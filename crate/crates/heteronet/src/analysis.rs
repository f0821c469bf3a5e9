//! Monte-Carlo estimation of the Markov switching process on a realized
//! network, and the node/network classification built on top of it.
//!
//! The exit measure at a saddle `xi_j` is realized as the uniform measure on
//! a small sphere in the unstable coordinates (radius `delta`); pushing each
//! sample forward with the deterministic flow and recording which node it
//! converges to estimates the switching probabilities to every target plus
//! an absorbing escape state. Targets are identified up to coordinate sign
//! changes, so `-xi_k` counts as `xi_k`.
//!
//! On top of the estimates sit the node classifiers (almost complete,
//! equable, exclusive, splitting order), the switching chain itself, the
//! extraction of the equable almost-complete subnetwork visited with
//! positive probability, and a bisection refiner that locates basin
//! boundaries on the unstable sphere together with the separating
//! equilibrium they lead to.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digraph::Digraph;
use crate::integrate::{
    drive_ode, IntegrateError, IntegratorConfig, NodeRef, Terminal, Trajectory,
};
use crate::realize::{EquilibriumInfo, RealizeError, RealizedSystem, SCHEMA_VERSION};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("vertex {0} has no outgoing edges (sink)")]
    SinkVertex(usize),
    #[error("need at least one sample")]
    NoSamples,
    #[error("estimates must cover every vertex exactly once; missing {0}")]
    MissingEstimate(usize),
    #[error("vertex {vertex} has unresolved fraction {fraction:.4} above the 1% assembly limit")]
    UnresolvedTooHigh { vertex: usize, fraction: f64 },
    #[error("recurrent part of the filtered network is empty")]
    EmptyRecurrentPart,
    #[error("chain start state {0} out of range")]
    BadChainStart(usize),
    #[error("targets {a} and {b} must be distinct outgoing vertices of {j}")]
    BadTargets { j: usize, a: usize, b: usize },
    #[error(
        "bisection endpoints do not bracket distinct basins: axis directions gave {0} and {1}"
    )]
    BisectionEndpoints(String, String),
    #[error("bisection hit an unexpected basin: vertex {0}")]
    UnexpectedBasin(usize),
    #[error("boundary trajectory approaches no separating equilibrium")]
    NoSeparatingNode,
    #[error(transparent)]
    Realize(#[from] RealizeError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Where a pushed-forward sample ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum OmegaOutcome {
    /// Converged to the axis node of this vertex.
    Node { vertex: usize },
    /// Left the domain or converged to an equilibrium outside the network.
    Escape,
    /// Ran out of time, or converged to a separating node (basin boundary).
    Unresolved,
}

/// Points `xi_j + delta u` with `u` uniform on the unit sphere of the
/// unstable coordinates `O_j`.
///
/// For a one-dimensional unstable space the 0-sphere is `{+1, -1}`; samples
/// alternate signs deterministically. Seeded and reproducible.
pub fn sample_unstable_sphere(
    sys: &RealizedSystem,
    j: usize,
    delta: f64,
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let out_set = sys.out_set(j);
    if out_set.is_empty() {
        return Err(AnalysisError::SinkVertex(j));
    }
    if m == 0 {
        return Err(AnalysisError::NoSamples);
    }
    let n = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(m);
    for idx in 0..m {
        let mut x = vec![0.0; n];
        x[j] = 1.0;
        if out_set.len() == 1 {
            let sign = if idx % 2 == 0 { 1.0 } else { -1.0 };
            x[out_set[0]] = sign * delta;
        } else {
            loop {
                let draws: Vec<f64> = out_set
                    .iter()
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                let norm = draws.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    for (&k, &d) in out_set.iter().zip(&draws) {
                        x[k] = delta * d / norm;
                    }
                    break;
                }
            }
        }
        samples.push(x);
    }
    Ok(samples)
}

fn map_terminal(terminal: &Terminal) -> OmegaOutcome {
    match terminal {
        Terminal::ConvergedToNode {
            node: NodeRef::Axis { vertex },
        } => OmegaOutcome::Node { vertex: *vertex },
        // Separating nodes sit on basin boundaries; a sample landing there
        // is a measure-zero event and stays unassigned.
        Terminal::ConvergedToNode {
            node: NodeRef::Separating { .. },
        } => OmegaOutcome::Unresolved,
        Terminal::ConvergedToNode {
            node: NodeRef::Origin,
        } => OmegaOutcome::Escape,
        Terminal::MaxTime => OmegaOutcome::Unresolved,
        Terminal::LeftDomain => OmegaOutcome::Escape,
    }
}

/// Integrate from `x0` and report the node whose basin it lands in.
pub fn omega_node(sys: &RealizedSystem, x0: &[f64], cfg: &IntegratorConfig) -> OmegaOutcome {
    match drive_ode(sys, x0, cfg, |_, _| {}) {
        Ok(terminal) => map_terminal(&terminal),
        Err(_) => OmegaOutcome::Escape,
    }
}

/// Per-sample record kept alongside the outcome: the closest approach to
/// every axis node (under the sign identification) over the whole
/// trajectory, for the exclusivity certificate.
#[derive(Debug, Clone)]
pub struct TraceSummary {
    pub outcome: OmegaOutcome,
    pub min_node_dist: Vec<f64>,
}

fn omega_node_traced(sys: &RealizedSystem, x0: &[f64], cfg: &IntegratorConfig) -> TraceSummary {
    let n = sys.dim();
    let mut min_d2 = vec![f64::INFINITY; n];
    let driven = drive_ode(sys, x0, cfg, |_, x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        for (node, slot) in min_d2.iter_mut().enumerate() {
            // |abs(x) - e_node|^2 expands to r^2 - 2|x_node| + 1.
            let d2 = r2 - 2.0 * x[node].abs() + 1.0;
            if d2 < *slot {
                *slot = d2;
            }
        }
    });
    let outcome = match driven {
        Ok(terminal) => map_terminal(&terminal),
        Err(_) => OmegaOutcome::Escape,
    };
    TraceSummary {
        outcome,
        min_node_dist: min_d2.iter().map(|d| d.max(0.0).sqrt()).collect(),
    }
}

/// Monte-Carlo switching estimate out of one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub source: usize,
    /// Samples converging to each target vertex.
    pub counts: BTreeMap<usize, u64>,
    pub escape_count: u64,
    pub unresolved_count: u64,
    pub total: u64,
}

impl TransitionEstimate {
    pub fn count(&self, target: usize) -> u64 {
        self.counts.get(&target).copied().unwrap_or(0)
    }

    pub fn probability(&self, target: usize) -> f64 {
        self.count(target) as f64 / self.total as f64
    }

    /// Binomial standard error of the estimated probability.
    pub fn std_error(&self, target: usize) -> f64 {
        let p = self.probability(target);
        (p * (1.0 - p) / self.total as f64).sqrt()
    }

    pub fn escape_fraction(&self) -> f64 {
        self.escape_count as f64 / self.total as f64
    }

    pub fn unresolved_fraction(&self) -> f64 {
        self.unresolved_count as f64 / self.total as f64
    }

    /// Escape plus unresolved: the mass not certified to stay in the network.
    pub fn leak_fraction(&self) -> f64 {
        (self.escape_count + self.unresolved_count) as f64 / self.total as f64
    }

    fn accumulate(source: usize, outcomes: impl Iterator<Item = OmegaOutcome>) -> Self {
        let mut est = TransitionEstimate {
            source,
            counts: BTreeMap::new(),
            escape_count: 0,
            unresolved_count: 0,
            total: 0,
        };
        for outcome in outcomes {
            est.total += 1;
            match outcome {
                OmegaOutcome::Node { vertex } => *est.counts.entry(vertex).or_insert(0) += 1,
                OmegaOutcome::Escape => est.escape_count += 1,
                OmegaOutcome::Unresolved => est.unresolved_count += 1,
            }
        }
        est
    }
}

/// Push `m` unstable-sphere samples of node `j` through the flow; samples
/// integrate in parallel, and the reduction is order-independent, so a fixed
/// seed gives identical counts regardless of scheduling.
pub fn estimate_transitions(
    sys: &RealizedSystem,
    j: usize,
    m: usize,
    delta: f64,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<TransitionEstimate, AnalysisError> {
    let (estimate, _) = estimate_transitions_traced(sys, j, m, delta, cfg, seed)?;
    Ok(estimate)
}

/// As [`estimate_transitions`], keeping the per-sample trace summaries the
/// exclusivity classifier needs.
pub fn estimate_transitions_traced(
    sys: &RealizedSystem,
    j: usize,
    m: usize,
    delta: f64,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<(TransitionEstimate, Vec<TraceSummary>), AnalysisError> {
    let samples = sample_unstable_sphere(sys, j, delta, m, seed)?;
    let traces: Vec<TraceSummary> = samples
        .par_iter()
        .map(|x0| omega_node_traced(sys, x0, cfg))
        .collect();
    let estimate = TransitionEstimate::accumulate(j, traces.iter().map(|t| t.outcome));
    Ok((estimate, traces))
}

/// State of the switching chain: a network node or the absorbing escape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum ChainState {
    Node { vertex: usize },
    Escape,
}

/// Row-stochastic switching chain over the network nodes plus an absorbing
/// escape state (last row/column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingChain {
    /// Node labels followed by `"escape"`.
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl SwitchingChain {
    /// Number of network nodes (excludes the escape state).
    pub fn node_count(&self) -> usize {
        self.labels.len() - 1
    }

    /// Assemble from per-node estimates. Unresolved samples fold into the
    /// escape column (they are not certified transitions); any node with
    /// unresolved fraction above 1% refuses assembly.
    pub fn from_estimates(
        graph: &Digraph,
        estimates: &[TransitionEstimate],
    ) -> Result<Self, AnalysisError> {
        let n = graph.vertex_count();
        let mut by_source: Vec<Option<&TransitionEstimate>> = vec![None; n];
        for est in estimates {
            by_source[est.source] = Some(est);
        }
        let mut matrix = vec![vec![0.0; n + 1]; n + 1];
        for v in 0..n {
            let est = by_source[v].ok_or(AnalysisError::MissingEstimate(v))?;
            if est.unresolved_fraction() > 0.01 {
                return Err(AnalysisError::UnresolvedTooHigh {
                    vertex: v,
                    fraction: est.unresolved_fraction(),
                });
            }
            for (&target, &count) in &est.counts {
                matrix[v][target] = count as f64 / est.total as f64;
            }
            matrix[v][n] = (est.escape_count + est.unresolved_count) as f64 / est.total as f64;
        }
        matrix[n][n] = 1.0;
        let mut labels: Vec<String> = graph.labels().to_vec();
        labels.push("escape".to_string());
        Ok(SwitchingChain { labels, matrix })
    }

    /// Maximum deviation of any row sum from 1.
    pub fn row_sum_defect(&self) -> f64 {
        self.matrix
            .iter()
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Estimate every node and assemble the chain.
pub fn build_switching_chain(
    sys: &RealizedSystem,
    m: usize,
    delta: f64,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<(SwitchingChain, Vec<TransitionEstimate>), AnalysisError> {
    let estimates: Vec<TransitionEstimate> = (0..sys.dim())
        .map(|j| estimate_transitions(sys, j, m, delta, cfg, derive_seed(seed, j as u64)))
        .collect::<Result<_, _>>()?;
    let chain = SwitchingChain::from_estimates(sys.graph(), &estimates)?;
    Ok((chain, estimates))
}

/// One seeded realization of the chain: `steps` states starting at `start`.
/// Once escape is entered it repeats forever.
pub fn simulate_chain(
    chain: &SwitchingChain,
    start: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<ChainState>, AnalysisError> {
    let n = chain.node_count();
    if start >= n {
        return Err(AnalysisError::BadChainStart(start));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = start;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(if current == n {
            ChainState::Escape
        } else {
            ChainState::Node { vertex: current }
        });
        if current == n {
            continue;
        }
        let u: f64 = rng.gen();
        let row = &chain.matrix[current];
        let mut acc = 0.0;
        let mut next = n; // any residual probability mass falls to escape
        for (k, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = k;
                break;
            }
        }
        current = next;
    }
    Ok(out)
}

/// Thresholds separating "statistically zero" from "positive measure".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyThresholds {
    /// Minimum estimated probability for a connection to count as
    /// positive-measure.
    pub p_min: f64,
    /// Maximum escape+unresolved fraction for an almost-complete verdict.
    pub eps_escape: f64,
    /// Minimum clearance from third nodes for an exclusivity certificate.
    pub r_excl: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            p_min: 0.01,
            eps_escape: 0.005,
            r_excl: 0.1,
        }
    }
}

/// The equable almost-complete subnetwork supported by the sampled measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquableCore {
    /// Original vertex indices retained, sorted.
    pub vertices: Vec<usize>,
    /// Retained edges in original vertex indices.
    pub edges: Vec<(usize, usize)>,
    /// The subnetwork graph (labels carried over from the input graph).
    pub graph: Digraph,
}

/// Keep connections with estimated probability at least `p_min`, then
/// restrict to the recurrent part: the largest strongly connected component
/// without outgoing filtered edges. Noise-level connections and transient
/// nodes drop out; what remains is the subnetwork the switching process
/// explores with positive probability.
pub fn equable_core(
    sys: &RealizedSystem,
    estimates: &[TransitionEstimate],
    thresholds: &ClassifyThresholds,
) -> Result<EquableCore, AnalysisError> {
    let n = sys.dim();
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for est in estimates {
        for (&target, _) in &est.counts {
            if est.probability(target) >= thresholds.p_min {
                kept.push((est.source, target));
            }
        }
    }
    kept.sort_unstable();
    kept.dedup();

    let sccs = strongly_connected_components(n, &kept);
    let mut comp_of = vec![usize::MAX; n];
    for (c, comp) in sccs.iter().enumerate() {
        for &v in comp {
            comp_of[v] = c;
        }
    }
    // Sink components (no filtered edge leaving) of size >= 2 are the
    // recurrent candidates; there are no self-loops, so singletons cannot
    // sustain the chain.
    let mut best: Option<&Vec<usize>> = None;
    for (c, comp) in sccs.iter().enumerate() {
        if comp.len() < 2 {
            continue;
        }
        let is_sink = kept
            .iter()
            .all(|&(u, v)| comp_of[u] != c || comp_of[v] == c);
        if is_sink && best.map_or(true, |b| comp.len() > b.len()) {
            best = Some(comp);
        }
    }
    let Some(core) = best else {
        return Err(AnalysisError::EmptyRecurrentPart);
    };
    let mut vertices = core.clone();
    vertices.sort_unstable();
    let edges: Vec<(usize, usize)> = kept
        .iter()
        .copied()
        .filter(|&(u, v)| vertices.contains(&u) && vertices.contains(&v))
        .collect();
    let relabel: BTreeMap<usize, usize> = vertices
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();
    let local_edges: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(u, v)| (relabel[&u], relabel[&v]))
        .collect();
    let labels: Vec<String> = vertices
        .iter()
        .map(|&v| sys.graph().label(v).to_string())
        .collect();
    let graph = Digraph::with_labels(labels, &local_edges).expect("core graph is well-formed");
    Ok(EquableCore {
        vertices,
        edges,
        graph,
    })
}

/// Tarjan-style SCC decomposition (iterative Kosaraju, small graphs).
fn strongly_connected_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for &(u, v) in edges {
        fwd[u].push(v);
        bwd[v].push(u);
    }
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        // Post-order DFS with explicit stack.
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < fwd[u].len() {
                let v = fwd[u][*next];
                *next += 1;
                if !seen[v] {
                    seen[v] = true;
                    stack.push((v, 0));
                }
            } else {
                order.push(u);
                stack.pop();
            }
        }
    }
    let mut comp = Vec::new();
    let mut assigned = vec![false; n];
    for &start in order.iter().rev() {
        if assigned[start] {
            continue;
        }
        let mut members = vec![start];
        assigned[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &v in &bwd[u] {
                if !assigned[v] {
                    assigned[v] = true;
                    members.push(v);
                    stack.push(v);
                }
            }
        }
        comp.push(members);
    }
    comp
}

/// Per-node verdicts derived from an estimate and its trace summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeClassification {
    pub node: usize,
    pub label: String,
    pub unstable_dim: usize,
    /// Escape plus unresolved mass stays below `eps_escape`.
    pub almost_complete: bool,
    /// The escape+unresolved fraction backing the verdict.
    pub escape_fraction: f64,
    /// Every graph-prescribed target receives at least `p_min` of the
    /// measure. A graph edge whose sampled share is statistically zero
    /// (a lower-dimensional connection) breaks equability.
    pub equable: bool,
    pub target_fractions: BTreeMap<usize, f64>,
    /// Monte-Carlo certificate: no sampled connecting trajectory passes
    /// within `r_excl` of a third node.
    pub exclusive: bool,
    /// Smallest observed clearance from third nodes, if any third node
    /// exists.
    pub min_clearance: Option<f64>,
    pub splitting_order: Option<usize>,
}

/// Classify a node from its estimate and sampled trajectories.
pub fn classify_node(
    sys: &RealizedSystem,
    j: usize,
    estimate: &TransitionEstimate,
    traces: &[TraceSummary],
    thresholds: &ClassifyThresholds,
) -> NodeClassification {
    let out_set = sys.out_set(j);
    let leak = estimate.leak_fraction();
    let mut target_fractions = BTreeMap::new();
    for &k in &out_set {
        target_fractions.insert(k, estimate.probability(k));
    }
    for (&k, _) in &estimate.counts {
        target_fractions
            .entry(k)
            .or_insert_with(|| estimate.probability(k));
    }
    let equable = out_set
        .iter()
        .all(|&k| estimate.probability(k) >= thresholds.p_min);

    let mut min_clearance: Option<f64> = None;
    for trace in traces {
        let OmegaOutcome::Node { vertex: target } = trace.outcome else {
            continue;
        };
        for (other, &d) in trace.min_node_dist.iter().enumerate() {
            if other == j || other == target {
                continue;
            }
            min_clearance = Some(min_clearance.map_or(d, |c: f64| c.min(d)));
        }
    }
    let exclusive = min_clearance.map_or(true, |c| c > thresholds.r_excl);

    NodeClassification {
        node: j,
        label: sys.graph().label(j).to_string(),
        unstable_dim: out_set.len(),
        almost_complete: leak <= thresholds.eps_escape,
        escape_fraction: leak,
        equable,
        target_fractions,
        exclusive,
        min_clearance,
        splitting_order: sys.graph().splitting_vertices().get(&j).copied(),
    }
}

/// Result of refining a basin boundary on the unstable sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatrixResult {
    /// Unit direction on the unstable sphere at the boundary (full
    /// dimension; zero outside the unstable coordinates).
    pub direction: Vec<f64>,
    /// Boundary angle within the (target_a, target_b) coordinate plane.
    pub angle: f64,
    /// The separating equilibrium the boundary trajectory approaches.
    pub limit: EquilibriumInfo,
}

const SEPARATRIX_DELTA: f64 = 1e-3;
const SEPARATRIX_ANGLE_TOL: f64 = 1e-10;
const SEPARATRIX_MATCH_TOL: f64 = 1e-6;

/// Bisect on the unstable sphere of `xi_j` between the basins of two
/// targets and identify the separating equilibrium on the boundary.
///
/// Shots start on the axis directions (which always lie in their own
/// target's basin for an eligible system), bisect the connecting arc to an
/// angular tolerance of 1e-10, then follow the boundary trajectory to its
/// closest approach to a separating equilibrium and polish that point with
/// Newton iteration before matching it against the known list.
pub fn separatrix_refine(
    sys: &RealizedSystem,
    j: usize,
    target_a: usize,
    target_b: usize,
    cfg: &IntegratorConfig,
) -> Result<SeparatrixResult, AnalysisError> {
    let out_set = sys.out_set(j);
    if target_a == target_b || !out_set.contains(&target_a) || !out_set.contains(&target_b) {
        return Err(AnalysisError::BadTargets {
            j,
            a: target_a,
            b: target_b,
        });
    }
    let n = sys.dim();
    let shot = |theta: f64| -> OmegaOutcome {
        let mut x0 = vec![0.0; n];
        x0[j] = 1.0;
        x0[target_a] = SEPARATRIX_DELTA * theta.cos();
        x0[target_b] = SEPARATRIX_DELTA * theta.sin();
        omega_node(sys, &x0, cfg)
    };
    let mut lo = 0.0_f64;
    let mut hi = std::f64::consts::FRAC_PI_2;
    let at_lo = shot(lo);
    let at_hi = shot(hi);
    let (want_lo, want_hi) = (
        OmegaOutcome::Node { vertex: target_a },
        OmegaOutcome::Node { vertex: target_b },
    );
    if at_lo != want_lo || at_hi != want_hi {
        return Err(AnalysisError::BisectionEndpoints(
            format!("{at_lo:?}"),
            format!("{at_hi:?}"),
        ));
    }
    let mut boundary = 0.5 * (lo + hi);
    while hi - lo > SEPARATRIX_ANGLE_TOL {
        let mid = 0.5 * (lo + hi);
        boundary = mid;
        match shot(mid) {
            outcome if outcome == want_lo => lo = mid,
            outcome if outcome == want_hi => hi = mid,
            OmegaOutcome::Node { vertex } => return Err(AnalysisError::UnexpectedBasin(vertex)),
            // Landed on the boundary itself (converged to a separating node
            // or timed out exactly between basins): mid is our answer.
            _ => break,
        }
    }

    let candidates = sys.separating_equilibria(j)?;
    if candidates.is_empty() {
        return Err(AnalysisError::NoSeparatingNode);
    }
    let mut direction = vec![0.0; n];
    direction[target_a] = boundary.cos();
    direction[target_b] = boundary.sin();
    let mut x0 = vec![0.0; n];
    x0[j] = 1.0;
    for k in 0..n {
        x0[k] += SEPARATRIX_DELTA * direction[k];
    }
    // Track the closest approach to any candidate along the boundary shot.
    let mut best: Option<(f64, Vec<f64>)> = None;
    let _ = drive_ode(sys, &x0, cfg, |_, x| {
        for cand in &candidates {
            let d2: f64 = x
                .iter()
                .zip(&cand.location)
                .map(|(xi, li)| {
                    let d = xi.abs() - li;
                    d * d
                })
                .sum();
            if best.as_ref().map_or(true, |(bd, _)| d2 < *bd) {
                best = Some((d2, x.to_vec()));
            }
        }
    })?;
    let Some((d2, approach)) = best else {
        return Err(AnalysisError::NoSeparatingNode);
    };
    if d2.sqrt() > cfg.node_radius {
        return Err(AnalysisError::NoSeparatingNode);
    }
    let polished = sys.newton_refine(&approach, 1e-12, 60)?;
    let rep: Vec<f64> = polished.iter().map(|v| v.abs()).collect();
    let limit = candidates
        .into_iter()
        .find(|cand| {
            let d: f64 = rep
                .iter()
                .zip(&cand.location)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d <= SEPARATRIX_MATCH_TOL
        })
        .ok_or(AnalysisError::NoSeparatingNode)?;
    Ok(SeparatrixResult {
        direction,
        angle: boundary,
        limit,
    })
}

/// Node-visit itinerary extracted from a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    pub entries: Vec<ItineraryEntry>,
    pub terminal: ItineraryTerminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItineraryEntry {
    pub node: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "terminal", rename_all = "kebab-case")]
pub enum ItineraryTerminal {
    Node { vertex: usize },
    Escape,
    Unresolved,
}

/// Record each entry of the trajectory into the `node_radius` ball of an
/// axis node (sign-identified); consecutive repeats collapse.
pub fn extract_itinerary(sys: &RealizedSystem, traj: &Trajectory, node_radius: f64) -> Itinerary {
    let n = sys.dim();
    let mut entries: Vec<ItineraryEntry> = Vec::new();
    let mut last: Option<usize> = None;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let mut hit = None;
        for node in 0..n {
            let d2 = (r2 - 2.0 * x[node].abs() + 1.0).max(0.0);
            if d2.sqrt() <= node_radius {
                hit = Some(node);
                break;
            }
        }
        if let Some(node) = hit {
            if last != Some(node) {
                entries.push(ItineraryEntry { node, time: *t });
                last = Some(node);
            }
        }
    }
    let terminal = match &traj.terminal {
        Terminal::ConvergedToNode {
            node: NodeRef::Axis { vertex },
        } => ItineraryTerminal::Node { vertex: *vertex },
        Terminal::ConvergedToNode {
            node: NodeRef::Origin,
        }
        | Terminal::LeftDomain => ItineraryTerminal::Escape,
        _ => ItineraryTerminal::Unresolved,
    };
    Itinerary { entries, terminal }
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStat {
    pub count: u64,
    pub probability: f64,
    pub std_error: f64,
}

/// Label-keyed view of a [`TransitionEstimate`] for the report JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub source: String,
    pub total: u64,
    pub targets: BTreeMap<String, TargetStat>,
    pub escape: TargetStat,
    pub unresolved_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub estimate: TransitionReport,
    pub classification: NodeClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaStar {
    pub vertices: Vec<String>,
    pub edges: Vec<(String, String)>,
}

/// Full output of the Markov stage: estimates, classifications, the chain
/// and the equable core, with every threshold and seed recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub samples_per_node: u64,
    pub delta: f64,
    pub master_seed: u64,
    pub thresholds: ClassifyThresholds,
    pub integrator: IntegratorConfig,
    pub nodes: Vec<NodeReport>,
    pub chain: SwitchingChain,
    pub sigma_star: SigmaStar,
    pub notes: Vec<String>,
}

fn transition_report(sys: &RealizedSystem, est: &TransitionEstimate) -> TransitionReport {
    let mut targets = BTreeMap::new();
    for (&k, &count) in &est.counts {
        targets.insert(
            sys.graph().label(k).to_string(),
            TargetStat {
                count,
                probability: est.probability(k),
                std_error: est.std_error(k),
            },
        );
    }
    // Graph-prescribed targets with zero observed mass still show up.
    for &k in &sys.out_set(est.source) {
        targets
            .entry(sys.graph().label(k).to_string())
            .or_insert(TargetStat {
                count: 0,
                probability: 0.0,
                std_error: 0.0,
            });
    }
    let e = est.escape_count as f64 / est.total as f64;
    TransitionReport {
        source: sys.graph().label(est.source).to_string(),
        total: est.total,
        targets,
        escape: TargetStat {
            count: est.escape_count,
            probability: e,
            std_error: (e * (1.0 - e) / est.total as f64).sqrt(),
        },
        unresolved_count: est.unresolved_count,
    }
}

/// Run the whole Markov stage: per-node estimates (seeded per node from the
/// master seed), chain assembly, classification, and equable-core
/// extraction.
pub fn run_markov_analysis(
    sys: &RealizedSystem,
    m: usize,
    delta: f64,
    cfg: &IntegratorConfig,
    thresholds: &ClassifyThresholds,
    master_seed: u64,
) -> Result<ClassificationReport, AnalysisError> {
    let n = sys.dim();
    let mut estimates = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for j in 0..n {
        let (est, traces) =
            estimate_transitions_traced(sys, j, m, delta, cfg, derive_seed(master_seed, j as u64))?;
        let classification = classify_node(sys, j, &est, &traces, thresholds);
        nodes.push(NodeReport {
            estimate: transition_report(sys, &est),
            classification,
        });
        estimates.push(est);
    }
    let chain = SwitchingChain::from_estimates(sys.graph(), &estimates)?;
    let core = equable_core(sys, &estimates, thresholds)?;
    let sigma_star = SigmaStar {
        vertices: core
            .vertices
            .iter()
            .map(|&v| sys.graph().label(v).to_string())
            .collect(),
        edges: core
            .edges
            .iter()
            .map(|&(u, v)| {
                (
                    sys.graph().label(u).to_string(),
                    sys.graph().label(v).to_string(),
                )
            })
            .collect(),
    };
    let mut notes = vec![
        "equability is operationalized measure-theoretically: every graph-prescribed target \
         must receive at least p_min of the uniform sphere measure pushed through the flow"
            .to_string(),
        "exit measure: uniform on the delta-sphere of the unstable coordinates at each node"
            .to_string(),
    ];
    if m < 100 {
        notes.push(format!(
            "low sample count (m = {m}): error bars are wide; treat verdicts as indicative"
        ));
    }
    if sys.is_forced() {
        notes.push(
            "system was realized with force despite failing the gate: construction guarantees \
             are void and verdicts describe the sampled measure only"
                .to_string(),
        );
    }
    Ok(ClassificationReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        samples_per_node: m as u64,
        delta,
        master_seed,
        thresholds: *thresholds,
        integrator: *cfg,
        nodes,
        chain,
        sigma_star,
        notes,
    })
}
