//! Simplex realization of a digraph as a polynomial vector field.
//!
//! Given a graph on `n` vertices with adjacency `A`, the field on `R^n` is
//!
//! ```text
//! x_j' = x_j F_j(x),    F_j(x) = 1 + sum_i [(eps + eta) A_ij - eta (1 - delta_ij) - 1] x_i^2
//! ```
//!
//! with `0 < eps < 1` and `eta > 0`. Each coordinate axis carries a saddle
//! `xi_j`; edges of the graph become saddle connections inside coordinate
//! planes. Because every `F_j` depends on squares only, the field is
//! equivariant under all `2^n` coordinate sign changes, which is what makes
//! the connections robust.
//!
//! This module exposes the analytic structure used to verify the
//! construction: the Jacobian, per-node eigenvalues, the invariant subspaces
//! `Omega_j` (outgoing coordinates) and `Q_j = Omega_j + <xi_j>`, the
//! absorbing-annulus bounds on `d|x|^2/dt`, the angle function `Phi_j` that
//! decays monotonically on `Q_j`, the potential `V_j` whose negative gradient
//! is the flow on `Omega_j`, and the extra "separating" equilibria that sit
//! on basin boundaries inside `Omega_j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digraph::{Digraph, GateReport};

#[derive(Debug, Error)]
pub enum RealizeError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("eta must be positive, got {0}")]
    BadEta(f64),
    #[error("graph fails the realization gate ({0}); pass force to construct anyway")]
    Ineligible(String),
    #[error("state dimension {got} does not match system dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("vertex index {index} out of range for system of dimension {n}")]
    BadVertex { index: usize, n: usize },
    #[error("state has mass outside the {subspace} subspace of vertex {vertex}")]
    SupportViolation {
        subspace: &'static str,
        vertex: usize,
    },
    #[error("state must be nonzero")]
    ZeroState,
    #[error("sign vector entries must be +1 or -1")]
    BadSigns,
    #[error("Newton refinement failed to reach residual {tol} (last residual {residual})")]
    NewtonStalled { tol: f64, residual: f64 },
    #[error("manifest schema version {0} is not supported")]
    BadSchema(u32),
}

/// Construction parameters: expansion rate `epsilon` and transverse
/// contraction rate `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizationParams {
    epsilon: f64,
    eta: f64,
}

impl RealizationParams {
    pub const DEFAULT_EPSILON: f64 = 0.02;
    pub const DEFAULT_ETA: f64 = 0.05;

    pub fn new(epsilon: f64, eta: f64) -> Result<Self, RealizeError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(RealizeError::BadEpsilon(epsilon));
        }
        if !(eta > 0.0) {
            return Err(RealizeError::BadEta(eta));
        }
        Ok(RealizationParams { epsilon, eta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

impl Default for RealizationParams {
    fn default() -> Self {
        RealizationParams {
            epsilon: Self::DEFAULT_EPSILON,
            eta: Self::DEFAULT_ETA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    Origin,
    AxisNode,
    SeparatingNode,
}

/// Stability of a separating equilibrium within its `Omega_j` subspace,
/// classified through the Hessian of the potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaStability {
    Minimum,
    Saddle,
    Repeller,
}

/// An equilibrium of the realized field, reported as its positive-orthant
/// representative (the `2^n` sign copies are identified).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumInfo {
    pub label: String,
    pub kind: EquilibriumKind,
    pub location: Vec<f64>,
    /// Indices of the nonzero coordinates.
    pub support: Vec<usize>,
    /// Real parts of the Jacobian eigenvalues at the equilibrium.
    pub eigenvalues: Vec<f64>,
    /// For separating nodes: character within the `Omega_j` it was found in.
    pub omega_stability: Option<OmegaStability>,
    /// True when the point came from the numerical fallback search rather
    /// than the closed form.
    pub numeric: bool,
}

/// Rate of change of `R = |x|^2` along the flow, together with the annulus
/// sandwich `2R(1 - R - eta R) <= dR/dt <= 2R(1 - R + eps R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusRate {
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// A digraph together with parameters, realized as the polynomial field.
///
/// Immutable after construction; evaluations are pure, so a system can be
/// shared freely across threads by the Monte-Carlo drivers.
#[derive(Debug, Clone)]
pub struct RealizedSystem {
    graph: Digraph,
    params: RealizationParams,
    gate: GateReport,
    forced: bool,
    /// coeff[i * n + j] = (eps + eta) A_ij - eta (1 - delta_ij) - 1, so that
    /// F_j(x) = 1 + sum_i coeff[i][j] x_i^2.
    coeff: Vec<f64>,
    /// Transposed copy (row j holds the coefficients of F_j) for the
    /// integrator hot path.
    coeff_t: Vec<f64>,
}

impl RealizedSystem {
    /// Realize an eligible graph. Fails if the gate rejects it.
    pub fn new(graph: Digraph, params: RealizationParams) -> Result<Self, RealizeError> {
        Self::build(graph, params, false)
    }

    /// Realize regardless of the gate verdict. The field is still defined,
    /// but every guarantee tied to the missing hypotheses is void; manifests
    /// carry `verified = false`.
    pub fn new_forced(graph: Digraph, params: RealizationParams) -> Result<Self, RealizeError> {
        Self::build(graph, params, true)
    }

    fn build(
        graph: Digraph,
        params: RealizationParams,
        forced: bool,
    ) -> Result<Self, RealizeError> {
        let gate = graph.realization_gate();
        if !gate.eligible && !forced {
            let mut reasons = Vec::new();
            if !gate.transitive {
                reasons.push("not transitive".to_string());
            }
            if !gate.two_cycles.is_empty() {
                reasons.push(format!("{} 2-cycle(s)", gate.two_cycles.len()));
            }
            if !gate.delta_cliques.is_empty() {
                reasons.push(format!("{} delta-clique(s)", gate.delta_cliques.len()));
            }
            return Err(RealizeError::Ineligible(reasons.join(", ")));
        }
        let n = graph.vertex_count();
        let (eps, eta) = (params.epsilon, params.eta);
        let mut coeff = vec![0.0; n * n];
        let mut coeff_t = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let a = if graph.has_edge(i, j) { 1.0 } else { 0.0 };
                let delta = if i == j { 1.0 } else { 0.0 };
                let c = (eps + eta) * a - eta * (1.0 - delta) - 1.0;
                coeff[i * n + j] = c;
                coeff_t[j * n + i] = c;
            }
        }
        Ok(RealizedSystem {
            graph,
            params,
            gate,
            forced,
            coeff,
            coeff_t,
        })
    }

    pub fn dim(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn params(&self) -> RealizationParams {
        self.params
    }

    pub fn gate(&self) -> &GateReport {
        &self.gate
    }

    pub fn is_forced(&self) -> bool {
        self.forced
    }

    /// True when the gate passed, so the construction's guarantees apply.
    pub fn is_verified(&self) -> bool {
        self.gate.eligible
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), RealizeError> {
        if x.len() != self.dim() {
            return Err(RealizeError::DimensionMismatch {
                got: x.len(),
                want: self.dim(),
            });
        }
        Ok(())
    }

    fn check_vertex(&self, j: usize) -> Result<(), RealizeError> {
        if j >= self.dim() {
            return Err(RealizeError::BadVertex {
                index: j,
                n: self.dim(),
            });
        }
        Ok(())
    }

    /// Evaluate the field into a caller-provided buffer (hot path: no
    /// allocation, no dimension checks beyond debug assertions).
    #[inline]
    pub fn vector_field_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        let mut stack = [0.0f64; 16];
        let mut heap;
        let sq: &mut [f64] = if n <= 16 {
            &mut stack[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for (s, &xi) in sq.iter_mut().zip(x) {
            *s = xi * xi;
        }
        for ((o, row), &xj) in out
            .iter_mut()
            .zip(self.coeff_t.chunks_exact(n))
            .zip(x.iter())
        {
            let mut fj = 1.0;
            for (&c, &s) in row.iter().zip(sq.iter()) {
                fj += c * s;
            }
            *o = xj * fj;
        }
    }

    /// Fixed-dimension evaluation; performs the same operations in the same
    /// order as [`Self::vector_field_into`] but fully unrolled, so results
    /// are bitwise identical.
    #[inline(always)]
    pub fn vector_field_fixed<const N: usize>(&self, x: &[f64; N], out: &mut [f64; N]) {
        debug_assert_eq!(self.dim(), N);
        let mut sq = [0.0f64; N];
        for i in 0..N {
            sq[i] = x[i] * x[i];
        }
        for j in 0..N {
            let row: &[f64; N] = self.coeff_t[j * N..j * N + N]
                .try_into()
                .expect("row has length N");
            let mut fj = 1.0;
            for i in 0..N {
                fj += row[i] * sq[i];
            }
            out[j] = x[j] * fj;
        }
    }

    /// The defining field `x_j F_j(x)`.
    pub fn vector_field(&self, x: &[f64]) -> Result<Vec<f64>, RealizeError> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim()];
        self.vector_field_into(x, &mut out);
        Ok(out)
    }

    /// Analytic Jacobian: `J_kl = delta_kl F_k(x) + 2 x_k x_l coeff[l][k]`.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, RealizeError> {
        self.check_dim(x)?;
        let n = self.dim();
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut fk = 1.0;
            for i in 0..n {
                fk += self.coeff[i * n + k] * x[i] * x[i];
            }
            for l in 0..n {
                let mut v = 2.0 * x[k] * x[l] * self.coeff[l * n + k];
                if k == l {
                    v += fk;
                }
                jac[(k, l)] = v;
            }
        }
        Ok(jac)
    }

    /// Unit-basis equilibrium `xi_j`.
    pub fn axis_node(&self, j: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        x[j] = 1.0;
        x
    }

    /// Outgoing index set `O_j = { k : A_jk = 1 }`.
    pub fn out_set(&self, j: usize) -> Vec<usize> {
        self.graph.out_neighbors(j)
    }

    /// Invariant subspaces attached to `xi_j`: the coordinates of `Omega_j`
    /// (the outgoing directions) and of `Q_j = Omega_j + <xi_j>`.
    pub fn out_subspaces(&self, j: usize) -> Result<(Vec<usize>, Vec<usize>), RealizeError> {
        self.check_vertex(j)?;
        let omega = self.out_set(j);
        let mut q = omega.clone();
        q.push(j);
        q.sort_unstable();
        Ok((omega, q))
    }

    /// Eigenvalue `F_k(xi_j)` of the linearization at `xi_j` in the `k`-th
    /// coordinate direction (`k != j`): `eps` if the edge `j -> k` exists,
    /// `-eta` otherwise. The radial eigenvalue is `-2`.
    fn axis_eigenvalue(&self, j: usize, k: usize) -> f64 {
        if k == j {
            -2.0
        } else if self.graph.has_edge(j, k) {
            self.params.epsilon
        } else {
            -self.params.eta
        }
    }

    /// Equilibrium report for the axis node `xi_j`. Eigenvalues are listed
    /// in coordinate order (entry `j` is the radial `-2`).
    pub fn node_eigenvalues(&self, j: usize) -> Result<EquilibriumInfo, RealizeError> {
        self.check_vertex(j)?;
        let eigenvalues = (0..self.dim())
            .map(|k| self.axis_eigenvalue(j, k))
            .collect();
        Ok(EquilibriumInfo {
            label: self.graph.label(j).to_string(),
            kind: EquilibriumKind::AxisNode,
            location: self.axis_node(j),
            support: vec![j],
            eigenvalues,
            omega_stability: None,
            numeric: false,
        })
    }

    /// The origin: a repeller (linearization is the identity), never counted
    /// among the network nodes.
    pub fn origin_info(&self) -> EquilibriumInfo {
        EquilibriumInfo {
            label: "origin".to_string(),
            kind: EquilibriumKind::Origin,
            location: vec![0.0; self.dim()],
            support: Vec::new(),
            eigenvalues: vec![1.0; self.dim()],
            omega_stability: None,
            numeric: false,
        }
    }

    /// `d|x|^2/dt` along the flow together with its annulus bounds.
    pub fn radius_rate_bounds(&self, x: &[f64]) -> Result<RadiusRate, RealizeError> {
        self.check_dim(x)?;
        let f = self.vector_field(x)?;
        let rate = 2.0 * x.iter().zip(&f).map(|(xi, fi)| xi * fi).sum::<f64>();
        let r: f64 = x.iter().map(|xi| xi * xi).sum();
        Ok(RadiusRate {
            rate,
            lower: 2.0 * r * (1.0 - r - self.params.eta * r),
            upper: 2.0 * r * (1.0 - r + self.params.epsilon * r),
        })
    }

    /// The absorbing annulus `R0 = 1/(1+eta) <= |x|^2 <= R1 = 1/(1-eps)`.
    pub fn absorbing_annulus(&self) -> (f64, f64) {
        (
            1.0 / (1.0 + self.params.eta),
            1.0 / (1.0 - self.params.epsilon),
        )
    }

    /// Angle `Phi_j` with `tan Phi_j = x_j^2 / sum_{i in O_j} x_i^2` and its
    /// closed-form time derivative
    /// `-2 x_j^2 sum_{i in O_j} x_i^2 (eta x_i^2 + eps x_j^2) / ([sum x_i^2]^2 + x_j^4)`.
    ///
    /// Requires `x` supported on `Q_j` (coordinates outside within 1e-12)
    /// and nonzero. `Phi_j = pi/2` on the `x_j`-axis, `0` on `Omega_j`; the
    /// rate is `<= 0` everywhere and vanishes only in those two cases.
    pub fn phi_angle_rate(&self, j: usize, x: &[f64]) -> Result<(f64, f64), RealizeError> {
        self.check_vertex(j)?;
        self.check_dim(x)?;
        let (_, q) = self.out_subspaces(j)?;
        for (k, &xk) in x.iter().enumerate() {
            if !q.contains(&k) && xk.abs() > 1e-12 {
                return Err(RealizeError::SupportViolation {
                    subspace: "Q_j",
                    vertex: j,
                });
            }
        }
        let xj2 = x[j] * x[j];
        let out_sq: f64 = self.out_set(j).iter().map(|&i| x[i] * x[i]).sum();
        if xj2 == 0.0 && out_sq == 0.0 {
            return Err(RealizeError::ZeroState);
        }
        let phi = xj2.atan2(out_sq);
        let (eps, eta) = (self.params.epsilon, self.params.eta);
        let numer: f64 = self
            .out_set(j)
            .iter()
            .map(|&i| {
                let xi2 = x[i] * x[i];
                xi2 * (eta * xi2 + eps * xj2)
            })
            .sum();
        let denom = out_sq * out_sq + xj2 * xj2;
        let dphi_dt = -2.0 * xj2 * numer / denom;
        Ok((phi, dphi_dt))
    }

    fn check_omega_support(&self, j: usize, x: &[f64]) -> Result<Vec<usize>, RealizeError> {
        self.check_vertex(j)?;
        self.check_dim(x)?;
        let omega = self.out_set(j);
        for (k, &xk) in x.iter().enumerate() {
            if !omega.contains(&k) && xk.abs() > 1e-12 {
                return Err(RealizeError::SupportViolation {
                    subspace: "Omega_j",
                    vertex: j,
                });
            }
        }
        Ok(omega)
    }

    /// Potential on `Omega_j`:
    /// `V_j = -R/2 + R^2/4 + (eta/4) sum_k x_k^2 sum_{l != k} x_l^2`
    /// with `R = sum_{i in O_j} x_i^2`. When the subgraph induced on `O_j`
    /// has no edges (guaranteed by the gate), the flow on `Omega_j` is
    /// exactly `-grad V_j`.
    pub fn potential(&self, j: usize, x: &[f64]) -> Result<f64, RealizeError> {
        let omega = self.check_omega_support(j, x)?;
        let r: f64 = omega.iter().map(|&i| x[i] * x[i]).sum();
        let cross: f64 = omega
            .iter()
            .map(|&k| {
                let xk2 = x[k] * x[k];
                let others: f64 = omega
                    .iter()
                    .filter(|&&l| l != k)
                    .map(|&l| x[l] * x[l])
                    .sum();
                xk2 * others
            })
            .sum();
        Ok(-0.5 * r + 0.25 * r * r + 0.25 * self.params.eta * cross)
    }

    /// Analytic gradient of [`Self::potential`] as a full-dimension vector
    /// (zero outside the `Omega_j` coordinates).
    pub fn potential_gradient(&self, j: usize, x: &[f64]) -> Result<Vec<f64>, RealizeError> {
        let omega = self.check_omega_support(j, x)?;
        let r: f64 = omega.iter().map(|&i| x[i] * x[i]).sum();
        let mut grad = vec![0.0; self.dim()];
        for &k in &omega {
            let others: f64 = omega
                .iter()
                .filter(|&&l| l != k)
                .map(|&l| x[l] * x[l])
                .sum();
            grad[k] = -x[k] * (1.0 - r) + self.params.eta * x[k] * others;
        }
        Ok(grad)
    }

    /// True iff the subgraph induced on `O_j` has no edges, which is what
    /// makes the `Omega_j` dynamics the fully symmetric gradient system.
    pub fn out_set_edgeless(&self, j: usize) -> bool {
        let omega = self.out_set(j);
        omega
            .iter()
            .all(|&a| omega.iter().all(|&b| a == b || !self.graph.has_edge(a, b)))
    }

    /// Separating equilibria inside `Omega_j`: one positive-orthant
    /// representative per subset `T` of `O_j` with `|T| >= 2`, at
    /// `x_i^2 = 1 / (|T| + eta (|T| - 1))` for `i` in `T`.
    ///
    /// Each point is polished by Newton iteration on the full field to
    /// residual below 1e-12 and classified through the Hessian of `V_j`.
    /// When the induced subgraph on `O_j` has edges the closed form does not
    /// apply; a multistart Newton search over `Omega_j` runs instead and its
    /// finds are flagged `numeric`.
    pub fn separating_equilibria(&self, j: usize) -> Result<Vec<EquilibriumInfo>, RealizeError> {
        self.check_vertex(j)?;
        let omega = self.out_set(j);
        if omega.len() < 2 {
            return Ok(Vec::new());
        }
        if self.out_set_edgeless(j) {
            self.separating_closed_form(j, &omega)
        } else {
            self.separating_numeric(j, &omega)
        }
    }

    fn separating_label(&self, support: &[usize]) -> String {
        let names: Vec<&str> = support.iter().map(|&i| self.graph.label(i)).collect();
        format!("zeta({})", names.join(","))
    }

    fn separating_closed_form(
        &self,
        j: usize,
        omega: &[usize],
    ) -> Result<Vec<EquilibriumInfo>, RealizeError> {
        let eta = self.params.eta;
        let mut out = Vec::new();
        for subset in subsets_at_least_two(omega) {
            let t = subset.len() as f64;
            let c = (1.0 / (t + eta * (t - 1.0))).sqrt();
            let mut x = vec![0.0; self.dim()];
            for &i in &subset {
                x[i] = c;
            }
            let refined = self.newton_refine(&x, 1e-12, 50)?;
            out.push(self.describe_separating(j, &subset, refined, false)?);
        }
        Ok(out)
    }

    /// Multistart Newton on the field restricted to `Omega_j`. Candidate
    /// starts cover subset sign patterns of the annulus shell; anything that
    /// fails the residual gate, lands on an axis/origin point, or leaves the
    /// positive orthant is dropped.
    fn separating_numeric(
        &self,
        j: usize,
        omega: &[usize],
    ) -> Result<Vec<EquilibriumInfo>, RealizeError> {
        let mut found: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        for subset in subsets_at_least_two(omega) {
            for scale in [0.4, 0.7, 1.0] {
                let t = subset.len() as f64;
                let mut x = vec![0.0; self.dim()];
                for (rank, &i) in subset.iter().enumerate() {
                    // Slightly asymmetric start so distinct roots separate.
                    x[i] = scale * (1.0 / t).sqrt() * (1.0 + 0.05 * rank as f64);
                }
                let Ok(refined) = self.newton_refine(&x, 1e-12, 80) else {
                    continue;
                };
                let support: Vec<usize> = (0..self.dim())
                    .filter(|&k| refined[k].abs() > 1e-9)
                    .collect();
                if support.len() < 2 || !support.iter().all(|k| omega.contains(k)) {
                    continue;
                }
                let rep: Vec<f64> = refined.iter().map(|v| v.abs()).collect();
                if found
                    .iter()
                    .any(|(s, p)| *s == support && dist(p, &rep) < 1e-8)
                {
                    continue;
                }
                found.push((support, rep));
            }
        }
        found.sort_by(|a, b| a.0.cmp(&b.0));
        found
            .into_iter()
            .map(|(support, rep)| self.describe_separating(j, &support, rep, true))
            .collect()
    }

    fn describe_separating(
        &self,
        j: usize,
        support: &[usize],
        location: Vec<f64>,
        numeric: bool,
    ) -> Result<EquilibriumInfo, RealizeError> {
        let eigenvalues = self.real_eigenvalues(&location)?;
        let omega_stability = Some(self.classify_in_omega(j, &location)?);
        Ok(EquilibriumInfo {
            label: self.separating_label(support),
            kind: EquilibriumKind::SeparatingNode,
            location,
            support: support.to_vec(),
            eigenvalues,
            omega_stability,
            numeric,
        })
    }

    /// Real parts of the Jacobian eigenvalues at `x`, sorted ascending.
    pub fn real_eigenvalues(&self, x: &[f64]) -> Result<Vec<f64>, RealizeError> {
        let jac = self.jacobian(x)?;
        let mut eig: Vec<f64> = jac.complex_eigenvalues().iter().map(|c| c.re).collect();
        eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        Ok(eig)
    }

    /// Classify a critical point of `V_j` by the sign pattern of the Hessian
    /// eigenvalues over the `Omega_j` coordinates.
    fn classify_in_omega(&self, j: usize, x: &[f64]) -> Result<OmegaStability, RealizeError> {
        let omega = self.out_set(j);
        let eta = self.params.eta;
        let m = omega.len();
        let r: f64 = omega.iter().map(|&i| x[i] * x[i]).sum();
        let mut hess = DMatrix::zeros(m, m);
        for (a, &k) in omega.iter().enumerate() {
            let others: f64 = omega
                .iter()
                .filter(|&&l| l != k)
                .map(|&l| x[l] * x[l])
                .sum();
            for (b, &l) in omega.iter().enumerate() {
                hess[(a, b)] = if a == b {
                    -(1.0 - r) + 2.0 * x[k] * x[k] + eta * others
                } else {
                    2.0 * (1.0 + eta) * x[k] * x[l]
                };
            }
        }
        let eig = hess.symmetric_eigen().eigenvalues;
        let pos = eig.iter().filter(|&&v| v > 0.0).count();
        let neg = eig.iter().filter(|&&v| v < 0.0).count();
        Ok(if pos == m {
            OmegaStability::Minimum
        } else if neg == m {
            OmegaStability::Repeller
        } else {
            OmegaStability::Saddle
        })
    }

    /// Hessian of `V_j` restricted to the `Omega_j` coordinates, evaluated
    /// at `x`; used to certify that the axis targets are quadratic minima.
    pub fn potential_hessian(&self, j: usize, x: &[f64]) -> Result<DMatrix<f64>, RealizeError> {
        let omega = self.check_omega_support(j, x)?;
        let eta = self.params.eta;
        let m = omega.len();
        let r: f64 = omega.iter().map(|&i| x[i] * x[i]).sum();
        let mut hess = DMatrix::zeros(m, m);
        for (a, &k) in omega.iter().enumerate() {
            let others: f64 = omega
                .iter()
                .filter(|&&l| l != k)
                .map(|&l| x[l] * x[l])
                .sum();
            for (b, &l) in omega.iter().enumerate() {
                hess[(a, b)] = if a == b {
                    -(1.0 - r) + 2.0 * x[k] * x[k] + eta * others
                } else {
                    2.0 * (1.0 + eta) * x[k] * x[l]
                };
            }
        }
        Ok(hess)
    }

    /// Newton iteration on the full field with the analytic Jacobian.
    /// Coordinates that start at exactly zero stay zero (the field vanishes
    /// there), so the search respects coordinate subspaces.
    pub fn newton_refine(
        &self,
        x0: &[f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<Vec<f64>, RealizeError> {
        self.check_dim(x0)?;
        let n = self.dim();
        let mut x = DVector::from_column_slice(x0);
        let mut residual = f64::INFINITY;
        for _ in 0..max_iter {
            let f = DVector::from_vec(self.vector_field(x.as_slice())?);
            residual = f.norm();
            if residual < tol {
                return Ok(x.as_slice().to_vec());
            }
            let jac = self.jacobian(x.as_slice())?;
            let Some(step) = jac.lu().solve(&f) else {
                break;
            };
            x -= step;
            if !x.iter().all(|v| v.is_finite()) {
                break;
            }
            // Keep exact zeros exact.
            for k in 0..n {
                if x0[k] == 0.0 {
                    x[k] = 0.0;
                }
            }
        }
        let f = self.vector_field(x.as_slice())?;
        let final_res = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if final_res < tol {
            Ok(x.as_slice().to_vec())
        } else {
            Err(RealizeError::NewtonStalled {
                tol,
                residual: residual.min(final_res),
            })
        }
    }

    /// Check `f(sigma x) = sigma f(x)` bitwise for a sign pattern `sigma`
    /// (entries +1/-1). Holds exactly because `F_j` sees squares only.
    pub fn equivariance_check(&self, x: &[f64], signs: &[f64]) -> Result<bool, RealizeError> {
        self.check_dim(x)?;
        self.check_dim(signs)?;
        if !signs.iter().all(|&s| s == 1.0 || s == -1.0) {
            return Err(RealizeError::BadSigns);
        }
        let sigma_x: Vec<f64> = x.iter().zip(signs).map(|(xi, s)| s * xi).collect();
        let f_sigma_x = self.vector_field(&sigma_x)?;
        let f_x = self.vector_field(x)?;
        Ok(f_sigma_x
            .iter()
            .zip(f_x.iter().zip(signs))
            .all(|(lhs, (fi, s))| *lhs == s * fi))
    }

    /// Full equilibrium table: origin, every axis node, and all separating
    /// nodes (deduplicated across the `Omega_j` they appear in).
    pub fn all_equilibria(&self) -> Result<Vec<EquilibriumInfo>, RealizeError> {
        let mut out = vec![self.origin_info()];
        for j in 0..self.dim() {
            out.push(self.node_eigenvalues(j)?);
        }
        let mut seen: Vec<Vec<usize>> = Vec::new();
        for j in 0..self.dim() {
            for info in self.separating_equilibria(j)? {
                if seen.contains(&info.support) {
                    continue;
                }
                seen.push(info.support.clone());
                out.push(info);
            }
        }
        Ok(out)
    }

    /// Build the manifest consumed by the integrators, the Markov analysis
    /// and the CLI.
    pub fn manifest(&self) -> Result<SystemManifest, RealizeError> {
        let (r0, r1) = self.absorbing_annulus();
        let splitting = self
            .graph
            .splitting_vertices()
            .into_iter()
            .map(|(v, order)| SplittingVertex {
                vertex: v,
                label: self.graph.label(v).to_string(),
                order,
            })
            .collect();
        Ok(SystemManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            graph: self.graph.clone(),
            epsilon: self.params.epsilon,
            eta: self.params.eta,
            forced: self.forced,
            verified: self.is_verified(),
            gate: self.gate.clone(),
            annulus: Annulus { r0, r1 },
            splitting_vertices: splitting,
            equilibria: self.all_equilibria()?,
        })
    }

    /// Rebuild a system from a manifest (graph, parameters and force flag;
    /// everything else is recomputed).
    pub fn from_manifest(manifest: &SystemManifest) -> Result<Self, RealizeError> {
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(RealizeError::BadSchema(manifest.schema_version));
        }
        let params = RealizationParams::new(manifest.epsilon, manifest.eta)?;
        if manifest.forced {
            Self::new_forced(manifest.graph.clone(), params)
        } else {
            Self::new(manifest.graph.clone(), params)
        }
    }
}

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub r0: f64,
    pub r1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingVertex {
    pub vertex: usize,
    pub label: String,
    pub order: usize,
}

/// Everything a downstream stage needs to reconstruct and interpret a
/// realized system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub graph: Digraph,
    pub epsilon: f64,
    pub eta: f64,
    pub forced: bool,
    pub verified: bool,
    pub gate: GateReport,
    pub annulus: Annulus,
    pub splitting_vertices: Vec<SplittingVertex>,
    pub equilibria: Vec<EquilibriumInfo>,
}

fn subsets_at_least_two(items: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let m = items.len();
    for mask in 1u32..(1 << m) {
        if mask.count_ones() >= 2 {
            let subset: Vec<usize> = (0..m)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| items[b])
                .collect();
            out.push(subset);
        }
    }
    out.sort();
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
