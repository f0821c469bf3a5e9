//! Fixed-step trajectory generation: classical RK4 for the deterministic
//! flow and a stochastic Heun scheme for the additive-noise SDE
//! `dx = f(x) dt + alpha dW`.
//!
//! Both schemes multiply through by the state coordinates, so coordinate
//! hyperplanes `x_k = 0` stay exactly invariant step by step: a trajectory
//! started inside `Q_j` never acquires spurious mass outside it.
//!
//! A run stops when the field norm drops below `convergence_tol` while the
//! state sits within `node_radius` of a known equilibrium (matched up to the
//! sign action, i.e. against positive-orthant representatives), when
//! `max_time` is reached, or when the state leaves the ball `|x| <= 10 R1`
//! (which only happens on numerical blow-up since the annulus absorbs).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::realize::{EquilibriumKind, RealizeError, RealizedSystem};

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("step must be positive, got {0}")]
    BadStep(f64),
    #[error("max_time must be at least one step")]
    BadMaxTime,
    #[error("need node_radius > convergence_tol > 0")]
    BadTolerances,
    #[error("noise amplitude must be nonnegative, got {0}")]
    BadAlpha(f64),
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("invalid section predicate: {0}")]
    BadPredicate(String),
    #[error(transparent)]
    Realize(#[from] RealizeError),
}

/// Fixed-step integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Step size `h`.
    pub step: f64,
    /// Horizon; the run covers `t` in `[0, max_time]`.
    pub max_time: f64,
    /// Field-norm threshold for declaring convergence.
    pub convergence_tol: f64,
    /// Radius of the equilibrium ball that a converged state must be in.
    pub node_radius: f64,
}

impl IntegratorConfig {
    pub fn new(
        step: f64,
        max_time: f64,
        convergence_tol: f64,
        node_radius: f64,
    ) -> Result<Self, IntegrateError> {
        let cfg = IntegratorConfig {
            step,
            max_time,
            convergence_tol,
            node_radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        if !(self.step > 0.0) {
            return Err(IntegrateError::BadStep(self.step));
        }
        if !(self.max_time >= self.step) {
            return Err(IntegrateError::BadMaxTime);
        }
        if !(self.node_radius > self.convergence_tol && self.convergence_tol > 0.0) {
            return Err(IntegrateError::BadTolerances);
        }
        Ok(())
    }

    /// Horizon expressed in steps.
    pub fn max_steps(&self) -> usize {
        (self.max_time / self.step + 1e-9).floor() as usize
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: 0.01,
            max_time: 2000.0,
            convergence_tol: 1e-9,
            node_radius: 0.05,
        }
    }
}

/// Additive-noise settings. `alpha = 0` reduces the SDE scheme to plain
/// deterministic Heun steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub alpha: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(alpha: f64, seed: u64) -> Result<Self, IntegrateError> {
        if !(alpha >= 0.0) {
            return Err(IntegrateError::BadAlpha(alpha));
        }
        Ok(NoiseConfig { alpha, seed })
    }
}

/// Which equilibrium a trajectory converged to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NodeRef {
    Origin,
    /// Axis node `xi_j` (vertex index).
    Axis {
        vertex: usize,
    },
    /// Separating node, identified by its support coordinates.
    Separating {
        support: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Terminal {
    ConvergedToNode { node: NodeRef },
    MaxTime,
    LeftDomain,
}

/// Time-stamped state sequence with uniform spacing `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub terminal: Terminal,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least x0")
    }
}

/// Equilibrium table used for convergence matching, with locations reduced
/// to positive-orthant representatives.
struct MatchTable {
    entries: Vec<(NodeRef, Vec<f64>)>,
}

impl MatchTable {
    fn build(sys: &RealizedSystem) -> Result<Self, RealizeError> {
        let entries = sys
            .all_equilibria()?
            .into_iter()
            .map(|info| {
                let node = match info.kind {
                    EquilibriumKind::Origin => NodeRef::Origin,
                    EquilibriumKind::AxisNode => NodeRef::Axis {
                        vertex: info.support[0],
                    },
                    EquilibriumKind::SeparatingNode => NodeRef::Separating {
                        support: info.support.clone(),
                    },
                };
                (node, info.location)
            })
            .collect();
        Ok(MatchTable { entries })
    }

    /// Nearest equilibrium within `radius` under the sign identification.
    fn lookup(&self, x: &[f64], radius: f64) -> Option<&NodeRef> {
        let mut best: Option<(f64, &NodeRef)> = None;
        for (node, loc) in &self.entries {
            let d2: f64 = x
                .iter()
                .zip(loc)
                .map(|(xi, li)| {
                    let d = xi.abs() - li;
                    d * d
                })
                .sum();
            if d2.sqrt() <= radius && best.map_or(true, |(bd, _)| d2 < bd) {
                best = Some((d2, node));
            }
        }
        best.map(|(_, node)| node)
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>()
}

/// Stream the RK4 solution, invoking `sink` at every accepted state
/// (including `x0` at `t = 0`). Returns how the run ended.
///
/// Dimensions up to 8 run a monomorphized kernel (the Monte-Carlo drivers
/// live here); larger systems take the dynamic path. Both perform identical
/// operations in identical order, so results agree bitwise.
pub fn drive_ode<F: FnMut(f64, &[f64])>(
    sys: &RealizedSystem,
    x0: &[f64],
    cfg: &IntegratorConfig,
    sink: F,
) -> Result<Terminal, IntegrateError> {
    cfg.validate()?;
    let n = sys.dim();
    if x0.len() != n {
        return Err(RealizeError::DimensionMismatch {
            got: x0.len(),
            want: n,
        }
        .into());
    }
    let table = MatchTable::build(sys)?;
    match n {
        1 => rk4_fixed::<1, F>(sys, x0, cfg, &table, sink),
        2 => rk4_fixed::<2, F>(sys, x0, cfg, &table, sink),
        3 => rk4_fixed::<3, F>(sys, x0, cfg, &table, sink),
        4 => rk4_fixed::<4, F>(sys, x0, cfg, &table, sink),
        5 => rk4_fixed::<5, F>(sys, x0, cfg, &table, sink),
        6 => rk4_fixed::<6, F>(sys, x0, cfg, &table, sink),
        7 => rk4_fixed::<7, F>(sys, x0, cfg, &table, sink),
        8 => rk4_fixed::<8, F>(sys, x0, cfg, &table, sink),
        _ => rk4_dyn(sys, x0, cfg, &table, sink),
    }
}

fn rk4_fixed<const N: usize, F: FnMut(f64, &[f64])>(
    sys: &RealizedSystem,
    x0: &[f64],
    cfg: &IntegratorConfig,
    table: &MatchTable,
    mut sink: F,
) -> Result<Terminal, IntegrateError> {
    let (_, r1) = sys.absorbing_annulus();
    let escape_radius_sq = (10.0 * r1) * (10.0 * r1);
    let conv_tol_sq = cfg.convergence_tol * cfg.convergence_tol;
    let h = cfg.step;
    let max_steps = cfg.max_steps();

    let mut x = [0.0f64; N];
    x.copy_from_slice(x0);
    let mut k1 = [0.0f64; N];
    let mut k2 = [0.0f64; N];
    let mut k3 = [0.0f64; N];
    let mut k4 = [0.0f64; N];
    let mut stage = [0.0f64; N];

    sys.vector_field_fixed(&x, &mut k1);
    for step_idx in 0..=max_steps {
        let t = step_idx as f64 * h;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(IntegrateError::NonFinite { step: step_idx });
        }
        sink(t, &x);
        if norm_sq(&x) > escape_radius_sq {
            return Ok(Terminal::LeftDomain);
        }
        if norm_sq(&k1) < conv_tol_sq {
            if let Some(node) = table.lookup(&x, cfg.node_radius) {
                return Ok(Terminal::ConvergedToNode { node: node.clone() });
            }
        }
        if step_idx == max_steps {
            break;
        }
        // Classical RK4; k1 already holds f(x).
        for i in 0..N {
            stage[i] = x[i] + 0.5 * h * k1[i];
        }
        sys.vector_field_fixed(&stage, &mut k2);
        for i in 0..N {
            stage[i] = x[i] + 0.5 * h * k2[i];
        }
        sys.vector_field_fixed(&stage, &mut k3);
        for i in 0..N {
            stage[i] = x[i] + h * k3[i];
        }
        sys.vector_field_fixed(&stage, &mut k4);
        for i in 0..N {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        sys.vector_field_fixed(&x, &mut k1);
    }
    Ok(Terminal::MaxTime)
}

fn rk4_dyn<F: FnMut(f64, &[f64])>(
    sys: &RealizedSystem,
    x0: &[f64],
    cfg: &IntegratorConfig,
    table: &MatchTable,
    mut sink: F,
) -> Result<Terminal, IntegrateError> {
    let n = sys.dim();
    let (_, r1) = sys.absorbing_annulus();
    let escape_radius_sq = (10.0 * r1) * (10.0 * r1);
    let conv_tol_sq = cfg.convergence_tol * cfg.convergence_tol;
    let h = cfg.step;
    let max_steps = cfg.max_steps();

    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];

    sys.vector_field_into(&x, &mut k1);
    for step_idx in 0..=max_steps {
        let t = step_idx as f64 * h;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(IntegrateError::NonFinite { step: step_idx });
        }
        sink(t, &x);
        if norm_sq(&x) > escape_radius_sq {
            return Ok(Terminal::LeftDomain);
        }
        if norm_sq(&k1) < conv_tol_sq {
            if let Some(node) = table.lookup(&x, cfg.node_radius) {
                return Ok(Terminal::ConvergedToNode { node: node.clone() });
            }
        }
        if step_idx == max_steps {
            break;
        }
        for i in 0..n {
            stage[i] = x[i] + 0.5 * h * k1[i];
        }
        sys.vector_field_into(&stage, &mut k2);
        for i in 0..n {
            stage[i] = x[i] + 0.5 * h * k2[i];
        }
        sys.vector_field_into(&stage, &mut k3);
        for i in 0..n {
            stage[i] = x[i] + h * k3[i];
        }
        sys.vector_field_into(&stage, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        sys.vector_field_into(&x, &mut k1);
    }
    Ok(Terminal::MaxTime)
}

/// RK4 integration collecting the whole trajectory.
pub fn integrate_ode(
    sys: &RealizedSystem,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let terminal = drive_ode(sys, x0, cfg, |t, x| {
        times.push(t);
        states.push(x.to_vec());
    })?;
    Ok(Trajectory {
        times,
        states,
        terminal,
    })
}

/// Stream the stochastic Heun solution.
///
/// One Wiener increment `dW ~ Normal(0, h I)` is drawn per step and shared
/// by predictor and corrector:
///
/// ```text
/// x~  = x + h f(x) + alpha dW
/// x'  = x + (h/2) (f(x) + f(x~)) + alpha dW
/// ```
///
/// Identical seeds give bitwise-identical runs on the same build.
pub fn drive_sde<F: FnMut(f64, &[f64])>(
    sys: &RealizedSystem,
    x0: &[f64],
    cfg: &IntegratorConfig,
    noise: &NoiseConfig,
    mut sink: F,
) -> Result<Terminal, IntegrateError> {
    cfg.validate()?;
    if !(noise.alpha >= 0.0) {
        return Err(IntegrateError::BadAlpha(noise.alpha));
    }
    let n = sys.dim();
    if x0.len() != n {
        return Err(RealizeError::DimensionMismatch {
            got: x0.len(),
            want: n,
        }
        .into());
    }
    let table = MatchTable::build(sys)?;
    let (_, r1) = sys.absorbing_annulus();
    let escape_radius_sq = (10.0 * r1) * (10.0 * r1);
    let conv_tol_sq = cfg.convergence_tol * cfg.convergence_tol;
    let h = cfg.step;
    let sqrt_h = h.sqrt();
    let max_steps = cfg.max_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);

    let mut x = x0.to_vec();
    let mut fx = vec![0.0; n];
    let mut predictor = vec![0.0; n];
    let mut f_pred = vec![0.0; n];
    let mut dw = vec![0.0; n];

    sys.vector_field_into(&x, &mut fx);
    for step_idx in 0..=max_steps {
        let t = step_idx as f64 * h;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(IntegrateError::NonFinite { step: step_idx });
        }
        sink(t, &x);
        if norm_sq(&x) > escape_radius_sq {
            return Ok(Terminal::LeftDomain);
        }
        if norm_sq(&fx) < conv_tol_sq {
            if let Some(node) = table.lookup(&x, cfg.node_radius) {
                return Ok(Terminal::ConvergedToNode { node: node.clone() });
            }
        }
        if step_idx == max_steps {
            break;
        }
        for i in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            dw[i] = sqrt_h * z;
        }
        for i in 0..n {
            predictor[i] = x[i] + h * fx[i] + noise.alpha * dw[i];
        }
        sys.vector_field_into(&predictor, &mut f_pred);
        for i in 0..n {
            x[i] += 0.5 * h * (fx[i] + f_pred[i]) + noise.alpha * dw[i];
        }
        sys.vector_field_into(&x, &mut fx);
    }
    Ok(Terminal::MaxTime)
}

/// Stochastic Heun integration collecting the whole trajectory.
pub fn integrate_sde(
    sys: &RealizedSystem,
    x0: &[f64],
    cfg: &IntegratorConfig,
    noise: &NoiseConfig,
) -> Result<Trajectory, IntegrateError> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let terminal = drive_sde(sys, x0, cfg, noise, |t, x| {
        times.push(t);
        states.push(x.to_vec());
    })?;
    Ok(Trajectory {
        times,
        states,
        terminal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectionOp {
    Less,
    Greater,
}

/// A coordinate condition like `x1^2 < 0.1` or `x3 > 0.5` (1-based
/// coordinate names).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPredicate {
    /// 0-based coordinate index.
    pub coord: usize,
    pub squared: bool,
    pub op: SectionOp,
    pub threshold: f64,
}

impl SectionPredicate {
    pub fn eval(&self, x: &[f64]) -> bool {
        let mut v = x[self.coord];
        if self.squared {
            v *= v;
        }
        match self.op {
            SectionOp::Less => v < self.threshold,
            SectionOp::Greater => v > self.threshold,
        }
    }
}

impl FromStr for SectionPredicate {
    type Err = IntegrateError;

    fn from_str(s: &str) -> Result<Self, IntegrateError> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (op, pos) = match (compact.find('<'), compact.find('>')) {
            (Some(p), None) => (SectionOp::Less, p),
            (None, Some(p)) => (SectionOp::Greater, p),
            _ => {
                return Err(IntegrateError::BadPredicate(format!(
                    "expected exactly one comparison in \"{s}\""
                )))
            }
        };
        let (lhs, rhs) = (&compact[..pos], &compact[pos + 1..]);
        let (name, squared) = match lhs.strip_suffix("^2") {
            Some(base) => (base, true),
            None => (lhs, false),
        };
        let index: usize = name
            .strip_prefix('x')
            .and_then(|d| d.parse().ok())
            .filter(|&i| i >= 1)
            .ok_or_else(|| {
                IntegrateError::BadPredicate(format!("expected x<k> or x<k>^2, got \"{lhs}\""))
            })?;
        let threshold: f64 = rhs
            .parse()
            .map_err(|_| IntegrateError::BadPredicate(format!("bad threshold \"{rhs}\"")))?;
        Ok(SectionPredicate {
            coord: index - 1,
            squared,
            op,
            threshold,
        })
    }
}

impl fmt::Display for SectionPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "x{}{}{}{}",
            self.coord + 1,
            if self.squared { "^2" } else { "" },
            match self.op {
                SectionOp::Less => "<",
                SectionOp::Greater => ">",
            },
            self.threshold
        )
    }
}

/// A recorded section event.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionHit {
    pub time: f64,
    pub state: Vec<f64>,
}

/// Entry events: the subsequence of trajectory states where the predicate
/// switches from false to true (the initial state counts if it already
/// satisfies the predicate).
pub fn section_crossings(traj: &Trajectory, pred: &SectionPredicate) -> Vec<SectionHit> {
    let mut hits = Vec::new();
    let mut prev = false;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let now = pred.eval(x);
        if now && !prev {
            hits.push(SectionHit {
                time: *t,
                state: x.clone(),
            });
        }
        prev = now;
    }
    hits
}

/// All trajectory states satisfying the predicate ("visit points"). This is
/// the set plotted in noisy-excursion figures: every sampled state inside
/// the section region, not just the entries.
pub fn section_visits(traj: &Trajectory, pred: &SectionPredicate) -> Vec<SectionHit> {
    traj.times
        .iter()
        .zip(&traj.states)
        .filter(|(_, x)| pred.eval(x))
        .map(|(t, x)| SectionHit {
            time: *t,
            state: x.clone(),
        })
        .collect()
}

/// CSV header `t,x1,...,xn`.
pub fn csv_header(n: usize) -> String {
    let mut s = String::from("t");
    for i in 1..=n {
        s.push_str(&format!(",x{i}"));
    }
    s
}

/// One CSV row; floats use the shortest round-trip representation, so rows
/// are byte-stable for identical doubles.
pub fn write_csv_row<W: Write>(w: &mut W, t: f64, x: &[f64]) -> std::io::Result<()> {
    write!(w, "{t}")?;
    for v in x {
        write!(w, ",{v}")?;
    }
    writeln!(w)
}

/// Write a whole trajectory as CSV.
pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory) -> std::io::Result<()> {
    let n = traj.states.first().map_or(0, |s| s.len());
    writeln!(w, "{}", csv_header(n))?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        write_csv_row(w, *t, x)?;
    }
    Ok(())
}

/// Sidecar metadata emitted next to a trajectory CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub schema_version: u32,
    pub terminal: Terminal,
    pub steps: usize,
    pub step: f64,
    pub manifest_hash: Option<String>,
}
