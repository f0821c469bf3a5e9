//! Acceptance suite: one test per criterion, each printing a pass line with
//! its measured runtime. Tolerances are pinned in the asserts.
//!
//! Heavy Monte-Carlo criteria serialize on a shared lock so their runtime
//! budgets are measured with the machine to themselves; the remaining
//! criteria run freely in parallel.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use heteronet::analysis::{
    build_switching_chain, classify_node, equable_core, estimate_transitions,
    estimate_transitions_traced, separatrix_refine, ClassifyThresholds,
};
use heteronet::digraph::Digraph;
use heteronet::integrate::{
    drive_sde, integrate_ode, integrate_sde, IntegratorConfig, NoiseConfig,
};
use heteronet::realize::{RealizationParams, RealizedSystem};
use heteronet::seed::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

static HEAVY: Mutex<()> = Mutex::new(());

fn kirk_silber() -> Digraph {
    Digraph::with_labels(
        vec!["xi1".into(), "xi2".into(), "xi3".into(), "xi4".into()],
        &[(0, 1), (1, 2), (1, 3), (2, 0), (3, 0)],
    )
    .unwrap()
}

fn kirk_silber_system() -> RealizedSystem {
    RealizedSystem::new(kirk_silber(), RealizationParams::default()).unwrap()
}

fn b3b3c4_forced() -> RealizedSystem {
    let g = Digraph::with_labels(
        vec!["xi1".into(), "xi2".into(), "xi3".into(), "xi4".into()],
        &[(0, 1), (1, 2), (1, 3), (2, 0), (2, 3), (3, 0)],
    )
    .unwrap();
    RealizedSystem::new_forced(g, RealizationParams::default()).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn report(id: &str, name: &str, elapsed: Duration, budget: Duration) {
    println!(
        "ACCEPT {id} {name}: PASS in {:.2?} (budget {:.0?})",
        elapsed, budget
    );
    assert!(
        elapsed <= budget,
        "criterion {id} exceeded its runtime budget: {elapsed:.2?} > {budget:.2?}"
    );
}

/// C1: the assembled field matches the four hand-written component
/// equations of the canonical four-node example to 1e-14, and all +/- axis
/// nodes are equilibria to 1e-12.
#[test]
fn c01_field_fidelity() {
    let start = Instant::now();
    let sys = kirk_silber_system();
    let (eps, eta) = (0.02, 0.05);
    let oracle = |x: &[f64]| -> [f64; 4] {
        let r = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
        [
            x[0] * (1.0 - r + eps * (x[2] * x[2] + x[3] * x[3]) - eta * x[1] * x[1]),
            x[1] * (1.0 - r + eps * x[0] * x[0] - eta * (x[2] * x[2] + x[3] * x[3])),
            x[2] * (1.0 - r + eps * x[1] * x[1] - eta * (x[0] * x[0] + x[3] * x[3])),
            x[3] * (1.0 - r + eps * x[1] * x[1] - eta * (x[0] * x[0] + x[2] * x[2])),
        ]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.2..1.2)).collect();
        let f = sys.vector_field(&x).unwrap();
        let want = oracle(&x);
        for k in 0..4 {
            assert!(
                (f[k] - want[k]).abs() <= 1e-14,
                "component {k}: {} vs {}",
                f[k],
                want[k]
            );
        }
    }
    for j in 0..4 {
        for sign in [1.0, -1.0] {
            let mut x = vec![0.0; 4];
            x[j] = sign;
            assert!(norm(&sys.vector_field(&x).unwrap()) <= 1e-12);
        }
    }
    report(
        "01",
        "field-fidelity",
        start.elapsed(),
        Duration::from_secs(1),
    );
}

/// C2: analytic node eigenvalues {-2, eps, eps, -eta} at the splitting node,
/// agreement with numeric Jacobian eigenvalues to 1e-8, and
/// finite-difference Jacobian agreement to 1e-6 at 100 random points.
#[test]
fn c02_eigenvalue_table() {
    let start = Instant::now();
    let sys = kirk_silber_system();
    let info = sys.node_eigenvalues(1).unwrap();
    let mut eig = info.eigenvalues.clone();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(eig, vec![-2.0, -0.05, 0.02, 0.02]);
    for j in 0..4 {
        let mut analytic = sys.node_eigenvalues(j).unwrap().eigenvalues;
        analytic.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let numeric = sys.real_eigenvalues(&sys.axis_node(j)).unwrap();
        for (a, b) in analytic.iter().zip(&numeric) {
            assert!((a - b).abs() <= 1e-8, "node {j}: {a} vs {b}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let h = 1e-5;
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.2..1.2)).collect();
        let jac = sys.jacobian(&x).unwrap();
        for l in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[l] += h;
            xm[l] -= h;
            let fp = sys.vector_field(&xp).unwrap();
            let fm = sys.vector_field(&xm).unwrap();
            for k in 0..4 {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                assert!((jac[(k, l)] - fd).abs() <= 1e-6);
            }
        }
    }
    report(
        "02",
        "eigenvalue-table",
        start.elapsed(),
        Duration::from_secs(1),
    );
}

/// C3: annulus bounds are exactly 1/(1+eta) and 1/(1-eps); the radial rate
/// is sandwiched at 10^4 random points with zero violations; the rate is
/// positive below the annulus and negative above it (10^3 samples each).
#[test]
fn c03_absorbing_annulus() {
    let start = Instant::now();
    let sys = kirk_silber_system();
    let (r0, r1) = sys.absorbing_annulus();
    assert_eq!(r0, 1.0 / 1.05);
    assert_eq!(r1, 1.0 / 0.98);
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let rr = sys.radius_rate_bounds(&x).unwrap();
        assert!(rr.lower <= rr.rate && rr.rate <= rr.upper);
    }
    let scaled_sample = |rng: &mut ChaCha8Rng, r_target: f64| -> Vec<f64> {
        loop {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = norm(&x);
            if r > 1e-6 {
                let scale = (r_target).sqrt() / r;
                return x.into_iter().map(|v| v * scale).collect();
            }
        }
    };
    for _ in 0..1000 {
        let x = scaled_sample(&mut rng, 0.9 * r0);
        assert!(sys.radius_rate_bounds(&x).unwrap().rate > 0.0);
        let x = scaled_sample(&mut rng, 1.1 * r1);
        assert!(sys.radius_rate_bounds(&x).unwrap().rate < 0.0);
    }
    report(
        "03",
        "absorbing-annulus",
        start.elapsed(),
        Duration::from_secs(5),
    );
}

/// C4: on Omega_2 the field is exactly the negative potential gradient
/// (1e-12 at 10^4 points) and the analytic gradient matches finite
/// differences to 1e-6.
#[test]
fn c04_gradient_flow() {
    let start = Instant::now();
    let sys = kirk_silber_system();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let h = 1e-5;
    let mut max_defect = 0.0f64;
    for _ in 0..10_000 {
        let x = [0.0, 0.0, rng.gen_range(-1.3..1.3), rng.gen_range(-1.3..1.3)];
        let f = sys.vector_field(&x).unwrap();
        let grad = sys.potential_gradient(1, &x).unwrap();
        for k in 0..4 {
            max_defect = max_defect.max((f[k] + grad[k]).abs());
        }
        for k in [2usize, 3] {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (sys.potential(1, &xp).unwrap() - sys.potential(1, &xm).unwrap()) / (2.0 * h);
            assert!((grad[k] - fd).abs() <= 1e-6);
        }
    }
    assert!(max_defect <= 1e-12, "max |f + grad V| = {max_defect}");
    report(
        "04",
        "gradient-flow",
        start.elapsed(),
        Duration::from_secs(5),
    );
}

/// C5: the closed-form angle rate is nonpositive on Q_2 (strictly negative
/// off the axes) at 10^4 points, and the angle is non-increasing along 100
/// RK4 trajectories up to 1e-6 per step.
#[test]
fn c05_phi_monotonicity() {
    let start = Instant::now();
    let sys = kirk_silber_system();
    let (r0, r1) = sys.absorbing_annulus();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut checked = 0;
    while checked < 10_000 {
        let x = [
            0.0,
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
        ];
        let r: f64 = x.iter().map(|v| v * v).sum();
        if r < r0 || r > r1 {
            continue;
        }
        checked += 1;
        let (_, dphi) = sys.phi_angle_rate(1, &x).unwrap();
        assert!(dphi <= 0.0);
        let on_axis = x[2] == 0.0 && x[3] == 0.0;
        let in_omega = x[1] == 0.0;
        if !on_axis && !in_omega {
            assert!(dphi < 0.0, "strictly negative expected at {x:?}");
        }
    }
    let cfg = IntegratorConfig {
        step: 0.01,
        max_time: 400.0,
        ..IntegratorConfig::default()
    };
    for trial in 0..100 {
        let mut x0 = [
            0.0,
            rng.gen_range(0.1..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let r: f64 = x0.iter().map(|v| v * v).sum();
        let scale = ((0.5 * (r0 + r1)) / r).sqrt();
        for v in &mut x0 {
            *v *= scale;
        }
        let traj = integrate_ode(&sys, &x0, &cfg).unwrap();
        let mut prev = f64::INFINITY;
        for state in &traj.states {
            if state[1] == 0.0 && state[2] == 0.0 && state[3] == 0.0 {
                break;
            }
            let (phi, _) = sys.phi_angle_rate(1, state).unwrap();
            assert!(
                phi <= prev + 1e-6,
                "trial {trial}: phi increased {prev} -> {phi}"
            );
            prev = phi;
        }
    }
    report(
        "05",
        "phi-monotonicity",
        start.elapsed(),
        Duration::from_secs(30),
    );
}

/// C6: separatrix refinement from the splitting node converges to the
/// separating equilibrium with x^2 = 1/(2+eta) to 1e-6 for eta in
/// {0.05, 0.5}; closed-form separating equilibria carry Newton residuals
/// below 1e-12.
#[test]
fn c06_separating_node() {
    let start = Instant::now();
    let cfg = IntegratorConfig::default();
    for eta in [0.05, 0.5] {
        let sys =
            RealizedSystem::new(kirk_silber(), RealizationParams::new(0.02, eta).unwrap()).unwrap();
        let result = separatrix_refine(&sys, 1, 2, 3, &cfg).unwrap();
        let c2 = 1.0 / (2.0 + eta);
        assert!(
            (result.limit.location[2].powi(2) - c2).abs() <= 1e-6,
            "eta={eta}: zeta_3^2 = {}",
            result.limit.location[2].powi(2)
        );
        assert!((result.limit.location[3].powi(2) - c2).abs() <= 1e-6);
        for info in sys.separating_equilibria(1).unwrap() {
            let f = sys.vector_field(&info.location).unwrap();
            assert!(norm(&f) <= 1e-12, "residual {}", norm(&f));
            for &i in &info.support {
                assert!((info.location[i].powi(2) - c2).abs() <= 1e-9);
            }
        }
    }
    report(
        "06",
        "separating-node",
        start.elapsed(),
        Duration::from_secs(10),
    );
}

/// C7: Monte-Carlo switching estimates at m = 10^4 per node: the splitting
/// node sends half its measure to each target (within 3 sigma = 0.015),
/// leaks at most 0.005, the out-degree-one node transitions with
/// probability exactly 1, and the recurrent equable core is the whole
/// graph.
#[test]
fn c07_markov_estimates() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();
    let sys = kirk_silber_system();
    let cfg = IntegratorConfig::default();
    let m = 10_000;
    let (chain, estimates) = build_switching_chain(&sys, m, 1e-3, &cfg, 20_240_810).unwrap();
    let est2 = &estimates[1];
    let p3 = est2.probability(2);
    let p4 = est2.probability(3);
    assert!((p3 - 0.5).abs() <= 0.015, "p(xi2 -> xi3) = {p3}");
    assert!((p4 - 0.5).abs() <= 0.015, "p(xi2 -> xi4) = {p4}");
    assert!(
        est2.leak_fraction() <= 0.005,
        "leak = {}",
        est2.leak_fraction()
    );
    let est1 = &estimates[0];
    assert_eq!(est1.probability(1), 1.0, "p(xi1 -> xi2) must be exactly 1");
    assert!(chain.row_sum_defect() <= 1e-12);
    let core = equable_core(&sys, &estimates, &ClassifyThresholds::default()).unwrap();
    assert_eq!(
        core.graph,
        *sys.graph(),
        "sigma* must equal the input graph"
    );
    report(
        "07",
        "markov-estimates",
        start.elapsed(),
        Duration::from_secs(120),
    );
}

/// C8: in the forced delta-clique system the one-dimensional connection
/// from the first splitting-like node is starved (share <= 0.005, the
/// two-dimensional one takes >= 0.99) and the classifier flags both
/// affected nodes as non-equable. Shares were frozen after a 10^5-sample
/// confirmation run.
#[test]
fn c08_non_equable_fixture() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();
    let sys = b3b3c4_forced();
    let cfg = IntegratorConfig::default();
    let thresholds = ClassifyThresholds::default();
    let m = 10_000;
    let (est2, traces2) =
        estimate_transitions_traced(&sys, 1, m, 1e-3, &cfg, derive_seed(808, 1)).unwrap();
    assert!(
        est2.probability(2) <= 0.005,
        "share to xi3 = {}",
        est2.probability(2)
    );
    assert!(
        est2.probability(3) >= 0.99,
        "share to xi4 = {}",
        est2.probability(3)
    );
    let cls2 = classify_node(&sys, 1, &est2, &traces2, &thresholds);
    assert!(!cls2.equable, "xi2 must be flagged non-equable");
    let (est3, traces3) =
        estimate_transitions_traced(&sys, 2, m, 1e-3, &cfg, derive_seed(808, 2)).unwrap();
    let cls3 = classify_node(&sys, 2, &est3, &traces3, &thresholds);
    assert!(!cls3.equable, "xi3 must be flagged non-equable");
    report(
        "08",
        "non-equable-fixture",
        start.elapsed(),
        Duration::from_secs(120),
    );
}

/// C9: on 10^3 random digraphs (n <= 8) the splitting-vertex predicate
/// agrees with the induced-subgraph characterization with zero
/// counterexamples, and the cycle decomposition covers every edge of every
/// strongly connected instance.
#[test]
fn c09_graph_predicate_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut transitive_seen = 0;
    for trial in 0..1000 {
        let n = rng.gen_range(1..=8);
        let p = [0.15, 0.3, 0.5][trial % 3];
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        let g = Digraph::new(n, &edges).unwrap();
        let splits = g.splitting_vertices();
        for w in 0..n {
            if g.out_degree(w) < 2 {
                assert!(!splits.contains_key(&w));
                continue;
            }
            let mut subset = g.out_neighbors(w);
            subset.push(w);
            let induced = g.induced_subgraph(&subset).unwrap();
            let clean = induced.delta_cliques().is_empty() && induced.two_cycles().is_empty();
            assert_eq!(
                splits.contains_key(&w),
                clean,
                "counterexample at vertex {w}"
            );
        }
        if g.is_transitive() {
            transitive_seen += 1;
            let cycles = g.cycle_decomposition().unwrap();
            let mut covered: Vec<(usize, usize)> = Vec::new();
            for c in &cycles {
                for i in 0..c.len() {
                    let e = (c[i], c[(i + 1) % c.len()]);
                    assert!(g.has_edge(e.0, e.1));
                    covered.push(e);
                }
            }
            covered.sort_unstable();
            covered.dedup();
            assert_eq!(covered, g.edges().collect::<Vec<_>>(), "cover mismatch");
        }
    }
    assert!(
        transitive_seen >= 100,
        "only {transitive_seen} transitive samples"
    );
    report(
        "09",
        "graph-predicate-suite",
        start.elapsed(),
        Duration::from_secs(30),
    );
}

/// C10: qualitative noise-concentration property. For SDE runs (h = 0.2,
/// T = 10^6) at alpha in {1e-7, 1e-5, 1e-3}, the fraction of in-section
/// states (x1^2 < 0.1) with min(x3^2, x4^2) > 0.05 is monotonically
/// nondecreasing in alpha for a majority of 5 seed batches: smaller noise
/// concentrates excursions around the one-dimensional connections.
#[test]
fn c10_noise_concentration() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();
    let sys = kirk_silber_system();
    let cfg = IntegratorConfig {
        step: 0.2,
        max_time: 1_000_000.0,
        ..IntegratorConfig::default()
    };
    let alphas = [1e-7, 1e-5, 1e-3];
    let batches = 5u64;
    let mut x0 = sys.axis_node(1);
    let spread = 1e-3 / 2.0f64.sqrt();
    x0[2] = spread;
    x0[3] = spread;

    let jobs: Vec<(u64, usize)> = (0..batches)
        .flat_map(|b| (0..alphas.len()).map(move |a| (b, a)))
        .collect();
    let fractions: Vec<((u64, usize), f64)> = jobs
        .par_iter()
        .map(|&(batch, alpha_idx)| {
            let noise = NoiseConfig::new(
                alphas[alpha_idx],
                derive_seed(9_000 + batch, alpha_idx as u64),
            )
            .unwrap();
            let mut in_region = 0u64;
            let mut concentrated = 0u64;
            drive_sde(&sys, &x0, &cfg, &noise, |_, x| {
                if x[0] * x[0] < 0.1 {
                    in_region += 1;
                    if x[2] * x[2] > 0.05 && x[3] * x[3] > 0.05 {
                        concentrated += 1;
                    }
                }
            })
            .unwrap();
            assert!(in_region > 0);
            ((batch, alpha_idx), concentrated as f64 / in_region as f64)
        })
        .collect();
    let lookup: BTreeMap<(u64, usize), f64> = fractions.into_iter().collect();
    let mut monotone = 0;
    for batch in 0..batches {
        let f: Vec<f64> = (0..alphas.len()).map(|a| lookup[&(batch, a)]).collect();
        println!("  batch {batch}: fractions {:?} (alpha = {:?})", f, alphas);
        if f[0] <= f[1] && f[1] <= f[2] {
            monotone += 1;
        }
    }
    assert!(
        monotone * 2 > batches,
        "only {monotone} of {batches} batches monotone"
    );
    report(
        "10",
        "noise-concentration",
        start.elapsed(),
        Duration::from_secs(600),
    );
}

/// C11: determinism and equivariance. Seeded SDE integrations and
/// Monte-Carlo estimates are bitwise reproducible in-process; a seeded CLI
/// simulate re-run is byte-identical; the field commutes with all 2^4 sign
/// patterns at 10 random points.
#[test]
fn c11_determinism_and_equivariance() {
    let start = Instant::now();
    let sys = kirk_silber_system();
    let cfg = IntegratorConfig {
        step: 0.2,
        max_time: 500.0,
        ..IntegratorConfig::default()
    };
    let noise = NoiseConfig::new(1e-5, 321).unwrap();
    let mut x0 = sys.axis_node(1);
    x0[2] = 1e-3;
    let a = integrate_sde(&sys, &x0, &cfg, &noise).unwrap();
    let b = integrate_sde(&sys, &x0, &cfg, &noise).unwrap();
    assert_eq!(a, b, "seeded SDE runs must be bitwise identical");
    let cfg_ode = IntegratorConfig::default();
    let e1 = estimate_transitions(&sys, 1, 200, 1e-3, &cfg_ode, 55).unwrap();
    let e2 = estimate_transitions(&sys, 1, 200, 1e-3, &cfg_ode, 55).unwrap();
    assert_eq!(e1, e2, "seeded estimates must be identical");

    // CLI byte-identity.
    let dir = std::env::temp_dir().join(format!("heteronet-accept-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let graph_path = dir.join("graph.json");
    std::fs::write(&graph_path, kirk_silber().to_json()).unwrap();
    let system_path = dir.join("system.json");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_heteronet"))
        .args(["realize".as_ref(), graph_path.as_os_str()])
        .args(["--out".as_ref(), system_path.as_os_str()])
        .status()
        .unwrap();
    assert!(status.success());
    let run_simulate = |name: &str| -> Vec<u8> {
        let out = dir.join(name);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_heteronet"))
            .args(["simulate".as_ref(), system_path.as_os_str()])
            .args([
                "--node", "xi2", "--sde", "1e-5", "--time", "200", "--seed", "77",
            ])
            .args(["--out".as_ref(), out.as_os_str()])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(&out).unwrap()
    };
    assert_eq!(
        run_simulate("first.csv"),
        run_simulate("second.csv"),
        "seeded CLI re-runs must be byte-identical"
    );

    // Equivariance across the whole sign group.
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    for _ in 0..10 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
        for mask in 0u32..16 {
            let signs: Vec<f64> = (0..4)
                .map(|b| if mask & (1 << b) != 0 { -1.0 } else { 1.0 })
                .collect();
            assert!(sys.equivariance_check(&x, &signs).unwrap());
        }
    }
    report(
        "11",
        "determinism-and-equivariance",
        start.elapsed(),
        Duration::from_secs(10),
    );
}
