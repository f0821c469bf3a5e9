use std::fs;
use std::process::ExitCode;

use anyhow::{Context, Result};
use heteronet::analysis::ClassificationReport;
use heteronet::realize::EquilibriumKind;

use super::simulate::load_system;
use super::ReportArgs;

pub fn run(args: ReportArgs) -> Result<ExitCode> {
    let (manifest, sys) = load_system(&args.system)?;

    println!(
        "system: {} vertices, {} edges",
        sys.dim(),
        sys.graph().edge_count()
    );
    println!(
        "parameters: epsilon = {}, eta = {}   [{}]",
        manifest.epsilon,
        manifest.eta,
        if manifest.verified {
            "verified"
        } else {
            "UNVERIFIED (gate failed, forced)"
        }
    );
    println!(
        "gate: transitive={} one_cycles={} two_cycles={} delta_cliques={}",
        manifest.gate.transitive,
        manifest.gate.one_cycles.len(),
        manifest.gate.two_cycles.len(),
        manifest.gate.delta_cliques.len()
    );
    println!(
        "absorbing annulus: {:.6} <= |x|^2 <= {:.6}",
        manifest.annulus.r0, manifest.annulus.r1
    );
    if manifest.splitting_vertices.is_empty() {
        println!("splitting vertices: none");
    } else {
        for sv in &manifest.splitting_vertices {
            println!("splitting vertex: {} (order {})", sv.label, sv.order);
        }
    }
    println!("equilibria:");
    for eq in &manifest.equilibria {
        let kind = match eq.kind {
            EquilibriumKind::Origin => "origin",
            EquilibriumKind::AxisNode => "axis",
            EquilibriumKind::SeparatingNode => "separating",
        };
        let eig: Vec<String> = eq.eigenvalues.iter().map(|v| format!("{v:.6}")).collect();
        let stability = eq
            .omega_stability
            .map_or(String::new(), |s| format!("  [{s:?} in Omega]"));
        let numeric = if eq.numeric { "  (numeric)" } else { "" };
        println!(
            "  {:<14} {:<10} eig: [{}]{}{}",
            eq.label,
            kind,
            eig.join(", "),
            stability,
            numeric
        );
    }

    if let Some(path) = &args.classification {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: ClassificationReport = serde_json::from_str(&text)
            .with_context(|| format!("parsing classification report {}", path.display()))?;
        println!();
        println!(
            "classification (m = {}, delta = {}, seed = {}):",
            report.samples_per_node, report.delta, report.master_seed
        );
        for node in &report.nodes {
            let c = &node.classification;
            println!(
                "  {:<6} almost_complete={:<5} equable={:<5} exclusive={:<5} leak={:.4}",
                c.label, c.almost_complete, c.equable, c.exclusive, c.escape_fraction
            );
            for (target, stat) in &node.estimate.targets {
                println!(
                    "      -> {:<6} p = {:.4} +/- {:.4} ({} samples)",
                    target, stat.probability, stat.std_error, stat.count
                );
            }
        }
        println!(
            "  sigma*: nodes {:?}, edges {:?}",
            report.sigma_star.vertices, report.sigma_star.edges
        );
        for note in &report.notes {
            println!("  note: {note}");
        }
    }
    Ok(ExitCode::SUCCESS)
}
