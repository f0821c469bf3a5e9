use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;

use anyhow::{Context, Result};
use heteronet::digraph::Digraph;
use heteronet::realize::{RealizationParams, RealizedSystem};

use crate::run_manifest::{write_json_with_hash, RunManifest};

use super::RealizeArgs;

pub fn run(args: RealizeArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.graph)
        .with_context(|| format!("reading {}", args.graph.display()))?;
    let graph = Digraph::parse(&text)?;
    let params = RealizationParams::new(args.epsilon, args.eta)?;
    let sys = if args.force {
        RealizedSystem::new_forced(graph, params)?
    } else {
        RealizedSystem::new(graph, params)?
    };
    let manifest = sys.manifest()?;

    let mut parameters = BTreeMap::new();
    parameters.insert("graph".to_string(), args.graph.display().to_string());
    parameters.insert("epsilon".to_string(), args.epsilon.to_string());
    parameters.insert("eta".to_string(), args.eta.to_string());
    parameters.insert("force".to_string(), args.force.to_string());
    let argv = vec![
        "realize".to_string(),
        args.graph.display().to_string(),
        "--epsilon".to_string(),
        args.epsilon.to_string(),
        "--eta".to_string(),
        args.eta.to_string(),
        "--out".to_string(),
        args.out.display().to_string(),
    ]
    .into_iter()
    .chain(args.force.then(|| "--force".to_string()))
    .collect();
    let mut run = RunManifest::new("realize", argv, parameters, None);
    write_json_with_hash(&args.out, &manifest, &run.manifest_hash)?;
    run.record_output(&args.out)?;
    run.write_next_to(&args.out)?;

    let (r0, r1) = sys.absorbing_annulus();
    println!(
        "realized {} vertices with epsilon={}, eta={} ({})",
        sys.dim(),
        args.epsilon,
        args.eta,
        if manifest.verified {
            "verified"
        } else {
            "unverified: gate failed, construction forced"
        }
    );
    println!("absorbing annulus: {r0} <= |x|^2 <= {r1}");
    println!(
        "equilibria: {} ({} separating)",
        manifest.equilibria.len(),
        manifest
            .equilibria
            .iter()
            .filter(|e| e.kind == heteronet::EquilibriumKind::SeparatingNode)
            .count()
    );
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
