use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;

use anyhow::{Context, Result};
use heteronet::digraph::{Digraph, GateReport};
use serde::{Deserialize, Serialize};

use crate::run_manifest::{write_atomic, write_json_with_hash, RunManifest};

use super::AnalyzeArgs;

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub graph: Digraph,
    pub gate: GateReport,
    pub splitting_vertices: BTreeMap<String, usize>,
    /// Canonical cycle decomposition (label sequences); absent when the
    /// graph is not transitive.
    pub cycles: Option<Vec<Vec<String>>>,
}

pub fn run(args: AnalyzeArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.graph)
        .with_context(|| format!("reading {}", args.graph.display()))?;
    let graph = Digraph::parse(&text)?;
    let gate = graph.realization_gate();

    let splitting: BTreeMap<String, usize> = graph
        .splitting_vertices()
        .into_iter()
        .map(|(v, order)| (graph.label(v).to_string(), order))
        .collect();
    let cycles = if gate.transitive {
        Some(
            graph
                .cycle_decomposition()?
                .into_iter()
                .map(|cycle| {
                    cycle
                        .into_iter()
                        .map(|v| graph.label(v).to_string())
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };

    println!("graph: {}", graph);
    println!("transitive: {}", gate.transitive);
    println!(
        "1-cycles: {}   2-cycles: {}   delta-cliques: {}",
        gate.one_cycles.len(),
        gate.two_cycles.len(),
        gate.delta_cliques.len()
    );
    for &(i, j) in &gate.two_cycles {
        println!("  2-cycle: {{{}, {}}}", graph.label(i), graph.label(j));
    }
    for &(i, j, k) in &gate.delta_cliques {
        println!(
            "  delta-clique: ({}, {}, {})",
            graph.label(i),
            graph.label(j),
            graph.label(k)
        );
    }
    if splitting.is_empty() {
        println!("splitting vertices: none");
    } else {
        for (label, order) in &splitting {
            println!("splitting vertex: {label} (order {order})");
        }
    }
    if let Some(cycles) = &cycles {
        for cycle in cycles {
            println!("cycle: ({})", cycle.join(", "));
        }
    }
    println!("eligible: {}", gate.eligible);

    let eligible = gate.eligible;
    let report = AnalyzeReport {
        schema_version: heteronet::realize::SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        graph: graph.clone(),
        gate,
        splitting_vertices: splitting,
        cycles,
    };

    if args.out.is_some() || args.dot.is_some() {
        let mut parameters = BTreeMap::new();
        parameters.insert("graph".to_string(), args.graph.display().to_string());
        let mut argv = vec!["analyze".to_string(), args.graph.display().to_string()];
        if let Some(out) = &args.out {
            argv.push("--out".to_string());
            argv.push(out.display().to_string());
        }
        if let Some(dot) = &args.dot {
            argv.push("--dot".to_string());
            argv.push(dot.display().to_string());
        }
        let mut manifest = RunManifest::new("analyze", argv, parameters, None);
        if let Some(out) = &args.out {
            write_json_with_hash(out, &report, &manifest.manifest_hash)?;
            manifest.record_output(out)?;
        }
        if let Some(dot) = &args.dot {
            write_atomic(dot, report.graph.to_dot().as_bytes())?;
            manifest.record_output(dot)?;
        }
        let primary = args.out.as_ref().or(args.dot.as_ref()).unwrap();
        manifest.write_next_to(primary)?;
    }

    Ok(if eligible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
