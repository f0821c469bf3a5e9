use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::process::ExitCode;

use anyhow::Result;
use heteronet::analysis::{run_markov_analysis, AnalysisError, ClassifyThresholds};
use heteronet::integrate::IntegratorConfig;

use crate::run_manifest::{write_atomic, write_json_with_hash, RunManifest};

use super::simulate::load_system;
use super::MarkovArgs;

pub fn run(args: MarkovArgs) -> Result<ExitCode> {
    let (_, sys) = load_system(&args.system)?;
    let cfg = IntegratorConfig::new(args.step, args.max_time, 1e-9, 0.05)?;
    let thresholds = ClassifyThresholds {
        p_min: args.p_min,
        eps_escape: args.eps_escape,
        r_excl: args.r_excl,
    };

    let report =
        match run_markov_analysis(&sys, args.samples, args.delta, &cfg, &thresholds, args.seed) {
            Ok(report) => report,
            Err(AnalysisError::UnresolvedTooHigh { vertex, fraction }) => {
                eprintln!(
                    "node {} has unresolved fraction {:.4} (> 1%): raise --max-time or --samples",
                    sys.graph().label(vertex),
                    fraction
                );
                return Ok(ExitCode::from(3));
            }
            Err(err) => return Err(err.into()),
        };

    let mut parameters = BTreeMap::new();
    parameters.insert("system".to_string(), args.system.display().to_string());
    parameters.insert("samples".to_string(), args.samples.to_string());
    parameters.insert("delta".to_string(), args.delta.to_string());
    parameters.insert("seed".to_string(), args.seed.to_string());
    parameters.insert("p_min".to_string(), args.p_min.to_string());
    parameters.insert("eps_escape".to_string(), args.eps_escape.to_string());
    parameters.insert("r_excl".to_string(), args.r_excl.to_string());
    parameters.insert("step".to_string(), args.step.to_string());
    parameters.insert("max_time".to_string(), args.max_time.to_string());
    let argv = vec![
        "markov".to_string(),
        args.system.display().to_string(),
        "--samples".to_string(),
        args.samples.to_string(),
        "--delta".to_string(),
        args.delta.to_string(),
        "--seed".to_string(),
        args.seed.to_string(),
        "--p-min".to_string(),
        args.p_min.to_string(),
        "--eps-escape".to_string(),
        args.eps_escape.to_string(),
        "--r-excl".to_string(),
        args.r_excl.to_string(),
        "--step".to_string(),
        args.step.to_string(),
        "--max-time".to_string(),
        args.max_time.to_string(),
        "--out".to_string(),
        args.out.display().to_string(),
    ];
    let mut run = RunManifest::new("markov", argv, parameters, Some(args.seed));

    write_json_with_hash(&args.out, &report, &run.manifest_hash)?;
    run.record_output(&args.out)?;

    // Chain matrix CSV: one row per state, escape last.
    let chain_path = args.out.with_extension("chain.csv");
    let mut csv = String::from("state");
    for label in &report.chain.labels {
        write!(csv, ",{label}").unwrap();
    }
    csv.push('\n');
    for (label, row) in report.chain.labels.iter().zip(&report.chain.matrix) {
        write!(csv, "{label}").unwrap();
        for p in row {
            write!(csv, ",{p}").unwrap();
        }
        csv.push('\n');
    }
    write_atomic(&chain_path, csv.as_bytes())?;
    run.record_output(&chain_path)?;
    run.write_next_to(&args.out)?;

    for node in &report.nodes {
        let c = &node.classification;
        println!(
            "{}: almost_complete={} equable={} exclusive={} leak={:.4}{}",
            c.label,
            c.almost_complete,
            c.equable,
            c.exclusive,
            c.escape_fraction,
            c.splitting_order
                .map_or(String::new(), |k| format!(" splitting_order={k}"))
        );
    }
    println!(
        "sigma*: {} nodes, edges {:?}",
        report.sigma_star.vertices.len(),
        report.sigma_star.edges
    );
    println!("wrote {} and {}", args.out.display(), chain_path.display());
    Ok(ExitCode::SUCCESS)
}
