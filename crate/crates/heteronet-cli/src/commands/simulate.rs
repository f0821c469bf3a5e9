use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use heteronet::integrate::{
    csv_header, drive_ode, drive_sde, write_csv_row, IntegratorConfig, NoiseConfig,
    SectionPredicate, Terminal, TrajectorySidecar,
};
use heteronet::realize::{RealizedSystem, SystemManifest, SCHEMA_VERSION};
use heteronet::seed::derive_seed;

use crate::run_manifest::{write_json_with_hash, RunManifest};

use super::SimulateArgs;

pub fn load_system(path: &Path) -> Result<(SystemManifest, RealizedSystem)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: SystemManifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing system manifest {}", path.display()))?;
    let sys = RealizedSystem::from_manifest(&manifest)?;
    Ok((manifest, sys))
}

fn parse_x0(text: &str, n: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|tok| tok.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing initial state \"{text}\""))?;
    if values.len() != n {
        bail!(
            "initial state has {} coordinates, system needs {n}",
            values.len()
        );
    }
    Ok(values)
}

/// Buffered CSV writer that lands atomically on rename.
struct CsvSink {
    tmp: PathBuf,
    path: PathBuf,
    writer: BufWriter<File>,
}

impl CsvSink {
    fn create(path: &Path, n: usize) -> Result<Self> {
        let tmp = path.with_extension(format!("csvtmp{}", std::process::id()));
        let mut writer = BufWriter::new(
            File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?,
        );
        writeln!(writer, "{}", csv_header(n))?;
        Ok(CsvSink {
            tmp,
            path: path.to_path_buf(),
            writer,
        })
    }

    fn row(&mut self, t: f64, x: &[f64]) {
        write_csv_row(&mut self.writer, t, x).expect("csv row write");
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        drop(self.writer);
        fs::rename(&self.tmp, &self.path)
            .with_context(|| format!("renaming into {}", self.path.display()))?;
        Ok(self.path)
    }
}

pub fn run(args: SimulateArgs) -> Result<ExitCode> {
    let (_, sys) = load_system(&args.system)?;
    let n = sys.dim();

    let alpha = args.sde;
    let step = args
        .step
        .unwrap_or(if alpha.is_some() { 0.2 } else { 0.01 });
    let cfg = IntegratorConfig::new(step, args.time, 1e-9, 0.05)?;

    let (x0, start_desc) = if let Some(text) = &args.x0 {
        (parse_x0(text, n)?, format!("x0 = [{text}]"))
    } else if let Some(label) = &args.node {
        let Some(vertex) = sys.graph().vertex_by_label(label) else {
            bail!("no vertex labeled \"{label}\" in the system graph");
        };
        let sample = heteronet::sample_unstable_sphere(
            &sys,
            vertex,
            args.perturb,
            1,
            derive_seed(args.seed, 1),
        )?
        .remove(0);
        (
            sample,
            format!(
                "node {label} displaced {} on the unstable sphere",
                args.perturb
            ),
        )
    } else {
        bail!("provide either --x0 or --node");
    };

    let section: Option<SectionPredicate> = match &args.section {
        Some(text) => Some(text.parse()?),
        None => None,
    };

    let mut parameters = BTreeMap::new();
    parameters.insert("system".to_string(), args.system.display().to_string());
    parameters.insert("step".to_string(), step.to_string());
    parameters.insert("time".to_string(), args.time.to_string());
    parameters.insert("seed".to_string(), args.seed.to_string());
    parameters.insert(
        "alpha".to_string(),
        alpha.map_or("none".to_string(), |a| a.to_string()),
    );
    parameters.insert("perturb".to_string(), args.perturb.to_string());
    if let Some(x0text) = &args.x0 {
        parameters.insert("x0".to_string(), x0text.clone());
    }
    if let Some(node) = &args.node {
        parameters.insert("node".to_string(), node.clone());
    }
    if let Some(sec) = &args.section {
        parameters.insert("section".to_string(), sec.clone());
    }
    let mut argv = vec!["simulate".to_string(), args.system.display().to_string()];
    for (flag, value) in [
        ("--x0", args.x0.clone()),
        ("--node", args.node.clone()),
        ("--section", args.section.clone()),
    ] {
        if let Some(v) = value {
            argv.push(flag.to_string());
            argv.push(v);
        }
    }
    if let Some(a) = alpha {
        argv.push("--sde".to_string());
        argv.push(a.to_string());
    }
    argv.extend([
        "--perturb".to_string(),
        args.perturb.to_string(),
        "--step".to_string(),
        step.to_string(),
        "--time".to_string(),
        args.time.to_string(),
        "--seed".to_string(),
        args.seed.to_string(),
        "--out".to_string(),
        args.out.display().to_string(),
    ]);
    let mut run = RunManifest::new("simulate", argv, parameters, Some(args.seed));

    let mut traj_sink = CsvSink::create(&args.out, n)?;
    let section_path = args.out.with_extension("section.csv");
    let mut section_sink = match &section {
        Some(_) => Some(CsvSink::create(&section_path, n)?),
        None => None,
    };
    let mut rows = 0u64;
    let mut section_rows = 0u64;
    let mut sink = |t: f64, x: &[f64]| {
        traj_sink.row(t, x);
        rows += 1;
        if let (Some(pred), Some(ssink)) = (&section, section_sink.as_mut()) {
            if pred.eval(x) {
                ssink.row(t, x);
                section_rows += 1;
            }
        }
    };
    let terminal: Terminal = match alpha {
        Some(a) => {
            let noise = NoiseConfig::new(a, derive_seed(args.seed, 0))?;
            drive_sde(&sys, &x0, &cfg, &noise, &mut sink)?
        }
        None => drive_ode(&sys, &x0, &cfg, &mut sink)?,
    };

    let traj_path = traj_sink.finish()?;
    run.record_output(&traj_path)?;
    let sidecar = TrajectorySidecar {
        schema_version: SCHEMA_VERSION,
        terminal: terminal.clone(),
        steps: rows.saturating_sub(1) as usize,
        step,
        manifest_hash: Some(run.manifest_hash.clone()),
    };
    let sidecar_path = args.out.with_extension("terminal.json");
    write_json_with_hash(&sidecar_path, &sidecar, &run.manifest_hash)?;
    run.record_output(&sidecar_path)?;
    if let Some(ssink) = section_sink {
        let path = ssink.finish()?;
        run.record_output(&path)?;
        println!("section hits: {section_rows} -> {}", path.display());
    }
    run.write_next_to(&args.out)?;

    println!("start: {start_desc}");
    println!(
        "integrated {} rows (h = {step}), terminal: {:?}",
        rows, terminal
    );
    println!("wrote {}", traj_path.display());
    Ok(ExitCode::SUCCESS)
}
