use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use crate::run_manifest::RunManifest;

use super::{Cli, Command, VerifyArgs};

/// Re-run the recorded command with outputs redirected into a scratch
/// directory and compare content hashes output-by-output.
pub fn run(args: VerifyArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    let recorded: RunManifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing run manifest {}", args.manifest.display()))?;

    let scratch = std::env::temp_dir().join(format!(
        "heteronet-verify-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    ));
    fs::create_dir_all(&scratch)?;

    let mut argv = vec!["heteronet".to_string()];
    argv.extend(recorded.argv.iter().cloned());
    let cli = Cli::try_parse_from(&argv)
        .with_context(|| format!("re-parsing recorded argv {:?}", recorded.argv))?;

    // Redirect every output path into the scratch directory, then dispatch.
    let redirect = |path: &Path| -> PathBuf {
        scratch.join(path.file_name().expect("output path has a file name"))
    };
    let (code, rerun_primary) = match cli.command {
        Command::Analyze(mut a) => {
            a.out = a.out.as_deref().map(redirect);
            a.dot = a.dot.as_deref().map(redirect);
            let primary = a.out.clone().or(a.dot.clone());
            (super::analyze::run(a)?, primary)
        }
        Command::Realize(mut a) => {
            a.out = redirect(&a.out);
            let primary = a.out.clone();
            (super::realize::run(a)?, Some(primary))
        }
        Command::Simulate(mut a) => {
            a.out = redirect(&a.out);
            let primary = a.out.clone();
            (super::simulate::run(a)?, Some(primary))
        }
        Command::Markov(mut a) => {
            a.out = redirect(&a.out);
            let primary = a.out.clone();
            (super::markov::run(a)?, Some(primary))
        }
        Command::Report(_) | Command::Verify(_) => {
            bail!("run manifest records a command without outputs; nothing to verify")
        }
    };
    if code != ExitCode::SUCCESS {
        bail!("re-run exited with a failure code");
    }
    let Some(primary) = rerun_primary else {
        bail!("recorded command produced no outputs");
    };
    let rerun_manifest_path = primary.with_extension("run.json");
    let rerun: RunManifest = serde_json::from_str(&fs::read_to_string(&rerun_manifest_path)?)
        .context("parsing re-run manifest")?;

    if recorded.manifest_hash != rerun.manifest_hash {
        println!("MISMATCH: manifest hash differs (inputs changed?)");
        return Ok(ExitCode::from(1));
    }
    if recorded.outputs.len() != rerun.outputs.len() {
        println!(
            "MISMATCH: output count {} vs {}",
            recorded.outputs.len(),
            rerun.outputs.len()
        );
        return Ok(ExitCode::from(1));
    }
    let mut all_ok = true;
    for (old, new) in recorded.outputs.iter().zip(&rerun.outputs) {
        let ok = old.sha256 == new.sha256;
        all_ok &= ok;
        println!(
            "{}: {}",
            old.path,
            if ok {
                "OK (byte-identical)"
            } else {
                "MISMATCH"
            }
        );
    }
    let _ = fs::remove_dir_all(&scratch);
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
