//! CSV logs, run logs and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::run::RunLog;
use crate::error::{Error, Result};
use crate::ib::InfoCurve;
use crate::task::JointDistribution;

/// Creates `path` and writes a `# config_digest=...` line, then `body`.
pub fn write_with_digest(
    path: &Path,
    digest: &str,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# config_digest={digest}")
        .and_then(|_| body(&mut w))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_info_points(log: &RunLog, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "run_seed,epoch,layer,I_X_bits,I_Y_bits")?;
    for run in &log.runs {
        for p in &run.info_points {
            writeln!(w, "{},{},{},{},{}", run.run_seed, p.epoch, p.layer, p.i_x, p.i_y)?;
        }
    }
    Ok(())
}

pub fn write_gradient_stats(log: &RunLog, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "run_seed,epoch,layer,mean_norm,std_norm,snr")?;
    for run in &log.runs {
        for s in &run.gradient_stats {
            for (k, l) in s.layers.iter().enumerate() {
                let snr = l.snr.map_or_else(|| "NA".to_string(), |v| v.to_string());
                writeln!(w, "{},{},{},{},{},{}", run.run_seed, s.epoch, k + 1, l.mean_norm, l.std_norm, snr)?;
            }
        }
    }
    Ok(())
}

pub fn write_beta_fits(log: &RunLog, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "run_seed,layer,beta_star,objective_bits")?;
    for run in &log.runs {
        for f in &run.beta_fits {
            writeln!(w, "{},{},{},{}", run.run_seed, f.layer, f.beta_star, f.objective_bits)?;
        }
    }
    Ok(())
}

/// One row per run of the phase transition epochs; absent ones are empty.
pub fn write_phase_reports(log: &RunLog, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "run_seed,layer,transition_epoch")?;
    let fmt = |e: Option<usize>| e.map_or(String::new(), |e| e.to_string());
    for run in &log.runs {
        for (k, &e) in run.phase.layers.iter().enumerate() {
            writeln!(w, "{},{},{}", run.run_seed, k + 1, fmt(e))?;
        }
        writeln!(w, "{},global,{}", run.run_seed, fmt(run.phase.global))?;
    }
    Ok(())
}

pub fn write_thresholds(log: &RunLog, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "run_seed,epochs_to_threshold")?;
    for run in &log.runs {
        let e = run.epochs_to_threshold.map_or(String::new(), |e| e.to_string());
        writeln!(w, "{},{}", run.run_seed, e)?;
    }
    Ok(())
}

/// Files written for one log, in a subdirectory named by its label.
pub fn write_run_log(log: &RunLog, dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = dir.join(&log.label);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let d = &log.config_digest;
    let mut written = Vec::new();
    let mut csv = |name: &str, body: fn(&RunLog, &mut dyn Write) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        write_with_digest(&path, d, |w| body(log, w))?;
        written.push(path);
        Ok(())
    };
    csv("info_points.csv", write_info_points)?;
    csv("gradient_stats.csv", write_gradient_stats)?;
    csv("beta_star.csv", write_beta_fits)?;
    csv("phase.csv", write_phase_reports)?;
    if log.runs.iter().any(|r| r.epochs_to_threshold.is_some()) || log.label.starts_with("depth") {
        csv("threshold.csv", write_thresholds)?;
    }
    let path = dir.join("run_log.json");
    let json = serde_json::to_string(log).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

pub fn read_run_log(path: &Path) -> Result<RunLog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
}

pub fn write_joint(joint: &JointDistribution, digest: &str, path: &Path) -> Result<()> {
    write_with_digest(path, digest, |w| joint.write_csv(w))
}

pub fn write_curve(curve: &InfoCurve, digest: &str, path: &Path) -> Result<()> {
    write_with_digest(path, digest, |w| curve.write_csv(w))
}

#[derive(Debug, Clone, Serialize)]
struct ManifestRun {
    label: String,
    run_index: usize,
    run_seed: u64,
    init_seed: u64,
    sample_seed: u64,
    shuffle_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
struct ManifestFile {
    path: String,
    sha256: String,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    config_digest: &'a str,
    master_seed: u64,
    command: &'a str,
    runs: Vec<ManifestRun>,
    failures: Vec<(String, usize, String)>,
    files: Vec<ManifestFile>,
    elapsed_seconds: f64,
}

/// Writes the manifest `name` into `dir`, listing seeds, the config digest
/// and a SHA-256 of every file produced.
pub fn write_manifest(
    dir: &Path,
    name: &str,
    command: &str,
    digest: &str,
    master_seed: u64,
    logs: &[RunLog],
    files: &[PathBuf],
) -> Result<PathBuf> {
    let mut entries = Vec::new();
    for f in files {
        let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
        let rel = f.strip_prefix(dir).unwrap_or(f);
        entries.push(ManifestFile {
            path: rel.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        config_digest: digest,
        master_seed,
        command,
        runs: logs
            .iter()
            .flat_map(|log| {
                log.runs.iter().map(|r| ManifestRun {
                    label: log.label.clone(),
                    run_index: r.run_index,
                    run_seed: r.run_seed,
                    init_seed: r.seeds.init,
                    sample_seed: r.seeds.sample,
                    shuffle_seed: r.seeds.shuffle,
                })
            })
            .collect(),
        failures: logs
            .iter()
            .flat_map(|log| log.failures.iter().map(|f| (log.label.clone(), f.run_index, f.error.clone())))
            .collect(),
        files: entries,
        elapsed_seconds: logs.iter().map(|l| l.elapsed_seconds).sum(),
    };
    let path = dir.join(name);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
