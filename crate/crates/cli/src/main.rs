use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use infoplane::expctl::{
    read_run_log, render_reports, write_curve, write_joint, write_manifest, write_run_log, write_with_digest,
    Experiment, LayerBetaFit, RunLog,
};
use infoplane::ib::{empirical_conditional, empirical_info_curve, information_curve, IbOptions, InfoCurve};
use infoplane::net::{forward_all, Checkpoint};
use infoplane::task::sample_training_set;
use infoplane::ExperimentConfig;

#[derive(Parser)]
#[command(name = "infoplane", version, about = "Information-plane experiments on small feed-forward networks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replications per experiment, overriding the config.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Rule construction.
    #[command(subcommand)]
    Task(TaskCommand),
    /// Replicated training of the reference network.
    Train {
        /// Also train the reference network on every configured fraction.
        #[arg(long)]
        panels: bool,
        /// Write the final weights of every run as JSON checkpoints.
        #[arg(long)]
        checkpoints: bool,
    },
    /// Information-plane coordinates of a saved network.
    Mi {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Information Bottleneck curve and layer fits.
    #[command(subcommand)]
    Ib(IbCommand),
    /// Depth and sample-size sweeps.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Render SVG figures from the run logs under the output directory.
    Report {
        /// Directory holding run logs; defaults to the output directory.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TaskCommand {
    /// Build the calibrated rule and write the joint distribution.
    Build,
}

#[derive(Subcommand)]
enum IbCommand {
    /// Anneal the IB curve of the rule.
    Curve {
        /// Use the empirical conditional of a training sample of this
        /// fraction instead of the exact rule.
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Fit the trade-off parameter of every layer of a saved network.
    FitBeta {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Subcommand)]
enum SweepCommand {
    Depth,
    Samples,
}

struct Session {
    config: ExperimentConfig,
    out: PathBuf,
    command: String,
}

impl Session {
    fn new(common: &Common, command: &str) -> Result<Self> {
        let mut config = match &common.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = common.seed {
            config.experiment.master_seed = seed;
        }
        if let Some(reps) = common.reps {
            config.experiment.replications = reps;
        }
        if let Some(workers) = common.workers {
            config.experiment.workers = workers;
        }
        if let Some(out) = &common.out {
            config.experiment.output_dir = out.display().to_string();
        }
        config.validate()?;
        let out = PathBuf::from(&config.experiment.output_dir);
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Session {
            config,
            out,
            command: command.to_string(),
        })
    }

    fn experiment(&self) -> Result<Experiment> {
        Ok(Experiment::new(self.config.clone())?)
    }

    fn finish(&self, digest: &str, logs: &[RunLog], files: &[PathBuf]) -> Result<()> {
        let config_path = self.out.join("config.toml");
        std::fs::write(&config_path, self.config.to_toml()?)?;
        let mut all = files.to_vec();
        all.push(config_path);
        let name = format!("manifest-{}.json", self.command.replace(' ', "-"));
        let path = write_manifest(&self.out, &name, &self.command, digest, self.config.experiment.master_seed, logs, &all)?;
        println!("wrote {} files; manifest {}", all.len(), path.display());
        Ok(())
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Checkpoint::from_json(&text)?)
}

fn task_build(s: &Session) -> Result<()> {
    let exp = s.experiment()?;
    let joint_path = s.out.join("joint.csv");
    write_joint(&exp.joint, exp.digest(), &joint_path)?;
    let rule_path = s.out.join("rule.toml");
    let rule = toml::to_string(&exp.rule)?;
    std::fs::write(&rule_path, format!("# config_digest={}\n{rule}", exp.digest()))?;
    println!(
        "gain {:.6} threshold {:.6} p(y=1) {:.5} I(X;Y) {:.5} bits",
        exp.rule.gain,
        exp.rule.threshold,
        exp.joint.prior(),
        exp.joint.mi_xy()
    );
    s.finish(exp.digest(), &[], &[joint_path, rule_path])
}

fn summarize(log: &RunLog) {
    let globals: Vec<f64> = log.runs.iter().filter_map(|r| r.phase.global).map(|e| e as f64).collect();
    println!(
        "{}: {} runs, {} failed, median global transition {:?}",
        log.label,
        log.runs.len(),
        log.failures.len(),
        infoplane::expctl::median(&globals)
    );
}

fn write_logs(s: &Session, logs: &[RunLog]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for log in logs {
        summarize(log);
        files.extend(write_run_log(log, &s.out)?);
    }
    Ok(files)
}

fn train(s: &Session, panels: bool, checkpoints: bool) -> Result<()> {
    let exp = s.experiment()?;
    let mut logs = vec![exp.run_replicated(&exp.reference_plan())?];
    if panels {
        logs.extend(exp.fraction_panels()?);
    }
    let mut files = write_logs(s, &logs)?;
    if checkpoints {
        let net = &s.config.network;
        for log in &logs {
            let dir = s.out.join(&log.label).join("checkpoints");
            std::fs::create_dir_all(&dir)?;
            for run in &log.runs {
                let path = dir.join(format!("run-{:03}.json", run.run_index));
                std::fs::write(&path, log.checkpoint(run, net.learning_rate, net.batch_size).to_json()?)?;
                files.push(path);
            }
        }
    }
    s.finish(exp.digest(), &logs, &files)
}

fn mi(s: &Session, checkpoint: &Path) -> Result<()> {
    let exp = s.experiment()?;
    let cp = load_checkpoint(checkpoint)?;
    let points = exp.plane_coords(&forward_all(&cp.state)?)?;
    let path = s.out.join("info_points.csv");
    write_with_digest(&path, exp.digest(), |w| {
        writeln!(w, "run_seed,epoch,layer,I_X_bits,I_Y_bits")?;
        for p in &points {
            writeln!(w, "{},{},{},{},{}", cp.run_seed, p.epoch, p.layer, p.i_x, p.i_y)?;
        }
        Ok(())
    })?;
    for p in &points {
        println!("layer {} I_X {:.4} I_Y {:.4}", p.layer, p.i_x, p.i_y);
    }
    s.finish(exp.digest(), &[], &[path])
}

fn curve(exp: &Experiment, fraction: Option<f64>) -> Result<InfoCurve> {
    let ib = &exp.config.ib;
    let opts = IbOptions::default();
    Ok(match fraction {
        None => information_curve(&exp.joint, &ib.betas(), ib.clusters, ib.anneal_seed, &opts)?,
        Some(f) => {
            let sample = sample_training_set(&exp.joint, f, exp.config.experiment.master_seed)?;
            let p_y1 = empirical_conditional(&sample, exp.joint.n_patterns())?;
            empirical_info_curve(&p_y1, &ib.betas(), ib.clusters, ib.anneal_seed, &opts)?
        }
    })
}

fn ib_curve(s: &Session, fraction: Option<f64>) -> Result<()> {
    let exp = s.experiment()?;
    let c = curve(&exp, fraction)?;
    let csv = s.out.join("ib_curve.csv");
    write_curve(&c, exp.digest(), &csv)?;
    let json = s.out.join("ib_curve.json");
    std::fs::write(&json, serde_json::to_string(&c)?)?;
    if let Some(last) = c.points.last() {
        println!(
            "{} points ({} unconverged); terminal I_X {:.4} I_Y {:.4}, I(X;Y) {:.4}",
            c.points.len(),
            c.unconverged.len(),
            last.i_x,
            last.i_y,
            exp.joint.mi_xy()
        );
    }
    s.finish(exp.digest(), &[], &[csv, json])
}

fn fit_beta(s: &Session, checkpoint: &Path) -> Result<()> {
    let exp = s.experiment()?;
    let cp = load_checkpoint(checkpoint)?;
    let fits: Vec<LayerBetaFit> = exp.fit_betas(&forward_all(&cp.state)?)?;
    let path = s.out.join("beta_star.csv");
    write_with_digest(&path, exp.digest(), |w| {
        writeln!(w, "run_seed,layer,beta_star,objective_bits")?;
        for f in &fits {
            writeln!(w, "{},{},{},{}", cp.run_seed, f.layer, f.beta_star, f.objective_bits)?;
        }
        Ok(())
    })?;
    for f in &fits {
        println!("layer {} beta* {:.4} objective {:.3e} bits", f.layer, f.beta_star, f.objective_bits);
    }
    s.finish(exp.digest(), &[], &[path])
}

fn sweep(s: &Session, which: &SweepCommand) -> Result<()> {
    let exp = s.experiment()?;
    let logs = match which {
        SweepCommand::Depth => exp.depth_sweep()?,
        SweepCommand::Samples => exp.sample_size_sweep()?,
    };
    let files = write_logs(s, &logs)?;
    s.finish(exp.digest(), &logs, &files)
}

fn find_run_logs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path().join("run_log.json");
        if path.is_file() {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}

fn report(s: &Session, from: Option<&Path>) -> Result<()> {
    let dir = from.unwrap_or(&s.out);
    let logs = find_run_logs(dir)?
        .iter()
        .map(|p| read_run_log(p))
        .collect::<infoplane::Result<Vec<_>>>()?;
    if logs.is_empty() {
        bail!("no run logs under {}", dir.display());
    }
    let curve_path = dir.join("ib_curve.json");
    let curve: Option<InfoCurve> = if curve_path.is_file() {
        Some(serde_json::from_str(&std::fs::read_to_string(&curve_path)?)?)
    } else {
        None
    };
    let out = render_reports(&logs, curve.as_ref(), &s.out.join("figures"));
    for n in &out.notices {
        println!("note: {n}");
    }
    for (path, err) in &out.failed {
        eprintln!("failed to write {}: {err}", path.display());
    }
    let digest = logs[0].config_digest.clone();
    s.finish(&digest, &logs, &out.files)?;
    if !out.failed.is_empty() {
        bail!("{} figure(s) could not be written", out.failed.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Task(_) => "task build",
        Command::Train { .. } => "train",
        Command::Mi { .. } => "mi",
        Command::Ib(IbCommand::Curve { .. }) => "ib curve",
        Command::Ib(IbCommand::FitBeta { .. }) => "ib fit-beta",
        Command::Sweep(SweepCommand::Depth) => "sweep depth",
        Command::Sweep(SweepCommand::Samples) => "sweep samples",
        Command::Report { .. } => "report",
    };
    let s = Session::new(&cli.common, name)?;
    match &cli.command {
        Command::Task(TaskCommand::Build) => task_build(&s),
        Command::Train { panels, checkpoints } => train(&s, *panels, *checkpoints),
        Command::Mi { checkpoint } => mi(&s, checkpoint),
        Command::Ib(IbCommand::Curve { fraction }) => ib_curve(&s, *fraction),
        Command::Ib(IbCommand::FitBeta { checkpoint }) => fit_beta(&s, checkpoint),
        Command::Sweep(which) => sweep(&s, which),
        Command::Report { from } => report(&s, from.as_deref()),
    }
}
