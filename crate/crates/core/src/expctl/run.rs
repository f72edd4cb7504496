//! Replicated, seeded training runs and their aggregation.

use std::ops::ControlFlow;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::dynamics::{detect_phase_transition, epoch_gradient_stats_with, GradientStats, PhaseReport};
use crate::error::{Error, Result};
use crate::ib::fit_layer_beta;
use crate::mi::{discretize, layer_plane_coords, BinRange, DiscretizedLayer, InfoPoint};
use crate::net::{
    forward_all, init_weights, training_error, ActivationRecord, Batch, Checkpoint, NetworkConfig, RunSeeds,
    TrainState, Trainer,
};
use crate::task::{sample_training_set, JointDistribution, RuleSpec};

/// Seed of run `index` under `master`; a pure function of both.
pub fn run_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Initialization, sampling and shuffling seeds drawn from one run seed.
pub fn derive_seeds(run_seed: u64) -> RunSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    RunSeeds {
        init: rng.next_u64(),
        sample: rng.next_u64(),
        shuffle: rng.next_u64(),
    }
}

/// What one replicated experiment trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub label: String,
    pub hidden: Vec<usize>,
    pub fraction: f64,
    /// Output `I(T;Y)` threshold in bits, probed during training.
    pub threshold_bits: Option<f64>,
    pub stop_at_threshold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerBetaFit {
    pub layer: usize,
    pub beta_star: f64,
    pub objective_bits: f64,
}

/// Everything recorded about one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub run_seed: u64,
    pub seeds: RunSeeds,
    pub sample_size: usize,
    pub final_epoch: usize,
    pub info_points: Vec<InfoPoint>,
    /// Gradient statistics at the recorded epochs (see [`stats_epochs`]).
    pub gradient_stats: Vec<GradientStats>,
    pub phase: PhaseReport,
    /// Per-layer slope of `ln snr` against epoch over the last 10% of epochs.
    pub late_snr_slope: Vec<Option<f64>>,
    pub beta_fits: Vec<LayerBetaFit>,
    pub epochs_to_threshold: Option<usize>,
    pub initial_train_error: f64,
    pub final_train_error: f64,
    pub final_state: TrainState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_index: usize,
    pub run_seed: u64,
    pub error: String,
}

/// Mean information-plane position of one layer at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub layer: usize,
    pub epoch: usize,
    pub i_x: f64,
    pub i_y: f64,
    pub runs: usize,
}

/// Outcome of one replicated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub label: String,
    pub config_digest: String,
    pub widths: Vec<usize>,
    pub fraction: f64,
    pub mi_xy: f64,
    pub epochs: usize,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub aggregate: Vec<AggregatePoint>,
    /// Wall-clock time; the only field that differs between identical runs.
    pub elapsed_seconds: f64,
}

impl RunLog {
    pub fn output_layer(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }

    /// Checkpoint of a run's final weights.
    pub fn checkpoint(&self, run: &RunRecord, learning_rate: f64, batch_size: usize) -> Checkpoint {
        Checkpoint {
            config: NetworkConfig {
                widths: self.widths.clone(),
                learning_rate,
                batch_size,
                epochs: self.epochs,
                init_seed: run.seeds.init,
            },
            run_seed: run.run_seed,
            seeds: run.seeds,
            sample_fraction: self.fraction,
            state: run.final_state.clone(),
        }
    }
}

/// Epochs whose gradient statistics are kept: every epoch to 100, every
/// 10th to 1000, every 100th after that, and the last.
pub fn stats_epochs(epochs: usize) -> Vec<usize> {
    let mut e: Vec<usize> = (1..=epochs)
        .filter(|&e| e <= 100 || (e <= 1000 && e % 10 == 0) || e % 100 == 0)
        .collect();
    if epochs > 0 && e.last() != Some(&epochs) {
        e.push(epochs);
    }
    e
}

/// Calibrated rule plus configuration, shared by every run of a session.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub rule: RuleSpec,
    pub joint: JointDistribution,
    digest: String,
}

fn output_info(record: &ActivationRecord, joint: &JointDistribution, bins: usize) -> Result<InfoPoint> {
    let out = record.layers.last().expect("network has an output layer");
    let layer = DiscretizedLayer::from_activations(&out.values, out.width, bins, BinRange::SIGMOID)?;
    Ok(layer_plane_coords(&layer, joint, record.layers.len(), record.epoch))
}

fn linear_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (rule, joint) = config.rule.build()?;
        let digest = config.digest();
        Ok(Experiment {
            config,
            rule,
            joint,
            digest,
        })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn network(&self, hidden: &[usize], init_seed: u64) -> NetworkConfig {
        self.config.network.network(hidden, init_seed)
    }

    /// The reference plan: configured network and sample fraction.
    pub fn reference_plan(&self) -> RunPlan {
        RunPlan {
            label: "reference".into(),
            hidden: self.config.network.hidden.clone(),
            fraction: self.config.sample.fraction,
            threshold_bits: None,
            stop_at_threshold: false,
        }
    }

    /// Information-plane coordinates of every layer of a snapshot.
    pub fn plane_coords(&self, record: &ActivationRecord) -> Result<Vec<InfoPoint>> {
        let layers = discretize(record, self.config.info.bin_count, BinRange::TANH, BinRange::SIGMOID)?;
        Ok(layers
            .iter()
            .enumerate()
            .map(|(k, layer)| layer_plane_coords(layer, &self.joint, k + 1, record.epoch))
            .collect())
    }

    /// Fitted trade-off parameter of every binned layer of a snapshot.
    pub fn fit_betas(&self, record: &ActivationRecord) -> Result<Vec<LayerBetaFit>> {
        let betas = self.config.ib.betas();
        let layers = discretize(record, self.config.info.bin_count, BinRange::TANH, BinRange::SIGMOID)?;
        layers
            .iter()
            .enumerate()
            .map(|(k, layer)| {
                let fit = fit_layer_beta(&layer.symbols(), &self.joint, &betas)?;
                Ok(LayerBetaFit {
                    layer: k + 1,
                    beta_star: fit.beta,
                    objective_bits: fit.objective_bits,
                })
            })
            .collect()
    }

    /// One run of `plan`.
    pub fn run_one(&self, plan: &RunPlan, run_index: usize) -> Result<RunRecord> {
        let cfg = &self.config;
        let seed = run_seed(cfg.experiment.master_seed, run_index);
        let seeds = derive_seeds(seed);
        let net = self.network(&plan.hidden, seeds.init);
        net.validate()?;
        let sample = sample_training_set(&self.joint, plan.fraction, seeds.sample)?;
        let batch = Batch::from_sample(&sample);
        let schedule = cfg.schedule();
        let keep_stats = stats_epochs(net.epochs);
        let bins = cfg.info.bin_count;
        let n_layers = net.widths.len() - 1;

        let mut trainer = Trainer::new(init_weights(&net)?, &sample, &net);
        let initial_train_error = training_error(trainer.state(), &batch)?;
        let mut info_points = Vec::new();
        let mut full_stats: Vec<GradientStats> = Vec::with_capacity(net.epochs);
        let mut epochs_to_threshold = None;
        let mut final_record = None;
        let mut next_snapshot = 0;

        let mut observe = |state: &TrainState, info_points: &mut Vec<InfoPoint>| -> Result<ControlFlow<()>> {
            let epoch = state.epoch;
            let snapshot = schedule.get(next_snapshot) == Some(&epoch);
            let probe = plan.threshold_bits.is_some()
                && epochs_to_threshold.is_none()
                && epoch % cfg.depth.probe_interval == 0;
            let last = epoch == net.epochs;
            if !(snapshot || probe || last) {
                return Ok(ControlFlow::Continue(()));
            }
            let record = forward_all(state)?;
            if snapshot {
                next_snapshot += 1;
                info_points.extend(self.plane_coords(&record)?);
            }
            let mut flow = ControlFlow::Continue(());
            if let Some(threshold) = plan.threshold_bits {
                if epochs_to_threshold.is_none() && (probe || snapshot || last) {
                    if output_info(&record, &self.joint, bins)?.i_y >= threshold {
                        epochs_to_threshold = Some(epoch);
                        if plan.stop_at_threshold {
                            flow = ControlFlow::Break(());
                        }
                    }
                }
            }
            if last || flow.is_break() {
                final_record = Some(record);
            }
            Ok(flow)
        };

        let mut flow = observe(trainer.state(), &mut info_points)?;
        while flow.is_continue() && trainer.state().epoch < net.epochs {
            let grads = trainer.epoch(seeds.shuffle)?;
            full_stats.push(epoch_gradient_stats_with(&grads, trainer.state(), cfg.dynamics.include_bias));
            flow = observe(trainer.state(), &mut info_points)?;
        }
        let final_epoch = trainer.state().epoch;
        let final_train_error = training_error(trainer.state(), &batch)?;
        let final_state = trainer.into_state();

        let phase = detect_phase_transition(&full_stats, cfg.dynamics.window);
        let tail_start = full_stats.len() - full_stats.len() / 10;
        let late_snr_slope = (0..n_layers)
            .map(|l| {
                let pts: Vec<(f64, f64)> = full_stats[tail_start..]
                    .iter()
                    .filter_map(|s| s.layers[l].snr.filter(|&v| v > 0.0).map(|v| (s.epoch as f64, v.ln())))
                    .collect();
                linear_slope(&pts)
            })
            .collect();
        let gradient_stats = full_stats
            .into_iter()
            .filter(|s| keep_stats.binary_search(&s.epoch).is_ok() || s.epoch == final_epoch)
            .collect();

        let beta_fits = match &final_record {
            Some(record) if cfg.ib.fit_layers => self.fit_betas(record)?,
            _ => Vec::new(),
        };

        Ok(RunRecord {
            run_index,
            run_seed: seed,
            seeds,
            sample_size: sample.len(),
            final_epoch,
            info_points,
            gradient_stats,
            phase,
            late_snr_slope,
            beta_fits,
            epochs_to_threshold,
            initial_train_error,
            final_train_error,
            final_state,
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.experiment.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))
    }

    /// Runs every replication of `plan` on the worker pool and merges the
    /// results by run index.
    pub fn run_replicated(&self, plan: &RunPlan) -> Result<RunLog> {
        let start = Instant::now();
        let reps = self.config.experiment.replications;
        let results: Vec<Result<RunRecord>> =
            self.pool()?.install(|| (0..reps).into_par_iter().map(|i| self.run_one(plan, i)).collect());
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(run) => runs.push(run),
                Err(e) => failures.push(RunFailure {
                    run_index: i,
                    run_seed: run_seed(self.config.experiment.master_seed, i),
                    error: e.to_string(),
                }),
            }
        }
        if failures.len() as f64 > self.config.experiment.max_failure_fraction * reps as f64 {
            return Err(Error::TooManyFailures {
                failed: failures.len(),
                total: reps,
            });
        }
        let aggregate = aggregate(&runs);
        let net = self.network(&plan.hidden, 0);
        Ok(RunLog {
            label: plan.label.clone(),
            config_digest: self.digest.clone(),
            widths: net.widths,
            fraction: plan.fraction,
            mi_xy: self.joint.mi_xy(),
            epochs: net.epochs,
            runs,
            failures,
            aggregate,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Reference network trained on each configured sample fraction.
    pub fn fraction_panels(&self) -> Result<Vec<RunLog>> {
        self.config
            .sample
            .fractions
            .iter()
            .map(|&fraction| {
                self.run_replicated(&RunPlan {
                    label: format!("fraction-{fraction}"),
                    fraction,
                    ..self.reference_plan()
                })
            })
            .collect()
    }

    /// Networks of increasing depth on the depth-sweep sample, recording
    /// the epochs needed for the output to reach the `I(T;Y)` threshold.
    pub fn depth_sweep(&self) -> Result<Vec<RunLog>> {
        let d = &self.config.depth;
        let threshold = d.threshold_ratio * self.joint.mi_xy();
        d.depths
            .iter()
            .map(|&depth| {
                self.run_replicated(&RunPlan {
                    label: format!("depth-{depth}"),
                    hidden: d.hidden(depth)?,
                    fraction: d.fraction,
                    threshold_bits: Some(threshold),
                    stop_at_threshold: d.stop_at_threshold,
                })
            })
            .collect()
    }

    /// The sweep network trained on every configured sample fraction.
    pub fn sample_size_sweep(&self) -> Result<Vec<RunLog>> {
        let s = &self.config.sample;
        s.fractions
            .iter()
            .map(|&fraction| {
                self.run_replicated(&RunPlan {
                    label: format!("samples-{fraction}"),
                    hidden: s.sweep_hidden.clone(),
                    fraction,
                    threshold_bits: None,
                    stop_at_threshold: false,
                })
            })
            .collect()
    }
}

/// Arithmetic mean over runs at each (layer, epoch); an epoch missing from
/// a run is not filled in.
pub fn aggregate(runs: &[RunRecord]) -> Vec<AggregatePoint> {
    let mut acc: std::collections::BTreeMap<(usize, usize), (f64, f64, usize)> = Default::default();
    for run in runs {
        for p in &run.info_points {
            let e = acc.entry((p.layer, p.epoch)).or_insert((0.0, 0.0, 0));
            e.0 += p.i_x;
            e.1 += p.i_y;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|((layer, epoch), (x, y, n))| AggregatePoint {
            layer,
            epoch,
            i_x: x / n as f64,
            i_y: y / n as f64,
            runs: n,
        })
        .collect()
}

/// Median of finite values; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Experiment {
        let mut c = ExperimentConfig::default();
        c.experiment.replications = 3;
        c.experiment.workers = 1;
        c.network.hidden = vec![6, 3];
        c.network.epochs = 30;
        c.network.batch_size = 512;
        c.network.learning_rate = 0.05;
        c.ib.beta_points = 8;
        Experiment::new(c).unwrap()
    }

    #[test]
    fn seeds_are_pure_and_distinct() {
        assert_eq!(run_seed(3, 4), run_seed(3, 4));
        assert_ne!(run_seed(3, 4), run_seed(3, 5));
        assert_ne!(run_seed(3, 4), run_seed(4, 4));
        let s = derive_seeds(11);
        assert_eq!(s, derive_seeds(11));
        assert!(s.init != s.sample && s.sample != s.shuffle);
    }

    #[test]
    fn stats_epoch_grid() {
        let e = stats_epochs(10_000);
        assert_eq!(e[0], 1);
        assert!(e.contains(&100) && e.contains(&110) && e.contains(&1100));
        assert!(!e.contains(&101) && !e.contains(&1010));
        assert_eq!(*e.last().unwrap(), 10_000);
        assert_eq!(stats_epochs(7), vec![1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn single_replication_aggregate_is_the_run() {
        let mut exp = tiny();
        exp.config.experiment.replications = 1;
        let log = exp.run_replicated(&exp.reference_plan()).unwrap();
        assert_eq!(log.runs.len(), 1);
        let run = &log.runs[0];
        assert_eq!(log.aggregate.len(), run.info_points.len());
        for (a, p) in log.aggregate.iter().zip({
            let mut v = run.info_points.clone();
            v.sort_by_key(|p| (p.layer, p.epoch));
            v
        }) {
            assert_eq!((a.layer, a.epoch, a.i_x, a.i_y, a.runs), (p.layer, p.epoch, p.i_x, p.i_y, 1));
        }
    }

    #[test]
    fn replicated_runs_are_reproducible() {
        let exp = tiny();
        let a = exp.run_replicated(&exp.reference_plan()).unwrap();
        let b = exp.run_replicated(&exp.reference_plan()).unwrap();
        assert_eq!(a.runs, b.runs);
        assert_eq!(a.aggregate, b.aggregate);
        assert_eq!(a.runs.len(), 3);
        assert_eq!(a.runs[0].beta_fits.len(), 3);
        assert!(a.runs.iter().all(|r| r.final_epoch == 30));
    }

    #[test]
    fn threshold_probe_stops_early() {
        let exp = tiny();
        let plan = RunPlan {
            threshold_bits: Some(0.0),
            stop_at_threshold: true,
            ..exp.reference_plan()
        };
        let run = exp.run_one(&plan, 0).unwrap();
        assert_eq!(run.epochs_to_threshold, Some(0));
        assert_eq!(run.final_epoch, 0);
    }

    #[test]
    fn failure_budget() {
        let mut exp = tiny();
        exp.config.experiment.replications = 2;
        let plan = RunPlan {
            hidden: vec![0],
            ..exp.reference_plan()
        };
        assert!(matches!(exp.run_replicated(&plan), Err(Error::TooManyFailures { failed: 2, total: 2 })));
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
