//! Fully connected tanh network with a sigmoid decision unit, trained by
//! plain mini-batch SGD on cross-entropy.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{epoch_gradient_stats, GradientStats};
use crate::error::{Error, Result};
use crate::task::{input_matrix, Pattern, TrainingSample, N_INPUTS, N_PATTERNS};

/// Output probabilities are clamped to `[CLAMP, 1 - CLAMP]` inside the loss.
pub const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Layer widths from input to output, e.g. `[12, 10, 7, 5, 4, 3, 2, 1]`.
    pub widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub init_seed: u64,
}

impl NetworkConfig {
    /// `12 -> hidden... -> 1` with the reference optimizer settings.
    pub fn with_hidden(hidden: &[usize]) -> Self {
        let mut widths = vec![N_INPUTS];
        widths.extend_from_slice(hidden);
        widths.push(1);
        NetworkConfig {
            widths,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config("need at least input and output widths".into()));
        }
        if self.widths[0] != N_INPUTS {
            return Err(Error::Config(format!(
                "input width must be {N_INPUTS}, got {}",
                self.widths[0]
            )));
        }
        if *self.widths.last().unwrap() != 1 {
            return Err(Error::Config("output width must be 1".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            widths: vec![N_INPUTS, 10, 7, 5, 4, 3, 2, 1],
            learning_rate: 0.004,
            batch_size: 256,
            epochs: 10_000,
            init_seed: 0,
        }
    }
}

/// Dense layer; `weights[i * fan_out + j]` connects input `i` to unit `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.fan_out + j]
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn affine(&self, input: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &a) in input.iter().enumerate() {
            let row = &self.weights[i * self.fan_out..(i + 1) * self.fan_out];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub layers: Vec<Layer>,
    pub epoch: usize,
}

impl TrainState {
    pub fn from_layers(layers: Vec<Layer>) -> Self {
        for pair in layers.windows(2) {
            assert_eq!(pair[0].fan_out, pair[1].fan_in, "inconsistent layer shapes");
        }
        TrainState { layers, epoch: 0 }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        Self::from_layers(widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect())
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].fan_in];
        w.extend(self.layers.iter().map(|l| l.fan_out));
        w
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Output probability for a single input vector.
    pub fn predict(&self, input: &[f64]) -> f64 {
        let mut cur = input.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.fan_out];
            layer.affine(&cur, &mut out);
            activate(&mut out, k == last);
            cur = out;
        }
        cur[0]
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn activate(values: &mut [f64], output: bool) {
    if output {
        values.iter_mut().for_each(|v| *v = sigmoid(*v));
    } else {
        values.iter_mut().for_each(|v| *v = v.tanh());
    }
}

/// Weights drawn from `N(0, 1/fan_in)`, biases zero.
pub fn init_weights(config: &NetworkConfig) -> Result<TrainState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let layers = config
        .widths
        .windows(2)
        .map(|w| {
            let normal = Normal::new(0.0, 1.0 / (w[0] as f64).sqrt()).expect("positive scale");
            let mut layer = Layer::zeros(w[0], w[1]);
            layer.weights.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            layer
        })
        .collect();
    Ok(TrainState::from_layers(layers))
}

/// Activations of one layer over a set of inputs, row-major `n x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub width: usize,
    pub values: Vec<f64>,
}

impl LayerActivations {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.width..(n + 1) * self.width]
    }
}

/// Every layer's activations at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub epoch: usize,
    pub layers: Vec<LayerActivations>,
}

impl ActivationRecord {
    pub fn n_inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.values.len() / l.width)
    }
}

/// Forward pass over a row-major input matrix.
pub fn forward_inputs(state: &TrainState, inputs: &[f64]) -> Result<ActivationRecord> {
    let fan_in = state.layers[0].fan_in;
    assert_eq!(inputs.len() % fan_in, 0);
    let n = inputs.len() / fan_in;
    let last = state.layers.len() - 1;
    let mut layers: Vec<LayerActivations> = Vec::with_capacity(state.layers.len());
    for (k, layer) in state.layers.iter().enumerate() {
        let prev: &[f64] = if k == 0 { inputs } else { &layers[k - 1].values };
        let mut values = vec![0.0; n * layer.fan_out];
        for s in 0..n {
            let out = &mut values[s * layer.fan_out..(s + 1) * layer.fan_out];
            layer.affine(&prev[s * layer.fan_in..(s + 1) * layer.fan_in], out);
            activate(out, k == last);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFault(format!("activations of layer {}", k + 1)));
        }
        layers.push(LayerActivations {
            width: layer.fan_out,
            values,
        });
    }
    Ok(ActivationRecord {
        epoch: state.epoch,
        layers,
    })
}

/// Forward pass over the given patterns.
pub fn forward(state: &TrainState, patterns: &[Pattern]) -> Result<ActivationRecord> {
    let inputs: Vec<f64> = patterns.iter().flat_map(|p| p.inputs()).collect();
    forward_inputs(state, &inputs)
}

/// Forward pass over all 4096 patterns in index order.
pub fn forward_all(state: &TrainState) -> Result<ActivationRecord> {
    forward_inputs(state, &input_matrix())
}

/// Per-layer loss gradients of one batch. Layer `k` maps layer `k` inputs to
/// layer `k` outputs, like [`TrainState::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub epoch: usize,
    pub batch: usize,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl BatchGradient {
    fn zeros_like(state: &TrainState) -> Self {
        BatchGradient {
            epoch: 0,
            batch: 0,
            weights: state.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: state.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A labelled batch as a row-major input matrix plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn from_sample(sample: &TrainingSample) -> Self {
        let inputs = sample
            .indices
            .iter()
            .flat_map(|&x| Pattern::from_index(x as usize).unwrap().inputs())
            .collect();
        Batch {
            inputs,
            labels: sample.labels.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Reusable buffers for batched forward/backward passes.
#[derive(Debug, Clone)]
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    fn new(state: &TrainState, batch_size: usize) -> Self {
        let max_w = state.widths().into_iter().max().unwrap();
        Workspace {
            acts: state
                .layers
                .iter()
                .map(|l| vec![0.0; batch_size * l.fan_out])
                .collect(),
            delta: vec![0.0; max_w],
            delta_prev: vec![0.0; max_w],
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(CLAMP, 1.0 - CLAMP)
}

/// Mean cross-entropy over the rows `rows` of `inputs`, gradients written
/// into `grad` (overwritten).
fn loss_and_gradients_into(
    state: &TrainState,
    inputs: &[f64],
    labels: &[u8],
    rows: &[usize],
    ws: &mut Workspace,
    grad: &mut BatchGradient,
) -> f64 {
    let b = rows.len();
    let fan_in0 = state.layers[0].fan_in;
    let last = state.layers.len() - 1;
    for k in 0..=last {
        grad.weights[k].iter_mut().for_each(|g| *g = 0.0);
        grad.biases[k].iter_mut().for_each(|g| *g = 0.0);
    }
    let mut loss = 0.0;
    for (s, &row) in rows.iter().enumerate() {
        let x = &inputs[row * fan_in0..(row + 1) * fan_in0];
        for (k, layer) in state.layers.iter().enumerate() {
            let (before, here) = ws.acts.split_at_mut(k);
            let out = &mut here[0][s * layer.fan_out..(s + 1) * layer.fan_out];
            let input = if k == 0 {
                x
            } else {
                &before[k - 1][s * layer.fan_in..(s + 1) * layer.fan_in]
            };
            layer.affine(input, out);
            activate(out, k == last);
        }
        let y = f64::from(labels[row]);
        let raw = ws.acts[last][s];
        let p = clamp_prob(raw);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();

        // d loss / d z at the output; zero where the clamp is active.
        ws.delta[0] = if raw == p { (raw - y) / b as f64 } else { 0.0 };
        for k in (0..=last).rev() {
            let layer = &state.layers[k];
            let input = if k == 0 {
                x
            } else {
                &ws.acts[k - 1][s * layer.fan_in..(s + 1) * layer.fan_in]
            };
            let gw = &mut grad.weights[k];
            for (i, &a) in input.iter().enumerate() {
                let row = &mut gw[i * layer.fan_out..(i + 1) * layer.fan_out];
                for (g, &d) in row.iter_mut().zip(&ws.delta[..layer.fan_out]) {
                    *g += a * d;
                }
            }
            for (g, &d) in grad.biases[k].iter_mut().zip(&ws.delta[..layer.fan_out]) {
                *g += d;
            }
            if k > 0 {
                for (i, &a) in input.iter().enumerate() {
                    let row = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                    let back: f64 = row.iter().zip(&ws.delta[..layer.fan_out]).map(|(w, d)| w * d).sum();
                    ws.delta_prev[i] = back * (1.0 - a * a);
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
    }
    loss / b as f64
}

/// Mean cross-entropy of a batch and its backpropagated gradients.
pub fn loss_and_gradients(state: &TrainState, batch: &Batch) -> Result<(f64, BatchGradient)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let rows: Vec<usize> = (0..batch.len()).collect();
    let mut ws = Workspace::new(state, batch.len());
    let mut grad = BatchGradient::zeros_like(state);
    grad.epoch = state.epoch;
    let loss = loss_and_gradients_into(state, &batch.inputs, &batch.labels, &rows, &mut ws, &mut grad);
    if !loss.is_finite() {
        return Err(Error::NumericFault("loss".into()));
    }
    Ok((loss, grad))
}

/// Mean cross-entropy without gradients.
pub fn loss(state: &TrainState, batch: &Batch) -> Result<f64> {
    let record = forward_inputs(state, &batch.inputs)?;
    let out = &record.layers.last().unwrap().values;
    let total: f64 = out
        .iter()
        .zip(&batch.labels)
        .map(|(&raw, &y)| {
            let p = clamp_prob(raw);
            let y = f64::from(y);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Fraction of the batch misclassified at output threshold 0.5.
pub fn training_error(state: &TrainState, batch: &Batch) -> Result<f64> {
    let record = forward_inputs(state, &batch.inputs)?;
    let out = &record.layers.last().unwrap().values;
    let wrong = out
        .iter()
        .zip(&batch.labels)
        .filter(|(&p, &y)| (p >= 0.5) != (y == 1))
        .count();
    Ok(wrong as f64 / batch.len() as f64)
}

/// Shuffle order of one epoch, keyed by `(shuffle_seed, epoch)`.
pub fn epoch_order(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// In-place SGD driver that keeps its buffers between epochs.
pub struct Trainer {
    state: TrainState,
    batch: Batch,
    batch_size: usize,
    learning_rate: f64,
    ws: Workspace,
}

impl Trainer {
    pub fn new(state: TrainState, sample: &TrainingSample, config: &NetworkConfig) -> Self {
        let batch_size = config.batch_size.min(sample.len().max(1));
        let ws = Workspace::new(&state, batch_size);
        Trainer {
            state,
            batch: Batch::from_sample(sample),
            batch_size,
            learning_rate: config.learning_rate,
            ws,
        }
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn batch(&self) -> &Batch {
        &self.batch
    }

    /// One pass over the sample; returns the gradient of every batch.
    pub fn epoch(&mut self, shuffle_seed: u64) -> Result<Vec<BatchGradient>> {
        let epoch = self.state.epoch + 1;
        let order = epoch_order(self.batch.len(), shuffle_seed, epoch);
        let mut grads = Vec::with_capacity(order.len().div_ceil(self.batch_size));
        for (b, rows) in order.chunks(self.batch_size).enumerate() {
            let mut grad = BatchGradient::zeros_like(&self.state);
            grad.epoch = epoch;
            grad.batch = b;
            let loss = loss_and_gradients_into(
                &self.state,
                &self.batch.inputs,
                &self.batch.labels,
                rows,
                &mut self.ws,
                &mut grad,
            );
            if !loss.is_finite() {
                return Err(Error::NumericFault(format!("loss at epoch {epoch}, batch {b}")));
            }
            let eta = self.learning_rate;
            for (layer, (gw, gb)) in self.state.layers.iter_mut().zip(grad.weights.iter().zip(&grad.biases)) {
                layer.weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= eta * g);
                layer.bias.iter_mut().zip(gb).for_each(|(w, g)| *w -= eta * g);
            }
            grads.push(grad);
        }
        if !self.state.is_finite() {
            return Err(Error::NumericFault(format!("weights after epoch {epoch}")));
        }
        self.state.epoch = epoch;
        Ok(grads)
    }
}

/// One SGD epoch from `state`; returns the new state and the per-batch
/// gradients.
pub fn sgd_epoch(
    state: &TrainState,
    sample: &TrainingSample,
    config: &NetworkConfig,
    shuffle_seed: u64,
) -> Result<(TrainState, Vec<BatchGradient>)> {
    let mut trainer = Trainer::new(state.clone(), sample, config);
    let grads = trainer.epoch(shuffle_seed)?;
    Ok((trainer.into_state(), grads))
}

/// Receives training events as they happen.
pub trait TrainObserver {
    /// Called at every scheduled epoch with activations over all patterns.
    fn on_snapshot(&mut self, state: &TrainState, record: ActivationRecord) -> Result<()>;

    /// Called after every epoch with that epoch's gradient statistics.
    /// Returning `Break` ends training after this epoch.
    fn on_epoch(&mut self, _state: &TrainState, _stats: &GradientStats) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

/// Keeps every snapshot in memory.
#[derive(Debug, Default)]
pub struct CollectSnapshots {
    pub records: Vec<ActivationRecord>,
}

impl TrainObserver for CollectSnapshots {
    fn on_snapshot(&mut self, _state: &TrainState, record: ActivationRecord) -> Result<()> {
        self.records.push(record);
        Ok(())
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub gradient_stats: Vec<GradientStats>,
    /// Set when the run stopped early on a numeric fault.
    pub fault: Option<String>,
    /// Set when the observer asked to stop before the last epoch.
    pub stopped_early: bool,
}

/// Seeds that fully determine a training trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub init: u64,
    pub sample: u64,
    pub shuffle: u64,
}

/// Trains for `config.epochs` epochs, emitting snapshots at the scheduled
/// epochs (epoch 0 is the initial state). A numeric fault ends the run and
/// is reported in the outcome with everything logged so far.
pub fn train_with<O: TrainObserver>(
    config: &NetworkConfig,
    sample: &TrainingSample,
    schedule: &[usize],
    shuffle_seed: u64,
    observer: &mut O,
) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(&bad) = schedule.iter().find(|&&e| e > config.epochs) {
        return Err(Error::Config(format!(
            "snapshot epoch {bad} beyond {} epochs",
            config.epochs
        )));
    }
    let mut schedule = schedule.to_vec();
    schedule.sort_unstable();
    schedule.dedup();
    let mut next = schedule.iter().peekable();
    let inputs = input_matrix();

    let mut trainer = Trainer::new(init_weights(config)?, sample, config);
    let mut gradient_stats = Vec::with_capacity(config.epochs);
    let mut fault = None;
    let mut stopped_early = false;
    loop {
        let epoch = trainer.state().epoch;
        if next.peek() == Some(&&epoch) {
            next.next();
            match forward_inputs(trainer.state(), &inputs) {
                Ok(record) => observer.on_snapshot(trainer.state(), record)?,
                Err(e) => {
                    fault = Some(e.to_string());
                    break;
                }
            }
        }
        if epoch == config.epochs {
            break;
        }
        match trainer.epoch(shuffle_seed) {
            Ok(grads) => {
                let stats = epoch_gradient_stats(&grads, trainer.state());
                let flow = observer.on_epoch(trainer.state(), &stats);
                gradient_stats.push(stats);
                if flow.is_break() {
                    stopped_early = trainer.state().epoch < config.epochs;
                    break;
                }
            }
            Err(e) => {
                fault = Some(e.to_string());
                break;
            }
        }
    }
    Ok(TrainOutcome {
        state: trainer.into_state(),
        gradient_stats,
        fault,
        stopped_early,
    })
}

/// [`train_with`] collecting all snapshots.
pub fn train(
    config: &NetworkConfig,
    sample: &TrainingSample,
    schedule: &[usize],
    shuffle_seed: u64,
) -> Result<(TrainOutcome, Vec<ActivationRecord>)> {
    let mut collect = CollectSnapshots::default();
    let outcome = train_with(config, sample, schedule, shuffle_seed, &mut collect)?;
    Ok((outcome, collect.records))
}

/// Serialized network with its configuration and seed provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    /// Seed the three run seeds were derived from.
    pub run_seed: u64,
    pub seeds: RunSeeds,
    pub sample_fraction: f64,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// Number of patterns the network is evaluated on for snapshots.
pub const SNAPSHOT_PATTERNS: usize = N_PATTERNS;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{sample_training_set, JointDistribution};

    fn toy_sample(fraction: f64, seed: u64) -> TrainingSample {
        let joint = JointDistribution::from_conditional(
            Pattern::all().map(|p| if p.bit(0) ^ p.bit(5) == 1 { 0.9 } else { 0.1 }).collect(),
        )
        .unwrap();
        sample_training_set(&joint, fraction, seed).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_expected_shapes() {
        let config = NetworkConfig::default();
        let a = init_weights(&config).unwrap();
        let b = init_weights(&config).unwrap();
        assert_eq!(a, b);
        let shapes: Vec<(usize, usize)> = a.layers.iter().map(|l| (l.fan_in, l.fan_out)).collect();
        assert_eq!(shapes, vec![(12, 10), (10, 7), (7, 5), (5, 4), (4, 3), (3, 2), (2, 1)]);
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_entries_are_centered_and_scaled() {
        // 10^4 draws of sqrt(fan_in) * w should look like N(0, 1).
        let mut draws = Vec::new();
        let mut seed = 0;
        while draws.len() < 10_000 {
            let config = NetworkConfig {
                widths: vec![12, 50, 1],
                init_seed: seed,
                ..NetworkConfig::default()
            };
            let s = init_weights(&config).unwrap();
            for l in &s.layers {
                let scale = (l.fan_in as f64).sqrt();
                draws.extend(l.weights.iter().map(|w| w * scale));
            }
            seed += 1;
        }
        draws.truncate(10_000);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn invalid_configs() {
        let mut c = NetworkConfig::default();
        c.widths[0] = 11;
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::default();
        *c.widths.last_mut().unwrap() = 2;
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::default();
        c.widths[2] = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_network_outputs_half() {
        let state = TrainState::zeros(&[12, 10, 7, 1]);
        let rec = forward(&state, &[Pattern::from_index(1234).unwrap()]).unwrap();
        for l in &rec.layers[..2] {
            assert!(l.values.iter().all(|&v| v == 0.0));
        }
        assert_eq!(rec.layers[2].values[0], 0.5);
    }

    #[test]
    fn single_unit_at_zero() {
        let mut state = TrainState::zeros(&[1, 1, 1]);
        state.layers[0].weights[0] = 1.0;
        let rec = forward_inputs(&state, &[0.0]).unwrap();
        assert_eq!(rec.layers[0].values[0], 0.0);
    }

    #[test]
    fn forward_matches_straight_line_evaluator() {
        let config = NetworkConfig {
            init_seed: 99,
            ..NetworkConfig::default()
        };
        let mut state = init_weights(&config).unwrap();
        for (k, l) in state.layers.iter_mut().enumerate() {
            for (j, b) in l.bias.iter_mut().enumerate() {
                *b = 0.1 * (k as f64 + 1.0) - 0.05 * j as f64;
            }
        }
        let p = Pattern::from_index(0b1100_1010_0111).unwrap();
        let rec = forward(&state, &[p]).unwrap();

        // Independent evaluator: explicit sums with (i, j) indexing.
        let mut h: Vec<f64> = p.inputs().to_vec();
        for (k, l) in state.layers.iter().enumerate() {
            let mut next = Vec::new();
            for j in 0..l.fan_out {
                let mut z = l.bias[j];
                for i in 0..l.fan_in {
                    z += l.weights[i * l.fan_out + j] * h[i];
                }
                next.push(if k + 1 == state.layers.len() { 1.0 / (1.0 + (-z).exp()) } else { z.tanh() });
            }
            for (j, &v) in next.iter().enumerate() {
                assert!((rec.layers[k].values[j] - v).abs() < 1e-12);
            }
            h = next;
        }
    }

    #[test]
    fn activation_ranges() {
        let state = init_weights(&NetworkConfig::default()).unwrap();
        let rec = forward_all(&state).unwrap();
        assert_eq!(rec.n_inputs(), 4096);
        let last = rec.layers.len() - 1;
        for (k, l) in rec.layers.iter().enumerate() {
            let (lo, hi) = if k == last { (0.0, 1.0) } else { (-1.0, 1.0) };
            assert!(l.values.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
        }
    }

    #[test]
    fn zero_network_balanced_batch_loss_is_ln2() {
        let state = TrainState::zeros(&[12, 4, 1]);
        let batch = Batch {
            inputs: [Pattern::from_index(3).unwrap().inputs(), Pattern::from_index(9).unwrap().inputs()].concat(),
            labels: vec![0, 1],
        };
        let (l, _) = loss_and_gradients(&state, &batch).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_network_has_tiny_gradient() {
        // A huge output bias makes every prediction 1 (clamped); all labels 1.
        let mut state = TrainState::zeros(&[12, 3, 1]);
        state.layers[1].bias[0] = 50.0;
        let batch = Batch {
            inputs: (0..8).flat_map(|i| Pattern::from_index(i * 100).unwrap().inputs()).collect(),
            labels: vec![1; 8],
        };
        let (l, g) = loss_and_gradients(&state, &batch).unwrap();
        assert!(l <= -(1.0 - CLAMP).ln() + 1e-15);
        assert!(g.max_abs() <= 1e-6);
    }

    #[test]
    fn empty_batch_rejected() {
        let state = TrainState::zeros(&[12, 3, 1]);
        let batch = Batch { inputs: vec![], labels: vec![] };
        assert!(loss_and_gradients(&state, &batch).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_state() {
        let config = NetworkConfig {
            widths: vec![12, 6, 3, 1],
            learning_rate: 0.0,
            batch_size: 64,
            ..NetworkConfig::default()
        };
        let sample = toy_sample(0.5, 4);
        let state = init_weights(&config).unwrap();
        let (next, grads) = sgd_epoch(&state, &sample, &config, 8).unwrap();
        assert_eq!(next.layers, state.layers);
        assert_eq!(next.epoch, 1);
        assert_eq!(grads.len(), 2048usize.div_ceil(64));
    }

    #[test]
    fn single_full_batch_is_a_gradient_step() {
        let config = NetworkConfig {
            widths: vec![12, 6, 3, 1],
            learning_rate: 0.1,
            batch_size: 10_000,
            ..NetworkConfig::default()
        };
        let sample = toy_sample(0.25, 4);
        let state = init_weights(&config).unwrap();
        let (next, grads) = sgd_epoch(&state, &sample, &config, 8).unwrap();
        assert_eq!(grads.len(), 1);
        let (_, full) = loss_and_gradients(&state, &Batch::from_sample(&sample)).unwrap();
        for (k, l) in next.layers.iter().enumerate() {
            for (i, w) in l.weights.iter().enumerate() {
                let expected = state.layers[k].weights[i] - 0.1 * full.weights[k][i];
                assert!((w - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn update_is_exactly_minus_eta_grad() {
        let config = NetworkConfig {
            widths: vec![12, 5, 1],
            learning_rate: 0.05,
            batch_size: 32,
            ..NetworkConfig::default()
        };
        let sample = toy_sample(0.1, 2);
        let mut trainer = Trainer::new(init_weights(&config).unwrap(), &sample, &config);
        let before = trainer.state().clone();
        let grads = trainer.epoch(3).unwrap();
        // Replay the updates in order; nothing else may touch the weights.
        let mut replay = before;
        for g in &grads {
            for (k, l) in replay.layers.iter_mut().enumerate() {
                l.weights.iter_mut().zip(&g.weights[k]).for_each(|(w, d)| *w -= 0.05 * d);
                l.bias.iter_mut().zip(&g.biases[k]).for_each(|(w, d)| *w -= 0.05 * d);
            }
        }
        assert_eq!(replay.layers, trainer.state().layers);
    }

    #[test]
    fn training_is_deterministic() {
        let config = NetworkConfig {
            widths: vec![12, 6, 3, 1],
            epochs: 5,
            batch_size: 64,
            init_seed: 17,
            ..NetworkConfig::default()
        };
        let sample = toy_sample(0.3, 4);
        let (a, ra) = train(&config, &sample, &[0, 2, 5], 21).unwrap();
        let (b, rb) = train(&config, &sample, &[0, 2, 5], 21).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(ra, rb);
        assert_eq!(a.gradient_stats, b.gradient_stats);
    }

    #[test]
    fn snapshot_schedule() {
        let config = NetworkConfig {
            widths: vec![12, 4, 1],
            epochs: 0,
            ..NetworkConfig::default()
        };
        let sample = toy_sample(0.3, 4);
        let (out, recs) = train(&config, &sample, &[0], 1).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].epoch, 0);
        assert!(out.gradient_stats.is_empty());

        let config = NetworkConfig { epochs: 12, ..config };
        let (_, recs) = train(&config, &sample, &[0, 4, 9], 1).unwrap();
        assert_eq!(recs.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 4, 9]);
        assert!(train(&config, &sample, &[13], 1).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let config = NetworkConfig::default();
        let cp = Checkpoint {
            state: init_weights(&config).unwrap(),
            config,
            run_seed: 9,
            seeds: RunSeeds { init: 0, sample: 1, shuffle: 2 },
            sample_fraction: 0.85,
        };
        assert_eq!(Checkpoint::from_json(&cp.to_json().unwrap()).unwrap(), cp);
    }
}
