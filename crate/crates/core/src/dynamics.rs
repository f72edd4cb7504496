//! Batch-to-batch gradient statistics and the drift/diffusion transition.

use serde::{Deserialize, Serialize};

use crate::net::{BatchGradient, TrainState};

/// SNR threshold separating drift from diffusion.
pub const SNR_THRESHOLD: f64 = 1.0;
/// Default number of consecutive low-SNR epochs required.
pub const DEFAULT_WINDOW: usize = 50;
const STD_FLOOR: f64 = 1e-15;

/// Normalized gradient statistics of one layer over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerGradientStats {
    pub mean_norm: f64,
    pub std_norm: f64,
    /// `None` when `std_norm` is (numerically) zero or fewer than two
    /// batches were seen.
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientStats {
    pub epoch: usize,
    pub layers: Vec<LayerGradientStats>,
}

/// Across-batch mean and elementwise standard deviation of every layer's
/// weight gradient, as Frobenius norms divided by that layer's current
/// weight norm. Bias gradients are excluded unless `include_bias` is set.
pub fn epoch_gradient_stats_with(
    batches: &[BatchGradient],
    state: &TrainState,
    include_bias: bool,
) -> GradientStats {
    let epoch = batches.first().map_or(state.epoch, |b| b.epoch);
    let n = batches.len() as f64;
    let layers = state
        .layers
        .iter()
        .enumerate()
        .map(|(k, layer)| {
            let entries = |g: &BatchGradient| -> Vec<f64> {
                let mut v = g.weights[k].clone();
                if include_bias {
                    v.extend_from_slice(&g.biases[k]);
                }
                v
            };
            let mut norm_sq = layer.weights.iter().map(|w| w * w).sum::<f64>();
            if include_bias {
                norm_sq += layer.bias.iter().map(|b| b * b).sum::<f64>();
            }
            let wnorm = norm_sq.sqrt();
            if batches.len() < 2 {
                let mean = batches.first().map(entries).unwrap_or_default();
                let m = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
                return LayerGradientStats {
                    mean_norm: m / wnorm,
                    std_norm: 0.0,
                    snr: None,
                };
            }
            let all: Vec<Vec<f64>> = batches.iter().map(entries).collect();
            let dim = all[0].len();
            let mut mean_sq = 0.0;
            let mut var_sum = 0.0;
            for e in 0..dim {
                let mean = all.iter().map(|g| g[e]).sum::<f64>() / n;
                let var = all.iter().map(|g| (g[e] - mean).powi(2)).sum::<f64>() / n;
                mean_sq += mean * mean;
                var_sum += var;
            }
            let mean_norm = mean_sq.sqrt() / wnorm;
            let std_norm = var_sum.sqrt() / wnorm;
            let snr = (std_norm >= STD_FLOOR).then(|| mean_norm / std_norm);
            LayerGradientStats {
                mean_norm,
                std_norm,
                snr,
            }
        })
        .collect();
    GradientStats { epoch, layers }
}

/// [`epoch_gradient_stats_with`] over weight gradients only.
pub fn epoch_gradient_stats(batches: &[BatchGradient], state: &TrainState) -> GradientStats {
    epoch_gradient_stats_with(batches, state, false)
}

/// Per-layer and global drift-to-diffusion transition epochs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub layers: Vec<Option<usize>>,
    pub global: Option<usize>,
    pub window: usize,
}

/// Lower median; `None` entries count as larger than any epoch.
pub fn median_epoch(values: &[Option<usize>]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<usize> = values.iter().map(|v| v.unwrap_or(usize::MAX)).collect();
    sorted.sort_unstable();
    let m = sorted[(sorted.len() - 1) / 2];
    (m != usize::MAX).then_some(m)
}

/// First epoch from which a layer's SNR stays below one for `window`
/// consecutive epochs; the global transition is the median over layers.
pub fn detect_phase_transition(series: &[GradientStats], window: usize) -> PhaseReport {
    assert!(window > 0, "window must be positive");
    let n_layers = series.first().map_or(0, |s| s.layers.len());
    let layers: Vec<Option<usize>> = (0..n_layers)
        .map(|k| {
            let mut run = 0;
            for (i, s) in series.iter().enumerate() {
                let low = matches!(s.layers[k].snr, Some(r) if r < SNR_THRESHOLD);
                run = if low { run + 1 } else { 0 };
                if run == window {
                    return Some(series[i + 1 - window].epoch);
                }
            }
            None
        })
        .collect();
    PhaseReport {
        global: median_epoch(&layers),
        layers,
        window,
    }
}
