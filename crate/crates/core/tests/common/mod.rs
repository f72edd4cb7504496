#![allow(dead_code)]

use infoplane::ib::IbProblem;
use infoplane::mi::{mutual_information, JointTable};
use infoplane::net::{init_weights, loss, loss_and_gradients, Batch, NetworkConfig, TrainState};
use infoplane::task::Pattern;

/// Seeded 12-6-3-1 network and a 64-pattern batch with mixed labels.
pub fn small_problem(seed: u64) -> (TrainState, Batch) {
    let mut config = NetworkConfig::with_hidden(&[6, 3]);
    config.init_seed = seed;
    let state = init_weights(&config).unwrap();
    let rows: Vec<usize> = (0..64).map(|k| (k * 613 + seed as usize * 97) % 4096).collect();
    let inputs = rows
        .iter()
        .flat_map(|&x| Pattern::from_index(x).unwrap().inputs())
        .collect();
    let labels = rows.iter().map(|&x| (x.count_ones() % 2) as u8).collect();
    (state, Batch { inputs, labels })
}

/// Largest relative difference between backprop and central differences
/// over every weight and bias; the denominator is floored at `floor`.
pub fn finite_difference_error(state: &TrainState, batch: &Batch, step: f64, floor: f64) -> Vec<f64> {
    let (_, grad) = loss_and_gradients(state, batch).unwrap();
    let mut worst = vec![0.0f64; state.layers.len()];
    for k in 0..state.layers.len() {
        let n_w = state.layers[k].weights.len();
        let n_b = state.layers[k].bias.len();
        for idx in 0..n_w + n_b {
            let perturbed = |delta: f64| {
                let mut s = state.clone();
                if idx < n_w {
                    s.layers[k].weights[idx] += delta;
                } else {
                    s.layers[k].bias[idx - n_w] += delta;
                }
                loss(&s, batch).unwrap()
            };
            let numeric = (perturbed(step) - perturbed(-step)) / (2.0 * step);
            let analytic = if idx < n_w {
                grad.weights[k][idx]
            } else {
                grad.biases[k][idx - n_w]
            };
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(floor);
            worst[k] = worst[k].max(rel);
        }
    }
    worst
}

/// Mutual information of a joint table in bits by an explicit double loop.
pub fn mi_double_loop(p: &[Vec<f64>]) -> f64 {
    let rows = p.len();
    let cols = p[0].len();
    let mut total = 0.0;
    for a in 0..rows {
        for b in 0..cols {
            if p[a][b] > 0.0 {
                let pa: f64 = (0..cols).map(|j| p[a][j]).sum();
                let pb: f64 = (0..rows).map(|i| p[i][b]).sum();
                total += p[a][b] * (p[a][b] / (pa * pb)).log2();
            }
        }
    }
    total
}

pub fn toy() -> IbProblem {
    IbProblem::new(vec![0.25; 4], vec![0.9, 0.1, 0.7, 0.3, 0.35, 0.65, 0.05, 0.95], 2).unwrap()
}

/// `(I_X, I_Y)` in bits of every deterministic map of four inputs onto two
/// clusters.
pub fn deterministic_partitions(problem: &IbProblem) -> Vec<(f64, f64)> {
    (0..16u32)
        .map(|mask| {
            let mut xt = vec![0.0; 8];
            let mut ty = vec![0.0; 4];
            for x in 0..4 {
                let t = ((mask >> x) & 1) as usize;
                xt[x * 2 + t] = problem.p_x()[x];
                for y in 0..2 {
                    ty[t * 2 + y] += problem.p_x()[x] * problem.conditional(x)[y];
                }
            }
            let ix = mutual_information(&JointTable::new(4, 2, xt).unwrap()).unwrap();
            let iy = mutual_information(&JointTable::new(2, 2, ty).unwrap()).unwrap();
            (ix, iy)
        })
        .collect()
}

/// Sixteen inputs with soft, distinct conditionals so that the optimal
/// encoders stay stochastic over a wide range of `beta`.
pub fn soft_problem() -> IbProblem {
    let p_x: Vec<f64> = (0..16).map(|x| (1 + x % 5) as f64).collect();
    let total: f64 = p_x.iter().sum();
    let p_y_x = (0..16)
        .flat_map(|x| {
            let p = 0.15 + 0.7 * x as f64 / 15.0;
            [1.0 - p, p]
        })
        .collect();
    IbProblem::new(p_x.iter().map(|v| v / total).collect(), p_y_x, 2).unwrap()
}
