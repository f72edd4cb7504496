use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::joint::JointDistribution;
use crate::error::{Error, Result};

/// Patterns drawn without replacement, each with one sampled hard label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub indices: Vec<u16>,
    pub labels: Vec<u8>,
    pub fraction_ppm: u32,
    pub seed: u64,
}

impl TrainingSample {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn fraction(&self) -> f64 {
        self.fraction_ppm as f64 / 1e6
    }
}

/// `round(fraction * n)`, never zero.
pub fn sample_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

/// Uniform sample of `round(fraction * |X|)` patterns, labels drawn once
/// from `p(y|x)`. Indices are returned in ascending order.
pub fn sample_training_set(
    joint: &JointDistribution,
    fraction: f64,
    seed: u64,
) -> Result<TrainingSample> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("sample fraction {fraction} outside (0,1]")));
    }
    let n = joint.n_patterns();
    let size = sample_size(fraction, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = index::sample(&mut rng, n, size).into_vec();
    indices.sort_unstable();
    let labels = indices
        .iter()
        .map(|&x| u8::from(rng.random::<f64>() < joint.p_y1()[x]))
        .collect();
    Ok(TrainingSample {
        indices: indices.into_iter().map(|x| x as u16).collect(),
        labels,
        fraction_ppm: (fraction * 1e6).round() as u32,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint() -> JointDistribution {
        JointDistribution::from_conditional((0..4096).map(|i| (i % 7) as f64 / 6.0).collect()).unwrap()
    }

    #[test]
    fn sizes() {
        let j = joint();
        assert_eq!(sample_training_set(&j, 1.0, 1).unwrap().len(), 4096);
        assert_eq!(sample_training_set(&j, 0.85, 1).unwrap().len(), 3482);
        assert_eq!(sample_training_set(&j, 0.03, 1).unwrap().len(), 123);
        let full = sample_training_set(&j, 1.0, 1).unwrap();
        assert!(full.indices.iter().enumerate().all(|(i, &x)| i == x as usize));
    }

    #[test]
    fn deterministic_per_seed() {
        let j = joint();
        assert_eq!(
            sample_training_set(&j, 0.45, 9).unwrap(),
            sample_training_set(&j, 0.45, 9).unwrap()
        );
        assert_ne!(
            sample_training_set(&j, 0.45, 9).unwrap(),
            sample_training_set(&j, 0.45, 10).unwrap()
        );
    }

    #[test]
    fn labels_follow_conditional() {
        let j = joint();
        let s = sample_training_set(&j, 1.0, 3).unwrap();
        for (&x, &y) in s.indices.iter().zip(&s.labels) {
            let p = j.p_y1()[x as usize];
            if p == 0.0 {
                assert_eq!(y, 0);
            }
            if p == 1.0 {
                assert_eq!(y, 1);
            }
        }
        let ones: usize = s.labels.iter().map(|&y| y as usize).sum();
        let expected = j.prior() * 4096.0;
        assert!((ones as f64 - expected).abs() < 4.0 * (expected * 0.5).sqrt());
    }

    #[test]
    fn bad_fraction() {
        assert!(sample_training_set(&joint(), 0.0, 1).is_err());
        assert!(sample_training_set(&joint(), 1.5, 1).is_err());
    }
}
