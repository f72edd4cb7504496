mod common;

use common::{finite_difference_error, small_problem};

#[test]
fn backprop_matches_central_differences() {
    for seed in [1, 2, 3] {
        let (state, batch) = small_problem(seed);
        let worst = finite_difference_error(&state, &batch, 1e-5, 1e-6);
        for (k, err) in worst.iter().enumerate() {
            assert!(*err <= 1e-6, "seed {seed} layer {k}: relative error {err:e}");
        }
    }
}

#[test]
fn trained_network_still_matches() {
    use infoplane::net::{Trainer, NetworkConfig};
    use infoplane::task::{reference_sphere_rule, sample_training_set};

    let (_, joint) = reference_sphere_rule().unwrap();
    let sample = sample_training_set(&joint, 0.1, 5).unwrap();
    let mut config = NetworkConfig::with_hidden(&[6, 3]);
    config.learning_rate = 0.2;
    config.batch_size = 64;
    let (state, batch) = small_problem(4);
    let mut trainer = Trainer::new(state, &sample, &config);
    for _ in 0..30 {
        trainer.epoch(9).unwrap();
    }
    // trained gradients have entries near the round-off level of the differences
    let worst = finite_difference_error(trainer.state(), &batch, 1e-5, 1e-4);
    assert!(worst.iter().all(|&e| e <= 1e-6), "{worst:?}");
}
