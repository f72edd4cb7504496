mod common;

use common::{deterministic_partitions, soft_problem, toy};
use infoplane::ib::{
    anneal, empirical_conditional, empirical_info_curve, fit_beta, ib_fixed_point, information_curve, log_grid,
    sparse_encoder, IbOptions, IbProblem,
};
use infoplane::task::{reference_sphere_rule, sample_training_set, JointDistribution};

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Binary symmetric channel with crossover `eps`: the optimal bottleneck is
/// itself a symmetric channel with crossover `q`, traced by the scalar
/// stationarity condition `1/beta = (1 - 2 eps) h'(eps*q) / h'(q)`.
fn bsc_point(eps: f64, beta: f64) -> (f64, f64) {
    let logit = |p: f64| ((1.0 - p) / p).ln();
    let conv = |q: f64| eps * (1.0 - q) + q * (1.0 - eps);
    let ratio = |q: f64| (1.0 - 2.0 * eps) * logit(conv(q)) / logit(q);
    let (mut lo, mut hi) = (1e-15, 0.5 - 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // ratio rises from 0 at q = 0 to (1 - 2 eps)^2 at q = 1/2
        if ratio(mid) < 1.0 / beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    (1.0 - h2(q), 1.0 - h2(conv(q)))
}

#[test]
fn binary_symmetric_channel_matches_closed_form() {
    let eps = 0.1;
    let problem = IbProblem::new(vec![0.5, 0.5], vec![1.0 - eps, eps, eps, 1.0 - eps], 2).unwrap();
    let critical = 1.0 / (1.0 - 2.0 * eps).powi(2);
    let opts = IbOptions::default();
    for beta in [1.8, 3.0, 8.0] {
        assert!(beta > critical);
        let init = vec![0.9, 0.1, 0.2, 0.8];
        let sol = ib_fixed_point(&problem, beta, 2, &init, &opts).unwrap();
        assert!(sol.converged && sol.residual < 1e-8);
        let (ix, iy) = bsc_point(eps, beta);
        assert!((sol.i_x - ix).abs() < 1e-4, "beta {beta}: I_X {} vs {ix}", sol.i_x);
        assert!((sol.i_y - iy).abs() < 1e-4, "beta {beta}: I_Y {} vs {iy}", sol.i_y);
    }
}

#[test]
fn toy_fixed_points_dominate_deterministic_partitions() {
    let problem = toy();
    let partitions = deterministic_partitions(&problem);
    let betas = log_grid(0.5, 200.0, 40);
    let trace = anneal(&problem, &betas, 2, 3, &IbOptions::default()).unwrap();
    for sol in trace.solutions.iter().filter(|s| s.converged) {
        for &(ix, iy) in &partitions {
            assert!(
                sol.lagrangian() <= ix - sol.beta * iy + 1e-9,
                "beta {}: fixed point L {} above partition ({ix}, {iy})",
                sol.beta,
                sol.lagrangian()
            );
            if ix <= sol.i_x + 1e-12 {
                assert!(sol.i_y >= iy - 1e-9, "beta {}: partition ({ix}, {iy}) beats fixed point", sol.beta);
            }
        }
    }
}

#[test]
fn reference_curve_is_monotone_concave_and_reaches_the_ceiling() {
    let (_, joint) = reference_sphere_rule().unwrap();
    let betas = log_grid(0.1, 1e4, 64);
    let curve = information_curve(&joint, &betas, 256, 0, &IbOptions::default()).unwrap();
    assert!(curve.points.len() > 10);
    assert!(curve.points.iter().all(|p| p.residual < 1e-8));
    assert!(curve.is_monotone_concave(1e-6));
    assert!((curve.last().unwrap().i_y - joint.mi_xy()).abs() < 1e-3);
    let violations = curve.slope_violations(0.10, 1e-3);
    assert!(violations.is_empty(), "{violations:?}");
}

#[test]
fn planted_beta_is_recovered() {
    let problem = soft_problem();
    let betas = log_grid(0.1, 1e4, 64);
    let trace = anneal(&problem, &betas, 8, 1, &IbOptions::default()).unwrap();
    for beta0 in [7.5, 40.0, 150.0] {
        let warm = trace.solutions.iter().filter(|s| s.beta <= beta0).last().unwrap();
        let sol = ib_fixed_point(&problem, beta0, 8, &warm.encoder, &IbOptions::default()).unwrap();
        assert!(sol.converged && sol.i_x > 0.1, "planted solution is trivial");
        let enc = sparse_encoder(&sol.encoder, 8);
        let fit = fit_beta(&enc, &sol.decoder, 8, &problem, &betas).unwrap();
        assert!((fit.beta / beta0 - 1.0).abs() < 0.01, "planted {beta0}, fitted {}", fit.beta);
        assert!(fit.objective_bits <= 1e-9, "objective {}", fit.objective_bits);
    }
}

#[test]
fn empirical_curve_with_exact_labels_matches_exact_curve() {
    let p_y1: Vec<f64> = (0..4096).map(|x: usize| f64::from(x.count_ones() % 3 == 0)).collect();
    let joint = JointDistribution::from_conditional(p_y1).unwrap();
    let full = sample_training_set(&joint, 1.0, 4).unwrap();
    let conditional = empirical_conditional(&full, 4096).unwrap();
    assert_eq!(conditional, joint.p_y1());
    let betas = log_grid(0.1, 1e3, 24);
    let opts = IbOptions::default();
    let a = information_curve(&joint, &betas, 16, 0, &opts).unwrap();
    let b = empirical_info_curve(&conditional, &betas, 16, 0, &opts).unwrap();
    assert_eq!(a.points.len(), b.points.len());
    for (p, q) in a.points.iter().zip(&b.points) {
        assert!((p.i_x - q.i_x).abs() < 1e-8 && (p.i_y - q.i_y).abs() < 1e-8);
    }
}

#[test]
fn small_sample_curve_lies_below_full_curve() {
    let (_, joint) = reference_sphere_rule().unwrap();
    let betas = log_grid(0.1, 1e4, 64);
    let opts = IbOptions::default();
    let full = information_curve(&joint, &betas, 256, 0, &opts).unwrap();
    let sample = sample_training_set(&joint, 0.05, 8).unwrap();
    let conditional = empirical_conditional(&sample, 4096).unwrap();
    let small = empirical_info_curve(&conditional, &betas, 256, 0, &opts).unwrap();
    let mut compared = 0;
    for p in &small.points {
        if let Some(iy) = full.i_y_at(p.i_x) {
            assert!(p.i_y <= iy + 1e-6, "at I_X {}: {} above {iy}", p.i_x, p.i_y);
            compared += 1;
        }
    }
    assert!(compared > 5);
}
