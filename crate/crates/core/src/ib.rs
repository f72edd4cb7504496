//! Information Bottleneck fixed-point solver, deterministic annealing along
//! the trade-off parameter, and per-layer trade-off fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mi::{mutual_information_sparse, LayerSymbols};
use crate::task::{JointDistribution, TrainingSample};

/// Decoder entries are smoothed by this amount before taking logs.
pub const DECODER_SMOOTHING: f64 = 1e-12;
/// Default cluster count for curve tracing.
pub const DEFAULT_CLUSTERS: usize = 256;
/// Relative size of the annealing perturbation.
pub const ANNEAL_PERTURBATION: f64 = 1e-3;

/// Log-spaced grid of `n` values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// The default 64-point grid on `[0.1, 1e4]`.
pub fn default_beta_grid() -> Vec<f64> {
    log_grid(0.1, 1e4, 64)
}

/// Source distribution for the IB problem: `p(x)` and rows `p(y|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IbProblem {
    p_x: Vec<f64>,
    p_y_x: Vec<f64>,
    n_y: usize,
}

impl IbProblem {
    pub fn new(p_x: Vec<f64>, p_y_x: Vec<f64>, n_y: usize) -> Result<Self> {
        if n_y == 0 || p_y_x.len() != p_x.len() * n_y {
            return Err(Error::InvalidDistribution("conditional table has the wrong shape".into()));
        }
        let total: f64 = p_x.iter().sum();
        if (total - 1.0).abs() > 1e-9 || p_x.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("p(x) sums to {total}")));
        }
        for row in p_y_x.chunks(n_y) {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidDistribution(format!("p(y|x) row sums to {s}")));
            }
        }
        Ok(IbProblem { p_x, p_y_x, n_y })
    }

    pub fn from_joint(joint: &JointDistribution) -> Self {
        let p_y_x = joint.p_y1().iter().flat_map(|&p| [1.0 - p, p]).collect();
        IbProblem {
            p_x: joint.p_x().to_vec(),
            p_y_x,
            n_y: 2,
        }
    }

    pub fn n_x(&self) -> usize {
        self.p_x.len()
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn p_x(&self) -> &[f64] {
        &self.p_x
    }

    pub fn conditional(&self, x: usize) -> &[f64] {
        &self.p_y_x[x * self.n_y..(x + 1) * self.n_y]
    }

    pub fn p_y(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n_y];
        for x in 0..self.n_x() {
            for (acc, &c) in p.iter_mut().zip(self.conditional(x)) {
                *acc += self.p_x[x] * c;
            }
        }
        p
    }

    pub fn mi_xy(&self) -> f64 {
        let n_y = self.n_y;
        mutual_information_sparse(
            self.n_x(),
            n_y,
            (0..self.n_x() * n_y).map(move |k| (k / n_y, k % n_y, self.p_x[k / n_y] * self.p_y_x[k])),
        )
    }

    /// Merges inputs with identical conditionals (within `1e-12`). Since
    /// `X -> group` is sufficient for `Y`, the IB curve is unchanged.
    /// Returns the merged problem and the group of every original input.
    pub fn merge_sufficient(&self) -> (IbProblem, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.n_x()).collect();
        order.sort_by(|&a, &b| {
            self.conditional(a)
                .iter()
                .zip(self.conditional(b))
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut group = vec![0; self.n_x()];
        let mut p_x: Vec<f64> = Vec::new();
        let mut p_y_x: Vec<f64> = Vec::new();
        let mut last: Option<usize> = None;
        for &x in &order {
            let same = last.is_some_and(|l| {
                self.conditional(l)
                    .iter()
                    .zip(self.conditional(x))
                    .all(|(u, v)| (u - v).abs() <= 1e-12)
            });
            if !same {
                p_x.push(0.0);
                p_y_x.extend_from_slice(self.conditional(x));
                last = Some(x);
            }
            let g = p_x.len() - 1;
            p_x[g] += self.p_x[x];
            group[x] = g;
        }
        (
            IbProblem {
                p_x,
                p_y_x,
                n_y: self.n_y,
            },
            group,
        )
    }
}

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbOptions {
    /// Stop when no encoder entry moves by more than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// A solution counts as converged only below this residual.
    pub residual_tolerance: f64,
}

impl Default for IbOptions {
    fn default() -> Self {
        IbOptions {
            tolerance: 1e-10,
            max_iterations: 50_000,
            residual_tolerance: 1e-8,
        }
    }
}

/// A point of the IB self-consistent equations.
#[derive(Debug, Clone, PartialEq)]
pub struct IbSolution {
    pub beta: f64,
    pub n_t: usize,
    /// `p(t|x)`, row-major `n_x x n_t`.
    pub encoder: Vec<f64>,
    /// `p(y|t)`, row-major `n_t x n_y`.
    pub decoder: Vec<f64>,
    pub marginal: Vec<f64>,
    pub i_x: f64,
    pub i_y: f64,
    /// Max-norm violation of the three self-consistent equations.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl IbSolution {
    pub fn encoder_row(&self, x: usize) -> &[f64] {
        &self.encoder[x * self.n_t..(x + 1) * self.n_t]
    }

    /// `I(X;T) - beta I(T;Y)` in bits.
    pub fn lagrangian(&self) -> f64 {
        self.i_x - self.beta * self.i_y
    }
}

fn marginal_and_decoder(problem: &IbProblem, encoder: &[f64], n_t: usize) -> (Vec<f64>, Vec<f64>) {
    let n_y = problem.n_y;
    let mut p_t = vec![0.0; n_t];
    let mut p_ty = vec![0.0; n_t * n_y];
    for x in 0..problem.n_x() {
        let px = problem.p_x[x];
        let cond = problem.conditional(x);
        for (t, &e) in encoder[x * n_t..(x + 1) * n_t].iter().enumerate() {
            let w = px * e;
            p_t[t] += w;
            for (y, &c) in cond.iter().enumerate() {
                p_ty[t * n_y + y] += w * c;
            }
        }
    }
    let p_y = problem.p_y();
    for t in 0..n_t {
        let row = &mut p_ty[t * n_y..(t + 1) * n_y];
        if p_t[t] > 0.0 {
            row.iter_mut().for_each(|v| *v /= p_t[t]);
        } else {
            row.copy_from_slice(&p_y);
        }
    }
    (p_t, p_ty)
}

fn smoothed_log_decoder(decoder: &[f64], n_y: usize) -> Vec<f64> {
    let z = 1.0 + n_y as f64 * DECODER_SMOOTHING;
    decoder.iter().map(|&d| ((d + DECODER_SMOOTHING) / z).ln()).collect()
}

/// `KL[p(y|x) || p(y|t)]` in nats for every `(x, t)`.
fn kl_table(problem: &IbProblem, log_decoder: &[f64], n_t: usize) -> Vec<f64> {
    let n_y = problem.n_y;
    let mut kl = vec![0.0; problem.n_x() * n_t];
    for x in 0..problem.n_x() {
        let cond = problem.conditional(x);
        let neg_h: f64 = cond.iter().filter(|&&c| c > 0.0).map(|&c| c * c.ln()).sum();
        for t in 0..n_t {
            let cross: f64 = cond
                .iter()
                .zip(&log_decoder[t * n_y..(t + 1) * n_y])
                .map(|(&c, &l)| c * l)
                .sum();
            kl[x * n_t + t] = (neg_h - cross).max(0.0);
        }
    }
    kl
}

/// `p(t|x) = p(t) exp(-beta KL) / Z(x)`, in log space with max-subtraction.
fn encoder_update(
    problem: &IbProblem,
    beta: f64,
    p_t: &[f64],
    decoder: &[f64],
    n_t: usize,
    out: &mut [f64],
) {
    let log_dec = smoothed_log_decoder(decoder, problem.n_y);
    let kl = kl_table(problem, &log_dec, n_t);
    let log_pt: Vec<f64> = p_t
        .iter()
        .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
        .collect();
    for x in 0..problem.n_x() {
        let row = &mut out[x * n_t..(x + 1) * n_t];
        let mut max = f64::NEG_INFINITY;
        for t in 0..n_t {
            row[t] = log_pt[t] - beta * kl[x * n_t + t];
            max = max.max(row[t]);
        }
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
}

fn information(problem: &IbProblem, encoder: &[f64], p_t: &[f64], decoder: &[f64], n_t: usize) -> (f64, f64) {
    let n_x = problem.n_x();
    let i_x = mutual_information_sparse(
        n_x,
        n_t,
        (0..n_x * n_t).map(|k| (k / n_t, k % n_t, problem.p_x[k / n_t] * encoder[k])),
    );
    let n_y = problem.n_y;
    let i_y = mutual_information_sparse(
        n_t,
        n_y,
        (0..n_t * n_y).map(|k| (k / n_y, k % n_y, p_t[k / n_y] * decoder[k])),
    );
    (i_x, i_y)
}

fn check_encoder(init: &[f64], n_x: usize, n_t: usize) -> Result<()> {
    if init.len() != n_x * n_t {
        return Err(Error::InvalidDistribution(format!(
            "initial encoder has {} entries, expected {}",
            init.len(),
            n_x * n_t
        )));
    }
    for row in init.chunks(n_t) {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("encoder row sums to {s}")));
        }
    }
    Ok(())
}

/// Iterates the self-consistent equations from `init_encoder` until the
/// encoder stops moving or the iteration cap is hit. The result reports its
/// residual and is flagged unconverged rather than failing.
pub fn ib_fixed_point(
    problem: &IbProblem,
    beta: f64,
    n_t: usize,
    init_encoder: &[f64],
    options: &IbOptions,
) -> Result<IbSolution> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    if n_t == 0 {
        return Err(Error::Config("need at least one cluster".into()));
    }
    check_encoder(init_encoder, problem.n_x(), n_t)?;

    let mut encoder = init_encoder.to_vec();
    let mut next = vec![0.0; encoder.len()];
    let mut iterations = 0;
    let mut settled = false;
    while iterations < options.max_iterations {
        let (p_t, decoder) = marginal_and_decoder(problem, &encoder, n_t);
        encoder_update(problem, beta, &p_t, &decoder, n_t, &mut next);
        iterations += 1;
        let change = encoder
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut encoder, &mut next);
        if change < options.tolerance {
            settled = true;
            break;
        }
    }
    if encoder.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFault(format!("IB encoder at beta {beta}")));
    }
    let (marginal, decoder) = marginal_and_decoder(problem, &encoder, n_t);
    let residual = self_consistency_residual(problem, beta, &encoder, &marginal, &decoder, n_t);
    let (i_x, i_y) = information(problem, &encoder, &marginal, &decoder, n_t);
    Ok(IbSolution {
        beta,
        n_t,
        encoder,
        decoder,
        marginal,
        i_x,
        i_y,
        residual,
        iterations,
        converged: settled && residual < options.residual_tolerance,
    })
}

/// Largest violation of any of the three equations by the given tables.
pub fn self_consistency_residual(
    problem: &IbProblem,
    beta: f64,
    encoder: &[f64],
    marginal: &[f64],
    decoder: &[f64],
    n_t: usize,
) -> f64 {
    let (p_t, dec) = marginal_and_decoder(problem, encoder, n_t);
    let mut enc = vec![0.0; encoder.len()];
    encoder_update(problem, beta, marginal, decoder, n_t, &mut enc);
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    // Decoder rows of empty clusters are unconstrained.
    let n_y = problem.n_y;
    let dec_res = (0..n_t)
        .filter(|&t| marginal[t] > 0.0)
        .map(|t| max_diff(&decoder[t * n_y..(t + 1) * n_y], &dec[t * n_y..(t + 1) * n_y]))
        .fold(0.0, f64::max);
    max_diff(encoder, &enc).max(max_diff(marginal, &p_t)).max(dec_res)
}

/// Uniform encoder with a seeded multiplicative perturbation.
pub fn perturbed_uniform_encoder(n_x: usize, n_t: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut enc = vec![1.0 / n_t as f64; n_x * n_t];
    perturb(&mut enc, n_t, ANNEAL_PERTURBATION, rng);
    enc
}

fn perturb(encoder: &mut [f64], n_t: usize, size: f64, rng: &mut impl Rng) {
    for row in encoder.chunks_mut(n_t) {
        for v in row.iter_mut() {
            *v *= 1.0 + size * rng.random_range(-1.0..1.0);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
}

/// One grid point of an information curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub i_x: f64,
    pub i_y: f64,
    pub residual: f64,
    pub converged: bool,
}

/// Converged, non-dominated points of the IB curve in ascending `beta`,
/// plus grid points that failed to converge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoCurve {
    pub points: Vec<CurvePoint>,
    pub unconverged: Vec<CurvePoint>,
}

const CURVE_TOL: f64 = 1e-6;

fn cross(o: &CurvePoint, a: &CurvePoint, b: &CurvePoint) -> f64 {
    (a.i_x - o.i_x) * (b.i_y - o.i_y) - (a.i_y - o.i_y) * (b.i_x - o.i_x)
}

impl InfoCurve {
    /// Keeps converged points that extend the curve monotonically and lie on
    /// its upper concave envelope.
    fn from_points(all: Vec<CurvePoint>) -> Self {
        let (conv, unconverged): (Vec<_>, Vec<_>) = all.into_iter().partition(|p| p.converged);
        let mut mono: Vec<CurvePoint> = Vec::new();
        for p in conv {
            if let Some(last) = mono.last() {
                if p.i_x < last.i_x - CURVE_TOL || p.i_y < last.i_y - CURVE_TOL {
                    continue;
                }
            }
            mono.push(p);
        }
        let mut hull: Vec<CurvePoint> = Vec::new();
        for p in mono {
            while hull.len() >= 2 {
                let n = hull.len();
                // drop the middle point when it falls below the chord
                if cross(&hull[n - 2], &hull[n - 1], &p) > 1e-12 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        InfoCurve {
            points: hull,
            unconverged,
        }
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }

    /// `true` when `I_X` and `I_Y` are nondecreasing and the secant slopes
    /// are nonincreasing, all within `tol`.
    pub fn is_monotone_concave(&self, tol: f64) -> bool {
        let pts = &self.points;
        let mono = pts
            .windows(2)
            .all(|w| w[1].i_x >= w[0].i_x - tol && w[1].i_y >= w[0].i_y - tol);
        let slopes: Vec<f64> = pts
            .windows(2)
            .filter(|w| w[1].i_x - w[0].i_x > tol)
            .map(|w| (w[1].i_y - w[0].i_y) / (w[1].i_x - w[0].i_x))
            .collect();
        mono && slopes.windows(2).all(|s| s[1] <= s[0] + tol)
    }

    /// Adjacent pairs whose secant slope leaves `[1/beta_hi, 1/beta_lo]` by
    /// more than `rel_tol` (relative). Pairs with `dI_X <= min_dx` are skipped.
    pub fn slope_violations(&self, rel_tol: f64, min_dx: f64) -> Vec<(CurvePoint, CurvePoint, f64)> {
        self.points
            .windows(2)
            .filter(|w| w[1].i_x - w[0].i_x > min_dx)
            .filter_map(|w| {
                let slope = (w[1].i_y - w[0].i_y) / (w[1].i_x - w[0].i_x);
                let lo = 1.0 / w[1].beta;
                let hi = 1.0 / w[0].beta;
                let ok = slope >= lo * (1.0 - rel_tol) && slope <= hi * (1.0 + rel_tol);
                (!ok).then_some((w[0], w[1], slope))
            })
            .collect()
    }

    /// Curve `I_Y` at `i_x`, linearly interpolated; `None` outside the span.
    pub fn i_y_at(&self, i_x: f64) -> Option<f64> {
        let pts = &self.points;
        if pts.is_empty() || i_x < pts[0].i_x || i_x > pts[pts.len() - 1].i_x {
            return None;
        }
        for w in pts.windows(2) {
            if i_x >= w[0].i_x && i_x <= w[1].i_x {
                let span = w[1].i_x - w[0].i_x;
                if span <= 0.0 {
                    return Some(w[0].i_y.max(w[1].i_y));
                }
                let f = (i_x - w[0].i_x) / span;
                return Some(w[0].i_y + f * (w[1].i_y - w[0].i_y));
            }
        }
        Some(pts[0].i_y)
    }

    /// Writes `beta,I_X_bits,I_Y_bits,residual,converged_flag` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "beta,I_X_bits,I_Y_bits,residual,converged_flag")?;
        let mut all: Vec<&CurvePoint> = self.points.iter().chain(&self.unconverged).collect();
        all.sort_by(|a, b| a.beta.total_cmp(&b.beta));
        for p in all {
            writeln!(out, "{},{},{},{},{}", p.beta, p.i_x, p.i_y, p.residual, u8::from(p.converged))?;
        }
        Ok(())
    }
}

/// Full annealing trace: every solution along the grid.
#[derive(Debug, Clone)]
pub struct AnnealTrace {
    pub solutions: Vec<IbSolution>,
    pub curve: InfoCurve,
}

/// Deterministic annealing along an ascending `beta` grid: each point warm
/// starts from the previous solution with a small seeded perturbation.
/// Inputs with identical conditionals are merged first.
pub fn anneal(
    problem: &IbProblem,
    betas: &[f64],
    n_t: usize,
    seed: u64,
    options: &IbOptions,
) -> Result<AnnealTrace> {
    if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0)) || betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("beta grid must be positive and ascending".into()));
    }
    let (merged, _) = problem.merge_sufficient();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoder = perturbed_uniform_encoder(merged.n_x(), n_t, &mut rng);
    let mut solutions = Vec::with_capacity(betas.len());
    for &beta in betas {
        let sol = ib_fixed_point(&merged, beta, n_t, &encoder, options)?;
        encoder = sol.encoder.clone();
        perturb(&mut encoder, n_t, ANNEAL_PERTURBATION, &mut rng);
        solutions.push(sol);
    }
    let curve = InfoCurve::from_points(
        solutions
            .iter()
            .map(|s| CurvePoint {
                beta: s.beta,
                i_x: s.i_x,
                i_y: s.i_y,
                residual: s.residual,
                converged: s.converged,
            })
            .collect(),
    );
    Ok(AnnealTrace { solutions, curve })
}

/// The IB information curve of a joint distribution.
pub fn information_curve(
    joint: &JointDistribution,
    betas: &[f64],
    n_t: usize,
    seed: u64,
    options: &IbOptions,
) -> Result<InfoCurve> {
    Ok(anneal(&IbProblem::from_joint(joint), betas, n_t, seed, options)?.curve)
}

/// Conditional `p(y=1|x)` estimated from a sample: the sampled label where
/// `x` was drawn, the sample's label frequency elsewhere.
pub fn empirical_conditional(sample: &TrainingSample, n_patterns: usize) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::Config("empty training sample".into()));
    }
    let prior = sample.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / sample.len() as f64;
    let mut p = vec![prior; n_patterns];
    for (&x, &y) in sample.indices.iter().zip(&sample.labels) {
        p[x as usize] = f64::from(y);
    }
    Ok(p)
}

/// Information curve with `p(y|x)` replaced by an empirical conditional.
pub fn empirical_info_curve(
    p_y1: &[f64],
    betas: &[f64],
    n_t: usize,
    seed: u64,
    options: &IbOptions,
) -> Result<InfoCurve> {
    let joint = JointDistribution::from_conditional(p_y1.to_vec())?;
    information_curve(&joint, betas, n_t, seed, options)
}

/// Sparse encoder rows `p(t|x)` as `(t, prob)` pairs.
pub type SparseEncoder = Vec<Vec<(usize, f64)>>;

/// One-hot encoder of a deterministic binned layer.
pub fn encoder_from_symbols(symbols: &LayerSymbols) -> SparseEncoder {
    symbols.symbol.iter().map(|&t| vec![(t as usize, 1.0)]).collect()
}

/// Sparse rows of a dense `n_x x n_t` encoder.
pub fn sparse_encoder(dense: &[f64], n_t: usize) -> SparseEncoder {
    dense
        .chunks(n_t)
        .map(|row| row.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(t, &p)| (t, p)).collect())
        .collect()
}

/// Result of [`fit_beta`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub beta: f64,
    /// `E_x KL[p_i(t|x) || p_beta(t|x)]` in bits at the optimum.
    pub objective_bits: f64,
}

/// Evaluates the encoder-fit objective for any `beta`.
pub struct BetaObjective<'a> {
    problem: &'a IbProblem,
    encoder: &'a SparseEncoder,
    log_pt: Vec<f64>,
    // groups of inputs with identical conditionals share Z(x; beta)
    group: Vec<usize>,
    kl: Vec<f64>,
    n_t: usize,
    // sum_x p(x) sum_t p(t|x) [ln p(t|x) - ln p(t)]
    base: f64,
}

impl<'a> BetaObjective<'a> {
    pub fn new(problem: &'a IbProblem, encoder: &'a SparseEncoder, decoder: &[f64], n_t: usize) -> Result<Self> {
        if encoder.len() != problem.n_x() || decoder.len() != n_t * problem.n_y() {
            return Err(Error::InvalidDistribution("layer tables do not match the problem".into()));
        }
        let mut p_t = vec![0.0; n_t];
        for (x, row) in encoder.iter().enumerate() {
            let s: f64 = row.iter().map(|&(_, p)| p).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!("encoder row {x} sums to {s}")));
            }
            for &(t, p) in row {
                p_t[t] += problem.p_x()[x] * p;
            }
        }
        let (merged, group) = problem.merge_sufficient();
        let log_dec = smoothed_log_decoder(decoder, problem.n_y());
        let kl = kl_table(&merged, &log_dec, n_t);
        let log_pt: Vec<f64> = p_t
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        let base = encoder
            .iter()
            .enumerate()
            .map(|(x, row)| {
                problem.p_x()[x]
                    * row
                        .iter()
                        .filter(|&&(_, p)| p > 0.0)
                        .map(|&(t, p)| p * (p.ln() - log_pt[t]))
                        .sum::<f64>()
            })
            .sum();
        Ok(BetaObjective {
            problem,
            encoder,
            log_pt,
            group,
            kl,
            n_t,
            base,
        })
    }

    /// Objective in bits.
    pub fn eval(&self, beta: f64) -> f64 {
        let n_groups = self.kl.len() / self.n_t;
        let log_z: Vec<f64> = (0..n_groups)
            .map(|g| {
                let row = &self.kl[g * self.n_t..(g + 1) * self.n_t];
                let terms = self.log_pt.iter().zip(row).map(|(&lp, &k)| lp - beta * k);
                let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
                max + terms.map(|v| (v - max).exp()).sum::<f64>().ln()
            })
            .collect();
        let rest: f64 = self
            .encoder
            .iter()
            .enumerate()
            .map(|(x, row)| {
                let g = self.group[x];
                self.problem.p_x()[x]
                    * row
                        .iter()
                        .map(|&(t, p)| p * (beta * self.kl[g * self.n_t + t] + log_z[g]))
                        .sum::<f64>()
            })
            .sum();
        ((self.base + rest) / std::f64::consts::LN_2).max(0.0)
    }
}

/// Trade-off parameter whose IB encoder, built from the layer's own decoder
/// and marginal, is closest in expected KL to the layer's encoder. Grid
/// scan on `betas` followed by golden-section refinement in `ln beta`.
pub fn fit_beta(
    encoder: &SparseEncoder,
    decoder: &[f64],
    n_t: usize,
    problem: &IbProblem,
    betas: &[f64],
) -> Result<BetaFit> {
    if betas.len() < 2 || betas.windows(2).any(|w| w[1] <= w[0]) || betas[0] <= 0.0 {
        return Err(Error::Config("beta search grid must be positive and ascending".into()));
    }
    let objective = BetaObjective::new(problem, encoder, decoder, n_t)?;
    let values: Vec<f64> = betas.iter().map(|&b| objective.eval(b)).collect();
    // ties go to the larger beta
    let best = (0..betas.len())
        .rev()
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    let mut lo = betas[best.saturating_sub(1)].ln();
    let mut hi = betas[(best + 1).min(betas.len() - 1)].ln();
    let f = |lb: f64| objective.eval(lb.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let refined = 0.5 * (lo + hi);
    let (beta, objective_bits) = [(refined.exp(), f(refined)), (betas[best], values[best])]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Ok(BetaFit { beta, objective_bits })
}

/// [`fit_beta`] for a deterministic binned layer.
pub fn fit_layer_beta(symbols: &LayerSymbols, joint: &JointDistribution, betas: &[f64]) -> Result<BetaFit> {
    let problem = IbProblem::from_joint(joint);
    let encoder = encoder_from_symbols(symbols);
    let decoder: Vec<f64> = symbols.decoder(joint).into_iter().flatten().collect();
    fit_beta(&encoder, &decoder, symbols.n_symbols, &problem, betas)
}
