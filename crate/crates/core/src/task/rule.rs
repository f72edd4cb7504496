//! Stochastic binary rules over the twelve inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::joint::JointDistribution;
use super::orbits::enumerate_orbits;
use super::pattern::{Pattern, N_INPUTS};
use super::sphere::{HarmonicBasis, SpherePoints};
use crate::error::{Error, Result};
use crate::mi::binary_entropy;

/// Uniform threshold candidates between the smallest and largest rule value.
pub const THRESHOLD_GRID: usize = 10_000;
/// Bisection steps used by [`calibrate_gain`].
pub const CALIBRATION_ITERATIONS: usize = 60;
/// Default calibration target for `I(X;Y)`.
pub const TARGET_MI_BITS: f64 = 0.99;
/// Degree weights `w_0..w_4` of the reference sphere rule.
pub const REFERENCE_HARMONIC_WEIGHTS: [f64; 5] = [1.0, 1.0, -1.0, 1.0, 0.5];
/// Teacher size and seed of the reference committee rule.
pub const REFERENCE_COMMITTEE_SIZE: usize = 3;
pub const REFERENCE_COMMITTEE_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Sphere,
    Committee,
}

/// Everything needed to rebuild a rule's joint distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub kind: RuleKind,
    pub gain: f64,
    pub threshold: f64,
    pub target_prior: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub harmonic_weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub teacher: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RuleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0) {
            return Err(Error::Config(format!("gain must be positive, got {}", self.gain)));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        if !(self.target_prior > 0.0 && self.target_prior < 1.0) {
            return Err(Error::Config(format!(
                "target prior must lie in (0,1), got {}",
                self.target_prior
            )));
        }
        match self.kind {
            RuleKind::Sphere => {
                if self.harmonic_weights.len() < 2 {
                    return Err(Error::Config(
                        "sphere rule needs harmonic weights for degrees 0..L with L >= 1".into(),
                    ));
                }
                if self.harmonic_weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Config("harmonic weights must be finite".into()));
                }
            }
            RuleKind::Committee => {
                if self.teacher.is_empty() || self.teacher.len() % 2 == 0 {
                    return Err(Error::Config(format!(
                        "committee needs an odd number of teachers, got {}",
                        self.teacher.len()
                    )));
                }
                for u in &self.teacher {
                    if u.len() != N_INPUTS {
                        return Err(Error::Config(format!(
                            "teacher vectors need {N_INPUTS} entries, got {}",
                            u.len()
                        )));
                    }
                    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > 1e-9 {
                        return Err(Error::Config(format!("teacher vector has norm {norm}, expected 1")));
                    }
                }
            }
        }
        Ok(())
    }

    /// The real-valued rule `f(x)` for every pattern.
    pub fn rule_values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match self.kind {
            RuleKind::Sphere => sphere_rule_values(&self.harmonic_weights),
            RuleKind::Committee => committee_rule_values(&self.teacher),
        })
    }

    pub fn joint(&self) -> Result<JointDistribution> {
        let f = self.rule_values()?;
        JointDistribution::from_conditional(soft_conditional(&f, self.gain, self.threshold))
    }
}

pub fn sphere_rule_values(weights: &[f64]) -> Vec<f64> {
    let basis = HarmonicBasis::new(&SpherePoints::icosahedron(), weights.len().saturating_sub(1));
    basis.weighted_power(weights)
}

/// `f(x) = sum_k sign(u_k . s(x))` with `s(x)` the `±1` encoding.
pub fn committee_rule_values(teacher: &[Vec<f64>]) -> Vec<f64> {
    Pattern::all()
        .map(|p| {
            let s = p.signs();
            teacher
                .iter()
                .map(|u| {
                    let h: f64 = u.iter().zip(&s).map(|(a, b)| a * b).sum();
                    if h > 0.0 {
                        1.0
                    } else if h < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

/// Unit-norm Gaussian teacher vectors.
pub fn random_teacher(k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..N_INPUTS).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.into_iter().map(|a| a / n).collect()
        })
        .collect()
}

/// `1 / (1 + exp(-gain * u))`, well defined for infinite gain.
pub fn logistic(gain: f64, u: f64) -> f64 {
    if u == 0.0 {
        return 0.5;
    }
    let z = gain * u;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn soft_conditional(f: &[f64], gain: f64, threshold: f64) -> Vec<f64> {
    f.iter().map(|&v| logistic(gain, v - threshold)).collect()
}

/// Distinct rule values with multiplicities; the sphere rule has at most one
/// value per orbit, so sums over levels are much cheaper than over patterns.
#[derive(Debug, Clone)]
struct Levels {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Levels {
    fn new(f: &[f64]) -> Result<Self> {
        let mut sorted = f.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let scale = lo.abs().max(hi.abs()).max(1.0);
        if hi - lo <= 1e-12 * scale {
            return Err(Error::RuleDegenerate(lo));
        }
        let merge_tol = 1e-9 * scale;
        let n = f.len() as f64;
        let mut values: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for v in sorted {
            match values.last() {
                Some(&last) if v - last <= merge_tol => *weights.last_mut().unwrap() += 1.0 / n,
                _ => {
                    values.push(v);
                    weights.push(1.0 / n);
                }
            }
        }
        Ok(Levels { values, weights })
    }

    fn min(&self) -> f64 {
        self.values[0]
    }

    fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    fn prior(&self, gain: f64, threshold: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| w * logistic(gain, v - threshold))
            .sum()
    }

    fn mutual_information(&self, gain: f64, threshold: f64) -> f64 {
        let mut prior = 0.0;
        let mut cond = 0.0;
        for (&v, &w) in self.values.iter().zip(&self.weights) {
            let p = logistic(gain, v - threshold);
            prior += w * p;
            cond += w * binary_entropy(p);
        }
        (binary_entropy(prior) - cond).max(0.0)
    }

    fn select_threshold(&self, gain: f64, target_prior: f64) -> f64 {
        let (lo, hi) = (self.min(), self.max());
        let mut best = lo;
        let mut best_gap = f64::INFINITY;
        for i in 0..=THRESHOLD_GRID {
            let theta = lo + (hi - lo) * (i as f64 / THRESHOLD_GRID as f64);
            let gap = (self.prior(gain, theta) - target_prior).abs();
            if gap < best_gap {
                best_gap = gap;
                best = theta;
            }
        }
        best
    }
}

/// Picks the threshold whose prior `p(y=1)` is closest to `target_prior`
/// over a uniform grid between the extreme rule values; ties go to the
/// smaller threshold.
pub fn select_threshold(f: &[f64], gain: f64, target_prior: f64) -> Result<f64> {
    if !(target_prior > 0.0 && target_prior < 1.0) {
        return Err(Error::Config(format!("target prior {target_prior} outside (0,1)")));
    }
    Ok(Levels::new(f)?.select_threshold(gain, target_prior))
}

fn build_rule(spec_without_threshold: RuleSpec) -> Result<(RuleSpec, JointDistribution)> {
    let mut spec = spec_without_threshold;
    if !(spec.gain > 0.0) {
        return Err(Error::Config(format!("gain must be positive, got {}", spec.gain)));
    }
    let f = match spec.kind {
        RuleKind::Sphere => {
            spec.validate()?;
            sphere_rule_values(&spec.harmonic_weights)
        }
        RuleKind::Committee => {
            spec.validate()?;
            committee_rule_values(&spec.teacher)
        }
    };
    spec.threshold = select_threshold(&f, spec.gain, spec.target_prior)?;
    let joint = JointDistribution::from_conditional(soft_conditional(&f, spec.gain, spec.threshold))?;
    Ok((spec, joint))
}

/// Sphere rule `f(x) = sum_l w_l E_l(x)` softened with the given gain, its
/// threshold chosen by [`select_threshold`].
pub fn build_sphere_rule(
    weights: &[f64],
    gain: f64,
    target_prior: f64,
) -> Result<(RuleSpec, JointDistribution)> {
    build_rule(RuleSpec {
        kind: RuleKind::Sphere,
        gain,
        threshold: 0.0,
        target_prior,
        harmonic_weights: weights.to_vec(),
        teacher: Vec::new(),
        seed: None,
    })
}

pub fn build_committee_rule(
    teacher: &[Vec<f64>],
    gain: f64,
    target_prior: f64,
) -> Result<(RuleSpec, JointDistribution)> {
    build_rule(RuleSpec {
        kind: RuleKind::Committee,
        gain,
        threshold: 0.0,
        target_prior,
        harmonic_weights: Vec::new(),
        teacher: teacher.to_vec(),
        seed: None,
    })
}

/// Result of a gain calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCalibration {
    pub gain: f64,
    pub threshold: f64,
    pub mi_bits: f64,
}

/// Smallest tested gain whose rule reaches `target_mi` bits, found by
/// bracketing then bisection. The threshold is re-selected at every gain.
pub fn calibrate_gain(spec: &RuleSpec, target_mi: f64) -> Result<GainCalibration> {
    let f = spec.rule_values()?;
    let levels = Levels::new(&f)?;
    let eval = |gain: f64| {
        let theta = levels.select_threshold(gain, spec.target_prior);
        (theta, levels.mutual_information(gain, theta))
    };
    let hard_entropy = {
        let theta = levels.select_threshold(f64::INFINITY, spec.target_prior);
        levels.mutual_information(f64::INFINITY, theta)
    };
    if target_mi >= hard_entropy {
        return Err(Error::CalibrationFailed {
            target: target_mi,
            achieved: hard_entropy,
        });
    }

    let span = levels.max() - levels.min();
    let mut lo = 0.0;
    let mut hi = 1.0 / span;
    let mut best_seen = 0.0f64;
    loop {
        let (_, mi) = eval(hi);
        best_seen = best_seen.max(mi);
        if mi >= target_mi {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi * span > 1e12 {
            return Err(Error::CalibrationFailed {
                target: target_mi,
                achieved: best_seen,
            });
        }
    }
    for _ in 0..CALIBRATION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if eval(mid).1 >= target_mi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (threshold, mi_bits) = eval(hi);
    Ok(GainCalibration {
        gain: hi,
        threshold,
        mi_bits,
    })
}

fn calibrated(mut spec: RuleSpec, target_mi: f64) -> Result<(RuleSpec, JointDistribution)> {
    let cal = calibrate_gain(&spec, target_mi)?;
    spec.gain = cal.gain;
    spec.threshold = cal.threshold;
    let joint = spec.joint()?;
    Ok((spec, joint))
}

/// The reference sphere rule, gain calibrated to [`TARGET_MI_BITS`].
pub fn reference_sphere_rule() -> Result<(RuleSpec, JointDistribution)> {
    let spec = RuleSpec {
        kind: RuleKind::Sphere,
        gain: 1.0,
        threshold: 0.0,
        target_prior: 0.5,
        harmonic_weights: REFERENCE_HARMONIC_WEIGHTS.to_vec(),
        teacher: Vec::new(),
        seed: None,
    };
    calibrated(spec, TARGET_MI_BITS)
}

/// A seeded committee machine, gain calibrated to [`TARGET_MI_BITS`].
pub fn reference_committee_rule(k: usize, seed: u64) -> Result<(RuleSpec, JointDistribution)> {
    let spec = RuleSpec {
        kind: RuleKind::Committee,
        gain: 1.0,
        threshold: 0.0,
        target_prior: 0.5,
        harmonic_weights: Vec::new(),
        teacher: random_teacher(k, seed),
        seed: Some(seed),
    };
    calibrated(spec, TARGET_MI_BITS)
}

/// Largest spread of `f` within any orbit of the rotation group.
pub fn max_orbit_spread(f: &[f64]) -> Result<f64> {
    let table = enumerate_orbits(&SpherePoints::icosahedron())?;
    let mut lo = vec![f64::INFINITY; table.orbit_count()];
    let mut hi = vec![f64::NEG_INFINITY; table.orbit_count()];
    for (x, &id) in table.orbit_ids().iter().enumerate() {
        lo[id as usize] = lo[id as usize].min(f[x]);
        hi[id as usize] = hi[id as usize].max(f[x]);
    }
    Ok(lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max))
}
