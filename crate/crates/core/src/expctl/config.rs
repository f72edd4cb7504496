//! Experiment configuration: one flat `key = value` TOML section per module.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ib::log_grid;
use crate::net::NetworkConfig;
use crate::task::{
    calibrate_gain, random_teacher, JointDistribution, RuleKind, RuleSpec, N_INPUTS,
    REFERENCE_COMMITTEE_SEED, REFERENCE_COMMITTEE_SIZE, REFERENCE_HARMONIC_WEIGHTS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub master_seed: u64,
    pub replications: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub output_dir: String,
    /// Largest tolerated fraction of failed runs.
    pub max_failure_fraction: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            master_seed: 0,
            replications: 50,
            workers: 0,
            output_dir: "out".into(),
            max_failure_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleSection {
    pub kind: RuleKind,
    pub harmonic_weights: Vec<f64>,
    pub committee_size: usize,
    pub teacher_seed: u64,
    pub target_prior: f64,
    /// The gain is calibrated so that `I(X;Y)` reaches this many bits.
    pub target_mi_bits: f64,
}

impl Default for RuleSection {
    fn default() -> Self {
        RuleSection {
            kind: RuleKind::Sphere,
            harmonic_weights: REFERENCE_HARMONIC_WEIGHTS.to_vec(),
            committee_size: REFERENCE_COMMITTEE_SIZE,
            teacher_seed: REFERENCE_COMMITTEE_SEED,
            target_prior: 0.5,
            target_mi_bits: crate::task::TARGET_MI_BITS,
        }
    }
}

impl RuleSection {
    /// Builds the calibrated rule and its joint distribution.
    pub fn build(&self) -> Result<(RuleSpec, JointDistribution)> {
        let mut spec = RuleSpec {
            kind: self.kind,
            gain: 1.0,
            threshold: 0.0,
            target_prior: self.target_prior,
            harmonic_weights: Vec::new(),
            teacher: Vec::new(),
            seed: None,
        };
        match self.kind {
            RuleKind::Sphere => spec.harmonic_weights = self.harmonic_weights.clone(),
            RuleKind::Committee => {
                spec.teacher = random_teacher(self.committee_size, self.teacher_seed);
                spec.seed = Some(self.teacher_seed);
            }
        }
        let cal = calibrate_gain(&spec, self.target_mi_bits)?;
        spec.gain = cal.gain;
        spec.threshold = cal.threshold;
        let joint = spec.joint()?;
        Ok((spec, joint))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let net = NetworkConfig::default();
        NetworkSection {
            hidden: net.widths[1..net.widths.len() - 1].to_vec(),
            learning_rate: net.learning_rate,
            batch_size: net.batch_size,
            epochs: net.epochs,
        }
    }
}

impl NetworkSection {
    /// Network with the given hidden widths and this section's optimizer.
    pub fn network(&self, hidden: &[usize], init_seed: u64) -> NetworkConfig {
        let mut widths = vec![N_INPUTS];
        widths.extend_from_slice(hidden);
        widths.push(1);
        NetworkConfig {
            widths,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            init_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    /// Training fraction of the reference experiment.
    pub fraction: f64,
    /// Fractions of the sample-size sweep.
    pub fractions: Vec<f64>,
    /// Hidden widths used by the sample-size sweep.
    pub sweep_hidden: Vec<usize>,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            fraction: 0.85,
            fractions: vec![0.03, 0.45, 0.85],
            sweep_hidden: vec![12, 10, 8, 6, 4, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfoSection {
    pub bin_count: usize,
    /// Explicit snapshot epochs; empty selects [`default_schedule`].
    pub snapshots: Vec<usize>,
}

impl Default for InfoSection {
    fn default() -> Self {
        InfoSection {
            bin_count: 30,
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub window: usize,
    pub include_bias: bool,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            window: crate::dynamics::DEFAULT_WINDOW,
            include_bias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IbSection {
    pub clusters: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_points: usize,
    pub anneal_seed: u64,
    /// Fit trade-off parameters of every layer at the final epoch.
    pub fit_layers: bool,
}

impl Default for IbSection {
    fn default() -> Self {
        IbSection {
            clusters: crate::ib::DEFAULT_CLUSTERS,
            beta_min: 0.1,
            beta_max: 1e4,
            beta_points: 64,
            anneal_seed: 0,
            fit_layers: true,
        }
    }
}

impl IbSection {
    pub fn betas(&self) -> Vec<f64> {
        log_grid(self.beta_min, self.beta_max, self.beta_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthSection {
    pub depths: Vec<usize>,
    pub first_width: usize,
    pub width_step: usize,
    pub fraction: f64,
    /// Threshold on output `I(T;Y)` as a fraction of `I(X;Y)`.
    pub threshold_ratio: f64,
    /// Output `I(T;Y)` is checked every this many epochs.
    pub probe_interval: usize,
    pub stop_at_threshold: bool,
}

impl Default for DepthSection {
    fn default() -> Self {
        DepthSection {
            depths: (1..=6).collect(),
            first_width: 12,
            width_step: 2,
            fraction: 0.8,
            threshold_ratio: 0.8,
            probe_interval: 10,
            stop_at_threshold: true,
        }
    }
}

impl DepthSection {
    /// Hidden widths for `depth` layers: `first_width`, then `width_step`
    /// fewer per added layer.
    pub fn hidden(&self, depth: usize) -> Result<Vec<usize>> {
        (0..depth)
            .map(|k| {
                self.first_width
                    .checked_sub(k * self.width_step)
                    .filter(|&w| w > 0)
                    .ok_or_else(|| Error::Config(format!("depth {depth} leaves no neurons")))
            })
            .collect()
    }
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub rule: RuleSection,
    pub network: NetworkSection,
    pub sample: SampleSection,
    pub info: InfoSection,
    pub dynamics: DynamicsSection,
    pub ib: IbSection,
    pub depth: DepthSection,
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("sample fraction {f} outside (0, 1]")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.experiment.max_failure_fraction) {
            return Err(Error::Config("max_failure_fraction must lie in [0, 1)".into()));
        }
        check_fraction(self.sample.fraction)?;
        self.sample.fractions.iter().try_for_each(|&f| check_fraction(f))?;
        check_fraction(self.depth.fraction)?;
        if self.info.bin_count == 0 {
            return Err(Error::Config("bin_count must be positive".into()));
        }
        if self.dynamics.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if self.depth.probe_interval == 0 {
            return Err(Error::Config("probe_interval must be positive".into()));
        }
        if !(self.ib.beta_min > 0.0 && self.ib.beta_max > self.ib.beta_min && self.ib.beta_points >= 2) {
            return Err(Error::Config("beta range must be positive and ascending".into()));
        }
        if self.ib.clusters == 0 {
            return Err(Error::Config("clusters must be positive".into()));
        }
        for &d in &self.depth.depths {
            self.depth.hidden(d)?;
        }
        self.network.network(&self.network.hidden, 0).validate()?;
        self.network.network(&self.sample.sweep_hidden, 0).validate()?;
        if self.info.snapshots.iter().any(|&e| e > self.network.epochs) {
            return Err(Error::Config("snapshot beyond the last epoch".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form. The output directory and the
    /// worker count do not affect results and are left out.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.experiment.output_dir.clear();
        canonical.experiment.workers = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn schedule(&self) -> Vec<usize> {
        if self.info.snapshots.is_empty() {
            default_schedule(self.network.epochs)
        } else {
            let mut s = self.info.snapshots.clone();
            s.sort_unstable();
            s.dedup();
            s
        }
    }
}

/// Epochs `0..=9` plus 30 log-spaced epochs from 10 to `epochs`.
pub fn default_schedule(epochs: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (0..=epochs.min(9)).collect();
    if epochs >= 10 {
        s.extend(log_grid(10.0, epochs as f64, 30).into_iter().map(|e| e.round() as usize));
    }
    s.sort_unstable();
    s.dedup();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml("[experiment]\nreplications = 3\n[network]\nepochs = 20\n").unwrap();
        assert_eq!(c.experiment.replications, 3);
        assert_eq!(c.network.epochs, 20);
        assert_eq!(c.info.bin_count, 30);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("[experiment]\nreplications = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[sample]\nfractions = [0.0]\n").is_err());
        assert!(ExperimentConfig::from_toml("[sample]\nfraction = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[depth]\ndepths = [7]\n").is_err());
        assert!(ExperimentConfig::from_toml("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn digest_ignores_output_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.experiment.output_dir = "elsewhere".into();
        b.experiment.workers = 4;
        assert_eq!(a.digest(), b.digest());
        b.network.learning_rate *= 2.0;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn schedule_shape() {
        let s = default_schedule(10_000);
        assert_eq!(&s[..10], &(0..10).collect::<Vec<_>>()[..]);
        assert_eq!(*s.last().unwrap(), 10_000);
        assert!(s.len() >= 38 && s.len() <= 40);
        assert_eq!(default_schedule(0), vec![0]);
        assert_eq!(default_schedule(5), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn depth_widths() {
        let d = DepthSection::default();
        assert_eq!(d.hidden(1).unwrap(), vec![12]);
        assert_eq!(d.hidden(6).unwrap(), vec![12, 10, 8, 6, 4, 2]);
    }

    #[test]
    fn committee_rule_builds() {
        let mut c = ExperimentConfig::default();
        c.rule.kind = RuleKind::Committee;
        let (spec, joint) = c.rule.build().unwrap();
        assert_eq!(spec.teacher.len(), 3);
        assert!((joint.mi_xy() - 0.99).abs() < 1e-6);
    }
}
