//! Information-plane analysis of small feed-forward networks trained on a
//! symmetric binary task: task construction, training with gradient
//! statistics, binned mutual information, and Information Bottleneck bounds.

pub mod dynamics;
pub mod expctl;
pub mod error;
pub mod ib;
pub mod mi;
pub mod net;
pub mod task;

pub use dynamics::{detect_phase_transition, epoch_gradient_stats, GradientStats, LayerGradientStats, PhaseReport};
pub use error::{Error, Result};
pub use expctl::{ExperimentConfig, RunLog};
pub use ib::{fit_beta, information_curve, BetaFit, CurvePoint, IbOptions, IbProblem, IbSolution, InfoCurve};
pub use mi::{mutual_information, InfoPoint, JointTable};
pub use net::{NetworkConfig, RunSeeds, TrainOutcome, TrainState};
pub use task::{JointDistribution, Pattern, RuleKind, RuleSpec, TrainingSample};
