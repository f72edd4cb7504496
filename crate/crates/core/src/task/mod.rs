//! The input space, the rules defined on it, and training subsamples.

mod joint;
mod orbits;
mod pattern;
mod rule;
mod sample;
mod sphere;

pub use joint::JointDistribution;
pub use orbits::{enumerate_orbits, pair_profile, OrbitTable, RotationGroup};
pub use pattern::{input_matrix, Pattern, N_INPUTS, N_PATTERNS};
pub use rule::{
    build_committee_rule, build_sphere_rule, calibrate_gain, committee_rule_values, logistic,
    max_orbit_spread, random_teacher, reference_committee_rule, reference_sphere_rule,
    select_threshold, soft_conditional, sphere_rule_values, GainCalibration, RuleKind, RuleSpec,
    CALIBRATION_ITERATIONS, REFERENCE_COMMITTEE_SEED, REFERENCE_COMMITTEE_SIZE,
    REFERENCE_HARMONIC_WEIGHTS, TARGET_MI_BITS, THRESHOLD_GRID,
};
pub use sample::{sample_size, sample_training_set, TrainingSample};
pub use sphere::{associated_legendre, real_spherical_harmonic, HarmonicBasis, SpherePoints, Vec3};
