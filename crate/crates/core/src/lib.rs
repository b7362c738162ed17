//! Design-based estimation of exposure effects when the exposure mapping may be
//! misspecified.
//!
//! Small scenarios are solved exactly by enumerating the assignment space; larger
//! ones are studied with the seeded Monte Carlo harness in [`montecarlo`].

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod law;
pub mod library;
pub mod montecarlo;
pub mod numeric;
pub mod scenario;
pub mod variance;

pub use error::{Error, Result};
pub use estimators::EstimatorSpec;
pub use exact::{
    all_units, compute_error_moments, compute_exposure_law, compute_ground_truth, ErrorMoments, GroundTruth,
};
pub use law::{ExposureLaw, ExposureProbabilities, ProbabilityTable};
pub use scenario::{
    is_correctly_specified, validate_scenario, ExposureLabel, RealizedData, Scenario, ScenarioSpec, Treatment,
    TreatmentAssignment,
};
pub use variance::{OverridePolicy, PairWeightTable};
