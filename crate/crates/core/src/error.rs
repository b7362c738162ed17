use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("assignment space {treatments}^{n} exceeds the enumeration cap of {cap} points")]
    EnumerationInfeasible { treatments: usize, n: usize, cap: u64 },

    #[error("unit {unit} cannot realize exposure {label} under any assignment")]
    UnrealizableExposure { unit: usize, label: usize },

    #[error("exposure mapping is not correctly specified for units {units:?}")]
    NotCorrectlySpecified { units: Vec<usize> },

    #[error("estimator undefined on support points with total probability {mass}")]
    UndefinedOnSupport { mass: f64 },

    #[error("no included unit realized exposure {0}")]
    EmptyExposureCell(usize),

    #[error("positivity violated: unit {unit} has zero probability of exposure {label}")]
    PositivityViolated { unit: usize, label: usize },

    #[error("joint probability unavailable for units ({i}, {j}) at exposures ({d1}, {d2})")]
    MissingJointProbability {
        i: usize,
        j: usize,
        d1: usize,
        d2: usize,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("exposure or outcome kind `{0}` requires an interference graph")]
    MissingGraph(&'static str),

    #[error("predictor requires covariates")]
    MissingCovariates,

    #[error("no closed form available: {0}")]
    NoClosedForm(String),
}

pub type Result<T> = std::result::Result<T, Error>;
