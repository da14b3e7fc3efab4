use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("no point satisfies the moment constraints with p >= 0 and sum(p) = 1")]
    Infeasible,

    #[error("point is infeasible for the penalty domain (violation {violation:e})")]
    InfeasiblePoint { violation: f64 },

    #[error("KL gradient requested at a boundary point (min component {min_component:e})")]
    BoundaryGradient { min_component: f64 },

    #[error("penalty/set pair is not supported: {0}")]
    UnsupportedPair(String),

    #[error("penalty is only available through its closed-form smoothing: {0}")]
    NotMaterialized(String),

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("generic dual solve failed after {iterations} iterations: {reason}")]
    DualSolveFailed { iterations: usize, reason: String },

    #[error("Lipschitz data missing: {0}")]
    MissingLipschitzData(String),

    #[error("ambiguity set has no strictly positive feasible point")]
    NoStrictWitness,

    #[error("tilting Newton solve stalled after {iterations} iterations (residual {residual:e})")]
    NewtonStalled { iterations: usize, residual: f64 },

    #[error("schedule is not nonincreasing: mu'({t}) = {mu_dot:e} > 0")]
    NotNonincreasing { t: f64, mu_dot: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("step size underflow at t = {t}: h = {h:e} (Lipschitz estimate {lipschitz:?})")]
    StepUnderflow {
        t: f64,
        h: f64,
        lipschitz: Option<f64>,
    },

    #[error("integration exceeded {max_steps} steps at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("invalid integration request: {0}")]
    InvalidIntegration(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}
