//! Matrix-free symmetric operators and spectral-norm estimation.

mod estimators;
mod operators;

pub use estimators::{
    estimator_registry, spectral_norm, Lanczos, NormEstimate, NormEstimator, NormOptions, PowerIteration,
    DEFAULT_ESTIMATOR,
};
pub use operators::{delta_a_matvec, delta_l_matvec, DeltaA, DeltaL, DenseSymmetric, SymmetricOperator};
