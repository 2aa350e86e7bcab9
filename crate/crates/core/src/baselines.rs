//! Comparison models sharing the Laplace machinery: a conditional model where
//! `τ₂ | τ₁ ~ N(α τ₁, σ²)` pointwise, and two independent processes.

use crate::error::Result;
use crate::inference::{fit_model, FittedModel, OptimOptions};
use crate::likelihood::Dataset;
use crate::params::ModelKind;

pub use crate::params::CdrTheta;

/// Fits the conditional model. Both components must be observed at the same
/// inputs in the same order; otherwise returns [`Error::Unsupported`](crate::error::Error::Unsupported).
pub fn fit_cdr(data: &Dataset, opts: &OptimOptions) -> Result<FittedModel> {
    fit_model(data, &ModelKind::Cdr, opts)
}

/// Fits two independent squared-exponential processes jointly; the prior
/// covariance is block diagonal, so this equals two separate fits.
pub fn fit_indep(data: &Dataset, opts: &OptimOptions) -> Result<FittedModel> {
    fit_model(data, &ModelKind::Indep, opts)
}
