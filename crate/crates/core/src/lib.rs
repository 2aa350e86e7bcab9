//! Multivariate Poisson regression with convolved Gaussian process priors.
//!
//! Two count responses share a latent field `(τ₁, τ₂)` built from convolved
//! Gaussian processes: a pair of dependent processes `ξ₁, ξ₂` driven by one
//! common white noise, plus component-specific processes `η₁, η₂`. Counts are
//! Poisson with a log link, `log μ_a = log E_a + U_aᵀβ_a + τ_a(x_a)`.
//!
//! Hyperparameters and regression coefficients are estimated by maximising a
//! Laplace approximation of the marginal likelihood; predictions use a ratio of
//! Laplace approximations.

pub mod baselines;
pub mod covariance;
pub mod diagnostics;
pub mod error;
pub mod glm;
pub mod inference;
pub mod io;
pub mod kernels;
pub mod laplace;
pub mod likelihood;
pub mod optim;
pub mod params;
pub mod prediction;
pub mod simulation;

pub use covariance::{assemble_k, assemble_k_plus, chol_psd, sample_mcgp, CholFactor, McgpHyperparams, Process, StackedInputs};
pub use error::{Error, Result};
pub use inference::{aic, fit, fit_model, fit_with_init, laplace_marginal_loglik, FittedModel, OptimOptions};
pub use kernels::{CovFamily, KernelParams};
pub use likelihood::{Component, Dataset, RegressionCoefficients};
pub use params::{Hyperparams, ModelKind, ModelSpec};
pub use prediction::{latent_moment, predict, predict_batch, predict_cross_cov, predict_mean, predict_var, NewPoint, PredictionResult};
