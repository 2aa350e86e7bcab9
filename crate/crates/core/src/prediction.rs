//! Predictive moments of new counts as ratios of Laplace approximations.
//!
//! For weights `w = (w₁, w₂)` the latent moment
//! `E[exp{w₁ η₁* + w₂ η₂*} | z]` with `η_a* = log E_a* + U_a*ᵀβ_a + τ_a*` is
//! `I_w / I_0`, where `I_w = ∫ exp{w·τ*} p(z | τ) p(τ₊) dτ₊`. Each `I_w` gets its
//! own mode because the linear term moves it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::FittedModel;
use crate::laplace::LaplaceProblem;

/// A prediction request: covariates, inputs and exposures for both components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewPoint {
    pub u: [Vec<f64>; 2],
    pub x: [Vec<f64>; 2],
    pub exposure: [f64; 2],
}

impl NewPoint {
    /// Unit exposures.
    pub fn new(u1: Vec<f64>, x1: Vec<f64>, u2: Vec<f64>, x2: Vec<f64>) -> Self {
        NewPoint { u: [u1, u2], x: [x1, x2], exposure: [1.0, 1.0] }
    }
}

/// Mode of one Laplace integral used for a prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentMode {
    pub weights: [u32; 2],
    /// Mode of `(τ, τ₁*, τ₂*)`.
    pub mode: Vec<f64>,
    pub log_integral: f64,
}

/// Predictive means, the 2×2 predictive covariance and the modes behind them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub mean: [f64; 2],
    pub var: [[f64; 2]; 2],
    pub latent_mode: Vec<LatentMode>,
}

struct Prepared {
    k_plus: nalgebra::DMatrix<f64>,
    z: Vec<u64>,
    offset: Vec<f64>,
    /// `log E_a* + U_a*ᵀβ_a`.
    c: [f64; 2],
}

#[allow(clippy::needless_range_loop)]
fn prepare(fitted: &FittedModel, point: &NewPoint) -> Result<Prepared> {
    let q = fitted.data.q();
    for a in 0..2 {
        if point.u[a].len() != q[a] {
            return Err(Error::Dimension(format!("component {} needs {} covariates, got {}", a + 1, q[a], point.u[a].len())));
        }
        if !(point.exposure[a] > 0.0 && point.exposure[a].is_finite()) {
            return Err(Error::InvalidData(format!("exposure of component {} must be positive", a + 1)));
        }
        if point.u[a].iter().chain(&point.x[a]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite prediction input".into()));
        }
    }
    let k_plus = fitted.theta.covariance_plus(&fitted.data.inputs(), [&point.x[0], &point.x[1]])?;
    let c = [0, 1].map(|a| point.exposure[a].ln() + point.u[a].iter().zip(&fitted.beta.beta[a]).map(|(u, b)| u * b).sum::<f64>());
    Ok(Prepared {
        k_plus,
        z: fitted.data.components.iter().flat_map(|c| c.z.iter().copied()).collect(),
        offset: fitted.data.offsets(&fitted.beta)?,
        c,
    })
}

fn integral(fitted: &FittedModel, p: &Prepared, w: [u32; 2]) -> Result<LatentMode> {
    let linear = [w[0] as f64, w[1] as f64];
    let r = LaplaceProblem { k: &p.k_plus, z: &p.z, offset: &p.offset, linear: &linear }
        .solve(fitted.options.mode_tol, fitted.options.mode_max_iter)?;
    Ok(LatentMode { weights: w, mode: r.mode.as_slice().to_vec(), log_integral: r.log_integral })
}

/// `E[exp{w₁ η₁* + w₂ η₂*} | z]`; exactly 1 for `w = (0, 0)`.
pub fn latent_moment(fitted: &FittedModel, point: &NewPoint, w: [u32; 2]) -> Result<f64> {
    if w == [0, 0] {
        return Ok(1.0);
    }
    let p = prepare(fitted, point)?;
    let i0 = integral(fitted, &p, [0, 0])?.log_integral;
    let iw = integral(fitted, &p, w)?.log_integral;
    Ok((iw - i0 + w[0] as f64 * p.c[0] + w[1] as f64 * p.c[1]).exp())
}

const WEIGHTS: [[u32; 2]; 6] = [[0, 0], [1, 0], [0, 1], [2, 0], [0, 2], [1, 1]];

/// Full predictive summary at one point.
pub fn predict(fitted: &FittedModel, point: &NewPoint) -> Result<PredictionResult> {
    let p = prepare(fitted, point)?;
    let cross = fitted.theta.has_cross();
    let modes = WEIGHTS.iter().filter(|w| cross || **w != [1, 1]).map(|&w| integral(fitted, &p, w)).collect::<Result<Vec<_>>>()?;
    // Log ratios relative to the normaliser.
    let l = |w: [u32; 2]| modes.iter().find(|m| m.weights == w).map(|m| m.log_integral - modes[0].log_integral);
    let (l10, l01) = (l([1, 0]).unwrap(), l([0, 1]).unwrap());
    let mean = [(l10 + p.c[0]).exp(), (l01 + p.c[1]).exp()];
    let mut var = [[0.0; 2]; 2];
    for (a, (l1, l2)) in [(l10, l([2, 0]).unwrap()), (l01, l([0, 2]).unwrap())].into_iter().enumerate() {
        let mixing = mean[a] * mean[a] * (l2 - 2.0 * l1).exp_m1();
        if mixing < -1e-9 * mean[a].max(1.0) {
            return Err(Error::Numerical(format!(
                "negative predictive mixing variance {mixing:e} for component {}; the Laplace approximation has broken down",
                a + 1
            )));
        }
        var[a][a] = mean[a] + mixing.max(0.0);
    }
    if let Some(l11) = l([1, 1]) {
        let c = mean[0] * mean[1] * (l11 - l10 - l01).exp_m1();
        var[0][1] = c;
        var[1][0] = c;
    }
    Ok(PredictionResult { mean, var, latent_mode: modes })
}

/// `(E[z₁* | z], E[z₂* | z])`.
pub fn predict_mean(fitted: &FittedModel, point: &NewPoint) -> Result<[f64; 2]> {
    Ok([latent_moment(fitted, point, [1, 0])?, latent_moment(fitted, point, [0, 1])?])
}

/// `(Var[z₁* | z], Var[z₂* | z])`.
pub fn predict_var(fitted: &FittedModel, point: &NewPoint) -> Result<[f64; 2]> {
    let r = predict(fitted, point)?;
    Ok([r.var[0][0], r.var[1][1]])
}

/// `Cov[z₁*, z₂* | z]`; exactly 0 for models without prior cross-dependence.
pub fn predict_cross_cov(fitted: &FittedModel, point: &NewPoint) -> Result<f64> {
    if !fitted.theta.has_cross() {
        return Ok(0.0);
    }
    Ok(predict(fitted, point)?.var[0][1])
}

/// [`predict`] at every point, in order.
pub fn predict_batch(fitted: &FittedModel, points: &[NewPoint]) -> Result<Vec<PredictionResult>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().map(|p| predict(fitted, p)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(|p| predict(fitted, p)).collect()
    }
}
