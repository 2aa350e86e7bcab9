//! Poisson log-linear regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::Component;

/// Result of a Poisson GLM fit.
#[derive(Clone, Debug)]
pub struct GlmFit {
    pub beta: Vec<f64>,
    /// Fitted means `μ_i`.
    pub mu: Vec<f64>,
    pub iterations: usize,
}

impl GlmFit {
    /// Working residuals `(z − μ) / μ`.
    pub fn working_residuals(&self, z: &[u64]) -> Vec<f64> {
        z.iter().zip(&self.mu).map(|(&z, &m)| (z as f64 - m) / m).collect()
    }
}

/// Fits `log μ = log E + U β` to the counts of one component.
///
/// A small ridge keeps the normal equations solvable when a count vector is
/// all zeros or the design is collinear.
pub fn fit_poisson_glm(comp: &Component, tol: f64, max_iter: usize) -> Result<GlmFit> {
    comp.validate()?;
    let n = comp.len();
    let q = comp.q();
    let u = &comp.u;
    let z = DVector::from_iterator(n, comp.z.iter().map(|&z| z as f64));
    let log_e = DVector::from_iterator(n, comp.exposure.iter().map(|e| e.ln()));
    // Start from the saturated-ish linear predictor log(z + ½).
    let mut eta = z.map(|z| (z + 0.5).ln());
    let mut beta = DVector::zeros(q);
    for it in 0..max_iter {
        let mu = eta.map(f64::exp);
        let work = DVector::from_fn(n, |i, _| eta[i] - log_e[i] + (z[i] - mu[i]) / mu[i]);
        let mut xtwx = DMatrix::zeros(q, q);
        let mut xtwy = DVector::zeros(q);
        for i in 0..n {
            let row = u.row(i);
            xtwx += row.transpose() * row * mu[i];
            xtwy += row.transpose() * (mu[i] * work[i]);
        }
        let ridge = 1e-10 * (xtwx.trace() / q as f64).max(1e-300);
        for j in 0..q {
            xtwx[(j, j)] += ridge;
        }
        let new_beta = xtwx.cholesky().ok_or_else(|| Error::Numerical("GLM normal equations are singular".into()))?.solve(&xtwy);
        let change = (&new_beta - &beta).amax();
        beta = new_beta;
        eta = u * &beta + &log_e;
        // Keep means representable while iterating towards zero counts.
        eta.apply(|e| *e = e.clamp(-700.0, 700.0));
        if change < tol * (1.0 + beta.amax()) {
            return Ok(GlmFit { beta: beta.as_slice().to_vec(), mu: eta.map(f64::exp).as_slice().to_vec(), iterations: it + 1 });
        }
    }
    Ok(GlmFit { beta: beta.as_slice().to_vec(), mu: eta.map(f64::exp).as_slice().to_vec(), iterations: max_iter })
}
