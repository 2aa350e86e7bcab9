//! Poisson observation model with log link and exposures, and the log
//! posterior kernel `Φ(τ)` of the latent field.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{CholFactor, StackedInputs};
use crate::error::{Error, Result};
use crate::kernels::matrix_rows;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Observations of one response component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// Counts `z_i ≥ 0`.
    pub z: Vec<u64>,
    /// Mean covariates, one row per observation (`n × q`).
    #[serde(with = "matrix_rows")]
    pub u: DMatrix<f64>,
    /// Covariance inputs.
    pub x: Vec<Vec<f64>>,
    /// Exposures `E_i > 0`.
    pub exposure: Vec<f64>,
}

impl Component {
    /// Component with unit exposures.
    pub fn new(z: Vec<u64>, u: DMatrix<f64>, x: Vec<Vec<f64>>) -> Result<Self> {
        let n = z.len();
        Self::with_exposure(z, u, x, vec![1.0; n])
    }

    pub fn with_exposure(z: Vec<u64>, u: DMatrix<f64>, x: Vec<Vec<f64>>, exposure: Vec<f64>) -> Result<Self> {
        let c = Component { z, u, x, exposure };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Number of mean covariates `q`.
    pub fn q(&self) -> usize {
        self.u.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.z.len();
        if n == 0 {
            return Err(Error::InvalidData("component has no observations".into()));
        }
        if self.u.nrows() != n || self.x.len() != n || self.exposure.len() != n {
            return Err(Error::Dimension(format!(
                "component rows disagree: z {}, U {}, x {}, exposure {}",
                n,
                self.u.nrows(),
                self.x.len(),
                self.exposure.len()
            )));
        }
        if self.u.ncols() == 0 {
            return Err(Error::Dimension("mean model has no covariates".into()));
        }
        if self.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite mean covariate".into()));
        }
        if let Some(i) = self.exposure.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidData(format!("exposure {} of observation {} is not positive", self.exposure[i], i + 1)));
        }
        if self.x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite covariance input".into()));
        }
        Ok(())
    }

    /// `U β + log E`.
    pub fn offsets(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.q() {
            return Err(Error::Dimension(format!("beta has {} entries, U has {} columns", beta.len(), self.q())));
        }
        Ok((0..self.len()).map(|i| (0..self.q()).map(|j| self.u[(i, j)] * beta[j]).sum::<f64>() + self.exposure[i].ln()).collect())
    }
}

/// Two-component count data; rows need not be paired across components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub components: [Component; 2],
}

impl Dataset {
    pub fn new(c1: Component, c2: Component) -> Result<Self> {
        let d = Dataset { components: [c1, c2] };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            c.validate()?;
        }
        self.inputs().validate()
    }

    pub fn n1(&self) -> usize {
        self.components[0].len()
    }

    pub fn n2(&self) -> usize {
        self.components[1].len()
    }

    pub fn n(&self) -> usize {
        self.n1() + self.n2()
    }

    pub fn q(&self) -> [usize; 2] {
        [self.components[0].q(), self.components[1].q()]
    }

    pub fn dim(&self) -> usize {
        self.components[0].x[0].len()
    }

    pub fn inputs(&self) -> StackedInputs {
        StackedInputs { x1: self.components[0].x.clone(), x2: self.components[1].x.clone() }
    }

    /// Stacked counts as reals.
    pub fn z(&self) -> Vec<f64> {
        self.components.iter().flat_map(|c| c.z.iter().map(|&z| z as f64)).collect()
    }

    /// Stacked `U_a β_a + log E_a`.
    pub fn offsets(&self, beta: &RegressionCoefficients) -> Result<Vec<f64>> {
        let mut o = self.components[0].offsets(&beta.beta[0])?;
        o.extend(self.components[1].offsets(&beta.beta[1])?);
        Ok(o)
    }

    /// True when both components have identical inputs in the same order.
    pub fn is_paired(&self) -> bool {
        self.components[0].x == self.components[1].x
    }
}

/// Mean-model coefficients `β₁, β₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionCoefficients {
    pub beta: [Vec<f64>; 2],
}

impl RegressionCoefficients {
    pub fn new(b1: Vec<f64>, b2: Vec<f64>) -> Self {
        RegressionCoefficients { beta: [b1, b2] }
    }

    pub fn zeros(q: [usize; 2]) -> Self {
        Self::new(vec![0.0; q[0]], vec![0.0; q[1]])
    }

    pub fn len(&self) -> usize {
        self.beta[0].len() + self.beta[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<f64> {
        self.beta.concat()
    }

    pub fn from_flat(v: &[f64], q: [usize; 2]) -> Self {
        Self::new(v[..q[0]].to_vec(), v[q[0]..q[0] + q[1]].to_vec())
    }
}

/// `log z!`; exact table values for small `z`.
pub fn ln_factorial(z: u64) -> f64 {
    if z <= 20 {
        (1..=z).map(|k| k as f64).product::<f64>().ln()
    } else {
        libm::lgamma(z as f64 + 1.0)
    }
}

/// Log pmf of `Poisson(exp(eta + log_e))` at `z`; `-∞` when the mean overflows.
pub fn poisson_logpmf(z: u64, eta: f64, log_e: f64) -> f64 {
    let ln_mu = eta + log_e;
    let mu = ln_mu.exp();
    if !mu.is_finite() {
        return f64::NEG_INFINITY;
    }
    if z == 0 {
        return -mu;
    }
    z as f64 * ln_mu - mu - ln_factorial(z)
}

/// `Σ log p(z_i | τ_i)` with linear predictors `offset_i + τ_i`.
pub fn log_lik(z: &[f64], offset: &[f64], tau: &[f64]) -> f64 {
    z.iter().zip(offset).zip(tau).map(|((&z, &o), &t)| poisson_logpmf(z as u64, o + t, 0.0)).sum()
}

fn check_tau(tau: &DVector<f64>, data: &Dataset, k: &CholFactor) -> Result<()> {
    if tau.len() != data.n() || k.dim() != data.n() {
        return Err(Error::Dimension(format!("tau has length {}, factor is {}, data has {} observations", tau.len(), k.dim(), data.n())));
    }
    Ok(())
}

/// `Φ(τ) = −½ log|K| − ½ τᵀK⁻¹τ − (n/2) log 2π + Σ log p(z | τ, β)`.
pub fn phi(tau: &DVector<f64>, data: &Dataset, beta: &RegressionCoefficients, k: &CholFactor) -> Result<f64> {
    check_tau(tau, data, k)?;
    let offset = data.offsets(beta)?;
    let alpha = k.solve(tau);
    let n = data.n() as f64;
    Ok(-0.5 * k.log_det() - 0.5 * tau.dot(&alpha) - 0.5 * n * LN_2PI + log_lik(&data.z(), &offset, tau.as_slice()))
}

/// Gradient `(z − μ) − K⁻¹τ` of [`phi`] and the diagonal `W = μ` of the
/// negative likelihood Hessian.
pub fn phi_grad_w(
    tau: &DVector<f64>,
    data: &Dataset,
    beta: &RegressionCoefficients,
    k: &CholFactor,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_tau(tau, data, k)?;
    let offset = data.offsets(beta)?;
    let w = DVector::from_iterator(tau.len(), offset.iter().zip(tau.iter()).map(|(o, t)| (o + t).exp()));
    let z = DVector::from_vec(data.z());
    let grad = &z - &w - k.solve(tau);
    Ok((grad, w))
}
