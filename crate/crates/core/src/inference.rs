//! Laplace-approximated marginal likelihood and empirical-Bayes estimation of
//! `(β, θ)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::{chol_psd, CholFactor, McgpHyperparams, Process, DEFAULT_JITTER_SCHEDULE};
use crate::error::{Error, Result};
use crate::glm::fit_poisson_glm;
use crate::kernels::{CovFamily, KernelParams};
use crate::laplace::{LaplaceProblem, LaplaceResult};
use crate::likelihood::{Dataset, RegressionCoefficients};
use crate::optim::{minimize, BfgsOptions};
use crate::params::{CdrTheta, Hyperparams, ModelKind, ModelSpec};

/// Optimiser and mode-finder settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimOptions {
    /// Maximum outer quasi-Newton iterations per start.
    pub max_iter: usize,
    /// Relative step of the central-difference gradient.
    pub grad_step: f64,
    /// Stationarity tolerance of the latent mode.
    pub mode_tol: f64,
    pub mode_max_iter: usize,
    /// Outer gradient tolerance, relative to `1 + |loglik|`.
    pub outer_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_iter: 200, grad_step: 1e-5, mode_tol: 1e-8, mode_max_iter: 100, outer_tol: 1e-6, n_starts: 3, seed: 0 }
    }
}

/// Outcome of one optimisation start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    /// `None` when the start never reached a finite objective.
    pub loglik: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Estimated model: coefficients, hyperparameters, latent mode and the data it was fitted to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub beta: RegressionCoefficients,
    pub theta: Hyperparams,
    /// Posterior mode of the stacked latent vector at `(β, θ)`.
    pub tau0: Vec<f64>,
    /// Approximate marginal log-likelihood at `(β, θ)`.
    pub loglik: f64,
    /// Free `β` and `θ` coordinates.
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub starts: Vec<StartReport>,
    pub options: OptimOptions,
    pub data: Dataset,
}

impl FittedModel {
    pub fn aic(&self) -> f64 {
        aic(self)
    }

    /// Prior covariance of the training latent vector.
    pub fn k(&self) -> Result<DMatrix<f64>> {
        self.theta.covariance(&self.data.inputs())
    }

    /// Cholesky factor of the training covariance (with jitter if required).
    pub fn k_factor(&self) -> Result<CholFactor> {
        chol_psd(&self.k()?, &DEFAULT_JITTER_SCHEDULE)
    }
}

/// `−2 loglik + 2 n_params`.
pub fn aic(model: &FittedModel) -> f64 {
    aic_value(model.loglik, model.n_params)
}

pub fn aic_value(loglik: f64, n_params: usize) -> f64 {
    -2.0 * loglik + 2.0 * n_params as f64
}

/// Mode of `Φ` for prior covariance `k`.
pub fn find_mode(data: &Dataset, beta: &RegressionCoefficients, k: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<LaplaceResult> {
    if tol <= 0.0 {
        return Err(Error::InvalidParameter("mode tolerance must be positive".into()));
    }
    let offset = data.offsets(beta)?;
    let z: Vec<u64> = data.components.iter().flat_map(|c| c.z.iter().copied()).collect();
    LaplaceProblem { k, z: &z, offset: &offset, linear: &[] }.solve(tol, max_iter)
}

/// Laplace approximation at explicit mode settings.
pub fn laplace_at(data: &Dataset, beta: &RegressionCoefficients, theta: &Hyperparams, tol: f64, max_iter: usize) -> Result<LaplaceResult> {
    let k = theta.covariance(&data.inputs())?;
    find_mode(data, beta, &k, tol, max_iter)
}

/// Approximate `log p(z | β, θ)` with default mode settings.
pub fn laplace_marginal_loglik(beta: &RegressionCoefficients, theta: &Hyperparams, data: &Dataset) -> Result<f64> {
    let o = OptimOptions::default();
    Ok(laplace_at(data, beta, theta, o.mode_tol, o.mode_max_iter)?.log_integral)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Per-dimension median absolute pairwise difference over all inputs.
fn median_length_scales(data: &Dataset) -> Vec<f64> {
    let xs: Vec<&Vec<f64>> = data.components.iter().flat_map(|c| c.x.iter()).collect();
    (0..data.dim())
        .map(|j| {
            let mut d = Vec::with_capacity(xs.len() * (xs.len() - 1) / 2);
            for a in 0..xs.len() {
                for b in a + 1..xs.len() {
                    d.push((xs[a][j] - xs[b][j]).abs());
                }
            }
            let m = median(d);
            if m > 0.0 && m.is_finite() {
                m
            } else {
                1.0
            }
        })
        .collect()
}

/// Smoothing kernel whose zero-lag variance is `var` at precision `diag(a)`.
fn kernel_for_variance(var: f64, a: &[f64]) -> KernelParams {
    let p = a.len() as f64;
    let det: f64 = a.iter().product();
    let v2 = var * det.sqrt() / std::f64::consts::PI.powf(p / 2.0);
    KernelParams::diagonal(v2.sqrt(), a)
}

/// Starting values: Poisson GLM coefficients, zero-lag variances at a tenth
/// of the working-residual variance, and length scales at the median pairwise
/// input distance.
pub fn initial_values(data: &Dataset, kind: &ModelKind) -> Result<(RegressionCoefficients, Hyperparams)> {
    data.validate()?;
    let glms = [fit_poisson_glm(&data.components[0], 1e-10, 100)?, fit_poisson_glm(&data.components[1], 1e-10, 100)?];
    let resid = [glms[0].working_residuals(&data.components[0].z), glms[1].working_residuals(&data.components[1].z)];
    let var = [0, 1].map(|a| (0.1 * variance(&resid[a])).clamp(1e-4, 10.0));
    let a: Vec<f64> = median_length_scales(data).iter().map(|l| 1.0 / (l * l)).collect();
    let beta = RegressionCoefficients::new(glms[0].beta.clone(), glms[1].beta.clone());
    let theta = match kind {
        ModelKind::Mcgp(spec) => {
            spec.validate()?;
            Hyperparams::Mcgp(McgpHyperparams {
                shared_family: spec.shared,
                xi: [kernel_for_variance(var[0], &a), kernel_for_variance(var[1], &a)],
                eta: [
                    Process::new(spec.eta[0], kernel_for_variance(var[0], &a)),
                    Process::new(spec.eta[1], kernel_for_variance(var[1], &a)),
                ],
            })
        }
        ModelKind::Cdr => {
            let (r1, r2) = (&resid[0], &resid[1]);
            let alpha = if r1.len() == r2.len() && variance(r1) > 0.0 && variance(r2) > 0.0 {
                let m1 = r1.iter().sum::<f64>() / r1.len() as f64;
                let m2 = r2.iter().sum::<f64>() / r2.len() as f64;
                let c: f64 = r1.iter().zip(r2).map(|(x, y)| (x - m1) * (y - m2)).sum::<f64>() / (r1.len() - 1) as f64;
                (c / (variance(r1) * variance(r2)).sqrt()).clamp(-0.95, 0.95)
            } else {
                0.0
            };
            Hyperparams::Cdr(CdrTheta {
                tau1: Process::new(CovFamily::SquaredExponential, kernel_for_variance(var[0], &a)),
                alpha,
                sigma_eps2: var[1],
            })
        }
        ModelKind::Indep => Hyperparams::Indep {
            processes: [
                Process::new(CovFamily::SquaredExponential, kernel_for_variance(var[0], &a)),
                Process::new(CovFamily::SquaredExponential, kernel_for_variance(var[1], &a)),
            ],
        },
    };
    Ok((beta, theta))
}

/// Fits the convolved model with families from `spec`.
pub fn fit(data: &Dataset, spec: &ModelSpec, opts: &OptimOptions) -> Result<FittedModel> {
    fit_model(data, &ModelKind::Mcgp(spec.clone()), opts)
}

/// Fits any model kind from the default starting values.
pub fn fit_model(data: &Dataset, kind: &ModelKind, opts: &OptimOptions) -> Result<FittedModel> {
    check_fit_inputs(data, kind)?;
    let (beta, theta) = initial_values(data, kind)?;
    fit_with_init(data, kind, beta, theta, opts)
}

fn check_fit_inputs(data: &Dataset, kind: &ModelKind) -> Result<()> {
    data.validate()?;
    if let ModelKind::Cdr = kind {
        if !data.is_paired() {
            return Err(Error::Unsupported(
                "the conditional model needs both components observed at the same inputs in the same order".into(),
            ));
        }
    }
    Ok(())
}

/// Fits from user-supplied starting values; the first start is exactly
/// `(beta, theta)`, later starts perturb the hyperparameter coordinates.
pub fn fit_with_init(
    data: &Dataset,
    kind: &ModelKind,
    beta: RegressionCoefficients,
    theta: Hyperparams,
    opts: &OptimOptions,
) -> Result<FittedModel> {
    check_fit_inputs(data, kind)?;
    theta.check_kind(kind)?;
    theta.validate()?;
    if theta.dim() != data.dim() {
        return Err(Error::Dimension(format!("kernels have dimension {} but inputs have {}", theta.dim(), data.dim())));
    }
    let q = data.q();
    if beta.beta[0].len() != q[0] || beta.beta[1].len() != q[1] {
        return Err(Error::Dimension("initial beta does not match the mean covariates".into()));
    }
    let n_beta = beta.len();
    let u_theta0 = theta.encode(kind);
    let objective = |u: &[f64]| -> f64 {
        let b = RegressionCoefficients::from_flat(&u[..n_beta], q);
        match theta.decode(kind, &u[n_beta..]).and_then(|t| laplace_at(data, &b, &t, opts.mode_tol, opts.mode_max_iter)) {
            Ok(r) => -r.log_integral,
            Err(_) => f64::INFINITY,
        }
    };
    let bfgs = BfgsOptions { max_iter: opts.max_iter, grad_step: opts.grad_step, tol: opts.outer_tol, max_step: 2.0 };
    let mut best: Option<(f64, f64, Vec<f64>, bool, usize)> = None;
    let mut reports = Vec::new();
    for s in 0..opts.n_starts.max(1) {
        let mut u0 = beta.flat();
        if s == 0 {
            u0.extend(&u_theta0);
        } else {
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed.wrapping_add(s as u64));
            u0.extend(u_theta0.iter().map(|v| v + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)));
        }
        let m = minimize(&objective, &u0, &bfgs);
        let loglik = -m.f;
        reports.push(StartReport {
            loglik: loglik.is_finite().then_some(loglik),
            converged: m.converged,
            iterations: m.iterations,
            evaluations: m.evaluations,
        });
        if !loglik.is_finite() {
            continue;
        }
        let norm = m.x[n_beta..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let better = match &best {
            None => true,
            Some((bl, bn, ..)) => loglik > bl + 1e-9 || ((loglik - bl).abs() <= 1e-9 && norm < *bn),
        };
        if better {
            best = Some((loglik, norm, m.x, m.converged, m.iterations));
        }
    }
    let Some((_, _, u, converged, iterations)) = best else {
        let details = reports
            .iter()
            .enumerate()
            .map(|(i, r)| format!("start {i}: loglik {:?} after {} iterations", r.loglik, r.iterations))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::FitFailed { starts: reports.len(), details });
    };
    let beta_hat = RegressionCoefficients::from_flat(&u[..n_beta], q);
    let theta_hat = theta.decode(kind, &u[n_beta..])?;
    let lap = laplace_at(data, &beta_hat, &theta_hat, opts.mode_tol, opts.mode_max_iter)?;
    Ok(FittedModel {
        kind: kind.clone(),
        beta: beta_hat,
        theta: theta_hat,
        tau0: lap.mode.as_slice().to_vec(),
        loglik: lap.log_integral,
        n_params: u.len(),
        converged,
        iterations,
        starts: reports,
        options: opts.clone(),
        data: data.clone(),
    })
}

/// `‖∇Φ(τ₀)‖∞` of a fitted model, computed through the Cholesky factor of `K`.
pub fn mode_gradient_norm(model: &FittedModel) -> Result<f64> {
    let kf = model.k_factor()?;
    let tau = DVector::from_column_slice(&model.tau0);
    let (g, _) = crate::likelihood::phi_grad_w(&tau, &model.data, &model.beta, &kf)?;
    Ok(g.amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::Component;

    fn toy(z1: Vec<u64>, z2: Vec<u64>) -> Dataset {
        let n1 = z1.len();
        let n2 = z2.len();
        let x1: Vec<Vec<f64>> = (0..n1).map(|i| vec![i as f64 - 1.0]).collect();
        let x2: Vec<Vec<f64>> = (0..n2).map(|i| vec![i as f64 - 0.5]).collect();
        Dataset::new(
            Component::new(z1, DMatrix::from_element(n1, 1, 1.0), x1).unwrap(),
            Component::new(z2, DMatrix::from_element(n2, 1, 1.0), x2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn aic_arithmetic() {
        assert!((aic_value(-697.911, 2) - 1399.822).abs() < 1e-9);
        assert_eq!(aic_value(0.0, 0), 0.0);
        assert_eq!(aic_value(-3.0, 5) - aic_value(-3.0, 4), 2.0);
    }

    #[test]
    fn identity_instance() {
        let data = toy(vec![1], vec![1]);
        let beta = RegressionCoefficients::new(vec![0.0], vec![0.0]);
        let r = find_mode(&data, &beta, &DMatrix::identity(2, 2), 1e-10, 50).unwrap();
        assert!(r.mode.amax() < 1e-12);
        assert!((r.log_integral - -2.6931471805599454).abs() < 1e-12);
        assert!(find_mode(&data, &beta, &DMatrix::identity(2, 2), 0.0, 50).is_err());
    }

    #[test]
    fn zero_iterations_returns_initial_values() {
        let data = toy(vec![1, 3, 2], vec![0, 2]);
        let kind = ModelKind::Mcgp(ModelSpec::model4());
        let opts = OptimOptions { max_iter: 0, n_starts: 1, ..Default::default() };
        let (beta, theta) = initial_values(&data, &kind).unwrap();
        let m = fit_model(&data, &kind, &opts).unwrap();
        assert!(!m.converged);
        assert_eq!(m.beta, beta);
        let back = theta.decode(&kind, &theta.encode(&kind)).unwrap();
        assert_eq!(m.theta, back);
        assert_eq!(m.n_params, 2 + 8);
    }

    #[test]
    fn cdr_rejects_unpaired() {
        let data = toy(vec![1, 3, 2], vec![0, 2]);
        assert!(matches!(fit_model(&data, &ModelKind::Cdr, &OptimOptions::default()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn small_fit_improves_on_start() {
        let data = toy(vec![1, 3, 2, 5, 4], vec![0, 2, 1, 3]);
        let kind = ModelKind::Indep;
        let (beta, theta) = initial_values(&data, &kind).unwrap();
        let start = laplace_marginal_loglik(&beta, &theta, &data).unwrap();
        let m = fit_model(&data, &kind, &OptimOptions { n_starts: 2, ..Default::default() }).unwrap();
        assert!(m.loglik >= start - 1e-9);
        assert_eq!(m.starts.len(), 2);
        assert!(mode_gradient_norm(&m).unwrap() < 1e-6);
    }
}
