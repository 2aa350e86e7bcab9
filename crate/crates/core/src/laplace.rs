//! Laplace approximation of `log ∫ exp{L(f)} N(f; 0, K) df` for a latent
//! vector whose leading entries carry Poisson observations and whose trailing
//! entries enter the exponent linearly.
//!
//! Newton iterations use the `B = I + W^½ K W^½` parameterisation, so `K` is
//! never inverted or factorised and may be singular.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::ln_factorial;

/// Integrand of the Laplace approximation.
#[derive(Clone, Copy, Debug)]
pub struct LaplaceProblem<'a> {
    /// Prior covariance of the whole latent vector.
    pub k: &'a DMatrix<f64>,
    /// Counts for the leading `z.len()` entries.
    pub z: &'a [u64],
    /// Linear-predictor offsets for the observed entries.
    pub offset: &'a [f64],
    /// Weights on the trailing entries, which contribute `Σ w_j f_j`.
    pub linear: &'a [f64],
}

/// Mode and approximate log integral.
#[derive(Clone, Debug)]
pub struct LaplaceResult {
    /// Mode `f̂ = K â`.
    pub mode: DVector<f64>,
    /// `â`, with `f̂ = K â`.
    pub a: DVector<f64>,
    pub log_integral: f64,
    pub iterations: usize,
    /// Log of the integrand's kernel at the mode, `Ψ = −½ âᵀf̂ + L(f̂)`.
    pub psi: f64,
}

impl<'a> LaplaceProblem<'a> {
    fn n_obs(&self) -> usize {
        self.z.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.k.nrows();
        if self.k.ncols() != n || self.offset.len() != self.n_obs() || self.n_obs() + self.linear.len() != n {
            return Err(Error::Dimension(format!(
                "latent dimension {} does not match {} observations and {} linear terms",
                n,
                self.n_obs(),
                self.linear.len()
            )));
        }
        if self.k.iter().any(|v| !v.is_finite()) || self.offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite covariance or offset".into()));
        }
        Ok(())
    }

    /// Log-likelihood including `log z!`, its gradient and `W`.
    fn lik(&self, f: &DVector<f64>) -> (f64, DVector<f64>, DVector<f64>) {
        let n = f.len();
        let m = self.n_obs();
        let mut ll = 0.0;
        let mut g = DVector::zeros(n);
        let mut w = DVector::zeros(n);
        for i in 0..m {
            let eta = self.offset[i] + f[i];
            let mu = eta.exp();
            let z = self.z[i] as f64;
            ll += if self.z[i] == 0 { -mu } else { z * eta - mu - ln_factorial(self.z[i]) };
            g[i] = z - mu;
            w[i] = mu;
        }
        for (j, &c) in self.linear.iter().enumerate() {
            ll += c * f[m + j];
            g[m + j] = c;
        }
        (ll, g, w)
    }

    fn psi(&self, a: &DVector<f64>, f: &DVector<f64>) -> f64 {
        let ll = self.lik(f).0;
        let v = -0.5 * a.dot(f) + ll;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Sum of magnitudes of the terms of Ψ, which bounds its rounding error.
    fn psi_scale(&self, a: &DVector<f64>, f: &DVector<f64>) -> f64 {
        let m = self.n_obs();
        let mut s = 0.5 * a.dot(f).abs();
        for i in 0..m {
            let eta = self.offset[i] + f[i];
            s += (self.z[i] as f64 * eta).abs() + eta.exp() + ln_factorial(self.z[i]);
        }
        s + self.linear.iter().enumerate().map(|(j, c)| (c * f[m + j]).abs()).sum::<f64>()
    }

    /// Damped Newton ascent from `f = 0`. Converged once `‖∇L(f) − a‖∞ <
    /// tol (1 + ‖W‖∞)` or the Newton step moves `f` by less than
    /// `tol (1 + ‖f‖∞)`; one further step is then taken so the log integral
    /// does not depend on which iteration happened to cross the threshold.
    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<LaplaceResult> {
        self.check()?;
        let n = self.k.nrows();
        let mut a = DVector::zeros(n);
        let mut f = DVector::zeros(n);
        let mut psi = self.psi(&a, &f);
        let mut grad_norm = f64::INFINITY;
        let mut polish = false;
        for it in 0..=max_iter {
            let (_, g, w) = self.lik(&f);
            if polish {
                return self.finish(a, f, psi, &w, it);
            }
            grad_norm = (&g - &a).amax();
            // Rounding in f of relative size ε shows up in ∇L scaled by W.
            polish = grad_norm < tol * (1.0 + w.amax());
            if it == max_iter {
                if polish {
                    return self.finish(a, f, psi, &w, it);
                }
                break;
            }
            let sw = w.map(f64::sqrt);
            let l = b_cholesky(self.k, &sw)?;
            let b = w.component_mul(&f) + &g;
            let kb = self.k * &b;
            let a_new = &b - sw.component_mul(&l.solve(&sw.component_mul(&kb)));
            let dir = &a_new - &a;
            // Directions in the null space of K leave f and Ψ unchanged, so a
            // negligible Newton step in f also means the mode has been reached.
            let df = self.k * &dir;
            // Near the mode Ψ is flat to rounding; a full Newton step that
            // loses only a few ulps must still be taken or progress stops.
            let slack = 8.0 * f64::EPSILON * self.psi_scale(&a, &f).max(1.0);
            // Quadratic-model increase of Ψ along the full step.
            let gain = 0.5 * (&g - &a).dot(&df);
            polish |= df.amax() < tol * (1.0 + f.amax()) || gain.abs() <= slack;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let a_try = &a + &dir * step;
                let f_try = self.k * &a_try;
                let psi_try = self.psi(&a_try, &f_try);
                if psi_try >= psi - slack {
                    a = a_try;
                    f = f_try;
                    psi = psi_try;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                if polish {
                    return self.finish(a, f, psi, &w, it + 1);
                }
                break;
            }
        }
        Err(Error::ModeNotConverged { iterations: max_iter, grad_norm })
    }

    fn finish(&self, a: DVector<f64>, f: DVector<f64>, psi: f64, w: &DVector<f64>, iterations: usize) -> Result<LaplaceResult> {
        let sw = w.map(f64::sqrt);
        let l = b_cholesky(self.k, &sw)?;
        let half_log_det_b: f64 = l.l_dirty().diagonal().iter().map(|x| x.ln()).sum();
        let log_integral = psi - half_log_det_b;
        if !log_integral.is_finite() {
            return Err(Error::Numerical("Laplace approximation is not finite".into()));
        }
        Ok(LaplaceResult { mode: f, a, log_integral, iterations, psi })
    }
}

fn b_cholesky(k: &DMatrix<f64>, sw: &DVector<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = k.nrows();
    let mut b = DMatrix::identity(n, n);
    for j in 0..n {
        for i in 0..n {
            b[(i, j)] += sw[i] * k[(i, j)] * sw[j];
        }
    }
    Cholesky::new(b).ok_or_else(|| Error::Numerical("I + W^½ K W^½ is not positive definite".into()))
}
