//! Independent numerical oracles shared by the integration tests and the
//! acceptance runner. Nothing here calls the library's Laplace or prediction
//! code.

#![allow(dead_code)]

use mcgpp::{Component, Dataset};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

pub fn ln_fact(z: u64) -> f64 {
    (1..=z).map(|k| (k as f64).ln()).sum()
}

/// Poisson log pmf written out from scratch.
pub fn log_pois(z: u64, eta: f64) -> f64 {
    z as f64 * eta - eta.exp() - ln_fact(z)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson on `[a, b]`, started from a uniform split so narrow peaks
/// are not missed by the first coarse estimate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let pieces = 32;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            simpson_rec(&f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// `log ∫ p(z₁ | o₁ + τ₁) p(z₂ | o₂ + τ₂) N(τ; 0, K) dτ` for a 2×2 `K` by nested
/// adaptive quadrature in whitened coordinates `τ = L u`.
pub fn exact_log_marginal_2(k: &DMatrix<f64>, z: [u64; 2], offset: [f64; 2]) -> f64 {
    let l11 = k[(0, 0)].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { k[(1, 0)] / l11 } else { 0.0 };
    let l22 = (k[(1, 1)] - l21 * l21).max(0.0).sqrt();
    let log_h = |u1: f64, u2: f64| {
        let t1 = l11 * u1;
        let t2 = l21 * u1 + l22 * u2;
        log_pois(z[0], offset[0] + t1) + log_pois(z[1], offset[1] + t2) - 0.5 * (u1 * u1 + u2 * u2)
    };
    // Scale by the maximum on a coarse grid to keep the integrand O(1).
    let mut scale = f64::NEG_INFINITY;
    for i in 0..=200 {
        for j in 0..=200 {
            scale = scale.max(log_h(-10.0 + 0.1 * i as f64, -10.0 + 0.1 * j as f64));
        }
    }
    let inner = |u1: f64| adaptive_simpson(|u2| (log_h(u1, u2) - scale).exp(), -10.0, 10.0, 1e-9);
    let total = adaptive_simpson(inner, -10.0, 10.0, 1e-8);
    total.ln() + scale - (2.0 * std::f64::consts::PI).ln()
}

/// Predictive moments of new counts by self-normalised importance sampling
/// with the prior `N(0, K₊)` as proposal.
#[derive(Debug, Clone, Copy)]
pub struct IsMoments {
    pub mean: [f64; 2],
    pub var: [f64; 2],
    pub cov: f64,
    pub ess: f64,
}

/// `k_plus` stacks the observed sites followed by the two new sites; `c` is
/// `log E* + U*ᵀβ` for each component.
///
/// Works in whitened coordinates `τ = L u`, where the posterior of `u` has
/// Hessian `I + LᵀWL ⪰ I`. The proposal is a Gaussian at the posterior mode
/// of `u` (found by a plain Newton iteration here) with covariance inflated
/// by 1.5² over the inverse Hessian.
pub fn is_moments(k_plus: &DMatrix<f64>, z: &[u64], offset: &[f64], c: [f64; 2], draws: usize, seed: u64) -> IsMoments {
    let n = k_plus.nrows();
    let m = z.len();
    let jitter = 1e-12 * k_plus.diagonal().mean();
    let l = Cholesky::new(k_plus + DMatrix::identity(n, n) * jitter).expect("oracle covariance factors").unpack();
    let lo = l.rows(0, m).into_owned();
    let log_target = |u: &DVector<f64>| {
        let t = &lo * u;
        (0..m).map(|i| log_pois(z[i], offset[i] + t[i])).sum::<f64>() - 0.5 * u.norm_squared()
    };
    let mut u = DVector::zeros(n);
    let mut hess = DMatrix::identity(n, n);
    for _ in 0..200 {
        let t = &lo * &u;
        let mu = DVector::from_fn(m, |i, _| (offset[i] + t[i]).exp());
        let r = DVector::from_fn(m, |i, _| z[i] as f64 - mu[i]);
        let grad = lo.transpose() * r - &u;
        hess = DMatrix::identity(n, n) + lo.transpose() * DMatrix::from_diagonal(&mu) * &lo;
        let step = hess.clone().cholesky().expect("posterior Hessian").solve(&grad);
        let mut s = 1.0;
        let base = log_target(&u);
        while log_target(&(&u + &step * s)) < base && s > 1e-10 {
            s *= 0.5;
        }
        u += &step * s;
        if step.amax() < 1e-12 {
            break;
        }
    }
    let inflate = 1.5;
    let prop_l = hess.cholesky().expect("posterior Hessian").inverse().cholesky().expect("proposal").unpack() * inflate;
    let prop_li = prop_l.clone().try_inverse().expect("proposal factor");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut logw = Vec::with_capacity(draws);
    let mut stars = Vec::with_capacity(draws);
    for _ in 0..draws {
        let e = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let uu = &u + &prop_l * &e;
        // log q up to a constant shared by all draws.
        let log_q = -0.5 * (&prop_li * (&uu - &u)).norm_squared();
        logw.push(log_target(&uu) - log_q);
        let t = &l * &uu;
        stars.push([t[m], t[m + 1]]);
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|v| (v - top).exp()).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|v| v * v).sum();
    let avg = |g: &dyn Fn([f64; 2]) -> f64| w.iter().zip(&stars).map(|(w, s)| w * g(*s)).sum::<f64>() / sw;
    let m1 = avg(&|s| (c[0] + s[0]).exp());
    let m2 = avg(&|s| (c[1] + s[1]).exp());
    let s1 = avg(&|s| (2.0 * (c[0] + s[0])).exp());
    let s2 = avg(&|s| (2.0 * (c[1] + s[1])).exp());
    let s12 = avg(&|s| (c[0] + s[0] + c[1] + s[1]).exp());
    IsMoments { mean: [m1, m2], var: [m1 + s1 - m1 * m1, m2 + s2 - m2 * m2], cov: s12 - m1 * m2, ess: sw * sw / sw2 }
}

/// Central differences with a relative step.
pub fn fd_gradient<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, rel: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let h = rel * x[i].abs().max(1.0);
        let mut up = x.clone();
        let mut dn = x.clone();
        up[i] += h;
        dn[i] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    })
}

/// Draws Poisson counts from `exp(offset + τ)` with `τ ~ N(0, K)`.
pub fn draw_counts(k: &DMatrix<f64>, offset: &[f64], rng: &mut ChaCha20Rng) -> Vec<u64> {
    let n = k.nrows();
    let jitter = 1e-10 * k.diagonal().mean().max(1e-300);
    let l = Cholesky::new(k + DMatrix::identity(n, n) * jitter).expect("factor").unpack();
    let e = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let t = l * e;
    (0..n)
        .map(|i| {
            let mu = (offset[i] + t[i]).exp().min(1e6);
            Poisson::new(mu).map(|p| p.sample(rng) as u64).unwrap_or(0)
        })
        .collect()
}

/// Intercept-only dataset with the given counts and one-dimensional inputs.
pub fn intercept_dataset(z1: Vec<u64>, x1: Vec<Vec<f64>>, z2: Vec<u64>, x2: Vec<Vec<f64>>) -> Dataset {
    let (n1, n2) = (z1.len(), z2.len());
    Dataset::new(
        Component::new(z1, DMatrix::from_element(n1, 1, 1.0), x1).unwrap(),
        Component::new(z2, DMatrix::from_element(n2, 1, 1.0), x2).unwrap(),
    )
    .unwrap()
}

/// Sample covariance of rows.
pub fn sample_cov(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows[0].len();
    let m = rows.len() as f64;
    let mean: Vec<f64> = (0..n).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect();
    DMatrix::from_fn(n, n, |i, j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (m - 1.0))
}

/// A fitted model at fixed `(β, θ)` with no optimisation, for testing
/// prediction in isolation.
pub fn fixed_model(
    data: Dataset,
    beta: mcgpp::RegressionCoefficients,
    theta: mcgpp::Hyperparams,
    kind: mcgpp::ModelKind,
) -> mcgpp::FittedModel {
    let options = mcgpp::OptimOptions { mode_tol: 1e-10, ..Default::default() };
    let lap = mcgpp::inference::laplace_at(&data, &beta, &theta, options.mode_tol, options.mode_max_iter).expect("mode");
    mcgpp::FittedModel {
        kind,
        beta,
        theta,
        tau0: lap.mode.as_slice().to_vec(),
        loglik: lap.log_integral,
        n_params: 0,
        converged: true,
        iterations: 0,
        starts: Vec::new(),
        options,
        data,
    }
}
