//! Numeric diagnostics: RKHS norms, the regret term `log|I + δK|`, regret
//! growth curves and a positive-definiteness audit of assembled covariances.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::{assemble_k, McgpHyperparams, Process, StackedInputs};
use crate::error::{Error, Result};
use crate::kernels::{CovFamily, KernelParams};

/// `log|I + δK|` through a Cholesky factor.
pub fn regret_term(k: &DMatrix<f64>, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::Dimension(format!("matrix is {}x{}", n, k.ncols())));
    }
    let m = DMatrix::identity(n, n) + k * delta;
    let c = Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite("I + δK".into()))?;
    Ok(2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// `αᵀKα`, the squared RKHS norm of `Kα`.
pub fn rkhs_norm(alpha: &DVector<f64>, k: &DMatrix<f64>) -> Result<f64> {
    if k.nrows() != alpha.len() || k.ncols() != alpha.len() {
        return Err(Error::Dimension(format!("alpha has length {} but K is {}x{}", alpha.len(), k.nrows(), k.ncols())));
    }
    Ok(alpha.dot(&(k * alpha)))
}

/// Average regret at increasing sample sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub sizes: Vec<usize>,
    pub regret: Vec<f64>,
    pub delta: f64,
}

impl RegretCurve {
    pub fn regret_over_n(&self) -> Vec<f64> {
        self.sizes.iter().zip(&self.regret).map(|(&n, r)| r / n as f64).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "regret", "regret_over_n"])?;
        for ((n, r), q) in self.sizes.iter().zip(&self.regret).zip(self.regret_over_n()) {
            out.write_record([n.to_string(), format!("{r:.10e}"), format!("{q:.10e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Number of input draws averaged per size in [`regret_growth`].
pub const REGRET_DRAWS: usize = 20;

/// Mean of `log|I + δK_n|` over [`REGRET_DRAWS`] input sets per size, with
/// `⌈n/2⌉` and `⌊n/2⌋` inputs per component drawn uniformly on `[−5, 5]^p`.
pub fn regret_growth(theta: &McgpHyperparams, sizes: &[usize], delta: f64, seed: u64) -> Result<RegretCurve> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes.first().is_some_and(|&n| n < 2) {
        return Err(Error::InvalidParameter("sizes must be strictly increasing and at least 2".into()));
    }
    let p = theta.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut regret = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut total = 0.0;
        for _ in 0..REGRET_DRAWS {
            let mut draw = |m: usize| (0..m).map(|_| (0..p).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
            let inputs = StackedInputs::new(draw(n.div_ceil(2)), draw(n / 2))?;
            total += regret_term(&assemble_k(&inputs, theta)?, delta)?;
        }
        regret.push(total / REGRET_DRAWS as f64);
    }
    Ok(RegretCurve { sizes: sizes.to_vec(), regret, delta })
}

/// Summary of [`pd_audit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdAudit {
    pub draws: usize,
    /// Draws whose covariance factors after `1e-6 ×` mean-diagonal jitter.
    pub cholesky_ok: usize,
    /// Draws with minimum eigenvalue `≥ −1e-8 ‖K‖₂` before jitter.
    pub eigen_ok: usize,
    /// Smallest `λ_min / ‖K‖₂` seen.
    pub worst_ratio: f64,
    pub failures: Vec<String>,
}

impl PdAudit {
    pub fn write_report<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "draws: {}", self.draws)?;
        writeln!(w, "cholesky_with_jitter_ok: {}", self.cholesky_ok)?;
        writeln!(w, "min_eigenvalue_ok: {}", self.eigen_ok)?;
        writeln!(w, "worst_min_eigenvalue_ratio: {:.6e}", self.worst_ratio)?;
        for f in &self.failures {
            writeln!(w, "failure: {f}")?;
        }
        Ok(())
    }
}

fn random_family<R: Rng>(rng: &mut R) -> CovFamily {
    match rng.random_range(0..4) {
        0 => CovFamily::SquaredExponential,
        1 => CovFamily::Matern { nu: [0.5, 1.5, 2.5, rng.random_range(0.2..4.0)][rng.random_range(0..4)] },
        2 => CovFamily::GammaExponential { gamma: rng.random_range(0.1..=2.0) },
        _ => CovFamily::RationalQuadratic { alpha: rng.random_range(0.1..10.0) },
    }
}

fn random_precision<R: Rng>(rng: &mut R, p: usize) -> DMatrix<f64> {
    let l = DMatrix::from_fn(p, p, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) * 0.7);
    let a = &l * l.transpose() + DMatrix::identity(p, p) * rng.random_range(0.05..1.0);
    (&a + a.transpose()) * 0.5
}

/// A random valid hyperparameter set with independently drawn families,
/// full precision matrices and a signed second shared amplitude.
pub fn random_theta<R: Rng>(rng: &mut R, p: usize) -> McgpHyperparams {
    let kernel = |signed: bool, rng: &mut R| {
        let v = rng.random_range(0.1..2.0);
        let v = if signed && rng.random_bool(0.5) { -v } else { v };
        KernelParams { v, a: random_precision(rng, p) }
    };
    let xi = [kernel(false, rng), kernel(true, rng)];
    let eta = [Process::new(random_family(rng), kernel(false, rng)), Process::new(random_family(rng), kernel(false, rng))];
    McgpHyperparams { shared_family: random_family(rng), xi, eta }
}

/// Random inputs on `[−3, 3]^p` with 1–8 points per component.
pub fn random_inputs<R: Rng>(rng: &mut R, p: usize) -> StackedInputs {
    let draw = |rng: &mut R| {
        let n = rng.random_range(1..=8);
        (0..n).map(|_| (0..p).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
    };
    let x1 = draw(rng);
    let x2 = draw(rng);
    StackedInputs { x1, x2 }
}

/// Assembles covariances for `draws` random `(inputs, θ)` and checks
/// factorability with jitter and the sign of the smallest eigenvalue.
pub fn pd_audit(draws: usize, seed: u64) -> Result<PdAudit> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut audit = PdAudit { draws, cholesky_ok: 0, eigen_ok: 0, worst_ratio: f64::INFINITY, failures: Vec::new() };
    for i in 0..draws {
        let p = rng.random_range(1..=3);
        let theta = random_theta(&mut rng, p);
        let inputs = random_inputs(&mut rng, p);
        let k = assemble_k(&inputs, &theta)?;
        let n = k.nrows();
        let mean_diag = k.diagonal().sum() / n as f64;
        let jittered = &k + DMatrix::identity(n, n) * (1e-6 * mean_diag);
        let chol = Cholesky::new(jittered).is_some();
        let eig = k.clone().symmetric_eigen().eigenvalues;
        let norm = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let ratio = eig.min() / norm;
        audit.worst_ratio = audit.worst_ratio.min(ratio);
        if chol {
            audit.cholesky_ok += 1;
        }
        if ratio >= -1e-8 {
            audit.eigen_ok += 1;
        }
        if !chol || ratio < -1e-8 {
            audit.failures.push(format!("draw {i}: p={p}, n={n}, cholesky={chol}, min_eig/norm={ratio:.3e}"));
        }
    }
    Ok(audit)
}
