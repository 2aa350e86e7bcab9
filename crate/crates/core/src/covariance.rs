//! Stacked covariance of the bivariate latent field and its factorisation.
//!
//! Latent values are always ordered as: component-1 training points,
//! component-2 training points, then (for prediction) `τ₁*` and `τ₂*`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CovFamily, KernelParams, PairKernel};

/// Relative jitter levels tried by [`chol_psd`], as multiples of the mean diagonal.
pub const DEFAULT_JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// One latent process: a covariance family and its smoothing-kernel parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Process {
    pub family: CovFamily,
    pub params: KernelParams,
}

impl Process {
    pub fn new(family: CovFamily, params: KernelParams) -> Self {
        Process { family, params }
    }
}

/// Hyperparameters of the bivariate convolved process `τ_a = ξ_a + η_a`.
///
/// `ξ₁, ξ₂` convolve the same white noise and must share one family; the
/// component-specific `η₁, η₂` may each use any family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McgpHyperparams {
    pub shared_family: CovFamily,
    pub xi: [KernelParams; 2],
    pub eta: [Process; 2],
}

impl McgpHyperparams {
    /// Every process uses `family` with the same `(v, A)`.
    pub fn uniform(family: CovFamily, params: KernelParams) -> Self {
        McgpHyperparams {
            shared_family: family,
            xi: [params.clone(), params.clone()],
            eta: [Process::new(family, params.clone()), Process::new(family, params)],
        }
    }

    pub fn dim(&self) -> usize {
        self.xi[0].dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.shared_family.validate()?;
        let p = self.dim();
        for k in self.xi.iter().chain(self.eta.iter().map(|e| &e.params)) {
            k.validate()?;
            if k.dim() != p {
                return Err(Error::Dimension("latent processes have different input dimensions".into()));
            }
        }
        for e in &self.eta {
            e.family.validate()?;
        }
        Ok(())
    }

    /// Pair terms ready for filling Gram matrices.
    pub fn prepare(&self) -> Result<McgpGram> {
        self.validate()?;
        Ok(McgpGram {
            xi_self: [PairKernel::self_term(&self.shared_family, &self.xi[0])?, PairKernel::self_term(&self.shared_family, &self.xi[1])?],
            xi_cross: PairKernel::new(&self.shared_family, &self.xi[0], &self.xi[1])?,
            eta: [
                PairKernel::self_term(&self.eta[0].family, &self.eta[0].params)?,
                PairKernel::self_term(&self.eta[1].family, &self.eta[1].params)?,
            ],
        })
    }
}

/// Covariance-input locations for the two components; `n₁` and `n₂` may differ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackedInputs {
    pub x1: Vec<Vec<f64>>,
    pub x2: Vec<Vec<f64>>,
}

impl StackedInputs {
    pub fn new(x1: Vec<Vec<f64>>, x2: Vec<Vec<f64>>) -> Result<Self> {
        let s = StackedInputs { x1, x2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x1.is_empty() || self.x2.is_empty() {
            return Err(Error::InvalidData("each component needs at least one input".into()));
        }
        let p = self.x1[0].len();
        if p == 0 || self.x1.iter().chain(&self.x2).any(|x| x.len() != p) {
            return Err(Error::Dimension("input vectors have inconsistent dimension".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.x1.first().map_or(0, |x| x.len())
    }

    pub fn len(&self) -> usize {
        self.x1.len() + self.x2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sites in stacking order.
    pub fn sites(&self) -> Vec<Site<'_>> {
        self.x1.iter().map(|x| Site { comp: 0, x }).chain(self.x2.iter().map(|x| Site { comp: 1, x })).collect()
    }

    /// Sites in stacking order followed by `τ₁*`, `τ₂*`.
    pub fn sites_plus<'a>(&'a self, xstar: [&'a [f64]; 2]) -> Vec<Site<'a>> {
        let mut s = self.sites();
        s.push(Site { comp: 0, x: xstar[0] });
        s.push(Site { comp: 1, x: xstar[1] });
        s
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("new input has dimension {}, expected {}", x.len(), self.dim())));
        }
        Ok(())
    }
}

/// A latent value location: component index (0 or 1) and input.
#[derive(Clone, Copy, Debug)]
pub struct Site<'a> {
    pub comp: usize,
    pub x: &'a [f64],
}

/// Covariance between latent values at two sites. `same_slot` is true only
/// on the diagonal, for models carrying per-observation white noise.
pub trait SiteCovariance {
    fn cov(&self, a: Site<'_>, b: Site<'_>, same_slot: bool) -> f64;
}

/// Precomputed pair terms of an [`McgpHyperparams`].
#[derive(Clone, Debug)]
pub struct McgpGram {
    xi_self: [PairKernel; 2],
    xi_cross: PairKernel,
    eta: [PairKernel; 2],
}

impl SiteCovariance for McgpGram {
    fn cov(&self, a: Site<'_>, b: Site<'_>, _same_slot: bool) -> f64 {
        match (a.comp, b.comp) {
            (i, j) if i == j => self.xi_self[i].between(a.x, b.x) + self.eta[i].between(a.x, b.x),
            (0, _) => self.xi_cross.between(a.x, b.x),
            _ => self.xi_cross.between(b.x, a.x),
        }
    }
}

/// Symmetric Gram matrix over `sites`; the lower triangle mirrors the upper.
pub fn gram_matrix<C: SiteCovariance + ?Sized>(c: &C, sites: &[Site<'_>]) -> DMatrix<f64> {
    let n = sites.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = c.cov(sites[i], sites[j], i == j);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn check_theta_dim(inputs: &StackedInputs, p: usize) -> Result<()> {
    inputs.validate()?;
    if inputs.dim() != p {
        return Err(Error::Dimension(format!("inputs have dimension {} but kernels have {}", inputs.dim(), p)));
    }
    Ok(())
}

/// The `(n₁+n₂)²` covariance of the stacked latent vector.
pub fn assemble_k(inputs: &StackedInputs, theta: &McgpHyperparams) -> Result<DMatrix<f64>> {
    check_theta_dim(inputs, theta.dim())?;
    Ok(gram_matrix(&theta.prepare()?, &inputs.sites()))
}

/// The `(n₁+n₂+2)²` covariance of `(τ, τ₁*, τ₂*)`.
pub fn assemble_k_plus(inputs: &StackedInputs, xstar: [&[f64]; 2], theta: &McgpHyperparams) -> Result<DMatrix<f64>> {
    check_theta_dim(inputs, theta.dim())?;
    inputs.check_point(xstar[0])?;
    inputs.check_point(xstar[1])?;
    Ok(gram_matrix(&theta.prepare()?, &inputs.sites_plus(xstar)))
}

/// Lower Cholesky factor `L` with `L Lᵀ = K + jitter · I`.
#[derive(Clone, Debug)]
pub struct CholFactor {
    pub l: DMatrix<f64>,
    pub jitter: f64,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|x| x.ln()).sum::<f64>()
    }

    /// `(K + jI)⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.l.solve_lower_triangular(b).unwrap_or_else(|| DVector::from_element(b.len(), f64::NAN));
        self.l.transpose().solve_upper_triangular(&y).unwrap_or_else(|| DVector::from_element(b.len(), f64::NAN))
    }

    /// `L ε`.
    pub fn mul(&self, eps: &DVector<f64>) -> DVector<f64> {
        &self.l * eps
    }
}

/// Cholesky factorisation with escalating diagonal jitter.
///
/// Levels in `schedule` are relative to the mean diagonal of `K`. The
/// all-zero matrix factors exactly as `L = 0` with no jitter.
pub fn chol_psd(k: &DMatrix<f64>, schedule: &[f64]) -> Result<CholFactor> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::Dimension(format!("covariance is {}x{}", n, k.ncols())));
    }
    if k.iter().all(|&x| x == 0.0) {
        return Ok(CholFactor { l: DMatrix::zeros(n, n), jitter: 0.0 });
    }
    let mean_diag = if n == 0 { 0.0 } else { k.diagonal().sum() / n as f64 };
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut last = 0.0;
    for &level in schedule {
        let jitter = level * scale;
        last = jitter;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok(CholFactor { l: c.unpack(), jitter });
        }
    }
    Err(Error::SingularCovariance { jitter: last })
}

/// Exact sampler for `N(0, K)` through a (jittered) Cholesky factor.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    factor: CholFactor,
}

impl GaussianSampler {
    pub fn new(k: &DMatrix<f64>) -> Result<Self> {
        Ok(GaussianSampler { factor: chol_psd(k, &DEFAULT_JITTER_SCHEDULE)? })
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.factor.dim();
        let eps = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        self.factor.mul(&eps)
    }
}

/// One draw of `(τ₁, τ₂)` at the stacked inputs; deterministic per seed.
pub fn sample_mcgp(inputs: &StackedInputs, theta: &McgpHyperparams, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = assemble_k(inputs, theta)?;
    let sampler = GaussianSampler::new(&k)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let tau = sampler.draw(&mut rng);
    let n1 = inputs.x1.len();
    Ok((tau.rows(0, n1).iter().copied().collect(), tau.rows(n1, inputs.x2.len()).iter().copied().collect()))
}
