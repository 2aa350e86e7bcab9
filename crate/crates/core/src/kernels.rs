//! Closed-form covariances of convolved Gaussian processes.
//!
//! A process `η = h ⋆ γ` with Gaussian smoothing kernel
//! `h(x) = v exp(-½ xᵀAx)` has covariance
//! `k(d) = π^{p/2} v² |A|^{-1/2} exp(-¼ dᵀAd)`. Two processes driven by the
//! same white noise through kernels `(v_a, A_a)` and `(v_b, A_b)` have
//! cross-covariance
//! `k_ab(d) = (2π)^{p/2} v_a v_b |A_a + A_b|^{-1/2} S(√Q_ab(d))` with
//! `Q_ab(d) = dᵀ A_a (A_a + A_b)⁻¹ A_b d` and `S(m) = exp(-m²/2)`.
//!
//! Other families reuse the same construction with `S` replaced by the
//! family's isotropic correlation, which keeps every cross-covariance matrix
//! positive semi-definite and gives all families the same zero-lag variance.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_NU: f64 = 1.5;
pub const DEFAULT_GAMMA: f64 = 1.5;
pub const DEFAULT_ALPHA: f64 = 1.0;

fn default_nu() -> f64 {
    DEFAULT_NU
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// Stationary covariance family of a latent process, with its shape parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovFamily {
    SquaredExponential,
    /// Smoothness `nu > 0`.
    Matern {
        #[serde(default = "default_nu")]
        nu: f64,
    },
    /// Exponent `0 < gamma <= 2`; `gamma = 2` is the squared exponential.
    GammaExponential {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    /// Shape `alpha > 0`; `alpha → ∞` tends to the squared exponential.
    RationalQuadratic {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

impl CovFamily {
    pub fn matern() -> Self {
        CovFamily::Matern { nu: DEFAULT_NU }
    }

    pub fn gamma_exponential() -> Self {
        CovFamily::GammaExponential { gamma: DEFAULT_GAMMA }
    }

    pub fn rational_quadratic() -> Self {
        CovFamily::RationalQuadratic { alpha: DEFAULT_ALPHA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CovFamily::SquaredExponential => "squared_exponential",
            CovFamily::Matern { .. } => "matern",
            CovFamily::GammaExponential { .. } => "gamma_exponential",
            CovFamily::RationalQuadratic { .. } => "rational_quadratic",
        }
    }

    /// Parses a family name, filling in the default shape parameter.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "squared_exponential" | "sqexp" | "se" => Ok(CovFamily::SquaredExponential),
            "matern" => Ok(CovFamily::matern()),
            "gamma_exponential" | "ge" => Ok(CovFamily::gamma_exponential()),
            "rational_quadratic" | "rq" => Ok(CovFamily::rational_quadratic()),
            other => Err(Error::InvalidParameter(format!("unknown covariance family `{other}`"))),
        }
    }

    pub fn same_kind(&self, other: &CovFamily) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    /// The shape parameter, if the family has one.
    pub fn shape(&self) -> Option<f64> {
        match *self {
            CovFamily::SquaredExponential => None,
            CovFamily::Matern { nu } => Some(nu),
            CovFamily::GammaExponential { gamma } => Some(gamma),
            CovFamily::RationalQuadratic { alpha } => Some(alpha),
        }
    }

    /// Same family with the shape parameter replaced. No-op for the squared exponential.
    pub fn with_shape(&self, value: f64) -> Self {
        match self {
            CovFamily::SquaredExponential => CovFamily::SquaredExponential,
            CovFamily::Matern { .. } => CovFamily::Matern { nu: value },
            CovFamily::GammaExponential { .. } => CovFamily::GammaExponential { gamma: value },
            CovFamily::RationalQuadratic { .. } => CovFamily::RationalQuadratic { alpha: value },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CovFamily::SquaredExponential => true,
            CovFamily::Matern { nu } => nu > 0.0 && nu.is_finite(),
            CovFamily::GammaExponential { gamma } => gamma > 0.0 && gamma <= 2.0,
            CovFamily::RationalQuadratic { alpha } => alpha > 0.0 && alpha.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid shape parameter for {self:?}")))
        }
    }

    /// Isotropic correlation `S(m)` with `S(0) = 1`, valid on every `ℝ^p`.
    pub fn correlation(&self, m: f64) -> f64 {
        let m = m.abs();
        match *self {
            CovFamily::SquaredExponential => (-0.5 * m * m).exp(),
            CovFamily::Matern { nu } => matern_correlation(nu, m),
            CovFamily::GammaExponential { gamma } => (-0.5 * m.powf(gamma)).exp(),
            CovFamily::RationalQuadratic { alpha } => (1.0 + m * m / (2.0 * alpha)).powf(-alpha),
        }
    }
}

/// Hyperparameters `(v, A)` of one Gaussian smoothing kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Amplitude of the smoothing kernel (the variance scales with `v²`).
    pub v: f64,
    /// Symmetric positive-definite precision matrix, `p × p`.
    #[serde(with = "matrix_rows")]
    pub a: DMatrix<f64>,
}

impl KernelParams {
    /// Validated constructor: `a` must be square, symmetric and positive definite.
    pub fn new(v: f64, a: DMatrix<f64>) -> Result<Self> {
        let params = KernelParams { v, a };
        params.validate()?;
        Ok(params)
    }

    /// `A = a · I_p`.
    pub fn isotropic(v: f64, a: f64, p: usize) -> Self {
        KernelParams { v, a: DMatrix::identity(p, p) * a }
    }

    pub fn diagonal(v: f64, diag: &[f64]) -> Self {
        KernelParams { v, a: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)) }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.v.is_finite() {
            return Err(Error::InvalidParameter("kernel amplitude must be finite".into()));
        }
        let p = self.a.nrows();
        if p == 0 || self.a.ncols() != p {
            return Err(Error::Dimension(format!("precision matrix is {}x{}", p, self.a.ncols())));
        }
        let scale = self.a.amax().max(f64::MIN_POSITIVE);
        for i in 0..p {
            for j in 0..i {
                if (self.a[(i, j)] - self.a[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter("precision matrix is not symmetric".into()));
                }
            }
        }
        if Cholesky::new(self.a.clone()).is_none() {
            return Err(Error::NotPositiveDefinite("kernel precision matrix".into()));
        }
        Ok(())
    }
}

fn check_dims(d: &[f64], a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != d.len() || a.ncols() != d.len() {
        return Err(Error::Dimension(format!("displacement has length {} but precision matrix is {}x{}", d.len(), a.nrows(), a.ncols())));
    }
    Ok(())
}

fn chol(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

/// Total order on matrices used to evaluate pair terms in a canonical
/// argument order, so that swapping the two kernels is bitwise symmetric.
fn cmp_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Ordering {
    a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// `Σ = A_a (A_a + A_b)⁻¹ A_b`, symmetrised, plus `log |A_a + A_b|`.
fn pair_precision(aa: &DMatrix<f64>, ab: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if aa.shape() != ab.shape() || aa.nrows() != aa.ncols() {
        return Err(Error::Dimension(format!("precision matrices {:?} and {:?}", aa.shape(), ab.shape())));
    }
    let (aa, ab) = if cmp_matrix(aa, ab) == Ordering::Greater { (ab, aa) } else { (aa, ab) };
    let c = chol(aa + ab, "A_a + A_b")?;
    let sigma = aa * c.solve(ab);
    let sym = (&sigma + sigma.transpose()) * 0.5;
    Ok((sym, log_det(&c)))
}

fn quad(d: &[f64], sigma: &DMatrix<f64>) -> f64 {
    let p = d.len();
    let mut q = 0.0;
    for i in 0..p {
        let mut row = 0.0;
        for j in 0..p {
            row += sigma[(i, j)] * d[j];
        }
        q += d[i] * row;
    }
    q.max(0.0)
}

/// `Q_ab(d) = dᵀ A_a (A_a + A_b)⁻¹ A_b d`.
pub fn quad_form(d: &[f64], aa: &DMatrix<f64>, ab: &DMatrix<f64>) -> Result<f64> {
    check_dims(d, aa)?;
    check_dims(d, ab)?;
    let (sigma, _) = pair_precision(aa, ab)?;
    Ok(quad(d, &sigma))
}

/// Squared-exponential self-covariance `π^{p/2} v² |A|^{-1/2} exp(-¼ dᵀAd)`.
pub fn cov_self_sqexp(d: &[f64], params: &KernelParams) -> Result<f64> {
    check_dims(d, &params.a)?;
    let c = chol(params.a.clone(), "kernel precision matrix")?;
    let p = d.len() as f64;
    let q = quad(d, &params.a);
    Ok(PI.powf(0.5 * p) * params.v * params.v * (-0.5 * log_det(&c)).exp() * (-0.25 * q).exp())
}

/// Squared-exponential cross-covariance between two processes sharing one white noise.
pub fn cov_cross_sqexp(d: &[f64], pa: &KernelParams, pb: &KernelParams) -> Result<f64> {
    cov_cross(&CovFamily::SquaredExponential, d, pa, pb)
}

/// Self-covariance of any supported family, normalised so that all families
/// share the squared-exponential variance `π^{p/2} v² |A|^{-1/2}` at zero lag.
pub fn cov_iso(family: &CovFamily, d: &[f64], params: &KernelParams) -> Result<f64> {
    family.validate()?;
    check_dims(d, &params.a)?;
    let c = chol(params.a.clone(), "kernel precision matrix")?;
    let p = d.len() as f64;
    let m = (0.5 * quad(d, &params.a)).sqrt();
    Ok(PI.powf(0.5 * p) * params.v * params.v * (-0.5 * log_det(&c)).exp() * family.correlation(m))
}

/// `k_ab(d) = v_a v_b (2π)^{p/2} |A_a + A_b|^{-1/2} S(√Q_ab(d))` for an
/// isotropic correlation `S` with `S(0) = 1` that is valid in every dimension.
pub fn cov_cross_general<S>(s: S, d: &[f64], pa: &KernelParams, pb: &KernelParams) -> Result<f64>
where
    S: Fn(f64) -> f64,
{
    check_dims(d, &pa.a)?;
    check_dims(d, &pb.a)?;
    let (sigma, ld) = pair_precision(&pa.a, &pb.a)?;
    let p = d.len() as f64;
    let pre = pa.v * pb.v * (2.0 * PI).powf(0.5 * p) * (-0.5 * ld).exp();
    Ok(pre * s(quad(d, &sigma).sqrt()))
}

pub fn cov_cross(family: &CovFamily, d: &[f64], pa: &KernelParams, pb: &KernelParams) -> Result<f64> {
    family.validate()?;
    cov_cross_general(|m| family.correlation(m), d, pa, pb)
}

/// A covariance term between two kernels with the per-pair constants
/// (`Σ` and the prefactor) computed once, for filling Gram matrices.
#[derive(Clone, Debug)]
pub struct PairKernel {
    family: CovFamily,
    prefactor: f64,
    sigma: DMatrix<f64>,
}

impl PairKernel {
    pub fn new(family: &CovFamily, pa: &KernelParams, pb: &KernelParams) -> Result<Self> {
        family.validate()?;
        let (sigma, ld) = pair_precision(&pa.a, &pb.a)?;
        let p = pa.dim() as f64;
        let prefactor = pa.v * pb.v * (2.0 * PI).powf(0.5 * p) * (-0.5 * ld).exp();
        Ok(PairKernel { family: *family, prefactor, sigma })
    }

    pub fn self_term(family: &CovFamily, params: &KernelParams) -> Result<Self> {
        Self::new(family, params, params)
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// Covariance at zero lag.
    pub fn variance(&self) -> f64 {
        self.prefactor
    }

    /// Covariance between points `x` and `y` (displacement `x - y`).
    pub fn between(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.prefactor == 0.0 {
            return 0.0;
        }
        let p = x.len();
        let mut q = 0.0;
        for i in 0..p {
            let di = x[i] - y[i];
            let mut row = 0.0;
            for j in 0..p {
                row += self.sigma[(i, j)] * (x[j] - y[j]);
            }
            q += di * row;
        }
        self.prefactor * self.family.correlation(q.max(0.0).sqrt())
    }
}

/// Matérn correlation with unit length: `2^{1-ν}/Γ(ν) (√(2ν) m)^ν K_ν(√(2ν) m)`.
fn matern_correlation(nu: f64, m: f64) -> f64 {
    if m == 0.0 {
        return 1.0;
    }
    let y = (2.0 * nu).sqrt() * m;
    if nu == 0.5 {
        (-y).exp()
    } else if nu == 1.5 {
        (1.0 + y) * (-y).exp()
    } else if nu == 2.5 {
        (1.0 + y + y * y / 3.0) * (-y).exp()
    } else {
        if y < 1e-10 {
            return 1.0;
        }
        let log_s = (1.0 - nu) * std::f64::consts::LN_2 - libm::lgamma(nu) + nu * y.ln() + ln_bessel_k(nu, y);
        log_s.exp().min(1.0)
    }
}

/// `ln K_ν(y)` for `y > 0` from `K_ν(y) = ∫₀^∞ exp(-y cosh t) cosh(νt) dt`.
///
/// The integrand is entire and decays doubly exponentially, so the
/// trapezoidal rule converges geometrically in the step size.
pub(crate) fn ln_bessel_k(nu: f64, y: f64) -> f64 {
    const H: f64 = 0.05;
    let ln_cosh = |x: f64| {
        let ax = x.abs();
        ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
    };
    let f = |t: f64| -y * t.cosh() + ln_cosh(nu * t);
    let mut terms = Vec::with_capacity(256);
    let mut peak = f64::NEG_INFINITY;
    let mut k = 0usize;
    loop {
        let t = k as f64 * H;
        let v = f(t);
        let w = if k == 0 { v + 0.5f64.ln() } else { v };
        terms.push(w);
        peak = peak.max(v);
        // Past the maximum and negligible relative to it.
        if v < peak - 60.0 && t > 0.0 {
            break;
        }
        k += 1;
        if k > 20_000 {
            break;
        }
    }
    let s: f64 = terms.iter().map(|w| (w - peak).exp()).sum();
    peak + (s * H).ln()
}

pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }
}
