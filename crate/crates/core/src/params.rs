//! Model specifications, hyperparameters of every supported latent structure,
//! and their unconstrained encoding for optimisation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{gram_matrix, McgpHyperparams, Process, Site, SiteCovariance, StackedInputs};
use crate::error::{Error, Result};
use crate::kernels::{CovFamily, KernelParams, PairKernel};

/// Covariance families of the four latent processes of the convolved model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Family of `ξ₁, ξ₂` (one family: they share a white-noise source).
    pub shared: CovFamily,
    /// Families of `η₁, η₂`.
    pub eta: [CovFamily; 2],
    /// Also optimise shape parameters (ν, γ, α); otherwise they stay fixed.
    #[serde(default)]
    pub estimate_shape: bool,
}

impl ModelSpec {
    pub fn uniform(family: CovFamily) -> Self {
        ModelSpec { shared: family, eta: [family, family], estimate_shape: false }
    }

    /// Squared-exponential shared and first component, gamma-exponential second component.
    pub fn model1() -> Self {
        ModelSpec {
            shared: CovFamily::SquaredExponential,
            eta: [CovFamily::SquaredExponential, CovFamily::gamma_exponential()],
            estimate_shape: false,
        }
    }

    pub fn model2() -> Self {
        Self::uniform(CovFamily::rational_quadratic())
    }

    pub fn model3() -> Self {
        Self::uniform(CovFamily::matern())
    }

    pub fn model4() -> Self {
        Self::uniform(CovFamily::SquaredExponential)
    }

    /// Preset `1..=4`.
    pub fn preset(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Self::model1()),
            2 => Ok(Self::model2()),
            3 => Ok(Self::model3()),
            4 => Ok(Self::model4()),
            _ => Err(Error::InvalidParameter(format!("no model preset {k}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shared.validate()?;
        self.eta.iter().try_for_each(|f| f.validate())
    }
}

/// Which latent structure a model uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Convolved bivariate process.
    Mcgp(ModelSpec),
    /// `τ₁` a squared-exponential process, `τ₂ | τ₁ ~ N(α τ₁, σ²)` pointwise.
    Cdr,
    /// Two independent squared-exponential processes.
    Indep,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Mcgp(_) => "mcgpp",
            ModelKind::Cdr => "cdr",
            ModelKind::Indep => "indep",
        }
    }
}

/// Hyperparameters `θ` for any [`ModelKind`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparams {
    Mcgp(McgpHyperparams),
    Cdr(CdrTheta),
    Indep { processes: [Process; 2] },
}

/// Hyperparameters of the conditional baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdrTheta {
    pub tau1: Process,
    pub alpha: f64,
    pub sigma_eps2: f64,
}

const LOG_V2_RANGE: (f64, f64) = (-30.0, 10.0);
const LOG_A_RANGE: (f64, f64) = (-10.0, 10.0);
const SIGNED_V_MAX: f64 = 148.413_159_102_576_6; // e^5
const ALPHA_MAX: f64 = 50.0;
const LOGIT_RANGE: f64 = 30.0;

fn shape_bounds(f: &CovFamily) -> Option<(f64, f64)> {
    match f {
        CovFamily::SquaredExponential => None,
        CovFamily::Matern { .. } => Some((0.1, 10.0)),
        CovFamily::GammaExponential { .. } => Some((0.0, 2.0)),
        CovFamily::RationalQuadratic { .. } => Some((0.05, 50.0)),
    }
}

fn clampf(x: f64, r: (f64, f64)) -> f64 {
    if x.is_nan() {
        r.0
    } else {
        x.clamp(r.0, r.1)
    }
}

struct Reader<'a> {
    u: &'a [f64],
    pos: usize,
}

impl Reader<'_> {
    fn next(&mut self) -> Result<f64> {
        let v = *self.u.get(self.pos).ok_or_else(|| Error::Dimension("parameter vector too short".into()))?;
        self.pos += 1;
        if v.is_nan() {
            return Err(Error::InvalidParameter("NaN parameter".into()));
        }
        Ok(v)
    }
}

fn push_log_v2(out: &mut Vec<f64>, v: f64) {
    out.push(clampf((v * v).ln(), LOG_V2_RANGE));
}

fn push_log_diag(out: &mut Vec<f64>, k: &KernelParams) {
    for i in 0..k.dim() {
        out.push(clampf(k.a[(i, i)].ln(), LOG_A_RANGE));
    }
}

fn read_kernel(r: &mut Reader<'_>, p: usize, signed: bool) -> Result<KernelParams> {
    let v = if signed { r.next()?.clamp(-SIGNED_V_MAX, SIGNED_V_MAX) } else { (0.5 * clampf(r.next()?, LOG_V2_RANGE)).exp() };
    let diag = (0..p).map(|_| r.next().map(|x| clampf(x, LOG_A_RANGE).exp())).collect::<Result<Vec<_>>>()?;
    Ok(KernelParams::diagonal(v, &diag))
}

fn push_shape(out: &mut Vec<f64>, f: &CovFamily) {
    if let (Some((lo, hi)), Some(s)) = (shape_bounds(f), f.shape()) {
        let t = ((s - lo) / (hi - s)).ln();
        out.push(clampf(t, (-LOGIT_RANGE, LOGIT_RANGE)));
    }
}

fn read_shape(r: &mut Reader<'_>, f: &CovFamily) -> Result<CovFamily> {
    match shape_bounds(f) {
        None => Ok(*f),
        Some((lo, hi)) => {
            let t = clampf(r.next()?, (-LOGIT_RANGE, LOGIT_RANGE));
            Ok(f.with_shape(lo + (hi - lo) / (1.0 + (-t).exp())))
        }
    }
}

impl Hyperparams {
    pub fn dim(&self) -> usize {
        match self {
            Hyperparams::Mcgp(t) => t.dim(),
            Hyperparams::Cdr(t) => t.tau1.params.dim(),
            Hyperparams::Indep { processes } => processes[0].params.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyperparams::Mcgp(t) => t.validate(),
            Hyperparams::Cdr(t) => {
                t.tau1.family.validate()?;
                t.tau1.params.validate()?;
                if !(t.sigma_eps2 > 0.0 && t.sigma_eps2.is_finite()) || !t.alpha.is_finite() {
                    return Err(Error::InvalidParameter("CDR needs finite alpha and sigma_eps2 > 0".into()));
                }
                Ok(())
            }
            Hyperparams::Indep { processes } => {
                for p in processes {
                    p.family.validate()?;
                    p.params.validate()?;
                }
                if processes[0].params.dim() != processes[1].params.dim() {
                    return Err(Error::Dimension("independent processes have different input dimensions".into()));
                }
                Ok(())
            }
        }
    }

    /// Checks that `self` is the right variant for `kind`, with matching families.
    pub fn check_kind(&self, kind: &ModelKind) -> Result<()> {
        let ok = match (self, kind) {
            (Hyperparams::Mcgp(t), ModelKind::Mcgp(s)) => {
                t.shared_family.same_kind(&s.shared) && t.eta[0].family.same_kind(&s.eta[0]) && t.eta[1].family.same_kind(&s.eta[1])
            }
            (Hyperparams::Cdr(_), ModelKind::Cdr) | (Hyperparams::Indep { .. }, ModelKind::Indep) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("hyperparameters do not match model `{}`", kind.name())))
        }
    }

    /// Whether the two components can be correlated a priori.
    pub fn has_cross(&self) -> bool {
        !matches!(self, Hyperparams::Indep { .. })
    }

    fn site_cov(&self) -> Result<Box<dyn SiteCovariance>> {
        self.validate()?;
        Ok(match self {
            Hyperparams::Mcgp(t) => Box::new(t.prepare()?),
            Hyperparams::Cdr(t) => {
                Box::new(CdrGram { k1: PairKernel::self_term(&t.tau1.family, &t.tau1.params)?, alpha: t.alpha, sigma_eps2: t.sigma_eps2 })
            }
            Hyperparams::Indep { processes } => Box::new(IndepGram {
                k: [
                    PairKernel::self_term(&processes[0].family, &processes[0].params)?,
                    PairKernel::self_term(&processes[1].family, &processes[1].params)?,
                ],
            }),
        })
    }

    fn check_inputs(&self, inputs: &StackedInputs) -> Result<()> {
        inputs.validate()?;
        if inputs.dim() != self.dim() {
            return Err(Error::Dimension(format!("inputs have dimension {} but kernels have {}", inputs.dim(), self.dim())));
        }
        Ok(())
    }

    /// Prior covariance of the stacked latent vector.
    pub fn covariance(&self, inputs: &StackedInputs) -> Result<DMatrix<f64>> {
        self.check_inputs(inputs)?;
        Ok(gram_matrix(self.site_cov()?.as_ref(), &inputs.sites()))
    }

    /// Prior covariance of `(τ, τ₁*, τ₂*)`.
    pub fn covariance_plus(&self, inputs: &StackedInputs, xstar: [&[f64]; 2]) -> Result<DMatrix<f64>> {
        self.check_inputs(inputs)?;
        inputs.check_point(xstar[0])?;
        inputs.check_point(xstar[1])?;
        Ok(gram_matrix(self.site_cov()?.as_ref(), &inputs.sites_plus(xstar)))
    }

    /// Unconstrained coordinates: log squared amplitudes, log diagonal
    /// precisions, a signed amplitude for `ξ₂`, `α` and `log σ²` for the
    /// conditional model, and logit shapes when `estimate_shape` is set.
    /// Off-diagonal precision entries are not encoded.
    pub fn encode(&self, kind: &ModelKind) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            Hyperparams::Mcgp(t) => {
                push_log_v2(&mut out, t.xi[0].v);
                push_log_diag(&mut out, &t.xi[0]);
                out.push(t.xi[1].v.clamp(-SIGNED_V_MAX, SIGNED_V_MAX));
                push_log_diag(&mut out, &t.xi[1]);
                for e in &t.eta {
                    push_log_v2(&mut out, e.params.v);
                    push_log_diag(&mut out, &e.params);
                }
                if matches!(kind, ModelKind::Mcgp(s) if s.estimate_shape) {
                    push_shape(&mut out, &t.shared_family);
                    push_shape(&mut out, &t.eta[0].family);
                    push_shape(&mut out, &t.eta[1].family);
                }
            }
            Hyperparams::Cdr(t) => {
                push_log_v2(&mut out, t.tau1.params.v);
                push_log_diag(&mut out, &t.tau1.params);
                out.push(t.alpha.clamp(-ALPHA_MAX, ALPHA_MAX));
                out.push(clampf(t.sigma_eps2.ln(), LOG_V2_RANGE));
            }
            Hyperparams::Indep { processes } => {
                for p in processes {
                    push_log_v2(&mut out, p.params.v);
                    push_log_diag(&mut out, &p.params);
                }
            }
        }
        out
    }

    /// Inverse of [`encode`](Self::encode); `self` supplies the families and
    /// any shapes that are not being estimated. Coordinates outside the
    /// search box are clamped.
    pub fn decode(&self, kind: &ModelKind, u: &[f64]) -> Result<Hyperparams> {
        let p = self.dim();
        let mut r = Reader { u, pos: 0 };
        let out = match self {
            Hyperparams::Mcgp(t) => {
                let xi1 = read_kernel(&mut r, p, false)?;
                let xi2 = read_kernel(&mut r, p, true)?;
                let e1 = read_kernel(&mut r, p, false)?;
                let e2 = read_kernel(&mut r, p, false)?;
                let (mut fs, mut f1, mut f2) = (t.shared_family, t.eta[0].family, t.eta[1].family);
                if matches!(kind, ModelKind::Mcgp(s) if s.estimate_shape) {
                    fs = read_shape(&mut r, &fs)?;
                    f1 = read_shape(&mut r, &f1)?;
                    f2 = read_shape(&mut r, &f2)?;
                }
                Hyperparams::Mcgp(McgpHyperparams { shared_family: fs, xi: [xi1, xi2], eta: [Process::new(f1, e1), Process::new(f2, e2)] })
            }
            Hyperparams::Cdr(t) => {
                let k = read_kernel(&mut r, p, false)?;
                let alpha = r.next()?.clamp(-ALPHA_MAX, ALPHA_MAX);
                let sigma_eps2 = clampf(r.next()?, LOG_V2_RANGE).exp();
                Hyperparams::Cdr(CdrTheta { tau1: Process::new(t.tau1.family, k), alpha, sigma_eps2 })
            }
            Hyperparams::Indep { processes } => {
                let k1 = read_kernel(&mut r, p, false)?;
                let k2 = read_kernel(&mut r, p, false)?;
                Hyperparams::Indep { processes: [Process::new(processes[0].family, k1), Process::new(processes[1].family, k2)] }
            }
        };
        if r.pos != u.len() {
            return Err(Error::Dimension(format!("parameter vector has {} entries, expected {}", u.len(), r.pos)));
        }
        Ok(out)
    }

    /// Number of free coordinates in [`encode`](Self::encode).
    pub fn n_free(&self, kind: &ModelKind) -> usize {
        self.encode(kind).len()
    }
}

struct CdrGram {
    k1: PairKernel,
    alpha: f64,
    sigma_eps2: f64,
}

impl SiteCovariance for CdrGram {
    fn cov(&self, a: Site<'_>, b: Site<'_>, same_slot: bool) -> f64 {
        let k = self.k1.between(a.x, b.x);
        match (a.comp, b.comp) {
            (0, 0) => k,
            (1, 1) => self.alpha * self.alpha * k + if same_slot { self.sigma_eps2 } else { 0.0 },
            _ => self.alpha * k,
        }
    }
}

struct IndepGram {
    k: [PairKernel; 2],
}

impl SiteCovariance for IndepGram {
    fn cov(&self, a: Site<'_>, b: Site<'_>, _same_slot: bool) -> f64 {
        if a.comp == b.comp {
            self.k[a.comp].between(a.x, b.x)
        } else {
            0.0
        }
    }
}
