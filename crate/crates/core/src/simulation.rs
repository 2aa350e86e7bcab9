//! Seeded data generators for the two simulation scenarios, evaluation
//! metrics and the replication harness.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::covariance::{assemble_k, GaussianSampler, McgpHyperparams, Process, StackedInputs};
use crate::error::{Error, Result};
use crate::inference::{fit_model, FittedModel, OptimOptions};
use crate::kernels::{CovFamily, KernelParams};
use crate::likelihood::{Component, Dataset, RegressionCoefficients};
use crate::params::{ModelKind, ModelSpec};
use crate::prediction::{predict_batch, NewPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// One input on `[−5, 5]`, log-linear mean.
    One,
    /// Two inputs on `[−5, 10] × [1, 2]`, nonlinear mean fitted with a linear one.
    Two,
}

/// Generator settings shared by both scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n1: usize,
    pub n2: usize,
    /// Test points per component.
    pub n_test: usize,
    /// Kernel amplitude `v` of all four latent processes.
    pub amplitude: f64,
    /// Precision `A` (scalar) of all four latent processes.
    pub precision: f64,
    /// Exponent of the gamma-exponential process `η₂`.
    pub gamma: f64,
    /// Scenario 1 mean covariate is `(1, x · mean_input_scale)`.
    pub mean_input_scale: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { n1: 20, n2: 20, n_test: 20, amplitude: 0.04, precision: 1.0, gamma: 1.5, mean_input_scale: 0.2 }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        if self.n1 < 2 || self.n2 < 2 || self.n_test < 1 {
            return Err(Error::InvalidParameter("sample sizes must be at least 2 (test size at least 1)".into()));
        }
        if !self.amplitude.is_finite() || self.precision.is_nan() || self.precision <= 0.0 || !self.mean_input_scale.is_finite() {
            return Err(Error::InvalidParameter("invalid generator amplitude, precision or scale".into()));
        }
        CovFamily::GammaExponential { gamma: self.gamma }.validate()
    }

    /// True latent hyperparameters for inputs of dimension `p`.
    pub fn true_theta(&self, p: usize) -> McgpHyperparams {
        let k = KernelParams::isotropic(self.amplitude, self.precision, p);
        McgpHyperparams {
            shared_family: CovFamily::SquaredExponential,
            xi: [k.clone(), k.clone()],
            eta: [
                Process::new(CovFamily::SquaredExponential, k.clone()),
                Process::new(CovFamily::GammaExponential { gamma: self.gamma }, k),
            ],
        }
    }
}

/// One generated replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedData {
    pub train: Dataset,
    /// Test observations (counts drawn from the true means).
    pub test: Dataset,
    /// True means at the test inputs, per component.
    pub mu_test: [Vec<f64>; 2],
    /// Regression coefficients of the generator, when the mean is log-linear.
    pub beta_true: Option<RegressionCoefficients>,
}

impl SimulatedData {
    /// Test inputs as prediction requests, pairing the i-th test row of each component.
    pub fn test_points(&self) -> Vec<NewPoint> {
        let [c1, c2] = &self.test.components;
        (0..c1.len().min(c2.len()))
            .map(|i| NewPoint {
                u: [c1.u.row(i).iter().copied().collect(), c2.u.row(i).iter().copied().collect()],
                x: [c1.x[i].clone(), c2.x[i].clone()],
                exposure: [c1.exposure[i], c2.exposure[i]],
            })
            .collect()
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
}

/// Cell-centred test grid on `[lo, hi]`; a point that coincides with a
/// training point moves a quarter cell to the left.
pub fn test_grid(lo: f64, hi: f64, n: usize, train: &[f64]) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            if train.iter().any(|t| (t - x).abs() < 1e-9 * (1.0 + x.abs())) {
                lo + (i as f64 + 0.25) * h
            } else {
                x
            }
        })
        .collect()
}

fn draw_counts(mu: &[f64], rng: &mut ChaCha20Rng) -> Result<Vec<u64>> {
    mu.iter()
        .map(|&m| {
            if m <= 0.0 {
                return Ok(0);
            }
            let d = Poisson::new(m).map_err(|e| Error::Numerical(format!("Poisson mean {m}: {e}")))?;
            Ok(d.sample(rng) as u64)
        })
        .collect()
}

/// Draws `τ` jointly at training and test sites. Returns
/// `[train τ₁, train τ₂, test τ₁, test τ₂]`.
fn draw_latent(theta: &McgpHyperparams, x: [&[Vec<f64>]; 4], rng: &mut ChaCha20Rng) -> Result<[Vec<f64>; 4]> {
    let x1: Vec<Vec<f64>> = x[0].iter().chain(x[2]).cloned().collect();
    let x2: Vec<Vec<f64>> = x[1].iter().chain(x[3]).cloned().collect();
    let inputs = StackedInputs::new(x1, x2)?;
    let k = assemble_k(&inputs, theta)?;
    let tau = GaussianSampler::new(&k)?.draw(rng);
    let t = tau.as_slice();
    let (a, b, c) = (x[0].len(), x[2].len(), x[1].len());
    Ok([t[..a].to_vec(), t[a + b..a + b + c].to_vec(), t[a..a + b].to_vec(), t[a + b + c..].to_vec()])
}

fn component(z: Vec<u64>, u: Vec<Vec<f64>>, x: Vec<Vec<f64>>) -> Result<Component> {
    let q = u[0].len();
    let m = DMatrix::from_fn(u.len(), q, |i, j| u[i][j]);
    Component::new(z, m, x)
}

/// Scenario 1 with default settings.
pub fn gen_scenario1(n1: usize, n2: usize, seed: u64) -> Result<SimulatedData> {
    generate(Scenario::One, &GeneratorConfig { n1, n2, ..Default::default() }, seed)
}

/// Scenario 2 with default settings.
pub fn gen_scenario2(n1: usize, n2: usize, seed: u64) -> Result<SimulatedData> {
    generate(Scenario::Two, &GeneratorConfig { n1, n2, ..Default::default() }, seed)
}

/// Scenario 2 mean functions `(y₁, y₂)` without the latent field.
pub fn scenario2_mean(x: &[f64]) -> [f64; 2] {
    let (x1, x2) = (x[0], x[1]);
    [0.2 * x1 * x1.abs().cbrt() + x2.ln(), x2.sin() + 0.4 * x2 * x1.abs().powf(0.25)]
}

/// Generates one replicate. Deterministic per `(scenario, cfg, seed)`.
pub fn generate(scenario: Scenario, cfg: &GeneratorConfig, seed: u64) -> Result<SimulatedData> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match scenario {
        Scenario::One => {
            let grid = |n: usize| linspace(-5.0, 5.0, n);
            let (g1, g2) = (grid(cfg.n1), grid(cfg.n2));
            let mut train_all = g1.clone();
            train_all.extend(&g2);
            let t = test_grid(-5.0, 5.0, cfg.n_test, &train_all);
            let col = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
            let xs = [col(&g1), col(&g2), col(&t), col(&t)];
            let tau = draw_latent(&cfg.true_theta(1), [&xs[0], &xs[1], &xs[2], &xs[3]], &mut rng)?;
            let design = |x: &[Vec<f64>]| x.iter().map(|x| vec![1.0, x[0] * cfg.mean_input_scale]).collect::<Vec<_>>();
            let beta = [1.0, 2.0];
            let mu = |x: &[Vec<f64>], tau: &[f64]| {
                design(x).iter().zip(tau).map(|(u, t)| (u[0] * beta[0] + u[1] * beta[1] + t).exp()).collect::<Vec<f64>>()
            };
            let mus = [0, 1, 2, 3].map(|i| mu(&xs[i], &tau[i]));
            build(xs, mus, design, &mut rng, Some(RegressionCoefficients::new(beta.to_vec(), beta.to_vec())))
        }
        Scenario::Two => {
            let paired = |n: usize, rng: &mut ChaCha20Rng, a: Vec<f64>, b: Vec<f64>| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(rng);
                (0..n).map(|i| vec![a[i], b[idx[i]]]).collect::<Vec<_>>()
            };
            if cfg.n1 != cfg.n2 {
                return Err(Error::Unsupported("scenario 2 observes both components at shared inputs; n1 must equal n2".into()));
            }
            let n = cfg.n1;
            let train = paired(n, &mut rng, linspace(-5.0, 10.0, n), linspace(1.0, 2.0, n));
            let t1 = test_grid(-5.0, 10.0, cfg.n_test, &linspace(-5.0, 10.0, n));
            let t2 = test_grid(1.0, 2.0, cfg.n_test, &linspace(1.0, 2.0, n));
            let test = paired(cfg.n_test, &mut rng, t1, t2);
            let xs = [train.clone(), train, test.clone(), test];
            let tau = draw_latent(&cfg.true_theta(2), [&xs[0], &xs[1], &xs[2], &xs[3]], &mut rng)?;
            let mus = [0, 1, 2, 3].map(|i| {
                let comp = i % 2;
                xs[i].iter().zip(&tau[i]).map(|(x, t)| (scenario2_mean(x)[comp] + t).exp()).collect::<Vec<f64>>()
            });
            let design = |x: &[Vec<f64>]| x.iter().map(|x| vec![1.0, x[0], x[1]]).collect::<Vec<_>>();
            build(xs, mus, design, &mut rng, None)
        }
    }
}

fn build<D: Fn(&[Vec<f64>]) -> Vec<Vec<f64>>>(
    xs: [Vec<Vec<f64>>; 4],
    mus: [Vec<f64>; 4],
    design: D,
    rng: &mut ChaCha20Rng,
    beta_true: Option<RegressionCoefficients>,
) -> Result<SimulatedData> {
    let z = [0, 1, 2, 3].map(|i| draw_counts(&mus[i], rng));
    let [z0, z1, z2, z3] = z;
    let [x0, x1, x2, x3] = xs;
    let [_, _, m2, m3] = mus;
    let train = Dataset::new(component(z0?, design(&x0), x0)?, component(z1?, design(&x1), x1)?)?;
    let test = Dataset::new(component(z2?, design(&x2), x2)?, component(z3?, design(&x3), x3)?)?;
    Ok(SimulatedData { train, test, mu_test: [m2, m3], beta_true })
}

/// Root mean squared difference.
pub fn rmse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::Dimension(format!("rmse of vectors with lengths {} and {}", truth.len(), estimate.len())));
    }
    Ok((truth.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64).sqrt())
}

/// Mean of `|z − ẑ| / (1 + z)`.
pub fn error_rate(z: &[u64], z_hat: &[f64]) -> Result<f64> {
    if z.len() != z_hat.len() || z.is_empty() {
        return Err(Error::Dimension(format!("error rate of vectors with lengths {} and {}", z.len(), z_hat.len())));
    }
    Ok(z.iter().zip(z_hat).map(|(&z, &h)| (z as f64 - h).abs() / (1.0 + z as f64)).sum::<f64>() / z.len() as f64)
}

/// A model to compare, with its report label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    pub kind: ModelKind,
}

/// Models 1–4, the conditional baseline and the independent baseline.
pub fn default_models() -> Vec<NamedModel> {
    let mut v: Vec<NamedModel> = (1..=4)
        .map(|k| NamedModel { name: format!("model{k}"), kind: ModelKind::Mcgp(ModelSpec::preset(k).expect("preset exists")) })
        .collect();
    v.push(NamedModel { name: "cdr".into(), kind: ModelKind::Cdr });
    v.push(NamedModel { name: "indep".into(), kind: ModelKind::Indep });
    v
}

/// Replication study settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub generator: GeneratorConfig,
    pub n_replications: usize,
    pub seed: u64,
    pub models: Vec<NamedModel>,
    pub optim: OptimOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: Scenario::One,
            generator: GeneratorConfig::default(),
            n_replications: 30,
            seed: 2024,
            models: default_models(),
            optim: OptimOptions::default(),
        }
    }
}

/// SplitMix64 finaliser, used to derive independent per-replication seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_seed(master: u64, r: usize) -> u64 {
    splitmix64(master ^ splitmix64(r as u64))
}

/// Outcome of one model on one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub model: String,
    pub replication: usize,
    pub rmse_mu: Option<f64>,
    pub beta: Option<Vec<f64>>,
    pub loglik: Option<f64>,
    pub error: Option<String>,
}

/// One aggregated metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub metric: String,
    pub mean: f64,
    pub std_err: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub records: Vec<ReplicationRecord>,
}

impl ResultsTable {
    pub fn get(&self, model: &str, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.model == model && r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "metric", "mean", "std_err", "n_ok", "n_failed"])?;
        for r in &self.rows {
            out.write_record([
                r.model.clone(),
                r.metric.clone(),
                format!("{:.10e}", r.mean),
                format!("{:.10e}", r.std_err),
                r.n_ok.to_string(),
                r.n_failed.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Per-replication RMSE values for plotting distributions.
    pub fn write_replications_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "replication", "rmse_mu", "loglik", "status"])?;
        for r in &self.records {
            let f = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
            out.write_record([
                r.model.clone(),
                r.replication.to_string(),
                f(r.rmse_mu),
                f(r.loglik),
                r.error.clone().unwrap_or_else(|| "ok".into()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn evaluate(model: &FittedModel, sim: &SimulatedData) -> Result<f64> {
    let preds = predict_batch(model, &sim.test_points())?;
    let mut truth = Vec::new();
    let mut est = Vec::new();
    for a in 0..2 {
        for (i, p) in preds.iter().enumerate() {
            truth.push(sim.mu_test[a][i]);
            est.push(p.mean[a]);
        }
    }
    rmse(&truth, &est)
}

/// Fits every model to one replicate.
pub fn run_replication(config: &ScenarioConfig, r: usize) -> Vec<ReplicationRecord> {
    let seed = replication_seed(config.seed, r);
    let sim = generate(config.scenario, &config.generator, seed);
    let opts = OptimOptions { seed, ..config.optim.clone() };
    config
        .models
        .iter()
        .map(|m| {
            let mut rec = ReplicationRecord { model: m.name.clone(), replication: r, rmse_mu: None, beta: None, loglik: None, error: None };
            let outcome = sim.as_ref().map_err(|e| Error::Numerical(format!("generator: {e}"))).and_then(|sim| {
                let fitted = fit_model(&sim.train, &m.kind, &opts)?;
                let rmse = evaluate(&fitted, sim)?;
                Ok((fitted, rmse))
            });
            match outcome {
                Ok((fitted, rmse)) => {
                    rec.rmse_mu = Some(rmse);
                    rec.beta = Some(fitted.beta.flat());
                    rec.loglik = Some(fitted.loglik);
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Aggregates records into metric rows, in model order.
pub fn summarize(config: &ScenarioConfig, records: Vec<ReplicationRecord>) -> ResultsTable {
    let truth = match config.scenario {
        Scenario::One => Some([1.0, 2.0, 1.0, 2.0]),
        Scenario::Two => None,
    };
    let mut rows = Vec::new();
    for m in &config.models {
        let mine: Vec<&ReplicationRecord> = records.iter().filter(|r| r.model == m.name).collect();
        let ok: Vec<&ReplicationRecord> = mine.iter().copied().filter(|r| r.error.is_none()).collect();
        let n_failed = mine.len() - ok.len();
        let row = |metric: String, (mean, std_err): (f64, f64)| ResultRow {
            model: m.name.clone(),
            metric,
            mean,
            std_err,
            n_ok: ok.len(),
            n_failed,
        };
        let rm: Vec<f64> = ok.iter().filter_map(|r| r.rmse_mu).collect();
        rows.push(row("rmse_mu".into(), mean_se(&rm)));
        if let Some(t) = truth {
            let q = ok.first().and_then(|r| r.beta.as_ref()).map_or(0, |b| b.len());
            if q == t.len() {
                let labels = ["1_0", "1_1", "2_0", "2_1"];
                for j in 0..q {
                    let err: Vec<f64> = ok.iter().filter_map(|r| r.beta.as_ref().map(|b| b[j] - t[j])).collect();
                    let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
                    let (mse, mse_se) = mean_se(&sq);
                    let rmse = mse.sqrt();
                    // Delta method for the standard error of a square root.
                    let se = if rmse > 0.0 { mse_se / (2.0 * rmse) } else { 0.0 };
                    rows.push(row(format!("beta_rmse_{}", labels[j]), (rmse, se)));
                    rows.push(row(format!("beta_bias_{}", labels[j]), mean_se(&err)));
                }
            }
        }
    }
    ResultsTable { rows, records }
}

/// Runs all replications (in parallel with the `parallel` feature) and aggregates.
pub fn run_replications(config: &ScenarioConfig) -> Result<ResultsTable> {
    if config.n_replications < 1 {
        return Err(Error::InvalidParameter("at least one replication is required".into()));
    }
    if config.models.is_empty() {
        return Err(Error::InvalidParameter("no models to compare".into()));
    }
    config.generator.validate()?;
    #[cfg(feature = "parallel")]
    let per_rep: Vec<Vec<ReplicationRecord>> = {
        use rayon::prelude::*;
        (0..config.n_replications).into_par_iter().map(|r| run_replication(config, r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_rep: Vec<Vec<ReplicationRecord>> = (0..config.n_replications).map(|r| run_replication(config, r)).collect();
    Ok(summarize(config, per_rep.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5355339059327378).abs() < 1e-15);
        assert_eq!(rmse(&[0.0, 1.0], &[3.0, 4.0]).unwrap(), rmse(&[3.0, 4.0], &[0.0, 1.0]).unwrap());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(error_rate(&[1], &[3.0]).unwrap(), 1.0);
        assert_eq!(error_rate(&[4, 0], &[4.0, 0.0]).unwrap(), 0.0);
        assert!(error_rate(&[1, 2], &[1.0]).is_err());
    }

    #[test]
    fn grids() {
        let g = linspace(-5.0, 5.0, 20);
        assert_eq!(g[0], -5.0);
        assert_eq!(g[19], 5.0);
        let t = test_grid(-5.0, 5.0, 20, &g);
        assert!(t.iter().all(|x| g.iter().all(|y| (x - y).abs() > 1e-6)));
        // Collision forces the quarter shift.
        let t = test_grid(0.0, 2.0, 2, &[0.5]);
        assert_eq!(t, vec![0.25, 1.5]);
    }

    #[test]
    fn scenario1_shape_and_determinism() {
        let a = gen_scenario1(20, 15, 9).unwrap();
        let b = gen_scenario1(20, 15, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, gen_scenario1(20, 15, 10).unwrap().train);
        assert_eq!(a.train.n1(), 20);
        assert_eq!(a.train.n2(), 15);
        assert_eq!(a.train.components[0].x[0], vec![-5.0]);
        assert_eq!(a.train.components[0].x[19], vec![5.0]);
        assert_eq!(a.test.n1(), 20);
        assert_eq!(a.test_points().len(), 20);
    }

    #[test]
    fn scenario1_zero_amplitude_is_log_linear() {
        let cfg = GeneratorConfig { amplitude: 0.0, ..Default::default() };
        let s = generate(Scenario::One, &cfg, 1).unwrap();
        for (x, m) in s.test.components[0].x.iter().zip(&s.mu_test[0]) {
            assert_eq!(*m, (1.0 + 2.0 * (x[0] * 0.2)).exp());
        }
    }

    #[test]
    fn scenario2_grids_and_means() {
        let s = gen_scenario2(20, 20, 3).unwrap();
        let x = &s.train.components[0].x;
        let x1: Vec<f64> = x.iter().map(|v| v[0]).collect();
        let mut x2: Vec<f64> = x.iter().map(|v| v[1]).collect();
        assert_eq!(x1[0], -5.0);
        assert_eq!(x1[19], 10.0);
        x2.sort_by(f64::total_cmp);
        assert_eq!(x2[0], 1.0);
        assert_eq!(x2[19], 2.0);
        assert_eq!(s.train.components[0].q(), 3);
        assert!(s.train.is_paired());
        assert_eq!(scenario2_mean(&[0.0, 1.5])[0], 1.5f64.ln());
        let cfg = GeneratorConfig { amplitude: 0.0, ..Default::default() };
        let s0 = generate(Scenario::Two, &cfg, 3).unwrap();
        for (x, m) in s0.test.components[0].x.iter().zip(&s0.mu_test[0]) {
            assert_eq!(*m, (0.2 * x[0] * x[0].abs().cbrt() + x[1].ln()).exp());
        }
    }

    #[test]
    fn seeds_differ_per_replication() {
        let s: Vec<u64> = (0..100).map(|r| replication_seed(7, r)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 100);
    }

    #[test]
    fn tiny_study_is_deterministic() {
        let cfg = ScenarioConfig {
            generator: GeneratorConfig { n1: 6, n2: 6, n_test: 3, ..Default::default() },
            n_replications: 2,
            models: vec![default_models().remove(5)],
            optim: OptimOptions { n_starts: 1, max_iter: 10, ..Default::default() },
            ..Default::default()
        };
        let a = run_replications(&cfg).unwrap();
        let b = run_replications(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get("indep", "rmse_mu").unwrap().n_ok + a.get("indep", "rmse_mu").unwrap().n_failed, 2);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("model,metric,mean,std_err,n_ok,n_failed\n"));
        assert!(text.contains("indep,beta_rmse_1_0"));
    }
}
