//! WebAssembly bindings for the demo page in `www/`. Every export takes plain
//! numbers and returns a JSON string, so the page needs no generated types.

use mcgpp::simulation::{generate, linspace, GeneratorConfig, Scenario};
use mcgpp::{
    fit_model, predict_batch, sample_mcgp, CovFamily, KernelParams, McgpHyperparams, ModelKind, ModelSpec, NewPoint, OptimOptions,
    StackedInputs,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_js<T: Serialize>(r: mcgpp::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

fn family(name: &str) -> mcgpp::Result<CovFamily> {
    CovFamily::from_name(name)
}

#[derive(Serialize)]
pub struct KernelCurves {
    pub d: Vec<f64>,
    /// Covariance of `τ₁` with itself at distance `d`, per family.
    pub auto: Vec<(String, Vec<f64>)>,
    /// Covariance between `τ₁` and `τ₂` at distance `d`, per family.
    pub cross: Vec<(String, Vec<f64>)>,
}

pub fn kernel_curves_impl(v: f64, a: f64, max_d: f64, n: usize) -> mcgpp::Result<KernelCurves> {
    let d = linspace(0.0, max_d, n.max(2));
    let theta_of = |f: CovFamily| McgpHyperparams::uniform(f, KernelParams::isotropic(v, a, 1));
    let origin = vec![vec![0.0]];
    let mut auto = vec![];
    let mut cross = vec![];
    for name in ["squared_exponential", "matern", "gamma_exponential", "rational_quadratic"] {
        let theta = theta_of(family(name)?);
        let pts: Vec<Vec<f64>> = d.iter().map(|&x| vec![x]).collect();
        let k = mcgpp::assemble_k(&StackedInputs::new(origin.clone(), pts.clone())?, &theta)?;
        // Row 0 is τ₁(0); columns 1.. are τ₂(d).
        cross.push((name.to_string(), (1..=pts.len()).map(|j| k[(0, j)]).collect()));
        let k = mcgpp::assemble_k(&StackedInputs::new(origin.clone(), origin.clone())?, &theta)?;
        let mut row = vec![k[(0, 0)]];
        for x in &pts[1..] {
            let k = mcgpp::assemble_k(&StackedInputs::new(vec![vec![0.0], x.clone()], origin.clone())?, &theta)?;
            row.push(k[(0, 1)]);
        }
        auto.push((name.to_string(), row));
    }
    Ok(KernelCurves { d, auto, cross })
}

/// Auto- and cross-covariance curves of the four covariance families with
/// amplitude `v` and precision `a`.
#[wasm_bindgen]
pub fn kernel_curves(v: f64, a: f64, max_d: f64, n: usize) -> Result<String, JsError> {
    to_js(kernel_curves_impl(v, a, max_d, n))
}

#[derive(Serialize)]
pub struct Fields {
    pub x: Vec<f64>,
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
}

pub fn sample_fields_impl(family_name: &str, v: f64, a: f64, n: usize, seed: u64) -> mcgpp::Result<Fields> {
    let x = linspace(-5.0, 5.0, n.max(2));
    let pts: Vec<Vec<f64>> = x.iter().map(|&x| vec![x]).collect();
    let theta = McgpHyperparams::uniform(family(family_name)?, KernelParams::isotropic(v, a, 1));
    let (tau1, tau2) = sample_mcgp(&StackedInputs::new(pts.clone(), pts)?, &theta, seed)?;
    Ok(Fields { x, tau1, tau2 })
}

/// One joint draw of `(τ₁, τ₂)` on an even grid over `[−5, 5]`.
#[wasm_bindgen]
pub fn sample_fields(family: &str, v: f64, a: f64, n: usize, seed: u64) -> Result<String, JsError> {
    to_js(sample_fields_impl(family, v, a, n, seed))
}

#[derive(Serialize)]
pub struct FitResult {
    pub x1: Vec<f64>,
    pub z1: Vec<u64>,
    pub x2: Vec<f64>,
    pub z2: Vec<u64>,
    pub grid: Vec<f64>,
    pub mean1: Vec<f64>,
    pub mean2: Vec<f64>,
    pub sd1: Vec<f64>,
    pub sd2: Vec<f64>,
    pub loglik: f64,
}

pub fn fit_and_predict_impl(preset: u8, amplitude: f64, n: usize, seed: u64) -> mcgpp::Result<FitResult> {
    let gen = GeneratorConfig { n1: n, n2: n, amplitude, ..Default::default() };
    let sim = generate(Scenario::One, &gen, seed)?;
    let opts = OptimOptions { n_starts: 1, seed, ..Default::default() };
    let model = fit_model(&sim.train, &ModelKind::Mcgp(ModelSpec::preset(preset)?), &opts)?;
    let grid = linspace(-5.0, 5.0, 61);
    let pts: Vec<NewPoint> = grid
        .iter()
        .map(|&x| {
            let u = vec![1.0, x * gen.mean_input_scale];
            NewPoint { u: [u.clone(), u], x: [vec![x], vec![x]], exposure: [1.0, 1.0] }
        })
        .collect();
    let preds = predict_batch(&model, &pts)?;
    let [c1, c2] = &sim.train.components;
    Ok(FitResult {
        x1: c1.x.iter().map(|x| x[0]).collect(),
        z1: c1.z.clone(),
        x2: c2.x.iter().map(|x| x[0]).collect(),
        z2: c2.z.clone(),
        grid,
        mean1: preds.iter().map(|p| p.mean[0]).collect(),
        mean2: preds.iter().map(|p| p.mean[1]).collect(),
        sd1: preds.iter().map(|p| p.var[0][0].max(0.0).sqrt()).collect(),
        sd2: preds.iter().map(|p| p.var[1][1].max(0.0).sqrt()).collect(),
        loglik: model.loglik,
    })
}

/// Simulates a one-dimensional dataset, fits covariance preset `preset` and
/// predicts both means on a grid.
#[wasm_bindgen]
pub fn fit_and_predict(preset: u8, amplitude: f64, n: usize, seed: u64) -> Result<String, JsError> {
    to_js(fit_and_predict_impl(preset, amplitude, n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_start_at_variance() {
        let c = kernel_curves_impl(0.5, 1.0, 4.0, 20).unwrap();
        assert_eq!(c.d.len(), 20);
        for (name, row) in &c.auto {
            assert!(row[0] > 0.0, "{name}");
            assert!(row.iter().all(|&k| k <= row[0] + 1e-12), "{name}");
        }
        for (_, row) in &c.cross {
            assert!(row.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn fields_are_reproducible() {
        let a = sample_fields_impl("matern", 1.0, 1.0, 30, 5).unwrap();
        let b = sample_fields_impl("matern", 1.0, 1.0, 30, 5).unwrap();
        assert_eq!(a.tau1, b.tau1);
        assert_eq!(a.tau2.len(), 30);
        assert!(sample_fields_impl("cubic", 1.0, 1.0, 30, 5).is_err());
    }

    #[test]
    fn fit_and_predict_runs() {
        let r = fit_and_predict_impl(1, 0.2, 10, 3).unwrap();
        assert_eq!(r.mean1.len(), r.grid.len());
        assert!(r.mean1.iter().chain(&r.mean2).all(|m| m.is_finite() && *m > 0.0));
        assert!(r.loglik.is_finite());
    }
}
