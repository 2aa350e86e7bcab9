use std::path::PathBuf;

use mcgpp::simulation::{default_models, NamedModel, Scenario, ScenarioConfig};
use mcgpp::{CovFamily, ModelKind, ModelSpec, OptimOptions};
use serde::{Deserialize, Serialize};

/// Settings for `diagnose`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub pd_draws: usize,
    pub regret_sizes: Vec<usize>,
    pub regret_delta: f64,
    /// One regret curve per family, each with unit amplitude and precision.
    pub families: Vec<CovFamily>,
    pub seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            pd_draws: 1000,
            regret_sizes: vec![10, 17, 29, 49, 82, 139, 236, 400],
            regret_delta: 1.0,
            families: vec![
                CovFamily::SquaredExponential,
                CovFamily::matern(),
                CovFamily::gamma_exponential(),
                CovFamily::rational_quadratic(),
            ],
            seed: 0,
        }
    }
}

/// Everything a command may need. Loaded from JSON, then overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub model_file: Option<PathBuf>,
    pub no_intercept: bool,
    pub model: ModelKind,
    pub optim: OptimOptions,
    pub simulation: ScenarioConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: PathBuf::from("out"),
            data: None,
            points: None,
            model_file: None,
            no_intercept: false,
            model: ModelKind::Mcgp(ModelSpec::model1()),
            optim: OptimOptions::default(),
            simulation: ScenarioConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelChoice {
    Mcgpp,
    Cdr,
    Indep,
}

impl RunConfig {
    pub fn from_json(s: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Applies a seed to every seeded stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.optim.seed = seed;
        self.simulation.seed = seed;
        self.diagnostics.seed = seed;
    }

    /// `--model` for `fit`: keeps a configured convolved spec, otherwise uses
    /// `preset` (default 1).
    pub fn set_model(&mut self, choice: ModelChoice, preset: Option<u8>) -> anyhow::Result<()> {
        self.model = match (choice, preset, &self.model) {
            (ModelChoice::Mcgpp, Some(k), _) => ModelKind::Mcgp(ModelSpec::preset(k)?),
            (ModelChoice::Mcgpp, None, ModelKind::Mcgp(spec)) => ModelKind::Mcgp(spec.clone()),
            (ModelChoice::Mcgpp, None, _) => ModelKind::Mcgp(ModelSpec::model1()),
            (ModelChoice::Cdr, _, _) => ModelKind::Cdr,
            (ModelChoice::Indep, _, _) => ModelKind::Indep,
        };
        Ok(())
    }

    /// `--model` for `simulate`: restricts the comparison to one model class.
    pub fn restrict_models(&mut self, choice: ModelChoice) {
        let keep = |m: &NamedModel| match choice {
            ModelChoice::Mcgpp => matches!(m.kind, ModelKind::Mcgp(_)),
            ModelChoice::Cdr => m.kind == ModelKind::Cdr,
            ModelChoice::Indep => m.kind == ModelKind::Indep,
        };
        let source = if self.simulation.models.iter().any(keep) { self.simulation.models.clone() } else { default_models() };
        self.simulation.models = source.into_iter().filter(keep).collect();
    }

    pub fn set_scenario(&mut self, s: u8) -> anyhow::Result<()> {
        self.simulation.scenario = match s {
            1 => Scenario::One,
            2 => Scenario::Two,
            _ => anyhow::bail!("scenario must be 1 or 2"),
        };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"sede": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"optim": {"max_iters": 3}}"#).is_err());
        let c = RunConfig::from_json(r#"{"seed": 3, "optim": {"n_starts": 1}}"#).unwrap();
        assert_eq!(c.optim.n_starts, 1);
        assert_eq!(c.seed, Some(3));
    }

    #[test]
    fn model_override() {
        let mut c = RunConfig::default();
        c.set_model(ModelChoice::Cdr, None).unwrap();
        assert_eq!(c.model, ModelKind::Cdr);
        c.set_model(ModelChoice::Mcgpp, Some(3)).unwrap();
        assert_eq!(c.model, ModelKind::Mcgp(ModelSpec::model3()));
        assert!(c.set_model(ModelChoice::Mcgpp, Some(9)).is_err());
        c.restrict_models(ModelChoice::Mcgpp);
        assert_eq!(c.simulation.models.len(), 4);
    }
}
