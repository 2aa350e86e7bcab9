mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use mcgpp::diagnostics::{pd_audit, regret_growth};
use mcgpp::io::{load_dataset, read_points, summary, write_predictions, ModelFile};
use mcgpp::simulation::run_replications;
use mcgpp::{fit_model, predict_batch, KernelParams, McgpHyperparams};

use config::{ModelChoice, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "mcgpp", version, about = "Bivariate Poisson regression with convolved Gaussian process priors")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model to a dataset CSV and write `model.json` and `summary.txt`.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        model: Option<ModelChoice>,
        /// Covariance preset 1-4 for `--model mcgpp`.
        #[arg(long)]
        preset: Option<u8>,
        /// Do not prepend an intercept column to the mean covariates.
        #[arg(long)]
        no_intercept: bool,
    },
    /// Predict at new points from a fitted model and write `predictions.csv`.
    Predict {
        #[arg(long)]
        model_file: Option<PathBuf>,
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Run a replicated simulation study and write `results.csv` and `replications.csv`.
    Simulate {
        #[arg(long)]
        scenario: Option<u8>,
        #[arg(long)]
        replications: Option<usize>,
        /// Restrict the comparison to one model class.
        #[arg(long, value_enum)]
        model: Option<ModelChoice>,
    },
    /// Write regret growth curves and a positive-definiteness audit.
    Diagnose,
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            RunConfig::from_json(&text).with_context(|| format!("invalid config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed.or(cfg.seed) {
        cfg.set_seed(s);
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a PathBuf> {
    v.as_ref().ok_or_else(|| anyhow!("missing {flag} (flag or config key)"))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Fit { data, model, preset, no_intercept } => {
            if let Some(d) = data {
                cfg.data = Some(d);
            }
            if let Some(m) = model {
                cfg.set_model(m, preset)?;
            } else if preset.is_some() {
                cfg.set_model(ModelChoice::Mcgpp, preset)?;
            }
            cfg.no_intercept |= no_intercept;
            let path = required(&cfg.data, "--data")?;
            let intercept = !cfg.no_intercept;
            let data = load_dataset(path, intercept).with_context(|| format!("loading {}", path.display()))?;
            let fitted = fit_model(&data, &cfg.model, &cfg.optim).context("fitting")?;
            fs::create_dir_all(&cfg.out)?;
            let file = ModelFile::new(fitted, intercept);
            file.save(&cfg.out.join("model.json"))?;
            fs::write(cfg.out.join("summary.txt"), summary(&file.model))?;
            print!("{}", summary(&file.model));
        }
        Command::Predict { model_file, points } => {
            if let Some(m) = model_file {
                cfg.model_file = Some(m);
            }
            if let Some(p) = points {
                cfg.points = Some(p);
            }
            let mpath = required(&cfg.model_file, "--model-file")?;
            let ppath = required(&cfg.points, "--points")?;
            let file = ModelFile::load(mpath).with_context(|| format!("loading {}", mpath.display()))?;
            let reader = File::open(ppath).with_context(|| format!("opening {}", ppath.display()))?;
            let pts = read_points(reader, file.model.data.q(), file.intercept).with_context(|| format!("reading {}", ppath.display()))?;
            let preds = predict_batch(&file.model, &pts).context("predicting")?;
            fs::create_dir_all(&cfg.out)?;
            write_predictions(&preds, create(&cfg.out.join("predictions.csv"))?)?;
            println!("wrote {} predictions", preds.len());
        }
        Command::Simulate { scenario, replications, model } => {
            if let Some(s) = scenario {
                cfg.set_scenario(s)?;
            }
            if let Some(r) = replications {
                cfg.simulation.n_replications = r;
            }
            if let Some(m) = model {
                cfg.restrict_models(m);
            }
            let table = run_replications(&cfg.simulation).context("running replications")?;
            fs::create_dir_all(&cfg.out)?;
            table.write_csv(create(&cfg.out.join("results.csv"))?)?;
            table.write_replications_csv(create(&cfg.out.join("replications.csv"))?)?;
            for r in table.rows.iter().filter(|r| r.metric == "rmse_mu") {
                println!("{:<8} rmse_mu {:.5} (se {:.5}, ok {}, failed {})", r.model, r.mean, r.std_err, r.n_ok, r.n_failed);
            }
        }
        Command::Diagnose => {
            let d = &cfg.diagnostics;
            fs::create_dir_all(&cfg.out)?;
            for fam in &d.families {
                let theta = McgpHyperparams::uniform(*fam, KernelParams::isotropic(1.0, 1.0, 1));
                let curve = regret_growth(&theta, &d.regret_sizes, d.regret_delta, d.seed)?;
                curve.write_csv(create(&cfg.out.join(format!("regret_{}.csv", fam.name())))?)?;
            }
            let audit = pd_audit(d.pd_draws, d.seed)?;
            audit.write_report(create(&cfg.out.join("pd_audit.txt"))?)?;
            println!(
                "pd audit: {}/{} factor with jitter, worst eigenvalue ratio {:.3e}",
                audit.cholesky_ok, audit.draws, audit.worst_ratio
            );
        }
    }
    Ok(())
}

fn error_report(e: &anyhow::Error) -> serde_json::Value {
    let kind = e.chain().find_map(|c| c.downcast_ref::<mcgpp::Error>()).map_or("error", |m| m.kind());
    serde_json::json!({
        "status": "error",
        "kind": kind,
        "message": e.to_string(),
        "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_report(&e));
            ExitCode::FAILURE
        }
    }
}
