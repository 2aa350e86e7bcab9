use mcgpp::simulation::gen_scenario1;
use mcgpp::{fit_model, predict_batch, ModelKind, ModelSpec, OptimOptions};

fn main() -> mcgpp::Result<()> {
    let sim = gen_scenario1(20, 20, 1)?;
    let model = fit_model(&sim.train, &ModelKind::Mcgp(ModelSpec::model1()), &OptimOptions::default())?;
    let preds = predict_batch(&model, &sim.test_points())?;
    println!("{:?}", preds[0].mean);
    Ok(())
}
