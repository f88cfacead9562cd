//! Hybrid-versus-autoencoder response-time reduction as the share of
//! anomalous readings grows from 20% to 100%.

use corrsense::detector::PipelineConfig;
use corrsense::experiment::{reduction_rates, response_reduction_curve, train_on_baseline};
use corrsense::synth::ScenarioSpec;

fn main() -> corrsense::Result<()> {
    let (models, _) = train_on_baseline(&PipelineConfig::default(), 2000, 1)?;
    let curve = response_reduction_curve(
        &models,
        &reduction_rates(),
        |rate, seed| ScenarioSpec::rate_shift(rate, seed).generate(),
        3,
        11,
    )?;
    println!("{:>6} {:>10} {:>10} {:>10} {:>9}", "rate", "ae ms", "hybrid ms", "reduction", "ae share");
    for p in &curve.points {
        println!(
            "{:>5.0}% {:>10.3} {:>10.3} {:>9.1}% {:>9.3}",
            p.rate * 100.0,
            p.ae_mean_ns / 1e6,
            p.hybrid_mean_ns / 1e6,
            p.reduction_pct,
            p.ae_share
        );
    }
    println!("pearson r = {:.4}", curve.pearson_r);
    Ok(())
}
