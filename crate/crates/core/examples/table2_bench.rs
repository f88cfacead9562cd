//! Runtime and F1 of PCA, the autoencoder and the hybrid on a 6000-step
//! stream whose fourth sensor is shifted in every other 1000-step bin.
//! Models are trained on the first (normal) bin.

use corrsense::detector::{train_models, PipelineConfig};
use corrsense::eval::LabelMode;
use corrsense::experiment::{bench, Truth};
use corrsense::hybrid::DetectorKind;
use corrsense::synth::ScenarioSpec;

fn main() -> corrsense::Result<()> {
    let spec = ScenarioSpec::bin_shift(2024);
    let sc = spec.generate()?;
    let (models, _) = train_models(&sc.readings, 0, 1000, &PipelineConfig::default())?;
    let truth = Truth {
        labels: &sc.labels,
        sensor: spec.anomaly_sensor,
        mode: LabelMode::Reading,
    };
    let rows = bench(&models, &sc.readings, Some(truth), &DetectorKind::ALL, 3)?;

    println!("{:<8} {:>8} {:>8} {:>8} {:>12} {:>10}", "model", "prec", "recall", "f1", "ms/step", "ae calls");
    for r in &rows {
        let m = r.metrics.unwrap_or_default();
        println!(
            "{:<8} {:>8.4} {:>8.4} {:>8.4} {:>12.4} {:>10}",
            r.kind.name(),
            m.precision,
            m.recall,
            m.f1,
            r.mean_step_ms(),
            r.ae_invocations
        );
    }
    let ratio = rows[1].mean_step_ns / rows[0].mean_step_ns;
    println!("autoencoder / pca step time: {ratio:.0}x");
    Ok(())
}
