//! Erasure probability sweep on the coarse grid (0..1 by 0.02) or the zoomed
//! grid (0..0.1 by 0.002), reporting each detector's detection onset: the
//! smallest p with F1 above 0.5.
//!
//!     cargo run --release --example probability_sweep -- [zoom]

use corrsense::detector::PipelineConfig;
use corrsense::eval::LabelMode;
use corrsense::experiment::{probability_grid, probability_sweep, train_on_baseline};
use corrsense::hybrid::DetectorKind;
use corrsense::synth::{AnomalyKind, ScenarioSpec};

fn main() -> corrsense::Result<()> {
    let zoom = std::env::args().nth(1).is_some_and(|a| a == "zoom");
    let (models, _) = train_on_baseline(&PipelineConfig::default(), 2000, 1)?;
    let kinds = [DetectorKind::Pca, DetectorKind::Ae];
    let base = ScenarioSpec::fig1(AnomalyKind::Erasure { rate: 0.0 }, 0);
    let report = probability_sweep(&models, &probability_grid(zoom), &base, &kinds, 17, LabelMode::Window, 1)?;

    let (pca, ae) = (report.f1_series(DetectorKind::Pca), report.f1_series(DetectorKind::Ae));
    println!("{:>6} {:>7} {:>7}", "p", "pca f1", "ae f1");
    for (i, p) in report.grid().iter().enumerate().step_by(5) {
        println!("{p:>6.3} {:>7.3} {:>7.3}", pca[i], ae[i]);
    }
    for k in kinds {
        match report.onset(k, 0.5) {
            Some(p) => println!("{k:>4} onset: p = {p}"),
            None => println!("{k:>4} onset: not reached on this grid"),
        }
    }
    Ok(())
}
