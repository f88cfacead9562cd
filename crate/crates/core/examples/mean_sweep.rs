//! Replaces the faulty sensor's second half with draws from a distribution
//! whose mean runs over the odd values 1..99, and reports F1 per mean with
//! the inside/outside (45, 55) summary.
//!
//!     cargo run --release --example mean_sweep -- [normal|uniform|poisson|point]

use corrsense::detector::PipelineConfig;
use corrsense::experiment::{mean_sweep, odd_means, train_on_baseline, RopeBand};
use corrsense::hybrid::DetectorKind;
use corrsense::synth::{AnomalyKind, DistKind, ScenarioSpec};

fn main() -> corrsense::Result<()> {
    let dist: DistKind = std::env::args().nth(1).as_deref().unwrap_or("normal").parse()?;
    let (models, _) = train_on_baseline(&PipelineConfig::default(), 2000, 1)?;
    let kinds = [DetectorKind::Pca, DetectorKind::Ae];
    let base = ScenarioSpec::fig1(AnomalyKind::None, 0);
    let report = mean_sweep(&models, dist, 5.0, &odd_means(), &base, &kinds, 42, 1)?;

    println!("{} sweep, labels {}", dist.name(), report.label_mode);
    println!("{:>5} {:>7} {:>7}", "mean", "pca f1", "ae f1");
    let (pca, ae) = (report.f1_series(DetectorKind::Pca), report.f1_series(DetectorKind::Ae));
    for (i, m) in report.grid().iter().enumerate().step_by(2) {
        println!("{m:>5} {:>7.3} {:>7.3}", pca[i], ae[i]);
    }
    for k in kinds {
        let r = report.rope(k, RopeBand::default());
        println!(
            "{k:>4}: mean F1 inside (45, 55) {:.3} over {} points, outside {:.3}",
            r.inside_mean_f1, r.inside_points, r.outside_mean_f1
        );
    }
    Ok(())
}
