//! Fits plain and level-anchored PCA on sliding windows of a normal stream
//! and shows how each sees a sensor whose level moves by one sd.

use corrsense::detector::step_windows;
use corrsense::distance::distance_matrix;
use corrsense::pca::{fit_level_pca, fit_pca};
use corrsense::stream::NormStats;
use corrsense::synth::{AnomalyKind, ScenarioSpec};

fn main() -> corrsense::Result<()> {
    let w = 100;
    let train = ScenarioSpec::fig1(AnomalyKind::None, 3).generate()?;
    let norm = NormStats::fit(&train.readings, 0, 500)?;
    let pooled: Vec<Vec<f64>> = step_windows(&train.readings, &norm, w, 0, 500)
        .into_iter()
        .flatten()
        .collect();
    println!("{} training windows of length {w}", pooled.len());

    let plain = fit_pca(&pooled, 2)?;
    let level = fit_level_pca(&pooled, 2)?;
    for (name, m) in [("plain", &plain), ("level-anchored", &level)] {
        println!(
            "{name:>15}: explained variance {:?}, orthonormality error {:.1e}",
            m.explained_variance().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            m.orthonormality_error()
        );
    }

    let test = ScenarioSpec::fig1(AnomalyKind::MeanShift { delta: 5.0 }, 4).generate()?;
    let steps = step_windows(&test.readings, &norm, w, 0, 500);
    for t in [100, 300, 400] {
        let ws = &steps[t - (w - 1)];
        for (name, m) in [("plain", &plain), ("level-anchored", &level)] {
            let z: Vec<Vec<f64>> = ws.iter().map(|x| m.project(x)).collect();
            let d = distance_matrix(&z)?;
            let row: Vec<String> = (0..3).map(|j| format!("{:.2}", d.get(3, j))).collect();
            println!("t={t:<3} {name:>15}: distances from sensor 3 = {}", row.join(" "));
        }
    }
    Ok(())
}
