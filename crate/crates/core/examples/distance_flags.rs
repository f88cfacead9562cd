//! Distance matrices, threshold calibration and the flag rules on a few
//! hand-built latent layouts.

use corrsense::distance::{calibrate, classify_with, distance_matrix, FlagRule};

fn show(name: &str, latents: &[[f64; 2]], threshold: f64) -> corrsense::Result<()> {
    let m = distance_matrix(latents)?;
    println!("{name}");
    for i in 0..m.n() {
        let row: Vec<String> = (0..m.n()).map(|j| format!("{:6.2}", m.get(i, j))).collect();
        println!("  {}", row.join(" "));
    }
    for rule in [FlagRule::AllOthers, FlagRule::Majority] {
        println!("  {:>10}: {:?}", rule.name(), classify_with(&m, threshold, rule));
    }
    Ok(())
}

fn main() -> corrsense::Result<()> {
    // Calibrate on four sensors that jitter around the same point.
    let normal: Vec<_> = (0..50)
        .map(|t| {
            let j = |s: usize| ((t * 7 + s * 13) % 11) as f64 / 11.0 - 0.5;
            distance_matrix(&[[j(0), j(1)], [j(2), j(3)], [j(4), j(5)], [j(6), j(7)]])
        })
        .collect::<corrsense::Result<_>>()?;
    let th = calibrate(&normal, 3.0, &[], 0.99)?;
    println!(
        "threshold {:.3} = mean {:.3} + 3 x std {:.3}\n",
        th.distance_threshold, th.calibration.train_mean, th.calibration.train_std
    );

    show("one faulty sensor", &[[0.0, 0.0], [0.2, 0.1], [0.1, 0.2], [6.0, 6.0]], th.distance_threshold)?;
    show(
        "two sensors far apart, both close to a third",
        &[[-1.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.1]],
        1.5,
    )?;
    Ok(())
}
