//! Generates the built-in fault scenarios and writes one of them as CSV.
//!
//!     cargo run --example synth_scenarios -- [out_dir]

use std::fs::File;

use corrsense::io::{write_labels_csv, write_matrix_csv};
use corrsense::synth::ScenarioSpec;

fn main() -> corrsense::Result<()> {
    let presets = [
        "fig1-normal",
        "fig1-shift-40",
        "fig1-shift-5",
        "fig1-erasure-5",
        "fig1-erasure-20",
        "fig1-normal-80",
        "fig1-point-50",
        "binshift-6000",
        "rateshift-30",
    ];
    println!("{:<16} {:>6} {:>8} {:>10}  sensor-3 mean normal/anomalous", "preset", "steps", "sensors", "anomalous");
    for name in presets {
        let spec = ScenarioSpec::preset(name, 1)?;
        let sc = spec.generate()?;
        let s = spec.anomaly_sensor;
        let mean = |flag: u8| {
            let v: Vec<f64> = (0..sc.readings.steps())
                .filter(|&t| sc.labels.get(t, s) == flag)
                .map(|t| sc.readings.get(t, s))
                .collect();
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        println!(
            "{name:<16} {:>6} {:>8} {:>10}  {:.2} / {:.2}",
            sc.readings.steps(),
            sc.readings.n_sensors(),
            sc.labels.total(),
            mean(0),
            mean(1),
        );
    }

    let dir = std::env::args().nth(1).unwrap_or_else(|| "synth_out".into());
    std::fs::create_dir_all(&dir)?;
    let sc = ScenarioSpec::preset("fig1-shift-40", 1)?.generate()?;
    write_matrix_csv(File::create(format!("{dir}/data.csv"))?, &sc.readings)?;
    write_labels_csv(File::create(format!("{dir}/labels.csv"))?, &sc.labels)?;
    println!("wrote {dir}/data.csv and {dir}/labels.csv");
    Ok(())
}
