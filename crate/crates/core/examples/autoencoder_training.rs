//! Trains the LSTM autoencoder on normal windows and compares reconstruction
//! loss on held-out normal windows with shifted and partly erased ones.

use corrsense::autoencoder::{AeConfig, AeModel};
use corrsense::detector::step_windows;
use corrsense::stream::NormStats;
use corrsense::synth::{AnomalyKind, ScenarioSpec};

fn main() -> corrsense::Result<()> {
    let w = 50;
    let train = ScenarioSpec {
        steps: 1000,
        ..ScenarioSpec::fig1(AnomalyKind::None, 11)
    }
    .generate()?;
    let norm = NormStats::fit(&train.readings, 0, 1000)?;
    let windows: Vec<Vec<f64>> = step_windows(&train.readings, &norm, w, 0, 1000)
        .into_iter()
        .step_by(10)
        .flatten()
        .collect();

    let mut model = AeModel::init(AeConfig {
        input_len: w,
        epochs: 30,
        seed: 5,
        ..AeConfig::default()
    })?;
    let history = model.train(&windows)?;
    let every = (history.len() / 6).max(1);
    for (i, l) in history.iter().enumerate().step_by(every) {
        println!("batch {i:>5}: loss {l:.4}");
    }
    let stats = model.loss_stats().expect("stats are set by training");
    println!("training loss: mean {:.4}, q99 {:.4}", stats.mean, stats.q99);

    let mean_loss = |anomaly: AnomalyKind| -> corrsense::Result<f64> {
        let sc = ScenarioSpec::fig1(anomaly, 12).generate()?;
        let ws: Vec<Vec<f64>> = step_windows(&sc.readings, &norm, w, 300, 500)
            .into_iter()
            .map(|step| step[3].clone())
            .collect();
        Ok(ws.iter().map(|x| model.loss(x)).sum::<f64>() / ws.len() as f64)
    };
    println!("mean loss, normal        {:.4}", mean_loss(AnomalyKind::None)?);
    println!("mean loss, shift +5      {:.4}", mean_loss(AnomalyKind::MeanShift { delta: 5.0 })?);
    println!("mean loss, shift +40     {:.4}", mean_loss(AnomalyKind::MeanShift { delta: 40.0 })?);
    println!("mean loss, 5% erasure    {:.4}", mean_loss(AnomalyKind::Erasure { rate: 0.05 })?);
    Ok(())
}
