//! Trains both detectors on a normal stream, saves and reloads the models,
//! then streams a +40 mean shift through PCA, the autoencoder and the
//! PCA-gated hybrid.

use corrsense::detector::PipelineConfig;
use corrsense::eval::{prf1, score_run, LabelMode};
use corrsense::experiment::train_on_baseline;
use corrsense::hybrid::{run_stream, DetectorKind, Stage, StreamDetector};
use corrsense::io::{load_models, save_models, CalibrationRecord, AE_MODEL_FILE, CALIBRATION_FILE, PCA_MODEL_FILE};
use corrsense::kv::KvMap;
use corrsense::synth::{AnomalyKind, ScenarioSpec};

fn main() -> corrsense::Result<()> {
    let cfg = PipelineConfig::default();
    println!("training on 2000 normal steps...");
    let (models, report) = train_on_baseline(&cfg, 2000, 99)?;
    println!(
        "pca threshold {:.3}; ae threshold {:.3}, loss threshold {:.3}",
        models.pca.thresholds.distance_threshold,
        models.ae.thresholds.distance_threshold,
        models.ae.thresholds.loss_threshold.unwrap_or_default()
    );

    let dir = std::env::temp_dir().join("corrsense_models");
    save_models(&dir, &models, &CalibrationRecord::new(&models, report, &KvMap::default(), 99))?;
    let (models, _) = load_models(&dir.join(PCA_MODEL_FILE), &dir.join(AE_MODEL_FILE), &dir.join(CALIBRATION_FILE))?;
    println!("models reloaded from {}", dir.display());

    let sc = ScenarioSpec::fig1(AnomalyKind::MeanShift { delta: 40.0 }, 7).generate()?;
    let mode = LabelMode::Segment { start: 250 };
    for kind in DetectorKind::ALL {
        let run = run_stream(kind, &sc.readings, &models)?;
        let m = prf1(score_run(&run, &sc.labels, 3, models.window, mode)?);
        println!(
            "{kind:>6}: f1 {:.3} recall {:.3}, autoencoder ran on {} of {} steps, {:.3} ms/step",
            m.f1,
            m.recall,
            run.counters.ae_invocations,
            run.counters.steps_evaluated,
            run.timing.mean_ms()
        );
    }

    // Step by step around the onset.
    let mut det = StreamDetector::new(&models, DetectorKind::Hybrid);
    for t in 0..sc.readings.steps() {
        let v = det.step(sc.readings.row(t));
        if (300..306).contains(&t) || (v.stage == Stage::AeCleared && t < 300) {
            println!("t={t}: stage {:<13} flags {:?}", v.stage.name(), v.flags);
        }
    }
    Ok(())
}
