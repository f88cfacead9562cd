//! Trained detectors: PCA and autoencoder encoders paired with calibrated
//! distance (and loss) thresholds, plus the training protocol that builds
//! them from an anomaly-free segment.

use serde::{Deserialize, Serialize};

use crate::autoencoder::{AeConfig, AeModel};
use crate::distance::{
    ae_verdict, calibrate, classify_with, distance_matrix, loss_flag, DetectorThresholds, DistanceMatrix, FlagRule,
};
use crate::error::{Error, Result};
use crate::pca::{fit_level_pca, fit_pca, PcaModel};
use crate::stream::{NormStats, ReadingMatrix, DEFAULT_WINDOW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: usize,
    pub pca_k: usize,
    /// Pin the window level as the first PCA component.
    pub pca_level: bool,
    pub ae: AeConfig,
    /// Stride between windows used for autoencoder gradient steps.
    pub ae_train_stride: usize,
    /// Distance-threshold multiplier for the PCA detector.
    pub pca_c: f64,
    /// Distance-threshold multiplier for the autoencoder detector.
    pub ae_c: f64,
    /// Loss-threshold quantile for the autoencoder detector.
    pub q: f64,
    pub flag_rule: FlagRule,
    /// Feed z-scored readings to the detectors (false = raw values).
    pub normalize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            pca_k: 2,
            pca_level: true,
            ae: AeConfig::default(),
            ae_train_stride: 10,
            pca_c: 1.0,
            ae_c: 3.0,
            q: 0.99,
            flag_rule: FlagRule::AllOthers,
            normalize: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::invalid("window", "must be at least 2"));
        }
        if self.pca_k == 0 || self.pca_k > self.window {
            return Err(Error::invalid("pca_k", format!("must be in 1..={}", self.window)));
        }
        if self.ae.input_len != self.window {
            return Err(Error::invalid(
                "ae.input_len",
                format!("{} differs from window {}", self.ae.input_len, self.window),
            ));
        }
        self.ae.validate().map_err(|e| match e {
            Error::Invalid { field, reason } => Error::invalid(format!("ae_{field}"), reason),
            other => other,
        })?;
        if self.ae_train_stride == 0 {
            return Err(Error::invalid("ae_train_stride", "must be positive"));
        }
        for (name, c) in [("pca_c", self.pca_c), ("ae_c", self.ae_c)] {
            if !c.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::invalid("q", format!("{} is outside [0, 1]", self.q)));
        }
        Ok(())
    }
}

/// Result of evaluating one detector on one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub latents: Vec<Vec<f64>>,
    pub matrix: DistanceMatrix,
    pub distance_flags: Vec<u8>,
    /// Per-sensor reconstruction losses (autoencoder only).
    pub losses: Option<Vec<f64>>,
    pub loss_flags: Option<Vec<u8>>,
    pub flags: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaDetector {
    pub model: PcaModel,
    pub thresholds: DetectorThresholds,
    pub rule: FlagRule,
}

impl PcaDetector {
    pub fn evaluate<V: AsRef<[f64]>>(&self, windows: &[V]) -> Evaluation {
        let latents: Vec<Vec<f64>> = windows.iter().map(|w| self.model.project(w.as_ref())).collect();
        let matrix = distance_matrix(&latents).expect("at least two equal-length latents");
        let flags = classify_with(&matrix, self.thresholds.distance_threshold, self.rule);
        Evaluation {
            latents,
            matrix,
            distance_flags: flags.clone(),
            losses: None,
            loss_flags: None,
            flags,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeDetector {
    pub model: AeModel,
    pub thresholds: DetectorThresholds,
    pub rule: FlagRule,
}

impl AeDetector {
    pub fn evaluate<V: AsRef<[f64]>>(&self, windows: &[V]) -> Evaluation {
        let (latents, losses): (Vec<Vec<f64>>, Vec<f64>) = windows
            .iter()
            .map(|w| {
                let out = self.model.forward(w.as_ref());
                (out.latent, out.loss)
            })
            .unzip();
        let matrix = distance_matrix(&latents).expect("at least two equal-length latents");
        let distance_flags = classify_with(&matrix, self.thresholds.distance_threshold, self.rule);
        let loss_flags: Vec<u8> = losses.iter().map(|&l| loss_flag(l, &self.thresholds)).collect();
        let flags = ae_verdict(&distance_flags, &loss_flags);
        Evaluation {
            latents,
            matrix,
            distance_flags,
            losses: Some(losses),
            loss_flags: Some(loss_flags),
            flags,
        }
    }
}

/// Everything a stream needs at inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub window: usize,
    pub norm: NormStats,
    pub pca: PcaDetector,
    pub ae: AeDetector,
}

impl TrainedModels {
    pub fn n_sensors(&self) -> usize {
        self.norm.n_sensors()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub train_start: usize,
    pub train_end: usize,
    pub calibration_steps: usize,
    pub pooled_windows: usize,
    pub ae_windows: usize,
    pub ae_loss_history: Vec<f64>,
}

/// Normalized windows of every sensor at every step of `[start, end)` whose
/// window lies entirely inside the range: `steps → sensors → window`.
pub fn step_windows(
    readings: &ReadingMatrix,
    norm: &NormStats,
    window: usize,
    start: usize,
    end: usize,
) -> Vec<Vec<Vec<f64>>> {
    let n = readings.n_sensors();
    if end < start + window {
        return Vec::new();
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (start..end)
                .map(|t| norm.normalize_value(s, readings.get(t, s)))
                .collect()
        })
        .collect();
    (0..=(end - start - window))
        .map(|i| cols.iter().map(|c| c[i..i + window].to_vec()).collect())
        .collect()
}

/// Fits the PCA detector on `per_step` windows and calibrates its threshold
/// on the same steps.
pub fn fit_pca_detector(per_step: &[Vec<Vec<f64>>], cfg: &PipelineConfig) -> Result<PcaDetector> {
    let pooled: Vec<Vec<f64>> = per_step.iter().flatten().cloned().collect();
    let model = if cfg.pca_level {
        fit_level_pca(&pooled, cfg.pca_k)?
    } else {
        fit_pca(&pooled, cfg.pca_k)?
    };
    let mut det = PcaDetector {
        model,
        thresholds: placeholder_thresholds(),
        rule: cfg.flag_rule,
    };
    let matrices: Vec<DistanceMatrix> = per_step.iter().map(|ws| det.evaluate(ws).matrix).collect();
    det.thresholds = calibrate(&matrices, cfg.pca_c, &[], cfg.q)?;
    Ok(det)
}

/// Trains the autoencoder on `per_step` windows (every `ae_train_stride`-th
/// step) and calibrates distance and loss thresholds on all of them.
pub fn fit_ae_detector(per_step: &[Vec<Vec<f64>>], cfg: &PipelineConfig) -> Result<(AeDetector, Vec<f64>)> {
    let train: Vec<Vec<f64>> = per_step
        .iter()
        .step_by(cfg.ae_train_stride)
        .flatten()
        .cloned()
        .collect();
    let mut model = AeModel::init(cfg.ae.clone())?;
    let history = model.train(&train)?;

    let mut matrices = Vec::with_capacity(per_step.len());
    let mut losses = Vec::with_capacity(per_step.len() * per_step.first().map_or(0, Vec::len));
    let mut det = AeDetector {
        model,
        thresholds: placeholder_thresholds(),
        rule: cfg.flag_rule,
    };
    for ws in per_step {
        let ev = det.evaluate(ws);
        losses.extend(ev.losses.unwrap_or_default());
        matrices.push(ev.matrix);
    }
    det.model.set_loss_stats_from(&losses);
    det.thresholds = calibrate(&matrices, cfg.ae_c, &losses, cfg.q)?;
    Ok((det, history))
}

fn placeholder_thresholds() -> DetectorThresholds {
    calibrate(
        &[DistanceMatrix::from_raw(2, vec![0.0, 1.0, 1.0, 0.0]).expect("2x2")],
        0.0,
        &[],
        0.5,
    )
    .expect("static calibration")
}

/// Trains both detectors on rows `[start, end)` of `readings`, which must be
/// anomaly-free.
pub fn train_models(
    readings: &ReadingMatrix,
    start: usize,
    end: usize,
    cfg: &PipelineConfig,
) -> Result<(TrainedModels, TrainingReport)> {
    cfg.validate()?;
    if readings.n_sensors() < 2 {
        return Err(Error::invalid("n_sensors", "need at least 2 sensors"));
    }
    if end > readings.steps() || end < start + cfg.window + 1 {
        return Err(Error::invalid(
            "training range",
            format!("[{start}, {end}) must hold more than one window of {}", cfg.window),
        ));
    }
    let norm = if cfg.normalize {
        NormStats::fit(readings, start, end)?
    } else {
        NormStats::identity(readings.n_sensors())
    };
    let per_step = step_windows(readings, &norm, cfg.window, start, end);
    let pca = fit_pca_detector(&per_step, cfg)?;
    let (ae, history) = fit_ae_detector(&per_step, cfg)?;
    let report = TrainingReport {
        train_start: start,
        train_end: end,
        calibration_steps: per_step.len(),
        pooled_windows: per_step.len() * readings.n_sensors(),
        ae_windows: per_step.iter().step_by(cfg.ae_train_stride).count() * readings.n_sensors(),
        ae_loss_history: history,
    };
    Ok((
        TrainedModels {
            window: cfg.window,
            norm,
            pca,
            ae,
        },
        report,
    ))
}
