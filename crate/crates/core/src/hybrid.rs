//! Streaming orchestration: PCA screens every step, the autoencoder runs only
//! on steps PCA flags and confirms or clears each sensor PCA flagged.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::detector::{Evaluation, TrainedModels};
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::stream::{ReadingMatrix, SensorWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Pca,
    Ae,
    Hybrid,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [Self::Pca, Self::Ae, Self::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pca => "pca",
            Self::Ae => "ae",
            Self::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Self::Pca),
            "ae" | "autoencoder" => Ok(Self::Ae),
            "hybrid" => Ok(Self::Hybrid),
            _ => Err(Error::invalid("detector", format!("unknown detector {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Some window is not yet full.
    Warmup,
    /// PCA raised no flag; the autoencoder did not run.
    PcaClear,
    /// PCA-only detector raised at least one flag.
    PcaFlagged,
    /// The autoencoder ran and flagged at least one sensor (hybrid: confirmed
    /// at least one PCA suspect).
    AeConfirmed,
    /// The autoencoder ran and flagged nothing (hybrid: cleared every suspect).
    AeCleared,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Self::Warmup => "warmup",
            Self::PcaClear => "pca_clear",
            Self::PcaFlagged => "pca_flagged",
            Self::AeConfirmed => "ae_confirmed",
            Self::AeCleared => "ae_cleared",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flag {
    Normal,
    Anomalous,
    Undetermined,
}

impl Flag {
    pub fn from_bit(b: u8) -> Self {
        if b == 0 {
            Self::Normal
        } else {
            Self::Anomalous
        }
    }

    /// `Some(0 | 1)`, or `None` during warm-up.
    pub fn bit(self) -> Option<u8> {
        match self {
            Self::Normal => Some(0),
            Self::Anomalous => Some(1),
            Self::Undetermined => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyVerdict {
    pub t: usize,
    pub flags: Vec<Flag>,
    pub stage: Stage,
    /// PCA's own flags when PCA ran (diagnostics only in hybrid mode).
    pub pca_flags: Option<Vec<u8>>,
    /// Distance matrix of whichever detector issued the verdict.
    pub distances: Option<DistanceMatrix>,
    pub step_time: Duration,
}

impl AnomalyVerdict {
    pub fn is_determined(&self) -> bool {
        self.stage != Stage::Warmup
    }

    pub fn flag_bit(&self, sensor: usize) -> Option<u8> {
        self.flags[sensor].bit()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub steps_total: u64,
    pub steps_evaluated: u64,
    pub pca_flagged_steps: u64,
    pub ae_invocations: u64,
}

/// Per-step timing summary in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: usize,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub p95_ns: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let pick = |q: f64| sorted[((sorted.len() - 1) as f64 * q).round() as usize] as f64;
        Self {
            count: sorted.len(),
            mean_ns: sorted.iter().map(|&v| v as f64).sum::<f64>() / sorted.len() as f64,
            median_ns: pick(0.5),
            p95_ns: pick(0.95),
        }
    }

    pub fn mean_ms(&self) -> f64 {
        self.mean_ns / 1e6
    }
}

/// One detector instance bound to one stream.
pub struct StreamDetector<'m> {
    models: &'m TrainedModels,
    kind: DetectorKind,
    windows: Vec<SensorWindow>,
    scratch: Vec<Vec<f64>>,
    t: usize,
    counters: Counters,
    timings: Vec<u64>,
}

impl<'m> StreamDetector<'m> {
    pub fn new(models: &'m TrainedModels, kind: DetectorKind) -> Self {
        let n = models.n_sensors();
        Self {
            models,
            kind,
            windows: (0..n).map(|_| SensorWindow::new(models.window)).collect(),
            scratch: vec![vec![0.0; models.window]; n],
            t: 0,
            counters: Counters::default(),
            timings: Vec::new(),
        }
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Wall-clock cost of every evaluated step, in nanoseconds.
    pub fn timings(&self) -> &[u64] {
        &self.timings
    }

    pub fn timing_stats(&self) -> TimingStats {
        TimingStats::from_samples(&self.timings)
    }

    /// Normalized copies of the current windows.
    fn load_windows(&mut self) {
        for (s, (w, buf)) in self.windows.iter().zip(self.scratch.iter_mut()).enumerate() {
            w.snapshot_into(buf).expect("window is full");
            self.models.norm.normalize_in_place(buf, s);
        }
    }

    /// Pushes one reading per sensor and returns this step's verdict.
    pub fn step(&mut self, readings: &[f64]) -> AnomalyVerdict {
        let n = self.windows.len();
        assert_eq!(readings.len(), n, "one reading per sensor");
        for (w, &v) in self.windows.iter_mut().zip(readings) {
            w.push(v);
        }
        let t = self.t;
        self.t += 1;
        self.counters.steps_total += 1;

        if !self.windows.iter().all(SensorWindow::is_full) {
            return AnomalyVerdict {
                t,
                flags: vec![Flag::Undetermined; n],
                stage: Stage::Warmup,
                pca_flags: None,
                distances: None,
                step_time: Duration::ZERO,
            };
        }

        let started = Instant::now();
        self.load_windows();
        let (stage, flags, pca_flags, distances) = match self.kind {
            DetectorKind::Pca => {
                let ev = self.models.pca.evaluate(&self.scratch);
                let any = ev.flags.iter().any(|&f| f == 1);
                if any {
                    self.counters.pca_flagged_steps += 1;
                }
                let stage = if any { Stage::PcaFlagged } else { Stage::PcaClear };
                (stage, ev.flags.clone(), Some(ev.flags), Some(ev.matrix))
            }
            DetectorKind::Ae => {
                let ev = self.models.ae.evaluate(&self.scratch);
                self.counters.ae_invocations += 1;
                let (stage, flags, matrix) = ae_outcome(ev);
                (stage, flags, None, Some(matrix))
            }
            DetectorKind::Hybrid => {
                let pca = self.models.pca.evaluate(&self.scratch);
                if pca.flags.iter().all(|&f| f == 0) {
                    (Stage::PcaClear, vec![0; n], Some(pca.flags), Some(pca.matrix))
                } else {
                    self.counters.pca_flagged_steps += 1;
                    self.counters.ae_invocations += 1;
                    let mut ev = self.models.ae.evaluate(&self.scratch);
                    ev.flags = confirm(&pca.flags, &ev.flags);
                    let (stage, flags, matrix) = ae_outcome(ev);
                    (stage, flags, Some(pca.flags), Some(matrix))
                }
            }
        };
        let elapsed = started.elapsed();
        self.counters.steps_evaluated += 1;
        self.timings.push(elapsed.as_nanos() as u64);

        AnomalyVerdict {
            t,
            flags: flags.into_iter().map(Flag::from_bit).collect(),
            stage,
            pca_flags,
            distances,
            step_time: elapsed,
        }
    }
}

/// A sensor stays flagged only when PCA suspected it and the autoencoder
/// agrees.
pub fn confirm(pca_flags: &[u8], ae_flags: &[u8]) -> Vec<u8> {
    pca_flags.iter().zip(ae_flags).map(|(&p, &a)| p & a).collect()
}

fn ae_outcome(ev: Evaluation) -> (Stage, Vec<u8>, DistanceMatrix) {
    let stage = if ev.flags.iter().any(|&f| f == 1) {
        Stage::AeConfirmed
    } else {
        Stage::AeCleared
    };
    (stage, ev.flags, ev.matrix)
}

/// Output of running one detector over a whole stream.
#[derive(Debug, Clone)]
pub struct StreamRun {
    pub kind: DetectorKind,
    pub verdicts: Vec<AnomalyVerdict>,
    pub timing: TimingStats,
    pub counters: Counters,
}

impl StreamRun {
    /// Flag track of one sensor; `None` during warm-up.
    pub fn flag_track(&self, sensor: usize) -> Vec<Option<u8>> {
        self.verdicts.iter().map(|v| v.flag_bit(sensor)).collect()
    }
}

/// Applies `kind` at every step of `readings`.
pub fn run_stream(kind: DetectorKind, readings: &ReadingMatrix, models: &TrainedModels) -> Result<StreamRun> {
    if readings.n_sensors() != models.n_sensors() {
        return Err(Error::DimMismatch {
            expected: models.n_sensors(),
            got: readings.n_sensors(),
        });
    }
    if readings.steps() <= models.window {
        return Err(Error::invalid(
            "stream",
            format!("{} steps do not exceed the window of {}", readings.steps(), models.window),
        ));
    }
    let mut det = StreamDetector::new(models, kind);
    let verdicts: Vec<AnomalyVerdict> = (0..readings.steps()).map(|t| det.step(readings.row(t))).collect();
    Ok(StreamRun {
        kind,
        verdicts,
        timing: det.timing_stats(),
        counters: det.counters(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::AeConfig;
    use crate::detector::{train_models, PipelineConfig};
    use crate::synth::{AnomalyKind, ScenarioSpec};

    fn setup() -> (TrainedModels, ReadingMatrix) {
        let cfg = PipelineConfig {
            window: 10,
            ae: AeConfig {
                input_len: 10,
                hidden: 6,
                latent: 2,
                epochs: 2,
                batch: 8,
                ..AeConfig::default()
            },
            ae_train_stride: 1,
            ..PipelineConfig::default()
        };
        let normal = ScenarioSpec {
            steps: 300,
            ..ScenarioSpec::fig1(AnomalyKind::None, 9)
        }
        .generate()
        .unwrap();
        let (models, _) = train_models(&normal.readings, 0, 300, &cfg).unwrap();
        let test = ScenarioSpec::fig1(AnomalyKind::MeanShift { delta: 40.0 }, 10)
            .generate()
            .unwrap();
        (models, test.readings)
    }

    #[test]
    fn confirm_is_elementwise_and() {
        assert_eq!(confirm(&[1, 1, 0, 0], &[1, 0, 1, 0]), [1, 0, 0, 0]);
    }

    #[test]
    fn hybrid_counters_follow_pca_gate() {
        let (models, readings) = setup();
        let pca = run_stream(DetectorKind::Pca, &readings, &models).unwrap();
        let ae = run_stream(DetectorKind::Ae, &readings, &models).unwrap();
        let hy = run_stream(DetectorKind::Hybrid, &readings, &models).unwrap();
        let evaluated = (readings.steps() - models.window + 1) as u64;
        for run in [&pca, &ae, &hy] {
            assert_eq!(run.counters.steps_total, readings.steps() as u64);
            assert_eq!(run.counters.steps_evaluated, evaluated);
        }
        assert_eq!(pca.counters.ae_invocations, 0);
        assert_eq!(ae.counters.ae_invocations, evaluated);
        assert_eq!(hy.counters.ae_invocations, hy.counters.pca_flagged_steps);
        assert_eq!(hy.counters.pca_flagged_steps, pca.counters.pca_flagged_steps);
        assert!(hy.counters.pca_flagged_steps > 0);

        for (v, p) in hy.verdicts.iter().zip(&pca.verdicts) {
            match v.stage {
                Stage::Warmup => assert!(v.flags.iter().all(|f| *f == Flag::Undetermined)),
                Stage::PcaClear => {
                    assert!(v.flags.iter().all(|f| *f == Flag::Normal));
                    assert_eq!(p.stage, Stage::PcaClear);
                }
                _ => {
                    for s in 0..v.flags.len() {
                        assert!(v.flag_bit(s) <= p.flag_bit(s));
                    }
                }
            }
        }
    }

    #[test]
    fn stream_shape_is_checked() {
        let (models, _) = setup();
        let short = ReadingMatrix::from_rows(4, vec![0.0; 40]).unwrap();
        assert!(run_stream(DetectorKind::Pca, &short, &models).is_err());
        let narrow = ReadingMatrix::from_rows(3, vec![0.0; 300]).unwrap();
        assert!(matches!(
            run_stream(DetectorKind::Ae, &narrow, &models),
            Err(Error::DimMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn timing_stats_summarize_samples() {
        let t = TimingStats::from_samples(&[1_000_000, 3_000_000]);
        assert!((t.mean_ms() - 2.0).abs() < 1e-12);
    }
}
