//! Confusion metrics, label derivation and correlation used by the
//! experiment drivers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::StreamRun;
use crate::stream::LabelTrack;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn flagged(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn add(&mut self, other: ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// Counts over two already-aligned {0,1} tracks.
pub fn confusion(flags: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    if flags.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: flags.len(),
            right: labels.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&f, &l) in flags.iter().zip(labels) {
        match (f != 0, l != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 with every 0/0 read as 0.
pub fn prf1(c: ConfusionCounts) -> Prf1 {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf1 { precision, recall, f1 }
}

/// How a step's ground truth is derived from per-reading labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// The label of the newest reading in the window.
    Reading,
    /// Positive when any reading in the window is labeled.
    Window,
    /// Positive from the fault onset on, whatever the readings hold.
    Segment { start: usize },
}

impl LabelMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Reading => "reading",
            Self::Window => "window",
            Self::Segment { .. } => "segment",
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Segment { start } => write!(f, "segment:{start}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for LabelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "reading" => Ok(Self::Reading),
            None if s == "window" => Ok(Self::Window),
            Some(("segment", n)) => n
                .parse()
                .map(|start| Self::Segment { start })
                .map_err(|_| Error::invalid("label_mode", format!("bad segment start {n:?}"))),
            _ => Err(Error::invalid("label_mode", format!("unknown label mode {s:?}"))),
        }
    }
}

/// Per-step ground truth of `sensor` under `mode`.
pub fn step_labels(labels: &LabelTrack, sensor: usize, window: usize, mode: LabelMode) -> Vec<u8> {
    let col = labels.column(sensor);
    match mode {
        LabelMode::Reading => col,
        LabelMode::Segment { start } => (0..col.len()).map(|t| u8::from(t >= start)).collect(),
        LabelMode::Window => {
            let mut out = Vec::with_capacity(col.len());
            let mut inside = 0usize;
            for t in 0..col.len() {
                inside += usize::from(col[t] != 0);
                if t >= window {
                    inside -= usize::from(col[t - window] != 0);
                }
                out.push(u8::from(inside > 0));
            }
            out
        }
    }
}

/// Confusion counts of one sensor's flag track against its labels, skipping
/// warm-up steps.
pub fn score_run(run: &StreamRun, labels: &LabelTrack, sensor: usize, window: usize, mode: LabelMode) -> Result<ConfusionCounts> {
    if labels.steps() != run.verdicts.len() {
        return Err(Error::LengthMismatch {
            left: run.verdicts.len(),
            right: labels.steps(),
        });
    }
    let truth = step_labels(labels, sensor, window, mode);
    let (flags, labels): (Vec<u8>, Vec<u8>) = run
        .flag_track(sensor)
        .into_iter()
        .zip(truth)
        .filter_map(|(f, l)| f.map(|f| (f, l)))
        .unzip();
    confusion(&flags, &labels)
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("series", "need at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let c = confusion(&[1, 1, 1], &[1, 1, 1]).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (3, 0, 0, 0));
        let c = confusion(&[0, 0], &[1, 1]).unwrap();
        assert_eq!(c.fn_, 2);
        let c = confusion(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 1, 1));
        assert!(matches!(confusion(&[1], &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn prf1_examples() {
        let m = prf1(ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 0 });
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
        let m = prf1(ConfusionCounts { tp: 4, fp: 0, fn_: 0, tn: 3 });
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = prf1(ConfusionCounts { tp: 0, fp: 0, fn_: 5, tn: 0 });
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn window_labels_extend_for_one_window() {
        let mut lt = LabelTrack::zeros(10, 1);
        lt.set(2, 0, true);
        assert_eq!(step_labels(&lt, 0, 3, LabelMode::Window), vec![0, 0, 1, 1, 1, 0, 0, 0, 0, 0]);
        assert_eq!(step_labels(&lt, 0, 3, LabelMode::Reading)[2], 1);
        assert_eq!(step_labels(&lt, 0, 3, LabelMode::Segment { start: 8 }), vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn label_mode_parses() {
        assert_eq!("window".parse::<LabelMode>().unwrap(), LabelMode::Window);
        assert_eq!("segment:250".parse::<LabelMode>().unwrap(), LabelMode::Segment { start: 250 });
        assert!("segment".parse::<LabelMode>().is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!((pearson_r(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson_r(&x, &[1.0; 4]), Err(Error::DegenerateVariance)));
    }
}
