//! Pairwise latent distances between sensors and the threshold rules that
//! turn them into per-sensor flags.

use serde::{Deserialize, Serialize};

use crate::autoencoder::quantile_sorted;
use crate::error::{Error, Result};

/// Smallest threshold ever issued; keeps thresholds strictly positive when
/// the calibration data is all zeros.
pub const MIN_THRESHOLD: f64 = 1e-12;

/// Symmetric `n × n` matrix of Euclidean distances between latent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps raw entries without checking metric properties.
    pub fn from_raw(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::DimMismatch {
                expected: n * n,
                got: d.len(),
            });
        }
        Ok(Self { n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    /// Entries above the diagonal, row-major.
    pub fn upper_triangle(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).flat_map(move |i| ((i + 1)..self.n).map(move |j| self.get(i, j)))
    }

    /// `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        Self { n, d }
    }
}

/// Euclidean distance matrix of `latents`.
pub fn distance_matrix<V: AsRef<[f64]>>(latents: &[V]) -> Result<DistanceMatrix> {
    let n = latents.len();
    if n < 2 {
        return Err(Error::invalid("latents", format!("need at least 2 sensors, got {n}")));
    }
    let dim = latents[0].as_ref().len();
    if let Some(bad) = latents.iter().find(|l| l.as_ref().len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            got: bad.as_ref().len(),
        });
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = latents[i]
                .as_ref()
                .iter()
                .zip(latents[j].as_ref())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    Ok(DistanceMatrix { n, d })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub train_mean: f64,
    pub train_std: f64,
    pub multiplier: f64,
    pub quantile: f64,
    pub distance_samples: usize,
    pub loss_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorThresholds {
    pub distance_threshold: f64,
    /// Reconstruction-loss threshold; present only for the autoencoder path.
    pub loss_threshold: Option<f64>,
    pub calibration: Calibration,
}

/// `distance_threshold = mean + c·std` over every off-diagonal entry of the
/// training matrices; `loss_threshold` is the `q`-quantile of `train_losses`
/// (omitted when no losses are given).
pub fn calibrate(
    train_matrices: &[DistanceMatrix],
    c: f64,
    train_losses: &[f64],
    q: f64,
) -> Result<DetectorThresholds> {
    let entries: Vec<f64> = train_matrices
        .iter()
        .flat_map(|m| (0..m.n()).flat_map(move |i| (0..m.n()).filter(move |&j| j != i).map(move |j| m.get(i, j))))
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("q", format!("{q} is outside [0, 1]")));
    }
    let n = entries.len() as f64;
    let mean = entries.iter().sum::<f64>() / n;
    let var = entries.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    // All-equal data gives std 0 exactly in theory; round-off can leave a
    // tiny residue, so snap it.
    let std = if std <= 1e-12 * mean.abs().max(1.0) { 0.0 } else { std };

    let loss_threshold = if train_losses.is_empty() {
        None
    } else {
        let mut sorted = train_losses.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(quantile_sorted(&sorted, q).max(MIN_THRESHOLD))
    };

    Ok(DetectorThresholds {
        distance_threshold: (mean + c * std).max(MIN_THRESHOLD),
        loss_threshold,
        calibration: Calibration {
            train_mean: mean,
            train_std: std,
            multiplier: c,
            quantile: q,
            distance_samples: entries.len(),
            loss_samples: train_losses.len(),
        },
    })
}

/// How many of a sensor's distances must exceed the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FlagRule {
    /// Every other sensor is farther than the threshold.
    #[default]
    AllOthers,
    /// More than half of the other sensors are farther than the threshold.
    Majority,
}

impl FlagRule {
    pub fn name(self) -> &'static str {
        match self {
            Self::AllOthers => "all_others",
            Self::Majority => "majority",
        }
    }
}

impl std::str::FromStr for FlagRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all_others" => Ok(Self::AllOthers),
            "majority" => Ok(Self::Majority),
            _ => Err(Error::invalid("flag_rule", format!("unknown rule {s:?}"))),
        }
    }
}

pub fn classify(m: &DistanceMatrix, th: &DetectorThresholds) -> Vec<u8> {
    classify_with(m, th.distance_threshold, FlagRule::AllOthers)
}

pub fn classify_with(m: &DistanceMatrix, threshold: f64, rule: FlagRule) -> Vec<u8> {
    let n = m.n();
    (0..n)
        .map(|i| {
            let far = (0..n).filter(|&j| j != i && m.get(i, j) > threshold).count();
            let flagged = match rule {
                FlagRule::AllOthers => far == n - 1,
                FlagRule::Majority => 2 * far > n - 1,
            };
            flagged as u8
        })
        .collect()
}

/// 1 iff `loss` strictly exceeds the loss threshold.
pub fn loss_flag(loss: f64, th: &DetectorThresholds) -> u8 {
    match th.loss_threshold {
        Some(t) => (loss > t) as u8,
        None => 0,
    }
}

/// Element-wise OR of the distance and loss channels.
pub fn ae_verdict(distance_flags: &[u8], loss_flags: &[u8]) -> Vec<u8> {
    assert_eq!(distance_flags.len(), loss_flags.len());
    distance_flags
        .iter()
        .zip(loss_flags)
        .map(|(&a, &b)| a | b)
        .collect()
}
