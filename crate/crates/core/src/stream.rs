//! Multi-sensor stream data model: readings, per-sensor sliding windows,
//! normalization statistics and ground-truth labels.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sliding-window length.
pub const DEFAULT_WINDOW: usize = 100;

/// Floor applied to fitted standard deviations.
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub sensor_id: usize,
    pub t: u64,
    pub value: f64,
}

/// The most recent `capacity` readings of one sensor, oldest first.
#[derive(Debug, Clone)]
pub struct SensorWindow {
    capacity: usize,
    values: VecDeque<f64>,
}

impl SensorWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            capacity,
            values: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.values.len() == self.capacity
    }

    /// Appends `value`, evicting the oldest reading once the window is full.
    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    /// Copy of the full window, oldest first.
    pub fn snapshot(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.capacity];
        self.snapshot_into(&mut out)?;
        Ok(out)
    }

    /// Writes the full window into `out` without allocating.
    pub fn snapshot_into(&self, out: &mut [f64]) -> Result<()> {
        if !self.is_full() {
            return Err(Error::NotFull {
                len: self.values.len(),
                capacity: self.capacity,
            });
        }
        if out.len() != self.capacity {
            return Err(Error::DimMismatch {
                expected: self.capacity,
                got: out.len(),
            });
        }
        let (a, b) = self.values.as_slices();
        out[..a.len()].copy_from_slice(a);
        out[a.len()..].copy_from_slice(b);
        Ok(())
    }
}

/// Per-sensor location and scale, fitted on an anomaly-free segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits mean and population std per sensor over rows `[start, end)`.
    pub fn fit(readings: &ReadingMatrix, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > readings.steps() {
            return Err(Error::invalid(
                "training range",
                format!("[{start}, {end}) is empty or exceeds {} steps", readings.steps()),
            ));
        }
        let n = readings.n_sensors();
        let count = (end - start) as f64;
        let mut mean = vec![0.0; n];
        let mut std = vec![0.0; n];
        for s in 0..n {
            let m = (start..end).map(|t| readings.get(t, s)).sum::<f64>() / count;
            let var = (start..end)
                .map(|t| (readings.get(t, s) - m).powi(2))
                .sum::<f64>()
                / count;
            mean[s] = m;
            std[s] = var.sqrt().max(STD_FLOOR);
        }
        Ok(Self { mean, std })
    }

    /// Pass-through statistics (mean 0, std 1) for raw-mode runs.
    pub fn identity(n_sensors: usize) -> Self {
        Self {
            mean: vec![0.0; n_sensors],
            std: vec![1.0; n_sensors],
        }
    }

    pub fn n_sensors(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_value(&self, sensor: usize, x: f64) -> f64 {
        (x - self.mean[sensor]) / self.std[sensor]
    }

    pub fn normalize(&self, window: &[f64], sensor: usize) -> Vec<f64> {
        window
            .iter()
            .map(|&x| self.normalize_value(sensor, x))
            .collect()
    }

    pub fn normalize_in_place(&self, window: &mut [f64], sensor: usize) {
        let (m, s) = (self.mean[sensor], self.std[sensor]);
        for x in window.iter_mut() {
            *x = (*x - m) / s;
        }
    }

    pub fn denormalize(&self, window: &[f64], sensor: usize) -> Vec<f64> {
        window
            .iter()
            .map(|&z| z * self.std[sensor] + self.mean[sensor])
            .collect()
    }
}

/// Rectangular `steps × n_sensors` reading matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadingMatrix {
    n_sensors: usize,
    data: Vec<f64>,
}

impl ReadingMatrix {
    pub fn zeros(steps: usize, n_sensors: usize) -> Self {
        Self {
            n_sensors,
            data: vec![0.0; steps * n_sensors],
        }
    }

    pub fn from_rows(n_sensors: usize, data: Vec<f64>) -> Result<Self> {
        if n_sensors == 0 || data.len() % n_sensors != 0 {
            return Err(Error::DimMismatch {
                expected: n_sensors,
                got: data.len(),
            });
        }
        Ok(Self { n_sensors, data })
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn steps(&self) -> usize {
        self.data.len() / self.n_sensors
    }

    pub fn get(&self, t: usize, sensor: usize) -> f64 {
        self.data[t * self.n_sensors + sensor]
    }

    pub fn set(&mut self, t: usize, sensor: usize, value: f64) {
        self.data[t * self.n_sensors + sensor] = value;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_sensors..(t + 1) * self.n_sensors]
    }

    pub fn column(&self, sensor: usize) -> Vec<f64> {
        (0..self.steps()).map(|t| self.get(t, sensor)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            n_sensors: self.n_sensors,
            data: self.data[start * self.n_sensors..end * self.n_sensors].to_vec(),
        }
    }

    pub fn readings(&self) -> impl Iterator<Item = Reading> + '_ {
        let n = self.n_sensors;
        self.data.iter().enumerate().map(move |(i, &value)| Reading {
            sensor_id: i % n,
            t: (i / n) as u64,
            value,
        })
    }
}

/// Per-sensor, per-step binary ground truth (0 normal, 1 anomalous).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTrack {
    n_sensors: usize,
    data: Vec<u8>,
}

impl LabelTrack {
    pub fn zeros(steps: usize, n_sensors: usize) -> Self {
        Self {
            n_sensors,
            data: vec![0; steps * n_sensors],
        }
    }

    pub fn from_rows(n_sensors: usize, data: Vec<u8>) -> Result<Self> {
        if n_sensors == 0 || data.len() % n_sensors != 0 {
            return Err(Error::DimMismatch {
                expected: n_sensors,
                got: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::invalid("label", format!("{bad} is not 0 or 1")));
        }
        Ok(Self { n_sensors, data })
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn steps(&self) -> usize {
        self.data.len() / self.n_sensors
    }

    pub fn get(&self, t: usize, sensor: usize) -> u8 {
        self.data[t * self.n_sensors + sensor]
    }

    pub fn set(&mut self, t: usize, sensor: usize, label: bool) {
        self.data[t * self.n_sensors + sensor] = label as u8;
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.n_sensors..(t + 1) * self.n_sensors]
    }

    pub fn column(&self, sensor: usize) -> Vec<u8> {
        (0..self.steps()).map(|t| self.get(t, sensor)).collect()
    }

    pub fn count(&self, sensor: usize) -> usize {
        (0..self.steps()).filter(|&t| self.get(t, sensor) == 1).count()
    }

    pub fn total(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn matches_shape(&self, readings: &ReadingMatrix) -> bool {
        self.n_sensors == readings.n_sensors() && self.steps() == readings.steps()
    }

    /// True when any label in rows `[start, end)` is set.
    pub fn any_in(&self, start: usize, end: usize) -> bool {
        self.data[start * self.n_sensors..end * self.n_sensors]
            .iter()
            .any(|&v| v == 1)
    }
}

/// Builds the pooled training matrix of every stride-`stride` window in rows
/// `[start, end)`, from all sensors, normalized with `stats`. Rows are
/// sensor-major.
pub fn pooled_windows(
    readings: &ReadingMatrix,
    stats: &NormStats,
    window: usize,
    start: usize,
    end: usize,
    stride: usize,
) -> Vec<Vec<f64>> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    if end < start + window {
        return out;
    }
    for s in 0..readings.n_sensors() {
        let col: Vec<f64> = (start..end)
            .map(|t| stats.normalize_value(s, readings.get(t, s)))
            .collect();
        let mut i = 0;
        while i + window <= col.len() {
            out.push(col[i..i + window].to_vec());
            i += stride;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(cap: usize, vals: &[f64]) -> SensorWindow {
        let mut w = SensorWindow::new(cap);
        vals.iter().for_each(|&v| w.push(v));
        w
    }

    #[test]
    fn push_evicts_oldest_when_full() {
        let mut w = filled(3, &[1.0, 2.0, 3.0]);
        w.push(4.0);
        assert_eq!(w.snapshot().unwrap(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn push_grows_until_full() {
        let w = filled(3, &[1.0, 2.0]);
        assert_eq!(w.iter().collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert!(!w.is_full());
    }

    #[test]
    fn replay_of_150_values_keeps_last_100() {
        let seq: Vec<f64> = (0..150).map(|v| v as f64).collect();
        let w = filled(100, &seq);
        assert_eq!(w.snapshot().unwrap(), seq[50..].to_vec());
    }

    #[test]
    fn snapshot_requires_full_window() {
        let w = filled(4, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            w.snapshot(),
            Err(Error::NotFull { len: 3, capacity: 4 })
        ));
    }

    #[test]
    fn consecutive_snapshots_overlap_by_w_minus_one() {
        let mut w = filled(5, &[10.0, 20.0, 30.0, 40.0, 50.0]);
        let a = w.snapshot().unwrap();
        w.push(60.0);
        let b = w.snapshot().unwrap();
        assert_eq!(a[1..], b[..4]);
    }

    #[test]
    fn normalize_centers_and_scales() {
        let stats = NormStats {
            mean: vec![50.0],
            std: vec![5.0],
        };
        assert_eq!(stats.normalize(&[50.0; 4], 0), vec![0.0; 4]);
        let id = NormStats::identity(1);
        assert_eq!(id.normalize(&[1.5, -2.0], 0), vec![1.5, -2.0]);
    }

    #[test]
    fn constant_training_segment_hits_std_floor() {
        let m = ReadingMatrix::from_rows(1, vec![3.0; 10]).unwrap();
        let stats = NormStats::fit(&m, 0, 10).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        assert!(stats.normalize_value(0, 3.0).is_finite());
    }

    #[test]
    fn labels_reject_non_binary() {
        assert!(LabelTrack::from_rows(2, vec![0, 1, 2, 0]).is_err());
    }

    #[test]
    fn pooled_windows_counts() {
        let m = ReadingMatrix::from_rows(2, (0..40).map(|v| v as f64).collect()).unwrap();
        let stats = NormStats::identity(2);
        let w = pooled_windows(&m, &stats, 5, 0, 20, 1);
        assert_eq!(w.len(), 2 * 16);
        assert_eq!(w[0], vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(w[16][0], 1.0);
        assert_eq!(pooled_windows(&m, &stats, 5, 0, 20, 4).len(), 2 * 4);
    }
}
