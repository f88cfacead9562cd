//! Synthetic sensor scenarios: Gaussian baselines plus the fault injectors
//! (mean shift, erasure, distribution swap with probability `p`, and the
//! alternating bin shift).
//!
//! Randomness comes from PCG-64 (`rand_pcg::Pcg64`, 128-bit LCG state with
//! XSL-RR output), which is value-stable across platforms. The baseline and
//! the injector draw from two independently seeded streams, so the same seed
//! gives the same baseline no matter which fault is injected.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt, SeedableRng};
use rand_distr::{Distribution, Normal, Poisson};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::stream::{LabelTrack, ReadingMatrix};

/// Mixed into the scenario seed to derive the injector stream.
const INJECT_STREAM: u64 = 0xa076_1d64_78bd_642f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Normal,
    /// Uniform on `[mean − sd·√3, mean + sd·√3]`, so its std equals `sd`.
    Uniform,
    /// Poisson with rate `mean`; `sd` is ignored.
    Poisson,
    /// The constant `mean`.
    Point,
}

impl DistKind {
    pub const ALL: [DistKind; 4] = [Self::Normal, Self::Uniform, Self::Poisson, Self::Point];

    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Uniform => "uniform",
            Self::Poisson => "poisson",
            Self::Point => "point",
        }
    }
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("dist", format!("unknown distribution {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistKind,
    pub mean: f64,
    pub sd: f64,
}

impl DistributionSpec {
    pub fn new(kind: DistKind, mean: f64, sd: f64) -> Self {
        Self { kind, mean, sd }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(Error::invalid("dist_mean", "must be finite"));
        }
        match self.kind {
            DistKind::Normal | DistKind::Uniform if !(self.sd > 0.0 && self.sd.is_finite()) => {
                Err(Error::invalid("dist_sd", "must be positive"))
            }
            DistKind::Poisson if !(self.mean > 0.0) => {
                Err(Error::invalid("dist_mean", "Poisson rate must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            DistKind::Normal => Normal::new(self.mean, self.sd)
                .expect("validated normal")
                .sample(rng),
            DistKind::Uniform => {
                let half = self.sd * 3f64.sqrt();
                rng.random_range(self.mean - half..self.mean + half)
            }
            DistKind::Poisson => Poisson::new(self.mean).expect("validated rate").sample(rng),
            DistKind::Point => self.mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnomalyKind {
    None,
    MeanShift { delta: f64 },
    Erasure { rate: f64 },
    Distribution { dist: DistributionSpec, p: f64 },
    BinShift { bin_size: usize, delta: f64 },
    /// `delta` added to the last `rate` share of every bin from the onset on.
    RateShift { bin_size: usize, rate: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_sensors: usize,
    pub steps: usize,
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub anomaly_sensor: usize,
    pub anomaly_start: usize,
    pub anomaly: AnomalyKind,
    pub seed: u64,
}

/// Generated readings with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub readings: ReadingMatrix,
    pub labels: LabelTrack,
}

impl ScenarioSpec {
    /// Four Normal(50, 5) sensors over 500 steps, fault on sensor 3 from
    /// step 250.
    pub fn fig1(anomaly: AnomalyKind, seed: u64) -> Self {
        Self {
            n_sensors: 4,
            steps: 500,
            baseline_mean: 50.0,
            baseline_sd: 5.0,
            anomaly_sensor: 3,
            anomaly_start: 250,
            anomaly,
            seed,
        }
    }

    /// 6000 steps, sensor 3 shifted by 10 in every other 1000-step bin.
    pub fn bin_shift(seed: u64) -> Self {
        Self {
            n_sensors: 4,
            steps: 6000,
            baseline_mean: 50.0,
            baseline_sd: 5.0,
            anomaly_sensor: 3,
            anomaly_start: 0,
            anomaly: AnomalyKind::BinShift {
                bin_size: 1000,
                delta: 10.0,
            },
            seed,
        }
    }

    /// 2000 steps, sensor 3 shifted by 10 on `rate` of each 1000-step bin.
    /// Bins much longer than the window keep the share of windows that see
    /// the fault roughly proportional to `rate`.
    pub fn rate_shift(rate: f64, seed: u64) -> Self {
        Self {
            n_sensors: 4,
            steps: 2000,
            baseline_mean: 50.0,
            baseline_sd: 5.0,
            anomaly_sensor: 3,
            anomaly_start: 0,
            anomaly: AnomalyKind::RateShift {
                bin_size: 1000,
                rate,
                delta: 10.0,
            },
            seed,
        }
    }

    /// Named presets: `fig1-normal`, `fig1-<dist>-<mean>`, `fig1-shift-<Δ>`,
    /// `fig1-erasure-<percent>`, `binshift-<steps>`, `rateshift-<percent>`.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let unknown = || Error::invalid("preset", format!("unknown preset {name:?}"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| unknown());
        let parts: Vec<&str> = name.split('-').collect();
        match parts.as_slice() {
            ["fig1", "normal"] => Ok(Self::fig1(AnomalyKind::None, seed)),
            ["fig1", "shift", d] => Ok(Self::fig1(AnomalyKind::MeanShift { delta: num(d)? }, seed)),
            ["fig1", "erasure", pct] => Ok(Self::fig1(
                AnomalyKind::Erasure {
                    rate: num(pct)? / 100.0,
                },
                seed,
            )),
            ["fig1", dist, mean] => {
                let kind: DistKind = dist.parse().map_err(|_| unknown())?;
                Ok(Self::fig1(
                    AnomalyKind::Distribution {
                        dist: DistributionSpec::new(kind, num(mean)?, 5.0),
                        p: 1.0,
                    },
                    seed,
                ))
            }
            ["rateshift", pct] => Ok(Self::rate_shift(num(pct)? / 100.0, seed)),
            ["binshift", steps] => {
                let steps = steps.parse::<usize>().map_err(|_| unknown())?;
                Ok(Self {
                    steps,
                    ..Self::bin_shift(seed)
                })
            }
            _ => Err(unknown()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sensors == 0 {
            return Err(Error::invalid("n_sensors", "must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be positive"));
        }
        if !(self.baseline_sd >= 0.0 && self.baseline_sd.is_finite()) {
            return Err(Error::invalid("baseline_sd", "must be non-negative"));
        }
        if !self.baseline_mean.is_finite() {
            return Err(Error::invalid("baseline_mean", "must be finite"));
        }
        if self.anomaly_sensor >= self.n_sensors {
            return Err(Error::invalid(
                "anomaly_sensor",
                format!("{} is not below n_sensors {}", self.anomaly_sensor, self.n_sensors),
            ));
        }
        if self.anomaly_start >= self.steps {
            return Err(Error::invalid(
                "anomaly_start",
                format!("{} is not below steps {}", self.anomaly_start, self.steps),
            ));
        }
        match &self.anomaly {
            AnomalyKind::None => {}
            AnomalyKind::MeanShift { delta } if !delta.is_finite() => {
                return Err(Error::invalid("delta", "must be finite"))
            }
            AnomalyKind::Erasure { rate } if !(0.0..=1.0).contains(rate) => {
                return Err(Error::invalid("rate", format!("{rate} is outside [0, 1]")))
            }
            AnomalyKind::Distribution { dist, p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::invalid("p", format!("{p} is outside [0, 1]")));
                }
                dist.validate()?;
            }
            AnomalyKind::BinShift { bin_size, delta } => {
                if *bin_size == 0 {
                    return Err(Error::invalid("bin_size", "must be positive"));
                }
                if !delta.is_finite() {
                    return Err(Error::invalid("delta", "must be finite"));
                }
            }
            AnomalyKind::RateShift { bin_size, rate, delta } => {
                if *bin_size == 0 {
                    return Err(Error::invalid("bin_size", "must be positive"));
                }
                if !(0.0..=1.0).contains(rate) {
                    return Err(Error::invalid("rate", format!("{rate} is outside [0, 1]")));
                }
                if !delta.is_finite() {
                    return Err(Error::invalid("delta", "must be finite"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Scenario> {
        self.validate()?;
        let (mut readings, mut labels) = gen_baseline(
            self.n_sensors,
            self.steps,
            self.baseline_mean,
            self.baseline_sd,
            self.seed,
        )?;
        let mut rng = Pcg64::seed_from_u64(self.seed ^ INJECT_STREAM);
        let (s, start) = (self.anomaly_sensor, self.anomaly_start);
        match &self.anomaly {
            AnomalyKind::None => {}
            AnomalyKind::MeanShift { delta } => {
                inject_mean_shift(&mut readings, &mut labels, s, start, *delta)
            }
            AnomalyKind::Erasure { rate } => {
                inject_erasure(&mut readings, &mut labels, s, start, *rate, &mut rng)
            }
            AnomalyKind::Distribution { dist, p } => {
                inject_distribution(&mut readings, &mut labels, s, start, dist, *p, &mut rng)
            }
            AnomalyKind::BinShift { bin_size, delta } => {
                inject_bin_shift(&mut readings, &mut labels, s, *bin_size, *delta)
            }
            AnomalyKind::RateShift { bin_size, rate, delta } => {
                inject_rate_shift(&mut readings, &mut labels, s, start, *bin_size, *rate, *delta)
            }
        }
        Ok(Scenario { readings, labels })
    }

    pub const KEYS: &'static [&'static str] = &[
        "preset",
        "n_sensors",
        "steps",
        "baseline_mean",
        "baseline_sd",
        "anomaly_sensor",
        "anomaly_start",
        "anomaly",
        "delta",
        "rate",
        "dist",
        "dist_mean",
        "dist_sd",
        "p",
        "bin_size",
        "seed",
    ];

    /// Reads a scenario from `key = value` text. A `preset` key provides
    /// defaults that the remaining keys override.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        kv.check_keys(Self::KEYS)?;
        let seed = kv.parsed::<u64>("seed")?.unwrap_or(0);
        let mut spec = match kv.get("preset") {
            Some(p) => Self::preset(p, seed)?,
            None => Self::fig1(AnomalyKind::None, seed),
        };
        macro_rules! set {
            ($field:ident, $ty:ty) => {
                if let Some(v) = kv.parsed::<$ty>(stringify!($field))? {
                    spec.$field = v;
                }
            };
        }
        set!(n_sensors, usize);
        set!(steps, usize);
        set!(baseline_mean, f64);
        set!(baseline_sd, f64);
        set!(anomaly_sensor, usize);
        set!(anomaly_start, usize);

        let kind = kv.get("anomaly").map(str::to_owned);
        let need = |key: &str, cur: Option<f64>| -> Result<f64> {
            match kv.parsed::<f64>(key)? {
                Some(v) => Ok(v),
                None => cur.ok_or_else(|| Error::invalid(key, "required for this anomaly kind")),
            }
        };
        let anomaly = match kind.as_deref() {
            None => {
                // keep the preset's kind but allow parameter overrides
                match spec.anomaly.clone() {
                    AnomalyKind::None => AnomalyKind::None,
                    AnomalyKind::MeanShift { delta } => AnomalyKind::MeanShift {
                        delta: need("delta", Some(delta))?,
                    },
                    AnomalyKind::Erasure { rate } => AnomalyKind::Erasure {
                        rate: need("rate", Some(rate))?,
                    },
                    AnomalyKind::Distribution { dist, p } => AnomalyKind::Distribution {
                        dist: DistributionSpec {
                            kind: kv.parsed::<DistKind>("dist")?.unwrap_or(dist.kind),
                            mean: need("dist_mean", Some(dist.mean))?,
                            sd: need("dist_sd", Some(dist.sd))?,
                        },
                        p: need("p", Some(p))?,
                    },
                    AnomalyKind::BinShift { bin_size, delta } => AnomalyKind::BinShift {
                        bin_size: kv.parsed::<usize>("bin_size")?.unwrap_or(bin_size),
                        delta: need("delta", Some(delta))?,
                    },
                    AnomalyKind::RateShift { bin_size, rate, delta } => AnomalyKind::RateShift {
                        bin_size: kv.parsed::<usize>("bin_size")?.unwrap_or(bin_size),
                        rate: need("rate", Some(rate))?,
                        delta: need("delta", Some(delta))?,
                    },
                }
            }
            Some("none") => AnomalyKind::None,
            Some("mean_shift") => AnomalyKind::MeanShift {
                delta: need("delta", None)?,
            },
            Some("erasure") => AnomalyKind::Erasure {
                rate: need("rate", None)?,
            },
            Some("distribution") => AnomalyKind::Distribution {
                dist: DistributionSpec {
                    kind: kv
                        .parsed::<DistKind>("dist")?
                        .ok_or_else(|| Error::invalid("dist", "required for distribution anomalies"))?,
                    mean: need("dist_mean", None)?,
                    sd: need("dist_sd", Some(5.0))?,
                },
                p: need("p", Some(1.0))?,
            },
            Some("bin_shift") => AnomalyKind::BinShift {
                bin_size: kv
                    .parsed::<usize>("bin_size")?
                    .ok_or_else(|| Error::invalid("bin_size", "required for bin_shift"))?,
                delta: need("delta", None)?,
            },
            Some("rate_shift") => AnomalyKind::RateShift {
                bin_size: kv
                    .parsed::<usize>("bin_size")?
                    .ok_or_else(|| Error::invalid("bin_size", "required for rate_shift"))?,
                rate: need("rate", None)?,
                delta: need("delta", None)?,
            },
            Some(other) => return Err(Error::invalid("anomaly", format!("unknown kind {other:?}"))),
        };
        let used: &[&str] = match &anomaly {
            AnomalyKind::None => &[],
            AnomalyKind::MeanShift { .. } => &["delta"],
            AnomalyKind::Erasure { .. } => &["rate"],
            AnomalyKind::Distribution { .. } => &["dist", "dist_mean", "dist_sd", "p"],
            AnomalyKind::BinShift { .. } => &["bin_size", "delta"],
            AnomalyKind::RateShift { .. } => &["bin_size", "rate", "delta"],
        };
        for key in ["delta", "rate", "dist", "dist_mean", "dist_sd", "p", "bin_size"] {
            if kv.get(key).is_some() && !used.contains(&key) {
                return Err(Error::invalid(key, "does not apply to this anomaly kind"));
            }
        }
        spec.anomaly = anomaly;
        spec.validate()?;
        Ok(spec)
    }

    /// Inverse of [`ScenarioSpec::from_kv`] (without presets).
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.insert("n_sensors", self.n_sensors.to_string());
        kv.insert("steps", self.steps.to_string());
        kv.insert("baseline_mean", self.baseline_mean.to_string());
        kv.insert("baseline_sd", self.baseline_sd.to_string());
        kv.insert("anomaly_sensor", self.anomaly_sensor.to_string());
        kv.insert("anomaly_start", self.anomaly_start.to_string());
        kv.insert("seed", self.seed.to_string());
        match &self.anomaly {
            AnomalyKind::None => kv.insert("anomaly", "none"),
            AnomalyKind::MeanShift { delta } => {
                kv.insert("anomaly", "mean_shift");
                kv.insert("delta", delta.to_string());
            }
            AnomalyKind::Erasure { rate } => {
                kv.insert("anomaly", "erasure");
                kv.insert("rate", rate.to_string());
            }
            AnomalyKind::Distribution { dist, p } => {
                kv.insert("anomaly", "distribution");
                kv.insert("dist", dist.kind.name());
                kv.insert("dist_mean", dist.mean.to_string());
                kv.insert("dist_sd", dist.sd.to_string());
                kv.insert("p", p.to_string());
            }
            AnomalyKind::BinShift { bin_size, delta } => {
                kv.insert("anomaly", "bin_shift");
                kv.insert("bin_size", bin_size.to_string());
                kv.insert("delta", delta.to_string());
            }
            AnomalyKind::RateShift { bin_size, rate, delta } => {
                kv.insert("anomaly", "rate_shift");
                kv.insert("bin_size", bin_size.to_string());
                kv.insert("rate", rate.to_string());
                kv.insert("delta", delta.to_string());
            }
        }
        kv
    }
}

/// I.i.d. Normal(mean, sd) readings for every sensor; all labels 0.
pub fn gen_baseline(
    n_sensors: usize,
    steps: usize,
    mean: f64,
    sd: f64,
    seed: u64,
) -> Result<(ReadingMatrix, LabelTrack)> {
    let normal = Normal::new(mean, sd).map_err(|e| Error::invalid("baseline_sd", e.to_string()))?;
    let mut rng = Pcg64::seed_from_u64(seed);
    let data: Vec<f64> = (0..steps * n_sensors).map(|_| normal.sample(&mut rng)).collect();
    Ok((
        ReadingMatrix::from_rows(n_sensors, data)?,
        LabelTrack::zeros(steps, n_sensors),
    ))
}

/// Adds `delta` to `sensor` from `start` on and labels that whole range.
pub fn inject_mean_shift(
    readings: &mut ReadingMatrix,
    labels: &mut LabelTrack,
    sensor: usize,
    start: usize,
    delta: f64,
) {
    for t in start..readings.steps() {
        readings.set(t, sensor, readings.get(t, sensor) + delta);
        labels.set(t, sensor, true);
    }
}

/// From `start` on, zeroes each reading independently with probability
/// `rate`; only zeroed steps are labeled.
pub fn inject_erasure<R: Rng + ?Sized>(
    readings: &mut ReadingMatrix,
    labels: &mut LabelTrack,
    sensor: usize,
    start: usize,
    rate: f64,
    rng: &mut R,
) {
    for t in start..readings.steps() {
        if rng.random_bool(rate) {
            readings.set(t, sensor, 0.0);
            labels.set(t, sensor, true);
        }
    }
}

/// From `start` on, redraws each reading from `dist` with probability `p`;
/// only redrawn steps are labeled.
pub fn inject_distribution<R: Rng + ?Sized>(
    readings: &mut ReadingMatrix,
    labels: &mut LabelTrack,
    sensor: usize,
    start: usize,
    dist: &DistributionSpec,
    p: f64,
    rng: &mut R,
) {
    for t in start..readings.steps() {
        if rng.random_bool(p) {
            readings.set(t, sensor, dist.sample(rng));
            labels.set(t, sensor, true);
        }
    }
}

/// Splits the stream into `bin_size` bins numbered from 0 and adds `delta`
/// throughout the odd-numbered ones (a trailing partial bin follows its
/// parity). Shifted bins are labeled in full.
pub fn inject_bin_shift(
    readings: &mut ReadingMatrix,
    labels: &mut LabelTrack,
    sensor: usize,
    bin_size: usize,
    delta: f64,
) {
    for t in 0..readings.steps() {
        if (t / bin_size) % 2 == 1 {
            readings.set(t, sensor, readings.get(t, sensor) + delta);
            labels.set(t, sensor, true);
        }
    }
}

/// Shifts `sensor` by `delta` on a fraction `rate` of every `bin_size`-step
/// bin (the tail of each bin), giving a stream whose anomalous share is
/// `rate`. Used for the response-time experiment.
pub fn inject_rate_shift(
    readings: &mut ReadingMatrix,
    labels: &mut LabelTrack,
    sensor: usize,
    start: usize,
    bin_size: usize,
    rate: f64,
    delta: f64,
) {
    let shifted = ((bin_size as f64) * rate.clamp(0.0, 1.0)).round() as usize;
    for t in start..readings.steps() {
        let pos = (t - start) % bin_size;
        if pos >= bin_size - shifted {
            readings.set(t, sensor, readings.get(t, sensor) + delta);
            labels.set(t, sensor, true);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(seed: u64) -> (ReadingMatrix, LabelTrack) {
        gen_baseline(4, 500, 50.0, 5.0, seed).unwrap()
    }

    #[test]
    fn baseline_is_seeded_and_centered() {
        let (a, la) = base(11);
        let (b, _) = base(11);
        assert_eq!(a, b);
        assert_eq!(la.total(), 0);
        let tol = 4.0 * 5.0 / (500f64).sqrt();
        for s in 0..4 {
            let m = a.column(s).iter().sum::<f64>() / 500.0;
            assert!((m - 50.0).abs() < tol, "sensor {s} mean {m}");
        }
    }

    #[test]
    fn tiny_sd_is_fine() {
        let (a, _) = gen_baseline(2, 50, 50.0, 1e-12, 1).unwrap();
        assert!(a.as_slice().iter().all(|v| (v - 50.0).abs() < 1e-9));
    }

    #[test]
    fn mean_shift_adds_delta_and_labels_range() {
        let mut m = ReadingMatrix::from_rows(1, vec![20.0; 10]).unwrap();
        let mut l = LabelTrack::zeros(10, 1);
        inject_mean_shift(&mut m, &mut l, 0, 4, 5.0);
        assert_eq!(m.get(3, 0), 20.0);
        assert_eq!(m.get(4, 0), 25.0);
        assert_eq!(l.count(0), 6);
    }

    #[test]
    fn zero_shift_still_labels() {
        let (mut m, mut l) = base(2);
        let before = m.clone();
        inject_mean_shift(&mut m, &mut l, 3, 250, 0.0);
        assert_eq!(m, before);
        assert_eq!(l.count(3), 250);
    }

    #[test]
    fn erasure_extremes() {
        let mut rng = Pcg64::seed_from_u64(0);
        let (mut m, mut l) = base(3);
        let before = m.clone();
        inject_erasure(&mut m, &mut l, 3, 250, 0.0, &mut rng);
        assert_eq!(m, before);
        inject_erasure(&mut m, &mut l, 3, 250, 1.0, &mut rng);
        assert!((250..500).all(|t| m.get(t, 3) == 0.0));
        assert_eq!(l.count(3), 250);
        for s in 0..3 {
            assert_eq!(m.column(s), before.column(s));
        }
    }

    #[test]
    fn point_distribution_with_certainty() {
        let mut rng = Pcg64::seed_from_u64(0);
        let (mut m, mut l) = base(4);
        let d = DistributionSpec::new(DistKind::Point, 90.0, 5.0);
        inject_distribution(&mut m, &mut l, 3, 250, &d, 1.0, &mut rng);
        assert!((250..500).all(|t| m.get(t, 3) == 90.0));
        assert!((0..250).all(|t| m.get(t, 3) != 90.0));
        let (mut m2, mut l2) = base(4);
        inject_distribution(&mut m2, &mut l2, 3, 250, &d, 0.0, &mut rng);
        assert_eq!(m2, base(4).0);
        assert_eq!(l2.total(), 0);
    }

    #[test]
    fn bin_shift_halves() {
        let (mut m, mut l) = gen_baseline(4, 6000, 50.0, 5.0, 9).unwrap();
        let before = m.clone();
        inject_bin_shift(&mut m, &mut l, 3, 1000, 10.0);
        assert_eq!(l.count(3), 3000);
        assert_eq!(m.get(999, 3), before.get(999, 3));
        assert_eq!(m.get(1000, 3), before.get(1000, 3) + 10.0);
        assert_eq!(l.total(), 3000);

        let (mut m, mut l) = gen_baseline(1, 10, 0.0, 1.0, 9).unwrap();
        let before = m.clone();
        inject_bin_shift(&mut m, &mut l, 0, 5, 0.0);
        assert_eq!(m, before);
        assert_eq!(l.column(0), vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn partial_last_bin_follows_parity() {
        let (mut m, mut l) = gen_baseline(1, 12, 0.0, 1.0, 1).unwrap();
        inject_bin_shift(&mut m, &mut l, 0, 5, 1.0);
        assert_eq!(l.column(0), vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn rate_shift_fraction() {
        for (rate, want) in [(0.2, 1200), (1.0, 6000), (0.55, 3300)] {
            let (mut m, mut l) = gen_baseline(4, 6000, 50.0, 5.0, 1).unwrap();
            inject_rate_shift(&mut m, &mut l, 3, 0, 1000, rate, 10.0);
            assert_eq!(l.count(3), want);
        }
    }

    #[test]
    fn uniform_has_requested_sd() {
        let d = DistributionSpec::new(DistKind::Uniform, 50.0, 5.0);
        let mut rng = Pcg64::seed_from_u64(5);
        let xs: Vec<f64> = (0..20000).map(|_| d.sample(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((sd - 5.0).abs() < 0.1, "{sd}");
    }

    #[test]
    fn presets_and_validation() {
        let s = ScenarioSpec::preset("fig1-normal-80", 1).unwrap();
        let sc = s.generate().unwrap();
        assert_eq!(sc.readings.steps(), 500);
        assert_eq!(sc.labels.count(3), 250);
        let b = ScenarioSpec::preset("binshift-6000", 1).unwrap().generate().unwrap();
        assert_eq!(b.labels.count(3), 3000);
        assert!(ScenarioSpec::preset("fig2", 1).is_err());

        let mut bad = ScenarioSpec::preset("fig1-normal-80", 1).unwrap();
        bad.anomaly = AnomalyKind::Distribution {
            dist: DistributionSpec::new(DistKind::Normal, 80.0, 5.0),
            p: 1.5,
        };
        let err = bad.validate().unwrap_err();
        assert!(matches!(err, Error::Invalid { ref field, .. } if field == "p"));
    }

    #[test]
    fn kv_round_trip() {
        let s = ScenarioSpec::preset("fig1-uniform-31", 8).unwrap();
        let back = ScenarioSpec::from_kv(&s.to_kv()).unwrap();
        assert_eq!(s, back);
        let kv = KvMap::parse("preset = fig1-shift-40\ndelta = 5\nseed = 3").unwrap();
        let s = ScenarioSpec::from_kv(&kv).unwrap();
        assert_eq!(s.anomaly, AnomalyKind::MeanShift { delta: 5.0 });
        assert_eq!(s.seed, 3);
        assert!(ScenarioSpec::from_kv(&KvMap::parse("bogus = 1").unwrap()).is_err());
        let r = ScenarioSpec::preset("rateshift-30", 2).unwrap();
        assert_eq!(ScenarioSpec::from_kv(&r.to_kv()).unwrap(), r);
        let sc = r.generate().unwrap();
        assert_eq!(sc.labels.count(3), 600);
    }
}
