//! Experiment drivers: mean and probability sweeps, the per-step runtime
//! benchmark and the response-time reduction curve.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detector::{train_models, PipelineConfig, TrainedModels, TrainingReport};
use crate::error::{Error, Result};
use crate::eval::{confusion, prf1, pearson_r, step_labels, ConfusionCounts, LabelMode, Prf1};
use crate::hybrid::{run_stream, DetectorKind, StreamRun, TimingStats};
use crate::io::Provenance;
use crate::stream::{LabelTrack, ReadingMatrix};
use crate::synth::{AnomalyKind, DistKind, DistributionSpec, Scenario, ScenarioSpec};

/// Independent, reproducible seed for grid point `index` (SplitMix64 mix).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Odd means 1, 3, ..., 99.
pub fn odd_means() -> Vec<f64> {
    (0..50).map(|i| (2 * i + 1) as f64).collect()
}

/// `0, 0.02, ..., 1`, or `0, 0.002, ..., 0.1` when zoomed.
pub fn probability_grid(zoom: bool) -> Vec<f64> {
    let den = if zoom { 500.0 } else { 50.0 };
    (0..=50).map(|i| i as f64 / den).collect()
}

/// Ten anomaly rates spaced evenly from 20% to 100%.
pub fn reduction_rates() -> Vec<f64> {
    (0..10).map(|i| 0.2 + 0.8 * i as f64 / 9.0).collect()
}

/// Maps `f` over `items` on up to `jobs` scoped threads, keeping order.
pub fn par_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync,
{
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, x)| f(c * chunk + j, x))
                        .collect::<Result<Vec<R>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("sweep worker panicked")?);
        }
        Ok(out)
    })
}

/// Anomaly-free four-sensor stream used to train models for the experiments.
pub fn baseline_spec(steps: usize, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        steps,
        anomaly_start: 0,
        ..ScenarioSpec::fig1(AnomalyKind::None, seed)
    }
}

/// Trains on a fresh `baseline_spec(steps, seed)` stream.
pub fn train_on_baseline(cfg: &PipelineConfig, steps: usize, seed: u64) -> Result<(TrainedModels, TrainingReport)> {
    let sc = baseline_spec(steps, seed).generate()?;
    train_models(&sc.readings, 0, steps, cfg)
}

/// Scores each scenario and sums the confusion counts per detector.
pub fn pooled_scores(
    models: &TrainedModels,
    specs: &[ScenarioSpec],
    kinds: &[DetectorKind],
    mode: LabelMode,
    jobs: usize,
) -> Result<Vec<DetectorScore>> {
    let per = par_map(specs, jobs, |_, spec| {
        let sc = spec.generate()?;
        score_scenario(models, &sc, spec.anomaly_sensor, kinds, mode)
    })?;
    let mut pooled: Vec<DetectorScore> = per.first().cloned().unwrap_or_default();
    for scores in per.iter().skip(1) {
        for (acc, s) in pooled.iter_mut().zip(scores) {
            acc.counts.add(s.counts);
            acc.mean_step_ns += s.mean_step_ns;
            acc.ae_invocations += s.ae_invocations;
        }
    }
    for acc in &mut pooled {
        acc.metrics = prf1(acc.counts);
        acc.mean_step_ns /= per.len().max(1) as f64;
    }
    Ok(pooled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeBand {
    pub low: f64,
    pub high: f64,
}

impl Default for RopeBand {
    fn default() -> Self {
        Self { low: 45.0, high: 55.0 }
    }
}

impl RopeBand {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::invalid("rope", format!("low {low} is not below high {high}")));
        }
        Ok(Self { low, high })
    }

    /// Open interval.
    pub fn contains(&self, x: f64) -> bool {
        x > self.low && x < self.high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    pub kind: DetectorKind,
    pub counts: ConfusionCounts,
    pub metrics: Prf1,
    pub mean_step_ns: f64,
    pub ae_invocations: u64,
}

impl DetectorScore {
    fn from_run(run: &StreamRun, truth: &[u8], sensor: usize) -> Result<Self> {
        let (flags, labels): (Vec<u8>, Vec<u8>) = run
            .flag_track(sensor)
            .into_iter()
            .zip(truth)
            .filter_map(|(f, &l)| f.map(|f| (f, l)))
            .unzip();
        let counts = confusion(&flags, &labels)?;
        Ok(Self {
            kind: run.kind,
            counts,
            metrics: prf1(counts),
            mean_step_ns: run.timing.mean_ns,
            ae_invocations: run.counters.ae_invocations,
        })
    }
}

/// Runs every detector in `kinds` over one scenario and scores `sensor`.
pub fn score_scenario(
    models: &TrainedModels,
    scenario: &Scenario,
    sensor: usize,
    kinds: &[DetectorKind],
    mode: LabelMode,
) -> Result<Vec<DetectorScore>> {
    let truth = step_labels(&scenario.labels, sensor, models.window, mode);
    kinds
        .iter()
        .map(|&k| {
            let run = run_stream(k, &scenario.readings, models)?;
            DetectorScore::from_run(&run, &truth, sensor)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Mean,
    P,
    AnomalyRate,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::P => "p",
            Self::AnomalyRate => "anomaly_rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub seed: u64,
    pub scores: Vec<DetectorScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RopeSummary {
    pub inside_mean_f1: f64,
    pub outside_mean_f1: f64,
    pub inside_points: usize,
    pub outside_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub variable: SweepVariable,
    pub label_mode: String,
    pub distribution: Option<DistKind>,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn kinds(&self) -> Vec<DetectorKind> {
        self.points
            .first()
            .map(|p| p.scores.iter().map(|s| s.kind).collect())
            .unwrap_or_default()
    }

    pub fn score(&self, point: usize, kind: DetectorKind) -> Option<&DetectorScore> {
        self.points.get(point)?.scores.iter().find(|s| s.kind == kind)
    }

    pub fn f1_series(&self, kind: DetectorKind) -> Vec<f64> {
        (0..self.points.len())
            .map(|i| self.score(i, kind).map_or(0.0, |s| s.metrics.f1))
            .collect()
    }

    /// Smallest grid value whose F1 exceeds `threshold`.
    pub fn onset(&self, kind: DetectorKind, threshold: f64) -> Option<f64> {
        self.points
            .iter()
            .zip(self.f1_series(kind))
            .find(|(_, f1)| *f1 > threshold)
            .map(|(p, _)| p.value)
    }

    pub fn rope(&self, kind: DetectorKind, band: RopeBand) -> RopeSummary {
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for (p, f1) in self.points.iter().zip(self.f1_series(kind)) {
            if band.contains(p.value) {
                inside.push(f1);
            } else {
                outside.push(f1);
            }
        }
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        RopeSummary {
            inside_mean_f1: mean(&inside),
            outside_mean_f1: mean(&outside),
            inside_points: inside.len(),
            outside_points: outside.len(),
        }
    }

    /// One row per grid point; per detector precision, recall, F1 and mean
    /// step time.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: &Provenance, record_timing: bool) -> Result<()> {
        provenance.write(&mut out)?;
        let kinds = self.kinds();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.variable.name().to_string(), "seed".to_string()];
        for k in &kinds {
            for col in ["precision", "recall", "f1", "tp", "fp", "fn", "tn", "mean_step_ns"] {
                header.push(format!("{k}_{col}"));
            }
        }
        w.write_record(&header)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut rec = vec![p.value.to_string(), p.seed.to_string()];
            for &k in &kinds {
                let s = self.score(i, k).expect("every point scores every detector");
                let c = s.counts;
                let ns = if record_timing { s.mean_step_ns.round() } else { 0.0 };
                rec.extend([
                    format!("{:.6}", s.metrics.precision),
                    format!("{:.6}", s.metrics.recall),
                    format!("{:.6}", s.metrics.f1),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.fn_.to_string(),
                    c.tn.to_string(),
                    ns.to_string(),
                ]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "is empty"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("grid", "must be strictly increasing"));
    }
    Ok(())
}

/// For each mean, replaces the faulty sensor's post-onset readings with
/// `dist(mean, sd)` and scores every detector against the whole post-onset
/// segment.
pub fn mean_sweep(
    models: &TrainedModels,
    dist: DistKind,
    sd: f64,
    grid: &[f64],
    base: &ScenarioSpec,
    kinds: &[DetectorKind],
    master_seed: u64,
    jobs: usize,
) -> Result<SweepReport> {
    check_grid(grid)?;
    let mode = LabelMode::Segment {
        start: base.anomaly_start,
    };
    let points = par_map(grid, jobs, |i, &mean| {
            let seed = derive_seed(master_seed, i as u64);
            let spec = ScenarioSpec {
                anomaly: AnomalyKind::Distribution {
                    dist: DistributionSpec::new(dist, mean, sd),
                    p: 1.0,
                },
                seed,
                ..base.clone()
            };
            let sc = spec.generate()?;
            Ok(SweepPoint {
                value: mean,
                seed,
                scores: score_scenario(models, &sc, base.anomaly_sensor, kinds, mode)?,
            })
        })?;
    Ok(SweepReport {
        variable: SweepVariable::Mean,
        label_mode: mode.to_string(),
        distribution: Some(dist),
        points,
    })
}

/// Sweeps the anomaly probability of `base`'s erasure or distribution fault.
pub fn probability_sweep(
    models: &TrainedModels,
    grid: &[f64],
    base: &ScenarioSpec,
    kinds: &[DetectorKind],
    master_seed: u64,
    mode: LabelMode,
    jobs: usize,
) -> Result<SweepReport> {
    check_grid(grid)?;
    let points = par_map(grid, jobs, |i, &p| {
            let anomaly = match &base.anomaly {
                AnomalyKind::Erasure { .. } => AnomalyKind::Erasure { rate: p },
                AnomalyKind::Distribution { dist, .. } => AnomalyKind::Distribution { dist: *dist, p },
                other => {
                    return Err(Error::invalid(
                        "anomaly",
                        format!("probability sweeps need erasure or distribution faults, not {other:?}"),
                    ))
                }
            };
            let seed = derive_seed(master_seed, i as u64);
            let sc = ScenarioSpec {
                anomaly,
                seed,
                ..base.clone()
            }
            .generate()?;
            Ok(SweepPoint {
                value: p,
                seed,
                scores: score_scenario(models, &sc, base.anomaly_sensor, kinds, mode)?,
            })
        })?;
    Ok(SweepReport {
        variable: SweepVariable::P,
        label_mode: mode.to_string(),
        distribution: match &base.anomaly {
            AnomalyKind::Distribution { dist, .. } => Some(dist.kind),
            _ => None,
        },
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub kind: DetectorKind,
    /// Mean step time of each repetition.
    pub rep_means_ns: Vec<f64>,
    /// Median over repetitions of the per-repetition mean.
    pub mean_step_ns: f64,
    /// Median and 95th percentile of the repetition with the median mean.
    pub median_step_ns: f64,
    pub p95_step_ns: f64,
    pub evaluated_steps: u64,
    pub ae_invocations: u64,
    pub counts: Option<ConfusionCounts>,
    pub metrics: Option<Prf1>,
}

impl BenchRow {
    pub fn mean_step_ms(&self) -> f64 {
        self.mean_step_ns / 1e6
    }

    /// Copy with every wall-clock field zeroed, for reproducible output.
    pub fn without_timing(&self) -> Self {
        Self {
            rep_means_ns: vec![0.0; self.rep_means_ns.len()],
            mean_step_ns: 0.0,
            median_step_ns: 0.0,
            p95_step_ns: 0.0,
            ..self.clone()
        }
    }
}

/// Ground truth for scoring a benchmark stream.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub labels: &'a LabelTrack,
    pub sensor: usize,
    pub mode: LabelMode,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Evaluated steps in the untimed warm-up pass that precedes each benchmark.
pub const WARMUP_STEPS: usize = 300;

/// Times every detector over the same stream and models. Repetitions are
/// interleaved across detectors; warm-up steps are never timed.
pub fn bench(
    models: &TrainedModels,
    readings: &ReadingMatrix,
    truth: Option<Truth<'_>>,
    kinds: &[DetectorKind],
    reps: usize,
) -> Result<Vec<BenchRow>> {
    if reps < 3 {
        return Err(Error::invalid("reps", "need at least 3 repetitions"));
    }
    // Untimed pass over a prefix so caches and allocations are warm before
    // the first measured repetition.
    let warm = readings.slice_rows(0, readings.steps().min(models.window + WARMUP_STEPS));
    for &k in kinds {
        if warm.steps() > models.window {
            run_stream(k, &warm, models)?;
        }
    }
    let mut runs: Vec<Vec<StreamRun>> = vec![Vec::with_capacity(reps); kinds.len()];
    for _ in 0..reps {
        for (slot, &k) in runs.iter_mut().zip(kinds) {
            slot.push(run_stream(k, readings, models)?);
        }
    }
    kinds
        .iter()
        .zip(runs)
        .map(|(&kind, runs)| {
            let rep_means: Vec<f64> = runs.iter().map(|r| r.timing.mean_ns).collect();
            let mid = median(&rep_means);
            let rep = runs
                .iter()
                .min_by(|a, b| (a.timing.mean_ns - mid).abs().total_cmp(&(b.timing.mean_ns - mid).abs()))
                .expect("reps > 0");
            let stats: TimingStats = rep.timing;
            let (counts, metrics) = match truth {
                Some(t) => {
                    let labels = step_labels(t.labels, t.sensor, models.window, t.mode);
                    let s = DetectorScore::from_run(rep, &labels, t.sensor)?;
                    (Some(s.counts), Some(s.metrics))
                }
                None => (None, None),
            };
            Ok(BenchRow {
                kind,
                rep_means_ns: rep_means,
                mean_step_ns: mid,
                median_step_ns: stats.median_ns,
                p95_step_ns: stats.p95_ns,
                evaluated_steps: rep.counters.steps_evaluated,
                ae_invocations: rep.counters.ae_invocations,
                counts,
                metrics,
            })
        })
        .collect()
}

pub fn write_bench_csv<W: Write>(mut out: W, rows: &[BenchRow], provenance: &Provenance, record_timing: bool) -> Result<()> {
    provenance.write(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "detector",
        "precision",
        "recall",
        "f1",
        "mean_step_ms",
        "median_step_ms",
        "p95_step_ms",
        "evaluated_steps",
        "ae_invocations",
    ])?;
    for r in rows {
        let m = r.metrics.unwrap_or_default();
        let ms = |ns: f64| if record_timing { format!("{:.6}", ns / 1e6) } else { "0".into() };
        w.write_record([
            r.kind.name().to_string(),
            format!("{:.6}", m.precision),
            format!("{:.6}", m.recall),
            format!("{:.6}", m.f1),
            ms(r.mean_step_ns),
            ms(r.median_step_ns),
            ms(r.p95_step_ns),
            r.evaluated_steps.to_string(),
            r.ae_invocations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionPoint {
    pub rate: f64,
    pub seed: u64,
    pub ae_mean_ns: f64,
    pub hybrid_mean_ns: f64,
    /// `(ae − hybrid) / ae × 100`.
    pub reduction_pct: f64,
    /// Share of evaluated steps on which the hybrid ran the autoencoder.
    pub ae_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCurve {
    pub points: Vec<ReductionPoint>,
    pub pearson_r: f64,
}

impl ReductionCurve {
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: &Provenance, record_timing: bool) -> Result<()> {
        provenance.write(&mut out)?;
        writeln!(out, "# pearson_r={}", if record_timing { format!("{:.6}", self.pearson_r) } else { "0".into() })?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["anomaly_rate", "seed", "ae_mean_ms", "hybrid_mean_ms", "reduction_pct", "ae_share"])?;
        for p in &self.points {
            let t = |v: f64| if record_timing { format!("{v:.6}") } else { "0".into() };
            w.write_record([
                format!("{:.6}", p.rate),
                p.seed.to_string(),
                t(p.ae_mean_ns / 1e6),
                t(p.hybrid_mean_ns / 1e6),
                t(p.reduction_pct),
                format!("{:.6}", p.ae_share),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Hybrid-versus-autoencoder step-time reduction at each anomaly rate, with
/// the Pearson correlation between rate and reduction.
pub fn response_reduction_curve<F>(
    models: &TrainedModels,
    rates: &[f64],
    build: F,
    reps: usize,
    master_seed: u64,
) -> Result<ReductionCurve>
where
    F: Fn(f64, u64) -> Result<Scenario>,
{
    check_grid(rates)?;
    let kinds = [DetectorKind::Ae, DetectorKind::Hybrid];
    let mut points = Vec::with_capacity(rates.len());
    for (i, &rate) in rates.iter().enumerate() {
        let seed = derive_seed(master_seed, i as u64);
        let sc = build(rate, seed)?;
        let rows = bench(models, &sc.readings, None, &kinds, reps)?;
        let (ae, hy) = (&rows[0], &rows[1]);
        points.push(ReductionPoint {
            rate,
            seed,
            ae_mean_ns: ae.mean_step_ns,
            hybrid_mean_ns: hy.mean_step_ns,
            reduction_pct: (ae.mean_step_ns - hy.mean_step_ns) / ae.mean_step_ns * 100.0,
            ae_share: hy.ae_invocations as f64 / hy.evaluated_steps.max(1) as f64,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.rate).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.reduction_pct).collect();
    Ok(ReductionCurve {
        pearson_r: pearson_r(&xs, &ys)?,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let m = odd_means();
        assert_eq!((m.len(), m[0], m[49]), (50, 1.0, 99.0));
        let g = probability_grid(false);
        assert_eq!((g.len(), g[1], g[50]), (51, 0.02, 1.0));
        let z = probability_grid(true);
        assert_eq!((z[1], z[50]), (0.002, 0.1));
        let r = reduction_rates();
        assert_eq!(r.len(), 10);
        assert!((r[0] - 0.2).abs() < 1e-12 && (r[9] - 1.0).abs() < 1e-12);
        assert!(check_grid(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn short_baselines_are_valid() {
        let sc = baseline_spec(120, 4).generate().unwrap();
        assert_eq!(sc.readings.steps(), 120);
        assert_eq!(sc.labels.total(), 0);
    }

    #[test]
    fn seeds_differ_per_point() {
        let s: std::collections::HashSet<u64> = (0..100).map(|i| derive_seed(5, i)).collect();
        assert_eq!(s.len(), 100);
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }

    #[test]
    fn rope_band() {
        let b = RopeBand::default();
        assert!(b.contains(47.0) && !b.contains(45.0) && !b.contains(55.0));
        assert!(RopeBand::new(5.0, 5.0).is_err());
    }

    #[test]
    fn par_map_keeps_order() {
        let xs: Vec<u64> = (0..23).collect();
        for jobs in [1, 2, 4, 50] {
            let ys = par_map(&xs, jobs, |i, &x| Ok((i as u64, x * x))).unwrap();
            assert!(ys.iter().enumerate().all(|(i, &(j, y))| j == i as u64 && y == (i * i) as u64));
        }
        let err = par_map(&xs, 3, |i, _| if i == 17 { Err(Error::invalid("x", "boom")) } else { Ok(i) });
        assert!(err.is_err());
    }

    #[test]
    fn median_of_means() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
