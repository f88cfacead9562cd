//! The `corrsense` command line: synthesis, ingestion, training, streaming
//! detection, evaluation sweeps and benchmarks.
//!
//! Exit codes: 0 success, 2 validation failure, 3 runtime failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::detector::{train_models, TrainedModels};
use crate::error::{Error, Result};
use crate::eval::{score_run, LabelMode};
use crate::experiment::{
    bench, derive_seed, odd_means, pooled_scores, probability_grid, probability_sweep, reduction_rates,
    response_reduction_curve, train_on_baseline, write_bench_csv, mean_sweep, DetectorScore, RopeBand,
    SweepReport, Truth,
};
use crate::hybrid::{run_stream, DetectorKind};
use crate::ingest::{align, most_correlated, parse_lab_log, Field};
use crate::io::{
    load_models, read_labels_csv, read_matrix_csv, save_models, write_distances_csv, write_labels_csv,
    write_matrix_csv, write_verdicts_csv, CalibrationRecord, Provenance, AE_MODEL_FILE, CALIBRATION_FILE,
    PCA_MODEL_FILE,
};
use crate::kv::KvMap;
use crate::stream::{LabelTrack, ReadingMatrix};
use crate::synth::{AnomalyKind, DistKind, ScenarioSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Seed index reserved for the anomaly-free training stream of experiments.
const BASELINE_STREAM: u64 = u64::MAX;

#[derive(Debug, Parser)]
#[command(name = "corrsense", version, about = "Anomaly detection for correlated sensor streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario: data.csv and labels.csv.
    Synth(SynthArgs),
    /// Train and calibrate both detectors on an anomaly-free range.
    Train(TrainArgs),
    /// Stream a data file through one detector.
    Run(RunArgs),
    /// Accuracy experiments: mean shift, erasure, mean and probability sweeps.
    Eval(EvalArgs),
    /// Runtime benchmarks: the three-detector comparison and the reduction curve.
    Bench(BenchArgs),
    /// Convert a lab sensor log into an aligned data.csv.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Named preset such as fig1-normal, fig1-shift-40, binshift-6000.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub preset: Option<String>,
    /// Scenario file in `key = value` form.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Override one scenario key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Labels; training refuses a range that contains any anomaly.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub pca_model: Option<PathBuf>,
    #[arg(long)]
    pub ae_model: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// pca, ae or hybrid.
    #[arg(long)]
    pub detector: Option<DetectorKind>,
    /// Score the verdicts against these labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// shift, erasure, mean-sweep, p-sweep or p-sweep-zoom.
    #[arg(long, required_unless_present = "data")]
    pub preset: Option<String>,
    /// Score every detector on this stream instead of a preset.
    #[arg(long, requires = "labels", conflicts_with = "preset")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Reuse trained models instead of training on a fresh normal stream.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Restrict mean-sweep to one distribution.
    #[arg(long)]
    pub dist: Option<DistKind>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// table2 or fig11.
    #[arg(long, required_unless_present = "data")]
    pub preset: Option<String>,
    #[arg(long, conflicts_with = "preset")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "temperature")]
    pub field: Field,
    /// Half-open epoch range `START..END`.
    #[arg(long)]
    pub epochs: String,
    /// Comma-separated mote ids; by default the most correlated motes.
    #[arg(long, value_delimiter = ',')]
    pub motes: Vec<u32>,
    /// How many motes to pick automatically.
    #[arg(long, default_value_t = 4)]
    pub auto: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged(_) | Error::DegenerateVariance => EXIT_RUNTIME,
        Error::Io(io) if io.kind() != std::io::ErrorKind::NotFound => EXIT_RUNTIME,
        _ => EXIT_VALIDATION,
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Ingest(a) => cmd_ingest(&a),
    }
}

fn apply_sets(kv: &mut KvMap, sets: &[String]) -> Result<()> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::invalid("--set", format!("{s:?} is not KEY=VALUE")))?;
        kv.insert(k.trim(), v.trim());
    }
    Ok(())
}

/// Config file, then `--set`, then the dedicated flags.
fn load_config(common: &Common) -> Result<(RunConfig, KvMap)> {
    let mut kv = match &common.config {
        Some(p) => KvMap::parse(&fs::read_to_string(p)?)?,
        None => KvMap::default(),
    };
    apply_sets(&mut kv, &common.set)?;
    if let Some(seed) = common.seed {
        kv.insert("seed", seed.to_string());
    }
    if let Some(out) = &common.out {
        kv.insert("out_dir", out.display().to_string());
    }
    if let Some(jobs) = common.jobs {
        kv.insert("jobs", jobs.to_string());
    }
    let cfg = RunConfig::from_kv(&kv)?;
    Ok((cfg, kv))
}

fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance::new(&cfg.identity_kv().render(), cfg.seed)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read_data(path: &Path) -> Result<ReadingMatrix> {
    read_matrix_csv(BufReader::new(File::open(path)?))
}

fn read_labels(path: &Path, readings: &ReadingMatrix) -> Result<LabelTrack> {
    let labels = read_labels_csv(BufReader::new(File::open(path)?))?;
    if !labels.matches_shape(readings) {
        return Err(Error::invalid(
            "labels",
            format!(
                "shape {}x{} differs from data {}x{}",
                labels.steps(),
                labels.n_sensors(),
                readings.steps(),
                readings.n_sensors()
            ),
        ));
    }
    Ok(labels)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(0);
    let mut kv = match (&a.preset, &a.scenario) {
        (Some(name), _) => ScenarioSpec::preset(name, seed)?.to_kv(),
        (None, Some(p)) => KvMap::parse(&fs::read_to_string(p)?)?,
        (None, None) => return Err(Error::invalid("scenario", "give --preset or --scenario")),
    };
    apply_sets(&mut kv, &a.set)?;
    if let Some(seed) = a.seed {
        kv.insert("seed", seed.to_string());
    }
    let spec = ScenarioSpec::from_kv(&kv)?;
    let sc = spec.generate()?;
    let text = spec.to_kv().render();
    let prov = Provenance::new(&text, spec.seed);

    let mut out = create(&a.out, "data.csv")?;
    prov.write(&mut out)?;
    write_matrix_csv(&mut out, &sc.readings)?;
    out.flush()?;
    let mut out = create(&a.out, "labels.csv")?;
    prov.write(&mut out)?;
    write_labels_csv(&mut out, &sc.labels)?;
    out.flush()?;
    let mut out = create(&a.out, "scenario.cfg")?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    eprintln!(
        "wrote {} steps x {} sensors, {} anomalous readings, to {}",
        sc.readings.steps(),
        sc.readings.n_sensors(),
        sc.labels.total(),
        a.out.display()
    );
    Ok(())
}

/// Training range from the config: explicit `train_end`, else the first
/// labeled step, else the whole stream. Refuses ranges holding anomalies.
pub fn training_range(cfg: &RunConfig, steps: usize, labels: Option<&LabelTrack>) -> Result<(usize, usize)> {
    let first_anomaly = labels.and_then(|l| (0..l.steps()).find(|&t| l.row(t).contains(&1)));
    let end = match (cfg.train_end, first_anomaly) {
        (Some(e), _) => e,
        (None, Some(t)) => t,
        (None, None) => steps,
    };
    if end > steps {
        return Err(Error::invalid("train_end", format!("{end} exceeds the {steps} steps of data")));
    }
    if let Some(l) = labels {
        if let Some(bad) = (cfg.train_start..end).find(|&s| l.row(s).contains(&1)) {
            return Err(Error::invalid(
                "training range",
                format!("[{}, {end}) contains labeled anomalies from step {bad}", cfg.train_start),
            ));
        }
    }
    Ok((cfg.train_start, end))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (cfg, _) = load_config(&a.common)?;
    let readings = read_data(&a.data)?;
    let labels = a.labels.as_deref().map(|p| read_labels(p, &readings)).transpose()?;
    let (start, end) = training_range(&cfg, readings.steps(), labels.as_ref())?;
    let (models, report) = train_models(&readings, start, end, &cfg.pipeline)?;
    let record = CalibrationRecord::new(&models, report, &cfg.identity_kv(), cfg.seed);
    save_models(&cfg.out_dir, &models, &record)?;
    eprintln!(
        "trained on steps [{start}, {end}); pca threshold {:.4}, ae threshold {:.4}, loss threshold {:.4}",
        models.pca.thresholds.distance_threshold,
        models.ae.thresholds.distance_threshold,
        models.ae.thresholds.loss_threshold.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn resolve_models(
    dir: Option<&Path>,
    pca: Option<&Path>,
    ae: Option<&Path>,
    calibration: Option<&Path>,
) -> Result<(TrainedModels, CalibrationRecord)> {
    let pick = |explicit: Option<&Path>, name: &str| -> Result<PathBuf> {
        match (explicit, dir) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(d)) => Ok(d.join(name)),
            (None, None) => Err(Error::invalid("models", format!("no {name}: pass --models DIR"))),
        }
    };
    load_models(
        &pick(pca, PCA_MODEL_FILE)?,
        &pick(ae, AE_MODEL_FILE)?,
        &pick(calibration, CALIBRATION_FILE)?,
    )
}

/// An explicit `window` in the config must agree with the models.
fn check_window(kv: &KvMap, models: &TrainedModels) -> Result<()> {
    if let Some(w) = kv.parsed::<usize>("window")? {
        if w != models.window {
            return Err(Error::DimMismatch {
                expected: models.window,
                got: w,
            });
        }
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let (cfg, kv) = load_config(&a.common)?;
    let (models, record) = resolve_models(
        a.models.as_deref(),
        a.pca_model.as_deref(),
        a.ae_model.as_deref(),
        a.calibration.as_deref(),
    )?;
    check_window(&kv, &models)?;
    let kind = a.detector.unwrap_or(cfg.detector);
    let readings = read_data(&a.data)?;
    let labels = a.labels.as_deref().map(|p| read_labels(p, &readings)).transpose()?;
    let run = run_stream(kind, &readings, &models)?;
    let n = readings.n_sensors();
    let timing = cfg.record_timing.unwrap_or(false);
    let prov = provenance(&cfg)
        .with("detector", kind)
        .with("models_config_sha256", &record.config_sha256);

    let mut out = create(&cfg.out_dir, "verdicts.csv")?;
    prov.write(&mut out)?;
    write_verdicts_csv(&mut out, &run.verdicts, n, timing)?;
    out.flush()?;
    let mut out = create(&cfg.out_dir, "distances.csv")?;
    prov.write(&mut out)?;
    write_distances_csv(&mut out, &run.verdicts, n)?;
    out.flush()?;

    let flagged: Vec<usize> = (0..n)
        .map(|s| run.flag_track(s).iter().filter(|f| **f == Some(1)).count())
        .collect();
    let mode = cfg.label_mode.unwrap_or(LabelMode::Reading);
    let scores = match &labels {
        Some(l) => (0..n)
            .map(|s| {
                let c = score_run(&run, l, s, models.window, mode)?;
                Ok(json!({ "sensor": s, "counts": c, "metrics": crate::eval::prf1(c) }))
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let t = if timing { run.timing } else { Default::default() };
    write_json(
        &cfg.out_dir,
        "summary.json",
        &json!({
            "config_sha256": prov.config_hash,
            "seed": cfg.seed,
            "detector": kind,
            "steps": readings.steps(),
            "counters": run.counters,
            "flagged_steps": flagged,
            "label_mode": mode.to_string(),
            "scores": scores,
            "timing": t,
        }),
    )?;
    eprintln!(
        "{kind}: {} evaluated steps, flagged per sensor {flagged:?}, {} autoencoder calls",
        run.counters.steps_evaluated, run.counters.ae_invocations
    );
    Ok(())
}

/// Models from `--models`, or freshly trained on an anomaly-free stream.
fn experiment_models(cfg: &RunConfig, kv: &KvMap, dir: Option<&Path>) -> Result<TrainedModels> {
    let models = match dir {
        Some(d) => resolve_models(Some(d), None, None, None)?.0,
        None => {
            eprintln!("training on a {}-step normal stream", cfg.train_steps);
            train_on_baseline(&cfg.pipeline, cfg.train_steps, derive_seed(cfg.seed, BASELINE_STREAM))?.0
        }
    };
    check_window(kv, &models)?;
    Ok(models)
}

#[derive(Serialize)]
struct ValueScores {
    value: f64,
    scores: Vec<DetectorScore>,
}

fn write_value_scores(dir: &Path, name: &str, column: &str, rows: &[ValueScores], prov: &Provenance) -> Result<()> {
    let mut out = create(dir, name)?;
    prov.write(&mut out)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record([column, "detector", "tp", "fp", "fn", "tn", "precision", "recall", "f1", "ae_invocations"])?;
    for r in rows {
        for s in &r.scores {
            let c = s.counts;
            w.write_record([
                r.value.to_string(),
                s.kind.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
                format!("{:.6}", s.metrics.precision),
                format!("{:.6}", s.metrics.recall),
                format!("{:.6}", s.metrics.f1),
                s.ae_invocations.to_string(),
            ])?;
        }
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(())
}

fn strip_timing(mut scores: Vec<DetectorScore>, keep: bool) -> Vec<DetectorScore> {
    if !keep {
        for s in &mut scores {
            s.mean_step_ns = 0.0;
        }
    }
    scores
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (cfg, kv) = load_config(&a.common)?;
    let timing = cfg.record_timing.unwrap_or(false);
    let prov = provenance(&cfg);
    let dir = &cfg.out_dir;

    if let Some(data) = &a.data {
        let readings = read_data(data)?;
        let labels = read_labels(a.labels.as_deref().expect("clap requires labels"), &readings)?;
        let models = experiment_models(&cfg, &kv, a.models.as_deref())?;
        let mode = cfg.label_mode.unwrap_or(LabelMode::Reading);
        let mut rows = Vec::new();
        for s in 0..readings.n_sensors() {
            let mut scores = Vec::new();
            for k in DetectorKind::ALL {
                let run = run_stream(k, &readings, &models)?;
                let c = score_run(&run, &labels, s, models.window, mode)?;
                scores.push(DetectorScore {
                    kind: k,
                    counts: c,
                    metrics: crate::eval::prf1(c),
                    mean_step_ns: if timing { run.timing.mean_ns } else { 0.0 },
                    ae_invocations: run.counters.ae_invocations,
                });
            }
            rows.push(ValueScores { value: s as f64, scores });
        }
        write_value_scores(dir, "scores.csv", "sensor", &rows, &prov)?;
        return write_json(dir, "summary.json", &json!({ "label_mode": mode.to_string(), "sensors": rows }));
    }

    let preset = a.preset.as_deref().expect("clap requires a preset");
    let models = experiment_models(&cfg, &kv, a.models.as_deref())?;
    let kinds = DetectorKind::ALL;
    let replicate_specs = |anomaly: &AnomalyKind, salt: u64| -> Vec<ScenarioSpec> {
        (0..cfg.replicates as u64)
            .map(|r| ScenarioSpec::fig1(anomaly.clone(), derive_seed(derive_seed(cfg.seed, salt), r)))
            .collect()
    };
    match preset {
        "shift" | "erasure" => {
            let (column, values, mode): (&str, Vec<f64>, LabelMode) = if preset == "shift" {
                ("delta", vec![5.0, 40.0], LabelMode::Segment { start: 250 })
            } else {
                ("erasure_rate", vec![0.05, 0.20], LabelMode::Window)
            };
            let mode = cfg.label_mode.unwrap_or(mode);
            let mut rows = Vec::new();
            for (i, &v) in values.iter().enumerate() {
                let anomaly = if preset == "shift" {
                    AnomalyKind::MeanShift { delta: v }
                } else {
                    AnomalyKind::Erasure { rate: v }
                };
                let scores = pooled_scores(&models, &replicate_specs(&anomaly, i as u64), &kinds, mode, cfg.jobs)?;
                rows.push(ValueScores {
                    value: v,
                    scores: strip_timing(scores, timing),
                });
            }
            write_value_scores(dir, &format!("{preset}.csv"), column, &rows, &prov)?;
            write_json(
                dir,
                "summary.json",
                &json!({
                    "preset": preset,
                    "label_mode": mode.to_string(),
                    "replicates": cfg.replicates,
                    "points": rows,
                }),
            )
        }
        "mean-sweep" => {
            let dists = match a.dist {
                Some(d) => vec![d],
                None => vec![DistKind::Normal, DistKind::Uniform, DistKind::Poisson, DistKind::Point],
            };
            let mut summary = Vec::new();
            for (i, d) in dists.into_iter().enumerate() {
                let base = ScenarioSpec::fig1(AnomalyKind::None, cfg.seed);
                let report = mean_sweep(
                    &models,
                    d,
                    5.0,
                    &odd_means(),
                    &base,
                    &kinds,
                    derive_seed(cfg.seed, i as u64),
                    cfg.jobs,
                )?;
                let mut out = create(dir, &format!("mean_sweep_{}.csv", d.name()))?;
                report.write_csv(&mut out, &prov.clone().with("distribution", d.name()), timing)?;
                out.flush()?;
                summary.push(sweep_summary(&report));
            }
            write_json(dir, "summary.json", &json!({ "preset": preset, "sweeps": summary }))
        }
        "p-sweep" | "p-sweep-zoom" => {
            let zoom = preset == "p-sweep-zoom";
            let base = ScenarioSpec::fig1(AnomalyKind::Erasure { rate: 0.0 }, cfg.seed);
            let mode = cfg.label_mode.unwrap_or(LabelMode::Window);
            let report = probability_sweep(&models, &probability_grid(zoom), &base, &kinds, cfg.seed, mode, cfg.jobs)?;
            let name = preset.replace('-', "_");
            let mut out = create(dir, &format!("{name}.csv"))?;
            report.write_csv(&mut out, &prov, timing)?;
            out.flush()?;
            write_json(dir, "summary.json", &json!({ "preset": preset, "sweep": sweep_summary(&report) }))
        }
        other => Err(Error::invalid(
            "preset",
            format!("unknown eval preset {other:?}; expected shift, erasure, mean-sweep, p-sweep or p-sweep-zoom"),
        )),
    }
}

fn sweep_summary(r: &SweepReport) -> serde_json::Value {
    let per_kind: Vec<_> = r
        .kinds()
        .into_iter()
        .map(|k| {
            json!({
                "detector": k,
                "onset": r.onset(k, 0.5),
                "rope": r.rope(k, RopeBand::default()),
                "f1": r.f1_series(k),
            })
        })
        .collect();
    json!({
        "variable": r.variable.name(),
        "distribution": r.distribution.map(DistKind::name),
        "label_mode": r.label_mode,
        "grid": r.grid(),
        "detectors": per_kind,
    })
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let (cfg, kv) = load_config(&a.common)?;
    let timing = cfg.record_timing.unwrap_or(true);
    let prov = provenance(&cfg);
    let dir = &cfg.out_dir;
    let kinds = DetectorKind::ALL;

    if let Some(data) = &a.data {
        let readings = read_data(data)?;
        let labels = a.labels.as_deref().map(|p| read_labels(p, &readings)).transpose()?;
        let models = experiment_models(&cfg, &kv, a.models.as_deref())?;
        let mode = cfg.label_mode.unwrap_or(LabelMode::Reading);
        let truth = labels.as_ref().map(|l| Truth {
            labels: l,
            sensor: (0..l.n_sensors()).max_by_key(|&s| (l.count(s), std::cmp::Reverse(s))).unwrap_or(0),
            mode,
        });
        let rows = bench(&models, &readings, truth, &kinds, cfg.reps)?;
        return write_bench_outputs(dir, "bench.csv", &rows, &prov, timing);
    }

    match a.preset.as_deref().expect("clap requires a preset") {
        "table2" => {
            let spec = ScenarioSpec::bin_shift(cfg.seed);
            let sc = spec.generate()?;
            let models = match a.models.as_deref() {
                Some(d) => {
                    let m = resolve_models(Some(d), None, None, None)?.0;
                    check_window(&kv, &m)?;
                    m
                }
                None => {
                    let bin = match spec.anomaly {
                        AnomalyKind::BinShift { bin_size, .. } => bin_size,
                        _ => unreachable!("bin_shift preset"),
                    };
                    eprintln!("training on the first bin [0, {bin})");
                    train_models(&sc.readings, 0, bin, &cfg.pipeline)?.0
                }
            };
            let truth = Truth {
                labels: &sc.labels,
                sensor: spec.anomaly_sensor,
                mode: cfg.label_mode.unwrap_or(LabelMode::Reading),
            };
            let rows = bench(&models, &sc.readings, Some(truth), &kinds, cfg.reps)?;
            for r in &rows {
                let m = r.metrics.unwrap_or_default();
                eprintln!("{:>6}  f1 {:.4}  mean step {:.4} ms", r.kind, m.f1, r.mean_step_ms());
            }
            write_bench_outputs(dir, "table2.csv", &rows, &prov, timing)
        }
        "fig11" => {
            let models = experiment_models(&cfg, &kv, a.models.as_deref())?;
            let curve = response_reduction_curve(
                &models,
                &reduction_rates(),
                |rate, seed| ScenarioSpec::rate_shift(rate, seed).generate(),
                cfg.reps,
                cfg.seed,
            )?;
            eprintln!("pearson r = {:.4}", curve.pearson_r);
            let mut out = create(dir, "fig11.csv")?;
            curve.write_csv(&mut out, &prov, timing)?;
            out.flush()?;
            let mut shown = curve.clone();
            if !timing {
                shown.pearson_r = 0.0;
                for p in &mut shown.points {
                    p.ae_mean_ns = 0.0;
                    p.hybrid_mean_ns = 0.0;
                    p.reduction_pct = 0.0;
                }
            }
            write_json(dir, "summary.json", &shown)
        }
        other => Err(Error::invalid(
            "preset",
            format!("unknown bench preset {other:?}; expected table2 or fig11"),
        )),
    }
}

fn write_bench_outputs(
    dir: &Path,
    name: &str,
    rows: &[crate::experiment::BenchRow],
    prov: &Provenance,
    timing: bool,
) -> Result<()> {
    let mut out = create(dir, name)?;
    write_bench_csv(&mut out, rows, prov, timing)?;
    out.flush()?;
    let shown: Vec<_> = rows
        .iter()
        .map(|r| if timing { r.clone() } else { r.without_timing() })
        .collect();
    write_json(dir, "summary.json", &shown)
}

fn parse_epochs(s: &str) -> Result<std::ops::Range<u64>> {
    let bad = || Error::invalid("epochs", format!("{s:?} is not START..END"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a >= b {
        return Err(Error::invalid("epochs", "range is empty"));
    }
    Ok(a..b)
}

fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let epochs = parse_epochs(&a.epochs)?;
    let log = parse_lab_log(BufReader::new(File::open(&a.log)?))?;
    let motes = if a.motes.is_empty() {
        most_correlated(&log.records, a.field, epochs.clone(), a.auto)?
    } else {
        a.motes.clone()
    };
    let series = align(&log.records, &motes, a.field, epochs.clone())?;
    let args = format!("field={} epochs={}..{} motes={motes:?}", a.field, epochs.start, epochs.end);
    let prov = Provenance::new(&args, 0);
    let mut out = create(&a.out, "data.csv")?;
    prov.write(&mut out)?;
    series.write_csv(&mut out)?;
    out.flush()?;
    write_json(
        &a.out,
        "ingest.json",
        &json!({
            "field": a.field.name(),
            "epochs": [epochs.start, epochs.end],
            "motes": series.mote_ids,
            "gaps": series.gap_report,
            "skipped_lines": log.skipped,
            "records": log.records.len(),
        }),
    )?;
    eprintln!(
        "aligned {} epochs for motes {:?}; {} gaps filled, {} lines skipped",
        series.matrix.steps(),
        series.mote_ids,
        series.total_gaps(),
        log.skipped
    );
    Ok(())
}
