//! Run configuration: a flat `key = value` file whose keys map onto the
//! pipeline, detector and experiment settings. Unknown keys are rejected.

use std::path::PathBuf;

use crate::autoencoder::AeConfig;
use crate::detector::PipelineConfig;
use crate::distance::FlagRule;
use crate::error::{Error, Result};
use crate::eval::LabelMode;
use crate::hybrid::DetectorKind;
use crate::io::sha256_hex;
use crate::kv::KvMap;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub detector: DetectorKind,
    /// Scenario preset name or scenario file.
    pub scenario: Option<String>,
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub train_start: usize,
    /// End of the training range; by default the first labeled step, or the
    /// whole stream when there are no labels.
    pub train_end: Option<usize>,
    /// Length of the anomaly-free stream generated for experiment presets.
    pub train_steps: usize,
    pub label_mode: Option<LabelMode>,
    pub reps: usize,
    /// Seeded scenario replicates pooled per evaluation point.
    pub replicates: usize,
    /// Write measured step times. Unset means on for benchmarks and off
    /// elsewhere, so reruns of everything else are byte-identical.
    pub record_timing: Option<bool>,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            detector: DetectorKind::Hybrid,
            scenario: None,
            input: None,
            labels: None,
            seed: 0,
            out_dir: PathBuf::from("out"),
            train_start: 0,
            train_end: None,
            train_steps: 2000,
            label_mode: None,
            reps: 3,
            replicates: 5,
            record_timing: None,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "window",
        "pca_k",
        "pca_level",
        "pca_c",
        "ae_c",
        "q",
        "flag_rule",
        "normalize",
        "ae_hidden",
        "ae_latent",
        "ae_epochs",
        "ae_batch",
        "ae_learning_rate",
        "ae_grad_clip",
        "ae_train_stride",
        "detector",
        "scenario",
        "input",
        "labels",
        "seed",
        "out_dir",
        "train_start",
        "train_end",
        "train_steps",
        "label_mode",
        "reps",
        "replicates",
        "record_timing",
        "jobs",
    ];

    /// Defaults overridden by every key present in `kv`, then validated.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        kv.check_keys(Self::KEYS)?;
        let mut c = Self::default();
        let p = &mut c.pipeline;
        macro_rules! set {
            ($target:expr, $key:literal, $ty:ty) => {
                if let Some(v) = kv.parsed::<$ty>($key)? {
                    $target = v;
                }
            };
        }
        set!(p.window, "window", usize);
        set!(p.pca_k, "pca_k", usize);
        set!(p.pca_level, "pca_level", bool);
        set!(p.pca_c, "pca_c", f64);
        set!(p.ae_c, "ae_c", f64);
        set!(p.q, "q", f64);
        set!(p.flag_rule, "flag_rule", FlagRule);
        set!(p.normalize, "normalize", bool);
        set!(p.ae.hidden, "ae_hidden", usize);
        set!(p.ae.latent, "ae_latent", usize);
        set!(p.ae.epochs, "ae_epochs", usize);
        set!(p.ae.batch, "ae_batch", usize);
        set!(p.ae.learning_rate, "ae_learning_rate", f64);
        set!(p.ae.grad_clip, "ae_grad_clip", f64);
        set!(p.ae_train_stride, "ae_train_stride", usize);
        set!(c.detector, "detector", DetectorKind);
        c.scenario = kv.get("scenario").map(str::to_owned);
        c.input = kv.get("input").map(PathBuf::from);
        c.labels = kv.get("labels").map(PathBuf::from);
        set!(c.seed, "seed", u64);
        if let Some(v) = kv.get("out_dir") {
            c.out_dir = PathBuf::from(v);
        }
        set!(c.train_start, "train_start", usize);
        c.train_end = kv.parsed::<usize>("train_end")?;
        set!(c.train_steps, "train_steps", usize);
        c.label_mode = kv.parsed::<LabelMode>("label_mode")?;
        set!(c.reps, "reps", usize);
        set!(c.replicates, "replicates", usize);
        c.record_timing = kv.parsed::<bool>("record_timing")?;
        set!(c.jobs, "jobs", usize);
        c.pipeline.ae.input_len = c.pipeline.window;
        c.pipeline.ae.seed = c.seed;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if let Some(end) = self.train_end {
            if end <= self.train_start {
                return Err(Error::invalid("train_end", "must exceed train_start"));
            }
        }
        if self.train_steps <= self.pipeline.window {
            return Err(Error::invalid("train_steps", "must exceed the window"));
        }
        if self.reps < 3 {
            return Err(Error::invalid("reps", "need at least 3 repetitions"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be positive"));
        }
        if self.jobs == 0 {
            return Err(Error::invalid("jobs", "must be positive"));
        }
        Ok(())
    }

    /// Canonical rendering of every setting; its hash tags all outputs.
    pub fn to_kv(&self) -> KvMap {
        let p = &self.pipeline;
        let AeConfig {
            hidden,
            latent,
            epochs,
            batch,
            learning_rate,
            grad_clip,
            ..
        } = &p.ae;
        let mut kv = KvMap::default();
        let mut put = |k: &str, v: String| kv.insert(k, v);
        put("window", p.window.to_string());
        put("pca_k", p.pca_k.to_string());
        put("pca_level", p.pca_level.to_string());
        put("pca_c", p.pca_c.to_string());
        put("ae_c", p.ae_c.to_string());
        put("q", p.q.to_string());
        put("flag_rule", p.flag_rule.name().to_string());
        put("normalize", p.normalize.to_string());
        put("ae_hidden", hidden.to_string());
        put("ae_latent", latent.to_string());
        put("ae_epochs", epochs.to_string());
        put("ae_batch", batch.to_string());
        put("ae_learning_rate", learning_rate.to_string());
        put("ae_grad_clip", grad_clip.to_string());
        put("ae_train_stride", p.ae_train_stride.to_string());
        put("detector", self.detector.name().to_string());
        if let Some(s) = &self.scenario {
            put("scenario", s.clone());
        }
        if let Some(s) = &self.input {
            put("input", s.display().to_string());
        }
        if let Some(s) = &self.labels {
            put("labels", s.display().to_string());
        }
        put("seed", self.seed.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("train_start", self.train_start.to_string());
        if let Some(e) = self.train_end {
            put("train_end", e.to_string());
        }
        put("train_steps", self.train_steps.to_string());
        if let Some(m) = self.label_mode {
            put("label_mode", m.to_string());
        }
        put("reps", self.reps.to_string());
        put("replicates", self.replicates.to_string());
        if let Some(t) = self.record_timing {
            put("record_timing", t.to_string());
        }
        put("jobs", self.jobs.to_string());
        kv
    }

    /// Settings that determine results. The output directory and the worker
    /// count are left out: sweeps seed every grid point independently, so a
    /// run written elsewhere or with more threads carries the same hash.
    pub fn identity_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        let full = self.to_kv();
        for k in full.keys().filter(|&k| k != "out_dir" && k != "jobs") {
            kv.insert(k, full.get(k).unwrap_or_default());
        }
        kv
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.identity_kv().render().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn overrides_and_rejections() {
        let kv = KvMap::parse("window = 12\npca_c = 2.5\nseed = 9\ndetector = ae\nlabel_mode = segment:250").unwrap();
        let c = RunConfig::from_kv(&kv).unwrap();
        assert_eq!(c.pipeline.window, 12);
        assert_eq!(c.pipeline.ae.input_len, 12);
        assert_eq!(c.pipeline.ae.seed, 9);
        assert_eq!(c.detector, DetectorKind::Ae);
        assert_eq!(c.label_mode, Some(LabelMode::Segment { start: 250 }));
        assert_eq!(RunConfig::from_kv(&c.to_kv()).unwrap(), c);

        for bad in ["colour = red", "q = 2", "window = x", "reps = 1", "ae_latent = 64"] {
            let err = RunConfig::from_kv(&KvMap::parse(bad).unwrap()).unwrap_err();
            let key = bad.split(' ').next().unwrap();
            assert!(err.to_string().contains(key), "{bad}: {err}");
        }
    }

    #[test]
    fn hash_tracks_settings() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_ne!(a.hash(), b.hash());
        let c = RunConfig {
            out_dir: "elsewhere".into(),
            jobs: 4,
            ..RunConfig::default()
        };
        assert_eq!(a.hash(), c.hash());
    }
}
