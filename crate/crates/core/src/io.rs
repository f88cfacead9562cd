//! File formats: reading/label/verdict/distance CSVs, binary model files and
//! provenance headers.
//!
//! Model file layout (all integers and floats little-endian):
//!
//! ```text
//! magic "CSMD" | version u32 | tag u8 (1 = PCA, 2 = AE) | payload | sha256 of everything before
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{AeConfig, AeModel, LossStats};
use crate::detector::{AeDetector, PcaDetector, TrainedModels, TrainingReport};
use crate::distance::{DetectorThresholds, FlagRule};
use crate::error::{Error, Result};
use crate::hybrid::AnomalyVerdict;
use crate::pca::PcaModel;
use crate::kv::KvMap;
use crate::stream::{LabelTrack, NormStats, ReadingMatrix};

pub const MODEL_MAGIC: &[u8; 4] = b"CSMD";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    Pca = 1,
    Ae = 2,
}

impl ModelTag {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pca => "pca",
            Self::Ae => "ae",
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Self::Pca),
            2 => Ok(Self::Ae),
            _ => Err(Error::ModelFormat(format!("unknown payload tag {b}"))),
        }
    }
}

/// Hex SHA-256 of `bytes`, used as the config hash in output headers.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `# key=value` provenance lines written above every CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub extra: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(config_text: &str, seed: u64) -> Self {
        Self {
            config_hash: sha256_hex(config_text.as_bytes()),
            seed,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# config_sha256={} seed={}", self.config_hash, self.seed)?;
        for (k, v) in &self.extra {
            writeln!(out, "# {k}={v}")?;
        }
        Ok(())
    }
}

fn sensor_header(prefix: &str, n: usize) -> Vec<String> {
    std::iter::once(prefix.to_string())
        .chain((0..n).map(|s| format!("s{s}")))
        .collect()
}

/// `t,s0,...` rows with shortest round-trip float formatting.
pub fn write_matrix_csv<W: Write>(out: W, m: &ReadingMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(sensor_header("t", m.n_sensors()))?;
    for t in 0..m.steps() {
        let mut rec = vec![t.to_string()];
        rec.extend(m.row(t).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv<W: Write>(out: W, l: &LabelTrack) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(sensor_header("t", l.n_sensors()))?;
    for t in 0..l.steps() {
        let mut rec = vec![t.to_string()];
        rec.extend(l.row(t).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and rows of a `t,s0,...` CSV, skipping `#` comment lines. The `t`
/// column must count up from 0.
fn read_table<R: Read>(input: R) -> Result<(usize, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 2 || &header[0] != "t" {
        return Err(Error::invalid("csv", "header must be t,s0,...,s{n-1}"));
    }
    for (i, h) in header.iter().skip(1).enumerate() {
        if h != format!("s{i}") {
            return Err(Error::invalid("csv", format!("column {} is {h:?}, expected s{i}", i + 1)));
        }
    }
    let n = header.len() - 1;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec[0].trim().parse::<usize>().ok() != Some(i) {
            return Err(Error::invalid("csv", format!("row {i} has t = {:?}", &rec[0])));
        }
        rows.push(rec.iter().skip(1).map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::invalid("csv", "no data rows"));
    }
    Ok((n, rows))
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<ReadingMatrix> {
    let (n, rows) = read_table(input)?;
    let mut data = Vec::with_capacity(rows.len() * n);
    for (t, row) in rows.iter().enumerate() {
        for v in row {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::invalid("csv", format!("row {t}: {v:?} is not a number")))?;
            if !x.is_finite() {
                return Err(Error::invalid("csv", format!("row {t}: non-finite value")));
            }
            data.push(x);
        }
    }
    ReadingMatrix::from_rows(n, data)
}

pub fn read_labels_csv<R: Read>(input: R) -> Result<LabelTrack> {
    let (n, rows) = read_table(input)?;
    let mut data = Vec::with_capacity(rows.len() * n);
    for (t, row) in rows.iter().enumerate() {
        for v in row {
            data.push(
                v.parse::<u8>()
                    .map_err(|_| Error::invalid("labels", format!("row {t}: {v:?} is not 0/1")))?,
            );
        }
    }
    LabelTrack::from_rows(n, data)
}

/// `t,stage,f0..f{n-1},step_time_ns`; undetermined flags are written as `-`.
/// With `record_timing` off the time column is 0 so reruns compare equal.
pub fn write_verdicts_csv<W: Write>(out: W, verdicts: &[AnomalyVerdict], n: usize, record_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "stage".to_string()];
    header.extend((0..n).map(|s| format!("f{s}")));
    header.push("step_time_ns".into());
    w.write_record(&header)?;
    for v in verdicts {
        let mut rec = vec![v.t.to_string(), v.stage.name().to_string()];
        rec.extend(
            v.flags
                .iter()
                .map(|f| f.bit().map_or_else(|| "-".to_string(), |b| b.to_string())),
        );
        let ns = if record_timing { v.step_time.as_nanos() } else { 0 };
        rec.push(ns.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `t` followed by the row-major upper triangle `d01,d02,...`; warm-up steps
/// are omitted.
pub fn write_distances_csv<W: Write>(out: W, verdicts: &[AnomalyVerdict], n: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for i in 0..n {
        for j in i + 1..n {
            header.push(format!("d{i}_{j}"));
        }
    }
    w.write_record(&header)?;
    for v in verdicts {
        if let Some(m) = &v.distances {
            let mut rec = vec![v.t.to_string()];
            rec.extend(m.upper_triangle().map(|d| d.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn new(tag: ModelTag) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.push(tag as u8);
        Self { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }

    fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        self.buf
    }
}

struct Decoder<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Verifies the container and returns the tag and a cursor on the payload.
    fn open(bytes: &'a [u8]) -> Result<(ModelTag, Self)> {
        if bytes.len() < 9 + 32 || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::ModelFormat("not a model file".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::ModelFormat("checksum mismatch".into()));
        }
        let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let tag = ModelTag::from_byte(body[8])?;
        Ok((tag, Self { body, pos: 9 }))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.body.len());
        let end = end.ok_or_else(|| Error::ModelFormat("truncated payload".into()))?;
        let s = &self.body[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::ModelFormat("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > (self.body.len() - self.pos) / 8 {
            return Err(Error::ModelFormat("truncated payload".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn done(&self) -> Result<()> {
        if self.pos == self.body.len() {
            Ok(())
        } else {
            Err(Error::ModelFormat("trailing bytes".into()))
        }
    }
}

/// Tag of a model file without decoding the payload.
pub fn model_tag(bytes: &[u8]) -> Result<ModelTag> {
    Decoder::open(bytes).map(|(t, _)| t)
}

fn expect_tag(found: ModelTag, want: ModelTag) -> Result<()> {
    if found == want {
        Ok(())
    } else {
        Err(Error::invalid(
            "model",
            format!("expected a {} model file, found {}", want.name(), found.name()),
        ))
    }
}

pub fn encode_pca(m: &PcaModel) -> Vec<u8> {
    let mut e = Encoder::new(ModelTag::Pca);
    e.u64(m.input_dim() as u64);
    e.u64(m.latent_dim() as u64);
    e.u8(m.is_rank_deficient() as u8);
    e.u8(m.is_level_anchored() as u8);
    e.f64s(m.mean());
    e.f64s(m.components_flat());
    e.f64s(m.explained_variance());
    e.finish()
}

pub fn decode_pca(bytes: &[u8]) -> Result<PcaModel> {
    let (tag, mut d) = Decoder::open(bytes)?;
    expect_tag(tag, ModelTag::Pca)?;
    let w = d.usize()?;
    let k = d.usize()?;
    let rank_deficient = d.u8()? != 0;
    let level = d.u8()? != 0;
    let mean = d.f64s()?;
    let comps = d.f64s()?;
    let ev = d.f64s()?;
    d.done()?;
    if mean.len() != w || comps.len() != w * k {
        return Err(Error::ModelFormat("dimension header disagrees with payload".into()));
    }
    PcaModel::from_parts(mean, comps, ev, rank_deficient, level)
}

pub fn encode_ae(m: &AeModel) -> Vec<u8> {
    let c = m.config();
    let mut e = Encoder::new(ModelTag::Ae);
    for v in [c.input_len, c.hidden, c.latent, c.epochs, c.batch] {
        e.u64(v as u64);
    }
    e.u64(c.seed);
    e.f64(c.learning_rate);
    e.f64(c.grad_clip);
    e.f64s(m.params());
    match m.loss_stats() {
        None => e.u8(0),
        Some(s) => {
            e.u8(1);
            e.u64(s.count as u64);
            for v in [s.mean, s.std, s.min, s.max, s.q50, s.q90, s.q95, s.q99] {
                e.f64(v);
            }
        }
    }
    e.finish()
}

pub fn decode_ae(bytes: &[u8]) -> Result<AeModel> {
    let (tag, mut d) = Decoder::open(bytes)?;
    expect_tag(tag, ModelTag::Ae)?;
    let config = AeConfig {
        input_len: d.usize()?,
        hidden: d.usize()?,
        latent: d.usize()?,
        epochs: d.usize()?,
        batch: d.usize()?,
        seed: d.u64()?,
        learning_rate: d.f64()?,
        grad_clip: d.f64()?,
    };
    let params = d.f64s()?;
    let stats = match d.u8()? {
        0 => None,
        _ => {
            let count = d.usize()?;
            let mut v = [0.0; 8];
            for x in &mut v {
                *x = d.f64()?;
            }
            Some(LossStats {
                count,
                mean: v[0],
                std: v[1],
                min: v[2],
                max: v[3],
                q50: v[4],
                q90: v[5],
                q95: v[6],
                q99: v[7],
            })
        }
    };
    d.done()?;
    AeModel::from_parts(config, params, stats)
}

pub fn save_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub const PCA_MODEL_FILE: &str = "pca.model";
pub const AE_MODEL_FILE: &str = "ae.model";
pub const CALIBRATION_FILE: &str = "calibration.json";

/// Everything a trained pipeline needs besides the two model files:
/// normalization, thresholds and the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub config_sha256: String,
    pub seed: u64,
    pub window: usize,
    pub n_sensors: usize,
    pub flag_rule: FlagRule,
    pub norm: NormStats,
    pub pca: DetectorThresholds,
    pub ae: DetectorThresholds,
    pub training: TrainingReport,
    pub config: BTreeMap<String, String>,
}

impl CalibrationRecord {
    pub fn new(models: &TrainedModels, training: TrainingReport, config: &KvMap, seed: u64) -> Self {
        Self {
            config_sha256: sha256_hex(config.render().as_bytes()),
            seed,
            window: models.window,
            n_sensors: models.n_sensors(),
            flag_rule: models.pca.rule,
            norm: models.norm.clone(),
            pca: models.pca.thresholds.clone(),
            ae: models.ae.thresholds.clone(),
            training,
            config: config.keys().map(|k| (k.to_string(), config.get(k).unwrap_or_default().to_string())).collect(),
        }
    }
}

/// Writes `pca.model`, `ae.model` and `calibration.json` into `dir`.
pub fn save_models(dir: &Path, models: &TrainedModels, record: &CalibrationRecord) -> Result<()> {
    save_bytes(&dir.join(PCA_MODEL_FILE), &encode_pca(&models.pca.model))?;
    save_bytes(&dir.join(AE_MODEL_FILE), &encode_ae(&models.ae.model))?;
    let mut json = serde_json::to_string_pretty(record)?;
    json.push('\n');
    save_bytes(&dir.join(CALIBRATION_FILE), json.as_bytes())
}

/// Loads and cross-checks a model set. Each model file must carry the
/// expected type tag and agree with the calibration record's window.
pub fn load_models(pca_path: &Path, ae_path: &Path, calibration_path: &Path) -> Result<(TrainedModels, CalibrationRecord)> {
    let record: CalibrationRecord = serde_json::from_slice(&fs::read(calibration_path)?)?;
    let pca = decode_pca(&fs::read(pca_path)?)?;
    let ae = decode_ae(&fs::read(ae_path)?)?;
    for (what, got) in [("pca", pca.input_dim()), ("ae", ae.config().input_len)] {
        if got != record.window {
            return Err(Error::invalid(
                "window",
                format!("{what} model expects windows of {got}, calibration says {}", record.window),
            ));
        }
    }
    if record.norm.n_sensors() != record.n_sensors {
        return Err(Error::ModelFormat("calibration sensor count disagrees with its normalization".into()));
    }
    let models = TrainedModels {
        window: record.window,
        norm: record.norm.clone(),
        pca: PcaDetector {
            model: pca,
            thresholds: record.pca.clone(),
            rule: record.flag_rule,
        },
        ae: AeDetector {
            model: ae,
            thresholds: record.ae.clone(),
            rule: record.flag_rule,
        },
    };
    Ok((models, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pca::fit_pca;

    #[test]
    fn matrix_csv_round_trips() {
        let m = ReadingMatrix::from_rows(2, vec![1.5, -2.0, 0.1, 1e-300]).unwrap();
        let mut buf = Vec::new();
        Provenance::new("a=1", 3).write(&mut buf).unwrap();
        write_matrix_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config_sha256="));
        assert!(text.contains("t,s0,s1\n0,1.5,-2\n"));
        assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn bad_csvs_are_rejected() {
        assert!(read_matrix_csv("".as_bytes()).is_err());
        assert!(read_matrix_csv("t,s0\n".as_bytes()).is_err());
        assert!(read_matrix_csv("t,s0\n0,x\n".as_bytes()).is_err());
        assert!(read_matrix_csv("t,s1\n0,1\n".as_bytes()).is_err());
        assert!(read_labels_csv("t,s0\n0,2\n".as_bytes()).is_err());
    }

    #[test]
    fn pca_model_file_round_trips() {
        let x: Vec<Vec<f64>> = (0..10)
            .map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 5) as f64).collect())
            .collect();
        let m = fit_pca(&x, 2).unwrap();
        let bytes = encode_pca(&m);
        assert_eq!(&bytes[..4], MODEL_MAGIC);
        assert_eq!(model_tag(&bytes).unwrap(), ModelTag::Pca);
        assert_eq!(decode_pca(&bytes).unwrap(), m);
        assert!(decode_ae(&bytes).is_err());
        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(decode_pca(&bad).is_err());
    }

    #[test]
    fn ae_model_file_round_trips() {
        let cfg = AeConfig {
            input_len: 6,
            hidden: 3,
            latent: 2,
            ..AeConfig::default()
        };
        let mut m = AeModel::init(cfg).unwrap();
        m.set_loss_stats_from(&[0.5, 1.0, 2.0]);
        let bytes = encode_ae(&m);
        assert_eq!(decode_ae(&bytes).unwrap(), m);
        assert!(decode_pca(&bytes).is_err());
    }
}
