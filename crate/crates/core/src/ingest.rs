//! Intel Berkeley lab log parsing and epoch alignment.
//!
//! Log lines look like
//! `2004-02-28 00:59:16.02785 3 1 19.9884 37.0933 45.08 2.69964`:
//! date, time, epoch, mote id, temperature, humidity, light, voltage.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::pearson_r;
use crate::stream::ReadingMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LabRecord {
    pub date: String,
    pub time: String,
    pub epoch: u64,
    pub mote_id: u32,
    pub temperature: f64,
    pub humidity: f64,
    pub light: f64,
    pub voltage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Temperature,
    Humidity,
    Light,
    Voltage,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Self::Temperature => "temperature",
            Self::Humidity => "humidity",
            Self::Light => "light",
            Self::Voltage => "voltage",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temperature" => Ok(Self::Temperature),
            "humidity" => Ok(Self::Humidity),
            "light" => Ok(Self::Light),
            "voltage" => Ok(Self::Voltage),
            _ => Err(Error::invalid("field", format!("unknown field {s:?}"))),
        }
    }
}

impl LabRecord {
    pub fn value(&self, field: Field) -> f64 {
        match field {
            Field::Temperature => self.temperature,
            Field::Humidity => self.humidity,
            Field::Light => self.light,
            Field::Voltage => self.voltage,
        }
    }

    /// `None` for anything but eight well-formed columns.
    pub fn parse_line(line: &str) -> Option<Self> {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 8 {
            return None;
        }
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
        Some(Self {
            date: cols[0].to_string(),
            time: cols[1].to_string(),
            epoch: cols[2].parse().ok()?,
            mote_id: cols[3].parse().ok()?,
            temperature: num(cols[4])?,
            humidity: num(cols[5])?,
            light: num(cols[6])?,
            voltage: num(cols[7])?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<LabRecord>,
    pub skipped: usize,
}

/// Single pass over the log. Blank lines are ignored; malformed lines are
/// counted in `skipped`. Only read errors abort.
pub fn parse_lab_log<R: BufRead>(reader: R) -> Result<ParsedLog> {
    let mut out = ParsedLog::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match LabRecord::parse_line(&line) {
            Some(r) => out.records.push(r),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries {
    pub mote_ids: Vec<u32>,
    pub field: Field,
    pub first_epoch: u64,
    pub matrix: ReadingMatrix,
    /// Filled cells per mote.
    pub gap_report: Vec<usize>,
}

impl AlignedSeries {
    pub fn total_gaps(&self) -> usize {
        self.gap_report.iter().sum()
    }

    /// Canonical `t,s0,...` CSV preceded by one comment line naming the motes
    /// and field.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let ids: Vec<String> = self.mote_ids.iter().map(u32::to_string).collect();
        writeln!(
            out,
            "# motes={} field={} first_epoch={}",
            ids.join(","),
            self.field,
            self.first_epoch
        )?;
        crate::io::write_matrix_csv(&mut out, &self.matrix)
    }
}

/// One row per epoch in `epochs`, one column per mote. Missing cells repeat
/// the mote's previous value; leading gaps take its first value in range.
/// Duplicate (mote, epoch) records keep the first occurrence.
pub fn align(records: &[LabRecord], mote_ids: &[u32], field: Field, epochs: Range<u64>) -> Result<AlignedSeries> {
    if mote_ids.len() < 2 {
        return Err(Error::invalid("mote_ids", "need at least 2 motes"));
    }
    if epochs.is_empty() {
        return Err(Error::invalid("epoch_range", "is empty"));
    }
    let rows = (epochs.end - epochs.start) as usize;
    let col_of: HashMap<u32, usize> = mote_ids.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    if col_of.len() != mote_ids.len() {
        return Err(Error::invalid("mote_ids", "contains duplicates"));
    }
    let mut cells: Vec<Option<f64>> = vec![None; rows * mote_ids.len()];
    for r in records {
        if !epochs.contains(&r.epoch) {
            continue;
        }
        if let Some(&c) = col_of.get(&r.mote_id) {
            let cell = &mut cells[(r.epoch - epochs.start) as usize * mote_ids.len() + c];
            if cell.is_none() {
                *cell = Some(r.value(field));
            }
        }
    }
    let n = mote_ids.len();
    let mut matrix = ReadingMatrix::zeros(rows, n);
    let mut gap_report = vec![0; n];
    for (c, &mote) in mote_ids.iter().enumerate() {
        let first = (0..rows)
            .find_map(|t| cells[t * n + c])
            .ok_or(Error::NoData { mote })?;
        let mut last = first;
        for t in 0..rows {
            match cells[t * n + c] {
                Some(v) => last = v,
                None => gap_report[c] += 1,
            }
            matrix.set(t, c, last);
        }
    }
    Ok(AlignedSeries {
        mote_ids: mote_ids.to_vec(),
        field,
        first_epoch: epochs.start,
        matrix,
        gap_report,
    })
}

/// Every mote with at least one record in `epochs`, ascending.
pub fn motes_in_range(records: &[LabRecord], epochs: &Range<u64>) -> Vec<u32> {
    let mut seen: BTreeMap<u32, ()> = BTreeMap::new();
    for r in records.iter().filter(|r| epochs.contains(&r.epoch)) {
        seen.insert(r.mote_id, ());
    }
    seen.into_keys().collect()
}

/// The `count` motes whose aligned `field` series have the largest mean
/// pairwise Pearson correlation over `epochs` (exhaustive search; motes with
/// constant series are skipped). Ties keep the lexicographically first set.
pub fn most_correlated(records: &[LabRecord], field: Field, epochs: Range<u64>, count: usize) -> Result<Vec<u32>> {
    if count < 2 {
        return Err(Error::invalid("count", "need at least 2 motes"));
    }
    let motes = motes_in_range(records, &epochs);
    if motes.len() < 2 {
        return Err(Error::invalid("epoch_range", "fewer than 2 motes report in range"));
    }
    let aligned = align(records, &motes, field, epochs)?;
    let cols: Vec<Vec<f64>> = (0..motes.len()).map(|c| aligned.matrix.column(c)).collect();
    let usable: Vec<usize> = (0..motes.len())
        .filter(|&c| pearson_r(&cols[c], &cols[c]).is_ok())
        .collect();
    if usable.len() < count {
        return Err(Error::invalid(
            "count",
            format!("only {} motes have non-constant series", usable.len()),
        ));
    }
    let m = usable.len();
    let mut corr = vec![0.0; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let r = pearson_r(&cols[usable[a]], &cols[usable[b]])?;
            corr[a * m + b] = r;
            corr[b * m + a] = r;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut chosen = Vec::with_capacity(count);
    search(&corr, m, count, 0, 0.0, &mut chosen, &mut best);
    let (_, set) = best.expect("at least one subset");
    Ok(set.into_iter().map(|i| motes[usable[i]]).collect())
}

fn search(
    corr: &[f64],
    m: usize,
    count: usize,
    from: usize,
    acc: f64,
    chosen: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    if chosen.len() == count {
        if best.as_ref().map_or(true, |(b, _)| acc > *b) {
            *best = Some((acc, chosen.clone()));
        }
        return;
    }
    for i in from..m {
        if m - i < count - chosen.len() {
            break;
        }
        let add: f64 = chosen.iter().map(|&j| corr[j * m + i]).sum();
        chosen.push(i);
        search(corr, m, count, i + 1, acc + add, chosen, best);
        chosen.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: u64, mote: u32, temp: f64) -> LabRecord {
        LabRecord {
            date: "2004-02-28".into(),
            time: "00:00:00".into(),
            epoch,
            mote_id: mote,
            temperature: temp,
            humidity: 0.0,
            light: 0.0,
            voltage: 0.0,
        }
    }

    #[test]
    fn parses_documented_line() {
        let r = LabRecord::parse_line("2004-02-28 00:59:16.02785 3 1 19.9884 37.0933 45.08 2.69964").unwrap();
        assert_eq!((r.epoch, r.mote_id, r.temperature), (3, 1, 19.9884));
        assert_eq!(r.voltage, 2.69964);
    }

    #[test]
    fn short_lines_are_skipped() {
        let log = "2004-02-28 00:59:16.02785 3 1 19.9884 37.0933\n\
                   2004-02-28 00:59:16.02785 3 1 19.9884 37.0933 45.08 2.69964\n";
        let parsed = parse_lab_log(log.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.skipped, 1);
        let empty = parse_lab_log("".as_bytes()).unwrap();
        assert!(empty.records.is_empty());
        assert_eq!(empty.skipped, 0);
    }

    #[test]
    fn complete_series_align_exactly() {
        let recs: Vec<LabRecord> = (0..5).flat_map(|e| [rec(e, 1, e as f64), rec(e, 2, 10.0 + e as f64)]).collect();
        let a = align(&recs, &[1, 2], Field::Temperature, 0..5).unwrap();
        assert_eq!(a.gap_report, vec![0, 0]);
        assert_eq!(a.matrix.column(1), vec![10.0, 11.0, 12.0, 13.0, 14.0]);
    }

    #[test]
    fn gaps_are_forward_then_back_filled() {
        let recs = vec![rec(1, 1, 5.0), rec(3, 1, 7.0), rec(0, 2, 1.0), rec(1, 2, 1.0), rec(2, 2, 1.0), rec(3, 2, 1.0)];
        let a = align(&recs, &[1, 2], Field::Temperature, 0..4).unwrap();
        assert_eq!(a.matrix.column(0), vec![5.0, 5.0, 5.0, 7.0]);
        assert_eq!(a.gap_report, vec![2, 0]);
        assert_eq!(a.total_gaps(), 4 * 2 - recs.len());
    }

    #[test]
    fn absent_mote_is_an_error() {
        let recs = vec![rec(0, 1, 5.0)];
        assert!(matches!(
            align(&recs, &[1, 9], Field::Temperature, 0..1),
            Err(Error::NoData { mote: 9 })
        ));
        assert!(align(&recs, &[1], Field::Temperature, 0..1).is_err());
    }

    #[test]
    fn picks_the_coupled_motes() {
        let recs: Vec<LabRecord> = (0..50u64)
            .flat_map(|e| {
                let x = (e as f64 * 0.3).sin();
                let noise = ((e * 7919) % 13) as f64;
                [rec(e, 1, x), rec(e, 2, 2.0 * x + 1.0), rec(e, 3, noise), rec(e, 4, x + 0.01 * noise)]
            })
            .collect();
        let mut best = most_correlated(&recs, Field::Temperature, 0..50, 3).unwrap();
        best.sort();
        assert_eq!(best, vec![1, 2, 4]);
    }
}
