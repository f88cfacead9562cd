//! Parses lines in the lab sensor log format, picks the most correlated
//! motes and aligns them by epoch with forward fill.
//!
//!     cargo run --example lab_ingest -- [path/to/data.txt START END]

use std::io::{BufRead, BufReader, Cursor};

use corrsense::ingest::{align, most_correlated, parse_lab_log, Field};

const SAMPLE: &str = "\
2004-02-28 00:59:16.02785 3 1 19.9884 37.0933 45.08 2.69964
2004-02-28 00:59:16.02785 3 2 19.3024 38.4629 45.08 2.68742
2004-02-28 00:59:16.02785 3 3 19.1652 38.8039 45.08 2.68742
2004-02-28 01:00:46.02785 6 1 19.9982 37.0592 45.08 2.69964
2004-02-28 01:00:46.02785 6 3 19.1750 38.8379 45.08 2.68742
2004-02-28 01:01:16.02785 7 1 20.0080 37.0252 45.08 2.69964
2004-02-28 01:01:16.02785 7 2 19.3220 38.3949 45.08 2.68742
2004-02-28 01:01:16.02785 7 3 19.1848 38.7700 45.08 2.68742
2004-02-28 01:01:16.02785 7 4 19.0476
2004-02-28 01:01:46.02785 8 1 20.0178 36.9911 45.08 2.69964
2004-02-28 01:01:46.02785 8 2 19.3318 38.3609 45.08 2.68742
2004-02-28 01:01:46.02785 8 3 19.1946 38.7360 45.08 2.68742
";

fn main() -> corrsense::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (reader, epochs): (Box<dyn BufRead>, _) = match args.as_slice() {
        [path, a, b] => (
            Box::new(BufReader::new(std::fs::File::open(path)?)),
            a.parse().unwrap_or(0)..b.parse().unwrap_or(u64::MAX),
        ),
        _ => (Box::new(Cursor::new(SAMPLE)), 3..9),
    };
    let log = parse_lab_log(reader)?;
    println!("{} records parsed, {} lines skipped", log.records.len(), log.skipped);

    let motes = most_correlated(&log.records, Field::Temperature, epochs.clone(), 3)?;
    println!("most correlated motes: {motes:?}");
    let series = align(&log.records, &motes, Field::Temperature, epochs)?;
    println!("filled cells per mote: {:?}", series.gap_report);
    for t in 0..series.matrix.steps() {
        println!("epoch {:>3}: {:?}", series.first_epoch + t as u64, series.matrix.row(t));
    }
    Ok(())
}
