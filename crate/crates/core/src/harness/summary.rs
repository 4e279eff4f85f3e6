use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{ExperimentOutput, ResultRow};
use crate::error::{Error, Result};

/// Cross-match quantiles of one method at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub method: String,
    pub checkpoint_seconds: f64,
    /// Rows with a score.
    pub scored: usize,
    pub total: usize,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub pass_fraction: f64,
}

/// Linearly interpolated quantile of sorted values; for an odd count the
/// median is the middle order statistic.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Groups rows by (experiment, method, checkpoint) in first-seen method order.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rows to summarize".into()));
    }
    let mut method_order: Vec<(&str, &str)> = Vec::new();
    let mut groups: BTreeMap<(usize, u64), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        let key = (row.experiment.as_str(), row.method.as_str());
        let m = match method_order.iter().position(|k| *k == key) {
            Some(m) => m,
            None => {
                method_order.push(key);
                method_order.len() - 1
            }
        };
        groups.entry((m, row.checkpoint_seconds.to_bits())).or_default().push(row);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_values()
        .map(|group| {
            let mut counts: Vec<f64> = group.iter().filter_map(|r| r.nbp_count).map(|c| c as f64).collect();
            counts.sort_by(f64::total_cmp);
            let first = group[0];
            SummaryRow {
                experiment: first.experiment.clone(),
                method: first.method.clone(),
                checkpoint_seconds: first.checkpoint_seconds,
                scored: counts.len(),
                total: group.len(),
                median: quantile(&counts, 0.5),
                q25: quantile(&counts, 0.25),
                q75: quantile(&counts, 0.75),
                pass_fraction: group.iter().filter(|r| r.pass).count() as f64 / group.len() as f64,
            }
        })
        .collect();
    // methods in first-seen order, then increasing checkpoints
    out.sort_by(|a, b| {
        let ma = method_order.iter().position(|k| *k == (a.experiment.as_str(), a.method.as_str()));
        let mb = method_order.iter().position(|k| *k == (b.experiment.as_str(), b.method.as_str()));
        ma.cmp(&mb).then(a.checkpoint_seconds.total_cmp(&b.checkpoint_seconds))
    });
    Ok(out)
}

pub fn write_csv<T: Serialize, W: Write>(items: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for item in items {
        w.serialize(item)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes the result table, its summary and the manifest into `dir`.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&output.rows, BufWriter::new(File::create(dir.join(RESULTS_FILE))?))?;
    write_csv(&summarize(&output.rows)?, BufWriter::new(File::create(dir.join(SUMMARY_FILE))?))?;
    let mut manifest = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut manifest, &output.manifest)?;
    manifest.write_all(b"\n")?;
    Ok(())
}
