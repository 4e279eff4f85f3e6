use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GeeModel, LinearRegression, LogisticRegression, QuantileRegression, SharedModel};
use crate::error::{Error, Result};
use crate::rng;

const KYPHOSIS_CSV: &str = include_str!("../../data/kyphosis.csv");
const KYPHOSIS_ROWS: usize = 81;
/// Column sums of (present, Age, Number, Start) in the reference copy.
const KYPHOSIS_CHECKSUM: [f64; 4] = [17.0, 6776.0, 328.0, 931.0];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: Option<u64>,
    pub theta0: Option<Vec<f64>>,
    pub columns: Vec<String>,
}

/// n observation records of fixed width, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    width: usize,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(values: Vec<f64>, width: usize, meta: DatasetMeta) -> Result<Self> {
        if width == 0 || values.is_empty() || values.len() % width != 0 {
            return Err(Error::Data(format!(
                "{} values do not form records of width {width}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in record {}", pos / width)));
        }
        Ok(Self { values, width, meta })
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    /// Records `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset::new(values, self.width, self.meta.clone())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = if self.meta.columns.len() == self.width {
            self.meta.columns.clone()
        } else {
            (1..=self.width).map(|j| format!("v{j}")).collect()
        };
        w.write_record(&header)?;
        for i in 0..self.n() {
            w.write_record(self.row(i).iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a numeric CSV with a header row (responses first, then covariates).
    pub fn read_csv<R: Read>(input: R, generator: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(Error::Data("ragged CSV row".into()));
            }
            for field in rec.iter() {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Data(format!("non-numeric field `{field}`")))?,
                );
            }
        }
        let meta = DatasetMeta { generator: generator.into(), columns: columns.clone(), ..Default::default() };
        Dataset::new(values, columns.len(), meta)
    }
}

/// The five experiment setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Linreg2,
    Linreg10,
    Quantile,
    Kyphosis,
    Gee,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Linreg2,
        Experiment::Linreg10,
        Experiment::Quantile,
        Experiment::Kyphosis,
        Experiment::Gee,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Linreg2 => "linreg2",
            Experiment::Linreg10 => "linreg10",
            Experiment::Quantile => "quantile",
            Experiment::Kyphosis => "kyphosis",
            Experiment::Gee => "gee",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| Error::UnknownExperiment(name.to_string()))
    }

    pub fn p(self) -> usize {
        match self {
            Experiment::Linreg2 | Experiment::Quantile => 2,
            Experiment::Linreg10 => 10,
            Experiment::Kyphosis => 4,
            Experiment::Gee => 5,
        }
    }

    /// Constraint model; the quantile setup uses the step score unless `smooth`.
    pub fn model(self, smooth: bool) -> SharedModel {
        match self {
            Experiment::Linreg2 | Experiment::Linreg10 => Arc::new(LinearRegression::new(self.p())),
            Experiment::Quantile => {
                Arc::new(QuantileRegression::new(2, 0.7, 0.1, smooth).expect("valid quantile settings"))
            }
            Experiment::Kyphosis => Arc::new(LogisticRegression::new(4)),
            Experiment::Gee => Arc::new(GeeModel::new(5, 0.7)),
        }
    }

    /// Synthetic data for `seed`, or the bundled Kyphosis table.
    pub fn dataset(self, seed: u64) -> Result<Dataset> {
        match self {
            Experiment::Kyphosis => kyphosis(),
            other => generate(other.name(), seed),
        }
    }

    /// Number of EP sites, the prior included.
    pub fn ep_sites(self) -> usize {
        match self {
            Experiment::Kyphosis => 4,
            _ => 6,
        }
    }

    /// Random-walk MH shrinkage factor on the pilot covariance.
    pub fn mh_shrinkage(self) -> f64 {
        match self {
            Experiment::Gee => 0.3,
            Experiment::Linreg10 => 0.5,
            _ => 0.7,
        }
    }
}

fn linreg_data(theta0: &[f64], n: usize, seed: u64, generator: &str) -> Result<Dataset> {
    let p = theta0.len();
    let mut rng = rng::from_seed(seed);
    let mut values = Vec::with_capacity(n * (p + 1));
    for _ in 0..n {
        let mut x = vec![1.0; p];
        for xj in x.iter_mut().skip(1) {
            *xj = rng.sample(StandardNormal);
        }
        let eps: f64 = rng.sample(StandardNormal);
        let y = x.iter().zip(theta0).map(|(a, b)| a * b).sum::<f64>() + eps;
        values.push(y);
        values.extend_from_slice(&x);
    }
    let mut columns = vec!["y".to_string(), "intercept".to_string()];
    columns.extend((1..p).map(|j| format!("x{j}")));
    let meta = DatasetMeta {
        generator: generator.into(),
        seed: Some(seed),
        theta0: Some(theta0.to_vec()),
        columns,
    };
    Dataset::new(values, p + 1, meta)
}

fn gee_data(seed: u64) -> Result<Dataset> {
    let theta0 = [3.0, 1.5, 0.0, 0.0, 2.0];
    let (n, p, rho) = (50, 5, 0.7);
    let cov_x = DMatrix::from_fn(p, p, |k, l| 0.5f64.powi((k as i32 - l as i32).abs()));
    let lx = cov_x.cholesky().expect("AR(1) covariance is PD").l();
    let cov_e = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let le = cov_e.cholesky().expect("compound symmetry is PD").l();
    let mut rng = rng::from_seed(seed);
    let mut draw = |dim: usize| DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut values = Vec::with_capacity(n * (2 + 2 * p));
    for _ in 0..n {
        let x1 = &lx * draw(p);
        let x2 = &lx * draw(p);
        let e = &le * draw(2);
        let dot = |x: &DVector<f64>| x.iter().zip(&theta0).map(|(a, b)| a * b).sum::<f64>();
        values.push(dot(&x1) + e[0]);
        values.push(dot(&x2) + e[1]);
        values.extend(x1.iter());
        values.extend(x2.iter());
    }
    let mut columns = vec!["y1".to_string(), "y2".to_string()];
    for t in 1..=2 {
        columns.extend((1..=p).map(|j| format!("x{t}_{j}")));
    }
    let meta = DatasetMeta {
        generator: "gee".into(),
        seed: Some(seed),
        theta0: Some(theta0.to_vec()),
        columns,
    };
    Dataset::new(values, 2 + 2 * p, meta)
}

/// Synthetic data for `linreg2`, `linreg10`, `quantile` (the `linreg2` data) or `gee`.
pub fn generate(name: &str, seed: u64) -> Result<Dataset> {
    match name {
        "linreg2" => linreg_data(&[0.5, 1.0], 100, seed, "linreg2"),
        "quantile" => linreg_data(&[0.5, 1.0], 100, seed, "quantile"),
        "linreg10" => {
            let theta0 = [0.5, 1.0, 0.5, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
            linreg_data(&theta0, 100, seed, "linreg10")
        }
        "gee" => gee_data(seed),
        other => Err(Error::UnknownExperiment(other.to_string())),
    }
}

/// Linear-regression data with `n` records, used for sample-size sweeps.
pub fn linreg_with_n(theta0: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    linreg_data(theta0, n, seed, "linreg")
}

fn parse_kyphosis<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != ["Kyphosis", "Age", "Number", "Start"] {
        return Err(Error::Data(format!("expected columns Kyphosis,Age,Number,Start, got {}", header.join(","))));
    }
    let mut raw: Vec<[f64; 4]> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let y = match rec.get(0).map(str::trim) {
            Some("present") => 1.0,
            Some("absent") => 0.0,
            other => return Err(Error::Data(format!("bad Kyphosis label {other:?}"))),
        };
        let mut row = [y, 0.0, 0.0, 0.0];
        for j in 1..4 {
            let field = rec.get(j).unwrap_or("");
            row[j] = field
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("non-numeric covariate `{field}`")))?;
        }
        raw.push(row);
    }
    if raw.is_empty() {
        return Err(Error::Data("empty Kyphosis file".into()));
    }
    if raw.len() != KYPHOSIS_ROWS {
        return Err(Error::Data(format!("expected {KYPHOSIS_ROWS} rows, got {}", raw.len())));
    }
    for (j, expected) in KYPHOSIS_CHECKSUM.iter().enumerate() {
        let sum: f64 = raw.iter().map(|r| r[j]).sum();
        if sum != *expected {
            return Err(Error::Data(format!("column {j} checksum {sum} != {expected}")));
        }
    }
    let n = raw.len() as f64;
    let mut values = Vec::with_capacity(raw.len() * 5);
    let stats: Vec<(f64, f64)> = (1..4)
        .map(|j| {
            let mean = raw.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = raw.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        })
        .collect();
    for r in &raw {
        values.push(r[0]);
        values.push(1.0);
        for (j, (mean, sd)) in stats.iter().enumerate() {
            values.push((r[j + 1] - mean) / sd);
        }
    }
    let meta = DatasetMeta {
        generator: "kyphosis".into(),
        seed: None,
        theta0: None,
        columns: ["y", "intercept", "age", "number", "start"].map(String::from).to_vec(),
    };
    Dataset::new(values, 5, meta)
}

/// Loads a Kyphosis CSV, standardizing covariates (sample sd, n - 1).
pub fn load_kyphosis(path: &Path) -> Result<Dataset> {
    parse_kyphosis(std::fs::File::open(path)?)
}

/// The bundled 81-row Kyphosis table.
pub fn kyphosis() -> Result<Dataset> {
    parse_kyphosis(KYPHOSIS_CSV.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_record_truth_and_size() {
        let d = generate("linreg2", 1).unwrap();
        assert_eq!(d.meta.theta0.as_deref(), Some(&[0.5, 1.0][..]));
        assert_eq!((d.n(), d.width()), (100, 3));
        let g = generate("gee", 1).unwrap();
        assert_eq!(g.n(), 50);
        assert_eq!(g.meta.theta0.as_ref().unwrap().len(), 5);
        let l10 = generate("linreg10", 1).unwrap();
        assert_eq!(l10.width(), 11);
        assert!(matches!(generate("poisson", 1), Err(Error::UnknownExperiment(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        for name in ["linreg2", "linreg10", "quantile", "gee"] {
            let mut a = Vec::new();
            let mut b = Vec::new();
            generate(name, 17).unwrap().write_csv(&mut a).unwrap();
            generate(name, 17).unwrap().write_csv(&mut b).unwrap();
            assert_eq!(a, b);
        }
        assert_ne!(generate("linreg2", 1).unwrap(), generate("linreg2", 2).unwrap());
        // quantile reuses the linreg2 draws
        assert_eq!(generate("linreg2", 5).unwrap().row(7), generate("quantile", 5).unwrap().row(7));
    }

    #[test]
    fn kyphosis_is_standardized() {
        let d = kyphosis().unwrap();
        assert_eq!(d.n(), 81);
        let n = d.n() as f64;
        for i in 0..d.n() {
            assert_eq!(d.row(i)[1], 1.0);
        }
        for j in 2..5 {
            let col: Vec<f64> = (0..d.n()).map(|i| d.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(mean.abs() <= 1e-12);
            assert!((sd - 1.0).abs() <= 1e-12);
        }
        let present: f64 = (0..d.n()).map(|i| d.row(i)[0]).sum();
        assert_eq!(present, 17.0);
    }

    #[test]
    fn kyphosis_loader_rejects_bad_files() {
        assert!(parse_kyphosis("".as_bytes()).is_err());
        assert!(parse_kyphosis("Kyphosis,Age,Number\nabsent,1,2\n".as_bytes()).is_err());
        assert!(parse_kyphosis("Kyphosis,Age,Number,Start\nabsent,1,x,3\n".as_bytes()).is_err());
        assert!(parse_kyphosis("Kyphosis,Age,Number,Start\n".as_bytes()).is_err());
        let truncated: String = KYPHOSIS_CSV.lines().take(40).collect::<Vec<_>>().join("\n");
        assert!(parse_kyphosis(truncated.as_bytes()).is_err());
        let corrupted = KYPHOSIS_CSV.replacen("absent,71,3,5", "absent,72,3,5", 1);
        assert!(parse_kyphosis(corrupted.as_bytes()).is_err());
    }

    #[test]
    fn dataset_rejects_non_finite() {
        assert!(Dataset::new(vec![1.0, f64::NAN], 2, DatasetMeta::default()).is_err());
        assert!(Dataset::new(vec![], 2, DatasetMeta::default()).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let d = generate("gee", 3).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), "gee").unwrap();
        assert_eq!(back.n(), d.n());
        assert_eq!(back.row(10), d.row(10));
    }
}
