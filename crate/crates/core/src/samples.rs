//! Matrices of posterior draws and their on-disk form.
//!
//! A chain file is a CSV with header `theta_1..theta_p` and one draw per row.
//! Its sidecar is a JSON object `{method, seed, accept_rate, seconds, burn_in}`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// M x p draws plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub draws: DMatrix<f64>,
    pub accept_rate: f64,
    pub seconds: f64,
    pub method: String,
    pub seed: u64,
    pub burn_in: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Sidecar {
    pub method: String,
    pub seed: u64,
    pub accept_rate: f64,
    pub seconds: f64,
    pub burn_in: usize,
}

impl SampleMatrix {
    pub fn new(draws: DMatrix<f64>, method: impl Into<String>, seed: u64) -> Self {
        Self {
            draws,
            accept_rate: 1.0,
            seconds: 0.0,
            method: method.into(),
            seed,
            burn_in: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn row(&self, i: usize) -> RowDVector<f64> {
        self.draws.row(i).into_owned()
    }

    pub fn mean(&self) -> Vec<f64> {
        let m = self.len().max(1) as f64;
        (0..self.dim())
            .map(|j| self.draws.column(j).sum() / m)
            .collect()
    }

    /// Sample covariance with denominator M - 1.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.len();
        let mean = self.mean();
        let mut centered = self.draws.clone();
        for (j, mu) in mean.iter().enumerate() {
            centered.column_mut(j).add_scalar_mut(-mu);
        }
        centered.transpose() * centered / (m.saturating_sub(1).max(1) as f64)
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            method: self.method.clone(),
            seed: self.seed,
            accept_rate: self.accept_rate,
            seconds: self.seconds,
            burn_in: self.burn_in,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (1..=self.dim()).map(|j| format!("theta_{j}")).collect();
        w.write_record(&header)?;
        for row in self.draws.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
        let mut r = csv::Reader::from_reader(input);
        let p = r.headers()?.len();
        let mut values = Vec::new();
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != p {
                return Err(Error::DimensionMismatch { expected: p, got: rec.len() });
            }
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("non-numeric draw `{field}`")))?;
                values.push(v);
            }
            rows += 1;
        }
        Ok(DMatrix::from_row_slice(rows, p, &values))
    }

    /// Writes `path` (CSV) and `path` with a `.json` extension (sidecar).
    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))?;
        let sidecar = path.with_extension("json");
        serde_json::to_writer_pretty(File::create(sidecar)?, &self.sidecar())?;
        Ok(())
    }

    /// Loads a chain CSV, picking up the sidecar when present.
    pub fn load(path: &Path) -> Result<Self> {
        let draws = Self::read_csv(File::open(path)?)?;
        let mut s = SampleMatrix::new(draws, "unknown", 0);
        let sidecar = path.with_extension("json");
        if sidecar.exists() {
            let meta: Sidecar = serde_json::from_reader(File::open(sidecar)?)?;
            s.method = meta.method;
            s.seed = meta.seed;
            s.accept_rate = meta.accept_rate;
            s.seconds = meta.seconds;
            s.burn_in = meta.burn_in;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let draws = DMatrix::from_row_slice(2, 2, &[0.1, -2.5e-17, 3.0, 1.0 / 3.0]);
        let s = SampleMatrix::new(draws.clone(), "test", 1);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta_1,theta_2\n"));
        assert_eq!(SampleMatrix::read_csv(buf.as_slice()).unwrap(), draws);
    }
}
