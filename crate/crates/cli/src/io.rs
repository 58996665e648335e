//! File formats: basis and expansion JSON, `tau,value` and `n,re,im` CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use lehmann::dlr::{DlrBasis, DlrExpansion};

use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct TauRow {
    pub tau: f64,
    pub value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MatsRow {
    pub n: i64,
    pub re: f64,
    pub im: f64,
}

impl MatsRow {
    pub fn new(n: i64, z: Complex64) -> Self {
        Self { n, re: z.re, im: z.im }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn read_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_string(path: &Path, s: &str) -> Result<(), CliError> {
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_basis(path: &Path) -> Result<DlrBasis, CliError> {
    Ok(DlrBasis::from_json(&read_string(path)?)?)
}

pub fn read_expansion(basis: &DlrBasis, path: &Path) -> Result<DlrExpansion, CliError> {
    Ok(DlrExpansion::from_json(basis, &read_string(path)?)?)
}

/// Reads every row of a headed CSV file; unknown columns are ignored.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    rdr.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

/// Writes headed CSV to `out`, or to stdout when `out` is `None`.
pub fn write_rows<T: Serialize>(out: Option<&PathBuf>, rows: &[T]) -> Result<(), CliError> {
    let target = out.cloned().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let csv_err = |source| CliError::Csv { path: target.clone(), source };
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(io_err(p))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io { path: target.clone(), source })
}
