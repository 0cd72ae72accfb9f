//! Delimited text input and output.
//!
//! Datasets are comma separated with a header row. Emitted tables end with
//! `#`-prefixed metadata lines, which the reader skips as comments.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dgp::SimulatedDataset;
use crate::error::{Result, RfccaError};
use crate::matrix::DataMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnManifest {
    pub x_columns: Vec<String>,
    pub y_columns: Vec<String>,
    pub z_columns: Vec<String>,
}

impl ColumnManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (block, cols) in [("x", &self.x_columns), ("y", &self.y_columns), ("z", &self.z_columns)] {
            if cols.is_empty() {
                return Err(RfccaError::Manifest(format!("no {block} columns")));
            }
            for c in cols {
                if !seen.insert(c.as_str()) {
                    return Err(RfccaError::Manifest(format!("column '{c}' is listed more than once")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| RfccaError::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn write_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// A parsed numeric table: header and column-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable<T> {
    pub header: Vec<String>,
    pub columns: Vec<Vec<T>>,
}

impl<T: Scalar> NumericTable<T> {
    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// The named columns as a matrix, in the order given.
    pub fn select(&self, names: &[String]) -> Result<DataMatrix<T>> {
        let cols = names
            .iter()
            .map(|name| {
                self.header
                    .iter()
                    .position(|h| h == name)
                    .map(|j| self.columns[j].clone())
                    .ok_or_else(|| RfccaError::Manifest(format!("column '{name}' not found in header")))
            })
            .collect::<Result<Vec<_>>>()?;
        DataMatrix::from_columns(cols, names.to_vec())
    }
}

pub fn read_numeric_table<T: Scalar, R: Read>(reader: R) -> Result<NumericTable<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| RfccaError::InvalidData(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(RfccaError::InvalidData("empty header".into()));
    }
    let mut columns: Vec<Vec<T>> = vec![Vec::new(); header.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            RfccaError::Parse { row, column: String::new(), message: e.to_string() }
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        for (j, cell) in record.iter().enumerate() {
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| RfccaError::Parse {
                    row,
                    column: header[j].clone(),
                    message: if cell.is_empty() {
                        "missing value".into()
                    } else {
                        format!("'{cell}' is not a finite number")
                    },
                })?;
            columns[j].push(T::lit(value));
        }
    }
    if columns[0].is_empty() {
        return Err(RfccaError::InvalidData("no data rows".into()));
    }
    Ok(NumericTable { header, columns })
}

pub fn read_numeric_file<T: Scalar>(path: &Path) -> Result<NumericTable<T>> {
    read_numeric_table(File::open(path)?)
}

/// Reads the X, Y and Z blocks named by `manifest` from a delimited file.
pub fn load_dataset<T: Scalar>(
    path: &Path,
    manifest: &ColumnManifest,
) -> Result<(DataMatrix<T>, DataMatrix<T>, DataMatrix<T>)> {
    manifest.validate()?;
    let table = read_numeric_file::<T>(path)?;
    Ok((table.select(&manifest.x_columns)?, table.select(&manifest.y_columns)?, table.select(&manifest.z_columns)?))
}

/// Hex SHA-256 of the JSON encoding of `config`.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    /// Extra `key: value` lines.
    pub extra: Vec<(String, String)>,
}

impl Metadata {
    pub fn new<C: Serialize>(config: &C, seed: u64) -> Self {
        Self { config_hash: config_hash(config), seed, version: env!("CARGO_PKG_VERSION").to_string(), extra: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }
}

/// A text table with a header and a metadata footer.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: W, meta: &Metadata) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| RfccaError::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;
        let mut out = w.into_inner().map_err(|e| RfccaError::Io(std::io::Error::other(e.to_string())))?;
        writeln!(out, "# config_hash: {}", meta.config_hash)?;
        writeln!(out, "# seed: {}", meta.seed)?;
        writeln!(out, "# version: {}", meta.version)?;
        for (k, v) in &meta.extra {
            writeln!(out, "# {k}: {v}")?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path, meta: &Metadata) -> Result<()> {
        let f = std::io::BufWriter::new(File::create(path)?);
        self.write(f, meta)
    }
}

/// Formats a scalar with round-trip precision.
pub fn fmt_scalar<T: Scalar>(v: T) -> String {
    format!("{v}")
}

/// Writes `x | y | z | true_rho` as one table plus a manifest next to it.
/// Returns the manifest.
pub fn export_dataset(ds: &SimulatedDataset, data_path: &Path, manifest_path: &Path, meta: &Metadata) -> Result<ColumnManifest> {
    let manifest = ColumnManifest {
        x_columns: ds.x.names().to_vec(),
        y_columns: ds.y.names().to_vec(),
        z_columns: ds.z.names().to_vec(),
    };
    let mut header: Vec<String> = manifest.x_columns.iter().chain(&manifest.y_columns).chain(&manifest.z_columns).cloned().collect();
    header.push("true_rho".into());
    let mut table = Table::new(&header);
    for i in 0..ds.x.nrows() {
        let mut row: Vec<String> = [&ds.x, &ds.y, &ds.z].iter().flat_map(|m| m.row(i)).map(fmt_scalar).collect();
        row.push(fmt_scalar(ds.true_rho[i]));
        table.push(row);
    }
    table.write_file(data_path, meta)?;
    manifest.write_json_file(manifest_path)?;
    Ok(manifest)
}
