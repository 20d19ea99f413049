//! Survival datasets, covariate standardization and counting-process expansion.
//!
//! A [`Dataset`] holds one [`SubjectRecord`] per subject with a shared list of
//! covariate names. [`split_counting_process`] expands each subject into one
//! subrecord per change-point interval it passes through, with intervals
//! right-closed: a time equal to a change-point belongs to the earlier interval.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the constant design column.
pub const INTERCEPT: &str = "Intercept";

/// One subject: follow-up time, event indicator and baseline covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: i64,
    pub time: f64,
    pub status: u8,
    /// Values aligned with [`Dataset::covariate_names`].
    pub covariates: Vec<f64>,
}

/// Mean and sample standard deviation used to build a `<name>_scale` column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.sd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub covariate_names: Vec<String>,
    pub records: Vec<SubjectRecord>,
    /// Keyed by the name of the derived (scaled) column.
    #[serde(default)]
    pub standardization: BTreeMap<String, Standardization>,
    #[serde(default)]
    pub time_unit: Option<String>,
}

/// Explicit mapping from CSV header names to dataset fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    #[serde(default)]
    pub id: Option<String>,
    pub time: String,
    pub status: String,
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl ColumnMapping {
    pub fn new(time: &str, status: &str, covariates: &[&str]) -> Self {
        Self {
            id: None,
            time: time.to_string(),
            status: status.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Dataset {
    pub fn new(covariate_names: Vec<String>, records: Vec<SubjectRecord>) -> Result<Self> {
        let ds = Self {
            covariate_names,
            records,
            standardization: BTreeMap::new(),
            time_unit: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::validation("dataset has no records"));
        }
        for (i, name) in self.covariate_names.iter().enumerate() {
            if self.covariate_names[..i].contains(name) {
                return Err(Error::validation(format!("duplicate covariate `{name}`")));
            }
        }
        let p = self.covariate_names.len();
        for (row, r) in self.records.iter().enumerate() {
            if !(r.time > 0.0) || !r.time.is_finite() {
                return Err(Error::Schema {
                    row: row + 1,
                    column: "time".into(),
                    message: format!("time must be a positive real, got {}", r.time),
                });
            }
            if r.status > 1 {
                return Err(Error::Schema {
                    row: row + 1,
                    column: "status".into(),
                    message: format!("status must be 0 or 1, got {}", r.status),
                });
            }
            if r.covariates.len() != p {
                return Err(Error::Schema {
                    row: row + 1,
                    column: "covariates".into(),
                    message: format!("expected {p} covariates, found {}", r.covariates.len()),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    pub fn covariate(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .covariate_index(name)
            .ok_or_else(|| Error::validation(format!("unknown covariate `{name}`")))?;
        Ok(self.records.iter().map(|r| r.covariates[idx]).collect())
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.status == 1).count()
    }

    /// Design rows `(1, z_1, .., z_q)` for the requested names. The name
    /// [`INTERCEPT`] maps to the constant column.
    pub fn design_matrix(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let idx = names
            .iter()
            .map(|n| {
                if n == INTERCEPT {
                    Ok(None)
                } else {
                    self.covariate_index(n)
                        .map(Some)
                        .ok_or_else(|| Error::validation(format!("dataset has no column `{n}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .records
            .iter()
            .map(|r| {
                idx.iter()
                    .map(|i| i.map_or(1.0, |i| r.covariates[i]))
                    .collect()
            })
            .collect())
    }
}

/// Reads a CSV file through an explicit column mapping.
pub fn load_dataset(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(reader: R, schema: &ColumnMapping) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            row: 0,
            column: name.to_string(),
            message: "missing column".into(),
        })
    };
    let id_col = schema.id.as_deref().map(col).transpose()?;
    let time_col = col(&schema.time)?;
    let status_col = col(&schema.status)?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |c: usize, name: &str| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Schema {
                    row,
                    column: name.to_string(),
                    message: format!("non-numeric value `{raw}`"),
                })
        };
        let time = field(time_col, &schema.time)?;
        if time <= 0.0 {
            return Err(Error::Schema {
                row,
                column: schema.time.clone(),
                message: format!("time must be positive, got {time}"),
            });
        }
        let status_raw = field(status_col, &schema.status)?;
        let status = if status_raw == 0.0 {
            0
        } else if status_raw == 1.0 {
            1
        } else {
            return Err(Error::Schema {
                row,
                column: schema.status.clone(),
                message: format!("status must be 0 or 1, got {status_raw}"),
            });
        };
        let id = match id_col {
            Some(c) => {
                let raw = rec.get(c).unwrap_or("");
                raw.parse::<i64>().map_err(|_| Error::Schema {
                    row,
                    column: schema.id.clone().unwrap_or_default(),
                    message: format!("non-integer id `{raw}`"),
                })?
            }
            None => row as i64,
        };
        let covariates = cov_cols
            .iter()
            .zip(&schema.covariates)
            .map(|(&c, name)| field(c, name))
            .collect::<Result<Vec<_>>>()?;
        records.push(SubjectRecord {
            id,
            time,
            status,
            covariates,
        });
    }
    if records.is_empty() {
        return Err(Error::Schema {
            row: 0,
            column: schema.time.clone(),
            message: "file contains no data rows".into(),
        });
    }
    Dataset::new(schema.covariates.clone(), records)
}

/// Writes the dataset as CSV with columns `id, time, status, <covariates>`.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "time".into(), "status".into()];
    header.extend(ds.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for r in &ds.records {
        let mut row = vec![r.id.to_string(), r.time.to_string(), r.status.to_string()];
        row.extend(r.covariates.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Appends `<name>_scale` with sample mean 0 and sample SD 1.
pub fn standardize_covariate(ds: &Dataset, name: &str) -> Result<Dataset> {
    let values = ds.covariate(name)?;
    let n = values.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!(
            "cannot standardize `{name}` with fewer than two records"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::DegenerateData(format!(
            "covariate `{name}` is constant (SD = 0)"
        )));
    }
    let scaled_name = format!("{name}_scale");
    let stats = Standardization { mean, sd };
    let mut out = ds.clone();
    let existing = out.covariate_index(&scaled_name);
    for (r, v) in out.records.iter_mut().zip(&values) {
        let z = stats.apply(*v);
        match existing {
            Some(i) => r.covariates[i] = z,
            None => r.covariates.push(z),
        }
    }
    if existing.is_none() {
        out.covariate_names.push(scaled_name.clone());
    }
    out.standardization.insert(scaled_name, stats);
    Ok(out)
}

/// One subrecord of the counting-process expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingProcessRow {
    pub id: i64,
    pub tstart: f64,
    pub tstop: f64,
    pub status: u8,
    /// 1-based interval index.
    pub interval: usize,
    /// Design row with the leading intercept.
    pub design_row: Vec<f64>,
}

pub(crate) fn validate_taus(taus: &[f64]) -> Result<()> {
    for (j, &t) in taus.iter().enumerate() {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::validation(format!(
                "change-point {} must be positive and finite, got {t}",
                j + 1
            )));
        }
        if j > 0 && t <= taus[j - 1] {
            return Err(Error::validation(
                "change-points must be strictly increasing".to_string(),
            ));
        }
    }
    Ok(())
}

/// Interval `j` (1-based) with `t ∈ (τ_{j-1}, τ_j]`, `τ_0 = 0`, `τ_{k+1} = ∞`.
pub fn interval_index(t: f64, taus: &[f64]) -> usize {
    taus.iter().take_while(|&&tau| t > tau).count() + 1
}

/// Expands each subject into subrecords at the change-points `taus`.
///
/// `design` lists covariate names; the intercept column is always prepended.
pub fn split_counting_process(
    ds: &Dataset,
    taus: &[f64],
    design: &[String],
) -> Result<Vec<CountingProcessRow>> {
    validate_taus(taus)?;
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(design.iter().filter(|n| *n != INTERCEPT).cloned());
    let rows = ds.design_matrix(&names)?;
    let mut out = Vec::new();
    for (r, z) in ds.records.iter().zip(rows) {
        let last = interval_index(r.time, taus);
        let mut start = 0.0;
        for j in 1..=last {
            let stop = if j == last { r.time } else { taus[j - 1] };
            out.push(CountingProcessRow {
                id: r.id,
                tstart: start,
                tstop: stop,
                status: if j == last { r.status } else { 0 },
                interval: j,
                design_row: z.clone(),
            });
            start = stop;
        }
    }
    Ok(out)
}

/// Writes counting-process rows with columns
/// `tstart, time, status, id, Interval, Intercept, <design>`.
pub fn write_counting_process<W: Write>(
    rows: &[CountingProcessRow],
    design: &[String],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["tstart", "time", "status", "id", "Interval", INTERCEPT]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(design.iter().filter(|n| *n != INTERCEPT).cloned());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.tstart.to_string(),
            r.tstop.to_string(),
            r.status.to_string(),
            r.id.to_string(),
            r.interval.to_string(),
        ];
        rec.extend(r.design_row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
