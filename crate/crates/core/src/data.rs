//! Typed dataset container, CSV ingestion, role mapping and row-subset views.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column measurement scale. Ordinal and nominal columns store level indices
/// in `[0, levels.len())`; the level labels are fixed by the schema, not
/// inferred from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Ordinal { levels: Vec<String> },
    Nominal { levels: Vec<String> },
    /// Nonnegative time in days.
    Time,
    /// 0/1 event indicator.
    Event,
}

impl ColumnKind {
    pub fn levels(&self) -> Option<&[String]> {
        match self {
            ColumnKind::Ordinal { levels } | ColumnKind::Nominal { levels } => Some(levels),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    /// Values; level indices for ordinal/nominal. Entries under the missing
    /// mask are NaN.
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl Column {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.values.len() != self.missing.len() {
            return Err(Error::InvalidValue {
                column: self.name.clone(),
                row: 0,
                message: "values and missing mask differ in length".into(),
            });
        }
        for (i, (&v, &m)) in self.values.iter().zip(&self.missing).enumerate() {
            if m {
                continue;
            }
            match &self.kind {
                ColumnKind::Continuous => {
                    if !v.is_finite() {
                        return Err(Error::InvalidValue {
                            column: self.name.clone(),
                            row: i,
                            message: "non-finite value".into(),
                        });
                    }
                }
                ColumnKind::Time => {
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::InvalidValue {
                            column: self.name.clone(),
                            row: i,
                            message: format!("time must be nonnegative, got {v}"),
                        });
                    }
                }
                ColumnKind::Event => {
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::InvalidValue {
                            column: self.name.clone(),
                            row: i,
                            message: format!("event indicator must be 0 or 1, got {v}"),
                        });
                    }
                }
                ColumnKind::Ordinal { levels } | ColumnKind::Nominal { levels } => {
                    let k = v as usize;
                    if v.fract() != 0.0 || k >= levels.len() {
                        return Err(Error::InvalidValue {
                            column: self.name.clone(),
                            row: i,
                            message: format!("level index {v} out of range"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Immutable after construction; row subsets are taken through [`RowSet`]
/// views so parallel tests can share one dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<Column>,
    index: HashMap<String, usize>,
    nrows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let nrows = columns.first().map(|c| c.len()).unwrap_or(0);
        let mut index = HashMap::new();
        for (i, c) in columns.iter().enumerate() {
            if c.len() != nrows {
                return Err(Error::InvalidValue {
                    column: c.name.clone(),
                    row: 0,
                    message: "column length mismatch".into(),
                });
            }
            c.validate()?;
            if index.insert(c.name.clone(), i).is_some() {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Dataset {
            columns,
            index,
            nrows,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.index
            .get(name)
            .map(|&i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Physically copied sub-dataset over the given rows; views and copies
    /// must agree on every statistic.
    pub fn subset(&self, rows: &RowSet) -> Result<Dataset> {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                kind: c.kind.clone(),
                values: rows.indices().iter().map(|&i| c.values[i]).collect(),
                missing: rows.indices().iter().map(|&i| c.missing[i]).collect(),
            })
            .collect();
        Dataset::new(columns)
    }
}

/// Row-subset view over a parent [`Dataset`]; a value type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowSet {
    indices: Vec<usize>,
}

impl RowSet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyRowSet);
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(RowSet { indices })
    }

    pub fn full(n: usize) -> Result<Self> {
        RowSet::new((0..n).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.indices.binary_search(&row).is_ok()
    }
}

/// Endpoint wiring for the supported model families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EndpointSpec {
    /// Gaussian GLM with log link and a log-scale offset column.
    GaussianLog { response: String, offset: String },
    /// Plain linear model, optionally with stratum covariates.
    Linear {
        response: String,
        #[serde(default)]
        strata: Vec<String>,
    },
    /// One proportional-odds item model (item at follow-up, baseline kept for
    /// reference but not entering the model).
    OrdinalItem { item: String },
    /// Ensemble of baseline-stratified proportional-odds item models.
    OrdinalEnsemble { pairs: Vec<(String, String)> },
    /// Right-censored survival endpoint (Weibull AFT or Cox).
    Survival { time: String, event: String },
}

impl EndpointSpec {
    /// Columns that must be complete for the analysis.
    pub fn required_columns(&self) -> Vec<&str> {
        match self {
            EndpointSpec::GaussianLog { response, offset } => vec![response, offset],
            EndpointSpec::Linear { response, strata } => {
                let mut v = vec![response.as_str()];
                v.extend(strata.iter().map(|s| s.as_str()));
                v
            }
            EndpointSpec::OrdinalItem { item } => vec![item],
            EndpointSpec::OrdinalEnsemble { pairs } => pairs
                .iter()
                .flat_map(|(a, b)| [a.as_str(), b.as_str()])
                .collect(),
            EndpointSpec::Survival { time, event } => vec![time, event],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleMap {
    pub endpoint: EndpointSpec,
    pub treatment: String,
    pub partitioning: Vec<String>,
}

impl RoleMap {
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let mut reserved: Vec<&str> = self.endpoint.required_columns();
        reserved.push(&self.treatment);
        for c in &reserved {
            data.column(c)?;
        }
        for z in &self.partitioning {
            data.column(z)?;
            if reserved.contains(&z.as_str()) {
                return Err(Error::Roles(format!(
                    "partitioning variable `{z}` overlaps endpoint/treatment columns"
                )));
            }
        }
        // treatment must be binary with both levels present
        let col = data.column(&self.treatment)?;
        let mut seen: Vec<f64> = Vec::new();
        for (&v, &m) in col.values.iter().zip(&col.missing) {
            if !m && !seen.contains(&v) {
                seen.push(v);
            }
        }
        if seen.len() != 2 {
            return Err(Error::Roles(format!(
                "treatment column `{}` must be binary with both levels present, found {} level(s)",
                self.treatment,
                seen.len()
            )));
        }
        Ok(())
    }

    /// 0/1 treatment contrast over the full dataset (smaller observed value
    /// maps to 0). Missing treatment stays NaN.
    pub fn treatment_contrast(&self, data: &Dataset) -> Result<Vec<f64>> {
        let col = data.column(&self.treatment)?;
        let mut seen: Vec<f64> = Vec::new();
        for (&v, &m) in col.values.iter().zip(&col.missing) {
            if !m && !seen.contains(&v) {
                seen.push(v);
            }
        }
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if seen.len() != 2 {
            return Err(Error::Roles(format!(
                "treatment column `{}` is not binary",
                self.treatment
            )));
        }
        Ok(col
            .values
            .iter()
            .zip(&col.missing)
            .map(|(&v, &m)| {
                if m {
                    f64::NAN
                } else if v == seen[0] {
                    0.0
                } else {
                    1.0
                }
            })
            .collect())
    }
}

/// Rows with no missing value in any of the named columns.
pub fn complete_cases(data: &Dataset, columns: &[&str]) -> Result<Vec<usize>> {
    let cols: Vec<&Column> = columns
        .iter()
        .map(|c| data.column(c))
        .collect::<Result<_>>()?;
    Ok((0..data.nrows())
        .filter(|&i| cols.iter().all(|c| !c.missing[i]))
        .collect())
}

/// Column declarations for CSV ingestion, in file order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

fn parse_cell(raw: &str, schema: &ColumnSchema, row: usize) -> Result<(f64, bool)> {
    let raw = raw.trim();
    if raw.is_empty() || raw == "NA" {
        return Ok((f64::NAN, true));
    }
    let v = match &schema.kind {
        ColumnKind::Ordinal { levels } | ColumnKind::Nominal { levels } => levels
            .iter()
            .position(|l| l == raw)
            .map(|k| k as f64)
            .ok_or_else(|| Error::UnknownLevel {
                column: schema.name.clone(),
                level: raw.to_string(),
                row,
            })?,
        _ => raw.parse::<f64>().map_err(|e| Error::CsvCell {
            row,
            column: schema.name.clone(),
            message: e.to_string(),
        })?,
    };
    Ok((v, false))
}

/// Parse a CSV file against a declared schema. Header row must match the
/// schema names; `NA` or an empty field encodes a missing value.
pub fn load_csv(path: &Path, schema: &[ColumnSchema]) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &[ColumnSchema]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    if headers.len() != schema.len() {
        return Err(Error::Csv(format!(
            "header has {} columns, schema declares {}",
            headers.len(),
            schema.len()
        )));
    }
    for (h, s) in headers.iter().zip(schema) {
        if h.trim() != s.name {
            return Err(Error::Csv(format!(
                "header column `{}` does not match schema name `{}`",
                h, s.name
            )));
        }
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    let mut missing: Vec<Vec<bool>> = vec![Vec::new(); schema.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.len() != schema.len() {
            return Err(Error::Csv(format!(
                "row {row} has {} fields, expected {}",
                rec.len(),
                schema.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            let (v, m) = parse_cell(cell, &schema[j], row)?;
            values[j].push(v);
            missing[j].push(m);
        }
    }
    let columns = schema
        .iter()
        .zip(values.into_iter().zip(missing))
        .map(|(s, (values, missing))| Column {
            name: s.name.clone(),
            kind: s.kind.clone(),
            values,
            missing,
        })
        .collect();
    Dataset::new(columns)
}

fn format_cell(col: &Column, i: usize) -> String {
    if col.missing[i] {
        return "NA".to_string();
    }
    let v = col.values[i];
    match &col.kind {
        ColumnKind::Ordinal { levels } | ColumnKind::Nominal { levels } => {
            levels[v as usize].clone()
        }
        ColumnKind::Event => format!("{}", v as i64),
        // 17 significant digits round-trips every f64 exactly
        ColumnKind::Continuous | ColumnKind::Time => format!("{:.16e}", v),
    }
}

pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_writer(data, file)
}

pub fn write_csv_writer<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(data.columns().iter().map(|c| c.name.as_str()))
        .map_err(|e| Error::Csv(e.to_string()))?;
    for i in 0..data.nrows() {
        wtr.write_record(data.columns().iter().map(|c| format_cell(c, i)))
            .map_err(|e| Error::Csv(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
