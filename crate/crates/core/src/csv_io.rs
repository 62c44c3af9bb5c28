//! CSV ingestion and export for [`Dataset`]s.
//!
//! Files carry a header row, an optional index column holding either
//! integers or ISO-8601 dates, one count column and any number of input
//! columns. Empty cells and `NA` denote missing values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Dataset, Origin, TimeSeries};

/// What to do with a missing input cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Error,
    /// Linear interpolation between the nearest observed neighbours.
    Interpolate,
    /// Remove the whole row; later rows are renumbered.
    DropRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self { name: name.into(), unit: unit.into() }
    }
}

/// Column roles for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub index_column: Option<String>,
    pub output: ColumnSpec,
    pub inputs: Vec<ColumnSpec>,
    #[serde(default)]
    pub missing: MissingPolicy,
}

enum IndexValue {
    Int(i64),
    Date(NaiveDate),
}

fn parse_index(cell: &str, line: usize) -> Result<IndexValue> {
    let cell = cell.trim();
    if let Ok(i) = cell.parse::<i64>() {
        return Ok(IndexValue::Int(i));
    }
    NaiveDate::parse_from_str(cell, "%Y-%m-%d")
        .map(IndexValue::Date)
        .map_err(|_| Error::Parse {
            line,
            message: format!("index `{cell}` is neither an integer nor an ISO-8601 date"),
        })
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    if schema.inputs.is_empty() {
        return Err(Error::Precondition("schema names no input columns".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if headers.is_empty() {
        return Err(Error::Parse { line: 1, message: "missing header row".into() });
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column `{name}`") })
    };
    let index_col = schema.index_column.as_deref().map(find).transpose()?;
    let out_col = find(&schema.output.name)?;
    let in_cols = schema
        .inputs
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<Vec<_>>>()?;

    let mut lines = Vec::new();
    let mut index = Vec::new();
    let mut counts = Vec::new();
    let mut inputs: Vec<Vec<Option<f64>>> = vec![Vec::new(); in_cols.len()];

    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let idx = index_col.map(|c| parse_index(&rec[c], line)).transpose()?;
        let raw = rec[out_col].trim();
        if is_missing(raw) {
            if schema.missing == MissingPolicy::DropRow {
                continue;
            }
            return Err(Error::Parse {
                line,
                message: format!("missing value in output column `{}`", schema.output.name),
            });
        }
        let y: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("non-numeric output value `{raw}`"),
        })?;
        if !(y >= 0.0 && y.fract() == 0.0 && y.is_finite()) {
            return Err(Error::Parse {
                line,
                message: format!("output value `{raw}` is not a nonnegative integer count"),
            });
        }
        let mut row = Vec::with_capacity(in_cols.len());
        let mut drop = false;
        for (&c, spec) in in_cols.iter().zip(&schema.inputs) {
            let cell = rec[c].trim();
            if is_missing(cell) {
                match schema.missing {
                    MissingPolicy::Error => {
                        return Err(Error::Parse {
                            line,
                            message: format!("missing value in column `{}`", spec.name),
                        })
                    }
                    MissingPolicy::DropRow => drop = true,
                    MissingPolicy::Interpolate => {}
                }
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("non-numeric value `{cell}` in column `{}`", spec.name),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-finite value in column `{}`", spec.name),
                    });
                }
                row.push(Some(v));
            }
        }
        if drop {
            continue;
        }
        index.extend(idx);
        lines.push(line);
        counts.push(y);
        for (col, v) in inputs.iter_mut().zip(row) {
            col.push(v);
        }
    }
    if counts.is_empty() {
        return Err(Error::Parse { line: 1, message: "no data rows".into() });
    }

    let origin = match index.first() {
        None => Origin::Index(0),
        Some(first) => {
            if schema.missing != MissingPolicy::DropRow {
                check_spacing(&index, &lines)?;
            }
            match first {
                IndexValue::Int(i) => Origin::Index(*i),
                IndexValue::Date(d) => Origin::Date(*d),
            }
        }
    };

    let mut series = Vec::with_capacity(inputs.len());
    for (col, spec) in inputs.into_iter().zip(&schema.inputs) {
        let values = interpolate(col, &lines, &spec.name)?;
        series.push(
            TimeSeries::new(spec.name.clone(), values)?
                .with_unit(spec.unit.clone())
                .with_origin(origin),
        );
    }
    let output = TimeSeries::new(schema.output.name.clone(), counts)?
        .with_unit(schema.output.unit.clone())
        .with_origin(origin);
    Dataset::new(output, series)
}

fn check_spacing(index: &[IndexValue], lines: &[usize]) -> Result<()> {
    for (k, w) in index.windows(2).enumerate() {
        let ok = match (&w[0], &w[1]) {
            (IndexValue::Int(a), IndexValue::Int(b)) => b - a == 1,
            (IndexValue::Date(a), IndexValue::Date(b)) => (*b - *a).num_days() == 1,
            _ => false,
        };
        if !ok {
            return Err(Error::Parse {
                line: lines[k + 1],
                message: "index is not equally spaced with unit step".into(),
            });
        }
    }
    Ok(())
}

fn interpolate(col: Vec<Option<f64>>, lines: &[usize], name: &str) -> Result<Vec<f64>> {
    let known: Vec<usize> = (0..col.len()).filter(|&t| col[t].is_some()).collect();
    let mut out = Vec::with_capacity(col.len());
    for (t, v) in col.iter().enumerate() {
        match v {
            Some(v) => out.push(*v),
            None => {
                let after = known.partition_point(|&k| k < t);
                if after == 0 || after == known.len() {
                    return Err(Error::Parse {
                        line: lines[t],
                        message: format!("cannot interpolate `{name}` at the edge of the record"),
                    });
                }
                let (lo, hi) = (known[after - 1], known[after]);
                let (a, b) = (col[lo].unwrap(), col[hi].unwrap());
                let w = (t - lo) as f64 / (hi - lo) as f64;
                out.push(a + w * (b - a));
            }
        }
    }
    Ok(out)
}

/// Writes a dataset as CSV with an index column named `index_name`.
pub fn write_csv<W: Write>(data: &Dataset, index_name: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![index_name.to_string(), data.output().name().to_string()];
    header.extend(data.inputs().iter().map(|x| x.name().to_string()));
    w.write_record(&header).map_err(csv_io)?;
    let origin = data.output().origin();
    for t in 0..data.len() {
        let mut row = vec![origin.advance(t).to_string(), format!("{}", data.counts()[t])];
        row.extend(data.inputs().iter().map(|x| format!("{}", x.values()[t])));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
