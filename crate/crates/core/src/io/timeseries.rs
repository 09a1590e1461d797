use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use super::fmt_f64;
use crate::calibration::ObservationSeries;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("missing column '{0}' (expected header date,roe,rate)")]
    MissingColumn(&'static str),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("row {row}: duplicate month {month}")]
    Duplicate { row: usize, month: String },
    #[error("gap in monthly series: {month} is missing")]
    Gap { month: String },
    #[error("empty series")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn month_key(d: NaiveDate) -> i32 {
    d.year() * 12 + d.month0() as i32
}

fn month_label(key: i32) -> String {
    format!("{:04}-{:02}", key.div_euclid(12), key.rem_euclid(12) + 1)
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d").ok())
}

/// Parses `date,roe,rate` rows, sorts them by date and checks that months
/// are consecutive.
pub fn parse_timeseries<R: Read>(reader: R) -> Result<ObservationSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(IngestError::MissingColumn(name))
    };
    let (i_date, i_roe, i_rate) = (col("date")?, col("roe")?, col("rate")?);
    let mut rows: Vec<(usize, NaiveDate, f64, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let rec = rec?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let date = parse_date(field(i_date)).ok_or_else(|| IngestError::Row {
            row,
            message: format!("bad date '{}' (expected YYYY-MM-DD)", field(i_date)),
        })?;
        let num = |j: usize, name: &str| -> Result<f64, IngestError> {
            let v: f64 = field(j).parse().map_err(|_| IngestError::Row {
                row,
                message: format!("non-numeric {name} '{}'", field(j)),
            })?;
            if !v.is_finite() {
                return Err(IngestError::Row {
                    row,
                    message: format!("non-finite {name} '{}'", field(j)),
                });
            }
            Ok(v)
        };
        rows.push((row, date, num(i_roe, "roe")?, num(i_rate, "rate")?));
    }
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    rows.sort_by_key(|r| r.1);
    for w in rows.windows(2) {
        let (a, b) = (month_key(w[0].1), month_key(w[1].1));
        if a == b {
            return Err(IngestError::Duplicate {
                row: w[1].0.max(w[0].0),
                month: month_label(a),
            });
        }
        if b > a + 1 {
            return Err(IngestError::Gap {
                month: month_label(a + 1),
            });
        }
    }
    Ok(ObservationSeries {
        dates: Some(rows.iter().map(|r| r.1).collect()),
        roe: rows.iter().map(|r| r.2).collect(),
        rate: rows.iter().map(|r| r.3).collect(),
    })
}

pub fn load_timeseries(path: &Path) -> Result<ObservationSeries, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_timeseries(std::io::BufReader::new(file))
}

/// Writes `date,roe,rate`. Series without dates are labelled monthly from
/// January 2000.
pub fn write_timeseries<W: Write>(series: &ObservationSeries, mut w: W) -> std::io::Result<()> {
    writeln!(w, "date,roe,rate")?;
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    for i in 0..series.len() {
        let date = match &series.dates {
            Some(d) => d[i],
            None => start
                .checked_add_months(chrono::Months::new(i as u32))
                .expect("date in range"),
        };
        writeln!(
            w,
            "{},{},{}",
            date.format("%Y-%m-%d"),
            fmt_f64(series.roe[i]),
            fmt_f64(series.rate[i])
        )?;
    }
    Ok(())
}
