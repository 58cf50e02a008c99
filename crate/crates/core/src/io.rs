//! CSV input and output of observation sets.
//!
//! Dialect: comma separated, header row, `.` decimal point, no missing values.
//! Floats are written with Rust's shortest round-trip formatting, so a
//! written-then-read dataset is bitwise identical.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, ObservationSet};

/// Which CSV columns hold each field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub time: String,
    pub status: String,
    pub z: String,
    pub w: String,
    pub covariates: Vec<String>,
}

impl ColumnMap {
    /// Column names used by [`write_observations`]: `y, status, z, w, x1, ..., xm`.
    pub fn standard(m: usize) -> Self {
        Self {
            time: "y".into(),
            status: "status".into(),
            z: "z".into(),
            w: "w".into(),
            covariates: (1..=m).map(|j| format!("x{j}")).collect(),
        }
    }

    fn all(&self) -> Vec<&str> {
        let mut v = vec![self.time.as_str(), self.status.as_str(), self.z.as_str(), self.w.as_str()];
        v.extend(self.covariates.iter().map(String::as_str));
        v
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.all();
        for (i, a) in all.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::Config("column names must be non-empty".into()));
            }
            if all[..i].contains(a) {
                return Err(Error::Config(format!("column '{a}' is mapped more than once")));
            }
        }
        Ok(())
    }
}

fn parse_number(field: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("row {row}, column '{column}': cannot parse '{field}' as a number")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("row {row}, column '{column}': value '{field}' is not finite")));
    }
    Ok(v)
}

/// Reads observations; `log_transform` replaces the time column by its natural log.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn read_observations<R: Read>(reader: R, map: &ColumnMap, log_transform: bool) -> Result<ObservationSet> {
    map.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found in header")))
    };
    let (it, is, iz, iw) = (index(&map.time)?, index(&map.status)?, index(&map.z)?, index(&map.w)?);
    let ix = map.covariates.iter().map(|c| index(c)).collect::<Result<Vec<_>>>()?;

    let mut obs = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record?;
        let get = |i: usize, name: &str| -> Result<f64> {
            let field = record
                .get(i)
                .ok_or_else(|| Error::Data(format!("row {row}: missing column '{name}'")))?;
            if field.trim().is_empty() {
                return Err(Error::Data(format!("row {row}, column '{name}': missing value")));
            }
            parse_number(field, row, name)
        };
        let mut y = get(it, &map.time)?;
        if log_transform {
            if y <= 0.0 {
                return Err(Error::Data(format!(
                    "row {row}, column '{}': time {y} must be positive to take logs",
                    map.time
                )));
            }
            y = y.ln();
        }
        let status = get(is, &map.status)?;
        let delta = match status {
            1.0 => true,
            0.0 => false,
            s => {
                return Err(Error::Data(format!(
                    "row {row}, column '{}': status must be 0 or 1, got {s}",
                    map.status
                )))
            }
        };
        let z = get(iz, &map.z)?;
        let w = get(iw, &map.w)?;
        let x = ix
            .iter()
            .zip(&map.covariates)
            .map(|(&i, name)| get(i, name))
            .collect::<Result<Vec<_>>>()?;
        obs.push(Observation::new(y, delta, x, w, z)?);
    }
    if obs.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    ObservationSet::new(obs)
}

/// Reads one numeric column by name.
pub fn read_column<R: Read>(reader: R, name: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let i = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Data(format!("column '{name}' not found in header")))?;
    let mut out = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let field = record
            .get(i)
            .ok_or_else(|| Error::Data(format!("row {}: missing column '{name}'", k + 1)))?;
        out.push(parse_number(field, k + 1, name)?);
    }
    Ok(out)
}

/// Name of the optional control-function column written by [`write_observations`].
pub const CONTROL_COLUMN: &str = "v";

/// Writes observations with the [`ColumnMap::standard`] header, followed by a
/// [`CONTROL_COLUMN`] when `control` is given.
pub fn write_observations<W: Write>(writer: W, data: &ObservationSet, control: Option<&[f64]>) -> Result<()> {
    if let Some(v) = control {
        if v.len() != data.len() {
            return Err(Error::Dimension(format!(
                "control column has {} entries for {} observations",
                v.len(),
                data.len()
            )));
        }
    }
    let map = ColumnMap::standard(data.m());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = map.all();
    if control.is_some() {
        header.push(CONTROL_COLUMN);
    }
    wtr.write_record(header)?;
    for (i, o) in data.iter().enumerate() {
        let mut rec = vec![
            o.y.to_string(),
            if o.delta { "1".into() } else { "0".into() },
            o.z.to_string(),
            o.w_tilde.to_string(),
        ];
        rec.extend(o.x_tilde.iter().map(f64::to_string));
        if let Some(v) = control {
            rec.push(v[i].to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ObservationSet {
        ObservationSet::new(vec![
            Observation::new(0.1 + 0.2, true, vec![1e-300, -2.5], 1.0, 0.0).unwrap(),
            Observation::new(-3.0e10, false, vec![std::f64::consts::PI, 7.0], 0.333, 1.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn bitwise_round_trip() {
        let data = sample();
        let mut buf = Vec::new();
        let control = [0.1, -1e-12];
        write_observations(&mut buf, &data, Some(&control)).unwrap();
        let back = read_observations(buf.as_slice(), &ColumnMap::standard(2), false).unwrap();
        assert_eq!(back, data);
        for (a, b) in back.iter().zip(data.iter()) {
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
        assert_eq!(read_column(buf.as_slice(), CONTROL_COLUMN).unwrap(), control);
    }

    #[test]
    fn bad_status_names_row() {
        let csv = "y,status,z,w,x1\n1,1,0,1,0.5\n2,2,0,1,0.5\n";
        let err = read_observations(csv.as_bytes(), &ColumnMap::standard(1), false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("status"), "{msg}");
    }

    #[test]
    fn malformed_and_missing_values() {
        let map = ColumnMap::standard(1);
        let bad = "y,status,z,w,x1\n1,1,0,abc,0.5\n";
        assert!(read_observations(bad.as_bytes(), &map, false).unwrap_err().to_string().contains("column 'w'"));
        let missing = "y,status,z,w,x1\n1,1,0,,0.5\n";
        assert!(read_observations(missing.as_bytes(), &map, false).unwrap_err().to_string().contains("missing"));
        let no_col = "y,status,z,x1\n1,1,0,0.5\n";
        assert!(read_observations(no_col.as_bytes(), &map, false).is_err());
        let ragged = "y,status,z,w,x1\n1,1,0,1\n";
        assert!(read_observations(ragged.as_bytes(), &map, false).is_err());
    }

    #[test]
    fn log_transform() {
        let map = ColumnMap::standard(0);
        let csv = "y,status,z,w\n2.718281828459045,1,0,1\n";
        let d = read_observations(csv.as_bytes(), &map, true).unwrap();
        assert!((d.observations()[0].y - 1.0).abs() < 1e-15);
        let zero = "y,status,z,w\n0,1,0,1\n";
        assert!(read_observations(zero.as_bytes(), &map, true).is_err());
    }

    #[test]
    fn duplicate_mapping_rejected() {
        let mut map = ColumnMap::standard(1);
        map.covariates = vec!["z".into()];
        assert!(map.validate().is_err());
    }
}
