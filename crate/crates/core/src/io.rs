//! CSV exchange formats.
//!
//! Datasets: header `x1,…,xd,time,event,group`, event 1/0, group 0 = control,
//! 1 = treatment. Test points: header `x1,…,xd,true_cate,latent_t`.

use std::io::{Read, Write};

use crate::datagen::TestPoint;
use crate::error::{BenkError, Result};
use crate::survival::{Group, SurvivalDataset, SurvivalRecord};

fn csv_err(e: csv::Error) -> BenkError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => BenkError::Io(io),
        other => BenkError::Parse(format!("{other:?}")),
    }
}

fn feature_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes the records of every dataset in order under one header.
pub fn write_datasets_csv<W: Write>(writer: W, datasets: &[&SurvivalDataset]) -> Result<()> {
    let d = datasets
        .first()
        .map(|ds| ds.dim())
        .ok_or_else(|| BenkError::InvalidInput("no datasets to write".into()))?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = feature_header(d);
    header.extend(["time", "event", "group"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for ds in datasets {
        if ds.dim() != d {
            return Err(BenkError::DimensionMismatch {
                expected: d,
                got: ds.dim(),
            });
        }
        for r in ds.records() {
            let mut row: Vec<String> = r.features.iter().copied().map(fmt).collect();
            row.push(fmt(r.time));
            row.push(if r.event { "1" } else { "0" }.into());
            row.push(
                if r.group == Group::Treatment {
                    "1"
                } else {
                    "0"
                }
                .into(),
            );
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV and splits it into `(controls, treatments)`; either
/// side is `None` when it has no rows.
pub fn read_datasets_csv<R: Read>(
    reader: R,
) -> Result<(Option<SurvivalDataset>, Option<SurvivalDataset>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let n = cols.len();
    if n < 4 || cols[n - 3] != "time" || cols[n - 2] != "event" || cols[n - 1] != "group" {
        return Err(BenkError::Parse(
            "expected header x1,…,xd,time,event,group".into(),
        ));
    }
    let d = n - 3;
    let mut controls = Vec::new();
    let mut treatments = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            row.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| BenkError::Parse(format!("bad number in column {}", i + 1)))
        };
        let features = (0..d).map(num).collect::<Result<Vec<_>>>()?;
        let time = num(d)?;
        let event = flag(row.get(d + 1))?;
        let group = if flag(row.get(d + 2))? {
            Group::Treatment
        } else {
            Group::Control
        };
        let rec = SurvivalRecord::new(features, time, event, group)?;
        match group {
            Group::Control => controls.push(rec),
            Group::Treatment => treatments.push(rec),
        }
    }
    let build = |v: Vec<SurvivalRecord>| -> Result<Option<SurvivalDataset>> {
        if v.is_empty() {
            Ok(None)
        } else {
            SurvivalDataset::new(v).map(Some)
        }
    };
    Ok((build(controls)?, build(treatments)?))
}

fn flag(field: Option<&str>) -> Result<bool> {
    match field.map(str::trim) {
        Some("1") => Ok(true),
        Some("0") => Ok(false),
        other => Err(BenkError::Parse(format!("expected 0 or 1, got {other:?}"))),
    }
}

pub fn write_test_points_csv<W: Write>(writer: W, points: &[TestPoint]) -> Result<()> {
    let d = points
        .first()
        .map(|p| p.z.len())
        .ok_or_else(|| BenkError::InvalidInput("no test points to write".into()))?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = feature_header(d);
    header.extend(["true_cate", "latent_t"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for p in points {
        let mut row: Vec<String> = p.z.iter().copied().map(fmt).collect();
        row.push(fmt(p.true_cate));
        row.push(fmt(p.latent_t));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_test_points_csv<R: Read>(reader: R) -> Result<Vec<TestPoint>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let n = header.len();
    if n < 3 || &header[n - 2] != "true_cate" || &header[n - 1] != "latent_t" {
        return Err(BenkError::Parse(
            "expected header x1,…,xd,true_cate,latent_t".into(),
        ));
    }
    rdr.records()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            let vals = row
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| BenkError::Parse(format!("bad number {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TestPoint {
                z: vals[..n - 2].to_vec(),
                true_cate: vals[n - 2],
                latent_t: vals[n - 1],
            })
        })
        .collect()
}
