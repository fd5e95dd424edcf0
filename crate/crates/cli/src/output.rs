//! Output tables and the run summary.
//!
//! Every CSV has a header row and one record per line; floats are written
//! in shortest round-trip form, so equal runs give byte-identical files.
//!
//! | file | columns |
//! |------|---------|
//! | `timeseries.csv` | `t, mass, u_min, u_max, v_min, v_max` |
//! | `residuals.csv` | `ladder, identity, h, dt, linf, l2, order, at_floor, pass` |
//! | `margins.csv` | `t, max_f, min_margin, rhs` |
//! | `pairs.csv` | `x1, x1_x, x1_y, t1, x2, x2_x, x2_y, t2, v1, v2, gamma, rhs, slack` |
//! | `zoo.csv` | `kind, quantity, formula, closed_form, discrete, gap, within_tolerance` |
//!
//! `order` is empty when it is undefined (fewer than two levels above the
//! rounding floor). `summary.txt` holds sorted `key = value` lines.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{io_err, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t: f64,
    pub mass: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub ladder: String,
    pub identity: String,
    pub h: f64,
    pub dt: f64,
    pub linf: f64,
    pub l2: f64,
    pub order: Option<f64>,
    pub at_floor: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub t: f64,
    pub max_f: f64,
    pub min_margin: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub x1: usize,
    pub x1_x: f64,
    pub x1_y: f64,
    pub t1: f64,
    pub x2: usize,
    pub x2_x: f64,
    pub x2_y: f64,
    pub t2: f64,
    pub v1: f64,
    pub v2: f64,
    pub gamma: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooRow {
    pub kind: String,
    pub quantity: String,
    pub formula: String,
    /// Max norm of the closed form.
    pub closed_form: f64,
    /// Max norm of the discrete quantity.
    pub discrete: f64,
    /// Max norm of their difference.
    pub gap: f64,
    /// Size of the individual terms that cancel in the closed form.
    pub scale: f64,
    pub within_tolerance: bool,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

/// Sorted `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Summary(BTreeMap<String, String>);

impl Summary {
    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        self.0.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .filter_map(|l| l.split_once(" = "))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.render()).map_err(io_err(path))
    }
}
