//! Dataset and market ingestion, result serialization, synthetic data.
//!
//! Every file is line-oriented tab-delimited text with a mandatory header
//! row; decimal points are periods and numbers are written with six
//! significant digits, so canonical files round-trip byte-identically.

use thiserror::Error;

use crate::choice::ChoiceError;
use crate::spatial::SpatialError;

mod coeffs;
mod market;
mod synth;
mod trips;

pub use coeffs::{
    load_coefficients, save_coefficients, write_comparison_table, write_engagement_table,
    write_estimation_report, write_probability_field, write_substitutability_matrix,
    LoadedCoefficients,
};
pub use market::{load_market, save_market, MarketLoad};
pub use synth::{generate_synthetic, synthetic_market, ContextMix};
pub use trips::{load_trips, save_trips, RejectedRow, TripLoad};

pub const DELIMITER: char = '\t';

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("dangling reference {id:?}: {context}")]
    Reference { id: String, context: String },
    #[error("distance matrix: {message}")]
    Matrix { message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{reason}")]
    Invalid { reason: String },
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Choice(#[from] ChoiceError),
}

/// Formats a float with six significant digits, shortest form, matching the
/// C `%.6g` conversion. The canonical number format of every file we write.
pub fn fmt_sig6(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let magnitude = value.abs();
    let exp = magnitude.log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{value:.decimals$}");
        trim_zeros(&s)
    } else {
        let mantissa = value / 10f64.powi(exp);
        let (mantissa, exp) = if mantissa.abs() >= 10.0 - 5e-6 {
            (mantissa / 10.0, exp + 1)
        } else {
            (mantissa, exp)
        };
        let m = trim_zeros(&format!("{mantissa:.5}"));
        format!("{m}e{exp:+03}")
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".to_string()
    } else {
        t.to_string()
    }
}

pub(crate) struct Table {
    pub path: String,
    pub header: Vec<String>,
    /// (1-based line number, cells)
    pub rows: Vec<(usize, Vec<String>)>,
}

/// Reads a tab-delimited table with a mandatory header. Blank lines and
/// `#` comment lines are skipped.
pub(crate) fn read_table(path: &std::path::Path) -> Result<Table, IoError> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let cells: Vec<String> = trimmed.split(DELIMITER).map(|c| c.trim().to_string()).collect();
        match &header {
            None => header = Some(cells),
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(IoError::Parse {
                        path: display,
                        line: i + 1,
                        message: format!("expected {} columns, found {}", h.len(), cells.len()),
                    });
                }
                rows.push((i + 1, cells));
            }
        }
    }
    let header = header.ok_or_else(|| IoError::Parse {
        path: display.clone(),
        line: 1,
        message: "missing header row".into(),
    })?;
    Ok(Table { path: display, header, rows })
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize, IoError> {
        self.header.iter().position(|h| h == name).ok_or_else(|| IoError::Parse {
            path: self.path.clone(),
            line: 1,
            message: format!("missing required column {name:?}"),
        })
    }

    pub fn parse_f64(&self, line: usize, cells: &[String], col: usize) -> Result<f64, IoError> {
        cells[col].parse::<f64>().map_err(|_| IoError::Parse {
            path: self.path.clone(),
            line,
            message: format!("column {:?}: {:?} is not a number", self.header[col], cells[col]),
        })
    }
}

/// Reads a `key = value` configuration file; `#` starts a comment.
pub(crate) fn read_config(path: &std::path::Path) -> Result<Vec<(String, String)>, IoError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string())
}

pub(crate) fn parse_config(text: &str, origin: &str) -> Result<Vec<(String, String)>, IoError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(IoError::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: format!("expected key = value, found {raw:?}"),
            });
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Parses `key = value` scenario-config text into ordered pairs.
pub fn parse_scenario_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>, IoError> {
    parse_config(text, origin)
}

pub(crate) fn parse_flag01(raw: &str) -> Option<bool> {
    match raw {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}
