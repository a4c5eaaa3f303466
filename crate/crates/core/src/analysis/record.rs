//! Per-run episode log and its CSV form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const BASE_COLUMNS: [&str; 5] = ["step", "episode", "return_raw", "return_norm", "eval_return_norm"];

/// Which optional columns a record carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Columns {
    /// Guide step per episode.
    pub h: bool,
    /// Evaluator estimates per episode.
    pub values: bool,
}

impl Columns {
    pub fn header(self) -> Vec<&'static str> {
        let mut h = BASE_COLUMNS.to_vec();
        if self.h {
            h.push("h");
        }
        if self.values {
            h.extend(["v_ft", "v_init"]);
        }
        h
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    /// Environment steps taken so far.
    pub step: u64,
    pub episode: u64,
    pub return_raw: Option<f64>,
    pub return_norm: Option<f64>,
    pub eval_return_norm: Option<f64>,
    pub h: Option<f64>,
    pub v_ft: Option<f64>,
    pub v_init: Option<f64>,
}

/// Episode log of one fine-tuning run. Row 0 is the evaluation before any
/// update; later rows are training episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub seed: u64,
    pub config_hash: String,
    pub columns: Columns,
    pub rows: Vec<RunRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl RunRecord {
    pub fn new(algorithm: impl Into<String>, seed: u64, config_hash: impl Into<String>, columns: Columns) -> Self {
        Self {
            algorithm: algorithm.into(),
            seed,
            config_hash: config_hash.into(),
            columns,
            rows: Vec::new(),
        }
    }

    /// Normalized initial evaluation return.
    pub fn p0(&self) -> Option<f64> {
        self.rows.first().and_then(|r| r.eval_return_norm)
    }

    /// `(step, value)` of every periodic evaluation after the initial one.
    pub fn eval_series(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .skip(1)
            .filter_map(|r| r.eval_return_norm.map(|v| (r.step as f64, v)))
            .collect()
    }

    /// `(step, value)` of normalized training-episode returns.
    pub fn online_series(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.return_norm.map(|v| (r.step as f64, v)))
            .collect()
    }

    pub fn h_series(&self) -> Vec<(f64, f64)> {
        self.rows.iter().filter_map(|r| r.h.map(|h| (r.step as f64, h))).collect()
    }

    /// Steps are non-decreasing; when present, `h` stays in `[0, horizon]`
    /// and never increases.
    pub fn validate(&self, horizon: Option<usize>) -> Result<()> {
        let mut prev_step = 0;
        let mut prev_h = f64::INFINITY;
        for (i, r) in self.rows.iter().enumerate() {
            if r.step < prev_step {
                return Err(Error::InvalidArgument(format!("row {i}: step {} decreases", r.step)));
            }
            prev_step = r.step;
            if let Some(h) = r.h {
                if h < 0.0 || horizon.is_some_and(|t| h > t as f64) {
                    return Err(Error::InvalidArgument(format!("row {i}: guide step {h} out of range")));
                }
                if h > prev_h {
                    return Err(Error::InvalidArgument(format!("row {i}: guide step grows from {prev_h} to {h}")));
                }
                prev_h = h;
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.header().join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![
                r.step.to_string(),
                r.episode.to_string(),
                cell(r.return_raw),
                cell(r.return_norm),
                cell(r.eval_return_norm),
            ];
            if self.columns.h {
                cells.push(cell(r.h));
            }
            if self.columns.values {
                cells.push(cell(r.v_ft));
                cells.push(cell(r.v_init));
            }
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// Parses rows written by [`Self::to_csv`]; identity fields come from the caller.
    pub fn from_csv(text: &str, algorithm: &str, seed: u64, config_hash: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        let columns = Columns {
            h: header.contains(&"h"),
            values: header.contains(&"v_ft"),
        };
        if header != columns.header() {
            return Err(Error::Config(format!("unexpected record header {header:?}")));
        }
        let col = |name: &str| header.iter().position(|h| *h == name);
        let mut record = Self::new(algorithm, seed, config_hash, columns);
        for (n, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(Error::Config(format!("record line {}: {} cells", n + 2, cells.len())));
            }
            let num = |name: &str| -> Result<Option<f64>> {
                match col(name).map(|i| cells[i]) {
                    None | Some("") => Ok(None),
                    Some(s) => s
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::Config(format!("record line {}: {name}: {e}", n + 2))),
                }
            };
            let int = |i: usize| -> Result<u64> {
                cells[i]
                    .parse()
                    .map_err(|e| Error::Config(format!("record line {}: {}: {e}", n + 2, header[i])))
            };
            record.rows.push(RunRow {
                step: int(0)?,
                episode: int(1)?,
                return_raw: num("return_raw")?,
                return_norm: num("return_norm")?,
                eval_return_norm: num("eval_return_norm")?,
                h: num("h")?,
                v_ft: num("v_ft")?,
                v_init: num("v_init")?,
            });
        }
        Ok(record)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}
