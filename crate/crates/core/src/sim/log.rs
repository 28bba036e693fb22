//! Run logs: one row per outer controller tick, written as CSV.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RunLog {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Columns `prefix_0`, `prefix_1`, ... stacked per row.
    pub fn vector_column(&self, prefix: &str) -> Vec<Vec<f64>> {
        let idx: Vec<usize> = (0..)
            .map_while(|k| self.column_index(&format!("{prefix}_{k}")))
            .collect();
        self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect()
    }

    /// CSV text; floats carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = std::fs::File::create(path).map_err(io)?;
        file.write_all(self.to_csv().as_bytes()).map_err(io)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
        let columns: Vec<String> = header.split(',').map(str::to_owned).collect();
        let mut log = Self::new(columns);
        for (k, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("CSV line {}: {e}", k + 2)))?;
            if row.len() != log.columns.len() {
                return Err(Error::Parse(format!(
                    "CSV line {} has {} cells, header has {}",
                    k + 2,
                    row.len(),
                    log.columns.len()
                )));
            }
            log.rows.push(row);
        }
        Ok(log)
    }

    pub fn metrics(&self) -> RunMetrics {
        let stat = |name: &str| Stat::of(&self.column(name).unwrap_or_default());
        RunMetrics {
            samples: self.len(),
            s_err_norm: stat("s_err_norm"),
            com_err_norm: stat("com_err_norm"),
            h_lin_err_norm: stat("h_lin_err_norm"),
            min_cone_margin: self.column("cone_margin").map(|c| c.into_iter().fold(f64::INFINITY, f64::min)),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub rms: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(x: &[f64]) -> Self {
        if x.is_empty() {
            return Self::default();
        }
        Self {
            rms: (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt(),
            max: x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub samples: usize,
    pub s_err_norm: Stat,
    pub com_err_norm: Stat,
    pub h_lin_err_norm: Stat,
    /// Smallest realized cone margin (N); absent for fixed-base runs.
    pub min_cone_margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: RunMetrics,
    pub b: RunMetrics,
    /// `a / b` for each statistic; 1 when both are zero.
    pub ratio: RatioMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioMetrics {
    pub s_err_norm: Stat,
    pub com_err_norm: Stat,
    pub h_lin_err_norm: Stat,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

fn stat_ratio(a: Stat, b: Stat) -> Stat {
    Stat {
        rms: ratio(a.rms, b.rms),
        max: ratio(a.max, b.max),
    }
}

/// RMS and max error norms of two runs on the same sampling grid.
pub fn compare_runs(a: &RunLog, b: &RunLog) -> Result<ComparisonReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Comparison("empty run log".into()));
    }
    let (ta, tb) = (a.column("t"), b.column("t"));
    match (ta, tb) {
        (Some(ta), Some(tb)) if ta.len() == tb.len() => {
            if let Some(k) = ta.iter().zip(&tb).position(|(x, y)| (x - y).abs() > 1e-9) {
                return Err(Error::Comparison(format!("sample {k} at t = {} vs {}", ta[k], tb[k])));
            }
        }
        (Some(ta), Some(tb)) => {
            return Err(Error::Comparison(format!("{} samples vs {}", ta.len(), tb.len())));
        }
        _ => return Err(Error::Comparison("missing time column".into())),
    }
    let (ma, mb) = (a.metrics(), b.metrics());
    Ok(ComparisonReport {
        ratio: RatioMetrics {
            s_err_norm: stat_ratio(ma.s_err_norm, mb.s_err_norm),
            com_err_norm: stat_ratio(ma.com_err_norm, mb.com_err_norm),
            h_lin_err_norm: stat_ratio(ma.h_lin_err_norm, mb.h_lin_err_norm),
        },
        a: ma,
        b: mb,
    })
}
