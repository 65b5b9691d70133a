//! Threshold bias `β*(α, δ)` over a grid: the level set `φ_k = 1`.

use crate::error::{domain, Error, Result};
use crate::powerlaw::TailExponent;
use crate::rooney::{beta_star, Threshold};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Cell {
    Finite { beta_star: f64 },
    NoThreshold,
    /// `φ_k` was not monotone in β on the scan grid.
    MultiCrossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub alpha_axis: Vec<f64>,
    pub delta_axis: Vec<f64>,
    pub k: u64,
    /// Row-major: all δ values for the first α, then the next α.
    pub cells: Vec<Cell>,
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == points - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// 40 log-spaced α in `[0.01, 1]`.
pub fn default_alpha_axis() -> Vec<f64> {
    log_axis(0.01, 1.0, 40)
}

/// 40 evenly spaced δ in `[0.05, 4]`.
pub fn default_delta_axis() -> Vec<f64> {
    linear_axis(0.05, 4.0, 40)
}

fn check_axis(name: &str, axis: &[f64], valid: impl Fn(f64) -> bool) -> Result<()> {
    if axis.is_empty() {
        return Err(domain(format!("{name} axis is empty")));
    }
    if let Some(v) = axis.iter().find(|v| !valid(**v)) {
        return Err(domain(format!("{name} axis value {v} is out of range")));
    }
    if axis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(domain(format!("{name} axis must be strictly increasing")));
    }
    Ok(())
}

/// Evaluates [`beta_star`] on every `(α, δ)` pair. Cells are computed in
/// parallel but stored in row-major order.
pub fn sweep(alpha_axis: &[f64], delta_axis: &[f64], k: u64) -> Result<SurfaceGrid> {
    check_axis("alpha", alpha_axis, |a| a > 0.0 && a <= 1.0)?;
    check_axis("delta", delta_axis, |d| d > 0.0 && d.is_finite())?;
    if k < 2 {
        return Err(domain(format!("surface needs k >= 2 (got {k})")));
    }
    let nd = delta_axis.len();
    let cells = (0..alpha_axis.len() * nd)
        .into_par_iter()
        .map(|idx| {
            let alpha = alpha_axis[idx / nd];
            let delta = TailExponent::new(delta_axis[idx % nd])?;
            match beta_star(alpha, delta, k) {
                Ok(Threshold::Finite(b)) => Ok(Cell::Finite { beta_star: b }),
                Ok(Threshold::NoThreshold) => Ok(Cell::NoThreshold),
                Err(Error::MultiCrossing) => Ok(Cell::MultiCrossing),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurfaceGrid {
        alpha_axis: alpha_axis.to_vec(),
        delta_axis: delta_axis.to_vec(),
        k,
        cells,
    })
}

fn cell_text(cell: &Cell) -> String {
    match cell {
        Cell::Finite { beta_star } => format!("{beta_star}"),
        Cell::NoThreshold => "inf".into(),
        Cell::MultiCrossing => "nan".into(),
    }
}

impl SurfaceGrid {
    pub fn cell(&self, alpha_index: usize, delta_index: usize) -> Cell {
        self.cells[alpha_index * self.delta_axis.len() + delta_index]
    }

    /// `(α, δ, cell)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, Cell)> + '_ {
        let nd = self.delta_axis.len();
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, c)| (self.alpha_axis[i / nd], self.delta_axis[i % nd], *c))
    }

    /// `alpha,delta,k,beta_star`; `inf` marks no threshold, `nan` a non-monotone cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,delta,k,beta_star\n");
        for (a, d, c) in self.iter() {
            let _ = writeln!(out, "{a},{d},{},{}", self.k, cell_text(&c));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
        if header.iter().ne(["alpha", "delta", "k", "beta_star"]) {
            return Err(Error::Parse {
                line: 1,
                message: "expected header alpha,delta,k,beta_star".into(),
            });
        }
        let mut rows: Vec<(f64, f64, u64, Cell)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| parse_err(0, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("field {:?} is not a number", &rec[i]),
                })
            };
            let k: u64 = rec[2].parse().map_err(|_| Error::Parse {
                line,
                message: format!("k {:?} is not an integer", &rec[2]),
            })?;
            let cell = match &rec[3] {
                "inf" => Cell::NoThreshold,
                "nan" => Cell::MultiCrossing,
                _ => Cell::Finite { beta_star: num(3)? },
            };
            rows.push((num(0)?, num(1)?, k, cell));
        }
        let Some(&(_, _, k, _)) = rows.first() else {
            return Err(Error::Parse {
                line: 2,
                message: "grid has no cells".into(),
            });
        };
        let mut alpha_axis: Vec<f64> = Vec::new();
        let mut delta_axis: Vec<f64> = Vec::new();
        for &(a, d, _, _) in &rows {
            if alpha_axis.last() != Some(&a) {
                alpha_axis.push(a);
            }
            if alpha_axis.len() == 1 {
                delta_axis.push(d);
            }
        }
        let grid = SurfaceGrid {
            cells: rows.iter().map(|r| r.3).collect(),
            alpha_axis,
            delta_axis,
            k,
        };
        let consistent = grid.cells.len() == grid.alpha_axis.len() * grid.delta_axis.len()
            && grid.iter().zip(&rows).all(|((a, d, _), r)| a == r.0 && d == r.1 && r.2 == k);
        if !consistent {
            return Err(Error::Parse {
                line: 0,
                message: "rows do not form a row-major alpha by delta grid".into(),
            });
        }
        Ok(grid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    /// Whitespace table with a blank line between α blocks, for `splot`.
    pub fn to_gnuplot(&self) -> String {
        let mut out = format!("# alpha delta beta_star (k = {})\n", self.k);
        let nd = self.delta_axis.len();
        for (i, (a, d, c)) in self.iter().enumerate() {
            if i > 0 && i % nd == 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "{a} {d} {}", cell_text(&c));
        }
        out
    }

    pub fn count_finite(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c, Cell::Finite { .. })).count()
    }

    pub fn count_no_threshold(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c, Cell::NoThreshold)).count()
    }

    pub fn count_multi_crossing(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c, Cell::MultiCrossing)).count()
    }
}

fn parse_err(fallback: u64, e: csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(fallback, |p| p.line()),
        message: e.to_string(),
    }
}
