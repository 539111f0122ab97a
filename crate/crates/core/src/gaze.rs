//! Gaze binning into areas of interest (AOIs) and gaze entropy.
//!
//! Stationary gaze entropy is the Shannon entropy of AOI occupancy. Gaze
//! transition entropy is the occupancy-weighted entropy of the rows of the
//! first-order AOI transition matrix. All entropies are in bits, with
//! `0 · log 0 = 0`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;

#[derive(Debug, Error)]
pub enum GazeError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid AOI grid: {0}")]
    InvalidGrid(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("symbol {symbol} outside 0..{n_bins}")]
    SymbolOutOfRange { symbol: usize, n_bins: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GazeError> = std::result::Result<T, E>;

/// Equal-sized cells over a rectangle of gaze angles (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoiGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for AoiGrid {
    fn default() -> Self {
        Self {
            x_min: -0.6,
            x_max: 0.6,
            y_min: -0.6,
            y_max: 0.6,
            rows: 4,
            cols: 4,
        }
    }
}

impl AoiGrid {
    pub fn with_shape(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(GazeError::InvalidGrid("bounds must satisfy min < max".into()));
        }
        if self.rows * self.cols < 2 {
            return Err(GazeError::InvalidGrid("need at least 2 cells".into()));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.rows * self.cols
    }

    /// Cell index `row · cols + col` of a point, clamped into the grid.
    /// Cells are half-open `[low, high)` except the last along each axis.
    pub fn cell(&self, x: f64, y: f64) -> usize {
        let pos = |v: f64, lo: f64, hi: f64, k: usize| -> usize {
            let f = ((v - lo) / (hi - lo) * k as f64).floor();
            if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(k - 1)
            }
        };
        let col = pos(x, self.x_min, self.x_max, self.cols);
        let row = pos(y, self.y_min, self.y_max, self.rows);
        row * self.cols + col
    }

    /// Centre of a cell, `(x, y)`.
    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let (row, col) = (cell / self.cols, cell % self.cols);
        let w = (self.x_max - self.x_min) / self.cols as f64;
        let h = (self.y_max - self.y_min) / self.rows as f64;
        (
            self.x_min + (col as f64 + 0.5) * w,
            self.y_min + (row as f64 + 0.5) * h,
        )
    }
}

/// AOI symbols with their timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSequence {
    pub times: Vec<f64>,
    pub symbols: Vec<usize>,
    pub n_bins: usize,
}

/// Maps `(t, x, y)` gaze samples to AOI symbols.
pub fn bin_gaze(angles: &[(f64, f64, f64)], grid: &AoiGrid) -> Result<SymbolSequence> {
    grid.validate()?;
    if angles.is_empty() {
        return Err(GazeError::EmptyInput("no gaze samples"));
    }
    Ok(SymbolSequence {
        times: angles.iter().map(|a| a.0).collect(),
        symbols: angles.iter().map(|&(_, x, y)| grid.cell(x, y)).collect(),
        n_bins: grid.n_bins(),
    })
}

fn entropy_bits(counts: impl IntoIterator<Item = f64>) -> f64 {
    let counts: Vec<f64> = counts.into_iter().filter(|&c| c > 0.0).collect();
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h = -counts
        .iter()
        .map(|&c| {
            let p = c / total;
            p * p.log2()
        })
        .sum::<f64>();
    h.max(0.0)
}

/// Stationary gaze entropy of the symbol occupancy.
pub fn sge(symbols: &[usize]) -> Result<f64> {
    if symbols.is_empty() {
        return Err(GazeError::EmptyInput("no symbols"));
    }
    let n_bins = symbols.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0.0; n_bins];
    for &s in symbols {
        counts[s] += 1.0;
    }
    Ok(entropy_bits(counts))
}

/// First-order transition counts and row-normalized probabilities. Rows with
/// no outgoing transitions are uniform and flagged as unobserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub counts: Vec<Vec<u64>>,
    pub probs: Vec<Vec<f64>>,
    pub observed: Vec<bool>,
}

pub fn transition_matrix(symbols: &[usize], n_bins: usize) -> Result<TransitionCounts> {
    if symbols.len() < 2 {
        return Err(GazeError::EmptyInput("need at least 2 symbols"));
    }
    if let Some(&s) = symbols.iter().find(|&&s| s >= n_bins) {
        return Err(GazeError::SymbolOutOfRange { symbol: s, n_bins });
    }
    let mut counts = vec![vec![0u64; n_bins]; n_bins];
    for w in symbols.windows(2) {
        counts[w[0]][w[1]] += 1;
    }
    let mut observed = vec![false; n_bins];
    let probs = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                vec![1.0 / n_bins as f64; n_bins]
            } else {
                observed[i] = true;
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(TransitionCounts {
        counts,
        probs,
        observed,
    })
}

/// How the row weights `π_i` of the transition entropy are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationaryMode {
    /// Share of transitions that leave bin `i`.
    #[default]
    Empirical,
    /// Stationary vector of the estimated transition matrix.
    Stationary,
}

fn stationary_vector(probs: &[Vec<f64>]) -> Vec<f64> {
    let n = probs.len();
    let mut pi = vec![1.0 / n as f64; n];
    // lazy chain: same fixed point, no periodic oscillation
    for _ in 0..100_000 {
        let mut next = vec![0.0; n];
        for (i, row) in probs.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                next[j] += pi[i] * p;
            }
        }
        let mut delta = 0.0;
        for j in 0..n {
            let v = 0.5 * (pi[j] + next[j]);
            delta += (v - pi[j]).abs();
            pi[j] = v;
        }
        if delta < 1e-14 {
            break;
        }
    }
    pi
}

/// Gaze transition entropy with empirical source-occupancy weights.
pub fn gte(symbols: &[usize], n_bins: usize) -> Result<f64> {
    gte_with(symbols, n_bins, StationaryMode::Empirical)
}

pub fn gte_with(symbols: &[usize], n_bins: usize, mode: StationaryMode) -> Result<f64> {
    let tm = transition_matrix(symbols, n_bins)?;
    let weights = match mode {
        StationaryMode::Empirical => {
            let total = (symbols.len() - 1) as f64;
            tm.counts
                .iter()
                .map(|row| row.iter().sum::<u64>() as f64 / total)
                .collect()
        }
        StationaryMode::Stationary => stationary_vector(&tm.probs),
    };
    let h = tm
        .counts
        .iter()
        .zip(&weights)
        .zip(&tm.observed)
        .filter(|(_, &obs)| obs)
        .map(|((row, w), _)| w * entropy_bits(row.iter().map(|&c| c as f64)))
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Entropies over rolling windows; `None` marks windows with fewer than two
/// symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySeries {
    pub window_centers: Vec<f64>,
    pub sge: Vec<Option<f64>>,
    pub gte: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_s: f64,
    pub stride_s: f64,
    pub mode: StationaryMode,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_s: 240.0,
            stride_s: 1.0,
            mode: StationaryMode::Empirical,
        }
    }
}

/// Computes SGE and GTE over windows `[c - w/2, c + w/2)`.
///
/// The sequence spans `[t_first, t_last + dt)` with `dt` the median sample
/// spacing. Windows start at `t_first` and advance by the stride while they
/// fit inside the span; a window wider than the span yields one window over
/// the whole sequence.
pub fn rolling_entropy(seq: &SymbolSequence, cfg: &WindowConfig, exec: Exec) -> Result<EntropySeries> {
    if !(cfg.window_s > 0.0 && cfg.stride_s > 0.0) {
        return Err(GazeError::InvalidWindow(format!(
            "window ({}) and stride ({}) must be positive",
            cfg.window_s, cfg.stride_s
        )));
    }
    let times = &seq.times;
    if times.is_empty() {
        return Err(GazeError::EmptyInput("no symbols"));
    }
    let dt = crate::ingest::median_spacing(times).unwrap_or(0.0);
    let start = times[0];
    let end = times[times.len() - 1] + dt;
    let span = end - start;
    let centers: Vec<f64> = if cfg.window_s >= span {
        vec![start + span / 2.0]
    } else {
        let eps = 1e-9 * span.max(1.0);
        let count = ((span - cfg.window_s + eps) / cfg.stride_s).floor() as usize + 1;
        (0..count)
            .map(|k| start + k as f64 * cfg.stride_s + cfg.window_s / 2.0)
            .collect()
    };
    let whole = cfg.window_s >= span;
    let results = exec.map_slice(&centers, |&c| -> Result<(Option<f64>, Option<f64>)> {
        let (lo, hi) = if whole {
            (0, times.len())
        } else {
            let lo_t = c - cfg.window_s / 2.0;
            let hi_t = c + cfg.window_s / 2.0;
            (
                times.partition_point(|&t| t < lo_t),
                times.partition_point(|&t| t < hi_t),
            )
        };
        let window = &seq.symbols[lo..hi];
        if window.len() < 2 {
            return Ok((None, None));
        }
        Ok((Some(sge(window)?), Some(gte_with(window, seq.n_bins, cfg.mode)?)))
    });
    let mut out = EntropySeries {
        window_centers: centers,
        sge: Vec::with_capacity(results.len()),
        gte: Vec::with_capacity(results.len()),
    };
    for r in results {
        let (s, g) = r?;
        out.sge.push(s);
        out.gte.push(g);
    }
    Ok(out)
}

/// Writes `t,sge_bits,gte_bits`; gap windows have empty fields.
pub fn write_entropy_csv(path: &Path, series: &EntropySeries) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,sge_bits,gte_bits")?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for ((t, s), g) in series.window_centers.iter().zip(&series.sge).zip(&series.gte) {
        writeln!(out, "{t},{},{}", fmt(*s), fmt(*g))?;
    }
    out.flush()?;
    Ok(())
}
