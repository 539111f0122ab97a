//! Product-partition Bayesian change-point detection (Barry–Hartigan).
//!
//! Blocks carry their own mean under a shared noise variance. With flat
//! priors on the grand mean, `1/σ²` on the variance, and uniform priors on
//! the change probability `p ∈ [0, p0]` and the signal-to-noise ratio
//! `w ∈ [0, w0]`, the marginal posterior of a partition with `b` blocks is
//! proportional to
//!
//! ```text
//! ∫₀^p0 p^(b-1) (1-p)^(n-b) dp · ∫₀^w0 w^(d(b-1)/2) / (W + B w)^(d(n-1)/2) dw
//! ```
//!
//! where `B` and `W` are the between- and within-block sums of squares. The
//! posterior over partitions is sampled with a single-site Gibbs sampler over
//! the change indicators.
//!
//! Multivariate input shares one partition across columns; columns are
//! standardized, their `B` and `W` summed, and the exponents scaled by the
//! column count `d` (each column contributes its own Gaussian block
//! likelihood). For `d = 1` this is the textbook univariate model.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::KinematicMatrix;
use crate::numeric::{ln_incomplete_beta, log_quadrature};

#[derive(Debug, Error)]
pub enum BcpError {
    #[error("need at least 2 observations, got {0}")]
    InsufficientData(usize),
    #[error("all observations are identical")]
    DegenerateData,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("partition covers {partition} indices but data has {data}")]
    LengthMismatch { partition: usize, data: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = BcpError> = std::result::Result<T, E>;

/// Change indicators `U_0..U_{n-1}`; `U_i` opens a new block at `i`.
/// `U_0` is always set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    indicators: Vec<bool>,
}

impl Partition {
    pub fn single_block(n: usize) -> Self {
        let mut indicators = vec![false; n];
        if n > 0 {
            indicators[0] = true;
        }
        Self { indicators }
    }

    /// Panics if a change point is out of `1..n`.
    pub fn from_change_points(n: usize, change_points: &[usize]) -> Self {
        let mut p = Self::single_block(n);
        for &c in change_points {
            assert!(c > 0 && c < n, "change point {c} outside 1..{n}");
            p.indicators[c] = true;
        }
        p
    }

    /// Partition from the bits of `mask`: bit `i - 1` sets `U_i`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        let mut p = Self::single_block(n);
        for i in 1..n {
            p.indicators[i] = mask >> (i - 1) & 1 == 1;
        }
        p
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    pub fn is_change(&self, i: usize) -> bool {
        self.indicators[i]
    }

    pub fn n_blocks(&self) -> usize {
        self.indicators.iter().filter(|&&u| u).count()
    }

    /// Half-open `[start, end)` index ranges of the blocks, in order.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        let n = self.len();
        let mut starts: Vec<usize> = (0..n).filter(|&i| self.indicators[i]).collect();
        starts.push(n);
        starts.windows(2).map(|w| w[0]..w[1]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcpParams {
    /// Upper bound of the uniform prior on the change probability.
    pub p0: f64,
    /// Upper bound of the uniform prior on the signal-to-noise ratio.
    pub w0: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for BcpParams {
    fn default() -> Self {
        Self {
            p0: 0.2,
            w0: 0.2,
            sweeps: 500,
            burn_in: 50,
            seed: 0,
        }
    }
}

impl BcpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BcpError::InvalidParams(msg));
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return bad(format!("p0 must lie in (0, 1], got {}", self.p0));
        }
        if !(self.w0 > 0.0 && self.w0 <= 1.0) {
            return bad(format!("w0 must lie in (0, 1], got {}", self.w0));
        }
        if self.sweeps == 0 {
            return bad("sweeps must be positive".into());
        }
        if self.burn_in >= self.sweeps {
            return bad(format!(
                "burn_in ({}) must be smaller than sweeps ({})",
                self.burn_in, self.sweeps
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcpResult {
    /// Posterior probability that index `i` opens a block; entry 0 is 1.
    pub change_prob: Vec<f64>,
    /// Row-major `n × d` posterior mean of the block means, on the input scale.
    pub posterior_mean: Vec<f64>,
    pub n_cols: usize,
    /// Number of post-burn-in sweeps averaged.
    pub sweeps_used: usize,
}

/// Sufficient statistics and cached prior integrals for one data matrix.
///
/// Data are centred per column (and optionally scaled to unit variance), so
/// the grand mean is zero and `B` reduces to `Σ len · mean²`.
#[derive(Debug, Clone)]
pub struct BcpModel {
    n: usize,
    d: usize,
    /// `(n + 1) × d` prefix sums of the centred data and of its squares.
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    w_floor: f64,
    p0: f64,
    w0: f64,
    ln_p_cache: Vec<f64>,
}

impl BcpModel {
    /// Builds the model. With `standardize`, each non-constant column is
    /// scaled to unit sample variance; constant columns contribute nothing.
    pub fn new(data: &KinematicMatrix, p0: f64, w0: f64, standardize: bool) -> Result<Self> {
        let n = data.n_rows();
        let d = data.n_cols();
        if n < 2 {
            return Err(BcpError::InsufficientData(n));
        }
        let mut centred = vec![0.0; n * d];
        let mut tss = 0.0;
        for c in 0..d {
            let col = data.column(c);
            let mean = col.iter().sum::<f64>() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let scale = if standardize && ss > 0.0 {
                ((n - 1) as f64 / ss).sqrt()
            } else {
                1.0
            };
            for (i, v) in col.iter().enumerate() {
                centred[i * d + c] = (v - mean) * scale;
            }
            tss += ss * scale * scale;
        }
        if !(tss > 0.0) {
            return Err(BcpError::DegenerateData);
        }
        let mut sum = vec![0.0; (n + 1) * d];
        let mut sum_sq = vec![0.0; (n + 1) * d];
        for i in 0..n {
            for c in 0..d {
                let v = centred[i * d + c];
                sum[(i + 1) * d + c] = sum[i * d + c] + v;
                sum_sq[(i + 1) * d + c] = sum_sq[i * d + c] + v * v;
            }
        }
        Ok(Self {
            n,
            d,
            sum,
            sum_sq,
            w_floor: 1e-12 * tss,
            p0,
            w0,
            ln_p_cache: vec![f64::NAN; n + 1],
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(B, W)` contribution of the block `[start, end)`.
    fn block(&self, start: usize, end: usize) -> (f64, f64) {
        let d = self.d;
        let len = (end - start) as f64;
        let (mut b, mut w) = (0.0, 0.0);
        for c in 0..d {
            let s = self.sum[end * d + c] - self.sum[start * d + c];
            let sq = self.sum_sq[end * d + c] - self.sum_sq[start * d + c];
            let between = s * s / len;
            b += between;
            w += (sq - between).max(0.0);
        }
        (b, w)
    }

    /// Between- and within-block sums of squares of `partition`.
    pub fn sums(&self, partition: &Partition) -> (f64, f64) {
        partition
            .blocks()
            .into_iter()
            .map(|r| self.block(r.start, r.end))
            .fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1))
    }

    /// `ln ∫₀^p0 p^(b-1) (1-p)^(n-b) dp`.
    pub fn ln_p_integral(&mut self, b: usize) -> f64 {
        let cached = self.ln_p_cache[b];
        if !cached.is_nan() {
            return cached;
        }
        let v = ln_p_integral(self.n, b, self.p0);
        self.ln_p_cache[b] = v;
        v
    }

    /// `ln ∫₀^w0 w^(d(b-1)/2) / (W + B w)^(d(n-1)/2) dw` with `W` floored.
    pub fn ln_w_integral(&self, between: f64, within: f64, b: usize) -> f64 {
        ln_w_integral(between, within.max(self.w_floor), b, self.n, self.d, self.w0)
    }

    pub fn log_marginal(&mut self, partition: &Partition) -> Result<f64> {
        if partition.len() != self.n {
            return Err(BcpError::LengthMismatch {
                partition: partition.len(),
                data: self.n,
            });
        }
        let (between, within) = self.sums(partition);
        let b = partition.n_blocks();
        Ok(self.ln_p_integral(b) + self.ln_w_integral(between, within, b))
    }

    /// Log posterior odds of `U_i = 1` against `U_i = 0` with every other
    /// indicator held at its value in `state`.
    pub fn log_odds(&mut self, state: &Partition, i: usize) -> f64 {
        assert!(i >= 1 && i < self.n);
        let u = state.indicators();
        let prev = (0..i).rev().find(|&j| u[j]).unwrap_or(0);
        let next = (i + 1..self.n).find(|&j| u[j]).unwrap_or(self.n);
        let (between, within) = self.sums(state);
        let b = state.n_blocks();
        self.log_odds_local(between, within, b, u[i], prev, i, next)
    }

    #[allow(clippy::too_many_arguments)]
    fn log_odds_local(
        &mut self,
        between: f64,
        within: f64,
        b: usize,
        is_change: bool,
        prev: usize,
        i: usize,
        next: usize,
    ) -> f64 {
        let (bl, wl) = self.block(prev, i);
        let (br, wr) = self.block(i, next);
        let (bm, wm) = self.block(prev, next);
        let (b1, w1, b0, w0, blocks1) = if is_change {
            (between, within, between - bl - br + bm, within - wl - wr + wm, b)
        } else {
            (between - bm + bl + br, within - wm + wl + wr, between, within, b + 1)
        };
        let blocks0 = blocks1 - 1;
        self.ln_p_integral(blocks1) - self.ln_p_integral(blocks0)
            + self.ln_w_integral(b1.max(0.0), w1.max(0.0), blocks1)
            - self.ln_w_integral(b0.max(0.0), w0.max(0.0), blocks0)
    }

    /// One Gibbs sweep over indices `1..n` in order, updating `state` in place.
    pub fn sweep<R: Rng>(&mut self, state: &mut Partition, rng: &mut R) {
        let n = self.n;
        let mut next_change = vec![n; n];
        let mut upcoming = n;
        for i in (0..n).rev() {
            next_change[i] = upcoming;
            if state.indicators[i] {
                upcoming = i;
            }
        }
        let (mut between, mut within) = self.sums(state);
        let mut b = state.n_blocks();
        let mut prev = 0usize;
        for i in 1..n {
            let next = next_change[i];
            let was = state.indicators[i];
            let lo = self.log_odds_local(between, within, b, was, prev, i, next);
            let p_change = 1.0 / (1.0 + (-lo).exp());
            let now = rng.random::<f64>() < p_change;
            if now != was {
                let (bl, wl) = self.block(prev, i);
                let (br, wr) = self.block(i, next);
                let (bm, wm) = self.block(prev, next);
                if now {
                    between += bl + br - bm;
                    within += wl + wr - wm;
                    b += 1;
                } else {
                    between += bm - bl - br;
                    within += wm - wl - wr;
                    b -= 1;
                }
                state.indicators[i] = now;
            }
            if now {
                prev = i;
            }
        }
    }
}

/// `ln ∫₀^p0 p^(b-1) (1-p)^(n-b) dp`, an incomplete beta integral.
pub fn ln_p_integral(n: usize, b: usize, p0: f64) -> f64 {
    ln_incomplete_beta(p0, b as f64, (n - b + 1) as f64)
}

/// `ln ∫₀^w0 w^(d(b-1)/2) / (W + B w)^(d(n-1)/2) dw`.
///
/// Substituting `t = Bw / (W + Bw)` turns the integral into
/// `W^(a-c) B^(-a) ∫₀^t0 t^(a-1) (1-t)^(c-a-1) dt` with `a = d(b-1)/2 + 1`,
/// `c = d(n-1)/2`, `t0 = B w0 / (W + B w0)`. When `c ≤ a` (almost every
/// index a change point) the beta form is improper and the integral is
/// evaluated by quadrature instead.
pub fn ln_w_integral(between: f64, within: f64, b: usize, n: usize, d: usize, w0: f64) -> f64 {
    let a = d as f64 * (b as f64 - 1.0) / 2.0 + 1.0;
    let c = d as f64 * (n as f64 - 1.0) / 2.0;
    let ratio = between * w0 / within;
    if ratio < 1e-12 {
        // (W + Bw)^-c ≈ W^-c (1 - c B w / W); second term below f64 resolution
        return a * w0.ln() - a.ln() - c * within.ln() + (-c * ratio * a / (a + 1.0)).ln_1p();
    }
    if c - a > 0.0 {
        let t0 = ratio / (1.0 + ratio);
        (a - c) * within.ln() - a * between.ln() + ln_incomplete_beta(t0, a, c - a)
    } else {
        ln_w_integral_quadrature(between, within, b, n, d, w0, 8)
    }
}

/// Composite Gauss–Legendre evaluation of [`ln_w_integral`] with `panels`
/// panels of 16 nodes (8 panels gives 128 nodes), summed in log space.
pub fn ln_w_integral_quadrature(
    between: f64,
    within: f64,
    b: usize,
    n: usize,
    d: usize,
    w0: f64,
    panels: usize,
) -> f64 {
    let a = d as f64 * (b as f64 - 1.0) / 2.0 + 1.0;
    let c = d as f64 * (n as f64 - 1.0) / 2.0;
    log_quadrature(
        |w| (a - 1.0) * w.ln() - c * (within + between * w).ln(),
        0.0,
        w0,
        panels,
        16,
    )
}

/// Between- and within-block sums of squares of the raw data, summed over
/// columns, each column measured against its own grand mean.
pub fn block_sums(data: &KinematicMatrix, partition: &Partition) -> Result<(f64, f64)> {
    if partition.len() != data.n_rows() {
        return Err(BcpError::LengthMismatch {
            partition: partition.len(),
            data: data.n_rows(),
        });
    }
    let n = data.n_rows();
    let (mut between, mut within) = (0.0, 0.0);
    for c in 0..data.n_cols() {
        let col = data.column(c);
        let grand = col.iter().sum::<f64>() / n as f64;
        for r in partition.blocks() {
            let block = &col[r.clone()];
            let mean = block.iter().sum::<f64>() / block.len() as f64;
            between += block.len() as f64 * (mean - grand).powi(2);
            within += block.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        }
    }
    Ok((between, within))
}

/// Log of the unnormalized posterior of `partition` (data as given, no
/// standardization).
pub fn log_marginal(data: &KinematicMatrix, partition: &Partition, p0: f64, w0: f64) -> Result<f64> {
    BcpModel::new(data, p0, w0, false)?.log_marginal(partition)
}

/// One Gibbs sweep starting from `state`, returning the new partition.
pub fn gibbs_sweep<R: Rng>(
    state: &Partition,
    data: &KinematicMatrix,
    params: &BcpParams,
    rng: &mut R,
) -> Result<Partition> {
    params.validate()?;
    let mut model = BcpModel::new(data, params.p0, params.w0, true)?;
    if state.len() != model.len() {
        return Err(BcpError::LengthMismatch {
            partition: state.len(),
            data: model.len(),
        });
    }
    let mut next = state.clone();
    model.sweep(&mut next, rng);
    Ok(next)
}

/// Runs the sampler from the single-block partition and averages indicators
/// and block means over the post-burn-in sweeps.
pub fn run(data: &KinematicMatrix, params: &BcpParams) -> Result<BcpResult> {
    params.validate()?;
    let n = data.n_rows();
    if n < 2 {
        return Err(BcpError::InsufficientData(n));
    }
    let d = data.n_cols();
    let mut model = BcpModel::new(data, params.p0, params.w0, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut state = Partition::single_block(n);
    let mut counts = vec![0u64; n];
    let mut mean_acc = vec![0.0; n * d];
    let raw = data.values();
    for sweep in 0..params.sweeps {
        model.sweep(&mut state, &mut rng);
        if sweep < params.burn_in {
            continue;
        }
        for (count, &u) in counts.iter_mut().zip(state.indicators()) {
            *count += u as u64;
        }
        for r in state.blocks() {
            let len = r.len() as f64;
            for c in 0..d {
                let m = r.clone().map(|i| raw[i * d + c]).sum::<f64>() / len;
                for i in r.clone() {
                    mean_acc[i * d + c] += m;
                }
            }
        }
    }
    let used = params.sweeps - params.burn_in;
    let mut change_prob: Vec<f64> = counts.iter().map(|&c| c as f64 / used as f64).collect();
    change_prob[0] = 1.0;
    let posterior_mean = mean_acc.into_iter().map(|v| v / used as f64).collect();
    Ok(BcpResult {
        change_prob,
        posterior_mean,
        n_cols: d,
        sweeps_used: used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_t: f64,
    pub end_t: f64,
    pub start_idx: usize,
    pub end_idx: usize,
    pub change_prob_at_boundary: f64,
}

/// Ordered segments tiling the timeline; time intervals are half-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub segments: Vec<Segment>,
    pub threshold: f64,
    pub min_len: usize,
}

impl SegmentSet {
    /// Index of the segment whose `[start_t, end_t)` contains `t`.
    pub fn locate(&self, t: f64) -> Option<usize> {
        let idx = self.segments.partition_point(|s| s.start_t <= t);
        if idx == 0 {
            return None;
        }
        let s = &self.segments[idx - 1];
        (t < s.end_t).then_some(idx - 1)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Turns posterior change probabilities into segments.
///
/// Indices with probability at least `threshold` are candidate boundaries.
/// Candidates are accepted in order of decreasing probability (ties to the
/// lower index) when they lie at least `min_len` samples from every accepted
/// boundary and from the end of the series. Index 0 always opens the first
/// segment.
pub fn extract_segments(
    result: &BcpResult,
    times: &[f64],
    threshold: f64,
    min_len: usize,
) -> Result<SegmentSet> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(BcpError::InvalidParams(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if min_len == 0 {
        return Err(BcpError::InvalidParams("min_len must be at least 1".into()));
    }
    let probs = &result.change_prob;
    let n = probs.len();
    if times.len() != n {
        return Err(BcpError::LengthMismatch {
            partition: n,
            data: times.len(),
        });
    }
    if n < 2 {
        return Err(BcpError::InsufficientData(n));
    }
    let mut candidates: Vec<usize> = (1..n).filter(|&i| probs[i] >= threshold).collect();
    candidates.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut accepted = vec![0usize];
    for c in candidates {
        let far_enough = accepted.iter().all(|&a| a.abs_diff(c) >= min_len) && n - c >= min_len;
        if far_enough {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    let tail_t = times[n - 1] + (times[n - 1] - times[n - 2]);
    let segments = accepted
        .iter()
        .enumerate()
        .map(|(k, &start)| {
            let end = accepted.get(k + 1).copied().unwrap_or(n);
            Segment {
                start_t: times[start],
                end_t: if end < n { times[end] } else { tail_t },
                start_idx: start,
                end_idx: end,
                change_prob_at_boundary: probs[start],
            }
        })
        .collect();
    Ok(SegmentSet {
        segments,
        threshold,
        min_len,
    })
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    start_t: f64,
    end_t: f64,
    change_prob_at_boundary: f64,
}

/// Writes segments as a JSON list of `{start_t, end_t, change_prob_at_boundary}`.
pub fn write_segments_json(path: &Path, segs: &SegmentSet) -> Result<()> {
    let records: Vec<SegmentRecord> = segs
        .segments
        .iter()
        .map(|s| SegmentRecord {
            start_t: s.start_t,
            end_t: s.end_t,
            change_prob_at_boundary: s.change_prob_at_boundary,
        })
        .collect();
    let text = serde_json::to_string_pretty(&records).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Reads a segments JSON file. Index fields are not stored in the file, so
/// they are left as positions in the list.
pub fn read_segments_json(path: &Path) -> Result<SegmentSet> {
    let text = std::fs::read_to_string(path)?;
    let records: Vec<SegmentRecord> = serde_json::from_str(&text)
        .map_err(|e| BcpError::InvalidParams(format!("{}: {e}", path.display())))?;
    let segments = records
        .into_iter()
        .enumerate()
        .map(|(k, r)| Segment {
            start_t: r.start_t,
            end_t: r.end_t,
            start_idx: k,
            end_idx: k + 1,
            change_prob_at_boundary: r.change_prob_at_boundary,
        })
        .collect();
    Ok(SegmentSet {
        segments,
        threshold: f64::NAN,
        min_len: 0,
    })
}

/// Writes the change-probability series as CSV `index,t,prob`.
pub fn write_change_prob_csv(path: &Path, result: &BcpResult, times: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "index,t,prob")?;
    for (i, (p, t)) in result.change_prob.iter().zip(times).enumerate() {
        writeln!(out, "{i},{t},{p}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn univariate(values: &[f64]) -> KinematicMatrix {
        let times = (0..values.len()).map(|i| i as f64).collect();
        KinematicMatrix::from_columns(times, vec![("x".into(), values.to_vec())]).unwrap()
    }

    #[test]
    fn block_sums_by_hand() {
        let data = univariate(&[0.0, 0.0, 10.0, 10.0]);
        let split = Partition::from_change_points(4, &[2]);
        assert_eq!(block_sums(&data, &split).unwrap(), (100.0, 0.0));
        let single = Partition::single_block(4);
        assert_eq!(block_sums(&data, &single).unwrap(), (0.0, 100.0));
        let flat = univariate(&[3.0; 5]);
        assert_eq!(
            block_sums(&flat, &Partition::from_change_points(5, &[1, 3])).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn model_sums_match_direct_sums() {
        let data = univariate(&[1.0, 4.0, -2.0, 7.5, 3.0, 3.0, 0.5]);
        let model = BcpModel::new(&data, 0.2, 0.2, false).unwrap();
        for mask in 0..64u64 {
            let p = Partition::from_mask(7, mask);
            let (b1, w1) = model.sums(&p);
            let (b2, w2) = block_sums(&data, &p).unwrap();
            assert_relative_eq!(b1, b2, epsilon = 1e-9);
            assert_relative_eq!(w1, w2, epsilon = 1e-9);
        }
    }

    #[test]
    fn p_integral_single_block_is_one_over_n() {
        for n in [2usize, 5, 12, 1000] {
            assert_relative_eq!(ln_p_integral(n, 1, 1.0).exp(), 1.0 / n as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn w_integral_closed_form_matches_quadrature() {
        for &(b, w, blocks, n, d) in &[
            (3.0, 10.0, 2usize, 12usize, 1usize),
            (0.5, 11.0, 3, 20, 1),
            (40.0, 60.0, 4, 100, 1),
            (5.0, 300.0, 6, 100, 3),
            (1e-3, 50.0, 2, 30, 1),
        ] {
            let closed = ln_w_integral(b, w, blocks, n, d, 0.2);
            let quad = ln_w_integral_quadrature(b, w, blocks, n, d, 0.2, 2048);
            assert_relative_eq!(closed, quad, epsilon = 1e-8, max_relative = 1e-9);
        }
    }

    #[test]
    fn identical_data_is_degenerate() {
        let data = univariate(&[2.0; 6]);
        assert!(matches!(
            log_marginal(&data, &Partition::single_block(6), 0.2, 0.2),
            Err(BcpError::DegenerateData)
        ));
        assert!(matches!(run(&data, &BcpParams::default()), Err(BcpError::DegenerateData)));
    }

    #[test]
    fn too_short_input() {
        let data = KinematicMatrix::new(vec![0.0, 1.0], vec!["x".into()], vec![1.0, 2.0]).unwrap();
        assert!(run(&data, &BcpParams::default()).is_ok());
        let mut model = BcpModel::new(&data, 0.2, 0.2, true).unwrap();
        assert!(model.log_marginal(&Partition::single_block(3)).is_err());
    }

    #[test]
    fn params_validation() {
        let ok = BcpParams::default();
        assert!(ok.validate().is_ok());
        for bad in [
            BcpParams { p0: 0.0, ..ok },
            BcpParams { w0: 1.5, ..ok },
            BcpParams { burn_in: 500, ..ok },
            BcpParams { sweeps: 0, burn_in: 0, ..ok },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn odds_local_matches_full_marginal_ratio() {
        let data = univariate(&[0.1, -0.3, 0.2, 2.9, 3.1, 3.3, 2.8, 0.0, 0.4]);
        let mut model = BcpModel::new(&data, 0.3, 0.4, false).unwrap();
        let state = Partition::from_change_points(9, &[3]);
        for i in 1..9 {
            let mut with = state.clone();
            with.indicators[i] = true;
            let mut without = state.clone();
            without.indicators[i] = false;
            let expected = model.log_marginal(&with).unwrap() - model.log_marginal(&without).unwrap();
            assert_relative_eq!(model.log_odds(&state, i), expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn huge_shift_has_positive_log_odds_after_one_sweep() {
        let mut values: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64 * 0.01).collect();
        for v in &mut values[20..] {
            *v += 50.0;
        }
        let data = univariate(&values);
        let params = BcpParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let after = gibbs_sweep(&Partition::single_block(40), &data, &params, &mut rng).unwrap();
        let mut model = BcpModel::new(&data, params.p0, params.w0, true).unwrap();
        assert!(model.log_odds(&after, 20) > 0.0);
        assert!(after.is_change(20));
    }

    #[test]
    fn tiny_noise_has_negative_log_odds_everywhere() {
        let values: Vec<f64> = (0..50).map(|i| 5.0 + ((i * 37) % 11) as f64 * 1e-6).collect();
        let data = univariate(&values);
        let mut model = BcpModel::new(&data, 0.2, 0.2, true).unwrap();
        let state = Partition::single_block(50);
        for i in 1..50 {
            assert!(model.log_odds(&state, i) < 0.0, "index {i}");
        }
    }

    #[test]
    fn sweeps_are_reproducible() {
        let values: Vec<f64> = (0..60).map(|i| ((i * 31) % 17) as f64 + if i > 30 { 9.0 } else { 0.0 }).collect();
        let data = univariate(&values);
        let params = BcpParams::default();
        let sweep = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            gibbs_sweep(&Partition::single_block(60), &data, &params, &mut rng).unwrap()
        };
        assert_eq!(sweep(11), sweep(11));
        let a = run(&data, &BcpParams { sweeps: 50, burn_in: 5, seed: 4, ..params }).unwrap();
        let b = run(&data, &BcpParams { sweeps: 50, burn_in: 5, seed: 4, ..params }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.change_prob[0], 1.0);
        assert!(a.change_prob.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    fn result_with(probs: &[f64]) -> BcpResult {
        BcpResult {
            change_prob: probs.to_vec(),
            posterior_mean: vec![0.0; probs.len()],
            n_cols: 1,
            sweeps_used: 1,
        }
    }

    #[test]
    fn extract_single_segment() {
        let mut probs = vec![0.0; 8];
        probs[0] = 1.0;
        let times: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let segs = extract_segments(&result_with(&probs), &times, 0.5, 1).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!((segs.segments[0].start_t, segs.segments[0].end_t), (0.0, 4.0));
    }

    #[test]
    fn extract_by_hand() {
        let times = [0.0, 1.0, 2.0, 3.0, 4.0];
        let segs = extract_segments(&result_with(&[1.0, 0.0, 0.9, 0.0, 0.0]), &times, 0.5, 1).unwrap();
        let idx: Vec<(usize, usize)> = segs.segments.iter().map(|s| (s.start_idx, s.end_idx)).collect();
        assert_eq!(idx, vec![(0, 2), (2, 5)]);
        assert_eq!(segs.segments[1].change_prob_at_boundary, 0.9);
        assert_eq!(segs.locate(1.999), Some(0));
        assert_eq!(segs.locate(2.0), Some(1));
        assert_eq!(segs.locate(5.0), None);
    }

    #[test]
    fn extract_merges_close_boundaries() {
        let mut probs = vec![0.0; 30];
        probs[0] = 1.0;
        probs[10] = 0.7;
        probs[12] = 0.95;
        let times: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let segs = extract_segments(&result_with(&probs), &times, 0.5, 5).unwrap();
        let starts: Vec<usize> = segs.segments.iter().map(|s| s.start_idx).collect();
        assert_eq!(starts, vec![0, 12]);
        assert!(extract_segments(&result_with(&probs), &times, 1.1, 5).is_err());
        assert!(extract_segments(&result_with(&probs), &times, 0.5, 0).is_err());
    }
}
