//! Gaussian mixture codebooks: EM fitting, BIC and hard word assignment.
//!
//! Data are passed as row-major `n × d` slices. EM statistics are accumulated
//! in fixed-size chunks (in parallel when enabled) and reduced in chunk order,
//! so fits are identical under both execution modes.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bcp::SegmentSet;
use crate::numeric::log_sum_exp_slice;
use crate::par::Exec;

const CHUNK: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum QuantizeError {
    #[error("need at least K = {k} samples, got {n}")]
    TooFewSamples { n: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component {0} covariance is not positive definite after flooring")]
    SingularComponent(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = QuantizeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Relative log-likelihood change that stops EM.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            k: 50,
            max_iter: 200,
            tol: 1e-6,
            restarts: 5,
            seed: 0,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(QuantizeError::InvalidConfig(m.into()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be non-negative");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        Ok(())
    }
}

/// A fitted mixture. Covariances are row-major `d × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub seed: u64,
}

/// Result of [`fit_gmm`] with the per-iteration log-likelihood of every
/// restart.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub codebook: Codebook,
    pub histories: Vec<Vec<f64>>,
    pub best_restart: usize,
}

/// Per-component terms needed to evaluate `ln w_k + ln N(x | μ_k, Σ_k)`.
struct Prepared {
    d: usize,
    means: Vec<Vec<f64>>,
    chol: Vec<Vec<f64>>,
    inv_diag: Vec<Vec<f64>>,
    log_norm: Vec<f64>,
}

fn cholesky(cov: &[f64], d: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(d, d, cov);
    let l = m.cholesky()?.unpack();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            out[i * d + j] = l[(i, j)];
        }
    }
    Some(out)
}

impl Prepared {
    fn new(weights: &[f64], means: &[Vec<f64>], covs: &[Vec<f64>], d: usize) -> Result<Self> {
        let mut chol = Vec::with_capacity(weights.len());
        let mut inv_diag = Vec::with_capacity(weights.len());
        let mut log_norm = Vec::with_capacity(weights.len());
        for (k, (w, cov)) in weights.iter().zip(covs).enumerate() {
            let l = cholesky(cov, d).ok_or(QuantizeError::SingularComponent(k))?;
            let ln_det: f64 = (0..d).map(|i| 2.0 * l[i * d + i].ln()).sum();
            log_norm.push(w.ln() - 0.5 * (d as f64 * (2.0 * PI).ln() + ln_det));
            inv_diag.push((0..d).map(|i| 1.0 / l[i * d + i]).collect());
            chol.push(l);
        }
        Ok(Self {
            d,
            means: means.to_vec(),
            chol,
            inv_diag,
            log_norm,
        })
    }

    fn k(&self) -> usize {
        self.log_norm.len()
    }

    /// Writes `ln w_k + ln N(x)` for every component into `out`.
    fn log_joint(&self, x: &[f64], out: &mut [f64], y: &mut [f64]) {
        let d = self.d;
        for k in 0..self.k() {
            let (l, mu, inv) = (&self.chol[k], &self.means[k], &self.inv_diag[k]);
            let mut maha = 0.0;
            for i in 0..d {
                let mut v = x[i] - mu[i];
                for j in 0..i {
                    v -= l[i * d + j] * y[j];
                }
                y[i] = v * inv[i];
                maha += y[i] * y[i];
            }
            out[k] = self.log_norm[k] - 0.5 * maha;
        }
    }
}

fn check_dims(data: &[f64], d: usize) -> Result<usize> {
    if d == 0 || data.len() % d != 0 {
        return Err(QuantizeError::DimensionMismatch {
            expected: d,
            got: data.len(),
        });
    }
    Ok(data.len() / d)
}

/// Sufficient statistics of one chunk: log-likelihood, `Σ r`, `Σ r x`,
/// `Σ r x xᵀ` per component.
struct Stats {
    ll: f64,
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

fn e_step(prep: &Prepared, data: &[f64], exec: Exec) -> Stats {
    let (d, k) = (prep.d, prep.k());
    let n = data.len() / d;
    let parts = exec.map_chunks(n, CHUNK, |range| {
        let mut st = Stats {
            ll: 0.0,
            s0: vec![0.0; k],
            s1: vec![0.0; k * d],
            s2: vec![0.0; k * d * d],
        };
        let mut lp = vec![0.0; k];
        let mut y = vec![0.0; d];
        for r in range {
            let x = &data[r * d..(r + 1) * d];
            prep.log_joint(x, &mut lp, &mut y);
            // exponentiate once, shifted by the max
            let m = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in lp.iter_mut() {
                let z = *v - m;
                *v = if z < -746.0 { 0.0 } else { z.exp() };
                sum += *v;
            }
            st.ll += m + sum.ln();
            let inv_sum = 1.0 / sum;
            for c in 0..k {
                let resp = lp[c] * inv_sum;
                if resp == 0.0 {
                    continue;
                }
                st.s0[c] += resp;
                for i in 0..d {
                    let rx = resp * x[i];
                    st.s1[c * d + i] += rx;
                    for j in 0..=i {
                        st.s2[(c * d + i) * d + j] += rx * x[j];
                    }
                }
            }
        }
        st
    });
    let mut total = Stats {
        ll: 0.0,
        s0: vec![0.0; k],
        s1: vec![0.0; k * d],
        s2: vec![0.0; k * d * d],
    };
    for p in parts {
        total.ll += p.ll;
        for (a, b) in total.s0.iter_mut().zip(&p.s0) {
            *a += b;
        }
        for (a, b) in total.s1.iter_mut().zip(&p.s1) {
            *a += b;
        }
        for (a, b) in total.s2.iter_mut().zip(&p.s2) {
            *a += b;
        }
    }
    total
}

/// Clamps the eigenvalues of `cov` to at least `floor`, the closest matrix
/// in the floored set that maximizes the expected log-likelihood, so EM stays
/// monotone. Adds growing multiples of `floor · I` if rounding still defeats
/// the Cholesky factorization.
fn regularize(cov: &mut [f64], d: usize, floor: f64, k: usize) -> Result<()> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(QuantizeError::SingularComponent(k));
    }
    if d == 1 {
        cov[0] = cov[0].max(floor);
    } else {
        let m = DMatrix::from_row_slice(d, d, cov);
        let eig = m.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < floor) {
            let clamped = eig.eigenvalues.map(|l| l.max(floor));
            let v = &eig.eigenvectors;
            let rebuilt = v * DMatrix::from_diagonal(&clamped) * v.transpose();
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
                }
            }
        }
    }
    let mut bump = floor;
    for _ in 0..40 {
        if cholesky(cov, d).is_some() {
            return Ok(());
        }
        for i in 0..d {
            cov[i * d + i] += bump;
        }
        bump *= 2.0;
    }
    Err(QuantizeError::SingularComponent(k))
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<Vec<f64>>,
}

fn m_step(st: &Stats, prev: &Params, n: usize, d: usize, floor: f64) -> Result<Params> {
    let k = st.s0.len();
    let mut out = Params {
        weights: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        covs: Vec::with_capacity(k),
    };
    for c in 0..k {
        let nk = st.s0[c];
        out.weights.push(nk / n as f64);
        if nk < 1e-10 {
            // dead component: weight goes to zero, shape kept
            out.means.push(prev.means[c].clone());
            out.covs.push(prev.covs[c].clone());
            continue;
        }
        let mean: Vec<f64> = (0..d).map(|i| st.s1[c * d + i] / nk).collect();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let v = st.s2[(c * d + i) * d + j] / nk - mean[i] * mean[j];
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        regularize(&mut cov, d, floor, c)?;
        out.means.push(mean);
        out.covs.push(cov);
    }
    let total: f64 = out.weights.iter().sum();
    for w in &mut out.weights {
        *w /= total;
    }
    Ok(out)
}

fn prepare(p: &Params, d: usize) -> Result<Prepared> {
    Prepared::new(&p.weights, &p.means, &p.covs, d)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn covariance(data: &[f64], rows: &[usize], d: usize) -> Vec<f64> {
    let m = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for &r in rows {
        for i in 0..d {
            mean[i] += data[r * d + i] / m;
        }
    }
    let mut cov = vec![0.0; d * d];
    for &r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (data[r * d + i] - mean[i]) * (data[r * d + j] - mean[j]) / m;
            }
        }
    }
    cov
}

/// k-means++ seeding followed by one hard assignment to build initial
/// weights and covariances.
fn init_params(data: &[f64], d: usize, k: usize, floor: f64, global: &[f64], rng: &mut ChaCha8Rng) -> Result<Params> {
    let n = data.len() / d;
    let row = |r: usize| &data[r * d..(r + 1) * d];
    let mut centers = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n).map(|r| sq_dist(row(r), row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (r, &w) in dist.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = r;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(pick);
        for (r, dr) in dist.iter_mut().enumerate() {
            *dr = dr.min(sq_dist(row(r), row(pick)));
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for r in 0..n {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &ctr) in centers.iter().enumerate() {
            let dd = sq_dist(row(r), row(ctr));
            if dd < best_d {
                best_d = dd;
                best = c;
            }
        }
        members[best].push(r);
    }
    let mut p = Params {
        weights: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        covs: Vec::with_capacity(k),
    };
    for (c, m) in members.iter().enumerate() {
        p.weights.push((m.len().max(1)) as f64);
        p.means.push(row(centers[c]).to_vec());
        let mut cov = if m.len() > d { covariance(data, m, d) } else { global.to_vec() };
        regularize(&mut cov, d, floor, c)?;
        p.covs.push(cov);
    }
    let total: f64 = p.weights.iter().sum();
    for w in &mut p.weights {
        *w /= total;
    }
    Ok(p)
}

fn fit_once(data: &[f64], d: usize, cfg: &GmmConfig, seed: u64, floor: f64, global: &[f64], exec: Exec) -> Result<(Params, Vec<f64>)> {
    let n = data.len() / d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(data, d, cfg.k, floor, global, &mut rng)?;
    let mut history: Vec<f64> = Vec::new();
    for _ in 0..cfg.max_iter {
        let st = e_step(&prepare(&params, d)?, data, exec);
        if let Some(&prev) = history.last() {
            if (st.ll - prev).abs() <= cfg.tol * prev.abs() {
                history.push(st.ll);
                return Ok((params, history));
            }
        }
        history.push(st.ll);
        params = m_step(&st, &params, n, d, floor)?;
    }
    let st = e_step(&prepare(&params, d)?, data, exec);
    history.push(st.ll);
    Ok((params, history))
}

/// Fits a `K`-component full-covariance mixture by EM and keeps the restart
/// with the highest log-likelihood (ties to the earlier restart). Restart `r`
/// is seeded with `seed + r`.
pub fn fit_gmm(data: &[f64], d: usize, cfg: &GmmConfig, exec: Exec) -> Result<GmmFit> {
    cfg.validate()?;
    let n = check_dims(data, d)?;
    if n < cfg.k || n < 2 {
        return Err(QuantizeError::TooFewSamples { n, k: cfg.k.max(2) });
    }
    // fit on centred data for better conditioning of Σ r x xᵀ
    let mut centre = vec![0.0; d];
    for r in 0..n {
        for i in 0..d {
            centre[i] += data[r * d + i];
        }
    }
    for c in &mut centre {
        *c /= n as f64;
    }
    let centred: Vec<f64> = data.iter().enumerate().map(|(idx, v)| v - centre[idx % d]).collect();
    let all: Vec<usize> = (0..n).collect();
    let global = covariance(&centred, &all, d);
    let trace: f64 = (0..d).map(|i| global[i * d + i]).sum();
    let scale: f64 = 1.0 + centre.iter().map(|c| c * c).sum::<f64>();
    if !(trace > 1e-24 * scale) {
        return Err(QuantizeError::SingularComponent(0));
    }
    let floor = 1e-6 * trace / d as f64;
    let runs = exec.map_range(cfg.restarts, |r| {
        fit_once(&centred, d, cfg, cfg.seed.wrapping_add(r as u64), floor, &global, exec)
    });
    let mut best: Option<(usize, Params, f64)> = None;
    let mut histories = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        let (params, hist) = run?;
        let ll = *hist.last().expect("at least one iteration");
        if best.as_ref().is_none_or(|b| ll > b.2) {
            best = Some((r, params, ll));
        }
        histories.push(hist);
    }
    let (best_restart, params, ll) = best.expect("at least one restart");
    let means = params
        .means
        .into_iter()
        .map(|m| m.iter().zip(&centre).map(|(a, b)| a + b).collect())
        .collect();
    Ok(GmmFit {
        codebook: Codebook {
            k: cfg.k,
            d,
            weights: params.weights,
            means,
            covariances: params.covs,
            log_likelihood: ll,
            seed: cfg.seed,
        },
        histories,
        best_restart,
    })
}

impl Codebook {
    fn prepared(&self) -> Result<Prepared> {
        Prepared::new(&self.weights, &self.means, &self.covariances, self.d)
    }

    /// Number of free parameters of a full-covariance mixture.
    pub fn n_params(&self) -> usize {
        let (k, d) = (self.k, self.d);
        k - 1 + k * d + k * d * (d + 1) / 2
    }

    /// Total log-likelihood of `data` under the mixture.
    pub fn log_likelihood_of(&self, data: &[f64], exec: Exec) -> Result<f64> {
        let n = check_dims(data, self.d)?;
        let prep = self.prepared()?;
        let parts = exec.map_chunks(n, CHUNK, |range| {
            let mut lp = vec![0.0; self.k];
            let mut y = vec![0.0; self.d];
            range
                .map(|r| {
                    prep.log_joint(&data[r * self.d..(r + 1) * self.d], &mut lp, &mut y);
                    log_sum_exp_slice(&lp)
                })
                .sum::<f64>()
        });
        Ok(parts.into_iter().sum())
    }
}

/// `-2 ln L + m ln n`.
pub fn bic(cb: &Codebook, data: &[f64], d: usize, exec: Exec) -> Result<f64> {
    if d != cb.d {
        return Err(QuantizeError::DimensionMismatch { expected: cb.d, got: d });
    }
    let n = check_dims(data, d)?;
    let ll = cb.log_likelihood_of(data, exec)?;
    Ok(-2.0 * ll + cb.n_params() as f64 * (n as f64).ln())
}

/// Hard assignment of each row to `argmax_k ln w_k + ln N(x | k)`; ties go to
/// the lower component index.
pub fn encode(cb: &Codebook, data: &[f64], d: usize, exec: Exec) -> Result<Vec<usize>> {
    if d != cb.d {
        return Err(QuantizeError::DimensionMismatch { expected: cb.d, got: d });
    }
    let n = check_dims(data, d)?;
    let prep = cb.prepared()?;
    let parts = exec.map_chunks(n, CHUNK, |range| {
        let mut lp = vec![0.0; cb.k];
        let mut y = vec![0.0; d];
        range
            .map(|r| {
                prep.log_joint(&data[r * d..(r + 1) * d], &mut lp, &mut y);
                let mut best = 0;
                for k in 1..lp.len() {
                    if lp[k] > lp[best] {
                        best = k;
                    }
                }
                best
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// The words of one segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordDocument {
    pub segment_id: usize,
    pub words: Vec<usize>,
}

impl WordDocument {
    /// Empty documents are excluded from topic fitting.
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Splits a timestamped word stream into one document per segment using
/// half-open `[start_t, end_t)` membership. Words outside every segment are
/// dropped.
pub fn documents_from_segments(times: &[f64], words: &[usize], segs: &SegmentSet) -> Vec<WordDocument> {
    let mut docs: Vec<WordDocument> = (0..segs.len())
        .map(|segment_id| WordDocument {
            segment_id,
            words: Vec::new(),
        })
        .collect();
    for (&t, &w) in times.iter().zip(words) {
        if let Some(s) = segs.locate(t) {
            docs[s].words.push(w);
        }
    }
    docs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcp::Segment;
    use approx::assert_abs_diff_eq;
    use rand_distr::StandardNormal;

    fn two_blobs(seed: u64, n: usize, gap: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| rng.sample::<f64, _>(StandardNormal) + if i % 2 == 0 { 0.0 } else { gap })
            .collect()
    }

    fn cfg(k: usize) -> GmmConfig {
        GmmConfig {
            k,
            restarts: 2,
            ..Default::default()
        }
    }

    #[test]
    fn single_component_is_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..400).map(|_| rng.sample(StandardNormal)).collect();
        let fit = fit_gmm(&data, 2, &cfg(1), Exec::Sequential).unwrap();
        let cb = fit.codebook;
        let n = 200.0;
        let mx = data.iter().step_by(2).sum::<f64>() / n;
        let my = data.iter().skip(1).step_by(2).sum::<f64>() / n;
        assert_abs_diff_eq!(cb.means[0][0], mx, epsilon = 1e-10);
        assert_abs_diff_eq!(cb.means[0][1], my, epsilon = 1e-10);
        let cxy = data.chunks(2).map(|r| (r[0] - mx) * (r[1] - my)).sum::<f64>() / n;
        assert_abs_diff_eq!(cb.covariances[0][1], cxy, epsilon = 1e-10);
        assert_eq!(cb.weights, vec![1.0]);
    }

    #[test]
    fn recovers_two_means() {
        let data = two_blobs(11, 2000, 10.0);
        let cb = fit_gmm(&data, 1, &cfg(2), Exec::Parallel).unwrap().codebook;
        let mut m: Vec<f64> = cb.means.iter().map(|v| v[0]).collect();
        m.sort_by(f64::total_cmp);
        assert!((m[0] - 0.0).abs() < 0.2 && (m[1] - 10.0).abs() < 0.2, "{m:?}");
    }

    #[test]
    fn too_few_samples_and_dims() {
        let data = vec![0.0; 10];
        assert_eq!(
            fit_gmm(&data, 1, &GmmConfig::default(), Exec::Sequential).unwrap_err(),
            QuantizeError::TooFewSamples { n: 10, k: 50 }
        );
        assert!(matches!(fit_gmm(&[1.0; 7], 2, &cfg(1), Exec::Sequential), Err(QuantizeError::DimensionMismatch { .. })));
        let cb = fit_gmm(&two_blobs(1, 100, 5.0), 1, &cfg(2), Exec::Sequential).unwrap().codebook;
        assert!(matches!(bic(&cb, &[0.0; 4], 2, Exec::Sequential), Err(QuantizeError::DimensionMismatch { .. })));
        assert!(matches!(encode(&cb, &[0.0; 4], 2, Exec::Sequential), Err(QuantizeError::DimensionMismatch { .. })));
        assert!(matches!(fit_gmm(&[2.0; 20], 1, &cfg(2), Exec::Sequential), Err(QuantizeError::SingularComponent(_))));
    }

    #[test]
    fn bic_prefers_one_component_for_gaussian_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let one = fit_gmm(&data, 1, &cfg(1), Exec::Sequential).unwrap().codebook;
        let five = fit_gmm(&data, 1, &cfg(5), Exec::Sequential).unwrap().codebook;
        let b1 = bic(&one, &data, 1, Exec::Sequential).unwrap();
        assert!(b1 < bic(&five, &data, 1, Exec::Sequential).unwrap());
        assert_eq!(b1, bic(&one, &data, 1, Exec::Parallel).unwrap());
    }

    fn manual_codebook() -> Codebook {
        Codebook {
            k: 4,
            d: 1,
            weights: vec![0.25; 4],
            means: vec![vec![-10.0], vec![0.0], vec![10.0], vec![20.0]],
            covariances: vec![vec![1.0]; 4],
            log_likelihood: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn encode_mode_ties_and_batching() {
        let cb = manual_codebook();
        assert_eq!(encode(&cb, &[20.0], 1, Exec::Sequential).unwrap(), vec![3]);
        assert_eq!(encode(&cb, &[5.0], 1, Exec::Sequential).unwrap(), vec![1]);
        let xs: Vec<f64> = (0..3000).map(|i| i as f64 * 0.01 - 12.0).collect();
        let batch = encode(&cb, &xs, 1, Exec::Parallel).unwrap();
        let single: Vec<usize> = xs.iter().map(|x| encode(&cb, &[*x], 1, Exec::Sequential).unwrap()[0]).collect();
        assert_eq!(batch, single);
    }

    #[test]
    fn modes_give_identical_fits() {
        let data = two_blobs(2, 3000, 4.0);
        let a = fit_gmm(&data, 1, &cfg(3), Exec::Sequential).unwrap();
        let b = fit_gmm(&data, 1, &cfg(3), Exec::Parallel).unwrap();
        assert_eq!(a.codebook, b.codebook);
        assert_eq!(a.histories, b.histories);
    }

    #[test]
    fn codebook_json_roundtrip_and_keys() {
        let cb = manual_codebook();
        let text = serde_json::to_string(&cb).unwrap();
        for key in ["\"K\"", "\"d\"", "\"weights\"", "\"means\"", "\"covariances\"", "\"log_likelihood\"", "\"seed\""] {
            assert!(text.contains(key), "{key}");
        }
        assert_eq!(serde_json::from_str::<Codebook>(&text).unwrap(), cb);
    }

    #[test]
    fn documents_half_open() {
        let seg = |a: f64, b: f64| Segment {
            start_t: a,
            end_t: b,
            start_idx: 0,
            end_idx: 0,
            change_prob_at_boundary: 1.0,
        };
        let segs = SegmentSet {
            segments: vec![seg(0.0, 3.0), seg(3.0, 7.0), seg(7.0, 10.0)],
            threshold: 0.5,
            min_len: 1,
        };
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let words: Vec<usize> = (10..20).collect();
        let docs = documents_from_segments(&times, &words, &segs);
        assert_eq!(docs[0].words, vec![10, 11, 12]);
        assert_eq!(docs[1].words, vec![13, 14, 15, 16]);
        assert_eq!(docs[2].words, vec![17, 18, 19]);
        let one = SegmentSet {
            segments: vec![seg(0.0, 10.0), seg(10.0, 11.0)],
            ..segs
        };
        let docs = documents_from_segments(&times, &words, &one);
        assert_eq!(docs[0].words, words);
        assert!(docs[1].is_empty());
    }
}
