//! Ground-truth generators for every inference stage.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::AoiGrid;
use crate::ingest::{self, Channel, KinematicMatrix, Session};
use crate::quantize::WordDocument;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("not a probability distribution: {0}")]
    MalformedDistribution(String),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    let s: f64 = row.iter().sum();
    if row.is_empty() || row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(SynthError::MalformedDistribution(format!("{what}: {row:?}")));
    }
    Ok(())
}

/// Index drawn from a discrete distribution.
fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Piecewise-constant means plus iid Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSpec {
    pub seed: u64,
    pub n: usize,
    /// 0-based indices that open a new block, strictly increasing in `1..n`.
    pub change_points: Vec<usize>,
    /// One row of per-column means per block.
    pub block_means: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl PiecewiseSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !self.change_points.windows(2).all(|w| w[0] < w[1])
            || self.change_points.iter().any(|&c| c == 0 || c >= self.n)
        {
            return bad("change points must increase strictly within 1..n".into());
        }
        if self.block_means.len() != self.change_points.len() + 1 {
            return bad(format!(
                "{} change points need {} block mean rows, got {}",
                self.change_points.len(),
                self.change_points.len() + 1,
                self.block_means.len()
            ));
        }
        let d = self.block_means[0].len();
        if d == 0 || self.block_means.iter().any(|r| r.len() != d) {
            return bad("block mean rows must share a non-zero width".into());
        }
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        Ok(())
    }
}

/// Samples at times `0, 1, …, n-1` with columns `x0, x1, …`.
pub fn gen_piecewise(spec: &PiecewiseSpec) -> Result<KinematicMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.block_means[0].len();
    let mut values = Vec::with_capacity(spec.n * d);
    let mut block = 0;
    for i in 0..spec.n {
        if block < spec.change_points.len() && i >= spec.change_points[block] {
            block += 1;
        }
        for c in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            values.push(spec.block_means[block][c] + spec.sigma * z);
        }
    }
    let times = (0..spec.n).map(|i| i as f64).collect();
    let columns = (0..d).map(|c| format!("x{c}")).collect();
    Ok(KinematicMatrix::new(times, columns, values)?)
}

/// Forward-samples the LDA generative model with explicit document lengths.
/// Returns the documents and the topic of every token.
pub fn gen_corpus(
    phi: &[Vec<f64>],
    theta: &[Vec<f64>],
    doc_lengths: &[usize],
    seed: u64,
) -> Result<(Vec<WordDocument>, Vec<Vec<usize>>)> {
    if theta.len() != doc_lengths.len() {
        return Err(SynthError::InvalidSpec(format!(
            "{} theta rows for {} documents",
            theta.len(),
            doc_lengths.len()
        )));
    }
    for row in phi {
        check_distribution(row, "phi row")?;
    }
    for row in theta {
        check_distribution(row, "theta row")?;
        if row.len() != phi.len() {
            return Err(SynthError::InvalidSpec("theta width must equal topic count".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(theta.len());
    let mut topics = Vec::with_capacity(theta.len());
    for (m, (row, &len)) in theta.iter().zip(doc_lengths).enumerate() {
        let mut words = Vec::with_capacity(len);
        let mut zs = Vec::with_capacity(len);
        for _ in 0..len {
            let z = draw(row, &mut rng);
            words.push(draw(&phi[z], &mut rng));
            zs.push(z);
        }
        docs.push(WordDocument { segment_id: m, words });
        topics.push(zs);
    }
    Ok((docs, topics))
}

/// A Markov chain of length `n` from a uniformly drawn start state.
pub fn gen_markov(transition: &[Vec<f64>], n: usize, seed: u64) -> Result<Vec<usize>> {
    let k = transition.len();
    for row in transition {
        check_distribution(row, "transition row")?;
        if row.len() != k {
            return Err(SynthError::InvalidSpec("transition matrix must be square".into()));
        }
    }
    if k == 0 {
        return Err(SynthError::MalformedDistribution("empty transition matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    let mut s = rng.random_range(0..k);
    out.push(s);
    for _ in 1..n {
        s = draw(&transition[s], &mut rng);
        out.push(s);
    }
    Ok(out)
}

/// Parameters of a synthetic session with planted behavior and state
/// patterns. Behaviors occupy contiguous segments; heart-rate state is drawn
/// per heart-rate sample from the coupling row of the current behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupledSpec {
    pub seed: u64,
    pub participant_id: String,
    pub duration_s: f64,
    pub imu_rate_hz: f64,
    pub hr_rate_hz: f64,
    pub gaze_rate_hz: f64,
    pub segment_min_s: f64,
    pub segment_max_s: f64,
    /// Per behavior: mean of `ax`, `ay`, `wz`.
    pub behavior_means: Vec<[f64; 3]>,
    /// Noise standard deviation of `ax`, `ay`, `wz`.
    pub imu_sigma: [f64; 3],
    /// Per behavior: probability of each state (0 = normal, 1 = abnormal).
    pub coupling: Vec<Vec<f64>>,
    /// Heart-rate mean per state, bpm.
    pub hr_means: Vec<f64>,
    pub hr_sigma: f64,
    /// Per state: probability that consecutive gaze samples stay in one AOI.
    pub gaze_stay: Vec<f64>,
    /// Write `ax`, `ay`, `wz` to telemetry; without them only speed is written.
    pub include_imu: bool,
    pub include_gaze: bool,
}

impl Default for CoupledSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            participant_id: "synthetic".into(),
            duration_s: 600.0,
            imu_rate_hz: 10.0,
            hr_rate_hz: 1.0,
            gaze_rate_hz: 10.0,
            segment_min_s: 30.0,
            segment_max_s: 90.0,
            behavior_means: vec![
                [-3.0, 0.0, 0.0],
                [2.5, 0.0, 0.0],
                [0.0, 2.5, 0.3],
                [0.0, 0.0, 0.0],
            ],
            imu_sigma: [0.5, 0.5, 0.05],
            coupling: vec![
                vec![0.2, 0.8],
                vec![0.2, 0.8],
                vec![0.8, 0.2],
                vec![0.8, 0.2],
            ],
            hr_means: vec![70.0, 82.0],
            hr_sigma: 3.0,
            gaze_stay: vec![0.95, 0.5],
            include_imu: true,
            include_gaze: true,
        }
    }
}

impl CoupledSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        for (name, v) in [
            ("duration_s", self.duration_s),
            ("imu_rate_hz", self.imu_rate_hz),
            ("hr_rate_hz", self.hr_rate_hz),
            ("gaze_rate_hz", self.gaze_rate_hz),
            ("segment_min_s", self.segment_min_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.segment_max_s >= self.segment_min_s) {
            return bad("segment_max_s must be at least segment_min_s".into());
        }
        if self.behavior_means.len() < 2 {
            return bad("need at least 2 behaviors".into());
        }
        if self.coupling.len() != self.behavior_means.len() {
            return bad("coupling needs one row per behavior".into());
        }
        let states = self.hr_means.len();
        for row in &self.coupling {
            check_distribution(row, "coupling row")?;
            if row.len() != states {
                return bad("coupling rows need one entry per state".into());
            }
        }
        if self.gaze_stay.len() != states || self.gaze_stay.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("gaze_stay needs one probability per state".into());
        }
        if !(self.hr_sigma >= 0.0) || self.imu_sigma.iter().any(|s| !(*s >= 0.0)) {
            return bad("noise scales must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSegment {
    pub start_t: f64,
    pub end_t: f64,
    pub behavior: usize,
}

/// Ground truth of a coupled session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub participant_id: String,
    pub segments: Vec<TruthSegment>,
    pub coupling: Vec<Vec<f64>>,
    pub behavior_means: Vec<[f64; 3]>,
    /// Heart-rate sample times and their states.
    pub hr_times: Vec<f64>,
    pub hr_states: Vec<usize>,
}

impl Truth {
    /// Behavior active at time `t`.
    pub fn behavior_at(&self, t: f64) -> Option<usize> {
        let i = self.segments.partition_point(|s| s.start_t <= t);
        (i > 0 && t < self.segments[i - 1].end_t).then(|| self.segments[i - 1].behavior)
    }

    /// State at time `t`: the latest heart-rate sample at or before `t`.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        let i = self.hr_times.partition_point(|&h| h <= t);
        (i > 0).then(|| self.hr_states[i - 1])
    }
}

fn timeline(duration: f64, rate: f64) -> Vec<f64> {
    let n = (duration * rate).round() as usize;
    (0..n).map(|i| i as f64 / rate).collect()
}

/// Draws a session with planted behavior segments, coupled heart-rate states
/// and state-dependent gaze dynamics.
pub fn gen_coupled_session(spec: &CoupledSpec) -> Result<(Session, Truth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_behaviors = spec.behavior_means.len();

    let mut segments = Vec::new();
    let mut t = 0.0;
    let mut prev: Option<usize> = None;
    while t < spec.duration_s {
        let len = rng.random_range(spec.segment_min_s..=spec.segment_max_s);
        let behavior = loop {
            let b = rng.random_range(0..n_behaviors);
            if Some(b) != prev {
                break b;
            }
        };
        let end = (t + len).min(spec.duration_s);
        segments.push(TruthSegment {
            start_t: t,
            end_t: end,
            behavior,
        });
        prev = Some(behavior);
        t = end;
    }

    let hr_times = timeline(spec.duration_s, spec.hr_rate_hz);
    let mut truth = Truth {
        seed: spec.seed,
        participant_id: spec.participant_id.clone(),
        segments,
        coupling: spec.coupling.clone(),
        behavior_means: spec.behavior_means.clone(),
        hr_times: hr_times.clone(),
        hr_states: Vec::with_capacity(hr_times.len()),
    };
    let mut hr = Vec::with_capacity(hr_times.len());
    for &t in &hr_times {
        let b = truth.behavior_at(t).expect("timeline inside segments");
        let s = draw(&spec.coupling[b], &mut rng);
        truth.hr_states.push(s);
        hr.push(spec.hr_means[s] + spec.hr_sigma * rng.sample::<f64, _>(StandardNormal));
    }

    let mut session = Session::new(spec.participant_id.clone());
    session.metadata.insert("participant_id".into(), spec.participant_id.clone());
    session.metadata.insert("synthetic_seed".into(), spec.seed.to_string());

    let imu_times = timeline(spec.duration_s, spec.imu_rate_hz);
    let mut imu = [
        Vec::with_capacity(imu_times.len()),
        Vec::with_capacity(imu_times.len()),
        Vec::with_capacity(imu_times.len()),
    ];
    for &t in &imu_times {
        let b = truth.behavior_at(t).expect("timeline inside segments");
        for c in 0..3 {
            let z: f64 = rng.sample(StandardNormal);
            imu[c].push(spec.behavior_means[b][c] + spec.imu_sigma[c] * z);
        }
    }
    // speed in km/h from integrated forward acceleration, kept in [0, 150]
    let dt = 1.0 / spec.imu_rate_hz;
    let mut v = 50.0;
    let speed: Vec<f64> = imu[0]
        .iter()
        .map(|a| {
            let out = v;
            v = (v + a * dt * 3.6).clamp(0.0, 150.0);
            out
        })
        .collect();
    if spec.include_imu {
        let [ax, ay, wz] = imu;
        session.add_channel(Channel::new("ax", "m/s^2", imu_times.clone(), ax)?)?;
        session.add_channel(Channel::new("ay", "m/s^2", imu_times.clone(), ay)?)?;
        session.add_channel(Channel::new("wz", "rad/s", imu_times.clone(), wz)?)?;
        session.add_channel(Channel::new("speed", "km/h", imu_times.clone(), speed)?)?;
    } else {
        // GPS-like 1 Hz speed
        let step = (spec.imu_rate_hz.round() as usize).max(1);
        let times: Vec<f64> = imu_times.iter().step_by(step).copied().collect();
        let values: Vec<f64> = speed.iter().step_by(step).copied().collect();
        session.add_channel(Channel::new("speed", "km/h", times, values)?)?;
    }
    session.add_channel(Channel::new("hr", "bpm", hr_times, hr)?)?;

    if spec.include_gaze {
        let grid = AoiGrid::default();
        let n_bins = grid.n_bins();
        let w = (grid.x_max - grid.x_min) / grid.cols as f64;
        let h = (grid.y_max - grid.y_min) / grid.rows as f64;
        let gaze_times = timeline(spec.duration_s, spec.gaze_rate_hz);
        let mut cell = rng.random_range(0..n_bins);
        let mut gx = Vec::with_capacity(gaze_times.len());
        let mut gy = Vec::with_capacity(gaze_times.len());
        for &t in &gaze_times {
            let s = truth.state_at(t).unwrap_or(0);
            if rng.random::<f64>() >= spec.gaze_stay[s] {
                cell = rng.random_range(0..n_bins);
            }
            let (cx, cy) = grid.cell_center(cell);
            gx.push(cx + w * rng.random_range(-0.3..0.3));
            gy.push(cy + h * rng.random_range(-0.3..0.3));
        }
        session.add_channel(Channel::new("gaze_x", "rad", gaze_times.clone(), gx)?)?;
        session.add_channel(Channel::new("gaze_y", "rad", gaze_times, gy)?)?;
    }
    Ok((session, truth))
}

fn write_csv(path: &Path, header: &str, times: &[f64], cols: &[&[f64]]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for (i, t) in times.iter().enumerate() {
        write!(out, "{t}")?;
        for c in cols {
            write!(out, ",{}", c[i])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the session in the CSV layout read by
/// [`load_session_dir`](crate::ingest::load_session_dir), plus `truth.json`.
pub fn write_session_dir(dir: &Path, session: &Session, truth: &Truth) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let get = |n: &str| session.channel(n);
    if session.has("ax") {
        let (ax, ay, wz, speed) = (get("ax")?, get("ay")?, get("wz")?, get("speed")?);
        write_csv(
            &dir.join(ingest::TELEMETRY_FILE),
            "t,ax,ay,wz,speed",
            ax.times(),
            &[ax.values(), ay.values(), wz.values(), speed.values()],
        )?;
    } else if session.has("speed") {
        let speed = get("speed")?;
        write_csv(&dir.join(ingest::SPEED_FILE), "t,speed", speed.times(), &[speed.values()])?;
    }
    if session.has("hr") {
        let hr = get("hr")?;
        write_csv(&dir.join(ingest::HR_FILE), "t,bpm", hr.times(), &[hr.values()])?;
    }
    if session.has("gaze_x") {
        let (gx, gy) = (get("gaze_x")?, get("gaze_y")?);
        write_csv(
            &dir.join(ingest::GAZE_FILE),
            "t,gaze_angle_x,gaze_angle_y",
            gx.times(),
            &[gx.values(), gy.values()],
        )?;
    }
    std::fs::write(dir.join(ingest::META_FILE), serde_json::to_string_pretty(&session.metadata)? + "\n")?;
    std::fs::write(dir.join("truth.json"), serde_json::to_string_pretty(truth)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piecewise(sigma: f64, seed: u64) -> PiecewiseSpec {
        PiecewiseSpec {
            seed,
            n: 400,
            change_points: vec![100, 200, 300],
            block_means: vec![vec![0.0, 1.0], vec![3.0, -1.0], vec![0.0, 2.0], vec![5.0, 0.0]],
            sigma,
        }
    }

    #[test]
    fn zero_noise_is_piecewise_constant() {
        let m = gen_piecewise(&piecewise(0.0, 1)).unwrap();
        assert_eq!(m.row(0), &[0.0, 1.0]);
        assert_eq!(m.row(99), &[0.0, 1.0]);
        assert_eq!(m.row(100), &[3.0, -1.0]);
        assert_eq!(m.row(399), &[5.0, 0.0]);
    }

    #[test]
    fn block_means_within_three_standard_errors() {
        let spec = piecewise(1.0, 2);
        let m = gen_piecewise(&spec).unwrap();
        let bounds = [0, 100, 200, 300, 400];
        for b in 0..4 {
            for c in 0..2 {
                let mean: f64 = (bounds[b]..bounds[b + 1]).map(|i| m.row(i)[c]).sum::<f64>() / 100.0;
                assert!((mean - spec.block_means[b][c]).abs() <= 3.0 / 10.0);
            }
        }
        assert_eq!(gen_piecewise(&spec).unwrap(), m);
        let bad = PiecewiseSpec {
            change_points: vec![200, 100, 300],
            ..spec
        };
        assert!(gen_piecewise(&bad).is_err());
    }

    #[test]
    fn one_hot_corpus_repeats_one_word() {
        let phi = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let theta = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let (docs, z) = gen_corpus(&phi, &theta, &[5, 3], 9).unwrap();
        assert_eq!(docs[0].words, vec![1; 5]);
        assert_eq!(docs[1].words, vec![2; 3]);
        assert_eq!(z[1], vec![1; 3]);
        assert!(gen_corpus(&[vec![0.5, 0.6]], &[vec![1.0]], &[1], 0).is_err());
    }

    #[test]
    fn corpus_frequencies_match_mixture() {
        let phi = vec![vec![0.5, 0.5, 0.0], vec![0.1, 0.1, 0.8]];
        let theta = vec![vec![0.25, 0.75]];
        let (docs, _) = gen_corpus(&phi, &theta, &[10_000], 4).unwrap();
        for (w, expect) in [0.2, 0.2, 0.6].iter().enumerate() {
            let f = docs[0].words.iter().filter(|&&x| x == w).count() as f64 / 10_000.0;
            assert!((f - expect).abs() < 0.02, "word {w}: {f}");
        }
        let again = gen_corpus(&phi, &theta, &[10_000], 4).unwrap().0;
        assert_eq!(again, docs);
    }

    #[test]
    fn markov_identity_and_convergence() {
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let s = gen_markov(&id, 50, 3).unwrap();
        assert!(s.iter().all(|&x| x == s[0]));
        let p = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let seq = gen_markov(&p, 100_000, 8).unwrap();
        let mut counts = [[0.0f64; 2]; 2];
        for w in seq.windows(2) {
            counts[w[0]][w[1]] += 1.0;
        }
        for i in 0..2 {
            let total = counts[i][0] + counts[i][1];
            for j in 0..2 {
                assert!((counts[i][j] / total - p[i][j]).abs() < 0.02);
            }
        }
        assert_eq!(gen_markov(&p, 1000, 8).unwrap(), seq[..1000]);
        assert!(gen_markov(&[vec![0.5, 0.4], vec![0.5, 0.5]], 5, 0).is_err());
    }

    #[test]
    fn coupled_session_is_consistent() {
        let spec = CoupledSpec::default();
        let (session, truth) = gen_coupled_session(&spec).unwrap();
        let (again, truth2) = gen_coupled_session(&spec).unwrap();
        assert_eq!(truth, truth2);
        assert_eq!(session.channel("ax").unwrap(), again.channel("ax").unwrap());
        assert_eq!(truth.segments.first().unwrap().start_t, 0.0);
        assert_eq!(truth.segments.last().unwrap().end_t, spec.duration_s);
        for w in truth.segments.windows(2) {
            assert_eq!(w[0].end_t, w[1].start_t);
            assert_ne!(w[0].behavior, w[1].behavior);
        }
        let hr = session.channel("hr").unwrap();
        assert_eq!(hr.len(), 600);
        let ax = session.channel("ax").unwrap();
        assert_eq!(ax.len(), 6000);
        // samples carry their behavior's mean
        for seg in &truth.segments {
            let vals: Vec<f64> = ax
                .samples()
                .filter(|(t, _)| *t >= seg.start_t && *t < seg.end_t)
                .map(|(_, v)| v)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - spec.behavior_means[seg.behavior][0]).abs() < 0.3);
        }
    }

    #[test]
    fn identity_coupling_is_reproduced() {
        let spec = CoupledSpec {
            coupling: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            ..Default::default()
        };
        let (_, truth) = gen_coupled_session(&spec).unwrap();
        for (t, s) in truth.hr_times.iter().zip(&truth.hr_states) {
            assert_eq!(*s, truth.behavior_at(*t).unwrap() % 2);
        }
    }

    #[test]
    fn speed_only_session() {
        let spec = CoupledSpec {
            include_imu: false,
            include_gaze: false,
            ..Default::default()
        };
        let (session, _) = gen_coupled_session(&spec).unwrap();
        assert!(!session.has("ax") && !session.has("gaze_x"));
        assert_eq!(session.channel("speed").unwrap().len(), 600);
    }

    #[test]
    fn written_session_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CoupledSpec {
            duration_s: 60.0,
            ..Default::default()
        };
        let (session, truth) = gen_coupled_session(&spec).unwrap();
        write_session_dir(dir.path(), &session, &truth).unwrap();
        let loaded = ingest::load_session_dir(dir.path()).unwrap().data;
        assert_eq!(loaded.participant_id, "synthetic");
        let names: Vec<&str> = loaded.channel_names().collect();
        assert_eq!(names, vec!["ax", "ay", "gaze_x", "gaze_y", "hr", "speed", "wz"]);
        let a = session.channel("ay").unwrap();
        let b = loaded.channel("ay").unwrap();
        assert_eq!(a.values(), b.values());
        let t: Truth = serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
        assert_eq!(t, truth);
    }
}
