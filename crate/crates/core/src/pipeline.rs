//! End-to-end analysis of a session: segmentation, behavior and state
//! patterns, and the tables that relate them.
//!
//! Stage order: kinematic matrix → change points → segments → behavior words
//! and topics; heart rate and gaze transition entropy → state words and
//! topics; then co-occurrence, transitions, per-pattern summaries, tests and
//! style aggregation. Every random stage is seeded from the base seed and the
//! participant id, so a report depends only on its inputs and configuration.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bcp::{self, BcpError, BcpParams, BcpResult, SegmentSet};
use crate::gaze::{self, AoiGrid, EntropySeries, GazeError, StationaryMode, WindowConfig};
use crate::ingest::{self, Channel, IngestError, KinematicMatrix, Session};
use crate::par::Exec;
use crate::quantize::{self, Codebook, GmmConfig, QuantizeError};
use crate::stats::{self, StatsError, Summary, TestResult};
use crate::topics::{self, LdaConfig, PatternAssignment, TopicError, TopicModel};

#[derive(Debug, Error)]
pub enum StageSource {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Bcp(#[from] BcpError),
    #[error(transparent)]
    Gaze(#[from] GazeError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Topics(#[from] TopicError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("session `{0}` has neither ax/ay/wz nor speed channels")]
    MissingKinematics(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: StageSource,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        use StageSource as S;
        match self {
            PipelineError::InvalidConfig(_) => ErrorKind::Usage,
            PipelineError::MissingKinematics(_) | PipelineError::Io(_) | PipelineError::Json(_) => ErrorKind::Data,
            PipelineError::Stage { source, .. } => match source {
                S::Ingest(IngestError::DegenerateVariance(_)) => ErrorKind::Numerical,
                S::Ingest(_) | S::Gaze(_) => ErrorKind::Data,
                S::Bcp(BcpError::InvalidParams(_)) => ErrorKind::Usage,
                S::Bcp(BcpError::InsufficientData(_) | BcpError::LengthMismatch { .. } | BcpError::Io(_)) => {
                    ErrorKind::Data
                }
                S::Bcp(BcpError::DegenerateData) => ErrorKind::Numerical,
                S::Quantize(QuantizeError::InvalidConfig(_)) | S::Topics(TopicError::InvalidConfig(_)) => {
                    ErrorKind::Usage
                }
                S::Quantize(QuantizeError::TooFewSamples { .. }) | S::Topics(TopicError::EmptyCorpus) => {
                    ErrorKind::Data
                }
                _ => ErrorKind::Numerical,
            },
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn stage<E: Into<StageSource>>(name: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage: name,
        source: e.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub p0: f64,
    pub w0: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub threshold: f64,
    pub min_len_s: f64,
    /// Resampling rate of the kinematic matrix; the native IMU rate when unset.
    pub rate_hz: Option<f64>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        let b = BcpParams::default();
        Self {
            p0: b.p0,
            w0: b.w0,
            sweeps: b.sweeps,
            burn_in: b.burn_in,
            threshold: 0.5,
            min_len_s: 0.5,
            rate_hz: None,
        }
    }
}

macro_rules! pattern_config {
    ($(#[$doc:meta])* $name:ident, $topics:expr) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            /// Mixture components, i.e. vocabulary size.
            pub words: usize,
            pub topics: usize,
            /// Symmetric document-topic prior; `50 / topics` when unset.
            pub alpha: Option<f64>,
            pub beta: f64,
            pub iters: usize,
            pub burn_in: usize,
            pub chains: usize,
        }

        impl Default for $name {
            fn default() -> Self {
                let lda = LdaConfig::with_k($topics);
                Self {
                    words: 50,
                    topics: $topics,
                    alpha: None,
                    beta: lda.beta,
                    iters: lda.iters,
                    burn_in: lda.burn_in,
                    chains: 4,
                }
            }
        }

        impl $name {
            pub fn lda(&self, seed: u64) -> LdaConfig {
                LdaConfig {
                    k: self.topics,
                    alpha: self.alpha.unwrap_or(50.0 / self.topics.max(1) as f64),
                    beta: self.beta,
                    iters: self.iters,
                    burn_in: self.burn_in,
                    chains: self.chains,
                    seed,
                }
            }
        }
    };
}

pattern_config!(
    /// Words and topics of the driving behavior patterns.
    BehaviorConfig,
    4
);
pattern_config!(
    /// Words and topics of each physiological or visual state stream.
    StateConfig,
    2
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for GmmSettings {
    fn default() -> Self {
        let g = GmmConfig::default();
        Self {
            max_iter: g.max_iter,
            tol: g.tol,
            restarts: g.restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GazeSettings {
    pub enabled: bool,
    pub grid: AoiGrid,
    pub window_s: f64,
    pub stride_s: f64,
    pub mode: StationaryMode,
}

impl Default for GazeSettings {
    fn default() -> Self {
        let w = WindowConfig::default();
        Self {
            enabled: true,
            grid: AoiGrid::default(),
            window_s: w.window_s,
            stride_s: w.stride_s,
            mode: w.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub exec: Exec,
    pub hr_enabled: bool,
    pub segmentation: SegmentationConfig,
    pub gmm: GmmSettings,
    pub behavior: BehaviorConfig,
    pub states: StateConfig,
    pub gaze: GazeSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            exec: Exec::default(),
            hr_enabled: true,
            segmentation: SegmentationConfig::default(),
            gmm: GmmSettings::default(),
            behavior: BehaviorConfig::default(),
            states: StateConfig::default(),
            gaze: GazeSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let s = &self.segmentation;
        if !(s.p0 > 0.0 && s.p0 <= 1.0) {
            errs.push(format!("segmentation.p0 must lie in (0, 1], got {}", s.p0));
        }
        if !(s.w0 > 0.0 && s.w0 <= 1.0) {
            errs.push(format!("segmentation.w0 must lie in (0, 1], got {}", s.w0));
        }
        if s.sweeps == 0 {
            errs.push("segmentation.sweeps must be positive".into());
        }
        if s.burn_in >= s.sweeps {
            errs.push("segmentation.burn_in must be smaller than segmentation.sweeps".into());
        }
        if !(s.threshold > 0.0 && s.threshold < 1.0) {
            errs.push(format!("segmentation.threshold must lie in (0, 1), got {}", s.threshold));
        }
        if !(s.min_len_s > 0.0 && s.min_len_s.is_finite()) {
            errs.push(format!("segmentation.min_len_s must be positive, got {}", s.min_len_s));
        }
        if let Some(r) = s.rate_hz {
            if !(r > 0.0 && r.is_finite()) {
                errs.push(format!("segmentation.rate_hz must be positive, got {r}"));
            }
        }
        if self.gmm.max_iter == 0 {
            errs.push("gmm.max_iter must be positive".into());
        }
        if !(self.gmm.tol >= 0.0) {
            errs.push("gmm.tol must be non-negative".into());
        }
        if self.gmm.restarts == 0 {
            errs.push("gmm.restarts must be positive".into());
        }
        let families = [
            ("behavior", self.behavior.lda(0), self.behavior.words, self.behavior.alpha),
            ("states", self.states.lda(0), self.states.words, self.states.alpha),
        ];
        for (name, lda, words, alpha) in families {
            if words == 0 {
                errs.push(format!("{name}.words must be positive"));
            }
            if lda.k == 0 {
                errs.push(format!("{name}.topics must be positive"));
            }
            if let Some(a) = alpha {
                if !(a > 0.0 && a.is_finite()) {
                    errs.push(format!("{name}.alpha must be positive, got {a}"));
                }
            }
            if !(lda.beta > 0.0 && lda.beta.is_finite()) {
                errs.push(format!("{name}.beta must be positive, got {}", lda.beta));
            }
            if lda.chains == 0 {
                errs.push(format!("{name}.chains must be positive"));
            }
            if lda.burn_in >= lda.iters {
                errs.push(format!("{name}.burn_in must be smaller than {name}.iters"));
            }
        }
        if let Err(e) = self.gaze.grid.validate() {
            errs.push(format!("gaze.grid: {e}"));
        }
        if !(self.gaze.window_s > 0.0) {
            errs.push(format!("gaze.window_s must be positive, got {}", self.gaze.window_s));
        }
        if !(self.gaze.stride_s > 0.0) {
            errs.push(format!("gaze.stride_s must be positive, got {}", self.gaze.stride_s));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::InvalidConfig(errs))
        }
    }
}

/// FNV-1a hash of the base seed and participant id.
pub fn session_seed(base: u64, participant_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in base.to_le_bytes().iter().chain(participant_id.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent seed for a numbered stage (splitmix64 finalizer).
pub fn stage_seed(session: u64, stage: u64) -> u64 {
    let mut z = session.wrapping_add(stage.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub probs: Vec<Vec<f64>>,
}

/// Counts consecutive label pairs; rows without outgoing transitions stay zero.
pub fn transitions(sequence: &[usize], labels: &[String]) -> Option<TransitionMatrix> {
    if sequence.len() < 2 {
        return None;
    }
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    for w in sequence.windows(2) {
        counts[w[0]][w[1]] += 1;
    }
    let probs = counts.iter().map(|r| row_fractions(r)).collect();
    Some(TransitionMatrix {
        labels: labels.to_vec(),
        counts,
        probs,
    })
}

fn row_fractions(row: &[u64]) -> Vec<f64> {
    let total: u64 = row.iter().sum();
    row.iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cooccurrence {
    pub modality: String,
    pub behavior_labels: Vec<String>,
    pub state_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized counts; rows without samples are zero.
    pub fractions: Vec<Vec<f64>>,
}

/// Tallies state samples by the behavior of the segment they fall in.
/// `state_samples` holds `(segment index, state)` pairs.
pub fn cooccurrence(
    modality: &str,
    behavior: &[Option<usize>],
    state_samples: &[(usize, usize)],
    behavior_labels: &[String],
    state_labels: &[String],
) -> Cooccurrence {
    let mut counts = vec![vec![0u64; state_labels.len()]; behavior_labels.len()];
    for &(seg, s) in state_samples {
        if let Some(Some(b)) = behavior.get(seg) {
            counts[*b][s] += 1;
        }
    }
    let fractions = counts.iter().map(|r| row_fractions(r)).collect();
    Cooccurrence {
        modality: modality.into(),
        behavior_labels: behavior_labels.to_vec(),
        state_labels: state_labels.to_vec(),
        counts,
        fractions,
    }
}

/// Majority state of the samples inside each segment, ties to the lower
/// state; segments without samples stay unlabeled.
pub fn map_states_to_segments(state_samples: &[(usize, usize)], n_segments: usize, k: usize) -> Vec<Option<usize>> {
    let mut counts = vec![vec![0usize; k]; n_segments];
    for &(seg, s) in state_samples {
        counts[seg][s] += 1;
    }
    counts
        .iter()
        .map(|c| {
            let best = (1..k).fold(0, |b, s| if c[s] > c[b] { s } else { b });
            (c[best] > 0).then_some(best)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Aggressive,
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternStyle {
    pub pattern: usize,
    pub label: String,
    pub style: Style,
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSummary {
    pub participant_id: String,
    pub style: Style,
    pub fraction_abnormal_hr: Option<f64>,
    pub fraction_high_gte: Option<f64>,
    pub hr_samples: u64,
    pub gte_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSection {
    pub accel_channel: String,
    pub patterns: Vec<PatternStyle>,
    pub summaries: Vec<StyleSummary>,
    pub flags: Vec<String>,
}

/// Classifies each behavior pattern by a two-sided signed-rank test of its
/// acceleration samples against zero.
pub fn classify_styles(accel_by_pattern: &[Vec<f64>], labels: &[String]) -> Vec<PatternStyle> {
    accel_by_pattern
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .filter_map(|(p, v)| {
            let test = stats::wilcoxon_signed_rank(v).ok()?;
            Some(PatternStyle {
                pattern: p,
                label: labels[p].clone(),
                style: if test.significant_at_05 {
                    Style::Aggressive
                } else {
                    Style::Conservative
                },
                test: TestResult {
                    name: format!("wilcoxon:{}", labels[p]),
                    ..test
                },
            })
        })
        .collect()
}

/// Fractions of high-state samples (state 1) within each style group.
pub fn style_aggregate(
    participant_id: &str,
    patterns: &[PatternStyle],
    hr: Option<&Cooccurrence>,
    gte: Option<&Cooccurrence>,
) -> (Vec<StyleSummary>, Vec<String>) {
    let mut flags = Vec::new();
    let mut out = Vec::new();
    for (style, flag) in [
        (Style::Aggressive, "NoAggressivePattern"),
        (Style::Conservative, "NoConservativePattern"),
    ] {
        let members: Vec<usize> = patterns.iter().filter(|p| p.style == style).map(|p| p.pattern).collect();
        if members.is_empty() {
            flags.push(flag.to_string());
            continue;
        }
        let frac = |c: Option<&Cooccurrence>| -> (Option<f64>, u64) {
            let Some(c) = c else { return (None, 0) };
            let (mut high, mut total) = (0u64, 0u64);
            for &m in &members {
                total += c.counts[m].iter().sum::<u64>();
                high += c.counts[m].iter().skip(1).sum::<u64>();
            }
            ((total > 0).then(|| high as f64 / total as f64), total)
        };
        let (fraction_abnormal_hr, hr_samples) = frac(hr);
        let (fraction_high_gte, gte_samples) = frac(gte);
        out.push(StyleSummary {
            participant_id: participant_id.into(),
            style,
            fraction_abnormal_hr,
            fraction_high_gte,
            hr_samples,
            gte_samples,
        });
    }
    (out, flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub pattern: usize,
    pub label: String,
    pub channel: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub base: u64,
    pub session: u64,
    pub segmentation: u64,
    pub behavior_words: u64,
    pub behavior_topics: u64,
    pub state_words: u64,
    pub state_topics: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub participant_id: String,
    pub version: String,
    pub mode: KinematicMode,
    pub kinematic_channels: Vec<String>,
    pub segment_rate_hz: f64,
    pub n_samples: usize,
    pub min_len_samples: usize,
    pub seeds: Seeds,
    pub metadata: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub id: usize,
    pub start_t: f64,
    pub end_t: f64,
    pub start_idx: usize,
    pub end_idx: usize,
    pub change_prob_at_boundary: f64,
    pub behavior: Option<usize>,
    pub hr_state: Option<usize>,
    pub gte_state: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSection {
    pub words: usize,
    pub topics: usize,
    /// Advisory names ranked from pattern means; the analysis never uses them.
    pub labels: Vec<String>,
    pub codebook_log_likelihood: f64,
    pub bic: f64,
    pub assignments: Vec<PatternAssignment>,
    pub summaries: Vec<ChannelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSection {
    pub modality: String,
    pub words: usize,
    pub topics: usize,
    /// Topics are ordered by expected standardized value, lowest first.
    pub labels: Vec<String>,
    pub n_samples: usize,
    pub assignments: Vec<PatternAssignment>,
    pub summaries: Vec<ChannelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    pub segments: Vec<SegmentRow>,
    pub behavior: BehaviorSection,
    pub states: Vec<StateSection>,
    pub tests: Vec<TestResult>,
    pub transitions: Option<TransitionMatrix>,
    pub cooccurrence: Vec<Cooccurrence>,
    pub styles: StyleSection,
}

impl Report {
    /// Canonical JSON text; identical inputs give identical bytes.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Everything produced by [`run_pipeline`]; the report plus the series behind
/// the figure files.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: Report,
    pub segments: SegmentSet,
    pub change_prob: BcpResult,
    pub matrix_times: Vec<f64>,
    pub behavior_codebook: Codebook,
    pub behavior_model: TopicModel,
    pub entropy: Option<EntropySeries>,
}

struct StateOutcome {
    section: StateSection,
    cooc: Cooccurrence,
    samples: Vec<(usize, usize)>,
    per_segment: Vec<Option<usize>>,
    raw_by_state: Vec<Vec<f64>>,
}

fn state_labels(modality: &str, k: usize) -> Vec<String> {
    match (modality, k) {
        ("hr", 2) => vec!["normal".into(), "abnormal".into()],
        (_, 2) => vec!["low".into(), "high".into()],
        _ => (0..k).map(|i| format!("{modality}_state{i}")).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn analyze_state(
    modality: &'static str,
    channel: &Channel,
    cfg: &PipelineConfig,
    seeds: (u64, u64),
    segs: &SegmentSet,
    behavior: &[Option<usize>],
    behavior_labels: &[String],
) -> Result<StateOutcome> {
    let z = ingest::zscore(channel).map_err(stage(modality))?;
    let pc = &cfg.states;
    let gcfg = GmmConfig {
        k: pc.words,
        max_iter: cfg.gmm.max_iter,
        tol: cfg.gmm.tol,
        restarts: cfg.gmm.restarts,
        seed: seeds.0,
    };
    let fit = quantize::fit_gmm(z.values(), 1, &gcfg, cfg.exec).map_err(stage(modality))?;
    let words = quantize::encode(&fit.codebook, z.values(), 1, cfg.exec).map_err(stage(modality))?;
    let docs = quantize::documents_from_segments(z.times(), &words, segs);
    let mut model = topics::fit_lda(&docs, pc.words, &pc.lda(seeds.1), cfg.exec).map_err(stage(modality))?;
    // order topics by expected standardized value
    let expected: Vec<f64> = model
        .phi
        .iter()
        .map(|row| row.iter().zip(&fit.codebook.means).map(|(p, m)| p * m[0]).sum())
        .collect();
    let mut order: Vec<usize> = (0..model.k).collect();
    order.sort_by(|&a, &b| expected[a].total_cmp(&expected[b]).then(a.cmp(&b)));
    model.reorder(&order);
    let assignments = topics::assign_patterns(&model, &docs).map_err(stage(modality))?;
    let labels = state_labels(modality, model.k);

    let mut samples = Vec::new();
    let mut raw_by_state = vec![Vec::new(); model.k];
    for ((&t, &w), &raw) in z.times().iter().zip(&words).zip(channel.values()) {
        if let Some(seg) = segs.locate(t) {
            let s = model.token_topic(seg, w);
            samples.push((seg, s));
            raw_by_state[s].push(raw);
        }
    }
    let per_segment = map_states_to_segments(&samples, segs.len(), model.k);
    let cooc = cooccurrence(modality, behavior, &samples, behavior_labels, &labels);
    let summaries = raw_by_state
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(s, v)| {
            Ok(ChannelSummary {
                pattern: s,
                label: labels[s].clone(),
                channel: channel.name().to_string(),
                summary: stats::describe(v).map_err(stage("stats"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StateOutcome {
        section: StateSection {
            modality: modality.into(),
            words: pc.words,
            topics: model.k,
            labels,
            n_samples: samples.len(),
            assignments,
            summaries,
        },
        cooc,
        samples,
        per_segment,
        raw_by_state,
    })
}

/// Advisory names from pattern means: most negative forward acceleration is
/// a harsh brake, most positive an acceleration; of the rest, the larger
/// lateral (or speed, without IMU) mean is turning (or free flow).
fn behavior_names(k: usize, fwd: &[Option<f64>], other: &[Option<f64>], imu: bool) -> Vec<String> {
    let mut names: Vec<String> = (0..k).map(|i| format!("pattern{i}")).collect();
    if k != 4 || fwd.iter().chain(other).any(Option::is_none) {
        return names;
    }
    let f: Vec<f64> = fwd.iter().map(|v| v.unwrap()).collect();
    let o: Vec<f64> = other.iter().map(|v| v.unwrap()).collect();
    let mut left: Vec<usize> = (0..k).collect();
    let take = |left: &mut Vec<usize>, key: &dyn Fn(usize) -> f64| -> usize {
        let pos = (1..left.len()).fold(0, |b, i| if key(left[i]) > key(left[b]) { i } else { b });
        left.remove(pos)
    };
    let brake = take(&mut left, &|p| -f[p]);
    let accel = take(&mut left, &|p| f[p]);
    let high = take(&mut left, &|p| o[p]);
    let low = left[0];
    names[brake] = "harsh brake".into();
    names[accel] = "acceleration".into();
    if imu {
        names[high] = "turning".into();
        names[low] = "free flow".into();
    } else {
        names[high] = "free flow".into();
        names[low] = "congestion".into();
    }
    names
}

fn values_by_pattern(ch: &Channel, segs: &SegmentSet, behavior: &[Option<usize>], k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); k];
    for (t, v) in ch.samples() {
        if let Some(Some(b)) = segs.locate(t).map(|s| behavior[s]) {
            out[b].push(v);
        }
    }
    out
}

fn pairwise_ks(tests: &mut Vec<TestResult>, prefix: &str, groups: &[Vec<f64>], labels: &[String]) -> Result<()> {
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            if groups[i].is_empty() || groups[j].is_empty() {
                continue;
            }
            let r = stats::ks_two_sample(&groups[i], &groups[j]).map_err(stage("stats"))?;
            tests.push(TestResult {
                name: format!("ks:{prefix}:{}|{}", labels[i], labels[j]),
                ..r
            });
        }
    }
    Ok(())
}

/// Which streams feed segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KinematicMode {
    /// `ax`, `ay`, `wz` at their native rate.
    Imu,
    /// Speed resampled to 1 Hz and its gradient.
    Speed,
}

#[derive(Debug, Clone)]
pub struct KinematicInput {
    pub mode: KinematicMode,
    pub rate_hz: f64,
    pub matrix: KinematicMatrix,
    /// The input session plus any derived channels.
    pub session: Session,
}

/// Builds the segmentation matrix: IMU channels when all three exist,
/// otherwise speed and its gradient.
pub fn kinematic_input(session: &Session, cfg: &SegmentationConfig) -> Result<KinematicInput> {
    let mut work = session.clone();
    let imu = ["ax", "ay", "wz"].iter().all(|n| session.has(n));
    let (mode, names, rate) = if imu {
        let rate = match cfg.rate_hz {
            Some(r) => r,
            None => session
                .channel("ax")
                .map_err(stage("ingest"))?
                .sample_rate()
                .ok_or_else(|| stage("ingest")(IngestError::EmptyChannel("ax".into())))?,
        };
        (KinematicMode::Imu, vec!["ax".to_string(), "ay".into(), "wz".into()], rate)
    } else if session.has("speed") {
        let rate = cfg.rate_hz.unwrap_or(1.0);
        let speed = session.channel("speed").map_err(stage("ingest"))?;
        let uniform = ingest::resample(speed, rate, ingest::ResampleMethod::Linear).map_err(stage("ingest"))?;
        let accel = ingest::accel_from_speed(&uniform).map_err(stage("ingest"))?;
        let accel_name = accel.name().to_string();
        work.add_channel(accel).map_err(stage("ingest"))?;
        (KinematicMode::Speed, vec!["speed".to_string(), accel_name], rate)
    } else {
        return Err(PipelineError::MissingKinematics(session.participant_id.clone()));
    };
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let matrix = ingest::assemble_matrix(&work, &name_refs, rate).map_err(stage("ingest"))?;
    Ok(KinematicInput {
        mode,
        rate_hz: rate,
        matrix,
        session: work,
    })
}

/// Change-point posterior and the segments cut from it.
pub fn segment(
    matrix: &KinematicMatrix,
    cfg: &SegmentationConfig,
    rate_hz: f64,
    seed: u64,
) -> Result<(BcpResult, SegmentSet)> {
    let params = BcpParams {
        p0: cfg.p0,
        w0: cfg.w0,
        sweeps: cfg.sweeps,
        burn_in: cfg.burn_in,
        seed,
    };
    let change_prob = bcp::run(matrix, &params).map_err(stage("segment"))?;
    let min_len = ((cfg.min_len_s * rate_hz).round() as usize).max(1);
    let segs = bcp::extract_segments(&change_prob, matrix.times(), cfg.threshold, min_len).map_err(stage("segment"))?;
    Ok((change_prob, segs))
}

/// Pairs horizontal and vertical gaze channels into `(t, x, y)` samples,
/// keeping times present in both.
pub fn gaze_samples(x: &Channel, y: &Channel) -> Vec<(f64, f64, f64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(x.len().min(y.len()));
    while i < x.len() && j < y.len() {
        let (tx, ty) = (x.times()[i], y.times()[j]);
        if tx == ty {
            out.push((tx, x.values()[i], y.values()[j]));
            i += 1;
            j += 1;
        } else if tx < ty {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Runs the full analysis on one session.
pub fn run_pipeline(session: &Session, cfg: &PipelineConfig) -> Result<Analysis> {
    cfg.validate()?;
    let exec = cfg.exec;
    let pid = session.participant_id.clone();
    let sseed = session_seed(cfg.seed, &pid);
    let seeds = Seeds {
        base: cfg.seed,
        session: sseed,
        segmentation: stage_seed(sseed, 1),
        behavior_words: stage_seed(sseed, 2),
        behavior_topics: stage_seed(sseed, 3),
        state_words: stage_seed(sseed, 4),
        state_topics: stage_seed(sseed, 5),
    };
    let mut warnings = Vec::new();

    let KinematicInput {
        mode,
        rate_hz: rate,
        matrix,
        session: work,
    } = kinematic_input(session, &cfg.segmentation)?;
    let names = matrix.columns().to_vec();
    let imu = mode == KinematicMode::Imu;
    let times = matrix.times().to_vec();
    let (change_prob, segs) = segment(&matrix, &cfg.segmentation, rate, seeds.segmentation)?;
    let min_len = segs.min_len;

    // behavior patterns
    let d = matrix.n_cols();
    let bc = &cfg.behavior;
    let gcfg = GmmConfig {
        k: bc.words,
        max_iter: cfg.gmm.max_iter,
        tol: cfg.gmm.tol,
        restarts: cfg.gmm.restarts,
        seed: seeds.behavior_words,
    };
    let fit = quantize::fit_gmm(matrix.values(), d, &gcfg, exec).map_err(stage("quantize"))?;
    let codebook = fit.codebook;
    let bic = quantize::bic(&codebook, matrix.values(), d, exec).map_err(stage("quantize"))?;
    let words = quantize::encode(&codebook, matrix.values(), d, exec).map_err(stage("quantize"))?;
    let docs = quantize::documents_from_segments(&times, &words, &segs);
    let model = topics::fit_lda(&docs, bc.words, &bc.lda(seeds.behavior_topics), exec).map_err(stage("topics"))?;
    let assignments = topics::assign_patterns(&model, &docs).map_err(stage("topics"))?;
    let behavior: Vec<Option<usize>> = assignments.iter().map(|a| a.dominant_topic).collect();
    let k = model.k;

    // per-pattern channel values
    let mut summary_channels: Vec<String> = names.clone();
    if !summary_channels.iter().any(|n| n == "speed") && work.has("speed") {
        summary_channels.push("speed".into());
    }
    let mut grouped: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for name in &summary_channels {
        let ch = work.channel(name).map_err(stage("ingest"))?;
        grouped.push((name.clone(), values_by_pattern(ch, &segs, &behavior, k)));
    }
    let mean_of = |name: &str, abs: bool| -> Vec<Option<f64>> {
        let g = &grouped.iter().find(|(n, _)| n == name).expect("summarized channel").1;
        g.iter()
            .map(|v| {
                (!v.is_empty())
                    .then(|| v.iter().map(|x| if abs { x.abs() } else { *x }).sum::<f64>() / v.len() as f64)
            })
            .collect()
    };
    let accel_channel = names[if imu { 0 } else { 1 }].clone();
    let labels = if imu {
        behavior_names(k, &mean_of("ax", false), &mean_of("ay", true), true)
    } else {
        behavior_names(k, &mean_of(&accel_channel, false), &mean_of("speed", false), false)
    };
    let mut summaries = Vec::new();
    for (name, groups) in &grouped {
        for (p, v) in groups.iter().enumerate() {
            if v.is_empty() {
                continue;
            }
            summaries.push(ChannelSummary {
                pattern: p,
                label: labels[p].clone(),
                channel: name.clone(),
                summary: stats::describe(v).map_err(stage("stats"))?,
            });
        }
    }
    let mut tests = Vec::new();
    for (name, groups) in &grouped {
        pairwise_ks(&mut tests, name, groups, &labels)?;
    }

    // state patterns
    let mut states = Vec::new();
    let mut outcomes: BTreeMap<&str, StateOutcome> = BTreeMap::new();
    let mut entropy = None;
    if cfg.hr_enabled {
        if let Ok(hr) = session.channel("hr") {
            let o = analyze_state("hr", hr, cfg, (seeds.state_words, seeds.state_topics), &segs, &behavior, &labels)?;
            outcomes.insert("hr", o);
        } else {
            warnings.push("no hr channel; heart-rate states skipped".into());
        }
    }
    if cfg.gaze.enabled {
        if let (Ok(gx), Ok(gy)) = (session.channel("gaze_x"), session.channel("gaze_y")) {
            let samples = gaze_samples(gx, gy);
            let seq = gaze::bin_gaze(&samples, &cfg.gaze.grid).map_err(stage("gaze"))?;
            let wc = WindowConfig {
                window_s: cfg.gaze.window_s,
                stride_s: cfg.gaze.stride_s,
                mode: cfg.gaze.mode,
            };
            let series = gaze::rolling_entropy(&seq, &wc, exec).map_err(stage("gaze"))?;
            let (t, v): (Vec<f64>, Vec<f64>) = series
                .window_centers
                .iter()
                .zip(&series.gte)
                .filter_map(|(&t, g)| g.map(|g| (t, g)))
                .unzip();
            let ch = Channel::new("gte", "bits", t, v).map_err(stage("gaze"))?;
            let o = analyze_state(
                "gte",
                &ch,
                cfg,
                (stage_seed(seeds.state_words, 1), stage_seed(seeds.state_topics, 1)),
                &segs,
                &behavior,
                &labels,
            )?;
            outcomes.insert("gte", o);
            entropy = Some(series);
        } else {
            warnings.push("no gaze channels; gaze entropy states skipped".into());
        }
    }

    for (modality, o) in &outcomes {
        pairwise_ks(&mut tests, modality, &o.raw_by_state, &o.section.labels)?;
        if o.section.topics == 2 {
            for (b, row) in o.cooc.counts.iter().enumerate() {
                if row.iter().sum::<u64>() == 0 {
                    continue;
                }
                let r = stats::chi_square_equal(row[0], row[1]).map_err(stage("stats"))?;
                tests.push(TestResult {
                    name: format!("chi2_equal:{modality}:{}", labels[b]),
                    ..r
                });
            }
        }
        if o.cooc.counts.iter().flatten().sum::<u64>() > 0 {
            let r = stats::chi_square_independence(&o.cooc.counts).map_err(stage("stats"))?;
            tests.push(TestResult {
                name: format!("chi2_independence:{modality}"),
                ..r
            });
        }
        // state indicators grouped by behavior pattern
        let mut by_pattern: Vec<Vec<f64>> = vec![Vec::new(); k];
        for &(seg, s) in &o.samples {
            if let Some(b) = behavior[seg] {
                by_pattern[b].push(s as f64);
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                if by_pattern[i].is_empty() || by_pattern[j].is_empty() || by_pattern[i].len() + by_pattern[j].len() < 3 {
                    continue;
                }
                let r = stats::kruskal_wallis(&[&by_pattern[i], &by_pattern[j]]).map_err(stage("stats"))?;
                tests.push(TestResult {
                    name: format!("kruskal_wallis:{modality}:{}|{}", labels[i], labels[j]),
                    ..r
                });
            }
        }
    }

    // styles
    let accel_groups = &grouped.iter().find(|(n, _)| *n == accel_channel).expect("accel summarized").1;
    let patterns = classify_styles(accel_groups, &labels);
    let (style_summaries, flags) = style_aggregate(
        &pid,
        &patterns,
        outcomes.get("hr").map(|o| &o.cooc),
        outcomes.get("gte").map(|o| &o.cooc),
    );
    for p in &patterns {
        tests.push(p.test.clone());
    }

    let sequence: Vec<usize> = behavior.iter().flatten().copied().collect();
    let transition_matrix = transitions(&sequence, &labels);
    if transition_matrix.is_none() {
        warnings.push("fewer than 2 labeled segments; no transition matrix".into());
    }

    let seg_rows = segs
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| SegmentRow {
            id: i,
            start_t: s.start_t,
            end_t: s.end_t,
            start_idx: s.start_idx,
            end_idx: s.end_idx,
            change_prob_at_boundary: s.change_prob_at_boundary,
            behavior: behavior[i],
            hr_state: outcomes.get("hr").and_then(|o| o.per_segment[i]),
            gte_state: outcomes.get("gte").and_then(|o| o.per_segment[i]),
        })
        .collect();
    let mut cooc = Vec::new();
    for (_, o) in outcomes {
        cooc.push(o.cooc);
        states.push(o.section);
    }
    let report = Report {
        meta: Meta {
            participant_id: pid.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            mode,
            kinematic_channels: names,
            segment_rate_hz: rate,
            n_samples: matrix.n_rows(),
            min_len_samples: min_len,
            seeds,
            metadata: session.metadata.clone(),
            warnings,
        },
        segments: seg_rows,
        behavior: BehaviorSection {
            words: bc.words,
            topics: k,
            labels,
            codebook_log_likelihood: codebook.log_likelihood,
            bic,
            assignments,
            summaries,
        },
        states,
        tests,
        transitions: transition_matrix,
        cooccurrence: cooc,
        styles: StyleSection {
            accel_channel,
            patterns,
            summaries: style_summaries,
            flags,
        },
    };
    Ok(Analysis {
        report,
        segments: segs,
        change_prob,
        matrix_times: times,
        behavior_codebook: codebook,
        behavior_model: model,
        entropy,
    })
}

/// Analyzes several sessions, in parallel when `exec` allows. Each session
/// keeps its own seeds, so results do not depend on the order or the number
/// of sessions.
pub fn run_sessions(sessions: &[Session], cfg: &PipelineConfig, exec: Exec) -> Vec<Result<Analysis>> {
    exec.map_slice(sessions, |s| run_pipeline(s, cfg))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `report.json` plus one CSV per table or figure into `dir`.
pub fn write_outputs(dir: &Path, analysis: &Analysis) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let r = &analysis.report;
    std::fs::write(dir.join("report.json"), r.to_json()?)?;
    bcp::write_segments_json(&dir.join("segments.json"), &analysis.segments).map_err(stage("output"))?;
    bcp::write_change_prob_csv(&dir.join("changeprob.csv"), &analysis.change_prob, &analysis.matrix_times)
        .map_err(stage("output"))?;
    if let Some(series) = &analysis.entropy {
        gaze::write_entropy_csv(&dir.join("entropy.csv"), series).map_err(stage("output"))?;
    }

    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("pattern_summaries.csv"))?);
    writeln!(f, "group,pattern,label,channel,n,mean,sd,p25,median,p75")?;
    let sections = std::iter::once(("behavior", &r.behavior.summaries))
        .chain(r.states.iter().map(|s| (s.modality.as_str(), &s.summaries)));
    for (group, rows) in sections {
        for s in rows.iter() {
            let m = &s.summary;
            writeln!(
                f,
                "{group},{},{},{},{},{},{},{},{},{}",
                s.pattern, s.label, s.channel, m.n, m.mean, m.sd, m.p25, m.median, m.p75
            )?;
        }
    }
    f.flush()?;

    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("tests.csv"))?);
    writeln!(f, "name,statistic,p_value,significant_at_05")?;
    for t in &r.tests {
        writeln!(f, "{},{},{},{}", t.name, t.statistic, t.p_value, t.significant_at_05)?;
    }
    f.flush()?;

    if let Some(tm) = &r.transitions {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("transitions.csv"))?);
        writeln!(f, "from,to,count,prob")?;
        for (i, row) in tm.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                writeln!(f, "{},{},{c},{}", tm.labels[i], tm.labels[j], tm.probs[i][j])?;
            }
        }
        f.flush()?;
    }

    for c in &r.cooccurrence {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("cooccurrence_{}.csv", c.modality)))?);
        writeln!(f, "behavior,state,count,fraction")?;
        for (b, row) in c.counts.iter().enumerate() {
            for (s, n) in row.iter().enumerate() {
                writeln!(f, "{},{},{n},{}", c.behavior_labels[b], c.state_labels[s], c.fractions[b][s])?;
            }
        }
        f.flush()?;
    }

    write_styles_csv(&dir.join("styles.csv"), std::slice::from_ref(r))?;
    Ok(())
}

/// Style fractions of several participants, two rows each.
pub fn write_styles_csv(path: &Path, reports: &[Report]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "participant_id,style,fraction_abnormal_hr,fraction_high_gte,hr_samples,gte_samples")?;
    for r in reports {
        for s in &r.styles.summaries {
            let style = match s.style {
                Style::Aggressive => "aggressive",
                Style::Conservative => "conservative",
            };
            writeln!(
                f,
                "{},{style},{},{},{},{}",
                s.participant_id,
                csv_opt(s.fraction_abnormal_hr),
                csv_opt(s.fraction_high_gte),
                s.hr_samples,
                s.gte_samples
            )?;
        }
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn transitions_by_hand() {
        let tm = transitions(&[0, 0, 1, 0], &labels(2)).unwrap();
        assert_eq!(tm.counts, vec![vec![1, 1], vec![1, 0]]);
        assert_eq!(tm.probs, vec![vec![0.5, 0.5], vec![1.0, 0.0]]);
        let c = transitions(&[2, 2, 2], &labels(3)).unwrap();
        assert_eq!(c.probs[2], vec![0.0, 0.0, 1.0]);
        assert_eq!(c.probs[0], vec![0.0; 3]);
        assert!(transitions(&[1], &labels(2)).is_none());
    }

    #[test]
    fn majority_labels() {
        let all_one = [(0, 1), (0, 1), (0, 1)];
        assert_eq!(map_states_to_segments(&all_one, 1, 2), vec![Some(1)]);
        let sixty = [(0, 0), (0, 0), (0, 0), (0, 1), (0, 1)];
        assert_eq!(map_states_to_segments(&sixty, 2, 2), vec![Some(0), None]);
        let tie = [(0, 1), (0, 0)];
        assert_eq!(map_states_to_segments(&tie, 1, 2), vec![Some(0)]);
    }

    #[test]
    fn cooccurrence_certain_pattern() {
        let behavior = [Some(0), Some(1), None];
        let samples = [(0, 1), (0, 1), (1, 0), (1, 1), (2, 0)];
        let c = cooccurrence("hr", &behavior, &samples, &labels(2), &labels(2));
        assert_eq!(c.counts, vec![vec![0, 2], vec![1, 1]]);
        assert_eq!(c.fractions[0], vec![0.0, 1.0]);
        assert_eq!(c.fractions[1], vec![0.5, 0.5]);
    }

    #[test]
    fn style_flags_when_one_sided() {
        let t = TestResult::new("w", 0.0, 1.0);
        let only = vec![PatternStyle {
            pattern: 0,
            label: "p0".into(),
            style: Style::Conservative,
            test: t,
        }];
        let c = cooccurrence("hr", &[Some(0)], &[(0, 1), (0, 0), (0, 0), (0, 0)], &labels(1), &labels(2));
        let (s, flags) = style_aggregate("x", &only, Some(&c), None);
        assert_eq!(flags, vec!["NoAggressivePattern".to_string()]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].fraction_abnormal_hr, Some(0.25));
        assert_eq!(s[0].fraction_high_gte, None);
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(session_seed(7, "p1"), session_seed(7, "p1"));
        assert_ne!(session_seed(7, "p1"), session_seed(7, "p2"));
        assert_ne!(session_seed(7, "p1"), session_seed(8, "p1"));
        assert_ne!(stage_seed(1, 1), stage_seed(1, 2));
    }

    #[test]
    fn config_validation_lists_fields() {
        let mut cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        cfg.segmentation.threshold = 1.1;
        cfg.behavior.topics = 0;
        let PipelineError::InvalidConfig(errs) = cfg.validate().unwrap_err() else {
            panic!("expected config error")
        };
        assert_eq!(errs.len(), 2);
        assert!(errs[0].starts_with("segmentation.threshold"));
        assert!(errs[1].starts_with("behavior.topics"));
    }

    #[test]
    fn advisory_names_by_rank() {
        let fwd = [Some(0.1), Some(-3.0), Some(2.0), Some(0.0)];
        let lat = [Some(0.1), Some(0.0), Some(0.0), Some(2.5)];
        let n = behavior_names(4, &fwd, &lat, true);
        assert_eq!(n, vec!["free flow", "harsh brake", "acceleration", "turning"]);
        assert_eq!(behavior_names(3, &fwd[..3], &lat[..3], true)[0], "pattern0");
    }
}
