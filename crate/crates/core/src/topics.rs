//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Documents are bags of words. `phi` (topic-word) and `theta`
//! (document-topic) are posterior-mean estimates averaged over the sweeps
//! after burn-in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;
use crate::quantize::WordDocument;

#[derive(Debug, Error, PartialEq)]
pub enum TopicError {
    #[error("corpus has no non-empty document")]
    EmptyCorpus,
    #[error("word {word} outside vocabulary of size {vocab}")]
    WordOutOfRange { word: usize, vocab: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("not a probability distribution: {0}")]
    MalformedDistribution(String),
}

pub type Result<T, E = TopicError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iters: usize,
    pub burn_in: usize,
    /// Independent chains; the one with the highest word log-likelihood wins.
    pub chains: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// Defaults for `k` topics: `alpha = 50 / k`, `beta = 0.01`, 1000 sweeps
    /// with 200 burn-in.
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            alpha: 50.0 / k.max(1) as f64,
            beta: 0.01,
            iters: 1000,
            burn_in: 200,
            chains: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TopicError::InvalidConfig(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.chains == 0 {
            return bad("chains must be at least 1".into());
        }
        if self.burn_in >= self.iters {
            return bad(format!(
                "burn_in ({}) must be smaller than iters ({})",
                self.burn_in, self.iters
            ));
        }
        Ok(())
    }
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self::with_k(4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "V")]
    pub v: usize,
    pub alpha: f64,
    pub beta: f64,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub seed: u64,
    /// Final per-token topic labels, one row per document.
    #[serde(skip)]
    pub assignments: Vec<Vec<usize>>,
}

/// Count tables of the collapsed sampler.
#[derive(Debug, Clone)]
pub struct GibbsState {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    doc_topic: Vec<Vec<u64>>,
    topic_word: Vec<Vec<u64>>,
    topic_total: Vec<u64>,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
}

impl GibbsState {
    /// Validates the corpus and draws initial topics uniformly.
    pub fn new(docs: &[WordDocument], v: usize, cfg: &LdaConfig) -> Result<Self> {
        cfg.validate()?;
        if docs.iter().all(WordDocument::is_empty) {
            return Err(TopicError::EmptyCorpus);
        }
        for doc in docs {
            if let Some(&word) = doc.words.iter().find(|&&w| w >= v) {
                return Err(TopicError::WordOutOfRange { word, vocab: v });
            }
        }
        let k = cfg.k;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut doc_topic = vec![vec![0u64; k]; docs.len()];
        let mut topic_word = vec![vec![0u64; v]; k];
        let mut topic_total = vec![0u64; k];
        let mut z = Vec::with_capacity(docs.len());
        for (d, doc) in docs.iter().enumerate() {
            let zd: Vec<usize> = doc.words.iter().map(|_| rng.random_range(0..k)).collect();
            for (&w, &t) in doc.words.iter().zip(&zd) {
                doc_topic[d][t] += 1;
                topic_word[t][w] += 1;
                topic_total[t] += 1;
            }
            z.push(zd);
        }
        Ok(Self {
            k,
            v,
            alpha: cfg.alpha,
            beta: cfg.beta,
            docs: docs.iter().map(|d| d.words.clone()).collect(),
            z,
            doc_topic,
            topic_word,
            topic_total,
            rng,
            probs: vec![0.0; k],
        })
    }

    /// Resamples every token's topic once, documents and tokens in order.
    pub fn sweep(&mut self) {
        let vbeta = self.v as f64 * self.beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                self.doc_topic[d][old] -= 1;
                self.topic_word[old][w] -= 1;
                self.topic_total[old] -= 1;
                let mut total = 0.0;
                for t in 0..self.k {
                    let p = (self.doc_topic[d][t] as f64 + self.alpha)
                        * (self.topic_word[t][w] as f64 + self.beta)
                        / (self.topic_total[t] as f64 + vbeta);
                    total += p;
                    self.probs[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.probs.iter().position(|&c| c > u).unwrap_or(self.k - 1);
                self.z[d][i] = new;
                self.doc_topic[d][new] += 1;
                self.topic_word[new][w] += 1;
                self.topic_total[new] += 1;
            }
        }
    }

    pub fn n_tokens(&self) -> u64 {
        self.docs.iter().map(|d| d.len() as u64).sum()
    }

    pub fn topic_word_total(&self) -> u64 {
        self.topic_word.iter().flatten().sum()
    }

    pub fn doc_topic_total(&self) -> u64 {
        self.doc_topic.iter().flatten().sum()
    }

    pub fn topic_total(&self) -> u64 {
        self.topic_total.iter().sum()
    }

    fn accumulate(&self, phi: &mut [Vec<f64>], theta: &mut [Vec<f64>]) {
        let vbeta = self.v as f64 * self.beta;
        let kalpha = self.k as f64 * self.alpha;
        for t in 0..self.k {
            let denom = self.topic_total[t] as f64 + vbeta;
            for w in 0..self.v {
                phi[t][w] += (self.topic_word[t][w] as f64 + self.beta) / denom;
            }
        }
        for (d, row) in theta.iter_mut().enumerate() {
            let denom = self.docs[d].len() as f64 + kalpha;
            for t in 0..self.k {
                row[t] += (self.doc_topic[d][t] as f64 + self.alpha) / denom;
            }
        }
    }
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    for x in row {
        *x /= s;
    }
}

fn fit_chain(docs: &[WordDocument], v: usize, cfg: &LdaConfig, seed: u64) -> Result<TopicModel> {
    let cfg = LdaConfig { seed, ..*cfg };
    let mut state = GibbsState::new(docs, v, &cfg)?;
    let mut phi = vec![vec![0.0; v]; cfg.k];
    let mut theta = vec![vec![0.0; cfg.k]; docs.len()];
    for it in 0..cfg.iters {
        state.sweep();
        if it >= cfg.burn_in {
            state.accumulate(&mut phi, &mut theta);
        }
    }
    phi.iter_mut().for_each(|r| normalize(r));
    theta.iter_mut().for_each(|r| normalize(r));
    Ok(TopicModel {
        k: cfg.k,
        v,
        alpha: cfg.alpha,
        beta: cfg.beta,
        phi,
        theta,
        seed,
        assignments: state.z,
    })
}

/// Fits LDA to the documents. Empty documents get the prior-mean theta row.
/// Chain `c` uses seed `seed + c`; ties in log-likelihood go to the lower chain.
pub fn fit_lda(docs: &[WordDocument], v: usize, cfg: &LdaConfig, exec: Exec) -> Result<TopicModel> {
    cfg.validate()?;
    let fits = exec.map_range(cfg.chains, |c| {
        let m = fit_chain(docs, v, cfg, cfg.seed.wrapping_add(c as u64))?;
        let ll = m.log_likelihood(docs);
        Ok((m, ll))
    });
    let mut best: Option<(TopicModel, f64)> = None;
    for f in fits {
        let (m, ll) = f?;
        if best.as_ref().is_none_or(|(_, b)| ll > *b) {
            best = Some((m, ll));
        }
    }
    Ok(best.expect("at least one chain").0)
}

/// Index of the largest entry, ties to the lowest index.
pub fn dominant(theta_row: &[f64]) -> Result<usize> {
    if theta_row.is_empty() {
        return Err(TopicError::MalformedDistribution("empty row".into()));
    }
    if theta_row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(TopicError::MalformedDistribution(format!("{theta_row:?}")));
    }
    let s: f64 = theta_row.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(TopicError::MalformedDistribution(format!("row sums to {s}")));
    }
    let mut best = 0;
    for (i, &p) in theta_row.iter().enumerate() {
        if p > theta_row[best] {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternAssignment {
    pub segment_id: usize,
    /// `None` for empty documents.
    pub dominant_topic: Option<usize>,
    pub theta_row: Vec<f64>,
}

/// One assignment per document, in document order.
pub fn assign_patterns(model: &TopicModel, docs: &[WordDocument]) -> Result<Vec<PatternAssignment>> {
    docs.iter()
        .zip(&model.theta)
        .map(|(doc, row)| {
            Ok(PatternAssignment {
                segment_id: doc.segment_id,
                dominant_topic: if doc.is_empty() { None } else { Some(dominant(row)?) },
                theta_row: row.clone(),
            })
        })
        .collect()
}

impl TopicModel {
    /// Renumbers topics so that new topic `j` is old topic `order[j]`.
    pub fn reorder(&mut self, order: &[usize]) {
        assert_eq!(order.len(), self.k, "order must list every topic once");
        self.phi = order.iter().map(|&o| self.phi[o].clone()).collect();
        for row in &mut self.theta {
            *row = order.iter().map(|&o| row[o]).collect();
        }
        let mut rank = vec![0; self.k];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new;
        }
        for z in self.assignments.iter_mut().flatten() {
            *z = rank[*z];
        }
    }

    /// Most probable topic of `word` within document `doc`:
    /// `argmax_k theta[doc][k] · phi[k][word]`, ties to the lowest index.
    pub fn token_topic(&self, doc: usize, word: usize) -> usize {
        let score = |k: usize| self.theta[doc][k] * self.phi[k][word];
        (1..self.k).fold(0, |best, k| if score(k) > score(best) { k } else { best })
    }

    /// `Σ_d Σ_w ln Σ_k theta[d][k] · phi[k][w]` over the given corpus.
    pub fn log_likelihood(&self, docs: &[WordDocument]) -> f64 {
        docs.iter()
            .zip(&self.theta)
            .map(|(doc, row)| {
                doc.words
                    .iter()
                    .map(|&w| (0..self.k).map(|k| row[k] * self.phi[k][w]).sum::<f64>().ln())
                    .sum::<f64>()
            })
            .sum()
    }
}
