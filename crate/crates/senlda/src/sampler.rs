//! Collapsed Gibbs sampling with one topic per text segment.
//!
//! A segment is a sentence, or a single word when the granularity is
//! `Word`; the word case reduces to the standard LDA collapsed Gibbs
//! sampler. All segment factors are computed in log space because the
//! rising-factorial products over long sentences overflow f64 otherwise.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::corpus::{Corpus, Document, Vocabulary};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("corpus has no tokens")]
    EmptyCorpus,
}

/// The unit that receives a single topic assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Word,
}

impl std::str::FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sentence" => Ok(Granularity::Sentence),
            "word" => Ok(Granularity::Word),
            other => Err(format!("unknown granularity {other:?} (expected sentence|word)")),
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str(match self {
            Granularity::Sentence => "sentence",
            Granularity::Word => "word",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub granularity: Granularity,
    pub seed: u64,
}

impl Hyperparams {
    /// Symmetric priors with the default alpha = beta = 1/K.
    pub fn with_default_priors(topics: usize, granularity: Granularity, seed: u64) -> Self {
        let prior = 1.0 / topics as f64;
        Self {
            topics,
            alpha: prior,
            beta: prior,
            granularity,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.topics < 1 {
            return Err(SamplerError::InvalidHyperparams("topics must be >= 1".into()));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(SamplerError::InvalidHyperparams(
                "alpha and beta must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A corpus viewed as topic-assignment units: per document, the list of
/// segments, each a list of token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedCorpus {
    pub docs: Vec<Vec<Vec<usize>>>,
    pub vocab_size: usize,
}

impl SegmentedCorpus {
    pub fn new(corpus: &Corpus, granularity: Granularity) -> Self {
        let docs = corpus
            .documents
            .iter()
            .map(|d| segment_document(d, granularity))
            .collect();
        Self {
            docs,
            vocab_size: corpus.vocabulary.len(),
        }
    }
}

pub fn segment_document(doc: &Document, granularity: Granularity) -> Vec<Vec<usize>> {
    match granularity {
        Granularity::Sentence => doc.sentences.clone(),
        Granularity::Word => doc
            .sentences
            .iter()
            .flat_map(|s| s.iter().map(|&w| vec![w]))
            .collect(),
    }
}

/// log of the rising factorial x(x+1)...(x+m-1), i.e. sum of log(x+i).
pub fn log_rising_factorial(x: f64, m: usize) -> Result<f64, SamplerError> {
    if !(x > 0.0) {
        return Err(SamplerError::Domain(format!(
            "rising factorial requires x > 0, got {x}"
        )));
    }
    Ok((0..m).map(|i| (x + i as f64).ln()).sum())
}

/// Inverse-CDF draw from unnormalized log weights via max-subtraction.
pub fn sample_categorical_log(
    log_weights: &[f64],
    rng: &mut impl Rng,
) -> Result<usize, SamplerError> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SamplerError::Numerical(
            "all categorical log weights are non-finite".into(),
        ));
    }
    let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(k);
        }
    }
    Ok(log_weights.len() - 1)
}

/// Segment topic assignments plus the count structures the full
/// conditional reads. `doc_topic` counts segments, not words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerState {
    pub z: Vec<Vec<usize>>,
    pub topic_term: Vec<Vec<usize>>,
    pub topic_total: Vec<usize>,
    pub doc_topic: Vec<Vec<usize>>,
    pub doc_total: Vec<usize>,
}

impl SamplerState {
    /// Uniformly random initial assignment from the seeded stream.
    pub fn init(segmented: &SegmentedCorpus, hyper: &Hyperparams, rng: &mut impl Rng) -> Self {
        let z = segmented
            .docs
            .iter()
            .map(|doc| {
                doc.iter()
                    .map(|_| rng.gen_range(0..hyper.topics))
                    .collect()
            })
            .collect();
        Self::from_assignments(z, segmented, hyper.topics)
    }

    /// Rebuilds every count structure from scratch; also the consistency
    /// oracle for the incrementally maintained counts.
    pub fn from_assignments(
        z: Vec<Vec<usize>>,
        segmented: &SegmentedCorpus,
        topics: usize,
    ) -> Self {
        let mut state = Self {
            z,
            topic_term: vec![vec![0; segmented.vocab_size]; topics],
            topic_total: vec![0; topics],
            doc_topic: vec![vec![0; topics]; segmented.docs.len()],
            doc_total: vec![0; segmented.docs.len()],
        };
        for (d, doc) in segmented.docs.iter().enumerate() {
            for (s, seg) in doc.iter().enumerate() {
                let k = state.z[d][s];
                state.add_segment(d, seg, k);
            }
        }
        state
    }

    pub fn vocab_size(&self) -> usize {
        self.topic_term.first().map_or(0, Vec::len)
    }

    pub fn topics(&self) -> usize {
        self.topic_term.len()
    }

    fn add_segment(&mut self, d: usize, seg: &[usize], k: usize) {
        for &w in seg {
            self.topic_term[k][w] += 1;
            self.topic_total[k] += 1;
        }
        self.doc_topic[d][k] += 1;
        self.doc_total[d] += 1;
    }

    fn remove_segment(&mut self, d: usize, seg: &[usize], k: usize) {
        for &w in seg {
            self.topic_term[k][w] -= 1;
            self.topic_total[k] -= 1;
        }
        self.doc_topic[d][k] -= 1;
        self.doc_total[d] -= 1;
    }

    /// The topic-term factor of the full conditional for assigning `seg`
    /// to topic `k`: rising factorials over within-segment term
    /// frequencies divided by the rising factorial over the segment
    /// length, all in log space. Counts must already exclude the segment.
    pub fn log_segment_factor(&self, seg: &[usize], k: usize, hyper: &Hyperparams) -> f64 {
        let v_beta = self.vocab_size() as f64 * hyper.beta;
        if let [w] = seg {
            // single-token segment: Eq. reduces to (n+beta)/(total+V*beta)
            return (self.topic_term[k][*w] as f64 + hyper.beta).ln()
                - (self.topic_total[k] as f64 + v_beta).ln();
        }
        let mut freqs: Vec<(usize, usize)> = Vec::with_capacity(seg.len());
        for &w in seg {
            match freqs.iter_mut().find(|(t, _)| *t == w) {
                Some(entry) => entry.1 += 1,
                None => freqs.push((w, 1)),
            }
        }
        let numer: f64 = freqs
            .iter()
            .map(|&(w, f)| {
                log_rising_factorial(self.topic_term[k][w] as f64 + hyper.beta, f)
                    .expect("count + beta is positive")
            })
            .sum();
        let denom = log_rising_factorial(self.topic_total[k] as f64 + v_beta, seg.len())
            .expect("total + V*beta is positive");
        numer - denom
    }

    /// Unnormalized log weights of the full conditional for the segment's
    /// topic. The segment must currently be removed from the counts.
    pub fn full_conditional(&self, d: usize, seg: &[usize], hyper: &Hyperparams) -> Vec<f64> {
        (0..hyper.topics)
            .map(|k| {
                (self.doc_topic[d][k] as f64 + hyper.alpha).ln()
                    + self.log_segment_factor(seg, k, hyper)
            })
            .collect()
    }

    /// One full pass: documents and segments in corpus order.
    pub fn gibbs_sweep(
        &mut self,
        segmented: &SegmentedCorpus,
        hyper: &Hyperparams,
        rng: &mut impl Rng,
    ) -> Result<(), SamplerError> {
        for d in 0..segmented.docs.len() {
            for s in 0..segmented.docs[d].len() {
                let seg = &segmented.docs[d][s];
                let old = self.z[d][s];
                self.remove_segment(d, seg, old);
                let weights = self.full_conditional(d, seg, hyper);
                let new = sample_categorical_log(&weights, rng)?;
                self.add_segment(d, seg, new);
                self.z[d][s] = new;
            }
        }
        Ok(())
    }

    /// Collapsed log joint p(w, z | alpha, beta) up to the constant term
    /// p(w_s) dropped in the conditional; the brute-force oracle for
    /// `full_conditional`.
    pub fn log_joint(&self, hyper: &Hyperparams) -> f64 {
        let v = self.vocab_size() as f64;
        let k_count = self.topics() as f64;
        let mut total = 0.0;
        for k in 0..self.topics() {
            let mut delta = -ln_gamma(self.topic_total[k] as f64 + v * hyper.beta);
            for &n in &self.topic_term[k] {
                delta += ln_gamma(n as f64 + hyper.beta);
            }
            let delta_prior = v * ln_gamma(hyper.beta) - ln_gamma(v * hyper.beta);
            total += delta - delta_prior;
        }
        for d in 0..self.doc_topic.len() {
            let mut delta = -ln_gamma(self.doc_total[d] as f64 + k_count * hyper.alpha);
            for &n in &self.doc_topic[d] {
                delta += ln_gamma(n as f64 + hyper.alpha);
            }
            let delta_prior = k_count * ln_gamma(hyper.alpha) - ln_gamma(k_count * hyper.alpha);
            total += delta - delta_prior;
        }
        total
    }
}

/// Smoothed posterior-mean topic-term matrix:
/// phi[k][w] = (n_kw + beta) / (n_k + V*beta).
pub fn estimate_phi(state: &SamplerState, hyper: &Hyperparams) -> Vec<Vec<f64>> {
    let v_beta = state.vocab_size() as f64 * hyper.beta;
    state
        .topic_term
        .iter()
        .zip(&state.topic_total)
        .map(|(row, &total)| {
            let denom = total as f64 + v_beta;
            row.iter().map(|&n| (n as f64 + hyper.beta) / denom).collect()
        })
        .collect()
}

/// Smoothed posterior-mean document-topic distribution from segment counts.
pub fn theta_from_counts(doc_topic: &[usize], doc_total: usize, alpha: f64) -> Vec<f64> {
    let k = doc_topic.len() as f64;
    let denom = doc_total as f64 + k * alpha;
    doc_topic.iter().map(|&n| (n as f64 + alpha) / denom).collect()
}

pub fn estimate_theta(state: &SamplerState, hyper: &Hyperparams, d: usize) -> TopicDistribution {
    TopicDistribution {
        theta: theta_from_counts(&state.doc_topic[d], state.doc_total[d], hyper.alpha),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicDistribution {
    pub theta: Vec<f64>,
}

/// A trained topic model: the row-stochastic topic-term matrix plus
/// everything needed to encode and infer new documents.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub format_version: u32,
    pub hyperparams: Hyperparams,
    pub vocabulary: Vocabulary,
    pub phi: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(rename = "K")]
    topics: usize,
    alpha: f64,
    beta: f64,
    granularity: Granularity,
    vocabulary: Vocabulary,
    phi: Vec<Vec<f64>>,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            format_version: self.format_version,
            topics: self.hyperparams.topics,
            alpha: self.hyperparams.alpha,
            beta: self.hyperparams.beta,
            granularity: self.hyperparams.granularity,
            vocabulary: self.vocabulary.clone(),
            phi: self.phi.clone(),
        })
        .expect("model serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let f: ModelFile = serde_json::from_str(json)?;
        Ok(Self {
            format_version: f.format_version,
            hyperparams: Hyperparams {
                topics: f.topics,
                alpha: f.alpha,
                beta: f.beta,
                granularity: f.granularity,
                seed: 0,
            },
            vocabulary: f.vocabulary,
            phi: f.phi,
        })
    }
}

/// Per-sweep diagnostics passed to the training hook.
pub struct SweepInfo<'a> {
    pub iteration: usize,
    pub seconds: f64,
    pub state: &'a SamplerState,
}

/// Runs `iterations` Gibbs sweeps from a fresh random initialization and
/// returns the estimated model together with the final state. The hook is
/// invoked after every sweep.
pub fn train(
    corpus: &Corpus,
    hyper: &Hyperparams,
    iterations: usize,
    mut hook: impl FnMut(SweepInfo),
) -> Result<(TrainedModel, SamplerState), SamplerError> {
    hyper.validate()?;
    if corpus.total_tokens() == 0 {
        return Err(SamplerError::EmptyCorpus);
    }
    let segmented = SegmentedCorpus::new(corpus, hyper.granularity);
    let mut rng = ChaCha20Rng::seed_from_u64(hyper.seed);
    let mut state = SamplerState::init(&segmented, hyper, &mut rng);
    for iteration in 0..iterations {
        let start = Instant::now();
        state.gibbs_sweep(&segmented, hyper, &mut rng)?;
        hook(SweepInfo {
            iteration,
            seconds: start.elapsed().as_secs_f64(),
            state: &state,
        });
    }
    let model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        hyperparams: hyper.clone(),
        vocabulary: corpus.vocabulary.clone(),
        phi: estimate_phi(&state, hyper),
    };
    Ok((model, state))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferredTheta {
    pub distribution: TopicDistribution,
    /// Set when the document had no in-vocabulary tokens; theta is uniform.
    pub empty_document: bool,
}

/// Fold-in inference for a held-out document: phi stays frozen at the
/// trained values and only the document's segment assignments are
/// resampled. Theta is averaged over the last quarter of the sweeps.
pub fn infer_theta(
    model: &TrainedModel,
    doc: &Document,
    iterations: usize,
    seed: u64,
) -> Result<InferredTheta, SamplerError> {
    let hyper = &model.hyperparams;
    let k = hyper.topics;
    let segments = segment_document(doc, hyper.granularity);
    if segments.is_empty() {
        return Ok(InferredTheta {
            distribution: TopicDistribution {
                theta: vec![1.0 / k as f64; k],
            },
            empty_document: true,
        });
    }
    let log_phi: Vec<Vec<f64>> = model
        .phi
        .iter()
        .map(|row| row.iter().map(|&p| p.ln()).collect())
        .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut z: Vec<usize> = (0..segments.len()).map(|_| rng.gen_range(0..k)).collect();
    let mut doc_topic = vec![0usize; k];
    for &t in &z {
        doc_topic[t] += 1;
    }
    let iterations = iterations.max(1);
    let averaged_from = iterations - (iterations.div_ceil(4));
    let mut theta_sum = vec![0.0; k];
    let mut averaged = 0usize;
    for it in 0..iterations {
        for (s, seg) in segments.iter().enumerate() {
            doc_topic[z[s]] -= 1;
            let weights: Vec<f64> = (0..k)
                .map(|t| {
                    let seg_ll: f64 = seg.iter().map(|&w| log_phi[t][w]).sum();
                    (doc_topic[t] as f64 + hyper.alpha).ln() + seg_ll
                })
                .collect();
            let new = sample_categorical_log(&weights, &mut rng)?;
            doc_topic[new] += 1;
            z[s] = new;
        }
        if it >= averaged_from {
            let theta = theta_from_counts(&doc_topic, segments.len(), hyper.alpha);
            for (acc, t) in theta_sum.iter_mut().zip(theta) {
                *acc += t;
            }
            averaged += 1;
        }
    }
    let theta: Vec<f64> = theta_sum.iter().map(|&t| t / averaged as f64).collect();
    Ok(InferredTheta {
        distribution: TopicDistribution { theta },
        empty_document: false,
    })
}

/// Stable per-document seed derivation (FNV-1a over the id, mixed with the
/// base seed) so held-out results do not depend on document order.
pub fn derive_seed(base: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ base
}
