//! Synthetic corpus generation following the model's generative process,
//! with ground truth retained for recovery tests.
//!
//! Per document: theta ~ Dirichlet(alpha); the sentence count and each
//! sentence length are zero-truncated Poisson draws (a plain Poisson would
//! admit empty sentences the sampler cannot use); each sentence draws one
//! topic from theta and its words from the topic's term distribution.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::sampler::Hyperparams;

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Poisson rate for sentences per document.
    pub xi_sentences: f64,
    /// Poisson rate for words per sentence.
    pub xi_words: f64,
    /// Topic-term matrix to generate from; drawn from Dirichlet(beta) when
    /// absent.
    pub true_phi: Option<Vec<Vec<f64>>>,
    pub docs: usize,
    pub vocab_size: usize,
}

/// The latent variables behind a generated corpus.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroundTruth {
    pub theta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    /// Per document, the topic of each sentence.
    pub z: Vec<Vec<usize>>,
}

fn sample_dirichlet_symmetric(dim: usize, concentration: f64, rng: &mut impl Rng) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
    let mut total: f64 = draws.iter().sum();
    if total <= 0.0 {
        // all-zero underflow at tiny concentrations; fall back to uniform
        draws = vec![1.0; dim];
        total = dim as f64;
    }
    draws.iter().map(|&g| g / total).collect()
}

fn sample_zero_truncated_poisson(rate: f64, rng: &mut impl Rng) -> usize {
    let poisson = Poisson::new(rate).expect("positive rate");
    loop {
        let n = poisson.sample(rng) as usize;
        if n > 0 {
            return n;
        }
    }
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A topic-term matrix with disjoint dominant supports: topic k places
/// `support_mass` on its own block of `vocab_size / topics` terms, spread
/// uniformly, and the rest uniformly elsewhere. Useful for recovery tests
/// where topics must be distinguishable.
pub fn disjoint_support_phi(topics: usize, vocab_size: usize, support_mass: f64) -> Vec<Vec<f64>> {
    assert!(vocab_size >= topics);
    let block = vocab_size / topics;
    (0..topics)
        .map(|k| {
            let lo = k * block;
            let hi = if k == topics - 1 { vocab_size } else { lo + block };
            let inside = support_mass / (hi - lo) as f64;
            let outside = (1.0 - support_mass) / (vocab_size - (hi - lo)) as f64;
            (0..vocab_size)
                .map(|w| if w >= lo && w < hi { inside } else { outside })
                .collect()
        })
        .collect()
}

/// Generates a corpus from the model along with its ground truth. Terms
/// are synthetic ("w0".."w{V-1}"); documents are labeled by their
/// dominant sentence topic for classification experiments.
pub fn generate_corpus(cfg: &GeneratorConfig, hyper: &Hyperparams) -> (Corpus, GroundTruth) {
    let mut rng = ChaCha20Rng::seed_from_u64(hyper.seed);
    let k = hyper.topics;
    let phi = cfg.true_phi.clone().unwrap_or_else(|| {
        (0..k)
            .map(|_| sample_dirichlet_symmetric(cfg.vocab_size, hyper.beta, &mut rng))
            .collect()
    });
    let vocabulary = Vocabulary::from_terms((0..cfg.vocab_size).map(|w| format!("w{w}")));
    let mut documents = Vec::with_capacity(cfg.docs);
    let mut truth_theta = Vec::with_capacity(cfg.docs);
    let mut truth_z = Vec::with_capacity(cfg.docs);
    for d in 0..cfg.docs {
        let theta = sample_dirichlet_symmetric(k, hyper.alpha, &mut rng);
        let sentence_count = sample_zero_truncated_poisson(cfg.xi_sentences, &mut rng);
        let mut sentences = Vec::with_capacity(sentence_count);
        let mut z_doc = Vec::with_capacity(sentence_count);
        let mut topic_tally = vec![0usize; k];
        for _ in 0..sentence_count {
            let word_count = sample_zero_truncated_poisson(cfg.xi_words, &mut rng);
            let topic = sample_categorical(&theta, &mut rng);
            topic_tally[topic] += word_count;
            let words = (0..word_count)
                .map(|_| sample_categorical(&phi[topic], &mut rng))
                .collect();
            sentences.push(words);
            z_doc.push(topic);
        }
        let dominant = topic_tally
            .iter()
            .enumerate()
            .max_by_key(|&(_, n)| n)
            .map(|(t, _)| t)
            .unwrap_or(0);
        documents.push(Document {
            doc_id: format!("gen{d}"),
            sentences,
            labels: Some(std::iter::once(format!("topic{dominant}")).collect()),
        });
        truth_theta.push(theta);
        truth_z.push(z_doc);
    }
    (
        Corpus { documents, vocabulary },
        GroundTruth {
            theta: truth_theta,
            phi,
            z: truth_z,
        },
    )
}
