//! Topic modeling where the sampling unit is a coherent text segment.
//!
//! The model assigns one latent topic per segment (sentence by default),
//! inferred with a collapsed Gibbs sampler. Setting the segment granularity
//! to single words recovers the standard LDA collapsed Gibbs sampler, so the
//! two variants can be trained and compared on identical corpora.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`corpus`]: tokenization, sentence segmentation, vocabulary encoding
//! - [`sampler`]: sampler state, the full conditional, training, fold-in
//! - [`generate`]: the generative process, used for synthetic-recovery tests
//! - [`evaluation`]: held-out perplexity, perplexity ratios, convergence
//! - [`classify`]: topic distributions as features for linear classifiers

pub mod classify;
pub mod corpus;
pub mod evaluation;
pub mod generate;
pub mod sampler;

pub use corpus::{Corpus, Document, PreprocessConfig, Vocabulary};
pub use sampler::{Granularity, Hyperparams, SamplerState, TrainedModel};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/sampler.md")]
    mod sampler {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/classification.md")]
    mod classification {}
}
