//! Property tests for the sampler and corpus invariants.

use proptest::prelude::*;

use senlda::corpus::{build_corpus, tokenize, PreprocessConfig, RawContent, RawDocument};
use senlda::sampler::{
    estimate_phi, theta_from_counts, train, Granularity, Hyperparams, SamplerState,
    SegmentedCorpus,
};

fn small_corpus_strategy() -> impl Strategy<Value = Vec<Vec<Vec<u8>>>> {
    // docs of sentences of token ids in 0..6
    prop::collection::vec(
        prop::collection::vec(prop::collection::vec(0u8..6, 1..5), 1..4),
        1..5,
    )
}

fn corpus_from_ids(docs: &[Vec<Vec<u8>>]) -> senlda::Corpus {
    let raw: Vec<RawDocument> = docs
        .iter()
        .enumerate()
        .map(|(i, sentences)| RawDocument {
            id: format!("d{i}"),
            content: RawContent::Tokenized(
                sentences
                    .iter()
                    .map(|s| s.iter().map(|t| format!("w{t}")).collect())
                    .collect(),
            ),
            labels: None,
        })
        .collect();
    build_corpus(&raw, &PreprocessConfig::default()).unwrap().0
}

proptest! {
    #[test]
    fn counts_stay_consistent_across_sweeps(
        docs in small_corpus_strategy(),
        topics in 1usize..4,
        seed in any::<u64>(),
        word_granularity in any::<bool>(),
    ) {
        let corpus = corpus_from_ids(&docs);
        let granularity = if word_granularity { Granularity::Word } else { Granularity::Sentence };
        let hyper = Hyperparams { topics, alpha: 0.3, beta: 0.4, granularity, seed };
        let segmented = SegmentedCorpus::new(&corpus, granularity);
        let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut state = SamplerState::init(&segmented, &hyper, &mut rng);
        for _ in 0..3 {
            state.gibbs_sweep(&segmented, &hyper, &mut rng).unwrap();
        }
        let rebuilt = SamplerState::from_assignments(state.z.clone(), &segmented, topics);
        prop_assert_eq!(state, rebuilt);
    }

    #[test]
    fn conditional_depends_only_on_segment_frequencies(
        docs in small_corpus_strategy(),
        topics in 2usize..4,
        seed in any::<u64>(),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let corpus = corpus_from_ids(&docs);
        let hyper = Hyperparams {
            topics, alpha: 0.5, beta: 0.5, granularity: Granularity::Sentence, seed,
        };
        let segmented = SegmentedCorpus::new(&corpus, hyper.granularity);
        let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(seed);
        let state = SamplerState::init(&segmented, &hyper, &mut rng);
        let mut perm_rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(perm_seed);
        for (d, doc) in segmented.docs.iter().enumerate() {
            for seg in doc {
                let mut shuffled = seg.clone();
                shuffled.shuffle(&mut perm_rng);
                let a = state.full_conditional(d, seg, &hyper);
                let b = state.full_conditional(d, &shuffled, &hyper);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_estimates_are_normalized(
        docs in small_corpus_strategy(),
        topics in 1usize..4,
        seed in any::<u64>(),
    ) {
        let corpus = corpus_from_ids(&docs);
        let hyper = Hyperparams {
            topics, alpha: 0.2, beta: 0.7, granularity: Granularity::Sentence, seed,
        };
        let (m1, s1) = train(&corpus, &hyper, 3, |_| {}).unwrap();
        let (m2, s2) = train(&corpus, &hyper, 3, |_| {}).unwrap();
        prop_assert_eq!(&m1.phi, &m2.phi);
        prop_assert_eq!(&s1.z, &s2.z);
        for row in estimate_phi(&s1, &hyper) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        for d in 0..corpus.documents.len() {
            let theta = theta_from_counts(&s1.doc_topic[d], s1.doc_total[d], hyper.alpha);
            prop_assert!((theta.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn tokenization_round_trips_through_ids(
        words in prop::collection::vec("[a-z]{1,6}", 1..12),
    ) {
        let sentence = words.join(" ");
        let cfg = PreprocessConfig::default();
        let tokens = tokenize(&sentence, &cfg);
        let raw = vec![RawDocument {
            id: "d".into(),
            content: RawContent::Text(sentence.clone()),
            labels: None,
        }];
        let (corpus, _) = build_corpus(&raw, &cfg).unwrap();
        let decoded: Vec<String> = corpus.documents[0]
            .sentences
            .iter()
            .flatten()
            .map(|&id| corpus.vocabulary.term(id).to_owned())
            .collect();
        prop_assert_eq!(decoded, tokens);
    }
}
