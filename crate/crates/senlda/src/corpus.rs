//! Corpus ingestion: sentence segmentation, tokenization, vocabulary
//! encoding, and the JSONL input format.
//!
//! Documents keep their sentence structure after encoding because the
//! sampler assigns topics per sentence. Vocabulary ids are dense in
//! `[0, V)` and assigned in first-occurrence order, so the same input and
//! config always produce the same encoding.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("preprocessing removed every document")]
    AllDocumentsEmpty,
    #[error("line {line}: {message}")]
    BadInputLine { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bijective term <-> id mapping with ids dense in `[0, V)`.
///
/// Serializes as the `id_to_term` array; the reverse map is rebuilt on load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    term_to_id: HashMap<String, usize>,
    id_to_term: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms<I: IntoIterator<Item = String>>(terms: I) -> Self {
        let mut v = Self::new();
        for t in terms {
            v.get_or_insert(&t);
        }
        v
    }

    /// Number of distinct terms, `V`.
    pub fn len(&self) -> usize {
        self.id_to_term.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_term.is_empty()
    }

    pub fn get_or_insert(&mut self, term: &str) -> usize {
        if let Some(&id) = self.term_to_id.get(term) {
            return id;
        }
        let id = self.id_to_term.len();
        self.term_to_id.insert(term.to_owned(), id);
        self.id_to_term.push(term.to_owned());
        id
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.term_to_id.get(term).copied()
    }

    pub fn term(&self, id: usize) -> &str {
        &self.id_to_term[id]
    }

    pub fn terms(&self) -> &[String] {
        &self.id_to_term
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.id_to_term.len()))?;
        for t in &self.id_to_term {
            seq.serialize_element(t)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TermsVisitor;
        impl<'de> Visitor<'de> for TermsVisitor {
            type Value = Vocabulary;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a list of terms")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vocabulary, A::Error> {
                let mut v = Vocabulary::new();
                while let Some(t) = seq.next_element::<String>()? {
                    v.get_or_insert(&t);
                }
                Ok(v)
            }
        }
        deserializer.deserialize_seq(TermsVisitor)
    }
}

/// An id-encoded document: sentences of vocabulary token ids plus optional
/// class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeSet<String>>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
}

impl Corpus {
    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(Document::token_count).sum()
    }

    pub fn total_sentences(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub lowercase: bool,
    pub stopwords: HashSet<String>,
    pub min_term_length: usize,
    pub pretokenized: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            stopwords: HashSet::new(),
            min_term_length: 1,
            pretokenized: false,
        }
    }
}

/// Raw input document before encoding.
#[derive(Debug, Clone)]
pub struct RawDocument {
    pub id: String,
    pub content: RawContent,
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub enum RawContent {
    Text(String),
    /// Already segmented and tokenized; used verbatim (e.g. externally
    /// lemmatized input).
    Tokenized(Vec<Vec<String>>),
}

/// Splits text into sentences after `.`, `!` or `?` followed by whitespace.
/// A trailing unterminated span becomes a final sentence.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                sentences.push(s.to_owned());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        sentences.push(s.to_owned());
    }
    sentences
}

/// Splits a sentence on whitespace, strips surrounding punctuation, then
/// applies lowercasing, stopword removal and the minimum-length filter.
pub fn tokenize(sentence: &str, cfg: &PreprocessConfig) -> Vec<String> {
    sentence
        .split_whitespace()
        .filter_map(|raw| {
            let stripped = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if stripped.is_empty() {
                return None;
            }
            let term = if cfg.lowercase {
                stripped.to_lowercase()
            } else {
                stripped.to_owned()
            };
            if cfg.stopwords.contains(&term) || term.chars().count() < cfg.min_term_length {
                None
            } else {
                Some(term)
            }
        })
        .collect()
}

fn preprocess(doc: &RawDocument, cfg: &PreprocessConfig) -> Vec<Vec<String>> {
    match &doc.content {
        RawContent::Text(text) => segment_sentences(text)
            .iter()
            .map(|s| tokenize(s, cfg))
            .filter(|toks| !toks.is_empty())
            .collect(),
        RawContent::Tokenized(sentences) => sentences
            .iter()
            .filter(|s| !s.is_empty())
            .cloned()
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub dropped_documents: usize,
    pub dropped_sentences: usize,
}

/// Builds the vocabulary and encodes all documents. Empty sentences and
/// documents are dropped and counted in the returned stats.
pub fn build_corpus(
    raw_docs: &[RawDocument],
    cfg: &PreprocessConfig,
) -> Result<(Corpus, BuildStats), CorpusError> {
    let mut vocabulary = Vocabulary::new();
    let mut documents = Vec::new();
    let mut stats = BuildStats::default();
    for raw in raw_docs {
        let sentence_count_before = match &raw.content {
            RawContent::Text(text) => segment_sentences(text).len(),
            RawContent::Tokenized(s) => s.len(),
        };
        let sentences: Vec<Vec<usize>> = preprocess(raw, cfg)
            .iter()
            .map(|toks| {
                toks.iter()
                    .map(|t| vocabulary.get_or_insert(t))
                    .collect::<Vec<_>>()
            })
            .collect();
        stats.dropped_sentences += sentence_count_before - sentences.len();
        if sentences.is_empty() {
            stats.dropped_documents += 1;
            continue;
        }
        documents.push(Document {
            doc_id: raw.id.clone(),
            sentences,
            labels: raw.labels.as_ref().map(|ls| ls.iter().cloned().collect()),
        });
    }
    if documents.is_empty() {
        return Err(CorpusError::AllDocumentsEmpty);
    }
    Ok((Corpus { documents, vocabulary }, stats))
}

/// Encodes a document against a frozen vocabulary (held-out and inference
/// path). Out-of-vocabulary tokens are skipped; the skip count is returned.
pub fn encode_with_vocabulary(
    raw: &RawDocument,
    vocabulary: &Vocabulary,
    cfg: &PreprocessConfig,
) -> (Document, usize) {
    let mut skipped = 0;
    let sentences: Vec<Vec<usize>> = preprocess(raw, cfg)
        .iter()
        .map(|toks| {
            toks.iter()
                .filter_map(|t| {
                    let id = vocabulary.id(t);
                    if id.is_none() {
                        skipped += 1;
                    }
                    id
                })
                .collect::<Vec<_>>()
        })
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();
    (
        Document {
            doc_id: raw.id.clone(),
            sentences,
            labels: raw.labels.as_ref().map(|ls| ls.iter().cloned().collect()),
        },
        skipped,
    )
}

#[derive(Debug, Deserialize)]
struct JsonlRecord {
    id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    sentences: Option<Vec<Vec<String>>>,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

/// Reads the JSONL input format: one document per line, either
/// `{"id", "text", "labels"?}` or `{"id", "sentences", "labels"?}`.
pub fn read_jsonl<R: BufRead>(reader: R, pretokenized: bool) -> Result<Vec<RawDocument>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::BadInputLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        let content = if pretokenized {
            let sentences = rec.sentences.ok_or_else(|| CorpusError::BadInputLine {
                line: i + 1,
                message: "pretokenized input requires a \"sentences\" field".into(),
            })?;
            RawContent::Tokenized(sentences)
        } else {
            match (rec.text, rec.sentences) {
                (Some(text), _) => RawContent::Text(text),
                (None, Some(sentences)) => RawContent::Tokenized(sentences),
                (None, None) => {
                    return Err(CorpusError::BadInputLine {
                        line: i + 1,
                        message: "document has neither \"text\" nor \"sentences\"".into(),
                    })
                }
            }
        };
        docs.push(RawDocument {
            id: rec.id,
            content,
            labels: rec.labels,
        });
    }
    Ok(docs)
}

/// Reads a stopword file: one term per line, UTF-8.
pub fn read_stopwords(path: &Path) -> Result<HashSet<String>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    #[test]
    fn segments_after_terminator_and_whitespace() {
        assert_eq!(segment_sentences("A b. C d!"), vec!["A b.", "C d!"]);
    }

    #[test]
    fn empty_input_yields_no_sentences() {
        assert!(segment_sentences("").is_empty());
    }

    #[test]
    fn trailing_span_without_terminator_is_a_sentence() {
        assert_eq!(segment_sentences("no terminator here"), vec!["no terminator here"]);
    }

    #[test]
    fn tokenize_lowercases_and_drops_stopwords() {
        let mut c = cfg();
        c.stopwords.insert("the".into());
        assert_eq!(tokenize("The Cat sat.", &c), vec!["cat", "sat"]);
    }

    #[test]
    fn tokenize_punctuation_only_is_empty() {
        assert!(tokenize("...", &cfg()).is_empty());
    }

    #[test]
    fn tokenize_case_folds() {
        assert_eq!(tokenize("A A a", &cfg()), vec!["a", "a", "a"]);
    }

    #[test]
    fn shared_terms_counted_once_in_vocabulary() {
        let docs = vec![
            RawDocument {
                id: "a".into(),
                content: RawContent::Text("cat sat".into()),
                labels: None,
            },
            RawDocument {
                id: "b".into(),
                content: RawContent::Text("cat ran".into()),
                labels: None,
            },
        ];
        let (corpus, _) = build_corpus(&docs, &cfg()).unwrap();
        assert_eq!(corpus.vocabulary.len(), 3);
    }

    #[test]
    fn all_stopword_document_is_dropped() {
        let mut c = cfg();
        c.stopwords.insert("the".into());
        let docs = vec![
            RawDocument {
                id: "a".into(),
                content: RawContent::Text("the the".into()),
                labels: None,
            },
            RawDocument {
                id: "b".into(),
                content: RawContent::Text("cat".into()),
                labels: None,
            },
        ];
        let (corpus, stats) = build_corpus(&docs, &c).unwrap();
        assert_eq!(corpus.documents.len(), 1);
        assert_eq!(stats.dropped_documents, 1);
    }

    #[test]
    fn pretokenized_input_encoded_directly() {
        let docs = vec![RawDocument {
            id: "a".into(),
            content: RawContent::Tokenized(vec![
                vec!["cat".into(), "sat".into()],
                vec!["dog".into()],
            ]),
            labels: None,
        }];
        let (corpus, _) = build_corpus(&docs, &cfg()).unwrap();
        assert_eq!(corpus.documents[0].sentences.len(), 2);
        assert_eq!(corpus.vocabulary.len(), 3);
    }

    #[test]
    fn all_empty_is_an_error() {
        let docs = vec![RawDocument {
            id: "a".into(),
            content: RawContent::Text("...".into()),
            labels: None,
        }];
        assert!(matches!(
            build_corpus(&docs, &cfg()),
            Err(CorpusError::AllDocumentsEmpty)
        ));
    }

    #[test]
    fn encode_skips_oov_tokens() {
        let vocab = Vocabulary::from_terms(["cat".to_owned()]);
        let raw = RawDocument {
            id: "a".into(),
            content: RawContent::Tokenized(vec![vec!["cat".into(), "zzz".into()]]),
            labels: None,
        };
        let (doc, skipped) = encode_with_vocabulary(&raw, &vocab, &cfg());
        assert_eq!(doc.sentences, vec![vec![0]]);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn encode_fully_oov_yields_empty_doc() {
        let vocab = Vocabulary::from_terms(["cat".to_owned()]);
        let raw = RawDocument {
            id: "a".into(),
            content: RawContent::Tokenized(vec![vec!["x".into(), "y".into()]]),
            labels: None,
        };
        let (doc, skipped) = encode_with_vocabulary(&raw, &vocab, &cfg());
        assert!(doc.sentences.is_empty());
        assert_eq!(skipped, 2);
    }

    #[test]
    fn encode_no_oov_reports_zero_skipped() {
        let vocab = Vocabulary::from_terms(["cat".to_owned(), "sat".to_owned()]);
        let raw = RawDocument {
            id: "a".into(),
            content: RawContent::Tokenized(vec![vec!["cat".into(), "sat".into()]]),
            labels: None,
        };
        let (_, skipped) = encode_with_vocabulary(&raw, &vocab, &cfg());
        assert_eq!(skipped, 0);
    }

    #[test]
    fn vocabulary_ids_dense_and_bijective() {
        let docs = vec![RawDocument {
            id: "a".into(),
            content: RawContent::Text("one two three two one".into()),
            labels: None,
        }];
        let (corpus, _) = build_corpus(&docs, &cfg()).unwrap();
        let v = &corpus.vocabulary;
        for id in 0..v.len() {
            assert_eq!(v.id(v.term(id)), Some(id));
        }
    }

    #[test]
    fn encoding_round_trips_through_vocabulary() {
        let docs = vec![RawDocument {
            id: "a".into(),
            content: RawContent::Text("cats chase mice. mice hide!".into()),
            labels: None,
        }];
        let (corpus, _) = build_corpus(&docs, &cfg()).unwrap();
        let decoded: Vec<Vec<&str>> = corpus.documents[0]
            .sentences
            .iter()
            .map(|s| s.iter().map(|&id| corpus.vocabulary.term(id)).collect())
            .collect();
        assert_eq!(
            decoded,
            vec![vec!["cats", "chase", "mice"], vec!["mice", "hide"]]
        );
    }

    #[test]
    fn build_is_deterministic_first_occurrence_order() {
        let docs = vec![RawDocument {
            id: "a".into(),
            content: RawContent::Text("b a c a".into()),
            labels: None,
        }];
        let (c1, _) = build_corpus(&docs, &cfg()).unwrap();
        let (c2, _) = build_corpus(&docs, &cfg()).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1.vocabulary.terms(), ["b", "a", "c"]);
    }

    #[test]
    fn vocabulary_serde_round_trip() {
        let v = Vocabulary::from_terms(["x".to_owned(), "y".to_owned()]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "[\"x\",\"y\"]");
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
