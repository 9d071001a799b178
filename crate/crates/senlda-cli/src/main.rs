//! Command-line front end: corpus preparation, training, inference,
//! perplexity, classification, synthetic generation, and the
//! sentence-vs-word convergence benchmark.
//!
//! Exit codes: 0 success, 1 runtime/numeric error, 2 usage or I/O error.
//! Every command writes its resolved configuration next to its primary
//! output as `<output>.config.json`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use senlda::classify::{
    concat_features, default_lambda_grid, evaluate_pipeline, read_labels, FeatureMatrix, LabelSet,
};
use senlda::corpus::{
    build_corpus, encode_with_vocabulary, read_jsonl, read_stopwords, Corpus, Document,
    PreprocessConfig,
};
use senlda::evaluation::{
    detect_convergence, perplexity, training_perplexity, write_diagnostics_csv, DiagnosticsSeries,
};
use senlda::generate::{disjoint_support_phi, generate_corpus, GeneratorConfig};
use senlda::sampler::{
    derive_seed, infer_theta, train, Granularity, Hyperparams, SegmentedCorpus, TrainedModel,
};

#[derive(Parser, Serialize)]
#[command(name = "senlda", version, about = "Sentence-level topic modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Preprocess JSONL documents into an encoded corpus file
    Prep(PrepArgs),
    /// Train a topic model on a prepared corpus
    Train(TrainArgs),
    /// Infer topic distributions for new documents
    Infer(InferArgs),
    /// Held-out perplexity of a trained model
    Perplexity(PerplexityArgs),
    /// Classify documents from topic-distribution features
    Classify(ClassifyArgs),
    /// Generate a synthetic corpus with known ground truth
    Generate(GenerateArgs),
    /// Compare sentence vs word granularity convergence and timing
    Bench(BenchArgs),
}

#[derive(Args, Serialize)]
struct PreprocessArgs {
    /// Stopword file, one term per line
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Input is already segmented and tokenized
    #[arg(long)]
    pretokenized: bool,
    /// Drop tokens shorter than this many characters
    #[arg(long, default_value_t = 1)]
    min_term_length: usize,
    /// Keep the original casing
    #[arg(long)]
    keep_case: bool,
}

#[derive(Args, Serialize)]
struct PrepArgs {
    /// Input JSONL: {"id", "text"|"sentences", "labels"?} per line
    #[arg(long)]
    input: PathBuf,
    /// Output corpus JSON
    #[arg(long)]
    output: PathBuf,
    /// Also write a doc_id,label1;label2 file
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    preprocess: PreprocessArgs,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Prepared corpus JSON
    #[arg(long)]
    corpus: PathBuf,
    /// Output model JSON
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    topics: usize,
    /// Dirichlet prior on document-topic distributions (default 1/K)
    #[arg(long)]
    alpha: Option<f64>,
    /// Dirichlet prior on topic-term distributions (default 1/K)
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value = "sentence")]
    granularity: Granularity,
    #[arg(long)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate perplexity every this many iterations
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    /// Held-out JSONL; when given, diagnostics use held-out perplexity
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Fold-in sweeps per held-out document
    #[arg(long, default_value_t = 25)]
    fold_in_iterations: usize,
    /// Diagnostics CSV (iteration,seconds,perplexity,label)
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[command(flatten)]
    preprocess: PreprocessArgs,
}

#[derive(Args, Serialize)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Raw JSONL documents (encoded against the model vocabulary)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Prepared corpus JSON as input instead of JSONL
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output CSV: doc_id,f0,...,f{K-1}
    #[arg(long)]
    output: PathBuf,
    /// Fold-in sweeps per document
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    preprocess: PreprocessArgs,
}

#[derive(Args, Serialize)]
struct PerplexityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output report JSON
    #[arg(long)]
    output: PathBuf,
    /// Fold-in sweeps per document
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    preprocess: PreprocessArgs,
}

#[derive(Args, Serialize)]
struct ClassifyArgs {
    /// Feature CSV (doc_id,f0,...)
    #[arg(long)]
    features: PathBuf,
    /// Second feature CSV; rows are concatenated with the first
    #[arg(long)]
    features2: Option<PathBuf>,
    /// Label file: doc_id,label1;label2;...
    #[arg(long)]
    labels: PathBuf,
    /// Output report JSON
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated regularization grid
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Held-out fraction of the train/test split
    #[arg(long, default_value_t = 0.25)]
    test_fraction: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// Output corpus JSON
    #[arg(long)]
    output: PathBuf,
    /// Output ground-truth JSON (theta, phi, z)
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also write a doc_id,label file (dominant topic per document)
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    topics: usize,
    #[arg(long)]
    docs: usize,
    #[arg(long)]
    vocab: usize,
    /// Poisson rate for sentences per document
    #[arg(long, default_value_t = 8.0)]
    xi_sentences: f64,
    /// Poisson rate for words per sentence
    #[arg(long, default_value_t = 6.0)]
    xi_words: f64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Use disjoint-support topics with this much mass on each block
    #[arg(long)]
    separated: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output CSV: label,seed,iteration,seconds,perplexity
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    topics: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iterations: usize,
    /// Comma-separated chain seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Relative-decrease threshold for convergence
    #[arg(long, default_value_t = 1e-3)]
    rel_eps: f64,
    /// Trailing evaluations that must all be below the threshold
    #[arg(long, default_value_t = 3)]
    window: usize,
}

enum CliError {
    /// Usage or I/O problems; exit code 2.
    Usage(String),
    /// Runtime or numeric failures; exit code 1.
    Runtime(String),
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }
    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Prep(args) => cmd_prep(args),
        Command::Train(args) => cmd_train(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Perplexity(args) => cmd_perplexity(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn preprocess_config(args: &PreprocessArgs) -> Result<PreprocessConfig, CliError> {
    let stopwords = match &args.stopwords {
        Some(path) => read_stopwords(path).map_err(CliError::usage)?,
        None => Default::default(),
    };
    Ok(PreprocessConfig {
        lowercase: !args.keep_case,
        stopwords,
        min_term_length: args.min_term_length,
        pretokenized: args.pretokenized,
    })
}

fn open_reader(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_config<A: Serialize>(output: &Path, command: &str, args: &A) -> Result<(), CliError> {
    let mut path = output.as_os_str().to_owned();
    path.push(".config.json");
    let config = serde_json::json!({ "command": command, "args": args });
    write_file(Path::new(&path), serde_json::to_string_pretty(&config).unwrap().as_bytes())
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    let reader = open_reader(path)?;
    serde_json::from_reader(reader).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<TrainedModel, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    TrainedModel::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_labels_file(path: &Path, docs: &[Document]) -> Result<(), CliError> {
    let mut out = String::new();
    for doc in docs {
        let labels: Vec<&str> = doc
            .labels
            .iter()
            .flatten()
            .map(String::as_str)
            .collect();
        out.push_str(&format!("{},{}\n", doc.doc_id, labels.join(";")));
    }
    write_file(path, out.as_bytes())
}

fn cmd_prep(args: &PrepArgs) -> Result<(), CliError> {
    let cfg = preprocess_config(&args.preprocess)?;
    let raw = read_jsonl(open_reader(&args.input)?, cfg.pretokenized).map_err(CliError::usage)?;
    let (corpus, stats) = build_corpus(&raw, &cfg).map_err(CliError::runtime)?;
    write_file(&args.output, serde_json::to_string(&corpus).unwrap().as_bytes())?;
    if let Some(labels_path) = &args.labels {
        write_labels_file(labels_path, &corpus.documents)?;
    }
    write_config(&args.output, "prep", args)?;
    println!("documents {}", corpus.documents.len());
    println!("vocabulary {}", corpus.vocabulary.len());
    println!("sentences {}", corpus.total_sentences());
    println!("tokens {}", corpus.total_tokens());
    println!(
        "dropped_documents {} dropped_sentences {}",
        stats.dropped_documents, stats.dropped_sentences
    );
    Ok(())
}

fn resolve_hyper(
    topics: usize,
    alpha: Option<f64>,
    beta: Option<f64>,
    granularity: Granularity,
    seed: u64,
) -> Hyperparams {
    let prior = 1.0 / topics as f64;
    Hyperparams {
        topics,
        alpha: alpha.unwrap_or(prior),
        beta: beta.unwrap_or(prior),
        granularity,
        seed,
    }
}

/// Re-encodes documents (already id-encoded against some vocabulary)
/// against a model's vocabulary by going through the term strings.
fn remap_documents(corpus: &Corpus, model: &TrainedModel) -> (Vec<Document>, usize) {
    let mut skipped = 0;
    let docs = corpus
        .documents
        .iter()
        .map(|doc| {
            let sentences: Vec<Vec<usize>> = doc
                .sentences
                .iter()
                .map(|s| {
                    s.iter()
                        .filter_map(|&id| {
                            let mapped = model.vocabulary.id(corpus.vocabulary.term(id));
                            if mapped.is_none() {
                                skipped += 1;
                            }
                            mapped
                        })
                        .collect::<Vec<usize>>()
                })
                .filter(|s: &Vec<usize>| !s.is_empty())
                .collect();
            Document {
                doc_id: doc.doc_id.clone(),
                sentences,
                labels: doc.labels.clone(),
            }
        })
        .collect();
    (docs, skipped)
}

fn load_docs_for_model(
    input: &Option<PathBuf>,
    corpus: &Option<PathBuf>,
    model: &TrainedModel,
    preprocess: &PreprocessArgs,
) -> Result<(Vec<Document>, usize), CliError> {
    match (input, corpus) {
        (Some(path), None) => {
            let cfg = preprocess_config(preprocess)?;
            let raw = read_jsonl(open_reader(path)?, cfg.pretokenized).map_err(CliError::usage)?;
            let mut skipped = 0;
            let docs = raw
                .iter()
                .map(|r| {
                    let (doc, s) = encode_with_vocabulary(r, &model.vocabulary, &cfg);
                    skipped += s;
                    doc
                })
                .collect();
            Ok((docs, skipped))
        }
        (None, Some(path)) => {
            let corpus = load_corpus(path)?;
            Ok(remap_documents(&corpus, model))
        }
        _ => Err(CliError::Usage(
            "exactly one of --input and --corpus is required".into(),
        )),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    let hyper = resolve_hyper(args.topics, args.alpha, args.beta, args.granularity, args.seed);
    let heldout = match &args.heldout {
        Some(path) => {
            let cfg = preprocess_config(&args.preprocess)?;
            let raw = read_jsonl(open_reader(path)?, cfg.pretokenized).map_err(CliError::usage)?;
            Some(
                raw.iter()
                    .map(|r| encode_with_vocabulary(r, &corpus.vocabulary, &cfg).0)
                    .collect::<Vec<_>>(),
            )
        }
        None => None,
    };
    let segmented = SegmentedCorpus::new(&corpus, hyper.granularity);
    let mut series = DiagnosticsSeries::new(hyper.granularity.to_string());
    let eval_every = args.eval_every.max(1);
    let mut eval_error: Option<String> = None;
    let (model, _) = train(&corpus, &hyper, args.iterations, |info| {
        let p = if (info.iteration + 1) % eval_every == 0 {
            match &heldout {
                Some(docs) => {
                    // fold-in perplexity against the current phi estimate
                    let snapshot = TrainedModel {
                        format_version: senlda::sampler::MODEL_FORMAT_VERSION,
                        hyperparams: hyper.clone(),
                        vocabulary: corpus.vocabulary.clone(),
                        phi: senlda::sampler::estimate_phi(info.state, &hyper),
                    };
                    match perplexity(&snapshot, docs, args.fold_in_iterations, hyper.seed, 0) {
                        Ok(report) => Some(report.perplexity),
                        Err(e) => {
                            eval_error.get_or_insert(e.to_string());
                            None
                        }
                    }
                }
                None => Some(training_perplexity(info.state, &segmented, &hyper)),
            }
        } else {
            None
        };
        series.push(info.iteration, info.seconds, p);
    })
    .map_err(CliError::runtime)?;
    if let Some(e) = eval_error {
        return Err(CliError::Runtime(format!("held-out evaluation failed: {e}")));
    }
    write_file(&args.output, model.to_json().as_bytes())?;
    write_config(&args.output, "train", args)?;
    if let Some(path) = &args.diagnostics {
        let file = File::create(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        write_diagnostics_csv(BufWriter::new(file), &[&series]).map_err(CliError::usage)?;
    }
    Ok(())
}

fn theta_matrix(
    model: &TrainedModel,
    docs: &[Document],
    iterations: usize,
    seed: u64,
) -> Result<FeatureMatrix, CliError> {
    let mut doc_ids = Vec::with_capacity(docs.len());
    let mut rows = Vec::with_capacity(docs.len());
    for doc in docs {
        let inferred = infer_theta(model, doc, iterations, derive_seed(seed, &doc.doc_id))
            .map_err(CliError::runtime)?;
        if inferred.empty_document {
            eprintln!(
                "warning: document {} has no in-vocabulary tokens; theta is uniform",
                doc.doc_id
            );
        }
        doc_ids.push(doc.doc_id.clone());
        rows.push(inferred.distribution.theta);
    }
    Ok(FeatureMatrix { doc_ids, rows })
}

fn cmd_infer(args: &InferArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let (docs, _) = load_docs_for_model(&args.input, &args.corpus, &model, &args.preprocess)?;
    let matrix = theta_matrix(&model, &docs, args.iterations, args.seed)?;
    let mut buf = Vec::new();
    matrix.write_csv(&mut buf).map_err(CliError::usage)?;
    write_file(&args.output, &buf)?;
    write_config(&args.output, "infer", args)?;
    Ok(())
}

fn cmd_perplexity(args: &PerplexityArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let (docs, skipped) =
        load_docs_for_model(&args.input, &args.corpus, &model, &args.preprocess)?;
    let report = perplexity(&model, &docs, args.iterations, args.seed, skipped)
        .map_err(CliError::runtime)?;
    write_file(&args.output, serde_json::to_string_pretty(&report).unwrap().as_bytes())?;
    write_config(&args.output, "perplexity", args)?;
    println!("perplexity {}", report.perplexity);
    Ok(())
}

fn cmd_classify(args: &ClassifyArgs) -> Result<(), CliError> {
    let mut features = FeatureMatrix::read_csv(open_reader(&args.features)?).map_err(CliError::usage)?;
    if let Some(second) = &args.features2 {
        let other = FeatureMatrix::read_csv(open_reader(second)?).map_err(CliError::usage)?;
        features = concat_features(&features, &other).map_err(CliError::runtime)?;
    }
    let label_map: BTreeMap<String, LabelSet> = read_labels(open_reader(&args.labels)?)
        .map_err(CliError::usage)?
        .into_iter()
        .collect();
    let labels: Vec<LabelSet> = features
        .doc_ids
        .iter()
        .map(|id| label_map.get(id).cloned().unwrap_or_default())
        .collect();
    if !(args.test_fraction > 0.0 && args.test_fraction < 1.0) {
        return Err(CliError::Usage("--test-fraction must be in (0, 1)".into()));
    }
    let n = features.rows.len();
    let test_size = ((n as f64) * args.test_fraction).round().max(1.0) as usize;
    // seeded shuffle, first block is the test part
    let order = senlda::classify::fold_split(n, 1, args.seed).pop().unwrap();
    let (test_idx, train_idx) = order.split_at(test_size.min(n.saturating_sub(1)));
    let take = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<LabelSet>) {
        (
            idx.iter().map(|&i| features.rows[i].clone()).collect(),
            idx.iter().map(|&i| labels[i].clone()).collect(),
        )
    };
    let (train_x, train_y) = take(train_idx);
    let (test_x, test_y) = take(test_idx);
    let grid = args.lambda_grid.clone().unwrap_or_else(default_lambda_grid);
    let report = evaluate_pipeline(
        &train_x, &train_y, &test_x, &test_y, &grid, args.folds, args.epochs, args.seed,
    )
    .map_err(CliError::runtime)?;
    write_file(&args.output, serde_json::to_string_pretty(&report).unwrap().as_bytes())?;
    write_config(&args.output, "classify", args)?;
    println!("micro_f1 {}", report.micro_f1);
    println!("chosen_lambda {}", report.chosen_lambda);
    println!("feature_dim {}", report.feature_dim);
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let hyper = resolve_hyper(args.topics, args.alpha, args.beta, Granularity::Sentence, args.seed);
    let cfg = GeneratorConfig {
        xi_sentences: args.xi_sentences,
        xi_words: args.xi_words,
        true_phi: args
            .separated
            .map(|mass| disjoint_support_phi(args.topics, args.vocab, mass)),
        docs: args.docs,
        vocab_size: args.vocab,
    };
    let (corpus, truth) = generate_corpus(&cfg, &hyper);
    write_file(&args.output, serde_json::to_string(&corpus).unwrap().as_bytes())?;
    if let Some(path) = &args.truth {
        write_file(path, serde_json::to_string(&truth).unwrap().as_bytes())?;
    }
    if let Some(path) = &args.labels {
        write_labels_file(path, &corpus.documents)?;
    }
    write_config(&args.output, "generate", args)?;
    println!("documents {}", corpus.documents.len());
    println!("tokens {}", corpus.total_tokens());
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    if args.seeds.is_empty() {
        return Err(CliError::Usage("--seeds requires at least one seed".into()));
    }
    let out =
        File::create(&args.output).map_err(|e| CliError::Usage(format!("{}: {e}", args.output.display())))?;
    let mut out = BufWriter::new(out);
    writeln!(out, "label,seed,iteration,seconds,perplexity").map_err(CliError::usage)?;
    let mut convergence_rows = String::from("label,seed,convergence_iteration\n");
    for granularity in [Granularity::Sentence, Granularity::Word] {
        for &seed in &args.seeds {
            let hyper = resolve_hyper(args.topics, args.alpha, args.beta, granularity, seed);
            let segmented = SegmentedCorpus::new(&corpus, granularity);
            let mut series = DiagnosticsSeries::new(granularity.to_string());
            train(&corpus, &hyper, args.iterations, |info| {
                let p = training_perplexity(info.state, &segmented, &hyper);
                series.push(info.iteration, info.seconds, Some(p));
            })
            .map_err(CliError::runtime)?;
            for row in &series.rows {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    granularity,
                    seed,
                    row.iteration,
                    row.seconds,
                    row.perplexity.unwrap()
                )
                .map_err(CliError::usage)?;
            }
            let converged = detect_convergence(&series, args.rel_eps, args.window);
            let shown = converged.map(|i| i.to_string()).unwrap_or_default();
            convergence_rows.push_str(&format!("{granularity},{seed},{shown}\n"));
            println!(
                "{granularity} seed {seed} converged at {}",
                converged.map(|i| i.to_string()).unwrap_or_else(|| "never".into())
            );
        }
    }
    out.flush().map_err(CliError::usage)?;
    let mut conv_path = args.output.as_os_str().to_owned();
    conv_path.push(".convergence.csv");
    write_file(Path::new(&conv_path), convergence_rows.as_bytes())?;
    write_config(&args.output, "bench", args)?;
    Ok(())
}
