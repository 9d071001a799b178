//! Topic distributions as document features for linear classification:
//! binary relevance over an L2-regularized hinge-loss classifier, lambda
//! grid search by k-fold cross-validation, and micro-averaged F1.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("feature matrices carry different document ids")]
    DocIdMismatch,
    #[error("class {0:?} has no positive or no negative examples")]
    DegenerateLabels(String),
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("bad record: {0}")]
    BadRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type LabelSet = BTreeSet<String>;

/// Document feature rows aligned with document ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub doc_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Writes `doc_id,f0,...,f{K-1}` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.dim();
        let header: Vec<String> = std::iter::once("doc_id".to_owned())
            .chain((0..dim).map(|i| format!("f{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (id, row) in self.doc_ids.iter().zip(&self.rows) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", id, vals.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, ClassifyError> {
        let mut doc_ids = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let id = parts
                .next()
                .ok_or_else(|| ClassifyError::BadRecord(line.clone()))?;
            let row: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            doc_ids.push(id.to_owned());
            rows.push(row.map_err(|e| ClassifyError::BadRecord(format!("{line}: {e}")))?);
        }
        Ok(Self { doc_ids, rows })
    }
}

/// Row-wise concatenation of two aligned feature matrices (the combined
/// sentence-plus-word representation).
pub fn concat_features(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<FeatureMatrix, ClassifyError> {
    if a.doc_ids != b.doc_ids {
        return Err(ClassifyError::DocIdMismatch);
    }
    let rows = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(ra, rb)| ra.iter().chain(rb).copied().collect())
        .collect();
    Ok(FeatureMatrix {
        doc_ids: a.doc_ids.clone(),
        rows,
    })
}

/// One binary classifier of a binary-relevance ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// Fits one binary classifier by seeded stochastic subgradient descent on
/// the L2-regularized hinge loss, step size 1/(lambda * t).
pub fn train_binary(
    features: &[Vec<f64>],
    labels: &[bool],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearModel, ClassifyError> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(ClassifyError::DegenerateLabels(format!(
            "{positives} of {} positive",
            labels.len()
        )));
    }
    let dim = features[0].len();
    let n = features.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut t = 0usize;
    for _ in 0..epochs {
        for _ in 0..n {
            t += 1;
            let i = rng.gen_range(0..n);
            let x = &features[i];
            let y = if labels[i] { 1.0 } else { -1.0 };
            let eta = 1.0 / (lambda * t as f64);
            let margin = y * (weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias);
            let shrink = 1.0 - eta * lambda;
            for w in &mut weights {
                *w *= shrink;
            }
            if margin < 1.0 {
                for (w, &v) in weights.iter_mut().zip(x) {
                    *w += eta * y * v;
                }
                bias += eta * y;
            }
        }
    }
    Ok(LinearModel {
        weights,
        bias,
        lambda,
    })
}

/// All class names present in a label assignment, sorted.
pub fn class_names(labels: &[LabelSet]) -> Vec<String> {
    let mut all = BTreeSet::new();
    for ls in labels {
        all.extend(ls.iter().cloned());
    }
    all.into_iter().collect()
}

/// Binary relevance: one classifier per class. Classes degenerate in this
/// training set are skipped (never predicted positive).
pub fn train_multilabel(
    features: &[Vec<f64>],
    labels: &[LabelSet],
    classes: &[String],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> BTreeMap<String, LinearModel> {
    let mut models = BTreeMap::new();
    for (ci, class) in classes.iter().enumerate() {
        let binary: Vec<bool> = labels.iter().map(|ls| ls.contains(class)).collect();
        let class_seed = seed.wrapping_add(ci as u64).wrapping_mul(0x9e3779b97f4a7c15);
        if let Ok(model) = train_binary(features, &binary, lambda, epochs, class_seed) {
            models.insert(class.clone(), model);
        }
    }
    models
}

/// Predicts the label set of each row: every class with a positive
/// decision value, or the single argmax class when none is positive.
pub fn predict_multilabel(
    models: &BTreeMap<String, LinearModel>,
    features: &[Vec<f64>],
) -> Vec<LabelSet> {
    features
        .iter()
        .map(|x| {
            let mut set = LabelSet::new();
            let mut best: Option<(&String, f64)> = None;
            for (class, model) in models {
                let d = model.decision(x);
                if d > 0.0 {
                    set.insert(class.clone());
                }
                if best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((class, d));
                }
            }
            if set.is_empty() {
                if let Some((class, _)) = best {
                    set.insert(class.clone());
                }
            }
            set
        })
        .collect()
}

/// Micro-averaged F1 over all (document, class) decisions.
pub fn f1_micro(predictions: &[LabelSet], gold: &[LabelSet]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (pred, truth) in predictions.iter().zip(gold) {
        tp += pred.intersection(truth).count();
        fp += pred.difference(truth).count();
        fn_ += truth.difference(pred).count();
    }
    if 2 * tp + fp + fn_ == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

fn binary_f1(predictions: &[bool], gold: &[bool]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if 2 * tp + fp + fn_ == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Seeded shuffle, then contiguous blocks. Returns per-fold index lists.
pub fn fold_split(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(indices[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Selects the lambda maximizing mean validation micro-F1 across folds;
/// ties break toward the larger lambda.
pub fn cross_validate_lambda(
    features: &[Vec<f64>],
    labels: &[LabelSet],
    grid: &[f64],
    folds: usize,
    epochs: usize,
    seed: u64,
) -> Result<f64, ClassifyError> {
    if grid.is_empty() {
        return Err(ClassifyError::EmptyGrid);
    }
    let classes = class_names(labels);
    let splits = fold_split(features.len(), folds, seed);
    let mut best: Option<(f64, f64)> = None; // (mean_f1, lambda)
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for &lambda in &grid {
        let mut scores = Vec::new();
        for fold in &splits {
            if fold.is_empty() {
                continue;
            }
            let in_fold: BTreeSet<usize> = fold.iter().copied().collect();
            let mut train_x = Vec::new();
            let mut train_y = Vec::new();
            for i in 0..features.len() {
                if !in_fold.contains(&i) {
                    train_x.push(features[i].clone());
                    train_y.push(labels[i].clone());
                }
            }
            let models = train_multilabel(&train_x, &train_y, &classes, lambda, epochs, seed);
            let val_x: Vec<Vec<f64>> = fold.iter().map(|&i| features[i].clone()).collect();
            let val_y: Vec<LabelSet> = fold.iter().map(|&i| labels[i].clone()).collect();
            let preds = predict_multilabel(&models, &val_x);
            scores.push(f1_micro(&preds, &val_y));
        }
        let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        // ties toward larger lambda: grid is ascending, >= keeps the later one
        if best.is_none_or(|(bf, _)| mean >= bf) {
            best = Some((mean, lambda));
        }
    }
    Ok(best.expect("non-empty grid").1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub micro_f1: f64,
    pub per_class: BTreeMap<String, f64>,
    pub chosen_lambda: f64,
    pub feature_dim: usize,
}

/// Full protocol: grid-search lambda on the training part with k-fold CV,
/// refit on the full training set, report micro and per-class F1 on test.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pipeline(
    train_features: &[Vec<f64>],
    train_labels: &[LabelSet],
    test_features: &[Vec<f64>],
    test_labels: &[LabelSet],
    grid: &[f64],
    folds: usize,
    epochs: usize,
    seed: u64,
) -> Result<ClassificationReport, ClassifyError> {
    let lambda = cross_validate_lambda(train_features, train_labels, grid, folds, epochs, seed)?;
    let classes = class_names(train_labels);
    let models = train_multilabel(train_features, train_labels, &classes, lambda, epochs, seed);
    let predictions = predict_multilabel(&models, test_features);
    let mut per_class = BTreeMap::new();
    for class in &classes {
        let pred: Vec<bool> = predictions.iter().map(|s| s.contains(class)).collect();
        let gold: Vec<bool> = test_labels.iter().map(|s| s.contains(class)).collect();
        per_class.insert(class.clone(), binary_f1(&pred, &gold));
    }
    Ok(ClassificationReport {
        micro_f1: f1_micro(&predictions, test_labels),
        per_class,
        chosen_lambda: lambda,
        feature_dim: train_features.first().map_or(0, Vec::len),
    })
}

/// Default regularization grid, powers of ten from 10^-4 through 10^4.
pub fn default_lambda_grid() -> Vec<f64> {
    (-4..=4).map(|e| 10f64.powi(e)).collect()
}

/// Reads `doc_id,label1;label2;...` lines (no header).
pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<(String, LabelSet)>, ClassifyError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, labels) = line
            .split_once(',')
            .ok_or_else(|| ClassifyError::BadRecord(line.clone()))?;
        let set: LabelSet = labels
            .split(';')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        out.push((id.to_owned(), set));
    }
    Ok(out)
}
