//! Held-out perplexity, perplexity-ratio series between two models, and
//! convergence detection on a perplexity series.
//!
//! Perplexity is the exponential of the negative mean token
//! log-likelihood, the reciprocal geometric mean of the token
//! likelihoods. Held-out token likelihoods mix the trained topic-term
//! rows with a fold-in estimate of each document's topic distribution.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::sampler::{
    derive_seed, estimate_phi, infer_theta, theta_from_counts, Hyperparams, SamplerError,
    SamplerState, SegmentedCorpus, TrainedModel,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no scorable held-out tokens (all documents empty or out of vocabulary)")]
    NoTokens,
    #[error("diagnostics series evaluated on different iteration grids")]
    IterationMismatch,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub perplexity: f64,
    pub total_tokens: usize,
    /// Out-of-vocabulary tokens dropped when the held-out set was encoded.
    pub skipped_tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub iteration: usize,
    pub seconds: f64,
    pub perplexity: Option<f64>,
}

/// Per-iteration training diagnostics for one model run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsSeries {
    pub label: String,
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsSeries {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            rows: Vec::new(),
        }
    }

    /// Iterations must arrive strictly increasing.
    pub fn push(&mut self, iteration: usize, seconds: f64, perplexity: Option<f64>) {
        if let Some(last) = self.rows.last() {
            assert!(iteration > last.iteration, "iterations must be strictly increasing");
        }
        self.rows.push(DiagnosticsRow {
            iteration,
            seconds,
            perplexity,
        });
    }

    fn perplexity_rows(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows
            .iter()
            .filter_map(|r| r.perplexity.map(|p| (r.iteration, p)))
    }
}

/// Held-out perplexity of already-encoded documents. Documents without
/// in-vocabulary tokens contribute nothing; `skipped_tokens` is the OOV
/// count recorded while encoding, reported for transparency.
pub fn perplexity(
    model: &TrainedModel,
    heldout: &[Document],
    fold_in_iterations: usize,
    seed: u64,
    skipped_tokens: usize,
) -> Result<PerplexityReport, EvalError> {
    let mut log_sum = 0.0;
    let mut tokens = 0usize;
    for doc in heldout {
        let inferred = infer_theta(model, doc, fold_in_iterations, derive_seed(seed, &doc.doc_id))?;
        if inferred.empty_document {
            continue;
        }
        let theta = &inferred.distribution.theta;
        for sentence in &doc.sentences {
            for &w in sentence {
                let p: f64 = theta
                    .iter()
                    .zip(&model.phi)
                    .map(|(&t, row)| t * row[w])
                    .sum();
                log_sum += p.ln();
                tokens += 1;
            }
        }
    }
    if tokens == 0 {
        return Err(EvalError::NoTokens);
    }
    Ok(PerplexityReport {
        perplexity: (-log_sum / tokens as f64).exp(),
        total_tokens: tokens,
        skipped_tokens,
    })
}

/// Training-set perplexity from the current sampler state, using the
/// smoothed phi/theta estimates. Cheap enough to evaluate every sweep;
/// drives convergence detection during training.
pub fn training_perplexity(
    state: &SamplerState,
    segmented: &SegmentedCorpus,
    hyper: &Hyperparams,
) -> f64 {
    let phi = estimate_phi(state, hyper);
    let mut log_sum = 0.0;
    let mut tokens = 0usize;
    for (d, doc) in segmented.docs.iter().enumerate() {
        let theta = theta_from_counts(&state.doc_topic[d], state.doc_total[d], hyper.alpha);
        for seg in doc {
            for &w in seg {
                let p: f64 = theta.iter().zip(&phi).map(|(&t, row)| t * row[w]).sum();
                log_sum += p.ln();
                tokens += 1;
            }
        }
    }
    (-log_sum / tokens as f64).exp()
}

/// Pointwise ratio perplexity_b / perplexity_a: values above one mean
/// model `a` achieves the lower perplexity at that iteration.
pub fn perplexity_ratio(
    series_a: &DiagnosticsSeries,
    series_b: &DiagnosticsSeries,
) -> Result<Vec<(usize, f64)>, EvalError> {
    let a: Vec<_> = series_a.perplexity_rows().collect();
    let b: Vec<_> = series_b.perplexity_rows().collect();
    if a.len() != b.len() || a.iter().zip(&b).any(|((ia, _), (ib, _))| ia != ib) {
        return Err(EvalError::IterationMismatch);
    }
    Ok(a.iter()
        .zip(&b)
        .map(|(&(it, pa), &(_, pb))| (it, pb / pa))
        .collect())
}

/// First iteration at which the perplexity has stopped decreasing: every
/// consecutive pair within the trailing `window` evaluations shows a
/// relative decrease below `rel_eps`.
pub fn detect_convergence(
    series: &DiagnosticsSeries,
    rel_eps: f64,
    window: usize,
) -> Option<usize> {
    assert!(window >= 2, "window must cover at least two evaluations");
    let points: Vec<(usize, f64)> = series.perplexity_rows().collect();
    for t in (window - 1)..points.len() {
        let tail = &points[t + 1 - window..=t];
        let settled = tail
            .windows(2)
            .all(|pair| (pair[0].1 - pair[1].1) / pair[0].1 < rel_eps);
        if settled {
            return Some(points[t].0);
        }
    }
    None
}

/// Writes `iteration,seconds,perplexity,label` rows; perplexity is empty
/// on iterations without an evaluation.
pub fn write_diagnostics_csv<W: Write>(
    mut w: W,
    series: &[&DiagnosticsSeries],
) -> std::io::Result<()> {
    writeln!(w, "iteration,seconds,perplexity,label")?;
    for s in series {
        for row in &s.rows {
            let p = row.perplexity.map(|p| p.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", row.iteration, row.seconds, p, s.label)?;
        }
    }
    Ok(())
}

/// Writes `iteration,ratio` rows.
pub fn write_ratio_csv<W: Write>(mut w: W, rows: &[(usize, f64)]) -> std::io::Result<()> {
    writeln!(w, "iteration,ratio")?;
    for (it, ratio) in rows {
        writeln!(w, "{it},{ratio}")?;
    }
    Ok(())
}
