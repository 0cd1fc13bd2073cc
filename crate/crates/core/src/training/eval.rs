use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::generator::{DecodeMode, Generated};
use crate::rouge::{limited_length_recall, RougeMetric, RougeTriple};
use crate::scalar::Scalar;
use crate::selector::rank_and_select;
use crate::training::model::{Example, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Extractive,
    Abstractive,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Extractive => "extractive",
            EvalMode::Abstractive => "abstractive",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extractive" => Ok(EvalMode::Extractive),
            "abstractive" => Ok(EvalMode::Abstractive),
            other => Err(Error::Config(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

/// Sentence and entity probabilities of the selector for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub sentence_probs: Vec<f64>,
    pub entity_probs: Vec<f64>,
    /// Top-k sentences, ascending.
    pub sentences: Vec<usize>,
    /// Top-k entities, ascending.
    pub entities: Vec<usize>,
}

pub fn select<S: Scalar>(model: &Model<S>, ex: &Example<S>) -> Result<Selection> {
    let mut tape = Tape::with_params(&model.store);
    let fwd = model.selector.forward(&mut tape, &ex.prepared)?;
    let sentence_probs = tape.value(fwd.output.sentences.probs).to_f64_vec();
    let entity_probs = fwd
        .output
        .entities
        .map(|d| tape.value(d.probs).to_f64_vec())
        .unwrap_or_default();
    Ok(Selection {
        sentences: rank_and_select(&sentence_probs, model.config.k_sent),
        entities: rank_and_select(&entity_probs, model.config.k_ent),
        sentence_probs,
        entity_probs,
    })
}

/// Generates from the given selection.
pub fn abstract_from<S: Scalar>(
    model: &Model<S>,
    ex: &Example<S>,
    sentences: &[usize],
    entities: &[usize],
    mode: DecodeMode,
) -> Result<Generated> {
    let input = model.generator_input(&ex.doc, sentences, entities)?;
    model.generator.generate(&model.store, &input, &model.vocab, mode)
}

/// `|top-k ∩ positives| / min(k, len)`; `None` without labels or items.
pub fn precision_at_k(selected: &[usize], labels: &[u8], k: usize) -> Option<f64> {
    let denom = k.min(labels.len());
    if denom == 0 || labels.iter().all(|&y| y == 0) {
        return None;
    }
    let hits = selected.iter().filter(|&&i| labels[i] == 1).count();
    Some(hits as f64 / denom as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocEval {
    pub id: String,
    pub sentences: Vec<usize>,
    pub entities: Vec<usize>,
    pub sentence_precision: Option<f64>,
    pub entity_precision: Option<f64>,
    /// Full-length scores.
    pub rouge: RougeTriple,
    /// Recall with the candidate cut to the reference length.
    pub limited_recall: [f64; 3],
    pub candidate_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: String,
    pub num_documents: usize,
    pub sentence_precision: Option<f64>,
    pub entity_precision: Option<f64>,
    pub rouge: RougeTriple,
    pub limited_recall: [f64; 3],
    pub documents: Vec<DocEval>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn rouge1_f1(&self) -> f64 {
        self.rouge.rouge1.f1
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn score(candidate: &[String], reference: &[String]) -> (RougeTriple, [f64; 3]) {
    let lim = |m| limited_length_recall(candidate, reference, reference.len(), m).recall;
    (
        RougeTriple::compute(candidate, reference),
        [lim(RougeMetric::Rouge1), lim(RougeMetric::Rouge2), lim(RougeMetric::RougeL)],
    )
}

/// Scores every example. Extractive candidates are the selected sentences
/// in document order; abstractive candidates are decoded from the same
/// selection.
pub fn evaluate<S: Scalar>(
    model: &Model<S>,
    examples: &[Example<S>],
    mode: EvalMode,
    decode: DecodeMode,
) -> Result<EvalReport> {
    use rayon::prelude::*;
    let documents: Vec<DocEval> = examples
        .par_iter()
        .map(|ex| {
            let sel = select(model, ex)?;
            let (sp, ep) = match &ex.prepared.labels {
                Some((ls, le)) => (
                    precision_at_k(&sel.sentences, ls, model.config.k_sent),
                    precision_at_k(&sel.entities, le, model.config.k_ent),
                ),
                None => (None, None),
            };
            let candidate: Vec<String> = match mode {
                EvalMode::Extractive => sel
                    .sentences
                    .iter()
                    .flat_map(|&i| ex.doc.sentences[i].iter().cloned())
                    .collect(),
                EvalMode::Abstractive => abstract_from(model, ex, &sel.sentences, &sel.entities, decode)?.tokens,
            };
            let reference: Vec<String> = ex.doc.summary.iter().flatten().cloned().collect();
            let (rouge, limited_recall) = score(&candidate, &reference);
            Ok(DocEval {
                id: ex.doc.id.clone(),
                sentences: sel.sentences,
                entities: sel.entities,
                sentence_precision: sp,
                entity_precision: ep,
                rouge,
                limited_recall,
                candidate_tokens: candidate.len(),
            })
        })
        .collect::<Result<_>>()?;
    let triples: Vec<RougeTriple> = documents.iter().map(|d| d.rouge).collect();
    let lim = |k: usize| mean(documents.iter().map(|d| d.limited_recall[k])).unwrap_or(0.0);
    Ok(EvalReport {
        mode: mode.as_str().into(),
        num_documents: documents.len(),
        sentence_precision: mean(documents.iter().filter_map(|d| d.sentence_precision)),
        entity_precision: mean(documents.iter().filter_map(|d| d.entity_precision)),
        rouge: RougeTriple::mean(&triples),
        limited_recall: [lim(0), lim(1), lim(2)],
        documents,
    })
}

/// Mean ROUGE of generated abstracts against references.
pub(crate) fn mean_rouge(pairs: &[(Vec<String>, Vec<String>)]) -> RougeTriple {
    let t: Vec<RougeTriple> = pairs.iter().map(|(c, r)| RougeTriple::compute(c, r)).collect();
    RougeTriple::mean(&t)
}


/// Extractive output: selected sentences in document order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractiveSummary {
    pub id: String,
    pub sentences: Vec<usize>,
    pub entities: Vec<usize>,
    pub sentence_probs: Vec<f64>,
    pub entity_probs: Vec<f64>,
    pub text: Vec<String>,
}

/// Abstractive output with copy statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstractiveSummary {
    pub id: String,
    pub text: String,
    pub steps: usize,
    pub p_gen_mean: f64,
    pub p_gen_min: f64,
    pub p_gen_max: f64,
    /// Half-open token ranges emitted through the copy path.
    pub copied_spans: Vec<(usize, usize)>,
    pub log_prob: f64,
}

pub fn extractive_summary<S: Scalar>(model: &Model<S>, ex: &Example<S>) -> Result<ExtractiveSummary> {
    let sel = select(model, ex)?;
    Ok(ExtractiveSummary {
        id: ex.doc.id.clone(),
        text: sel.sentences.iter().map(|&i| ex.doc.sentences[i].join(" ")).collect(),
        sentences: sel.sentences,
        entities: sel.entities,
        sentence_probs: sel.sentence_probs,
        entity_probs: sel.entity_probs,
    })
}

/// Decodes from the selector's top-k choice in `extractive`.
pub fn abstractive_summary<S: Scalar>(
    model: &Model<S>,
    ex: &Example<S>,
    extractive: &ExtractiveSummary,
    mode: DecodeMode,
) -> Result<AbstractiveSummary> {
    let g = abstract_from(model, ex, &extractive.sentences, &extractive.entities, mode)?;
    let n = g.p_gen.len().max(1) as f64;
    let fold = |init: f64, f: fn(f64, f64) -> f64| g.p_gen.iter().copied().fold(init, f);
    Ok(AbstractiveSummary {
        id: ex.doc.id.clone(),
        text: g.tokens.join(" "),
        steps: g.steps,
        p_gen_mean: g.p_gen.iter().sum::<f64>() / n,
        p_gen_min: if g.p_gen.is_empty() { 0.0 } else { fold(f64::INFINITY, f64::min) },
        p_gen_max: if g.p_gen.is_empty() { 0.0 } else { fold(f64::NEG_INFINITY, f64::max) },
        copied_spans: g.copied_spans(),
        log_prob: g.log_prob,
    })
}
