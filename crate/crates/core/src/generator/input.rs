use std::collections::HashMap;

use crate::corpus::{AnnotatedDocument, Vocab, PAD, STOP, UNK};
use crate::encoder::mention_sequence_ids;
use crate::error::{Error, Result};

/// Source text and salient entities for one generation, with the
/// document-local extended vocabulary used by the copy path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorInput {
    /// Lowercased source tokens, selected sentences in document order.
    pub source: Vec<String>,
    /// Fixed-vocabulary ids (UNK for out-of-vocabulary tokens).
    pub source_ids: Vec<usize>,
    /// Extended ids: OOV token `k` of this input is `vocab_size + k`.
    pub source_ext: Vec<usize>,
    /// Out-of-vocabulary source words in first-occurrence order.
    pub oov: Vec<String>,
    /// Mention sequences of the selected entities.
    pub entity_mentions: Vec<Vec<usize>>,
    pub vocab_size: usize,
}

impl GeneratorInput {
    /// `sentences` and `entities` are index sets into `doc`; sentences are
    /// always read in document order. The joined text is cut at
    /// `max_source` tokens.
    pub fn new(
        doc: &AnnotatedDocument,
        sentences: &[usize],
        entities: &[usize],
        vocab: &Vocab,
        max_source: usize,
    ) -> Result<Self> {
        let mut order: Vec<usize> = sentences.to_vec();
        order.sort_unstable();
        order.dedup();
        if let Some(&bad) = order.iter().find(|&&i| i >= doc.num_sentences()) {
            return Err(Error::Invalid(format!("sentence index {bad} out of range in {}", doc.id)));
        }
        let source: Vec<String> = order
            .iter()
            .flat_map(|&i| doc.sentences[i].iter())
            .take(max_source)
            .map(|t| t.to_lowercase())
            .collect();
        if source.is_empty() {
            return Err(Error::Invalid(format!("empty generator input for document {}", doc.id)));
        }
        let v = vocab.len();
        let mut oov: Vec<String> = Vec::new();
        let mut oov_index: HashMap<&str, usize> = HashMap::new();
        let mut source_ids = Vec::with_capacity(source.len());
        let mut source_ext = Vec::with_capacity(source.len());
        for tok in &source {
            match vocab.get(tok) {
                Some(id) => {
                    source_ids.push(id);
                    source_ext.push(id);
                }
                None => {
                    let k = *oov_index.entry(tok.as_str()).or_insert_with(|| {
                        oov.push(tok.clone());
                        oov.len() - 1
                    });
                    source_ids.push(UNK);
                    source_ext.push(v + k);
                }
            }
        }
        let mut ents: Vec<usize> = entities.to_vec();
        ents.sort_unstable();
        ents.dedup();
        let entity_mentions = ents
            .iter()
            .filter(|&&j| j < doc.num_entities())
            .map(|&j| mention_sequence_ids(doc, &doc.entities[j], vocab))
            .map(|s| if s.is_empty() { vec![PAD] } else { s })
            .collect();
        Ok(GeneratorInput {
            source,
            source_ids,
            source_ext,
            oov,
            entity_mentions,
            vocab_size: v,
        })
    }

    pub fn extended_size(&self) -> usize {
        self.vocab_size + self.oov.len()
    }

    /// Teacher-forcing targets: reference tokens mapped to the fixed
    /// vocabulary, or to a copy slot when only the source has them, else
    /// UNK; cut to `max_steps - 1` and closed by STOP.
    pub fn target_ids<T: AsRef<str>>(&self, reference: &[T], vocab: &Vocab, max_steps: usize) -> Vec<usize> {
        let mut out: Vec<usize> = reference
            .iter()
            .take(max_steps.saturating_sub(1))
            .map(|t| {
                let t = t.as_ref();
                vocab.get(t).unwrap_or_else(|| {
                    let low = t.to_lowercase();
                    self.oov
                        .iter()
                        .position(|w| *w == low)
                        .map_or(UNK, |k| self.vocab_size + k)
                })
            })
            .collect();
        out.push(STOP);
        out
    }

    /// Fixed-vocabulary id used as decoder input for an extended id.
    pub fn input_id(&self, ext: usize) -> usize {
        if ext < self.vocab_size {
            ext
        } else {
            UNK
        }
    }

    pub fn token<'a>(&'a self, ext: usize, vocab: &'a Vocab) -> &'a str {
        if ext < self.vocab_size {
            vocab.token(ext)
        } else {
            &self.oov[ext - self.vocab_size]
        }
    }
}
