use rand::Rng;

use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::corpus::{oracle_entity_labels, oracle_sentence_labels, AnnotatedDocument, EntityVocab, Vocab};
use crate::encoder::{DocumentIds, EncoderDims, NodeEncoder, NodeInit};
use crate::error::{Error, Result};
use crate::graph::{EdgeType, SentenceEntityGraph};
use crate::rhgnn::{propagation_matrices, PropagationMode, RhgnnStack};
use crate::scalar::Scalar;
use crate::selector::{selector_loss, LossWeights, SelectorHeads, SelectorLoss, SelectorOutput};

/// Structural switches of the extractive model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorOptions {
    pub mode: PropagationMode,
    /// Feed KG entity rows into E⁰ and the relatedness head.
    pub entity_level: bool,
    /// Remove SS and EE edges, keeping only SE.
    pub drop_ss_ee: bool,
}

impl Default for SelectorOptions {
    fn default() -> Self {
        SelectorOptions {
            mode: PropagationMode::Full,
            entity_level: true,
            drop_ss_ee: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorDims {
    pub encoder: EncoderDims,
    pub levels: usize,
    pub mlp_hidden: usize,
}

/// A document converted to model inputs once, reusable across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDoc<S> {
    pub id: String,
    pub ids: DocumentIds,
    pub adjacency: Vec<Tensor<S>>,
    /// Raw EE weights among the document's entities, N×N.
    pub a_ee: Option<Tensor<S>>,
    /// Oracle labels; absent when the document has neither stored labels
    /// nor a reference summary.
    pub labels: Option<(Vec<u8>, Vec<u8>)>,
}

/// Labels stored on the document, otherwise derived from its summary.
pub fn document_labels(doc: &AnnotatedDocument) -> Result<Option<(Vec<u8>, Vec<u8>)>> {
    let has_summary = doc.summary.iter().any(|s| !s.is_empty());
    let sent = match &doc.oracle_sentence_labels {
        Some(l) => l.clone(),
        None if has_summary => oracle_sentence_labels(doc)?,
        None => return Ok(None),
    };
    let ent = match &doc.oracle_entity_labels {
        Some(l) => l.clone(),
        None => oracle_entity_labels(doc),
    };
    Ok(Some((sent, ent)))
}

/// Node encoder, R-HGNN stack and selection heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorModel {
    pub encoder: NodeEncoder,
    pub gnn: RhgnnStack,
    pub heads: SelectorHeads,
    pub options: SelectorOptions,
}

#[derive(Debug, Clone, Copy)]
pub struct SelectorForward {
    pub nodes: NodeInit,
    /// S^(L).
    pub s_l: Var,
    /// E^(L).
    pub e_l: Option<Var>,
    pub output: SelectorOutput,
}

impl SelectorModel {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        dims: SelectorDims,
        vocab_size: usize,
        entity_vocab_size: usize,
        options: SelectorOptions,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let encoder = NodeEncoder::new(
            store,
            &format!("{prefix}.enc"),
            dims.encoder,
            vocab_size,
            entity_vocab_size,
            rng,
        )?;
        let gnn = RhgnnStack::new(
            store,
            &format!("{prefix}.gnn"),
            dims.encoder.node_dim,
            dims.levels,
            options.mode,
            rng,
        )?;
        let heads = SelectorHeads::new(store, prefix, dims.encoder.node_dim, dims.mlp_hidden, rng)?;
        Ok(SelectorModel {
            encoder,
            gnn,
            heads,
            options,
        })
    }

    pub fn dropped_edges(&self) -> &'static [EdgeType] {
        if self.options.drop_ss_ee {
            &[EdgeType::SentSent, EdgeType::EntEnt]
        } else {
            &[]
        }
    }

    pub fn prepare<S: Scalar>(
        &self,
        doc: &AnnotatedDocument,
        graph: &SentenceEntityGraph,
        vocab: &Vocab,
        entities: &EntityVocab,
    ) -> Result<PreparedDoc<S>> {
        if graph.num_sentences != doc.num_sentences() || graph.num_entities != doc.num_entities() {
            return Err(Error::Invalid(format!("graph does not belong to document {}", doc.id)));
        }
        let adjacency = propagation_matrices(graph, self.options.mode, self.dropped_edges())?;
        let (m, n) = (graph.num_sentences, graph.num_entities);
        let a_ee = (n > 0).then(|| {
            let full = graph.dense::<S>(EdgeType::EntEnt);
            Tensor::from_fn(n, n, |i, j| full.get(m + i, m + j))
        });
        Ok(PreparedDoc {
            id: doc.id.clone(),
            ids: DocumentIds::new(doc, vocab, entities),
            adjacency,
            a_ee,
            labels: document_labels(doc)?,
        })
    }

    pub fn forward<'a, S: Scalar>(&self, tape: &mut Tape<'a, S>, doc: &PreparedDoc<S>) -> Result<SelectorForward> {
        let nodes = self.encoder.encode(tape, &doc.ids, self.options.entity_level)?;
        let x0 = match nodes.entities {
            Some(e) => tape.concat_rows(&[nodes.s0, e.e0])?,
            None => nodes.s0,
        };
        let adj: Vec<Var> = doc.adjacency.iter().map(|a| tape.constant(a.clone())).collect();
        let (s_l, e_l) = self.gnn.forward_split(tape, x0, &adj, doc.ids.num_sentences())?;
        let e_e = if self.options.entity_level {
            nodes.entities.map(|e| e.e_e)
        } else {
            None
        };
        let output = self.heads.forward(tape, s_l, e_l, e_e)?;
        Ok(SelectorForward {
            nodes,
            s_l,
            e_l,
            output,
        })
    }

    pub fn loss<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        doc: &PreparedDoc<S>,
        weights: LossWeights,
    ) -> Result<(SelectorForward, SelectorLoss)> {
        let (sl, el) = doc
            .labels
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("document {} has no oracle labels", doc.id)))?;
        let fwd = self.forward(tape, doc)?;
        let loss = selector_loss(tape, &fwd.output, sl, el, doc.a_ee.as_ref(), weights)?;
        Ok((fwd, loss))
    }
}
