use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::corpus::{uniform_matrix, AnnotatedDocument, Entity, EntityVocab, Vocab, PAD, SEP};
use crate::encoder::{BiRnn, Linear};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index view of a document for the node encoders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentIds {
    /// Word ids per sentence; an empty sentence is a single PAD.
    pub sentences: Vec<Vec<usize>>,
    /// Per entity: mention tokens in document order, separated by SEP.
    pub mentions: Vec<Vec<usize>>,
    /// Per entity: row of the entity-level table.
    pub entity_rows: Vec<usize>,
}

/// Mention tokens of one entity joined by `<sep>`.
pub fn mention_sequence<'d>(doc: &'d AnnotatedDocument, entity: &'d Entity) -> Vec<&'d str> {
    let mut out = Vec::new();
    for (k, m) in entity.mentions.iter().enumerate() {
        if k > 0 {
            out.push("<sep>");
        }
        out.extend(doc.mention_tokens(m).iter().map(String::as_str));
    }
    out
}

/// Word ids of [`mention_sequence`], with SEP for the separators.
pub fn mention_sequence_ids(doc: &AnnotatedDocument, entity: &Entity, vocab: &Vocab) -> Vec<usize> {
    mention_sequence(doc, entity)
        .into_iter()
        .map(|t| if t == "<sep>" { SEP } else { vocab.id(t) })
        .collect()
}

impl DocumentIds {
    pub fn new(doc: &AnnotatedDocument, vocab: &Vocab, entities: &EntityVocab) -> Self {
        let sentences = doc
            .sentences
            .iter()
            .map(|s| {
                if s.is_empty() {
                    vec![PAD]
                } else {
                    s.iter().map(|t| vocab.id(t)).collect()
                }
            })
            .collect();
        let mentions = doc
            .entities
            .iter()
            .map(|e| mention_sequence_ids(doc, e, vocab))
            .collect();
        let entity_rows = doc
            .entities
            .iter()
            .map(|e| entities.lookup(e.kg_id.as_deref()))
            .collect();
        DocumentIds {
            sentences,
            mentions,
            entity_rows,
        }
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn num_entities(&self) -> usize {
        self.mentions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub word_emb: usize,
    pub entity_emb: usize,
    /// Per direction; sentence nodes are twice this wide.
    pub sent_hidden: usize,
    /// Per direction.
    pub mention_hidden: usize,
    pub node_dim: usize,
}

impl EncoderDims {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.word_emb,
            self.entity_emb,
            self.sent_hidden,
            self.mention_hidden,
            self.node_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("encoder dims must be positive: {self:?}")));
        }
        if self.node_dim != 2 * self.sent_hidden {
            return Err(Error::Config(format!(
                "node_dim {} must equal 2 × sent_hidden {}",
                self.node_dim, self.sent_hidden
            )));
        }
        Ok(())
    }
}

/// Initial node features for one document.
#[derive(Debug, Clone, Copy)]
pub struct NodeInit {
    /// S⁰, M×d.
    pub s0: Var,
    pub entities: Option<EntityNodes>,
}

#[derive(Debug, Clone, Copy)]
pub struct EntityNodes {
    /// Word-level entity embeddings e^W, N×2H_m.
    pub e_w: Var,
    /// Entity-level embeddings E^E, N×entity_emb.
    pub e_e: Var,
    /// E⁰, N×d.
    pub e0: Var,
}

/// Two-level sentence BiRNN plus mention BiRNN and entity projection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeEncoder {
    pub dims: EncoderDims,
    pub word_emb: ParamId,
    pub entity_emb: ParamId,
    pub word_rnn: BiRnn,
    pub sent_rnn: BiRnn,
    pub mention_rnn: BiRnn,
    pub entity_proj: Linear,
}

impl NodeEncoder {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        dims: EncoderDims,
        vocab_size: usize,
        entity_vocab_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        dims.validate()?;
        let word_emb = store.add(
            format!("{prefix}.word_emb"),
            uniform_matrix(rng, vocab_size, dims.word_emb, 0.1),
        )?;
        let entity_emb = store.add(
            format!("{prefix}.entity_emb"),
            uniform_matrix(rng, entity_vocab_size, dims.entity_emb, 0.1),
        )?;
        let word_rnn = BiRnn::new(store, &format!("{prefix}.word_rnn"), dims.word_emb, dims.sent_hidden, rng)?;
        let sent_rnn = BiRnn::new(
            store,
            &format!("{prefix}.sent_rnn"),
            2 * dims.sent_hidden,
            dims.sent_hidden,
            rng,
        )?;
        let mention_rnn = BiRnn::new(
            store,
            &format!("{prefix}.mention_rnn"),
            dims.word_emb,
            dims.mention_hidden,
            rng,
        )?;
        let entity_proj = Linear::new(
            store,
            &format!("{prefix}.entity_proj"),
            2 * dims.mention_hidden + dims.entity_emb,
            dims.node_dim,
            true,
            rng,
        )?;
        Ok(NodeEncoder {
            dims,
            word_emb,
            entity_emb,
            word_rnn,
            sent_rnn,
            mention_rnn,
            entity_proj,
        })
    }

    /// `S⁰_i = [→h_i, ←h_i]` of the sentence-level BiRNN run over
    /// `s_rep_i = [→h_{i,|s_i|}, ←h_{i,1}]`.
    pub fn encode_sentences<S: Scalar>(&self, tape: &mut Tape<'_, S>, ids: &DocumentIds) -> Result<Var> {
        if ids.sentences.is_empty() {
            return Err(Error::Invalid("cannot encode a document without sentences".into()));
        }
        let table = tape.param(self.word_emb);
        let words = self.word_rnn.run_batch(tape, table, &ids.sentences, PAD)?;
        let s_rep = tape.concat_cols(&[words.fwd_last, words.bwd_first])?;
        let states = self.sent_rnn.run_sequence(tape, s_rep)?;
        tape.concat_cols(&[states.fwd, states.bwd])
    }

    /// `E⁰ = proj([e^W, e^E])`. With `entity_level` off the e^E half of the
    /// projection input is zero.
    pub fn encode_entities<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        ids: &DocumentIds,
        entity_level: bool,
    ) -> Result<Option<EntityNodes>> {
        if ids.mentions.is_empty() {
            return Ok(None);
        }
        let table = tape.param(self.word_emb);
        let m = self.mention_rnn.run_batch(tape, table, &ids.mentions, PAD)?;
        let e_w = tape.concat_cols(&[m.fwd_last, m.bwd_first])?;
        let ent_table = tape.param(self.entity_emb);
        let e_e = tape.gather_rows(ent_table, &ids.entity_rows)?;
        let level_input = if entity_level {
            e_e
        } else {
            tape.constant(crate::autodiff::Tensor::zeros(ids.num_entities(), self.dims.entity_emb))
        };
        let joined = tape.concat_cols(&[e_w, level_input])?;
        let e0 = self.entity_proj.forward(tape, joined)?;
        Ok(Some(EntityNodes { e_w, e_e, e0 }))
    }

    pub fn encode<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        ids: &DocumentIds,
        entity_level: bool,
    ) -> Result<NodeInit> {
        Ok(NodeInit {
            s0: self.encode_sentences(tape, ids)?,
            entities: self.encode_entities(tape, ids, entity_level)?,
        })
    }
}
