use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore, Tensor};
use crate::corpus::{AnnotatedDocument, CooccurrenceTable, EntityVocab, Vocab};
use crate::error::{Error, Result};
use crate::generator::{GeneratorInput, GeneratorModel};
use crate::graph::build_graph;
use crate::scalar::Scalar;
use crate::selector::{PreparedDoc, SelectorModel};
use crate::training::config::{hex_digest, TrainConfig};

pub const SELECTOR_PREFIX: &str = "selector";
pub const GENERATOR_PREFIX: &str = "generator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Selector,
    Generator,
    Rl,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Selector, Phase::Generator, Phase::Rl];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Selector => "selector",
            Phase::Generator => "generator",
            Phase::Rl => "rl",
        }
    }

    pub(crate) fn bit(self) -> u8 {
        match self {
            Phase::Selector => 1,
            Phase::Generator => 2,
            Phase::Rl => 4,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown phase {s:?}")))
    }
}

/// Selector and generator sharing one parameter store, plus the
/// vocabularies they were built for.
#[derive(Debug, Clone)]
pub struct Model<S> {
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub entity_vocab: EntityVocab,
    pub store: ParamStore<S>,
    pub selector: SelectorModel,
    pub generator: GeneratorModel,
    /// Bitmask of finished phases.
    pub completed: u8,
}

/// A document with its model inputs precomputed.
#[derive(Debug, Clone)]
pub struct Example<S> {
    pub doc: AnnotatedDocument,
    pub prepared: PreparedDoc<S>,
}

impl<S: Scalar> Model<S> {
    /// Fresh parameters drawn from `config.seed`. Pretrained tables, when
    /// given, replace the random embedding rows.
    pub fn new(
        config: TrainConfig,
        vocab: Vocab,
        entity_vocab: EntityVocab,
        word_table: Option<&Tensor<S>>,
        entity_table: Option<&Tensor<S>>,
    ) -> Result<Self> {
        config.validate()?;
        if S::WIDTH != config.dtype {
            return Err(Error::Config(format!(
                "config dtype width {} does not match scalar width {}",
                config.dtype,
                S::WIDTH
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let selector = SelectorModel::new(
            &mut store,
            SELECTOR_PREFIX,
            config.selector_dims(),
            vocab.len(),
            entity_vocab.len(),
            config.selector_options()?,
            &mut rng,
        )?;
        let generator = GeneratorModel::new(&mut store, GENERATOR_PREFIX, config.generator_dims(), vocab.len(), &mut rng)?;
        let mut model = Model {
            config,
            vocab,
            entity_vocab,
            store,
            selector,
            generator,
            completed: 0,
        };
        if let Some(t) = word_table {
            model.replace_param(model.selector.encoder.word_emb, t)?;
            model.replace_param(model.generator.word_emb, t)?;
        }
        if let Some(t) = entity_table {
            model.replace_param(model.selector.encoder.entity_emb, t)?;
        }
        Ok(model)
    }

    fn replace_param(&mut self, id: ParamId, value: &Tensor<S>) -> Result<()> {
        let p = self.store.get_mut(id);
        if !p.same_shape(value) {
            return Err(Error::dim("embedding table", p.shape(), value.shape()));
        }
        *p = value.clone();
        Ok(())
    }

    pub fn selector_params(&self) -> Vec<ParamId> {
        self.store.group(&format!("{SELECTOR_PREFIX}."))
    }

    pub fn generator_params(&self) -> Vec<ParamId> {
        self.store.group(&format!("{GENERATOR_PREFIX}."))
    }

    pub fn has_completed(&self, phase: Phase) -> bool {
        self.completed & phase.bit() != 0
    }

    pub fn mark_completed(&mut self, phase: Phase) {
        self.completed |= phase.bit();
    }

    /// Hex SHA-256 over the names and little-endian values of the
    /// parameters whose names start with `prefix`.
    pub fn params_digest(&self, prefix: &str) -> String {
        let mut bytes = Vec::new();
        for (_, name, t) in self.store.iter().filter(|(_, n, _)| n.starts_with(prefix)) {
            bytes.extend_from_slice(name.as_bytes());
            for &x in t.data() {
                x.write_le(&mut bytes);
            }
        }
        hex_digest(&bytes)
    }

    /// Truncates, builds the graph and caches the selector inputs.
    pub fn prepare(&self, doc: &AnnotatedDocument, cooc: &CooccurrenceTable) -> Result<Example<S>> {
        let mut doc = doc.clone();
        doc.truncate(self.config.truncation());
        let graph = build_graph(&doc, cooc);
        let prepared = self.selector.prepare(&doc, &graph, &self.vocab, &self.entity_vocab)?;
        Ok(Example { doc, prepared })
    }

    pub fn prepare_all(&self, docs: &[AnnotatedDocument], cooc: &CooccurrenceTable) -> Result<Vec<Example<S>>> {
        docs.iter().map(|d| self.prepare(d, cooc)).collect()
    }

    pub fn generator_input(&self, doc: &AnnotatedDocument, sentences: &[usize], entities: &[usize]) -> Result<GeneratorInput> {
        GeneratorInput::new(doc, sentences, entities, &self.vocab, self.config.max_source)
    }
}
