use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One surface occurrence of an entity. `end` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub sent: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// A coreference cluster of mentions, optionally linked to a KG id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub kg_id: Option<String>,
    pub mentions: Vec<Mention>,
}

impl Entity {
    pub fn is_linked(&self) -> bool {
        self.kg_id.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// A pre-annotated document, one line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    pub entities: Vec<Entity>,
    pub summary: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_sentence_labels: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_entity_labels: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    pub max_sentences: usize,
    pub max_entities: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            max_sentences: 100,
            max_entities: 100,
        }
    }
}

impl AnnotatedDocument {
    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_mentions(&self) -> usize {
        self.entities.iter().map(|e| e.mentions.len()).sum()
    }

    /// Reference summary as one token stream.
    pub fn summary_tokens(&self) -> Vec<&str> {
        self.summary.iter().flatten().map(String::as_str).collect()
    }

    pub fn split_or_train(&self) -> Split {
        self.split.unwrap_or(Split::Train)
    }

    fn invalid(&self, msg: impl Into<String>) -> Error {
        Error::Validation {
            doc: self.id.clone(),
            msg: msg.into(),
        }
    }

    /// Checks spans and label lengths, and orders each entity's mentions
    /// by document position.
    pub fn validate(&mut self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(self.invalid("document has no sentences"));
        }
        for (j, entity) in self.entities.iter().enumerate() {
            if entity.mentions.is_empty() {
                return Err(self.invalid(format!("entity {j} ({}) has no mentions", entity.name)));
            }
            for m in &entity.mentions {
                if m.sent >= self.sentences.len() {
                    return Err(self.invalid(format!(
                        "entity {j} mention sentence {} out of range ({} sentences)",
                        m.sent,
                        self.sentences.len()
                    )));
                }
                if m.end < m.start {
                    return Err(self.invalid(format!(
                        "entity {j} mention end {} < start {}",
                        m.end, m.start
                    )));
                }
                if m.end == m.start || m.end > self.sentences[m.sent].len() {
                    return Err(self.invalid(format!(
                        "entity {j} mention span [{}, {}) out of range for sentence {} of length {}",
                        m.start,
                        m.end,
                        m.sent,
                        self.sentences[m.sent].len()
                    )));
                }
            }
        }
        if let Some(l) = &self.oracle_sentence_labels {
            if l.len() != self.sentences.len() {
                return Err(self.invalid("oracle_sentence_labels length differs from sentence count"));
            }
        }
        if let Some(l) = &self.oracle_entity_labels {
            if l.len() != self.entities.len() {
                return Err(self.invalid("oracle_entity_labels length differs from entity count"));
            }
        }
        for e in &mut self.entities {
            e.mentions.sort_by_key(|m| (m.sent, m.start, m.end));
        }
        Ok(())
    }

    /// Keeps the first `max_sentences` sentences and `max_entities`
    /// entities; mentions in dropped sentences go away, and so do
    /// entities left without mentions.
    pub fn truncate(&mut self, t: Truncation) {
        let m = self.sentences.len().min(t.max_sentences);
        self.sentences.truncate(m);
        if let Some(l) = &mut self.oracle_sentence_labels {
            l.truncate(m);
        }
        let mut entity_labels = self.oracle_entity_labels.take().map(|l| l.into_iter());
        let mut kept = Vec::new();
        let mut kept_labels = Vec::new();
        for mut e in std::mem::take(&mut self.entities) {
            let label = entity_labels.as_mut().and_then(Iterator::next);
            e.mentions.retain(|mention| mention.sent < m);
            if !e.mentions.is_empty() && kept.len() < t.max_entities {
                kept.push(e);
                kept_labels.extend(label);
            }
        }
        self.entities = kept;
        if entity_labels.is_some() {
            self.oracle_entity_labels = Some(kept_labels);
        }
    }

    /// Tokens of a mention as they appear in the sentence.
    pub fn mention_tokens(&self, m: &Mention) -> &[String] {
        &self.sentences[m.sent][m.start..m.end]
    }
}
