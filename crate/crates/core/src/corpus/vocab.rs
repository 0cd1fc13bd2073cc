use std::collections::HashMap;

use crate::corpus::AnnotatedDocument;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const STOP: usize = 3;
pub const SEP: usize = 4;

const SPECIALS: [&str; 5] = ["<pad>", "<unk>", "<s>", "</s>", "<sep>"];

/// Lowercased word vocabulary with the five special tokens first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Most frequent tokens of `docs` (sentences and summaries), ties broken
    /// lexicographically, capped at `max_size` entries including specials.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a AnnotatedDocument>, max_size: usize) -> Self {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            for tok in doc.sentences.iter().chain(&doc.summary).flatten() {
                *freq.entry(tok.to_lowercase()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = freq
            .into_iter()
            .filter(|(t, _)| !SPECIALS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = max_size.saturating_sub(SPECIALS.len());
        Self::from_tokens(ranked.into_iter().take(room).map(|(t, _)| t))
    }

    /// Specials followed by `tokens` in the given order.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in SPECIALS.iter().map(|s| s.to_string()).chain(tokens) {
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(&token.to_lowercase()).copied()
    }

    /// Index of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Non-special tokens in index order.
    pub fn words(&self) -> &[String] {
        &self.tokens[SPECIALS.len()..]
    }
}

/// Linked-entity vocabulary; index 0 is the UNK entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityVocab {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

pub const UNK_ENTITY: usize = 0;

impl EntityVocab {
    pub fn from_ids(kg_ids: impl IntoIterator<Item = String>) -> Self {
        let mut v = EntityVocab {
            ids: vec!["<unk-entity>".into()],
            index: HashMap::new(),
        };
        for id in kg_ids {
            if !v.index.contains_key(&id) {
                v.index.insert(id.clone(), v.ids.len());
                v.ids.push(id);
            }
        }
        v
    }

    /// Most frequent linked ids of `docs`, capped at `max_size` including UNK.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a AnnotatedDocument>, max_size: usize) -> Self {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            for e in &doc.entities {
                if let Some(id) = &e.kg_id {
                    *freq.entry(id.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<_> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_ids(
            ranked
                .into_iter()
                .take(max_size.saturating_sub(1))
                .map(|(id, _)| id.to_string()),
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Row for a KG id; unlinked and unknown entities map to UNK.
    pub fn lookup(&self, kg_id: Option<&str>) -> usize {
        kg_id
            .and_then(|id| self.index.get(id).copied())
            .unwrap_or(UNK_ENTITY)
    }

    /// Linked ids in index order (excluding UNK).
    pub fn kg_ids(&self) -> &[String] {
        &self.ids[1..]
    }
}
