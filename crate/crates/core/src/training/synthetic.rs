//! Planted-signal corpus for desk-scale learning checks.
//!
//! Each document has `planted` salient sentences at random positions. A
//! salient sentence mentions one of the `salient_entities` and otherwise
//! uses words from a salient lexicon; filler sentences draw from a
//! disjoint filler lexicon and mention the remaining entities. The
//! reference summary repeats each salient sentence minus one word, so
//! filler sentences share no token with it and the oracle labels coincide
//! with the planted ones.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnnotatedDocument, CooccurrenceTable, Entity, Mention, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub docs: usize,
    pub sentences: usize,
    pub entities: usize,
    pub planted: usize,
    pub salient_entities: usize,
    /// Words per sentence besides the entity mention.
    pub words: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            docs: 200,
            sentences: 10,
            entities: 6,
            planted: 4,
            salient_entities: 3,
            words: 5,
            seed: 7,
        }
    }
}

/// Generated documents with the ground truth they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub docs: Vec<AnnotatedDocument>,
    pub cooc: CooccurrenceTable,
    /// Per document: planted sentence indices (ascending).
    pub planted_sentences: Vec<Vec<usize>>,
    /// Per document: salient entity indices (ascending).
    pub salient_entities: Vec<Vec<usize>>,
}

const LEXICON: usize = 80;
const NAMES: usize = 40;

fn pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let s = self;
        let ok = s.sentences > 0
            && s.planted > 0
            && s.planted <= s.sentences
            && s.salient_entities > 0
            && s.salient_entities <= s.entities
            && s.words > 1
            && s.planted * s.words <= LEXICON
            && (s.sentences - s.planted) * s.words <= LEXICON
            && s.entities <= NAMES
            && (s.planted >= s.salient_entities)
            && (s.entities == s.salient_entities || s.sentences > s.planted);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("infeasible synthetic corpus shape: {s:?}")))
        }
    }

    /// Deterministic in `seed`. Splits are 80% train, 10% dev, 10% test.
    pub fn generate(&self) -> Result<SyntheticCorpus> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let salient_words = pool("key", LEXICON);
        let filler_words = pool("pad", LEXICON);
        let salient_names = pool("Hero", NAMES);
        let filler_names = pool("Extra", NAMES);
        let mut cooc = CooccurrenceTable::new();
        for i in 0..NAMES {
            for j in i + 1..NAMES {
                cooc.insert(&format!("Q{}", salient_names[i]), &format!("Q{}", salient_names[j]), 50);
            }
        }
        let mut out = SyntheticCorpus {
            docs: Vec::with_capacity(self.docs),
            cooc,
            planted_sentences: Vec::new(),
            salient_entities: Vec::new(),
        };
        for d in 0..self.docs {
            let doc = self.document(d, &mut rng, &salient_words, &filler_words, &salient_names, &filler_names);
            out.planted_sentences.push(doc.1);
            out.salient_entities.push(doc.2);
            out.docs.push(doc.0);
        }
        Ok(out)
    }

    fn document(
        &self,
        d: usize,
        rng: &mut ChaCha8Rng,
        salient_words: &[String],
        filler_words: &[String],
        salient_names: &[String],
        filler_names: &[String],
    ) -> (AnnotatedDocument, Vec<usize>, Vec<usize>) {
        let m = self.sentences;
        let n = self.entities;
        let mut positions: Vec<usize> = (0..m).collect();
        positions.shuffle(rng);
        let mut planted: Vec<usize> = positions[..self.planted].to_vec();
        planted.sort_unstable();

        // Entity slots: salient ones first in a shuffled order.
        let mut slots: Vec<usize> = (0..n).collect();
        slots.shuffle(rng);
        let salient: Vec<usize> = {
            let mut s = slots[..self.salient_entities].to_vec();
            s.sort_unstable();
            s
        };
        let others: Vec<usize> = slots[self.salient_entities..].to_vec();
        let names_s: Vec<&String> = salient_names.choose_multiple(rng, self.salient_entities).collect();
        let names_f: Vec<&String> = filler_names.choose_multiple(rng, n - self.salient_entities).collect();
        let mut name_of = vec![String::new(); n];
        for (k, &e) in salient.iter().enumerate() {
            name_of[e] = names_s[k].clone();
        }
        for (k, &e) in others.iter().enumerate() {
            name_of[e] = names_f[k].clone();
        }

        let mut sw: Vec<&String> = salient_words.choose_multiple(rng, self.planted * self.words).collect();
        let mut fw: Vec<&String> = filler_words
            .choose_multiple(rng, (m - self.planted) * self.words)
            .collect();
        let mut sentences = Vec::with_capacity(m);
        let mut mentions: Vec<Vec<Mention>> = vec![Vec::new(); n];
        let mut summary = Vec::new();
        let (mut pk, mut fk) = (0, 0);
        for i in 0..m {
            let is_planted = planted.binary_search(&i).is_ok();
            let (entity, words): (Option<usize>, Vec<String>) = if is_planted {
                let e = if pk < salient.len() {
                    salient[pk]
                } else {
                    salient[rng.gen_range(0..salient.len())]
                };
                pk += 1;
                (Some(e), sw.drain(..self.words).cloned().collect())
            } else {
                let e = (!others.is_empty()).then(|| others[fk % others.len()]);
                fk += 1;
                (e, fw.drain(..self.words).cloned().collect())
            };
            let mut tokens = words;
            if let Some(e) = entity {
                let at = rng.gen_range(0..=tokens.len());
                tokens.insert(at, name_of[e].clone());
                mentions[e].push(Mention {
                    sent: i,
                    start: at,
                    end: at + 1,
                    text: name_of[e].clone(),
                });
            }
            if is_planted {
                // Drop one non-entity word for the reference.
                let mut s = tokens.clone();
                let removable: Vec<usize> = (0..s.len()).filter(|&k| Some(k) != mentions_at(&mentions, entity, i)).collect();
                s.remove(removable[rng.gen_range(0..removable.len())]);
                summary.push(s);
            }
            sentences.push(tokens);
        }
        let entities = (0..n)
            .map(|e| Entity {
                name: name_of[e].clone(),
                kg_id: Some(format!("Q{}", name_of[e])),
                mentions: std::mem::take(&mut mentions[e]),
            })
            .collect();
        let split = match d % 10 {
            8 => Split::Dev,
            9 => Split::Test,
            _ => Split::Train,
        };
        let doc = AnnotatedDocument {
            id: format!("syn{d:05}"),
            sentences,
            entities,
            summary,
            split: Some(split),
            oracle_sentence_labels: None,
            oracle_entity_labels: None,
        };
        (doc, planted, salient)
    }
}

fn mentions_at(mentions: &[Vec<Mention>], entity: Option<usize>, sent: usize) -> Option<usize> {
    let e = entity?;
    mentions[e].iter().find(|m| m.sent == sent).map(|m| m.start)
}
