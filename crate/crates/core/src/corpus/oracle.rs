use crate::corpus::AnnotatedDocument;
use crate::error::{Error, Result};
use crate::rouge::{NgramCounts, RougeScore};

/// Mean of ROUGE-1 and ROUGE-2 F1 over sentence-bounded n-gram bags.
fn objective(cand: &[NgramCounts; 2], reference: &[NgramCounts; 2]) -> f64 {
    let f = |n: usize| {
        RougeScore::from_counts(cand[n].overlap(&reference[n]), cand[n].total(), reference[n].total()).f1
    };
    (f(0) + f(1)) / 2.0
}

fn bags(sentences: &[Vec<String>]) -> Vec<[NgramCounts; 2]> {
    sentences
        .iter()
        .map(|s| [NgramCounts::new(s, 1), NgramCounts::new(s, 2)])
        .collect()
}

fn union<'a>(items: impl IntoIterator<Item = &'a [NgramCounts; 2]>) -> [NgramCounts; 2] {
    let mut acc = [NgramCounts::default(), NgramCounts::default()];
    for it in items {
        acc[0].merge(&it[0]);
        acc[1].merge(&it[1]);
    }
    acc
}

/// Greedy extractive oracle. Each round adds the sentence with the largest
/// strictly positive gain; equal gains go to the lower index.
pub fn oracle_sentence_labels(doc: &AnnotatedDocument) -> Result<Vec<u8>> {
    if doc.summary.iter().all(Vec::is_empty) {
        return Err(Error::Validation {
            doc: doc.id.clone(),
            msg: "reference summary is empty".into(),
        });
    }
    let reference = union(&bags(&doc.summary));
    let sent_bags = bags(&doc.sentences);
    let mut labels = vec![0u8; doc.sentences.len()];
    let mut selected = union(std::iter::empty());
    let mut score = 0.0;
    loop {
        let mut best: Option<(usize, f64, [NgramCounts; 2])> = None;
        for (i, b) in sent_bags.iter().enumerate() {
            if labels[i] == 1 {
                continue;
            }
            let mut cand = selected.clone();
            cand[0].merge(&b[0]);
            cand[1].merge(&b[1]);
            let s = objective(&cand, &reference);
            if s > score && best.as_ref().map_or(true, |(_, bs, _)| s > *bs) {
                best = Some((i, s, cand));
            }
        }
        match best {
            Some((i, s, cand)) => {
                labels[i] = 1;
                score = s;
                selected = cand;
            }
            None => return Ok(labels),
        }
    }
}

fn lower(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// An entity is salient iff one of its mention strings occurs in some
/// summary sentence as a whole-token, case-insensitive run.
pub fn oracle_entity_labels(doc: &AnnotatedDocument) -> Vec<u8> {
    let summary: Vec<Vec<String>> = doc.summary.iter().map(|s| lower(s)).collect();
    doc.entities
        .iter()
        .map(|e| {
            let hit = e.mentions.iter().any(|m| {
                let needle: Vec<String> = if m.text.trim().is_empty() {
                    lower(doc.mention_tokens(m))
                } else {
                    m.text.split_whitespace().map(str::to_lowercase).collect()
                };
                summary.iter().any(|s| contains_run(s, &needle))
            });
            u8::from(hit)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entity, Mention};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn doc(sents: &[&str], summary: &[&str]) -> AnnotatedDocument {
        AnnotatedDocument {
            id: "t".into(),
            sentences: sents.iter().map(|s| toks(s)).collect(),
            entities: vec![],
            summary: summary.iter().map(|s| toks(s)).collect(),
            split: None,
            oracle_sentence_labels: None,
            oracle_entity_labels: None,
        }
    }

    fn entity(text: &str) -> Entity {
        Entity {
            name: text.into(),
            kg_id: None,
            mentions: vec![Mention {
                sent: 0,
                start: 0,
                end: 1,
                text: text.into(),
            }],
        }
    }

    #[test]
    fn reference_equal_to_a_sentence() {
        let d = doc(&["a b c", "the cat sat down", "x y"], &["the cat sat down"]);
        assert_eq!(oracle_sentence_labels(&d).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn disjoint_reference_selects_nothing() {
        let d = doc(&["a b", "c d"], &["q r s"]);
        assert_eq!(oracle_sentence_labels(&d).unwrap(), vec![0, 0]);
    }

    #[test]
    fn empty_reference_is_error() {
        let d = doc(&["a b"], &[]);
        assert!(oracle_sentence_labels(&d).is_err());
    }

    #[test]
    fn equal_gain_prefers_lower_index() {
        let d = doc(&["a b", "a b"], &["a b"]);
        assert_eq!(oracle_sentence_labels(&d).unwrap(), vec![1, 0]);
    }

    #[test]
    fn entity_label_matches_whole_tokens_only() {
        let mut d = doc(&["Tamil Tigers attacked"], &["the tamil tigers retreated", "Tigerskin rugs"]);
        d.entities = vec![entity("Tamil Tigers"), entity("Tigers"), entity("rug"), entity("Colombo")];
        assert_eq!(oracle_entity_labels(&d), vec![1, 1, 0, 0]);
        d.summary = vec![toks("Tigerskin")];
        assert_eq!(oracle_entity_labels(&d), vec![0, 0, 0, 0]);
    }

    #[test]
    fn blank_mention_text_uses_span() {
        let mut d = doc(&["Colombo port"], &["in colombo"]);
        let mut e = entity("");
        e.mentions[0].text = " ".into();
        d.entities = vec![e];
        assert_eq!(oracle_entity_labels(&d), vec![1]);
    }
}
