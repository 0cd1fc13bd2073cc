//! Initial node features: a two-level BiRNN over words then sentences, and
//! a BiRNN over each entity's joined mentions combined with its KG row.

mod layers;
mod nodes;

pub use layers::{glorot, BiFinal, BiRnn, BiStates, GruCell, Linear};
pub use nodes::{mention_sequence, mention_sequence_ids, DocumentIds, EncoderDims, EntityNodes, NodeEncoder, NodeInit};

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::{ParamStore, Tape, Tensor};
    use crate::corpus::{AnnotatedDocument, Entity, EntityVocab, Mention, Vocab, UNK_ENTITY};
    use crate::testutil::fd_param_rel_err;

    fn dims() -> EncoderDims {
        EncoderDims {
            word_emb: 4,
            entity_emb: 3,
            sent_hidden: 3,
            mention_hidden: 2,
            node_dim: 6,
        }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn mention(sent: usize, start: usize, end: usize) -> Mention {
        Mention {
            sent,
            start,
            end,
            text: String::new(),
        }
    }

    fn tamil() -> AnnotatedDocument {
        AnnotatedDocument {
            id: "lk".into(),
            sentences: vec![
                toks("the Tigers attacked a base"),
                toks("LTTE denied it"),
                toks("Colombo responded"),
            ],
            entities: vec![
                Entity {
                    name: "Tamil Tigers".into(),
                    kg_id: Some("Tamil_Tigers".into()),
                    mentions: vec![mention(0, 1, 2), mention(1, 0, 1)],
                },
                Entity {
                    name: "Colombo".into(),
                    kg_id: None,
                    mentions: vec![mention(2, 0, 1)],
                },
            ],
            summary: vec![toks("Tigers attacked")],
            split: None,
            oracle_sentence_labels: None,
            oracle_entity_labels: None,
        }
    }

    fn setup(doc: &AnnotatedDocument) -> (ParamStore<f64>, NodeEncoder, DocumentIds) {
        let vocab = Vocab::build([doc], 100);
        let ev = EntityVocab::build([doc], 10);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = NodeEncoder::new(&mut store, "enc", dims(), vocab.len(), ev.len(), &mut rng).unwrap();
        let ids = DocumentIds::new(doc, &vocab, &ev);
        (store, enc, ids)
    }

    #[test]
    fn mention_sequence_joins_with_sep() {
        let d = tamil();
        assert_eq!(mention_sequence(&d, &d.entities[0]), vec!["Tigers", "<sep>", "LTTE"]);
        assert_eq!(mention_sequence(&d, &d.entities[1]), vec!["Colombo"]);
    }

    #[test]
    fn zero_weight_gru_halves_state() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = GruCell::new(&mut store, "g", 2, 2, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).fill(0.0);
        }
        let mut tape = Tape::with_params(&store);
        let x = tape.constant(Tensor::from_rows(&[vec![0.3, -2.0]]).unwrap());
        let gx = cell.project_input(&mut tape, x).unwrap();
        let h = tape.constant(Tensor::from_rows(&[vec![1.0, -4.0]]).unwrap());
        let next = cell.step(&mut tape, gx, h).unwrap();
        assert_eq!(tape.value(next).data(), &[0.5, -2.0]);
        let seq = tape.constant(Tensor::full(5, 2, 1.0));
        let states = cell.run(&mut tape, seq).unwrap();
        assert!(tape.value(states).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sentence_document() {
        let mut d = tamil();
        d.sentences.truncate(1);
        d.entities.truncate(0);
        let (store, enc, ids) = setup(&d);
        let mut tape = Tape::with_params(&store);
        let init = enc.encode(&mut tape, &ids, true).unwrap();
        assert_eq!(tape.shape(init.s0), (1, 6));
        assert!(init.entities.is_none());
    }

    #[test]
    fn sentence_order_matters_beyond_permutation() {
        let d = tamil();
        let (store, enc, ids) = setup(&d);
        let mut swapped = ids.clone();
        swapped.sentences.swap(0, 2);
        let mut tape = Tape::with_params(&store);
        let a = enc.encode_sentences(&mut tape, &ids).unwrap();
        let b = enc.encode_sentences(&mut tape, &swapped).unwrap();
        let (a, b) = (tape.value(a), tape.value(b));
        // Row 1 keeps its own sentence but sees different neighbours.
        let diff: f64 = a.row(1).iter().zip(b.row(1)).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn entity_nodes_shape_and_unk_row() {
        let d = tamil();
        let (store, enc, ids) = setup(&d);
        assert_eq!(ids.entity_rows[1], UNK_ENTITY);
        let mut tape = Tape::with_params(&store);
        let ents = enc.encode_entities(&mut tape, &ids, true).unwrap().unwrap();
        assert_eq!(tape.shape(ents.e0), (2, 6));
        assert_eq!(tape.shape(ents.e_w), (2, 4));
        assert_eq!(tape.value(ents.e_e).row(1), store.get(enc.entity_emb).row(UNK_ENTITY));
    }

    #[test]
    fn entity_level_toggle_changes_e0() {
        let d = tamil();
        let (store, enc, ids) = setup(&d);
        let mut tape = Tape::with_params(&store);
        let on = enc.encode_entities(&mut tape, &ids, true).unwrap().unwrap().e0;
        let off = enc.encode_entities(&mut tape, &ids, false).unwrap().unwrap().e0;
        assert!(tape.value(on).max_abs_diff(tape.value(off)) > 0.0);
    }

    #[test]
    fn empty_document_is_rejected() {
        let d = tamil();
        let (store, enc, mut ids) = setup(&d);
        ids.sentences.clear();
        let mut tape = Tape::with_params(&store);
        assert!(enc.encode_sentences(&mut tape, &ids).is_err());
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let d = tamil();
        let (store, enc, ids) = setup(&d);
        let err = fd_param_rel_err(&store, 6, 1, |tape| {
            let init = enc.encode(tape, &ids, true)?;
            let e0 = init.entities.unwrap().e0;
            let all = tape.concat_rows(&[init.s0, e0])?;
            let sq = tape.mul(all, all)?;
            let t = tape.tanh(sq);
            Ok(tape.sum(t))
        });
        assert!(err < 1e-6, "relative error {err}");
    }
}
