//! Fixtures and reference oracles shared by the integration tests.
#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhgnn_summ::autodiff::{ParamStore, Tape, Tensor, Var};
use rhgnn_summ::corpus::{AnnotatedDocument, CooccurrenceTable, Entity, EntityVocab, Mention, Vocab};
use rhgnn_summ::encoder::EncoderDims;
use rhgnn_summ::generator::GeneratorDims;
use rhgnn_summ::selector::SelectorDims;
use rhgnn_summ::training::TrainConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central-difference check over `per_param` random coordinates of every
/// parameter. Returns ‖g − n‖ / (‖g‖ + ‖n‖), or 0 when both vanish.
pub fn fd_rel_err(
    store: &ParamStore<f64>,
    per_param: usize,
    seed: u64,
    loss: impl Fn(&mut Tape<'_, f64>) -> Var,
) -> f64 {
    let analytic = {
        let mut tape = Tape::with_params(store);
        let l = loss(&mut tape);
        tape.backward(l).unwrap().param_grads(store.len()).unwrap()
    };
    let value = |s: &ParamStore<f64>| {
        let mut tape = Tape::with_params(s);
        let l = loss(&mut tape);
        tape.item(l)
    };
    let h = 1e-6;
    let mut r = rng(seed);
    let mut work = store.clone();
    let (mut d2, mut a2, mut n2) = (0.0f64, 0.0f64, 0.0f64);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let len = store.get(id).len();
        for j in sample(&mut r, len, per_param.min(len)).iter() {
            let x = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = x + h;
            let up = value(&work);
            work.get_mut(id).data_mut()[j] = x - h;
            let down = value(&work);
            work.get_mut(id).data_mut()[j] = x;
            let n = (up - down) / (2.0 * h);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[j]);
            d2 += (a - n) * (a - n);
            a2 += a * a;
            n2 += n * n;
        }
    }
    let denom = a2.sqrt() + n2.sqrt();
    if denom == 0.0 {
        0.0
    } else {
        d2.sqrt() / denom
    }
}

/// Tokens from a small closed vocabulary, so words repeat across sentences.
pub fn word(r: &mut impl Rng) -> String {
    format!("w{}", r.gen_range(0..24))
}

/// A valid document with `m` sentences and `n` entities. Every entity has
/// at least one single- or two-token mention, a KG id with probability
/// 0.8, and the summary reuses some document tokens.
pub fn random_doc(r: &mut impl Rng, id: &str, m: usize, n: usize) -> AnnotatedDocument {
    let sentences: Vec<Vec<String>> = (0..m)
        .map(|_| {
            let len = r.gen_range(3..7);
            (0..len).map(|_| word(r)).collect()
        })
        .collect();
    let entities = (0..n)
        .map(|j| {
            let mentions = (0..r.gen_range(1..3))
                .map(|_| {
                    let sent = r.gen_range(0..m);
                    let len = sentences[sent].len();
                    let start = r.gen_range(0..len);
                    let end = (start + r.gen_range(1..3)).min(len);
                    Mention {
                        sent,
                        start,
                        end,
                        text: sentences[sent][start..end].join(" "),
                    }
                })
                .collect();
            Entity {
                name: format!("E{j}"),
                kg_id: r.gen_bool(0.8).then(|| format!("Q{j}")),
                mentions,
            }
        })
        .collect();
    let summary = (0..r.gen_range(1..3))
        .map(|_| {
            let src = &sentences[r.gen_range(0..m)];
            let mut s: Vec<String> = src.iter().filter(|_| r.gen_bool(0.7)).cloned().collect();
            s.push(word(r));
            s
        })
        .collect();
    AnnotatedDocument {
        id: id.into(),
        sentences,
        entities,
        summary,
        split: None,
        oracle_sentence_labels: None,
        oracle_entity_labels: None,
    }
}

/// Co-occurrence counts for every pair among `Q0..Q{n}` with probability 0.6.
pub fn random_cooc(r: &mut impl Rng, n: usize) -> CooccurrenceTable {
    let mut t = CooccurrenceTable::new();
    for a in 0..n {
        for b in a + 1..n {
            if r.gen_bool(0.6) {
                t.insert(&format!("Q{a}"), &format!("Q{b}"), r.gen_range(1..20));
            }
        }
    }
    t
}

pub fn vocabs(doc: &AnnotatedDocument) -> (Vocab, EntityVocab) {
    (Vocab::build([doc], 1000), EntityVocab::build([doc], 1000))
}

pub fn tiny_encoder() -> EncoderDims {
    EncoderDims {
        word_emb: 4,
        entity_emb: 3,
        sent_hidden: 3,
        mention_hidden: 2,
        node_dim: 6,
    }
}

pub fn tiny_selector() -> SelectorDims {
    SelectorDims {
        encoder: tiny_encoder(),
        levels: 2,
        mlp_hidden: 5,
    }
}

pub fn tiny_generator(max_steps: usize) -> GeneratorDims {
    GeneratorDims {
        word_emb: 4,
        enc_hidden: 3,
        mention_hidden: 2,
        dec_hidden: 5,
        attn_dim: 4,
        max_source: 40,
        max_steps,
    }
}

/// Random tensor with entries in [-1, 1].
pub fn random_tensor(r: &mut impl Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
}

/// Symmetric nonnegative matrix with zero diagonal; each pair is an edge
/// with probability `p`, weighted in [0.5, 5) or exactly 1 when `binary`.
pub fn random_adjacency(r: &mut impl Rng, n: usize, p: f64, binary: bool) -> Tensor<f64> {
    let mut a = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if r.gen_bool(p) {
                let w = if binary { 1.0 } else { r.gen_range(0.5..5.0) };
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    a
}

/// Model sizes small enough for desk-scale training runs.
pub fn small_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    for (k, v) in [
        ("word_emb", "16"),
        ("entity_emb", "16"),
        ("sent_hidden", "16"),
        ("node_dim", "32"),
        ("mention_hidden", "8"),
        ("mlp_hidden", "32"),
        ("enc_hidden", "16"),
        ("dec_hidden", "32"),
        ("attn_dim", "32"),
        ("k_sent", "4"),
        ("k_ent", "3"),
        ("lr", "0.003"),
        ("dtype", "f32"),
    ] {
        c.set(k, v).unwrap();
    }
    c
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Perturbs every parameter by U(-0.1, 0.1) so finite differences are taken
/// at a generic point, away from ReLU kinks that zero-initialised biases
/// otherwise sit on exactly.
pub fn jitter(store: &mut ParamStore<f64>, r: &mut impl Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for x in store.get_mut(id).data_mut() {
            *x += r.gen_range(-0.1..0.1);
        }
    }
}
