//! Self-critical connector between the selector and a frozen generator.
//!
//! One episode samples sentences and entities from the selector, generates
//! an abstract from the sample, rewards it with ROUGE-1 F1 against the
//! reference and reweights the cross entropy of the sampled selection:
//!
//! ```text
//! loss_rl  = R · (CE(y'^S, p̂^S) + λ^E · CE(y'^E, p̂^E))
//! loss_sel = loss_supervised + λ^RL · loss_rl
//! ```
//!
//! The generator is only run forward on its own tape, so none of its
//! parameters can receive gradient.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{ParamGrads, ParamStore, Tape, Tensor, Var};
use crate::corpus::{AnnotatedDocument, Vocab};
use crate::error::{Error, Result};
use crate::generator::{DecodeMode, GeneratorInput, GeneratorModel};
use crate::rouge::rouge_n;
use crate::scalar::Scalar;
use crate::selector::{
    cross_entropy_or_zero, label_distribution, rank_and_select, LossWeights, PreparedDoc, SelectorModel,
    SelectorOutput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Baseline {
    /// Multiply by the raw reward.
    #[default]
    None,
    /// Subtract the reward of the greedy (top-k) selection.
    Greedy,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::None => "none",
            Baseline::Greedy => "greedy",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Baseline::None),
            "greedy" | "greedy-baseline" => Ok(Baseline::Greedy),
            other => Err(Error::Config(format!("unknown RL baseline {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlConfig {
    pub lambda_rl: f64,
    pub k_sent: usize,
    pub k_ent: usize,
    pub baseline: Baseline,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            lambda_rl: 0.6,
            k_sent: 4,
            k_ent: 4,
            baseline: Baseline::None,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_rl >= 0.0) {
            return Err(Error::Config(format!("lambda_rl must be >= 0, got {}", self.lambda_rl)));
        }
        Ok(())
    }
}

/// Sampled selection. Targets are uniform over the sampled members.
#[derive(Debug, Clone, PartialEq)]
pub struct RlSample {
    /// Ascending sentence indices.
    pub sentences: Vec<usize>,
    /// Ascending entity indices.
    pub entities: Vec<usize>,
    pub num_sentences: usize,
    pub num_entities: usize,
}

fn indicator(members: &[usize], len: usize) -> Vec<u8> {
    let mut y = vec![0u8; len];
    for &i in members {
        y[i] = 1;
    }
    y
}

impl RlSample {
    pub fn sentence_target<S: Scalar>(&self) -> Option<Tensor<S>> {
        label_distribution(&indicator(&self.sentences, self.num_sentences))
    }

    pub fn entity_target<S: Scalar>(&self) -> Option<Tensor<S>> {
        label_distribution(&indicator(&self.entities, self.num_entities))
    }
}

/// Draws up to `k` distinct indices, each draw proportional to the
/// remaining probability mass. Zero-probability indices are never drawn,
/// so a `k` beyond the support returns the whole support. Output is
/// ascending.
pub fn sample_without_replacement(probs: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut left: Vec<(usize, f64)> = probs
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, p)| p > 0.0 && p.is_finite())
        .collect();
    let mut out = Vec::with_capacity(k.min(left.len()));
    while out.len() < k && !left.is_empty() {
        let total: f64 = left.iter().map(|&(_, p)| p).sum();
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = left.len() - 1;
        for (j, &(_, p)) in left.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = j;
                break;
            }
        }
        out.push(left.remove(pick).0);
    }
    out.sort_unstable();
    out
}

fn probs_of<S: Scalar>(tape: &Tape<'_, S>, v: Var) -> Vec<f64> {
    tape.value(v).to_f64_vec()
}

pub fn sample_actions<S: Scalar>(
    tape: &Tape<'_, S>,
    output: &SelectorOutput,
    k_sent: usize,
    k_ent: usize,
    rng: &mut impl Rng,
) -> RlSample {
    let ps = probs_of(tape, output.sentences.probs);
    let pe = output.entities.map(|d| probs_of(tape, d.probs)).unwrap_or_default();
    RlSample {
        sentences: sample_without_replacement(&ps, k_sent, rng),
        entities: sample_without_replacement(&pe, k_ent, rng),
        num_sentences: ps.len(),
        num_entities: pe.len(),
    }
}

/// Top-k selection used for inference and the greedy baseline.
pub fn greedy_actions<S: Scalar>(tape: &Tape<'_, S>, output: &SelectorOutput, k_sent: usize, k_ent: usize) -> RlSample {
    let ps = probs_of(tape, output.sentences.probs);
    let pe = output.entities.map(|d| probs_of(tape, d.probs)).unwrap_or_default();
    RlSample {
        sentences: rank_and_select(&ps, k_sent),
        entities: rank_and_select(&pe, k_ent),
        num_sentences: ps.len(),
        num_entities: pe.len(),
    }
}

/// `R · (CE^S + λ^E · CE^E)` on the sampled targets.
pub fn rl_loss<S: Scalar>(
    tape: &mut Tape<'_, S>,
    sample: &RlSample,
    output: &SelectorOutput,
    reward: f64,
    lambda_e: f64,
) -> Result<Var> {
    let ys = sample.sentence_target::<S>();
    let ye = sample.entity_target::<S>();
    let cs = cross_entropy_or_zero(tape, ys.as_ref(), Some(output.sentences.log_probs))?;
    let ce = cross_entropy_or_zero(tape, ye.as_ref(), output.entities.map(|d| d.log_probs))?;
    let ce = tape.scale(ce, S::from_f64_lossy(lambda_e));
    let inner = tape.add(cs, ce)?;
    Ok(tape.scale(inner, S::from_f64_lossy(reward)))
}

pub fn combined_selector_loss<S: Scalar>(tape: &mut Tape<'_, S>, base: Var, rl: Var, lambda_rl: f64) -> Result<Var> {
    let weighted = tape.scale(rl, S::from_f64_lossy(lambda_rl));
    tape.add(base, weighted)
}

/// ROUGE-1 F1 of a generated abstract against the whole reference.
pub fn reward<T: AsRef<str>>(generated: &[T], reference: &[Vec<String>]) -> f64 {
    let flat: Vec<&str> = reference.iter().flatten().map(String::as_str).collect();
    let cand: Vec<&str> = generated.iter().map(AsRef::as_ref).collect();
    rouge_n(&cand, &flat, 1).f1
}

/// Independent RNG stream for one episode, keyed by seed and document id.
pub fn episode_rng(seed: u64, doc_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(doc_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

/// One tab-separated training log line.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub doc_id: String,
    pub sentences: Vec<usize>,
    pub entities: Vec<usize>,
    pub reward: f64,
    /// Reward of the greedy selection when a baseline is used.
    pub baseline: Option<f64>,
    pub loss_supervised: f64,
    pub loss_rl: f64,
    pub loss_total: f64,
}

impl EpisodeLog {
    pub const HEADER: &'static str =
        "doc_id\tsentences\tentities\treward\tbaseline\tloss_supervised\tloss_rl\tloss_total";

    pub fn to_tsv(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.doc_id,
            join(&self.sentences),
            join(&self.entities),
            self.reward,
            self.baseline.map_or_else(|| "-".to_string(), |b| b.to_string()),
            self.loss_supervised,
            self.loss_rl,
            self.loss_total
        )
    }
}

#[derive(Debug, Clone)]
pub struct Episode<S> {
    /// Gradients for every parameter; only selector entries are nonzero.
    pub grads: ParamGrads<S>,
    pub log: EpisodeLog,
}

/// Everything an episode reads besides the parameters.
pub struct EpisodeInputs<'d, S> {
    pub prepared: &'d PreparedDoc<S>,
    pub doc: &'d AnnotatedDocument,
    pub vocab: &'d Vocab,
}

fn generate_reward<S: Scalar>(
    generator: &GeneratorModel,
    store: &ParamStore<S>,
    inputs: &EpisodeInputs<'_, S>,
    sample: &RlSample,
) -> Result<f64> {
    if sample.sentences.is_empty() {
        return Ok(0.0);
    }
    let input = GeneratorInput::new(
        inputs.doc,
        &sample.sentences,
        &sample.entities,
        inputs.vocab,
        generator.dims.max_source,
    )?;
    let out = generator.generate(store, &input, inputs.vocab, DecodeMode::Greedy)?;
    Ok(reward(&out.tokens, &inputs.doc.summary))
}

/// Runs one episode and returns the gradient of the combined selector
/// loss. The generator decodes on a separate tape, so it stays frozen.
pub fn run_episode<S: Scalar>(
    selector: &SelectorModel,
    generator: &GeneratorModel,
    store: &ParamStore<S>,
    inputs: &EpisodeInputs<'_, S>,
    weights: LossWeights,
    config: &RlConfig,
    rng: &mut impl Rng,
) -> Result<Episode<S>> {
    let mut tape = Tape::with_params(store);
    let (fwd, base) = selector.loss(&mut tape, inputs.prepared, weights)?;
    let sample = sample_actions(&tape, &fwd.output, config.k_sent, config.k_ent, rng);
    let r = generate_reward(generator, store, inputs, &sample)?;
    let baseline = match config.baseline {
        Baseline::None => None,
        Baseline::Greedy => {
            let g = greedy_actions(&tape, &fwd.output, config.k_sent, config.k_ent);
            Some(generate_reward(generator, store, inputs, &g)?)
        }
    };
    let effective = r - baseline.unwrap_or(0.0);
    let rl = rl_loss(&mut tape, &sample, &fwd.output, effective, weights.lambda_e)?;
    let total = combined_selector_loss(&mut tape, base.total, rl, config.lambda_rl)?;
    let grads = tape.backward(total)?.param_grads(store.len())?;
    let log = EpisodeLog {
        doc_id: inputs.doc.id.clone(),
        sentences: sample.sentences,
        entities: sample.entities,
        reward: r,
        baseline,
        loss_supervised: tape.item(base.total).as_f64(),
        loss_rl: tape.item(rl).as_f64(),
        loss_total: tape.item(total).as_f64(),
    };
    Ok(Episode { grads, log })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::selector::Dist;

    fn output(tape: &mut Tape<'_, f64>, s: &[f64], e: &[f64]) -> SelectorOutput {
        let dist = |tape: &mut Tape<'_, f64>, x: &[f64]| {
            let logits = tape.leaf(Tensor::row_vector(x).unwrap());
            Dist {
                probs: tape.softmax(logits, crate::autodiff::Axis::Row).unwrap(),
                log_probs: tape.log_softmax(logits, crate::autodiff::Axis::Row).unwrap(),
            }
        };
        let sentences = dist(tape, s);
        let entities = Some(dist(tape, e));
        SelectorOutput {
            sentences,
            entities,
            relatedness: None,
        }
    }

    #[test]
    fn peaked_distribution_is_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = [1e-9, 1.0 - 2e-9, 1e-9];
        let hits = (0..1000)
            .filter(|_| sample_without_replacement(&p, 1, &mut rng) == vec![1])
            .count();
        assert!(hits >= 999);
    }

    #[test]
    fn full_support_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            assert_eq!(sample_without_replacement(&[0.25; 4], 4, &mut rng), vec![0, 1, 2, 3]);
        }
        assert_eq!(sample_without_replacement(&[0.5, 0.0, 0.5], 3, &mut rng), vec![0, 2]);
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..10).map(|_| sample_without_replacement(&[0.1, 0.2, 0.3, 0.4], 2, &mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn loss_is_linear_in_reward() {
        let mut tape = Tape::new();
        let out = output(&mut tape, &[0.1, 0.5, -0.2], &[0.3, 0.0]);
        let sample = RlSample {
            sentences: vec![0, 2],
            entities: vec![1],
            num_sentences: 3,
            num_entities: 2,
        };
        let zero = rl_loss(&mut tape, &sample, &out, 0.0, 0.42).unwrap();
        assert_eq!(tape.item(zero), 0.0);
        let one = rl_loss(&mut tape, &sample, &out, 0.7, 0.42).unwrap();
        let two = rl_loss(&mut tape, &sample, &out, 1.4, 0.42).unwrap();
        assert!((tape.item(two) - 2.0 * tape.item(one)).abs() < 1e-14);

        // λ^E = 0 leaves the sentence cross entropy only.
        let s_only = rl_loss(&mut tape, &sample, &out, 1.0, 0.0).unwrap();
        let lp = tape.value(out.sentences.log_probs).data().to_vec();
        assert!((tape.item(s_only) + 0.5 * (lp[0] + lp[2])).abs() < 1e-14);
    }

    #[test]
    fn zero_lambda_rl_keeps_base() {
        let mut tape = Tape::new();
        let base = tape.leaf(Tensor::scalar(1.25));
        let rl = tape.leaf(Tensor::scalar(3.0));
        let t = combined_selector_loss(&mut tape, base, rl, 0.0).unwrap();
        assert_eq!(tape.item(t), 1.25);
        let t = combined_selector_loss(&mut tape, base, rl, 0.6).unwrap();
        assert!(tape.item(t) > 1.25 && tape.item(t) > 3.0 * 0.6);
    }

    #[test]
    fn reward_is_rouge1_f1() {
        let reference = vec![vec!["the".to_string(), "cat".to_string()]];
        assert!((reward(&["the", "cat", "sat"], &reference) - 0.8).abs() < 1e-12);
        assert_eq!(reward::<&str>(&[], &reference), 0.0);
    }

    #[test]
    fn episode_streams_differ_by_document() {
        let a: u64 = episode_rng(3, "a").gen();
        let b: u64 = episode_rng(3, "b").gen();
        assert_ne!(a, b);
        assert_eq!(a, episode_rng(3, "a").gen::<u64>());
    }

    #[test]
    fn tsv_line() {
        let log = EpisodeLog {
            doc_id: "d1".into(),
            sentences: vec![0, 3],
            entities: vec![],
            reward: 0.5,
            baseline: None,
            loss_supervised: 1.0,
            loss_rl: 0.25,
            loss_total: 1.15,
        };
        assert_eq!(log.to_tsv(), "d1\t0,3\t\t0.5\t-\t1\t0.25\t1.15");
        assert_eq!(EpisodeLog::HEADER.split('\t').count(), log.to_tsv().split('\t').count());
        assert_eq!("greedy".parse::<Baseline>().unwrap(), Baseline::Greedy);
        assert!("mean".parse::<Baseline>().is_err());
    }
}
