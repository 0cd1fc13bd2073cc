use crate::autodiff::{ParamStore, Tape, Var};
use crate::corpus::{Vocab, START, STOP};
use crate::error::{Error, Result};
use crate::generator::{DecoderStep, EncodedInput, GeneratorInput, GeneratorModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

/// A decoded summary with per-token diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    /// Extended ids, STOP excluded.
    pub ids: Vec<usize>,
    pub tokens: Vec<String>,
    /// p_gen at each emitted token.
    pub p_gen: Vec<f64>,
    /// Whether the copy path contributed more than the vocabulary path.
    pub copied: Vec<bool>,
    /// Decoder steps taken, including the one that produced STOP.
    pub steps: usize,
    pub log_prob: f64,
}

impl Generated {
    /// Maximal runs of copied tokens as half-open `[start, end)` ranges.
    pub fn copied_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, &c) in self.copied.iter().chain([&false]).enumerate() {
            match (c, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    spans.push((s, i));
                    start = None;
                }
                _ => {}
            }
        }
        spans
    }
}

#[derive(Clone)]
struct Hyp {
    ids: Vec<usize>,
    p_gen: Vec<f64>,
    copied: Vec<bool>,
    log_prob: f64,
    h: Var,
    coverage: Var,
    steps: usize,
}

struct StepView {
    dist: Vec<f64>,
    p_gen: f64,
    vocab: Vec<f64>,
    copy: Vec<f64>,
}

fn view<S: Scalar>(tape: &Tape<'_, S>, step: &DecoderStep, enc: &EncodedInput) -> StepView {
    let dist = tape.value(step.dist).to_f64_vec();
    let p_gen = tape.item(step.p_gen).as_f64();
    let vocab = tape.value(step.p_vocab).to_f64_vec();
    let mut copy = vec![0.0; enc.extended_size];
    for (&w, &a) in enc.source_ext.iter().zip(tape.value(step.attention).data()) {
        copy[w] += a.as_f64();
    }
    StepView {
        dist,
        p_gen,
        vocab,
        copy,
    }
}

impl StepView {
    fn copied(&self, w: usize) -> bool {
        let gen = self.p_gen * self.vocab.get(w).copied().unwrap_or(0.0);
        (1.0 - self.p_gen) * self.copy[w] > gen
    }
}

/// Candidate indices sorted by probability, ties to the lower id.
fn ranked(dist: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[b].partial_cmp(&dist[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

impl GeneratorModel {
    /// Decodes until STOP or `max_steps`. Out-of-vocabulary source words
    /// can be emitted through the copy path.
    pub fn generate<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        input: &GeneratorInput,
        vocab: &Vocab,
        mode: DecodeMode,
    ) -> Result<Generated> {
        let beam = match mode {
            DecodeMode::Greedy => 1,
            DecodeMode::Beam(0) => return Err(Error::Config("beam width must be positive".into())),
            DecodeMode::Beam(b) => b,
        };
        let mut tape = Tape::with_params(store);
        let enc = self.encode_input(&mut tape, input)?;
        let coverage = self.initial_coverage(&mut tape, &enc);
        let mut live = vec![Hyp {
            ids: Vec::new(),
            p_gen: Vec::new(),
            copied: Vec::new(),
            log_prob: 0.0,
            h: enc.h0,
            coverage,
            steps: 0,
        }];
        let mut finished: Vec<Hyp> = Vec::new();
        for _ in 0..self.dims.max_steps {
            if live.is_empty() || finished.len() >= beam {
                break;
            }
            // (score, hyp index, token, view index, step)
            let mut candidates = Vec::new();
            let mut views = Vec::new();
            let mut steps = Vec::new();
            for (hi, hyp) in live.iter().enumerate() {
                let prev = hyp.ids.last().map_or(START, |&w| input.input_id(w));
                let step = self.decode_step(&mut tape, &enc, hyp.h, prev, hyp.coverage, None)?;
                let v = view(&tape, &step, &enc);
                for w in ranked(&v.dist, beam) {
                    let lp = v.dist[w].max(f64::MIN_POSITIVE).ln();
                    candidates.push((hyp.log_prob + lp, hi, w, views.len()));
                }
                views.push(v);
                steps.push(step);
            }
            candidates.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut next = Vec::new();
            for (score, hi, w, vi) in candidates.into_iter().take(beam) {
                let mut h = live[hi].clone();
                h.log_prob = score;
                h.steps += 1;
                h.h = steps[vi].h;
                h.coverage = steps[vi].coverage;
                if w == STOP {
                    finished.push(h);
                } else {
                    h.p_gen.push(views[vi].p_gen);
                    h.copied.push(views[vi].copied(w));
                    h.ids.push(w);
                    next.push(h);
                }
            }
            live = next;
        }
        finished.extend(live);
        let best = finished
            .into_iter()
            .reduce(|a, b| if b.log_prob > a.log_prob { b } else { a })
            .expect("at least one hypothesis");
        Ok(Generated {
            tokens: best.ids.iter().map(|&w| input.token(w, vocab).to_string()).collect(),
            ids: best.ids,
            p_gen: best.p_gen,
            copied: best.copied,
            steps: best.steps,
            log_prob: best.log_prob,
        })
    }
}
