use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Adam, ParamGrads, ParamId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::generator::{DecodeMode, GeneratorInput};
use crate::rl::{episode_rng, run_episode, EpisodeInputs, EpisodeLog};
use crate::scalar::Scalar;
use crate::selector::rank_and_select;
use crate::training::checkpoint::Checkpoint;
use crate::training::eval::{mean_rouge, precision_at_k, select};
use crate::training::model::{Example, Model, Phase};

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory for the checkpoint series and metric CSV; nothing is
    /// written when absent.
    pub out_dir: Option<PathBuf>,
}

/// Rows of the per-step metric CSV; dev columns are empty between
/// evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricLog {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl MetricLog {
    fn new(loss_columns: &[&str], dev_columns: &[&str]) -> Self {
        let header = std::iter::once("step")
            .chain(loss_columns.iter().copied())
            .chain(dev_columns.iter().copied())
            .map(String::from)
            .collect();
        MetricLog { header, rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub phase: Phase,
    pub steps: u64,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
    pub metrics: MetricLog,
    /// Step whose parameters the model ends with, when a dev set was used.
    pub best_step: Option<u64>,
    pub stopped_early: bool,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: Option<PathBuf>,
    pub episodes: Vec<EpisodeLog>,
}

struct DocOut<S> {
    id: String,
    grads: ParamGrads<S>,
    /// Total loss first, then the phase's components.
    values: Vec<f64>,
    episode: Option<EpisodeLog>,
}

struct DevScore {
    /// Compared across evaluations; see `higher_is_better`.
    criterion: f64,
    values: Vec<f64>,
}

trait PhaseLogic<S: Scalar>: Sync {
    fn phase(&self) -> Phase;
    fn loss_columns(&self) -> &'static [&'static str];
    fn dev_columns(&self) -> &'static [&'static str];
    fn higher_is_better(&self) -> bool;
    fn doc_step(&self, model: &Model<S>, ex: &Example<S>, step: u64) -> Result<DocOut<S>>;
    fn dev(&self, model: &Model<S>, dev: &[Example<S>]) -> Result<DevScore>;
}

fn fmt_values(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| format!("{x}")).collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn save<S: Scalar>(
    model: &Model<S>,
    phase: Phase,
    step: u64,
    adam: &Adam<S>,
    rng: &ChaCha8Rng,
    dir: &Path,
    name: &str,
) -> Result<PathBuf> {
    let path = dir.join(name);
    Checkpoint::capture(model, phase, step, Some(adam), rng).save(&path)?;
    Ok(path)
}

fn run_phase<S: Scalar>(
    model: &mut Model<S>,
    logic: &dyn PhaseLogic<S>,
    train: &[&Example<S>],
    dev: &[Example<S>],
    opts: &TrainOptions,
) -> Result<TrainReport> {
    let phase = logic.phase();
    let cfg = model.config.clone();
    let params: Vec<ParamId> = match phase {
        Phase::Generator => model.generator_params(),
        Phase::Selector | Phase::Rl => model.selector_params(),
    };
    if train.is_empty() && cfg.max_steps > 0 {
        return Err(Error::Config(format!("no usable training documents for the {phase} phase")));
    }
    let salt = match phase {
        Phase::Selector => 0x5e1,
        Phase::Generator => 0x6e4,
        Phase::Rl => 0x71,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt);
    let mut adam = Adam::new(cfg.adam(), &model.store);
    let mut report = TrainReport {
        phase,
        steps: 0,
        losses: Vec::new(),
        metrics: MetricLog::new(logic.loss_columns(), logic.dev_columns()),
        best_step: None,
        stopped_early: false,
        checkpoints: Vec::new(),
        final_checkpoint: None,
        episodes: Vec::new(),
    };
    if let Some(dir) = &opts.out_dir {
        ensure_dir(dir)?;
    }
    if cfg.max_steps == 0 {
        model.mark_completed(phase);
        if let Some(dir) = &opts.out_dir {
            let p = save(model, phase, 0, &adam, &rng, dir, &format!("{phase}-step000000.ckpt"))?;
            report.checkpoints.push(p.clone());
            report.final_checkpoint = Some(p);
        }
        return Ok(report);
    }
    if let Some(dir) = &opts.out_dir {
        report
            .checkpoints
            .push(save(model, phase, 0, &adam, &rng, dir, &format!("{phase}-step000000.ckpt"))?);
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut best: Option<(f64, u64, ParamStore<S>)> = None;
    let mut bad_evals = 0;
    let n_dev = logic.dev_columns().len();
    for step in 1..=cfg.max_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let frozen: &Model<S> = model;
        let mut outs: Vec<DocOut<S>> = batch
            .par_iter()
            .map(|&i| logic.doc_step(frozen, train[i], step))
            .collect::<Result<_>>()?;
        // Reduction order is fixed by document id, independent of threads.
        let mut idx: Vec<usize> = (0..outs.len()).collect();
        idx.sort_by(|&a, &b| outs[a].id.cmp(&outs[b].id).then(a.cmp(&b)));
        let mut grads = ParamGrads::new(model.store.len());
        let mut values = vec![0.0; outs[0].values.len()];
        for &k in &idx {
            grads.merge(&outs[k].grads)?;
            for (acc, v) in values.iter_mut().zip(&outs[k].values) {
                *acc += v;
            }
        }
        let b = outs.len() as f64;
        values.iter_mut().for_each(|v| *v /= b);
        grads.scale(S::from_f64_lossy(1.0 / b));
        grads.clip_global_norm(S::from_f64_lossy(cfg.clip_norm));
        adam.step(&mut model.store, &grads, &params)?;
        for o in outs.iter_mut() {
            report.episodes.extend(o.episode.take());
        }
        report.losses.push(values[0]);
        report.steps = step;
        let mut row = std::iter::once(step.to_string()).chain(fmt_values(&values)).collect::<Vec<_>>();

        let eval_now = step % cfg.eval_interval == 0 || step == cfg.max_steps;
        let mut stop = false;
        if eval_now && !dev.is_empty() {
            let score = logic.dev(model, dev)?;
            row.extend(fmt_values(&score.values));
            let improved = match &best {
                None => true,
                Some((c, _, _)) if logic.higher_is_better() => score.criterion > *c,
                Some((c, _, _)) => score.criterion < *c,
            };
            log::info!("{phase} step {step}: loss {:.5}, dev {:?}", values[0], score.values);
            if improved {
                best = Some((score.criterion, step, model.store.clone()));
                bad_evals = 0;
            } else {
                bad_evals += 1;
                stop = bad_evals >= cfg.patience.max(1);
            }
        } else {
            row.extend(std::iter::repeat(String::new()).take(n_dev));
        }
        report.metrics.rows.push(row);
        if eval_now {
            if let Some(dir) = &opts.out_dir {
                report
                    .checkpoints
                    .push(save(model, phase, step, &adam, &rng, dir, &format!("{phase}-step{step:06}.ckpt"))?);
            }
        }
        if stop {
            report.stopped_early = true;
            log::info!("{phase}: early stop at step {step}");
            break;
        }
    }
    if let Some((_, step, store)) = best {
        model.store = store;
        report.best_step = Some(step);
    }
    model.mark_completed(phase);
    if let Some(dir) = &opts.out_dir {
        if report.checkpoints.last().map_or(true, |p| !p.ends_with(format!("{phase}-step{:06}.ckpt", report.steps))) {
            report.checkpoints.push(save(
                model,
                phase,
                report.steps,
                &adam,
                &rng,
                dir,
                &format!("{phase}-step{:06}.ckpt", report.steps),
            )?);
        }
        let fin = save(model, phase, report.steps, &adam, &rng, dir, &format!("{phase}.ckpt"))?;
        report.final_checkpoint = Some(fin);
        let csv = dir.join(format!("{phase}-metrics.csv"));
        std::fs::write(&csv, report.metrics.to_csv()).map_err(|e| Error::io(&csv, e))?;
        if phase == Phase::Rl {
            let tsv = dir.join("rl-episodes.tsv");
            let mut text = String::from(EpisodeLog::HEADER);
            text.push('\n');
            for e in &report.episodes {
                text.push_str(&e.to_tsv());
                text.push('\n');
            }
            std::fs::write(&tsv, text).map_err(|e| Error::io(&tsv, e))?;
        }
    }
    Ok(report)
}

struct SelectorPhase;

impl<S: Scalar> PhaseLogic<S> for SelectorPhase {
    fn phase(&self) -> Phase {
        Phase::Selector
    }
    fn loss_columns(&self) -> &'static [&'static str] {
        &["loss", "loss_sentence", "loss_entity", "loss_relatedness"]
    }
    fn dev_columns(&self) -> &'static [&'static str] {
        &["dev_loss", "dev_sentence_precision", "dev_entity_precision"]
    }
    fn higher_is_better(&self) -> bool {
        false
    }
    fn doc_step(&self, model: &Model<S>, ex: &Example<S>, _step: u64) -> Result<DocOut<S>> {
        let mut tape = Tape::with_params(&model.store);
        let (_, l) = model.selector.loss(&mut tape, &ex.prepared, model.config.loss_weights())?;
        let grads = tape.backward(l.total)?.param_grads(model.store.len())?;
        let values = [l.total, l.sentence, l.entity, l.relatedness]
            .iter()
            .map(|&v| tape.item(v).as_f64())
            .collect();
        Ok(DocOut {
            id: ex.doc.id.clone(),
            grads,
            values,
            episode: None,
        })
    }
    fn dev(&self, model: &Model<S>, dev: &[Example<S>]) -> Result<DevScore> {
        let per: Vec<(f64, Option<f64>, Option<f64>)> = dev
            .par_iter()
            .filter(|ex| ex.prepared.labels.is_some())
            .map(|ex| {
                let mut tape = Tape::with_params(&model.store);
                let (fwd, l) = model.selector.loss(&mut tape, &ex.prepared, model.config.loss_weights())?;
                let (ls, le) = ex.prepared.labels.as_ref().unwrap();
                let ps = tape.value(fwd.output.sentences.probs).to_f64_vec();
                let pe = fwd.output.entities.map(|d| tape.value(d.probs).to_f64_vec()).unwrap_or_default();
                let (ks, ke) = (model.config.k_sent, model.config.k_ent);
                Ok((
                    tape.item(l.total).as_f64(),
                    precision_at_k(&rank_and_select(&ps, ks), ls, ks),
                    precision_at_k(&rank_and_select(&pe, ke), le, ke),
                ))
            })
            .collect::<Result<_>>()?;
        let avg = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let loss = avg(per.iter().map(|p| p.0).collect());
        Ok(DevScore {
            criterion: loss,
            values: vec![
                loss,
                avg(per.iter().filter_map(|p| p.1).collect()),
                avg(per.iter().filter_map(|p| p.2).collect()),
            ],
        })
    }
}

/// Oracle selection used to train the generator: labelled sentences and
/// entities, or the first `k_sent` sentences when no sentence is labelled.
pub fn oracle_selection<S: Scalar>(model: &Model<S>, ex: &Example<S>) -> (Vec<usize>, Vec<usize>) {
    let m = ex.doc.num_sentences();
    match &ex.prepared.labels {
        Some((ls, le)) if ls.contains(&1) => (
            (0..m).filter(|&i| ls[i] == 1).collect(),
            (0..le.len()).filter(|&j| le[j] == 1).collect(),
        ),
        other => (
            (0..m.min(model.config.k_sent)).collect(),
            other
                .as_ref()
                .map(|(_, le)| (0..le.len()).filter(|&j| le[j] == 1).collect())
                .unwrap_or_default(),
        ),
    }
}

fn reference_tokens<S>(ex: &Example<S>) -> Vec<String> {
    ex.doc.summary.iter().flatten().cloned().collect()
}

fn generator_input<S: Scalar>(model: &Model<S>, ex: &Example<S>) -> Result<GeneratorInput> {
    let (s, e) = oracle_selection(model, ex);
    model.generator_input(&ex.doc, &s, &e)
}

struct GeneratorPhase;

impl<S: Scalar> PhaseLogic<S> for GeneratorPhase {
    fn phase(&self) -> Phase {
        Phase::Generator
    }
    fn loss_columns(&self) -> &'static [&'static str] {
        &["loss", "loss_nll", "loss_coverage"]
    }
    fn dev_columns(&self) -> &'static [&'static str] {
        &["dev_rouge1", "dev_rouge2", "dev_rougeL"]
    }
    fn higher_is_better(&self) -> bool {
        true
    }
    fn doc_step(&self, model: &Model<S>, ex: &Example<S>, _step: u64) -> Result<DocOut<S>> {
        let input = generator_input(model, ex)?;
        let targets = input.target_ids(&reference_tokens(ex), &model.vocab, model.config.max_decode_steps);
        let mut tape = Tape::with_params(&model.store);
        let l = model.generator.loss(&mut tape, &input, &targets, model.config.lambda_cov)?;
        let grads = tape.backward(l.total)?.param_grads(model.store.len())?;
        let values = [l.total, l.nll, l.coverage]
            .iter()
            .map(|&v| tape.item(v).as_f64())
            .collect();
        Ok(DocOut {
            id: ex.doc.id.clone(),
            grads,
            values,
            episode: None,
        })
    }
    fn dev(&self, model: &Model<S>, dev: &[Example<S>]) -> Result<DevScore> {
        let pairs: Vec<(Vec<String>, Vec<String>)> = dev
            .par_iter()
            .map(|ex| {
                let input = generator_input(model, ex)?;
                let out = model.generator.generate(&model.store, &input, &model.vocab, DecodeMode::Greedy)?;
                Ok((out.tokens, reference_tokens(ex)))
            })
            .collect::<Result<_>>()?;
        let r = mean_rouge(&pairs);
        Ok(DevScore {
            criterion: r.rouge1.f1,
            values: vec![r.rouge1.f1, r.rouge2.f1, r.rouge_l.f1],
        })
    }
}

struct RlPhase;

impl<S: Scalar> PhaseLogic<S> for RlPhase {
    fn phase(&self) -> Phase {
        Phase::Rl
    }
    fn loss_columns(&self) -> &'static [&'static str] {
        &["loss", "loss_supervised", "loss_rl", "reward"]
    }
    fn dev_columns(&self) -> &'static [&'static str] {
        &["dev_rouge1", "dev_rouge2", "dev_rougeL"]
    }
    fn higher_is_better(&self) -> bool {
        true
    }
    fn doc_step(&self, model: &Model<S>, ex: &Example<S>, step: u64) -> Result<DocOut<S>> {
        let mut rng = episode_rng(model.config.seed.wrapping_add(step), &ex.doc.id);
        let inputs = EpisodeInputs {
            prepared: &ex.prepared,
            doc: &ex.doc,
            vocab: &model.vocab,
        };
        let ep = run_episode(
            &model.selector,
            &model.generator,
            &model.store,
            &inputs,
            model.config.loss_weights(),
            &model.config.rl_config(),
            &mut rng,
        )?;
        let l = &ep.log;
        Ok(DocOut {
            id: ex.doc.id.clone(),
            values: vec![l.loss_total, l.loss_supervised, l.loss_rl, l.reward],
            grads: ep.grads,
            episode: Some(ep.log),
        })
    }
    fn dev(&self, model: &Model<S>, dev: &[Example<S>]) -> Result<DevScore> {
        let pairs: Vec<(Vec<String>, Vec<String>)> = dev
            .par_iter()
            .map(|ex| {
                let sel = select(model, ex)?;
                let input = model.generator_input(&ex.doc, &sel.sentences, &sel.entities)?;
                let out = model.generator.generate(&model.store, &input, &model.vocab, DecodeMode::Greedy)?;
                Ok((out.tokens, reference_tokens(ex)))
            })
            .collect::<Result<_>>()?;
        let r = mean_rouge(&pairs);
        Ok(DevScore {
            criterion: r.rouge1.f1,
            values: vec![r.rouge1.f1, r.rouge2.f1, r.rouge_l.f1],
        })
    }
}

fn labelled<S>(examples: &[Example<S>]) -> Vec<&Example<S>> {
    examples.iter().filter(|e| e.prepared.labels.is_some()).collect()
}

/// Supervised selector training on oracle labels.
pub fn train_selector<S: Scalar>(
    model: &mut Model<S>,
    train: &[Example<S>],
    dev: &[Example<S>],
    opts: &TrainOptions,
) -> Result<TrainReport> {
    let docs = labelled(train);
    let dev: Vec<Example<S>> = dev.iter().filter(|e| e.prepared.labels.is_some()).cloned().collect();
    run_phase(model, &SelectorPhase, &docs, &dev, opts)
}

/// Teacher-forced generator training on oracle selections. Requires a
/// trained selector.
pub fn train_generator<S: Scalar>(
    model: &mut Model<S>,
    train: &[Example<S>],
    dev: &[Example<S>],
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if !model.has_completed(Phase::Selector) {
        return Err(Error::Config("generator training needs a selector checkpoint".into()));
    }
    let has_summary = |e: &&Example<S>| e.doc.summary.iter().any(|s| !s.is_empty());
    let docs: Vec<&Example<S>> = train.iter().filter(has_summary).collect();
    let dev: Vec<Example<S>> = dev.iter().filter(has_summary).cloned().collect();
    run_phase(model, &GeneratorPhase, &docs, &dev, opts)
}

/// Self-critical fine-tuning of the selector with the generator frozen.
/// Requires both supervised phases; with the `no_rl` ablation it only
/// marks the phase as done.
pub fn train_rl<S: Scalar>(
    model: &mut Model<S>,
    train: &[Example<S>],
    dev: &[Example<S>],
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if !model.has_completed(Phase::Selector) || !model.has_completed(Phase::Generator) {
        return Err(Error::Config("RL training needs selector and generator checkpoints".into()));
    }
    if model.config.has(crate::training::Ablation::NoRl) {
        log::info!("no_rl ablation: skipping the RL phase");
        let mut skipped = model.config.clone();
        skipped.max_steps = 0;
        let saved = std::mem::replace(&mut model.config, skipped);
        let out = run_phase(model, &RlPhase, &[], &[], opts);
        model.config = saved;
        return out;
    }
    let docs = labelled(train);
    let dev: Vec<Example<S>> = dev.iter().filter(|e| e.prepared.labels.is_some()).cloned().collect();
    run_phase(model, &RlPhase, &docs, &dev, opts)
}
