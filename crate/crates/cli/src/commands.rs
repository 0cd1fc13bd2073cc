use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rhgnn_summ::corpus::{
    load_entity_embeddings, load_word_embeddings, read_corpus, write_corpus, AnnotatedDocument, CooccurrenceTable,
    EntityVocab, Split, Truncation, Vocab,
};
use rhgnn_summ::graph::{build_graph, corpus_stats, partition_by_density, se_density, DensityReport, DensityThreshold, EdgeType};
use rhgnn_summ::training::{
    abstractive_summary, checkpoint_dtype, evaluate, extractive_summary, train_generator, train_rl, train_selector,
    Checkpoint, EvalMode, Example, Model, Phase, SyntheticSpec, TrainConfig, TrainOptions, TrainReport,
};
use rhgnn_summ::Scalar;
use serde_json::json;

use crate::manifest::Manifest;
use crate::{Command, EvaluateArgs, GraphArgs, ModelArgs, PartitionArgs, StatsArgs, SummarizeArgs, SyntheticArgs, TrainArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildGraphs(a) => build_graphs(&a),
        Command::Stats(a) => stats(&a),
        Command::Partition(a) => partition(&a),
        Command::TrainSelector(a) => train(Phase::Selector, &a),
        Command::TrainGenerator(a) => train(Phase::Generator, &a),
        Command::TrainRl(a) => train(Phase::Rl, &a),
        Command::Summarize(a) => summarize(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::GenSynthetic(a) => gen_synthetic(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>, manifest: &mut Manifest) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(path);
    Ok(())
}

fn read_docs(path: &Path, truncation: Truncation, manifest: &mut Manifest) -> Result<Vec<AnnotatedDocument>> {
    manifest.input("corpus", path)?;
    read_corpus(path, truncation).with_context(|| format!("loading corpus {}", path.display()))
}

fn read_cooc(path: Option<&Path>, manifest: &mut Manifest) -> Result<CooccurrenceTable> {
    match path {
        Some(p) => {
            manifest.input("cooc", p)?;
            CooccurrenceTable::read(p).with_context(|| format!("loading co-occurrence table {}", p.display()))
        }
        None => Ok(CooccurrenceTable::new()),
    }
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    Ok(match s {
        "all" => None,
        "train" => Some(Split::Train),
        "dev" => Some(Split::Dev),
        "test" => Some(Split::Test),
        other => bail!("unknown split {other:?}; expected train, dev, test or all"),
    })
}

fn in_split(docs: Vec<AnnotatedDocument>, split: Option<Split>) -> Vec<AnnotatedDocument> {
    match split {
        None => docs,
        Some(s) => docs.into_iter().filter(|d| d.split_or_train() == s).collect(),
    }
}

fn build_graphs(a: &GraphArgs) -> Result<()> {
    let mut manifest = Manifest::new("build-graphs");
    let docs = read_docs(&a.corpus, Truncation::default(), &mut manifest)?;
    let cooc = read_cooc(a.cooc.as_deref(), &mut manifest)?;
    create_dir(&a.out)?;
    let mut lines = String::new();
    for doc in &docs {
        let g = build_graph(doc, &cooc);
        let edges = |t: EdgeType| -> Vec<serde_json::Value> {
            g.edges(t).iter().map(|e| json!([e.a, e.b, e.weight])).collect()
        };
        let row = json!({
            "id": doc.id,
            "num_sentences": g.num_sentences,
            "num_entities": g.num_entities,
            "ss": edges(EdgeType::SentSent),
            "se": edges(EdgeType::SentEnt),
            "ee": edges(EdgeType::EntEnt),
            "se_density": se_density(&g).ok(),
        });
        lines.push_str(&serde_json::to_string(&row)?);
        lines.push('\n');
    }
    write_file(&a.out.join("graphs.jsonl"), lines, &mut manifest)?;
    let report = DensityReport::compute(&docs)?;
    write_file(&a.out.join("density.json"), report.to_json() + "\n", &mut manifest)?;
    write_file(&a.out.join("density_histogram.csv"), report.histogram_csv(), &mut manifest)?;
    manifest.write(&a.out)?;
    log::info!("wrote {} graphs to {}", docs.len(), a.out.display());
    Ok(())
}

fn stats(a: &StatsArgs) -> Result<()> {
    let mut manifest = Manifest::new("stats");
    let docs = read_docs(&a.corpus, Truncation::default(), &mut manifest)?;
    let text = serde_json::to_string_pretty(&corpus_stats(&docs)?)? + "\n";
    print!("{text}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        let report = DensityReport::compute(&docs)?;
        write_file(&out.join("stats.json"), &text, &mut manifest)?;
        write_file(&out.join("density.json"), report.to_json() + "\n", &mut manifest)?;
        write_file(&out.join("density_histogram.csv"), report.histogram_csv(), &mut manifest)?;
        manifest.write(out)?;
    }
    Ok(())
}

fn partition(a: &PartitionArgs) -> Result<()> {
    let mut manifest = Manifest::new("partition");
    let docs = read_docs(&a.corpus, Truncation::default(), &mut manifest)?;
    let thresholds: Vec<DensityThreshold> = a
        .density
        .iter()
        .map(|s| s.parse::<DensityThreshold>())
        .collect::<rhgnn_summ::Result<_>>()?;
    create_dir(&a.out)?;
    let stem = a
        .corpus
        .file_stem()
        .map_or_else(|| "corpus".to_string(), |s| s.to_string_lossy().into_owned());
    let mut summary = Vec::new();
    for (t, sub) in partition_by_density(&docs, &thresholds)? {
        let path = a.out.join(format!("{stem}.{}.jsonl", t.label()));
        write_corpus(&path, &sub)?;
        manifest.output(&path);
        summary.push(json!({ "threshold": t.to_string(), "file": path.display().to_string(), "documents": sub.len() }));
        log::info!("{t}: {} documents", sub.len());
    }
    write_file(
        &a.out.join("partition.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
        &mut manifest,
    )?;
    manifest.write(&a.out)?;
    Ok(())
}

/// Applies `--seed`, `--ablate` and `--set` to `cfg`; flags win over the file.
fn apply_overrides(cfg: &mut TrainConfig, m: &ModelArgs) -> Result<()> {
    for kv in &m.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for name in &m.ablate {
        cfg.ablations.insert(name.trim().parse()?);
    }
    if let Some(seed) = m.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(())
}

fn fresh_config(m: &ModelArgs, manifest: &mut Manifest) -> Result<TrainConfig> {
    let mut cfg = match &m.config {
        Some(p) => {
            manifest.input("config", p)?;
            TrainConfig::read(p).with_context(|| format!("loading config {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    apply_overrides(&mut cfg, m)?;
    Ok(cfg)
}

fn split_examples<S: Scalar>(
    model: &Model<S>,
    docs: &[AnnotatedDocument],
    cooc: &CooccurrenceTable,
) -> Result<(Vec<Example<S>>, Vec<Example<S>>)> {
    let train: Vec<AnnotatedDocument> = docs.iter().filter(|d| d.split_or_train() == Split::Train).cloned().collect();
    let dev: Vec<AnnotatedDocument> = docs.iter().filter(|d| d.split_or_train() == Split::Dev).cloned().collect();
    Ok((model.prepare_all(&train, cooc)?, model.prepare_all(&dev, cooc)?))
}

fn fresh_model<S: Scalar>(
    cfg: TrainConfig,
    docs: &[AnnotatedDocument],
    a: &TrainArgs,
    manifest: &mut Manifest,
) -> Result<Model<S>> {
    let train_docs: Vec<&AnnotatedDocument> = docs.iter().filter(|d| d.split_or_train() == Split::Train).collect();
    let vocab = Vocab::build(train_docs.iter().copied(), cfg.vocab_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x656d_6265_6464);
    let word_table = match &a.word_emb {
        Some(p) => {
            manifest.input("word_emb", p)?;
            Some(load_word_embeddings::<S>(p, &vocab, cfg.word_emb, &mut rng)?)
        }
        None => None,
    };
    let ranked = EntityVocab::build(train_docs.iter().copied(), cfg.entity_vocab_size);
    let (entity_vocab, entity_table) = match &a.entity_emb {
        Some(p) => {
            manifest.input("entity_emb", p)?;
            let (v, t) = load_entity_embeddings::<S>(p, ranked.kg_ids().iter().map(String::as_str), &mut rng)?;
            ensure!(
                t.cols() == cfg.entity_emb,
                "entity embedding file has dim {}, config expects {}",
                t.cols(),
                cfg.entity_emb
            );
            (v, Some(t))
        }
        None => (ranked, None),
    };
    Ok(Model::new(cfg, vocab, entity_vocab, word_table.as_ref(), entity_table.as_ref())?)
}

/// Restores an upstream checkpoint and applies flag overrides. Overrides
/// may change training control but not the architecture.
fn resumed_model<S: Scalar>(ckpt: &Path, m: &ModelArgs, manifest: &mut Manifest) -> Result<Model<S>> {
    manifest.input("checkpoint", ckpt)?;
    let (mut model, _, _) = Checkpoint::<S>::load(ckpt)
        .with_context(|| format!("loading checkpoint {}", ckpt.display()))?
        .restore()?;
    if let Some(p) = &m.config {
        manifest.input("config", p)?;
        let file = TrainConfig::read(p)?;
        ensure!(
            file.to_text() == model.config.to_text(),
            "--config differs from the configuration stored in {}; use --set for training-control changes",
            ckpt.display()
        );
    }
    let before = model.config.clone();
    apply_overrides(&mut model.config, m)?;
    let arch = |c: &TrainConfig| -> Result<String> {
        Ok(format!(
            "{:?}{:?}{:?}{:?}{}",
            c.selector_dims(),
            c.generator_dims(),
            c.selector_options()?,
            c.dtype,
            c.max_source
        ))
    };
    ensure!(
        arch(&before)? == arch(&model.config)?,
        "overrides may not change the model architecture of a restored checkpoint"
    );
    Ok(model)
}

fn train(phase: Phase, a: &TrainArgs) -> Result<()> {
    let mut manifest = Manifest::new(&format!("train-{}", phase.as_str()));
    let dtype = match (&a.checkpoint, phase) {
        (Some(p), Phase::Generator | Phase::Rl) => checkpoint_dtype(p)?,
        (None, Phase::Generator | Phase::Rl) => bail!("train-{phase} requires --checkpoint"),
        (_, Phase::Selector) => fresh_config(&a.model, &mut Manifest::new(""))?.dtype,
    };
    match dtype {
        4 => train_typed::<f32>(phase, a, &mut manifest),
        8 => train_typed::<f64>(phase, a, &mut manifest),
        w => bail!("unsupported scalar width {w}"),
    }
}

fn train_typed<S: Scalar>(phase: Phase, a: &TrainArgs, manifest: &mut Manifest) -> Result<()> {
    let mut model: Model<S> = match phase {
        Phase::Selector => {
            if a.checkpoint.is_some() {
                log::warn!("--checkpoint is ignored by train-selector");
            }
            let cfg = fresh_config(&a.model, manifest)?;
            let docs = read_corpus(&a.corpus, cfg.truncation())
                .with_context(|| format!("loading corpus {}", a.corpus.display()))?;
            fresh_model(cfg, &docs, a, manifest)?
        }
        _ => resumed_model(a.checkpoint.as_deref().expect("checked by caller"), &a.model, manifest)?,
    };
    let docs = read_docs(&a.corpus, model.config.truncation(), manifest)?;
    let cooc = read_cooc(a.cooc.as_deref(), manifest)?;
    let (train_ex, dev_ex) = split_examples(&model, &docs, &cooc)?;
    ensure!(!train_ex.is_empty(), "corpus {} has no training documents", a.corpus.display());
    manifest.seed(model.config.seed).config_hash(model.config.hash());
    create_dir(&a.out)?;
    log::info!(
        "{phase}: {} train / {} dev documents, {} steps",
        train_ex.len(),
        dev_ex.len(),
        model.config.max_steps
    );
    let opts = TrainOptions {
        out_dir: Some(a.out.clone()),
    };
    let report = match phase {
        Phase::Selector => train_selector(&mut model, &train_ex, &dev_ex, &opts)?,
        Phase::Generator => train_generator(&mut model, &train_ex, &dev_ex, &opts)?,
        Phase::Rl => train_rl(&mut model, &train_ex, &dev_ex, &opts)?,
    };
    record_report(&report, manifest, &a.out);
    write_file(&a.out.join("config.txt"), model.config.to_text(), manifest)?;
    manifest.write(&a.out)?;
    Ok(())
}

fn record_report(report: &TrainReport, manifest: &mut Manifest, out: &Path) {
    for p in report.checkpoints.iter().chain(&report.final_checkpoint) {
        manifest.output(p);
    }
    for name in [format!("{}-metrics.csv", report.phase), "rl-episodes.tsv".to_string()] {
        let p = out.join(name);
        if p.exists() {
            manifest.output(p);
        }
    }
    log::info!(
        "{}: {} steps, final loss {:?}, best step {:?}{}",
        report.phase,
        report.steps,
        report.losses.last(),
        report.best_step,
        if report.stopped_early { ", stopped early" } else { "" }
    );
}

/// Loads a checkpoint of either width and runs `f` on it.
macro_rules! with_checkpoint {
    ($path:expr, $f:ident, $($arg:expr),*) => {
        match checkpoint_dtype($path)? {
            4 => $f::<f32>($($arg),*),
            8 => $f::<f64>($($arg),*),
            w => bail!("unsupported scalar width {w}"),
        }
    };
}

fn load_for_inference<S: Scalar>(
    ckpt: &Path,
    corpus: &Path,
    cooc: Option<&Path>,
    split: &str,
    manifest: &mut Manifest,
) -> Result<(Model<S>, Vec<Example<S>>)> {
    manifest.input("checkpoint", ckpt)?;
    let (model, _, _) = Checkpoint::<S>::load(ckpt)
        .with_context(|| format!("loading checkpoint {}", ckpt.display()))?
        .restore()?;
    manifest.seed(model.config.seed).config_hash(model.config.hash());
    let docs = in_split(read_docs(corpus, model.config.truncation(), manifest)?, parse_split(split)?);
    let cooc = read_cooc(cooc, manifest)?;
    let examples = model.prepare_all(&docs, &cooc)?;
    Ok((model, examples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SummaryMode {
    Extractive,
    Abstractive,
    Both,
}

impl SummaryMode {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "extractive" => SummaryMode::Extractive,
            "abstractive" => SummaryMode::Abstractive,
            "both" => SummaryMode::Both,
            other => bail!("unknown summary mode {other:?}; expected extractive, abstractive or both"),
        })
    }
}

/// File-name-safe form of a document id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn summarize(a: &SummarizeArgs) -> Result<()> {
    with_checkpoint!(&a.checkpoint, summarize_typed, a)
}

fn summarize_typed<S: Scalar>(a: &SummarizeArgs) -> Result<()> {
    use rayon::prelude::*;
    let mode = SummaryMode::parse(&a.mode)?;
    let mut manifest = Manifest::new("summarize");
    let (model, examples) = load_for_inference::<S>(&a.checkpoint, &a.corpus, a.cooc.as_deref(), &a.split, &mut manifest)?;
    if mode != SummaryMode::Extractive && !model.has_completed(Phase::Generator) {
        log::warn!("checkpoint has no trained generator; abstractive output comes from untrained weights");
    }
    create_dir(&a.out)?;
    let decode = model.config.decode_mode();
    let outputs = examples
        .par_iter()
        .map(|ex| {
            let ext = extractive_summary(&model, ex)?;
            let abs = match mode {
                SummaryMode::Extractive => None,
                _ => Some(abstractive_summary(&model, ex, &ext, decode)?),
            };
            Ok((ext, abs))
        })
        .collect::<rhgnn_summ::Result<Vec<_>>>()?;
    for (ext, abs) in &outputs {
        let stem = file_stem(&ext.id);
        let mut sidecar = serde_json::Map::new();
        sidecar.insert("id".into(), json!(ext.id));
        if mode != SummaryMode::Abstractive {
            write_file(&a.out.join(format!("{stem}.extractive.txt")), ext.text.join("\n") + "\n", &mut manifest)?;
            sidecar.insert("extractive".into(), serde_json::to_value(ext)?);
        } else {
            sidecar.insert(
                "selection".into(),
                json!({ "sentences": ext.sentences, "entities": ext.entities }),
            );
        }
        if let Some(abs) = abs {
            write_file(&a.out.join(format!("{stem}.abstractive.txt")), abs.text.clone() + "\n", &mut manifest)?;
            sidecar.insert("abstractive".into(), serde_json::to_value(abs)?);
        }
        write_file(
            &a.out.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&sidecar)? + "\n",
            &mut manifest,
        )?;
    }
    manifest.write(&a.out)?;
    log::info!("summarized {} documents into {}", outputs.len(), a.out.display());
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    with_checkpoint!(&a.checkpoint, evaluate_typed, a)
}

fn evaluate_typed<S: Scalar>(a: &EvaluateArgs) -> Result<()> {
    let mode: EvalMode = a.mode.parse()?;
    let mut manifest = Manifest::new("evaluate");
    let (model, examples) = load_for_inference::<S>(&a.checkpoint, &a.corpus, a.cooc.as_deref(), &a.split, &mut manifest)?;
    ensure!(!examples.is_empty(), "no documents in split {:?}", a.split);
    let report = evaluate(&model, &examples, mode, model.config.decode_mode())?;
    create_dir(&a.out)?;
    write_file(&a.out.join("report.json"), report.to_json() + "\n", &mut manifest)?;
    manifest.write(&a.out)?;
    println!(
        "{} documents  R-1 {:.4}  R-2 {:.4}  R-L {:.4}  P@k sent {}  ent {}",
        report.num_documents,
        report.rouge.rouge1.f1,
        report.rouge.rouge2.f1,
        report.rouge.rouge_l.f1,
        fmt_opt(report.sentence_precision),
        fmt_opt(report.entity_precision)
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn gen_synthetic(a: &SyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        docs: a.docs,
        sentences: a.sentences,
        entities: a.entities,
        planted: a.planted,
        salient_entities: a.salient,
        seed: a.seed,
        ..SyntheticSpec::default()
    };
    let corpus = spec.generate()?;
    create_dir(&a.out)?;
    let mut manifest = Manifest::new("gen-synthetic");
    manifest.seed(a.seed);
    let corpus_path: PathBuf = a.out.join("corpus.jsonl");
    write_corpus(&corpus_path, &corpus.docs)?;
    manifest.output(&corpus_path);
    let cooc_path = a.out.join("cooc.tsv");
    corpus.cooc.write(&cooc_path)?;
    manifest.output(&cooc_path);
    let truth: Vec<serde_json::Value> = corpus
        .docs
        .iter()
        .zip(corpus.planted_sentences.iter().zip(&corpus.salient_entities))
        .map(|(d, (s, e))| json!({ "id": d.id, "sentences": s, "entities": e }))
        .collect();
    let mut truth_text = String::new();
    for t in &truth {
        truth_text.push_str(&serde_json::to_string(t)?);
        truth_text.push('\n');
    }
    write_file(&a.out.join("planted.jsonl"), truth_text, &mut manifest)?;
    manifest.write(&a.out)?;
    log::info!("wrote {} synthetic documents to {}", corpus.docs.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(overrides: &[&str], ablate: &[&str], seed: Option<u64>) -> ModelArgs {
        ModelArgs {
            config: None,
            seed,
            ablate: ablate.iter().map(|s| s.to_string()).collect(),
            overrides: overrides.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = TrainConfig::default();
        apply_overrides(&mut cfg, &args(&["seed=3", "lr = 0.5"], &["no-rl"], Some(9))).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.lr, 0.5);
        assert!(cfg.has(rhgnn_summ::training::Ablation::NoRl));
        assert!(apply_overrides(&mut cfg, &args(&["lr"], &[], None)).is_err());
        assert!(apply_overrides(&mut cfg, &args(&["nope=1"], &[], None)).is_err());
    }

    #[test]
    fn split_names() {
        assert_eq!(parse_split("all").unwrap(), None);
        assert_eq!(parse_split("dev").unwrap(), Some(Split::Dev));
        assert!(parse_split("valid").is_err());
    }

    #[test]
    fn ids_become_safe_file_stems() {
        assert_eq!(file_stem("cnn/abc 1.story"), "cnn_abc_1.story");
        assert_eq!(file_stem("syn00001"), "syn00001");
    }

    #[test]
    fn summary_modes() {
        assert_eq!(SummaryMode::parse("both").unwrap(), SummaryMode::Both);
        assert!(SummaryMode::parse("all").is_err());
    }
}
