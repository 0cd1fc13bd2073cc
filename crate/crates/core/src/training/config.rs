use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::autodiff::AdamConfig;
use crate::corpus::Truncation;
use crate::encoder::EncoderDims;
use crate::error::{Error, Result};
use crate::generator::{DecodeMode, GeneratorDims};
use crate::rhgnn::PropagationMode;
use crate::rl::{Baseline, RlConfig};
use crate::selector::{LossWeights, SelectorDims, SelectorOptions};

/// Model variants removed one at a time in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ablation {
    NoEntityLevelEmbeddings,
    NoEeSupervision,
    NoEdgeWeights,
    NoEdgeTypes,
    MeanAggregation,
    NoEeSsEdges,
    NoRl,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::NoEntityLevelEmbeddings,
        Ablation::NoEeSupervision,
        Ablation::NoEdgeWeights,
        Ablation::NoEdgeTypes,
        Ablation::MeanAggregation,
        Ablation::NoEeSsEdges,
        Ablation::NoRl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::NoEntityLevelEmbeddings => "no_entity_level_embeddings",
            Ablation::NoEeSupervision => "no_ee_supervision",
            Ablation::NoEdgeWeights => "no_edge_weights",
            Ablation::NoEdgeTypes => "no_edge_types",
            Ablation::MeanAggregation => "mean_aggregation",
            Ablation::NoEeSsEdges => "no_ee_ss_edges",
            Ablation::NoRl => "no_rl",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('-', "_");
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?}")))
    }
}

/// Every hyperparameter of a run. Defaults are the full-scale settings;
/// the text form is flat `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    /// Scalar width used for training: 4 (f32) or 8 (f64).
    pub dtype: u8,
    pub batch_size: usize,
    pub max_steps: u64,
    pub eval_interval: u64,
    pub patience: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub lambda_e: f64,
    pub lambda_ee: f64,
    pub lambda_rl: f64,
    pub lambda_cov: f64,
    pub k_sent: usize,
    pub k_ent: usize,
    pub rl_baseline: Baseline,
    pub word_emb: usize,
    pub entity_emb: usize,
    pub node_dim: usize,
    pub sent_hidden: usize,
    pub mention_hidden: usize,
    pub levels: usize,
    pub mlp_hidden: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub attn_dim: usize,
    pub max_source: usize,
    pub max_decode_steps: usize,
    pub beam_size: usize,
    pub vocab_size: usize,
    pub entity_vocab_size: usize,
    pub max_sentences: usize,
    pub max_entities: usize,
    pub ablations: BTreeSet<Ablation>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 42,
            dtype: 4,
            batch_size: 15,
            max_steps: 50_000,
            eval_interval: 500,
            patience: 5,
            lr: 1e-3,
            clip_norm: 2.0,
            lambda_e: 0.42,
            lambda_ee: 0.33,
            lambda_rl: 0.6,
            lambda_cov: 1.0,
            k_sent: 4,
            k_ent: 4,
            rl_baseline: Baseline::None,
            word_emb: 128,
            entity_emb: 128,
            node_dim: 512,
            sent_hidden: 256,
            mention_hidden: 192,
            levels: 2,
            mlp_hidden: 256,
            enc_hidden: 256,
            dec_hidden: 512,
            attn_dim: 512,
            max_source: 150,
            max_decode_steps: 100,
            beam_size: 4,
            vocab_size: 40_000,
            entity_vocab_size: 500_000,
            max_sentences: 100,
            max_entities: 100,
            ablations: BTreeSet::new(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::Config(format!("bad value {v:?} for {key}: {e}")))
}

impl TrainConfig {
    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; an unknown key is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", k + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "dtype" => {
                self.dtype = match v {
                    "f32" => 4,
                    "f64" => 8,
                    _ => return Err(Error::Config(format!("dtype must be f32 or f64, got {v:?}"))),
                }
            }
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "max_steps" => self.max_steps = parse_num(key, v)?,
            "eval_interval" => self.eval_interval = parse_num(key, v)?,
            "patience" => self.patience = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "clip_norm" => self.clip_norm = parse_num(key, v)?,
            "lambda_e" => self.lambda_e = parse_num(key, v)?,
            "lambda_ee" => self.lambda_ee = parse_num(key, v)?,
            "lambda_rl" => self.lambda_rl = parse_num(key, v)?,
            "lambda_cov" => self.lambda_cov = parse_num(key, v)?,
            "k_sent" => self.k_sent = parse_num(key, v)?,
            "k_ent" => self.k_ent = parse_num(key, v)?,
            "rl_baseline" => self.rl_baseline = v.parse()?,
            "word_emb" => self.word_emb = parse_num(key, v)?,
            "entity_emb" => self.entity_emb = parse_num(key, v)?,
            "node_dim" => self.node_dim = parse_num(key, v)?,
            "sent_hidden" => self.sent_hidden = parse_num(key, v)?,
            "mention_hidden" => self.mention_hidden = parse_num(key, v)?,
            "levels" => self.levels = parse_num(key, v)?,
            "mlp_hidden" => self.mlp_hidden = parse_num(key, v)?,
            "enc_hidden" => self.enc_hidden = parse_num(key, v)?,
            "dec_hidden" => self.dec_hidden = parse_num(key, v)?,
            "attn_dim" => self.attn_dim = parse_num(key, v)?,
            "max_source" => self.max_source = parse_num(key, v)?,
            "max_decode_steps" => self.max_decode_steps = parse_num(key, v)?,
            "beam_size" => self.beam_size = parse_num(key, v)?,
            "vocab_size" => self.vocab_size = parse_num(key, v)?,
            "entity_vocab_size" => self.entity_vocab_size = parse_num(key, v)?,
            "max_sentences" => self.max_sentences = parse_num(key, v)?,
            "max_entities" => self.max_entities = parse_num(key, v)?,
            "ablations" => {
                self.ablations = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("word_emb", self.word_emb),
            ("entity_emb", self.entity_emb),
            ("node_dim", self.node_dim),
            ("sent_hidden", self.sent_hidden),
            ("mention_hidden", self.mention_hidden),
            ("levels", self.levels),
            ("mlp_hidden", self.mlp_hidden),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("attn_dim", self.attn_dim),
            ("max_source", self.max_source),
            ("max_decode_steps", self.max_decode_steps),
            ("beam_size", self.beam_size),
            ("vocab_size", self.vocab_size),
            ("entity_vocab_size", self.entity_vocab_size),
            ("max_sentences", self.max_sentences),
            ("max_entities", self.max_entities),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be positive".into()));
        }
        let weights = [
            ("lambda_e", self.lambda_e),
            ("lambda_ee", self.lambda_ee),
            ("lambda_rl", self.lambda_rl),
            ("lambda_cov", self.lambda_cov),
        ];
        if let Some((k, v)) = weights.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{k} must be a finite nonnegative number, got {v}")));
        }
        if !(self.lr > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("lr and clip_norm must be positive".into()));
        }
        if self.dtype != 4 && self.dtype != 8 {
            return Err(Error::Config(format!("unsupported dtype width {}", self.dtype)));
        }
        self.propagation_mode()?;
        self.encoder_dims().validate()?;
        if self.ablations.contains(&Ablation::MeanAggregation) && self.node_dim % 2 != 0 {
            return Err(Error::Config("mean_aggregation needs an even node_dim".into()));
        }
        Ok(())
    }

    /// Canonical text: every key in a fixed order, one per line.
    pub fn to_text(&self) -> String {
        let ablations: Vec<&str> = self.ablations.iter().map(|a| a.as_str()).collect();
        let dtype = if self.dtype == 8 { "f64" } else { "f32" };
        let lines: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("dtype", dtype.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("eval_interval", self.eval_interval.to_string()),
            ("patience", self.patience.to_string()),
            ("lr", self.lr.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("lambda_e", self.lambda_e.to_string()),
            ("lambda_ee", self.lambda_ee.to_string()),
            ("lambda_rl", self.lambda_rl.to_string()),
            ("lambda_cov", self.lambda_cov.to_string()),
            ("k_sent", self.k_sent.to_string()),
            ("k_ent", self.k_ent.to_string()),
            ("rl_baseline", self.rl_baseline.to_string()),
            ("word_emb", self.word_emb.to_string()),
            ("entity_emb", self.entity_emb.to_string()),
            ("node_dim", self.node_dim.to_string()),
            ("sent_hidden", self.sent_hidden.to_string()),
            ("mention_hidden", self.mention_hidden.to_string()),
            ("levels", self.levels.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("enc_hidden", self.enc_hidden.to_string()),
            ("dec_hidden", self.dec_hidden.to_string()),
            ("attn_dim", self.attn_dim.to_string()),
            ("max_source", self.max_source.to_string()),
            ("max_decode_steps", self.max_decode_steps.to_string()),
            ("beam_size", self.beam_size.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("entity_vocab_size", self.entity_vocab_size.to_string()),
            ("max_sentences", self.max_sentences.to_string()),
            ("max_entities", self.max_entities.to_string()),
            ("ablations", ablations.join(",")),
        ];
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        hex_digest(self.to_text().as_bytes())
    }

    pub fn has(&self, a: Ablation) -> bool {
        self.ablations.contains(&a)
    }

    pub fn propagation_mode(&self) -> Result<PropagationMode> {
        let modes: Vec<PropagationMode> = [
            (Ablation::NoEdgeWeights, PropagationMode::NoEdgeWeights),
            (Ablation::NoEdgeTypes, PropagationMode::NoEdgeTypes),
            (Ablation::MeanAggregation, PropagationMode::MeanAggregation),
        ]
        .into_iter()
        .filter(|(a, _)| self.has(*a))
        .map(|(_, m)| m)
        .collect();
        match modes.as_slice() {
            [] => Ok(PropagationMode::Full),
            [m] => Ok(*m),
            _ => Err(Error::Config(
                "no_edge_weights, no_edge_types and mean_aggregation are mutually exclusive".into(),
            )),
        }
    }

    pub fn selector_options(&self) -> Result<SelectorOptions> {
        Ok(SelectorOptions {
            mode: self.propagation_mode()?,
            entity_level: !self.has(Ablation::NoEntityLevelEmbeddings),
            drop_ss_ee: self.has(Ablation::NoEeSsEdges),
        })
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_e: self.lambda_e,
            lambda_ee: if self.has(Ablation::NoEeSupervision) {
                0.0
            } else {
                self.lambda_ee
            },
        }
    }

    pub fn rl_config(&self) -> RlConfig {
        RlConfig {
            lambda_rl: if self.has(Ablation::NoRl) { 0.0 } else { self.lambda_rl },
            k_sent: self.k_sent,
            k_ent: self.k_ent,
            baseline: self.rl_baseline,
        }
    }

    pub fn encoder_dims(&self) -> EncoderDims {
        EncoderDims {
            word_emb: self.word_emb,
            entity_emb: self.entity_emb,
            sent_hidden: self.sent_hidden,
            mention_hidden: self.mention_hidden,
            node_dim: self.node_dim,
        }
    }

    pub fn selector_dims(&self) -> SelectorDims {
        SelectorDims {
            encoder: self.encoder_dims(),
            levels: self.levels,
            mlp_hidden: self.mlp_hidden,
        }
    }

    pub fn generator_dims(&self) -> GeneratorDims {
        GeneratorDims {
            word_emb: self.word_emb,
            enc_hidden: self.enc_hidden,
            mention_hidden: self.mention_hidden,
            dec_hidden: self.dec_hidden,
            attn_dim: self.attn_dim,
            max_source: self.max_source,
            max_steps: self.max_decode_steps,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            max_sentences: self.max_sentences,
            max_entities: self.max_entities,
        }
    }

    pub fn decode_mode(&self) -> DecodeMode {
        DecodeMode::Beam(self.beam_size)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
