//! Three-phase training, checkpoints, evaluation and the synthetic corpus.

mod checkpoint;
mod config;
mod eval;
mod model;
mod synthetic;
mod trainer;

pub use checkpoint::{checkpoint_dtype, Checkpoint, OptimizerState, RngState};
pub use config::{Ablation, TrainConfig};
pub use eval::{
    abstract_from, abstractive_summary, evaluate, extractive_summary, precision_at_k, select, AbstractiveSummary, DocEval,
    EvalMode, EvalReport, ExtractiveSummary, Selection,
};
pub use model::{Example, Model, Phase, GENERATOR_PREFIX, SELECTOR_PREFIX};
pub use synthetic::{SyntheticCorpus, SyntheticSpec};
pub use trainer::{oracle_selection, train_generator, train_rl, train_selector, MetricLog, TrainOptions, TrainReport};
