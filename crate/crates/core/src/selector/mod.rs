//! Multi-task selection over R-HGNN outputs: sentence and entity
//! distributions, entity relatedness supervision, and top-k inference.

mod heads;
mod model;

pub use heads::{
    cross_entropy_or_zero, label_distribution, off_diagonal_mask, rank_and_select, relatedness,
    relatedness_target, selector_loss, Dist, LossWeights, Mlp, SelectorHeads, SelectorLoss, SelectorOutput,
};
pub use model::{document_labels, PreparedDoc, SelectorDims, SelectorForward, SelectorModel, SelectorOptions};
