use rand::Rng;

use crate::autodiff::{Axis, ParamStore, Tape, Tensor, Var};
use crate::encoder::Linear;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two-layer scorer `d → hidden → 1` with ReLU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Mlp {
            hidden: Linear::new(store, &format!("{name}.hidden"), input, hidden, true, rng)?,
            out: Linear::new(store, &format!("{name}.out"), hidden, 1, true, rng)?,
        })
    }

    /// Scores for the rows of `x` as a `1×rows` row.
    pub fn scores<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, x)?;
        let h = tape.relu(h);
        let s = self.out.forward(tape, h)?;
        Ok(tape.transpose(s))
    }
}

/// A distribution together with its log, both as tape vars.
#[derive(Debug, Clone, Copy)]
pub struct Dist {
    pub probs: Var,
    pub log_probs: Var,
}

/// Selector distributions for one document.
#[derive(Debug, Clone, Copy)]
pub struct SelectorOutput {
    /// p̂^S, 1×M.
    pub sentences: Dist,
    /// p̂^E, 1×N; `None` when the document has no entities.
    pub entities: Option<Dist>,
    /// r̂^EE, N×N, one joint distribution over ordered pairs. For N ≥ 2
    /// the diagonal is excluded and held at zero.
    pub relatedness: Option<Dist>,
}

fn row_dist<S: Scalar>(tape: &mut Tape<'_, S>, scores: Var) -> Result<Dist> {
    Ok(Dist {
        probs: tape.softmax(scores, Axis::Row)?,
        log_probs: tape.log_softmax(scores, Axis::Row)?,
    })
}

/// Off-diagonal mask for an `n×n` matrix; `None` when `n < 2`.
pub fn off_diagonal_mask(n: usize) -> Option<Vec<bool>> {
    (n >= 2).then(|| (0..n * n).map(|k| k / n != k % n).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorHeads {
    pub sentence: Mlp,
    pub entity: Mlp,
}

impl SelectorHeads {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(SelectorHeads {
            sentence: Mlp::new(store, &format!("{prefix}.sent_mlp"), dim, hidden, rng)?,
            entity: Mlp::new(store, &format!("{prefix}.ent_mlp"), dim, hidden, rng)?,
        })
    }

    /// `s_l`: S^(L); `e_l`: E^(L); `e_e`: entity-level rows E^E, which
    /// only feed the relatedness head.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        s_l: Var,
        e_l: Option<Var>,
        e_e: Option<Var>,
    ) -> Result<SelectorOutput> {
        let s_scores = self.sentence.scores(tape, s_l)?;
        let sentences = row_dist(tape, s_scores)?;
        let entities = match e_l {
            Some(e) => {
                let sc = self.entity.scores(tape, e)?;
                Some(row_dist(tape, sc)?)
            }
            None => None,
        };
        let relatedness = match e_e {
            Some(ee) => Some(relatedness(tape, ee)?),
            None => None,
        };
        Ok(SelectorOutput {
            sentences,
            entities,
            relatedness,
        })
    }
}

/// Global softmax of `E^E E^Eᵀ` with the diagonal excluded.
pub fn relatedness<S: Scalar>(tape: &mut Tape<'_, S>, e_e: Var) -> Result<Dist> {
    let n = tape.shape(e_e).0;
    let et = tape.transpose(e_e);
    let logits = tape.matmul(e_e, et)?;
    let mask = off_diagonal_mask(n);
    Ok(Dist {
        probs: tape.softmax_masked(logits, Axis::Global, mask.clone())?,
        log_probs: tape.log_softmax_masked(logits, Axis::Global, mask)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_e: f64,
    pub lambda_ee: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_e: 0.42,
            lambda_ee: 0.33,
        }
    }
}

/// Total and per-component selector loss, all `1×1` vars.
#[derive(Debug, Clone, Copy)]
pub struct SelectorLoss {
    pub total: Var,
    pub sentence: Var,
    pub entity: Var,
    pub relatedness: Var,
}

/// `y / Σy` as a `1×len` row, or `None` when every label is zero.
pub fn label_distribution<S: Scalar>(labels: &[u8]) -> Option<Tensor<S>> {
    let total: usize = labels.iter().map(|&y| y as usize).sum();
    if total == 0 {
        return None;
    }
    let z = S::from_usize(total).unwrap();
    Tensor::row_vector(&labels.iter().map(|&y| S::from_u8(y).unwrap() / z).collect::<Vec<_>>()).ok()
}

/// `A / Σ A` over off-diagonal entries, or `None` when there is no weight.
pub fn relatedness_target<S: Scalar>(a_ee: &Tensor<S>) -> Option<Tensor<S>> {
    let n = a_ee.rows();
    let total: S = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| a_ee.get(i, j))
        .sum();
    if total <= S::zero() {
        return None;
    }
    Some(Tensor::from_fn(n, n, |i, j| {
        if i == j {
            S::zero()
        } else {
            a_ee.get(i, j) / total
        }
    }))
}

/// Cross entropy of `log_probs` against an optional target; an absent
/// target contributes a constant zero.
pub fn cross_entropy_or_zero<S: Scalar>(
    tape: &mut Tape<'_, S>,
    target: Option<&Tensor<S>>,
    log_probs: Option<Var>,
) -> Result<Var> {
    match (target, log_probs) {
        (Some(t), Some(lp)) => tape.cross_entropy(t, lp),
        _ => Ok(tape.constant(Tensor::scalar(S::zero()))),
    }
}

/// `loss^S + λ^E loss^E + λ^EE loss^EE`. All-zero sentence labels give a
/// zero sentence term and a warning; all-zero entity labels or an EE
/// block without weight give zero for their terms.
pub fn selector_loss<S: Scalar>(
    tape: &mut Tape<'_, S>,
    out: &SelectorOutput,
    sentence_labels: &[u8],
    entity_labels: &[u8],
    a_ee: Option<&Tensor<S>>,
    weights: LossWeights,
) -> Result<SelectorLoss> {
    let m = tape.shape(out.sentences.probs).1;
    if sentence_labels.len() != m {
        return Err(Error::dim("selector_loss", &[m], &[sentence_labels.len()]));
    }
    let n = out.entities.map_or(0, |d| tape.shape(d.probs).1);
    if entity_labels.len() != n {
        return Err(Error::dim("selector_loss", &[n], &[entity_labels.len()]));
    }
    let ys = label_distribution::<S>(sentence_labels);
    if ys.is_none() {
        log::warn!("all sentence labels are zero; sentence loss set to 0");
    }
    let sentence = cross_entropy_or_zero(tape, ys.as_ref(), Some(out.sentences.log_probs))?;
    let ye = label_distribution::<S>(entity_labels);
    let entity = cross_entropy_or_zero(tape, ye.as_ref(), out.entities.map(|d| d.log_probs))?;
    let r = a_ee.and_then(relatedness_target);
    let relatedness = cross_entropy_or_zero(tape, r.as_ref(), out.relatedness.map(|d| d.log_probs))?;
    let we = tape.scale(entity, S::from_f64_lossy(weights.lambda_e));
    let wee = tape.scale(relatedness, S::from_f64_lossy(weights.lambda_ee));
    let partial = tape.add(sentence, we)?;
    let total = tape.add(partial, wee)?;
    Ok(SelectorLoss {
        total,
        sentence,
        entity,
        relatedness,
    })
}

/// Indices of the `k` largest probabilities (ties to the lower index),
/// returned in ascending index order. `k` is clamped to the length.
pub fn rank_and_select<S: Scalar>(probs: &[S], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut top: Vec<usize> = order.into_iter().take(k.min(probs.len())).collect();
    top.sort_unstable();
    top
}
