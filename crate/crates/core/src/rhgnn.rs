//! Relational heterogeneous graph layer.
//!
//! One level computes
//!
//! ```text
//! X' = ReLU( Σ_k Â_k X W_k + X W_self ),   Â_k = D_k^{-1/2} A_k D_k^{-1/2}
//! ```
//!
//! over the three edge types. Zero-degree nodes use `D_ii = 1`, so they
//! only receive the self transform. The other [`PropagationMode`]s are the
//! ablation baselines.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::encoder::Linear;
use crate::error::{Error, Result};
use crate::graph::{EdgeType, SentenceEntityGraph};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropagationMode {
    /// Weighted, degree-normalized, one transform per edge type.
    Full,
    /// Binary edges, neighbour-count row normalization per edge type.
    NoEdgeWeights,
    /// Adjacencies summed into one, single shared transform.
    NoEdgeTypes,
    /// Self half concatenated with the mean over edge types of the binary
    /// neighbour mean.
    MeanAggregation,
}

impl PropagationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PropagationMode::Full => "full",
            PropagationMode::NoEdgeWeights => "no_edge_weights",
            PropagationMode::NoEdgeTypes => "no_edge_types",
            PropagationMode::MeanAggregation => "mean_aggregation",
        }
    }

    /// Number of edge transforms in a level.
    pub fn edge_transforms(self) -> usize {
        match self {
            PropagationMode::NoEdgeTypes => 1,
            _ => EdgeType::ALL.len(),
        }
    }
}

impl fmt::Display for PropagationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropagationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(PropagationMode::Full),
            "no_edge_weights" => Ok(PropagationMode::NoEdgeWeights),
            "no_edge_types" => Ok(PropagationMode::NoEdgeTypes),
            "mean_aggregation" => Ok(PropagationMode::MeanAggregation),
            other => Err(Error::Config(format!("unknown propagation mode {other:?}"))),
        }
    }
}

fn check_nonnegative<S: Scalar>(a: &Tensor<S>) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::dim("adjacency", a.shape(), &[a.rows(), a.rows()]));
    }
    if let Some(bad) = a.data().iter().find(|v| !(**v >= S::zero())) {
        return Err(Error::Validation {
            doc: String::new(),
            msg: format!("adjacency weight {bad} is negative"),
        });
    }
    Ok(())
}

/// `D^{-1/2} A D^{-1/2}` with `D_ii = Σ_j A_ij`, zero degrees treated as 1.
pub fn degree_normalize<S: Scalar>(a: &Tensor<S>) -> Result<Tensor<S>> {
    check_nonnegative(a)?;
    let n = a.rows();
    let deg: Vec<S> = (0..n).map(|i| a.row(i).iter().copied().sum()).collect();
    // A nonzero entry implies both degrees are positive.
    Ok(Tensor::from_fn(n, n, |i, j| {
        let v = a.get(i, j);
        if v == S::zero() {
            S::zero()
        } else {
            v / (deg[i] * deg[j]).sqrt()
        }
    }))
}

/// Binarizes `A` and divides each row by its neighbour count.
pub fn row_normalize_binary<S: Scalar>(a: &Tensor<S>) -> Result<Tensor<S>> {
    check_nonnegative(a)?;
    let n = a.rows();
    let counts: Vec<usize> = (0..n)
        .map(|i| a.row(i).iter().filter(|v| **v > S::zero()).count())
        .collect();
    Ok(Tensor::from_fn(n, n, |i, j| {
        if a.get(i, j) > S::zero() {
            S::one() / S::from_usize(counts[i]).unwrap()
        } else {
            S::zero()
        }
    }))
}

/// Propagation matrices for a graph under `mode`, in [`EdgeType::ALL`]
/// order (a single matrix for [`PropagationMode::NoEdgeTypes`]). Edge
/// types in `dropped` contribute nothing.
pub fn propagation_matrices<S: Scalar>(
    graph: &SentenceEntityGraph,
    mode: PropagationMode,
    dropped: &[EdgeType],
) -> Result<Vec<Tensor<S>>> {
    let g = graph.without(dropped);
    let dense: Vec<Tensor<S>> = EdgeType::ALL.iter().map(|&t| g.dense(t)).collect();
    normalize_for_mode(&dense, mode)
}

/// Same as [`propagation_matrices`] from raw dense adjacencies.
pub fn normalize_for_mode<S: Scalar>(raw: &[Tensor<S>], mode: PropagationMode) -> Result<Vec<Tensor<S>>> {
    match mode {
        PropagationMode::Full => raw.iter().map(degree_normalize).collect(),
        PropagationMode::NoEdgeWeights | PropagationMode::MeanAggregation => {
            raw.iter().map(row_normalize_binary).collect()
        }
        PropagationMode::NoEdgeTypes => {
            let mut sum = raw
                .first()
                .cloned()
                .ok_or_else(|| Error::Invalid("no adjacency given".into()))?;
            for a in &raw[1..] {
                sum.add_assign(a)?;
            }
            Ok(vec![degree_normalize(&sum)?])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RhgnnLevel {
    pub mode: PropagationMode,
    pub edge: Vec<Linear>,
    pub self_transform: Linear,
}

impl RhgnnLevel {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        dim: usize,
        mode: PropagationMode,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let out = if mode == PropagationMode::MeanAggregation {
            if dim % 2 != 0 {
                return Err(Error::Config(format!("mean aggregation needs an even node dim, got {dim}")));
            }
            dim / 2
        } else {
            dim
        };
        let edge = (0..mode.edge_transforms())
            .map(|k| Linear::new(store, &format!("{name}.edge{k}"), dim, out, false, rng))
            .collect::<Result<_>>()?;
        let self_transform = Linear::new(store, &format!("{name}.self"), dim, out, false, rng)?;
        Ok(RhgnnLevel {
            mode,
            edge,
            self_transform,
        })
    }

    /// `adj` are constant vars produced by [`propagation_matrices`] for the
    /// same mode. Types whose matrix is all zero are skipped.
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var, adj: &[Var]) -> Result<Var> {
        if adj.len() != self.edge.len() {
            return Err(Error::Config(format!(
                "{} mode expects {} adjacencies, got {}",
                self.mode,
                self.edge.len(),
                adj.len()
            )));
        }
        let own = self.self_transform.forward(tape, x)?;
        let mut messages = Vec::with_capacity(adj.len());
        for (lin, &a) in self.edge.iter().zip(adj) {
            if tape.value(a).data().iter().all(|v| *v == S::zero()) {
                continue;
            }
            let xw = lin.forward(tape, x)?;
            messages.push(tape.matmul(a, xw)?);
        }
        let mut total = None;
        for m in messages {
            total = Some(match total {
                None => m,
                Some(t) => tape.add(t, m)?,
            });
        }
        let pre = match self.mode {
            PropagationMode::MeanAggregation => {
                let neigh = match total {
                    Some(t) => tape.scale(t, S::one() / S::from_usize(adj.len()).unwrap()),
                    None => {
                        let (r, c) = tape.shape(own);
                        tape.constant(Tensor::zeros(r, c))
                    }
                };
                tape.concat_cols(&[own, neigh])?
            }
            _ => match total {
                Some(t) => tape.add(t, own)?,
                None => own,
            },
        };
        Ok(tape.relu(pre))
    }
}

/// `L` levels; the final encodings split into sentence and entity blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RhgnnStack {
    pub mode: PropagationMode,
    pub levels: Vec<RhgnnLevel>,
}

impl RhgnnStack {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        dim: usize,
        num_levels: usize,
        mode: PropagationMode,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if num_levels == 0 {
            return Err(Error::Config("R-HGNN needs at least one level".into()));
        }
        let levels = (0..num_levels)
            .map(|l| RhgnnLevel::new(store, &format!("{prefix}.level{l}"), dim, mode, rng))
            .collect::<Result<_>>()?;
        Ok(RhgnnStack { mode, levels })
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x0: Var, adj: &[Var]) -> Result<Var> {
        let mut x = x0;
        for level in &self.levels {
            x = level.forward(tape, x, adj)?;
        }
        Ok(x)
    }

    /// `(S^(L), E^(L))`; the entity block is `None` when `N = 0`.
    pub fn forward_split<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        x0: Var,
        adj: &[Var],
        num_sentences: usize,
    ) -> Result<(Var, Option<Var>)> {
        let z = self.forward(tape, x0, adj)?;
        let total = tape.shape(z).0;
        let s = tape.slice_rows(z, 0, num_sentences)?;
        let e = if total > num_sentences {
            Some(tape.slice_rows(z, num_sentences, total - num_sentences)?)
        } else {
            None
        };
        Ok((s, e))
    }
}
