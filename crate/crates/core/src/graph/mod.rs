//! Sentence-entity graph construction and SE.Density tooling.
//!
//! Node indices: sentences occupy `0..M`, entities `M..M+N`.

mod density;

use std::collections::BTreeMap;

use crate::autodiff::Tensor;
use crate::corpus::{AnnotatedDocument, CooccurrenceTable};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use density::{
    corpus_stats, density_bin, partition_by_density, CorpusStats, DensityReport, DensityThreshold,
    ThresholdOp,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    SentSent,
    SentEnt,
    EntEnt,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::SentSent, EdgeType::SentEnt, EdgeType::EntEnt];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::SentSent => "SS",
            EdgeType::SentEnt => "SE",
            EdgeType::EntEnt => "EE",
        }
    }
}

/// Undirected weighted edge, stored once with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEntityGraph {
    pub num_sentences: usize,
    pub num_entities: usize,
    ss: Vec<Edge>,
    se: Vec<Edge>,
    ee: Vec<Edge>,
}

impl SentenceEntityGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_sentences + self.num_entities
    }

    pub fn edges(&self, t: EdgeType) -> &[Edge] {
        match t {
            EdgeType::SentSent => &self.ss,
            EdgeType::SentEnt => &self.se,
            EdgeType::EntEnt => &self.ee,
        }
    }

    /// Graph from explicit edge lists; each list is canonicalized to `a < b`
    /// with zero-weight edges dropped.
    pub fn from_edges(
        num_sentences: usize,
        num_entities: usize,
        ss: Vec<Edge>,
        se: Vec<Edge>,
        ee: Vec<Edge>,
    ) -> Result<Self> {
        let n = num_sentences + num_entities;
        let canon = |edges: Vec<Edge>, t: EdgeType| -> Result<Vec<Edge>> {
            let mut out = BTreeMap::new();
            for e in edges {
                let (a, b) = (e.a.min(e.b), e.a.max(e.b));
                if b >= n || a == b {
                    return Err(Error::Invalid(format!(
                        "{} edge ({}, {}) invalid for {n} nodes",
                        t.as_str(),
                        e.a,
                        e.b
                    )));
                }
                if !(e.weight >= 0.0) {
                    return Err(Error::Invalid(format!("{} edge weight {} is negative", t.as_str(), e.weight)));
                }
                if e.weight > 0.0 {
                    out.insert((a, b), e.weight);
                }
            }
            Ok(out.into_iter().map(|((a, b), weight)| Edge { a, b, weight }).collect())
        };
        Ok(SentenceEntityGraph {
            num_sentences,
            num_entities,
            ss: canon(ss, EdgeType::SentSent)?,
            se: canon(se, EdgeType::SentEnt)?,
            ee: canon(ee, EdgeType::EntEnt)?,
        })
    }

    /// Symmetric dense `(M+N)×(M+N)` adjacency of one edge type.
    pub fn dense<S: Scalar>(&self, t: EdgeType) -> Tensor<S> {
        let n = self.num_nodes();
        let mut out = Tensor::zeros(n, n);
        for e in self.edges(t) {
            let w = S::from_f64_lossy(e.weight);
            out.set(e.a, e.b, w);
            out.set(e.b, e.a, w);
        }
        out
    }

    /// Number of distinct sentence-entity pairs with nonzero weight.
    pub fn se_count(&self) -> usize {
        self.se.len()
    }

    /// Edge lists with the named types emptied.
    pub fn without(&self, types: &[EdgeType]) -> Self {
        let mut g = self.clone();
        for t in types {
            match t {
                EdgeType::SentSent => g.ss.clear(),
                EdgeType::SentEnt => g.se.clear(),
                EdgeType::EntEnt => g.ee.clear(),
            }
        }
        g
    }
}

/// SS edges between consecutive sentences (weight 1), SE edges weighted by
/// mention count, EE edges between linked entities weighted by KB
/// co-occurrence.
pub fn build_graph(doc: &AnnotatedDocument, cooc: &CooccurrenceTable) -> SentenceEntityGraph {
    let m = doc.num_sentences();
    let ss = (1..m)
        .map(|i| Edge {
            a: i - 1,
            b: i,
            weight: 1.0,
        })
        .collect();
    let mut se_counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (j, e) in doc.entities.iter().enumerate() {
        for mention in &e.mentions {
            *se_counts.entry((mention.sent, m + j)).or_insert(0.0) += 1.0;
        }
    }
    let se = se_counts
        .into_iter()
        .map(|((a, b), weight)| Edge { a, b, weight })
        .collect();
    let mut ee = Vec::new();
    for (j1, e1) in doc.entities.iter().enumerate() {
        let Some(id1) = &e1.kg_id else { continue };
        for (j2, e2) in doc.entities.iter().enumerate().skip(j1 + 1) {
            let Some(id2) = &e2.kg_id else { continue };
            let c = cooc.get(id1, id2);
            if c > 0 {
                ee.push(Edge {
                    a: m + j1,
                    b: m + j2,
                    weight: c as f64,
                });
            }
        }
    }
    SentenceEntityGraph {
        num_sentences: m,
        num_entities: doc.num_entities(),
        ss,
        se,
        ee,
    }
}

/// `(SE.Count + 1) / (M + N)`.
pub fn se_density(graph: &SentenceEntityGraph) -> Result<f64> {
    let n = graph.num_nodes();
    if n == 0 {
        return Err(Error::Invalid("SE.Density of an empty graph".into()));
    }
    Ok((graph.se_count() + 1) as f64 / n as f64)
}
