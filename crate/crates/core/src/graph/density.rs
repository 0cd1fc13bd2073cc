use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::{oracle_entity_labels, AnnotatedDocument, CooccurrenceTable, Split};
use crate::error::{Error, Result};
use crate::graph::{build_graph, se_density};

/// Histogram bin index of width 0.1, left-inclusive, computed exactly:
/// `floor(10 (SE.Count + 1) / (M + N))`.
pub fn density_bin(se_count: usize, num_nodes: usize) -> usize {
    10 * (se_count + 1) / num_nodes
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocDensity {
    pub id: String,
    pub split: Split,
    pub se_count: usize,
    pub num_nodes: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_start: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub documents: Vec<DocDensity>,
    pub mean: f64,
    pub histogram: Vec<HistogramBin>,
}

impl DensityReport {
    pub fn compute(docs: &[AnnotatedDocument]) -> Result<Self> {
        let empty = CooccurrenceTable::new();
        let mut documents = Vec::with_capacity(docs.len());
        let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
        for doc in docs {
            let g = build_graph(doc, &empty);
            let density = se_density(&g)?;
            *bins.entry(density_bin(g.se_count(), g.num_nodes())).or_insert(0) += 1;
            documents.push(DocDensity {
                id: doc.id.clone(),
                split: doc.split_or_train(),
                se_count: g.se_count(),
                num_nodes: g.num_nodes(),
                density,
            });
        }
        let mean = if documents.is_empty() {
            0.0
        } else {
            documents.iter().map(|d| d.density).sum::<f64>() / documents.len() as f64
        };
        let histogram = bins
            .into_iter()
            .map(|(b, count)| HistogramBin {
                bin_start: b as f64 / 10.0,
                count,
            })
            .collect();
        Ok(DensityReport {
            documents,
            mean,
            histogram,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `bin_start,count` lines with a header.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("bin_start,count\n");
        for b in &self.histogram {
            s.push_str(&format!("{:.1},{}\n", b.bin_start, b.count));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdOp {
    Lt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityThreshold {
    pub op: ThresholdOp,
    pub value: f64,
}

impl DensityThreshold {
    pub fn lt(value: f64) -> Self {
        DensityThreshold {
            op: ThresholdOp::Lt,
            value,
        }
    }

    pub fn ge(value: f64) -> Self {
        DensityThreshold {
            op: ThresholdOp::Ge,
            value,
        }
    }

    pub fn accepts(&self, density: f64) -> bool {
        match self.op {
            ThresholdOp::Lt => density < self.value,
            ThresholdOp::Ge => density >= self.value,
        }
    }

    /// File-name friendly label such as `lt0.7`.
    pub fn label(&self) -> String {
        let op = match self.op {
            ThresholdOp::Lt => "lt",
            ThresholdOp::Ge => "ge",
        };
        format!("{op}{}", self.value)
    }
}

impl fmt::Display for DensityThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            ThresholdOp::Lt => "<",
            ThresholdOp::Ge => ">=",
        };
        write!(f, "{op}{}", self.value)
    }
}

impl FromStr for DensityThreshold {
    type Err = Error;

    /// Accepts `<0.7`, `>=0.6`, `≥0.6`, `lt0.7` and `ge0.6`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (op, rest) = if let Some(r) = s.strip_prefix(">=") {
            (ThresholdOp::Ge, r)
        } else if let Some(r) = s.strip_prefix('≥') {
            (ThresholdOp::Ge, r)
        } else if let Some(r) = s.strip_prefix("ge") {
            (ThresholdOp::Ge, r)
        } else if let Some(r) = s.strip_prefix('<') {
            (ThresholdOp::Lt, r)
        } else if let Some(r) = s.strip_prefix("lt") {
            (ThresholdOp::Lt, r)
        } else {
            return Err(Error::Config(format!("density threshold {s:?} must start with < or >=")));
        };
        let value = rest
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Config(format!("density threshold {s:?}: {e}")))?;
        Ok(DensityThreshold { op, value })
    }
}

/// One sub-corpus per threshold, each keeping documents in input order
/// along with their original split.
pub fn partition_by_density(
    docs: &[AnnotatedDocument],
    thresholds: &[DensityThreshold],
) -> Result<Vec<(DensityThreshold, Vec<AnnotatedDocument>)>> {
    let report = DensityReport::compute(docs)?;
    Ok(thresholds
        .iter()
        .map(|t| {
            let sub = docs
                .iter()
                .zip(&report.documents)
                .filter(|(_, d)| t.accepts(d.density))
                .map(|(doc, _)| doc.clone())
                .collect();
            (*t, sub)
        })
        .collect())
}

/// Corpus-level averages in the layout of the usual dataset statistics
/// table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Sentences per document.
    pub doc_sent: f64,
    /// Sentences per reference summary.
    pub sum_sent: f64,
    /// Entities per document.
    pub doc_ent: f64,
    /// Entities per document that occur in the reference summary.
    pub sum_ent: f64,
    /// Mentions per sentence, over the whole corpus.
    pub sent_men: f64,
    /// Entities per document carrying a KG id.
    pub ent_yago: f64,
    pub se_density: f64,
}

pub fn corpus_stats(docs: &[AnnotatedDocument]) -> Result<CorpusStats> {
    let n = docs.len().max(1) as f64;
    let count = |s: Split| docs.iter().filter(|d| d.split_or_train() == s).count();
    let total_sent: usize = docs.iter().map(|d| d.num_sentences()).sum();
    let total_mentions: usize = docs.iter().map(|d| d.num_mentions()).sum();
    let sum_ent: usize = docs
        .iter()
        .map(|d| match &d.oracle_entity_labels {
            Some(l) => l.iter().map(|&x| x as usize).sum::<usize>(),
            None => oracle_entity_labels(d).iter().map(|&x| x as usize).sum(),
        })
        .sum();
    Ok(CorpusStats {
        train: count(Split::Train),
        dev: count(Split::Dev),
        test: count(Split::Test),
        doc_sent: total_sent as f64 / n,
        sum_sent: docs.iter().map(|d| d.summary.len()).sum::<usize>() as f64 / n,
        doc_ent: docs.iter().map(|d| d.num_entities()).sum::<usize>() as f64 / n,
        sum_ent: sum_ent as f64 / n,
        sent_men: if total_sent == 0 {
            0.0
        } else {
            total_mentions as f64 / total_sent as f64
        },
        ent_yago: docs
            .iter()
            .map(|d| d.entities.iter().filter(|e| e.is_linked()).count())
            .sum::<usize>() as f64
            / n,
        se_density: DensityReport::compute(docs)?.mean,
    })
}
