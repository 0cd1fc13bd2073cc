//! ROUGE-1/2/L over token sequences.
//!
//! Tokens are lowercased before comparison. There is no stemming and no
//! stopword removal, so scores are not byte-comparable with the official
//! Perl toolkit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let precision = ratio(overlap, candidate_total);
        let recall = ratio(overlap, reference_total);
        Self::from_pr(precision, recall)
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeMetric {
    Rouge1,
    Rouge2,
    RougeL,
}

/// R-1, R-2 and R-L for one candidate/reference pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

impl RougeTriple {
    pub fn compute<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Self {
        RougeTriple {
            rouge1: rouge_n(candidate, reference, 1),
            rouge2: rouge_n(candidate, reference, 2),
            rouge_l: rouge_l(candidate, reference),
        }
    }

    pub fn get(&self, metric: RougeMetric) -> RougeScore {
        match metric {
            RougeMetric::Rouge1 => self.rouge1,
            RougeMetric::Rouge2 => self.rouge2,
            RougeMetric::RougeL => self.rouge_l,
        }
    }

    /// Componentwise mean; all zeros for an empty slice.
    pub fn mean(items: &[RougeTriple]) -> RougeTriple {
        if items.is_empty() {
            return RougeTriple::default();
        }
        let n = items.len() as f64;
        let avg = |f: fn(&RougeTriple) -> RougeScore| RougeScore {
            precision: items.iter().map(|t| f(t).precision).sum::<f64>() / n,
            recall: items.iter().map(|t| f(t).recall).sum::<f64>() / n,
            f1: items.iter().map(|t| f(t).f1).sum::<f64>() / n,
        };
        RougeTriple {
            rouge1: avg(|t| t.rouge1),
            rouge2: avg(|t| t.rouge2),
            rouge_l: avg(|t| t.rouge_l),
        }
    }
}

fn lower<T: AsRef<str>>(tokens: &[T]) -> Vec<String> {
    tokens.iter().map(|t| t.as_ref().to_lowercase()).collect()
}

/// Multiset of n-grams of a lowercased token sequence.
#[derive(Debug, Clone, Default)]
pub struct NgramCounts {
    counts: HashMap<Vec<String>, usize>,
    total: usize,
}

impl NgramCounts {
    pub fn new<T: AsRef<str>>(tokens: &[T], n: usize) -> Self {
        let lowered = lower(tokens);
        let mut counts = HashMap::new();
        let mut total = 0;
        if n > 0 && lowered.len() >= n {
            for gram in lowered.windows(n) {
                *counts.entry(gram.to_vec()).or_insert(0) += 1;
                total += 1;
            }
        }
        NgramCounts { counts, total }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Multiset union; n-grams never span the two operands.
    pub fn merge(&mut self, other: &NgramCounts) {
        for (g, &c) in &other.counts {
            *self.counts.entry(g.clone()).or_insert(0) += c;
        }
        self.total += other.total;
    }

    /// Clipped overlap: Σ min(count_self, count_other).
    pub fn overlap(&self, other: &NgramCounts) -> usize {
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .counts
            .iter()
            .map(|(g, &c)| c.min(large.counts.get(g).copied().unwrap_or(0)))
            .sum()
    }
}

/// ROUGE-N with clipped n-gram overlap. An empty reference scores zero.
pub fn rouge_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    let cand = NgramCounts::new(candidate, n);
    let refc = NgramCounts::new(reference, n);
    if refc.total == 0 {
        return RougeScore::default();
    }
    RougeScore::from_counts(cand.overlap(&refc), cand.total, refc.total)
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let (a, b) = (lower(a), lower(b));
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in &a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sentence-level ROUGE-L from the LCS length.
pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> RougeScore {
    if reference.is_empty() {
        return RougeScore::default();
    }
    let l = lcs_len(candidate, reference);
    RougeScore::from_counts(l, candidate.len(), reference.len())
}

/// Scores `candidate` truncated to its first `limit` tokens.
pub fn limited_length_recall<T: AsRef<str>>(
    candidate: &[T],
    reference: &[T],
    limit: usize,
    metric: RougeMetric,
) -> RougeScore {
    let cut = &candidate[..candidate.len().min(limit)];
    match metric {
        RougeMetric::Rouge1 => rouge_n(cut, reference, 1),
        RougeMetric::Rouge2 => rouge_n(cut, reference, 2),
        RougeMetric::RougeL => rouge_l(cut, reference),
    }
}
