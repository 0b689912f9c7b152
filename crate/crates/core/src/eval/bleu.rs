//! Corpus-level BLEU with a single reference per candidate and no smoothing.

use std::collections::HashMap;

use crate::error::{bail, Result};

/// Sufficient statistics for corpus BLEU up to 4-grams.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped n-gram matches, index `n - 1`.
    pub matches: [u64; 4],
    /// Candidate n-gram counts, index `n - 1`.
    pub totals: [u64; 4],
    pub cand_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[u32], n: usize) -> HashMap<&[u32], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn add(&mut self, candidate: &[u32], reference: &[u32]) {
        self.cand_len += candidate.len() as u64;
        self.ref_len += reference.len() as u64;
        for n in 1..=4 {
            let cand = ngram_counts(candidate, n);
            let refs = ngram_counts(reference, n);
            self.matches[n - 1] += cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum::<u64>();
            self.totals[n - 1] += candidate.len().saturating_sub(n - 1) as u64;
        }
    }

    pub fn merge(&mut self, other: &BleuStats) {
        for n in 0..4 {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.cand_len += other.cand_len;
        self.ref_len += other.ref_len;
    }

    /// Geometric mean of modified precisions 1..=max_n times the brevity
    /// penalty. Any zero precision (or an empty n-gram pool) scores 0.
    pub fn score(&self, max_n: usize) -> f64 {
        assert!((1..=4).contains(&max_n), "max_n must be 1..=4");
        if self.cand_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..max_n {
            if self.matches[n] == 0 || self.totals[n] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[n] as f64 / self.totals[n] as f64).ln();
        }
        let c = self.cand_len as f64;
        let r = self.ref_len as f64;
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        bp * (log_sum / max_n as f64).exp()
    }
}

/// Corpus BLEU of `candidates` against one reference each.
pub fn bleu(candidates: &[Vec<u32>], references: &[Vec<u32>], max_n: usize) -> Result<f64> {
    if candidates.is_empty() {
        bail!(Input, "no candidates to score");
    }
    if candidates.len() != references.len() {
        bail!(Input, "{} candidates but {} references", candidates.len(), references.len());
    }
    if !(1..=4).contains(&max_n) {
        bail!(Input, "max_n must lie in 1..=4");
    }
    let mut stats = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        stats.add(c, r);
    }
    Ok(stats.score(max_n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_scores_one() {
        let s = vec![vec![4, 5, 6, 7, 8]];
        assert_eq!(bleu(&s, &s, 1).unwrap(), 1.0);
        assert_eq!(bleu(&s, &s, 4).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_scores_zero() {
        assert_eq!(bleu(&[vec![4, 5]], &[vec![6, 7]], 1).unwrap(), 0.0);
    }

    #[test]
    fn clipping_and_brevity() {
        // "the the the the" vs "the cat": unigram precision clipped to 1/4, no penalty.
        let c = vec![vec![4, 4, 4, 4]];
        let r = vec![vec![4, 5]];
        assert!((bleu(&c, &r, 1).unwrap() - 0.25).abs() < 1e-15);
        // Short candidate: precision 1, penalty exp(1 - 4/2).
        let b = bleu(&[vec![4, 5]], &[vec![4, 5, 6, 7]], 1).unwrap();
        assert!((b - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(bleu(&[], &[], 4).is_err());
        assert!(bleu(&[vec![1]], &[], 4).is_err());
        assert_eq!(bleu(&[vec![]], &[vec![4]], 1).unwrap(), 0.0);
    }
}
