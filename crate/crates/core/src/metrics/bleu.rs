//! Clipped n-gram precision scores.

use std::collections::HashMap;

/// Smoothing constant substituted for zero numerators at sentence level.
pub const EPSILON: f64 = 1e-9;

pub(crate) fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and candidate n-gram total for one order. The total is
/// floored at 1 so an empty candidate yields a defined ratio.
pub fn modified_precision(candidate: &[&str], reference: &[&str], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    let total: usize = cand.values().sum();
    (matched, total.max(1))
}

pub fn brevity_penalty(ref_len: usize, cand_len: usize) -> f64 {
    if cand_len > ref_len {
        1.0
    } else if cand_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

fn geometric(precisions: &[(usize, usize)], smooth: bool) -> f64 {
    let w = 1.0 / precisions.len() as f64;
    let mut s = 0.0;
    for &(num, den) in precisions {
        let p = if num > 0 {
            num as f64 / den as f64
        } else if smooth {
            EPSILON / den as f64
        } else {
            return 0.0;
        };
        s += w * p.ln();
    }
    s.exp()
}

/// Sentence BLEU-n with uniform weights and add-epsilon smoothing.
pub fn sentence_bleu(candidate: &[&str], reference: &[&str], n: usize) -> f64 {
    assert!((1..=4).contains(&n), "bleu order must be in 1..=4");
    let ps: Vec<_> = (1..=n).map(|i| modified_precision(candidate, reference, i)).collect();
    if ps[0].0 == 0 {
        return 0.0;
    }
    brevity_penalty(reference.len(), candidate.len()) * geometric(&ps, true)
}

/// Corpus-level accumulator: counts are summed before the geometric mean.
#[derive(Debug, Clone, Default)]
pub struct CorpusBleu {
    matched: [usize; 4],
    total: [usize; 4],
    cand_len: usize,
    ref_len: usize,
}

impl CorpusBleu {
    pub fn add(&mut self, candidate: &[&str], reference: &[&str]) {
        for n in 1..=4 {
            let (m, t) = modified_precision(candidate, reference, n);
            self.matched[n - 1] += m;
            self.total[n - 1] += t;
        }
        self.cand_len += candidate.len();
        self.ref_len += reference.len();
    }

    /// Unsmoothed corpus BLEU-n; any zero precision gives 0.
    pub fn score(&self, n: usize) -> f64 {
        assert!((1..=4).contains(&n), "bleu order must be in 1..=4");
        if self.matched[0] == 0 {
            return 0.0;
        }
        let ps: Vec<_> = (0..n).map(|i| (self.matched[i], self.total[i])).collect();
        brevity_penalty(self.ref_len, self.cand_len) * geometric(&ps, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_one() {
        let a = toks("the cat sat on the mat");
        for n in 1..=4 {
            assert!((sentence_bleu(&a, &a, n) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn short_candidate_brevity() {
        let s = sentence_bleu(&toks("the cat"), &toks("the cat sat"), 1);
        assert!((s - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn disjoint_and_empty() {
        assert_eq!(sentence_bleu(&toks("a b"), &toks("c d"), 2), 0.0);
        assert_eq!(sentence_bleu(&[], &toks("c d"), 1), 0.0);
    }

    #[test]
    fn clipping() {
        assert_eq!(modified_precision(&toks("the the the"), &toks("the cat"), 1), (1, 3));
    }

    #[test]
    fn corpus_sums_counts() {
        let mut c = CorpusBleu::default();
        c.add(&toks("a b"), &toks("a b"));
        c.add(&toks("x"), &toks("y"));
        assert!((c.score(1) - 2.0 / 3.0).abs() < 1e-12);
        // the one-token candidate has no bigrams but still adds 1 to the denominator
        assert!((c.score(2) - (2.0f64 / 3.0 * 0.5).sqrt()).abs() < 1e-12);
        assert_eq!(c.score(3), 0.0);
    }
}
