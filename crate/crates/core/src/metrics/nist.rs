//! Information-weighted n-gram precision.

use std::collections::HashMap;

use super::bleu::ngram_counts;

pub const DEFAULT_ORDER: usize = 5;

/// Exponent making the length factor 0.5 at a 2/3 length ratio.
pub fn brevity_beta() -> f64 {
    0.5f64.ln() / (2.0f64 / 3.0).ln().powi(2)
}

pub fn length_factor(ref_len: usize, cand_len: usize) -> f64 {
    if ref_len == 0 {
        return if cand_len == 0 { 0.0 } else { 1.0 };
    }
    let ratio = cand_len as f64 / ref_len as f64;
    if ratio <= 0.0 {
        0.0
    } else if ratio >= 1.0 {
        1.0
    } else {
        (brevity_beta() * ratio.ln().powi(2)).exp()
    }
}

/// Information weights estimated once from a reference corpus.
#[derive(Debug, Clone)]
pub struct InfoWeights {
    order: usize,
    weights: HashMap<Vec<String>, f64>,
}

impl InfoWeights {
    pub fn from_references<'a, I>(references: I, order: usize) -> Self
    where
        I: IntoIterator<Item = &'a [&'a str]>,
    {
        assert!(order >= 1, "nist order must be positive");
        let mut freq: HashMap<Vec<String>, usize> = HashMap::new();
        let mut words = 0usize;
        for r in references {
            words += r.len();
            for n in 1..=order {
                for (g, c) in ngram_counts(r, n) {
                    *freq.entry(g.iter().map(|s| s.to_string()).collect()).or_insert(0) += c;
                }
            }
        }
        let weights = freq
            .iter()
            .map(|(g, &c)| {
                let prefix = if g.len() == 1 {
                    words
                } else {
                    freq.get(&g[..g.len() - 1]).copied().unwrap_or(words)
                };
                (g.clone(), (prefix as f64 / c as f64).log2())
            })
            .collect();
        Self { order, weights }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn info(&self, gram: &[&str]) -> f64 {
        let key: Vec<String> = gram.iter().map(|s| s.to_string()).collect();
        self.weights.get(&key).copied().unwrap_or(0.0)
    }

    // Info-weighted clipped matches and candidate n-gram count for one order.
    fn order_stats(&self, candidate: &[&str], reference: &[&str], n: usize) -> (f64, usize) {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let mut num = 0.0;
        let mut grams: Vec<_> = cand.iter().collect();
        // fixed summation order keeps results bit-stable
        grams.sort();
        for (g, &c) in grams {
            let m = c.min(refs.get(g).copied().unwrap_or(0));
            if m > 0 {
                num += self.info(g) * m as f64;
            }
        }
        (num, cand.values().sum())
    }

    pub fn sentence(&self, candidate: &[&str], reference: &[&str]) -> f64 {
        if candidate.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for n in 1..=self.order {
            let (num, den) = self.order_stats(candidate, reference, n);
            if den > 0 {
                total += num / den as f64;
            }
        }
        total * length_factor(reference.len(), candidate.len())
    }

    /// Sums numerators and denominators over the corpus per order.
    pub fn corpus(&self, pairs: &[(&[&str], &[&str])]) -> f64 {
        let mut num = vec![0.0; self.order];
        let mut den = vec![0usize; self.order];
        let (mut cand_len, mut ref_len) = (0, 0);
        for (c, r) in pairs {
            for n in 1..=self.order {
                let (a, b) = self.order_stats(c, r, n);
                num[n - 1] += a;
                den[n - 1] += b;
            }
            cand_len += c.len();
            ref_len += r.len();
        }
        let precision: f64 = num
            .iter()
            .zip(&den)
            .filter(|(_, &d)| d > 0)
            .map(|(a, &d)| a / d as f64)
            .sum();
        precision * length_factor(ref_len, cand_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_halves_at_two_thirds() {
        assert!((length_factor(3, 2) - 0.5).abs() < 1e-12);
        assert_eq!(length_factor(3, 4), 1.0);
        assert_eq!(length_factor(3, 0), 0.0);
    }

    #[test]
    fn uniform_unigram_info() {
        let vocab = ["a", "b", "c", "d"];
        let refs: Vec<Vec<&str>> = vocab.iter().map(|w| vec![*w]).collect();
        let iw = InfoWeights::from_references(refs.iter().map(|r| r.as_slice()), 5);
        for w in vocab {
            assert!((iw.info(&[w]) - 2.0).abs() < 1e-12);
        }
        assert!((iw.sentence(&["a"], &["a"]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_match_is_zero() {
        let r = vec!["a", "b"];
        let iw = InfoWeights::from_references([r.as_slice()], 5);
        assert_eq!(iw.sentence(&["x", "y"], &r), 0.0);
        assert_eq!(iw.sentence(&[], &r), 0.0);
    }
}
