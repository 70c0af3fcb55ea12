//! Curation consistency, graph-distance versus text-similarity profiles and
//! the graph-selection rule.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{DataSplit, OntologyDag};
use crate::metrics::sentence_bleu;
use crate::obo::RawTerm;
use crate::stats::spearman;
use crate::text::{first_sentence, tokenize};

pub const DEFAULT_PAIR_BUDGET: usize = 2000;
pub const DEFAULT_THRESHOLD: f64 = -0.3;

/// Cosine similarity of bag-of-token count vectors.
pub fn bag_cosine<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    fn count<S: AsRef<str>>(xs: &[S]) -> HashMap<&str, f64> {
        let mut m = HashMap::new();
        for x in xs {
            *m.entry(x.as_ref()).or_insert(0.0) += 1.0;
        }
        m
    }
    let (ca, cb) = (count(a), count(b));
    let dot: f64 = ca.iter().map(|(k, v)| v * cb.get(k).copied().unwrap_or(0.0)).sum();
    let na = ca.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = cb.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    /// Mean cosine between definitions of the same terminology in different graphs.
    pub same_term: Option<f64>,
    pub same_term_pairs: usize,
    /// Mean cosine between definitions linked by a synonym in different graphs.
    pub synonym: Option<f64>,
    pub synonym_pairs: usize,
}

fn key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Compares definitions of terms shared across graphs, matching by exact
/// lowercased terminology and separately through synonym lists.
pub fn curation_consistency(terms: &[RawTerm]) -> Consistency {
    let defined: Vec<(&RawTerm, Vec<String>)> = terms
        .iter()
        .filter(|t| t.has_definition())
        .map(|t| (t, tokenize(first_sentence(t.definition.as_deref().unwrap_or("")))))
        .collect();
    let mut by_name: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, (t, _)) in defined.iter().enumerate() {
        by_name.entry(key(&t.name)).or_default().push(i);
    }

    let mut same = Vec::new();
    for group in by_name.values() {
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                if defined[i].0.graph != defined[j].0.graph {
                    same.push(bag_cosine(&defined[i].1, &defined[j].1));
                }
            }
        }
    }

    let mut syn = Vec::new();
    for (t, toks) in &defined {
        let mut seen = Vec::new();
        for s in &t.synonyms {
            let k = key(s);
            if k == key(&t.name) {
                continue;
            }
            for &j in by_name.get(&k).map(Vec::as_slice).unwrap_or(&[]) {
                if defined[j].0.graph != t.graph && !seen.contains(&j) {
                    seen.push(j);
                    syn.push(bag_cosine(toks, &defined[j].1));
                }
            }
        }
    }

    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Consistency {
        same_term: mean(&same),
        same_term_pairs: same.len(),
        synonym: mean(&syn),
        synonym_pairs: syn.len(),
    }
}

/// Symmetrized sentence BLEU-1.
pub fn text_similarity<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    let a: Vec<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = b.iter().map(AsRef::as_ref).collect();
    0.5 * (sentence_bleu(&a, &b, 1) + sentence_bleu(&b, &a, 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub distance: usize,
    pub pairs: Vec<(usize, usize)>,
    pub terminology: Vec<f64>,
    pub definition: Vec<f64>,
}

impl Bucket {
    pub fn mean_terminology(&self) -> f64 {
        self.terminology.iter().sum::<f64>() / self.terminology.len() as f64
    }

    pub fn mean_definition(&self) -> f64 {
        self.definition.iter().sum::<f64>() / self.definition.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile {
    pub graph: String,
    pub buckets: Vec<Bucket>,
    /// Spearman correlation between bucket distance and mean similarity.
    pub terminology_correlation: Option<f64>,
    pub definition_correlation: Option<f64>,
}

fn bucket_correlation(buckets: &[Bucket], f: impl Fn(&Bucket) -> f64) -> Option<f64> {
    if buckets.len() < 2 {
        return None;
    }
    let d: Vec<f64> = buckets.iter().map(|b| b.distance as f64).collect();
    let s: Vec<f64> = buckets.iter().map(f).collect();
    // flat similarity carries no trend
    Some(spearman(&d, &s).unwrap_or(0.0))
}

/// Samples up to `budget` connected pairs of training nodes per distance by
/// reservoir sampling over all pairs, then scores terminology and definition
/// similarity. Only training definitions are read.
pub fn distance_similarity_profile(
    g: &OntologyDag,
    split: &DataSplit,
    budget: usize,
    seed: u64,
) -> SimilarityProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = &split.train;
    let mut reservoirs: BTreeMap<usize, (usize, Vec<(usize, usize)>)> = BTreeMap::new();
    for (a, &i) in train.iter().enumerate() {
        let dist = g.distances_from(i);
        for &j in &train[a + 1..] {
            let Some(d) = dist[j] else { continue };
            let (seen, res) = reservoirs.entry(d).or_default();
            *seen += 1;
            if res.len() < budget {
                res.push((i, j));
            } else {
                let k = rng.random_range(0..*seen);
                if k < budget {
                    res[k] = (i, j);
                }
            }
        }
    }
    let def = |i: usize| g.node(i).definition_tokens.as_deref().unwrap_or(&[]);
    let buckets: Vec<Bucket> = reservoirs
        .into_iter()
        .filter(|(_, (_, r))| !r.is_empty())
        .map(|(distance, (_, mut pairs))| {
            pairs.sort_unstable();
            Bucket {
                distance,
                terminology: pairs
                    .iter()
                    .map(|&(i, j)| text_similarity(&g.node(i).terminology, &g.node(j).terminology))
                    .collect(),
                definition: pairs.iter().map(|&(i, j)| text_similarity(def(i), def(j))).collect(),
                pairs,
            }
        })
        .collect();
    SimilarityProfile {
        graph: g.name.clone(),
        terminology_correlation: bucket_correlation(&buckets, Bucket::mean_terminology),
        definition_correlation: bucket_correlation(&buckets, Bucket::mean_definition),
        buckets,
    }
}

/// Graphs whose definition similarity decays with distance at least as
/// strongly as `threshold`.
pub fn select_graphs(profiles: &[SimilarityProfile], threshold: f64) -> Vec<String> {
    profiles
        .iter()
        .filter(|p| p.definition_correlation.is_some_and(|c| c <= threshold))
        .map(|p| p.graph.clone())
        .collect()
}
