//! Unigram alignment score with exact, stem and synonym stages.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};

const ALPHA: f64 = 0.9;
const BETA: i32 = 3;
const GAMMA: f64 = 0.5;

/// Word to synonym set. File format: one group per line, whitespace separated;
/// every word in a group is a synonym of every other.
#[derive(Debug, Clone, Default)]
pub struct SynonymTable {
    map: HashMap<String, HashSet<String>>,
}

impl SynonymTable {
    pub fn from_text(text: &str) -> Self {
        let mut map: HashMap<String, HashSet<String>> = HashMap::new();
        for line in text.lines() {
            let group: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
            for w in &group {
                map.entry(w.clone()).or_default().extend(group.iter().cloned());
            }
        }
        Self { map }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_text(&text))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn synonyms(&self, word: &str) -> Option<&HashSet<String>> {
        self.map.get(word)
    }
}

pub struct Meteor {
    stemmer: Stemmer,
    synonyms: Option<SynonymTable>,
}

impl Default for Meteor {
    fn default() -> Self {
        Self::new(None)
    }
}

type Enum = Vec<(usize, String)>;

impl Meteor {
    pub fn new(synonyms: Option<SynonymTable>) -> Self {
        Self {
            stemmer: Stemmer::create(Algorithm::English),
            synonyms,
        }
    }

    pub fn score(&self, candidate: &[&str], reference: &[&str]) -> f64 {
        let hyp: Enum = candidate.iter().map(|w| w.to_lowercase()).enumerate().collect();
        let refs: Enum = reference.iter().map(|w| w.to_lowercase()).enumerate().collect();
        let (hyp_len, ref_len) = (hyp.len(), refs.len());
        let matches = self.align(hyp, refs);
        let m = matches.len();
        if m == 0 || hyp_len == 0 || ref_len == 0 {
            return 0.0;
        }
        let p = m as f64 / hyp_len as f64;
        let r = m as f64 / ref_len as f64;
        let fmean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
        let frag = count_chunks(&matches) as f64 / m as f64;
        (1.0 - GAMMA * frag.powi(BETA)) * fmean
    }

    /// Matched (hypothesis index, reference index) pairs sorted by hypothesis index.
    pub fn align(&self, hyp: Enum, refs: Enum) -> Vec<(usize, usize)> {
        let (mut matches, hyp, refs) = match_exact(hyp, refs);
        let stem = |l: Enum| -> Enum {
            l.into_iter()
                .map(|(i, w)| (i, self.stemmer.stem(&w).into_owned()))
                .collect()
        };
        let (stemmed, hyp, refs) = match_exact(stem(hyp), stem(refs));
        matches.extend(stemmed);
        if let Some(table) = &self.synonyms {
            matches.extend(match_synonyms(table, hyp, refs));
        }
        matches.sort_by_key(|m| m.0);
        matches
    }
}

// Walks the hypothesis from the end, pairing each word with the latest
// unused reference position holding the same string.
fn match_exact(hyp: Enum, refs: Enum) -> (Vec<(usize, usize)>, Enum, Enum) {
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, (_, w)) in refs.iter().enumerate() {
        positions.entry(w.as_str()).or_default().push(j);
    }
    let mut matches = Vec::new();
    let mut used_h = vec![false; hyp.len()];
    let mut used_r = vec![false; refs.len()];
    for i in (0..hyp.len()).rev() {
        if let Some(j) = positions.get_mut(hyp[i].1.as_str()).and_then(Vec::pop) {
            used_h[i] = true;
            used_r[j] = true;
            matches.push((hyp[i].0, refs[j].0));
        }
    }
    let keep = |l: Enum, used: &[bool]| -> Enum {
        l.into_iter().zip(used).filter(|(_, &u)| !u).map(|(p, _)| p).collect()
    };
    (matches, keep(hyp, &used_h), keep(refs, &used_r))
}

fn match_synonyms(table: &SynonymTable, hyp: Enum, refs: Enum) -> Vec<(usize, usize)> {
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, (_, w)) in refs.iter().enumerate() {
        positions.entry(w.as_str()).or_default().push(j);
    }
    let mut matches = Vec::new();
    for i in (0..hyp.len()).rev() {
        let word = hyp[i].1.as_str();
        let mut best: Option<(usize, &str)> = None;
        let candidates = table
            .synonyms(word)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
            .chain(std::iter::once(word));
        for syn in candidates {
            if let Some(&j) = positions.get(syn).and_then(|p| p.last()) {
                if best.is_none_or(|(b, _)| j > b) {
                    best = Some((j, syn));
                }
            }
        }
        if let Some((j, syn)) = best {
            positions.get_mut(syn).unwrap().pop();
            matches.push((hyp[i].0, refs[j].0));
        }
    }
    matches
}

/// Fewest runs of matches adjacent in both hypothesis and reference.
pub fn count_chunks(matches: &[(usize, usize)]) -> usize {
    if matches.is_empty() {
        return 0;
    }
    1 + matches
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}
