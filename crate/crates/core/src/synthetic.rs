//! Seeded synthetic ontologies with a known generative rule: every child's
//! definition is its parent's definition plus one extension word.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obo::RawTerm;
use graphex_nn::seeded_rng;

const WORDS: &[&str] = &[
    "amber", "basal", "cobalt", "dorsal", "ember", "fused", "glial", "hollow", "ionic", "jagged", "keratin",
    "lateral", "medial", "nodal", "ovoid", "palmar", "quartz", "radial", "spiral", "tubular", "ulnar", "ventral",
    "woven", "xylem", "yolk", "zonal", "apical", "brachial", "caudal", "distal", "ectopic", "fibrous", "gastric",
    "hepatic", "iliac", "jugular", "kinetic", "lumbar", "mural", "neural",
];

const BASE: &[&str] = &["a", "structure", "that", "is"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub nodes: usize,
    /// Most children any node may have.
    pub max_children: usize,
    /// Size of the extension-word pool (at most 40).
    pub pool: usize,
    pub graph: String,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nodes: 200,
            max_children: 3,
            pool: 24,
            graph: "synthetic".into(),
            seed: 0,
        }
    }
}

/// A random tree grown by attaching each new node to an earlier node that
/// still has room. Node `k` has terminology `"term<k> <word>"` and the
/// definition of its parent followed by `<word>`.
pub fn synthetic_terms(cfg: &SyntheticConfig) -> Result<Vec<RawTerm>> {
    if cfg.nodes == 0 || cfg.max_children == 0 || cfg.pool == 0 || cfg.pool > WORDS.len() {
        return Err(Error::Config(format!(
            "synthetic corpus needs nodes > 0, max_children > 0 and pool in 1..={}",
            WORDS.len()
        )));
    }
    let mut rng = seeded_rng(cfg.seed);
    let pool = &WORDS[..cfg.pool];
    let mut children = vec![0usize; cfg.nodes];
    let mut defs: Vec<Vec<&str>> = Vec::with_capacity(cfg.nodes);
    let mut terms = Vec::with_capacity(cfg.nodes);
    for k in 0..cfg.nodes {
        let word = *pool.choose(&mut rng).expect("non-empty pool");
        let parent = if k == 0 {
            None
        } else {
            let open: Vec<usize> = (0..k).filter(|&p| children[p] < cfg.max_children).collect();
            let p = open[rng.random_range(0..open.len())];
            children[p] += 1;
            Some(p)
        };
        let mut def: Vec<&str> = match parent {
            Some(p) => defs[p].clone(),
            None => BASE.to_vec(),
        };
        def.push(word);
        terms.push(RawTerm {
            id: format!("SYN:{k:05}"),
            name: format!("term{k} {word}"),
            definition: Some(format!("{}.", def.join(" "))),
            synonyms: Vec::new(),
            parents: parent.map(|p| format!("SYN:{p:05}")).into_iter().collect(),
            graph: cfg.graph.clone(),
            db: "synthetic".into(),
        });
        defs.push(def);
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::build_dag;

    #[test]
    fn child_extends_parent_by_one_token() {
        let terms = synthetic_terms(&SyntheticConfig::default()).unwrap();
        let (g, rep) = build_dag("synthetic", &terms).unwrap();
        assert_eq!(g.len(), 200);
        assert_eq!(rep.excluded_undefined, 0);
        for &(p, c) in g.edges() {
            let pd = g.node(p).definition_tokens.as_ref().unwrap();
            let cd = g.node(c).definition_tokens.as_ref().unwrap();
            assert_eq!(cd.len(), pd.len() + 1);
            assert_eq!(cd[..cd.len() - 2], pd[..pd.len() - 1]);
            assert_eq!(cd.last().unwrap(), ".");
        }
        assert!(g.nodes().iter().all(|n| g.children(n.index).len() <= 3));
        assert_eq!(synthetic_terms(&SyntheticConfig::default()).unwrap(), terms);
    }
}
