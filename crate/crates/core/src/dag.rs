//! Ontology DAG `G = (V, E, T, D)`: construction from raw terms, traversal
//! primitives, random-walk sampling and the per-graph data split.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obo::RawTerm;
use crate::text::{first_sentence, tokenize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermNode {
    pub index: usize,
    pub term_id: String,
    /// Terminology text as curated.
    pub name: String,
    /// First sentence of the curated definition, if visible.
    pub definition: Option<String>,
    pub terminology: Vec<String>,
    pub definition_tokens: Option<Vec<String>>,
}

impl TermNode {
    pub fn new(index: usize, term_id: &str, name: &str, definition: Option<&str>) -> Self {
        let definition = definition.map(|d| first_sentence(d.trim()).to_string());
        Self {
            index,
            term_id: term_id.to_string(),
            name: name.to_string(),
            definition_tokens: definition.as_deref().map(tokenize),
            terminology: tokenize(name),
            definition,
        }
    }

    pub fn has_definition(&self) -> bool {
        self.definition_tokens.as_ref().is_some_and(|d| !d.is_empty())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotHeader {
    format: String,
    name: String,
    nodes: usize,
    edges: usize,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    header: SnapshotHeader,
    nodes: Vec<TermNode>,
    edges: Vec<(usize, usize)>,
}

const SNAPSHOT_FORMAT: &str = "graphex-dag/1";

/// Immutable directed acyclic graph with coarse-to-fine edges.
#[derive(Debug, Clone, PartialEq)]
pub struct OntologyDag {
    pub name: String,
    nodes: Vec<TermNode>,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct BuildReport {
    pub excluded_undefined: usize,
    pub rejected_empty: usize,
    pub dropped_back_edges: Vec<(String, String)>,
}

impl OntologyDag {
    /// Builds the adjacency and verifies every invariant (valid endpoints,
    /// acyclicity, at least one root).
    pub fn new(name: &str, nodes: Vec<TermNode>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = nodes.len();
        if nodes.iter().enumerate().any(|(i, node)| node.index != i) {
            return Err(Error::Invalid("node indices must be dense and ordered".into()));
        }
        let edge_set: BTreeSet<(usize, usize)> = edges.into_iter().collect();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(p, c) in &edge_set {
            if p >= n || c >= n {
                return Err(Error::Invalid(format!("edge ({p}, {c}) out of range")));
            }
            if p == c {
                return Err(Error::Invalid(format!("self loop at {p}")));
            }
            parents[c].push(p);
            children[p].push(c);
        }
        let neighbors = (0..n)
            .map(|i| {
                let mut v: Vec<usize> = parents[i].iter().chain(&children[i]).copied().collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let dag = Self {
            name: name.to_string(),
            nodes,
            edges: edge_set.into_iter().collect(),
            parents,
            children,
            neighbors,
        };
        if n > 0 && dag.topological_order().is_none() {
            return Err(Error::Invalid(format!("graph {name} contains a cycle")));
        }
        if n > 0 && dag.roots().is_empty() {
            return Err(Error::Invalid(format!("graph {name} has no root")));
        }
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TermNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TermNode {
        &self.nodes[i]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Neighbors in the undirected view of E.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.children[parent].binary_search(&child).is_ok()
    }

    pub fn index_of(&self, term_id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.term_id == term_id)
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.parents[i].is_empty()).collect()
    }

    /// Kahn's algorithm; `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == self.len()).then_some(order)
    }

    /// BFS distance in the undirected view; `None` when unreachable.
    pub fn shortest_distance(&self, a: usize, b: usize) -> Option<usize> {
        self.distances_from(a)[b]
    }

    pub fn distances_from(&self, a: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[a] = Some(0);
        let mut queue = VecDeque::from([a]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or(0);
            for &w in &self.neighbors[v] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// `1 + min directed distance from any root`, so roots have depth 1.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.len()];
        let mut queue = VecDeque::new();
        for r in self.roots() {
            depth[r] = 1;
            queue.push_back(r);
        }
        while let Some(v) = queue.pop_front() {
            for &c in &self.children[v] {
                if depth[c] == 0 {
                    depth[c] = depth[v] + 1;
                    queue.push_back(c);
                }
            }
        }
        depth
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depths()[v]
    }

    /// Copy in which only nodes in `visible` keep their definitions.
    pub fn with_visible_definitions(&self, visible: &BTreeSet<usize>) -> OntologyDag {
        let mut out = self.clone();
        for node in &mut out.nodes {
            if !visible.contains(&node.index) {
                node.definition = None;
                node.definition_tokens = None;
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let snap = Snapshot {
            header: SnapshotHeader {
                format: SNAPSHOT_FORMAT.into(),
                name: self.name.clone(),
                nodes: self.len(),
                edges: self.edges.len(),
            },
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        };
        let text = serde_json::to_string(&snap)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snap: Snapshot = serde_json::from_str(&text)?;
        if snap.header.format != SNAPSHOT_FORMAT {
            return Err(Error::format("dag snapshot", format!("unknown format {}", snap.header.format)));
        }
        if snap.header.nodes != snap.nodes.len() || snap.header.edges != snap.edges.len() {
            return Err(Error::format("dag snapshot", "header counts disagree with tables"));
        }
        Self::new(&snap.header.name, snap.nodes, snap.edges)
    }
}

/// Builds one DAG from the terms of a merged graph.
///
/// Terms without a curated definition are excluded; edges through an
/// excluded term are contracted so the surviving hierarchy stays connected.
/// Cycles are broken by repeatedly dropping the last back edge found by a
/// depth-first search in index order.
pub fn build_dag(name: &str, terms: &[RawTerm]) -> Result<(OntologyDag, BuildReport)> {
    let mut report = BuildReport::default();
    let by_id: HashMap<&str, &RawTerm> = terms.iter().map(|t| (t.id.as_str(), t)).collect();

    let mut kept: Vec<&RawTerm> = Vec::new();
    for t in terms {
        if !t.has_definition() {
            report.excluded_undefined += 1;
            continue;
        }
        let node = TermNode::new(0, &t.id, &t.name, t.definition.as_deref());
        if node.terminology.is_empty() || !node.has_definition() {
            report.rejected_empty += 1;
            continue;
        }
        kept.push(t);
    }
    kept.sort_by(|a, b| a.id.cmp(&b.id));
    kept.dedup_by(|a, b| a.id == b.id);
    let index: HashMap<&str, usize> = kept.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();

    let mut edges = BTreeSet::new();
    for (ci, t) in kept.iter().enumerate() {
        let mut stack: Vec<&str> = t.parents.iter().map(String::as_str).collect();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        while let Some(p) = stack.pop() {
            if !seen.insert(p) {
                continue;
            }
            if let Some(&pi) = index.get(p) {
                if pi != ci {
                    edges.insert((pi, ci));
                }
            } else if let Some(raw) = by_id.get(p) {
                stack.extend(raw.parents.iter().map(String::as_str));
            }
        }
    }

    let mut edges: Vec<(usize, usize)> = edges.into_iter().collect();
    loop {
        let back = back_edges(kept.len(), &edges);
        let Some(&last) = back.last() else { break };
        log::warn!(
            "graph {name}: dropping back edge {} -> {}",
            kept[last.0].id,
            kept[last.1].id
        );
        report
            .dropped_back_edges
            .push((kept[last.0].id.clone(), kept[last.1].id.clone()));
        edges.retain(|&e| e != last);
    }

    let nodes = kept
        .iter()
        .enumerate()
        .map(|(i, t)| TermNode::new(i, &t.id, &t.name, t.definition.as_deref()))
        .collect();
    Ok((OntologyDag::new(name, nodes, edges)?, report))
}

fn back_edges(n: usize, edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut children = vec![Vec::new(); n];
    for &(p, c) in edges {
        children[p].push(c);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut found = Vec::new();
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some(top) = stack.last_mut() {
            let v = top.0;
            if let Some(&c) = children[v].get(top.1) {
                top.1 += 1;
                match state[c] {
                    0 => {
                        state[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => found.push((v, c)),
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
    }
    found
}

/// Groups raw terms by graph and builds each DAG, in graph-name order.
pub fn build_all(terms: &[RawTerm]) -> Result<Vec<(OntologyDag, BuildReport)>> {
    let mut groups: BTreeMap<&str, Vec<RawTerm>> = BTreeMap::new();
    for t in terms {
        groups.entry(t.graph.as_str()).or_default().push(t.clone());
    }
    groups.into_iter().map(|(name, ts)| build_dag(name, &ts)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    /// Walks per node (m).
    pub walks_per_node: usize,
    /// Nodes per walk (k), including the start node.
    pub walk_length: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walks_per_node: 10,
            walk_length: 6,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node < 1 || self.walk_length < 2 {
            return Err(Error::Config(format!(
                "walks need m >= 1 and k >= 2, got m={} k={}",
                self.walks_per_node, self.walk_length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkBatch {
    /// `m * |V|` paths, grouped by start node in index order.
    pub paths: Vec<Vec<usize>>,
    pub walk_length: usize,
}

impl WalkBatch {
    /// `counts[i][j]` = occurrences of `j` at positions 2..k of walks starting at `i`.
    pub fn target_counts(&self) -> BTreeMap<(usize, usize), f64> {
        let mut counts = BTreeMap::new();
        for path in &self.paths {
            for &t in &path[1..] {
                *counts.entry((path[0], t)).or_insert(0.0) += 1.0;
            }
        }
        counts
    }

    pub fn num_targets(&self) -> usize {
        self.paths.iter().map(|p| p.len() - 1).sum()
    }

    /// One walk per line as space-separated node indices.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.paths {
            let line: Vec<String> = p.iter().map(usize::to_string).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, nodes: usize) -> Result<Self> {
        let mut paths = Vec::new();
        for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let p: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format("walk file", format!("line {}: bad node index", ln + 1)))?;
            if p.iter().any(|&v| v >= nodes) {
                return Err(Error::format("walk file", format!("line {}: node outside graph of {nodes}", ln + 1)));
            }
            paths.push(p);
        }
        let walk_length = paths.first().map_or(0, Vec::len);
        if walk_length < 2 || paths.iter().any(|p| p.len() != walk_length) {
            return Err(Error::format("walk file", "walks must share one length of at least 2"));
        }
        Ok(Self { paths, walk_length })
    }
}

/// Uniform walks on the undirected view. Each start node draws from its own
/// generator seeded with `seed + index`, so the result does not depend on
/// iteration order. A node with no neighbors repeats itself.
pub fn sample_walks(g: &OntologyDag, cfg: &WalkConfig) -> Result<WalkBatch> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::Invalid("cannot sample walks on an empty graph".into()));
    }
    let mut paths = Vec::with_capacity(g.len() * cfg.walks_per_node);
    for v in 0..g.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(v as u64));
        for _ in 0..cfg.walks_per_node {
            let mut path = Vec::with_capacity(cfg.walk_length);
            path.push(v);
            let mut cur = v;
            while path.len() < cfg.walk_length {
                let nb = g.neighbors(cur);
                if !nb.is_empty() {
                    cur = nb[rng.random_range(0..nb.len())];
                }
                path.push(cur);
            }
            paths.push(path);
        }
    }
    Ok(WalkBatch {
        paths,
        walk_length: cfg.walk_length,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

pub const MIN_SPLIT_NODES: usize = 10;

impl DataSplit {
    pub fn train_set(&self) -> BTreeSet<usize> {
        self.train.iter().copied().collect()
    }

    /// Nodes whose definitions are hidden during training.
    pub fn held_out(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.valid.iter().chain(&self.test).copied().collect();
        v.sort_unstable();
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// 70/10/20 seeded split of the defined nodes. Validation and test sizes are
/// rounded; the remainder goes to training.
pub fn make_split(g: &OntologyDag, seed: u64) -> Result<DataSplit> {
    let mut defined: Vec<usize> = (0..g.len()).filter(|&i| g.node(i).has_definition()).collect();
    let n = defined.len();
    if n < MIN_SPLIT_NODES {
        return Err(Error::Invalid(format!(
            "graph {} has {n} defined nodes; at least {MIN_SPLIT_NODES} required",
            g.name
        )));
    }
    let n_valid = (0.1 * n as f64).round() as usize;
    let n_test = (0.2 * n as f64).round() as usize;
    let n_train = n - n_valid - n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    defined.shuffle(&mut rng);
    let mut train = defined[..n_train].to_vec();
    let mut valid = defined[n_train..n_train + n_valid].to_vec();
    let mut test = defined[n_train + n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok(DataSplit {
        train,
        valid,
        test,
        seed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DagStats {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub roots: usize,
    pub depth_histogram: BTreeMap<usize, usize>,
    pub terminology_words_histogram: BTreeMap<usize, usize>,
    pub definition_words_histogram: BTreeMap<usize, usize>,
    pub mean_terminology_words: f64,
    pub mean_definition_words: f64,
}

/// Node/edge counts, depth histogram and whitespace word-count statistics.
pub fn stats(g: &OntologyDag) -> DagStats {
    let mut depth_histogram = BTreeMap::new();
    for d in g.depths() {
        *depth_histogram.entry(d).or_insert(0) += 1;
    }
    let mut term_hist = BTreeMap::new();
    let mut def_hist = BTreeMap::new();
    let (mut term_total, mut def_total, mut def_n) = (0usize, 0usize, 0usize);
    for node in g.nodes() {
        let tw = node.name.split_whitespace().count();
        term_total += tw;
        *term_hist.entry(tw).or_insert(0) += 1;
        if let Some(d) = &node.definition {
            let dw = d.split_whitespace().count();
            def_total += dw;
            def_n += 1;
            *def_hist.entry(dw).or_insert(0) += 1;
        }
    }
    DagStats {
        name: g.name.clone(),
        nodes: g.len(),
        edges: g.edges().len(),
        roots: g.roots().len(),
        depth_histogram,
        terminology_words_histogram: term_hist,
        definition_words_histogram: def_hist,
        mean_terminology_words: if g.is_empty() { 0.0 } else { term_total as f64 / g.len() as f64 },
        mean_definition_words: if def_n == 0 { 0.0 } else { def_total as f64 / def_n as f64 },
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn raw(id: &str, def: Option<&str>, parents: &[&str]) -> RawTerm {
        RawTerm {
            id: id.into(),
            name: format!("term {id}"),
            definition: def.map(String::from),
            synonyms: vec![],
            parents: parents.iter().map(|s| s.to_string()).collect(),
            graph: "g".into(),
            db: "obo".into(),
        }
    }

    /// Test graph from an edge list over nodes named `n0..n{count}`.
    pub fn dag_from_edges(count: usize, edges: &[(usize, usize)]) -> OntologyDag {
        let nodes = (0..count)
            .map(|i| TermNode::new(i, &format!("n{i}"), &format!("node {i}"), Some("a definition")))
            .collect();
        OntologyDag::new("test", nodes, edges.to_vec()).unwrap()
    }

    #[test]
    fn contraction_through_undefined_node() {
        let terms = vec![raw("A", Some("a"), &[]), raw("B", None, &["A"]), raw("C", Some("c"), &["B"])];
        let (g, report) = build_dag("g", &terms).unwrap();
        assert_eq!(g.len(), 2);
        let a = g.index_of("A").unwrap();
        let c = g.index_of("C").unwrap();
        assert_eq!(g.edges(), &[(a, c)]);
        assert_eq!(report.excluded_undefined, 1);
    }

    #[test]
    fn fully_defined_acyclic_input_preserved() {
        let terms = vec![
            raw("A", Some("a"), &[]),
            raw("B", Some("b"), &["A"]),
            raw("C", Some("c"), &["A", "B"]),
        ];
        let (g, report) = build_dag("g", &terms).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.edges().len(), 3);
        assert!(report.dropped_back_edges.is_empty());
    }

    #[test]
    fn cycle_broken_with_warning() {
        let terms = vec![
            raw("A", Some("a"), &["C"]),
            raw("B", Some("b"), &["A"]),
            raw("C", Some("c"), &["B"]),
            raw("R", Some("r"), &[]),
        ];
        let (g, report) = build_dag("g", &terms).unwrap();
        assert_eq!(report.dropped_back_edges.len(), 1);
        assert!(g.topological_order().is_some());
        assert_eq!(g.edges().len(), 2);
    }

    #[test]
    fn distance_and_depth_basics() {
        let g = dag_from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(g.shortest_distance(0, 2), Some(2));
        assert_eq!(g.shortest_distance(0, 0), Some(0));
        assert_eq!(g.depth(0), 1);
        assert_eq!(g.depth(2), 3);
        let g = dag_from_edges(3, &[(0, 1)]);
        assert_eq!(g.shortest_distance(0, 2), None);
    }

    #[test]
    fn diamond_depth_uses_min_root_distance() {
        // 0 -> 1 -> 2 -> 4 and 0 -> 3 -> 4: parents of 4 sit at depths 3 and 2
        let g = dag_from_edges(5, &[(0, 1), (1, 2), (2, 4), (0, 3), (3, 4)]);
        let d = g.depths();
        assert_eq!((d[2], d[3]), (3, 2));
        assert_eq!(d[4], 3);
    }

    #[test]
    fn walks_two_node_alternation_and_isolated() {
        let g = dag_from_edges(3, &[(0, 1)]);
        let cfg = WalkConfig {
            walks_per_node: 4,
            walk_length: 3,
            seed: 9,
        };
        let w = sample_walks(&g, &cfg).unwrap();
        assert_eq!(w.paths.len(), 12);
        for p in &w.paths {
            match p[0] {
                0 => assert_eq!(p, &vec![0, 1, 0]),
                1 => assert_eq!(p, &vec![1, 0, 1]),
                _ => assert_eq!(p, &vec![2, 2, 2]),
            }
        }
        let cfg4 = WalkConfig { walk_length: 4, ..cfg };
        let w = sample_walks(&g, &cfg4).unwrap();
        assert!(w.paths.iter().filter(|p| p[0] == 2).all(|p| p == &vec![2, 2, 2, 2]));
        assert!(sample_walks(&g, &WalkConfig { walk_length: 1, ..cfg }).is_err());
    }

    #[test]
    fn split_sizes() {
        let g = dag_from_edges(10, &[]);
        let s = make_split(&g, 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s, make_split(&g, 1).unwrap());
        let g = dag_from_edges(101, &[]);
        let s = make_split(&g, 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (71, 10, 20));
        assert!(make_split(&dag_from_edges(9, &[]), 1).is_err());
    }

    #[test]
    fn stats_counts_words() {
        let g = dag_from_edges(2, &[(0, 1)]);
        let s = stats(&g);
        assert_eq!(s.mean_terminology_words, 2.0);
        assert_eq!(s.mean_definition_words, 2.0);
        assert_eq!(s.depth_histogram, BTreeMap::from([(1, 1), (2, 1)]));
    }

    #[test]
    fn snapshot_round_trip() {
        let g = dag_from_edges(4, &[(0, 1), (0, 2), (2, 3)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.dag.json");
        g.save(&p).unwrap();
        assert_eq!(OntologyDag::load(&p).unwrap(), g);
    }
}
