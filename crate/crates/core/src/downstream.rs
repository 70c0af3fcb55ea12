//! Auxiliary benchmarks: link prediction over DAG edges and sentence
//! granularity prediction with depth alignment across graphs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use graphex_nn::{seeded_rng, Adam, Linear, ParamSet, Tape};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dag::OntologyDag;
use crate::error::{Error, Result};
use crate::stats::{average_ranks, spearman};

pub const MAX_LEVEL: usize = 17;

/// Per-node vectors keyed by term id.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVectors {
    pub term_ids: Vec<String>,
    pub rows: Array2<f64>,
    index: HashMap<String, usize>,
}

impl NodeVectors {
    pub fn new(term_ids: Vec<String>, rows: Array2<f64>) -> Result<Self> {
        if term_ids.len() != rows.nrows() {
            return Err(Error::Dimension(format!("{} ids for {} rows", term_ids.len(), rows.nrows())));
        }
        let index = term_ids.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self { term_ids, rows, index })
    }

    pub fn get(&self, term_id: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(term_id).map(|&i| self.rows.row(i))
    }

    fn require(&self, term_id: &str) -> Result<ArrayView1<'_, f64>> {
        self.get(term_id).ok_or_else(|| Error::MissingEmbedding(term_id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSplit {
    pub train: Vec<(usize, usize)>,
    pub valid: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub train_neg: Vec<(usize, usize)>,
    pub valid_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub seed: u64,
}

fn unordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Seeded 85/5/10 edge split. Each partition gets as many negatives as
/// positives: node pairs joined by no edge in either direction, distinct
/// across all partitions.
pub fn make_link_split(g: &OntologyDag, seed: u64) -> Result<LinkSplit> {
    let mut edges = g.edges().to_vec();
    let m = edges.len();
    if m < 3 {
        return Err(Error::Invalid(format!("graph {} has {m} edges; link prediction needs at least 3", g.name)));
    }
    let n = g.len();
    let linked: HashSet<(usize, usize)> = edges.iter().map(|&(a, b)| unordered(a, b)).collect();
    let non_edges = n * (n - 1) / 2 - linked.len();
    if non_edges < m {
        return Err(Error::Invalid(format!("graph {} is too dense to draw {m} negative pairs", g.name)));
    }
    let mut rng = seeded_rng(seed);
    edges.shuffle(&mut rng);
    let n_valid = ((0.05 * m as f64).round() as usize).max(1);
    let n_test = ((0.10 * m as f64).round() as usize).max(1);
    let n_train = m - n_valid - n_test;
    let mut used = HashSet::new();
    let mut draw = |count: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            let key = unordered(a, b);
            if a != b && !linked.contains(&key) && used.insert(key) {
                out.push((a, b));
            }
        }
        out
    };
    let train_neg = draw(n_train, &mut rng);
    let valid_neg = draw(n_valid, &mut rng);
    let test_neg = draw(n_test, &mut rng);
    Ok(LinkSplit {
        train: edges[..n_train].to_vec(),
        valid: edges[n_train..n_train + n_valid].to_vec(),
        test: edges[n_train + n_valid..].to_vec(),
        train_neg,
        valid_neg,
        test_neg,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Dot,
    /// Negative Euclidean distance.
    Distance,
}

impl Scorer {
    pub fn score(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match self {
            Scorer::Dot => a.dot(&b),
            Scorer::Distance => -(&a - &b).mapv(|x| x * x).sum().sqrt(),
        }
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from average ranks.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Invalid("AUC needs at least one positive and one negative".into()));
    }
    let all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let ranks = average_ranks(&all);
    let p = pos.len() as f64;
    let rank_sum: f64 = ranks[..pos.len()].iter().sum();
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg.len() as f64))
}

/// Step-wise area under the precision-recall curve, one step per distinct
/// score threshold: `sum (R_k - R_{k-1}) * P_k`.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() {
        return Err(Error::Invalid("AP needs at least one positive".into()));
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = pos.len() as f64;
    let (mut tp, mut fp, mut prev_recall, mut ap) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        let recall = tp / total;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub auc: f64,
    pub ap: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Scores the test positives and negatives of `split`.
pub fn link_prediction_eval(g: &OntologyDag, vectors: &NodeVectors, split: &LinkSplit, scorer: Scorer) -> Result<LinkResult> {
    let score = |pairs: &[(usize, usize)]| -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|&(a, b)| {
                let va = vectors.require(&g.node(a).term_id)?;
                let vb = vectors.require(&g.node(b).term_id)?;
                Ok(scorer.score(va, vb))
            })
            .collect()
    };
    let pos = score(&split.test)?;
    let neg = score(&split.test_neg)?;
    Ok(LinkResult {
        auc: auc(&pos, &neg)?,
        ap: average_precision(&pos, &neg)?,
        positives: pos.len(),
        negatives: neg.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShallowConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Fresh negative pairs per positive per epoch.
    pub negatives: usize,
    /// Epochs without a better validation AUC before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for ShallowConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            epochs: 200,
            lr: 1e-2,
            negatives: 1,
            patience: 50,
            seed: 0,
        }
    }
}

/// Free per-node vectors trained with a logistic loss on dot-product scores
/// of the training edges against random non-training pairs. The vectors of
/// the epoch with the best validation AUC are returned.
pub fn train_shallow(g: &OntologyDag, split: &LinkSplit, cfg: &ShallowConfig) -> Result<NodeVectors> {
    let n = g.len();
    let mut rng = seeded_rng(cfg.seed);
    let mut params = ParamSet::new();
    let table = params.uniform("nodes", n, cfg.dim, 0.1, &mut rng);
    let known: HashSet<(usize, usize)> = split.train.iter().map(|&(a, b)| unordered(a, b)).collect();
    let mut adam = Adam::new(cfg.lr);
    let mut best = (f64::NEG_INFINITY, params.get(table).clone());
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let mut neg = Vec::with_capacity(split.train.len() * cfg.negatives);
        while neg.len() < split.train.len() * cfg.negatives {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b && !known.contains(&unordered(a, b)) {
                neg.push((a, b));
            }
        }
        let grads = {
            let mut tape = Tape::new(&params);
            let t = tape.param(table);
            let term = |tape: &mut Tape<'_>, pairs: &[(usize, usize)], sign: f64| {
                let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
                let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
                let va = tape.gather_rows(t, &a);
                let vb = tape.gather_rows(t, &b);
                let d = tape.row_dot(va, vb);
                let d = tape.scale(d, sign);
                let l = tape.log_sigmoid(d);
                tape.sum_all(l)
            };
            let p = term(&mut tape, &split.train, 1.0);
            let q = term(&mut tape, &neg, -1.0);
            let s = tape.add(p, q);
            let loss = tape.scale(s, -1.0 / (split.train.len() + neg.len()) as f64);
            let v = tape.scalar(loss);
            if !v.is_finite() {
                return Err(Error::Diverged(format!("shallow embedder loss {v} at epoch {epoch}")));
            }
            tape.backward(loss)
        };
        adam.step(&mut params, &grads);
        let v = params.get(table);
        let score = |pairs: &[(usize, usize)]| -> Vec<f64> { pairs.iter().map(|&(a, b)| v.row(a).dot(&v.row(b))).collect() };
        let valid_auc = auc(&score(&split.valid), &score(&split.valid_neg))?;
        if valid_auc > best.0 {
            best = (valid_auc, v.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    NodeVectors::new(g.nodes().iter().map(|x| x.term_id.clone()).collect(), best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GranularityLabel {
    pub node: usize,
    pub depth: usize,
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Per graph, in input order.
    pub offsets: Vec<i64>,
    /// Graph indices per anchor-connected component; the first is its reference.
    pub components: Vec<Vec<usize>>,
    pub anchors: usize,
    /// Sum of squared anchor depth mismatches after alignment.
    pub residual: f64,
    pub labels: Vec<Vec<GranularityLabel>>,
}

/// (graph p, depth in p, graph q, depth in q) for every terminology shared
/// by two graphs. The first node with a given name stands for its graph.
fn anchor_pairs(dags: &[OntologyDag], depths: &[Vec<usize>]) -> Vec<(usize, i64, usize, i64)> {
    let mut by_name: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    for (p, g) in dags.iter().enumerate() {
        let mut seen = HashSet::new();
        for node in g.nodes() {
            if seen.insert(node.name.as_str()) {
                by_name.entry(node.name.as_str()).or_default().push((p, node.index));
            }
        }
    }
    let mut out = Vec::new();
    for occ in by_name.values() {
        for i in 0..occ.len() {
            for j in i + 1..occ.len() {
                let (p, a) = occ[i];
                let (q, b) = occ[j];
                out.push((p, depths[p][a] as i64, q, depths[q][b] as i64));
            }
        }
    }
    out
}

fn residual(anchors: &[(usize, i64, usize, i64)], offsets: &[i64]) -> f64 {
    anchors
        .iter()
        .map(|&(p, dp, q, dq)| ((dp + offsets[p]) - (dq + offsets[q])) as f64)
        .map(|r| r * r)
        .sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[piv, col]].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap([piv, k], [col, k]);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            for k in col..n {
                a[[r, k]] -= f * a[[col, k]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[[r, k]] * x[k]).sum();
        x[r] = (b[r] - s) / a[[r, r]];
    }
    Some(x)
}

/// Integer depth offsets per graph from least squares over shared
/// terminologies, refined by single-step moves. Levels are
/// `clamp(depth + offset, 1, 17)`.
pub fn align_granularity(dags: &[OntologyDag]) -> Result<Alignment> {
    if dags.is_empty() {
        return Err(Error::Invalid("alignment needs at least one graph".into()));
    }
    let depths: Vec<Vec<usize>> = dags.iter().map(OntologyDag::depths).collect();
    let anchors = anchor_pairs(dags, &depths);

    // connected components over graphs, each rooted at its largest graph
    let mut comp = vec![usize::MAX; dags.len()];
    let mut components = Vec::new();
    for start in 0..dags.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut k = 0;
        while k < members.len() {
            let p = members[k];
            for &(a, _, b, _) in &anchors {
                let other = if a == p { b } else if b == p { a } else { continue };
                if comp[other] == usize::MAX {
                    comp[other] = id;
                    members.push(other);
                }
            }
            k += 1;
        }
        members.sort_by_key(|&p| (std::cmp::Reverse(dags[p].len()), p));
        components.push(members);
    }
    if components.len() > 1 {
        log::info!("{} anchor-connected components aligned independently", components.len());
    }

    let mut offsets = vec![0i64; dags.len()];
    for members in &components {
        if members.len() < 2 {
            continue;
        }
        let free: Vec<usize> = members[1..].to_vec();
        let pos: HashMap<usize, usize> = free.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let k = free.len();
        let mut a = Array2::zeros((k, k));
        let mut b = Array1::zeros(k);
        // residual o_p - o_q - (dq - dp); accumulate normal equations
        for &(p, dp, q, dq) in &anchors {
            if comp[p] != comp[members[0]] {
                continue;
            }
            let target = (dq - dp) as f64;
            let (ip, iq) = (pos.get(&p).copied(), pos.get(&q).copied());
            if let Some(i) = ip {
                a[[i, i]] += 1.0;
                b[i] += target;
            }
            if let Some(j) = iq {
                a[[j, j]] += 1.0;
                b[j] -= target;
            }
            if let (Some(i), Some(j)) = (ip, iq) {
                a[[i, j]] -= 1.0;
                a[[j, i]] -= 1.0;
            }
        }
        let x = solve(a, b).ok_or_else(|| Error::Invalid("singular alignment system".into()))?;
        for (i, &p) in free.iter().enumerate() {
            offsets[p] = x[i].round() as i64;
        }
        loop {
            let mut improved = false;
            for &p in &free {
                for step in [-1, 1] {
                    let before = residual(&anchors, &offsets);
                    offsets[p] += step;
                    if residual(&anchors, &offsets) < before {
                        improved = true;
                    } else {
                        offsets[p] -= step;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }

    let labels = dags
        .iter()
        .enumerate()
        .map(|(p, _)| {
            depths[p]
                .iter()
                .enumerate()
                .map(|(node, &depth)| GranularityLabel {
                    node,
                    depth,
                    level: (depth as i64 + offsets[p]).clamp(1, MAX_LEVEL as i64) as usize,
                })
                .collect()
        })
        .collect();
    Ok(Alignment {
        residual: residual(&anchors, &offsets),
        anchors: anchors.len(),
        offsets,
        components,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Cap on training pairs for the relative task.
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            epochs: 50,
            lr: 1e-3,
            batch_size: 32,
            max_pairs: 20_000,
            seed: 0,
        }
    }
}

/// One-hidden-layer ReLU classifier over standardized inputs.
#[derive(Debug, Clone)]
pub struct Mlp {
    params: ParamSet,
    hidden: Linear,
    out: Linear,
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Mlp {
    pub fn fit(x: &Array2<f64>, y: &[usize], classes: usize, cfg: &MlpConfig) -> Result<Self> {
        if x.nrows() != y.len() || x.nrows() == 0 {
            return Err(Error::Invalid(format!("{} inputs for {} labels", x.nrows(), y.len())));
        }
        let mut rng = seeded_rng(cfg.seed);
        let mut params = ParamSet::new();
        let d = x.ncols();
        let hidden = Linear::new(&mut params, "hidden", d, cfg.hidden, true, &mut rng);
        let out = Linear::new(&mut params, "out", cfg.hidden, classes, true, &mut rng);
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });
        let mut m = Self {
            params,
            hidden,
            out,
            mean,
            scale,
        };
        let xs = m.standardize(x);
        let mut adam = Adam::new(cfg.lr);
        let mut order: Vec<usize> = (0..y.len()).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size.max(1)) {
                let xb = xs.select(Axis(0), batch);
                let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
                let grads = {
                    let mut tape = Tape::new(&m.params);
                    let logits = m.forward(&mut tape, xb);
                    let l = tape.cross_entropy(logits, &yb);
                    let l = tape.scale(l, 1.0 / batch.len() as f64);
                    if !tape.scalar(l).is_finite() {
                        return Err(Error::Diverged(format!("classifier loss not finite at epoch {epoch}")));
                    }
                    tape.backward(l)
                };
                adam.step(&mut m.params, &grads);
            }
        }
        Ok(m)
    }

    fn standardize(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) * &self.scale
    }

    fn forward(&self, tape: &mut Tape<'_>, x: Array2<f64>) -> graphex_nn::Var {
        let x = tape.constant(x);
        let h = self.hidden.forward(tape, x);
        let h = tape.relu(h);
        self.out.forward(tape, h)
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut tape = Tape::new(&self.params);
        let l = self.forward(&mut tape, self.standardize(x));
        tape.value(l).clone()
    }

    /// Highest logit per row; ties go to the lowest class.
    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        self.logits(x).rows().into_iter().map(|r| crate::models::argmax(&r.to_owned())).collect()
    }
}

fn stack(rows: &[Array1<f64>]) -> Result<Array2<f64>> {
    let d = rows.first().map(Array1::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension("sentence embeddings differ in length".into()));
    }
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| Error::Dimension(e.to_string()))
}

/// Ordered pairs `(i, j)` with different levels, capped at `max` by a seeded
/// draw.
fn distinct_level_pairs(levels: &[usize], max: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..levels.len() {
        for j in 0..levels.len() {
            if i != j && levels[i] != levels[j] {
                pairs.push((i, j));
            }
        }
    }
    if pairs.len() > max {
        pairs.shuffle(&mut seeded_rng(seed));
        pairs.truncate(max);
        pairs.sort_unstable();
    }
    pairs
}

fn pair_features(emb: &[Array1<f64>], pairs: &[(usize, usize)]) -> Result<Array2<f64>> {
    let rows: Vec<Array1<f64>> = pairs
        .iter()
        .map(|&(a, b)| ndarray::concatenate![Axis(0), emb[a], emb[b]])
        .collect();
    stack(&rows)
}

/// Trained relative-granularity classifier. The decision for `(a, b)` is
/// the sign of `s(a, b) - s(b, a)`, so swapping a pair flips the answer.
pub struct RelativeModel {
    mlp: Mlp,
}

impl RelativeModel {
    /// Probability-free decision: true when `a` is predicted finer than `b`.
    pub fn finer(&self, a: &Array1<f64>, b: &Array1<f64>) -> bool {
        let x = stack(&[ndarray::concatenate![Axis(0), *a, *b], ndarray::concatenate![Axis(0), *b, *a]])
            .expect("equal lengths");
        let l = self.mlp.logits(&x);
        let s_ab = l[[0, 1]] - l[[0, 0]];
        let s_ba = l[[1, 1]] - l[[1, 0]];
        s_ab - s_ba > 0.0
    }
}

pub fn train_relative(train: &[(Array1<f64>, usize)], cfg: &MlpConfig) -> Result<RelativeModel> {
    let emb: Vec<Array1<f64>> = train.iter().map(|e| e.0.clone()).collect();
    let levels: Vec<usize> = train.iter().map(|e| e.1).collect();
    let pairs = distinct_level_pairs(&levels, cfg.max_pairs, cfg.seed);
    if pairs.is_empty() {
        return Err(Error::Invalid("relative granularity needs at least two distinct levels".into()));
    }
    let x = pair_features(&emb, &pairs)?;
    let y: Vec<usize> = pairs.iter().map(|&(a, b)| usize::from(levels[a] > levels[b])).collect();
    Ok(RelativeModel {
        mlp: Mlp::fit(&x, &y, 2, cfg)?,
    })
}

/// Accuracy of "which of the two is finer" on distinct-level pairs of `test`.
pub fn relative_accuracy(model: &RelativeModel, test: &[(Array1<f64>, usize)], max_pairs: usize, seed: u64) -> Result<f64> {
    let levels: Vec<usize> = test.iter().map(|e| e.1).collect();
    let pairs = distinct_level_pairs(&levels, max_pairs, seed);
    if pairs.is_empty() {
        return Err(Error::Invalid("test set has no pair with distinct levels".into()));
    }
    let correct = pairs
        .iter()
        .filter(|&&(a, b)| model.finer(&test[a].0, &test[b].0) == (levels[a] > levels[b]))
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

pub fn relative_granularity_eval(
    train: &[(Array1<f64>, usize)],
    test: &[(Array1<f64>, usize)],
    cfg: &MlpConfig,
) -> Result<f64> {
    let m = train_relative(train, cfg)?;
    relative_accuracy(&m, test, cfg.max_pairs, cfg.seed.wrapping_add(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteResult {
    pub accuracy: f64,
    /// 0 when undefined; see `spearman_defined`.
    pub spearman: f64,
    pub spearman_defined: bool,
}

/// 17-way level classifier; accuracy and Spearman correlation of predicted
/// against true levels on `test`.
pub fn absolute_granularity_eval(
    train: &[(Array1<f64>, usize)],
    test: &[(Array1<f64>, usize)],
    cfg: &MlpConfig,
) -> Result<AbsoluteResult> {
    let distinct: BTreeSet<usize> = train.iter().map(|e| e.1).collect();
    if distinct.len() < 2 {
        return Err(Error::Invalid("absolute granularity needs at least two distinct levels".into()));
    }
    if let Some(bad) = train.iter().chain(test).map(|e| e.1).find(|&l| !(1..=MAX_LEVEL).contains(&l)) {
        return Err(Error::Invalid(format!("level {bad} outside 1..={MAX_LEVEL}")));
    }
    if test.is_empty() {
        return Err(Error::Invalid("empty test set".into()));
    }
    let x = stack(&train.iter().map(|e| e.0.clone()).collect::<Vec<_>>())?;
    let y: Vec<usize> = train.iter().map(|e| e.1 - 1).collect();
    let mlp = Mlp::fit(&x, &y, MAX_LEVEL, cfg)?;
    let xt = stack(&test.iter().map(|e| e.0.clone()).collect::<Vec<_>>())?;
    let pred: Vec<f64> = mlp.predict(&xt).into_iter().map(|c| (c + 1) as f64).collect();
    let truth: Vec<f64> = test.iter().map(|e| e.1 as f64).collect();
    let accuracy = pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64;
    let rho = spearman(&pred, &truth);
    Ok(AbsoluteResult {
        accuracy,
        spearman: rho.unwrap_or(0.0),
        spearman_defined: rho.is_some(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GranularityTask {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityReport {
    pub task: GranularityTask,
    pub graphs: Vec<String>,
    pub offsets: Vec<i64>,
    pub anchors: usize,
    pub residual: f64,
    pub train: usize,
    pub test: usize,
    /// Aligned nodes without a vector.
    pub missing: usize,
    /// Set for the relative task.
    pub accuracy: Option<f64>,
    /// Set for the absolute task.
    pub absolute: Option<AbsoluteResult>,
}

/// Aligns the graphs, labels every node that has a vector with its level
/// and splits the labelled nodes 80/20 with `cfg.seed`. A term id shared by
/// several graphs is kept once, at its first occurrence, so no vector lands
/// on both sides of the split.
pub fn granularity_benchmark(
    dags: &[OntologyDag],
    vectors: &NodeVectors,
    task: GranularityTask,
    cfg: &MlpConfig,
) -> Result<GranularityReport> {
    let alignment = align_granularity(dags)?;
    let mut seen = HashSet::new();
    let mut examples = Vec::new();
    let mut missing = 0;
    for (g, labels) in dags.iter().zip(&alignment.labels) {
        for l in labels {
            let id = &g.node(l.node).term_id;
            match vectors.get(id) {
                Some(v) if seen.insert(id.clone()) => examples.push((v.to_owned(), l.level)),
                Some(_) => {}
                None => missing += 1,
            }
        }
    }
    if examples.len() < 5 {
        return Err(Error::Invalid(format!("only {} labelled nodes have vectors", examples.len())));
    }
    examples.shuffle(&mut seeded_rng(cfg.seed));
    let n_test = (examples.len() as f64 * 0.2).round().max(1.0) as usize;
    let test = examples.split_off(examples.len() - n_test);
    let train = examples;
    let (accuracy, absolute) = match task {
        GranularityTask::Relative => (Some(relative_granularity_eval(&train, &test, cfg)?), None),
        GranularityTask::Absolute => (None, Some(absolute_granularity_eval(&train, &test, cfg)?)),
    };
    Ok(GranularityReport {
        task,
        graphs: dags.iter().map(|g| g.name.clone()).collect(),
        offsets: alignment.offsets,
        anchors: alignment.anchors,
        residual: alignment.residual,
        train: train.len(),
        test: test.len(),
        missing,
        accuracy,
        absolute,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_small_system() {
        let a = ndarray::array![[2.0, 1.0], [1.0, 3.0]];
        let x = solve(a, ndarray::array![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve(ndarray::array![[0.0]], ndarray::array![1.0]).is_none());
    }

    #[test]
    fn auc_ap_simple() {
        assert_eq!(auc(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(auc(&[1.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(average_precision(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        // one tied group: precision 1/2 at recall 1
        assert_eq!(average_precision(&[1.0], &[1.0]).unwrap(), 0.5);
    }
}
