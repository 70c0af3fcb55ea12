//! Graph propagation embeddings: node text is encoded by a bidirectional GRU
//! with max pooling, and the encoders are trained so that a node's feature
//! vector predicts the nodes reached by random walks from it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use graphex_nn::{seeded_rng, Adam, BiGru, ParamId, ParamSet, Tape, Var};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::dag::{DataSplit, OntologyDag, WalkBatch};
use crate::error::{Error, Result};
use crate::metrics::DecodeMode;
use crate::models::transformer::CondTransformer;
use crate::models::{decode, Example};
use crate::text::{Vocabulary, MAX_DEFINITION_TOKENS};

/// Graphs up to this size use the exact softmax.
pub const FULL_SOFTMAX_LIMIT: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub word_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Start nodes per optimizer step.
    pub batch_size: usize,
    /// Stop after this many epochs whose loss improved by less than `min_rel_improvement`.
    pub patience: usize,
    pub min_rel_improvement: f64,
    pub negatives: usize,
    /// `None` picks the exact softmax up to [`FULL_SOFTMAX_LIMIT`] nodes.
    pub mode: Option<LossMode>,
    pub seed: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            word_dim: 768,
            hidden_dim: 384,
            epochs: 30,
            lr: 1e-3,
            batch_size: 64,
            patience: 3,
            min_rel_improvement: 1e-4,
            negatives: 5,
            mode: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    FullSoftmax,
    NegativeSampling,
}

impl Stage1Config {
    pub fn mode_for(&self, nodes: usize) -> LossMode {
        self.mode.unwrap_or(if nodes <= FULL_SOFTMAX_LIMIT {
            LossMode::FullSoftmax
        } else {
            LossMode::NegativeSampling
        })
    }
}

/// Word tables `q` (context side) and `h` (feature side) with one shared
/// bidirectional GRU.
#[derive(Debug, Clone)]
pub struct Stage1Model {
    pub params: ParamSet,
    pub q: ParamId,
    pub h: ParamId,
    pub gru: BiGru,
    pub hidden_dim: usize,
}

impl Stage1Model {
    pub fn new(vocab: usize, word_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut params = ParamSet::new();
        let q = params.uniform("q", vocab, word_dim, 0.1, &mut rng);
        let h = params.uniform("h", vocab, word_dim, 0.1, &mut rng);
        let gru = BiGru::new(&mut params, "bigru", word_dim, hidden_dim, &mut rng);
        Self {
            params,
            q,
            h,
            gru,
            hidden_dim,
        }
    }

    /// `(u, w)` for one token sequence.
    pub fn encode_node(&self, tokens: &[usize]) -> Result<(Array1<f64>, Array1<f64>)> {
        if tokens.is_empty() {
            return Err(Error::Invalid("cannot encode an empty token sequence".into()));
        }
        let (u, w) = self.encode_all(&[tokens.to_vec()])?;
        Ok((u.row(0).to_owned(), w.row(0).to_owned()))
    }

    /// Context (`u`) and feature (`w`) rows for every sequence.
    pub fn encode_all(&self, texts: &[Vec<usize>]) -> Result<(Array2<f64>, Array2<f64>)> {
        check_texts(texts, self.params.get(self.q).nrows())?;
        let mut tape = Tape::new(&self.params);
        let q = tape.param(self.q);
        let h = tape.param(self.h);
        let u = self.gru.encode_max_pool(&mut tape, q, texts);
        let w = self.gru.encode_max_pool(&mut tape, h, texts);
        Ok((tape.value(u).clone(), tape.value(w).clone()))
    }
}

fn check_texts(texts: &[Vec<usize>], vocab: usize) -> Result<()> {
    for (i, t) in texts.iter().enumerate() {
        if t.is_empty() {
            return Err(Error::Invalid(format!("node {i} has an empty token sequence")));
        }
        if let Some(&bad) = t.iter().find(|&&c| c >= vocab) {
            return Err(Error::Invalid(format!("node {i}: token {bad} outside vocabulary")));
        }
    }
    Ok(())
}

/// Softmax over all nodes of `u_k . w_i`, stabilized by the max logit.
pub fn arrival_distribution(u_all: &Array2<f64>, w_i: &Array1<f64>) -> Array1<f64> {
    let logits = u_all.dot(w_i);
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = logits.mapv(|x| (x - m).exp());
    let z = e.sum();
    e / z
}

pub fn arrival_probability(u_all: &Array2<f64>, w_i: &Array1<f64>, j: usize) -> f64 {
    arrival_distribution(u_all, w_i)[j]
}

/// Unigram^0.75 noise over node occurrence counts in the walks.
pub struct NoiseTable {
    dist: WeightedAliasIndex<f64>,
}

impl NoiseTable {
    pub fn from_walks(walks: &WalkBatch, nodes: usize) -> Result<Self> {
        let mut counts = vec![0.0; nodes];
        for p in &walks.paths {
            for &v in p {
                counts[v] += 1.0;
            }
        }
        let weights: Vec<f64> = counts.iter().map(|c: &f64| c.powf(0.75)).collect();
        let dist = WeightedAliasIndex::new(weights).map_err(|e| Error::Invalid(format!("noise table: {e}")))?;
        Ok(Self { dist })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        self.dist.sample(rng)
    }
}

/// Walk targets of the given start nodes as `(start, target, count)`.
fn targets_for(counts: &BTreeMap<(usize, usize), f64>, starts: &BTreeSet<usize>) -> Vec<(usize, usize, f64)> {
    counts
        .iter()
        .filter(|((s, _), _)| starts.contains(s))
        .map(|(&(s, t), &c)| (s, t, c))
        .collect()
}

/// Exact loss `-sum count * log p(target | start)` recorded on `tape`.
pub fn full_softmax_loss(
    model: &Stage1Model,
    tape: &mut Tape<'_>,
    texts: &[Vec<usize>],
    targets: &[(usize, usize, f64)],
) -> Var {
    let starts: Vec<usize> = targets.iter().map(|t| t.0).collect::<BTreeSet<_>>().into_iter().collect();
    let row_of: HashMap<usize, usize> = starts.iter().enumerate().map(|(r, &s)| (s, r)).collect();
    let q = tape.param(model.q);
    let h = tape.param(model.h);
    let u = model.gru.encode_max_pool(tape, q, texts);
    let start_texts: Vec<Vec<usize>> = starts.iter().map(|&s| texts[s].clone()).collect();
    let w = model.gru.encode_max_pool(tape, h, &start_texts);
    let ut = tape.transpose(u);
    let logits = tape.matmul(w, ut);
    let t: Vec<_> = targets.iter().map(|&(s, j, c)| (row_of[&s], j, c)).collect();
    tape.nll_log_softmax(logits, &t)
}

/// Negative-sampling estimate: per target occurrence,
/// `-log s(u_j . w_i) - sum_n log s(-u_n . w_i)` with `negatives` noise draws.
pub fn negative_sampling_loss(
    model: &Stage1Model,
    tape: &mut Tape<'_>,
    texts: &[Vec<usize>],
    targets: &[(usize, usize, f64)],
    noise: &NoiseTable,
    negatives: usize,
    rng: &mut ChaCha8Rng,
) -> Var {
    let mut pos_i = Vec::new();
    let mut pos_j = Vec::new();
    let mut neg_i = Vec::new();
    let mut neg_j = Vec::new();
    for &(s, t, c) in targets {
        for _ in 0..c.round() as usize {
            pos_i.push(s);
            pos_j.push(t);
            for _ in 0..negatives {
                neg_i.push(s);
                neg_j.push(noise.sample(rng));
            }
        }
    }
    let feature_nodes: Vec<usize> = pos_i.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let context_nodes: Vec<usize> = pos_j
        .iter()
        .chain(&neg_j)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let f_row: HashMap<usize, usize> = feature_nodes.iter().enumerate().map(|(r, &v)| (v, r)).collect();
    let c_row: HashMap<usize, usize> = context_nodes.iter().enumerate().map(|(r, &v)| (v, r)).collect();
    let q = tape.param(model.q);
    let h = tape.param(model.h);
    let ctx_texts: Vec<Vec<usize>> = context_nodes.iter().map(|&v| texts[v].clone()).collect();
    let feat_texts: Vec<Vec<usize>> = feature_nodes.iter().map(|&v| texts[v].clone()).collect();
    let u = model.gru.encode_max_pool(tape, q, &ctx_texts);
    let w = model.gru.encode_max_pool(tape, h, &feat_texts);

    let pair_term = |tape: &mut Tape<'_>, is: &[usize], js: &[usize], sign: f64| {
        let wi: Vec<usize> = is.iter().map(|v| f_row[v]).collect();
        let uj: Vec<usize> = js.iter().map(|v| c_row[v]).collect();
        let a = tape.gather_rows(w, &wi);
        let b = tape.gather_rows(u, &uj);
        let d = tape.row_dot(a, b);
        let d = tape.scale(d, sign);
        let ls = tape.log_sigmoid(d);
        let s = tape.sum_all(ls);
        tape.scale(s, -1.0)
    };
    let pos = pair_term(tape, &pos_i, &pos_j, 1.0);
    if neg_i.is_empty() {
        return pos;
    }
    let neg = pair_term(tape, &neg_i, &neg_j, -1.0);
    tape.add(pos, neg)
}

/// Loss over a whole walk batch for a fixed parameter snapshot.
pub fn stage1_loss(
    model: &Stage1Model,
    texts: &[Vec<usize>],
    walks: &WalkBatch,
    mode: LossMode,
    negatives: usize,
    seed: u64,
) -> Result<f64> {
    check_texts(texts, model.params.get(model.q).nrows())?;
    let targets: Vec<_> = walks.target_counts().into_iter().map(|((s, t), c)| (s, t, c)).collect();
    let mut tape = Tape::new(&model.params);
    let l = match mode {
        LossMode::FullSoftmax => full_softmax_loss(model, &mut tape, texts, &targets),
        LossMode::NegativeSampling => {
            let noise = NoiseTable::from_walks(walks, texts.len())?;
            let mut rng = seeded_rng(seed);
            negative_sampling_loss(model, &mut tape, texts, &targets, &noise, negatives, &mut rng)
        }
    };
    Ok(tape.scalar(l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub mode: LossMode,
    /// Summed loss per epoch, measured during the epoch.
    pub epoch_loss: Vec<f64>,
}

/// Trains one side (terminology or definition text) and returns the model
/// with the per-epoch losses.
pub fn train_side(
    texts: &[Vec<usize>],
    vocab: usize,
    walks: &WalkBatch,
    cfg: &Stage1Config,
) -> Result<(Stage1Model, Stage1Report)> {
    check_texts(texts, vocab)?;
    let n = texts.len();
    let mode = cfg.mode_for(n);
    let mut model = Stage1Model::new(vocab, cfg.word_dim, cfg.hidden_dim, cfg.seed);
    let counts = walks.target_counts();
    let noise = match mode {
        LossMode::NegativeSampling => Some(NoiseTable::from_walks(walks, n)?),
        LossMode::FullSoftmax => None,
    };
    let mut rng = seeded_rng(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = Stage1Report {
        mode,
        epoch_loss: Vec::new(),
    };
    let mut stalled = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let starts: BTreeSet<usize> = chunk.iter().copied().collect();
            let targets = targets_for(&counts, &starts);
            if targets.is_empty() {
                continue;
            }
            let weight: f64 = targets.iter().map(|t| t.2).sum();
            let grads = {
                let mut tape = Tape::new(&model.params);
                let l = match &noise {
                    None => full_softmax_loss(&model, &mut tape, texts, &targets),
                    Some(nt) => negative_sampling_loss(&model, &mut tape, texts, &targets, nt, cfg.negatives, &mut rng),
                };
                let v = tape.scalar(l);
                if !v.is_finite() {
                    return Err(Error::Diverged(format!("stage-1 loss is {v} at epoch {epoch}")));
                }
                total += v;
                let scaled = tape.scale(l, 1.0 / weight);
                tape.backward(scaled)
            };
            if !grads.all_finite() {
                return Err(Error::Diverged(format!("stage-1 gradient not finite at epoch {epoch}")));
            }
            adam.step(&mut model.params, &grads);
        }
        log::debug!("stage-1 epoch {epoch}: loss {total:.4}");
        if let Some(&prev) = report.epoch_loss.last() {
            let rel = (prev - total) / prev.abs().max(1e-12);
            stalled = if rel < cfg.min_rel_improvement { stalled + 1 } else { 0 };
        }
        report.epoch_loss.push(total);
        if stalled >= cfg.patience {
            break;
        }
    }
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefinitionSource {
    Curated,
    Bootstrap,
    /// Bootstrap decoder produced nothing; the terminology stood in.
    Substituted,
}

impl DefinitionSource {
    fn as_str(self) -> &'static str {
        match self {
            DefinitionSource::Curated => "curated",
            DefinitionSource::Bootstrap => "bootstrap",
            DefinitionSource::Substituted => "substituted",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "curated" => DefinitionSource::Curated,
            "bootstrap" => DefinitionSource::Bootstrap,
            "substituted" => DefinitionSource::Substituted,
            _ => return None,
        })
    }
}

/// Per-node `w`, `u` from terminology text and `w'`, `u'` from definition text.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddingSet {
    pub term_ids: Vec<String>,
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub w_def: Array2<f64>,
    pub u_def: Array2<f64>,
    pub sources: Vec<DefinitionSource>,
}

const EMB_FORMAT: &str = "graphex-emb/1";
const SIDE_FORMAT: &str = "graphex-side/1";

fn push_row(s: &mut String, v: ndarray::ArrayView1<f64>) {
    s.push('\t');
    for (k, x) in v.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x}");
    }
}

fn parse_row(field: &str, len: usize, line: usize, what: &'static str) -> Result<Vec<f64>> {
    let v: Vec<f64> = field
        .split(' ')
        .map(|x| x.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(what, format!("line {line}: bad number")))?;
    if v.len() != len {
        return Err(Error::format(what, format!("line {line}: expected {len} values, got {}", v.len())));
    }
    Ok(v)
}

fn parse_header(line: Option<&str>, format: &str, what: &'static str) -> Result<(usize, usize)> {
    let bad = |d: &str| Error::format(what, d.to_string());
    let header: Vec<&str> = line.unwrap_or("").split('\t').collect();
    if header.len() != 3 || header[0] != format {
        return Err(bad("missing header"));
    }
    let n = header[1].parse().map_err(|_| bad("bad node count"))?;
    let d = header[2].parse().map_err(|_| bad("bad dimension"))?;
    Ok((n, d))
}

/// One side of stage 1: feature (`w`) and context (`u`) rows per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SideEmbeddings {
    pub term_ids: Vec<String>,
    pub w: Array2<f64>,
    pub u: Array2<f64>,
}

impl SideEmbeddings {
    pub fn to_text(&self) -> String {
        let mut s = format!("{SIDE_FORMAT}\t{}\t{}\n", self.term_ids.len(), self.w.ncols());
        for (i, id) in self.term_ids.iter().enumerate() {
            s.push_str(id);
            push_row(&mut s, self.w.row(i));
            push_row(&mut s, self.u.row(i));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "side embedding snapshot";
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let (n, d) = parse_header(lines.next(), SIDE_FORMAT, WHAT)?;
        let mut out = Self {
            term_ids: Vec::with_capacity(n),
            w: Array2::zeros((n, d)),
            u: Array2::zeros((n, d)),
        };
        for (i, line) in lines.enumerate() {
            if i >= n {
                return Err(Error::format(WHAT, "more rows than the header declares"));
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::format(WHAT, format!("line {}: expected 3 fields", i + 2)));
            }
            out.term_ids.push(f[0].to_string());
            out.w.row_mut(i).assign(&Array1::from(parse_row(f[1], d, i + 2, WHAT)?));
            out.u.row_mut(i).assign(&Array1::from(parse_row(f[2], d, i + 2, WHAT)?));
        }
        if out.term_ids.len() != n {
            return Err(Error::format(WHAT, format!("header declares {n} rows, found {}", out.term_ids.len())));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

impl NodeEmbeddingSet {
    /// Joins the two sides; both must cover the same nodes in the same order.
    pub fn assemble(term: SideEmbeddings, def: SideEmbeddings, sources: Vec<DefinitionSource>) -> Result<Self> {
        if term.term_ids != def.term_ids || sources.len() != term.term_ids.len() {
            return Err(Error::Invalid("terminology and definition sides cover different nodes".into()));
        }
        if term.w.ncols() != def.w.ncols() {
            return Err(Error::Dimension(format!(
                "terminology side has {} dims, definition side {}",
                term.w.ncols(),
                def.w.ncols()
            )));
        }
        Ok(Self {
            term_ids: term.term_ids,
            w: term.w,
            u: term.u,
            w_def: def.w,
            u_def: def.u,
            sources,
        })
    }

    pub fn len(&self) -> usize {
        self.term_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_ids.is_empty()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.ncols()
    }

    /// `[w_i || u_i]`.
    pub fn g_t(&self, i: usize) -> Array1<f64> {
        ndarray::concatenate![Axis(0), self.w.row(i), self.u.row(i)]
    }

    /// `[w'_i || u'_i]`.
    pub fn g_d(&self, i: usize) -> Array1<f64> {
        ndarray::concatenate![Axis(0), self.w_def.row(i), self.u_def.row(i)]
    }

    pub fn g_t_all(&self) -> Array2<f64> {
        ndarray::concatenate![Axis(1), self.w, self.u]
    }

    /// Text snapshot: a header line, then per node its id, definition source
    /// and the `w`, `u`, `g^t`, `g^d` rows as tab-separated fields.
    pub fn to_text(&self) -> String {
        let mut s = format!("{EMB_FORMAT}\t{}\t{}\n", self.len(), self.hidden_dim());
        for i in 0..self.len() {
            s.push_str(&self.term_ids[i]);
            s.push('\t');
            s.push_str(self.sources[i].as_str());
            push_row(&mut s, self.w.row(i));
            push_row(&mut s, self.u.row(i));
            push_row(&mut s, self.g_t(i).view());
            push_row(&mut s, self.g_d(i).view());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "embedding snapshot";
        let bad = |d: String| Error::format(WHAT, d);
        let mut lines = text.lines();
        let (n, d) = parse_header(lines.next(), EMB_FORMAT, WHAT)?;
        let mut out = Self {
            term_ids: Vec::with_capacity(n),
            w: Array2::zeros((n, d)),
            u: Array2::zeros((n, d)),
            w_def: Array2::zeros((n, d)),
            u_def: Array2::zeros((n, d)),
            sources: Vec::with_capacity(n),
        };
        let parse = |f: &str, len: usize, line: usize| parse_row(f, len, line, WHAT);
        let mut i = 0;
        for (ln, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            if i >= n {
                return Err(bad("more rows than the header declares".into()));
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(format!("line {}: expected 6 fields", ln + 2)));
            }
            out.term_ids.push(f[0].to_string());
            out.sources
                .push(DefinitionSource::parse(f[1]).ok_or_else(|| bad(format!("line {}: bad source", ln + 2)))?);
            let w = parse(f[2], d, ln + 2)?;
            let u = parse(f[3], d, ln + 2)?;
            let gt = parse(f[4], 2 * d, ln + 2)?;
            let gd = parse(f[5], 2 * d, ln + 2)?;
            if gt[..d] != w[..] || gt[d..] != u[..] {
                return Err(bad(format!("line {}: g^t is not [w || u]", ln + 2)));
            }
            out.w.row_mut(i).assign(&Array1::from(w));
            out.u.row_mut(i).assign(&Array1::from(u));
            out.w_def.row_mut(i).assign(&Array1::from(gd[..d].to_vec()));
            out.u_def.row_mut(i).assign(&Array1::from(gd[d..].to_vec()));
            i += 1;
        }
        if i != n {
            return Err(bad(format!("header declares {n} rows, found {i}")));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapDefinition {
    pub tokens: Vec<usize>,
    pub substituted: bool,
}

/// Greedy definitions for every held-out node from a transformer trained on
/// the training pairs of the same graph. An empty output is replaced by the
/// terminology tokens and flagged.
pub fn bootstrap_test_definitions(
    model: &CondTransformer,
    g: &OntologyDag,
    split: &DataSplit,
    vocab: &Vocabulary,
) -> Result<BTreeMap<usize, BootstrapDefinition>> {
    let mut out = BTreeMap::new();
    for i in split.held_out() {
        let src = vocab.numericalize(&g.node(i).terminology);
        let ex = Example::new(i, src.clone(), Vec::new());
        let dec = decode(model, &ex, DecodeMode::Greedy, MAX_DEFINITION_TOKENS, 0)?;
        let def = if dec.tokens.is_empty() {
            BootstrapDefinition {
                tokens: src,
                substituted: true,
            }
        } else {
            BootstrapDefinition {
                tokens: dec.tokens,
                substituted: false,
            }
        };
        out.insert(i, def);
    }
    Ok(out)
}

/// Token ids per node for the terminology side.
pub fn terminology_texts(g: &OntologyDag, vocab: &Vocabulary) -> Vec<Vec<usize>> {
    g.nodes().iter().map(|n| vocab.numericalize(&n.terminology)).collect()
}

/// Definition text per node: curated where visible in `g`, bootstrap
/// elsewhere. Fails if a node has neither.
pub fn definition_texts(
    g: &OntologyDag,
    vocab: &Vocabulary,
    bootstrap: &BTreeMap<usize, BootstrapDefinition>,
) -> Result<(Vec<Vec<usize>>, Vec<DefinitionSource>)> {
    let mut texts = Vec::with_capacity(g.len());
    let mut sources = Vec::with_capacity(g.len());
    for node in g.nodes() {
        if let Some(b) = bootstrap.get(&node.index) {
            texts.push(b.tokens.clone());
            sources.push(if b.substituted {
                DefinitionSource::Substituted
            } else {
                DefinitionSource::Bootstrap
            });
        } else if let Some(d) = node.definition_tokens.as_ref().filter(|d| !d.is_empty()) {
            let mut ids = vocab.numericalize(d);
            ids.truncate(MAX_DEFINITION_TOKENS);
            texts.push(ids);
            sources.push(DefinitionSource::Curated);
        } else {
            return Err(Error::Invalid(format!(
                "node {} has neither a visible nor a bootstrap definition",
                node.term_id
            )));
        }
    }
    Ok((texts, sources))
}

fn term_ids(g: &OntologyDag) -> Vec<String> {
    g.nodes().iter().map(|n| n.term_id.clone()).collect()
}

pub fn train_terminology_side(
    g: &OntologyDag,
    vocab: &Vocabulary,
    walks: &WalkBatch,
    cfg: &Stage1Config,
) -> Result<(SideEmbeddings, Stage1Report)> {
    let texts = terminology_texts(g, vocab);
    let (m, report) = train_side(&texts, vocab.len(), walks, cfg)?;
    let (u, w) = m.encode_all(&texts)?;
    Ok((SideEmbeddings { term_ids: term_ids(g), w, u }, report))
}

/// Curated definitions visible in `g` plus `bootstrap` text for the rest.
pub fn train_definition_side(
    g: &OntologyDag,
    vocab: &Vocabulary,
    walks: &WalkBatch,
    bootstrap: &BTreeMap<usize, BootstrapDefinition>,
    cfg: &Stage1Config,
) -> Result<(SideEmbeddings, Vec<DefinitionSource>, Stage1Report)> {
    let (texts, sources) = definition_texts(g, vocab, bootstrap)?;
    let (m, report) = train_side(&texts, vocab.len(), walks, cfg)?;
    let (u, w) = m.encode_all(&texts)?;
    Ok((SideEmbeddings { term_ids: term_ids(g), w, u }, sources, report))
}

/// Trains the terminology side and the definition side independently and
/// assembles the embedding set.
pub fn train_stage1(
    g: &OntologyDag,
    vocab: &Vocabulary,
    walks: &WalkBatch,
    bootstrap: &BTreeMap<usize, BootstrapDefinition>,
    cfg: &Stage1Config,
) -> Result<(NodeEmbeddingSet, [Stage1Report; 2])> {
    let (term, tr) = train_terminology_side(g, vocab, walks, cfg)?;
    let (def, sources, dr) = train_definition_side(g, vocab, walks, bootstrap, cfg)?;
    Ok((NodeEmbeddingSet::assemble(term, def, sources)?, [tr, dr]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_softmax() {
        let u = ndarray::array![[1.0], [0.0]];
        let p = arrival_distribution(&u, &ndarray::array![1.0]);
        assert!((p[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((p.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sequence_rejected() {
        let m = Stage1Model::new(6, 4, 4, 0);
        assert!(m.encode_node(&[]).is_err());
    }

    #[test]
    fn zero_params_zero_embeddings() {
        let mut m = Stage1Model::new(6, 4, 4, 0);
        m.params.fill(0.0);
        let (u, w) = m.encode_node(&[4, 5]).unwrap();
        assert!(u.iter().chain(w.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn snapshot_round_trip() {
        let set = NodeEmbeddingSet {
            term_ids: vec!["A:1".into(), "A:2".into()],
            w: ndarray::array![[0.1, -2.5], [1e-17, 3.0]],
            u: ndarray::array![[0.3, 0.0], [1.0 / 3.0, -0.0]],
            w_def: ndarray::array![[5.0, 6.0], [7.0, 8.0]],
            u_def: ndarray::array![[-1.0, 2.0], [0.25, 9.5]],
            sources: vec![DefinitionSource::Curated, DefinitionSource::Bootstrap],
        };
        let back = NodeEmbeddingSet::from_text(&set.to_text()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.g_t(1).to_vec(), vec![1e-17, 3.0, 1.0 / 3.0, -0.0]);
        assert!(NodeEmbeddingSet::from_text("nonsense").is_err());
    }
}
