//! Definition generation conditioned on a local terminology embedding and
//! the propagated graph embeddings, placed as encoder prefix positions.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use graphex_nn::{ParamSet, Tape, Var};
use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{DataSplit, OntologyDag};
use crate::downstream::NodeVectors;
use crate::error::{Error, Result};
use crate::metrics::{score_run, DecodeMode, GenerationRecord, MetricOptions, MetricReport};
use crate::models::transformer::{CondTransformer, Slot, TransformerConfig, TransformerState};
use crate::models::{
    generate_records, make_examples, mean_loss, train, Checkpoint, Example, LossCtx, SeqModel, TrainConfig,
    TrainReport,
};
use crate::stage1::{DefinitionSource, NodeEmbeddingSet};
use crate::text::Vocabulary;

/// Precomputed local vectors keyed by term id.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTable {
    pub dim: usize,
    vectors: HashMap<String, Array1<f64>>,
}

impl LocalTable {
    /// First line is the dimension, then `term_id<TAB>v1 v2 ... vd` rows.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |d: String| Error::format("local embedding file", d);
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let dim: usize = head.trim().parse().map_err(|_| bad(format!("header {head:?} is not a dimension")))?;
        if dim == 0 {
            return Err(bad("dimension must be positive".into()));
        }
        let mut vectors = HashMap::new();
        for (n, line) in lines {
            let (id, vals) = line
                .split_once('\t')
                .ok_or_else(|| bad(format!("line {}: expected term_id<TAB>values", n + 1)))?;
            let v: Vec<f64> = vals
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("line {}: unparsable value", n + 1)))?;
            if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
                return Err(bad(format!("line {}: expected {dim} finite values, got {}", n + 1, v.len())));
            }
            if vectors.insert(id.to_string(), Array1::from(v)).is_some() {
                return Err(bad(format!("line {}: duplicate term id {id}", n + 1)));
            }
        }
        Ok(Self { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, term_id: &str) -> Option<&Array1<f64>> {
        self.vectors.get(term_id)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Rows ordered by term id.
    pub fn to_node_vectors(&self) -> Result<NodeVectors> {
        let mut ids: Vec<&String> = self.vectors.keys().collect();
        ids.sort();
        let mut rows = Array2::zeros((ids.len(), self.dim));
        for (r, id) in ids.iter().enumerate() {
            rows.row_mut(r).assign(&self.vectors[*id]);
        }
        NodeVectors::new(ids.into_iter().cloned().collect(), rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalProvider {
    /// Mean of the model's learned token embeddings.
    Trainable,
    LookupFile(LocalTable),
}

impl LocalProvider {
    pub fn name(&self) -> &'static str {
        match self {
            LocalProvider::Trainable => "trainable",
            LocalProvider::LookupFile(_) => "lookup-file",
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            LocalProvider::Trainable => None,
            LocalProvider::LookupFile(t) => Some(t.dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEmbedding {
    pub vector: Array1<f64>,
    pub provider: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    pub transformer: TransformerConfig,
    pub use_tg: bool,
    pub use_dg: bool,
    pub train: TrainConfig,
    pub decode: DecodeMode,
    pub seed: u64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            transformer: TransformerConfig::default(),
            use_tg: true,
            use_dg: true,
            train: TrainConfig::default(),
            decode: DecodeMode::Greedy,
            seed: 0,
        }
    }
}

/// Row label for a fusion variant.
pub fn variant_label(use_tg: bool, use_dg: bool) -> &'static str {
    match (use_tg, use_dg) {
        (true, true) => "Our Model",
        (false, true) => "Our Model w/o TG",
        (true, false) => "Our Model w/o DG",
        (false, false) => "Transformer + local",
    }
}

/// Everything needed to rebuild an untrained model of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Shape {
    pub config: Stage2Config,
    /// Lookup-file dimension, or `None` for the trainable provider.
    pub local_dim: Option<usize>,
    /// Size of `g^t` and `g^d`.
    pub graph_dim: usize,
}

#[derive(Debug, Clone)]
pub struct Stage2Model {
    pub shape: Stage2Shape,
    pub net: CondTransformer,
}

pub const CHECKPOINT_KIND: &str = "graphex-stage2";

impl Stage2Model {
    pub fn new(shape: Stage2Shape, vocab: usize) -> Result<Self> {
        let mut slots = vec![match shape.local_dim {
            Some(dim) => Slot::LocalLookup { dim },
            None => Slot::LocalTrainable,
        }];
        if shape.config.use_tg {
            slots.push(Slot::External {
                name: "g_t".into(),
                dim: shape.graph_dim,
            });
        }
        if shape.config.use_dg {
            slots.push(Slot::External {
                name: "g_d".into(),
                dim: shape.graph_dim,
            });
        }
        let net = CondTransformer::new(shape.config.transformer.clone(), slots, vocab, shape.config.seed)?;
        Ok(Self { shape, net })
    }

    pub fn prefix_slots(&self) -> usize {
        self.net.slots.len()
    }

    pub fn label(&self) -> &'static str {
        variant_label(self.shape.config.use_tg, self.shape.config.use_dg)
    }

    /// The local vector the model sees for a node: the lookup row verbatim on
    /// a hit, otherwise the mean of the learned token embeddings.
    pub fn local_embed(&self, provider: &LocalProvider, term_id: &str, tokens: &[usize]) -> Result<LocalEmbedding> {
        if let LocalProvider::LookupFile(t) = provider {
            if let Some(v) = t.get(term_id) {
                return Ok(LocalEmbedding {
                    vector: v.clone(),
                    provider: "lookup-file",
                });
            }
            log::warn!("no local vector for {term_id}; using the trainable provider");
        }
        Ok(LocalEmbedding {
            vector: self.net.local_mean_value(tokens)?,
            provider: "trainable",
        })
    }

    /// Fills `ex.cond` for every example: local slot, then `g^t`, then `g^d`
    /// as enabled.
    pub fn attach(&self, examples: &mut [Example], g: &OntologyDag, emb: &NodeEmbeddingSet, local: &LocalProvider) -> Result<()> {
        check_embeddings(g, emb)?;
        if emb.w.ncols() * 2 != self.shape.graph_dim {
            return Err(Error::Dimension(format!(
                "model expects graph embeddings of {}, snapshot has {}",
                self.shape.graph_dim,
                emb.w.ncols() * 2
            )));
        }
        if local.dim() != self.shape.local_dim {
            return Err(Error::Dimension(format!(
                "model built for local dimension {:?}, provider gives {:?}",
                self.shape.local_dim,
                local.dim()
            )));
        }
        let mut misses = 0;
        for ex in examples.iter_mut() {
            let i = ex.node;
            let mut cond = Vec::with_capacity(3);
            cond.push(match local {
                LocalProvider::Trainable => None,
                LocalProvider::LookupFile(t) => {
                    let v = t.get(&g.node(i).term_id).cloned();
                    if v.is_none() {
                        misses += 1;
                    }
                    v
                }
            });
            if self.shape.config.use_tg {
                cond.push(Some(emb.g_t(i)));
            }
            if self.shape.config.use_dg {
                cond.push(Some(emb.g_d(i)));
            }
            ex.cond = cond;
        }
        if misses > 0 {
            log::warn!("{misses} nodes missing from the local lookup file fall back to the trainable provider");
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(CHECKPOINT_KIND, &self.shape, self)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::format("checkpoint", format!("expected {CHECKPOINT_KIND}, found {}", ck.kind)));
        }
        let mut m = Self::new(ck.config()?, ck.vocab_size)?;
        ck.restore(&mut m)?;
        Ok(m)
    }
}

impl SeqModel for Stage2Model {
    type State = TransformerState;

    fn params(&self) -> &ParamSet {
        self.net.params()
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        self.net.params_mut()
    }

    fn vocab_size(&self) -> usize {
        self.net.vocab_size()
    }

    fn example_loss(&self, tape: &mut Tape<'_>, ex: &Example, ctx: &mut LossCtx) -> Result<Var> {
        self.net.example_loss(tape, ex, ctx)
    }

    fn init_state(&self, ex: &Example, rng: &mut ChaCha8Rng) -> Result<TransformerState> {
        self.net.init_state(ex, rng)
    }

    fn advance(&self, state: &TransformerState, token: usize) -> (TransformerState, Array1<f64>) {
        self.net.advance(state, token)
    }
}

fn check_embeddings(g: &OntologyDag, emb: &NodeEmbeddingSet) -> Result<()> {
    if emb.len() != g.len() || g.nodes().iter().zip(&emb.term_ids).any(|(n, id)| &n.term_id != id) {
        return Err(Error::Invalid(format!(
            "embedding snapshot ({} nodes) does not match graph {} ({} nodes)",
            emb.len(),
            g.name,
            g.len()
        )));
    }
    Ok(())
}

/// Summed teacher-forced negative log-likelihood over `examples`.
pub fn stage2_loss(model: &Stage2Model, examples: &[Example]) -> Result<f64> {
    let tokens: usize = examples.iter().map(Example::num_targets).sum();
    Ok(mean_loss(model, examples, 0)? * tokens as f64)
}

/// Fails unless every held-out node's definition embedding came from a
/// bootstrap definition.
pub fn require_bootstrap(emb: &NodeEmbeddingSet, split: &DataSplit) -> Result<()> {
    let curated: Vec<&str> = split
        .held_out()
        .into_iter()
        .filter(|&i| emb.sources.get(i) == Some(&DefinitionSource::Curated))
        .map(|i| emb.term_ids[i].as_str())
        .collect();
    if let Some(first) = curated.first() {
        return Err(Error::Config(format!(
            "definition-side embeddings for {} held-out nodes (e.g. {first}) were built from curated definitions. \
             Retrain stage 1 with bootstrap definitions for the held-out nodes (train-stage1 --bootstrap <baseline checkpoint>) \
             or disable the definition embedding (drop --use-dg)",
            curated.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Stage2Run {
    pub model: Stage2Model,
    pub train_report: TrainReport,
    pub records: Vec<GenerationRecord>,
    pub report: MetricReport,
}

/// Trains the variant selected by `cfg.use_tg` / `cfg.use_dg` on the training
/// nodes, decodes the test nodes and scores them.
pub fn run_ablation(
    g: &OntologyDag,
    split: &DataSplit,
    vocab: &Vocabulary,
    emb: &NodeEmbeddingSet,
    local: &LocalProvider,
    cfg: &Stage2Config,
    metrics: &MetricOptions,
) -> Result<Stage2Run> {
    if cfg.use_dg {
        require_bootstrap(emb, split)?;
    }
    let held: HashSet<usize> = split.held_out().into_iter().collect();
    if split.train.iter().any(|i| held.contains(i)) {
        return Err(Error::Invalid("split places a node in both train and held-out sets".into()));
    }
    let shape = Stage2Shape {
        config: cfg.clone(),
        local_dim: local.dim(),
        graph_dim: emb.w.ncols() * 2,
    };
    let mut model = Stage2Model::new(shape, vocab.len())?;
    let mut train_ex = make_examples(g, vocab, &split.train)?;
    let mut valid_ex = make_examples(g, vocab, &split.valid)?;
    let mut test_ex = make_examples(g, vocab, &split.test)?;
    for set in [&mut train_ex, &mut valid_ex, &mut test_ex] {
        model.attach(set, g, emb, local)?;
    }
    let train_report = train(&mut model, &train_ex, &valid_ex, &cfg.train)?;
    let records = generate_records(&model, g, vocab, &test_ex, cfg.decode, cfg.seed)?;
    let mut report = score_run(model.label(), &records, metrics)?;
    report.notes.push(format!("local provider: {}", local.name()));
    report.notes.push(format!("prefix slots: {}", model.prefix_slots()));
    Ok(Stage2Run {
        model,
        train_report,
        records,
        report,
    })
}
