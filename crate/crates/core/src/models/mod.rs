//! Sequence models sharing one training loop and one decoder: the
//! conditioned transformer (baseline and graph-fused variants), the
//! attention GRU encoder-decoder and its latent-variable extension.

pub mod rnn;
pub mod transformer;

use std::collections::BTreeMap;

use graphex_nn::layers::Dropout;
use graphex_nn::{seeded_rng, Adam, ParamSet, SerializedParam, Tape, Var};
use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dag::OntologyDag;
use crate::error::{Error, Result};
use crate::metrics::{DecodeMode, GenerationRecord};
use crate::text::{Vocabulary, BOS, EOS, MAX_DEFINITION_TOKENS, PAD, UNK};

/// One terminology/definition pair in index form.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub node: usize,
    pub src: Vec<usize>,
    /// Target without BOS/EOS.
    pub tgt: Vec<usize>,
    /// One entry per external conditioning slot; `None` asks the model to
    /// fall back to its trainable local embedding.
    pub cond: Vec<Option<Array1<f64>>>,
}

impl Example {
    pub fn new(node: usize, src: Vec<usize>, mut tgt: Vec<usize>) -> Self {
        tgt.truncate(MAX_DEFINITION_TOKENS);
        Self {
            node,
            src,
            tgt,
            cond: Vec::new(),
        }
    }

    pub fn decoder_input(&self) -> Vec<usize> {
        std::iter::once(BOS).chain(self.tgt.iter().copied()).collect()
    }

    pub fn decoder_output(&self) -> Vec<usize> {
        self.tgt.iter().copied().chain(std::iter::once(EOS)).collect()
    }

    pub fn num_targets(&self) -> usize {
        self.tgt.len() + 1
    }
}

/// Per-call state threaded through a loss computation.
pub struct LossCtx {
    pub drop: Dropout,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub train: bool,
}

impl LossCtx {
    pub fn eval(seed: u64) -> Self {
        Self {
            drop: Dropout::eval(),
            rng: seeded_rng(seed),
            epoch: 0,
            train: false,
        }
    }
}

pub trait SeqModel {
    type State: Clone;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn vocab_size(&self) -> usize;

    /// Summed negative log-likelihood of the target (plus any regularizer).
    fn example_loss(&self, tape: &mut Tape<'_>, ex: &Example, ctx: &mut LossCtx) -> Result<Var>;

    fn init_state(&self, ex: &Example, rng: &mut ChaCha8Rng) -> Result<Self::State>;

    /// Feeds `token` and returns the next-token log-probabilities.
    fn advance(&self, state: &Self::State, token: usize) -> (Self::State, Array1<f64>);
}

pub fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lz = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    logits.mapv(|x| x - lz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub dropout: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Stop once the mean per-token training loss falls below this.
    pub target_loss: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            lr: 1e-3,
            clip_norm: 5.0,
            dropout: 0.1,
            patience: 5,
            target_loss: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> f64 {
        self.train_loss.last().copied().unwrap_or(f64::NAN)
    }
}

/// Mean per-token loss over `data` without dropout.
pub fn mean_loss<M: SeqModel>(model: &M, data: &[Example], seed: u64) -> Result<f64> {
    let mut ctx = LossCtx::eval(seed);
    let (mut total, mut tokens) = (0.0, 0usize);
    for ex in data {
        let mut tape = Tape::new(model.params());
        let l = model.example_loss(&mut tape, ex, &mut ctx)?;
        total += tape.scalar(l);
        tokens += ex.num_targets();
    }
    Ok(if tokens == 0 { 0.0 } else { total / tokens as f64 })
}

/// Minibatch Adam on the mean per-token loss with early stopping on the
/// validation loss (training loss when `valid` is empty). The parameters of
/// the best epoch are restored on exit.
pub fn train<M: SeqModel>(model: &mut M, train: &[Example], valid: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::Invalid("no training examples".into()));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport {
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut best = (f64::INFINITY, model.params().clone());
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut ctx = LossCtx {
            drop: if cfg.dropout > 0.0 {
                Dropout::train(cfg.dropout, seeded_rng(cfg.seed ^ (epoch as u64 + 1) << 20))
            } else {
                Dropout::eval()
            },
            rng: seeded_rng(cfg.seed.wrapping_add(7919 * (epoch as u64 + 1))),
            epoch,
            train: true,
        };
        let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let tokens: usize = batch.iter().map(|&i| train[i].num_targets()).sum();
            let mut grads = {
                let mut tape = Tape::new(model.params());
                let mut parts = Vec::with_capacity(batch.len());
                for &i in batch {
                    parts.push(model.example_loss(&mut tape, &train[i], &mut ctx)?);
                }
                let all = tape.concat_rows(&parts);
                let sum = tape.sum_all(all);
                let loss = tape.scale(sum, 1.0 / tokens as f64);
                let value = tape.scalar(sum);
                if !value.is_finite() {
                    return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
                }
                epoch_loss += value;
                epoch_tokens += tokens;
                tape.backward(loss)
            };
            if !grads.all_finite() {
                return Err(Error::Diverged(format!("non-finite gradient at epoch {epoch}")));
            }
            grads.clip_global_norm(cfg.clip_norm);
            adam.step(model.params_mut(), &grads);
        }
        let train_loss = epoch_loss / epoch_tokens as f64;
        report.train_loss.push(train_loss);
        let monitor = if valid.is_empty() {
            mean_loss(model, train, cfg.seed)?
        } else {
            mean_loss(model, valid, cfg.seed)?
        };
        report.valid_loss.push(monitor);
        log::debug!("epoch {epoch}: train {train_loss:.4} monitor {monitor:.4}");
        if monitor < best.0 {
            best = (monitor, model.params().clone());
            report.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
        }
        if cfg.target_loss.is_some_and(|t| train_loss < t) || stale >= cfg.patience {
            break;
        }
    }
    *model.params_mut() = best.1;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub finished: bool,
}

/// Tokens a decoder never emits.
pub fn never_emitted(token: usize) -> bool {
    matches!(token, PAD | UNK | BOS)
}

/// Largest log-probability among emittable tokens; ties go to the lowest index.
fn best_emittable(lp: &Array1<f64>) -> usize {
    let mut best = EOS;
    for (i, &x) in lp.iter().enumerate() {
        if !never_emitted(i) && x > lp[best] {
            best = i;
        }
    }
    best
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn decode<M: SeqModel>(model: &M, ex: &Example, mode: DecodeMode, max_len: usize, seed: u64) -> Result<Decoded> {
    match mode {
        DecodeMode::Greedy => greedy(model, ex, max_len, seed),
        DecodeMode::Beam(b) => beam(model, ex, b.max(1), max_len, seed),
    }
}

/// Greedy decoding over emittable tokens (never PAD, UNK or BOS).
pub fn greedy<M: SeqModel>(model: &M, ex: &Example, max_len: usize, seed: u64) -> Result<Decoded> {
    let mut rng = seeded_rng(seed);
    let mut state = model.init_state(ex, &mut rng)?;
    let mut token = BOS;
    let mut out = Decoded {
        tokens: Vec::new(),
        log_probs: Vec::new(),
        finished: false,
    };
    while out.tokens.len() < max_len {
        let (next, lp) = model.advance(&state, token);
        state = next;
        token = best_emittable(&lp);
        if token == EOS {
            out.log_probs.push(lp[token]);
            out.finished = true;
            break;
        }
        out.tokens.push(token);
        out.log_probs.push(lp[token]);
    }
    Ok(out)
}

#[derive(Clone)]
struct Hyp<S> {
    state: S,
    last: usize,
    tokens: Vec<usize>,
    log_probs: Vec<f64>,
    score: f64,
}

fn normalized(score: f64, len: usize) -> f64 {
    score / len.max(1) as f64
}

/// Beam search with scores normalized by length (EOS included). Candidates
/// with equal scores are ordered by token index, then by parent rank.
pub fn beam<M: SeqModel>(model: &M, ex: &Example, width: usize, max_len: usize, seed: u64) -> Result<Decoded> {
    let mut rng = seeded_rng(seed);
    let init = model.init_state(ex, &mut rng)?;
    let mut live = vec![Hyp {
        state: init,
        last: BOS,
        tokens: Vec::new(),
        log_probs: Vec::new(),
        score: 0.0,
    }];
    let mut done: Vec<Decoded> = Vec::new();
    let mut done_scores: Vec<f64> = Vec::new();
    while !live.is_empty() {
        // hypotheses at the length cap leave the beam unfinished, as in greedy
        let (capped, open): (Vec<_>, Vec<_>) = live.into_iter().partition(|h| h.tokens.len() >= max_len);
        for h in capped {
            done_scores.push(normalized(h.score, h.tokens.len()));
            done.push(Decoded {
                tokens: h.tokens,
                log_probs: h.log_probs,
                finished: false,
            });
        }
        live = open;
        if live.is_empty() {
            break;
        }
        let mut cands: Vec<(f64, usize, usize, f64)> = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (p, h) in live.iter().enumerate() {
            let (s, lp) = model.advance(&h.state, h.last);
            states.push(s);
            let len = h.tokens.len() + 1;
            for (tok, &l) in lp.iter().enumerate().filter(|(t, _)| !never_emitted(*t)) {
                cands.push((normalized(h.score + l, len), tok, p, l));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next = Vec::with_capacity(width);
        for &(norm, tok, p, l) in cands.iter().take(width) {
            let parent = &live[p];
            let mut tokens = parent.tokens.clone();
            let mut log_probs = parent.log_probs.clone();
            log_probs.push(l);
            if tok == EOS {
                done.push(Decoded {
                    tokens,
                    log_probs,
                    finished: true,
                });
                done_scores.push(norm);
            } else {
                tokens.push(tok);
                next.push(Hyp {
                    state: states[p].clone(),
                    last: tok,
                    tokens,
                    log_probs,
                    score: parent.score + l,
                });
            }
        }
        live = next;
        // a live hypothesis can still overtake finished ones, so stop only
        // once enough are finished and none live scores higher
        if done.len() >= width {
            let best_done = done_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let best_live = live
                .iter()
                .map(|h| normalized(h.score, h.tokens.len()))
                .fold(f64::NEG_INFINITY, f64::max);
            if best_live <= best_done {
                break;
            }
        }
    }
    for h in live {
        done_scores.push(normalized(h.score, h.tokens.len()));
        done.push(Decoded {
            tokens: h.tokens,
            log_probs: h.log_probs,
            finished: false,
        });
    }
    let mut best = 0;
    for i in 1..done.len() {
        if done_scores[i] > done_scores[best] {
            best = i;
        }
    }
    Ok(done.swap_remove(best))
}

/// Terminology/definition pairs for `nodes`. Every node must have a visible
/// definition in `g`.
pub fn make_examples(g: &OntologyDag, vocab: &Vocabulary, nodes: &[usize]) -> Result<Vec<Example>> {
    nodes
        .iter()
        .map(|&i| {
            let n = g.node(i);
            let def = n
                .definition_tokens
                .as_ref()
                .ok_or_else(|| Error::Invalid(format!("node {} has no visible definition", n.term_id)))?;
            Ok(Example::new(i, vocab.numericalize(&n.terminology), vocab.numericalize(def)))
        })
        .collect()
}

/// Decodes every example in parallel. References come from the curated
/// definition in `g`; example `k` decodes with seed `seed + node index`.
pub fn generate_records<M: SeqModel + Sync>(
    model: &M,
    g: &OntologyDag,
    vocab: &Vocabulary,
    examples: &[Example],
    mode: DecodeMode,
    seed: u64,
) -> Result<Vec<GenerationRecord>> {
    examples
        .par_iter()
        .map(|ex| {
            let node = g.node(ex.node);
            let out = decode(model, ex, mode, MAX_DEFINITION_TOKENS, seed.wrapping_add(ex.node as u64))?;
            Ok(GenerationRecord {
                node_id: node.term_id.clone(),
                terminology: node.name.clone(),
                reference: node.definition_tokens.clone().unwrap_or_default(),
                generated: vocab.denumericalize(&out.tokens),
                token_log_probs: out.log_probs,
                decode: mode,
                finished: out.finished,
            })
        })
        .collect()
}

pub const CHECKPOINT_FORMAT: &str = "graphex-ckpt/1";

/// Versioned parameter blob with an echo of the config that built the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub kind: String,
    pub config: serde_json::Value,
    pub vocab_size: usize,
    pub params: Vec<SerializedParam>,
}

impl Checkpoint {
    pub fn new<M: SeqModel, C: Serialize>(kind: &str, config: &C, model: &M) -> Result<Self> {
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            kind: kind.into(),
            config: serde_json::to_value(config)?,
            vocab_size: model.vocab_size(),
            params: model.params().to_serialized(),
        })
    }

    pub fn config<C: for<'de> Deserialize<'de>>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    /// Copies the stored parameters into a freshly built `model`.
    pub fn restore<M: SeqModel>(&self, model: &mut M) -> Result<()> {
        if model.vocab_size() != self.vocab_size {
            return Err(Error::Dimension(format!(
                "checkpoint vocabulary {} but model vocabulary {}",
                self.vocab_size,
                model.vocab_size()
            )));
        }
        model.params_mut().load_serialized(&self.params)?;
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::format("checkpoint", format!("unsupported format {}", ck.format)));
        }
        Ok(ck)
    }
}

/// Per-parameter-block scalar counts, handy for logging model size.
pub fn param_summary(params: &ParamSet) -> BTreeMap<String, usize> {
    params.ids().map(|id| (params.name(id).to_string(), params.get(id).len())).collect()
}
