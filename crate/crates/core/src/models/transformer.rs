//! Encoder-decoder transformer whose encoder input may start with projected
//! conditioning vectors ("prefix slots") ahead of the source tokens.

use std::sync::Arc;

use graphex_nn::layers::{causal_mask, sinusoidal_positions, DecoderLayer, Dropout, EncoderLayer, LayerNorm};
use graphex_nn::{seeded_rng, Linear, ParamId, ParamSet, Tape, Var};
use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{log_softmax, Example, LossCtx, SeqModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            d_model: 768,
            heads: 8,
            ff_dim: 2048,
            enc_layers: 3,
            dec_layers: 3,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 || self.ff_dim == 0 {
            return Err(Error::Config(format!(
                "transformer needs d_model divisible by heads and positive sizes: {self:?}"
            )));
        }
        Ok(())
    }
}

/// What feeds one prefix position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Slot {
    /// Mean of the model's own embeddings of the source tokens.
    LocalTrainable,
    /// Precomputed local vector of `dim`; a missing vector falls back to the
    /// trainable mean through its own projection.
    LocalLookup { dim: usize },
    /// Required external vector of `dim`.
    External { name: String, dim: usize },
}

#[derive(Debug, Clone, Copy)]
struct SlotParams {
    proj: Option<Linear>,
    fallback: Option<Linear>,
}

pub const MAX_POSITIONS: usize = 128;

#[derive(Debug, Clone)]
pub struct CondTransformer {
    pub config: TransformerConfig,
    pub slots: Vec<Slot>,
    vocab: usize,
    params: ParamSet,
    embed: ParamId,
    slot_params: Vec<SlotParams>,
    encoder: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    out: Linear,
    positions: Array2<f64>,
}

impl CondTransformer {
    pub fn new(config: TransformerConfig, slots: Vec<Slot>, vocab: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut rng = seeded_rng(seed);
        let mut params = ParamSet::new();
        let embed = params.uniform("embed", vocab, d, 1.0 / (d as f64).sqrt(), &mut rng);
        let mut slot_params = Vec::with_capacity(slots.len());
        for (i, s) in slots.iter().enumerate() {
            let name = format!("slot{i}");
            let sp = match s {
                Slot::LocalTrainable => SlotParams {
                    proj: None,
                    fallback: Some(Linear::new(&mut params, &format!("{name}.local"), d, d, true, &mut rng)),
                },
                Slot::LocalLookup { dim } => SlotParams {
                    proj: Some(Linear::new(&mut params, &format!("{name}.proj"), *dim, d, true, &mut rng)),
                    fallback: Some(Linear::new(&mut params, &format!("{name}.local"), d, d, true, &mut rng)),
                },
                Slot::External { dim, .. } => SlotParams {
                    proj: Some(Linear::new(&mut params, &format!("{name}.proj"), *dim, d, true, &mut rng)),
                    fallback: None,
                },
            };
            slot_params.push(sp);
        }
        let encoder = (0..config.enc_layers)
            .map(|l| EncoderLayer::new(&mut params, &format!("enc{l}"), d, config.heads, config.ff_dim, &mut rng))
            .collect();
        let enc_norm = LayerNorm::new(&mut params, "enc_norm", d);
        let decoder = (0..config.dec_layers)
            .map(|l| DecoderLayer::new(&mut params, &format!("dec{l}"), d, config.heads, config.ff_dim, &mut rng))
            .collect();
        let dec_norm = LayerNorm::new(&mut params, "dec_norm", d);
        let out = Linear::new(&mut params, "out", d, vocab, true, &mut rng);
        Ok(Self {
            positions: sinusoidal_positions(MAX_POSITIONS, d),
            config,
            slots,
            vocab,
            params,
            embed,
            slot_params,
            encoder,
            enc_norm,
            decoder,
            dec_norm,
            out,
        })
    }

    pub fn output_layer(&self) -> Linear {
        self.out
    }

    pub fn embedding(&self) -> ParamId {
        self.embed
    }

    fn embed_tokens(&self, tape: &mut Tape<'_>, ids: &[usize]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab) {
            return Err(Error::Invalid(format!("token index {bad} outside vocabulary of {}", self.vocab)));
        }
        if ids.len() > MAX_POSITIONS {
            return Err(Error::Invalid(format!("sequence of {} exceeds {MAX_POSITIONS} positions", ids.len())));
        }
        let table = tape.param(self.embed);
        let e = tape.gather_rows(table, ids);
        let e = tape.scale(e, (self.config.d_model as f64).sqrt());
        let pos = self.positions.slice(ndarray::s![..ids.len(), ..]).to_owned();
        Ok(tape.add_const(e, &pos))
    }

    fn local_mean(&self, tape: &mut Tape<'_>, src: &[usize]) -> Var {
        let table = tape.param(self.embed);
        let e = tape.gather_rows(table, src);
        tape.mean_rows(e)
    }

    /// Mean of the learned embeddings of `src`, before any projection.
    pub fn local_mean_value(&self, src: &[usize]) -> Result<Array1<f64>> {
        if src.is_empty() {
            return Err(Error::Invalid("empty terminology".into()));
        }
        if let Some(&bad) = src.iter().find(|&&i| i >= self.vocab) {
            return Err(Error::Invalid(format!("token index {bad} outside vocabulary of {}", self.vocab)));
        }
        let mut tape = Tape::new(&self.params);
        let m = self.local_mean(&mut tape, src);
        Ok(tape.value(m).row(0).to_owned())
    }

    /// Projected prefix rows, one per slot.
    pub fn prefix(&self, tape: &mut Tape<'_>, ex: &Example) -> Result<Vec<Var>> {
        if ex.cond.len() != self.slots.len() {
            return Err(Error::Dimension(format!(
                "{} conditioning vectors for {} prefix slots",
                ex.cond.len(),
                self.slots.len()
            )));
        }
        let mut rows = Vec::with_capacity(self.slots.len());
        for ((slot, sp), cond) in self.slots.iter().zip(&self.slot_params).zip(&ex.cond) {
            let row = match (slot, cond) {
                (Slot::LocalTrainable, _) | (Slot::LocalLookup { .. }, None) => {
                    if ex.src.is_empty() {
                        return Err(Error::Invalid(format!("node {} has an empty terminology", ex.node)));
                    }
                    let m = self.local_mean(tape, &ex.src);
                    sp.fallback.expect("local slot has a fallback").forward(tape, m)
                }
                (Slot::LocalLookup { dim }, Some(v)) | (Slot::External { dim, .. }, Some(v)) => {
                    if v.len() != *dim {
                        return Err(Error::Dimension(format!("slot expects {dim} values, got {}", v.len())));
                    }
                    let x = tape.row(v.as_slice().expect("contiguous vector"));
                    sp.proj.expect("projected slot").forward(tape, x)
                }
                (Slot::External { name, .. }, None) => {
                    return Err(Error::MissingEmbedding(format!("{} ({name})", ex.node)));
                }
            };
            rows.push(row);
        }
        Ok(rows)
    }

    pub fn encode(&self, tape: &mut Tape<'_>, ex: &Example, drop: &mut Dropout) -> Result<Var> {
        let mut rows = self.prefix(tape, ex)?;
        if !ex.src.is_empty() {
            rows.push(self.embed_tokens(tape, &ex.src)?);
        }
        if rows.is_empty() {
            return Err(Error::Invalid(format!("node {} has nothing to encode", ex.node)));
        }
        let mut x = if rows.len() == 1 { rows[0] } else { tape.concat_rows(&rows) };
        x = drop.apply(tape, x);
        for layer in &self.encoder {
            x = layer.forward(tape, x, drop);
        }
        Ok(self.enc_norm.forward(tape, x))
    }

    pub fn decode_logits(&self, tape: &mut Tape<'_>, memory: Var, input: &[usize], drop: &mut Dropout) -> Result<Var> {
        let mut y = self.embed_tokens(tape, input)?;
        y = drop.apply(tape, y);
        let mask = causal_mask(input.len());
        for layer in &self.decoder {
            y = layer.forward(tape, y, memory, &mask, drop);
        }
        let y = self.dec_norm.forward(tape, y);
        Ok(self.out.forward(tape, y))
    }

    /// Number of encoder rows the example occupies (prefix + source).
    pub fn encoder_len(&self, ex: &Example) -> usize {
        self.slots.len() + ex.src.len()
    }
}

#[derive(Debug, Clone)]
pub struct TransformerState {
    memory: Arc<Array2<f64>>,
    prefix: Vec<usize>,
}

impl SeqModel for CondTransformer {
    type State = TransformerState;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn example_loss(&self, tape: &mut Tape<'_>, ex: &Example, ctx: &mut LossCtx) -> Result<Var> {
        let memory = self.encode(tape, ex, &mut ctx.drop)?;
        let logits = self.decode_logits(tape, memory, &ex.decoder_input(), &mut ctx.drop)?;
        Ok(tape.cross_entropy(logits, &ex.decoder_output()))
    }

    fn init_state(&self, ex: &Example, _rng: &mut ChaCha8Rng) -> Result<TransformerState> {
        let mut tape = Tape::new(&self.params);
        let memory = self.encode(&mut tape, ex, &mut Dropout::eval())?;
        Ok(TransformerState {
            memory: Arc::new(tape.value(memory).clone()),
            prefix: Vec::new(),
        })
    }

    fn advance(&self, state: &TransformerState, token: usize) -> (TransformerState, Array1<f64>) {
        let mut prefix = state.prefix.clone();
        prefix.push(token);
        let mut tape = Tape::new(&self.params);
        let memory = tape.constant((*state.memory).clone());
        let logits = self
            .decode_logits(&mut tape, memory, &prefix, &mut Dropout::eval())
            .expect("decoder prefix within limits");
        let last = tape.value(logits).row(prefix.len() - 1).to_owned();
        (
            TransformerState {
                memory: state.memory.clone(),
                prefix,
            },
            log_softmax(last.view()),
        )
    }
}
