//! GRU encoder-decoder with multiplicative attention, and a conditional VAE
//! that adds a Gaussian latent to the decoder's initial state.

use std::sync::Arc;

use graphex_nn::layers::Dropout;
use graphex_nn::{seeded_rng, GruCell, Linear, ParamId, ParamSet, Tape, Var};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{log_softmax, Example, LossCtx, SeqModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub word_dim: usize,
    pub hidden_dim: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            word_dim: 768,
            hidden_dim: 768,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct AttnCore {
    embed: ParamId,
    encoder: GruCell,
    decoder: GruCell,
    attn: ParamId,
    combine: Linear,
    out: Linear,
}

impl AttnCore {
    fn new(params: &mut ParamSet, cfg: &RnnConfig, vocab: usize, rng: &mut ChaCha8Rng) -> Self {
        let (w, h) = (cfg.word_dim, cfg.hidden_dim);
        Self {
            embed: params.uniform("embed", vocab, w, 0.1, rng),
            encoder: GruCell::new(params, "enc", w, h, rng),
            decoder: GruCell::new(params, "dec", w, h, rng),
            attn: params.xavier("attn", h, h, rng),
            combine: Linear::new(params, "combine", 2 * h, h, true, rng),
            out: Linear::new(params, "out", h, vocab, true, rng),
        }
    }

    fn embed(&self, tape: &mut Tape<'_>, ids: &[usize], drop: &mut Dropout) -> Vec<Var> {
        let table = tape.param(self.embed);
        let e = tape.gather_rows(table, ids);
        let e = drop.apply(tape, e);
        (0..ids.len()).map(|t| tape.slice_rows(e, t, 1)).collect()
    }

    /// Encoder states as rows, plus the last state.
    fn encode(&self, tape: &mut Tape<'_>, src: &[usize], drop: &mut Dropout) -> (Var, Var) {
        let xs = self.embed(tape, src, drop);
        let states = self.encoder.run(tape, &xs, None);
        let last = *states.last().expect("non-empty source");
        (tape.concat_rows(&states), last)
    }

    /// Attention over encoder rows and the output layer, for decoder rows `d`.
    fn readout(&self, tape: &mut Tape<'_>, d: Var, enc: Var, drop: &mut Dropout) -> Var {
        let wa = tape.param(self.attn);
        let q = tape.matmul(d, wa);
        let et = tape.transpose(enc);
        let scores = tape.matmul(q, et);
        let weights = tape.row_softmax(scores);
        let ctx = tape.matmul(weights, enc);
        let cat = tape.concat_cols(&[ctx, d]);
        let h = self.combine.forward(tape, cat);
        let h = tape.tanh(h);
        let h = drop.apply(tape, h);
        self.out.forward(tape, h)
    }

    fn nll(&self, tape: &mut Tape<'_>, ex: &Example, enc: Var, h0: Var, drop: &mut Dropout) -> Var {
        let xs = self.embed(tape, &ex.decoder_input(), drop);
        let states = self.decoder.run(tape, &xs, Some(h0));
        let d = tape.concat_rows(&states);
        let logits = self.readout(tape, d, enc, drop);
        tape.cross_entropy(logits, &ex.decoder_output())
    }

    fn step(&self, params: &ParamSet, state: &RnnState, token: usize) -> (RnnState, Array1<f64>) {
        let mut tape = Tape::new(params);
        let enc = tape.constant((*state.enc).clone());
        let h = tape.constant(state.h.clone());
        let mut drop = Dropout::eval();
        let x = self.embed(&mut tape, &[token], &mut drop)[0];
        let h = self.decoder.step(&mut tape, x, h);
        let logits = self.readout(&mut tape, h, enc, &mut drop);
        let lp = log_softmax(tape.value(logits).row(0));
        (
            RnnState {
                enc: state.enc.clone(),
                h: tape.value(h).clone(),
            },
            lp,
        )
    }
}

fn check_source(ex: &Example, vocab: usize) -> Result<()> {
    if ex.src.is_empty() {
        return Err(Error::Invalid(format!("node {} has an empty terminology", ex.node)));
    }
    if let Some(&bad) = ex.src.iter().chain(&ex.tgt).find(|&&i| i >= vocab) {
        return Err(Error::Invalid(format!("token index {bad} outside vocabulary of {vocab}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RnnState {
    enc: Arc<Array2<f64>>,
    h: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Seq2Seq {
    pub config: RnnConfig,
    vocab: usize,
    params: ParamSet,
    core: AttnCore,
}

impl Seq2Seq {
    pub fn new(config: RnnConfig, vocab: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut params = ParamSet::new();
        let core = AttnCore::new(&mut params, &config, vocab, &mut rng);
        Self {
            config,
            vocab,
            params,
            core,
        }
    }

    /// Attention weights over the source for each teacher-forced decoder step.
    pub fn attention(&self, ex: &Example) -> Result<Array2<f64>> {
        check_source(ex, self.vocab)?;
        let mut tape = Tape::new(&self.params);
        let mut drop = Dropout::eval();
        let (enc, last) = self.core.encode(&mut tape, &ex.src, &mut drop);
        let xs = self.core.embed(&mut tape, &ex.decoder_input(), &mut drop);
        let states = self.core.decoder.run(&mut tape, &xs, Some(last));
        let d = tape.concat_rows(&states);
        let wa = tape.param(self.core.attn);
        let q = tape.matmul(d, wa);
        let et = tape.transpose(enc);
        let scores = tape.matmul(q, et);
        let w = tape.row_softmax(scores);
        Ok(tape.value(w).clone())
    }
}

impl SeqModel for Seq2Seq {
    type State = RnnState;

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
        check_source(ex, self.vocab)?;
        let (enc, last) = self.core.encode(tape, &ex.src, &mut ctx.drop);
        Ok(self.core.nll(tape, ex, enc, last, &mut ctx.drop))
    }

    fn init_state(&self, ex: &Example, _rng: &mut ChaCha8Rng) -> Result<RnnState> {
        check_source(ex, self.vocab)?;
        let mut tape = Tape::new(&self.params);
        let (enc, last) = self.core.encode(&mut tape, &ex.src, &mut Dropout::eval());
        Ok(RnnState {
            enc: Arc::new(tape.value(enc).clone()),
            h: tape.value(last).clone(),
        })
    }

    fn advance(&self, state: &RnnState, token: usize) -> (RnnState, Array1<f64>) {
        self.core.step(&self.params, state, token)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeConfig {
    pub rnn: RnnConfig,
    pub latent_dim: usize,
    /// KL weight rises linearly to 1 over this many epochs.
    pub kl_anneal_epochs: usize,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        Self {
            rnn: RnnConfig::default(),
            latent_dim: 64,
            kl_anneal_epochs: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    /// Reparameterized draw `mu + sigma * eps`.
    Sample,
    /// Zero variance: `z = mu`.
    Mean,
    /// `z = 0`, no latent influence.
    Zero,
}

#[derive(Debug, Clone)]
pub struct Cvae {
    pub config: CvaeConfig,
    vocab: usize,
    params: ParamSet,
    core: AttnCore,
    posterior: GruCell,
    mu: Linear,
    logvar: Linear,
    latent: Linear,
}

pub struct CvaeLoss {
    pub total: Var,
    pub nll: Var,
    pub kl: Var,
}

impl Cvae {
    /// The attention core is created first from the same seed, so a CVAE and a
    /// [`Seq2Seq`] built with equal seeds share those initial weights.
    pub fn new(config: CvaeConfig, vocab: usize, seed: u64) -> Result<Self> {
        if config.latent_dim == 0 {
            return Err(Error::Config("cvae latent_dim must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        let mut params = ParamSet::new();
        let core = AttnCore::new(&mut params, &config.rnn, vocab, &mut rng);
        let (w, h, z) = (config.rnn.word_dim, config.rnn.hidden_dim, config.latent_dim);
        let posterior = GruCell::new(&mut params, "post", w, h, &mut rng);
        let mu = Linear::new(&mut params, "mu", 2 * h, z, true, &mut rng);
        let logvar = Linear::new(&mut params, "logvar", 2 * h, z, true, &mut rng);
        let latent = Linear::new(&mut params, "latent", z, h, false, &mut rng);
        Ok(Self {
            config,
            vocab,
            params,
            core,
            posterior,
            mu,
            logvar,
            latent,
        })
    }

    pub fn kl_weight(&self, epoch: usize) -> f64 {
        let n = self.config.kl_anneal_epochs;
        if n == 0 {
            1.0
        } else {
            ((epoch + 1) as f64 / n as f64).min(1.0)
        }
    }

    pub fn posterior_layers(&self) -> (Linear, Linear, Linear) {
        (self.mu, self.logvar, self.latent)
    }

    pub fn loss_with(
        &self,
        tape: &mut Tape<'_>,
        ex: &Example,
        mode: LatentMode,
        kl_weight: f64,
        drop: &mut Dropout,
        rng: &mut ChaCha8Rng,
    ) -> Result<CvaeLoss> {
        check_source(ex, self.vocab)?;
        let (enc, last) = self.core.encode(tape, &ex.src, drop);
        let ys = self.core.embed(tape, &ex.decoder_output(), drop);
        let post = self.posterior.run(tape, &ys, None);
        let hy = *post.last().expect("target has EOS");
        let joint = tape.concat_cols(&[last, hy]);
        let mu = self.mu.forward(tape, joint);
        let logvar = self.logvar.forward(tape, joint);

        // KL(N(mu, sigma^2) || N(0, I))
        let var = tape.exp(logvar);
        let mu2 = tape.mul(mu, mu);
        let a = tape.add(mu2, var);
        let a = tape.sub(a, logvar);
        let a = tape.add_scalar(a, -1.0);
        let s = tape.sum_all(a);
        let kl = tape.scale(s, 0.5);

        let h0 = match mode {
            LatentMode::Zero => last,
            LatentMode::Mean => {
                let l = self.latent.forward(tape, mu);
                tape.add(last, l)
            }
            LatentMode::Sample => {
                let eps = Array2::from_shape_fn((1, self.config.latent_dim), |_| rng.sample::<f64, _>(StandardNormal));
                let half = tape.scale(logvar, 0.5);
                let sigma = tape.exp(half);
                let noise = tape.mul_const(sigma, eps);
                let z = tape.add(mu, noise);
                let l = self.latent.forward(tape, z);
                tape.add(last, l)
            }
        };
        let nll = self.core.nll(tape, ex, enc, h0, drop);
        let weighted = tape.scale(kl, kl_weight);
        let total = tape.add(nll, weighted);
        Ok(CvaeLoss { total, nll, kl })
    }
}

impl SeqModel for Cvae {
    type State = RnnState;

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
        let (mode, w) = if ctx.train {
            (LatentMode::Sample, self.kl_weight(ctx.epoch))
        } else {
            (LatentMode::Mean, 1.0)
        };
        Ok(self.loss_with(tape, ex, mode, w, &mut ctx.drop, &mut ctx.rng)?.total)
    }

    /// Draws `z` from the prior with the supplied generator.
    fn init_state(&self, ex: &Example, rng: &mut ChaCha8Rng) -> Result<RnnState> {
        check_source(ex, self.vocab)?;
        let mut tape = Tape::new(&self.params);
        let (enc, last) = self.core.encode(&mut tape, &ex.src, &mut Dropout::eval());
        let z = Array2::from_shape_fn((1, self.config.latent_dim), |_| rng.sample::<f64, _>(StandardNormal));
        let z = tape.constant(z);
        let l = self.latent.forward(&mut tape, z);
        let h0 = tape.add(last, l);
        Ok(RnnState {
            enc: Arc::new(tape.value(enc).clone()),
            h: tape.value(h0).clone(),
        })
    }

    fn advance(&self, state: &RnnState, token: usize) -> (RnnState, Array1<f64>) {
        self.core.step(&self.params, state, token)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{greedy, mean_loss};

    fn cfg() -> RnnConfig {
        RnnConfig {
            word_dim: 6,
            hidden_dim: 8,
        }
    }

    fn ex() -> Example {
        Example::new(0, vec![4, 5, 6], vec![7, 8])
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let m = Seq2Seq::new(cfg(), 10, 2);
        let w = m.attention(&ex()).unwrap();
        assert_eq!(w.dim(), (3, 3));
        for row in w.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_latent_matches_seq2seq() {
        let s = Seq2Seq::new(cfg(), 10, 5);
        let mut c = Cvae::new(
            CvaeConfig {
                rnn: cfg(),
                latent_dim: 4,
                kl_anneal_epochs: 10,
            },
            10,
            5,
        )
        .unwrap();
        let base = mean_loss(&s, &[ex()], 0).unwrap() * ex().num_targets() as f64;
        let mut rng = seeded_rng(0);
        let eval = |c: &Cvae, mode, rng: &mut ChaCha8Rng| {
            let mut tape = Tape::new(c.params());
            let l = c.loss_with(&mut tape, &ex(), mode, 0.0, &mut Dropout::eval(), rng).unwrap();
            tape.scalar(l.total)
        };
        assert!((eval(&c, LatentMode::Zero, &mut rng) - base).abs() < 1e-12);
        let (_, _, latent) = c.posterior_layers();
        c.params_mut().get_mut(latent.weight).fill(0.0);
        assert!((eval(&c, LatentMode::Mean, &mut rng) - base).abs() < 1e-12);
    }

    #[test]
    fn kl_zero_at_prior() {
        let mut c = Cvae::new(
            CvaeConfig {
                rnn: cfg(),
                latent_dim: 4,
                kl_anneal_epochs: 10,
            },
            10,
            1,
        )
        .unwrap();
        let mut rng = seeded_rng(0);
        let kl = |c: &Cvae, rng: &mut ChaCha8Rng| {
            let mut tape = Tape::new(c.params());
            let l = c.loss_with(&mut tape, &ex(), LatentMode::Sample, 1.0, &mut Dropout::eval(), rng).unwrap();
            tape.scalar(l.kl)
        };
        assert!(kl(&c, &mut rng) >= 0.0);
        let (mu, logvar, _) = c.posterior_layers();
        for l in [mu, logvar] {
            c.params_mut().get_mut(l.weight).fill(0.0);
            c.params_mut().get_mut(l.bias.unwrap()).fill(0.0);
        }
        assert_eq!(kl(&c, &mut rng), 0.0);
    }

    #[test]
    fn annealing_schedule() {
        let c = Cvae::new(CvaeConfig::default(), 5, 0);
        let c = c.unwrap();
        assert!((c.kl_weight(0) - 0.1).abs() < 1e-12);
        assert_eq!(c.kl_weight(9), 1.0);
        assert_eq!(c.kl_weight(30), 1.0);
    }

    #[test]
    fn seeded_cvae_generation_is_repeatable() {
        let c = Cvae::new(
            CvaeConfig {
                rnn: cfg(),
                latent_dim: 4,
                kl_anneal_epochs: 10,
            },
            10,
            1,
        )
        .unwrap();
        assert_eq!(greedy(&c, &ex(), 10, 42).unwrap(), greedy(&c, &ex(), 10, 42).unwrap());
    }
}
