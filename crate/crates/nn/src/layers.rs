use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::{ParamId, ParamSet};
use crate::tape::{Tape, Var};

/// Inverted dropout. Inactive when `p == 0` or no RNG is attached.
pub struct Dropout {
    pub p: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn train(p: f64, rng: ChaCha8Rng) -> Self {
        Self { p, rng: Some(rng) }
    }

    pub fn eval() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn apply(&mut self, tape: &mut Tape<'_>, x: Var) -> Var {
        match &mut self.rng {
            Some(rng) if self.p > 0.0 => {
                let keep = 1.0 - self.p;
                let (r, c) = tape.shape(x);
                let mask = Array2::from_shape_fn((r, c), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                tape.mul_const(x, mask)
            }
            _ => x,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = params.xavier(format!("{name}.weight"), in_dim, out_dim, rng);
        let bias = bias.then(|| params.zeros(format!("{name}.bias"), 1, out_dim));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let w = tape.param(self.weight);
        let y = tape.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = tape.param(b);
                tape.add(y, b)
            }
            None => y,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(params: &mut ParamSet, name: &str, dim: usize) -> Self {
        let gain = params.add(format!("{name}.gain"), Array2::ones((1, dim)));
        let bias = params.zeros(format!("{name}.bias"), 1, dim);
        Self { gain, bias }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let g = tape.param(self.gain);
        let b = tape.param(self.bias);
        tape.layer_norm(x, g, b, 1e-5)
    }
}

/// Gated recurrent unit with gate order (reset, update, candidate):
///
/// ```text
/// r  = sigmoid(x Wir + bir + h Whr + bhr)
/// z  = sigmoid(x Wiz + biz + h Whz + bhz)
/// n  = tanh(x Win + bin + r * (h Whn + bhn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: params.uniform(format!("{name}.w_ih"), input, 3 * hidden, bound, rng),
            w_hh: params.uniform(format!("{name}.w_hh"), hidden, 3 * hidden, bound, rng),
            b_ih: params.zeros(format!("{name}.b_ih"), 1, 3 * hidden),
            b_hh: params.zeros(format!("{name}.b_hh"), 1, 3 * hidden),
            input,
            hidden,
        }
    }

    /// One step for a batch: `x` is `B x input`, `h` is `B x hidden`.
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Var {
        let hd = self.hidden;
        let (w_ih, w_hh) = (tape.param(self.w_ih), tape.param(self.w_hh));
        let (b_ih, b_hh) = (tape.param(self.b_ih), tape.param(self.b_hh));
        let gi = tape.matmul(x, w_ih);
        let gi = tape.add(gi, b_ih);
        let gh = tape.matmul(h, w_hh);
        let gh = tape.add(gh, b_hh);

        let i_rz = tape.slice_cols(gi, 0, 2 * hd);
        let h_rz = tape.slice_cols(gh, 0, 2 * hd);
        let rz = tape.add(i_rz, h_rz);
        let rz = tape.sigmoid(rz);
        let r = tape.slice_cols(rz, 0, hd);
        let z = tape.slice_cols(rz, hd, hd);

        let i_n = tape.slice_cols(gi, 2 * hd, hd);
        let h_n = tape.slice_cols(gh, 2 * hd, hd);
        let rh = tape.mul(r, h_n);
        let n = tape.add(i_n, rh);
        let n = tape.tanh(n);

        let one_minus_z = tape.one_minus(z);
        let a = tape.mul(one_minus_z, n);
        let b = tape.mul(z, h);
        tape.add(a, b)
    }

    /// Runs the cell over a sequence of `1 x input` (or batched) rows from a
    /// zero initial state and returns every hidden state.
    pub fn run(&self, tape: &mut Tape<'_>, xs: &[Var], h0: Option<Var>) -> Vec<Var> {
        let batch = xs.first().map(|x| tape.shape(*x).0).unwrap_or(1);
        let mut h = match h0 {
            Some(h) => h,
            None => tape.constant(Array2::zeros((batch, self.hidden))),
        };
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            h = self.step(tape, x, h);
            out.push(h);
        }
        out
    }
}

/// Forward and backward GRU pair. The encoding of a token sequence is the
/// column-wise max over positions of (forward state + backward state).
#[derive(Debug, Clone, Copy)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

impl BiGru {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            forward: GruCell::new(params, &format!("{name}.fwd"), input, hidden, rng),
            backward: GruCell::new(params, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    /// Encodes a batch of index sequences looked up in `table` (`|C| x input`).
    /// Returns `B x hidden`. Every sequence must be non-empty.
    pub fn encode_max_pool(&self, tape: &mut Tape<'_>, table: Var, seqs: &[Vec<usize>]) -> Var {
        let batch = seqs.len();
        assert!(batch > 0, "encode_max_pool: empty batch");
        assert!(seqs.iter().all(|s| !s.is_empty()), "encode_max_pool: empty sequence");
        let max_len = seqs.iter().map(Vec::len).max().unwrap_or(0);

        let mut fwd_inputs = Vec::with_capacity(max_len);
        let mut bwd_inputs = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let f_idx: Vec<usize> = seqs.iter().map(|s| *s.get(t).unwrap_or(&s[0])).collect();
            let b_idx: Vec<usize> = seqs
                .iter()
                .map(|s| if t < s.len() { s[s.len() - 1 - t] } else { s[0] })
                .collect();
            fwd_inputs.push(tape.gather_rows(table, &f_idx));
            bwd_inputs.push(tape.gather_rows(table, &b_idx));
        }
        let f_states = self.forward.run(tape, &fwd_inputs, None);
        let b_states = self.backward.run(tape, &bwd_inputs, None);
        let f_all = tape.concat_rows(&f_states);
        let b_all = tape.concat_rows(&b_states);

        let mut f_rows = Vec::new();
        let mut b_rows = Vec::new();
        let mut groups = Vec::with_capacity(batch);
        for (b, s) in seqs.iter().enumerate() {
            let n = s.len();
            let start = f_rows.len();
            for t in 0..n {
                f_rows.push(t * batch + b);
                b_rows.push((n - 1 - t) * batch + b);
            }
            groups.push((start..start + n).collect());
        }
        let f = tape.gather_rows(f_all, &f_rows);
        let bk = tape.gather_rows(b_all, &b_rows);
        let summed = tape.add(f, bk);
        tape.segment_max(summed, &groups)
    }
}

/// Sinusoidal position table, `len x dim`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, dim), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(dim % heads == 0, "model dim {dim} not divisible by {heads} heads");
        Self {
            q: Linear::new(params, &format!("{name}.q"), dim, dim, true, rng),
            k: Linear::new(params, &format!("{name}.k"), dim, dim, true, rng),
            v: Linear::new(params, &format!("{name}.v"), dim, dim, true, rng),
            out: Linear::new(params, &format!("{name}.out"), dim, dim, true, rng),
            heads,
            dim,
        }
    }

    /// `query` is `n x d`, `memory` is `m x d`; `mask` (if any) is `n x m` and
    /// added to the scores before the softmax.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        query: Var,
        memory: Var,
        mask: Option<&Array2<f64>>,
    ) -> Var {
        let q = self.q.forward(tape, query);
        let k = self.k.forward(tape, memory);
        let v = self.v.forward(tape, memory);
        let hd = self.dim / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * hd, hd);
            let kh = tape.slice_cols(k, h * hd, hd);
            let vh = tape.slice_cols(v, h * hd, hd);
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt);
            let mut scores = tape.scale(scores, scale);
            if let Some(m) = mask {
                scores = tape.add_const(scores, m);
            }
            let attn = tape.row_softmax(scores);
            outs.push(tape.matmul(attn, vh));
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)
        };
        self.out.forward(tape, cat)
    }
}

/// Upper-triangular `-inf`-style mask for causal self-attention.
pub fn causal_mask(len: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, len), |(i, j)| if j > i { -1e9 } else { 0.0 })
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(params: &mut ParamSet, name: &str, dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            up: Linear::new(params, &format!("{name}.up"), dim, hidden, true, rng),
            down: Linear::new(params, &format!("{name}.down"), hidden, dim, true, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, drop: &mut Dropout) -> Var {
        let h = self.up.forward(tape, x);
        let h = tape.relu(h);
        let h = drop.apply(tape, h);
        self.down.forward(tape, h)
    }
}

/// Pre-norm transformer encoder block.
#[derive(Debug, Clone, Copy)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub ff: FeedForward,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            attn: MultiHeadAttention::new(params, &format!("{name}.attn"), dim, heads, rng),
            ff: FeedForward::new(params, &format!("{name}.ff"), dim, ff_dim, rng),
            norm1: LayerNorm::new(params, &format!("{name}.norm1"), dim),
            norm2: LayerNorm::new(params, &format!("{name}.norm2"), dim),
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, drop: &mut Dropout) -> Var {
        let h = self.norm1.forward(tape, x);
        let a = self.attn.forward(tape, h, h, None);
        let a = drop.apply(tape, a);
        let x = tape.add(x, a);
        let h = self.norm2.forward(tape, x);
        let f = self.ff.forward(tape, h, drop);
        let f = drop.apply(tape, f);
        tape.add(x, f)
    }
}

/// Pre-norm transformer decoder block with causal self-attention and
/// cross-attention over the encoder memory.
#[derive(Debug, Clone, Copy)]
pub struct DecoderLayer {
    pub self_attn: MultiHeadAttention,
    pub cross_attn: MultiHeadAttention,
    pub ff: FeedForward,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
    pub norm3: LayerNorm,
}

impl DecoderLayer {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            self_attn: MultiHeadAttention::new(params, &format!("{name}.self_attn"), dim, heads, rng),
            cross_attn: MultiHeadAttention::new(params, &format!("{name}.cross_attn"), dim, heads, rng),
            ff: FeedForward::new(params, &format!("{name}.ff"), dim, ff_dim, rng),
            norm1: LayerNorm::new(params, &format!("{name}.norm1"), dim),
            norm2: LayerNorm::new(params, &format!("{name}.norm2"), dim),
            norm3: LayerNorm::new(params, &format!("{name}.norm3"), dim),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        memory: Var,
        mask: &Array2<f64>,
        drop: &mut Dropout,
    ) -> Var {
        let h = self.norm1.forward(tape, x);
        let a = self.self_attn.forward(tape, h, h, Some(mask));
        let a = drop.apply(tape, a);
        let x = tape.add(x, a);
        let h = self.norm2.forward(tape, x);
        let c = self.cross_attn.forward(tape, h, memory, None);
        let c = drop.apply(tape, c);
        let x = tape.add(x, c);
        let h = self.norm3.forward(tape, x);
        let f = self.ff.forward(tape, h, drop);
        let f = drop.apply(tape, f);
        tape.add(x, f)
    }
}
