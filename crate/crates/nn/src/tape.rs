//! Define-by-run reverse-mode differentiation over dense `f64` matrices.
//!
//! Every value is a 2-D matrix; vectors are `1 x n` rows. A [`Tape`] borrows a
//! [`ParamSet`] immutably, records each operation as it executes, and
//! [`Tape::backward`] walks the record in reverse to produce [`Grads`].

use ndarray::{s, Array2, Axis};

use crate::params::{Grads, ParamId, ParamSet};

/// Index of a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Array2<f64>),
    AddConst(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    LogSigmoid(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentMax(Var, Vec<Vec<usize>>),
    SumAll(Var),
    SumRows(Var),
    RowSoftmax(Var),
    RowDot(Var, Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Array2<f64>,
        inv_std: Vec<f64>,
    },
    NllLogSoftmax {
        logits: Var,
        targets: Vec<(usize, usize, f64)>,
        probs: Array2<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    /// Parameter leaf. Repeated calls with the same id share one node so
    /// gradients accumulate in a single place.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn row(&mut self, values: &[f64]) -> Var {
        let a = Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape");
        self.constant(a)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// Elementwise sum. `b` may also be a `1 x n` row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            let v = self.value(a) + self.value(b);
            self.push(v, Op::Add(a, b))
        } else {
            assert!(
                sb.0 == 1 && sb.1 == sa.1,
                "add: incompatible shapes {sa:?} and {sb:?}"
            );
            let v = self.value(a) + self.value(b);
            self.push(v, Op::AddRow(a, b))
        }
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul: shape mismatch");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a))
    }

    /// `1 - a`, the gate complement used by recurrent cells.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    /// Elementwise product with a constant matrix (dropout masks and similar).
    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        assert_eq!(self.shape(a), c.dim(), "mul_const: shape mismatch");
        let v = self.value(a) * &c;
        self.push(v, Op::MulConst(a, c))
    }

    /// Adds a constant matrix (attention masks).
    pub fn add_const(&mut self, a: Var, c: &Array2<f64>) -> Var {
        assert_eq!(self.shape(a), c.dim(), "add_const: shape mismatch");
        let v = self.value(a) + c;
        self.push(v, Op::AddConst(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// Numerically stable `log(sigmoid(a))`.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(log_sigmoid);
        self.push(v, Op::LogSigmoid(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat_rows: column mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    /// Selects rows by index; repeated indices are allowed (embedding lookup).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let src = self.value(a);
        let cols = src.ncols();
        let mut v = Array2::zeros((idx.len(), cols));
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).assign(&src.row(i));
        }
        self.push(v, Op::GatherRows(a, idx.to_vec()))
    }

    /// Column-wise max over each group of rows. Output row `g` is the max over
    /// rows `groups[g]`. Gradient flows to the first arg-max.
    pub fn segment_max(&mut self, a: Var, groups: &[Vec<usize>]) -> Var {
        let src = self.value(a);
        let cols = src.ncols();
        let mut v = Array2::zeros((groups.len(), cols));
        for (g, rows) in groups.iter().enumerate() {
            assert!(!rows.is_empty(), "segment_max: empty group");
            for c in 0..cols {
                v[[g, c]] = rows
                    .iter()
                    .map(|&r| src[[r, c]])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        self.push(v, Op::SegmentMax(a, groups.to_vec()))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), total), Op::SumAll(a))
    }

    /// Column sums as a `1 x n` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(v, Op::SumRows(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.shape(a).0 as f64;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / n)
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row.mapv_inplace(|x| x / z);
        }
        self.push(v, Op::RowSoftmax(a))
    }

    /// Per-row inner products of two equally shaped matrices, as a column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "row_dot: shape mismatch");
        let v = (self.value(a) * self.value(b))
            .sum_axis(Axis(1))
            .insert_axis(Axis(1));
        self.push(v, Op::RowDot(a, b))
    }

    /// Row-wise layer normalization with `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let src = self.value(x);
        let n = src.ncols() as f64;
        let mut normalized = src.clone();
        let mut inv_std = Vec::with_capacity(src.nrows());
        for mut row in normalized.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let v = &normalized * self.value(gain) + self.value(bias);
        self.push(
            v,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
        )
    }

    /// `-sum w * log softmax(logits)[row, col]` over `(row, col, w)` targets.
    pub fn nll_log_softmax(&mut self, logits: Var, targets: &[(usize, usize, f64)]) -> Var {
        let src = self.value(logits);
        let mut probs = src.clone();
        let mut log_z = Vec::with_capacity(src.nrows());
        for mut row in probs.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
            let lz = m + z.ln();
            row.mapv_inplace(|x| (x - lz).exp());
            log_z.push(lz);
        }
        let loss: f64 = targets
            .iter()
            .map(|&(r, c, w)| -w * (src[[r, c]] - log_z[r]))
            .sum();
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::NllLogSoftmax {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Token-level cross-entropy: one target class per row, unit weight.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let t: Vec<_> = targets.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect();
        self.nll_log_softmax(logits, &t)
    }

    /// Reverse pass from a scalar output. Returns gradients for every parameter
    /// that participated.
    pub fn backward(&self, output: Var) -> Grads {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::AddScalar(a) | Op::AddConst(a) => acc(&mut grads, *a, g),
                Op::MulConst(a, c) => acc(&mut grads, *a, g * c),
                Op::Sigmoid(a) => {
                    let d = node.value.mapv(|y| y * (1.0 - y));
                    acc(&mut grads, *a, g * d);
                }
                Op::Tanh(a) => {
                    let d = node.value.mapv(|y| 1.0 - y * y);
                    acc(&mut grads, *a, g * d);
                }
                Op::Relu(a) => {
                    let d = self.value(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    acc(&mut grads, *a, g * d);
                }
                Op::Exp(a) => acc(&mut grads, *a, g * &node.value),
                Op::LogSigmoid(a) => {
                    let d = self.value(*a).mapv(|x| sigmoid(-x));
                    acc(&mut grads, *a, g * d);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        acc(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let h = self.shape(*p).0;
                        acc(&mut grads, *p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut full = Array2::zeros(self.shape(*a));
                    let w = g.ncols();
                    full.slice_mut(s![.., *start..*start + w]).assign(&g);
                    acc(&mut grads, *a, full);
                }
                Op::SliceRows(a, start) => {
                    let mut full = Array2::zeros(self.shape(*a));
                    let h = g.nrows();
                    full.slice_mut(s![*start..*start + h, ..]).assign(&g);
                    acc(&mut grads, *a, full);
                }
                Op::GatherRows(a, idx_list) => {
                    let mut full = Array2::zeros(self.shape(*a));
                    for (r, &i) in idx_list.iter().enumerate() {
                        let mut dst = full.row_mut(i);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *a, full);
                }
                Op::SegmentMax(a, groups) => {
                    let src = self.value(*a);
                    let mut full = Array2::zeros(src.dim());
                    for (gi, rows) in groups.iter().enumerate() {
                        for c in 0..src.ncols() {
                            let target = node.value[[gi, c]];
                            let arg = rows
                                .iter()
                                .copied()
                                .find(|&r| src[[r, c]] == target)
                                .expect("segment_max arg");
                            full[[arg, c]] += g[[gi, c]];
                        }
                    }
                    acc(&mut grads, *a, full);
                }
                Op::SumAll(a) => {
                    let full = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                    acc(&mut grads, *a, full);
                }
                Op::SumRows(a) => {
                    let (rows, _) = self.shape(*a);
                    let full = g
                        .broadcast((rows, g.ncols()))
                        .expect("sum_rows broadcast")
                        .to_owned();
                    acc(&mut grads, *a, full);
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let mut ga = &g * y;
                    for (mut row, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot = row.sum();
                        row.zip_mut_with(&yrow, |gr, &yv| *gr -= dot * yv);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowDot(a, b) => {
                    let gcol = g.column(0).to_owned().insert_axis(Axis(1));
                    let ga = self.value(*b) * &gcol;
                    let gb = self.value(*a) * &gcol;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normalized,
                    inv_std,
                } => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gg = (&g * normalized).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gxhat = &g * self.value(*gain);
                    let n = normalized.ncols() as f64;
                    let mut gx = Array2::zeros(normalized.dim());
                    for r in 0..normalized.nrows() {
                        let gh = gxhat.row(r);
                        let xh = normalized.row(r);
                        let mean_g = gh.sum() / n;
                        let mean_gx = gh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..normalized.ncols() {
                            gx[[r, c]] = inv_std[r] * (gh[c] - mean_g - xh[c] * mean_gx);
                        }
                    }
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *gain, gg);
                    acc(&mut grads, *x, gx);
                }
                Op::NllLogSoftmax {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g[[0, 0]];
                    let mut row_weight = vec![0.0; probs.nrows()];
                    for &(r, _, w) in targets {
                        row_weight[r] += w;
                    }
                    let mut gl = probs.clone();
                    for (r, mut row) in gl.rows_mut().into_iter().enumerate() {
                        row.mapv_inplace(|p| p * row_weight[r]);
                    }
                    for &(r, c, w) in targets {
                        gl[[r, c]] -= w;
                    }
                    acc(&mut grads, *logits, gl * scale);
                }
            }
        }

        let mut out = vec![None; self.params.len()];
        for (pid, var) in self.param_vars.iter().enumerate() {
            if let Some(v) = var {
                out[pid] = grads[v.0].take();
            }
        }
        Grads { grads: out }
    }
}

fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}
