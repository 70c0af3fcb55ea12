use ndarray::Array2;

use crate::params::{Grads, ParamSet};

/// Adaptive-moment gradient descent with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Option<Array2<f64>>>,
    v: Vec<Option<Array2<f64>>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) {
        if self.m.len() != params.len() {
            self.m = vec![None; params.len()];
            self.v = vec![None; params.len()];
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in params.ids() {
            let Some(g) = grads.get(id) else { continue };
            let m = self.m[id.0].get_or_insert_with(|| Array2::zeros(g.dim()));
            let v = self.v[id.0].get_or_insert_with(|| Array2::zeros(g.dim()));
            let (b1, b2) = (self.beta1, self.beta2);
            m.zip_mut_with(g, |mi, &gi| *mi = b1 * *mi + (1.0 - b1) * gi);
            v.zip_mut_with(g, |vi, &gi| *vi = b2 * *vi + (1.0 - b2) * gi * gi);
            let (lr, eps) = (self.lr, self.eps);
            let p = params.get_mut(id);
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|pi, &mi, &vi| {
                *pi -= lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            });
        }
    }
}

/// Plain gradient descent, used where a fixed step makes loss monotonicity
/// easy to reason about.
#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&self, params: &mut ParamSet, grads: &Grads) {
        for id in params.ids() {
            if let Some(g) = grads.get(id) {
                let lr = self.lr;
                params.get_mut(id).zip_mut_with(g, |p, &gi| *p -= lr * gi);
            }
        }
    }
}
