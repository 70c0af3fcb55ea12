//! Central finite-difference comparison against tape gradients.

use crate::params::{Grads, ParamSet};

const ABS_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub name: String,
    pub checked: usize,
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-5)` over the checked entries.
    pub rel_error: f64,
}

/// Compares `analytic` against central differences of `loss` for every
/// parameter block. At most `max_per_block` entries are probed per block,
/// spread evenly across the block.
pub fn check_gradients<F>(
    params: &mut ParamSet,
    analytic: &Grads,
    max_per_block: usize,
    step: f64,
    mut loss: F,
) -> Vec<BlockCheck>
where
    F: FnMut(&ParamSet) -> f64,
{
    let ids: Vec<_> = params.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let n = params.get(id).len();
        let stride = (n / max_per_block.max(1)).max(1);
        let probes: Vec<usize> = (0..n).step_by(stride).take(max_per_block).collect();
        let mut diff_sq = 0.0;
        let mut a_sq = 0.0;
        let mut n_sq = 0.0;
        for &flat in &probes {
            let orig = read(params, id, flat);
            write(params, id, flat, orig + step);
            let plus = loss(params);
            write(params, id, flat, orig - step);
            let minus = loss(params);
            write(params, id, flat, orig);
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic
                .get(id)
                .map(|g| g[[flat / g.ncols(), flat % g.ncols()]])
                .unwrap_or(0.0);
            diff_sq += (a - numeric).powi(2);
            a_sq += a * a;
            n_sq += numeric * numeric;
        }
        // floor keeps blocks whose true gradient is zero from reporting FD noise as error
        let denom = a_sq.sqrt().max(n_sq.sqrt()).max(ABS_FLOOR);
        let rel_error = diff_sq.sqrt() / denom;
        out.push(BlockCheck {
            name: params.name(id).to_string(),
            checked: probes.len(),
            rel_error,
        });
    }
    out
}

fn read(params: &ParamSet, id: crate::ParamId, flat: usize) -> f64 {
    let m = params.get(id);
    let cols = m.ncols();
    m[[flat / cols, flat % cols]]
}

fn write(params: &mut ParamSet, id: crate::ParamId, flat: usize, value: f64) {
    let m = params.get_mut(id);
    let cols = m.ncols();
    m[[flat / cols, flat % cols]] = value;
}
