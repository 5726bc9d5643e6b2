//! Central finite-difference gradient checks (double precision).

use alloc::string::String;
use alloc::vec::Vec;

use super::{Graph, ParamStore, Tensor, Var};
use crate::error::Result;
use crate::rng;

/// Absolute floor in the relative-error denominator.
const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Compare analytic gradients of `loss(store)` with central differences.
///
/// Tensors with more than `max_coords` entries are checked on a seeded
/// random subsample of `max_coords` coordinates.
pub fn grad_check<F>(store: &ParamStore<f64>, eps: f64, max_coords: usize, seed: u64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore<f64>, &mut Graph<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let l = loss(store, &mut g)?;
    let grads = g.backward(l)?;
    let analytic = g.param_grads(&grads, store);
    compare_gradients(store, &analytic, eps, max_coords, seed, loss)
}

/// Like [`grad_check`] but against caller-supplied analytic gradients.
pub fn compare_gradients<F>(
    store: &ParamStore<f64>,
    analytic: &[Option<Tensor<f64>>],
    eps: f64,
    max_coords: usize,
    seed: u64,
    loss: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore<f64>, &mut Graph<f64>) -> Result<Var>,
{
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss(s, &mut g)?;
        Ok(g.value(l).data()[0])
    };
    let mut r = rng::rng(seed);
    let mut work = store.clone();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: (String::new(), 0), checked: 0 };
    for i in 0..store.len() {
        let n = store.tensor(i).len();
        let mut coords: Vec<usize> = (0..n).collect();
        if n > max_coords {
            rng::shuffle(&mut r, &mut coords);
            coords.truncate(max_coords);
            coords.sort_unstable();
        }
        for &j in &coords {
            let orig = store.tensor(i).data()[j];
            work.tensor_mut(i).data_mut()[j] = orig + eps;
            let up = eval(&work)?;
            work.tensor_mut(i).data_mut()[j] = orig - eps;
            let down = eval(&work)?;
            work.tensor_mut(i).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[i].as_ref().map_or(0.0, |t| t.data()[j]);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (store.name(i).into(), j);
            }
        }
    }
    Ok(report)
}
