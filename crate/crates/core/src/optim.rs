//! Adam.

use crate::diff::{DenseArray, Gradients};
use crate::param::{Bound, ParamStore};

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<DenseArray>,
    v: Vec<DenseArray>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<DenseArray> = store.ids().map(|id| DenseArray::zeros(store.get(id).shape())).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update from the gradients of the bound parameters. Parameters without a
    /// gradient (unused in this step) keep their moments and values.
    pub fn step(&mut self, store: &mut ParamStore, bound: &Bound, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (id, var)) in bound.vars().enumerate() {
            let Some(gr) = grads.get(var) else { continue };
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            let w = store.get_mut(id).data_mut();
            for i in 0..w.len() {
                let gi = gr.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                w[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Graph;

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", DenseArray::from_vec(vec![1.0, -2.0, 0.5]));
        let mut opt = Adam::new(&store, 0.1);
        let mut g = Graph::new();
        let b = store.bind(&mut g, true);
        let sq = g.square(b[id]);
        let l = g.sum(sq);
        let grads = g.backward(l).unwrap();
        opt.step(&mut store, &b, &grads);
        for (w, w0) in store.get(id).data().iter().zip([1.0, -2.0, 0.5]) {
            assert!((w - (w0 - 0.1 * f64::signum(w0))).abs() < 1e-6);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("w", DenseArray::from_vec(vec![3.0, -4.0]));
        let mut opt = Adam::new(&store, 0.05);
        for _ in 0..2000 {
            let mut g = Graph::new();
            let b = store.bind(&mut g, true);
            let d = g.add_scalar(b[id], -1.0);
            let sq = g.square(d);
            let l = g.sum(sq);
            let grads = g.backward(l).unwrap();
            opt.step(&mut store, &b, &grads);
        }
        assert!(store.get(id).data().iter().all(|w| (w - 1.0).abs() < 1e-3));
        assert_eq!(opt.steps(), 2000);
    }
}
