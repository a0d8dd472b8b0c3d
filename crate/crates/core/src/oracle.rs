//! Slow reference solvers used to check the fast paths.

use crate::data::Point;
use crate::diff::{DenseArray, Graph};
use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    /// `rows x (cols + 1)`; the last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pr = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, &q) in row.iter_mut().zip(&pr) {
                        *v -= f * q;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.t[r][j];
                }
            }
        }
        d
    }

    /// Minimize `cost . x` over columns `allowed`, Bland's rule for entering and leaving.
    fn run(&mut self, cost: &[f64], allowed: &[bool]) -> Phase {
        loop {
            let d = self.reduced_costs(cost);
            let Some(enter) = (0..self.cols).find(|&j| allowed[j] && d[j] < -PIVOT_EPS) else {
                return Phase::Optimal;
            };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let a = self.t[r][enter];
                if a > PIVOT_EPS {
                    let ratio = self.t[r][rhs] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - PIVOT_EPS || (ratio <= lratio + PIVOT_EPS && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Phase::Unbounded;
            };
            self.pivot(r, enter);
        }
    }
}

/// `min c.x  s.t.  A x = b, x >= 0` by the two-phase tableau simplex. Returns the
/// optimal value, or `None` when infeasible or unbounded.
pub fn simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let (m, n) = (a.len(), c.len());
    let cols = n + m;
    let mut t = Vec::with_capacity(m);
    for (i, row) in a.iter().enumerate() {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut r: Vec<f64> = row.iter().map(|v| sign * v).collect();
        r.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
        r.push(sign * b[i]);
        t.push(r);
    }
    let mut tab = Tableau { t, basis: (n..n + m).collect(), cols };
    let phase1: Vec<f64> = (0..cols).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    tab.run(&phase1, &vec![true; cols]);
    let infeas: f64 = tab.basis.iter().enumerate().filter(|(_, &bv)| bv >= n).map(|(r, _)| tab.t[r][cols]).sum();
    if infeas > 1e-9 {
        return None;
    }
    // Drive zero-level artificials out of the basis; rows where that fails are redundant.
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| tab.t[r][j].abs() > 1e-9) {
                tab.pivot(r, j);
            } else {
                tab.t.remove(r);
                tab.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, m));
    let allowed: Vec<bool> = (0..cols).map(|j| j < n).collect();
    match tab.run(&cost, &allowed) {
        Phase::Unbounded => None,
        Phase::Optimal => Some(tab.basis.iter().enumerate().map(|(r, &bv)| cost[bv] * tab.t[r][cols]).sum()),
    }
}

/// Exact transport cost between probability vectors `a` (n) and `b` (m) under the
/// row-major `n x m` cost.
pub fn exact_ot(a: &[f64], b: &[f64], cost: &[f64]) -> Result<f64> {
    let (n, m) = (a.len(), b.len());
    if cost.len() != n * m {
        return Err(Error::shape(format!("cost has {} entries for a {n}x{m} problem", cost.len())));
    }
    let mut rows = Vec::with_capacity(n + m);
    for i in 0..n {
        rows.push((0..n * m).map(|k| if k / m == i { 1.0 } else { 0.0 }).collect());
    }
    for j in 0..m {
        rows.push((0..n * m).map(|k| if k % m == j { 1.0 } else { 0.0 }).collect());
    }
    let rhs: Vec<f64> = a.iter().chain(b).copied().collect();
    simplex(&rows, &rhs, cost).ok_or_else(|| Error::NonFiniteValue("transport LP infeasible".into()))
}

/// Exhaustive search over all one-to-one matchings restricted to pairs within `sigma`:
/// returns the largest cardinality and the smallest total distance achieving it.
pub fn brute_force_matching(preds: &[Point], gts: &[Point], sigma: f64) -> (usize, f64) {
    fn go(i: usize, preds: &[Point], gts: &[Point], sigma: f64, used: &mut Vec<bool>, k: usize, d: f64, best: &mut (usize, f64)) {
        if i == preds.len() {
            if k > best.0 || (k == best.0 && d < best.1) {
                *best = (k, d);
            }
            return;
        }
        go(i + 1, preds, gts, sigma, used, k, d, best);
        for j in 0..gts.len() {
            let dist = preds[i].dist(gts[j]);
            if !used[j] && dist <= sigma {
                used[j] = true;
                go(i + 1, preds, gts, sigma, used, k + 1, d + dist, best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, f64::INFINITY);
    go(0, preds, gts, sigma, &mut vec![false; gts.len()], 0, 0.0, &mut best);
    if best.0 == 0 {
        best.1 = 0.0;
    }
    best
}

/// Entropic OT objective and its gradient w.r.t. a strictly positive unnormalized
/// prediction, obtained by differentiating `iters` plain-domain Sinkhorn sweeps on the
/// tape. `b` and `cost` as in [`crate::losses::sinkhorn`].
pub fn unrolled_sinkhorn(d_pred: &[f64], b: &[f64], cost: &[f64], epsilon: f64, iters: usize) -> Result<(f64, Vec<f64>)> {
    let (n, m) = (d_pred.len(), b.len());
    if d_pred.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Config("unrolled oracle needs strictly positive predictions".into()));
    }
    let mut g = Graph::new();
    let d = g.param(DenseArray::new(vec![n, 1], d_pred.to_vec())?);
    let s = g.sum(d);
    let a = g.div(d, s)?;
    let kern = g.constant(DenseArray::new(vec![n, m], cost.iter().map(|c| (-c / epsilon).exp()).collect())?);
    let bv = g.constant(DenseArray::new(vec![m, 1], b.to_vec())?);
    let mut v = g.constant(DenseArray::full(&[m, 1], 1.0));
    let mut u = a;
    for _ in 0..iters {
        let kv = g.matmul(kern, v)?;
        u = g.div(a, kv)?;
        let ktu = g.matmul_t(kern, u, true, false)?;
        v = g.div(bv, ktu)?;
    }
    // P = diag(u) K diag(v); value = <P, C> + eps * (sum P ln(P / (a b^T)) - sum P + 1)
    let vt = g.reshape(v, &[1, m])?;
    let uk = g.mul(kern, u)?;
    let plan = g.mul(uk, vt)?;
    let c = g.constant(DenseArray::new(vec![n, m], cost.to_vec())?);
    let pc = g.mul(plan, c)?;
    let transport = g.sum(pc);
    let lu = g.ln(u);
    let lv = g.ln(vt);
    let la = g.ln(a);
    let lb = g.constant(DenseArray::new(vec![1, m], b.iter().map(|x| x.ln()).collect())?);
    let c_eps = g.scale(c, -1.0 / epsilon);
    let l1 = g.add(lu, lv)?;
    let lp = g.add(l1, c_eps)?;
    let lab = g.add(la, lb)?;
    let ratio = g.sub(lp, lab)?;
    let plr = g.mul(plan, ratio)?;
    let kl_a = g.sum(plr);
    let mass = g.sum(plan);
    let kl_b = g.sub(kl_a, mass)?;
    let kl = g.add_scalar(kl_b, 1.0);
    let reg = g.scale(kl, epsilon);
    let value = g.add(transport, reg)?;
    let grads = g.backward(value)?;
    let grad = grads.get(d).ok_or_else(|| Error::NonFiniteValue("missing oracle gradient".into()))?;
    Ok((g.value(value).item(), grad.data().to_vec()))
}
