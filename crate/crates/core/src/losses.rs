//! Counting loss stack: count term, entropic optimal transport, total variation and
//! the weighted training objective.

use serde::{Deserialize, Serialize};

use crate::clm::CELL;
use crate::data::Point;
use crate::diff::{DenseArray, Graph, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// OT weight.
    pub lambda1: f64,
    /// TV weight.
    pub lambda2: f64,
    /// Consistent-loss weight.
    pub alpha: f64,
    /// Contrastive-loss weight.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 0.1, lambda2: 0.01, alpha: 0.1, beta: 0.01 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} must be a finite number >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinkhornConfig {
    /// Absolute regularization; when absent, `epsilon_rel` times the largest cost.
    pub epsilon: Option<f64>,
    pub epsilon_rel: f64,
    pub max_iters: usize,
    /// Threshold on the L1 row-marginal violation.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon: None, epsilon_rel: 0.01, max_iters: 500, tol: 1e-8 }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        let eps_ok = match self.epsilon {
            Some(e) => e > 0.0 && e.is_finite(),
            None => self.epsilon_rel > 0.0 && self.epsilon_rel.is_finite(),
        };
        if !eps_ok {
            return Err(Error::Config("sinkhorn epsilon must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("sinkhorn max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("sinkhorn tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }

    fn epsilon_for(&self, max_cost: f64) -> f64 {
        self.epsilon.unwrap_or(self.epsilon_rel * max_cost.max(1.0))
    }
}

/// Annotations together with their 1/8-scale dot grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub points: Vec<Point>,
    /// `[h, w]`, one unit of mass per point in its cell.
    pub dot_grid: DenseArray,
}

impl GroundTruth {
    pub fn new(points: &[Point], image_h: usize, image_w: usize) -> Result<Self> {
        let (h, w) = (image_h.div_ceil(CELL), image_w.div_ceil(CELL));
        let mut grid = DenseArray::zeros(&[h, w]);
        for p in points {
            if !(p.x >= 0.0 && p.y >= 0.0 && p.x < image_w as f64 && p.y < image_h as f64) {
                return Err(Error::PointOutOfBounds { x: p.x, y: p.y, w: image_w, h: image_h });
            }
            let (r, c) = ((p.y / CELL as f64) as usize, (p.x / CELL as f64) as usize);
            grid.data_mut()[r * w + c] += 1.0;
        }
        Ok(Self { points: points.to_vec(), dot_grid: grid })
    }

    /// Directly from a grid of cell counts (points are left empty).
    pub fn from_grid(dot_grid: DenseArray) -> Self {
        Self { points: Vec::new(), dot_grid }
    }

    pub fn count(&self) -> f64 {
        self.dot_grid.sum()
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        let s = self.dot_grid.shape();
        (s[0], s[1])
    }
}

fn check_pred(g: &Graph, d_pred: Var, gt: &GroundTruth) -> Result<()> {
    let (h, w) = gt.grid_shape();
    if g.value(d_pred).len() != h * w {
        return Err(Error::shape(format!("density {:?} vs dot grid {h}x{w}", g.shape(d_pred))));
    }
    Ok(())
}

/// `| sum(D') - n |`.
pub fn count_loss(g: &mut Graph, d_pred: Var, gt: &GroundTruth) -> Result<Var> {
    check_pred(g, d_pred, gt)?;
    let s = g.sum(d_pred);
    let diff = g.add_scalar(s, -gt.count());
    Ok(g.abs(diff))
}

/// Outcome of a Sinkhorn solve between two probability vectors.
#[derive(Clone, Debug)]
pub struct SinkhornSolution {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub epsilon: f64,
    /// `<P, C>` for the entropic plan.
    pub transport_cost: f64,
    /// Entropic objective `<f, a> + <g, b> - eps * (sum(P) - 1)`.
    pub regularized_value: f64,
    pub iterations: usize,
    /// L1 row-marginal violation at exit.
    pub violation: f64,
    pub converged: bool,
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn for `min <P, C> + eps * KL(P | a b^T)` with `C` row-major `n x m`.
/// Entries of `a` may be zero; their potentials come from the c-transform of `g`, so the
/// returned `f` is the gradient of the objective w.r.t. `a` (up to a constant).
pub fn sinkhorn(a: &[f64], b: &[f64], cost: &[f64], epsilon: f64, max_iters: usize, tol: f64) -> Result<SinkhornSolution> {
    let (n, m) = (a.len(), b.len());
    if cost.len() != n * m {
        return Err(Error::shape(format!("cost has {} entries for a {n}x{m} problem", cost.len())));
    }
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput);
    }
    let la: Vec<f64> = a.iter().map(|&v| v.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|&v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut gp = vec![0.0; m];
    let mut violation = f64::INFINITY;
    let mut iterations = 0;
    let update_g = |f: &[f64], gp: &mut [f64]| {
        for j in 0..m {
            gp[j] = -epsilon * logsumexp((0..n).map(|i| la[i] + (f[i] - cost[i * m + j]) / epsilon));
        }
    };
    let mut f_new = vec![0.0; n];
    while iterations < max_iters {
        iterations += 1;
        update_g(&f, &mut gp);
        // Row marginals of the current plan follow from the next f-update for free.
        for i in 0..n {
            f_new[i] = -epsilon * logsumexp((0..m).map(|j| lb[j] + (gp[j] - cost[i * m + j]) / epsilon));
        }
        violation = (0..n).map(|i| (a[i] * ((f[i] - f_new[i]) / epsilon).exp() - a[i]).abs()).sum();
        std::mem::swap(&mut f, &mut f_new);
        if violation <= tol {
            break;
        }
    }
    // Final g so that column marginals are exact for the returned f.
    update_g(&f, &mut gp);
    let (mut mass, mut transport) = (0.0, 0.0);
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..m {
            if b[j] == 0.0 {
                continue;
            }
            let p = (la[i] + lb[j] + (f[i] + gp[j] - cost[i * m + j]) / epsilon).exp();
            mass += p;
            transport += p * cost[i * m + j];
        }
    }
    let dual = a.iter().zip(&f).map(|(x, y)| x * y).sum::<f64>() + b.iter().zip(&gp).map(|(x, y)| x * y).sum::<f64>();
    let regularized_value = dual - epsilon * (mass - 1.0);
    if !(regularized_value.is_finite() && transport.is_finite()) {
        return Err(Error::NonFiniteValue("sinkhorn objective".into()));
    }
    Ok(SinkhornSolution {
        f,
        g: gp,
        epsilon,
        transport_cost: transport,
        regularized_value,
        iterations,
        violation,
        converged: violation <= tol,
    })
}

/// Squared distances between the centres of an `h x w` grid and a list of target cells.
pub fn grid_cost(h: usize, w: usize, targets: &[(usize, usize)]) -> Vec<f64> {
    let mut c = Vec::with_capacity(h * w * targets.len());
    for r in 0..h {
        for col in 0..w {
            for &(tr, tc) in targets {
                c.push((r as f64 - tr as f64).powi(2) + (col as f64 - tc as f64).powi(2));
            }
        }
    }
    c
}

/// OT term of one image, evaluated outside the tape.
#[derive(Clone, Debug)]
pub struct OtLoss {
    /// Entropic objective; the value carried by the training graph.
    pub value: f64,
    /// `<P, C>` of the entropic plan.
    pub transport_cost: f64,
    /// Gradient of `value` w.r.t. the unnormalized prediction.
    pub grad: DenseArray,
    pub iterations: usize,
    pub converged: bool,
    pub skipped: bool,
}

/// Balanced OT between `D'/sum(D')` and the normalized dot grid. The gradient is taken
/// from the converged potentials: with `a = D'/S`, `d value / d D'_k = (f_k - <f, a>) / S`.
pub fn ot_loss_value(d_pred: &DenseArray, gt: &GroundTruth, cfg: &SinkhornConfig) -> Result<OtLoss> {
    let (h, w) = gt.grid_shape();
    if d_pred.len() != h * w {
        return Err(Error::shape(format!("density {:?} vs dot grid {h}x{w}", d_pred.shape())));
    }
    let s = d_pred.sum();
    let n = gt.count();
    if !(s > 0.0) || n <= 0.0 {
        log::debug!("ot term skipped: predicted mass {s}, {n} annotated points");
        return Ok(OtLoss {
            value: 0.0,
            transport_cost: 0.0,
            grad: DenseArray::zeros(d_pred.shape()),
            iterations: 0,
            converged: true,
            skipped: true,
        });
    }
    let a: Vec<f64> = d_pred.data().iter().map(|&v| v / s).collect();
    let mut targets = Vec::new();
    let mut b = Vec::new();
    for (k, &m) in gt.dot_grid.data().iter().enumerate() {
        if m > 0.0 {
            targets.push((k / w, k % w));
            b.push(m / n);
        }
    }
    let cost = grid_cost(h, w, &targets);
    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    let sol = sinkhorn(&a, &b, &cost, cfg.epsilon_for(max_cost), cfg.max_iters, cfg.tol)?;
    if !sol.converged {
        log::warn!(
            "sinkhorn not converged after {} iterations (violation {:.3e} > tol {:.1e})",
            sol.iterations,
            sol.violation,
            cfg.tol
        );
    }
    let fa: f64 = sol.f.iter().zip(&a).map(|(x, y)| x * y).sum();
    let grad = DenseArray::new(d_pred.shape().to_vec(), sol.f.iter().map(|&fk| (fk - fa) / s).collect())?;
    Ok(OtLoss {
        value: sol.regularized_value,
        transport_cost: sol.transport_cost,
        grad,
        iterations: sol.iterations,
        converged: sol.converged,
        skipped: false,
    })
}

pub fn ot_loss(g: &mut Graph, d_pred: Var, gt: &GroundTruth, cfg: &SinkhornConfig) -> Result<(Var, OtLoss)> {
    check_pred(g, d_pred, gt)?;
    let r = ot_loss_value(g.value(d_pred), gt, cfg)?;
    let v = g.external_scalar(d_pred, r.value, r.grad.clone())?;
    Ok((v, r))
}

/// Separable Gaussian blur with zero padding, radius `ceil(3 sigma)`. `sigma == 0`
/// returns the input.
pub fn gaussian_smooth(grid: &DenseArray, sigma: f64) -> DenseArray {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let (h, w) = (grid.shape()[0], grid.shape()[1]);
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let ks: f64 = k.iter().sum();
    let k: Vec<f64> = k.iter().map(|v| v / ks).collect();
    let src = grid.data();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r)
                .filter_map(|d| {
                    let xx = x as isize + d;
                    (0..w as isize).contains(&xx).then(|| k[(d + r) as usize] * src[y * w + xx as usize])
                })
                .sum();
        }
    }
    DenseArray::from_fn(&[h, w], |i| {
        let (y, x) = (i / w, i % w);
        (-r..=r)
            .filter_map(|d| {
                let yy = y as isize + d;
                (0..h as isize).contains(&yy).then(|| k[(d + r) as usize] * tmp[yy as usize * w + x])
            })
            .sum()
    })
}

/// Half the L1 distance between `p / sum(p)` and `q / sum(q)`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if !(sp > 0.0 && sq > 0.0) {
        return Err(Error::EmptyInput);
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a / sp - b / sq).abs()).sum::<f64>())
}

/// `1/2 || D'/|D'| - G(D)/|G(D)| ||_1` with `G` a Gaussian blur of width `sigma_g` cells.
/// Returns `None` (skip) when either side carries no mass.
pub fn tv_loss(g: &mut Graph, d_pred: Var, gt: &GroundTruth, sigma_g: f64) -> Result<Option<Var>> {
    check_pred(g, d_pred, gt)?;
    let s = g.value(d_pred).sum();
    if !(s > 0.0) || gt.count() <= 0.0 {
        log::debug!("tv term skipped: predicted mass {s}, {} annotated points", gt.count());
        return Ok(None);
    }
    let smooth = gaussian_smooth(&gt.dot_grid, sigma_g);
    let total = smooth.sum();
    let target = smooth.map(|v| v / total).reshaped(g.shape(d_pred))?;
    let t = g.constant(target);
    let flat_sum = g.sum(d_pred);
    let p = g.div(d_pred, flat_sum)?;
    let diff = g.sub(p, t)?;
    let l1 = g.l1_norm(diff);
    Ok(Some(g.scale(l1, 0.5)))
}

/// Per-term values of the density loss, averaged over the batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensityTerms {
    pub count: f64,
    pub ot: f64,
    pub ot_transport: f64,
    pub tv: f64,
    pub ot_unconverged: usize,
    pub skipped: usize,
}

/// `L_d = count + lambda1 * OT + lambda2 * TV`, averaged over the images of
/// `density: [B, 1, h, w]`.
pub fn density_loss(
    g: &mut Graph,
    density: Var,
    gts: &[GroundTruth],
    w: &LossWeights,
    sinkhorn: &SinkhornConfig,
    sigma_g: f64,
) -> Result<(Var, DensityTerms)> {
    let s = g.shape(density).to_vec();
    if s.is_empty() || s[0] != gts.len() {
        return Err(Error::shape(format!("density {s:?} for {} ground truths", gts.len())));
    }
    if gts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut terms = DensityTerms::default();
    let mut per_image = Vec::with_capacity(gts.len());
    for (i, gt) in gts.iter().enumerate() {
        let d = g.narrow(density, i, 1)?;
        let mut l = count_loss(g, d, gt)?;
        terms.count += g.value(l).item();
        if w.lambda1 > 0.0 {
            let (ot, info) = ot_loss(g, d, gt, sinkhorn)?;
            terms.ot += info.value;
            terms.ot_transport += info.transport_cost;
            terms.skipped += info.skipped as usize;
            terms.ot_unconverged += !info.converged as usize;
            let ot = g.scale(ot, w.lambda1);
            l = g.add(l, ot)?;
        }
        if w.lambda2 > 0.0 {
            if let Some(tv) = tv_loss(g, d, gt, sigma_g)? {
                terms.tv += g.value(tv).item();
                let tv = g.scale(tv, w.lambda2);
                l = g.add(l, tv)?;
            }
        }
        per_image.push(l);
    }
    let b = gts.len() as f64;
    terms.count /= b;
    terms.ot /= b;
    terms.ot_transport /= b;
    terms.tv /= b;
    let mut rows = Vec::with_capacity(per_image.len());
    for v in per_image {
        rows.push(g.reshape(v, &[1])?);
    }
    let stacked = g.concat(&rows, 0)?;
    Ok((g.mean(stacked), terms))
}

/// `L_d + alpha * L_mp + beta * L_cl`; absent terms count as zero.
pub fn combined_loss(g: &mut Graph, l_d: Var, l_mp: Option<Var>, l_cl: Option<Var>, w: &LossWeights) -> Result<Var> {
    let mut total = l_d;
    for (term, weight) in [(l_mp, w.alpha), (l_cl, w.beta)] {
        if let Some(t) = term {
            if weight > 0.0 {
                let s = g.scale(t, weight);
                total = g.add(total, s)?;
            }
        }
    }
    Ok(total)
}

/// Scalar form of [`combined_loss`].
pub fn combine_terms(l_d: f64, l_mp: f64, l_cl: f64, w: &LossWeights) -> f64 {
    l_d + w.alpha * l_mp + w.beta * l_cl
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(g: &mut Graph, shape: &[usize], data: Vec<f64>) -> Var {
        g.param(DenseArray::new(shape.to_vec(), data).unwrap())
    }

    fn grid(h: usize, w: usize, cells: &[(usize, usize, f64)]) -> GroundTruth {
        let mut d = DenseArray::zeros(&[h, w]);
        for &(r, c, m) in cells {
            d.data_mut()[r * w + c] += m;
        }
        GroundTruth::from_grid(d)
    }

    #[test]
    fn count_loss_examples() {
        let mut g = Graph::new();
        let pts: Vec<Point> = (0..7).map(|i| Point::new(4.0 + i as f64, 4.0)).collect();
        let gt = GroundTruth::new(&pts, 16, 16).unwrap();
        let d = var(&mut g, &[1, 1, 2, 2], vec![2.5, 2.5, 4.0, 1.0]);
        let l = count_loss(&mut g, d, &gt).unwrap();
        assert_eq!(g.value(l).item(), 3.0);
        let empty = GroundTruth::new(&[], 16, 16).unwrap();
        let d2 = var(&mut g, &[1, 1, 2, 2], vec![0.5, 0.5, 1.0, 0.5]);
        let l2 = count_loss(&mut g, d2, &empty).unwrap();
        assert_eq!(g.value(l2).item(), 2.5);
        let d3 = var(&mut g, &[1, 1, 2, 2], vec![7.0, 0.0, 0.0, 0.0]);
        let l3 = count_loss(&mut g, d3, &gt).unwrap();
        assert_eq!(g.value(l3).item(), 0.0);
    }

    #[test]
    fn dot_grid_mass_matches_points() {
        let pts = [Point::new(0.0, 0.0), Point::new(7.9, 7.9), Point::new(63.5, 8.0)];
        let gt = GroundTruth::new(&pts, 64, 64).unwrap();
        assert_eq!(gt.count(), 3.0);
        assert_eq!(gt.dot_grid.data()[0], 2.0);
        assert_eq!(gt.dot_grid.data()[8 + 7], 1.0);
        assert!(GroundTruth::new(&[Point::new(64.0, 0.0)], 64, 64).is_err());
    }

    #[test]
    fn one_dimensional_transport() {
        // mass at x=0 moved to x=3 costs 9
        let sol = sinkhorn(&[1.0, 0.0], &[1.0], &[9.0, 0.0], 0.05, 500, 1e-12).unwrap();
        assert!((sol.transport_cost - 9.0).abs() / 9.0 < 0.01);
        let gt = grid(1, 4, &[(0, 3, 1.0)]);
        let d = DenseArray::new(vec![1, 4], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let cfg = SinkhornConfig { epsilon: Some(0.05), ..SinkhornConfig::default() };
        let r = ot_loss_value(&d, &gt, &cfg).unwrap();
        assert!((r.transport_cost - 9.0).abs() / 9.0 < 0.01, "{}", r.transport_cost);
    }

    #[test]
    fn coincident_mass_costs_nothing() {
        let gt = grid(3, 3, &[(1, 1, 1.0)]);
        let mut d = DenseArray::zeros(&[3, 3]);
        d.data_mut()[4] = 2.0;
        let mut last = f64::INFINITY;
        for eps in [1.0, 0.1, 0.01] {
            let cfg = SinkhornConfig { epsilon: Some(eps), ..SinkhornConfig::default() };
            let r = ot_loss_value(&d, &gt, &cfg).unwrap();
            assert!(r.transport_cost.abs() < 1e-12);
            assert!(r.value.abs() <= last + 1e-15);
            last = r.value.abs();
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn empty_sides_skip() {
        let cfg = SinkhornConfig::default();
        let r = ot_loss_value(&DenseArray::zeros(&[2, 2]), &grid(2, 2, &[(0, 0, 1.0)]), &cfg).unwrap();
        assert!(r.skipped && r.value == 0.0 && r.grad.sum() == 0.0);
        let r = ot_loss_value(&DenseArray::full(&[2, 2], 1.0), &grid(2, 2, &[]), &cfg).unwrap();
        assert!(r.skipped);
        let mut g = Graph::new();
        let d = var(&mut g, &[2, 2], vec![0.0; 4]);
        assert!(tv_loss(&mut g, d, &grid(2, 2, &[(0, 0, 1.0)]), 1.0).unwrap().is_none());
    }

    #[test]
    fn not_converged_is_reported() {
        let gt = grid(3, 3, &[(0, 0, 1.0), (2, 2, 2.0)]);
        let d = DenseArray::from_fn(&[3, 3], |i| 1.0 + i as f64);
        let cfg = SinkhornConfig { max_iters: 1, tol: 1e-14, ..SinkhornConfig::default() };
        let r = ot_loss_value(&d, &gt, &cfg).unwrap();
        assert!(!r.converged && r.iterations == 1 && r.value.is_finite());
    }

    #[test]
    fn ot_gradient_sums_to_zero_against_prediction() {
        // value is scale invariant in D', so <grad, D'> = 0
        let gt = grid(3, 3, &[(0, 1, 1.0), (2, 2, 1.0)]);
        let d = DenseArray::from_fn(&[3, 3], |i| 0.5 + (i % 4) as f64);
        let r = ot_loss_value(&d, &gt, &SinkhornConfig::default()).unwrap();
        let dot: f64 = r.grad.data().iter().zip(d.data()).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn tv_examples() {
        let mut g = Graph::new();
        let gt = grid(1, 2, &[(0, 1, 1.0)]);
        let d = var(&mut g, &[1, 2], vec![3.0, 0.0]);
        let tv = tv_loss(&mut g, d, &gt, 0.0).unwrap().unwrap();
        assert_eq!(g.value(tv).item(), 1.0);
        let gt = grid(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let d = var(&mut g, &[1, 2], vec![0.75, 0.25]);
        let tv = tv_loss(&mut g, d, &gt, 0.0).unwrap().unwrap();
        assert!((g.value(tv).item() - 0.25).abs() < 1e-15);

        let gt = grid(4, 4, &[(1, 1, 1.0), (2, 3, 2.0)]);
        let smooth = gaussian_smooth(&gt.dot_grid, 1.0);
        let d = g.param(smooth.map(|v| 3.0 * v).reshaped(&[1, 1, 4, 4]).unwrap());
        let tv = tv_loss(&mut g, d, &gt, 1.0).unwrap().unwrap();
        assert!(g.value(tv).item().abs() < 1e-15);
    }

    #[test]
    fn tv_distance_is_symmetric_and_bounded() {
        let p = [0.1, 0.0, 3.0, 1.0];
        let q = [1.0, 2.0, 0.0, 0.5];
        let a = tv_distance(&p, &q).unwrap();
        assert_eq!(a, tv_distance(&q, &p).unwrap());
        assert!((0.0..=1.0).contains(&a));
        assert!(tv_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn smoothing_preserves_interior_mass() {
        let gt = grid(9, 9, &[(4, 4, 1.0)]);
        let s = gaussian_smooth(&gt.dot_grid, 1.0);
        assert!((s.sum() - 1.0).abs() < 1e-12);
        assert_eq!(s.data()[4 * 9 + 4], s.max());
        assert_eq!(gaussian_smooth(&gt.dot_grid, 0.0), gt.dot_grid);
    }

    #[test]
    fn combined_examples() {
        let w = LossWeights::default();
        assert!((combine_terms(1.0, 2.0, 3.0, &w) - 1.23).abs() < 1e-15);
        let zero = LossWeights { alpha: 0.0, beta: 0.0, ..w };
        assert_eq!(combine_terms(1.5, 2.0, 3.0, &zero), 1.5);
        assert_eq!(combine_terms(0.0, 0.0, 0.0, &w), 0.0);
        let mut g = Graph::new();
        let (ld, mp, cl) = (g.scalar(1.0), g.scalar(2.0), g.scalar(3.0));
        let t = combined_loss(&mut g, ld, Some(mp), Some(cl), &w).unwrap();
        assert!((g.value(t).item() - 1.23).abs() < 1e-15);
        let t = combined_loss(&mut g, ld, Some(mp), Some(cl), &zero).unwrap();
        assert_eq!(g.value(t).item(), 1.0);
        assert!(LossWeights { beta: -1.0, ..w }.validate().is_err());
    }

    #[test]
    fn density_loss_averages_images() {
        let mut g = Graph::new();
        let gts = vec![GroundTruth::new(&[Point::new(3.0, 3.0)], 16, 16).unwrap(), GroundTruth::new(&[], 16, 16).unwrap()];
        let d = var(&mut g, &[2, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.0, 0.0]);
        let w = LossWeights { lambda1: 0.0, lambda2: 0.0, ..LossWeights::default() };
        let (l, terms) = density_loss(&mut g, d, &gts, &w, &SinkhornConfig::default(), 1.0).unwrap();
        assert_eq!(g.value(l).item(), 0.75);
        assert_eq!(terms.count, 0.75);
        let (l, terms) = density_loss(&mut g, d, &gts, &LossWeights::default(), &SinkhornConfig::default(), 1.0).unwrap();
        assert!(g.value(l).item() > 0.75);
        assert_eq!(terms.skipped, 1);
    }
}
