//! Counting error and the localization protocol.

use serde::{Deserialize, Serialize};

use crate::clm::CELL;
use crate::data::Point;
use crate::diff::DenseArray;
use crate::error::{Error, Result};

pub fn mae_rmse(pred: &[f64], gt: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = pred.len() as f64;
    let (abs, sq) = pred.iter().zip(gt).fold((0.0, 0.0), |(a, s), (p, g)| (a + (p - g).abs(), s + (p - g).powi(2)));
    Ok((abs / n, (sq / n).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakConfig {
    /// Detection threshold as a fraction of the map maximum.
    pub min_rel: f64,
    /// Odd window side.
    pub neighborhood: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self { min_rel: 0.25, neighborhood: 3 }
    }
}

/// Cells strictly greater than every other cell of their `k x k` window (clipped at the
/// border) and at least `min_value`. Plateaus yield nothing. Points are returned in
/// raster order at the cell centre in image pixels.
pub fn find_local_maxima(density: &DenseArray, min_value: f64, k: usize) -> Result<Vec<Point>> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::Config(format!("neighborhood must be odd and >= 3, got {k}")));
    }
    let s = density.shape();
    if s.len() < 2 || s[..s.len() - 2].iter().any(|&d| d != 1) {
        return Err(Error::shape(format!("expected a single density map, got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let d = density.data();
    let r = k / 2;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = d[y * w + x];
            if !(v >= min_value) || v <= 0.0 {
                continue;
            }
            let peak = (y.saturating_sub(r)..(y + r + 1).min(h))
                .all(|yy| (x.saturating_sub(r)..(x + r + 1).min(w)).all(|xx| (yy == y && xx == x) || d[yy * w + xx] < v));
            if peak {
                out.push(Point::new((x as f64 + 0.5) * CELL as f64, (y as f64 + 0.5) * CELL as f64));
            }
        }
    }
    Ok(out)
}

/// Peaks with the relative threshold of `cfg`.
pub fn detect_points(density: &DenseArray, cfg: &PeakConfig) -> Result<Vec<Point>> {
    let m = density.max();
    if !(m > 0.0) {
        return Ok(Vec::new());
    }
    find_local_maxima(density, cfg.min_rel * m, cfg.neighborhood)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(pred index, gt index, distance)`
    pub pairs: Vec<(usize, usize, f64)>,
}

impl MatchResult {
    fn from_pairs(mut pairs: Vec<(usize, usize, f64)>, n_pred: usize, n_gt: usize) -> Self {
        pairs.sort_by_key(|p| p.0);
        let tp = pairs.len();
        Self { tp, fp: n_pred - tp, fn_: n_gt - tp, pairs }
    }

    pub fn total_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    #[default]
    Optimal,
    Greedy,
}

/// Maximum-cardinality matching among pairs within `sigma`, and among those the one with
/// the smallest total distance.
pub fn match_points(preds: &[Point], gts: &[Point], sigma: f64) -> MatchResult {
    let (n, m) = (preds.len(), gts.len());
    let k = n.max(m);
    if n == 0 || m == 0 {
        return MatchResult::from_pairs(Vec::new(), n, m);
    }
    // Any forbidden or padded pair costs more than all admissible pairs together, so the
    // optimum uses as many admissible pairs as possible.
    let big = (k as f64 + 1.0) * sigma.max(1.0) + 1.0;
    let mut cost = vec![big; k * k];
    for i in 0..n {
        for j in 0..m {
            let d = preds[i].dist(gts[j]);
            if d <= sigma {
                cost[i * k + j] = d;
            }
        }
    }
    let assign = hungarian(&cost, k);
    let pairs = (0..n)
        .filter_map(|i| {
            let j = assign[i];
            (j < m && cost[i * k + j] < big).then(|| (i, j, cost[i * k + j]))
        })
        .collect();
    MatchResult::from_pairs(pairs, n, m)
}

/// Repeatedly take the closest remaining admissible pair.
pub fn match_points_greedy(preds: &[Point], gts: &[Point], sigma: f64) -> MatchResult {
    let mut cand: Vec<(usize, usize, f64)> = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let d = p.dist(*g);
            if d <= sigma {
                cand.push((i, j, d));
            }
        }
    }
    cand.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let (mut used_p, mut used_g) = (vec![false; preds.len()], vec![false; gts.len()]);
    let mut pairs = Vec::new();
    for (i, j, d) in cand {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            pairs.push((i, j, d));
        }
    }
    MatchResult::from_pairs(pairs, preds.len(), gts.len())
}

pub fn match_with(method: MatchMethod, preds: &[Point], gts: &[Point], sigma: f64) -> MatchResult {
    match method {
        MatchMethod::Optimal => match_points(preds, gts, sigma),
        MatchMethod::Greedy => match_points_greedy(preds, gts, sigma),
    }
}

/// Minimum-cost perfect assignment on a square `k x k` matrix (shortest augmenting paths
/// with row/column potentials). Returns the column of every row.
fn hungarian(cost: &[f64], k: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; k + 1], vec![0.0; k + 1]);
    // p[j]: row matched to column j (1-based, 0 = none)
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost[(i0 - 1) * k + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; k];
    for j in 1..=k {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Precision, recall and F1; empty denominators give 0.
pub fn prf(m: &MatchResult) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(m.tp, m.tp + m.fp);
    let r = ratio(m.tp, m.tp + m.fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn mae_rmse_examples() {
        assert_eq!(mae_rmse(&[3.0, 5.0], &[4.0, 4.0]).unwrap(), (1.0, 1.0));
        assert_eq!(mae_rmse(&[2.0, 9.0], &[2.0, 9.0]).unwrap(), (0.0, 0.0));
        let (mae, rmse) = mae_rmse(&[100.0, 200.0], &[110.0, 180.0]).unwrap();
        assert_eq!(mae, 15.0);
        assert!((rmse - 250f64.sqrt()).abs() < 1e-12);
        assert!(matches!(mae_rmse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(mae_rmse(&[], &[]), Err(Error::EmptyInput)));
    }

    fn blob(h: usize, w: usize, centers: &[(usize, usize)]) -> DenseArray {
        DenseArray::from_fn(&[1, 1, h, w], |i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            centers.iter().map(|&(cy, cx)| (-((y - cy as f64).powi(2) + (x - cx as f64).powi(2)) / 2.0).exp()).sum()
        })
    }

    #[test]
    fn single_blob_single_peak() {
        let p = detect_points(&blob(8, 8, &[(3, 5)]), &PeakConfig::default()).unwrap();
        assert_eq!(p, pts(&[(44.0, 28.0)]));
    }

    #[test]
    fn constant_map_has_no_peaks() {
        assert!(detect_points(&DenseArray::full(&[6, 6], 0.3), &PeakConfig::default()).unwrap().is_empty());
        assert!(detect_points(&DenseArray::zeros(&[6, 6]), &PeakConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn two_blobs_two_peaks() {
        let p = detect_points(&blob(8, 16, &[(2, 2), (5, 12)]), &PeakConfig::default()).unwrap();
        assert_eq!(p, pts(&[(20.0, 20.0), (100.0, 44.0)]));
    }

    #[test]
    fn peak_arguments_are_checked() {
        let d = DenseArray::zeros(&[4, 4]);
        assert!(find_local_maxima(&d, 0.0, 2).is_err());
        assert!(find_local_maxima(&d, 0.0, 1).is_err());
        assert!(find_local_maxima(&DenseArray::zeros(&[2, 4, 4]), 0.0, 3).is_err());
        let mut m = DenseArray::zeros(&[5, 5]);
        m.data_mut()[12] = 1.0;
        m.data_mut()[0] = 0.9;
        assert_eq!(find_local_maxima(&m, 0.0, 3).unwrap().len(), 2);
        assert_eq!(find_local_maxima(&m, 0.0, 5).unwrap().len(), 1);
    }

    #[test]
    fn match_examples() {
        let m = match_points(&pts(&[(0.0, 0.0)]), &pts(&[(2.0, 0.0)]), 4.0);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
        assert_eq!(prf(&m), (1.0, 1.0, 1.0));
        let m = match_points(&pts(&[(0.0, 0.0), (10.0, 10.0)]), &pts(&[(1.0, 0.0)]), 4.0);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
        let (p, r, f1) = prf(&m);
        assert_eq!((p, r), (0.5, 1.0));
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        let m = match_points(&[], &pts(&[(1.0, 0.0), (2.0, 2.0), (5.0, 5.0)]), 8.0);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 3));
        assert_eq!(prf(&m), (0.0, 0.0, 0.0));
    }

    #[test]
    fn optimal_beats_greedy_on_cardinality() {
        // greedy pairs p0 with g0 (distance 1) and strands g1
        let preds = pts(&[(0.0, 0.0), (10.0, 0.0)]);
        let gts = pts(&[(1.0, 0.0), (-3.0, 0.0)]);
        let g = match_points_greedy(&preds, &gts, 4.0);
        let o = match_points(&preds, &gts, 4.0);
        assert_eq!(g.tp, 1);
        assert_eq!(o.tp, 1);
        let preds = pts(&[(0.0, 0.0), (4.0, 0.0)]);
        let gts = pts(&[(3.0, 0.0), (7.0, 0.0)]);
        assert_eq!(match_points_greedy(&preds, &gts, 3.5).tp, 1);
        let o = match_points(&preds, &gts, 3.5);
        assert_eq!(o.tp, 2);
        assert_eq!(o.pairs, vec![(0, 0, 3.0), (1, 1, 3.0)]);
    }

    #[test]
    fn prf_conventions() {
        let r = |tp, fp, fn_| prf(&MatchResult { tp, fp, fn_, pairs: vec![] });
        assert_eq!(r(0, 0, 0), (0.0, 0.0, 0.0));
        assert_eq!(r(5, 0, 0), (1.0, 1.0, 1.0));
        let (p, rc, f) = r(1, 1, 0);
        assert_eq!((p, rc), (0.5, 1.0));
        assert!((f - 0.6667).abs() < 1e-4);
    }
}
