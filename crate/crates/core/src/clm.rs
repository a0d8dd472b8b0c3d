//! Supervised pixel-level contrastive learning on the 1/8-scale feature map.
//!
//! Cells that contain an annotated head are targets, everything else is background.
//! Each target representation is pulled toward the pooled target representation and
//! pushed away from the pooled background representation through a two-way softmax
//! over cosine similarities. The module only exists at training time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Point;
use crate::diff::{Graph, Var};
use crate::error::{Error, Result};
use crate::param::{Bound, Conv, Initializer, ParamStore};

/// Side of one label cell in image pixels.
pub const CELL: usize = 8;

/// Head-size bounds (pixels) for adaptive dilation.
pub const ADAPTIVE_MIN_PX: f64 = 8.0;
pub const ADAPTIVE_MAX_PX: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Dilation {
    #[default]
    One,
    Three,
    Five,
    Adaptive,
}

impl fmt::Display for Dilation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dilation::One => "1",
            Dilation::Three => "3",
            Dilation::Five => "5",
            Dilation::Adaptive => "adaptive",
        })
    }
}

impl FromStr for Dilation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Dilation::One),
            "3" => Ok(Dilation::Three),
            "5" => Ok(Dilation::Five),
            "adaptive" => Ok(Dilation::Adaptive),
            other => Err(Error::Config(format!("unknown dilation `{other}` (expected 1, 3, 5 or adaptive)"))),
        }
    }
}

impl TryFrom<String> for Dilation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Dilation> for String {
    fn from(d: Dilation) -> String {
        d.to_string()
    }
}

/// Binary target/background labels on the 1/8-scale grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelGrid {
    pub h: usize,
    pub w: usize,
    pub labels: Vec<u8>,
    pub target_count: usize,
    pub background_count: usize,
}

impl LabelGrid {
    pub fn targets(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == 1).collect()
    }

    pub fn backgrounds(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == 0).collect()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.w + col]
    }
}

/// Label every cell containing (or, with dilation, surrounding) an annotated head.
pub fn label_grid(points: &[Point], image_h: usize, image_w: usize, dilation: Dilation) -> Result<LabelGrid> {
    let (h, w) = (image_h.div_ceil(CELL), image_w.div_ceil(CELL));
    let mut labels = vec![0u8; h * w];
    for (i, p) in points.iter().enumerate() {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x < image_w as f64 && p.y < image_h as f64) {
            return Err(Error::PointOutOfBounds { x: p.x, y: p.y, w: image_w, h: image_h });
        }
        let (row, col) = ((p.y / CELL as f64) as usize, (p.x / CELL as f64) as usize);
        let side = match dilation {
            Dilation::One => 1,
            Dilation::Three => 3,
            Dilation::Five => 5,
            Dilation::Adaptive => adaptive_side(points, i),
        };
        let lo = (side - 1) / 2;
        let hi = side / 2;
        let (r0, r1) = (row.saturating_sub(lo), (row + hi).min(h - 1));
        let (c0, c1) = (col.saturating_sub(lo), (col + hi).min(w - 1));
        for r in r0..=r1 {
            labels[r * w + c0..=r * w + c1].fill(1);
        }
    }
    let target_count = labels.iter().filter(|&&l| l == 1).count();
    Ok(LabelGrid { h, w, labels, target_count, background_count: h * w - target_count })
}

/// Block side in cells: half the nearest-neighbour distance, clamped to
/// `[ADAPTIVE_MIN_PX, ADAPTIVE_MAX_PX]`, divided by the cell size. Isolated heads use the
/// lower bound.
fn adaptive_side(points: &[Point], i: usize) -> usize {
    let p = points[i];
    let nearest = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, q)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min);
    let size = if nearest.is_finite() { (nearest / 2.0).clamp(ADAPTIVE_MIN_PX, ADAPTIVE_MAX_PX) } else { ADAPTIVE_MIN_PX };
    ((size / CELL as f64).round() as usize).max(1)
}

/// Two-layer projection head: 3x3 conv, ReLU, 1x1 conv.
pub struct ProjectionHead {
    conv1: Conv,
    conv2: Conv,
}

impl ProjectionHead {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, c_in: usize, dim: usize) -> Self {
        Self {
            conv1: Conv::new(store, init, "clm.proj1", c_in, dim, 3),
            conv2: Conv::new(store, init, "clm.proj2", dim, dim, 1),
        }
    }

    /// `[B, C_f, h, w] -> [B, D, h, w]`
    pub fn project(&self, g: &mut Graph, p: &Bound, f_f: Var) -> Result<Var> {
        let y = self.conv1.forward(g, p, f_f)?;
        let y = g.relu(y);
        self.conv2.forward(g, p, y)
    }
}

/// Mean target and background representations of one image.
#[derive(Clone, Copy, Debug)]
pub struct PooledReps {
    pub x_pos_global: Var,
    pub x_neg_global: Var,
}

/// Pool `rows: [h*w, D]` over the target and background index sets.
pub fn pooled_reps(g: &mut Graph, rows: Var, labels: &LabelGrid) -> Result<PooledReps> {
    if labels.target_count == 0 {
        return Err(Error::NoPositives);
    }
    if labels.background_count == 0 {
        return Err(Error::NoNegatives);
    }
    Ok(PooledReps { x_pos_global: mean_rows(g, rows, &labels.targets())?, x_neg_global: mean_rows(g, rows, &labels.backgrounds())? })
}

fn mean_rows(g: &mut Graph, rows: Var, idx: &[usize]) -> Result<Var> {
    let sel = g.index_select(rows, idx)?;
    g.mean_axis(sel, 0)
}

/// Per-sample loss `-ln(e^{cp} / (e^{cp} + e^{cn}))` for plain numbers.
pub fn per_sample_loss(cos_pos: f64, cos_neg: f64) -> f64 {
    let z = cos_neg - cos_pos;
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClmVariant {
    /// Pools of the same image.
    #[default]
    SingleGlobal,
    /// Every (target, target) and (target, background) pixel pair of the same image.
    SingleLocal,
    /// Pools over the whole batch.
    CrossGlobal,
    /// Each image's pooled target/background representation, across the batch, as pairs.
    CrossLocal,
    /// Mean of the per-image target pools as positive; own background pool as negative.
    CrossGlobalCollection,
}

impl ClmVariant {
    pub const ALL: [ClmVariant; 5] = [
        ClmVariant::SingleGlobal,
        ClmVariant::SingleLocal,
        ClmVariant::CrossGlobal,
        ClmVariant::CrossLocal,
        ClmVariant::CrossGlobalCollection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClmVariant::SingleGlobal => "single_global",
            ClmVariant::SingleLocal => "single_local",
            ClmVariant::CrossGlobal => "cross_global",
            ClmVariant::CrossLocal => "cross_local",
            ClmVariant::CrossGlobalCollection => "cross_global_collection",
        }
    }
}

impl fmt::Display for ClmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClmVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown CLM variant `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipReason {
    NoPositives,
    NoNegatives,
}

/// Batch contrastive loss plus the images that contributed nothing.
pub struct ClmLoss {
    /// Mean over all images of each image's loss (skipped images count as 0).
    pub loss: Var,
    pub skipped: Vec<(usize, SkipReason)>,
}

/// Pooled statistics gathered over a batch before the cross-image losses are evaluated.
pub struct BatchContext {
    /// Per-image pools, `None` where the image lacks that side.
    pub pos: Vec<Option<Var>>,
    pub neg: Vec<Option<Var>>,
    /// Pools over the union of all batch targets / backgrounds.
    pub union_pos: Option<Var>,
    pub union_neg: Option<Var>,
}

impl BatchContext {
    pub fn gather(g: &mut Graph, rows: Var, labels: &[LabelGrid]) -> Result<Self> {
        let n = labels.first().map_or(0, |l| l.h * l.w);
        let mut pos = Vec::with_capacity(labels.len());
        let mut neg = Vec::with_capacity(labels.len());
        let (mut all_pos, mut all_neg) = (Vec::new(), Vec::new());
        for (b, l) in labels.iter().enumerate() {
            let t: Vec<usize> = l.targets().into_iter().map(|i| b * n + i).collect();
            let k: Vec<usize> = l.backgrounds().into_iter().map(|i| b * n + i).collect();
            pos.push(if t.is_empty() { None } else { Some(mean_rows(g, rows, &t)?) });
            neg.push(if k.is_empty() { None } else { Some(mean_rows(g, rows, &k)?) });
            all_pos.extend(t);
            all_neg.extend(k);
        }
        let union_pos = if all_pos.is_empty() { None } else { Some(mean_rows(g, rows, &all_pos)?) };
        let union_neg = if all_neg.is_empty() { None } else { Some(mean_rows(g, rows, &all_neg)?) };
        Ok(Self { pos, neg, union_pos, union_neg })
    }
}

/// `[B, D, h, w]` projection to row-major pixel representations `[B*h*w, D]`.
pub fn pixel_rows(g: &mut Graph, proj: Var) -> Result<Var> {
    crate::mpm::flatten_tokens(g, proj)
}

/// Contrastive loss over a batch of projected maps `[B, D, h, w]`.
pub fn contrastive_loss(g: &mut Graph, proj: Var, labels: &[LabelGrid], variant: ClmVariant) -> Result<ClmLoss> {
    let s = g.shape(proj).to_vec();
    if s.len() != 4 || s[0] != labels.len() || labels.iter().any(|l| l.h != s[2] || l.w != s[3]) {
        return Err(Error::shape(format!("contrastive loss: projection {s:?} vs {} label grids", labels.len())));
    }
    let rows = pixel_rows(g, proj)?;
    let n = s[2] * s[3];
    let ctx = match variant {
        ClmVariant::SingleGlobal | ClmVariant::SingleLocal => None,
        _ => Some(BatchContext::gather(g, rows, labels)?),
    };
    let mut per_image = Vec::new();
    let mut skipped = Vec::new();
    for (b, l) in labels.iter().enumerate() {
        let offset = |idx: Vec<usize>| -> Vec<usize> { idx.into_iter().map(|i| b * n + i).collect() };
        let targets = offset(l.targets());
        let backgrounds = offset(l.backgrounds());
        match image_loss(g, rows, &targets, &backgrounds, variant, ctx.as_ref(), b)? {
            Ok(v) => per_image.push(v),
            Err(reason) => {
                log::debug!("contrastive loss: image {b} skipped ({reason:?})");
                skipped.push((b, reason));
            }
        }
    }
    let loss = if per_image.is_empty() {
        g.scalar(0.0)
    } else {
        let parts: Vec<Var> = per_image
            .into_iter()
            .map(|v| g.reshape(v, &[1]))
            .collect::<Result<_>>()?;
        let stacked = g.concat(&parts, 0)?;
        let total = g.sum(stacked);
        g.scale(total, 1.0 / labels.len() as f64)
    };
    Ok(ClmLoss { loss, skipped })
}

/// Single-image contrastive loss on pre-projected pixel rows `[h*w, D]`.
pub fn contrastive_loss_single(g: &mut Graph, rows: Var, labels: &LabelGrid) -> Result<Option<Var>> {
    let reps = match pooled_reps(g, rows, labels) {
        Ok(r) => r,
        Err(Error::NoPositives | Error::NoNegatives) => return Ok(None),
        Err(e) => return Err(e),
    };
    let x = g.index_select(rows, &labels.targets())?;
    Ok(Some(pooled_pair_loss(g, x, reps.x_pos_global, reps.x_neg_global)?))
}

type ImageLoss = std::result::Result<Var, SkipReason>;

fn image_loss(
    g: &mut Graph,
    rows: Var,
    targets: &[usize],
    backgrounds: &[usize],
    variant: ClmVariant,
    ctx: Option<&BatchContext>,
    b: usize,
) -> Result<ImageLoss> {
    if targets.is_empty() {
        return Ok(Err(SkipReason::NoPositives));
    }
    let x = g.index_select(rows, targets)?;
    let loss = match variant {
        ClmVariant::SingleGlobal => {
            if backgrounds.is_empty() {
                return Ok(Err(SkipReason::NoNegatives));
            }
            let xp = mean_rows(g, rows, targets)?;
            let xn = mean_rows(g, rows, backgrounds)?;
            pooled_pair_loss(g, x, xp, xn)?
        }
        ClmVariant::SingleLocal => {
            if backgrounds.is_empty() {
                return Ok(Err(SkipReason::NoNegatives));
            }
            let xn = g.index_select(rows, backgrounds)?;
            let cpp = pairwise_cosine(g, x, x)?;
            let cpn = pairwise_cosine(g, x, xn)?;
            triplet_mean(g, cpp, cpn)?
        }
        ClmVariant::CrossGlobal => {
            let ctx = ctx.expect("batch context");
            let Some(xn) = ctx.union_neg else { return Ok(Err(SkipReason::NoNegatives)) };
            let xp = ctx.union_pos.expect("image has targets");
            pooled_pair_loss(g, x, xp, xn)?
        }
        ClmVariant::CrossLocal => {
            let ctx = ctx.expect("batch context");
            let pos: Vec<Var> = ctx.pos.iter().flatten().copied().collect();
            let neg: Vec<Var> = ctx.neg.iter().flatten().copied().collect();
            if neg.is_empty() {
                return Ok(Err(SkipReason::NoNegatives));
            }
            let pos = stack_vectors(g, &pos)?;
            let neg = stack_vectors(g, &neg)?;
            let cp = pairwise_cosine(g, x, pos)?;
            let cn = pairwise_cosine(g, x, neg)?;
            triplet_mean(g, cp, cn)?
        }
        ClmVariant::CrossGlobalCollection => {
            let ctx = ctx.expect("batch context");
            let Some(xn) = ctx.neg[b] else { return Ok(Err(SkipReason::NoNegatives)) };
            let pos: Vec<Var> = ctx.pos.iter().flatten().copied().collect();
            let stacked = stack_vectors(g, &pos)?;
            let xp = g.mean_axis(stacked, 0)?;
            pooled_pair_loss(g, x, xp, xn)?
        }
    };
    Ok(Ok(loss))
}

/// Mean over rows of `x: [P, D]` of `softplus(cos(x_i, xn) - cos(x_i, xp))`.
fn pooled_pair_loss(g: &mut Graph, x: Var, xp: Var, xn: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let xp = g.broadcast_to(xp, &shape)?;
    let xn = g.broadcast_to(xn, &shape)?;
    let cp = g.cosine(x, xp)?;
    let cn = g.cosine(x, xn)?;
    let z = g.sub(cn, cp)?;
    let l = g.softplus(z);
    Ok(g.mean(l))
}

/// `[P, D] x [Q, D] -> [P, Q]` cosine similarities.
fn pairwise_cosine(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let (p, d) = (g.shape(a)[0], g.shape(a)[1]);
    let q = g.shape(b)[0];
    let a3 = g.reshape(a, &[p, 1, d])?;
    let a3 = g.broadcast_to(a3, &[p, q, d])?;
    let b3 = g.reshape(b, &[1, q, d])?;
    let b3 = g.broadcast_to(b3, &[p, q, d])?;
    g.cosine(a3, b3)
}

/// Mean over `(i, j, k)` of `softplus(cn[i, k] - cp[i, j])`.
fn triplet_mean(g: &mut Graph, cp: Var, cn: Var) -> Result<Var> {
    let (p, q) = (g.shape(cp)[0], g.shape(cp)[1]);
    let r = g.shape(cn)[1];
    let cp3 = g.reshape(cp, &[p, q, 1])?;
    let cn3 = g.reshape(cn, &[p, 1, r])?;
    let z = g.sub(cn3, cp3)?;
    let l = g.softplus(z);
    Ok(g.mean(l))
}

fn stack_vectors(g: &mut Graph, vs: &[Var]) -> Result<Var> {
    let parts: Vec<Var> = vs
        .iter()
        .map(|&v| {
            let d = g.shape(v)[0];
            g.reshape(v, &[1, d])
        })
        .collect::<Result<_>>()?;
    g.concat(&parts, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::DenseArray;

    fn pt(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    #[test]
    fn label_grid_examples() {
        let l = label_grid(&[pt(12.0, 20.0)], 64, 64, Dilation::One).unwrap();
        assert_eq!(l.target_count, 1);
        assert_eq!(l.get(2, 1), 1);
        let l = label_grid(&[pt(12.0, 20.0)], 64, 64, Dilation::Three).unwrap();
        assert_eq!(l.target_count, 9);
        let l = label_grid(&[pt(0.0, 0.0)], 64, 64, Dilation::Three).unwrap();
        assert_eq!(l.target_count, 4);
        assert_eq!(l.target_count + l.background_count, 64);
        let l = label_grid(&[pt(30.0, 30.0)], 64, 64, Dilation::Five).unwrap();
        assert_eq!(l.target_count, 25);
    }

    #[test]
    fn out_of_bounds_point() {
        let r = label_grid(&[pt(64.0, 3.0)], 64, 64, Dilation::One);
        assert!(matches!(r, Err(Error::PointOutOfBounds { .. })));
    }

    #[test]
    fn adaptive_dilation_tracks_spacing() {
        // neighbours 48 px apart -> head size 24 px -> 3 cells
        let pts = [pt(12.0, 12.0), pt(60.0, 12.0)];
        let l = label_grid(&pts, 64, 128, Dilation::Adaptive).unwrap();
        assert_eq!(l.target_count, 18);
        // isolated point -> lower bound -> single cell
        let l = label_grid(&[pt(30.0, 30.0)], 64, 64, Dilation::Adaptive).unwrap();
        assert_eq!(l.target_count, 1);
    }

    #[test]
    fn pooled_means() {
        let mut g = Graph::new();
        let rows = g.constant(DenseArray::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 5.0, 5.0]).unwrap());
        let labels = LabelGrid { h: 1, w: 3, labels: vec![1, 1, 0], target_count: 2, background_count: 1 };
        let r = pooled_reps(&mut g, rows, &labels).unwrap();
        assert_eq!(g.value(r.x_pos_global).data(), &[0.5, 0.5]);
        assert_eq!(g.value(r.x_neg_global).data(), &[5.0, 5.0]);
        let none = LabelGrid { h: 1, w: 3, labels: vec![0, 0, 0], target_count: 0, background_count: 3 };
        assert!(matches!(pooled_reps(&mut g, rows, &none), Err(Error::NoPositives)));
    }

    #[test]
    fn per_sample_values() {
        assert!((per_sample_loss(0.3, 0.3) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((per_sample_loss(1.0, -1.0) - 0.126_928_011_042_972_6).abs() < 1e-12);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ClmVariant::ALL {
            assert_eq!(v.as_str().parse::<ClmVariant>().unwrap(), v);
        }
        assert_eq!("adaptive".parse::<Dilation>().unwrap(), Dilation::Adaptive);
    }
}
