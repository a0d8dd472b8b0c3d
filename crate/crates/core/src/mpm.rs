//! Masked feature prediction.
//!
//! The coarsest feature map is flattened into a sequence of `N` vectors, a subset of
//! them is replaced by the zero mask token, and both the masked and the intact
//! sequences are encoded by the same transformer. The consistent loss penalises the
//! squared distance between the two encodings at the masked positions; the intact
//! encoding is the one that feeds the counting head.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{DenseArray, Graph, Var};
use crate::error::{Error, Result};
use crate::param::{Bound, Initializer, LayerNorm, Linear, ParamStore};

/// Largest accepted masking ratio.
pub const MAX_RATIO: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    #[default]
    Random,
    Block,
    Grid,
}

impl MaskStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskStrategy::Random => "random",
            MaskStrategy::Block => "block",
            MaskStrategy::Grid => "grid",
        }
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MaskStrategy::Random),
            "block" => Ok(MaskStrategy::Block),
            "grid" => Ok(MaskStrategy::Grid),
            other => Err(Error::Config(format!("unknown mask strategy `{other}`"))),
        }
    }
}

/// Masked positions over an `h x w` grid of feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSpec {
    pub n: usize,
    pub grid: (usize, usize),
    /// Sorted flat indices (row-major over `grid`).
    pub masked: Vec<usize>,
    pub ratio: f64,
    pub strategy: MaskStrategy,
    pub seed: u64,
}

impl MaskSpec {
    pub fn is_masked(&self, i: usize) -> bool {
        self.masked.binary_search(&i).is_ok()
    }

    /// Mask with nothing hidden.
    pub fn empty(grid: (usize, usize)) -> Self {
        Self { n: grid.0 * grid.1, grid, masked: Vec::new(), ratio: 0.0, strategy: MaskStrategy::Random, seed: 0 }
    }
}

/// Number of vectors to hide: `ratio * n` rounded half-up.
pub fn mask_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) + 0.5).floor() as usize
}

pub fn make_mask(n: usize, ratio: f64, strategy: MaskStrategy, grid: (usize, usize), seed: u64) -> Result<MaskSpec> {
    let (h, w) = grid;
    if !(0.0..=MAX_RATIO).contains(&ratio) || ratio.is_nan() {
        return Err(Error::BadRatio(ratio));
    }
    if n != h * w || n < 2 {
        return Err(Error::Config(format!("mask over {n} vectors needs an h*w >= 2 grid, got {h}x{w}")));
    }
    let target = mask_count(n, ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let too_small = || Error::GridTooSmall { h, w, target, strategy: strategy.as_str() };
    let mut masked = if target == 0 {
        Vec::new()
    } else {
        match strategy {
            MaskStrategy::Random => {
                let mut all: Vec<usize> = (0..n).collect();
                let (chosen, _) = all.partial_shuffle(&mut rng, target);
                chosen.to_vec()
            }
            MaskStrategy::Block => {
                let (bh, bw) = block_shape(h, w, target);
                if bh * bw != target {
                    return Err(too_small());
                }
                let top = rng.random_range(0..=h - bh);
                let left = rng.random_range(0..=w - bw);
                (top..top + bh).flat_map(|r| (left..left + bw).map(move |c| r * w + c)).collect()
            }
            MaskStrategy::Grid => {
                let (stride, offsets) = lattice_choice(h, w, target);
                let count = lattice_count(h, w, stride, offsets[0]);
                if count != target {
                    return Err(too_small());
                }
                let (oy, ox) = offsets[rng.random_range(0..offsets.len())];
                (oy..h)
                    .step_by(stride)
                    .flat_map(|r| (ox..w).step_by(stride).map(move |c| r * w + c))
                    .collect()
            }
        }
    };
    masked.sort_unstable();
    Ok(MaskSpec { n, grid, masked, ratio, strategy, seed })
}

/// Rectangle with area closest to `target`; ties go to the squarer shape, then the wider one.
fn block_shape(h: usize, w: usize, target: usize) -> (usize, usize) {
    let mut best = (1, 1);
    let mut key = (usize::MAX, usize::MAX, 0);
    for bh in 1..=h {
        for bw in 1..=w {
            let k = ((bh * bw).abs_diff(target), bh.abs_diff(bw), usize::MAX - bw);
            if k < key {
                key = k;
                best = (bh, bw);
            }
        }
    }
    best
}

fn lattice_count(h: usize, w: usize, stride: usize, (oy, ox): (usize, usize)) -> usize {
    (h - oy).div_ceil(stride) * (w - ox).div_ceil(stride)
}

/// Stride minimising `|count - target|` and every offset that reaches that count.
fn lattice_choice(h: usize, w: usize, target: usize) -> (usize, Vec<(usize, usize)>) {
    let mut best: Option<(usize, usize, Vec<(usize, usize)>)> = None;
    for stride in 1..=h.max(w) {
        for oy in 0..stride.min(h) {
            for ox in 0..stride.min(w) {
                let err = lattice_count(h, w, stride, (oy, ox)).abs_diff(target);
                match &mut best {
                    Some((e, s, offs)) if err == *e && stride == *s => offs.push((oy, ox)),
                    Some((e, ..)) if err >= *e => {}
                    _ => best = Some((err, stride, vec![(oy, ox)])),
                }
            }
        }
    }
    let (_, stride, offsets) = best.expect("non-empty grid");
    (stride, offsets)
}

/// Replace masked columns of a `[C, N]` feature matrix by the zero token.
pub fn apply_mask(g: &mut Graph, p5_flat: Var, mask: &MaskSpec) -> Result<Var> {
    let shape = g.shape(p5_flat).to_vec();
    if shape.len() != 2 || shape[1] != mask.n {
        return Err(Error::shape(format!("apply_mask: features {shape:?} vs mask over {} vectors", mask.n)));
    }
    if mask.masked.is_empty() {
        return Ok(p5_flat);
    }
    let keep = DenseArray::from_fn(&[1, mask.n], |i| if mask.is_masked(i) { 0.0 } else { 1.0 });
    let keep = g.constant(keep);
    g.mul(p5_flat, keep)
}

/// Batched form of [`apply_mask`] on row-major tokens `[B*N, C]`, one mask per image.
pub fn mask_tokens(g: &mut Graph, tokens: Var, masks: &[MaskSpec]) -> Result<Var> {
    let shape = g.shape(tokens).to_vec();
    let n = masks.first().map_or(0, |m| m.n);
    if shape.len() != 2 || masks.iter().any(|m| m.n != n) || shape[0] != n * masks.len() {
        return Err(Error::shape(format!("mask_tokens: tokens {shape:?} vs {} masks", masks.len())));
    }
    let keep = DenseArray::from_fn(&[shape[0], 1], |r| if masks[r / n].is_masked(r % n) { 0.0 } else { 1.0 });
    let keep = g.constant(keep);
    g.mul(tokens, keep)
}

/// Fixed 2-D sinusoidal positions for an `h x w` grid: the first half of the channels
/// encodes the row, the second half the column.
pub fn positional_encoding(h: usize, w: usize, dim: usize) -> DenseArray {
    let half = dim / 2;
    let freqs = half / 2;
    DenseArray::from_fn(&[h * w, dim], |i| {
        let (pos, ch) = (i / dim, i % dim);
        let (coord, c) = if ch < half { (pos / w, ch) } else { (pos % w, ch - half) };
        let j = c / 2;
        let angle = coord as f64 / 10000f64.powf(j as f64 / freqs.max(1) as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub positional: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { layers: 4, hidden: 128, heads: 2, ffn: 512, positional: true }
    }
}

impl EncoderConfig {
    /// Sizes of the full-scale encoder: 4 layers, 512 hidden, 2 heads, 2048 feed-forward.
    pub fn full_scale() -> Self {
        Self { layers: 4, hidden: 512, heads: 2, ffn: 2048, positional: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "encoder hidden size {} must be a positive multiple of the head count {}",
                self.hidden, self.heads
            )));
        }
        if self.hidden % 4 != 0 {
            return Err(Error::Config(format!("encoder hidden size {} must be divisible by 4", self.hidden)));
        }
        Ok(())
    }
}

struct EncoderLayer {
    norm1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    norm2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

/// Pre-norm transformer encoder with its input embedding and output read-outs.
pub struct MaskedPredictor {
    pub cfg: EncoderConfig,
    embed: Linear,
    layers: Vec<EncoderLayer>,
    /// After the last layer; absent for an empty stack.
    final_norm: Option<LayerNorm>,
    /// Hidden -> backbone channels; feeds the counting path.
    to_spatial: Linear,
    /// Hidden -> backbone channels; only used by the reconstruct-p5 loss.
    readout: Linear,
}

impl MaskedPredictor {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, cfg: &EncoderConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.hidden;
        let embed = Linear::new(store, init, "mpm.embed", channels, d);
        let layers = (0..cfg.layers)
            .map(|i| {
                let p = format!("mpm.layer{i}");
                EncoderLayer {
                    norm1: LayerNorm::new(store, &format!("{p}.norm1"), d),
                    q: Linear::new(store, init, &format!("{p}.q"), d, d),
                    k: Linear::new(store, init, &format!("{p}.k"), d, d),
                    v: Linear::new(store, init, &format!("{p}.v"), d, d),
                    out: Linear::new(store, init, &format!("{p}.out"), d, d),
                    norm2: LayerNorm::new(store, &format!("{p}.norm2"), d),
                    ff1: Linear::new(store, init, &format!("{p}.ff1"), d, cfg.ffn),
                    ff2: Linear::new(store, init, &format!("{p}.ff2"), cfg.ffn, d),
                }
            })
            .collect();
        let final_norm = (cfg.layers > 0).then(|| LayerNorm::new(store, "mpm.final_norm", d));
        let to_spatial = Linear::new(store, init, "mpm.to_spatial", d, channels);
        let readout = Linear::new(store, init, "mpm.readout", d, channels);
        Ok(Self { cfg: cfg.clone(), embed, layers, final_norm, to_spatial, readout })
    }

    /// Encode row-major tokens `[B*N, C]` of `B` images laid out on an `h x w` grid.
    pub fn encode_sequence(&self, g: &mut Graph, p: &Bound, tokens: Var, grid: (usize, usize)) -> Result<Var> {
        let (h, w) = grid;
        let n = h * w;
        let rows = g.shape(tokens)[0];
        if n == 0 || rows % n != 0 {
            return Err(Error::shape(format!("{rows} tokens do not tile a {h}x{w} grid")));
        }
        let batch = rows / n;
        let d = self.cfg.hidden;
        let mut x = self.embed.forward(g, p, tokens)?;
        if self.cfg.positional {
            let pe = g.constant(positional_encoding(h, w, d));
            let x3 = g.reshape(x, &[batch, n, d])?;
            let x3 = g.add(x3, pe)?;
            x = g.reshape(x3, &[rows, d])?;
        }
        for layer in &self.layers {
            x = self.layer_forward(g, p, layer, x, batch, n)?;
        }
        match &self.final_norm {
            Some(norm) => norm.forward(g, p, x),
            None => Ok(x),
        }
    }

    fn layer_forward(&self, g: &mut Graph, p: &Bound, l: &EncoderLayer, x: Var, batch: usize, n: usize) -> Result<Var> {
        let (d, heads) = (self.cfg.hidden, self.cfg.heads);
        let dh = d / heads;
        let split = |g: &mut Graph, t: Var| -> Result<Var> {
            let t = g.reshape(t, &[batch, n, heads, dh])?;
            let t = g.permute(t, &[0, 2, 1, 3])?;
            g.reshape(t, &[batch * heads, n, dh])
        };
        let hn = l.norm1.forward(g, p, x)?;
        let q = l.q.forward(g, p, hn)?;
        let q = split(g, q)?;
        let k = l.k.forward(g, p, hn)?;
        let k = split(g, k)?;
        let v = l.v.forward(g, p, hn)?;
        let v = split(g, v)?;
        let scores = g.matmul_t(q, k, false, true)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let att = g.softmax(scores)?;
        let ctx = g.matmul(att, v)?;
        let ctx = g.reshape(ctx, &[batch, heads, n, dh])?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[batch * n, d])?;
        let attn_out = l.out.forward(g, p, ctx)?;
        let x = g.add(x, attn_out)?;

        let hn = l.norm2.forward(g, p, x)?;
        let f = l.ff1.forward(g, p, hn)?;
        let f = g.relu(f);
        let f = l.ff2.forward(g, p, f)?;
        g.add(x, f)
    }

    /// Encoded tokens `[B*N, hidden]` back to a `[B, C, h, w]` feature map.
    pub fn to_spatial(&self, g: &mut Graph, p: &Bound, fd: Var, grid: (usize, usize)) -> Result<Var> {
        let (h, w) = grid;
        let y = self.to_spatial.forward(g, p, fd)?;
        let (rows, c) = (g.shape(y)[0], g.shape(y)[1]);
        let batch = rows / (h * w);
        let y = g.reshape(y, &[batch, h * w, c])?;
        let y = g.permute(y, &[0, 2, 1])?;
        g.reshape(y, &[batch, c, h, w])
    }

    pub fn readout(&self, g: &mut Graph, p: &Bound, fd: Var) -> Result<Var> {
        self.readout.forward(g, p, fd)
    }
}

/// `[B, C, h, w]` feature map to row-major tokens `[B*h*w, C]`.
pub fn flatten_tokens(g: &mut Graph, p5: Var) -> Result<Var> {
    let s = g.shape(p5).to_vec();
    if s.len() != 4 {
        return Err(Error::shape(format!("expected [B, C, h, w], got {s:?}")));
    }
    let (b, c, n) = (s[0], s[1], s[2] * s[3]);
    let t = g.reshape(p5, &[b, c, n])?;
    let t = g.permute(t, &[0, 2, 1])?;
    g.reshape(t, &[b * n, c])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConsistentVariant {
    /// Sum over masked positions only.
    #[default]
    MaskedVectors,
    /// Sum over every position.
    AllVectors,
    /// Read the masked encodings back to backbone channels and compare with the raw features.
    ReconstructP5,
}

impl FromStr for ConsistentVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masked_vectors" => Ok(Self::MaskedVectors),
            "all_vectors" => Ok(Self::AllVectors),
            "reconstruct_p5" => Ok(Self::ReconstructP5),
            other => Err(Error::Config(format!("unknown consistent-loss variant `{other}`"))),
        }
    }
}

/// Squared-distance consistency between masked-input and intact-input encodings.
///
/// Inputs are token rows `[B*N, D]` for `masks.len()` images; the result is the mean
/// over images of each image's sum. With `detach_target` the intact branch (or the raw
/// features for [`ConsistentVariant::ReconstructP5`]) is a constant.
#[allow(clippy::too_many_arguments)]
pub fn consistent_loss(
    g: &mut Graph,
    fd_masked: Var,
    fd: Var,
    masks: &[MaskSpec],
    variant: ConsistentVariant,
    p5_flat: Option<Var>,
    readout: Option<(&MaskedPredictor, &Bound)>,
    detach_target: bool,
) -> Result<Var> {
    if g.shape(fd_masked) != g.shape(fd) {
        return Err(Error::shape(format!(
            "consistent loss: {:?} vs {:?}",
            g.shape(fd_masked),
            g.shape(fd)
        )));
    }
    let batch = masks.len().max(1);
    let n = masks.first().map_or(0, |m| m.n);
    let masked_rows: Vec<usize> =
        masks.iter().enumerate().flat_map(|(b, m)| m.masked.iter().map(move |&i| b * n + i)).collect();
    let (pred, target) = match variant {
        ConsistentVariant::MaskedVectors | ConsistentVariant::AllVectors => (fd_masked, fd),
        ConsistentVariant::ReconstructP5 => {
            let p5 = p5_flat.ok_or(Error::MissingP5)?;
            let (mpm, params) = readout.ok_or(Error::MissingP5)?;
            (mpm.readout(g, params, fd_masked)?, p5)
        }
    };
    if g.shape(pred) != g.shape(target) {
        return Err(Error::shape(format!("consistent loss target {:?} vs {:?}", g.shape(target), g.shape(pred))));
    }
    let target = if detach_target { g.detach(target) } else { target };
    let diff = g.sub(pred, target)?;
    let diff = match variant {
        ConsistentVariant::AllVectors => diff,
        _ => {
            if masked_rows.is_empty() {
                return Ok(g.scalar(0.0));
            }
            g.index_select(diff, &masked_rows)?
        }
    };
    let total = g.l2_norm_sq(diff);
    Ok(g.scale(total, 1.0 / batch as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_rectangle(idx: &[usize], w: usize) -> Option<(usize, usize)> {
        let rows: Vec<usize> = idx.iter().map(|i| i / w).collect();
        let cols: Vec<usize> = idx.iter().map(|i| i % w).collect();
        let (r0, r1) = (*rows.iter().min()?, *rows.iter().max()?);
        let (c0, c1) = (*cols.iter().min()?, *cols.iter().max()?);
        let area = (r1 - r0 + 1) * (c1 - c0 + 1);
        let all_inside = (r0..=r1).all(|r| (c0..=c1).all(|c| idx.contains(&(r * w + c))));
        (area == idx.len() && all_inside).then_some((r1 - r0 + 1, c1 - c0 + 1))
    }

    #[test]
    fn random_mask_has_exact_count() {
        let m = make_mask(100, 0.15, MaskStrategy::Random, (10, 10), 7).unwrap();
        assert_eq!(m.masked.len(), 15);
        let mut dedup = m.masked.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 15);
        assert!(m.masked.iter().all(|&i| i < 100));
    }

    #[test]
    fn block_mask_is_a_square_when_possible() {
        let m = make_mask(64, 0.25, MaskStrategy::Block, (8, 8), 3).unwrap();
        assert_eq!(m.masked.len(), 16);
        assert_eq!(is_rectangle(&m.masked, 8), Some((4, 4)));
    }

    #[test]
    fn zero_ratio_is_empty() {
        for s in [MaskStrategy::Random, MaskStrategy::Block, MaskStrategy::Grid] {
            assert!(make_mask(16, 0.0, s, (4, 4), 0).unwrap().masked.is_empty());
        }
    }

    #[test]
    fn grid_mask_is_a_lattice() {
        let m = make_mask(64, 0.25, MaskStrategy::Grid, (8, 8), 11).unwrap();
        assert_eq!(m.masked.len(), 16);
        let rows: Vec<usize> = m.masked.iter().map(|i| i / 8).collect();
        let cols: Vec<usize> = m.masked.iter().map(|i| i % 8).collect();
        assert!(rows.iter().all(|r| r % 2 == rows[0] % 2));
        assert!(cols.iter().all(|c| c % 2 == cols[0] % 2));
    }

    #[test]
    fn bad_ratio_and_unrealisable_counts() {
        assert!(matches!(make_mask(16, 0.96, MaskStrategy::Random, (4, 4), 0), Err(Error::BadRatio(_))));
        assert!(matches!(make_mask(16, -0.1, MaskStrategy::Random, (4, 4), 0), Err(Error::BadRatio(_))));
        // 3 of 4 cells cannot be one rectangle on a 2x2 grid
        assert!(matches!(make_mask(4, 0.75, MaskStrategy::Block, (2, 2), 0), Err(Error::GridTooSmall { .. })));
        assert!(make_mask(1, 0.5, MaskStrategy::Random, (1, 1), 0).is_err());
    }

    #[test]
    fn masking_is_pure() {
        let a = make_mask(64, 0.3, MaskStrategy::Random, (8, 8), 42).unwrap();
        let b = make_mask(64, 0.3, MaskStrategy::Random, (8, 8), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn apply_mask_zeroes_masked_columns() {
        let mut g = Graph::new();
        let x = g.constant(DenseArray::full(&[2, 3], 1.0));
        let mask = MaskSpec { masked: vec![0], ..MaskSpec::empty((1, 3)) };
        let y = apply_mask(&mut g, x, &mask).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let none = MaskSpec::empty((1, 3));
        let z = apply_mask(&mut g, x, &none).unwrap();
        assert_eq!(g.value(z), g.value(x));
        let wrong = MaskSpec::empty((2, 2));
        assert!(apply_mask(&mut g, x, &wrong).is_err());
    }

    #[test]
    fn all_but_one_masked_keeps_one_column() {
        let mut g = Graph::new();
        let x = g.constant(DenseArray::from_fn(&[2, 4], |i| i as f64 + 1.0));
        let mask = MaskSpec { masked: vec![0, 1, 3], ..MaskSpec::empty((2, 2)) };
        let y = apply_mask(&mut g, x, &mask).unwrap();
        let v = g.value(y).data();
        let nonzero_cols: Vec<usize> = (0..4).filter(|&c| v[c] != 0.0 || v[4 + c] != 0.0).collect();
        assert_eq!(nonzero_cols, vec![2]);
        assert_eq!((v[2], v[6]), (3.0, 7.0));
    }

    #[test]
    fn consistent_loss_examples() {
        let mut g = Graph::new();
        let fd = g.constant(DenseArray::zeros(&[5, 2]));
        let fdm = g.constant(DenseArray::full(&[5, 2], 1.0));
        let mask = MaskSpec { masked: vec![0, 2, 4], ..MaskSpec::empty((1, 5)) };
        let masks = [mask];
        let l = consistent_loss(&mut g, fdm, fd, &masks, ConsistentVariant::MaskedVectors, None, None, true).unwrap();
        assert_eq!(g.value(l).item(), 6.0);
        let l = consistent_loss(&mut g, fdm, fd, &masks, ConsistentVariant::AllVectors, None, None, true).unwrap();
        assert_eq!(g.value(l).item(), 10.0);
        let same = consistent_loss(&mut g, fd, fd, &masks, ConsistentVariant::AllVectors, None, None, true).unwrap();
        assert_eq!(g.value(same).item(), 0.0);
        let missing = consistent_loss(&mut g, fdm, fd, &masks, ConsistentVariant::ReconstructP5, None, None, true);
        assert!(matches!(missing, Err(Error::MissingP5)));
    }

    #[test]
    fn positional_codes_differ_between_cells() {
        let pe = positional_encoding(2, 2, 16);
        let rows: Vec<&[f64]> = pe.data().chunks(16).collect();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(rows[i], rows[j]);
            }
        }
    }
}
