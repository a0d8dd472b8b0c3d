//! Backbone, feature fusion and density decoder.

use serde::{Deserialize, Serialize};

use crate::clm::ProjectionHead;
use crate::diff::{DenseArray, Graph, Var};
use crate::error::{Error, Result};
use crate::mpm::{flatten_tokens, mask_tokens, EncoderConfig, MaskSpec, MaskedPredictor};
use crate::param::{Bound, Conv, Initializer, ParamStore};

/// Smallest accepted image side; keeps at least a 2x2 grid of coarse vectors.
pub const MIN_SIDE: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Output channels of the five backbone stages; the last entry is the p5 width `C`.
    pub stage_channels: Vec<usize>,
    pub decoder_channels: Vec<usize>,
    pub encoder: EncoderConfig,
    /// Width `D` of the contrastive projection head.
    pub clm_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stage_channels: vec![16, 32, 64, 64, 64],
            decoder_channels: vec![256, 128],
            encoder: EncoderConfig::default(),
            clm_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.len() != 5 || self.stage_channels.contains(&0) {
            return Err(Error::Config(format!(
                "stage_channels must list 5 positive widths, got {:?}",
                self.stage_channels
            )));
        }
        if self.decoder_channels.contains(&0) || self.clm_dim == 0 {
            return Err(Error::Config("decoder and projection widths must be positive".into()));
        }
        self.encoder.validate()
    }

    pub fn p5_channels(&self) -> usize {
        self.stage_channels[4]
    }

    pub fn f8_channels(&self) -> usize {
        self.stage_channels[3]
    }

    pub fn fused_channels(&self) -> usize {
        self.p5_channels() + self.f8_channels()
    }
}

/// Features tapped from the backbone.
#[derive(Clone, Copy, Debug)]
pub struct FeaturePyramid {
    /// `[B, C8, H/8, W/8]`
    pub f8: Var,
    /// `[B, C, H/32, W/32]`
    pub p5: Var,
}

pub fn check_image_size(h: usize, w: usize) -> Result<()> {
    if h % 32 != 0 || w % 32 != 0 || h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::BadSize { h, w });
    }
    Ok(())
}

/// Five-stage CNN: two 3x3 conv + ReLU per stage, each stage followed by a 2x2 max-pool.
/// The 1/8 tap is stage 4 before its pool, p5 the pooled output of stage 5.
pub struct Backbone {
    stages: Vec<[Conv; 2]>,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, channels: &[usize]) -> Self {
        let mut c_in = 1;
        let stages = channels
            .iter()
            .enumerate()
            .map(|(s, &c)| {
                let a = Conv::new(store, init, &format!("backbone.s{}.c1", s + 1), c_in, c, 3);
                let b = Conv::new(store, init, &format!("backbone.s{}.c2", s + 1), c, c, 3);
                c_in = c;
                [a, b]
            })
            .collect();
        Self { stages }
    }

    /// `images: [B, 1, H, W]` with `H`, `W` multiples of 32 and at least 64.
    pub fn encode(&self, g: &mut Graph, p: &Bound, images: Var) -> Result<FeaturePyramid> {
        let s = g.shape(images).to_vec();
        if s.len() != 4 || s[1] != 1 {
            return Err(Error::shape(format!("expected grayscale [B, 1, H, W] images, got {s:?}")));
        }
        check_image_size(s[2], s[3])?;
        let mut x = images;
        let mut f8 = None;
        for (i, [a, b]) in self.stages.iter().enumerate() {
            x = a.forward(g, p, x)?;
            x = g.relu(x);
            x = b.forward(g, p, x)?;
            x = g.relu(x);
            if i == 3 {
                f8 = Some(x);
            }
            x = g.max_pool2d(x, 2)?;
        }
        Ok(FeaturePyramid { f8: f8.expect("five stages"), p5: x })
    }

    pub fn first_conv_weight(&self) -> crate::param::ParamId {
        self.stages[0][0].weight
    }
}

/// Bilinear x4 upsample of the coarse map, concatenated channel-wise with the 1/8 tap.
pub fn fuse_to_f8(g: &mut Graph, fd_spatial: Var, f8: Var) -> Result<Var> {
    let (a, b) = (g.shape(fd_spatial).to_vec(), g.shape(f8).to_vec());
    if a.len() != 4 || b.len() != 4 || a[0] != b[0] || a[2] * 4 != b[2] || a[3] * 4 != b[3] {
        return Err(Error::shape(format!("fuse: coarse map {a:?} does not upsample onto {b:?}")));
    }
    let up = g.upsample_bilinear(fd_spatial, 4)?;
    g.concat(&[up, f8], 1)
}

/// Initial bias of the density output, so the final ReLU starts out active.
pub const OUTPUT_BIAS: f64 = 0.1;

/// 3x3 convs (ReLU) then a 1x1 conv to one channel with a final ReLU.
pub struct DensityDecoder {
    hidden: Vec<Conv>,
    out: Conv,
}

impl DensityDecoder {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, c_in: usize, widths: &[usize]) -> Self {
        let mut c = c_in;
        let hidden = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let conv = Conv::new(store, init, &format!("decoder.c{}", i + 1), c, w, 3);
                c = w;
                conv
            })
            .collect();
        let out = Conv::new(store, init, "decoder.out", c, 1, 1);
        store.get_mut(out.bias).data_mut()[0] = OUTPUT_BIAS;
        Self { hidden, out }
    }

    /// `[B, C_f, h, w] -> [B, 1, h, w]`, non-negative.
    pub fn decode(&self, g: &mut Graph, p: &Bound, fused: Var) -> Result<Var> {
        let mut x = fused;
        for conv in &self.hidden {
            x = conv.forward(g, p, x)?;
            x = g.relu(x);
        }
        let y = self.out.forward(g, p, x)?;
        Ok(g.relu(y))
    }
}

/// Graph handles produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub pyramid: FeaturePyramid,
    /// Intact tokens `[B*N, C]`.
    pub tokens: Var,
    /// Intact-input encoding `[B*N, hidden]`; the counting path uses only this.
    pub fd: Var,
    /// Masked-input encoding, when masks were given.
    pub fd_masked: Option<Var>,
    /// `[B, C + C8, H/8, W/8]`
    pub fused: Var,
    /// `[B, 1, H/8, W/8]`
    pub density: Var,
    pub grid: (usize, usize),
}

pub struct Ldfnet {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    pub backbone: Backbone,
    pub mpm: MaskedPredictor,
    pub decoder: DensityDecoder,
    pub clm_head: ProjectionHead,
}

impl Ldfnet {
    pub fn new(cfg: &ModelConfig, init_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut init = Initializer::new(init_seed);
        let backbone = Backbone::new(&mut params, &mut init, &cfg.stage_channels);
        let mpm = MaskedPredictor::new(&mut params, &mut init, &cfg.encoder, cfg.p5_channels())?;
        let decoder = DensityDecoder::new(&mut params, &mut init, cfg.fused_channels(), &cfg.decoder_channels);
        let clm_head = ProjectionHead::new(&mut params, &mut init, cfg.fused_channels(), cfg.clm_dim);
        Ok(Self { cfg: cfg.clone(), params, backbone, mpm, decoder, clm_head })
    }

    /// Full forward pass. With `masks`, the masked sequence is encoded alongside the
    /// intact one in a single batch; the density map never sees the masked branch.
    pub fn forward(&self, g: &mut Graph, p: &Bound, images: Var, masks: Option<&[MaskSpec]>) -> Result<Forward> {
        let pyramid = self.backbone.encode(g, p, images)?;
        let s = g.shape(pyramid.p5).to_vec();
        let (batch, grid) = (s[0], (s[2], s[3]));
        let n = grid.0 * grid.1;
        let tokens = flatten_tokens(g, pyramid.p5)?;
        let (fd, fd_masked) = match masks {
            Some(masks) => {
                if masks.len() != batch {
                    return Err(Error::shape(format!("{} masks for a batch of {batch}", masks.len())));
                }
                let masked = mask_tokens(g, tokens, masks)?;
                let both = g.concat(&[tokens, masked], 0)?;
                let enc = self.mpm.encode_sequence(g, p, both, grid)?;
                (g.narrow(enc, 0, batch * n)?, Some(g.narrow(enc, batch * n, batch * n)?))
            }
            None => (self.mpm.encode_sequence(g, p, tokens, grid)?, None),
        };
        let fd_spatial = self.mpm.to_spatial(g, p, fd, grid)?;
        let fused = fuse_to_f8(g, fd_spatial, pyramid.f8)?;
        let density = self.decoder.decode(g, p, fused)?;
        Ok(Forward { pyramid, tokens, fd, fd_masked, fused, density, grid })
    }

    /// Inference: density maps `[B, 1, H/8, W/8]` for `[B, 1, H, W]` images.
    pub fn predict(&self, images: &DenseArray) -> Result<DenseArray> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(images.clone());
        let out = self.forward(&mut g, &p, x, None)?;
        Ok(g.value(out.density).clone())
    }
}
