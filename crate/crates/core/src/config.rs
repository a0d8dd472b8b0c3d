//! Run configuration, stored as a single TOML file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clm::{ClmVariant, Dilation};
use crate::data::SceneConfig;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, SinkhornConfig};
use crate::metrics::{MatchMethod, PeakConfig};
use crate::model::ModelConfig;
use crate::mpm::{ConsistentVariant, MaskStrategy, MAX_RATIO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    pub ratio: f64,
    pub strategy: MaskStrategy,
    pub variant: ConsistentVariant,
    /// Treat the intact-input encoding as a constant target.
    pub detach_target: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { ratio: 0.15, strategy: MaskStrategy::Random, variant: ConsistentVariant::MaskedVectors, detach_target: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClmConfig {
    pub variant: ClmVariant,
    pub dilation: Dilation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TvConfig {
    /// Gaussian width, in output cells, applied to the dot grid.
    pub sigma: f64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    /// Steps over which the rate ramps linearly up to `lr`; 0 disables the ramp.
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { lr: 1e-3, warmup_steps: 250, epochs: 30, batch_size: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Matching radius in image pixels.
    pub sigma: f64,
    pub peaks: PeakConfig,
    pub matching: MatchMethod,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { sigma: 8.0, peaks: PeakConfig::default(), matching: MatchMethod::Optimal }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_val: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_train: 200, n_val: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub sinkhorn: SinkhornConfig,
    pub tv: TvConfig,
    pub mask: MaskConfig,
    pub clm: ClmConfig,
    pub optim: OptimConfig,
    pub eval: EvalConfig,
    pub scene: SceneConfig,
    pub dataset: DatasetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            sinkhorn: SinkhornConfig::default(),
            tv: TvConfig::default(),
            mask: MaskConfig::default(),
            clm: ClmConfig::default(),
            optim: OptimConfig::default(),
            eval: EvalConfig::default(),
            scene: SceneConfig::default(),
            dataset: DatasetConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.sinkhorn.validate()?;
        self.scene.validate()?;
        if !(0.0..=MAX_RATIO).contains(&self.mask.ratio) {
            return Err(Error::BadRatio(self.mask.ratio));
        }
        if !(self.tv.sigma >= 0.0 && self.tv.sigma.is_finite()) {
            return Err(Error::Config(format!("tv.sigma must be >= 0, got {}", self.tv.sigma)));
        }
        if !(self.optim.lr > 0.0 && self.optim.lr.is_finite()) {
            return Err(Error::Config(format!("optim.lr must be > 0, got {}", self.optim.lr)));
        }
        if self.optim.batch_size == 0 {
            return Err(Error::Config("optim.batch_size must be >= 1".into()));
        }
        if !(self.eval.sigma > 0.0) {
            return Err(Error::Config(format!("eval.sigma must be > 0, got {}", self.eval.sigma)));
        }
        let k = self.eval.peaks.neighborhood;
        if k < 3 || k % 2 == 0 {
            return Err(Error::Config(format!("eval.peaks.neighborhood must be odd and >= 3, got {k}")));
        }
        Ok(())
    }
}
