use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Point, Sample};
use crate::diff::DenseArray;
use crate::error::{Error, Result};

/// Image area the band limits are quoted for.
const REFERENCE_AREA: f64 = 128.0 * 128.0;
const BASE_LEVEL: f64 = 0.35;
const PLACEMENT_TRIES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityBand {
    Low,
    Medium,
    High,
}

/// Inclusive count range of `band` on an `h x w` image. Bands are disjoint and
/// contiguous: low 0-10, medium 11-60, high 61-200 at 128x128, scaled by area.
pub fn band_range(band: DensityBand, h: usize, w: usize) -> (usize, usize) {
    let f = (h * w) as f64 / REFERENCE_AREA;
    let low = (10.0 * f).round() as usize;
    let med = ((60.0 * f).round() as usize).max(low + 1);
    let high = ((200.0 * f).round() as usize).max(med + 1);
    match band {
        DensityBand::Low => (0, low),
        DensityBand::Medium => (low + 1, med),
        DensityBand::High => (med + 1, high),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Inclusive head count range.
    pub count_range: [usize; 2],
    /// Head disc radius range in pixels.
    pub head_radius: [f64; 2],
    pub head_amplitude: f64,
    /// Minimum distance between two heads in pixels.
    pub min_spacing: f64,
    pub clutter_count: [usize; 2],
    pub clutter_radius: [f64; 2],
    pub clutter_amplitude: f64,
    pub texture_amplitude: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            count_range: [0, 40],
            head_radius: [1.5, 3.0],
            head_amplitude: 0.55,
            min_spacing: 4.0,
            clutter_count: [1, 4],
            clutter_radius: [5.0, 9.0],
            clutter_amplitude: 0.25,
            texture_amplitude: 0.1,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn with_band(mut self, band: DensityBand) -> Self {
        let (lo, hi) = band_range(band, self.height, self.width);
        self.count_range = [lo, hi];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.height == 0 || self.width == 0 || self.height % 32 != 0 || self.width % 32 != 0 {
            return bad(format!("scene size {}x{} must be a positive multiple of 32", self.height, self.width));
        }
        if self.count_range[0] > self.count_range[1] {
            return bad(format!("count_range {:?} is empty", self.count_range));
        }
        if self.clutter_count[0] > self.clutter_count[1] {
            return bad(format!("clutter_count {:?} is empty", self.clutter_count));
        }
        for (name, r) in [("head_radius", self.head_radius), ("clutter_radius", self.clutter_radius)] {
            if !(r[0] >= 1.0 && r[0] <= r[1] && r[1].is_finite()) {
                return bad(format!("{name} {r:?} must satisfy 1 <= min <= max"));
            }
        }
        for (name, v) in [
            ("head_amplitude", self.head_amplitude),
            ("clutter_amplitude", self.clutter_amplitude),
            ("texture_amplitude", self.texture_amplitude),
            ("min_spacing", self.min_spacing),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        let usable = (self.height as f64 - 2.0) * (self.width as f64 - 2.0);
        if self.count_range[1] as f64 * self.min_spacing.powi(2) > 0.5 * usable {
            return bad(format!(
                "{} heads at spacing {} do not fit a {}x{} image",
                self.count_range[1], self.min_spacing, self.height, self.width
            ));
        }
        Ok(())
    }
}

struct Wave {
    amp: f64,
    fx: f64,
    fy: f64,
    phase: f64,
}

struct Blob {
    at: Point,
    radius: f64,
    amp: f64,
}

/// Render one scene; identical configs give bit-identical samples.
pub fn gen_scene(cfg: &SceneConfig) -> Result<Sample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (h, w) = (cfg.height as f64, cfg.width as f64);

    let waves: Vec<Wave> = (0..3)
        .map(|_| Wave {
            amp: cfg.texture_amplitude / 3.0,
            fx: rng.random_range(0..=3) as f64,
            fy: rng.random_range(0..=3) as f64,
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();

    let n_clutter = rng.random_range(cfg.clutter_count[0]..=cfg.clutter_count[1]);
    let clutter: Vec<Blob> = (0..n_clutter)
        .map(|_| Blob {
            at: Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h)),
            radius: rng.random_range(cfg.clutter_radius[0]..=cfg.clutter_radius[1]),
            amp: cfg.clutter_amplitude * rng.random_range(0.6..=1.0),
        })
        .collect();

    let n = rng.random_range(cfg.count_range[0]..=cfg.count_range[1]);
    let mut points: Vec<Point> = Vec::with_capacity(n);
    let mut heads = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let p = Point::new(rng.random_range(1.0..w - 1.0), rng.random_range(1.0..h - 1.0));
            if points.iter().all(|q| q.dist(p) >= cfg.min_spacing) {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or_else(|| Error::Config(format!("could not place {n} heads at spacing {}", cfg.min_spacing)))?;
        points.push(p);
        heads.push(Blob {
            at: p,
            radius: rng.random_range(cfg.head_radius[0]..=cfg.head_radius[1]),
            amp: cfg.head_amplitude * rng.random_range(0.8..=1.0),
        });
    }

    let image = DenseArray::from_fn(&[cfg.height, cfg.width], |i| {
        let (x, y) = ((i % cfg.width) as f64 + 0.5, (i / cfg.width) as f64 + 0.5);
        let mut v = BASE_LEVEL;
        for t in &waves {
            v += t.amp * (2.0 * PI * (t.fx * x / w + t.fy * y / h) + t.phase).sin();
        }
        for b in &clutter {
            let d2 = (x - b.at.x).powi(2) + (y - b.at.y).powi(2);
            v -= b.amp * (-d2 / (2.0 * b.radius * b.radius)).exp();
        }
        for b in &heads {
            let d = ((x - b.at.x).powi(2) + (y - b.at.y).powi(2)).sqrt();
            v += b.amp / (1.0 + ((d - b.radius) / 0.6).exp());
        }
        (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
    });
    Ok(Sample { image, points })
}
