//! Synthetic scenes, dataset files and checkpoints.

mod checkpoint;
mod dataset;
mod pgm;
mod scene;

pub use checkpoint::{load_checkpoint, save_checkpoint, MANIFEST_FILE, WEIGHTS_FILE};
pub use dataset::{generate_dataset, read_sample, write_sample, Dataset, Split};
pub use pgm::{read_pgm, read_points, write_pgm, write_points};
pub use scene::{band_range, gen_scene, DensityBand, SceneConfig};

use crate::diff::DenseArray;
use crate::error::{Error, Result};

/// Head centre in image pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2)).sqrt()
    }
}

/// One annotated grayscale image. `image` has shape `[H, W]` with values `k / 255`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: DenseArray,
    pub points: Vec<Point>,
}

impl Sample {
    pub fn height(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// Window `[top, top+h) x [left, left+w)`; points outside it are dropped.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Sample> {
        let (ih, iw) = (self.height(), self.width());
        if h == 0 || w == 0 || top + h > ih || left + w > iw {
            return Err(Error::Config(format!("crop {h}x{w} at ({top}, {left}) exceeds {ih}x{iw} image")));
        }
        let src = self.image.data();
        let mut data = Vec::with_capacity(h * w);
        for r in top..top + h {
            data.extend_from_slice(&src[r * iw + left..r * iw + left + w]);
        }
        let points = self
            .points
            .iter()
            .map(|p| Point::new(p.x - left as f64, p.y - top as f64))
            .filter(|p| p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64)
            .collect();
        Ok(Sample { image: DenseArray::new(vec![h, w], data)?, points })
    }

    /// Crop at a position drawn from `rng`.
    pub fn random_crop(&self, h: usize, w: usize, rng: &mut impl rand::Rng) -> Result<Sample> {
        if h > self.height() || w > self.width() {
            return Err(Error::Config(format!("crop {h}x{w} larger than {}x{} image", self.height(), self.width())));
        }
        let top = rng.random_range(0..=self.height() - h);
        let left = rng.random_range(0..=self.width() - w);
        self.crop(top, left, h, w)
    }
}

/// Stack `[H, W]` images into a `[B, 1, H, W]` batch.
pub fn stack_images(samples: &[&Sample]) -> Result<DenseArray> {
    let first = samples.first().ok_or(Error::EmptyInput)?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if s.height() != h || s.width() != w {
            return Err(Error::shape(format!("batch mixes {h}x{w} and {}x{} images", s.height(), s.width())));
        }
        data.extend_from_slice(s.image.data());
    }
    DenseArray::new(vec![samples.len(), 1, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample() -> Sample {
        let image = DenseArray::from_fn(&[8, 10], |i| (i % 256) as f64 / 255.0);
        Sample { image, points: vec![Point::new(1.5, 1.5), Point::new(6.0, 5.25), Point::new(9.5, 7.5)] }
    }

    #[test]
    fn crop_shifts_points_and_pixels() {
        let s = sample();
        let c = s.crop(2, 4, 4, 4).unwrap();
        assert_eq!(c.image.shape(), &[4, 4]);
        assert_eq!(c.image.data()[0], s.image.data()[2 * 10 + 4]);
        assert_eq!(c.image.data()[15], s.image.data()[5 * 10 + 7]);
        assert_eq!(c.points, vec![Point::new(2.0, 3.25)]);
    }

    #[test]
    fn full_crop_is_identity() {
        let s = sample();
        assert_eq!(s.crop(0, 0, 8, 10).unwrap(), s);
    }

    #[test]
    fn crop_out_of_range() {
        assert!(sample().crop(5, 0, 4, 4).is_err());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        assert!(sample().random_crop(9, 4, &mut rng).is_err());
        let c = sample().random_crop(4, 4, &mut rng).unwrap();
        assert!(c.points.iter().all(|p| p.x < 4.0 && p.y < 4.0));
    }
}
