use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pgm::{read_pgm, read_points, write_pgm, write_points};
use super::scene::{gen_scene, SceneConfig};
use super::Sample;
use crate::error::{Error, Result};

pub const SPLIT_FILE: &str = "split.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

fn image_path(root: &Path, id: &str) -> PathBuf {
    root.join("images").join(format!("{id}.pgm"))
}

fn points_path(root: &Path, id: &str) -> PathBuf {
    root.join("points").join(format!("{id}.csv"))
}

/// Write `images/<id>.pgm` and `points/<id>.csv` under `root`.
pub fn write_sample(root: &Path, id: &str, s: &Sample) -> Result<()> {
    for sub in ["images", "points"] {
        let d = root.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for p in &s.points {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x < s.width() as f64 && p.y < s.height() as f64) {
            return Err(Error::PointOutOfBounds { x: p.x, y: p.y, w: s.width(), h: s.height() });
        }
    }
    write_pgm(&image_path(root, id), &s.image)?;
    write_points(&points_path(root, id), &s.points)
}

pub fn read_sample(root: &Path, id: &str) -> Result<Sample> {
    let image = read_pgm(&image_path(root, id))?;
    let path = points_path(root, id);
    let points = read_points(&path)?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    if let Some(p) = points.iter().find(|p| !(p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64)) {
        return Err(Error::PointOutOfBounds { x: p.x, y: p.y, w, h });
    }
    Ok(Sample { image, points })
}

/// A dataset directory with its train/val split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<(String, Split)>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(SPLIT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut entries = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => {}
                [id, "train"] => entries.push((id.to_string(), Split::Train)),
                [id, "val"] => entries.push((id.to_string(), Split::Val)),
                _ => return Err(Error::format(&path, offset, format!("expected `<id> train|val`, found `{}`", line.trim_end()))),
            }
            offset += line.len();
        }
        Ok(Self { root: root.to_path_buf(), entries })
    }

    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.entries.iter().filter(|(_, s)| *s == split).map(|(id, _)| id.as_str()).collect()
    }

    pub fn load(&self, split: Split) -> Result<Vec<Sample>> {
        self.ids(split).into_iter().map(|id| read_sample(&self.root, id)).collect()
    }

    pub fn load_all(&self) -> Result<Vec<(String, Sample)>> {
        self.entries.iter().map(|(id, _)| Ok((id.clone(), read_sample(&self.root, id)?))).collect()
    }
}

/// Generate `n_train + n_val` scenes under `root`. Scene `i` is rendered with a seed
/// drawn from stream `i` of `seed`, and the split is a seeded shuffle, so both are
/// stable across runs.
pub fn generate_dataset(root: &Path, scene: &SceneConfig, n_train: usize, n_val: usize, seed: u64) -> Result<Dataset> {
    scene.validate()?;
    let total = n_train + n_val;
    let mut is_val = vec![false; total];
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut split = String::new();
    let mut entries = Vec::with_capacity(total);
    for (i, &val) in is_val.iter().enumerate() {
        let id = format!("{i:04}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let cfg = SceneConfig { seed: rng.next_u64(), ..scene.clone() };
        write_sample(root, &id, &gen_scene(&cfg)?)?;
        let s = if val { Split::Val } else { Split::Train };
        writeln!(split, "{id} {}", s.as_str()).expect("string write");
        entries.push((id, s));
    }
    let path = root.join(SPLIT_FILE);
    fs::write(&path, split).map_err(|e| Error::io(&path, e))?;
    Ok(Dataset { root: root.to_path_buf(), entries })
}
