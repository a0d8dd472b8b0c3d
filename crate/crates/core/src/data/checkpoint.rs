use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::param::ParamStore;

pub const WEIGHTS_FILE: &str = "model.bin";
pub const MANIFEST_FILE: &str = "model.manifest";
const MANIFEST_HEADER: &str = "# name shape byte_offset";

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

/// Write every parameter as little-endian f64 to `model.bin`, in store order, and
/// one `name shape offset` line per parameter to `model.manifest`.
pub fn save_checkpoint(store: &ParamStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bin = Vec::with_capacity(store.num_scalars() * 8);
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    for id in store.ids() {
        let v = store.get(id);
        writeln!(manifest, "{} {} {}", store.name(id), shape_str(v.shape()), bin.len()).expect("string write");
        for x in v.data() {
            bin.extend_from_slice(&x.to_le_bytes());
        }
    }
    let (bp, mp) = (dir.join(WEIGHTS_FILE), dir.join(MANIFEST_FILE));
    fs::write(&bp, bin).map_err(|e| Error::io(&bp, e))?;
    fs::write(&mp, manifest).map_err(|e| Error::io(&mp, e))
}

/// Overwrite the weights of `store` from `dir`. The manifest must list exactly the
/// parameters of `store` with the same shapes.
pub fn load_checkpoint(store: &mut ParamStore, dir: &Path) -> Result<()> {
    let (bp, mp) = (dir.join(WEIGHTS_FILE), dir.join(MANIFEST_FILE));
    let manifest = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let bin = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
    let mut lines = Vec::new();
    let mut offset = 0;
    for line in manifest.split_inclusive('\n') {
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            let f: Vec<&str> = t.split_whitespace().collect();
            let [name, shape, at] = f.as_slice() else {
                return Err(Error::format(&mp, offset, format!("expected `name shape offset`, found `{t}`")));
            };
            let at: usize = at.parse().map_err(|_| Error::format(&mp, offset, format!("bad offset `{at}`")))?;
            lines.push((name.to_string(), shape.to_string(), at));
        }
        offset += line.len();
    }
    if lines.len() != store.len() {
        return Err(Error::ManifestMismatch(format!(
            "checkpoint has {} parameters, model expects {}",
            lines.len(),
            store.len()
        )));
    }
    let mut expected_at = 0;
    for (id, (name, shape, at)) in store.ids().zip(&lines) {
        let want = shape_str(store.get(id).shape());
        if name != store.name(id) || *shape != want {
            return Err(Error::ManifestMismatch(format!(
                "checkpoint entry `{name} {shape}` does not match model parameter `{} {want}`",
                store.name(id)
            )));
        }
        if *at != expected_at {
            return Err(Error::ManifestMismatch(format!("`{name}` stored at byte {at}, expected {expected_at}")));
        }
        expected_at += store.get(id).len() * 8;
    }
    if bin.len() != expected_at {
        return Err(Error::format(&bp, bin.len().min(expected_at), format!("expected {expected_at} bytes, found {}", bin.len())));
    }
    let ids: Vec<_> = store.ids().collect();
    for (id, (_, _, at)) in ids.into_iter().zip(&lines) {
        let dst = store.get_mut(id).data_mut();
        for (k, x) in dst.iter_mut().enumerate() {
            let b = at + k * 8;
            *x = f64::from_le_bytes(bin[b..b + 8].try_into().expect("8 bytes"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::DenseArray;
    use crate::model::{Ldfnet, ModelConfig};
    use crate::mpm::EncoderConfig;

    fn cfg() -> ModelConfig {
        ModelConfig {
            stage_channels: vec![4, 4, 8, 8, 8],
            decoder_channels: vec![8],
            encoder: EncoderConfig { layers: 1, hidden: 8, heads: 2, ffn: 8, positional: true },
            clm_dim: 4,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let src = Ldfnet::new(&cfg(), 1).unwrap();
        save_checkpoint(&src.params, &a).unwrap();
        let mut dst = Ldfnet::new(&cfg(), 2).unwrap();
        load_checkpoint(&mut dst.params, &a).unwrap();
        save_checkpoint(&dst.params, &b).unwrap();
        for f in [WEIGHTS_FILE, MANIFEST_FILE] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        }
        let probe = DenseArray::from_fn(&[1, 1, 64, 64], |i| (i % 17) as f64 / 16.0);
        assert_eq!(src.predict(&probe).unwrap(), dst.predict(&probe).unwrap());
    }

    #[test]
    fn different_channels_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&Ldfnet::new(&cfg(), 1).unwrap().params, dir.path()).unwrap();
        let mut other = cfg();
        other.stage_channels = vec![4, 4, 8, 8, 16];
        let mut m = Ldfnet::new(&other, 1).unwrap();
        assert!(matches!(load_checkpoint(&mut m.params, dir.path()), Err(Error::ManifestMismatch(_))));
        let mut deeper = cfg();
        deeper.decoder_channels = vec![8, 8];
        let mut m = Ldfnet::new(&deeper, 1).unwrap();
        assert!(matches!(load_checkpoint(&mut m.params, dir.path()), Err(Error::ManifestMismatch(_))));
    }

    #[test]
    fn truncated_weights() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Ldfnet::new(&cfg(), 1).unwrap();
        save_checkpoint(&m.params, dir.path()).unwrap();
        let p = dir.path().join(WEIGHTS_FILE);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&mut m.params, dir.path()), Err(Error::Format { .. })));
    }
}
