use std::fs;
use std::path::Path;

use super::Point;
use crate::diff::DenseArray;
use crate::error::{Error, Result};

/// Write `[H, W]` values in `[0, 1]` as an 8-bit binary PGM.
pub fn write_pgm(path: &Path, image: &DenseArray) -> Result<()> {
    let s = image.shape();
    if s.len() != 2 {
        return Err(Error::shape(format!("PGM images are 2-D, got {s:?}")));
    }
    let mut bytes = format!("P5\n{} {}\n255\n", s[1], s[0]).into_bytes();
    bytes.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<DenseArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|(offset, msg)| Error::format(path, offset, msg))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, (usize, String)> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err((start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or((start, format!("{what} out of range")))
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<DenseArray, (usize, String)> {
    if !bytes.starts_with(b"P5") {
        return Err((0, "missing P5 magic".into()));
    }
    let mut c = Cursor { bytes, pos: 2 };
    let w = c.number("width")?;
    let h = c.number("height")?;
    let maxval = c.number("maxval")?;
    if w == 0 || h == 0 {
        return Err((c.pos, format!("empty {w}x{h} image")));
    }
    if maxval == 0 || maxval > 255 {
        return Err((c.pos, format!("unsupported maxval {maxval}")));
    }
    if c.pos >= bytes.len() || !bytes[c.pos].is_ascii_whitespace() {
        return Err((c.pos, "expected a single whitespace byte after maxval".into()));
    }
    let start = c.pos + 1;
    let need = w * h;
    let data = &bytes[start..];
    if data.len() < need {
        return Err((bytes.len(), format!("truncated pixel data: {} of {need} bytes", data.len())));
    }
    if data.len() > need {
        return Err((start + need, format!("{} trailing bytes", data.len() - need)));
    }
    let scale = maxval as f64;
    let values = data.iter().map(|&b| (b as f64).min(scale) / scale).collect();
    Ok(DenseArray::new(vec![h, w], values).expect("w*h pixels"))
}

/// Write points as CSV with header `x,y`.
pub fn write_points(path: &Path, points: &[Point]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    wtr.write_record(["x", "y"]).map_err(|e| csv_error(path, e))?;
    for p in points {
        wtr.write_record([p.x.to_string(), p.y.to_string()]).map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_points(path: &Path) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["x", "y"] {
        return Err(Error::format(path, 0, format!("expected header `x,y`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let offset = rec.position().map_or(0, |p| p.byte() as usize);
        let field = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::format(path, offset, format!("bad coordinate `{raw}`"))),
            }
        };
        points.push(Point::new(field(0)?, field(1)?));
    }
    Ok(points)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, offset, format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let img = DenseArray::from_fn(&[3, 5], |i| ((i * 37) % 256) as f64 / 255.0);
        write_pgm(&p, &img).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), img);
    }

    #[test]
    fn pgm_with_comment_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        fs::write(&p, b"P5\n# made by hand\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(read_pgm(&p).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn truncated_pgm_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pgm");
        fs::write(&p, b"P5\n4 4\n255\n\x01\x02\x03").unwrap();
        match read_pgm(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 14),
            other => panic!("{other:?}"),
        }
        fs::write(&p, b"P6\n4 4\n255\n").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Format { offset: 0, .. })));
        fs::write(&p, b"P5\n4").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_pgm(Path::new("/nonexistent/x.pgm")), Err(Error::Io { .. })));
    }

    #[test]
    fn points_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let pts = vec![Point::new(0.1 + 0.2, 1.0 / 3.0), Point::new(63.999999999, 1e-300)];
        write_points(&p, &pts).unwrap();
        assert_eq!(read_points(&p).unwrap(), pts);
        write_points(&p, &[]).unwrap();
        assert!(read_points(&p).unwrap().is_empty());
        assert_eq!(fs::read_to_string(&p).unwrap(), "x,y\n");
    }

    #[test]
    fn bad_points_report_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        fs::write(&p, "x,y\n1,2\n3,oops\n").unwrap();
        match read_points(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_points(&p), Err(Error::Format { .. })));
        fs::write(&p, "x,y\n1,2,3\n").unwrap();
        assert!(matches!(read_points(&p), Err(Error::Format { .. })));
    }
}
