//! COLMAP `points3D.txt` / `points3D.bin`. Only ids, positions and colours
//! are kept; reprojection errors and tracks are skipped (and written empty).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColmapPoints {
    pub ids: Vec<u64>,
    pub positions: Vec<Vector3<f64>>,
    pub colors: Vec<[u8; 3]>,
}

impl ColmapPoints {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Reads the binary layout when the extension is `.bin`, text otherwise.
pub fn read_colmap_points(path: &Path) -> Result<ColmapPoints> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "bin") {
        parse_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| Error::Colmap {
            location: format!("byte {}", e.utf8_error().valid_up_to()),
            message: "file is not UTF-8 text".into(),
        })?;
        parse_text(&text)
    }
}

pub fn parse_text(text: &str) -> Result<ColmapPoints> {
    let mut out = ColmapPoints::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Colmap {
            location: format!("line {}", i + 1),
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 8 {
            return Err(err(format!("expected at least 8 fields, found {}", fields.len())));
        }
        if (fields.len() - 8) % 2 != 0 {
            return Err(err("track has an odd number of entries".into()));
        }
        let id = fields[0].parse::<u64>().map_err(|e| err(format!("POINT3D_ID {:?}: {e}", fields[0])))?;
        let mut xyz = [0.0; 3];
        for (k, v) in xyz.iter_mut().enumerate() {
            *v = fields[1 + k]
                .parse::<f64>()
                .map_err(|e| err(format!("coordinate {:?}: {e}", fields[1 + k])))?;
        }
        let mut rgb = [0u8; 3];
        for (k, v) in rgb.iter_mut().enumerate() {
            *v = fields[4 + k]
                .parse::<u8>()
                .map_err(|e| err(format!("colour {:?}: {e}", fields[4 + k])))?;
        }
        fields[7].parse::<f64>().map_err(|e| err(format!("error {:?}: {e}", fields[7])))?;
        out.ids.push(id);
        out.positions.push(Vector3::from(xyz));
        out.colors.push(rgb);
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| Error::Colmap {
            location: format!("byte {}", self.pos),
            message: format!("truncated file while reading {what}"),
        })?;
        self.pos = end;
        Ok(chunk.try_into().unwrap())
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(what)?))
    }
}

pub fn parse_binary(bytes: &[u8]) -> Result<ColmapPoints> {
    let mut c = Cursor { bytes, pos: 0 };
    let count = c.u64("point count")?;
    // Each record is at least 43 bytes; reject counts the file cannot hold.
    if count > (bytes.len() as u64) / 43 + 1 {
        return Err(Error::Colmap {
            location: "byte 0".into(),
            message: format!("point count {count} exceeds what a {}-byte file can hold", bytes.len()),
        });
    }
    let mut out = ColmapPoints::default();
    for _ in 0..count {
        let id = c.u64("POINT3D_ID")?;
        let xyz = [c.f64("X")?, c.f64("Y")?, c.f64("Z")?];
        let rgb = c.take::<3>("RGB")?;
        c.f64("ERROR")?;
        let track = c.u64("track length")?;
        let skip = track.checked_mul(8).and_then(|s| usize::try_from(s).ok());
        match skip.and_then(|s| c.pos.checked_add(s)).filter(|&end| end <= bytes.len()) {
            Some(end) => c.pos = end,
            None => {
                return Err(Error::Colmap {
                    location: format!("byte {}", c.pos),
                    message: format!("track of length {track} runs past the end of the file"),
                })
            }
        }
        out.ids.push(id);
        out.positions.push(Vector3::from(xyz));
        out.colors.push(rgb);
    }
    if c.pos != bytes.len() {
        return Err(Error::Colmap {
            location: format!("byte {}", c.pos),
            message: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    Ok(out)
}

pub fn points3d_text(points: &ColmapPoints) -> String {
    let mut s = String::from(
        "# 3D point list with one line of data per point:\n\
         #   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n",
    );
    s.push_str(&format!("# Number of points: {}, mean track length: 0\n", points.len()));
    for ((id, p), c) in points.ids.iter().zip(&points.positions).zip(&points.colors) {
        s.push_str(&format!("{id} {} {} {} {} {} {} 0\n", p.x, p.y, p.z, c[0], c[1], c[2]));
    }
    s
}

pub fn points3d_binary(points: &ColmapPoints) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + points.len() * 51);
    out.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for ((id, p), c) in points.ids.iter().zip(&points.positions).zip(&points.colors) {
        out.extend_from_slice(&id.to_le_bytes());
        for v in p.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(c);
        out.extend_from_slice(&0f64.to_le_bytes());
        out.extend_from_slice(&0u64.to_le_bytes());
    }
    out
}

pub fn write_points3d_text(path: &Path, points: &ColmapPoints) -> Result<()> {
    fs::write(path, points3d_text(points)).map_err(|e| Error::io(path, e))
}

pub fn write_points3d_binary(path: &Path, points: &ColmapPoints) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&points3d_binary(points)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_is_empty() {
        let pts = parse_text("# 3D point list\n# Number of points: 0\n").unwrap();
        assert!(pts.is_empty());
        assert!(parse_binary(&0u64.to_le_bytes()).unwrap().is_empty());
    }

    #[test]
    fn text_with_track() {
        let pts = parse_text("7 1.5 -2 3e-1 10 20 30 0.25 4 11 5 12\n").unwrap();
        assert_eq!(pts.ids, vec![7]);
        assert_eq!(pts.positions[0], Vector3::new(1.5, -2.0, 0.3));
        assert_eq!(pts.colors[0], [10, 20, 30]);
    }

    #[test]
    fn malformed_text_reports_line() {
        let err = parse_text("# c\n1 0 0 0 0 0 0 0\n2 0 x 0 0 0 0 0\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(parse_text("1 0 0 0 0 0 0 0 5\n").is_err());
        assert!(parse_text("1 0 0 0 0 0 300 0\n").is_err());
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let pts = ColmapPoints {
            ids: vec![1, 2],
            positions: vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(-1.0, 2.0, 1e-9)],
            colors: vec![[1, 2, 3], [4, 5, 6]],
        };
        let bytes = points3d_binary(&pts);
        assert_eq!(parse_binary(&bytes).unwrap(), pts);
        let err = parse_binary(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("byte"), "{err}");
    }

    #[test]
    fn writers_agree() {
        let pts = ColmapPoints {
            ids: vec![3, 9, 12],
            positions: vec![
                Vector3::new(0.1, 0.2, 0.3),
                Vector3::new(-1.25, 1e-7, 123.456),
                Vector3::new(std::f64::consts::PI, -0.0, 5.0),
            ],
            colors: vec![[255, 0, 0], [0, 255, 0], [7, 8, 9]],
        };
        assert_eq!(parse_text(&points3d_text(&pts)).unwrap(), pts);
        assert_eq!(parse_binary(&points3d_binary(&pts)).unwrap(), pts);
    }
}
