use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PMAP";
const HEADER_LEN: usize = 12;

/// Camera-frame 3D point per pixel, meters. Invalid pixels hold NaN.
///
/// On disk this is `PMAP`, u32 width, u32 height, then width*height*3 f32,
/// all little-endian and row-major. Points are held as f64 in memory, so a
/// map only round-trips bit-exactly once its values came from the f32 file.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMap {
    width: usize,
    height: usize,
    points: Vec<Vector3<f64>>,
}

impl PointMap {
    pub fn new(width: usize, height: usize, points: Vec<Vector3<f64>>) -> Result<Self> {
        if width == 0 || height == 0 || points.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (points.len(), 1),
            });
        }
        // Any NaN invalidates the whole pixel; infinities are not allowed at all.
        let points = points
            .into_iter()
            .map(|p| if p.iter().any(|c| c.is_nan()) { invalid() } else { p })
            .collect::<Vec<_>>();
        if points.iter().any(|p| p.iter().any(|c| c.is_infinite())) {
            return Err(Error::Invariant("point map contains infinite coordinates".into()));
        }
        Ok(Self {
            width,
            height,
            points,
        })
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            points: vec![invalid(); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn get(&self, x: usize, y: usize) -> Option<Vector3<f64>> {
        let p = self.points[y * self.width + x];
        (!p.x.is_nan()).then_some(p)
    }

    pub fn set(&mut self, x: usize, y: usize, p: Option<Vector3<f64>>) {
        self.points[y * self.width + x] = p.filter(|p| p.iter().all(|c| c.is_finite())).unwrap_or_else(invalid);
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        !self.points[y * self.width + x].x.is_nan()
    }

    pub fn valid_count(&self) -> usize {
        self.points.iter().filter(|p| !p.x.is_nan()).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.points.len() * 12);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for p in &self.points {
            for c in p.iter() {
                buf.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err("truncated header".into());
        }
        if &bytes[..4] != MAGIC {
            return Err(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4])));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if width == 0 || height == 0 {
            return Err("zero dimension".into());
        }
        let n = width * height;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < n * 12 {
            return Err(format!("truncated payload: expected {} bytes, found {}", n * 12, payload.len()));
        }
        let mut points = Vec::with_capacity(n);
        for chunk in payload[..n * 12].chunks_exact(12) {
            let c = |i: usize| f32::from_le_bytes(chunk[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
            points.push(Vector3::new(c(0), c(1), c(2)));
        }
        if points.iter().any(|p| p.iter().any(|c| c.is_infinite())) {
            return Err("infinite coordinate".into());
        }
        PointMap::new(width, height, points).map_err(|e| e.to_string())
    }
}

fn invalid() -> Vector3<f64> {
    Vector3::repeat(f64::NAN)
}

pub fn read_point_map(path: &Path) -> Result<PointMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    PointMap::from_bytes(&bytes).map_err(|msg| Error::parse(path, msg))
}

pub fn write_point_map(path: &Path, pm: &PointMap) -> Result<()> {
    fs::write(path, pm.to_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nan_pixel_is_invalid() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 0.0, 1.0),
            Vector3::new(0.0, f64::NAN, 1.0),
            Vector3::new(1.0, 1.0, 1.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pm.bin");
        write_point_map(&p, &PointMap::new(2, 2, pts).unwrap()).unwrap();
        let pm = read_point_map(&p).unwrap();
        assert_eq!(pm.valid_count(), 3);
        assert!(!pm.is_valid(0, 1));
        assert!(pm.get(0, 1).is_none());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = PointMap::invalid(1, 1).to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(PointMap::from_bytes(&bytes).unwrap_err().contains("magic"));
    }

    #[test]
    fn truncated_payload() {
        let bytes = PointMap::invalid(4, 4).to_bytes();
        let err = PointMap::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.contains("truncated"), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(w in 1usize..6, h in 1usize..6, seed in proptest::collection::vec(-1e3f32..1e3, 108), holes in proptest::collection::vec(any::<bool>(), 36)) {
            let pts: Vec<_> = (0..w * h)
                .map(|i| if holes[i] { Vector3::repeat(f64::NAN) } else {
                    Vector3::new(seed[3 * i] as f64, seed[3 * i + 1] as f64, seed[3 * i + 2] as f64)
                })
                .collect();
            let pm = PointMap::new(w, h, pts).unwrap();
            let bytes = pm.to_bytes();
            let back = PointMap::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            for (a, b) in pm.points().iter().zip(back.points()) {
                for (x, y) in a.iter().zip(b.iter()) {
                    prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
                }
            }
        }
    }
}
