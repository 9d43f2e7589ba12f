use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Per-pixel segmentation labels: 0 background, 1 front of box, 2 rest of box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub const BACKGROUND: u8 = 0;
    pub const FRONT: u8 = 1;
    pub const REST: u8 = 2;

    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch {
                expected: (1, 1),
                found: (width, height),
            });
        }
        if labels.len() != width * height {
            return Err(Error::Invariant(format!(
                "label buffer of {} for a {width}x{height} mask",
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l > Self::REST) {
            return Err(Error::InvalidLabel {
                value: labels[i],
                x: i % width,
                y: i / width,
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
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

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        assert!(label <= Self::REST, "invalid label {label}");
        self.labels[y * self.width + x] = label;
    }

    /// Pixels carrying exactly `label`.
    pub fn select(&self, label: u8) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

/// Foreground/background flags, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (bits.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        check_dims(self.dims(), other.dims())?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    /// Label image with 1 for foreground, for writing as PGM.
    pub fn to_label_mask(&self) -> LabelMask {
        LabelMask {
            width: self.width,
            height: self.height,
            labels: self.bits.iter().map(|&b| b as u8).collect(),
        }
    }
}

pub(crate) fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Ordered label masks of one recording.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSequence {
    pub recording: String,
    frames: Vec<(i64, LabelMask)>,
}

impl MaskSequence {
    /// Sorts by frame index and enforces shared dimensions and unique indices.
    pub fn new(recording: impl Into<String>, mut frames: Vec<(i64, LabelMask)>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        frames.sort_by_key(|(t, _)| *t);
        if let Some(w) = frames.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateRow(format!("mask frame {}", w[0].0)));
        }
        let dims = frames[0].1.dims();
        for (_, m) in &frames[1..] {
            check_dims(dims, m.dims())?;
        }
        Ok(Self {
            recording: recording.into(),
            frames,
        })
    }

    pub fn frames(&self) -> &[(i64, LabelMask)] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].1.dims()
    }

    pub fn frame(&self, t: i64) -> Option<&LabelMask> {
        self.frames
            .binary_search_by_key(&t, |(ti, _)| *ti)
            .ok()
            .map(|i| &self.frames[i].1)
    }
}

/// Reads every `mask_<t>.pgm` in `dir`. Other files are ignored.
pub fn read_mask_sequence(dir: &Path) -> Result<MaskSequence> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(t) = name.to_str().and_then(parse_mask_index) else {
            continue;
        };
        frames.push((t, read_pgm(&entry.path())?));
    }
    let recording = dir
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    MaskSequence::new(recording, frames)
}

fn parse_mask_index(name: &str) -> Option<i64> {
    name.strip_prefix("mask_")?.strip_suffix(".pgm")?.parse().ok()
}

pub fn mask_file_name(t: i64) -> String {
    format!("mask_{t:04}.pgm")
}

pub fn write_mask_sequence(dir: &Path, seq: &MaskSequence) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, m) in seq.frames() {
        write_pgm(&dir.join(mask_file_name(*t)), m)?;
    }
    Ok(())
}

/// Binary (P5) PGM with literal label bytes.
pub fn write_pgm(path: &Path, mask: &LabelMask) -> Result<()> {
    let mut buf = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    buf.extend_from_slice(&mask.labels);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<LabelMask> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|e| match e {
        PgmError::Format(msg) => Error::parse(path, msg),
        PgmError::Label(e) => match e {
            Error::InvalidLabel { value, x, y } => {
                Error::parse(path, format!("invalid label {value} at pixel ({x}, {y})"))
            }
            other => other,
        },
    })
}

enum PgmError {
    Format(String),
    Label(Error),
}

fn parse_pgm(bytes: &[u8]) -> Result<LabelMask, PgmError> {
    let mut pos = 0;
    let mut token = || -> Result<&[u8], PgmError> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::Format("truncated header".into()));
        }
        Ok(&bytes[start..pos])
    };
    if token()? != b"P5" {
        return Err(PgmError::Format("not a binary PGM (expected P5)".into()));
    }
    let mut number = |what: &str| -> Result<usize, PgmError> {
        std::str::from_utf8(token()?)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::Format(format!("bad {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::Format(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data_start = pos + 1;
    let n = width * height;
    if width == 0 || height == 0 {
        return Err(PgmError::Format("zero dimension".into()));
    }
    if bytes.len() < data_start + n {
        return Err(PgmError::Format("truncated raster".into()));
    }
    LabelMask::new(width, height, bytes[data_start..data_start + n].to_vec()).map_err(PgmError::Label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, labels: &[u8]) -> LabelMask {
        LabelMask::new(w, h, labels.to_vec()).unwrap()
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = mask(3, 2, &[0, 1, 2, 2, 1, 0]);
        let p = dir.path().join("m.pgm");
        write_pgm(&p, &m).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), m);
    }

    #[test]
    fn pgm_with_comment_header() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2]);
        let m = parse_pgm(&bytes).ok().unwrap();
        assert_eq!(m.labels(), &[1, 2]);
    }

    #[test]
    fn rejects_label_outside_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mask_0.pgm");
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 5]);
        fs::write(&p, bytes).unwrap();
        let err = read_pgm(&p).unwrap_err().to_string();
        assert!(err.contains("invalid label"), "{err}");
    }

    #[test]
    fn reads_sequence_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let masks = dir.path().join("rec").join("masks");
        fs::create_dir_all(&masks).unwrap();
        for t in [10, 2, 7] {
            write_pgm(&masks.join(format!("mask_{t}.pgm")), &mask(2, 2, &[0, 1, 2, t as u8 % 3])).unwrap();
        }
        fs::write(masks.join("notes.txt"), "ignored").unwrap();
        let seq = read_mask_sequence(&masks).unwrap();
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.recording, "rec");
        let ts: Vec<i64> = seq.frames().iter().map(|(t, _)| *t).collect();
        assert_eq!(ts, vec![2, 7, 10]);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_mask_sequence(dir.path()).unwrap_err();
        assert!(matches!(err, Error::EmptySequence));
        assert_eq!(err.to_string(), "empty sequence");
    }

    #[test]
    fn missing_directory_is_an_error() {
        let err = read_mask_sequence(Path::new("/nonexistent/masks")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn inconsistent_dimensions_rejected() {
        let err = MaskSequence::new("r", vec![(0, mask(2, 2, &[0; 4])), (1, mask(1, 4, &[0; 4]))]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}
