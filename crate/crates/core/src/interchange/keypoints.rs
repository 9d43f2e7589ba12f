use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Side, SkeletonSpec};
use crate::error::{Error, Result};

/// Named 3D joints of one frame, meters.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointFrame {
    pub t: i64,
    pub side: Side,
    pub joints: BTreeMap<String, Vector3<f64>>,
}

impl KeypointFrame {
    pub fn joint(&self, name: &str) -> Result<Vector3<f64>> {
        self.joints.get(name).copied().ok_or_else(|| Error::MissingJoint {
            joint: name.to_string(),
            frame: self.t,
        })
    }

    /// Checks every joint `spec` needs for this frame's side is present and finite.
    pub fn validate(&self, spec: &SkeletonSpec) -> Result<()> {
        for name in spec.joint_names(self.side) {
            let p = self.joint(&name)?;
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite { joint: name, frame: self.t });
            }
        }
        for (name, p) in &self.joints {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite {
                    joint: name.clone(),
                    frame: self.t,
                });
            }
        }
        Ok(())
    }
}

#[derive(Deserialize, Serialize)]
struct RawFrame {
    t: i64,
    side: Side,
    joints: BTreeMap<String, [Coord; 3]>,
}

/// Coordinates are JSON numbers; strings are accepted only so that spelled-out
/// non-finite values ("Infinity", "NaN") get a precise error.
#[derive(Deserialize, Serialize, Clone, Copy)]
#[serde(untagged)]
enum Coord {
    Num(f64),
    #[serde(skip_serializing)]
    Text(TextCoord),
}

#[derive(Clone, Copy)]
struct TextCoord(Option<f64>);

impl<'de> Deserialize<'de> for TextCoord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(TextCoord(s.trim().parse::<f64>().ok()))
    }
}

pub fn parse_keypoints(text: &str, spec: &SkeletonSpec, path: &Path) -> Result<Vec<KeypointFrame>> {
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawFrame = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        let mut joints = BTreeMap::new();
        for (name, coords) in raw.joints {
            let mut v = Vector3::zeros();
            for (i, c) in coords.iter().enumerate() {
                v[i] = match c {
                    Coord::Num(x) => *x,
                    Coord::Text(TextCoord(Some(x))) if !x.is_finite() => {
                        return Err(Error::NonFinite { joint: name, frame: raw.t })
                    }
                    Coord::Text(_) => {
                        return Err(Error::parse(
                            path,
                            format!("line {}: coordinate of '{name}' must be a number", lineno + 1),
                        ))
                    }
                };
            }
            joints.insert(name, v);
        }
        let frame = KeypointFrame {
            t: raw.t,
            side: raw.side,
            joints,
        };
        frame.validate(spec)?;
        frames.push(frame);
    }
    frames.sort_by_key(|f| (f.t, f.side));
    if let Some(w) = frames.windows(2).find(|w| (w[0].t, w[0].side) == (w[1].t, w[1].side)) {
        return Err(Error::DuplicateRow(format!("keypoint frame {} ({})", w[0].t, w[0].side)));
    }
    Ok(frames)
}

pub fn read_keypoints(path: &Path, spec: &SkeletonSpec) -> Result<Vec<KeypointFrame>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_keypoints(&text, spec, path)
}

pub fn keypoints_to_jsonl(frames: &[KeypointFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        let raw = RawFrame {
            t: f.t,
            side: f.side,
            joints: f
                .joints
                .iter()
                .map(|(k, v)| (k.clone(), [Coord::Num(v.x), Coord::Num(v.y), Coord::Num(v.z)]))
                .collect(),
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&raw).expect("frame serializes"));
    }
    out
}

pub fn write_keypoints(path: &Path, frames: &[KeypointFrame]) -> Result<()> {
    fs::write(path, keypoints_to_jsonl(frames)).map_err(|e| Error::io(path, e))
}
