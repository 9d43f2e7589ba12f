//! Gravity alignment of keypoints and the 18 per-frame joint angles.
//!
//! Angles are unsigned, in degrees, in [0, 180]. Triplets give the interior
//! angle at the middle joint; shoulder and wrist compare two segments; trunk
//! compares pelvis->neck against straight up, so upright is 0.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::interchange::{KeypointFrame, Resolved, Side, SkeletonSpec, ANGLE_NAMES, N_ANGLES, N_FINGER};
use crate::par;

/// Downward gravity in the aligned frame.
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct AngleFrame {
    pub t: i64,
    pub side: Side,
    /// Degrees, in [`ANGLE_NAMES`] order.
    pub angles: [f64; N_ANGLES],
}

impl AngleFrame {
    pub fn get(&self, name: &str) -> Option<f64> {
        ANGLE_NAMES.iter().position(|n| *n == name).map(|i| self.angles[i])
    }

    pub fn fingers(&self) -> &[f64] {
        &self.angles[..N_FINGER]
    }

    /// Shoulder, elbow, wrist, trunk.
    pub fn arm(&self) -> &[f64] {
        &self.angles[N_FINGER..]
    }
}

/// Left-multiplies every joint by `rot`. No temporal processing.
pub fn align_to_gravity(frames: &[KeypointFrame], rot: &Matrix3<f64>) -> Vec<KeypointFrame> {
    par::map(frames, |f| KeypointFrame {
        t: f.t,
        side: f.side,
        joints: f.joints.iter().map(|(k, p)| (k.clone(), rot * p)).collect(),
    })
}

/// Angle between two vectors in degrees.
///
/// Uses `atan2(|u x v|, u . v)`, which equals the clamped arccos of the
/// cosine but keeps full precision near 0 and 180 degrees.
pub fn angle_between(u: &Vector3<f64>, v: &Vector3<f64>) -> Result<f64> {
    angle_between_named(u, v, "", "u", "v")
}

fn angle_between_named(u: &Vector3<f64>, v: &Vector3<f64>, angle: &str, seg_u: &str, seg_v: &str) -> Result<f64> {
    for (vec, seg) in [(u, seg_u), (v, seg_v)] {
        if vec.norm_squared() == 0.0 {
            return Err(Error::DegenerateSegment {
                angle: angle.to_string(),
                segment: seg.to_string(),
            });
        }
    }
    Ok(u.cross(v).norm().atan2(u.dot(v)).to_degrees())
}

/// Interior angle at `b` between `b->a` and `b->c`, in degrees.
pub fn triplet_angle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Result<f64> {
    angle_between_named(&(a - b), &(c - b), "", "B->A", "B->C")
}

/// Computes angles for frames of either side, resolving the skeleton once per side.
pub struct AngleSolver {
    left: Vec<Resolved>,
    right: Vec<Resolved>,
}

impl AngleSolver {
    pub fn new(spec: &SkeletonSpec) -> Self {
        Self {
            left: spec.resolved(Side::Left),
            right: spec.resolved(Side::Right),
        }
    }

    pub fn angles(&self, frame: &KeypointFrame) -> Result<AngleFrame> {
        let defs = match frame.side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        };
        let mut angles = [0.0; N_ANGLES];
        for (i, def) in defs.iter().enumerate() {
            let name = ANGLE_NAMES[i];
            let seg = |s: &[String; 2]| -> Result<(Vector3<f64>, String)> {
                Ok((frame.joint(&s[1])? - frame.joint(&s[0])?, format!("{}->{}", s[0], s[1])))
            };
            angles[i] = match def {
                Resolved::Triplet([a, b, c]) => {
                    let (u, su) = seg(&[b.clone(), a.clone()])?;
                    let (v, sv) = seg(&[b.clone(), c.clone()])?;
                    angle_between_named(&u, &v, name, &su, &sv)?
                }
                Resolved::Vectors(a, b) => {
                    let (u, su) = seg(a)?;
                    let (v, sv) = seg(b)?;
                    angle_between_named(&u, &v, name, &su, &sv)?
                }
                Resolved::Gravity(a) => {
                    let (u, su) = seg(a)?;
                    angle_between_named(&u, &(-GRAVITY), name, &su, "up")?
                }
            };
        }
        Ok(AngleFrame {
            t: frame.t,
            side: frame.side,
            angles,
        })
    }

    pub fn angles_batch(&self, frames: &[KeypointFrame]) -> Result<Vec<AngleFrame>> {
        par::try_map(frames, |f| self.angles(f))
    }
}

/// All 18 angles of a gravity-aligned frame.
pub fn frame_angles(frame: &KeypointFrame, spec: &SkeletonSpec) -> Result<AngleFrame> {
    AngleSolver::new(spec).angles(frame)
}
