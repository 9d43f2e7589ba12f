//! Forward kinematics: builds keypoints that realize prescribed joint angles.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calib::rot_x;
use crate::error::{Error, Result};
use crate::interchange::{angle_index, KeypointFrame, Side, SkeletonSpec, N_ANGLES};
use crate::kinematics::AngleFrame;

/// Segment lengths in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentLengths {
    pub trunk: f64,
    pub shoulder_offset: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    /// Wrist to each finger MCP, index..pinky.
    pub metacarpal: [f64; 4],
    /// Proximal, middle, distal phalanx, index..pinky.
    pub phalanges: [[f64; 3]; 4],
    pub thumb_cmc: f64,
    pub thumb_metacarpal: f64,
    pub thumb_phalanges: [f64; 2],
}

impl Default for SegmentLengths {
    fn default() -> Self {
        Self {
            trunk: 0.50,
            shoulder_offset: 0.18,
            upper_arm: 0.30,
            forearm: 0.26,
            metacarpal: [0.085, 0.080, 0.075, 0.070],
            phalanges: [
                [0.040, 0.025, 0.020],
                [0.045, 0.028, 0.022],
                [0.042, 0.026, 0.021],
                [0.033, 0.020, 0.018],
            ],
            thumb_cmc: 0.025,
            thumb_metacarpal: 0.045,
            thumb_phalanges: [0.032, 0.026],
        }
    }
}

impl SegmentLengths {
    fn all(&self) -> impl Iterator<Item = f64> + '_ {
        [self.trunk, self.shoulder_offset, self.upper_arm, self.forearm, self.thumb_cmc, self.thumb_metacarpal]
            .into_iter()
            .chain(self.metacarpal)
            .chain(self.phalanges.iter().flatten().copied())
            .chain(self.thumb_phalanges)
    }
}

/// Per-frame target angles (degrees, [`crate::interchange::ANGLE_NAMES`] order)
/// for one side. Directions the angles leave free are drawn from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMotion {
    pub side: Side,
    pub segments: SegmentLengths,
    pub targets: Vec<[f64; N_ANGLES]>,
    pub seed: u64,
}

impl SyntheticMotion {
    pub fn validate(&self) -> Result<()> {
        if self.targets.iter().flatten().any(|a| !(0.0..=180.0).contains(a)) {
            return Err(Error::InvalidConfig("target angles must lie in [0, 180]".into()));
        }
        if self.segments.all().any(|l| !(l > 0.0)) {
            return Err(Error::InvalidConfig("segment lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Two unit vectors completing `v` (unit) to an orthonormal frame.
fn perp_basis(v: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if v.x.abs() < 0.6 {
        Vector3::x()
    } else if v.y.abs() < 0.6 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = (helper - v * helper.dot(v)).normalize();
    (e1, v.cross(&e1))
}

/// Unit vector at `angle` (radians) from `axis`, turned by `azimuth` around it.
fn at_angle(axis: &Vector3<f64>, angle: f64, azimuth: f64) -> Vector3<f64> {
    let (e1, e2) = perp_basis(axis);
    axis * angle.cos() + (e1 * azimuth.cos() + e2 * azimuth.sin()) * angle.sin()
}

/// Free directions of one frame.
struct Azimuths {
    lean: f64,
    arm: f64,
    forearm: f64,
    palm: f64,
    palm_roll: f64,
}

const PELVIS: Vector3<f64> = Vector3::new(0.0, 0.1, 2.0);
/// Splay of index..pinky metacarpals within the palm plane, radians.
const SPLAY: [f64; 4] = [0.22, 0.0, -0.18, -0.34];

fn deg(targets: &[f64; N_ANGLES], name: &str) -> f64 {
    targets[angle_index(name).expect("canonical angle")].to_radians()
}

/// Joint positions in the gravity-aligned frame (y down).
fn pose(targets: &[f64; N_ANGLES], seg: &SegmentLengths, side: Side, az: &Azimuths) -> BTreeMap<&'static str, Vector3<f64>> {
    let mut j = BTreeMap::new();
    let up = Vector3::new(0.0, -1.0, 0.0);
    let s = if side == Side::Right { 1.0 } else { -1.0 };

    let trunk_dir = {
        let horizontal = Vector3::new(az.lean.sin(), 0.0, -az.lean.cos());
        up * deg(targets, "trunk").cos() + horizontal * deg(targets, "trunk").sin()
    };
    let neck = PELVIS + trunk_dir * seg.trunk;
    let across = (Vector3::x() - trunk_dir * trunk_dir.x).normalize();
    let shoulder = neck + across * (s * seg.shoulder_offset);

    let down = -trunk_dir;
    let arm_dir = at_angle(&down, deg(targets, "shoulder"), az.arm);
    let elbow = shoulder + arm_dir * seg.upper_arm;
    let fore_dir = at_angle(&-arm_dir, deg(targets, "elbow"), az.forearm);
    let wrist = elbow + fore_dir * seg.forearm;
    let palm_dir = at_angle(&fore_dir, deg(targets, "wrist"), az.palm);

    let (n1, n2) = perp_basis(&palm_dir);
    let normal = n1 * az.palm_roll.cos() + n2 * az.palm_roll.sin();
    let lateral = palm_dir.cross(&normal) * s;

    j.insert("pelvis", PELVIS);
    j.insert("neck", neck);
    j.insert("shoulder", shoulder);
    j.insert("elbow", elbow);
    j.insert("wrist", wrist);

    // A planar chain flexing toward the palm normal. Each joint's interior
    // angle A turns the chain by pi - A.
    let chain = |base: Vector3<f64>, dir: Vector3<f64>, angles: &[f64], lengths: &[f64]| {
        let mut out = Vec::new();
        let mut p = base;
        let mut heading = 0.0;
        for (a, l) in angles.iter().zip(lengths) {
            heading += PI - a;
            p += (dir * heading.cos() + normal * heading.sin()) * *l;
            out.push(p);
        }
        out
    };

    const FINGERS: [(&str, [&str; 4]); 4] = [
        ("index", ["index_mcp", "index_pip", "index_dip", "index_tip"]),
        ("middle", ["middle_mcp", "middle_pip", "middle_dip", "middle_tip"]),
        ("ring", ["ring_mcp", "ring_pip", "ring_dip", "ring_tip"]),
        ("pinky", ["pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip"]),
    ];
    for (f, (name, joints)) in FINGERS.iter().enumerate() {
        let dir = palm_dir * SPLAY[f].cos() + lateral * SPLAY[f].sin();
        let mcp = wrist + dir * seg.metacarpal[f];
        let a = [
            deg(targets, &format!("{name}_mcp")),
            deg(targets, &format!("{name}_pip")),
            deg(targets, &format!("{name}_dip")),
        ];
        let pts = chain(mcp, dir, &a, &seg.phalanges[f]);
        j.insert(joints[0], mcp);
        for (k, p) in pts.into_iter().enumerate() {
            j.insert(joints[k + 1], p);
        }
    }

    let cmc = wrist + (palm_dir * 0.6f64.cos() + lateral * 0.6f64.sin()) * seg.thumb_cmc;
    let thumb_dir = palm_dir * 0.5f64.cos() + lateral * 0.5f64.sin();
    let t_mcp = cmc + thumb_dir * seg.thumb_metacarpal;
    let pts = chain(
        t_mcp,
        thumb_dir,
        &[deg(targets, "thumb_mcp"), deg(targets, "thumb_ip")],
        &seg.thumb_phalanges,
    );
    j.insert("thumb_cmc", cmc);
    j.insert("thumb_mcp", t_mcp);
    j.insert("thumb_ip", pts[0]);
    j.insert("thumb_tip", pts[1]);
    j
}

/// Camera-frame keypoints realizing every target, for a camera pitched by
/// `pitch` radians, plus the true angles.
pub fn gen_motion(motion: &SyntheticMotion, pitch: f64, spec: &SkeletonSpec) -> Result<(Vec<KeypointFrame>, Vec<AngleFrame>)> {
    motion.validate()?;
    let world_to_cam = rot_x(pitch);
    let mut rng = ChaCha8Rng::seed_from_u64(motion.seed);
    let mut frames = Vec::with_capacity(motion.targets.len());
    let mut truth = Vec::with_capacity(motion.targets.len());
    for (t, targets) in motion.targets.iter().enumerate() {
        let az = Azimuths {
            lean: rng.random_range(-0.6..0.6),
            arm: rng.random_range(0.0..2.0 * PI),
            forearm: rng.random_range(0.0..2.0 * PI),
            palm: rng.random_range(0.0..2.0 * PI),
            palm_roll: rng.random_range(0.0..2.0 * PI),
        };
        let joints = pose(targets, &motion.segments, motion.side, &az)
            .into_iter()
            .map(|(name, p)| (spec.resolve(motion.side, name), world_to_cam * p))
            .collect();
        frames.push(KeypointFrame {
            t: t as i64,
            side: motion.side,
            joints,
        });
        truth.push(AngleFrame {
            t: t as i64,
            side: motion.side,
            angles: *targets,
        });
    }
    Ok((frames, truth))
}

/// Uniformly random target vectors over [lo, hi] degrees.
pub fn random_targets(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<[f64; N_ANGLES]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(lo..=hi)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interchange::keypoints_to_jsonl;
    use crate::kinematics::AngleSolver;

    fn straight() -> [f64; N_ANGLES] {
        let mut a = [180.0; N_ANGLES];
        a[14] = 0.0; // shoulder
        a[16] = 0.0; // wrist
        a[17] = 0.0; // trunk
        a
    }

    #[test]
    fn straight_upright_recovers() {
        let spec = SkeletonSpec::canonical();
        let m = SyntheticMotion {
            side: Side::Right,
            segments: SegmentLengths::default(),
            targets: vec![straight()],
            seed: 1,
        };
        let (frames, truth) = gen_motion(&m, 0.0, &spec).unwrap();
        let got = AngleSolver::new(&spec).angles(&frames[0]).unwrap();
        for (g, t) in got.angles.iter().zip(truth[0].angles) {
            assert!((g - t).abs() < 1e-6, "{g} vs {t}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SkeletonSpec::canonical();
        let m = SyntheticMotion {
            side: Side::Left,
            segments: SegmentLengths::default(),
            targets: random_targets(5, 0.0, 180.0, 9),
            seed: 3,
        };
        let a = keypoints_to_jsonl(&gen_motion(&m, 0.2, &spec).unwrap().0);
        let b = keypoints_to_jsonl(&gen_motion(&m, 0.2, &spec).unwrap().0);
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_range_targets_rejected() {
        let mut t = straight();
        t[0] = 181.0;
        let m = SyntheticMotion {
            side: Side::Left,
            segments: SegmentLengths::default(),
            targets: vec![t],
            seed: 0,
        };
        assert!(gen_motion(&m, 0.0, &SkeletonSpec::canonical()).is_err());
    }

    #[test]
    fn perp_basis_is_orthonormal() {
        for v in [Vector3::x(), Vector3::new(0.3, -0.9, 0.1).normalize(), Vector3::z()] {
            let (a, b) = perp_basis(&v);
            assert!(a.dot(&v).abs() < 1e-12 && b.dot(&v).abs() < 1e-12 && a.dot(&b).abs() < 1e-12);
            assert!((a.norm() - 1.0).abs() < 1e-12 && (b.norm() - 1.0).abs() < 1e-12);
        }
    }
}
