use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Side;
use crate::error::{Error, Result};

pub const FINGER_ANGLES: [&str; 14] = [
    "index_mcp",
    "index_pip",
    "index_dip",
    "middle_mcp",
    "middle_pip",
    "middle_dip",
    "ring_mcp",
    "ring_pip",
    "ring_dip",
    "pinky_mcp",
    "pinky_pip",
    "pinky_dip",
    "thumb_mcp",
    "thumb_ip",
];

pub const ARM_ANGLES: [&str; 4] = ["shoulder", "elbow", "wrist", "trunk"];

/// All 18 angle names in column order: fingers, then shoulder/elbow/wrist/trunk.
pub const ANGLE_NAMES: [&str; 18] = [
    "index_mcp",
    "index_pip",
    "index_dip",
    "middle_mcp",
    "middle_pip",
    "middle_dip",
    "ring_mcp",
    "ring_pip",
    "ring_dip",
    "pinky_mcp",
    "pinky_pip",
    "pinky_dip",
    "thumb_mcp",
    "thumb_ip",
    "shoulder",
    "elbow",
    "wrist",
    "trunk",
];

pub const N_FINGER: usize = 14;
pub const N_ANGLES: usize = 18;

pub fn angle_index(name: &str) -> Option<usize> {
    ANGLE_NAMES.iter().position(|n| *n == name)
}

/// Directed segment `[from, to]` between two joints.
pub type Segment = [String; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleDef {
    /// Interior angle at the middle joint.
    Triplet { name: String, joints: [String; 3] },
    /// Angle between two segments.
    Vectors { name: String, a: Segment, b: Segment },
    /// Angle between a segment and the upward vertical of the gravity-aligned frame.
    Gravity { name: String, a: Segment },
}

impl AngleDef {
    pub fn name(&self) -> &str {
        match self {
            AngleDef::Triplet { name, .. } | AngleDef::Vectors { name, .. } | AngleDef::Gravity { name, .. } => name,
        }
    }

    fn joints(&self) -> Vec<&str> {
        match self {
            AngleDef::Triplet { joints, .. } => joints.iter().map(String::as_str).collect(),
            AngleDef::Vectors { a, b, .. } => a.iter().chain(b).map(String::as_str).collect(),
            AngleDef::Gravity { a, .. } => a.iter().map(String::as_str).collect(),
        }
    }
}

/// Joint vocabulary plus the definitions turning joints into the 18 named angles.
///
/// Lateral joint names are unprefixed here and resolved per side with
/// `side_prefix`; axial joints (pelvis, neck) are used as-is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub lateral_joints: Vec<String>,
    pub axial_joints: Vec<String>,
    pub side_prefix: BTreeMap<Side, String>,
    pub angles: Vec<AngleDef>,
}

/// An angle definition with joint names resolved for one side.
#[derive(Clone, Debug)]
pub(crate) enum Resolved {
    Triplet([String; 3]),
    Vectors([String; 2], [String; 2]),
    Gravity([String; 2]),
}

impl SkeletonSpec {
    pub fn canonical() -> Self {
        let s = |x: &str| x.to_string();
        let seg = |a: &str, b: &str| [s(a), s(b)];
        let mut lateral = vec![s("wrist"), s("thumb_cmc"), s("thumb_mcp"), s("thumb_ip"), s("thumb_tip")];
        for f in ["index", "middle", "ring", "pinky"] {
            for j in ["mcp", "pip", "dip", "tip"] {
                lateral.push(format!("{f}_{j}"));
            }
        }
        lateral.push(s("elbow"));
        lateral.push(s("shoulder"));

        let mut angles = Vec::new();
        for f in ["index", "middle", "ring", "pinky"] {
            let j = |p: &str| format!("{f}_{p}");
            angles.push(AngleDef::Triplet {
                name: j("mcp"),
                joints: [s("wrist"), j("mcp"), j("pip")],
            });
            angles.push(AngleDef::Triplet {
                name: j("pip"),
                joints: [j("mcp"), j("pip"), j("dip")],
            });
            angles.push(AngleDef::Triplet {
                name: j("dip"),
                joints: [j("pip"), j("dip"), j("tip")],
            });
        }
        angles.push(AngleDef::Triplet {
            name: s("thumb_mcp"),
            joints: [s("thumb_cmc"), s("thumb_mcp"), s("thumb_ip")],
        });
        angles.push(AngleDef::Triplet {
            name: s("thumb_ip"),
            joints: [s("thumb_mcp"), s("thumb_ip"), s("thumb_tip")],
        });
        angles.push(AngleDef::Vectors {
            name: s("shoulder"),
            a: seg("shoulder", "elbow"),
            b: seg("neck", "pelvis"),
        });
        angles.push(AngleDef::Triplet {
            name: s("elbow"),
            joints: [s("shoulder"), s("elbow"), s("wrist")],
        });
        angles.push(AngleDef::Vectors {
            name: s("wrist"),
            a: seg("elbow", "wrist"),
            b: seg("wrist", "middle_mcp"),
        });
        angles.push(AngleDef::Gravity {
            name: s("trunk"),
            a: seg("pelvis", "neck"),
        });

        let spec = SkeletonSpec {
            lateral_joints: lateral,
            axial_joints: vec![s("pelvis"), s("neck")],
            side_prefix: [(Side::Left, s("l_")), (Side::Right, s("r_"))].into_iter().collect(),
            angles,
        };
        debug_assert!(spec.validate().is_ok());
        spec
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SkeletonSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidSkeleton(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSkeleton(m));
        for side in [Side::Left, Side::Right] {
            if !self.side_prefix.contains_key(&side) {
                return bad(format!("missing side prefix for {side}"));
            }
        }
        let known: BTreeSet<&str> = self
            .lateral_joints
            .iter()
            .chain(&self.axial_joints)
            .map(String::as_str)
            .collect();
        if known.len() != self.lateral_joints.len() + self.axial_joints.len() {
            return bad("duplicate joint names".into());
        }
        let mut seen = BTreeSet::new();
        for def in &self.angles {
            if !seen.insert(def.name()) {
                return bad(format!("angle '{}' defined twice", def.name()));
            }
            if angle_index(def.name()).is_none() {
                return bad(format!("unknown angle '{}'", def.name()));
            }
            if let Some(j) = def.joints().into_iter().find(|j| !known.contains(j)) {
                return bad(format!("angle '{}' references unknown joint '{j}'", def.name()));
            }
        }
        if seen.len() != N_ANGLES {
            let missing: Vec<_> = ANGLE_NAMES.iter().filter(|n| !seen.contains(*n)).collect();
            return bad(format!("expected 18 angles, missing {missing:?}"));
        }
        let finger_triplets = self
            .angles
            .iter()
            .filter(|d| FINGER_ANGLES.contains(&d.name()) && matches!(d, AngleDef::Triplet { .. }))
            .count();
        if finger_triplets != N_FINGER {
            return bad(format!("expected 14 finger triplets, found {finger_triplets}"));
        }
        Ok(())
    }

    pub fn resolve(&self, side: Side, joint: &str) -> String {
        if self.lateral_joints.iter().any(|j| j == joint) {
            format!("{}{joint}", self.side_prefix[&side])
        } else {
            joint.to_string()
        }
    }

    /// Joint names a frame for `side` must carry.
    pub fn joint_names(&self, side: Side) -> Vec<String> {
        self.lateral_joints
            .iter()
            .chain(&self.axial_joints)
            .map(|j| self.resolve(side, j))
            .collect()
    }

    /// Definitions resolved for `side`, indexed by canonical angle position.
    pub(crate) fn resolved(&self, side: Side) -> Vec<Resolved> {
        let r = |j: &String| self.resolve(side, j);
        let mut out: Vec<Option<Resolved>> = vec![None; N_ANGLES];
        for def in &self.angles {
            let idx = angle_index(def.name()).expect("validated");
            out[idx] = Some(match def {
                AngleDef::Triplet { joints, .. } => Resolved::Triplet(joints.each_ref().map(r)),
                AngleDef::Vectors { a, b, .. } => Resolved::Vectors(a.each_ref().map(r), b.each_ref().map(r)),
                AngleDef::Gravity { a, .. } => Resolved::Gravity(a.each_ref().map(r)),
            });
        }
        out.into_iter().map(|d| d.expect("validated")).collect()
    }
}

impl Default for SkeletonSpec {
    fn default() -> Self {
        Self::canonical()
    }
}
