//! On-disk data model: label masks (PGM), point maps (PMAP), keypoints
//! (JSON Lines), skeleton definitions and recording metadata (JSON), and the
//! CSV tables passed between stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

mod keypoints;
mod mask;
mod meta;
mod pointmap;
mod skeleton;
mod tables;

pub use keypoints::{keypoints_to_jsonl, parse_keypoints, read_keypoints, write_keypoints, KeypointFrame};
pub(crate) use mask::check_dims;
pub use mask::{
    mask_file_name, read_mask_sequence, read_pgm, write_mask_sequence, write_pgm, BinaryMask, LabelMask,
    MaskSequence,
};
pub use meta::{read_meta, read_meta_list, write_json, Cohort, Impairment, RecordingMeta};
pub use pointmap::{read_point_map, write_point_map, PointMap};
pub(crate) use skeleton::Resolved;
pub use skeleton::{
    angle_index, AngleDef, Segment, SkeletonSpec, ANGLE_NAMES, ARM_ANGLES, FINGER_ANGLES, N_ANGLES, N_FINGER,
};
pub use tables::{
    fmt6, read_angles_csv, read_features_csv, read_features_many, round6, write_angles_csv, write_features_csv,
    AngleRow, FeatureRow,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(format!("unknown side '{other}'")),
        }
    }
}
