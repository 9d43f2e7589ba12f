//! Synthetic ground truth: pitched box scenes, forward-kinematic motion and
//! whole cohorts.

mod motion;
mod population;
mod scene;

pub use motion::{gen_motion, random_targets, SegmentLengths, SyntheticMotion};
pub use population::{
    gen_population, write_population, ImpairmentSpec, Manifest, Population, PopulationSpec, RecordingTruth,
    SynthRecording,
};
pub use scene::{corrupt_normals, gen_scene, Corruption, SceneOutput, SyntheticScene};
