//! Movement analysis for Box and Block Test recordings.
//!
//! Stages: [`maskpipe`] stabilizes the box segmentation, [`calib`] recovers
//! camera pitch from front-face normals, [`kinematics`] produces 18
//! gravity-aligned joint angles, [`features`] compresses finger angles with
//! PCA and [`scoring`] measures KNN deviation from a healthy reference.
//! [`pipeline`] chains them over a dataset directory; [`synth`] generates
//! datasets with known ground truth.

pub mod calib;
pub mod error;
pub mod features;
pub mod interchange;
pub mod kinematics;
pub mod maskpipe;
pub mod par;
pub mod pipeline;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
