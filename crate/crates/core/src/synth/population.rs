//! Healthy/impaired cohorts in the full interchange layout, with a manifest
//! of ground truth.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::SMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::motion::{gen_motion, SegmentLengths, SyntheticMotion};
use super::scene::{gen_scene, Corruption, SyntheticScene};
use crate::error::{Error, Result};
use crate::interchange::{
    angle_index, write_json, write_keypoints, write_mask_sequence, write_point_map, Cohort, Impairment,
    KeypointFrame, MaskSequence, PointMap, RecordingMeta, Side, SkeletonSpec, N_ANGLES, N_FINGER,
};
use crate::kinematics::AngleFrame;

/// Deviations applied to every impaired recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpairmentSpec {
    /// Added to the trunk angle, degrees.
    pub trunk_lean_deg: f64,
    /// Fraction by which the elbow's excursion around its mean shrinks.
    pub elbow_range_compression: f64,
    /// Added to every finger angle (less flexion), degrees.
    pub finger_flexion_deficit_deg: f64,
}

impl Default for ImpairmentSpec {
    fn default() -> Self {
        Self {
            trunk_lean_deg: 20.0,
            elbow_range_compression: 0.4,
            finger_flexion_deficit_deg: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub n_healthy: usize,
    pub n_impaired: usize,
    /// Keypoint frames per recording.
    pub frames: usize,
    pub mask_frames: usize,
    pub image_size: usize,
    pub fps: f64,
    /// Point-map noise, meters.
    pub point_noise: f64,
    /// Fraction of corrupted mask frames per recording.
    pub corruption: f64,
    /// Camera pitch is drawn uniformly from +-max_pitch_deg.
    pub max_pitch_deg: f64,
    pub impairment: ImpairmentSpec,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            n_healthy: 20,
            n_impaired: 4,
            frames: 300,
            mask_frames: 20,
            image_size: 64,
            fps: 30.0,
            point_noise: 0.001,
            corruption: 0.1,
            max_pitch_deg: 20.0,
            impairment: ImpairmentSpec::default(),
            seed: 0,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("population: {m}")));
        if self.n_healthy < 2 {
            return bad("at least two healthy recordings are required");
        }
        if self.frames == 0 {
            return bad("frames must be positive");
        }
        if !(0.0..80.0).contains(&self.max_pitch_deg) {
            return bad("max_pitch_deg must lie in [0, 80)");
        }
        if !(0.0..=1.0).contains(&self.impairment.elbow_range_compression) {
            return bad("elbow_range_compression must lie in [0, 1]");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        Ok(())
    }
}

/// Ground truth for one recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingTruth {
    pub recording: String,
    pub subject: String,
    pub cohort: Cohort,
    pub side: Side,
    pub impairment: Impairment,
    pub pitch_rad: f64,
    pub pitch_deg: f64,
    pub corrupted_frames: Vec<i64>,
    pub corruption_kinds: Vec<Corruption>,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: PopulationSpec,
    /// 14x3 finger loadings, degrees per unit latent.
    pub finger_loadings: Vec<[f64; 3]>,
    pub recordings: Vec<RecordingTruth>,
}

pub struct SynthRecording {
    pub meta: RecordingMeta,
    pub masks: MaskSequence,
    pub point_map: PointMap,
    pub keypoints: Vec<KeypointFrame>,
    pub truth: Vec<AngleFrame>,
}

pub struct Population {
    pub recordings: Vec<SynthRecording>,
    pub manifest: Manifest,
}

const FINGER_MEAN: [f64; 3] = [150.0, 140.0, 160.0]; // mcp, pip, dip
const THUMB_MEAN: [f64; 2] = [155.0, 150.0];
const FINGER_NOISE: f64 = 1.0;
const ARM_NOISE: f64 = 1.0;

/// Per-subject parameters of the healthy movement distribution.
struct Subject {
    period: f64,
    phase: [f64; 7],
    arm_offset: [f64; 4],
}

fn finger_means() -> [f64; N_FINGER] {
    let mut m = [0.0; N_FINGER];
    for f in 0..4 {
        m[3 * f..3 * f + 3].copy_from_slice(&FINGER_MEAN);
    }
    m[12..].copy_from_slice(&THUMB_MEAN);
    m
}

/// Targets for one recording: three smooth finger synergies and sinusoidal
/// reach-and-grasp arm motion, plus noise.
fn healthy_targets(
    n: usize,
    fps: f64,
    subject: &Subject,
    loadings: &SMatrix<f64, N_FINGER, 3>,
    rng: &mut ChaCha8Rng,
) -> Vec<[f64; N_ANGLES]> {
    let finger_noise = Normal::new(0.0, FINGER_NOISE).expect("finite sigma");
    let arm_noise = Normal::new(0.0, ARM_NOISE).expect("finite sigma");
    let means = finger_means();
    let arm_mean = [35.0, 110.0, 20.0, 8.0];
    let arm_amp = [15.0, 25.0, 8.0, 3.0];
    let idx = ["shoulder", "elbow", "wrist", "trunk"].map(|n| angle_index(n).expect("canonical"));
    (0..n)
        .map(|i| {
            let w = 2.0 * PI * (i as f64 / fps) / subject.period;
            let z = nalgebra::Vector3::from_fn(|r, _| 1.5 * (w * (r as f64 + 1.0) * 0.5 + subject.phase[r]).sin());
            let fingers = loadings * z;
            let mut a = [0.0; N_ANGLES];
            for j in 0..N_FINGER {
                a[j] = means[j] + fingers[j] + finger_noise.sample(rng);
            }
            for (k, &j) in idx.iter().enumerate() {
                a[j] = arm_mean[k]
                    + subject.arm_offset[k]
                    + arm_amp[k] * (w + subject.phase[3 + k]).sin()
                    + arm_noise.sample(rng) * if k == 3 { 0.5 } else { 1.0 };
            }
            a
        })
        .collect()
}

fn impair(targets: &mut [[f64; N_ANGLES]], spec: &ImpairmentSpec) {
    let elbow = angle_index("elbow").expect("canonical");
    let trunk = angle_index("trunk").expect("canonical");
    let mean = targets.iter().map(|a| a[elbow]).sum::<f64>() / targets.len() as f64;
    for a in targets.iter_mut() {
        a[trunk] += spec.trunk_lean_deg;
        a[elbow] = mean + (1.0 - spec.elbow_range_compression) * (a[elbow] - mean);
        for f in &mut a[..N_FINGER] {
            *f += spec.finger_flexion_deficit_deg;
        }
    }
}

fn clamp_targets(targets: &mut [[f64; N_ANGLES]]) {
    for a in targets.iter_mut().flatten() {
        *a = a.clamp(0.0, 180.0);
    }
}

pub fn gen_population(spec: &PopulationSpec, skeleton: &SkeletonSpec) -> Result<Population> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let loadings = SMatrix::<f64, N_FINGER, 3>::from_fn(|_, _| rng.random_range(-10.0..10.0));

    let mut recordings = Vec::new();
    let mut truths = Vec::new();
    for r in 0..spec.n_healthy + spec.n_impaired {
        let healthy = r < spec.n_healthy;
        let (id, cohort, impairment) = if healthy {
            (format!("H{:02}", r + 1), Cohort::Healthy, Impairment::None)
        } else {
            (format!("P{:02}", r - spec.n_healthy + 1), Cohort::Patient, Impairment::More)
        };
        let side = if r % 2 == 0 { Side::Right } else { Side::Left };

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(r as u64 + 1);
        let subject = Subject {
            period: rng.random_range(1.5..2.5),
            phase: std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI)),
            arm_offset: [
                rng.random_range(-3.0..3.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
            ],
        };
        let mut targets = healthy_targets(spec.frames, spec.fps, &subject, &loadings, &mut rng);
        if !healthy {
            impair(&mut targets, &spec.impairment);
        }
        clamp_targets(&mut targets);

        let pitch = rng.random_range(-spec.max_pitch_deg..=spec.max_pitch_deg).to_radians();
        let scene = gen_scene(&SyntheticScene {
            pitch,
            width: spec.image_size,
            height: spec.image_size,
            noise_sigma: spec.point_noise,
            mask_frames: spec.mask_frames,
            corruption: spec.corruption,
            seed: rng.random(),
            ..Default::default()
        })?;
        let motion = SyntheticMotion {
            side,
            segments: SegmentLengths::default(),
            targets,
            seed: rng.random(),
        };
        let (keypoints, truth) = gen_motion(&motion, pitch, skeleton)?;

        let meta = RecordingMeta {
            recording: id.clone(),
            subject: id.clone(),
            cohort,
            side,
            impairment,
            fps: spec.fps,
            session: 1,
        };
        truths.push(RecordingTruth {
            recording: id.clone(),
            subject: id.clone(),
            cohort,
            side,
            impairment,
            pitch_rad: pitch,
            pitch_deg: pitch.to_degrees(),
            corrupted_frames: scene.corrupted.iter().map(|c| c.0).collect(),
            corruption_kinds: scene.corrupted.iter().map(|c| c.1).collect(),
            frames: spec.frames,
        });
        recordings.push(SynthRecording {
            meta,
            masks: MaskSequence::new(id, scene.masks.frames().to_vec())?,
            point_map: scene.point_map,
            keypoints,
            truth,
        });
    }
    Ok(Population {
        recordings,
        manifest: Manifest {
            spec: spec.clone(),
            finger_loadings: (0..N_FINGER).map(|i| [loadings[(i, 0)], loadings[(i, 1)], loadings[(i, 2)]]).collect(),
            recordings: truths,
        },
    })
}

/// Writes `meta.json`, `manifest.json` and `recordings/<id>/` with
/// `meta.json`, `masks/`, `pointmap.bin` and `keypoints.jsonl`.
pub fn write_population(dir: &Path, pop: &Population) -> Result<()> {
    for rec in &pop.recordings {
        let rdir = dir.join("recordings").join(&rec.meta.recording);
        fs::create_dir_all(&rdir).map_err(|e| Error::io(&rdir, e))?;
        write_json(&rdir.join("meta.json"), &rec.meta)?;
        write_mask_sequence(&rdir.join("masks"), &rec.masks)?;
        write_point_map(&rdir.join("pointmap.bin"), &rec.point_map)?;
        write_keypoints(&rdir.join("keypoints.jsonl"), &rec.keypoints)?;
    }
    let metas: Vec<&RecordingMeta> = pop.recordings.iter().map(|r| &r.meta).collect();
    write_json(&dir.join("meta.json"), &metas)?;
    write_json(&dir.join("manifest.json"), &pop.manifest)
}
