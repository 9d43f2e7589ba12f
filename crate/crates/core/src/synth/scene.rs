use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calib::{rot_x, NormalField};
use crate::error::{Error, Result};
use crate::interchange::{BinaryMask, LabelMask, MaskSequence, PointMap};

/// A box seen by a pitched pinhole camera.
///
/// The box front is a vertical plane `depth` meters ahead along the
/// horizontal. In the image, rows `[top, middle)` show the rest of the box
/// and rows `[middle, bottom)` its front face; only the front face gets 3D
/// points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    /// Camera pitch in radians; positive looks down.
    pub pitch: f64,
    pub width: usize,
    pub height: usize,
    /// Horizontal distance to the box front, meters.
    pub depth: f64,
    /// Focal length in pixels; `None` uses the image width.
    pub focal: Option<f64>,
    /// Per-coordinate Gaussian point noise, meters.
    pub noise_sigma: f64,
    pub mask_frames: usize,
    /// Fraction of mask frames to corrupt.
    pub corruption: f64,
    pub seed: u64,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        Self {
            pitch: 0.0,
            width: 64,
            height: 64,
            depth: 1.0,
            focal: None,
            noise_sigma: 0.0,
            mask_frames: 20,
            corruption: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    /// A background band splits the box into two components.
    Split,
    /// Only the left half of the box survives.
    Shrink,
}

#[derive(Clone, Debug)]
pub struct SceneOutput {
    pub masks: MaskSequence,
    pub point_map: PointMap,
    pub pitch: f64,
    /// Corrupted frame indices, ascending, with the corruption applied.
    pub corrupted: Vec<(i64, Corruption)>,
    pub clean_mask: BinaryMask,
    pub front: BinaryMask,
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("scene: {m}")));
        if self.pitch.abs() >= std::f64::consts::FRAC_PI_2 {
            return bad("|pitch| must be below 90 degrees");
        }
        if self.noise_sigma < 0.0 || !(self.noise_sigma.is_finite()) {
            return bad("noise must be non-negative");
        }
        if !(0.0..1.0).contains(&self.corruption) {
            return bad("corruption fraction must lie in [0, 1)");
        }
        if self.width < 8 || self.height < 8 || self.mask_frames == 0 || !(self.depth > 0.0) {
            return bad("image must be at least 8x8 with a positive depth and at least one frame");
        }
        Ok(())
    }

    fn layout(&self) -> (usize, usize, usize, usize, usize) {
        let (w, h) = (self.width, self.height);
        // left, right, top, middle, bottom
        (w / 16, w - w / 16, h / 8, h / 2, h - h / 16)
    }

    pub fn clean_labels(&self) -> LabelMask {
        let (l, r, top, mid, bottom) = self.layout();
        let mut m = LabelMask::filled(self.width, self.height, LabelMask::BACKGROUND).expect("nonzero dims");
        for y in top..bottom {
            for x in l..r {
                m.set(x, y, if y >= mid { LabelMask::FRONT } else { LabelMask::REST });
            }
        }
        m
    }

    pub fn front_region(&self) -> BinaryMask {
        self.clean_labels().select(LabelMask::FRONT)
    }
}

pub fn gen_scene(scene: &SyntheticScene) -> Result<SceneOutput> {
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let clean = scene.clean_labels();
    let (l, r, top, mid, bottom) = scene.layout();

    let n_bad = (scene.corruption * scene.mask_frames as f64).round() as usize;
    let mut bad: Vec<usize> = sample(&mut rng, scene.mask_frames, n_bad).into_vec();
    bad.sort_unstable();

    let mut frames = Vec::with_capacity(scene.mask_frames);
    let mut corrupted = Vec::new();
    for t in 0..scene.mask_frames {
        let mut m = clean.clone();
        // a hand occluding part of the front face is labelled rest-of-box
        let hw = (r - l) / 5;
        let hx = rng.random_range(l..r - hw);
        let hy = rng.random_range(mid..bottom);
        for y in hy..bottom.min(hy + (bottom - mid) / 2) {
            for x in hx..hx + hw {
                m.set(x, y, LabelMask::REST);
            }
        }
        if bad.binary_search(&t).is_ok() {
            let kind = if corrupted.len() % 2 == 0 { Corruption::Split } else { Corruption::Shrink };
            match kind {
                Corruption::Split => {
                    let c = (l + r) / 2 + rng.random_range(0..(r - l) / 4);
                    for y in 0..scene.height {
                        m.set(c, y, LabelMask::BACKGROUND);
                        m.set(c + 1, y, LabelMask::BACKGROUND);
                    }
                }
                Corruption::Shrink => {
                    for y in top..bottom {
                        for x in (l + r) / 2..r {
                            m.set(x, y, LabelMask::BACKGROUND);
                        }
                    }
                }
            }
            corrupted.push((t as i64, kind));
        }
        frames.push((t as i64, m));
    }
    let masks = MaskSequence::new("scene", frames)?;

    let focal = scene.focal.unwrap_or(scene.width as f64);
    let (cx, cy) = ((scene.width as f64 - 1.0) / 2.0, (scene.height as f64 - 1.0) / 2.0);
    let cam_to_world = rot_x(-scene.pitch);
    let noise = Normal::new(0.0, scene.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let front = scene.front_region();
    let mut pm = PointMap::invalid(scene.width, scene.height);
    for y in 0..scene.height {
        for x in 0..scene.width {
            if !front.get(x, y) {
                continue;
            }
            let ray = Vector3::new((x as f64 - cx) / focal, (y as f64 - cy) / focal, 1.0);
            let dz = (cam_to_world * ray).z;
            if dz <= 0.0 {
                continue;
            }
            let mut p = ray * (scene.depth / dz);
            if scene.noise_sigma > 0.0 {
                p += Vector3::from_fn(|_, _| noise.sample(&mut rng));
            }
            pm.set(x, y, Some(p));
        }
    }

    Ok(SceneOutput {
        masks,
        point_map: pm,
        pitch: scene.pitch,
        corrupted,
        clean_mask: crate::maskpipe::binarize(&clean),
        front,
    })
}

/// Replaces a `fraction` of the valid normals under `region` with random unit vectors.
pub fn corrupt_normals(nf: &mut NormalField, region: &BinaryMask, fraction: f64, seed: u64) -> usize {
    let (w, _) = nf.dims();
    let idx: Vec<usize> = nf
        .normals()
        .iter()
        .enumerate()
        .filter(|(i, n)| n.is_some() && region.bits()[*i])
        .map(|(i, _)| i)
        .collect();
    let n = (fraction * idx.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, idx.len(), n).into_vec();
    for p in &picks {
        let i = idx[*p];
        let v = loop {
            let v = Vector3::<f64>::from_fn(|_, _| StandardNormal.sample(&mut rng));
            if v.norm() > 1e-6 {
                break v.normalize();
            }
        };
        nf.set(i % w, i / w, Some(v));
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskpipe::count_components;

    #[test]
    fn corruption_count_and_kinds() {
        let out = gen_scene(&SyntheticScene {
            corruption: 0.3,
            mask_frames: 20,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(out.corrupted.len(), 6);
        for (t, kind) in &out.corrupted {
            let b = crate::maskpipe::binarize(out.masks.frame(*t).unwrap());
            match kind {
                Corruption::Split => assert_eq!(count_components(&b), 2),
                Corruption::Shrink => assert!(crate::maskpipe::iou(&b, &out.clean_mask).unwrap() < 0.9),
            }
        }
    }

    #[test]
    fn invalid_scene_rejected() {
        let s = SyntheticScene {
            corruption: 1.0,
            ..Default::default()
        };
        assert!(gen_scene(&s).is_err());
        let s = SyntheticScene {
            pitch: 2.0,
            ..Default::default()
        };
        assert!(gen_scene(&s).is_err());
    }

    #[test]
    fn point_map_only_on_front_face() {
        let s = SyntheticScene::default();
        let out = gen_scene(&s).unwrap();
        assert_eq!(out.point_map.valid_count(), out.front.count());
    }
}
