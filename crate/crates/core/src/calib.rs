//! Camera pitch from the box's front face.
//!
//! Normals come from forward finite differences on the point map
//! (`u` = column, `v` = row). Each front-face normal gives a pitch sample
//! `atan2(n_z, -n_y)`; the estimate is their median. A level camera facing a
//! vertical face sees the normal `(0, 0, -1)` and a sample of `-pi/2`, so the
//! camera pitch is reported as `phi = -(theta_hat + pi/2)`: zero when level,
//! positive when pitched down.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::{check_dims, round6, write_json, BinaryMask, PointMap};
use crate::par;

/// Stabilizer added to the cross-product norm.
pub const NORMAL_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct NormalField {
    width: usize,
    height: usize,
    normals: Vec<Option<Vector3<f64>>>,
}

impl NormalField {
    pub fn new(width: usize, height: usize, normals: Vec<Option<Vector3<f64>>>) -> Result<Self> {
        if normals.len() != width * height {
            return Err(Error::Invariant("normal buffer size".into()));
        }
        Ok(Self { width, height, normals })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> Option<Vector3<f64>> {
        self.normals[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, n: Option<Vector3<f64>>) {
        self.normals[y * self.width + x] = n;
    }

    pub fn normals(&self) -> &[Option<Vector3<f64>>] {
        &self.normals
    }

    pub fn valid_count(&self) -> usize {
        self.normals.iter().filter(|n| n.is_some()).count()
    }
}

/// Per-pixel unit normals. A pixel is valid when it and its right and lower
/// neighbours are valid and the tangents are not parallel.
pub fn surface_normals(pm: &PointMap) -> NormalField {
    let (w, h) = pm.dims();
    let rows = par::map_range(h, |v| {
        (0..w)
            .map(|u| {
                if u + 1 >= w || v + 1 >= h {
                    return None;
                }
                let p = pm.get(u, v)?;
                let du = pm.get(u + 1, v)? - p;
                let dv = pm.get(u, v + 1)? - p;
                let c = dv.cross(&du);
                let len = c.norm();
                if !(len > 0.0 && len.is_finite()) {
                    return None;
                }
                let n = c / (len + NORMAL_EPSILON);
                // the stabilized quotient is short of unit length by eps/len; restore it
                Some(n / n.norm())
            })
            .collect::<Vec<_>>()
    });
    NormalField {
        width: w,
        height: h,
        normals: rows.into_iter().flatten().collect(),
    }
}

/// `atan2(n_z, -n_y)`, or `None` when the normal has no component in the y-z plane.
pub fn pixel_pitch(normal: &Vector3<f64>) -> Option<f64> {
    if normal.y == 0.0 && normal.z == 0.0 || !normal.iter().all(|c| c.is_finite()) {
        return None;
    }
    Some((normal.z).atan2(-normal.y))
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchEstimate {
    pub theta_hat: f64,
    pub phi: f64,
    pub samples: usize,
}

impl PitchEstimate {
    pub fn from_theta(theta_hat: f64, samples: usize) -> Self {
        Self {
            theta_hat,
            phi: wrap_angle(-(theta_hat + FRAC_PI_2)),
            samples,
        }
    }

    /// Estimate for a camera with known pitch `phi`.
    pub fn from_phi(phi: f64) -> Self {
        Self::from_theta(wrap_angle(-phi - FRAC_PI_2), 1)
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi.to_degrees()
    }
}

/// `pitch.json` contents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchRecord {
    pub theta_hat_rad: f64,
    pub phi_rad: f64,
    pub phi_deg: f64,
    pub samples: usize,
}

impl From<&PitchEstimate> for PitchRecord {
    fn from(pe: &PitchEstimate) -> Self {
        Self {
            theta_hat_rad: round6(pe.theta_hat),
            phi_rad: round6(pe.phi),
            phi_deg: round6(pe.phi_deg()),
            samples: pe.samples,
        }
    }
}

impl PitchRecord {
    pub fn estimate(&self) -> PitchEstimate {
        PitchEstimate {
            theta_hat: self.theta_hat_rad,
            phi: self.phi_rad,
            samples: self.samples,
        }
    }
}

pub fn write_pitch(path: &Path, pe: &PitchEstimate) -> Result<()> {
    write_json(path, &PitchRecord::from(pe))
}

pub fn read_pitch(path: &Path) -> Result<PitchEstimate> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rec: PitchRecord = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(rec.estimate())
}

/// Median pitch over front-face pixels with a valid normal.
///
/// Samples are re-centred on their circular mean before ordering so a cluster
/// straddling the +-pi seam stays contiguous. An even count takes the lower
/// middle sample, so the result is always an observed angle.
pub fn estimate_pitch(nf: &NormalField, front: &BinaryMask) -> Result<PitchEstimate> {
    check_dims(nf.dims(), front.dims())?;
    let samples: Vec<f64> = nf
        .normals()
        .iter()
        .zip(front.bits())
        .filter(|(_, &on)| on)
        .filter_map(|(n, _)| n.as_ref().and_then(pixel_pitch))
        .collect();
    if samples.is_empty() {
        return Err(Error::NoFrontNormals);
    }
    let (s, c) = samples
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let centre = if s.hypot(c) > 1e-12 { s.atan2(c) } else { 0.0 };
    let mut order: Vec<(f64, f64)> = samples.iter().map(|&a| (wrap_angle(a - centre), a)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let theta_hat = wrap_angle(order[(order.len() - 1) / 2].1);
    Ok(PitchEstimate::from_theta(theta_hat, samples.len()))
}

/// Rotation taking camera-frame points into the gravity-aligned frame
/// (x right, y down along gravity, z horizontal forward): `R_x(-phi)`.
pub fn gravity_rotation(pe: &PitchEstimate) -> Matrix3<f64> {
    rot_x(-pe.phi)
}

/// Right-handed rotation about the x axis.
pub fn rot_x(angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::x_axis(), angle).matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn plane(w: usize, h: usize, f: impl Fn(f64, f64) -> Vector3<f64>) -> PointMap {
        let pts = (0..h)
            .flat_map(|v| (0..w).map(move |u| (u, v)))
            .map(|(u, v)| f(u as f64, v as f64))
            .collect();
        PointMap::new(w, h, pts).unwrap()
    }

    #[test]
    fn fronto_parallel_plane() {
        let d = 0.01;
        let nf = surface_normals(&plane(6, 5, |u, v| Vector3::new(u * d, v * d, 1.0)));
        assert_eq!(nf.valid_count(), 5 * 4);
        for n in nf.normals().iter().flatten() {
            assert!((n - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        }
        // last row and column have no forward neighbours
        assert!(nf.get(5, 0).is_none() && nf.get(0, 4).is_none());
    }

    #[test]
    fn rotated_plane_normals() {
        let r = rot_x(10f64.to_radians());
        let nf = surface_normals(&plane(8, 8, |u, v| r * Vector3::new(u * 0.02, v * 0.02, 1.0)));
        let expected = r * Vector3::new(0.0, 0.0, -1.0);
        for n in nf.normals().iter().flatten() {
            assert!((n - expected).norm() < 1e-6);
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn isolated_valid_pixel_has_no_normal() {
        let mut pm = PointMap::invalid(3, 3);
        pm.set(1, 1, Some(Vector3::new(0.0, 0.0, 1.0)));
        assert_eq!(surface_normals(&pm).valid_count(), 0);
    }

    #[test]
    fn pixel_pitch_cases() {
        assert_eq!(pixel_pitch(&Vector3::new(0.0, -1.0, 0.0)), Some(0.0));
        assert_eq!(pixel_pitch(&Vector3::new(0.0, 0.0, -1.0)), Some(-FRAC_PI_2));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pixel_pitch(&Vector3::new(0.0, -h, -h)).unwrap() + FRAC_PI_4).abs() < 1e-15);
        assert_eq!(pixel_pitch(&Vector3::new(1.0, 0.0, 0.0)), None);
        assert_eq!(pixel_pitch(&Vector3::new(0.0, -3.0, 0.0)), Some(0.0));
    }

    #[test]
    fn level_camera_has_zero_pitch() {
        let nf = surface_normals(&plane(5, 5, |u, v| Vector3::new(u * 0.01, v * 0.01, 1.0)));
        let pe = estimate_pitch(&nf, &BinaryMask::from_fn(5, 5, |_, _| true)).unwrap();
        assert_eq!(pe.theta_hat, -FRAC_PI_2);
        assert_eq!(pe.phi, 0.0);
        assert_eq!(pe.samples, 16);
    }

    #[test]
    fn front_over_invalid_region_errors() {
        let mut pm = plane(6, 6, |u, v| Vector3::new(u * 0.01, v * 0.01, 1.0));
        for y in 0..3 {
            for x in 0..6 {
                pm.set(x, y, None);
            }
        }
        let nf = surface_normals(&pm);
        let front = BinaryMask::from_fn(6, 6, |_, y| y < 2);
        assert!(matches!(estimate_pitch(&nf, &front), Err(Error::NoFrontNormals)));
    }

    #[test]
    fn even_count_median_takes_lower_middle() {
        let mk = |deg: f64| {
            let a = deg.to_radians();
            // normal whose pitch sample is exactly `a`: (0, -cos a, sin a)
            Some(Vector3::new(0.0, -a.cos(), a.sin()))
        };
        let nf = NormalField::new(4, 1, vec![mk(-80.0), mk(-85.0), mk(-95.0), mk(-100.0)]).unwrap();
        let pe = estimate_pitch(&nf, &BinaryMask::from_fn(4, 1, |_, _| true)).unwrap();
        assert!((pe.theta_hat.to_degrees() + 95.0).abs() < 1e-9);
    }

    #[test]
    fn median_handles_seam() {
        let mk = |deg: f64| {
            let a = deg.to_radians();
            Some(Vector3::new(0.0, -a.cos(), a.sin()))
        };
        let nf = NormalField::new(3, 1, vec![mk(179.0), mk(-179.0), mk(178.0)]).unwrap();
        let pe = estimate_pitch(&nf, &BinaryMask::from_fn(3, 1, |_, _| true)).unwrap();
        assert!((pe.theta_hat.to_degrees() - 179.0).abs() < 1e-9);
    }

    #[test]
    fn gravity_rotation_cases() {
        assert_eq!(gravity_rotation(&PitchEstimate::from_phi(0.0)), Matrix3::identity());
        let r = gravity_rotation(&PitchEstimate::from_phi(FRAC_PI_2));
        assert!((r * Vector3::z() - Vector3::y()).norm() < 1e-12);
        let r = gravity_rotation(&PitchEstimate::from_phi(0.3));
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pitch_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pitch.json");
        write_pitch(&p, &PitchEstimate::from_phi(0.25)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"phi_deg\": 14.323945"), "{text}");
        assert!((read_pitch(&p).unwrap().phi - 0.25).abs() < 1e-6);
    }
}
