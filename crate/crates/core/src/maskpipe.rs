//! Temporal stabilization of per-frame box masks.
//!
//! Frames are binarized (any box label is foreground), compared against the
//! pixel-wise median of the whole sequence, and kept only when their IoU with
//! that median reaches `tau` and their foreground is a single 8-connected
//! component. The kept frames are majority-voted into the stabilized mask,
//! and the representative frame is the one agreeing best with it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::{check_dims, BinaryMask, LabelMask, MaskSequence};
use crate::par;

pub const DEFAULT_TAU: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub tau: f64,
}

impl FilterConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidConfig(format!("tau must lie in [0, 1], got {tau}")));
        }
        Ok(Self { tau })
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

pub fn binarize(mask: &LabelMask) -> BinaryMask {
    BinaryMask::new(mask.width(), mask.height(), mask.labels().iter().map(|&l| l > 0).collect())
        .expect("label mask dimensions are valid")
}

/// Intersection over union. Two empty masks have IoU 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Number of 8-connected foreground components.
pub fn count_components(mask: &BinaryMask) -> usize {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut count = 0;
    for start in 0..w * h {
        if !mask.bits()[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.bits()[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    count
}

/// Pixel-wise median of binary masks: on iff strictly more than half the
/// masks are on, so an even split goes to background.
pub fn median_mask(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let first = masks.first().ok_or(Error::EmptySequence)?;
    let mut counts = vec![0usize; first.bits().len()];
    for m in masks {
        check_dims(first.dims(), m.dims())?;
        for (c, &b) in counts.iter_mut().zip(m.bits()) {
            *c += b as usize;
        }
    }
    let n = masks.len();
    BinaryMask::new(first.width(), first.height(), counts.iter().map(|&c| 2 * c > n).collect())
}

/// Majority vote over the kept masks; identical to [`median_mask`] for binary data.
pub fn majority_vote(kept: &[BinaryMask]) -> Result<BinaryMask> {
    median_mask(kept)
}

/// Predicate evaluation for one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameCheck {
    pub t: i64,
    pub iou: f64,
    pub components: usize,
    pub kept: bool,
}

#[derive(Clone, Debug)]
pub struct Filtered {
    pub median: BinaryMask,
    pub checks: Vec<FrameCheck>,
    /// Binarized masks of every frame, in sequence order.
    pub binary: Vec<BinaryMask>,
}

impl Filtered {
    pub fn kept_masks(&self) -> Vec<BinaryMask> {
        self.checks
            .iter()
            .zip(&self.binary)
            .filter(|(c, _)| c.kept)
            .map(|(_, m)| m.clone())
            .collect()
    }

    pub fn kept_frames(&self) -> Vec<i64> {
        self.checks.iter().filter(|c| c.kept).map(|c| c.t).collect()
    }

    pub fn discarded_frames(&self) -> Vec<i64> {
        self.checks.iter().filter(|c| !c.kept).map(|c| c.t).collect()
    }
}

/// Keeps frames whose IoU with the sequence median is at least `tau` and
/// whose foreground is one connected component.
pub fn filter_masks(seq: &MaskSequence, cfg: FilterConfig) -> Result<Filtered> {
    let binary = par::map(seq.frames(), |(_, m)| binarize(m));
    let median = median_mask(&binary)?;
    let ts: Vec<i64> = seq.frames().iter().map(|(t, _)| *t).collect();
    let checks = par::map_range(binary.len(), |i| {
        let iou = iou(&binary[i], &median).expect("sequence dimensions are uniform");
        let components = count_components(&binary[i]);
        FrameCheck {
            t: ts[i],
            iou,
            components,
            kept: iou >= cfg.tau && components == 1,
        }
    });
    if checks.iter().all(|c| !c.kept) {
        return Err(Error::AllFramesFiltered { tau: cfg.tau });
    }
    Ok(Filtered {
        median,
        checks,
        binary,
    })
}

/// Frame index with the highest IoU against `voted`; ties go to the earliest frame.
pub fn select_frame(seq: &MaskSequence, voted: &BinaryMask) -> Result<i64> {
    let binary = par::map(seq.frames(), |(_, m)| binarize(m));
    select_from(seq, &binary, voted)
}

fn select_from(seq: &MaskSequence, binary: &[BinaryMask], voted: &BinaryMask) -> Result<i64> {
    let scores = par::try_map(binary, |m| iou(m, voted))?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(seq.frames()[best].0)
}

#[derive(Clone, Debug)]
pub struct StabilizedMask {
    pub mask: BinaryMask,
    pub t_star: i64,
    pub kept: usize,
    pub discarded: usize,
    pub checks: Vec<FrameCheck>,
    /// Front-face pixels of frame `t_star` that also lie inside `mask`.
    pub front: BinaryMask,
}

/// Summary written next to the voted mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizeReport {
    pub recording: String,
    pub tau: f64,
    pub frames: usize,
    pub kept: usize,
    pub discarded: usize,
    pub t_star: i64,
    pub kept_frames: Vec<i64>,
    pub discarded_frames: Vec<i64>,
}

impl StabilizedMask {
    pub fn report(&self, recording: &str, tau: f64) -> StabilizeReport {
        StabilizeReport {
            recording: recording.to_string(),
            tau,
            frames: self.checks.len(),
            kept: self.kept,
            discarded: self.discarded,
            t_star: self.t_star,
            kept_frames: self.checks.iter().filter(|c| c.kept).map(|c| c.t).collect(),
            discarded_frames: self.checks.iter().filter(|c| !c.kept).map(|c| c.t).collect(),
        }
    }
}

pub fn stabilize(seq: &MaskSequence, cfg: FilterConfig) -> Result<StabilizedMask> {
    let filtered = filter_masks(seq, cfg)?;
    let voted = majority_vote(&filtered.kept_masks())?;
    let t_star = select_from(seq, &filtered.binary, &voted)?;
    let front = seq
        .frame(t_star)
        .ok_or_else(|| Error::Invariant(format!("selected frame {t_star} not in sequence")))?
        .select(LabelMask::FRONT)
        .and(&voted)?;
    let kept = filtered.checks.iter().filter(|c| c.kept).count();
    Ok(StabilizedMask {
        mask: voted,
        t_star,
        kept,
        discarded: filtered.checks.len() - kept,
        checks: filtered.checks,
        front,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(w: usize, h: usize, on: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| on.contains(&(x, y)))
    }

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    fn seq_of(masks: &[BinaryMask]) -> MaskSequence {
        MaskSequence::new(
            "r",
            masks
                .iter()
                .enumerate()
                .map(|(i, m)| (i as i64, m.to_label_mask()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn binarize_threshold() {
        let lm = LabelMask::new(3, 1, vec![0, 1, 2]).unwrap();
        assert_eq!(binarize(&lm).bits(), &[false, true, true]);
        assert_eq!(binarize(&LabelMask::filled(2, 2, 0).unwrap()).count(), 0);
        assert_eq!(binarize(&LabelMask::filled(2, 2, 2).unwrap()).count(), 4);
    }

    #[test]
    fn iou_cases() {
        let a = bm(2, 2, &[(0, 0), (0, 1)]);
        let b = bm(2, 2, &[(0, 1), (1, 1)]);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&bm(2, 2, &[(0, 0)]), &bm(2, 2, &[(1, 1)])).unwrap(), 0.0);
        assert_eq!(iou(&BinaryMask::empty(2, 2), &BinaryMask::empty(2, 2)).unwrap(), 1.0);
        assert!(matches!(
            iou(&a, &BinaryMask::empty(3, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn component_counts() {
        assert_eq!(count_components(&BinaryMask::empty(4, 4)), 0);
        assert_eq!(count_components(&bm(2, 2, &[(0, 0), (1, 1)])), 1);
        let two = BinaryMask::from_fn(5, 5, |_, y| y != 2);
        assert_eq!(count_components(&two), 2);
    }

    #[test]
    fn median_tie_goes_to_background() {
        let on = bm(1, 1, &[(0, 0)]);
        let off = BinaryMask::empty(1, 1);
        assert!(!median_mask(&[on.clone(), on.clone(), off.clone(), off.clone()]).unwrap().get(0, 0));
        assert!(median_mask(&[on.clone(), on.clone(), on.clone(), off.clone()]).unwrap().get(0, 0));
        let m = rect(4, 4, 1, 1, 3, 3);
        assert_eq!(median_mask(&[m.clone(), m.clone(), m.clone()]).unwrap(), m);
        assert!(matches!(median_mask(&[]), Err(Error::EmptySequence)));
    }

    #[test]
    fn majority_vote_cases() {
        let on = bm(1, 1, &[(0, 0)]);
        let off = BinaryMask::empty(1, 1);
        assert_eq!(majority_vote(std::slice::from_ref(&on)).unwrap(), on);
        let mut v = vec![on.clone(); 5];
        v.extend([off.clone(), off.clone()]);
        assert!(majority_vote(&v).unwrap().get(0, 0));
        assert!(majority_vote(&[]).is_err());
    }

    #[test]
    fn filter_keeps_identical_frames() {
        let m = rect(8, 8, 1, 1, 7, 7);
        let f = filter_masks(&seq_of(&vec![m; 5]), FilterConfig::default()).unwrap();
        assert_eq!(f.kept_frames(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn filter_drops_split_frame() {
        let m = rect(8, 8, 1, 1, 7, 7);
        let mut split = m.clone();
        for y in 0..8 {
            split.set(4, y, false);
        }
        let f = filter_masks(&seq_of(&[m.clone(), m.clone(), split, m]), FilterConfig::new(0.5).unwrap()).unwrap();
        assert_eq!(f.discarded_frames(), vec![2]);
        assert_eq!(f.checks[2].components, 2);
    }

    #[test]
    fn filter_drops_half_size_frame() {
        // 6x6 clean blob vs 6x3 half: IoU = 18 / 36 = 0.5 < 0.9
        let m = rect(8, 8, 1, 1, 7, 7);
        let half = rect(8, 8, 1, 1, 7, 4);
        let f = filter_masks(&seq_of(&[m.clone(), half, m.clone(), m]), FilterConfig::default()).unwrap();
        assert_eq!(f.discarded_frames(), vec![1]);
        assert_eq!(f.checks[1].iou, 0.5);
        assert_eq!(f.checks[1].components, 1);
    }

    #[test]
    fn all_filtered_is_an_error() {
        let m = BinaryMask::from_fn(5, 5, |_, y| y != 2);
        let err = filter_masks(&seq_of(&[m.clone(), m]), FilterConfig::default()).unwrap_err();
        assert!(err.to_string().contains("all frames filtered"));
    }

    #[test]
    fn select_frame_prefers_exact_then_earliest() {
        let a = rect(8, 8, 0, 0, 4, 4);
        let b = rect(8, 8, 0, 0, 5, 5);
        let seq = seq_of(&[a.clone(), a.clone(), a.clone(), a.clone(), b.clone(), b.clone()]);
        assert_eq!(select_frame(&seq, &b).unwrap(), 4);
        assert_eq!(select_frame(&seq, &a).unwrap(), 0);
    }

    #[test]
    fn stabilize_clean_sequence() {
        let m = rect(8, 8, 2, 2, 6, 7);
        let s = stabilize(&seq_of(&vec![m.clone(); 4]), FilterConfig::default()).unwrap();
        assert_eq!(s.mask, m);
        assert_eq!(s.t_star, 0);
        assert_eq!((s.kept, s.discarded), (4, 0));
        let r = s.report("r", 0.9);
        assert_eq!(r.kept_frames, vec![0, 1, 2, 3]);
        assert!(r.discarded_frames.is_empty());
    }

    #[test]
    fn front_mask_comes_from_selected_frame() {
        let mut a = LabelMask::filled(4, 4, 0).unwrap();
        for y in 0..4 {
            for x in 0..2 {
                a.set(x, y, if y >= 2 { 1 } else { 2 });
            }
        }
        let seq = MaskSequence::new("r", vec![(3, a.clone()), (5, a)]).unwrap();
        let s = stabilize(&seq, FilterConfig::default()).unwrap();
        assert_eq!(s.t_star, 3);
        assert_eq!(s.front.count(), 4);
        assert!(s.front.get(0, 3) && !s.front.get(0, 0));
    }
}
