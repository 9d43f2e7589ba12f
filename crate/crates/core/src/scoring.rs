//! KNN deviation scores against the healthy frame population.
//!
//! A frame's raw score is its mean Euclidean distance to the `k` nearest
//! healthy frames. Healthy frames are scored against every healthy
//! recording except their own. The baseline is the mean of those
//! leave-own-recording-out distances over all healthy frames, and a side's
//! score is its mean raw distance divided by the baseline, so the healthy
//! population averages exactly 1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ScoringSpace;
use crate::interchange::{fmt6, Cohort, FeatureRow, RecordingMeta, Side};
use crate::par;

pub const DEFAULT_K: usize = 15;

/// Row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Invariant(format!("{} values do not form rows of {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Invariant("ragged feature rows".into()));
        }
        Self::new(dim.max(1), rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Feature rows tagged with the recording each came from.
#[derive(Clone, Debug)]
pub struct ReferenceSet {
    features: FeatureMatrix,
    recordings: Vec<String>,
    group: Vec<u32>,
}

impl ReferenceSet {
    pub fn new(features: FeatureMatrix, recording_of_row: &[String]) -> Result<Self> {
        if recording_of_row.len() != features.len() {
            return Err(Error::Invariant("one recording id per reference row required".into()));
        }
        let recordings: Vec<String> = recording_of_row
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let group = recording_of_row
            .iter()
            .map(|r| recordings.binary_search(r).expect("collected above") as u32)
            .collect();
        Ok(Self {
            features,
            recordings,
            group,
        })
    }

    pub fn from_feature_rows(rows: &[FeatureRow], space: ScoringSpace) -> Result<Self> {
        let vecs: Vec<Vec<f64>> = rows.iter().map(|r| r.features.scoring(space)).collect();
        let ids: Vec<String> = rows.iter().map(|r| r.recording.clone()).collect();
        Self::new(FeatureMatrix::from_rows(&vecs)?, &ids)
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn recordings(&self) -> &[String] {
        &self.recordings
    }

    pub fn contains_recording(&self, id: &str) -> bool {
        self.group_of(id).is_some()
    }

    pub fn recording_of(&self, row: usize) -> &str {
        &self.recordings[self.group[row] as usize]
    }

    fn group_of(&self, id: &str) -> Option<u32> {
        self.recordings.binary_search_by(|r| r.as_str().cmp(id)).ok().map(|g| g as u32)
    }
}

/// Mean distance from `query` to its `k` nearest reference rows, skipping
/// rows of recording `exclude`. Exact: ties at the k-th neighbour resolve by
/// (distance, row index) and the selected distances are summed in that order.
pub fn knn_mean_distance(query: &[f64], reference: &ReferenceSet, k: usize, exclude: Option<&str>) -> Result<f64> {
    let skip = exclude.and_then(|id| reference.group_of(id));
    knn_inner(query, reference, k, skip)
}

fn knn_inner(query: &[f64], reference: &ReferenceSet, k: usize, skip: Option<u32>) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if query.len() != reference.features.dim() {
        return Err(Error::DimensionMismatch {
            expected: (reference.features.dim(), 1),
            found: (query.len(), 1),
        });
    }
    let mut d: Vec<(f64, usize)> = reference
        .features
        .rows()
        .enumerate()
        .filter(|(i, _)| Some(reference.group[*i]) != skip)
        .map(|(i, r)| (euclidean(query, r), i))
        .collect();
    if d.len() < k {
        return Err(Error::TooFewReference {
            needed: k,
            available: d.len(),
        });
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if d.len() > k {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_unstable_by(cmp);
    Ok(d.iter().map(|(x, _)| x).sum::<f64>() / k as f64)
}

/// How the normalizing constant is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// Mean leave-own-recording-out KNN distance over healthy frames.
    #[default]
    Knn,
    /// Mean distance over all pairs of healthy frames.
    AllPairs,
}

impl FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "knn" => Ok(BaselineMode::Knn),
            "all-pairs" => Ok(BaselineMode::AllPairs),
            other => Err(format!("unknown baseline mode '{other}' (expected knn or all-pairs)")),
        }
    }
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMode::Knn => "knn",
            BaselineMode::AllPairs => "all-pairs",
        })
    }
}

/// Leave-own-recording-out KNN distance of every reference row, in row order.
pub fn leave_out_distances(reference: &ReferenceSet, k: usize) -> Result<Vec<f64>> {
    let out = par::map_range(reference.len(), |i| {
        knn_inner(reference.features.row(i), reference, k, Some(reference.group[i]))
    });
    out.into_iter().collect()
}

/// Sequential left-to-right mean, so equal inputs give bit-equal results.
fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn healthy_baseline(reference: &ReferenceSet, k: usize, mode: BaselineMode) -> Result<f64> {
    if reference.len() <= k {
        return Err(Error::TooFewReference {
            needed: k + 1,
            available: reference.len(),
        });
    }
    let b = match mode {
        BaselineMode::Knn => mean(&leave_out_distances(reference, k)?),
        BaselineMode::AllPairs => {
            let n = reference.len();
            let f = &reference.features;
            let sums = par::map_range(n, |i| ((i + 1)..n).map(|j| euclidean(f.row(i), f.row(j))).sum::<f64>());
            sums.iter().sum::<f64>() / (n * (n - 1) / 2) as f64
        }
    };
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::DegenerateBaseline(b));
    }
    Ok(b)
}

#[derive(Clone, Debug)]
pub struct HealthyReference {
    pub set: ReferenceSet,
    pub k: usize,
    pub baseline: f64,
    pub mode: BaselineMode,
}

impl HealthyReference {
    pub fn new(set: ReferenceSet, k: usize, mode: BaselineMode) -> Result<Self> {
        let baseline = healthy_baseline(&set, k, mode)?;
        Ok(Self {
            set,
            k,
            baseline,
            mode,
        })
    }

    /// Per-frame raw distances. Frames whose recording is part of the
    /// reference are scored without that recording.
    pub fn frame_distances(&self, rows: &[(String, Vec<f64>)]) -> Result<Vec<f64>> {
        par::try_map(rows, |(rec, q)| {
            let skip = self.set.group_of(rec);
            knn_inner(q, &self.set, self.k, skip)
        })
    }
}

/// Mean leave-out score of the healthy population; 1 by construction in
/// [`BaselineMode::Knn`].
pub fn population_self_score(reference: &HealthyReference) -> Result<f64> {
    Ok(mean(&leave_out_distances(&reference.set, reference.k)?) / reference.baseline)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationScore {
    pub subject: String,
    pub side: Side,
    /// `None` aggregates every session of the subject-side.
    pub session: Option<u32>,
    pub score: f64,
    pub frames: usize,
    pub raw: f64,
}

/// Scores one subject-side from its frames' feature vectors.
pub fn score_side(
    subject: &str,
    side: Side,
    frames: &[Vec<f64>],
    reference: &HealthyReference,
    exclude: Option<&str>,
) -> Result<DeviationScore> {
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    if !(reference.baseline > 0.0) {
        return Err(Error::DegenerateBaseline(reference.baseline));
    }
    let skip = exclude.and_then(|id| reference.set.group_of(id));
    let d = par::try_map(frames, |q| knn_inner(q, &reference.set, reference.k, skip))?;
    let raw = mean(&d);
    Ok(DeviationScore {
        subject: subject.to_string(),
        side,
        session: None,
        score: raw / reference.baseline,
        frames: frames.len(),
        raw,
    })
}

/// Scores every subject-side in `rows`, pooling frames across sessions.
/// Subject-sides recorded in several sessions also get one row per session.
pub fn score_recordings(
    rows: &[FeatureRow],
    metas: &[RecordingMeta],
    reference: &HealthyReference,
    space: ScoringSpace,
) -> Result<Vec<DeviationScore>> {
    let by_rec: BTreeMap<&str, &RecordingMeta> = metas.iter().map(|m| (m.recording.as_str(), m)).collect();
    let queries: Vec<(String, Vec<f64>)> = rows
        .iter()
        .map(|r| (r.recording.clone(), r.features.scoring(space)))
        .collect();
    let dist = reference.frame_distances(&queries)?;

    // (subject, side) -> session -> distances, in row order
    let mut groups: BTreeMap<(String, Side), BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for (row, d) in rows.iter().zip(dist) {
        let m = by_rec.get(row.recording.as_str()).ok_or_else(|| Error::UnmatchedSubjectSide {
            subject: row.recording.clone(),
            side: row.side.to_string(),
        })?;
        groups
            .entry((m.subject.clone(), m.side))
            .or_default()
            .entry(m.session)
            .or_default()
            .push(d);
    }

    let mut out = Vec::new();
    for ((subject, side), sessions) in groups {
        let pooled: Vec<f64> = sessions.values().flatten().copied().collect();
        let raw = mean(&pooled);
        out.push(DeviationScore {
            subject: subject.clone(),
            side,
            session: None,
            score: raw / reference.baseline,
            frames: pooled.len(),
            raw,
        });
        if sessions.len() > 1 {
            for (s, d) in &sessions {
                let raw = mean(d);
                out.push(DeviationScore {
                    subject: subject.clone(),
                    side,
                    session: Some(*s),
                    score: raw / reference.baseline,
                    frames: d.len(),
                    raw,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub subject: String,
    pub side: Side,
    pub session: Option<u32>,
    pub cohort: Cohort,
    pub impairment: String,
    pub frames: usize,
    pub raw_distance: f64,
    pub score: f64,
}

/// Joins scores to recording metadata by subject and side.
pub fn score_report(scores: &[DeviationScore], metas: &[RecordingMeta]) -> Result<Vec<ReportRow>> {
    let mut seen = BTreeSet::new();
    let mut rows = Vec::with_capacity(scores.len());
    for s in scores {
        if !seen.insert((s.subject.clone(), s.side, s.session)) {
            return Err(Error::DuplicateRow(format!(
                "{}/{}{}",
                s.subject,
                s.side,
                s.session.map(|x| format!(" session {x}")).unwrap_or_default()
            )));
        }
        let m = metas
            .iter()
            .find(|m| m.subject == s.subject && m.side == s.side)
            .ok_or_else(|| Error::UnmatchedSubjectSide {
                subject: s.subject.clone(),
                side: s.side.to_string(),
            })?;
        rows.push(ReportRow {
            subject: s.subject.clone(),
            side: s.side,
            session: s.session,
            cohort: m.cohort,
            impairment: m.impairment.label().to_string(),
            frames: s.frames,
            raw_distance: s.raw,
            score: s.score,
        });
    }
    rows.sort_by(|a, b| (&a.subject, a.side, a.session).cmp(&(&b.subject, b.side, b.session)));
    Ok(rows)
}

pub const REPORT_HEADER: &str = "subject,side,session,cohort,impairment,frames,raw_distance,score";

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let cohort = match r.cohort {
            Cohort::Healthy => "healthy",
            Cohort::Patient => "patient",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.subject,
            r.side,
            r.session.map_or("all".to_string(), |s| s.to_string()),
            cohort,
            r.impairment,
            r.frames,
            fmt6(r.raw_distance),
            fmt6(r.score)
        ));
    }
    out
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    std::fs::write(path, report_csv(rows)).map_err(|e| Error::io(path, e))
}
