//! File-to-file stages and the end-to-end run over a dataset directory.
//!
//! Each stage reads its inputs from disk and writes its artifacts, so the
//! pipeline and a chain of single-stage CLI calls produce identical bytes.
//!
//! Dataset layout: `<data>/recordings/<id>/{meta.json, masks/, pointmap.bin,
//! keypoints.jsonl}`. Output layout: `<out>/recordings/<id>/{stabilize.json,
//! voted.pgm, front.pgm, pitch.json, angles.csv, features.csv}` plus
//! `<out>/{meta.json, pca.json, baseline.json, scores.csv}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calib::{estimate_pitch, gravity_rotation, read_pitch, surface_normals, write_pitch, PitchEstimate, PitchRecord};
use crate::error::{Error, Result};
use crate::features::{assemble_batch, fit_pca, PcaModel, ScoringSpace, DEFAULT_VARIANCE_THRESHOLD};
use crate::interchange::{
    read_angles_csv, read_features_many, read_keypoints, read_mask_sequence, read_meta, read_meta_list, read_pgm,
    read_point_map, round6, write_angles_csv, write_features_csv, write_json, write_pgm, AngleRow, Cohort,
    FeatureRow, RecordingMeta, SkeletonSpec, N_FINGER,
};
use crate::kinematics::{align_to_gravity, AngleSolver};
use crate::maskpipe::{binarize, stabilize, FilterConfig, StabilizeReport, DEFAULT_TAU};
use crate::par;
use crate::scoring::{
    population_self_score, score_recordings, score_report, write_report, BaselineMode, HealthyReference,
    ReferenceSet, ReportRow, DEFAULT_K,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tau: f64,
    pub k: usize,
    pub threshold: f64,
    pub space: ScoringSpace,
    pub baseline: BaselineMode,
    /// Skeleton definition; the canonical one when unset.
    pub skeleton: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            k: DEFAULT_K,
            threshold: DEFAULT_VARIANCE_THRESHOLD,
            space: ScoringSpace::default(),
            baseline: BaselineMode::default(),
            skeleton: None,
            data: PathBuf::from("data"),
            out: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        FilterConfig::new(self.tau)?;
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidConfig("variance threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn skeleton(&self) -> Result<SkeletonSpec> {
        match &self.skeleton {
            Some(p) => SkeletonSpec::load(p),
            None => Ok(SkeletonSpec::canonical()),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `stabilize.json`, `voted.pgm` and `front.pgm` into `out_dir`.
pub fn stabilize_stage(masks: &Path, out_dir: &Path, tau: f64) -> Result<StabilizeReport> {
    let cfg = FilterConfig::new(tau)?;
    let seq = read_mask_sequence(masks)?;
    let st = stabilize(&seq, cfg)?;
    let report = st.report(&seq.recording, tau);
    log::debug!(
        "{}: kept {}/{} frames, t* = {}",
        seq.recording,
        st.kept,
        st.checks.len(),
        st.t_star
    );
    create_dir(out_dir)?;
    write_json(&out_dir.join("stabilize.json"), &report)?;
    write_pgm(&out_dir.join("voted.pgm"), &st.mask.to_label_mask())?;
    write_pgm(&out_dir.join("front.pgm"), &st.front.to_label_mask())?;
    Ok(report)
}

/// Estimates pitch from a point map and a front-face mask; returns the
/// estimate as stored in `out`.
pub fn calibrate_stage(point_map: &Path, front: &Path, out: &Path) -> Result<PitchEstimate> {
    let pm = read_point_map(point_map)?;
    let front = binarize(&read_pgm(front)?);
    let pe = estimate_pitch(&surface_normals(&pm), &front)?;
    log::debug!("{}: phi = {:.4} deg from {} samples", point_map.display(), pe.phi_deg(), pe.samples);
    write_pitch(out, &pe)?;
    Ok(PitchRecord::from(&pe).estimate())
}

/// Aligns keypoints to gravity and writes the 18 angles per frame.
pub fn angles_stage(
    keypoints: &Path,
    pitch: &Path,
    skeleton: &SkeletonSpec,
    recording: &str,
    out: &Path,
) -> Result<Vec<AngleRow>> {
    let frames = read_keypoints(keypoints, skeleton)?;
    let pe = read_pitch(pitch)?;
    let aligned = align_to_gravity(&frames, &gravity_rotation(&pe));
    let rows: Vec<AngleRow> = AngleSolver::new(skeleton)
        .angles_batch(&aligned)?
        .into_iter()
        .map(|angles| AngleRow {
            recording: recording.to_string(),
            angles,
        })
        .collect();
    write_angles_csv(out, &rows)?;
    Ok(rows)
}

/// Fits finger PCA over the rows of every angle table.
pub fn pca_fit_stage(angle_tables: &[impl AsRef<Path>], threshold: f64, out: &Path) -> Result<PcaModel> {
    let mut fingers: Vec<[f64; N_FINGER]> = Vec::new();
    for p in angle_tables {
        for r in read_angles_csv(p.as_ref())? {
            let mut f = [0.0; N_FINGER];
            f.copy_from_slice(r.angles.fingers());
            fingers.push(f);
        }
    }
    let model = fit_pca(&fingers, threshold)?;
    log::info!(
        "PCA: k = {} of {} components, {:.4} of variance",
        model.k,
        model.dim(),
        model.retained_ratio()
    );
    model.save(out)?;
    Ok(model)
}

pub fn pca_apply_stage(model: &Path, angles: &Path, out: &Path) -> Result<Vec<FeatureRow>> {
    let model = PcaModel::load(model)?;
    let rows = read_angles_csv(angles)?;
    let frames: Vec<_> = rows.iter().map(|r| r.angles.clone()).collect();
    let features = assemble_batch(&frames, &model);
    let out_rows: Vec<FeatureRow> = rows
        .iter()
        .zip(features)
        .map(|(r, features)| FeatureRow {
            recording: r.recording.clone(),
            t: r.angles.t,
            side: r.angles.side,
            features,
        })
        .collect();
    write_features_csv(out, &out_rows)?;
    Ok(out_rows)
}

/// `baseline.json` contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub space: ScoringSpace,
    pub mode: BaselineMode,
    pub k: usize,
    pub baseline: f64,
    pub self_score: f64,
    pub reference_frames: usize,
    pub reference_recordings: usize,
}

fn reference_from(tables: &[impl AsRef<Path>], space: ScoringSpace, k: usize, mode: BaselineMode) -> Result<HealthyReference> {
    let rows = read_features_many(tables)?;
    HealthyReference::new(ReferenceSet::from_feature_rows(&rows, space)?, k, mode)
}

pub fn baseline_stage(
    reference: &[impl AsRef<Path>],
    space: ScoringSpace,
    k: usize,
    mode: BaselineMode,
    out: &Path,
) -> Result<BaselineRecord> {
    let r = reference_from(reference, space, k, mode)?;
    let rec = BaselineRecord {
        space,
        mode,
        k,
        baseline: round6(r.baseline),
        self_score: round6(population_self_score(&r)?),
        reference_frames: r.set.len(),
        reference_recordings: r.set.recordings().len(),
    };
    log::info!("baseline {} over {} frames", rec.baseline, rec.reference_frames);
    write_json(out, &rec)?;
    Ok(rec)
}

/// Scores every subject-side in `features` against the healthy `reference` tables.
pub fn score_stage(
    features: &[impl AsRef<Path>],
    reference: &[impl AsRef<Path>],
    meta: &Path,
    space: ScoringSpace,
    k: usize,
    mode: BaselineMode,
    out: &Path,
) -> Result<Vec<ReportRow>> {
    let metas = read_meta_list(meta)?;
    let r = reference_from(reference, space, k, mode)?;
    let rows = read_features_many(features)?;
    let report = score_report(&score_recordings(&rows, &metas, &r, space)?, &metas)?;
    write_report(out, &report)?;
    Ok(report)
}

/// Recording directories under `<data>/recordings`, sorted by id.
pub fn discover(data: &Path) -> Result<Vec<(String, PathBuf)>> {
    let root = data.join("recordings");
    let entries = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    let mut out = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(&root, e))?;
        if e.path().is_dir() {
            out.push((e.file_name().to_string_lossy().into_owned(), e.path()));
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig(format!("no recordings under {}", root.display())));
    }
    out.sort();
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PipelineSummary {
    pub recordings: usize,
    pub pca_k: usize,
    pub baseline: BaselineRecord,
    pub report: Vec<ReportRow>,
}

fn run_recording(id: &str, dir: &Path, out: &Path, cfg: &PipelineConfig, skeleton: &SkeletonSpec) -> Result<RecordingMeta> {
    let meta = read_meta(&dir.join("meta.json")).map_err(|e| e.in_stage("meta", id))?;
    if meta.recording != id {
        return Err(Error::InvalidConfig(format!("meta.json names recording '{}'", meta.recording)).in_stage("meta", id));
    }
    stabilize_stage(&dir.join("masks"), out, cfg.tau).map_err(|e| e.in_stage("stabilize", id))?;
    calibrate_stage(&dir.join("pointmap.bin"), &out.join("front.pgm"), &out.join("pitch.json"))
        .map_err(|e| e.in_stage("calibrate", id))?;
    angles_stage(
        &dir.join("keypoints.jsonl"),
        &out.join("pitch.json"),
        skeleton,
        id,
        &out.join("angles.csv"),
    )
    .map_err(|e| e.in_stage("angles", id))?;
    Ok(meta)
}

/// Runs every stage over the dataset. Per-recording stages run in parallel;
/// the cohort stages start once all recordings are done.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    cfg.validate()?;
    let skeleton = cfg.skeleton()?;
    par::with_jobs(cfg.jobs, || run_inner(cfg, &skeleton))
}

fn run_inner(cfg: &PipelineConfig, skeleton: &SkeletonSpec) -> Result<PipelineSummary> {
    let recs = discover(&cfg.data)?;
    let out = &cfg.out;
    let rec_out = |id: &str| out.join("recordings").join(id);
    log::info!("{} recordings", recs.len());

    let metas = par::try_map(&recs, |(id, dir)| run_recording(id, dir, &rec_out(id), cfg, skeleton))?;
    write_json(&out.join("meta.json"), &metas)?;

    let healthy: Vec<&str> = metas
        .iter()
        .filter(|m| m.cohort == Cohort::Healthy)
        .map(|m| m.recording.as_str())
        .collect();
    let healthy_angles: Vec<PathBuf> = healthy.iter().map(|id| rec_out(id).join("angles.csv")).collect();
    let model = pca_fit_stage(&healthy_angles, cfg.threshold, &out.join("pca.json")).map_err(|e| e.in_stage("pca-fit", "cohort"))?;

    let pca_path = out.join("pca.json");
    par::try_map(&recs, |(id, _)| {
        let d = rec_out(id);
        pca_apply_stage(&pca_path, &d.join("angles.csv"), &d.join("features.csv")).map_err(|e| e.in_stage("pca-apply", id.clone()))
    })?;

    let features: Vec<PathBuf> = recs.iter().map(|(id, _)| rec_out(id).join("features.csv")).collect();
    let reference: Vec<PathBuf> = healthy.iter().map(|id| rec_out(id).join("features.csv")).collect();
    let baseline = baseline_stage(&reference, cfg.space, cfg.k, cfg.baseline, &out.join("baseline.json"))
        .map_err(|e| e.in_stage("baseline", "cohort"))?;
    let report = score_stage(
        &features,
        &reference,
        &out.join("meta.json"),
        cfg.space,
        cfg.k,
        cfg.baseline,
        &out.join("scores.csv"),
    )
    .map_err(|e| e.in_stage("score", "cohort"))?;

    Ok(PipelineSummary {
        recordings: recs.len(),
        pca_k: model.k,
        baseline,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_population, write_population, PopulationSpec};

    fn dataset(dir: &Path) {
        let spec = PopulationSpec {
            n_healthy: 4,
            n_impaired: 1,
            frames: 30,
            mask_frames: 8,
            seed: 5,
            ..Default::default()
        };
        write_population(dir, &gen_population(&spec, &SkeletonSpec::canonical()).unwrap()).unwrap();
    }

    #[test]
    fn runs_and_reports_every_side() {
        let tmp = tempfile::tempdir().unwrap();
        let data = tmp.path().join("data");
        dataset(&data);
        let cfg = PipelineConfig {
            data,
            out: tmp.path().join("out"),
            k: 5,
            ..Default::default()
        };
        let s = run_pipeline(&cfg).unwrap();
        assert_eq!(s.recordings, 5);
        assert_eq!(s.report.len(), 5);
        assert_eq!(s.baseline.self_score, 1.0);
        for f in ["pca.json", "baseline.json", "scores.csv", "meta.json", "recordings/H01/features.csv"] {
            assert!(cfg.out.join(f).is_file(), "{f}");
        }
    }

    #[test]
    fn missing_pointmap_names_calibrate() {
        let tmp = tempfile::tempdir().unwrap();
        let data = tmp.path().join("data");
        dataset(&data);
        fs::remove_file(data.join("recordings/H03/pointmap.bin")).unwrap();
        let cfg = PipelineConfig {
            data,
            out: tmp.path().join("out"),
            k: 5,
            ..Default::default()
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(&err, Error::Stage { stage: "calibrate", recording, .. } if recording == "H03"), "{err}");
        assert!(!err.is_internal());
    }

    #[test]
    fn bad_config_rejected() {
        for cfg in [
            PipelineConfig { k: 0, ..Default::default() },
            PipelineConfig { tau: 1.5, ..Default::default() },
            PipelineConfig { threshold: 0.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
