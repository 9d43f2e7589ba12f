use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bbt_core::features::ScoringSpace;
use bbt_core::interchange::{
    write_angles_csv, write_json, write_keypoints, write_mask_sequence, write_point_map, AngleRow, Side, SkeletonSpec,
};
use bbt_core::pipeline::{self, PipelineConfig};
use bbt_core::scoring::BaselineMode;
use bbt_core::synth::{self, Corruption, ImpairmentSpec, PopulationSpec, SyntheticMotion, SyntheticScene};
use bbt_core::{par, Error};

mod config;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "bbt", version, about = "Box and Block Test movement analysis")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter a mask sequence and vote a stable box mask.
    Stabilize {
        /// Directory of mask_<t>.pgm files.
        #[arg(long)]
        masks: PathBuf,
        /// Output directory for stabilize.json, voted.pgm and front.pgm.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = bbt_core::maskpipe::DEFAULT_TAU)]
        tau: f64,
    },
    /// Estimate camera pitch from the box front face.
    Calibrate {
        #[arg(long)]
        pointmap: PathBuf,
        /// Front-face mask (front.pgm from `stabilize`).
        #[arg(long)]
        front: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gravity-align keypoints and compute the 18 joint angles.
    Angles {
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        pitch: PathBuf,
        /// Recording id for the table; defaults to the keypoint file's directory name.
        #[arg(long)]
        recording: Option<String>,
        #[arg(long)]
        skeleton: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit or apply the finger-angle PCA.
    #[command(subcommand)]
    Pca(PcaCommand),
    /// Compute the healthy KNN baseline.
    Baseline {
        /// Healthy feature tables.
        #[arg(long, required = true, num_args = 1..)]
        reference: Vec<PathBuf>,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score subject-sides against the healthy reference.
    Score {
        #[arg(long, required = true, num_args = 1..)]
        features: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        reference: Vec<PathBuf>,
        /// JSON array of recording metadata.
        #[arg(long)]
        meta: PathBuf,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic data with known ground truth.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run every stage over a dataset directory.
    Pipeline(PipelineArgs),
}

#[derive(Subcommand, Debug)]
enum PcaCommand {
    Fit {
        #[arg(long, required = true, num_args = 1..)]
        angles: Vec<PathBuf>,
        #[arg(long, default_value_t = bbt_core::features::DEFAULT_VARIANCE_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        angles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ScoringArgs {
    #[arg(long, default_value_t = bbt_core::scoring::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = ScoringSpace::Pca)]
    space: ScoringSpace,
    #[arg(long, default_value_t = BaselineMode::Knn)]
    baseline: BaselineMode,
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    Scene {
        #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
        pitch_deg: f64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 0.0)]
        corruption: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Motion {
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        pitch_deg: f64,
        #[arg(long, default_value_t = Side::Right)]
        side: Side,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Population {
        #[arg(long, default_value_t = 20)]
        healthy: usize,
        #[arg(long, default_value_t = 4)]
        impaired: usize,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        #[arg(long, default_value_t = 20.0)]
        trunk_lean: f64,
        #[arg(long, default_value_t = 0.4)]
        elbow_compression: f64,
        #[arg(long, default_value_t = 0.0)]
        finger_deficit: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
pub struct PipelineArgs {
    /// TOML file with pipeline settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub space: Option<ScoringSpace>,
    #[arg(long)]
    pub baseline: Option<BaselineMode>,
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult = Result<(), Failure>;

fn skeleton(path: Option<&Path>) -> Result<SkeletonSpec, Error> {
    path.map_or_else(|| Ok(SkeletonSpec::canonical()), SkeletonSpec::load)
}

#[derive(Serialize)]
struct SceneManifest {
    pitch_rad: f64,
    pitch_deg: f64,
    noise_sigma: f64,
    corrupted_frames: Vec<i64>,
    corruption_kinds: Vec<Corruption>,
    seed: u64,
}

#[derive(Serialize)]
struct MotionManifest {
    pitch_rad: f64,
    pitch_deg: f64,
    side: Side,
    frames: usize,
    seed: u64,
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn run_synth(cmd: SynthCommand) -> CliResult {
    match cmd {
        SynthCommand::Scene {
            pitch_deg,
            size,
            noise,
            frames,
            corruption,
            seed,
            out,
        } => {
            let scene = SyntheticScene {
                pitch: pitch_deg.to_radians(),
                width: size,
                height: size,
                noise_sigma: noise,
                mask_frames: frames,
                corruption,
                seed,
                ..Default::default()
            };
            scene.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let s = synth::gen_scene(&scene)?;
            create_dir(&out)?;
            write_mask_sequence(&out.join("masks"), &s.masks)?;
            write_point_map(&out.join("pointmap.bin"), &s.point_map)?;
            write_json(
                &out.join("manifest.json"),
                &SceneManifest {
                    pitch_rad: s.pitch,
                    pitch_deg,
                    noise_sigma: noise,
                    corrupted_frames: s.corrupted.iter().map(|c| c.0).collect(),
                    corruption_kinds: s.corrupted.iter().map(|c| c.1).collect(),
                    seed,
                },
            )?;
        }
        SynthCommand::Motion {
            frames,
            pitch_deg,
            side,
            seed,
            out,
        } => {
            let motion = SyntheticMotion {
                side,
                segments: Default::default(),
                targets: synth::random_targets(frames, 10.0, 170.0, seed),
                seed,
            };
            motion.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let (kp, truth) = synth::gen_motion(&motion, pitch_deg.to_radians(), &SkeletonSpec::canonical())?;
            create_dir(&out)?;
            write_keypoints(&out.join("keypoints.jsonl"), &kp)?;
            let rows: Vec<AngleRow> = truth
                .into_iter()
                .map(|angles| AngleRow {
                    recording: "motion".into(),
                    angles,
                })
                .collect();
            write_angles_csv(&out.join("truth_angles.csv"), &rows)?;
            write_json(
                &out.join("manifest.json"),
                &MotionManifest {
                    pitch_rad: pitch_deg.to_radians(),
                    pitch_deg,
                    side,
                    frames,
                    seed,
                },
            )?;
        }
        SynthCommand::Population {
            healthy,
            impaired,
            frames,
            trunk_lean,
            elbow_compression,
            finger_deficit,
            seed,
            out,
        } => {
            let spec = PopulationSpec {
                n_healthy: healthy,
                n_impaired: impaired,
                frames,
                impairment: ImpairmentSpec {
                    trunk_lean_deg: trunk_lean,
                    elbow_range_compression: elbow_compression,
                    finger_flexion_deficit_deg: finger_deficit,
                },
                seed,
                ..Default::default()
            };
            spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let pop = synth::gen_population(&spec, &SkeletonSpec::canonical())?;
            synth::write_population(&out, &pop)?;
            println!("wrote {} recordings to {}", pop.recordings.len(), out.display());
        }
    }
    Ok(())
}

fn run_pipeline(args: PipelineArgs, jobs: Option<usize>) -> CliResult {
    let cfg: PipelineConfig = config::resolve(&args, jobs).map_err(Failure::Usage)?;
    let summary = pipeline::run_pipeline(&cfg)?;
    println!(
        "{} recordings, {} PCs, baseline {}, scores in {}",
        summary.recordings,
        summary.pca_k,
        summary.baseline.baseline,
        cfg.out.join("scores.csv").display()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let jobs = cli.jobs;
    let cmd = cli.command;
    if let Command::Pipeline(args) = cmd {
        return run_pipeline(args, jobs);
    }
    par::with_jobs(jobs.unwrap_or(0), move || match cmd {
        Command::Stabilize { masks, out, tau } => {
            let r = pipeline::stabilize_stage(&masks, &out, tau)?;
            println!("kept {} of {} frames, t* = {}", r.kept, r.frames, r.t_star);
            Ok(())
        }
        Command::Calibrate { pointmap, front, out } => {
            let pe = pipeline::calibrate_stage(&pointmap, &front, &out)?;
            println!("phi = {:.6} deg ({} samples)", pe.phi_deg(), pe.samples);
            Ok(())
        }
        Command::Angles {
            keypoints,
            pitch,
            recording,
            skeleton: sk,
            out,
        } => {
            let spec = skeleton(sk.as_deref())?;
            let recording = recording
                .or_else(|| {
                    keypoints
                        .canonicalize()
                        .ok()?
                        .parent()?
                        .file_name()
                        .map(|s| s.to_string_lossy().into_owned())
                })
                .unwrap_or_else(|| "recording".into());
            pipeline::angles_stage(&keypoints, &pitch, &spec, &recording, &out)?;
            Ok(())
        }
        Command::Pca(PcaCommand::Fit { angles, threshold, out }) => {
            let m = pipeline::pca_fit_stage(&angles, threshold, &out)?;
            println!("k = {} ({:.4} of variance)", m.k, m.retained_ratio());
            Ok(())
        }
        Command::Pca(PcaCommand::Apply { model, angles, out }) => {
            pipeline::pca_apply_stage(&model, &angles, &out)?;
            Ok(())
        }
        Command::Baseline { reference, scoring, out } => {
            let b = pipeline::baseline_stage(&reference, scoring.space, scoring.k, scoring.baseline, &out)?;
            println!("baseline {} over {} frames", b.baseline, b.reference_frames);
            Ok(())
        }
        Command::Score {
            features,
            reference,
            meta,
            scoring,
            out,
        } => {
            pipeline::score_stage(&features, &reference, &meta, scoring.space, scoring.k, scoring.baseline, &out)?;
            Ok(())
        }
        Command::Synth(s) => run_synth(s),
        Command::Pipeline(_) => unreachable!("handled above"),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BBT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_internal() { EXIT_INTERNAL } else { EXIT_DATA })
        }
    }
}
