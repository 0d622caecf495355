//! The `spinecomp` command line.
//!
//! Every subcommand shares `--config`, repeatable `--set key=value`
//! overrides, an output directory `--out` and `-v` verbosity. Each run
//! writes `resolved_config.toml` next to its outputs. Failures print one
//! JSON line `{"error": <category>, "message": <text>}` to stderr and exit
//! with status 1.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geometry::{unproject, CameraIntrinsics, RigidTransform};
use crate::io::{
    atomic_write_str, read_color_png, read_depth_png, read_json, read_mask_png, read_ply, read_ply_mesh, write_json,
    write_ply, PlyFormat,
};
use crate::metrics::report::MetricsReport;
use crate::nn::train::prepare_input;
use crate::nn::{checkpoint, train, CompletionModel};
use crate::pipeline::dataset::{build_dataset, downsample_spine, SampleRecord};
use crate::pipeline::experiment::{evaluate_prediction, run_crossval, training_pairs};
use crate::pipeline::synth::{write_fixture, FixtureSpec};
use crate::pipeline::{correlation_matrix, default_variables, extract_vertebra, generate_gt_labels, levels_present};

#[derive(Debug, Parser)]
#[command(name = "spinecomp", version, about = "Vertebra shape completion from RGB-D point clouds")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `train.lr=1e-3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, short, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unproject a masked depth image into `spine.ply`.
    Project {
        #[arg(long)]
        depth: PathBuf,
        /// Spine mask; any non-zero pixel is kept.
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        color: Option<PathBuf>,
        /// JSON intrinsics file, or `fx,fy,cx,cy` with the size taken from the depth image.
        #[arg(long)]
        intrinsics: String,
        /// Reduce to `projection.spine_points` with the configured method.
        #[arg(long)]
        downsample: bool,
    },
    /// Label a spine cloud by nearest posed mesh; writes `labeled.ply` and
    /// one `vertebra_L<n>.ply` per visible level.
    Label {
        #[arg(long)]
        spine: PathBuf,
        /// `LEVEL=PATH`, repeatable.
        #[arg(long = "mesh", required = true, value_name = "LEVEL=PATH")]
        meshes: Vec<String>,
        /// JSON row-major 4×4 CT-to-camera transform.
        #[arg(long)]
        pose: PathBuf,
    },
    /// Train on every sample of a manifest; writes `model.ckpt` and `loss_curve.csv`.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Restrict training to these specimens (comma separated).
        #[arg(long, value_delimiter = ',')]
        specimens: Vec<String>,
        /// Specimens scored after each epoch (comma separated).
        #[arg(long, value_delimiter = ',')]
        validate: Vec<String>,
    },
    /// Complete one partial cloud (resampled to the model's input size);
    /// writes `completed.ply`.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Score a prediction against ground truth; writes `metrics.csv`.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Partial input for the visible/occluded split and IoU_input; defaults to the prediction.
        #[arg(long)]
        partial: Option<PathBuf>,
        #[arg(long, default_value = "")]
        specimen: String,
        #[arg(long, default_value = "")]
        frame: String,
        #[arg(long, default_value_t = 0)]
        level: u32,
    },
    /// Leave-one-specimen-out cross-validation over a manifest.
    Crossval {
        #[arg(long)]
        manifest: PathBuf,
        /// Also store each fold's trained model.
        #[arg(long)]
        save_models: bool,
    },
    /// Aggregate a metrics CSV into summaries and a correlation matrix.
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Write the synthetic two-specimen fixture.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.common.verbose);
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            1
        }
    }
}

/// Machine-readable error line.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": e.category(), "message": e.to_string() }).to_string()
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = ExperimentConfig::load(cli.common.config.as_deref(), &cli.common.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg, &cli.common.out))
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    match cmd {
        Command::Project {
            depth,
            mask,
            color,
            intrinsics,
            downsample,
        } => project(cfg, out, depth, mask, color.as_deref(), intrinsics, *downsample),
        Command::Label { spine, meshes, pose } => label(cfg, out, spine, meshes, pose),
        Command::Train {
            manifest,
            specimens,
            validate,
        } => train_cmd(cfg, out, manifest, specimens, validate),
        Command::Infer { model, input } => {
            let model = checkpoint::load(model)?;
            let input = prepare_input(&read_ply(input)?, model.config().n_input, cfg.seed)?;
            let completed = model.complete(&input)?;
            write_ply(&out.join("completed.ply"), &completed, PlyFormat::BinaryLittleEndian)?;
            cfg.write_snapshot(out)
        }
        Command::Eval {
            pred,
            gt,
            partial,
            specimen,
            frame,
            level,
        } => {
            let pred_cloud = read_ply(pred)?;
            let sample = SampleRecord {
                specimen: specimen.clone(),
                frame: frame.clone(),
                level: *level,
                partial: match partial {
                    Some(p) => read_ply(p)?,
                    None => pred_cloud.clone(),
                },
                complete: read_ply(gt)?,
                seg_iou: None,
                seg_accuracy: None,
            };
            let row = evaluate_prediction(&sample, &pred_cloud, &cfg.metrics, cfg.seed)?;
            let csv = MetricsReport::new(vec![row]).to_csv();
            atomic_write_str(&out.join("metrics.csv"), &csv)?;
            print!("{csv}");
            cfg.write_snapshot(out)
        }
        Command::Crossval { manifest, save_models } => crossval(cfg, out, manifest, *save_models),
        Command::Report { metrics } => {
            let text = std::fs::read_to_string(metrics).map_err(|e| Error::io(metrics, e))?;
            let report = MetricsReport::from_csv(&text)?;
            let summary = report.aggregate();
            atomic_write_str(&out.join("summary.csv"), &summary.to_csv())?;
            write_json(&out.join("summary.json"), &summary)?;
            let corr = correlation_matrix(&report, &default_variables())?;
            atomic_write_str(&out.join("correlation.csv"), &corr.to_csv())?;
            cfg.write_snapshot(out)
        }
        Command::Synth { seed } => {
            write_fixture(
                out,
                &FixtureSpec {
                    seed: *seed,
                    ..FixtureSpec::default()
                },
            )?;
            cfg.write_snapshot(out)
        }
    }
}

fn parse_intrinsics(spec: &str, width: usize, height: usize) -> Result<CameraIntrinsics> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() == 4 {
        if let Ok(v) = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>() {
            return CameraIntrinsics::new(v[0], v[1], v[2], v[3], width, height);
        }
    }
    let k: CameraIntrinsics = read_json(Path::new(spec))?;
    k.validate()?;
    Ok(k)
}

fn project(
    cfg: &ExperimentConfig,
    out: &Path,
    depth: &Path,
    mask: &Path,
    color: Option<&Path>,
    intrinsics: &str,
    downsample: bool,
) -> Result<()> {
    let mut depth = read_depth_png(depth)?;
    depth.values.iter_mut().for_each(|v| *v *= cfg.units.depth_scale_mm);
    let intr = parse_intrinsics(intrinsics, depth.width, depth.height)?;
    let mask = read_mask_png(mask)?.to_binary();
    let color = color.map(read_color_png).transpose()?;
    let mut cloud = unproject(&depth, &intr, Some(&mask), color.as_ref())?;
    if cloud.is_empty() {
        return Err(Error::Empty("no masked pixel has a valid depth".into()));
    }
    if downsample {
        cloud = downsample_spine(&cloud, cfg, cfg.seed)?;
    }
    log::info!("projected {} points", cloud.len());
    write_ply(&out.join("spine.ply"), &cloud, PlyFormat::BinaryLittleEndian)?;
    cfg.write_snapshot(out)
}

fn label(cfg: &ExperimentConfig, out: &Path, spine: &Path, meshes: &[String], pose: &Path) -> Result<()> {
    let spine = read_ply(spine)?;
    let m: [[f64; 4]; 4] = read_json(pose)?;
    let flat: Vec<f64> = m.iter().flatten().copied().collect();
    let t = RigidTransform::from_matrix4(&flat)?;
    let meshes = meshes
        .iter()
        .map(|spec| {
            let (level, path) = spec
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("--mesh '{spec}' is not LEVEL=PATH")))?;
            let level: u32 = level
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad level in --mesh '{spec}'")))?;
            Ok(read_ply_mesh(Path::new(path), level)?.scaled(cfg.units.mesh_scale_mm))
        })
        .collect::<Result<Vec<_>>>()?;
    let labeled = generate_gt_labels(&spine, &meshes, &t, cfg.labels.tau_bg_mm)?;
    write_ply(&out.join("labeled.ply"), &labeled, PlyFormat::BinaryLittleEndian)?;
    for level in levels_present(&labeled)? {
        if let Some(v) = extract_vertebra(&labeled, level)? {
            write_ply(&out.join(format!("vertebra_L{level}.ply")), &v, PlyFormat::BinaryLittleEndian)?;
        }
    }
    cfg.write_snapshot(out)
}

fn filter_samples<'a>(samples: &'a [SampleRecord], specimens: &'a [String]) -> impl Iterator<Item = &'a SampleRecord> {
    samples.iter().filter(move |s| specimens.contains(&s.specimen))
}

fn train_cmd(cfg: &ExperimentConfig, out: &Path, manifest: &Path, specimens: &[String], validate: &[String]) -> Result<()> {
    let ds = build_dataset(manifest, cfg)?;
    let train_specimens: Vec<String> = if specimens.is_empty() {
        ds.specimens.iter().filter(|s| !validate.contains(s)).cloned().collect()
    } else {
        specimens.to_vec()
    };
    let pairs = training_pairs(filter_samples(&ds.samples, &train_specimens));
    let val = training_pairs(filter_samples(&ds.samples, validate));
    let mut model = CompletionModel::new(cfg.model_config()?, cfg.model.seed)?;
    let curve = train::train(&mut model, &pairs, &val, &cfg.train)?;
    checkpoint::save(&model, &out.join("model.ckpt"))?;
    atomic_write_str(&out.join("loss_curve.csv"), &curve.to_csv())?;
    atomic_write_str(&out.join("skipped.csv"), &ds.skipped_csv())?;
    cfg.write_snapshot(out)
}

fn crossval(cfg: &ExperimentConfig, out: &Path, manifest: &Path, save_models: bool) -> Result<()> {
    let ds = build_dataset(manifest, cfg)?;
    log::info!("{} samples from {} specimens", ds.samples.len(), ds.specimens.len());
    let outcomes = run_crossval(&ds, cfg)?;
    for o in &outcomes {
        let dir = out.join("folds").join(&o.fold.held_out);
        atomic_write_str(&dir.join("metrics.csv"), &o.report.to_csv())?;
        if let Some(c) = &o.curve {
            atomic_write_str(&dir.join("loss_curve.csv"), &c.to_csv())?;
        }
        if let (true, Some(m)) = (save_models, &o.model) {
            checkpoint::save(m, &dir.join("model.ckpt"))?;
        }
    }
    let merged = MetricsReport::merge(outcomes.into_iter().map(|o| o.report));
    atomic_write_str(&out.join("metrics.csv"), &merged.to_csv())?;
    atomic_write_str(&out.join("skipped.csv"), &ds.skipped_csv())?;
    cfg.write_snapshot(out)
}
