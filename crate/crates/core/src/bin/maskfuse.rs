//! Command-line surface: fuse fragmented instances with a semantic mask,
//! evaluate labelings, render overlays, generate synthetic scenes, emit
//! learning-rate schedules, and compute losses.
//!
//! Exit codes: 0 success, 2 usage or malformed input, 3 data-consistency
//! error (mismatched dimensions).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use maskfuse::error::Error;
use maskfuse::formats;
use maskfuse::fusion::{self, FusionConfig, OrphanPolicy, SemanticFill};
use maskfuse::lossmath::{
    self, CrossEntropyKind, GroundTruthMap, LossConfig, ProbabilityMap,
};
use maskfuse::metrics::{self, EvalReport, LabelImage};
use maskfuse::raster::{BinaryMask, Connectivity};
use maskfuse::schedule::{DecayShape, Schedule, ScheduleConfig};
use maskfuse::synth;

#[derive(Parser)]
#[command(name = "maskfuse", version, about = "Instance-mask fusion and segmentation evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge fragmented instances using a semantic pre-segmentation
    Fuse(FuseArgs),
    /// Per-class IoU and MeanIoU of predicted labelings against ground truth
    Evaluate(EvaluateArgs),
    /// Alpha-blend instance masks over a base image
    Overlay(OverlayArgs),
    /// Generate a synthetic fiber scene from a JSON spec
    Synth(SynthArgs),
    /// Emit the three-phase learning-rate curve as CSV
    Schedule(ScheduleArgs),
    /// Compute Dice, cross-entropy, and Dice-Entropy losses
    Loss(LossArgs),
}

#[derive(Args)]
struct FuseArgs {
    /// Instance set JSON
    instances: PathBuf,
    /// Semantic mask PNG (nonzero = foreground)
    semantic: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    iou_threshold: f64,
    #[arg(long, default_value_t = 0.8)]
    containment_threshold: f64,
    #[arg(long, default_value_t = 8)]
    connectivity: u8,
    #[arg(long, value_enum, default_value_t = OrphanPolicyArg::Keep)]
    orphan_policy: OrphanPolicyArg,
    #[arg(long, value_enum, default_value_t = FillArg::UnionOnly)]
    fill: FillArg,
    /// Fused instance set JSON output
    #[arg(long)]
    out: PathBuf,
    /// Fusion report JSON output
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrphanPolicyArg {
    Keep,
    Drop,
}

#[derive(Clone, Copy, ValueEnum)]
enum FillArg {
    UnionOnly,
    FillBridge,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted labeling: label PNG or instance-set JSON (repeatable)
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Ground-truth labeling, one per --pred
    #[arg(long, required = true)]
    truth: Vec<PathBuf>,
    /// Comma-separated class ids to average over
    #[arg(long, required = true, value_delimiter = ',')]
    classes: Vec<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OverlayArgs {
    /// Base image PNG
    image: PathBuf,
    /// Instance set JSON files to draw
    #[arg(required = true)]
    instances: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec JSON
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 1e-5)]
    lr_start: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr_max: f64,
    #[arg(long, default_value_t = 1e-6)]
    lr_end: f64,
    #[arg(long, default_value_t = 1000)]
    warmup_steps: u64,
    #[arg(long, default_value_t = 4000)]
    plateau_steps: u64,
    #[arg(long, default_value_t = 5000)]
    decay_steps: u64,
    #[arg(long, value_enum, default_value_t = DecayArg::Linear)]
    decay_shape: DecayArg,
    /// Rows to emit; defaults to the schedule's total step count
    #[arg(long)]
    total_steps: Option<u64>,
    /// CSV output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecayArg {
    Linear,
    Exponential,
}

#[derive(Args)]
struct LossArgs {
    /// Probability map: gray PNG (values/255) or JSON grid
    pred: PathBuf,
    /// Target map: gray PNG (nonzero = 1) or JSON grid
    target: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-7)]
    clamp: f64,
    /// Cross-entropy form used inside Dice-Entropy
    #[arg(long, value_enum, default_value_t = CeArg::Auto)]
    cross_entropy: CeArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum CeArg {
    Auto,
    Binary,
    Categorical,
}

/// JSON grid form of a probability or target map.
#[derive(Serialize, Deserialize)]
struct GridDoc {
    width: u32,
    height: u32,
    #[serde(default = "one")]
    classes: u32,
    values: Vec<f64>,
}

fn one() -> u32 {
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fuse(args) => cmd_fuse(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Overlay(args) => cmd_overlay(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Schedule(args) => cmd_schedule(args),
        Command::Loss(args) => cmd_loss(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("maskfuse: {e}");
            if e.is_consistency() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Error> {
    let data = serde_json::to_string_pretty(value)?;
    std::fs::write(path, data).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_fuse(args: FuseArgs) -> Result<(), Error> {
    let cfg = FusionConfig {
        iou_threshold: args.iou_threshold,
        containment_threshold: args.containment_threshold,
        connectivity: Connectivity::from_u8(args.connectivity)?,
        orphan_policy: match args.orphan_policy {
            OrphanPolicyArg::Keep => OrphanPolicy::Keep,
            OrphanPolicyArg::Drop => OrphanPolicy::Drop,
        },
        semantic_fill: match args.fill {
            FillArg::UnionOnly => SemanticFill::UnionOnly,
            FillArg::FillBridge => SemanticFill::FillBridge,
        },
    };
    let instances = formats::load_instance_set(&args.instances)?;
    let semantic = BinaryMask::load_png(&args.semantic)?;
    let (fused, report) = fusion::fuse(&instances, &semantic, &cfg)?;
    formats::save_instance_set(&fused, &args.out)?;
    if let Some(report_path) = &args.report {
        write_json(&report, report_path)?;
    }
    Ok(())
}

/// Load a labeling from a gray PNG (pixel value = class id) or an
/// instance-set JSON (pixels take the class id of the covering instance;
/// on overlap the higher instance id wins).
fn load_labeling(path: &Path) -> Result<LabelImage, Error> {
    if path.extension().is_some_and(|e| e == "json") {
        let set = formats::load_instance_set(path)?;
        let (w, h) = (set.width(), set.height());
        let mut labels = vec![0u32; (w as usize) * (h as usize)];
        for inst in set.instances() {
            for (i, &bit) in inst.mask().bits().iter().enumerate() {
                if bit {
                    labels[i] = inst.class_id;
                }
            }
        }
        LabelImage::new(w, h, labels)
    } else {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let (w, h) = img.dimensions();
        LabelImage::new(w, h, img.as_raw().iter().map(|&v| v as u32).collect())
    }
}

#[derive(Serialize)]
struct EvaluateOutput {
    images: Vec<EvalReport>,
    dataset_mean_iou: f64,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    if args.pred.len() != args.truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} ground truths",
            args.pred.len(),
            args.truth.len()
        )));
    }
    let mut images = Vec::with_capacity(args.pred.len());
    for (pred_path, truth_path) in args.pred.iter().zip(&args.truth) {
        let pred = load_labeling(pred_path)?;
        let truth = load_labeling(truth_path)?;
        images.push(metrics::mean_iou(&pred, &truth, &args.classes)?);
    }
    let dataset_mean_iou =
        images.iter().map(|r| r.mean_iou).sum::<f64>() / images.len() as f64;
    let output = EvaluateOutput {
        images,
        dataset_mean_iou,
    };
    match &args.out {
        Some(path) => write_json(&output, path)?,
        None => println!("{}", serde_json::to_string_pretty(&output)?),
    }
    Ok(())
}

const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
    [170, 110, 40],
];

fn cmd_overlay(args: OverlayArgs) -> Result<(), Error> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(Error::invalid("alpha must lie in [0, 1]"));
    }
    let mut base = image::open(&args.image)
        .map_err(|source| Error::Image {
            path: args.image.clone(),
            source,
        })?
        .into_rgb8();
    let (w, h) = base.dimensions();
    for path in &args.instances {
        let set = formats::load_instance_set(path)?;
        if set.width() != w || set.height() != h {
            return Err(Error::DimensionMismatch(w, h, set.width(), set.height()));
        }
        for inst in set.instances() {
            let color = PALETTE[(inst.id as usize) % PALETTE.len()];
            for y in 0..h {
                for x in 0..w {
                    if inst.mask().get(x, y) {
                        let p = base.get_pixel_mut(x, y);
                        for c in 0..3 {
                            let blended = (1.0 - args.alpha) * p.0[c] as f64
                                + args.alpha * color[c] as f64;
                            p.0[c] = blended.round().clamp(0.0, 255.0) as u8;
                        }
                    }
                }
            }
        }
    }
    base.save(&args.out).map_err(|source| Error::Image {
        path: args.out.clone(),
        source,
    })
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let data = std::fs::read_to_string(&args.spec).map_err(|source| Error::Io {
        path: args.spec.clone(),
        source,
    })?;
    let spec: synth::SceneSpec = serde_json::from_str(&data)?;
    let scene = synth::generate(&spec)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|source| Error::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let img_path = args.out_dir.join("image.png");
    scene.image.save(&img_path).map_err(|source| Error::Image {
        path: img_path,
        source,
    })?;
    scene.semantic.save_png(&args.out_dir.join("semantic.png"))?;
    formats::save_instance_set(&scene.ground_truth, &args.out_dir.join("ground_truth.json"))?;
    formats::save_instance_set(&scene.fragmented, &args.out_dir.join("fragmented.json"))?;
    Ok(())
}

fn cmd_schedule(args: ScheduleArgs) -> Result<(), Error> {
    let schedule = Schedule::new(ScheduleConfig {
        lr_start: args.lr_start,
        lr_max: args.lr_max,
        lr_end: args.lr_end,
        warmup_steps: args.warmup_steps,
        plateau_steps: args.plateau_steps,
        decay_steps: args.decay_steps,
        decay_shape: match args.decay_shape {
            DecayArg::Linear => DecayShape::Linear,
            DecayArg::Exponential => DecayShape::Exponential,
        },
    })?;
    let total = args.total_steps.unwrap_or_else(|| schedule.total_steps());
    if total < 1 {
        return Err(Error::invalid("total_steps must be at least 1"));
    }
    let mut csv = String::from("step,learning_rate\n");
    for (step, rate) in schedule.emit_curve(total) {
        // scientific notation, 9 significant digits
        csv.push_str(&format!("{step},{rate:.8e}\n"));
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn load_grid(path: &Path) -> Result<GridDoc, Error> {
    if path.extension().is_some_and(|e| e == "json") {
        let data = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&data)?)
    } else {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let (width, height) = img.dimensions();
        Ok(GridDoc {
            width,
            height,
            classes: 1,
            values: img.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        })
    }
}

#[derive(Serialize)]
struct LossOutput {
    dice_loss: f64,
    cross_entropy: f64,
    cross_entropy_form: &'static str,
    dice_entropy: f64,
    epsilon: f64,
    clamp: f64,
}

fn cmd_loss(args: LossArgs) -> Result<(), Error> {
    let cfg = LossConfig {
        epsilon: args.epsilon,
        clamp: args.clamp,
    };
    let pred = load_grid(&args.pred)?;
    let target = load_grid(&args.target)?;
    let p = ProbabilityMap::new(pred.width, pred.height, pred.classes, pred.values)?;
    // PNG targets arrive as values/255; anything nonzero is foreground
    let t = GroundTruthMap::new(
        target.width,
        target.height,
        target.classes,
        target
            .values
            .iter()
            .map(|&v| if v != 0.0 { 1.0 } else { 0.0 })
            .collect(),
    )?;

    let kind = match args.cross_entropy {
        CeArg::Auto => CrossEntropyKind::Auto,
        CeArg::Binary => CrossEntropyKind::Binary,
        CeArg::Categorical => CrossEntropyKind::Categorical,
    };
    let binary = match kind {
        CrossEntropyKind::Auto => p.classes() == 1,
        CrossEntropyKind::Binary => true,
        CrossEntropyKind::Categorical => false,
    };
    let dice = lossmath::dice_loss(&p, &t, &cfg)?;
    let ce = if binary {
        lossmath::binary_crossentropy(&p, &t, &cfg)?
    } else {
        lossmath::categorical_crossentropy(&p, &t, &cfg)?
    };
    let de = lossmath::dice_entropy(&p, &t, &cfg, kind)?;
    let output = LossOutput {
        dice_loss: dice.value,
        cross_entropy: ce.value,
        cross_entropy_form: if binary { "binary" } else { "categorical" },
        dice_entropy: de.value,
        epsilon: cfg.epsilon,
        clamp: cfg.clamp,
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}
