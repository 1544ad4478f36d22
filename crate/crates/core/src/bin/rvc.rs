//! Pipeline command line: scene synthesis, voxelization, sub-head training,
//! detection-set evaluation and benchmarking.
//!
//! Machine-readable output goes to stdout and to files; logs go to stderr.
//! Exit codes: 0 success, 1 usage/config error, 2 data error.

use clap::{Args, Parser, Subcommand};
use rvc_core::cloudio::{
    load_csv, load_kitti_bin, read_detections, read_scene, synth_detections, synth_scene,
    write_detections, write_scene, CloudRange, Detection, Point, PointCloud, SyntheticScene,
};
use rvc_core::config::ExperimentConfig;
use rvc_core::eval::{
    comparison_csv, comparison_table, filter_by_points, filter_by_score, match_detections,
    VariantReport, IOU_MATCH_THRESHOLD, POINT_FILTER_THRESHOLD, SCORE_FILTER_THRESHOLD,
};
use rvc_core::fdv::{assign_pillars, fdv_features, GridConfig, FDV_CHANNELS};
use rvc_core::rvbackbone::{default_specs, rv_backbone_forward, scatter_to_bev};
use rvc_core::scatter::{scatter_mean, SegmentIndex};
use rvc_core::subhead::{
    build_crop_dataset, detector_heatmap, refine, save_crops, scene_detection_config,
    train_subhead, ClassifierKind, ClassifierSpec, EpochStats, SubheadError, TrainedClassifier,
};
use std::fmt::Display;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "rvc",
    version,
    about = "Dynamic pillar voxelization and detection refinement pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes and simulated detector output
    Synth(SynthArgs),
    /// Voxelize a point cloud and dump pillar statistics
    Voxelize(VoxelizeArgs),
    /// Build the crop dataset and train sub-head classifiers
    TrainSubhead(TrainSubheadArgs),
    /// Evaluate detection files against scene ground truth
    Eval(EvalArgs),
    /// Time the voxelize/feature stages over growing clouds
    Bench(BenchArgs),
    /// Pretty-print report CSV files
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Experiment config (TOML); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output].dir)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Number of scenes (overrides [scene].count)
    #[arg(long)]
    scenes: Option<usize>,
    /// Base scene seed (overrides [scene].seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VoxelizeArgs {
    /// Input cloud: .bin (KITTI), .csv, or a scene .txt file
    #[arg(long)]
    input: PathBuf,
    /// Experiment config supplying the grid
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid minimum corner, meters (overrides config)
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    min: Option<Vec<f64>>,
    /// Grid maximum corner, meters (overrides config)
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    max: Option<Vec<f64>>,
    /// Pillar size in x and y, meters (overrides config)
    #[arg(long, num_args = 2, value_names = ["VX", "VY"])]
    voxel_xy: Option<Vec<f64>>,
    /// Write the canonical per-pillar dump CSV here
    #[arg(long)]
    pillar_dump: Option<PathBuf>,
    /// Write the per-point 9-channel feature CSV here
    #[arg(long)]
    features: Option<PathBuf>,
    /// Write the stats JSON here (also printed to stdout)
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct TrainSubheadArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Ablation grid: classifier kinds (e.g. mlp-1,mlp-2)
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<ClassifierKind>>,
    /// Ablation grid: crop windows (e.g. 2,8)
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
    /// Single-run classifier kind (overrides [classifier].kind)
    #[arg(long)]
    kind: Option<ClassifierKind>,
    /// Single-run crop window (overrides [classifier].window)
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the balanced crop dataset (rvc-crops v1)
    #[arg(long)]
    save_crops: Option<PathBuf>,
    /// Train from an existing crop dataset instead of generating scenes
    #[arg(long, conflicts_with_all = ["kinds", "windows"])]
    crops: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory holding scene_NNNN.txt / dets_NNNN.txt pairs
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sub-head checkpoint; enables the refined variant
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Point-count filter threshold
    #[arg(long, default_value_t = POINT_FILTER_THRESHOLD)]
    point_threshold: usize,
    /// Score filter threshold
    #[arg(long, default_value_t = SCORE_FILTER_THRESHOLD)]
    score_threshold: f64,
    /// Directory for precision.csv / precision.txt
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Ascending cloud sizes
    #[arg(long, value_delimiter = ',', default_values_t = [1_000_000usize, 2_000_000, 4_000_000])]
    sizes: Vec<usize>,
    /// Timed repetitions per size (after one discarded warm-up)
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Also write the timing report as JSON
    #[arg(long)]
    json: Option<PathBuf>,
    /// Include the backbone stage
    #[arg(long, default_value_t = false)]
    backbone: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Precision CSVs produced by `rvc eval`
    #[arg(long, value_delimiter = ',')]
    precision_csv: Vec<PathBuf>,
    /// Ablation CSV produced by `rvc train-subhead`
    #[arg(long)]
    ablation_csv: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn data_err(e: impl Display) -> CliError {
    CliError::Data(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Err(e) = init_thread_pool() {
        eprintln!("rvc: {}", e.message());
        return ExitCode::from(e.code());
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Voxelize(args) => cmd_voxelize(args),
        Command::TrainSubhead(args) => cmd_train_subhead(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rvc: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// `RVC_THREADS` caps the worker pool used by the parallel stages.
fn init_thread_pool() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("RVC_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| usage(format!("RVC_THREADS must be a positive integer, got {raw:?}")))?;
        if n == 0 {
            return Err(usage("RVC_THREADS must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(usage),
        None => Ok(ExperimentConfig::default()),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| data_err(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))
}

fn scene_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("scene_{i:04}.txt"))
}

fn dets_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("dets_{i:04}.txt"))
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(n) = args.scenes {
        cfg.scene.count = n;
    }
    if let Some(seed) = args.seed {
        cfg.scene.seed = seed;
    }
    let out_dir = args
        .out_dir
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    ensure_dir(&out_dir)?;

    let det_cfg = cfg.detection_config();
    let mut total_points = 0usize;
    let mut total_gt = 0usize;
    let mut total_dets = 0usize;
    for i in 0..cfg.scene.count {
        let scene_cfg = cfg.scene_config(i).map_err(usage)?;
        let scene = synth_scene(&scene_cfg).map_err(data_err)?;
        let dets =
            synth_detections(&scene, &scene_detection_config(&det_cfg, i)).map_err(data_err)?;
        write_scene(&scene, scene_path(&out_dir, i)).map_err(data_err)?;
        write_detections(&dets, dets_path(&out_dir, i)).map_err(data_err)?;
        log::info!(
            "scene {i}: {} points, {} gt boxes, {} detections",
            scene.cloud.len(),
            scene.gt.len(),
            dets.len()
        );
        total_points += scene.cloud.len();
        total_gt += scene.gt.len();
        total_dets += dets.len();
    }
    println!(
        "{}",
        serde_json::json!({
            "scenes": cfg.scene.count,
            "points": total_points,
            "gt_boxes": total_gt,
            "detections": total_dets,
            "dir": out_dir.display().to_string(),
        })
    );
    Ok(())
}

fn load_input_cloud(path: &Path) -> Result<PointCloud, CliError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default();
    match ext {
        "bin" => load_kitti_bin(path).map_err(data_err),
        "csv" => load_csv(path).map_err(data_err),
        "txt" => Ok(read_scene(path).map_err(data_err)?.cloud),
        other => Err(usage(format!(
            "unknown input extension {other:?} (expected .bin, .csv or .txt)"
        ))),
    }
}

fn grid_from_args(
    cfg: &ExperimentConfig,
    min: &Option<Vec<f64>>,
    max: &Option<Vec<f64>>,
    voxel_xy: &Option<Vec<f64>>,
) -> Result<GridConfig, CliError> {
    let mut section = cfg.grid.clone();
    if let Some(v) = min {
        section.min = [v[0], v[1], v[2]];
    }
    if let Some(v) = max {
        section.max = [v[0], v[1], v[2]];
    }
    if let Some(v) = voxel_xy {
        section.voxel_xy = [v[0], v[1]];
    }
    let range = CloudRange::new(section.min, section.max).map_err(usage)?;
    GridConfig::pillars(range, section.voxel_xy[0], section.voxel_xy[1]).map_err(usage)
}

fn cmd_voxelize(args: VoxelizeArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let grid = grid_from_args(&cfg, &args.min, &args.max, &args.voxel_xy)?;
    let cloud = load_input_cloud(&args.input)?;

    let t0 = Instant::now();
    let assignment = assign_pillars(&cloud, &grid);
    let assign_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let features = fdv_features(&cloud, &assignment, &grid).map_err(data_err)?;
    let features_ms = t1.elapsed().as_secs_f64() * 1e3;

    if let Some(dump_path) = &args.pillar_dump {
        let idx = SegmentIndex::new(features.pillar_of_row.clone(), assignment.pillar_count())
            .map_err(data_err)?;
        let mut coords = Vec::with_capacity(features.rows * 3);
        for r in 0..features.rows {
            coords.extend_from_slice(&features.row(r)[..3]);
        }
        let means = scatter_mean(&coords, 3, &idx).map_err(data_err)?;
        let mut out = String::from("batch,row,col,count,mean_x,mean_y,mean_z\n");
        for p in assignment.canonical_order() {
            let [row, col, _layer] = assignment.pillar_coords()[p];
            let m = means.bucket(p);
            let _ = writeln!(
                out,
                "{},{row},{col},{},{},{},{}",
                assignment.batch_of_pillar()[p],
                assignment.occupancy()[p],
                m[0],
                m[1],
                m[2],
            );
        }
        write_file(dump_path, &out)?;
    }

    if let Some(feat_path) = &args.features {
        let mut out =
            String::from("point,pillar,x,y,z,x_center,y_center,z_center,x_mean,y_mean,z_mean\n");
        for r in 0..features.rows {
            let _ = write!(
                out,
                "{},{}",
                features.point_of_row[r], features.pillar_of_row[r]
            );
            for c in 0..FDV_CHANNELS {
                let _ = write!(out, ",{}", features.row(r)[c]);
            }
            out.push('\n');
        }
        write_file(feat_path, &out)?;
    }

    let stats = serde_json::json!({
        "points_in": assignment.points_assigned(),
        "points_skipped": assignment.points_skipped(),
        "pillars": assignment.pillar_count(),
        "max_occupancy": assignment.max_occupancy(),
        "grid_size": grid.grid_size(),
        "timing_ms": { "assign": assign_ms, "features": features_ms },
    });
    let rendered = serde_json::to_string_pretty(&stats).expect("stats serialize");
    if let Some(stats_path) = &args.stats {
        write_file(stats_path, &rendered)?;
    }
    println!("{rendered}");
    Ok(())
}

fn generate_scenes(cfg: &ExperimentConfig) -> Result<Vec<SyntheticScene>, CliError> {
    (0..cfg.scene.count)
        .map(|i| {
            let scene_cfg = cfg.scene_config(i).map_err(usage)?;
            synth_scene(&scene_cfg).map_err(data_err)
        })
        .collect()
}

fn recall_by_label(stats: &EpochStats, label: usize) -> f64 {
    stats.recall.get(label).copied().unwrap_or(f64::NAN)
}

fn fmt_or_empty(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.4}")
    }
}

fn cmd_train_subhead(args: TrainSubheadArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(kind) = args.kind {
        cfg.classifier.kind = kind;
    }
    if let Some(window) = args.window {
        cfg.classifier.window = window;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(lr) = args.lr {
        cfg.train.lr = lr;
    }
    if let Some(per_class) = args.per_class {
        cfg.train.per_class = per_class;
    }
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    let out_dir = args
        .out_dir
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    ensure_dir(&out_dir)?;

    let grid = cfg.grid_config().map_err(usage)?;

    // Training from a saved crop file skips scene generation entirely.
    if let Some(crops_path) = &args.crops {
        let crops = rvc_core::subhead::load_crops(crops_path).map_err(data_err)?;
        let spec = cfg.classifier_spec().map_err(usage)?;
        let (classifier, curve) =
            train_subhead(&crops, &spec, &cfg.train_config()).map_err(data_err)?;
        let ckpt_path = out_dir.join("subhead.rvbb");
        classifier
            .save(&ckpt_path, &grid, &cfg.heatmap_config())
            .map_err(data_err)?;
        let last = curve.last().expect("at least one epoch");
        println!(
            "{}",
            serde_json::json!({
                "checkpoint": ckpt_path.display().to_string(),
                "val_accuracy": last.val_accuracy,
                "crops": crops.len(),
            })
        );
        return Ok(());
    }

    let scenes = generate_scenes(&cfg)?;
    let det_cfg = cfg.detection_config();

    let grid_mode = args.kinds.is_some() || args.windows.is_some();
    if grid_mode {
        let kinds = args.kinds.unwrap_or_else(|| vec![cfg.classifier.kind]);
        let windows = args.windows.unwrap_or_else(|| vec![cfg.classifier.window]);
        let mut csv = String::from(
            "kind,window,params,val_accuracy,recall_false_vehicle,recall_false_pedestrian,recall_false_cyclist\n",
        );
        let mut best: Option<(ClassifierKind, usize, f64)> = None;
        for &window in &windows {
            let mut ds_cfg = cfg.crop_dataset_config();
            ds_cfg.window = window;
            let dataset =
                build_crop_dataset(&scenes, &det_cfg, &grid, &ds_cfg).map_err(data_err)?;
            for &kind in &kinds {
                let spec = match ClassifierSpec::new(kind, window, cfg.classifier.out_dim) {
                    Ok(spec) => spec,
                    Err(SubheadError::ConvWindowTooSmall(_)) => {
                        // Mirrors the ablation table's empty cells.
                        let _ = writeln!(csv, "{kind},{window},,,,,");
                        continue;
                    }
                    Err(e) => return Err(usage(e)),
                };
                let (_, curve) =
                    train_subhead(&dataset.crops, &spec, &cfg.train_config()).map_err(data_err)?;
                let last = curve.last().expect("at least one epoch");
                log::info!("{kind} k={window}: val accuracy {:.4}", last.val_accuracy);
                let _ = writeln!(
                    csv,
                    "{kind},{window},{},{},{},{},{}",
                    spec.param_count(),
                    fmt_or_empty(last.val_accuracy),
                    fmt_or_empty(recall_by_label(last, 1)),
                    fmt_or_empty(recall_by_label(last, 3)),
                    fmt_or_empty(recall_by_label(last, 5)),
                );
                if best.is_none() || last.val_accuracy > best.unwrap().2 {
                    best = Some((kind, window, last.val_accuracy));
                }
            }
        }
        let csv_path = out_dir.join("ablation.csv");
        write_file(&csv_path, &csv)?;
        let best = best.ok_or_else(|| usage("ablation grid is empty"))?;
        println!(
            "{}",
            serde_json::json!({
                "ablation_csv": csv_path.display().to_string(),
                "best": { "kind": best.0.name(), "window": best.1, "val_accuracy": best.2 },
            })
        );
        return Ok(());
    }

    let spec = cfg.classifier_spec().map_err(usage)?;
    let dataset = build_crop_dataset(&scenes, &det_cfg, &grid, &cfg.crop_dataset_config())
        .map_err(data_err)?;
    log::info!(
        "crop dataset: {} crops, per-label counts {:?}",
        dataset.crops.len(),
        dataset.achieved
    );
    if let Some(crops_path) = &args.save_crops {
        save_crops(&dataset.crops, crops_path).map_err(data_err)?;
    }
    let (classifier, curve) =
        train_subhead(&dataset.crops, &spec, &cfg.train_config()).map_err(data_err)?;

    let mut metrics = String::from(
        "epoch,train_loss,val_accuracy,recall_true_vehicle,recall_false_vehicle,recall_true_pedestrian,recall_false_pedestrian,recall_true_cyclist,recall_false_cyclist\n",
    );
    for s in &curve {
        let _ = write!(
            metrics,
            "{},{:.6},{}",
            s.epoch,
            s.train_loss,
            fmt_or_empty(s.val_accuracy)
        );
        for label in 0..6 {
            let _ = write!(metrics, ",{}", fmt_or_empty(recall_by_label(s, label)));
        }
        metrics.push('\n');
    }
    let metrics_path = out_dir.join("train_metrics.csv");
    write_file(&metrics_path, &metrics)?;

    let ckpt_path = out_dir.join("subhead.rvbb");
    classifier
        .save(&ckpt_path, &grid, &cfg.heatmap_config())
        .map_err(data_err)?;

    let last = curve.last().expect("at least one epoch");
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": ckpt_path.display().to_string(),
            "metrics_csv": metrics_path.display().to_string(),
            "val_accuracy": last.val_accuracy,
            "crops": dataset.crops.len(),
        })
    );
    Ok(())
}

fn discover_pairs(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| data_err(format!("cannot read {}: {e}", dir.display())))?;
    let mut scene_files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("scene_") && n.ends_with(".txt"))
        })
        .collect();
    scene_files.sort();
    let mut pairs = Vec::new();
    for scene in scene_files {
        let name = scene.file_name().unwrap().to_str().unwrap().to_string();
        let dets = scene.with_file_name(name.replace("scene_", "dets_"));
        if dets.exists() {
            pairs.push((scene, dets));
        } else {
            log::warn!("no detection file for {name}; skipping");
        }
    }
    if pairs.is_empty() {
        return Err(data_err(format!(
            "no scene/detection pairs found in {}",
            dir.display()
        )));
    }
    Ok(pairs)
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let data_dir = args
        .data_dir
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let out_dir = args.out_dir.unwrap_or_else(|| data_dir.clone());
    ensure_dir(&out_dir)?;
    let pairs = discover_pairs(&data_dir)?;

    let classifier = match &args.checkpoint {
        Some(path) => Some(TrainedClassifier::load(path).map_err(data_err)?),
        None => None,
    };

    let mut variants = vec![
        VariantReport {
            name: "raw".into(),
            report: Default::default(),
        },
        VariantReport {
            name: format!("point-filter({})", args.point_threshold),
            report: Default::default(),
        },
        VariantReport {
            name: format!("score-filter({})", args.score_threshold),
            report: Default::default(),
        },
    ];
    if classifier.is_some() {
        variants.push(VariantReport {
            name: "subhead-refined".into(),
            report: Default::default(),
        });
    }

    let mut unclassified_total = 0usize;
    for (scene_file, dets_file) in &pairs {
        let scene = read_scene(scene_file).map_err(data_err)?;
        let labeled = read_detections(dets_file).map_err(data_err)?;
        let dets: Vec<Detection> = labeled.iter().map(|d| d.detection).collect();

        let mut sets: Vec<Vec<Detection>> = vec![
            dets.clone(),
            filter_by_points(&dets, &scene.cloud, args.point_threshold),
            filter_by_score(&dets, args.score_threshold),
        ];
        if let Some((clf, grid, hm_cfg)) = &classifier {
            let hm = detector_heatmap(&scene.gt, &dets, grid, hm_cfg);
            let outcome = refine(&dets, &hm, clf, grid).map_err(data_err)?;
            unclassified_total += outcome.unclassified;
            sets.push(outcome.kept);
        }
        for (variant, set) in variants.iter_mut().zip(&sets) {
            let result = match_detections(set, &scene.gt, IOU_MATCH_THRESHOLD);
            variant.report.accumulate(set, &result, &scene.gt);
        }
    }

    let header = format!(
        "# scenes = {}, iou_threshold = {}, point_filter_threshold = {}, score_filter_threshold = {}, unclassified = {}\n",
        pairs.len(),
        IOU_MATCH_THRESHOLD,
        args.point_threshold,
        args.score_threshold,
        unclassified_total,
    );
    let table = format!("{header}{}", comparison_table(&variants));
    let csv = format!("{header}{}", comparison_csv(&variants));
    write_file(&out_dir.join("precision.txt"), &table)?;
    write_file(&out_dir.join("precision.csv"), &csv)?;
    print!("{table}");
    Ok(())
}

/// Deterministic uniform cloud for benchmarking.
fn bench_cloud(n: usize, seed: u64) -> PointCloud {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(-51.2..51.2),
                rng.random_range(-51.2..51.2),
                rng.random_range(-1.0..3.0),
            )
        })
        .collect();
    PointCloud::single_batch(points).expect("finite points")
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Least-squares linear fit returning R^2.
fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    (sxy * sxy) / (sxx * syy)
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    if args.sizes.is_empty() || args.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("--sizes must be strictly ascending"));
    }
    if args.repeats == 0 {
        return Err(usage("--repeats must be positive"));
    }
    let range = CloudRange::new([-51.2, -51.2, -1.0], [51.2, 51.2, 3.0]).expect("static range");
    let grid = GridConfig::pillars(range, 0.32, 0.32).expect("static grid");
    let specs = default_specs(7);

    let mut rows = Vec::new();
    for (si, &n) in args.sizes.iter().enumerate() {
        let cloud = bench_cloud(n, 1000 + si as u64);
        let mut assign_times = Vec::new();
        let mut feature_times = Vec::new();
        let mut backbone_times = Vec::new();
        // Buffers persist across repetitions, the steady state of a frame
        // pipeline; the warm-up run (rep 0) populates them and is discarded.
        let mut assignment = rvc_core::fdv::PillarAssignment::default();
        let mut features = rvc_core::fdv::FdvFeatures::default();
        for rep in 0..=args.repeats {
            let t0 = Instant::now();
            rvc_core::fdv::assign_pillars_into(&cloud, &grid, &mut assignment);
            let t_assign = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            rvc_core::fdv::fdv_features_into(&cloud, &assignment, &grid, &mut features)
                .map_err(data_err)?;
            let t_features = t1.elapsed().as_secs_f64();
            let t_backbone = if args.backbone {
                let t2 = Instant::now();
                let pillar_features =
                    rv_backbone_forward(&features, &assignment, &specs).map_err(data_err)?;
                let maps =
                    scatter_to_bev(&pillar_features, 64, &assignment, &grid, 1).map_err(data_err)?;
                std::hint::black_box(&maps);
                t2.elapsed().as_secs_f64()
            } else {
                0.0
            };
            std::hint::black_box((&assignment, &features));
            if rep > 0 {
                assign_times.push(t_assign);
                feature_times.push(t_features);
                backbone_times.push(t_backbone);
            }
        }
        let assign = median(&mut assign_times);
        let features = median(&mut feature_times);
        let backbone = median(&mut backbone_times);
        log::info!(
            "N = {n}: assign {:.1} ms, features {:.1} ms{}",
            assign * 1e3,
            features * 1e3,
            if args.backbone {
                format!(", backbone {:.1} ms", backbone * 1e3)
            } else {
                String::new()
            }
        );
        rows.push((n, assign, features, backbone));
    }

    let totals: Vec<f64> = rows.iter().map(|r| r.1 + r.2).collect();
    let sizes_f: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let r2 = linear_fit_r2(&sizes_f, &totals);
    let ratio = if rows.len() >= 2 {
        let scale = sizes_f[rows.len() - 1] / sizes_f[0];
        Some((scale, totals[rows.len() - 1] / totals[0]))
    } else {
        None
    };

    let mut table = String::from("size,assign_ns_per_point,features_ns_per_point");
    if args.backbone {
        table.push_str(",backbone_ns_per_point");
    }
    table.push('\n');
    for (n, assign, features, backbone) in &rows {
        let _ = write!(
            table,
            "{n},{:.2},{:.2}",
            assign / *n as f64 * 1e9,
            features / *n as f64 * 1e9
        );
        if args.backbone {
            let _ = write!(table, ",{:.2}", backbone / *n as f64 * 1e9);
        }
        table.push('\n');
    }
    let _ = writeln!(table, "linear_fit_r2,{r2:.5}");
    if let Some((scale, ratio)) = ratio {
        let _ = writeln!(table, "time({scale:.0}N)/time(N),{ratio:.3}");
    }
    print!("{table}");

    if let Some(json_path) = &args.json {
        let json = serde_json::json!({
            "sizes": args.sizes,
            "repeats": args.repeats,
            "rows": rows.iter().map(|(n, a, f, b)| {
                serde_json::json!({
                    "size": n,
                    "assign_s": a,
                    "features_s": f,
                    "backbone_s": if args.backbone { Some(b) } else { None },
                })
            }).collect::<Vec<_>>(),
            "linear_fit_r2": r2,
            "scaling_ratio": ratio.map(|(_, r)| r),
        });
        write_file(json_path, &serde_json::to_string_pretty(&json).unwrap())?;
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    if args.precision_csv.is_empty() && args.ablation_csv.is_none() {
        return Err(usage(
            "nothing to report: pass --precision-csv or --ablation-csv",
        ));
    }
    for path in args.precision_csv.iter().chain(&args.ablation_csv) {
        let text = std::fs::read_to_string(path)
            .map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
        println!("{}:", path.display());
        println!("{}", render_csv_table(&text));
    }
    Ok(())
}

/// Renders our comment-prefixed CSVs as aligned text columns.
fn render_csv_table(text: &str) -> String {
    let mut rows: Vec<Vec<&str>> = Vec::new();
    let mut comments = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') {
            comments.push(line);
        } else if !line.trim().is_empty() {
            rows.push(line.split(',').collect());
        }
    }
    let n_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; n_cols];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for c in comments {
        out.push_str(c);
        out.push('\n');
    }
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            let _ = write!(out, "{:<width$}", cell, width = widths[i]);
        }
        out.push('\n');
    }
    out
}
