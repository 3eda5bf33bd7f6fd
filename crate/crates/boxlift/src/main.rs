//! Command-line entry point: run the fusion pipeline over a sequence,
//! evaluate a registry against ground truth, export point clouds, generate
//! synthetic fixtures, and convert KITTI calibration files.
//!
//! Exit codes: 0 success, 1 input error, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boxlift::eval::{
    apply_class_map, match_and_score, read_class_map, render_records, render_table,
    render_timing, EvalReport, MatchProtocol, TimingReport,
};
use boxlift::geometry::OverlapMetric;
use boxlift::io::{
    convert_kitti_calib, object_color, read_ground_truth, read_manifest, read_registry,
    read_scan, write_calibration, write_ply, write_registry, PlyPointSet, BACKGROUND_COLOR,
};
use boxlift::layer2::RegistryIndexMode;
use boxlift::pipeline::{run_pipeline, RunConfig, RunOutput};
use boxlift::synth::{generate_synthetic_sequence, SynthSpec};

#[derive(Parser)]
#[command(
    name = "boxlift",
    version,
    about = "Camera-LiDAR fusion: lift 2D instance detections to a registry of 3D objects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the three-layer pipeline over a sequence manifest.
    Run(RunArgs),
    /// Score a registry export against ground-truth boxes.
    Eval(EvalArgs),
    /// Export a scan or a full run (map + object clusters) as ASCII PLY.
    Export(ExportArgs),
    /// Generate a deterministic synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Compose a KITTI calib file into the native calibration format.
    ConvertKittiCalib(ConvertArgs),
}

/// Pipeline tunables shared by `run` and `export`.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Detection confidence threshold
    #[arg(long, default_value_t = 0.25)]
    conf_threshold: f64,
    /// NMS IoU suppression threshold
    #[arg(long, default_value_t = 0.45)]
    nms_iou: f64,
    /// Mask binarization threshold (applied after the sigmoid)
    #[arg(long, default_value_t = 0.5)]
    bin_threshold: f64,
    /// Mask erosion kernel radius in pixels (0 disables)
    #[arg(long, default_value_t = 1)]
    erosion_radius: u32,
    /// Mask erosion iterations
    #[arg(long, default_value_t = 1)]
    erosion_iterations: u32,
    /// Euclidean clustering distance tolerance in meters
    #[arg(long, default_value_t = 0.5)]
    cluster_tolerance: f64,
    /// Minimum cluster size in points
    #[arg(long, default_value_t = 5)]
    min_cluster_size: usize,
    /// Box overlap metric for pairing: iou | min-ratio
    #[arg(long, default_value = "min-ratio")]
    overlap_metric: OverlapMetric,
    /// Overlap ratio above which boxes merge
    #[arg(long, default_value_t = 0.3)]
    overlap_threshold: f64,
    /// Merge across classes as well (ablation)
    #[arg(long)]
    class_agnostic_merge: bool,
    /// Registry candidate lookup: hash | linear
    #[arg(long, default_value = "hash")]
    registry_index: RegistryIndexMode,
    /// Voxel region side r in meters for map refinement
    #[arg(long, default_value_t = 0.2)]
    voxel_size: f64,
    /// Map downsample leaf in meters (0 disables)
    #[arg(long, default_value_t = 0.1)]
    map_leaf: f64,
    /// Refresh untouched instances every K scans
    #[arg(long, default_value_t = 10)]
    refresh_every: u64,
    /// Disable Layer III refinement
    #[arg(long)]
    no_refine: bool,
    /// Re-run refinement per scan until clusters stop growing
    #[arg(long)]
    refine_to_fixpoint: bool,
}

impl ConfigArgs {
    fn to_config(&self) -> RunConfig<f64> {
        RunConfig {
            conf_threshold: self.conf_threshold,
            nms_iou: self.nms_iou,
            bin_threshold: self.bin_threshold,
            erosion_radius: self.erosion_radius,
            erosion_iterations: self.erosion_iterations,
            cluster_tolerance: self.cluster_tolerance,
            min_cluster_size: self.min_cluster_size,
            overlap_metric: self.overlap_metric,
            overlap_threshold: self.overlap_threshold,
            class_agnostic_merge: self.class_agnostic_merge,
            registry_index: self.registry_index,
            voxel_size: self.voxel_size,
            map_leaf: if self.map_leaf == 0.0 { None } else { Some(self.map_leaf) },
            refresh_every: self.refresh_every,
            refine: !self.no_refine,
            refine_to_fixpoint: self.refine_to_fixpoint,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Sequence manifest path
    #[arg(long)]
    manifest: PathBuf,
    /// Registry export destination
    #[arg(long)]
    out_registry: PathBuf,
    /// Optional PLY export of the map and object clusters
    #[arg(long)]
    out_ply: Option<PathBuf>,
    /// Optional machine-readable timing records destination
    #[arg(long)]
    timing_records: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Registry export to score
    #[arg(long)]
    registry: PathBuf,
    /// Ground-truth box file
    #[arg(long)]
    ground_truth: PathBuf,
    /// Optional detector→ground-truth class map table
    #[arg(long)]
    class_map: Option<PathBuf>,
    /// Matching protocol: greedy | hungarian
    #[arg(long, default_value = "greedy")]
    protocol: MatchProtocol,
    /// Optional machine-readable records destination
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Run the pipeline over this manifest and export map + clusters
    #[arg(long, conflicts_with = "scan")]
    manifest: Option<PathBuf>,
    /// Export a single scan binary instead
    #[arg(long)]
    scan: Option<PathBuf>,
    /// PLY destination
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the generated sequence
    #[arg(long)]
    out: PathBuf,
    /// Number of cuboid objects along the corridor
    #[arg(long, default_value_t = 3)]
    objects: usize,
    /// Number of scans
    #[arg(long, default_value_t = 10)]
    scans: usize,
    /// Gaussian point noise sigma in meters
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Per-object detection dropout probability
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Surface samples per object per scan
    #[arg(long, default_value_t = 250)]
    points_per_object: usize,
    /// Background points per scan
    #[arg(long, default_value_t = 500)]
    background_points: usize,
}

#[derive(Args)]
struct ConvertArgs {
    /// KITTI calib file
    #[arg(long)]
    input: PathBuf,
    /// Projection matrix key to use (camera selection)
    #[arg(long, default_value = "P2")]
    projection: String,
    /// Image width in pixels
    #[arg(long)]
    width: u32,
    /// Image height in pixels
    #[arg(long)]
    height: u32,
    /// Native calibration destination
    #[arg(long)]
    out: PathBuf,
}

enum AppError {
    /// Bad input data: exit code 1.
    Input(String),
    /// Bad configuration: exit code 2.
    Config(String),
}

impl<E: std::error::Error> From<E> for AppError {
    fn from(e: E) -> Self {
        AppError::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Export(args) => cmd_export(args),
        Command::Synth(args) => cmd_synth(args),
        Command::ConvertKittiCalib(args) => cmd_convert(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn validated_config(args: &ConfigArgs) -> Result<RunConfig<f64>, AppError> {
    let config = args.to_config();
    config.validate().map_err(|e| AppError::Config(e.to_string()))?;
    Ok(config)
}

fn execute(manifest_path: &Path, config: &RunConfig<f64>) -> Result<RunOutput<f64>, AppError> {
    let manifest = read_manifest(manifest_path)?;
    let out = run_pipeline(&manifest, config)?;
    for warning in &out.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(out)
}

fn cmd_run(args: RunArgs) -> Result<(), AppError> {
    let config = validated_config(&args.config)?;
    let out = execute(&args.manifest, &config)?;

    let provenance = config.dump_lines();
    write_registry(&args.out_registry, &out.registry.snapshot(), &provenance)?;

    if let Some(ply_path) = &args.out_ply {
        export_run_ply(ply_path, &out, &provenance)?;
    }

    let timing = TimingReport::from_scan_stats(&out.per_scan);
    print!("{}", render_timing(&timing));
    let report = EvalReport { timing: Some(timing), ..EvalReport::default() };
    println!(
        "registry: {} objects over {} scans -> {}",
        out.registry.len(),
        out.per_scan.len(),
        args.out_registry.display()
    );

    if let Some(records_path) = &args.timing_records {
        let mut body = String::new();
        for line in &provenance {
            body.push_str(&format!("# {line}\n"));
        }
        body.push_str(&render_records(&report));
        std::fs::write(records_path, body)
            .map_err(|e| AppError::Input(format!("{}: {e}", records_path.display())))?;
    }
    Ok(())
}

fn export_run_ply(
    path: &Path,
    out: &RunOutput<f64>,
    provenance: &[String],
) -> Result<(), AppError> {
    let mut sets = Vec::new();
    sets.push(PlyPointSet { points: out.map.points(), color: BACKGROUND_COLOR });
    for inst in out.registry.instances() {
        sets.push(PlyPointSet {
            points: &inst.cluster.points,
            color: object_color(inst.object_id),
        });
    }
    write_ply(path, &sets, provenance)?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), AppError> {
    let mut rows = read_registry::<f64>(&args.registry)?;
    let gt = read_ground_truth::<f64>(&args.ground_truth)?;
    if let Some(map_path) = &args.class_map {
        let map = read_class_map(map_path)?;
        apply_class_map(&mut rows, &map);
    }
    let report = match_and_score(&rows, &gt, args.protocol);
    print!("{}", render_table(&report));
    if let Some(records_path) = &args.records {
        std::fs::write(records_path, render_records(&report))
            .map_err(|e| AppError::Input(format!("{}: {e}", records_path.display())))?;
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<(), AppError> {
    match (&args.manifest, &args.scan) {
        (Some(manifest_path), None) => {
            let config = validated_config(&args.config)?;
            let out = execute(manifest_path, &config)?;
            export_run_ply(&args.out, &out, &config.dump_lines())?;
            println!(
                "exported {} map points and {} object clusters -> {}",
                out.map.len(),
                out.registry.len(),
                args.out.display()
            );
        }
        (None, Some(scan_path)) => {
            let scan = read_scan::<f64>(scan_path)?;
            let sets = [PlyPointSet { points: &scan.cloud.points, color: BACKGROUND_COLOR }];
            write_ply(&args.out, &sets, &[format!("scan {}", scan_path.display())])?;
            println!("exported {} points -> {}", scan.cloud.len(), args.out.display());
        }
        _ => {
            return Err(AppError::Config(
                "export needs exactly one of --manifest or --scan".to_string(),
            ))
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), AppError> {
    if !(0.0..=1.0).contains(&args.dropout) {
        return Err(AppError::Config(format!("dropout must be in [0,1], got {}", args.dropout)));
    }
    if args.noise < 0.0 {
        return Err(AppError::Config(format!("noise must be non-negative, got {}", args.noise)));
    }
    if args.scans == 0 {
        return Err(AppError::Config("scans must be at least 1".to_string()));
    }
    let mut spec = SynthSpec::corridor(args.objects, args.scans, args.noise, args.dropout, args.seed);
    spec.points_per_object = args.points_per_object;
    spec.background_points = args.background_points;
    let seq = generate_synthetic_sequence(&args.out, &spec)?;
    for warning in &seq.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "generated {} scans, {} objects -> {}",
        args.scans,
        args.objects,
        seq.manifest_path.display()
    );
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<(), AppError> {
    if args.width == 0 || args.height == 0 {
        return Err(AppError::Config("width and height must be positive".to_string()));
    }
    let cam = convert_kitti_calib::<f64>(&args.input, &args.projection, args.width, args.height)?;
    write_calibration(&args.out, &cam)?;
    println!("converted {} ({}) -> {}", args.input.display(), args.projection, args.out.display());
    Ok(())
}
