//! Sequence orchestrator: decode detections, run the three layers over each
//! scan in order, accumulate the global map, and track per-layer wall time.

use std::time::Instant;

use thiserror::Error;

use crate::detect::{decode_frame, DecodeError, DecodeParams, Detection2D};
use crate::eval::{TimingReport, TimingStats};
use crate::geometry::{CameraModel, Frame, OverlapMetric};
use crate::io::{
    read_calibration, read_detections, read_poses, read_scan, FormatError, FrameDetections,
    SequenceManifest,
};
use crate::layer1::{generate_boxes, Layer1Error};
use crate::layer2::{
    to_world, Layer2Error, MergeParams, ObjectRegistry, Pose, RegistryIndexMode,
};
use crate::layer3::{refine_registry, GlobalMap, RefineParams};
use crate::scalar::{real, Real};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("scan {scan_id}: {source}")]
    Layer1 { scan_id: u64, source: Layer1Error },
    #[error(transparent)]
    Layer2(#[from] Layer2Error),
    #[error("scan {scan_id}: {source}")]
    Decode { scan_id: u64, source: DecodeError },
    #[error("scan {scan_id}: pose row {row} out of range ({available} poses loaded)")]
    PoseRowMissing { scan_id: u64, row: usize, available: usize },
    #[error(
        "scan {scan_id}: detection record is {record_w}x{record_h}, manifest says {frame_w}x{frame_h}"
    )]
    FrameSizeMismatch { scan_id: u64, record_w: u32, record_h: u32, frame_w: u32, frame_h: u32 },
}

#[derive(Debug, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(String);

/// All pipeline tunables with their documented defaults.
#[derive(Debug, Clone)]
pub struct RunConfig<S> {
    pub conf_threshold: S,
    pub nms_iou: S,
    pub bin_threshold: S,
    pub erosion_radius: u32,
    pub erosion_iterations: u32,
    pub cluster_tolerance: S,
    pub min_cluster_size: usize,
    pub overlap_metric: OverlapMetric,
    pub overlap_threshold: S,
    pub class_agnostic_merge: bool,
    pub registry_index: RegistryIndexMode,
    pub voxel_size: S,
    pub map_leaf: Option<S>,
    pub refresh_every: u64,
    pub refine: bool,
    pub refine_to_fixpoint: bool,
}

impl<S: Real> Default for RunConfig<S> {
    fn default() -> Self {
        Self {
            conf_threshold: real(0.25),
            nms_iou: real(0.45),
            bin_threshold: real(0.5),
            erosion_radius: 1,
            erosion_iterations: 1,
            cluster_tolerance: real(0.5),
            min_cluster_size: 5,
            overlap_metric: OverlapMetric::MinRatio,
            overlap_threshold: real(0.3),
            class_agnostic_merge: false,
            registry_index: RegistryIndexMode::SpatialHash,
            voxel_size: real(0.2),
            map_leaf: Some(real(0.1)),
            refresh_every: 10,
            refine: true,
            refine_to_fixpoint: false,
        }
    }
}

impl<S: Real> RunConfig<S> {
    /// Enforce documented ranges; violations are configuration errors, not
    /// input errors.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name: &str, v: S| -> Result<(), ConfigError> {
            if v < S::zero() || v > S::one() {
                Err(ConfigError(format!("{name} must be in [0,1], got {v}")))
            } else {
                Ok(())
            }
        };
        unit("conf-threshold", self.conf_threshold)?;
        unit("nms-iou", self.nms_iou)?;
        unit("bin-threshold", self.bin_threshold)?;
        unit("overlap-threshold", self.overlap_threshold)?;
        if self.cluster_tolerance <= S::zero() {
            return Err(ConfigError(format!(
                "cluster-tolerance must be positive, got {}",
                self.cluster_tolerance
            )));
        }
        if self.min_cluster_size < 1 {
            return Err(ConfigError("min-cluster-size must be at least 1".into()));
        }
        if self.voxel_size <= S::zero() {
            return Err(ConfigError(format!("voxel-size must be positive, got {}", self.voxel_size)));
        }
        if let Some(leaf) = self.map_leaf {
            if leaf <= S::zero() {
                return Err(ConfigError(format!("map-leaf must be positive, got {leaf}")));
            }
        }
        if self.refresh_every < 1 {
            return Err(ConfigError("refresh-every must be at least 1".into()));
        }
        Ok(())
    }

    /// Effective-configuration dump embedded into every output for
    /// provenance.
    pub fn dump_lines(&self) -> Vec<String> {
        let leaf = match self.map_leaf {
            Some(l) => format!("{l}"),
            None => "off".to_string(),
        };
        vec![
            format!(
                "config: conf_threshold={} nms_iou={} bin_threshold={} erosion={}x{}",
                self.conf_threshold,
                self.nms_iou,
                self.bin_threshold,
                self.erosion_radius,
                self.erosion_iterations
            ),
            format!(
                "config: cluster_tolerance={} min_cluster_size={} overlap_metric={} overlap_threshold={} class_agnostic_merge={} registry_index={}",
                self.cluster_tolerance,
                self.min_cluster_size,
                self.overlap_metric,
                self.overlap_threshold,
                self.class_agnostic_merge,
                match self.registry_index {
                    RegistryIndexMode::SpatialHash => "hash",
                    RegistryIndexMode::Linear => "linear",
                }
            ),
            format!(
                "config: voxel_size={} map_leaf={leaf} refresh_every={} refine={} refine_to_fixpoint={}",
                self.voxel_size, self.refresh_every, self.refine, self.refine_to_fixpoint
            ),
        ]
    }

    fn decode_params(&self) -> DecodeParams<S> {
        DecodeParams {
            conf_threshold: self.conf_threshold,
            nms_iou: self.nms_iou,
            bin_threshold: self.bin_threshold,
            erosion_radius: self.erosion_radius,
            erosion_iterations: self.erosion_iterations,
        }
    }

    fn merge_params(&self) -> MergeParams<S> {
        MergeParams {
            overlap_threshold: self.overlap_threshold,
            metric: self.overlap_metric,
            class_agnostic: self.class_agnostic_merge,
            index_mode: self.registry_index,
        }
    }

    fn refine_params(&self) -> RefineParams {
        RefineParams { refresh_every: self.refresh_every, to_fixpoint: self.refine_to_fixpoint }
    }
}

/// Wall time and size counters for one scan. Layer timings exclude file
/// I/O; detection decoding and map integration are tracked on their own.
#[derive(Debug, Clone)]
pub struct ScanStats {
    pub scan_id: u64,
    pub decode_ms: f64,
    pub layer1_ms: f64,
    pub layer2_ms: f64,
    pub layer3_ms: f64,
    pub integrate_ms: f64,
    pub total_ms: f64,
    pub detections: usize,
    pub scan_points: usize,
    /// Registry size after this scan was applied.
    pub registry_size: usize,
}

#[derive(Debug)]
pub struct RunOutput<S: Real> {
    pub registry: ObjectRegistry<S>,
    pub map: GlobalMap<S>,
    pub per_scan: Vec<ScanStats>,
    pub warnings: Vec<String>,
}

impl TimingReport {
    pub fn from_scan_stats(per_scan: &[ScanStats]) -> Self {
        let collect = |f: fn(&ScanStats) -> f64| -> Vec<f64> { per_scan.iter().map(f).collect() };
        TimingReport {
            scans: per_scan.len(),
            decode: TimingStats::from_samples(&collect(|s| s.decode_ms)),
            layer1: TimingStats::from_samples(&collect(|s| s.layer1_ms)),
            layer2: TimingStats::from_samples(&collect(|s| s.layer2_ms)),
            layer3: TimingStats::from_samples(&collect(|s| s.layer3_ms)),
            integrate: TimingStats::from_samples(&collect(|s| s.integrate_ms)),
            total: TimingStats::from_samples(&collect(|s| s.total_ms)),
        }
    }
}

/// Run the full pipeline over a manifest.
///
/// Scans are processed strictly in manifest order: decode detections, Layer
/// I box generation, Layer II world merge, map integration, Layer III
/// refinement. A missing detection record means zero detections for that
/// scan; its points still integrate into the map.
pub fn run_pipeline<S: Real>(
    manifest: &SequenceManifest,
    config: &RunConfig<S>,
) -> Result<RunOutput<S>, PipelineError> {
    let cam: CameraModel<S> = read_calibration(&manifest.calib_path)?;
    let poses = read_poses::<S>(&manifest.poses_path)?;
    let mut registry = ObjectRegistry::new();
    let mut map = GlobalMap::new(config.voxel_size, config.map_leaf);
    let mut per_scan = Vec::with_capacity(manifest.entries.len());
    let mut warnings = Vec::new();

    for entry in &manifest.entries {
        let scan_id = entry.scan_id;
        let pose = poses.get(entry.pose_row).ok_or(PipelineError::PoseRowMissing {
            scan_id,
            row: entry.pose_row,
            available: poses.len(),
        })?;
        let pose = Pose { scan_id, t_wl: pose.t_wl };

        // File I/O stays outside the timed sections.
        let scan = read_scan::<S>(&entry.scan_path)?;
        if scan.dropped > 0 {
            warnings.push(format!(
                "scan {scan_id}: dropped {} non-finite points from {}",
                scan.dropped,
                entry.scan_path.display()
            ));
        }
        let record = match &entry.detections_path {
            Some(path) => Some(read_detections::<S>(path, None)?),
            None => None,
        };

        let total_start = Instant::now();

        let decode_start = Instant::now();
        let detections: Vec<Detection2D<S>> = match record {
            None => Vec::new(),
            Some(FrameDetections::Decoded { frame_w, frame_h, detections }) => {
                if (frame_w, frame_h) != (manifest.frame_width, manifest.frame_height) {
                    return Err(PipelineError::FrameSizeMismatch {
                        scan_id,
                        record_w: frame_w,
                        record_h: frame_h,
                        frame_w: manifest.frame_width,
                        frame_h: manifest.frame_height,
                    });
                }
                detections
                    .into_iter()
                    .filter(|d| d.confidence >= config.conf_threshold)
                    .collect()
            }
            Some(FrameDetections::Raw { detections, protos }) => decode_frame(
                &detections,
                &protos,
                manifest.frame_width,
                manifest.frame_height,
                &config.decode_params(),
            )
            .map_err(|source| PipelineError::Decode { scan_id, source })?,
        };
        let decode_ms = elapsed_ms(decode_start);

        let layer1_start = Instant::now();
        let scan_dets = generate_boxes(
            &scan.cloud,
            &cam,
            &detections,
            scan_id,
            config.cluster_tolerance,
            config.min_cluster_size,
        )
        .map_err(|source| PipelineError::Layer1 { scan_id, source })?;
        let layer1_ms = elapsed_ms(layer1_start);

        let layer2_start = Instant::now();
        let world_dets = to_world(&scan_dets, &pose)?;
        let outcomes = registry.pair_and_merge(&world_dets, &config.merge_params());
        let layer2_ms = elapsed_ms(layer2_start);

        let integrate_start = Instant::now();
        let scan_w = scan.cloud.transformed(&pose.t_wl, Frame::World);
        map.integrate_scan(&scan_w);
        let integrate_ms = elapsed_ms(integrate_start);

        let layer3_start = Instant::now();
        if config.refine {
            let touched: Vec<u64> = outcomes.iter().map(|&(id, _)| id).collect();
            refine_registry(&map, &mut registry, &touched, scan_id, &config.refine_params());
        }
        let layer3_ms = elapsed_ms(layer3_start);

        per_scan.push(ScanStats {
            scan_id,
            decode_ms,
            layer1_ms,
            layer2_ms,
            layer3_ms,
            integrate_ms,
            total_ms: elapsed_ms(total_start),
            detections: world_dets.clusters.len(),
            scan_points: scan.cloud.len(),
            registry_size: registry.len(),
        });
    }

    Ok(RunOutput { registry, map, per_scan, warnings })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}
