//! Layer I: project a LiDAR scan into the image, label points through the
//! instance masks, Euclidean-cluster each instance, keep the largest cluster
//! and fit per-object 3D boxes in the sensor frame.

use thiserror::Error;

use crate::fxhash::FastMap;

use crate::detect::Detection2D;
use crate::geometry::{fit_aabb, Aabb3, CameraModel, Frame, PointCloud, Vec3};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum Layer1Error {
    #[error("detection {index} mask is {mask_w}x{mask_h}, camera frame is {cam_w}x{cam_h}")]
    MaskDimensionMismatch { index: usize, mask_w: u32, mask_h: u32, cam_w: u32, cam_h: u32 },
}

/// Labeled 3D point set for one object observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<S: Real> {
    /// Indices into the originating cloud: the scan for Layer I output, the
    /// global map after refinement. Cleared when the cluster becomes a
    /// cross-scan union and no single source cloud exists.
    pub indices: Vec<usize>,
    pub points: Vec<Vec3<S>>,
    pub frame: Frame,
    pub class_id: u32,
    pub confidence: S,
}

impl<S: Real> Cluster<S> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-scan Layer I output: clusters and their index-aligned boxes, both in
/// the LiDAR frame.
#[derive(Debug, Clone)]
pub struct ScanDetections<S: Real> {
    pub scan_id: u64,
    pub clusters: Vec<Cluster<S>>,
    pub boxes: Vec<Aabb3<S>>,
}

/// Per-point instance label: index into the detection list, or background.
pub type PointLabel = Option<u32>;

const BACKGROUND: u32 = u32::MAX;

/// Label every scan point with the first detection (in NMS score order)
/// whose mask covers its projection, or background.
///
/// A point is background when it projects behind the camera, its real-valued
/// pixel falls outside `[0,width)×[0,height)`, or no mask is true at the
/// rounded pixel. The masks are composited into one label image (first
/// detection wins a contested pixel), so labeling costs one lookup per
/// point.
pub fn label_points<S: Real>(
    scan: &PointCloud<S>,
    cam: &CameraModel<S>,
    detections: &[Detection2D<S>],
) -> Result<Vec<PointLabel>, Layer1Error> {
    for (index, det) in detections.iter().enumerate() {
        if det.mask.width() != cam.width || det.mask.height() != cam.height {
            return Err(Layer1Error::MaskDimensionMismatch {
                index,
                mask_w: det.mask.width(),
                mask_h: det.mask.height(),
                cam_w: cam.width,
                cam_h: cam.height,
            });
        }
    }

    let w = cam.width as usize;
    let mut label_image = vec![BACKGROUND; w * cam.height as usize];
    for (index, det) in detections.iter().enumerate() {
        det.mask.for_each_set(|x, y| {
            let cell = &mut label_image[y as usize * w + x as usize];
            if *cell == BACKGROUND {
                *cell = index as u32;
            }
        });
    }

    let labels = scan
        .points
        .iter()
        .map(|&p| {
            let px = match cam.project(p) {
                Some(px) if cam.contains_pixel(&px) => px,
                _ => return None,
            };
            let (u, v) = (px.u.round(), px.v.round());
            let (ui, vi) = match (u.to_i64(), v.to_i64()) {
                (Some(u), Some(v)) => (u, v),
                _ => return None,
            };
            // Rounding can push a coordinate just past the last pixel.
            if ui < 0 || vi < 0 || ui >= cam.width as i64 || vi >= cam.height as i64 {
                return None;
            }
            match label_image[vi as usize * w + ui as usize] {
                BACKGROUND => None,
                index => Some(index),
            }
        })
        .collect();
    Ok(labels)
}

/// Connected components under the "pairwise distance ≤ tolerance" adjacency
/// relation, via a uniform grid hash with cell size equal to the tolerance
/// (neighbor queries inspect the 27 surrounding cells).
///
/// Components smaller than `min_size` are discarded. Output clusters are
/// sorted by descending size, ties by smallest contained point index, and
/// each surviving point appears in exactly one cluster.
pub fn euclidean_cluster<S: Real>(
    points: &[Vec3<S>],
    tolerance: S,
    min_size: usize,
) -> Vec<Vec<usize>> {
    assert!(tolerance > S::zero(), "tolerance must be positive");
    assert!(min_size >= 1, "min_size must be at least 1");
    if points.is_empty() {
        return Vec::new();
    }

    let inv_cell = S::one() / tolerance;
    let cell_of = |p: &Vec3<S>| -> (i64, i64, i64) {
        (
            (p.x * inv_cell).floor().to_i64().unwrap_or(0),
            (p.y * inv_cell).floor().to_i64().unwrap_or(0),
            (p.z * inv_cell).floor().to_i64().unwrap_or(0),
        )
    };

    let mut grid: FastMap<(i64, i64, i64), Vec<usize>> = FastMap::default();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell_of(p)).or_default().push(i);
    }

    let tol_sq = tolerance * tolerance;
    let mut visited = vec![false; points.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut queue: Vec<usize> = Vec::new();

    for seed in 0..points.len() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        queue.clear();
        queue.push(seed);
        let mut component = vec![seed];
        while let Some(i) = queue.pop() {
            let (cx, cy, cz) = cell_of(&points[i]);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &j in bucket {
                            if !visited[j]
                                && (points[j] - points[i]).norm_squared() <= tol_sq
                            {
                                visited[j] = true;
                                queue.push(j);
                                component.push(j);
                            }
                        }
                    }
                }
            }
        }
        if component.len() >= min_size {
            component.sort_unstable();
            clusters.push(component);
        }
    }

    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    clusters
}

/// The largest cluster, ties broken by smallest contained point index.
pub fn select_object_cluster(clusters: &[Vec<usize>]) -> Option<&Vec<usize>> {
    clusters
        .iter()
        .min_by(|a, b| b.len().cmp(&a.len()).then(a.iter().min().cmp(&b.iter().min())))
}

/// Full Layer I pass: label, cluster per detection, keep the largest
/// cluster, fit a box. Detections whose labeled point set is empty or whose
/// clusters all fall below `min_size` yield no entry.
pub fn generate_boxes<S: Real>(
    scan: &PointCloud<S>,
    cam: &CameraModel<S>,
    detections: &[Detection2D<S>],
    scan_id: u64,
    tolerance: S,
    min_size: usize,
) -> Result<ScanDetections<S>, Layer1Error> {
    let labels = label_points(scan, cam, detections)?;

    let mut per_detection: Vec<Vec<usize>> = vec![Vec::new(); detections.len()];
    for (i, label) in labels.iter().enumerate() {
        if let Some(d) = label {
            per_detection[*d as usize].push(i);
        }
    }

    let mut clusters = Vec::new();
    let mut boxes = Vec::new();
    for (det, scan_indices) in detections.iter().zip(&per_detection) {
        if scan_indices.is_empty() {
            continue;
        }
        let local_points: Vec<Vec3<S>> =
            scan_indices.iter().map(|&i| scan.points[i]).collect();
        let components = euclidean_cluster(&local_points, tolerance, min_size);
        let Some(best) = select_object_cluster(&components) else {
            continue;
        };
        let indices: Vec<usize> = best.iter().map(|&local| scan_indices[local]).collect();
        let points: Vec<Vec3<S>> = best.iter().map(|&local| local_points[local]).collect();
        let aabb = fit_aabb(&points, scan.frame).expect("selected cluster is non-empty");
        clusters.push(Cluster {
            indices,
            points,
            frame: scan.frame,
            class_id: det.class_id,
            confidence: det.confidence,
        });
        boxes.push(aabb);
    }
    Ok(ScanDetections { scan_id, clusters, boxes })
}
