//! Layer III: accumulate the world point cloud behind a voxel index, grow
//! each object cluster with map points that fall inside point-centered voxel
//! regions of side `r`, and localize objects by cluster centroid.
//!
//! The map is single-writer (scans integrate in order); refinement reads the
//! map and may run concurrently for different instances between
//! integrations.

use std::collections::HashSet;

use crate::fxhash::{FastMap, FastSet};
use crate::geometry::{fit_aabb, Frame, GeometryError, PointCloud, Vec3};
use crate::layer1::Cluster;
use crate::layer2::ObjectRegistry;
use crate::scalar::{real, Real};

/// Integer voxel coordinates: `floor(coordinate / cell)` per axis. Stable
/// for a fixed cell size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VoxelKey {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl VoxelKey {
    pub fn of<S: Real>(p: &Vec3<S>, cell: S) -> Self {
        Self {
            ix: (p.x / cell).floor().to_i64().unwrap_or(0),
            iy: (p.y / cell).floor().to_i64().unwrap_or(0),
            iz: (p.z / cell).floor().to_i64().unwrap_or(0),
        }
    }
}

/// Refinement tunables.
#[derive(Debug, Clone)]
pub struct RefineParams {
    /// Refresh untouched instances whose last refinement is at least this
    /// many scans old.
    pub refresh_every: u64,
    /// Re-run refinement until the cluster stops growing instead of the
    /// default single pass per scan.
    pub to_fixpoint: bool,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self { refresh_every: 10, to_fixpoint: false }
    }
}

/// Accumulated world-frame point cloud with a voxel index of cell side `r`.
///
/// Points are append-only within a run; an optional leaf size deduplicates
/// integration to at most one point per leaf voxel.
#[derive(Debug, Clone)]
pub struct GlobalMap<S: Real> {
    points: Vec<Vec3<S>>,
    index: FastMap<VoxelKey, Vec<u32>>,
    r: S,
    leaf: Option<S>,
    occupied_leaves: FastSet<VoxelKey>,
}

impl<S: Real> GlobalMap<S> {
    pub fn new(r: S, leaf: Option<S>) -> Self {
        assert!(r > S::zero(), "voxel region side must be positive");
        if let Some(l) = leaf {
            assert!(l > S::zero(), "leaf size must be positive");
        }
        Self {
            points: Vec::new(),
            index: FastMap::default(),
            r,
            leaf,
            occupied_leaves: FastSet::default(),
        }
    }

    pub fn r(&self) -> S {
        self.r
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3<S>] {
        &self.points
    }

    /// Append a world-frame scan. With a leaf size set, at most one point
    /// per leaf voxel is kept across the whole map lifetime. Existing
    /// indices never change.
    pub fn integrate_scan(&mut self, scan_w: &PointCloud<S>) {
        debug_assert_eq!(scan_w.frame, Frame::World);
        for &p in &scan_w.points {
            if let Some(leaf) = self.leaf {
                if !self.occupied_leaves.insert(VoxelKey::of(&p, leaf)) {
                    continue;
                }
            }
            let idx = self.points.len() as u32;
            self.points.push(p);
            self.index.entry(VoxelKey::of(&p, self.r)).or_default().push(idx);
        }
    }

    /// All map points within max-norm `r/2` of at least one cluster point:
    /// the union of point-centered cubes of side `r`.
    ///
    /// Candidate buckets are the voxels overlapping any such cube; each
    /// candidate is then distance-checked against cluster points grouped in
    /// a transient grid, so the result is exact. Output points are in map
    /// index order, making refinement deterministic.
    pub fn refine_cluster(&self, cluster: &Cluster<S>) -> Cluster<S> {
        debug_assert_eq!(cluster.frame, Frame::World);
        if cluster.points.is_empty() {
            return Cluster { indices: Vec::new(), points: Vec::new(), ..cluster.clone() };
        }
        let half = self.r * real::<S>(0.5);

        // Group cluster points by voxel key; a candidate can only be within
        // r/2 of cluster points in its own or an adjacent cell, so the
        // buckets worth probing are the 27-neighborhoods of the occupied
        // cells (a superset of the exact per-point cover; the distance check
        // below keeps the result exact).
        let mut cluster_grid: FastMap<VoxelKey, Vec<usize>> = FastMap::default();
        for (i, p) in cluster.points.iter().enumerate() {
            cluster_grid.entry(VoxelKey::of(p, self.r)).or_default().push(i);
        }
        let mut probe_keys: Vec<VoxelKey> = Vec::with_capacity(cluster_grid.len() * 27);
        for key in cluster_grid.keys() {
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        probe_keys.push(VoxelKey {
                            ix: key.ix + dx,
                            iy: key.iy + dy,
                            iz: key.iz + dz,
                        });
                    }
                }
            }
        }
        probe_keys.sort_unstable_by_key(|k| (k.ix, k.iy, k.iz));
        probe_keys.dedup();

        // Broad-phase reject: anything past the cluster box grown by r/2
        // cannot pass the max-norm test against any cluster point.
        let bounds = fit_aabb(&cluster.points, Frame::World).expect("cluster non-empty");
        let margin = Vec3::new(half, half, half);
        let lo = bounds.min - margin;
        let hi = bounds.max + margin;

        let near_cluster = |q: Vec3<S>, qk: VoxelKey, dx: i64, dy: i64, dz: i64| -> bool {
            let nk = VoxelKey { ix: qk.ix + dx, iy: qk.iy + dy, iz: qk.iz + dz };
            match cluster_grid.get(&nk) {
                Some(near) => near.iter().any(|&ci| (q - cluster.points[ci]).norm_inf() <= half),
                None => false,
            }
        };
        let mut kept: Vec<u32> = Vec::new();
        for key in &probe_keys {
            let Some(bucket) = self.index.get(key) else { continue };
            'candidate: for &idx in bucket {
                let q = self.points[idx as usize];
                if q.x < lo.x || q.y < lo.y || q.z < lo.z || q.x > hi.x || q.y > hi.y || q.z > hi.z
                {
                    continue;
                }
                let qk = VoxelKey::of(&q, self.r);
                // Most hits sit in the candidate's own cell.
                if near_cluster(q, qk, 0, 0, 0) {
                    kept.push(idx);
                    continue;
                }
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            if (dx, dy, dz) != (0, 0, 0) && near_cluster(q, qk, dx, dy, dz) {
                                kept.push(idx);
                                continue 'candidate;
                            }
                        }
                    }
                }
            }
        }
        kept.sort_unstable();
        kept.dedup();

        Cluster {
            points: kept.iter().map(|&i| self.points[i as usize]).collect(),
            indices: kept.into_iter().map(|i| i as usize).collect(),
            frame: Frame::World,
            class_id: cluster.class_id,
            confidence: cluster.confidence,
        }
    }
}

/// Arithmetic mean of a non-empty cluster: the object's location estimate.
pub fn localize<S: Real>(cluster: &Cluster<S>) -> Result<Vec3<S>, GeometryError> {
    if cluster.points.is_empty() {
        return Err(GeometryError::EmptyCluster);
    }
    Ok(crate::layer2::centroid(&cluster.points))
}

/// Refine registry instances against the map: every instance touched in the
/// current scan, plus untouched instances whose last refinement is at least
/// `refresh_every` scans old.
///
/// Each refined instance gets its cluster replaced by the map subset around
/// it and its box refit. With `to_fixpoint`, refinement repeats until the
/// cluster stops growing.
pub fn refine_registry<S: Real>(
    map: &GlobalMap<S>,
    registry: &mut ObjectRegistry<S>,
    touched: &[u64],
    scan_id: u64,
    params: &RefineParams,
) {
    let touched: HashSet<u64> = touched.iter().copied().collect();
    for slot in 0..registry.len() {
        let id = slot as u64;
        let inst = registry.get(id).expect("slot in range");
        let due = touched.contains(&id)
            || match inst.last_refined_scan {
                None => true,
                Some(last) => scan_id.saturating_sub(last) >= params.refresh_every,
            };
        if !due {
            continue;
        }
        let mut refined = map.refine_cluster(&inst.cluster);
        if params.to_fixpoint {
            let mut size = refined.points.len();
            loop {
                let next = map.refine_cluster(&refined);
                if next.points.len() == size {
                    refined = next;
                    break;
                }
                size = next.points.len();
                refined = next;
            }
        }
        // A leaf size larger than r/2 can leave the map with no point near
        // the cluster; keep the observation cluster in that case.
        if refined.points.is_empty() {
            continue;
        }
        let aabb = fit_aabb(&refined.points, Frame::World).expect("refined cluster non-empty");
        registry.apply_refinement(id, refined, aabb);
        registry.get_mut(id).expect("slot in range").last_refined_scan = Some(scan_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer2::{MergeParams, Pose};
    use crate::geometry::RigidTransform;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    fn world_cloud(points: Vec<Vec3<f64>>) -> PointCloud<f64> {
        PointCloud::new(points, Frame::World)
    }

    fn cluster_of(points: Vec<Vec3<f64>>) -> Cluster<f64> {
        Cluster {
            indices: (0..points.len()).collect(),
            points,
            frame: Frame::World,
            class_id: 2,
            confidence: 0.8,
        }
    }

    #[test]
    fn integrate_cold_start_indexes_everything() {
        let mut map = GlobalMap::new(0.2, None);
        let pts: Vec<_> = (0..10).map(|i| v(i as f64 * 0.5, 0.0, 0.0)).collect();
        map.integrate_scan(&world_cloud(pts));
        assert_eq!(map.len(), 10);
    }

    #[test]
    fn integrate_leaf_dedup_is_idempotent() {
        let mut map = GlobalMap::new(0.2, Some(0.1));
        let pts: Vec<_> = (0..10).map(|i| v(i as f64 * 0.5, 0.3, -0.7)).collect();
        map.integrate_scan(&world_cloud(pts.clone()));
        let count = map.len();
        map.integrate_scan(&world_cloud(pts));
        assert_eq!(map.len(), count);
    }

    #[test]
    fn integrate_without_leaf_appends_everything() {
        let mut map = GlobalMap::new(0.2, None);
        let pts: Vec<_> = (0..7).map(|_| v(0.0, 0.0, 0.0)).collect();
        map.integrate_scan(&world_cloud(pts.clone()));
        map.integrate_scan(&world_cloud(pts));
        assert_eq!(map.len(), 14);
    }

    #[test]
    fn refine_includes_exact_and_excludes_r_offset() {
        // Dyadic r so the half-side boundary is exact in floating point.
        let r = 0.25;
        let mut map = GlobalMap::new(r, None);
        map.integrate_scan(&world_cloud(vec![
            v(1.0, 1.0, 1.0),           // exactly at the cluster point
            v(1.0 + r, 1.0, 1.0),       // offset by r > r/2: excluded
            v(1.0 + r / 2.0, 1.0, 1.0), // boundary: |q-p|inf == r/2, included
        ]));
        let refined = map.refine_cluster(&cluster_of(vec![v(1.0, 1.0, 1.0)]));
        assert_eq!(refined.indices, vec![0, 2]);
        assert_eq!(refined.class_id, 2);
    }

    /// Brute-force max-norm double loop.
    fn refine_reference(
        map_points: &[Vec3<f64>],
        cluster: &[Vec3<f64>],
        r: f64,
    ) -> Vec<usize> {
        let half = r / 2.0;
        map_points
            .iter()
            .enumerate()
            .filter(|(_, q)| cluster.iter().any(|p| (**q - *p).norm_inf() <= half))
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn refine_matches_brute_force_on_random_maps() {
        let mut state = 0x5deece66du64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..25 {
            let r = 0.1 + next() * 0.4;
            let mut map = GlobalMap::new(r, None);
            let n = 50 + (next() * 1500.0) as usize;
            let map_pts: Vec<_> =
                (0..n).map(|_| v(next() * 4.0, next() * 4.0, next() * 4.0)).collect();
            map.integrate_scan(&world_cloud(map_pts.clone()));
            let m = 1 + (next() * 40.0) as usize;
            let cluster_pts: Vec<_> =
                (0..m).map(|_| v(next() * 4.0, next() * 4.0, next() * 4.0)).collect();
            let got = map.refine_cluster(&cluster_of(cluster_pts.clone()));
            let want = refine_reference(&map_pts, &cluster_pts, r);
            assert_eq!(got.indices, want, "trial {trial}");
        }
    }

    #[test]
    fn refinement_is_monotone_in_map_growth() {
        let mut map = GlobalMap::new(0.2, None);
        map.integrate_scan(&world_cloud(vec![v(0.0, 0.0, 0.0), v(0.05, 0.0, 0.0)]));
        let cluster = cluster_of(vec![v(0.0, 0.0, 0.0)]);
        let first = map.refine_cluster(&cluster);
        map.integrate_scan(&world_cloud(vec![v(0.0, 0.05, 0.0), v(3.0, 3.0, 3.0)]));
        let second = map.refine_cluster(&cluster);
        let first_set: HashSet<usize> = first.indices.iter().copied().collect();
        let second_set: HashSet<usize> = second.indices.iter().copied().collect();
        assert!(first_set.is_subset(&second_set));
        assert!(second.points.len() > first.points.len());
    }

    #[test]
    fn second_refinement_pass_is_superset_of_first() {
        // A chain of points 0.09 apart: each pass absorbs one more shell.
        let mut map = GlobalMap::new(0.2, None);
        let chain: Vec<_> = (0..8).map(|i| v(i as f64 * 0.09, 0.0, 0.0)).collect();
        map.integrate_scan(&world_cloud(chain));
        let start = cluster_of(vec![v(0.0, 0.0, 0.0)]);
        let pass1 = map.refine_cluster(&start);
        let pass2 = map.refine_cluster(&pass1);
        let s1: HashSet<usize> = pass1.indices.iter().copied().collect();
        let s2: HashSet<usize> = pass2.indices.iter().copied().collect();
        assert!(s1.is_subset(&s2));
        assert!(s2.len() > s1.len(), "the chain keeps growing in pass 2");
    }

    #[test]
    fn localize_cases() {
        let single = cluster_of(vec![v(4.0, -1.0, 2.0)]);
        assert_eq!(localize(&single).unwrap(), v(4.0, -1.0, 2.0));

        let corners = cluster_of(vec![
            v(-1.0, -1.0, -1.0),
            v(1.0, -1.0, -1.0),
            v(-1.0, 1.0, -1.0),
            v(1.0, 1.0, -1.0),
            v(-1.0, -1.0, 1.0),
            v(1.0, -1.0, 1.0),
            v(-1.0, 1.0, 1.0),
            v(1.0, 1.0, 1.0),
        ]);
        assert_eq!(localize(&corners).unwrap(), v(0.0, 0.0, 0.0));

        let line = cluster_of(vec![v(1.0, 0.0, 0.0), v(3.0, 0.0, 0.0), v(5.0, 0.0, 0.0)]);
        assert_eq!(localize(&line).unwrap(), v(3.0, 0.0, 0.0));

        let empty = cluster_of(vec![]);
        assert_eq!(localize(&empty).unwrap_err(), GeometryError::EmptyCluster);
    }

    #[test]
    fn localize_lies_inside_cluster_box() {
        let cluster = cluster_of(vec![v(0.0, 0.0, 0.0), v(1.0, 2.0, 3.0), v(0.5, 0.1, 2.0)]);
        let c = localize(&cluster).unwrap();
        let b = fit_aabb(&cluster.points, Frame::World).unwrap();
        assert!(b.contains(c));
    }

    fn seeded_registry(points: Vec<Vec3<f64>>) -> ObjectRegistry<f64> {
        let mut reg = ObjectRegistry::new();
        let cluster = cluster_of(points.clone());
        let dets = crate::layer1::ScanDetections {
            scan_id: 0,
            boxes: vec![fit_aabb(&points, Frame::World).unwrap()],
            clusters: vec![cluster],
        };
        reg.pair_and_merge(&dets, &MergeParams::default());
        reg
    }

    #[test]
    fn refine_registry_fixed_point_when_cluster_covers_map() {
        let pts = vec![v(0.0, 0.0, 0.0), v(0.05, 0.0, 0.0)];
        let mut map = GlobalMap::new(0.2, None);
        map.integrate_scan(&world_cloud(pts.clone()));
        let mut reg = seeded_registry(pts.clone());
        refine_registry(&map, &mut reg, &[0], 0, &RefineParams::default());
        assert_eq!(reg.instances()[0].cluster.points, pts);
    }

    #[test]
    fn refine_registry_grows_cluster_with_fov_gap_points() {
        // Map holds object points beyond the detected cluster (as if seen
        // only by the LiDAR, outside the camera's view); refinement absorbs
        // the adjacent ones and the box grows.
        let detected = vec![v(0.0, 0.0, 0.0), v(0.08, 0.0, 0.0)];
        let hidden = vec![v(0.16, 0.0, 0.0), v(0.24, 0.0, 0.0)];
        let mut map = GlobalMap::new(0.2, None);
        let mut all = detected.clone();
        all.extend(hidden);
        map.integrate_scan(&world_cloud(all));
        let mut reg = seeded_registry(detected);
        let before = reg.instances()[0].bounding_box;
        refine_registry(&map, &mut reg, &[0], 0, &RefineParams { to_fixpoint: true, refresh_every: 10 });
        let inst = &reg.instances()[0];
        assert_eq!(inst.cluster.points.len(), 4);
        assert!(inst.bounding_box.max.x > before.max.x);
    }

    #[test]
    fn refine_registry_empty_is_noop() {
        let map = GlobalMap::<f64>::new(0.2, None);
        let mut reg = ObjectRegistry::new();
        refine_registry(&map, &mut reg, &[], 0, &RefineParams::default());
        assert!(reg.is_empty());
    }

    #[test]
    fn untouched_instances_refresh_after_k_scans() {
        let pts = vec![v(0.0, 0.0, 0.0)];
        let mut map = GlobalMap::new(0.2, None);
        map.integrate_scan(&world_cloud(pts.clone()));
        let mut reg = seeded_registry(pts);
        let params = RefineParams { refresh_every: 5, to_fixpoint: false };
        refine_registry(&map, &mut reg, &[0], 0, &params);
        assert_eq!(reg.instances()[0].last_refined_scan, Some(0));

        // New map point near the object, instance untouched: not refreshed
        // before K scans pass, refreshed at the K-th.
        map.integrate_scan(&world_cloud(vec![v(0.05, 0.0, 0.0)]));
        refine_registry(&map, &mut reg, &[], 3, &params);
        assert_eq!(reg.instances()[0].cluster.points.len(), 1);
        refine_registry(&map, &mut reg, &[], 5, &params);
        assert_eq!(reg.instances()[0].cluster.points.len(), 2);
        assert_eq!(reg.instances()[0].last_refined_scan, Some(5));
    }

    #[test]
    fn world_pose_round_trip_keeps_refinement_exact() {
        // Sanity: transforms feeding the map do not disturb voxel membership.
        let pose = Pose {
            scan_id: 0,
            t_wl: RigidTransform::from_translation(v(100.0, -50.0, 3.0)),
        };
        let local = [v(0.0, 0.0, 0.0), v(0.05, 0.0, 0.0)];
        let world: Vec<_> = local.iter().map(|&p| pose.t_wl.apply(p)).collect();
        let mut map = GlobalMap::new(0.2, None);
        map.integrate_scan(&world_cloud(world.clone()));
        let refined = map.refine_cluster(&cluster_of(vec![world[0]]));
        assert_eq!(refined.points.len(), 2);
    }
}
