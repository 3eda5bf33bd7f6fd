//! Layer II: transform per-scan clusters and boxes into the world frame,
//! pair them with the object registry by box overlap, and merge paired
//! observations by refitting a box over the union of their cluster points.
//!
//! The registry is a single-writer state machine: scans are applied strictly
//! in scan order by one writer; snapshots are read-only views taken between
//! scan applications.

use thiserror::Error;

use crate::fxhash::FastSet;

use crate::geometry::{fit_aabb, overlap_ratio, Aabb3, Frame, OverlapMetric, RigidTransform, Vec3};
use crate::layer1::{Cluster, ScanDetections};
use crate::scalar::{real, Real};

#[derive(Debug, Error, PartialEq)]
pub enum Layer2Error {
    #[error("pose is for scan {pose_scan}, detections are for scan {dets_scan}")]
    ScanIdMismatch { pose_scan: u64, dets_scan: u64 },
}

/// Per-scan odometry pose: the LiDAR→world transform.
#[derive(Debug, Clone)]
pub struct Pose<S: Real> {
    pub scan_id: u64,
    pub t_wl: RigidTransform<S>,
}

/// A unique merged object: world-frame cluster and box plus observation
/// bookkeeping.
#[derive(Debug, Clone)]
pub struct ObjectInstance<S: Real> {
    pub object_id: u64,
    pub class_id: u32,
    pub best_confidence: S,
    pub cluster: Cluster<S>,
    pub bounding_box: Aabb3<S>,
    pub observation_count: u64,
    pub last_seen_scan: u64,
    /// Scan at which Layer III last refined this instance, if ever.
    pub last_refined_scan: Option<u64>,
    /// Bit keys of the current cluster points, kept alongside so repeated
    /// merges deduplicate without rescanning the whole cluster.
    point_keys: FastSet<[u64; 3]>,
}

/// How pairing looks up merge candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegistryIndexMode {
    /// Exhaustive scan over the whole registry. Simple and the correctness
    /// baseline; pairing cost grows with every tracked object.
    Linear,
    /// Uniform spatial hash over box centers with cell size equal to the
    /// largest box diagonal seen, so pairing inspects only nearby instances.
    SpatialHash,
}

impl std::str::FromStr for RegistryIndexMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(RegistryIndexMode::Linear),
            "hash" | "spatial-hash" => Ok(RegistryIndexMode::SpatialHash),
            other => Err(format!("unknown registry index '{other}' (expected hash|linear)")),
        }
    }
}

/// Pairing tunables.
#[derive(Debug, Clone)]
pub struct MergeParams<S> {
    pub overlap_threshold: S,
    pub metric: OverlapMetric,
    /// Merge across classes as well (ablation flag); default is class-gated.
    pub class_agnostic: bool,
    pub index_mode: RegistryIndexMode,
}

impl<S: Real> Default for MergeParams<S> {
    fn default() -> Self {
        Self {
            overlap_threshold: real(0.3),
            metric: OverlapMetric::MinRatio,
            class_agnostic: false,
            index_mode: RegistryIndexMode::SpatialHash,
        }
    }
}

/// Outcome of one new detection: the surviving object id and whether it was
/// merged into an existing instance (false = created a new one).
pub type PairOutcome = (u64, bool);

/// Read-only registry row.
#[derive(Debug, Clone)]
pub struct SnapshotRow<S: Real> {
    pub object_id: u64,
    pub class_id: u32,
    pub bounding_box: Aabb3<S>,
    pub centroid: Vec3<S>,
    pub observation_count: u64,
    pub point_count: usize,
}

/// Ordered set of unique object instances; ids are dense in `[0, next_id)`.
///
/// Instances removed by transitive merging renumber the tail to keep ids
/// dense, so ids are stable only between scans.
#[derive(Debug, Clone, Default)]
pub struct ObjectRegistry<S: Real> {
    instances: Vec<ObjectInstance<S>>,
    /// Spatial index over box centers, kept across scans in hash mode.
    index: Option<CenterIndex<S>>,
    /// Instances whose box was refit outside pair_and_merge (Layer III);
    /// they re-enter the next transitive pass and get their index slot
    /// refreshed.
    refit_log: Vec<u64>,
}

/// Transform Layer I output into the world frame.
///
/// Clusters are transformed point-by-point; boxes are re-fit from the
/// transformed cluster points rather than by transforming corners, which
/// would inflate an axis-aligned box under rotation.
pub fn to_world<S: Real>(
    scan_dets: &ScanDetections<S>,
    pose: &Pose<S>,
) -> Result<ScanDetections<S>, Layer2Error> {
    if pose.scan_id != scan_dets.scan_id {
        return Err(Layer2Error::ScanIdMismatch {
            pose_scan: pose.scan_id,
            dets_scan: scan_dets.scan_id,
        });
    }
    let mut clusters = Vec::with_capacity(scan_dets.clusters.len());
    let mut boxes = Vec::with_capacity(scan_dets.clusters.len());
    for cluster in &scan_dets.clusters {
        let points: Vec<Vec3<S>> = cluster.points.iter().map(|&p| pose.t_wl.apply(p)).collect();
        let aabb = fit_aabb(&points, Frame::World).expect("cluster is non-empty");
        clusters.push(Cluster {
            indices: cluster.indices.clone(),
            points,
            frame: Frame::World,
            class_id: cluster.class_id,
            confidence: cluster.confidence,
        });
        boxes.push(aabb);
    }
    Ok(ScanDetections { scan_id: scan_dets.scan_id, clusters, boxes })
}

impl<S: Real> ObjectRegistry<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replace an instance's cluster wholesale (Layer III refinement): the
    /// dedup keys are rebuilt and the instance is queued for re-pairing.
    pub fn apply_refinement(&mut self, object_id: u64, cluster: Cluster<S>, aabb: Aabb3<S>) {
        let inst = &mut self.instances[object_id as usize];
        inst.point_keys = cluster.points.iter().map(|p| p.bit_key()).collect();
        inst.cluster = cluster;
        if aabb != inst.bounding_box {
            inst.bounding_box = aabb;
            self.refit_log.push(object_id);
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.instances.len() as u64
    }

    pub fn instances(&self) -> &[ObjectInstance<S>] {
        &self.instances
    }

    pub fn get(&self, object_id: u64) -> Option<&ObjectInstance<S>> {
        self.instances.get(object_id as usize)
    }

    pub fn get_mut(&mut self, object_id: u64) -> Option<&mut ObjectInstance<S>> {
        self.instances.get_mut(object_id as usize)
    }

    /// Read-only rows ordered by object id; centroid is the cluster mean.
    pub fn snapshot(&self) -> Vec<SnapshotRow<S>> {
        self.instances
            .iter()
            .map(|inst| SnapshotRow {
                object_id: inst.object_id,
                class_id: inst.class_id,
                bounding_box: inst.bounding_box,
                centroid: centroid(&inst.cluster.points),
                observation_count: inst.observation_count,
                point_count: inst.cluster.points.len(),
            })
            .collect()
    }

    /// Pair each world-frame detection with the registry and merge or insert.
    ///
    /// Per detection, the same-class instance with the best overlap ratio
    /// above the threshold absorbs it (cluster union, box refit); otherwise a
    /// new instance is created. After all detections of the scan, a
    /// transitive pass merges any same-class instance pairs that now exceed
    /// the threshold (lower id survives) until no pair qualifies.
    ///
    /// Returns one `(object_id, was_merged)` per detection, with ids as they
    /// stand after the transitive pass.
    pub fn pair_and_merge(
        &mut self,
        new_dets: &ScanDetections<S>,
        params: &MergeParams<S>,
    ) -> Vec<PairOutcome> {
        debug_assert!(new_dets.clusters.iter().all(|c| c.frame == Frame::World));
        let scan_id = new_dets.scan_id;

        // The registry sits at a pairwise fixed point between scans except
        // for boxes Layer III refit since the last pass; those must be
        // re-checked alongside everything created or grown below.
        let mut touched: Vec<usize> =
            std::mem::take(&mut self.refit_log).into_iter().map(|id| id as usize).collect();

        let mut index = match params.index_mode {
            RegistryIndexMode::Linear => {
                self.index = None;
                None
            }
            RegistryIndexMode::SpatialHash => {
                let mut idx = match self.index.take() {
                    Some(idx) => idx,
                    None => CenterIndex::build(&self.instances, real(1e-6)),
                };
                // Refit boxes may have moved or outgrown their index slots.
                for &slot in &touched {
                    let aabb = self.instances[slot].bounding_box;
                    if idx.fits(&aabb) && idx.can_amend() {
                        idx.update(slot, &aabb);
                    } else {
                        idx = CenterIndex::build(&self.instances, aabb.diagonal().max(idx.cell));
                    }
                }
                Some(idx)
            }
        };

        // Slot index per detection, fixed up as removals shift the tail.
        let mut outcome_slot: Vec<usize> = Vec::with_capacity(new_dets.clusters.len());
        let mut merged_flag: Vec<bool> = Vec::with_capacity(new_dets.clusters.len());

        for (cluster, aabb) in new_dets.clusters.iter().zip(&new_dets.boxes) {
            if let Some(idx) = index.as_mut() {
                if !idx.fits(aabb) {
                    *idx = CenterIndex::build(&self.instances, aabb.diagonal());
                }
            }
            let best = self.best_candidate(aabb, cluster.class_id, None, params, index.as_ref());
            match best {
                Some(slot) => {
                    let box_changed = self.merge_observation(slot, cluster, aabb, scan_id);
                    outcome_slot.push(slot);
                    merged_flag.push(true);
                    // The registry was at a pairwise fixed point, so only
                    // instances whose box actually changed can newly exceed
                    // the threshold against others.
                    if box_changed {
                        let grown = self.instances[slot].bounding_box;
                        if let Some(idx) = index.as_mut() {
                            if idx.fits(&grown) && idx.can_amend() {
                                idx.update(slot, &grown);
                            } else {
                                let min_cell = grown.diagonal().max(idx.cell);
                                *idx = CenterIndex::build(&self.instances, min_cell);
                            }
                        }
                        touched.push(slot);
                    }
                }
                None => {
                    let slot = self.instances.len();
                    self.instances.push(ObjectInstance {
                        object_id: slot as u64,
                        class_id: cluster.class_id,
                        best_confidence: cluster.confidence,
                        point_keys: cluster.points.iter().map(|p| p.bit_key()).collect(),
                        cluster: cluster.clone(),
                        bounding_box: *aabb,
                        observation_count: 1,
                        last_seen_scan: scan_id,
                        last_refined_scan: None,
                    });
                    if let Some(idx) = index.as_mut() {
                        if idx.fits(aabb) && idx.can_amend() {
                            idx.insert(slot, aabb);
                        } else {
                            let min_cell = aabb.diagonal().max(idx.cell);
                            *idx = CenterIndex::build(&self.instances, min_cell);
                        }
                    }
                    outcome_slot.push(slot);
                    merged_flag.push(false);
                    touched.push(slot);
                }
            }
        }

        // Transitive pass over the instances created or grown this scan.
        touched.sort_unstable();
        touched.dedup();
        let mut worklist = touched;
        while let Some(slot) = worklist.pop() {
            if slot >= self.instances.len() {
                continue;
            }
            let aabb = self.instances[slot].bounding_box;
            let class = self.instances[slot].class_id;
            let Some(partner) =
                self.best_candidate(&aabb, class, Some(slot), params, index.as_ref())
            else {
                continue;
            };
            let (keep, gone) = if partner < slot { (partner, slot) } else { (slot, partner) };
            self.merge_instances(keep, gone);
            // Renumber: slots above `gone` shifted down by one.
            let fix = |s: &mut usize| {
                if *s == gone {
                    *s = keep;
                } else if *s > gone {
                    *s -= 1;
                }
            };
            for s in &mut worklist {
                fix(s);
            }
            for s in &mut outcome_slot {
                fix(s);
            }
            if let Some(idx) = index.as_ref() {
                index = Some(CenterIndex::build(&self.instances, idx.cell));
            }
            let keep_fixed = if keep > gone { keep - 1 } else { keep };
            worklist.push(keep_fixed);
            worklist.sort_unstable();
            worklist.dedup();
        }

        self.index = index;
        outcome_slot
            .into_iter()
            .zip(merged_flag)
            .map(|(slot, merged)| (slot as u64, merged))
            .collect()
    }

    /// Best same-class merge candidate above the threshold, ties by lowest
    /// id (independent of candidate visit order). `exclude` skips
    /// self-pairing during the transitive pass.
    fn best_candidate(
        &self,
        aabb: &Aabb3<S>,
        class_id: u32,
        exclude: Option<usize>,
        params: &MergeParams<S>,
        index: Option<&CenterIndex<S>>,
    ) -> Option<usize> {
        let mut best: Option<(usize, S)> = None;
        let mut consider = |slot: usize| {
            if Some(slot) == exclude {
                return;
            }
            let inst = &self.instances[slot];
            if !params.class_agnostic && inst.class_id != class_id {
                return;
            }
            let ratio = overlap_ratio(aabb, &inst.bounding_box, params.metric)
                .expect("registry boxes are world-frame");
            if ratio > params.overlap_threshold {
                let better = match best {
                    None => true,
                    Some((bs, br)) => ratio > br || (ratio == br && slot < bs),
                };
                if better {
                    best = Some((slot, ratio));
                }
            }
        };
        match index {
            Some(idx) => idx.visit_candidates(aabb, &mut consider),
            None => (0..self.instances.len()).for_each(&mut consider),
        }
        best.map(|(slot, _)| slot)
    }

    /// Absorb one observation into an instance: point union (deduplicating
    /// bit-identical coordinates), box refit, bookkeeping. The union box is
    /// the componentwise min/max of the two fitted boxes, which equals
    /// refitting over all points. Returns whether the box changed.
    fn merge_observation(
        &mut self,
        slot: usize,
        cluster: &Cluster<S>,
        aabb: &Aabb3<S>,
        scan_id: u64,
    ) -> bool {
        let inst = &mut self.instances[slot];
        union_into(&mut inst.cluster, &mut inst.point_keys, &cluster.points);
        let merged = Aabb3::new(
            inst.bounding_box.min.min_with(aabb.min),
            inst.bounding_box.max.max_with(aabb.max),
            Frame::World,
        );
        let changed = merged != inst.bounding_box;
        inst.bounding_box = merged;
        inst.observation_count += 1;
        inst.best_confidence = inst.best_confidence.max(cluster.confidence);
        inst.last_seen_scan = scan_id;
        changed
    }

    /// Merge instance `gone` into `keep` (keep < gone) and remove it,
    /// renumbering the tail so ids stay dense.
    fn merge_instances(&mut self, keep: usize, gone: usize) {
        debug_assert!(keep < gone);
        let absorbed = self.instances.remove(gone);
        let inst = &mut self.instances[keep];
        union_into(&mut inst.cluster, &mut inst.point_keys, &absorbed.cluster.points);
        inst.bounding_box = Aabb3::new(
            inst.bounding_box.min.min_with(absorbed.bounding_box.min),
            inst.bounding_box.max.max_with(absorbed.bounding_box.max),
            Frame::World,
        );
        inst.observation_count += absorbed.observation_count;
        inst.best_confidence = inst.best_confidence.max(absorbed.best_confidence);
        inst.last_seen_scan = inst.last_seen_scan.max(absorbed.last_seen_scan);
        for (slot, inst) in self.instances.iter_mut().enumerate() {
            inst.object_id = slot as u64;
        }
    }
}

/// Mean of a non-empty point list.
pub fn centroid<S: Real>(points: &[Vec3<S>]) -> Vec3<S> {
    let mut sum = Vec3::zero();
    for p in points {
        sum += *p;
    }
    sum / S::from_usize(points.len()).unwrap()
}

/// Append `extra` points whose bit keys are not already in `keys`. The
/// union becomes a cross-scan set, so source indices are cleared.
fn union_into<S: Real>(cluster: &mut Cluster<S>, keys: &mut FastSet<[u64; 3]>, extra: &[Vec3<S>]) {
    for p in extra {
        if keys.insert(p.bit_key()) {
            cluster.points.push(*p);
        }
    }
    cluster.indices.clear();
}

/// Uniform spatial grid over box centers with cell size at least the
/// largest box diagonal seen (query boxes included), so any two boxes that
/// can overlap sit within one cell of each other and a 27-cell probe finds
/// every possible merge partner.
///
/// Storage is a compact dense grid over the occupied region (offset table
/// plus one flat slot array), rebuilt in O(n) when it goes stale; changes
/// between rebuilds sit in a small pending list that queries also scan. The
/// cell is widened when the occupied region would need too many cells, which
/// only ever enlarges candidate sets.
#[derive(Debug, Clone)]
struct CenterIndex<S: Real> {
    cell: S,
    /// Grid origin in cell coordinates and grid dimensions.
    origin: [i64; 3],
    dims: [usize; 3],
    /// CSR layout: `offsets[c]..offsets[c+1]` indexes `slots`.
    offsets: Vec<u32>,
    slots: Vec<u32>,
    /// Per-slot key at build/update time, indexed by slot.
    slot_key: Vec<[i64; 3]>,
    /// Entries added or moved since the last rebuild.
    pending: Vec<u32>,
    pending_flag: Vec<bool>,
}

const INDEX_MAX_CELLS: usize = 1 << 15;
const INDEX_MAX_PENDING: usize = 64;

impl<S: Real> CenterIndex<S> {
    fn build(instances: &[ObjectInstance<S>], min_cell: S) -> Self {
        let mut cell = min_cell.max(real::<S>(1e-6));
        for inst in instances {
            cell = cell.max(inst.bounding_box.diagonal());
        }
        // Widen the cell until the occupied region fits the cell budget.
        let (origin, dims) = loop {
            let (origin, dims) = Self::bounds(instances, cell);
            if dims[0] * dims[1] * dims[2] <= INDEX_MAX_CELLS {
                break (origin, dims);
            }
            cell = cell + cell;
        };

        let cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; cells + 1];
        let mut slot_key = Vec::with_capacity(instances.len());
        for inst in instances {
            let key = key_of(inst.bounding_box.center(), cell);
            counts[Self::cell_id(origin, dims, key) + 1] += 1;
            slot_key.push(key);
        }
        for i in 1..=cells {
            counts[i] += counts[i - 1];
        }
        let mut slots = vec![0u32; instances.len()];
        let mut cursor = counts.clone();
        for (slot, key) in slot_key.iter().enumerate() {
            let c = Self::cell_id(origin, dims, *key);
            slots[cursor[c] as usize] = slot as u32;
            cursor[c] += 1;
        }
        Self {
            cell,
            origin,
            dims,
            offsets: counts,
            slots,
            slot_key,
            pending: Vec::new(),
            pending_flag: vec![false; instances.len()],
        }
    }

    fn bounds(instances: &[ObjectInstance<S>], cell: S) -> ([i64; 3], [usize; 3]) {
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for inst in instances {
            let key = key_of(inst.bounding_box.center(), cell);
            for a in 0..3 {
                lo[a] = lo[a].min(key[a]);
                hi[a] = hi[a].max(key[a]);
            }
        }
        if instances.is_empty() {
            return ([0, 0, 0], [1, 1, 1]);
        }
        let dims = [
            (hi[0] - lo[0]) as usize + 1,
            (hi[1] - lo[1]) as usize + 1,
            (hi[2] - lo[2]) as usize + 1,
        ];
        (lo, dims)
    }

    #[inline]
    fn cell_id(origin: [i64; 3], dims: [usize; 3], key: [i64; 3]) -> usize {
        let x = (key[0] - origin[0]) as usize;
        let y = (key[1] - origin[1]) as usize;
        let z = (key[2] - origin[2]) as usize;
        (z * dims[1] + y) * dims[0] + x
    }

    #[inline]
    fn in_bounds(&self, key: [i64; 3]) -> bool {
        (0..3).all(|a| key[a] >= self.origin[a] && key[a] < self.origin[a] + self.dims[a] as i64)
    }

    /// True when `aabb` fits the current cell size; callers rebuild the
    /// index with a larger cell when it does not.
    fn fits(&self, aabb: &Aabb3<S>) -> bool {
        aabb.diagonal() <= self.cell
    }

    /// True when the pending list can absorb another change.
    fn can_amend(&self) -> bool {
        self.pending.len() < INDEX_MAX_PENDING
    }

    fn insert(&mut self, slot: usize, aabb: &Aabb3<S>) {
        debug_assert!(self.fits(aabb));
        debug_assert_eq!(slot, self.slot_key.len());
        self.slot_key.push(key_of(aabb.center(), self.cell));
        self.pending_flag.push(true);
        self.pending.push(slot as u32);
    }

    fn update(&mut self, slot: usize, aabb: &Aabb3<S>) {
        debug_assert!(self.fits(aabb));
        let new_key = key_of(aabb.center(), self.cell);
        if self.slot_key[slot] == new_key {
            return;
        }
        self.slot_key[slot] = new_key;
        if !self.pending_flag[slot] {
            self.pending_flag[slot] = true;
            self.pending.push(slot as u32);
        }
    }

    /// Visit every slot whose box could overlap `aabb` (the 27 cells around
    /// its center, plus pending entries). Visit order is unspecified;
    /// callers use order-free selection rules.
    fn visit_candidates(&self, aabb: &Aabb3<S>, visit: &mut impl FnMut(usize)) {
        let center = key_of(aabb.center(), self.cell);
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let key = [center[0] + dx, center[1] + dy, center[2] + dz];
                    if !self.in_bounds(key) {
                        continue;
                    }
                    let c = Self::cell_id(self.origin, self.dims, key);
                    for i in self.offsets[c]..self.offsets[c + 1] {
                        let slot = self.slots[i as usize] as usize;
                        // Moved entries are revisited via the pending list.
                        if !self.pending_flag[slot] {
                            visit(slot);
                        }
                    }
                }
            }
        }
        for &slot in &self.pending {
            let key = self.slot_key[slot as usize];
            if (0..3).all(|a| (key[a] - center[a]).abs() <= 1) {
                visit(slot as usize);
            }
        }
    }
}

#[inline]
fn key_of<S: Real>(center: Vec3<S>, cell: S) -> [i64; 3] {
    [
        (center.x / cell).floor().to_i64().unwrap_or(0),
        (center.y / cell).floor().to_i64().unwrap_or(0),
        (center.z / cell).floor().to_i64().unwrap_or(0),
    ]
}
