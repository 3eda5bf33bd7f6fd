//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured values once its assertions hold.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! measurements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use boxlift::detect::{assemble_mask, iou_2d, nms, Box2, RawDetection, CLASS_COUNT, PROTO_COUNT};
use boxlift::detect::PrototypeSet;
use boxlift::eval::{match_and_score, MatchProtocol};
use boxlift::geometry::{
    fit_aabb, overlap_ratio, Aabb3, CameraModel, Frame, Mat3, OverlapMetric, PointCloud,
    RigidTransform, Vec3,
};
use boxlift::io::read_manifest;
use boxlift::layer1::{euclidean_cluster, Cluster};
use boxlift::layer3::GlobalMap;
use boxlift::pipeline::{run_pipeline, RunConfig};
use boxlift::synth::{
    generate_synthetic_sequence, straight_trajectory, SynthObject, SynthSpec,
};

fn tmpdir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("boxlift-acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

// --- Criterion 1: oracle equivalence suites ------------------------------

/// Brute-force connected components over the ≤ tolerance adjacency graph,
/// same output conventions as the production path.
fn clustering_oracle(points: &[Vec3<f64>], tol: f64, min_size: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups
        .into_values()
        .filter(|g| g.len() >= min_size)
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    out.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    out
}

#[test]
fn c1_clustering_matches_brute_force_on_200_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..200 {
        let n = 1 + rng.gen_range(0..500);
        let spread = 1.0 + rng.gen::<f64>() * 6.0;
        let points: Vec<_> = (0..n)
            .map(|_| {
                v(
                    rng.gen::<f64>() * spread,
                    rng.gen::<f64>() * spread,
                    rng.gen::<f64>() * spread,
                )
            })
            .collect();
        let tol = 0.15 + rng.gen::<f64>() * 0.6;
        let min_size = 1 + rng.gen_range(0..4);
        assert_eq!(
            euclidean_cluster(&points, tol, min_size),
            clustering_oracle(&points, tol, min_size),
            "case {case}: n={n} tol={tol} min_size={min_size}"
        );
    }
    println!("criterion 1 (clustering vs brute force, 200 instances <= 500 points): PASS");
}

/// Greedy per-class suppression written independently of the production
/// path: index-based, quadratic.
fn nms_oracle(raw: &[RawDetection<f64>], conf_t: f64, iou_t: f64) -> Vec<usize> {
    let mut order: Vec<usize> =
        (0..raw.len()).filter(|&i| raw[i].class_and_score().1 >= conf_t).collect();
    order.sort_by(|&a, &b| {
        raw[b]
            .class_and_score()
            .1
            .partial_cmp(&raw[a].class_and_score().1)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let (class_i, _) = raw[i].class_and_score();
        let mut dead = false;
        for &k in &kept {
            if raw[k].class_and_score().0 == class_i
                && iou_2d(&raw[k].pixel_box(), &raw[i].pixel_box()) > iou_t
            {
                dead = true;
                break;
            }
        }
        if !dead {
            kept.push(i);
        }
    }
    kept
}

#[test]
fn c1_nms_matches_quadratic_oracle_on_200_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for case in 0..200 {
        let n = rng.gen_range(0..40);
        let raw: Vec<RawDetection<f64>> = (0..n)
            .map(|_| {
                let mut conf = vec![0.0; CLASS_COUNT];
                let class = rng.gen_range(0..4);
                conf[class] = rng.gen::<f64>();
                // A second nonzero class exercises the argmax.
                conf[(class + 7) % CLASS_COUNT] = rng.gen::<f64>() * 0.5;
                RawDetection::new(
                    rng.gen::<f64>() * 60.0,
                    rng.gen::<f64>() * 60.0,
                    2.0 + rng.gen::<f64>() * 15.0,
                    2.0 + rng.gen::<f64>() * 15.0,
                    conf,
                    vec![0.0; PROTO_COUNT],
                )
                .unwrap()
            })
            .collect();
        let conf_t = rng.gen::<f64>() * 0.5;
        let iou_t = 0.2 + rng.gen::<f64>() * 0.6;
        let got = nms(&raw, conf_t, iou_t);
        let want: Vec<RawDetection<f64>> =
            nms_oracle(&raw, conf_t, iou_t).into_iter().map(|i| raw[i].clone()).collect();
        assert_eq!(got, want, "case {case}");
    }
    println!("criterion 1 (NMS vs quadratic greedy oracle, 200 instances): PASS");
}

#[test]
fn c1_voxel_refine_matches_brute_force_up_to_1e5_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut total_checked = 0usize;
    for (case, map_size) in [500usize, 2_000, 8_000, 30_000, 100_000].iter().enumerate() {
        let r = 0.15 + rng.gen::<f64>() * 0.5;
        let spread = (*map_size as f64).cbrt() * 0.2;
        let mut map = GlobalMap::new(r, None);
        let map_pts: Vec<_> = (0..*map_size)
            .map(|_| {
                v(
                    rng.gen::<f64>() * spread,
                    rng.gen::<f64>() * spread,
                    rng.gen::<f64>() * spread,
                )
            })
            .collect();
        map.integrate_scan(&PointCloud::new(map_pts.clone(), Frame::World));
        let m = 1 + rng.gen_range(0..60);
        let cluster_pts: Vec<_> = (0..m)
            .map(|_| {
                v(
                    rng.gen::<f64>() * spread,
                    rng.gen::<f64>() * spread,
                    rng.gen::<f64>() * spread,
                )
            })
            .collect();
        let cluster = Cluster {
            indices: Vec::new(),
            points: cluster_pts.clone(),
            frame: Frame::World,
            class_id: 0,
            confidence: 1.0,
        };
        let got = map.refine_cluster(&cluster);
        let half = r / 2.0;
        let want: Vec<usize> = map_pts
            .iter()
            .enumerate()
            .filter(|(_, q)| cluster_pts.iter().any(|p| (**q - *p).norm_inf() <= half))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(got.indices, want, "case {case}: map {map_size}, cluster {m}, r {r}");
        total_checked += map_size;
    }
    println!(
        "criterion 1 (voxel-probed refine vs brute-force max-norm, {total_checked} map points incl. 1e5): PASS"
    );
}

/// Direct per-output-pixel oracle: weighted sum and sigmoid on the prototype
/// grid, bilinear sample at half-pixel centers, strict threshold, box gate.
#[allow(clippy::too_many_arguments)]
fn mask_oracle(
    weights: &[f64],
    protos: &PrototypeSet<f64>,
    pixel_box: &Box2<f64>,
    frame_w: u32,
    frame_h: u32,
    threshold: f64,
    x: u32,
    y: u32,
) -> bool {
    let (fx, fy) = (x as f64, y as f64);
    let clamped = pixel_box.clamped(frame_w, frame_h);
    if fx < clamped.min_x || fx > clamped.max_x || fy < clamped.min_y || fy > clamped.max_y {
        return false;
    }
    let (pw, ph) = (protos.grid_width(), protos.grid_height());
    let prob = |gx: usize, gy: usize| -> f64 {
        let logit: f64 =
            (0..protos.count()).map(|m| weights[m] * protos.value(m, gx, gy)).sum();
        1.0 / (1.0 + (-logit).exp())
    };
    let sx = (fx + 0.5) * pw as f64 / frame_w as f64 - 0.5;
    let sy = (fy + 0.5) * ph as f64 / frame_h as f64 - 0.5;
    let clamp = |val: f64, len: usize| -> usize {
        if val <= 0.0 {
            0
        } else {
            (val as usize).min(len - 1)
        }
    };
    let (x0, y0) = (clamp(sx.floor(), pw), clamp(sy.floor(), ph));
    let (x1, y1) = ((x0 + 1).min(pw - 1), (y0 + 1).min(ph - 1));
    let (tx, ty) = (sx - sx.floor(), sy - sy.floor());
    let top = prob(x0, y0) * (1.0 - tx) + prob(x1, y0) * tx;
    let bottom = prob(x0, y1) * (1.0 - tx) + prob(x1, y1) * tx;
    top * (1.0 - ty) + bottom * ty > threshold
}

#[test]
fn c1_mask_assembly_matches_per_pixel_oracle_on_4_to_32_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for case in 0..60 {
        let count = 1 + rng.gen_range(0..6);
        let pw = 4 + rng.gen_range(0..29); // 4..=32
        let ph = 4 + rng.gen_range(0..29);
        let data: Vec<f64> = (0..count * pw * ph).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
        let protos = PrototypeSet::new(count, pw, ph, data).unwrap();
        let weights: Vec<f64> = (0..count).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let frame_w = (pw as u32) * (1 + rng.gen_range(0..3));
        let frame_h = (ph as u32) * (1 + rng.gen_range(0..3));
        let bx = Box2::new(
            rng.gen::<f64>() * frame_w as f64 * 0.4,
            rng.gen::<f64>() * frame_h as f64 * 0.4,
            frame_w as f64 * (0.5 + rng.gen::<f64>() * 0.5),
            frame_h as f64 * (0.5 + rng.gen::<f64>() * 0.5),
        );
        let threshold = 0.3 + rng.gen::<f64>() * 0.4;
        let mask = assemble_mask(&weights, &protos, &bx, frame_w, frame_h, threshold).unwrap();
        for y in 0..frame_h {
            for x in 0..frame_w {
                let want =
                    mask_oracle(&weights, &protos, &bx, frame_w, frame_h, threshold, x, y);
                assert_eq!(
                    mask.get(x, y),
                    want,
                    "case {case}: pixel ({x},{y}), proto {pw}x{ph}, frame {frame_w}x{frame_h}"
                );
            }
        }
    }
    println!("criterion 1 (mask assembly vs per-pixel oracle, 4x4..32x32 grids): PASS");
}

// --- Criterion 2: geometry property suites --------------------------------

fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3<f64> {
    let axis = v(
        rng.gen::<f64>() * 2.0 - 1.0,
        rng.gen::<f64>() * 2.0 - 1.0,
        rng.gen::<f64>() * 2.0 - 1.0,
    );
    let axis = if axis.norm() < 1e-6 { v(0.0, 0.0, 1.0) } else { axis };
    Mat3::from_axis_angle(axis, rng.gen::<f64>() * std::f64::consts::TAU)
}

#[test]
fn c2_rigid_transform_isometry_10k_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for case in 0..10_000 {
        let t = RigidTransform::from_parts(
            random_rotation(&mut rng),
            v(
                rng.gen::<f64>() * 40.0 - 20.0,
                rng.gen::<f64>() * 40.0 - 20.0,
                rng.gen::<f64>() * 40.0 - 20.0,
            ),
        );
        let p = v(
            rng.gen::<f64>() * 20.0 - 10.0,
            rng.gen::<f64>() * 20.0 - 10.0,
            rng.gen::<f64>() * 20.0 - 10.0,
        );
        let q = v(
            rng.gen::<f64>() * 20.0 - 10.0,
            rng.gen::<f64>() * 20.0 - 10.0,
            rng.gen::<f64>() * 20.0 - 10.0,
        );
        let before = (p - q).norm();
        let after = (t.apply(p) - t.apply(q)).norm();
        assert!((before - after).abs() < 1e-9, "case {case}: {before} vs {after}");
    }
    println!("criterion 2 (rigid-transform isometry, 1e4 cases @ 1e-9): PASS");
}

#[test]
fn c2_projection_depth_scale_consistency_10k_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cam = CameraModel::new(350.0, 360.0, 320.0, 240.0, 640, 480, RigidTransform::identity());
    for case in 0..10_000 {
        let p = v(
            rng.gen::<f64>() * 8.0 - 4.0,
            rng.gen::<f64>() * 8.0 - 4.0,
            0.1 + rng.gen::<f64>() * 40.0,
        );
        let s = 0.1 + rng.gen::<f64>() * 10.0;
        let a = cam.project(p).expect("positive depth");
        let b = cam.project(p.scale(s)).expect("scaled depth stays positive");
        assert!(
            (a.u - b.u).abs() < 1e-9 && (a.v - b.v).abs() < 1e-9,
            "case {case}: ({},{}) vs ({},{})",
            a.u,
            a.v,
            b.u,
            b.v
        );
    }
    println!("criterion 2 (projection depth-scale consistency, 1e4 cases @ 1e-9): PASS");
}

#[test]
fn c2_fit_aabb_containment_and_idempotence_10k_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    for case in 0..10_000 {
        let n = 1 + rng.gen_range(0..30);
        let points: Vec<_> = (0..n)
            .map(|_| {
                v(
                    rng.gen::<f64>() * 20.0 - 10.0,
                    rng.gen::<f64>() * 20.0 - 10.0,
                    rng.gen::<f64>() * 20.0 - 10.0,
                )
            })
            .collect();
        let fitted = fit_aabb(&points, Frame::World).unwrap();
        for p in &points {
            assert!(fitted.contains(*p), "case {case}: point escapes its box");
        }
        // Permutation invariance and idempotence over the corners.
        let mut shuffled = points.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        assert_eq!(fit_aabb(&shuffled, Frame::World).unwrap(), fitted, "case {case}");
        let refit = fit_aabb(&fitted.corners(), Frame::World).unwrap();
        assert_eq!(refit, fitted, "case {case}: refit over corners changed the box");
    }
    println!("criterion 2 (fit_aabb containment/idempotence, 1e4 cases): PASS");
}

#[test]
fn c2_overlap_symmetry_and_iou_bounded_by_min_ratio_10k_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(204);
    let random_box = |rng: &mut ChaCha8Rng| {
        let min = v(
            rng.gen::<f64>() * 8.0 - 4.0,
            rng.gen::<f64>() * 8.0 - 4.0,
            rng.gen::<f64>() * 8.0 - 4.0,
        );
        let ext = v(rng.gen::<f64>() * 3.0, rng.gen::<f64>() * 3.0, rng.gen::<f64>() * 3.0);
        Aabb3::new(min, min + ext, Frame::World)
    };
    for case in 0..10_000 {
        let a = random_box(&mut rng);
        let b = random_box(&mut rng);
        let iou_ab = overlap_ratio(&a, &b, OverlapMetric::Iou).unwrap();
        let iou_ba = overlap_ratio(&b, &a, OverlapMetric::Iou).unwrap();
        let mr_ab = overlap_ratio(&a, &b, OverlapMetric::MinRatio).unwrap();
        let mr_ba = overlap_ratio(&b, &a, OverlapMetric::MinRatio).unwrap();
        assert!((iou_ab - iou_ba).abs() < 1e-12, "case {case}: IoU asymmetric");
        assert!((mr_ab - mr_ba).abs() < 1e-12, "case {case}: min-ratio asymmetric");
        assert!(iou_ab <= mr_ab + 1e-12, "case {case}: IoU {iou_ab} > min_ratio {mr_ab}");
        assert!((0.0..=1.0).contains(&iou_ab) && (0.0..=1.0).contains(&mr_ab), "case {case}");
    }
    println!("criterion 2 (overlap symmetry and iou <= min_ratio, 1e4 cases): PASS");
}

#[test]
fn c2_translation_commutes_rotation_contained_10k_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(205);
    for case in 0..10_000 {
        let n = 1 + rng.gen_range(0..12);
        let points: Vec<_> = (0..n)
            .map(|_| {
                v(
                    rng.gen::<f64>() * 6.0 - 3.0,
                    rng.gen::<f64>() * 6.0 - 3.0,
                    rng.gen::<f64>() * 6.0 - 3.0,
                )
            })
            .collect();
        let fitted = fit_aabb(&points, Frame::World).unwrap();

        // Pure translation: transform-then-fit equals fit-then-corner-shift.
        let shift = RigidTransform::from_translation(v(
            rng.gen::<f64>() * 10.0 - 5.0,
            rng.gen::<f64>() * 10.0 - 5.0,
            rng.gen::<f64>() * 10.0 - 5.0,
        ));
        let moved: Vec<_> = points.iter().map(|&p| shift.apply(p)).collect();
        let moved_box = fit_aabb(&moved, Frame::World).unwrap();
        assert_eq!(moved_box.min, shift.apply(fitted.min), "case {case}");
        assert_eq!(moved_box.max, shift.apply(fitted.max), "case {case}");

        // Rotation: the transformed-points box fits inside the box of the
        // transformed corners.
        let rot = RigidTransform::from_parts(random_rotation(&mut rng), Vec3::zero());
        let rotated: Vec<_> = points.iter().map(|&p| rot.apply(p)).collect();
        let tight = fit_aabb(&rotated, Frame::World).unwrap();
        let corners: Vec<_> = fitted.corners().iter().map(|&c| rot.apply(c)).collect();
        let loose = fit_aabb(&corners, Frame::World).unwrap();
        let eps = v(1e-9, 1e-9, 1e-9);
        let padded = Aabb3::new(loose.min - eps, loose.max + eps, Frame::World);
        assert!(
            padded.contains(tight.min) && padded.contains(tight.max),
            "case {case}: rotated-points box escapes the corner-transform box"
        );
    }
    println!("criterion 2 (translation commutes, rotation containment, 1e4 cases): PASS");
}

// --- Criterion 3: synthetic end-to-end -------------------------------------

fn three_cube_spec(seed: u64) -> SynthSpec {
    let mut spec = SynthSpec::empty(seed);
    spec.poses = straight_trajectory(10, 1.0);
    spec.points_per_object = 300;
    spec.background_points = 300;
    spec.objects = vec![
        SynthObject::new(v(-2.5, 0.0, 8.0), v(1.0, 1.0, 1.0), 0),
        SynthObject::new(v(2.5, 0.0, 12.0), v(1.2, 0.8, 1.0), 1),
        SynthObject::new(v(0.0, -1.5, 16.0), v(0.8, 0.8, 1.4), 2),
    ];
    spec
}

#[test]
fn c3_three_cuboids_ten_scans_recovered_at_miou_90() {
    let dir = tmpdir("c3-main");
    let seq = generate_synthetic_sequence(&dir, &three_cube_spec(42)).unwrap();
    let manifest = read_manifest(&seq.manifest_path).unwrap();
    let config = RunConfig::<f64> { map_leaf: None, ..RunConfig::default() };

    let started = std::time::Instant::now();
    let out = run_pipeline(&manifest, &config).unwrap();
    let elapsed = started.elapsed();

    assert_eq!(out.registry.len(), 3, "exactly one instance per cuboid");
    let snapshot = out.registry.snapshot();

    // Per-object IoU: every ground-truth box must be matched at >= 0.90.
    let mut per_object = Vec::new();
    for gt in &seq.ground_truth {
        let best = snapshot
            .iter()
            .filter(|row| row.class_id == gt.class_id)
            .map(|row| {
                overlap_ratio(&row.bounding_box, &gt.bounding_box, OverlapMetric::Iou).unwrap()
            })
            .fold(0.0f64, f64::max);
        assert!(best >= 0.90, "object class {} IoU {best:.3} < 0.90", gt.class_id);
        per_object.push(best);
    }

    let report = match_and_score(&snapshot, &seq.ground_truth, MatchProtocol::Greedy);
    assert!(report.miou >= 90.0, "mIoU {:.2} < 90", report.miou);
    assert!(elapsed.as_secs_f64() < 5.0, "pipeline took {elapsed:?}, budget 5 s");
    println!(
        "criterion 3 (3 cuboids / 10 scans): PASS (mIoU {:.2}, per-object IoU {:?}, {:.2?})",
        report.miou, per_object, elapsed
    );
}

#[test]
fn c3_dropout_scans_keep_instances_and_grow_clusters() {
    let dir = tmpdir("c3-dropout");
    let mut spec = three_cube_spec(42);
    spec.force_dropout_scans = vec![3, 4, 6]; // 30% of 10 scans
    let seq = generate_synthetic_sequence(&dir, &spec).unwrap();
    let manifest = read_manifest(&seq.manifest_path).unwrap();

    let refined = run_pipeline(
        &manifest,
        &RunConfig::<f64> { map_leaf: None, ..RunConfig::default() },
    )
    .unwrap();
    assert_eq!(refined.registry.len(), 3, "instance count survives dropout");

    let layer2_only = run_pipeline(
        &manifest,
        &RunConfig::<f64> { map_leaf: None, refine: false, ..RunConfig::default() },
    )
    .unwrap();
    assert_eq!(layer2_only.registry.len(), 3);

    let refined_points: usize = refined.registry.snapshot().iter().map(|r| r.point_count).sum();
    let plain_points: usize = layer2_only.registry.snapshot().iter().map(|r| r.point_count).sum();
    assert!(
        refined_points > plain_points,
        "refined clusters ({refined_points} points) must strictly exceed the Layer-II-only run ({plain_points})"
    );
    println!(
        "criterion 3 (30% dropout): PASS (3 instances, clusters {refined_points} > {plain_points} points)"
    );
}

// --- Criterion 4: miss / partial detection semantics -----------------------

#[test]
fn c4_never_detected_object_absent_from_registry_present_in_map() {
    let dir = tmpdir("c4-miss");
    let mut spec = SynthSpec::empty(7);
    spec.poses = straight_trajectory(6, 0.5);
    spec.points_per_object = 250;
    spec.background_points = 200;
    spec.objects = vec![
        SynthObject::new(v(0.0, 0.0, 10.0), v(1.0, 1.0, 1.0), 0),
        // Behind the camera for the whole trajectory; LiDAR still sees it.
        SynthObject::new(v(0.0, 0.0, -8.0), v(1.0, 1.0, 1.0), 1),
    ];
    let seq = generate_synthetic_sequence(&dir, &spec).unwrap();
    assert_eq!(seq.warnings.len(), 1, "generator flags the never-visible object");

    let manifest = read_manifest(&seq.manifest_path).unwrap();
    let out =
        run_pipeline(&manifest, &RunConfig::<f64> { map_leaf: None, ..RunConfig::default() })
            .unwrap();

    assert_eq!(out.registry.len(), 1, "only the visible object is registered");
    assert_eq!(out.registry.snapshot()[0].class_id, 0);

    let hidden = seq.ground_truth.iter().find(|g| g.class_id == 1).unwrap();
    let in_map = out.map.points().iter().filter(|p| hidden.bounding_box.contains(**p)).count();
    assert!(in_map > 100, "hidden object contributes map points, found {in_map}");
    println!("criterion 4 (miss-detection): PASS (1 instance, {in_map} hidden-object map points)");
}

#[test]
fn c4_partial_masks_recover_after_refinement() {
    let dir = tmpdir("c4-partial");
    let mut spec = SynthSpec::empty(9);
    spec.poses = straight_trajectory(12, 0.25);
    spec.points_per_object = 500;
    spec.background_points = 200;
    spec.objects = vec![SynthObject {
        center: v(0.0, 0.0, 8.0),
        size: v(1.0, 1.0, 1.0),
        class_id: 0,
        mask_coverage: 0.4,
    }];
    let seq = generate_synthetic_sequence(&dir, &spec).unwrap();
    let manifest = read_manifest(&seq.manifest_path).unwrap();
    let gt = seq.ground_truth[0].bounding_box;

    let base = RunConfig::<f64> { map_leaf: None, voxel_size: 0.2, ..RunConfig::default() };

    let before = run_pipeline(&manifest, &RunConfig { refine: false, ..base.clone() }).unwrap();
    assert_eq!(before.registry.len(), 1);
    let box_before = before.registry.snapshot()[0].bounding_box;
    let enclosed_before = box_before.intersection_volume(&gt) / gt.volume();
    assert!(
        enclosed_before < 0.5,
        "pre-refinement box encloses {:.1}% of the object, expected < 50%",
        enclosed_before * 100.0
    );

    let after = run_pipeline(&manifest, &base).unwrap();
    assert_eq!(after.registry.len(), 1);
    let box_after = after.registry.snapshot()[0].bounding_box;
    let enclosed_after = box_after.intersection_volume(&gt) / gt.volume();
    assert!(
        enclosed_after >= 0.9,
        "refined box encloses {:.1}% of the object, expected >= 90%",
        enclosed_after * 100.0
    );
    println!(
        "criterion 4 (partial detection, 40% masks): PASS (enclosed {:.1}% -> {:.1}%)",
        enclosed_before * 100.0,
        enclosed_after * 100.0
    );
}

// --- Criterion 6: determinism ----------------------------------------------

#[test]
fn c6_identical_runs_produce_byte_identical_registry_exports() {
    let dir = tmpdir("c6-determinism");
    let seq = generate_synthetic_sequence(&dir, &three_cube_spec(3)).unwrap();
    let boxlift = env!("CARGO_BIN_EXE_boxlift");

    let mut outputs = Vec::new();
    for run in 0..2 {
        let registry = dir.join(format!("registry-{run}.txt"));
        let status = std::process::Command::new(boxlift)
            .args([
                "run",
                "--manifest",
                seq.manifest_path.to_str().unwrap(),
                "--out-registry",
                registry.to_str().unwrap(),
            ])
            .output()
            .expect("boxlift run executes");
        assert!(status.status.success(), "run {run} failed: {:?}", status);
        outputs.push(std::fs::read(&registry).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "registry exports differ between identical runs");
    assert!(!outputs[0].is_empty());
    println!(
        "criterion 6 (determinism): PASS ({} byte registry export identical across runs)",
        outputs[0].len()
    );
}

// --- Criterion 7 lives in tests/cli.rs (malformed-input corpus) ------------
