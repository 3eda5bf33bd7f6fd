//! Evaluation harness: class-gated box matching, mean IoU scoring and the
//! per-layer timing report.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::geometry::{overlap_ratio, OverlapMetric};
use crate::io::{FormatError, GroundTruthBox};
use crate::layer2::SnapshotRow;
use crate::scalar::Real;

/// How predictions are assigned to ground-truth boxes within a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub enum MatchProtocol {
    /// One-to-one greedy assignment by descending IoU.
    #[default]
    Greedy,
    /// Optimal one-to-one assignment maximizing total IoU.
    Hungarian,
}

/// Wall-time statistics for one pipeline stage, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub max_ms: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        Self {
            mean_ms: samples.iter().sum::<f64>() / samples.len() as f64,
            max_ms: samples.iter().cloned().fold(0.0, f64::max),
        }
    }
}

/// Per-layer timing decomposition over a run. Detection decoding and map
/// integration are tracked separately from the three layers.
#[derive(Debug, Clone, Default)]
pub struct TimingReport {
    pub scans: usize,
    pub decode: TimingStats,
    pub layer1: TimingStats,
    pub layer2: TimingStats,
    pub layer3: TimingStats,
    pub integrate: TimingStats,
    pub total: TimingStats,
}

/// Per-class score: mean IoU over that class's ground-truth boxes.
#[derive(Debug, Clone)]
pub struct ClassScore {
    pub class_id: u32,
    pub iou: f64,
    pub gt_count: usize,
    pub matched: usize,
}

/// Match/score outcome plus the optional timing section filled by the
/// pipeline run.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub classes: Vec<ClassScore>,
    /// Mean IoU over classes present in the ground truth, on a 0-100 scale.
    pub miou: f64,
    pub matched: usize,
    pub unmatched_gt: usize,
    pub unmatched_pred: usize,
    pub timing: Option<TimingReport>,
}


impl std::str::FromStr for MatchProtocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(MatchProtocol::Greedy),
            "hungarian" => Ok(MatchProtocol::Hungarian),
            other => Err(format!("unknown match protocol '{other}' (expected greedy|hungarian)")),
        }
    }
}

/// Score a registry snapshot against ground-truth boxes.
///
/// Within each class, predictions are assigned one-to-one to ground-truth
/// boxes by 3D IoU; matched pairs contribute their IoU and unmatched ground
/// truths contribute zero. The class score is the mean over that class's
/// ground-truth boxes, and the mIoU is the unweighted mean over classes
/// present in the ground truth, scaled to 0-100. Predictions of classes
/// absent from the ground truth count as unmatched and do not enter the
/// mIoU.
pub fn match_and_score<S: Real>(
    predictions: &[SnapshotRow<S>],
    ground_truth: &[GroundTruthBox<S>],
    protocol: MatchProtocol,
) -> EvalReport {
    let mut gt_by_class: BTreeMap<u32, Vec<&GroundTruthBox<S>>> = BTreeMap::new();
    for gt in ground_truth {
        gt_by_class.entry(gt.class_id).or_default().push(gt);
    }
    let mut pred_by_class: BTreeMap<u32, Vec<&SnapshotRow<S>>> = BTreeMap::new();
    for pred in predictions {
        pred_by_class.entry(pred.class_id).or_default().push(pred);
    }

    let mut report = EvalReport::default();
    for (&class_id, gts) in &gt_by_class {
        let preds = pred_by_class.get(&class_id).map(Vec::as_slice).unwrap_or(&[]);
        let iou = |p: usize, g: usize| -> f64 {
            overlap_ratio(&preds[p].bounding_box, &gts[g].bounding_box, OverlapMetric::Iou)
                .expect("evaluation boxes share the world frame")
                .to_f64()
                .unwrap_or(0.0)
        };
        let pairs = match protocol {
            MatchProtocol::Greedy => greedy_pairs(preds.len(), gts.len(), &iou),
            MatchProtocol::Hungarian => hungarian_pairs(preds.len(), gts.len(), &iou),
        };
        let matched = pairs.len();
        let sum: f64 = pairs.iter().map(|&(p, g)| iou(p, g)).sum();
        report.classes.push(ClassScore {
            class_id,
            iou: sum / gts.len() as f64,
            gt_count: gts.len(),
            matched,
        });
        report.matched += matched;
        report.unmatched_gt += gts.len() - matched;
        report.unmatched_pred += preds.len() - matched;
    }
    // Predictions of classes with no ground truth at all.
    for (class_id, preds) in &pred_by_class {
        if !gt_by_class.contains_key(class_id) {
            report.unmatched_pred += preds.len();
        }
    }
    if !report.classes.is_empty() {
        report.miou =
            100.0 * report.classes.iter().map(|c| c.iou).sum::<f64>() / report.classes.len() as f64;
    }
    report
}

/// Greedy one-to-one matching: all (pred, gt) pairs with positive IoU,
/// sorted descending, assigned first-come.
fn greedy_pairs(n_pred: usize, n_gt: usize, iou: &dyn Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut scored: Vec<(usize, usize, f64)> = Vec::new();
    for p in 0..n_pred {
        for g in 0..n_gt {
            let v = iou(p, g);
            if v > 0.0 {
                scored.push((p, g, v));
            }
        }
    }
    scored.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_pred = vec![false; n_pred];
    let mut used_gt = vec![false; n_gt];
    let mut pairs = Vec::new();
    for (p, g, _) in scored {
        if !used_pred[p] && !used_gt[g] {
            used_pred[p] = true;
            used_gt[g] = true;
            pairs.push((p, g));
        }
    }
    pairs
}

/// Optimal assignment maximizing total IoU (potentials formulation of the
/// Hungarian algorithm on the negated weights). Pairs with zero IoU are
/// dropped from the result.
fn hungarian_pairs(
    n_pred: usize,
    n_gt: usize,
    iou: &dyn Fn(usize, usize) -> f64,
) -> Vec<(usize, usize)> {
    if n_pred == 0 || n_gt == 0 {
        return Vec::new();
    }
    // Square cost matrix padded with zero-weight entries.
    let n = n_pred.max(n_gt);
    let cost = |p: usize, g: usize| -> f64 {
        if p < n_pred && g < n_gt {
            -iou(p, g)
        } else {
            0.0
        }
    };

    // Standard O(n^3) assignment with row/column potentials; 1-based
    // bookkeeping with a virtual row 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // column -> row
    for row in 1..=n {
        let mut min_v = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        let mut way = vec![0usize; n + 1];
        let mut j0 = 0usize;
        assigned_row[0] = row;
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = Vec::new();
    for (col, &row) in assigned_row.iter().enumerate().skip(1) {
        if row == 0 {
            continue;
        }
        let (p, g) = (row - 1, col - 1);
        if p < n_pred && g < n_gt && iou(p, g) > 0.0 {
            pairs.push((p, g));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Remap prediction class ids through a detector→ground-truth class table.
pub fn apply_class_map<S: Real>(rows: &mut [SnapshotRow<S>], map: &HashMap<u32, u32>) {
    for row in rows {
        if let Some(&mapped) = map.get(&row.class_id) {
            row.class_id = mapped;
        }
    }
}

/// Read a class-map table: one `detector_class gt_class` pair per line.
pub fn read_class_map(path: &Path) -> Result<HashMap<u32, u32>, FormatError> {
    let mut map = HashMap::new();
    for (line_no, line) in crate::io::data_lines(path)? {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(FormatError::Malformed {
                path: path.display().to_string(),
                line: line_no,
                message: format!("expected 2 class ids per line, found {}", tokens.len()),
            });
        }
        let from: u32 = tokens[0].parse().map_err(|_| FormatError::Malformed {
            path: path.display().to_string(),
            line: line_no,
            message: format!("invalid class id '{}'", tokens[0]),
        })?;
        let to: u32 = tokens[1].parse().map_err(|_| FormatError::Malformed {
            path: path.display().to_string(),
            line: line_no,
            message: format!("invalid class id '{}'", tokens[1]),
        })?;
        map.insert(from, to);
    }
    Ok(map)
}

/// Human-readable report table.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("class      iou    gt  matched\n");
    for c in &report.classes {
        out.push_str(&format!(
            "{:<8} {:>6.2} {:>5} {:>8}\n",
            c.class_id,
            c.iou * 100.0,
            c.gt_count,
            c.matched
        ));
    }
    out.push_str(&format!(
        "mIoU {:.2} | matched {} | unmatched gt {} | unmatched pred {}\n",
        report.miou, report.matched, report.unmatched_gt, report.unmatched_pred
    ));
    if let Some(t) = &report.timing {
        out.push_str(&render_timing(t));
    }
    out
}

/// One-line timing summary in the table layout.
pub fn render_timing(t: &TimingReport) -> String {
    format!(
        "timing over {} scans (mean/max ms): decode {:.3}/{:.3}  layer1 {:.3}/{:.3}  layer2 {:.3}/{:.3}  layer3 {:.3}/{:.3}  integrate {:.3}/{:.3}  total {:.3}/{:.3}\n",
        t.scans,
        t.decode.mean_ms, t.decode.max_ms,
        t.layer1.mean_ms, t.layer1.max_ms,
        t.layer2.mean_ms, t.layer2.max_ms,
        t.layer3.mean_ms, t.layer3.max_ms,
        t.integrate.mean_ms, t.integrate.max_ms,
        t.total.mean_ms, t.total.max_ms,
    )
}

/// Machine-readable record stream: one `key value...` line per fact.
pub fn render_records(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("miou: {:.6}\n", report.miou));
    out.push_str(&format!(
        "counts: matched {} unmatched_gt {} unmatched_pred {}\n",
        report.matched, report.unmatched_gt, report.unmatched_pred
    ));
    for c in &report.classes {
        out.push_str(&format!(
            "class: {} iou {:.6} gt {} matched {}\n",
            c.class_id, c.iou, c.gt_count, c.matched
        ));
    }
    if let Some(t) = &report.timing {
        out.push_str(&format!("timing_scans: {}\n", t.scans));
        for (name, s) in [
            ("decode", t.decode),
            ("layer1", t.layer1),
            ("layer2", t.layer2),
            ("layer3", t.layer3),
            ("integrate", t.integrate),
            ("total", t.total),
        ] {
            out.push_str(&format!("timing: {name} mean_ms {:.6} max_ms {:.6}\n", s.mean_ms, s.max_ms));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb3, Frame, Vec3};
    use crate::io::GtScope;

    fn row(class_id: u32, min: (f64, f64, f64), max: (f64, f64, f64)) -> SnapshotRow<f64> {
        let aabb = Aabb3::new(
            Vec3::new(min.0, min.1, min.2),
            Vec3::new(max.0, max.1, max.2),
            Frame::World,
        );
        SnapshotRow {
            object_id: 0,
            class_id,
            bounding_box: aabb,
            centroid: aabb.center(),
            observation_count: 1,
            point_count: 8,
        }
    }

    fn gt(class_id: u32, min: (f64, f64, f64), max: (f64, f64, f64)) -> GroundTruthBox<f64> {
        GroundTruthBox {
            scope: GtScope::Global,
            class_id,
            bounding_box: Aabb3::new(
                Vec3::new(min.0, min.1, min.2),
                Vec3::new(max.0, max.1, max.2),
                Frame::World,
            ),
        }
    }

    #[test]
    fn exact_predictions_score_100() {
        let preds = vec![row(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0)), row(2, (5.0, 0.0, 0.0), (6.0, 1.0, 1.0))];
        let gts = vec![gt(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0)), gt(2, (5.0, 0.0, 0.0), (6.0, 1.0, 1.0))];
        let report = match_and_score(&preds, &gts, MatchProtocol::Greedy);
        assert!((report.miou - 100.0).abs() < 1e-9);
        assert_eq!(report.matched, 2);
        assert_eq!(report.unmatched_gt, 0);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let gts = vec![gt(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))];
        let report = match_and_score::<f64>(&[], &gts, MatchProtocol::Greedy);
        assert_eq!(report.miou, 0.0);
        assert_eq!(report.unmatched_gt, 1);
    }

    #[test]
    fn offset_cube_scores_one_third() {
        // Closed form: unit cubes offset by 0.5 in x have IoU 1/3.
        let preds = vec![row(1, (0.5, 0.0, 0.0), (1.5, 1.0, 1.0))];
        let gts = vec![gt(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))];
        let report = match_and_score(&preds, &gts, MatchProtocol::Greedy);
        assert!((report.miou - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn class_gate_prevents_cross_class_matches() {
        let preds = vec![row(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))];
        let gts = vec![gt(2, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))];
        let report = match_and_score(&preds, &gts, MatchProtocol::Greedy);
        assert_eq!(report.miou, 0.0);
        assert_eq!(report.unmatched_gt, 1);
        assert_eq!(report.unmatched_pred, 1);
    }

    #[test]
    fn miou_averages_over_classes_not_boxes() {
        // Class 1: two gt boxes, one matched perfectly, one missed -> 0.5.
        // Class 2: one gt box matched perfectly -> 1.0. mIoU = 75.
        let preds = vec![
            row(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
            row(2, (9.0, 0.0, 0.0), (10.0, 1.0, 1.0)),
        ];
        let gts = vec![
            gt(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
            gt(1, (4.0, 0.0, 0.0), (5.0, 1.0, 1.0)),
            gt(2, (9.0, 0.0, 0.0), (10.0, 1.0, 1.0)),
        ];
        let report = match_and_score(&preds, &gts, MatchProtocol::Greedy);
        assert!((report.miou - 75.0).abs() < 1e-9);
    }

    #[test]
    fn hungarian_beats_greedy_on_crossing_case() {
        // Greedy grabs the single high-IoU pair and strands the second
        // prediction; the optimal assignment crosses them over.
        let p_a = (0.0, 0.0, 0.0);
        let preds = vec![
            row(1, p_a, (1.0, 1.0, 1.0)),     // overlaps gt0 strongly, gt1 weakly
            row(1, (0.6, 0.0, 0.0), (1.6, 1.0, 1.0)), // overlaps gt0 moderately only
        ];
        let gts = vec![
            gt(1, (0.1, 0.0, 0.0), (1.1, 1.0, 1.0)),
            gt(1, (-0.7, 0.0, 0.0), (0.3, 1.0, 1.0)),
        ];
        let greedy = match_and_score(&preds, &gts, MatchProtocol::Greedy);
        let optimal = match_and_score(&preds, &gts, MatchProtocol::Hungarian);
        assert!(optimal.miou >= greedy.miou - 1e-12);
    }

    #[test]
    fn hungarian_matches_exhaustive_search_on_random_instances() {
        let mut state = 0xfeed_beefu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..30 {
            let n_pred = 1 + (next() * 5.0) as usize;
            let n_gt = 1 + (next() * 5.0) as usize;
            let preds: Vec<_> = (0..n_pred)
                .map(|_| {
                    let x = next() * 4.0;
                    let y = next() * 4.0;
                    row(1, (x, y, 0.0), (x + 1.0 + next(), y + 1.0, 1.0))
                })
                .collect();
            let gts: Vec<_> = (0..n_gt)
                .map(|_| {
                    let x = next() * 4.0;
                    let y = next() * 4.0;
                    gt(1, (x, y, 0.0), (x + 1.0 + next(), y + 1.0, 1.0))
                })
                .collect();
            let iou = |p: usize, g: usize| -> f64 {
                overlap_ratio(&preds[p].bounding_box, &gts[g].bounding_box, OverlapMetric::Iou)
                    .unwrap()
            };
            let pairs = hungarian_pairs(n_pred, n_gt, &iou);
            let got: f64 = pairs.iter().map(|&(p, g)| iou(p, g)).sum();

            // Exhaustive oracle: every gt is either unmatched or assigned to
            // a distinct prediction.
            let best = exhaustive_best(0, &mut vec![false; n_pred], n_gt, &iou);
            assert!((got - best).abs() < 1e-9, "trial {trial}: {got} vs {best}");
        }
    }

    fn exhaustive_best(
        g: usize,
        used_pred: &mut Vec<bool>,
        n_gt: usize,
        iou: &dyn Fn(usize, usize) -> f64,
    ) -> f64 {
        if g == n_gt {
            return 0.0;
        }
        // Leave gt g unmatched.
        let mut best = exhaustive_best(g + 1, used_pred, n_gt, iou);
        for p in 0..used_pred.len() {
            if !used_pred[p] {
                used_pred[p] = true;
                let candidate = iou(p, g) + exhaustive_best(g + 1, used_pred, n_gt, iou);
                used_pred[p] = false;
                if candidate > best {
                    best = candidate;
                }
            }
        }
        best
    }

    #[test]
    fn class_map_remaps_predictions() {
        let mut rows = vec![row(2, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))];
        let map: HashMap<u32, u32> = [(2u32, 40u32)].into_iter().collect();
        apply_class_map(&mut rows, &map);
        assert_eq!(rows[0].class_id, 40);
    }

    #[test]
    fn render_outputs_contain_key_facts() {
        let preds = vec![row(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))];
        let gts = vec![gt(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))];
        let mut report = match_and_score(&preds, &gts, MatchProtocol::Greedy);
        report.timing = Some(TimingReport {
            scans: 3,
            layer1: TimingStats { mean_ms: 1.0, max_ms: 2.0 },
            ..TimingReport::default()
        });
        let table = render_table(&report);
        assert!(table.contains("mIoU 100.00"));
        let records = render_records(&report);
        assert!(records.contains("miou: 100.000000"));
        assert!(records.contains("timing: layer1 mean_ms 1.000000"));
    }
}
