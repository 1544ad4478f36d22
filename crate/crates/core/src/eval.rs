//! Detection-set evaluation: rotated BEV IoU, greedy matching, per-class
//! precision/recall, and the two simple filtering baselines (point count and
//! score threshold).

use crate::cloudio::{Detection, GtBox, ObjectClass, PointCloud};
use std::fmt::Write as _;

/// Matching threshold used throughout the pipeline.
pub const IOU_MATCH_THRESHOLD: f64 = 0.4;
/// Default point-count filter threshold.
pub const POINT_FILTER_THRESHOLD: usize = 5;
/// Default score filter threshold.
pub const SCORE_FILTER_THRESHOLD: f64 = 0.3;

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let [x1, y1] = poly[i];
        let [x2, y2] = poly[(i + 1) % poly.len()];
        acc += x1 * y2 - x2 * y1;
    }
    acc.abs() / 2.0
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn line_intersection(a1: [f64; 2], a2: [f64; 2], b1: [f64; 2], b2: [f64; 2]) -> [f64; 2] {
    let da = [a2[0] - a1[0], a2[1] - a1[1]];
    let db = [b2[0] - b1[0], b2[1] - b1[1]];
    let denom = da[0] * db[1] - da[1] * db[0];
    let t = ((b1[0] - a1[0]) * db[1] - (b1[1] - a1[1]) * db[0]) / denom;
    [a1[0] + t * da[0], a1[1] + t * da[1]]
}

/// Sutherland-Hodgman clip of a convex subject polygon against a convex,
/// counter-clockwise clip polygon.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let edge_start = clip[i];
        let edge_end = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        for cur in input {
            let cur_inside = cross(edge_start, edge_end, cur) >= 0.0;
            let prev_inside = cross(edge_start, edge_end, prev) >= 0.0;
            if cur_inside {
                if !prev_inside {
                    output.push(line_intersection(prev, cur, edge_start, edge_end));
                }
                output.push(cur);
            } else if prev_inside {
                output.push(line_intersection(prev, cur, edge_start, edge_end));
            }
            prev = cur;
        }
    }
    output
}

fn axis_aligned_intersection(a: &GtBox, b: &GtBox) -> f64 {
    let half = |bx: &GtBox| (bx.l / 2.0, bx.w / 2.0);
    let (ahl, ahw) = half(a);
    let (bhl, bhw) = half(b);
    let dx = (a.cx + ahl).min(b.cx + bhl) - (a.cx - ahl).max(b.cx - bhl);
    let dy = (a.cy + ahw).min(b.cy + bhw) - (a.cy - ahw).max(b.cy - bhw);
    if dx <= 0.0 || dy <= 0.0 {
        0.0
    } else {
        dx * dy
    }
}

/// Intersection-over-union of two yaw-rotated rectangles in the x-y plane.
/// Exactly symmetric; degenerate footprints give 0.
pub fn bev_iou(a: &GtBox, b: &GtBox) -> f64 {
    // Evaluate the two boxes in a canonical order so bev_iou(a, b) performs
    // the identical float operations as bev_iou(b, a).
    let key = |x: &GtBox| (x.cx, x.cy, x.cz, x.l, x.w, x.h, x.yaw, x.class.index());
    let (first, second) = if key(a) <= key(b) { (a, b) } else { (b, a) };

    let area_a = first.l * first.w;
    let area_b = second.l * second.w;
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let inter = if first.yaw.abs() < 1e-9 && second.yaw.abs() < 1e-9 {
        axis_aligned_intersection(first, second)
    } else {
        let pa = first.bev_corners();
        let pb = second.bev_corners();
        polygon_area(&clip_convex(&pa, &pb))
    };
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Outcome of greedy score-ordered matching at a fixed IoU threshold.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Per detection: matched a ground-truth box of its own class.
    pub det_is_tp: Vec<bool>,
    /// Per detection: index of the claimed ground-truth box.
    pub det_matched_gt: Vec<Option<usize>>,
    /// Per detection: IoU with the claimed box (0 when unmatched).
    pub det_iou: Vec<f64>,
    /// Per ground-truth box: claimed by some detection.
    pub gt_matched: Vec<bool>,
}

/// Greedy per-class matching: detections in descending score order each claim
/// the unmatched same-class ground-truth box with the highest IoU at or above
/// `iou_thresh`. Ties break to the smaller ground-truth index; equal scores
/// break to the smaller detection index.
pub fn match_detections(dets: &[Detection], gts: &[GtBox], iou_thresh: f64) -> MatchResult {
    let mut det_is_tp = vec![false; dets.len()];
    let mut det_matched_gt = vec![None; dets.len()];
    let mut det_iou = vec![0.0; dets.len()];
    let mut gt_matched = vec![false; gts.len()];

    for class in ObjectClass::ALL {
        let mut class_dets: Vec<usize> = (0..dets.len())
            .filter(|&i| dets[i].bbox.class == class)
            .collect();
        class_dets.sort_by(|&i, &j| {
            dets[j]
                .score
                .partial_cmp(&dets[i].score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        let class_gts: Vec<usize> = (0..gts.len())
            .filter(|&g| gts[g].class == class)
            .collect();
        for &d in &class_dets {
            let mut best: Option<(usize, f64)> = None;
            for &g in &class_gts {
                if gt_matched[g] {
                    continue;
                }
                let iou = bev_iou(&dets[d].bbox, &gts[g]);
                if iou >= iou_thresh {
                    // Strict > keeps the smallest gt index on exact ties.
                    if best.is_none_or(|(_, b)| iou > b) {
                        best = Some((g, iou));
                    }
                }
            }
            if let Some((g, iou)) = best {
                gt_matched[g] = true;
                det_is_tp[d] = true;
                det_matched_gt[d] = Some(g);
                det_iou[d] = iou;
            }
        }
    }
    MatchResult {
        det_is_tp,
        det_matched_gt,
        det_iou,
        gt_matched,
    }
}

/// Aggregated detection counts for one class (or the micro-average).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub gt: usize,
}

impl ClassCounts {
    /// `tp / (tp + fp)`, undefined when there are no detections.
    pub fn precision(&self) -> Option<f64> {
        let dets = self.tp + self.fp;
        (dets > 0).then(|| self.tp as f64 / dets as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        (self.gt > 0).then(|| self.tp as f64 / self.gt as f64)
    }
}

/// Per-class and overall (micro-averaged) precision/recall counts, ready to
/// render as CSV or a text table.
#[derive(Debug, Clone, Default)]
pub struct PrecisionReport {
    pub per_class: [ClassCounts; ObjectClass::COUNT],
}

impl PrecisionReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds one scene's match result into the running counts.
    pub fn accumulate(&mut self, dets: &[Detection], result: &MatchResult, gts: &[GtBox]) {
        for (d, &is_tp) in dets.iter().zip(&result.det_is_tp) {
            let c = &mut self.per_class[d.bbox.class.index()];
            if is_tp {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        for g in gts {
            self.per_class[g.class.index()].gt += 1;
        }
    }

    pub fn overall(&self) -> ClassCounts {
        let mut out = ClassCounts::default();
        for c in &self.per_class {
            out.tp += c.tp;
            out.fp += c.fp;
            out.gt += c.gt;
        }
        out
    }
}

/// One evaluated pipeline variant, named for report rows.
#[derive(Debug, Clone)]
pub struct VariantReport {
    pub name: String,
    pub report: PrecisionReport,
}

fn fmt_precision(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".into(), |v| format!("{:.4}", v))
}

/// Pretty text table: one row per pipeline variant, columns
/// Overall/Vehicle/Pedestrian/Cyclist.
pub fn comparison_table(variants: &[VariantReport]) -> String {
    let name_width = variants
        .iter()
        .map(|v| v.name.len())
        .max()
        .unwrap_or(8)
        .max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_width$}  {:>8}  {:>8}  {:>10}  {:>8}",
        "pipeline", "overall", "vehicle", "pedestrian", "cyclist"
    );
    for v in variants {
        let overall = v.report.overall();
        let _ = writeln!(
            out,
            "{:<name_width$}  {:>8}  {:>8}  {:>10}  {:>8}",
            v.name,
            fmt_precision(overall.precision()),
            fmt_precision(v.report.per_class[0].precision()),
            fmt_precision(v.report.per_class[1].precision()),
            fmt_precision(v.report.per_class[2].precision()),
        );
    }
    out
}

/// CSV form of the comparison: undefined precision is left empty.
pub fn comparison_csv(variants: &[VariantReport]) -> String {
    let mut out = String::from(
        "pipeline,overall,vehicle,pedestrian,cyclist,tp,fp,gt\n",
    );
    let cell = |p: Option<f64>| p.map_or_else(String::new, |v| format!("{v:.6}"));
    for v in variants {
        let overall = v.report.overall();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            v.name,
            cell(overall.precision()),
            cell(v.report.per_class[0].precision()),
            cell(v.report.per_class[1].precision()),
            cell(v.report.per_class[2].precision()),
            overall.tp,
            overall.fp,
            overall.gt,
        );
    }
    out
}

/// Number of cloud points inside the full rotated 3D box (inclusive bounds).
pub fn points_in_box(cloud: &PointCloud, bbox: &GtBox) -> usize {
    // Cheap axis-aligned reject before the rotated test.
    let reach = 0.5 * (bbox.l * bbox.l + bbox.w * bbox.w).sqrt();
    cloud
        .points()
        .iter()
        .filter(|p| {
            (p.x - bbox.cx).abs() <= reach
                && (p.y - bbox.cy).abs() <= reach
                && bbox.contains_point(p)
        })
        .count()
}

/// Keeps detections whose box contains at least `threshold` points.
pub fn filter_by_points(
    dets: &[Detection],
    cloud: &PointCloud,
    threshold: usize,
) -> Vec<Detection> {
    dets.iter()
        .filter(|d| points_in_box(cloud, &d.bbox) >= threshold)
        .copied()
        .collect()
}

/// Keeps detections with `score >= threshold`.
pub fn filter_by_score(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter()
        .filter(|d| d.score >= threshold)
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudio::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn square(cx: f64, cy: f64, side: f64, yaw: f64) -> GtBox {
        GtBox::new(cx, cy, 0.0, side, side, 1.0, yaw, ObjectClass::Vehicle).unwrap()
    }

    fn det(b: GtBox, score: f64) -> Detection {
        Detection::new(b, score).unwrap()
    }

    #[test]
    fn identical_boxes_have_iou_one() {
        let b = square(1.0, 2.0, 3.0, 0.7);
        assert!((bev_iou(&b, &b) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_boxes_have_iou_zero() {
        let a = square(0.0, 0.0, 1.0, 0.0);
        let b = square(5.0, 0.0, 1.0, 0.3);
        assert_eq!(bev_iou(&a, &b), 0.0);
    }

    #[test]
    fn unit_squares_offset_by_half_give_one_third() {
        let a = square(0.0, 0.0, 1.0, 0.0);
        let b = square(0.5, 0.0, 1.0, 0.0);
        assert!((bev_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_square_overlap_is_exact() {
        // A unit square and the same square rotated 45 degrees around its
        // center intersect in a regular octagon of area 2*(sqrt(2)-1).
        let a = square(0.0, 0.0, 1.0, 0.0);
        let b = square(0.0, 0.0, 1.0, PI / 4.0);
        let inter = 2.0 * (2.0f64.sqrt() - 1.0);
        let expect = inter / (2.0 - inter);
        assert!((bev_iou(&a, &b) - expect).abs() < 1e-12);
    }

    fn random_box(rng: &mut ChaCha8Rng) -> GtBox {
        GtBox::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            0.0,
            rng.random_range(0.5..4.0),
            rng.random_range(0.5..4.0),
            1.0,
            rng.random_range(-PI..PI),
            ObjectClass::Vehicle,
        )
        .unwrap()
    }

    #[test]
    fn iou_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_box(&mut rng);
            let b = random_box(&mut rng);
            assert_eq!(bev_iou(&a, &b).to_bits(), bev_iou(&b, &a).to_bits());
        }
    }

    #[test]
    fn iou_invariant_under_joint_rigid_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let wrap = |y: f64| {
            let mut v = (y + PI).rem_euclid(2.0 * PI) - PI;
            if v >= PI {
                v = -PI;
            }
            v
        };
        for _ in 0..100 {
            let a = random_box(&mut rng);
            let b = random_box(&mut rng);
            let theta = rng.random_range(-PI..PI);
            let (tx, ty) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let (s, c) = theta.sin_cos();
            let transform = |x: &GtBox| GtBox {
                cx: x.cx * c - x.cy * s + tx,
                cy: x.cx * s + x.cy * c + ty,
                yaw: wrap(x.yaw + theta),
                ..*x
            };
            let before = bev_iou(&a, &b);
            let after = bev_iou(&transform(&a), &transform(&b));
            assert!(
                (before - after).abs() < 1e-9,
                "iou changed under rigid transform: {before} vs {after}"
            );
        }
    }

    /// Monte-Carlo rasterization oracle: hit-count over the union's bounding
    /// box using only point-in-rotated-rect tests.
    fn mc_iou(a: &GtBox, b: &GtBox, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corners: Vec<[f64; 2]> = a
            .bev_corners()
            .into_iter()
            .chain(b.bev_corners())
            .collect();
        let min_x = corners.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
        let max_x = corners.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = corners.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min);
        let max_y = corners.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max);
        let inside = |bx: &GtBox, x: f64, y: f64| {
            let (s, c) = bx.yaw.sin_cos();
            let dx = x - bx.cx;
            let dy = y - bx.cy;
            let lx = dx * c + dy * s;
            let ly = -dx * s + dy * c;
            lx.abs() <= bx.l / 2.0 && ly.abs() <= bx.w / 2.0
        };
        let mut hits_union = 0usize;
        let mut hits_inter = 0usize;
        for _ in 0..samples {
            let x = rng.random_range(min_x..max_x);
            let y = rng.random_range(min_y..max_y);
            let in_a = inside(a, x, y);
            let in_b = inside(b, x, y);
            if in_a || in_b {
                hits_union += 1;
            }
            if in_a && in_b {
                hits_inter += 1;
            }
        }
        if hits_union == 0 {
            0.0
        } else {
            hits_inter as f64 / hits_union as f64
        }
    }

    #[test]
    fn iou_agrees_with_monte_carlo_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let a = random_box(&mut rng);
            let b = random_box(&mut rng);
            let exact = bev_iou(&a, &b);
            let estimate = mc_iou(&a, &b, 1_000_000, 1000 + case);
            assert!(
                (exact - estimate).abs() < 3e-3,
                "case {case}: exact {exact} vs mc {estimate}"
            );
        }
    }

    #[test]
    fn single_detection_on_single_gt_is_tp() {
        let g = square(0.0, 0.0, 2.0, 0.1);
        let r = match_detections(&[det(g, 0.9)], &[g], IOU_MATCH_THRESHOLD);
        assert_eq!(r.det_is_tp, vec![true]);
        assert_eq!(r.det_matched_gt, vec![Some(0)]);
        assert!((r.det_iou[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn second_detection_on_claimed_gt_is_fp() {
        let g = square(0.0, 0.0, 2.0, 0.0);
        let dets = [det(g, 0.5), det(g, 0.9)];
        let r = match_detections(&dets, &[g], IOU_MATCH_THRESHOLD);
        // The higher-score detection (index 1) claims the box.
        assert_eq!(r.det_is_tp, vec![false, true]);
    }

    #[test]
    fn class_mismatch_is_never_a_match() {
        let g = square(0.0, 0.0, 2.0, 0.0);
        let mut d = g;
        d.class = ObjectClass::Pedestrian;
        let r = match_detections(&[det(d, 0.9)], &[g], IOU_MATCH_THRESHOLD);
        assert_eq!(r.det_is_tp, vec![false]);
    }

    /// Exhaustive assignment oracle: the maximum number of detections that
    /// can simultaneously claim distinct same-class boxes at IoU >= thresh.
    fn optimal_tp_count(dets: &[Detection], gts: &[GtBox], thresh: f64) -> usize {
        fn go(d: usize, dets: &[Detection], gts: &[GtBox], used: &mut Vec<bool>, thresh: f64) -> usize {
            if d == dets.len() {
                return 0;
            }
            let mut best = go(d + 1, dets, gts, used, thresh);
            for g in 0..gts.len() {
                if !used[g]
                    && dets[d].bbox.class == gts[g].class
                    && bev_iou(&dets[d].bbox, &gts[g]) >= thresh
                {
                    used[g] = true;
                    best = best.max(1 + go(d + 1, dets, gts, used, thresh));
                    used[g] = false;
                }
            }
            best
        }
        go(0, dets, gts, &mut vec![false; gts.len()], thresh)
    }

    #[test]
    fn greedy_tp_count_bounded_by_optimal_and_tight_when_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..60 {
            let n_gt = rng.random_range(1..5);
            let n_det = rng.random_range(1..6);
            let gts: Vec<GtBox> = (0..n_gt).map(|_| random_box(&mut rng)).collect();
            let dets: Vec<Detection> = (0..n_det)
                .map(|_| det(random_box(&mut rng), rng.random_range(0.0..1.0)))
                .collect();
            let greedy = match_detections(&dets, &gts, IOU_MATCH_THRESHOLD)
                .det_is_tp
                .iter()
                .filter(|&&t| t)
                .count();
            let optimal = optimal_tp_count(&dets, &gts, IOU_MATCH_THRESHOLD);
            assert!(greedy <= optimal);
        }

        // Well-separated boxes: one detection sits on each box, so greedy
        // attains the optimum.
        let gts: Vec<GtBox> = (0..4)
            .map(|i| square(10.0 * i as f64, 0.0, 2.0, 0.2))
            .collect();
        let dets: Vec<Detection> = gts
            .iter()
            .enumerate()
            .map(|(i, g)| det(*g, 0.5 + 0.1 * i as f64))
            .collect();
        let greedy = match_detections(&dets, &gts, IOU_MATCH_THRESHOLD)
            .det_is_tp
            .iter()
            .filter(|&&t| t)
            .count();
        assert_eq!(greedy, optimal_tp_count(&dets, &gts, IOU_MATCH_THRESHOLD));
        assert_eq!(greedy, 4);
    }

    #[test]
    fn adding_a_detection_never_decreases_tp_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let gts: Vec<GtBox> = (0..rng.random_range(1..4)).map(|_| random_box(&mut rng)).collect();
            let mut dets: Vec<Detection> = (0..rng.random_range(0..5))
                .map(|_| det(random_box(&mut rng), rng.random_range(0.0..1.0)))
                .collect();
            let count = |ds: &[Detection]| {
                match_detections(ds, &gts, IOU_MATCH_THRESHOLD)
                    .det_is_tp
                    .iter()
                    .filter(|&&t| t)
                    .count()
            };
            let before = count(&dets);
            dets.push(det(random_box(&mut rng), rng.random_range(0.0..1.0)));
            assert!(count(&dets) >= before);
        }
    }

    #[test]
    fn precision_report_counts() {
        let g = square(0.0, 0.0, 2.0, 0.0);
        let far = square(20.0, 0.0, 2.0, 0.0);
        let mut report = PrecisionReport::new();
        let dets = vec![det(g, 0.9), det(far, 0.8)];
        let gts = vec![g];
        let result = match_detections(&dets, &gts, IOU_MATCH_THRESHOLD);
        report.accumulate(&dets, &result, &gts);
        assert_eq!(report.overall().precision(), Some(0.5));

        let all_tp = match_detections(&dets[..1], &gts, IOU_MATCH_THRESHOLD);
        let mut report2 = PrecisionReport::new();
        report2.accumulate(&dets[..1], &all_tp, &gts);
        assert_eq!(report2.overall().precision(), Some(1.0));

        let empty = PrecisionReport::new();
        assert_eq!(empty.overall().precision(), None);
    }

    #[test]
    fn point_filter_is_inclusive_at_threshold() {
        let b = GtBox::new(0.0, 0.0, 0.5, 2.0, 2.0, 1.0, 0.0, ObjectClass::Vehicle).unwrap();
        let pts: Vec<Point> = (0..5).map(|i| Point::new(0.1 * i as f64, 0.0, 0.5)).collect();
        let cloud = PointCloud::single_batch(pts).unwrap();
        let kept = filter_by_points(&[det(b, 0.9)], &cloud, 5);
        assert_eq!(kept.len(), 1);
        let dropped = filter_by_points(&[det(b, 0.9)], &cloud, 6);
        assert!(dropped.is_empty());
    }

    #[test]
    fn point_filter_drops_everything_on_empty_cloud() {
        let b = square(0.0, 0.0, 2.0, 0.0);
        let kept = filter_by_points(&[det(b, 0.9)], &PointCloud::empty(), 1);
        assert!(kept.is_empty());
    }

    #[test]
    fn point_counts_match_plain_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let pts: Vec<Point> = (0..2000)
            .map(|_| {
                Point::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-1.0..3.0),
                )
            })
            .collect();
        let cloud = PointCloud::single_batch(pts).unwrap();
        for _ in 0..25 {
            let mut b = random_box(&mut rng);
            b.cz = rng.random_range(0.0..2.0);
            b.h = rng.random_range(0.5..2.5);
            let oracle = cloud
                .points()
                .iter()
                .filter(|p| {
                    let (s, c) = b.yaw.sin_cos();
                    let dx = p.x - b.cx;
                    let dy = p.y - b.cy;
                    let lx = dx * c + dy * s;
                    let ly = -dx * s + dy * c;
                    lx.abs() <= b.l / 2.0
                        && ly.abs() <= b.w / 2.0
                        && (p.z - b.cz).abs() <= b.h / 2.0
                })
                .count();
            assert_eq!(points_in_box(&cloud, &b), oracle);
        }
    }

    #[test]
    fn score_filter_keeps_at_and_above_threshold() {
        let b = square(0.0, 0.0, 2.0, 0.0);
        let dets = vec![det(b, 0.2), det(b, 0.3), det(b, 0.9)];
        let kept = filter_by_score(&dets, 0.3);
        assert_eq!(kept.len(), 2);
        assert_eq!(filter_by_score(&dets, 0.0).len(), 3);
        assert!(filter_by_score(&dets, 1.0 + 1e-9).is_empty());
    }

    #[test]
    fn tables_render_undefined_precision() {
        let variants = vec![VariantReport {
            name: "raw".into(),
            report: PrecisionReport::new(),
        }];
        let table = comparison_table(&variants);
        assert!(table.contains("n/a"));
        let csv = comparison_csv(&variants);
        assert!(csv.starts_with("pipeline,overall"));
        assert!(csv.lines().nth(1).unwrap().starts_with("raw,,"));
    }
}
