//! Synthetic scene and detector-output generation.
//!
//! Scenes place non-overlapping boxes on the ground plane, sample points on
//! their surfaces and sprinkle ground returns. The detection simulator emits
//! one jittered true positive per ground-truth box plus injected false
//! positives that are guaranteed not to match any ground truth at IoU 0.4,
//! so generator labels and matcher labels always agree.

use super::{CloudError, CloudRange, Detection, GtBox, ObjectClass, Point, PointCloud, SyntheticScene};
use crate::eval::bev_iou;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

const PLACEMENT_ATTEMPTS: usize = 1000;
/// Jittered true positives must stay above the 0.4 matching threshold with a
/// margin; injected false positives must stay below it with a margin.
const TP_IOU_FLOOR: f64 = 0.45;
const FP_IOU_CEIL: f64 = 0.35;

/// Per-class `[lo, hi]` size ranges in meters (length, width, height).
fn size_range(class: ObjectClass) -> [[f64; 2]; 3] {
    match class {
        ObjectClass::Vehicle => [[3.8, 4.8], [1.7, 2.1], [1.4, 1.8]],
        ObjectClass::Pedestrian => [[0.6, 0.9], [0.6, 0.9], [1.6, 1.9]],
        ObjectClass::Cyclist => [[1.5, 1.9], [0.5, 0.8], [1.5, 1.9]],
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneConfig {
    pub n_objects: usize,
    pub points_per_object: usize,
    pub ground_points: usize,
    pub range: CloudRange,
    pub noise_std: f64,
    pub seed: u64,
}

impl SceneConfig {
    fn validate(&self) -> Result<(), CloudError> {
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(CloudError::Config(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Score distributions for simulated detections: uniform ranges with true
/// positives drawn higher than false positives.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreModel {
    pub tp: [f64; 2],
    pub fp: [f64; 2],
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            tp: [0.5, 1.0],
            fp: [0.05, 0.6],
        }
    }
}

impl ScoreModel {
    fn validate(&self) -> Result<(), CloudError> {
        for r in [self.tp, self.fp] {
            if !(0.0..=1.0).contains(&r[0]) || !(0.0..=1.0).contains(&r[1]) || r[0] > r[1] {
                return Err(CloudError::Config(format!("bad score range {r:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectionConfig {
    pub fp_rate: f64,
    pub jitter_std: f64,
    pub score_model: ScoreModel,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            fp_rate: 0.5,
            jitter_std: 0.5,
            score_model: ScoreModel::default(),
            seed: 0,
        }
    }
}

/// A simulated detection with its generator-side true/false label retained
/// for supervision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledDetection {
    pub detection: Detection,
    pub is_tp: bool,
}

fn wrap_yaw(yaw: f64) -> f64 {
    let mut y = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y = -PI;
    }
    y
}

fn sample_class(rng: &mut ChaCha8Rng) -> ObjectClass {
    ObjectClass::ALL[rng.random_range(0..ObjectClass::COUNT)]
}

fn sample_box(rng: &mut ChaCha8Rng, range: &CloudRange, class: ObjectClass) -> Option<GtBox> {
    let sizes = size_range(class);
    let l = rng.random_range(sizes[0][0]..sizes[0][1]);
    let w = rng.random_range(sizes[1][0]..sizes[1][1]);
    let h = rng.random_range(sizes[2][0]..sizes[2][1]);
    let yaw = wrap_yaw(rng.random_range(-PI..PI));
    // Keep the whole BEV footprint inside the range.
    let margin = 0.5 * (l * l + w * w).sqrt();
    let lo_x = range.min[0] + margin;
    let hi_x = range.max[0] - margin;
    let lo_y = range.min[1] + margin;
    let hi_y = range.max[1] - margin;
    if lo_x >= hi_x || lo_y >= hi_y {
        return None;
    }
    let cx = rng.random_range(lo_x..hi_x);
    let cy = rng.random_range(lo_y..hi_y);
    let cz = h / 2.0;
    GtBox::new(cx, cy, cz, l, w, h, yaw, class).ok()
}

/// Uniform point on the surface of the box, in world coordinates.
fn surface_point(rng: &mut ChaCha8Rng, b: &GtBox) -> [f64; 3] {
    // Face areas: +/-z (l*w), +/-y (l*h), +/-x (w*h).
    let areas = [b.l * b.w, b.l * b.h, b.w * b.h];
    let total = 2.0 * (areas[0] + areas[1] + areas[2]);
    let mut t = rng.random_range(0.0..total);
    let mut face = 5;
    for (i, &a) in areas.iter().enumerate() {
        if t < 2.0 * a {
            face = 2 * i + usize::from(t >= a);
            break;
        }
        t -= 2.0 * a;
    }
    let u = rng.random_range(-0.5..0.5);
    let v = rng.random_range(-0.5..0.5);
    let (lx, ly, lz) = match face {
        0 => (u * b.l, v * b.w, 0.5 * b.h),
        1 => (u * b.l, v * b.w, -0.5 * b.h),
        2 => (u * b.l, 0.5 * b.w, v * b.h),
        3 => (u * b.l, -0.5 * b.w, v * b.h),
        4 => (0.5 * b.l, u * b.w, v * b.h),
        _ => (-0.5 * b.l, u * b.w, v * b.h),
    };
    let (s, c) = b.yaw.sin_cos();
    [
        b.cx + lx * c - ly * s,
        b.cy + lx * s + ly * c,
        b.cz + lz,
    ]
}

/// Generates a deterministic scene: non-overlapping boxes with surface point
/// clusters plus ground-plane returns, all in batch 0.
pub fn synth_scene(config: &SceneConfig) -> Result<SyntheticScene, CloudError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut gt: Vec<GtBox> = Vec::with_capacity(config.n_objects);
    for obj in 0..config.n_objects {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let class = sample_class(&mut rng);
            let Some(candidate) = sample_box(&mut rng, &config.range, class) else {
                continue;
            };
            if gt.iter().all(|g| bev_iou(g, &candidate) == 0.0) {
                gt.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(CloudError::Generation(format!(
                "could not place object {obj} without overlap after {PLACEMENT_ATTEMPTS} attempts"
            )));
        }
    }

    let noise = if config.noise_std > 0.0 {
        Some(Normal::new(0.0, config.noise_std).map_err(|e| CloudError::Config(e.to_string()))?)
    } else {
        None
    };
    let jitter = |rng: &mut ChaCha8Rng| noise.map_or(0.0, |n| n.sample(rng));

    let mut points = Vec::with_capacity(config.n_objects * config.points_per_object + config.ground_points);
    for b in &gt {
        for _ in 0..config.points_per_object {
            let [x, y, z] = surface_point(&mut rng, b);
            points.push(Point::new(
                x + jitter(&mut rng),
                y + jitter(&mut rng),
                z + jitter(&mut rng),
            ));
        }
    }
    for _ in 0..config.ground_points {
        let x = rng.random_range(config.range.min[0]..config.range.max[0]);
        let y = rng.random_range(config.range.min[1]..config.range.max[1]);
        let z = jitter(&mut rng);
        points.push(Point::new(x, y, z));
    }

    Ok(SyntheticScene {
        cloud: PointCloud::single_batch(points)?,
        gt,
        seed: config.seed,
    })
}

fn jittered_tp(rng: &mut ChaCha8Rng, gt: &GtBox, jitter_std: f64) -> GtBox {
    let mut scale = 1.0;
    for _ in 0..100 {
        let normal = Normal::new(0.0, (jitter_std * scale).max(1e-12)).unwrap();
        let cx = gt.cx + normal.sample(rng);
        let cy = gt.cy + normal.sample(rng);
        let cz = gt.cz + 0.5 * normal.sample(rng);
        let grow = |rng: &mut ChaCha8Rng| 1.0 + 0.05 * scale * rng.random_range(-1.0..1.0);
        let l = gt.l * grow(rng);
        let w = gt.w * grow(rng);
        let h = gt.h * grow(rng);
        let yaw = wrap_yaw(gt.yaw + 0.05 * scale * rng.random_range(-1.0..1.0));
        if let Ok(cand) = GtBox::new(cx, cy, cz, l, w, h, yaw, gt.class) {
            if bev_iou(&cand, gt) >= TP_IOU_FLOOR {
                return cand;
            }
        }
        scale *= 0.7;
    }
    *gt
}

/// Simulates detector output for a scene. Every ground-truth box emits one
/// jittered true positive; false positives are injected so the FP fraction
/// matches `fp_rate`, each guaranteed below IoU 0.4 against all ground truth.
pub fn synth_detections(
    scene: &SyntheticScene,
    config: &DetectionConfig,
) -> Result<Vec<LabeledDetection>, CloudError> {
    if !(0.0..=1.0).contains(&config.fp_rate) {
        return Err(CloudError::Config(format!(
            "fp_rate {} outside [0, 1]",
            config.fp_rate
        )));
    }
    if config.fp_rate == 1.0 && !scene.gt.is_empty() {
        return Err(CloudError::Config(
            "fp_rate 1.0 is unreachable: every ground-truth box emits a true positive".into(),
        ));
    }
    if !config.jitter_std.is_finite() || config.jitter_std < 0.0 {
        return Err(CloudError::Config(format!(
            "jitter_std must be finite and >= 0, got {}",
            config.jitter_std
        )));
    }
    config.score_model.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dets = Vec::new();
    let score = |rng: &mut ChaCha8Rng, range: [f64; 2]| {
        if range[0] == range[1] {
            range[0]
        } else {
            rng.random_range(range[0]..range[1])
        }
    };

    for gt in &scene.gt {
        let bbox = jittered_tp(&mut rng, gt, config.jitter_std);
        let s = score(&mut rng, config.score_model.tp);
        dets.push(LabeledDetection {
            detection: Detection::new(bbox, s)?,
            is_tp: true,
        });
    }

    let n_gt = scene.gt.len() as f64;
    let n_fp = if scene.gt.is_empty() || config.fp_rate == 0.0 {
        0
    } else {
        (n_gt * config.fp_rate / (1.0 - config.fp_rate)).round() as usize
    };
    // Detectors overwhelmingly hallucinate ground-level objects, so false
    // positives sit on the ground plane like real boxes do.
    let range = scene_range(scene);
    for fp in 0..n_fp {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let class = sample_class(&mut rng);
            let Some(candidate) = sample_box(&mut rng, &range, class) else {
                continue;
            };
            if scene.gt.iter().all(|g| bev_iou(g, &candidate) < FP_IOU_CEIL) {
                let s = score(&mut rng, config.score_model.fp);
                dets.push(LabeledDetection {
                    detection: Detection::new(candidate, s)?,
                    is_tp: false,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(CloudError::Generation(format!(
                "could not place false positive {fp} below IoU {FP_IOU_CEIL} after {PLACEMENT_ATTEMPTS} attempts"
            )));
        }
    }
    Ok(dets)
}

/// Bounding range of a scene, used to drop false positives into the same
/// region as the ground truth. Falls back to the cloud's bounding box padded
/// by a meter when there is no ground truth.
fn scene_range(scene: &SyntheticScene) -> CloudRange {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut grow = |x: f64, y: f64, z: f64| {
        for (a, v) in [x, y, z].into_iter().enumerate() {
            min[a] = min[a].min(v);
            max[a] = max[a].max(v);
        }
    };
    for b in &scene.gt {
        grow(b.cx, b.cy, b.cz);
    }
    for p in scene.cloud.points() {
        grow(p.x, p.y, p.z);
    }
    for a in 0..3 {
        if !min[a].is_finite() || max[a] - min[a] < 2.0 {
            let c = if min[a].is_finite() {
                (min[a] + max[a]) / 2.0
            } else {
                0.0
            };
            min[a] = c - 1.0;
            max[a] = c + 1.0;
        }
    }
    CloudRange { min, max }
}
