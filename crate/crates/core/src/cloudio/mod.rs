//! Point-cloud data model, file ingestion, range filtering and synthetic
//! scene generation.
//!
//! All values are plain `f64`; clouds, boxes and detections are immutable
//! once built and safe to share across threads.

mod io;
mod synth;

pub use io::{
    load_csv, load_kitti_bin, read_detections, read_scene, save_kitti_bin, write_detections,
    write_scene, DETS_HEADER, SCENE_HEADER,
};
pub use synth::{
    synth_detections, synth_scene, DetectionConfig, LabeledDetection, SceneConfig, ScoreModel,
};

use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: size {size} is not a multiple of 16 bytes (4 x f32 per point)")]
    BinFormat { path: PathBuf, size: u64 },
    #[error("non-finite value in record {record}")]
    NonFinite { record: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("degenerate range on axis {axis}: min {min} >= max {max}")]
    DegenerateRange { axis: usize, min: f64, max: f64 },
    #[error("batch ids are not contiguous from 0 (missing {missing})")]
    BatchGap { missing: u32 },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Object classes scored by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ObjectClass {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 3] = [
        ObjectClass::Vehicle,
        ObjectClass::Pedestrian,
        ObjectClass::Cyclist,
    ];

    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            ObjectClass::Vehicle => 0,
            ObjectClass::Pedestrian => 1,
            ObjectClass::Cyclist => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ObjectClass::Vehicle => "Vehicle",
            ObjectClass::Pedestrian => "Pedestrian",
            ObjectClass::Cyclist => "Cyclist",
        };
        f.write_str(name)
    }
}

/// One LiDAR return. Intensity is carried through ingestion but not used by
/// the voxel features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            intensity: 0.0,
        }
    }

    pub fn with_intensity(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// A batch of points with one batch id per point. Batch ids must form a
/// contiguous set starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    batch_ids: Vec<u32>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, batch_ids: Vec<u32>) -> Result<Self, CloudError> {
        if points.len() != batch_ids.len() {
            return Err(CloudError::Config(format!(
                "{} points but {} batch ids",
                points.len(),
                batch_ids.len()
            )));
        }
        for (record, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(CloudError::NonFinite { record });
            }
        }
        if let Some(&max) = batch_ids.iter().max() {
            let mut seen = vec![false; max as usize + 1];
            for &b in &batch_ids {
                seen[b as usize] = true;
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(CloudError::BatchGap {
                    missing: missing as u32,
                });
            }
        }
        Ok(Self { points, batch_ids })
    }

    /// Cloud with every point in batch 0.
    pub fn single_batch(points: Vec<Point>) -> Result<Self, CloudError> {
        let n = points.len();
        Self::new(points, vec![0; n])
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            batch_ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn batch_ids(&self) -> &[u32] {
        &self.batch_ids
    }

    pub fn num_batches(&self) -> usize {
        self.batch_ids.iter().max().map_or(0, |&m| m as usize + 1)
    }
}

/// Per-axis `[min, max)` bounds in meters. Intervals are half-open so that
/// `floor((coord - min) / voxel)` is a valid grid index for every in-range
/// point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CloudRange {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl CloudRange {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, CloudError> {
        for axis in 0..3 {
            if !min[axis].is_finite() || !max[axis].is_finite() || min[axis] >= max[axis] {
                return Err(CloudError::DegenerateRange {
                    axis,
                    min: min[axis],
                    max: max[axis],
                });
            }
        }
        Ok(Self { min, max })
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    /// Half-open containment test: `min <= coord < max` on every axis.
    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|a| {
            let c = p.coord(a);
            self.min[a] <= c && c < self.max[a]
        })
    }
}

/// Ground-truth 3D box: center, size, yaw about +z, class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub class: ObjectClass,
}

impl GtBox {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cx: f64,
        cy: f64,
        cz: f64,
        l: f64,
        w: f64,
        h: f64,
        yaw: f64,
        class: ObjectClass,
    ) -> Result<Self, CloudError> {
        let b = Self {
            cx,
            cy,
            cz,
            l,
            w,
            h,
            yaw,
            class,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), CloudError> {
        for v in [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw] {
            if !v.is_finite() {
                return Err(CloudError::InvalidBox("non-finite field".into()));
            }
        }
        if self.l <= 0.0 || self.w <= 0.0 || self.h <= 0.0 {
            return Err(CloudError::InvalidBox(format!(
                "non-positive size {}x{}x{}",
                self.l, self.w, self.h
            )));
        }
        if !(-std::f64::consts::PI..std::f64::consts::PI).contains(&self.yaw) {
            return Err(CloudError::InvalidBox(format!(
                "yaw {} outside [-pi, pi)",
                self.yaw
            )));
        }
        Ok(())
    }

    /// BEV footprint corners, counter-clockwise for yaw 0.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[lx, ly]| [self.cx + lx * c - ly * s, self.cy + lx * s + ly * c])
    }

    /// Inclusive containment in the full rotated 3D box.
    pub fn contains_point(&self, p: &Point) -> bool {
        let dz = p.z - self.cz;
        if dz.abs() > self.h / 2.0 {
            return false;
        }
        let (s, c) = self.yaw.sin_cos();
        let dx = p.x - self.cx;
        let dy = p.y - self.cy;
        let lx = dx * c + dy * s;
        let ly = -dx * s + dy * c;
        lx.abs() <= self.l / 2.0 && ly.abs() <= self.w / 2.0
    }
}

/// A predicted box with a confidence score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: GtBox,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: GtBox, score: f64) -> Result<Self, CloudError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(CloudError::InvalidScore(score));
        }
        Ok(Self { bbox, score })
    }
}

/// Generated scene: cloud plus ground truth, reproducible from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub cloud: PointCloud,
    pub gt: Vec<GtBox>,
    pub seed: u64,
}

/// Keeps exactly the points with `min <= coord < max` on all three axes,
/// preserving order.
pub fn filter_range(cloud: &PointCloud, range: &CloudRange) -> PointCloud {
    let mut points = Vec::new();
    let mut batch_ids = Vec::new();
    for (p, &b) in cloud.points.iter().zip(&cloud.batch_ids) {
        if range.contains(p) {
            points.push(*p);
            batch_ids.push(b);
        }
    }
    // Filtering cannot introduce batch gaps that matter downstream: the
    // voxelizer keys pillars by (batch, cell) and never indexes by batch id.
    PointCloud { points, batch_ids }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn range(min: [f64; 3], max: [f64; 3]) -> CloudRange {
        CloudRange::new(min, max).unwrap()
    }

    #[test]
    fn filter_keeps_in_range_points_in_order() {
        let cloud = PointCloud::single_batch(vec![
            Point::new(0.5, 0.5, 0.5),
            Point::new(2.0, 0.0, 0.0),
        ])
        .unwrap();
        let out = filter_range(&cloud, &range([0.0; 3], [1.0; 3]));
        assert_eq!(out.points(), &[Point::new(0.5, 0.5, 0.5)]);
    }

    #[test]
    fn filter_of_empty_cloud_is_empty() {
        let out = filter_range(&PointCloud::empty(), &range([0.0; 3], [1.0; 3]));
        assert!(out.is_empty());
    }

    #[test]
    fn max_boundary_is_excluded_and_indices_stay_valid() {
        // Half-open convention: a kept point must map to a valid cell under
        // floor((coord - min) / voxel) with voxel = extent / 10.
        let r = range([0.0; 3], [1.0; 3]);
        let grid_per_axis = 10.0;
        let voxel = 1.0 / grid_per_axis;
        let probes = [
            Point::new(1.0, 0.5, 0.5),
            Point::new(0.5, 1.0, 0.5),
            Point::new(1.0 - 1e-12, 0.5, 0.5),
            Point::new(0.0, 0.0, 0.0),
            Point::new(0.999999, 0.999999, 0.999999),
        ];
        let cloud = PointCloud::single_batch(probes.to_vec()).unwrap();
        let kept = filter_range(&cloud, &r);
        for p in kept.points() {
            for a in 0..3 {
                let idx = ((p.coord(a) - r.min[a]) / voxel).floor();
                assert!(
                    idx >= 0.0 && idx < grid_per_axis,
                    "kept point maps outside the grid: {p:?} axis {a} idx {idx}"
                );
            }
        }
        assert_eq!(kept.len(), 3); // the two exact-max probes are excluded
    }

    #[test]
    fn degenerate_range_is_rejected() {
        assert!(matches!(
            CloudRange::new([0.0, 0.0, 1.0], [1.0, 1.0, 1.0]),
            Err(CloudError::DegenerateRange { axis: 2, .. })
        ));
    }

    #[test]
    fn batch_ids_must_be_contiguous() {
        let pts = vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 1.0, 1.0)];
        assert!(matches!(
            PointCloud::new(pts, vec![0, 2]),
            Err(CloudError::BatchGap { missing: 1 })
        ));
    }

    #[test]
    fn non_finite_points_are_rejected_with_record() {
        let pts = vec![Point::new(0.0, 0.0, 0.0), Point::new(f64::NAN, 0.0, 0.0)];
        assert!(matches!(
            PointCloud::single_batch(pts),
            Err(CloudError::NonFinite { record: 1 })
        ));
    }

    #[test]
    fn box_containment_respects_yaw_and_is_inclusive() {
        let b = GtBox::new(
            0.0,
            0.0,
            0.0,
            4.0,
            2.0,
            2.0,
            std::f64::consts::FRAC_PI_2,
            ObjectClass::Vehicle,
        )
        .unwrap();
        // Rotated 90 degrees: the long side now runs along y.
        assert!(b.contains_point(&Point::new(0.0, 1.9, 0.0)));
        assert!(!b.contains_point(&Point::new(1.9, 0.0, 0.0)));
        // Boundary point is inside (inclusive convention).
        assert!(b.contains_point(&Point::new(0.0, 2.0, 1.0)));
    }

    proptest! {
        /// Applying the same filter twice changes nothing.
        #[test]
        fn filter_range_is_idempotent(
            coords in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 0..64),
        ) {
            let pts: Vec<Point> = coords.into_iter().map(|(x, y, z)| Point::new(x, y, z)).collect();
            let cloud = PointCloud::single_batch(pts).unwrap();
            let r = range([-1.0; 3], [1.0; 3]);
            let once = filter_range(&cloud, &r);
            let twice = filter_range(&once, &r);
            prop_assert_eq!(once, twice);
        }
    }
}
