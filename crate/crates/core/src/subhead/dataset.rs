//! Labeled crop dataset construction and the `rvc-crops v1` binary format.

use super::heatmap::{crop_window, detector_heatmap, CropOutcome, GaussianHeatmapConfig};
use super::{CropLabel, HeatmapCrop, SubheadError, HM_CHANNELS};
use crate::cloudio::{synth_detections, Detection, DetectionConfig, SyntheticScene};
use crate::eval::{match_detections, IOU_MATCH_THRESHOLD};
use crate::fdv::GridConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::Read;
use std::path::Path;

pub const CROPS_MAGIC: &[u8] = b"rvc-crops v1\n";

/// Per-scene detection seeds are decorrelated with this stride.
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Detection config for scene `i`: same model, decorrelated seed. Used by
/// both the dataset builder and the CLI so files on disk and in-process
/// datasets agree.
pub fn scene_detection_config(base: &DetectionConfig, scene_index: usize) -> DetectionConfig {
    DetectionConfig {
        seed: base
            .seed
            .wrapping_add(SEED_STRIDE.wrapping_mul(scene_index as u64)),
        ..base.clone()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CropDatasetConfig {
    /// Target examples per label after balancing.
    pub per_class: usize,
    pub window: usize,
    pub heatmap: GaussianHeatmapConfig,
    pub seed: u64,
}

/// Balanced labeled crops plus the achieved per-label counts (which fall
/// short of `per_class` when the scenes did not produce enough examples).
#[derive(Debug, Clone, PartialEq)]
pub struct CropDataset {
    pub crops: Vec<HeatmapCrop>,
    pub achieved: [usize; CropLabel::COUNT],
}

/// Runs the detection simulator over every scene, renders the detector-
/// belief heatmap, crops every detection and labels it by IoU-0.4 matching
/// against the scene's ground truth. Buckets are balanced to `per_class` by
/// seeded subsampling.
pub fn build_crop_dataset(
    scenes: &[SyntheticScene],
    det_cfg: &DetectionConfig,
    grid: &GridConfig,
    cfg: &CropDatasetConfig,
) -> Result<CropDataset, SubheadError> {
    if cfg.per_class == 0 {
        return Err(SubheadError::Config("per_class must be positive".into()));
    }
    let mut buckets: [Vec<HeatmapCrop>; CropLabel::COUNT] = Default::default();
    for (i, scene) in scenes.iter().enumerate() {
        let scene_det_cfg = scene_detection_config(det_cfg, i);
        let labeled = synth_detections(scene, &scene_det_cfg)?;
        let dets: Vec<Detection> = labeled.iter().map(|d| d.detection).collect();
        let hm = detector_heatmap(&scene.gt, &dets, grid, &cfg.heatmap);
        let matches = match_detections(&dets, &scene.gt, IOU_MATCH_THRESHOLD);
        for (d, &is_tp) in dets.iter().zip(&matches.det_is_tp) {
            if let CropOutcome::Cropped(mut crop) = crop_window(&hm, d, grid, cfg.window)? {
                let label = CropLabel::from_parts(d.bbox.class, is_tp);
                crop.label = Some(label);
                buckets[label.index()].push(crop);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut achieved = [0usize; CropLabel::COUNT];
    let mut crops = Vec::new();
    for (i, bucket) in buckets.iter_mut().enumerate() {
        shuffle(bucket, &mut rng);
        let take = bucket.len().min(cfg.per_class);
        achieved[i] = take;
        if take < cfg.per_class {
            log::warn!(
                "label {}: only {take} of {} requested crops available",
                CropLabel::ALL[i],
                cfg.per_class
            );
        }
        crops.extend(bucket.drain(..take));
    }
    shuffle(&mut crops, &mut rng);
    Ok(CropDataset { crops, achieved })
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Writes labeled crops: magic, u32 count, then per record u16 window, u8
/// label index, `3*k*k` little-endian f32 values.
pub fn save_crops(crops: &[HeatmapCrop], path: impl AsRef<Path>) -> Result<(), SubheadError> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(CROPS_MAGIC.len() + crops.len() * 64);
    bytes.extend_from_slice(CROPS_MAGIC);
    bytes.extend_from_slice(&(crops.len() as u32).to_le_bytes());
    for (i, crop) in crops.iter().enumerate() {
        let label = crop.label.ok_or(SubheadError::UnlabeledCrop(i))?;
        bytes.extend_from_slice(&(crop.window as u16).to_le_bytes());
        bytes.push(label.index() as u8);
        for &v in &crop.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| SubheadError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_crops(path: impl AsRef<Path>) -> Result<Vec<HeatmapCrop>, SubheadError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SubheadError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut cursor = std::io::Cursor::new(bytes.as_slice());
    let mut magic = vec![0u8; CROPS_MAGIC.len()];
    cursor
        .read_exact(&mut magic)
        .map_err(|_| SubheadError::CropFile("truncated header".into()))?;
    if magic != CROPS_MAGIC {
        return Err(SubheadError::CropFile("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    cursor
        .read_exact(&mut u32buf)
        .map_err(|_| SubheadError::CropFile("truncated count".into()))?;
    let count = u32::from_le_bytes(u32buf) as usize;
    let mut crops = Vec::with_capacity(count);
    for i in 0..count {
        let mut u16buf = [0u8; 2];
        cursor
            .read_exact(&mut u16buf)
            .map_err(|_| SubheadError::CropFile(format!("truncated record {i}")))?;
        let window = u16::from_le_bytes(u16buf) as usize;
        let mut labelbuf = [0u8; 1];
        cursor
            .read_exact(&mut labelbuf)
            .map_err(|_| SubheadError::CropFile(format!("truncated record {i}")))?;
        let label = CropLabel::from_index(labelbuf[0] as usize)
            .ok_or_else(|| SubheadError::CropFile(format!("bad label {} in record {i}", labelbuf[0])))?;
        let numel = HM_CHANNELS * window * window;
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut f32buf = [0u8; 4];
            cursor
                .read_exact(&mut f32buf)
                .map_err(|_| SubheadError::CropFile(format!("truncated record {i}")))?;
            data.push(f32::from_le_bytes(f32buf) as f64);
        }
        crops.push(HeatmapCrop {
            data,
            window,
            label: Some(label),
        });
    }
    Ok(crops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudio::{synth_scene, CloudRange, SceneConfig};

    fn grid() -> GridConfig {
        let range = CloudRange::new([-24.0, -24.0, -1.0], [24.0, 24.0, 3.0]).unwrap();
        GridConfig::pillars(range, 0.4, 0.4).unwrap()
    }

    fn scenes(n: usize) -> Vec<SyntheticScene> {
        (0..n)
            .map(|i| {
                synth_scene(&SceneConfig {
                    n_objects: 6,
                    points_per_object: 30,
                    ground_points: 300,
                    range: CloudRange::new([-24.0, -24.0, -1.0], [24.0, 24.0, 3.0]).unwrap(),
                    noise_std: 0.03,
                    seed: 100 + i as u64,
                })
                .unwrap()
            })
            .collect()
    }

    fn dataset_cfg(per_class: usize) -> CropDatasetConfig {
        CropDatasetConfig {
            per_class,
            window: 5,
            heatmap: GaussianHeatmapConfig::default(),
            seed: 7,
        }
    }

    #[test]
    fn fp_rate_zero_yields_only_true_labels() {
        let ds = build_crop_dataset(
            &scenes(4),
            &DetectionConfig {
                fp_rate: 0.0,
                seed: 3,
                ..DetectionConfig::default()
            },
            &grid(),
            &dataset_cfg(50),
        )
        .unwrap();
        assert!(ds
            .crops
            .iter()
            .all(|c| c.label.is_some_and(|l| l.is_true())));
        // False buckets are empty.
        for label in CropLabel::ALL.iter().filter(|l| !l.is_true()) {
            assert_eq!(ds.achieved[label.index()], 0);
        }
    }

    #[test]
    fn balanced_dataset_has_exactly_per_class_when_ample() {
        let ds = build_crop_dataset(
            &scenes(12),
            &DetectionConfig {
                fp_rate: 0.5,
                seed: 3,
                ..DetectionConfig::default()
            },
            &grid(),
            &dataset_cfg(4),
        )
        .unwrap();
        assert_eq!(ds.achieved, [4; 6]);
        assert_eq!(ds.crops.len(), 24);
        for label in CropLabel::ALL {
            let n = ds
                .crops
                .iter()
                .filter(|c| c.label == Some(label))
                .count();
            assert_eq!(n, 4, "{label}");
        }
    }

    #[test]
    fn insufficient_examples_reports_achieved_counts() {
        let ds = build_crop_dataset(
            &scenes(1),
            &DetectionConfig {
                fp_rate: 0.5,
                seed: 3,
                ..DetectionConfig::default()
            },
            &grid(),
            &dataset_cfg(1000),
        )
        .unwrap();
        assert!(ds.achieved.iter().all(|&n| n < 1000));
        assert_eq!(ds.crops.len(), ds.achieved.iter().sum::<usize>());
    }

    #[test]
    fn labels_agree_with_matcher_labels() {
        // Rebuild the per-scene detections exactly as the builder does and
        // check the label of every crop against a fresh match run.
        let sc = scenes(3);
        let det_cfg = DetectionConfig {
            fp_rate: 0.5,
            seed: 11,
            ..DetectionConfig::default()
        };
        let g = grid();
        let cfg = dataset_cfg(1000);
        let ds = build_crop_dataset(&sc, &det_cfg, &g, &cfg).unwrap();

        let mut expected: [usize; 6] = [0; 6];
        for (i, scene) in sc.iter().enumerate() {
            let per_scene = scene_detection_config(&det_cfg, i);
            let labeled = synth_detections(scene, &per_scene).unwrap();
            let dets: Vec<Detection> = labeled.iter().map(|d| d.detection).collect();
            let matches = match_detections(&dets, &scene.gt, IOU_MATCH_THRESHOLD);
            for (d, (&is_tp, gen)) in dets
                .iter()
                .zip(matches.det_is_tp.iter().zip(&labeled))
            {
                // Generator and matcher agree by construction.
                assert_eq!(is_tp, gen.is_tp);
                expected[CropLabel::from_parts(d.bbox.class, is_tp).index()] += 1;
            }
        }
        // Every crop the builder kept must come from one of those labels.
        for (i, &n) in ds.achieved.iter().enumerate() {
            assert!(n <= expected[i], "label {i}: {n} > {}", expected[i]);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let sc = scenes(3);
        let det_cfg = DetectionConfig {
            fp_rate: 0.5,
            seed: 11,
            ..DetectionConfig::default()
        };
        let a = build_crop_dataset(&sc, &det_cfg, &grid(), &dataset_cfg(10)).unwrap();
        let b = build_crop_dataset(&sc, &det_cfg, &grid(), &dataset_cfg(10)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crops_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crops.bin");
        let crops = vec![
            HeatmapCrop {
                data: (0..3 * 2 * 2).map(|i| i as f64 * 0.25).collect(),
                window: 2,
                label: Some(CropLabel::FalsePedestrian),
            },
            HeatmapCrop {
                data: vec![0.5; 3],
                window: 1,
                label: Some(CropLabel::TrueVehicle),
            },
        ];
        save_crops(&crops, &path).unwrap();
        assert_eq!(load_crops(&path).unwrap(), crops);
    }

    #[test]
    fn unlabeled_crop_cannot_be_saved() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crops.bin");
        let crops = vec![HeatmapCrop {
            data: vec![0.0; 3],
            window: 1,
            label: None,
        }];
        assert!(matches!(
            save_crops(&crops, &path),
            Err(SubheadError::UnlabeledCrop(0))
        ));
    }
}
