//! Experiment configuration: a flat sectioned `key = value` file (TOML)
//! with every seed explicit, so any command is reproducible from its config
//! alone. CLI flags override individual keys.

use crate::cloudio::{CloudError, CloudRange, DetectionConfig, SceneConfig, ScoreModel};
use crate::fdv::{FdvError, GridConfig};
use crate::subhead::{
    ClassifierKind, ClassifierSpec, CropDatasetConfig, GaussianHeatmapConfig, SubheadError,
    TrainConfig,
};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Grid(#[from] FdvError),
    #[error(transparent)]
    Subhead(#[from] SubheadError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub voxel_xy: [f64; 2],
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            min: [-40.0, -40.0, -1.0],
            max: [40.0, 40.0, 3.0],
            voxel_xy: [0.4, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSection {
    /// Number of scenes to generate; scene `i` uses `seed + i`.
    pub count: usize,
    pub objects: usize,
    pub points_per_object: usize,
    pub ground_points: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            count: 8,
            objects: 6,
            points_per_object: 150,
            ground_points: 6400,
            noise_std: 0.04,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionSection {
    pub fp_rate: f64,
    pub jitter_std: f64,
    pub tp_score: [f64; 2],
    pub fp_score: [f64; 2],
    pub seed: u64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        let score = ScoreModel::default();
        Self {
            fp_rate: 0.5,
            jitter_std: 0.5,
            tp_score: score.tp,
            fp_score: score.fp,
            seed: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapSection {
    pub sigma: f64,
    pub peak: f64,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        let cfg = GaussianHeatmapConfig::default();
        Self {
            sigma: cfg.sigma,
            peak: cfg.peak,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSection {
    pub kind: ClassifierKind,
    pub window: usize,
    pub out_dim: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Mlp2,
            window: 9,
            out_dim: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub val_fraction: f64,
    /// Crop examples per label in the balanced dataset.
    pub per_class: usize,
    /// Seed for dataset balancing/subsampling.
    pub dataset_seed: u64,
    /// Seed for init, split and shuffles.
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            val_fraction: 0.2,
            per_class: 1000,
            dataset_seed: 3,
            seed: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Full experiment description; every section has defaults so partial files
/// are valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub scene: SceneSection,
    pub detections: DetectionSection,
    pub heatmap: HeatmapSection,
    pub classifier: ClassifierSection,
    pub train: TrainSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn cloud_range(&self) -> Result<CloudRange, ConfigError> {
        Ok(CloudRange::new(self.grid.min, self.grid.max)?)
    }

    pub fn grid_config(&self) -> Result<GridConfig, ConfigError> {
        Ok(GridConfig::pillars(
            self.cloud_range()?,
            self.grid.voxel_xy[0],
            self.grid.voxel_xy[1],
        )?)
    }

    /// Scene config for scene index `i` (seed offset by `i`).
    pub fn scene_config(&self, i: usize) -> Result<SceneConfig, ConfigError> {
        Ok(SceneConfig {
            n_objects: self.scene.objects,
            points_per_object: self.scene.points_per_object,
            ground_points: self.scene.ground_points,
            range: self.cloud_range()?,
            noise_std: self.scene.noise_std,
            seed: self.scene.seed.wrapping_add(i as u64),
        })
    }

    pub fn detection_config(&self) -> DetectionConfig {
        DetectionConfig {
            fp_rate: self.detections.fp_rate,
            jitter_std: self.detections.jitter_std,
            score_model: ScoreModel {
                tp: self.detections.tp_score,
                fp: self.detections.fp_score,
            },
            seed: self.detections.seed,
        }
    }

    pub fn heatmap_config(&self) -> GaussianHeatmapConfig {
        GaussianHeatmapConfig {
            sigma: self.heatmap.sigma,
            peak: self.heatmap.peak,
        }
    }

    pub fn classifier_spec(&self) -> Result<ClassifierSpec, ConfigError> {
        Ok(ClassifierSpec::new(
            self.classifier.kind,
            self.classifier.window,
            self.classifier.out_dim,
        )?)
    }

    pub fn crop_dataset_config(&self) -> CropDatasetConfig {
        CropDatasetConfig {
            per_class: self.train.per_class,
            window: self.classifier.window,
            heatmap: self.heatmap_config(),
            seed: self.train.dataset_seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            val_fraction: self.train.val_fraction,
            seed: self.train.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_losslessly() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        // And serializing again is byte-stable.
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "[scene]\ncount = 3\nseed = 42\n\n[classifier]\nkind = \"conv2-mlp-2\"\nwindow = 6\n",
        )
        .unwrap();
        assert_eq!(cfg.scene.count, 3);
        assert_eq!(cfg.scene.seed, 42);
        assert_eq!(cfg.classifier.kind, ClassifierKind::Conv2Mlp2);
        assert_eq!(cfg.classifier.window, 6);
        assert_eq!(cfg.train.epochs, TrainSection::default().epochs);
    }

    #[test]
    fn derived_configs_are_consistent() {
        let cfg = ExperimentConfig::default();
        let grid = cfg.grid_config().unwrap();
        assert_eq!(grid.grid_size(), [200, 200, 1]);
        assert_eq!(cfg.scene_config(3).unwrap().seed, cfg.scene.seed + 3);
        assert_eq!(cfg.classifier_spec().unwrap().window, 9);
    }

    #[test]
    fn bad_toml_is_a_parse_error() {
        assert!(matches!(
            ExperimentConfig::from_toml("[scene\ncount = 3"),
            Err(ConfigError::Parse(_))
        ));
    }
}
