//! Classification sub-head: heatmap-window crops at predicted object
//! locations, a small zoo of MLP/conv classifiers over those crops, crop
//! dataset construction, training and detection-set refinement.

mod dataset;
mod heatmap;
mod refine;
mod train;

pub use dataset::{
    build_crop_dataset, load_crops, save_crops, scene_detection_config, CropDataset,
    CropDatasetConfig, CROPS_MAGIC,
};
pub use heatmap::{
    composite_max, crop_window, detector_heatmap, render_detection_heatmap, render_heatmap,
    CropOutcome, GaussianHeatmapConfig,
};
pub use refine::{refine, RefineOutcome};
pub use train::{train_subhead, EpochStats, TrainConfig, TrainedClassifier};

use crate::checkpoint::CheckpointError;
use crate::cloudio::{CloudError, ObjectClass};
use crate::tinynn::{uniform_init, Layer, Network, NnError};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

/// Heatmap channels = number of object classes.
pub const HM_CHANNELS: usize = ObjectClass::COUNT;
/// Crop windows explored by the ablation grid.
pub const MAX_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum SubheadError {
    #[error("window {0} outside supported range 1..={MAX_WINDOW}")]
    BadWindow(usize),
    #[error("conv classifiers require window >= 3, got {0}")]
    ConvWindowTooSmall(usize),
    #[error("out_dim {0} must be at least 2")]
    BadOutDim(usize),
    #[error("empty crop dataset")]
    EmptyDataset,
    #[error("crop {0} has no label")]
    UnlabeledCrop(usize),
    #[error("label {label} outside classifier out_dim {out_dim}")]
    LabelOutOfRange { label: usize, out_dim: usize },
    #[error("crop window {got} does not match classifier window {want}")]
    WindowMismatch { got: usize, want: usize },
    #[error("heatmap shape {got} does not match grid-derived shape {want}")]
    MapGridMismatch { got: String, want: String },
    #[error("refinement requires the 6-class head, classifier has out_dim {0}")]
    RefineNeedsSixClasses(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("crop file malformed: {0}")]
    CropFile(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

/// The six training/refinement labels: true/false per object class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CropLabel {
    TrueVehicle,
    FalseVehicle,
    TruePedestrian,
    FalsePedestrian,
    TrueCyclist,
    FalseCyclist,
}

impl CropLabel {
    pub const COUNT: usize = 6;

    pub const ALL: [CropLabel; 6] = [
        CropLabel::TrueVehicle,
        CropLabel::FalseVehicle,
        CropLabel::TruePedestrian,
        CropLabel::FalsePedestrian,
        CropLabel::TrueCyclist,
        CropLabel::FalseCyclist,
    ];

    pub fn from_parts(class: ObjectClass, is_true: bool) -> Self {
        Self::ALL[class.index() * 2 + usize::from(!is_true)]
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&l| l == self).unwrap()
    }

    pub fn class(self) -> ObjectClass {
        ObjectClass::from_index(self.index() / 2).unwrap()
    }

    pub fn is_true(self) -> bool {
        self.index().is_multiple_of(2)
    }
}

impl fmt::Display for CropLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = if self.is_true() { "True" } else { "False" };
        write!(f, "{prefix} {}", self.class())
    }
}

/// A `k x k` window over the 3-channel heatmap, stored channel-major
/// (`3 x k x k`), optionally labeled for training.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapCrop {
    pub data: Vec<f64>,
    pub window: usize,
    pub label: Option<CropLabel>,
}

/// Classifier families from the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "mlp-1")]
    Mlp1,
    #[serde(rename = "mlp-2")]
    Mlp2,
    #[serde(rename = "mlp-3")]
    Mlp3,
    #[serde(rename = "mlp-4")]
    Mlp4,
    #[serde(rename = "conv1-mlp-2")]
    Conv1Mlp2,
    #[serde(rename = "conv2-mlp-2")]
    Conv2Mlp2,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::Mlp1,
        ClassifierKind::Mlp2,
        ClassifierKind::Mlp3,
        ClassifierKind::Mlp4,
        ClassifierKind::Conv1Mlp2,
        ClassifierKind::Conv2Mlp2,
    ];

    pub fn uses_conv(self) -> bool {
        matches!(self, ClassifierKind::Conv1Mlp2 | ClassifierKind::Conv2Mlp2)
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Mlp1 => "mlp-1",
            ClassifierKind::Mlp2 => "mlp-2",
            ClassifierKind::Mlp3 => "mlp-3",
            ClassifierKind::Mlp4 => "mlp-4",
            ClassifierKind::Conv1Mlp2 => "conv1-mlp-2",
            ClassifierKind::Conv2Mlp2 => "conv2-mlp-2",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown classifier kind {s:?}; expected one of {}",
                    ClassifierKind::ALL.map(|k| k.name()).join(", ")
                )
            })
    }
}

/// Architecture description: family, crop window, output width.
///
/// Layer plans:
/// - `mlp-1`: one linear layer from the flattened crop.
/// - `mlp-2`: hidden layer twice the input width, ReLU between.
/// - `mlp-3`: mlp-2 plus a 24-neuron ReLU layer before the output.
/// - `mlp-4`: mlp-3 plus a 6-neuron ReLU layer before the output.
/// - `conv1-mlp-2`: conv 3->6 (2x2, stride 1) + ReLU, then mlp-2.
/// - `conv2-mlp-2`: adds conv 6->12 (2x2, stride 1) + ReLU, then mlp-2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub window: usize,
    pub out_dim: usize,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind, window: usize, out_dim: usize) -> Result<Self, SubheadError> {
        if !(1..=MAX_WINDOW).contains(&window) {
            return Err(SubheadError::BadWindow(window));
        }
        if kind.uses_conv() && window < 3 {
            return Err(SubheadError::ConvWindowTooSmall(window));
        }
        if out_dim < 2 {
            return Err(SubheadError::BadOutDim(out_dim));
        }
        Ok(Self {
            kind,
            window,
            out_dim,
        })
    }

    /// Flattened MLP input width after any conv stages.
    pub fn mlp_input_dim(&self) -> usize {
        let k = self.window;
        match self.kind {
            ClassifierKind::Conv1Mlp2 => 6 * (k - 1) * (k - 1),
            ClassifierKind::Conv2Mlp2 => 12 * (k - 2) * (k - 2),
            _ => HM_CHANNELS * k * k,
        }
    }

    fn layer_dims(&self) -> Vec<LayerPlan> {
        let d = self.mlp_input_dim();
        let out = self.out_dim;
        let mut plan = Vec::new();
        match self.kind {
            ClassifierKind::Conv1Mlp2 => {
                plan.push(LayerPlan::Conv { c_in: 3, c_out: 6 });
            }
            ClassifierKind::Conv2Mlp2 => {
                plan.push(LayerPlan::Conv { c_in: 3, c_out: 6 });
                plan.push(LayerPlan::Conv { c_in: 6, c_out: 12 });
            }
            _ => {}
        }
        match self.kind {
            ClassifierKind::Mlp1 => plan.push(LayerPlan::Linear {
                i: d,
                o: out,
                relu: false,
            }),
            ClassifierKind::Mlp2 | ClassifierKind::Conv1Mlp2 | ClassifierKind::Conv2Mlp2 => {
                plan.push(LayerPlan::Linear {
                    i: d,
                    o: 2 * d,
                    relu: true,
                });
                plan.push(LayerPlan::Linear {
                    i: 2 * d,
                    o: out,
                    relu: false,
                });
            }
            ClassifierKind::Mlp3 => {
                plan.push(LayerPlan::Linear {
                    i: d,
                    o: 2 * d,
                    relu: true,
                });
                plan.push(LayerPlan::Linear {
                    i: 2 * d,
                    o: 24,
                    relu: true,
                });
                plan.push(LayerPlan::Linear {
                    i: 24,
                    o: out,
                    relu: false,
                });
            }
            ClassifierKind::Mlp4 => {
                plan.push(LayerPlan::Linear {
                    i: d,
                    o: 2 * d,
                    relu: true,
                });
                plan.push(LayerPlan::Linear {
                    i: 2 * d,
                    o: 24,
                    relu: true,
                });
                plan.push(LayerPlan::Linear {
                    i: 24,
                    o: 6,
                    relu: true,
                });
                plan.push(LayerPlan::Linear {
                    i: 6,
                    o: out,
                    relu: false,
                });
            }
        }
        plan
    }

    /// Total weight + bias count of the built network.
    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|p| match *p {
                LayerPlan::Conv { c_in, c_out } => c_out * c_in * 2 * 2 + c_out,
                LayerPlan::Linear { i, o, .. } => i * o + o,
            })
            .sum()
    }

    /// Builds the network with seeded uniform init, `+-1/sqrt(fan_in)` per
    /// layer. Inputs are `[batch, 3, k, k]` crops for every kind; MLP kinds
    /// start with a flatten.
    pub fn build(&self, seed: u64) -> Network {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let plan = self.layer_dims();
        let mut flattened = false;
        for item in &plan {
            match *item {
                LayerPlan::Conv { c_in, c_out } => {
                    let bound = 1.0 / ((c_in * 4) as f64).sqrt();
                    layers.push(Layer::Conv2d {
                        kernels: uniform_init(vec![c_out, c_in, 2, 2], bound, &mut rng),
                        bias: uniform_init(vec![c_out], bound, &mut rng),
                        stride: 1,
                    });
                    layers.push(Layer::Relu);
                }
                LayerPlan::Linear { i, o, relu } => {
                    if !flattened {
                        layers.push(Layer::Flatten);
                        flattened = true;
                    }
                    let bound = 1.0 / (i as f64).sqrt();
                    layers.push(Layer::Linear {
                        w: uniform_init(vec![o, i], bound, &mut rng),
                        b: uniform_init(vec![o], bound, &mut rng),
                    });
                    if relu {
                        layers.push(Layer::Relu);
                    }
                }
            }
        }
        Network::new(layers)
    }
}

enum LayerPlan {
    Conv { c_in: usize, c_out: usize },
    Linear { i: usize, o: usize, relu: bool },
}
