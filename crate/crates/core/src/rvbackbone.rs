//! Structural backbone over pillar features: two pillar-feature-net stages
//! (linear + ReLU + per-pillar scatter-max), broadcast/re-concatenation
//! between them, and rearrangement of the final per-pillar vectors into a
//! dense BEV pseudo-image.
//!
//! The backbone is inference-only with seeded random weights; normalization
//! layers carry trained statistics we do not have and are omitted.

use crate::fdv::{FdvFeatures, PillarAssignment, FDV_CHANNELS};
use crate::scatter::{scatter_max, ScatterMax, SegmentIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackboneError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite weight or bias")]
    NonFinite,
    #[error("pillar coordinate ({row}, {col}) outside {height}x{width} map")]
    CoordOutOfGrid {
        row: u32,
        col: u32,
        height: usize,
        width: usize,
    },
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
}

/// One pillar-feature-net stage: dense weights `[out, in]` and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PfnLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PfnLayerSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, BackboneError> {
        if weights.len() != in_channels * out_channels || bias.len() != out_channels {
            return Err(BackboneError::ShapeMismatch(format!(
                "{}x{} layer with {} weights and {} biases",
                out_channels,
                in_channels,
                weights.len(),
                bias.len()
            )));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(BackboneError::NonFinite);
        }
        Ok(Self {
            in_channels,
            out_channels,
            weights,
            bias,
        })
    }

    /// Seeded uniform init in `[-1/sqrt(in), 1/sqrt(in)]`.
    pub fn seeded(in_channels: usize, out_channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (in_channels as f64).sqrt();
        let weights = (0..in_channels * out_channels)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..out_channels)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            in_channels,
            out_channels,
            weights,
            bias,
        }
    }
}

/// Dense `channels x height x width` map, row-major. Serves both BEV
/// pseudo-images and detection heatmaps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f64) {
        self.data[(c * self.height + row) * self.width + col] = v;
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels
            && self.height == other.height
            && self.width == other.width
    }
}

/// Applies `ReLU(W x + b)` to every feature row, then reduces each pillar
/// with scatter-max. Returns the per-point activations and the per-pillar
/// maxima.
pub fn pfn_stage(
    features: &[f64],
    channels_in: usize,
    idx: &SegmentIndex,
    spec: &PfnLayerSpec,
) -> Result<(Vec<f64>, ScatterMax), BackboneError> {
    if spec.in_channels != channels_in {
        return Err(BackboneError::ShapeMismatch(format!(
            "stage expects {} channels, features have {channels_in}",
            spec.in_channels
        )));
    }
    if channels_in == 0 || !features.len().is_multiple_of(channels_in) {
        return Err(BackboneError::ShapeMismatch(format!(
            "feature length {} for {channels_in} channels",
            features.len()
        )));
    }
    let rows = features.len() / channels_in;
    if rows != idx.len() {
        return Err(BackboneError::ShapeMismatch(format!(
            "{rows} feature rows but {} index entries",
            idx.len()
        )));
    }
    let c_out = spec.out_channels;
    let mut out = vec![0.0; rows * c_out];
    for r in 0..rows {
        let x = &features[r * channels_in..(r + 1) * channels_in];
        for o in 0..c_out {
            let wrow = &spec.weights[o * channels_in..(o + 1) * channels_in];
            let mut acc = spec.bias[o];
            for k in 0..channels_in {
                acc += wrow[k] * x[k];
            }
            out[r * c_out + o] = acc.max(0.0);
        }
    }
    let max = scatter_max(&out, c_out, idx)
        .map_err(|e| BackboneError::ShapeMismatch(e.to_string()))?;
    Ok((out, max))
}

/// Full backbone fold: stage 1 on the 9-channel FDV features, broadcast of
/// the per-pillar maxima back to member points, concatenation with the
/// per-point activations, stage 2, and a final per-pillar scatter-max.
/// Returns `pillars x specs[1].out_channels` values.
pub fn rv_backbone_forward(
    features: &FdvFeatures,
    assignment: &PillarAssignment,
    specs: &[PfnLayerSpec; 2],
) -> Result<Vec<f64>, BackboneError> {
    if specs[0].in_channels != FDV_CHANNELS {
        return Err(BackboneError::ShapeMismatch(format!(
            "stage 1 must accept {FDV_CHANNELS} input channels, got {}",
            specs[0].in_channels
        )));
    }
    if specs[1].in_channels != 2 * specs[0].out_channels {
        return Err(BackboneError::ShapeMismatch(format!(
            "stage 2 expects {} channels after concatenation, got {}",
            2 * specs[0].out_channels,
            specs[1].in_channels
        )));
    }
    let idx = SegmentIndex::new(features.pillar_of_row.clone(), assignment.pillar_count())
        .map_err(|e| BackboneError::ShapeMismatch(e.to_string()))?;

    let (h1, m1) = pfn_stage(&features.data, FDV_CHANNELS, &idx, &specs[0])?;

    // Concatenate each point's activation with its pillar's stage-1 max.
    let c1 = specs[0].out_channels;
    let mut concat = vec![0.0; features.rows * 2 * c1];
    for r in 0..features.rows {
        let pillar = features.pillar_of_row[r] as usize;
        concat[r * 2 * c1..r * 2 * c1 + c1].copy_from_slice(&h1[r * c1..(r + 1) * c1]);
        concat[r * 2 * c1 + c1..(r + 1) * 2 * c1]
            .copy_from_slice(m1.result.bucket(pillar));
    }

    let (_, m2) = pfn_stage(&concat, 2 * c1, &idx, &specs[1])?;
    Ok(m2.result.values)
}

/// Scatters per-pillar feature vectors into dense per-batch BEV maps of
/// `height = grid y cells`, `width = grid x cells`. Cells without a pillar
/// stay zero.
pub fn scatter_to_bev(
    pillar_features: &[f64],
    channels: usize,
    assignment: &PillarAssignment,
    grid: &crate::fdv::GridConfig,
    num_batches: usize,
) -> Result<Vec<FeatureMap>, BackboneError> {
    let pillars = assignment.pillar_count();
    if channels == 0 || pillar_features.len() != pillars * channels {
        return Err(BackboneError::ShapeMismatch(format!(
            "{} feature values for {pillars} pillars x {channels} channels",
            pillar_features.len()
        )));
    }
    let height = grid.bev_height();
    let width = grid.bev_width();
    let mut maps: Vec<FeatureMap> = (0..num_batches)
        .map(|_| FeatureMap::zeros(channels, height, width))
        .collect();
    for p in 0..pillars {
        let [row, col, _layer] = assignment.pillar_coords()[p];
        let batch = assignment.batch_of_pillar()[p] as usize;
        if row as usize >= height || col as usize >= width || batch >= num_batches {
            return Err(BackboneError::CoordOutOfGrid {
                row,
                col,
                height,
                width,
            });
        }
        for c in 0..channels {
            maps[batch].set(
                c,
                row as usize,
                col as usize,
                pillar_features[p * channels + c],
            );
        }
    }
    Ok(maps)
}

/// Default channel plan: 9 -> 32, then (32 + 32) -> 64.
pub fn default_specs(seed: u64) -> [PfnLayerSpec; 2] {
    [
        PfnLayerSpec::seeded(FDV_CHANNELS, 32, seed),
        PfnLayerSpec::seeded(64, 64, seed.wrapping_add(1)),
    ]
}

/// Writes the two stages into the shared checkpoint container. Weights are
/// stored as f32, so a load returns f32-rounded values.
pub fn save_backbone(
    specs: &[PfnLayerSpec; 2],
    path: impl AsRef<std::path::Path>,
) -> Result<(), BackboneError> {
    use crate::checkpoint::{Checkpoint, CheckpointTensor};
    let mut ckpt = Checkpoint::default();
    ckpt.meta.insert("model".into(), "rvbackbone".into());
    for (i, spec) in specs.iter().enumerate() {
        ckpt.tensors.push(CheckpointTensor {
            name: format!("stage{i}.w"),
            dims: vec![spec.out_channels, spec.in_channels],
            data: spec.weights.clone(),
        });
        ckpt.tensors.push(CheckpointTensor {
            name: format!("stage{i}.b"),
            dims: vec![spec.out_channels],
            data: spec.bias.clone(),
        });
    }
    ckpt.save(path)?;
    Ok(())
}

pub fn load_backbone(path: impl AsRef<std::path::Path>) -> Result<[PfnLayerSpec; 2], BackboneError> {
    use crate::checkpoint::Checkpoint;
    let ckpt = Checkpoint::load(path)?;
    if ckpt.meta_value("model")? != "rvbackbone" {
        return Err(BackboneError::ShapeMismatch(
            "not a backbone checkpoint".into(),
        ));
    }
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let w = ckpt.tensor(&format!("stage{i}.w"))?;
        let b = ckpt.tensor(&format!("stage{i}.b"))?;
        let (out_channels, in_channels) = match w.dims[..] {
            [o, ic] => (o, ic),
            _ => {
                return Err(BackboneError::ShapeMismatch(format!(
                    "stage{i}.w has dims {:?}",
                    w.dims
                )))
            }
        };
        out.push(PfnLayerSpec::new(
            in_channels,
            out_channels,
            w.data.clone(),
            b.data.clone(),
        )?);
    }
    Ok(out.try_into().expect("two stages"))
}
