//! Sub-head training: cross-entropy loss, Adam, deterministic shuffling and
//! per-epoch validation metrics.

use super::heatmap::GaussianHeatmapConfig;
use super::{ClassifierKind, ClassifierSpec, HeatmapCrop, SubheadError, HM_CHANNELS};
use crate::checkpoint::{Checkpoint, CheckpointTensor};
use crate::cloudio::CloudRange;
use crate::fdv::GridConfig;
use crate::tinynn::{adam_step, cross_entropy, AdamHyper, AdamState, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of the dataset held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Metrics recorded after each epoch. `recall` holds one entry per output
/// class (NaN for classes absent from the validation split).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub recall: Vec<f64>,
}

/// A trained classifier plus everything needed to rebuild its crop pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub spec: ClassifierSpec,
    pub network: Network,
}

fn batch_tensor(crops: &[&HeatmapCrop], k: usize) -> Tensor {
    let numel = HM_CHANNELS * k * k;
    let mut data = Vec::with_capacity(crops.len() * numel);
    for c in crops {
        data.extend_from_slice(&c.data);
    }
    Tensor {
        shape: vec![crops.len(), HM_CHANNELS, k, k],
        data,
    }
}

impl TrainedClassifier {
    /// Argmax class index per crop; ties break to the smallest index.
    pub fn predict(&self, crops: &[&HeatmapCrop]) -> Result<Vec<usize>, SubheadError> {
        for c in crops {
            if c.window != self.spec.window {
                return Err(SubheadError::WindowMismatch {
                    got: c.window,
                    want: self.spec.window,
                });
            }
        }
        if crops.is_empty() {
            return Ok(Vec::new());
        }
        let x = batch_tensor(crops, self.spec.window);
        let logits = self.network.forward(&x)?;
        let k = self.spec.out_dim;
        Ok((0..crops.len())
            .map(|i| {
                let row = &logits.data[i * k..(i + 1) * k];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    /// Accuracy and per-class recall over labeled crops.
    pub fn evaluate(&self, crops: &[&HeatmapCrop]) -> Result<(f64, Vec<f64>), SubheadError> {
        let preds = self.predict(crops)?;
        let mut correct = 0usize;
        let mut per_class_total = vec![0usize; self.spec.out_dim];
        let mut per_class_hit = vec![0usize; self.spec.out_dim];
        for (i, (crop, &pred)) in crops.iter().zip(&preds).enumerate() {
            let label = crop.label.ok_or(SubheadError::UnlabeledCrop(i))?.index();
            if label >= self.spec.out_dim {
                return Err(SubheadError::LabelOutOfRange {
                    label,
                    out_dim: self.spec.out_dim,
                });
            }
            per_class_total[label] += 1;
            if pred == label {
                correct += 1;
                per_class_hit[label] += 1;
            }
        }
        let accuracy = if crops.is_empty() {
            f64::NAN
        } else {
            correct as f64 / crops.len() as f64
        };
        let recall = per_class_total
            .iter()
            .zip(&per_class_hit)
            .map(|(&t, &h)| if t == 0 { f64::NAN } else { h as f64 / t as f64 })
            .collect();
        Ok((accuracy, recall))
    }

    /// Saves the classifier together with the heatmap/grid parameters needed
    /// to reproduce its input crops at inference time.
    pub fn save(
        &self,
        path: impl AsRef<Path>,
        grid: &GridConfig,
        heatmap: &GaussianHeatmapConfig,
    ) -> Result<(), SubheadError> {
        let mut ckpt = Checkpoint::default();
        let meta = &mut ckpt.meta;
        meta.insert("model".into(), "subhead".into());
        meta.insert("kind".into(), self.spec.kind.name().into());
        meta.insert("window".into(), self.spec.window.to_string());
        meta.insert("out_dim".into(), self.spec.out_dim.to_string());
        meta.insert("sigma".into(), heatmap.sigma.to_string());
        meta.insert("peak".into(), heatmap.peak.to_string());
        let r = grid.range();
        let fmt3 = |v: [f64; 3]| format!("{} {} {}", v[0], v[1], v[2]);
        meta.insert("grid_min".into(), fmt3(r.min));
        meta.insert("grid_max".into(), fmt3(r.max));
        meta.insert("voxel".into(), fmt3(grid.voxel_size()));
        for (i, p) in self.network.params().iter().enumerate() {
            ckpt.tensors.push(CheckpointTensor {
                name: format!("p{i}"),
                dims: p.shape.clone(),
                data: p.data.clone(),
            });
        }
        ckpt.save(path)?;
        Ok(())
    }

    /// Loads a classifier checkpoint along with its crop-pipeline settings.
    pub fn load(
        path: impl AsRef<Path>,
    ) -> Result<(Self, GridConfig, GaussianHeatmapConfig), SubheadError> {
        let ckpt = Checkpoint::load(path)?;
        let bad = |m: &str| SubheadError::Config(format!("checkpoint: {m}"));
        if ckpt.meta_value("model")? != "subhead" {
            return Err(bad("not a subhead checkpoint"));
        }
        let kind: ClassifierKind = ckpt
            .meta_value("kind")?
            .parse()
            .map_err(|e: String| bad(&e))?;
        let window: usize = ckpt
            .meta_value("window")?
            .parse()
            .map_err(|_| bad("bad window"))?;
        let out_dim: usize = ckpt
            .meta_value("out_dim")?
            .parse()
            .map_err(|_| bad("bad out_dim"))?;
        let sigma: f64 = ckpt
            .meta_value("sigma")?
            .parse()
            .map_err(|_| bad("bad sigma"))?;
        let peak: f64 = ckpt
            .meta_value("peak")?
            .parse()
            .map_err(|_| bad("bad peak"))?;
        let parse3 = |s: &str| -> Result<[f64; 3], SubheadError> {
            let v: Vec<f64> = s
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("bad grid triple"))?;
            v.try_into().map_err(|_| bad("bad grid triple"))
        };
        let min = parse3(ckpt.meta_value("grid_min")?)?;
        let max = parse3(ckpt.meta_value("grid_max")?)?;
        let voxel = parse3(ckpt.meta_value("voxel")?)?;
        let range = CloudRange::new(min, max)?;
        let grid = GridConfig::new(range, voxel)
            .map_err(|e| SubheadError::Config(format!("checkpoint grid: {e}")))?;

        let spec = ClassifierSpec::new(kind, window, out_dim)?;
        // Rebuild the architecture, then overwrite its parameters.
        let mut network = spec.build(0);
        {
            let mut params = network.params_mut();
            if params.len() != ckpt.tensors.len() {
                return Err(bad(&format!(
                    "expected {} tensors, found {}",
                    params.len(),
                    ckpt.tensors.len()
                )));
            }
            for (i, p) in params.iter_mut().enumerate() {
                let t = ckpt.tensor(&format!("p{i}"))?;
                if t.dims != p.shape {
                    return Err(bad(&format!(
                        "tensor p{i} has dims {:?}, expected {:?}",
                        t.dims, p.shape
                    )));
                }
                p.data.clone_from(&t.data);
            }
        }
        Ok((
            Self { spec, network },
            grid,
            GaussianHeatmapConfig { sigma, peak },
        ))
    }
}

fn shuffle(items: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Trains a classifier on labeled crops. Deterministic in the seed: the
/// train/validation split, per-epoch shuffles and the Adam trajectory are
/// all driven by one stream. Unbalanced datasets log a warning.
pub fn train_subhead(
    crops: &[HeatmapCrop],
    spec: &ClassifierSpec,
    cfg: &TrainConfig,
) -> Result<(TrainedClassifier, Vec<EpochStats>), SubheadError> {
    if crops.is_empty() {
        return Err(SubheadError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(SubheadError::Config(
            "epochs and batch_size must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(SubheadError::Config(format!(
            "val_fraction {} outside [0, 1)",
            cfg.val_fraction
        )));
    }
    let mut labels = Vec::with_capacity(crops.len());
    let mut class_counts = vec![0usize; spec.out_dim];
    for (i, crop) in crops.iter().enumerate() {
        if crop.window != spec.window {
            return Err(SubheadError::WindowMismatch {
                got: crop.window,
                want: spec.window,
            });
        }
        let label = crop.label.ok_or(SubheadError::UnlabeledCrop(i))?.index();
        if label >= spec.out_dim {
            return Err(SubheadError::LabelOutOfRange {
                label,
                out_dim: spec.out_dim,
            });
        }
        class_counts[label] += 1;
        labels.push(label);
    }
    let (min_count, max_count) = (
        class_counts.iter().copied().min().unwrap_or(0),
        class_counts.iter().copied().max().unwrap_or(0),
    );
    if min_count * 2 < max_count {
        log::warn!(
            "unbalanced crop dataset (class counts {class_counts:?}); balanced classes are recommended"
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..crops.len()).collect();
    shuffle(&mut order, &mut rng);
    let n_val = ((crops.len() as f64) * cfg.val_fraction).round() as usize;
    let n_val = n_val.min(crops.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_crops: Vec<&HeatmapCrop> = val_idx.iter().map(|&i| &crops[i]).collect();

    let mut classifier = TrainedClassifier {
        spec: *spec,
        network: spec.build(rng.random()),
    };
    let hyper = AdamHyper {
        lr: cfg.lr,
        ..AdamHyper::default()
    };
    let params = classifier.network.params();
    let mut adam = AdamState::new(&params, hyper);
    drop(params);

    let mut train_order: Vec<usize> = train_idx.to_vec();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        shuffle(&mut train_order, &mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in train_order.chunks(cfg.batch_size) {
            let batch: Vec<&HeatmapCrop> = chunk.iter().map(|&i| &crops[i]).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let x = batch_tensor(&batch, spec.window);
            let trace = classifier.network.forward_trace(&x)?;
            let (loss, dlogits) = cross_entropy(trace.last().unwrap(), &batch_labels)?;
            let grads = classifier.network.backward(&trace, dlogits)?;
            let mut params = classifier.network.params_mut();
            adam_step(&mut params, &grads, &mut adam)?;
            loss_sum += loss;
            batches += 1;
        }
        let eval_set: &[&HeatmapCrop] = if val_crops.is_empty() {
            &[]
        } else {
            &val_crops
        };
        let (val_accuracy, recall) = if eval_set.is_empty() {
            (f64::NAN, vec![f64::NAN; spec.out_dim])
        } else {
            classifier.evaluate(eval_set)?
        };
        curve.push(EpochStats {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_accuracy,
            recall,
        });
    }
    Ok((classifier, curve))
}
