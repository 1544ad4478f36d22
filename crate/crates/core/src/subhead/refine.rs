//! Detection-set refinement: classify each detection's heatmap crop and keep
//! it only when the classifier confirms "true" for the detector's own class.

use super::heatmap::{crop_window, CropOutcome};
use super::train::TrainedClassifier;
use super::{CropLabel, SubheadError};
use crate::cloudio::Detection;
use crate::fdv::GridConfig;
use crate::rvbackbone::FeatureMap;

/// Partition of the input detections. `kept` and `dropped` are disjoint and
/// together cover the input; detections whose center lies outside the range
/// cannot be classified and pass through as kept (`unclassified` counts
/// them for reports).
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub kept: Vec<Detection>,
    pub dropped: Vec<Detection>,
    pub unclassified: usize,
}

/// Classifies every detection's crop out of `hm` and keeps a detection iff
/// the predicted label is "True <detector class>". Requires the 6-class head.
pub fn refine(
    dets: &[Detection],
    hm: &FeatureMap,
    classifier: &TrainedClassifier,
    grid: &GridConfig,
) -> Result<RefineOutcome, SubheadError> {
    if classifier.spec.out_dim != CropLabel::COUNT {
        return Err(SubheadError::RefineNeedsSixClasses(classifier.spec.out_dim));
    }
    let mut crops = Vec::new();
    let mut crop_det: Vec<usize> = Vec::new();
    let mut unclassified_idx = Vec::new();
    for (i, det) in dets.iter().enumerate() {
        match crop_window(hm, det, grid, classifier.spec.window)? {
            CropOutcome::Cropped(crop) => {
                crops.push(crop);
                crop_det.push(i);
            }
            CropOutcome::OutOfRange => unclassified_idx.push(i),
        }
    }
    let crop_refs: Vec<&super::HeatmapCrop> = crops.iter().collect();
    let preds = classifier.predict(&crop_refs)?;

    let mut keep = vec![false; dets.len()];
    for &i in &unclassified_idx {
        keep[i] = true;
    }
    for (&det_idx, &pred) in crop_det.iter().zip(&preds) {
        let want = CropLabel::from_parts(dets[det_idx].bbox.class, true).index();
        keep[det_idx] = pred == want;
    }

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, det) in dets.iter().enumerate() {
        if keep[i] {
            kept.push(*det);
        } else {
            dropped.push(*det);
        }
    }
    Ok(RefineOutcome {
        kept,
        dropped,
        unclassified: unclassified_idx.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudio::{CloudRange, GtBox, ObjectClass};
    use crate::subhead::{ClassifierKind, ClassifierSpec, HM_CHANNELS};
    use crate::tinynn::{Layer, Network, Tensor};

    fn grid() -> GridConfig {
        let range = CloudRange::new([-10.0, -10.0, -1.0], [10.0, 10.0, 3.0]).unwrap();
        GridConfig::pillars(range, 0.5, 0.5).unwrap()
    }

    /// A classifier whose logits are constant: always predicts `index`.
    fn constant_classifier(index: usize, k: usize) -> TrainedClassifier {
        let spec = ClassifierSpec::new(ClassifierKind::Mlp1, k, 6).unwrap();
        let d = HM_CHANNELS * k * k;
        let w = Tensor::zeros(vec![6, d]);
        let mut b = Tensor::zeros(vec![6]);
        b.data[index] = 1.0;
        TrainedClassifier {
            spec,
            network: Network::new(vec![Layer::Flatten, Layer::Linear { w, b }]),
        }
    }

    fn vehicle_det(cx: f64, cy: f64) -> Detection {
        let b = GtBox::new(cx, cy, 0.8, 4.0, 2.0, 1.6, 0.0, ObjectClass::Vehicle).unwrap();
        Detection::new(b, 0.8).unwrap()
    }

    #[test]
    fn always_true_vehicle_keeps_all_vehicle_detections() {
        let g = grid();
        let clf = constant_classifier(CropLabel::TrueVehicle.index(), 3);
        let hm = FeatureMap::zeros(3, g.bev_height(), g.bev_width());
        let dets = vec![vehicle_det(0.0, 0.0), vehicle_det(3.0, -2.0)];
        let out = refine(&dets, &hm, &clf, &g).unwrap();
        assert_eq!(out.kept, dets);
        assert!(out.dropped.is_empty());
    }

    #[test]
    fn always_false_vehicle_drops_all_vehicle_detections() {
        let g = grid();
        let clf = constant_classifier(CropLabel::FalseVehicle.index(), 3);
        let hm = FeatureMap::zeros(3, g.bev_height(), g.bev_width());
        let dets = vec![vehicle_det(0.0, 0.0)];
        let out = refine(&dets, &hm, &clf, &g).unwrap();
        assert!(out.kept.is_empty());
        assert_eq!(out.dropped, dets);
    }

    #[test]
    fn empty_detection_list_gives_empty_outputs() {
        let g = grid();
        let clf = constant_classifier(0, 3);
        let hm = FeatureMap::zeros(3, g.bev_height(), g.bev_width());
        let out = refine(&[], &hm, &clf, &g).unwrap();
        assert!(out.kept.is_empty() && out.dropped.is_empty());
        assert_eq!(out.unclassified, 0);
    }

    #[test]
    fn refine_partitions_its_input() {
        let g = grid();
        let clf = constant_classifier(CropLabel::TrueVehicle.index(), 3);
        let hm = FeatureMap::zeros(3, g.bev_height(), g.bev_width());
        let mut dets = vec![vehicle_det(0.0, 0.0), vehicle_det(4.0, 4.0)];
        // A pedestrian detection: "True Vehicle" != "True Pedestrian".
        let ped = GtBox::new(1.0, 1.0, 0.9, 0.8, 0.8, 1.8, 0.0, ObjectClass::Pedestrian).unwrap();
        dets.push(Detection::new(ped, 0.6).unwrap());
        let out = refine(&dets, &hm, &clf, &g).unwrap();
        assert_eq!(out.kept.len() + out.dropped.len(), dets.len());
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.dropped.len(), 1);
    }

    #[test]
    fn out_of_range_detections_pass_through_kept() {
        let g = grid();
        let clf = constant_classifier(CropLabel::FalseVehicle.index(), 3);
        let hm = FeatureMap::zeros(3, g.bev_height(), g.bev_width());
        let far = vehicle_det(100.0, 0.0);
        let out = refine(&[far], &hm, &clf, &g).unwrap();
        assert_eq!(out.kept, vec![far]);
        assert_eq!(out.unclassified, 1);
    }

    #[test]
    fn non_six_class_head_is_rejected() {
        let g = grid();
        let spec = ClassifierSpec::new(ClassifierKind::Mlp1, 3, 3).unwrap();
        let clf = TrainedClassifier {
            spec,
            network: spec.build(1),
        };
        let hm = FeatureMap::zeros(3, g.bev_height(), g.bev_width());
        assert!(matches!(
            refine(&[vehicle_det(0.0, 0.0)], &hm, &clf, &g),
            Err(SubheadError::RefineNeedsSixClasses(3))
        ));
    }
}
