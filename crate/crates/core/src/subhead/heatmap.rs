//! Gaussian heatmap rendering and window cropping.
//!
//! Each class channel holds max-composited Gaussians centered at box
//! centers, mapped to integer BEV cells via the same floor formula the
//! voxelizer uses. The detector-belief variant scales every Gaussian by the
//! detection score; max-compositing it over the ground-truth render gives
//! the stand-in for a trained neck's heatmap output.

use super::{HeatmapCrop, SubheadError, HM_CHANNELS, MAX_WINDOW};
use crate::cloudio::{Detection, GtBox, Point};
use crate::fdv::GridConfig;
use crate::rvbackbone::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianHeatmapConfig {
    /// Gaussian width in cells.
    pub sigma: f64,
    /// Peak amplitude at the center cell.
    pub peak: f64,
}

impl Default for GaussianHeatmapConfig {
    fn default() -> Self {
        Self {
            sigma: 1.5,
            peak: 1.0,
        }
    }
}

/// Integer BEV cell of a box center, or None when outside the range.
fn center_cell(grid: &GridConfig, cx: f64, cy: f64, cz: f64) -> Option<(usize, usize)> {
    let idx = grid.voxel_index(&Point::new(cx, cy, cz))?;
    Some((idx[1], idx[0])) // (row = y cell, col = x cell)
}

fn splat(
    map: &mut FeatureMap,
    channel: usize,
    row: usize,
    col: usize,
    amplitude: f64,
    sigma: f64,
) {
    let radius = (4.0 * sigma).ceil() as i64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let (h, w) = (map.height as i64, map.width as i64);
    let (r0, c0) = (row as i64, col as i64);
    for r in (r0 - radius).max(0)..=(r0 + radius).min(h - 1) {
        for c in (c0 - radius).max(0)..=(c0 + radius).min(w - 1) {
            let d2 = ((r - r0) * (r - r0) + (c - c0) * (c - c0)) as f64;
            let v = amplitude * (-d2 * inv).exp();
            let cur = map.get(channel, r as usize, c as usize);
            if v > cur {
                map.set(channel, r as usize, c as usize, v);
            }
        }
    }
}

fn render_impl<'a>(
    boxes: impl Iterator<Item = (&'a GtBox, f64)>,
    grid: &GridConfig,
    cfg: &GaussianHeatmapConfig,
) -> FeatureMap {
    let mut map = FeatureMap::zeros(HM_CHANNELS, grid.bev_height(), grid.bev_width());
    for (b, amplitude) in boxes {
        // Boxes outside the grid range contribute nothing.
        if let Some((row, col)) = center_cell(grid, b.cx, b.cy, b.cz) {
            splat(&mut map, b.class.index(), row, col, amplitude, cfg.sigma);
        }
    }
    map
}

/// Renders boxes at full peak amplitude (the ground-truth signal).
pub fn render_heatmap(boxes: &[GtBox], grid: &GridConfig, cfg: &GaussianHeatmapConfig) -> FeatureMap {
    render_impl(boxes.iter().map(|b| (b, cfg.peak)), grid, cfg)
}

/// Renders detections with the peak scaled by each detection's score.
pub fn render_detection_heatmap(
    dets: &[Detection],
    grid: &GridConfig,
    cfg: &GaussianHeatmapConfig,
) -> FeatureMap {
    render_impl(dets.iter().map(|d| (&d.bbox, cfg.peak * d.score)), grid, cfg)
}

/// Elementwise max of two maps of identical shape.
pub fn composite_max(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap, SubheadError> {
    if !a.same_shape(b) {
        return Err(SubheadError::MapGridMismatch {
            got: format!("{}x{}x{}", b.channels, b.height, b.width),
            want: format!("{}x{}x{}", a.channels, a.height, a.width),
        });
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| x.max(y))
        .collect();
    Ok(FeatureMap {
        channels: a.channels,
        height: a.height,
        width: a.width,
        data,
    })
}

/// Heatmap a trained neck would produce: strong peaks at true objects plus
/// score-weighted peaks wherever the detector believes an object sits.
pub fn detector_heatmap(
    gt: &[GtBox],
    dets: &[Detection],
    grid: &GridConfig,
    cfg: &GaussianHeatmapConfig,
) -> FeatureMap {
    let gt_map = render_heatmap(gt, grid, cfg);
    let det_map = render_detection_heatmap(dets, grid, cfg);
    composite_max(&gt_map, &det_map).expect("both maps rendered from the same grid")
}

/// Crop result: either a window or a skip marker for detections whose center
/// lies outside the cloud range (they pass through refinement unclassified).
#[derive(Debug, Clone, PartialEq)]
pub enum CropOutcome {
    Cropped(HeatmapCrop),
    OutOfRange,
}

/// Extracts the `k x k` window centered on the detection's BEV cell (for
/// even `k` the center sits at index `ceil(k/2) - 1`). Out-of-map cells are
/// zero-padded.
pub fn crop_window(
    hm: &FeatureMap,
    det: &Detection,
    grid: &GridConfig,
    k: usize,
) -> Result<CropOutcome, SubheadError> {
    if !(1..=MAX_WINDOW).contains(&k) {
        return Err(SubheadError::BadWindow(k));
    }
    if hm.channels != HM_CHANNELS || hm.height != grid.bev_height() || hm.width != grid.bev_width()
    {
        return Err(SubheadError::MapGridMismatch {
            got: format!("{}x{}x{}", hm.channels, hm.height, hm.width),
            want: format!(
                "{}x{}x{}",
                HM_CHANNELS,
                grid.bev_height(),
                grid.bev_width()
            ),
        });
    }
    let Some((row, col)) = center_cell(grid, det.bbox.cx, det.bbox.cy, det.bbox.cz) else {
        return Ok(CropOutcome::OutOfRange);
    };
    let center_offset = k.div_ceil(2) - 1; // ceil(k/2) - 1
    let r0 = row as i64 - center_offset as i64;
    let c0 = col as i64 - center_offset as i64;
    let mut data = vec![0.0; HM_CHANNELS * k * k];
    for ch in 0..HM_CHANNELS {
        for dr in 0..k {
            for dc in 0..k {
                let r = r0 + dr as i64;
                let c = c0 + dc as i64;
                if r >= 0 && (r as usize) < hm.height && c >= 0 && (c as usize) < hm.width {
                    data[(ch * k + dr) * k + dc] = hm.get(ch, r as usize, c as usize);
                }
            }
        }
    }
    Ok(CropOutcome::Cropped(HeatmapCrop {
        data,
        window: k,
        label: None,
    }))
}
