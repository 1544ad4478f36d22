//! Fast dynamic voxelizer: assigns every in-range point to a pillar (or 3D
//! voxel) in a single O(N) pass, with no per-cell point cap and no padding,
//! and emits the 9-channel per-point feature encoding.
//!
//! Pillar ordinals follow first occurrence in input order, which makes the
//! assignment deterministic; a canonical (batch, row, col, layer) sort order
//! is provided for serialization.

use crate::cloudio::{CloudRange, Point, PointCloud};
use crate::scatter::{scatter_mean_strided, SegmentIndex};
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

/// Channels of the per-point feature encoding: raw coordinates, offsets to
/// the cell center, offsets to the cell's mean point.
pub const FDV_CHANNELS: usize = 9;

#[derive(Debug, Error)]
pub enum FdvError {
    #[error("extent {extent} on axis {axis} is not an integer multiple of voxel size {voxel} (ratio {ratio})")]
    NonDivisible {
        axis: usize,
        extent: f64,
        voxel: f64,
        ratio: f64,
    },
    #[error("voxel size on axis {axis} must be positive and finite, got {voxel}")]
    BadVoxel { axis: usize, voxel: f64 },
    #[error("assignment does not belong to this cloud: {0}")]
    MismatchedAssignment(String),
}

/// Voxel-grid geometry: range, per-axis voxel size and the derived grid size.
/// In pillar mode the z voxel spans the full vertical extent (grid_size_z = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    range: CloudRange,
    voxel_size: [f64; 3],
    grid_size: [usize; 3],
}

impl GridConfig {
    /// Derives the grid size as `round(extent / voxel)` per axis, rejecting
    /// configurations where the ratio is more than 1e-6 from an integer.
    pub fn new(range: CloudRange, voxel_size: [f64; 3]) -> Result<Self, FdvError> {
        let mut grid_size = [0usize; 3];
        for axis in 0..3 {
            let voxel = voxel_size[axis];
            if !voxel.is_finite() || voxel <= 0.0 {
                return Err(FdvError::BadVoxel { axis, voxel });
            }
            let extent = range.extent(axis);
            let ratio = extent / voxel;
            let rounded = ratio.round();
            if (ratio - rounded).abs() > 1e-6 || rounded < 1.0 {
                return Err(FdvError::NonDivisible {
                    axis,
                    extent,
                    voxel,
                    ratio,
                });
            }
            grid_size[axis] = rounded as usize;
        }
        Ok(Self {
            range,
            voxel_size,
            grid_size,
        })
    }

    /// Pillar (2D) grid: one z layer spanning the whole vertical extent.
    pub fn pillars(range: CloudRange, voxel_x: f64, voxel_y: f64) -> Result<Self, FdvError> {
        let voxel_z = range.extent(2);
        Self::new(range, [voxel_x, voxel_y, voxel_z])
    }

    pub fn range(&self) -> &CloudRange {
        &self.range
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn grid_size(&self) -> [usize; 3] {
        self.grid_size
    }

    pub fn is_pillar_mode(&self) -> bool {
        self.grid_size[2] == 1
    }

    /// BEV map height (rows = y cells).
    pub fn bev_height(&self) -> usize {
        self.grid_size[1]
    }

    /// BEV map width (cols = x cells).
    pub fn bev_width(&self) -> usize {
        self.grid_size[0]
    }

    /// Cell index of a point, or None when the point is out of range under
    /// the half-open convention. The index is clamped to the last cell to
    /// absorb the rare division rounding at the upper boundary.
    pub fn voxel_index(&self, p: &Point) -> Option<[usize; 3]> {
        if !self.range.contains(p) {
            return None;
        }
        let mut idx = [0usize; 3];
        for (axis, slot) in idx.iter_mut().enumerate() {
            let cell = ((p.coord(axis) - self.range.min[axis]) / self.voxel_size[axis]).floor();
            *slot = (cell as usize).min(self.grid_size[axis] - 1);
        }
        Some(idx)
    }

    /// Geometric center of a cell. In pillar mode the z center is the
    /// midpoint of the full vertical range.
    pub fn cell_center(&self, idx: [usize; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for axis in 0..3 {
            out[axis] =
                self.range.min[axis] + (idx[axis] as f64 + 0.5) * self.voxel_size[axis];
        }
        out
    }
}

/// Point-to-pillar mapping produced by [`assign_pillars`]. `pillar_of_point`
/// is `None` for out-of-range points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PillarAssignment {
    pillar_of_point: Vec<Option<u32>>,
    /// Per pillar: `[row, col, layer]` cell coordinates (row = y, col = x).
    pillar_coords: Vec<[u32; 3]>,
    batch_of_pillar: Vec<u32>,
    occupancy: Vec<u32>,
}

impl PillarAssignment {
    pub fn pillar_count(&self) -> usize {
        self.pillar_coords.len()
    }

    pub fn pillar_of_point(&self) -> &[Option<u32>] {
        &self.pillar_of_point
    }

    pub fn pillar_coords(&self) -> &[[u32; 3]] {
        &self.pillar_coords
    }

    pub fn batch_of_pillar(&self) -> &[u32] {
        &self.batch_of_pillar
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    pub fn points_assigned(&self) -> usize {
        self.pillar_of_point.iter().filter(|p| p.is_some()).count()
    }

    pub fn points_skipped(&self) -> usize {
        self.pillar_of_point.len() - self.points_assigned()
    }

    pub fn max_occupancy(&self) -> u32 {
        self.occupancy.iter().copied().max().unwrap_or(0)
    }

    /// Pillar indices sorted by (batch, row, col, layer) for serialization.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.pillar_count()).collect();
        order.sort_by_key(|&i| {
            let [row, col, layer] = self.pillar_coords[i];
            (self.batch_of_pillar[i], row, col, layer)
        });
        order
    }
}

/// Above this many (cell, batch) slots the dense ordinal lookup would cost
/// more to clear than hashing costs to probe.
const DENSE_LOOKUP_CAP: usize = 1 << 22;

/// Assigns every in-range point to a pillar. Cell coordinates follow
/// `floor((coord - min) / voxel)`; repeated (batch, cell) keys are
/// deduplicated into one pillar; ordinals follow first occurrence in input
/// order. Out-of-range points are skipped, never an error, and no point data
/// is dropped or duplicated.
pub fn assign_pillars(cloud: &PointCloud, grid: &GridConfig) -> PillarAssignment {
    let mut out = PillarAssignment::default();
    assign_pillars_into(cloud, grid, &mut out);
    out
}

/// [`assign_pillars`] into reusable buffers; repeated calls avoid
/// reallocating the per-point vectors.
pub fn assign_pillars_into(cloud: &PointCloud, grid: &GridConfig, out: &mut PillarAssignment) {
    let [nx, ny, nz] = grid.grid_size();
    let cells = nx * ny * nz;
    let batches = cloud.num_batches().max(1);
    let dense = cells
        .checked_mul(batches)
        .is_some_and(|total| total <= DENSE_LOOKUP_CAP);
    if dense {
        assign_with_lookup(cloud, grid, out, &mut DenseLookup::new(cells, batches, nx, ny));
    } else {
        assign_with_lookup(cloud, grid, out, &mut HashLookup::default());
    }
}

/// Ordinal lookup keyed by (batch, cell). Both strategies assign ordinals by
/// first occurrence, so they produce identical results.
trait CellLookup {
    fn get_or_insert(&mut self, batch: u32, row: u32, col: u32, layer: u32, next: u32) -> u32;
}

struct DenseLookup {
    table: Vec<u32>,
    nx: usize,
    ny: usize,
    cells: usize,
}

impl DenseLookup {
    fn new(cells: usize, batches: usize, nx: usize, ny: usize) -> Self {
        Self {
            table: vec![u32::MAX; cells * batches],
            nx,
            ny,
            cells,
        }
    }
}

impl CellLookup for DenseLookup {
    fn get_or_insert(&mut self, batch: u32, row: u32, col: u32, layer: u32, next: u32) -> u32 {
        let cell =
            (layer as usize * self.ny + row as usize) * self.nx + col as usize;
        let slot = &mut self.table[batch as usize * self.cells + cell];
        if *slot == u32::MAX {
            *slot = next;
        }
        *slot
    }
}

#[derive(Default)]
struct HashLookup {
    map: HashMap<(u32, u32, u32, u32), u32>,
}

impl CellLookup for HashLookup {
    fn get_or_insert(&mut self, batch: u32, row: u32, col: u32, layer: u32, next: u32) -> u32 {
        *self.map.entry((batch, row, col, layer)).or_insert(next)
    }
}

fn assign_with_lookup(
    cloud: &PointCloud,
    grid: &GridConfig,
    out: &mut PillarAssignment,
    lookup: &mut impl CellLookup,
) {
    out.pillar_of_point.clear();
    out.pillar_of_point.reserve(cloud.len());
    out.pillar_coords.clear();
    out.batch_of_pillar.clear();
    out.occupancy.clear();

    for (p, &batch) in cloud.points().iter().zip(cloud.batch_ids()) {
        let Some([ix, iy, iz]) = grid.voxel_index(p) else {
            out.pillar_of_point.push(None);
            continue;
        };
        let (row, col, layer) = (iy as u32, ix as u32, iz as u32);
        let next = out.pillar_coords.len() as u32;
        let ordinal = lookup.get_or_insert(batch, row, col, layer, next);
        if ordinal == next {
            out.pillar_coords.push([row, col, layer]);
            out.batch_of_pillar.push(batch);
            out.occupancy.push(0);
        }
        out.occupancy[ordinal as usize] += 1;
        out.pillar_of_point.push(Some(ordinal));
    }
}

/// Per-point 9-channel features for the non-skipped points, in input order:
/// raw coordinates, offsets to the cell center, offsets to the cell mean.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FdvFeatures {
    /// `rows x FDV_CHANNELS`, row-major.
    pub data: Vec<f64>,
    pub rows: usize,
    /// Pillar ordinal of each feature row.
    pub pillar_of_row: Vec<u32>,
    /// Original cloud point index of each feature row.
    pub point_of_row: Vec<u32>,
}

impl FdvFeatures {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * FDV_CHANNELS..(i + 1) * FDV_CHANNELS]
    }
}

/// Computes the FDV feature rows for `cloud` under `assignment`. The
/// assignment must have been produced from the same cloud and grid.
pub fn fdv_features(
    cloud: &PointCloud,
    assignment: &PillarAssignment,
    grid: &GridConfig,
) -> Result<FdvFeatures, FdvError> {
    let mut out = FdvFeatures::default();
    fdv_features_into(cloud, assignment, grid, &mut out)?;
    Ok(out)
}

/// [`fdv_features`] into reusable buffers. The raw coordinates are written
/// straight into the output rows and the pillar means are reduced over them
/// in place, so per-call allocation stays small.
pub fn fdv_features_into(
    cloud: &PointCloud,
    assignment: &PillarAssignment,
    grid: &GridConfig,
    out: &mut FdvFeatures,
) -> Result<(), FdvError> {
    if assignment.pillar_of_point.len() != cloud.len() {
        return Err(FdvError::MismatchedAssignment(format!(
            "assignment covers {} points, cloud has {}",
            assignment.pillar_of_point.len(),
            cloud.len()
        )));
    }
    for (i, &[row, col, layer]) in assignment.pillar_coords.iter().enumerate() {
        let [nx, ny, nz] = grid.grid_size();
        if col as usize >= nx || row as usize >= ny || layer as usize >= nz {
            return Err(FdvError::MismatchedAssignment(format!(
                "pillar {i} at cell ({row}, {col}, {layer}) lies outside the {nx}x{ny}x{nz} grid"
            )));
        }
    }

    let rows = assignment.points_assigned();
    out.rows = rows;
    out.data.resize(rows * FDV_CHANNELS, 0.0);
    out.point_of_row.clear();
    out.point_of_row.reserve(rows);
    let mut pillar_of_row = std::mem::take(&mut out.pillar_of_row);
    pillar_of_row.clear();
    pillar_of_row.reserve(rows);

    let mut r = 0usize;
    for (i, (p, ordinal)) in cloud
        .points()
        .iter()
        .zip(&assignment.pillar_of_point)
        .enumerate()
    {
        if let Some(ord) = ordinal {
            let slot = &mut out.data[r * FDV_CHANNELS..r * FDV_CHANNELS + 3];
            slot[0] = p.x;
            slot[1] = p.y;
            slot[2] = p.z;
            pillar_of_row.push(*ord);
            out.point_of_row.push(i as u32);
            r += 1;
        }
    }

    let idx = SegmentIndex::new(pillar_of_row, assignment.pillar_count())
        .map_err(|e| FdvError::MismatchedAssignment(e.to_string()))?;
    let means = scatter_mean_strided(&out.data, 3, FDV_CHANNELS, &idx)
        .map_err(|e| FdvError::MismatchedAssignment(e.to_string()))?;
    out.pillar_of_row = idx.into_indices();

    // Each row is independent, so the fill parallelizes without affecting
    // the result: outputs are written in place, bit-identical at any worker
    // count.
    let pillar_of_row = &out.pillar_of_row;
    out.data
        .par_chunks_mut(FDV_CHANNELS)
        .enumerate()
        .for_each(|(r, slot)| {
            let ord = pillar_of_row[r] as usize;
            let [row_cell, col_cell, layer_cell] = assignment.pillar_coords[ord];
            let center =
                grid.cell_center([col_cell as usize, row_cell as usize, layer_cell as usize]);
            let mean = means.bucket(ord);
            let (x, y, z) = (slot[0], slot[1], slot[2]);
            slot[3] = x - center[0];
            slot[4] = y - center[1];
            slot[5] = z - center[2];
            slot[6] = x - mean[0];
            slot[7] = y - mean[1];
            slot[8] = z - mean[2];
        });
    Ok(())
}
