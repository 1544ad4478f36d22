//! C ABI for the pillar voxelizer.
//!
//! Handles are opaque pointers created and destroyed by this library; every
//! fallible call returns an [`RvcStatus`] and stores a message retrievable
//! via [`rvc_last_error_message`] on failure. Buffer-copy accessors take a
//! caller-allocated buffer plus its length and fail with `BufferTooSmall`
//! rather than writing out of bounds.
//!
//! The function surface must match `include/rvc.h`, which `build.rs`
//! regenerates with cbindgen on every build.

use rvc_core::cloudio::{load_kitti_bin, CloudError, CloudRange, Point, PointCloud};
use rvc_core::fdv::{
    assign_pillars, fdv_features, FdvError, FdvFeatures, GridConfig, PillarAssignment,
    FDV_CHANNELS,
};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvcStatus {
    RvcOk = 0,
    /// A required pointer argument was null.
    RvcNullArgument = 1,
    /// An argument value was rejected (bad range, bad voxel size, ...).
    RvcInvalidArgument = 2,
    /// The underlying file could not be read.
    RvcIoError = 3,
    /// The input bytes or values were malformed.
    RvcDataError = 4,
    /// A caller-provided buffer is too small; nothing was written.
    RvcBufferTooSmall = 5,
    /// Unexpected internal failure.
    RvcInternal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl AsRef<str>) {
    let sanitized = message.as_ref().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: RvcStatus, message: impl AsRef<str>) -> RvcStatus {
    set_error(message);
    status
}

fn cloud_error_status(e: &CloudError) -> RvcStatus {
    match e {
        CloudError::Io { .. } => RvcStatus::RvcIoError,
        CloudError::BinFormat { .. }
        | CloudError::NonFinite { .. }
        | CloudError::Parse { .. }
        | CloudError::BatchGap { .. } => RvcStatus::RvcDataError,
        _ => RvcStatus::RvcInvalidArgument,
    }
}

fn fdv_error_status(e: &FdvError) -> RvcStatus {
    match e {
        FdvError::NonDivisible { .. } | FdvError::BadVoxel { .. } => {
            RvcStatus::RvcInvalidArgument
        }
        FdvError::MismatchedAssignment(_) => RvcStatus::RvcInternal,
    }
}

/// Runs a handle-producing body with panic containment.
fn guarded(out_name: &str, body: impl FnOnce() -> RvcStatus) -> RvcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(
            RvcStatus::RvcInternal,
            format!("panic while producing {out_name}"),
        ),
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rvc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rvc_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Number of per-point feature channels produced by the voxelizer.
#[no_mangle]
pub extern "C" fn rvc_feature_channels() -> usize {
    FDV_CHANNELS
}

/// An immutable point cloud.
pub struct RvcCloud {
    inner: PointCloud,
}

/// A validated pillar-grid geometry.
pub struct RvcGrid {
    inner: GridConfig,
}

/// Voxelization result: the point-to-pillar assignment plus the per-point
/// feature rows.
pub struct RvcVoxelization {
    assignment: PillarAssignment,
    features: FdvFeatures,
}

/// Loads a KITTI `.bin` cloud (4 little-endian f32 per point).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rvc_cloud_load_kitti(
    path: *const c_char,
    out: *mut *mut RvcCloud,
) -> RvcStatus {
    if path.is_null() || out.is_null() {
        return fail(RvcStatus::RvcNullArgument, "path and out must be non-null");
    }
    guarded("RvcCloud", || {
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(RvcStatus::RvcInvalidArgument, "path is not UTF-8"),
        };
        match load_kitti_bin(path) {
            Ok(cloud) => {
                unsafe { *out = Box::into_raw(Box::new(RvcCloud { inner: cloud })) };
                RvcStatus::RvcOk
            }
            Err(e) => fail(cloud_error_status(&e), e.to_string()),
        }
    })
}

/// Builds a single-batch cloud from `n_points` interleaved xyz triples.
///
/// # Safety
/// `xyz` must point to `3 * n_points` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rvc_cloud_from_xyz(
    xyz: *const f64,
    n_points: usize,
    out: *mut *mut RvcCloud,
) -> RvcStatus {
    if (xyz.is_null() && n_points > 0) || out.is_null() {
        return fail(RvcStatus::RvcNullArgument, "xyz and out must be non-null");
    }
    guarded("RvcCloud", || {
        let values = if n_points == 0 {
            &[][..]
        } else {
            unsafe { std::slice::from_raw_parts(xyz, n_points * 3) }
        };
        let points: Vec<Point> = values
            .chunks_exact(3)
            .map(|c| Point::new(c[0], c[1], c[2]))
            .collect();
        match PointCloud::single_batch(points) {
            Ok(cloud) => {
                unsafe { *out = Box::into_raw(Box::new(RvcCloud { inner: cloud })) };
                RvcStatus::RvcOk
            }
            Err(e) => fail(cloud_error_status(&e), e.to_string()),
        }
    })
}

/// Number of points in the cloud; 0 for a null handle.
///
/// # Safety
/// `cloud` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn rvc_cloud_len(cloud: *const RvcCloud) -> usize {
    if cloud.is_null() {
        return 0;
    }
    unsafe { &*cloud }.inner.len()
}

/// # Safety
/// `cloud` must be a handle from this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn rvc_cloud_free(cloud: *mut RvcCloud) {
    if !cloud.is_null() {
        drop(unsafe { Box::from_raw(cloud) });
    }
}

/// Creates a pillar grid over `[min, max)` with the given x/y cell sizes.
/// The extents must be integer multiples of the cell sizes.
///
/// # Safety
/// `min` and `max` must point to 3 doubles each; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rvc_grid_new_pillars(
    min: *const f64,
    max: *const f64,
    voxel_x: f64,
    voxel_y: f64,
    out: *mut *mut RvcGrid,
) -> RvcStatus {
    if min.is_null() || max.is_null() || out.is_null() {
        return fail(RvcStatus::RvcNullArgument, "min, max and out must be non-null");
    }
    guarded("RvcGrid", || {
        let min = unsafe { std::slice::from_raw_parts(min, 3) };
        let max = unsafe { std::slice::from_raw_parts(max, 3) };
        let range = match CloudRange::new([min[0], min[1], min[2]], [max[0], max[1], max[2]]) {
            Ok(r) => r,
            Err(e) => return fail(RvcStatus::RvcInvalidArgument, e.to_string()),
        };
        match GridConfig::pillars(range, voxel_x, voxel_y) {
            Ok(grid) => {
                unsafe { *out = Box::into_raw(Box::new(RvcGrid { inner: grid })) };
                RvcStatus::RvcOk
            }
            Err(e) => fail(fdv_error_status(&e), e.to_string()),
        }
    })
}

/// Writes the grid cell counts (x, y, z).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rvc_grid_size(
    grid: *const RvcGrid,
    nx: *mut usize,
    ny: *mut usize,
    nz: *mut usize,
) -> RvcStatus {
    if grid.is_null() || nx.is_null() || ny.is_null() || nz.is_null() {
        return fail(RvcStatus::RvcNullArgument, "all arguments must be non-null");
    }
    let size = unsafe { &*grid }.inner.grid_size();
    unsafe {
        *nx = size[0];
        *ny = size[1];
        *nz = size[2];
    }
    RvcStatus::RvcOk
}

/// # Safety
/// `grid` must be a handle from this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn rvc_grid_free(grid: *mut RvcGrid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

/// Assigns every in-range point to a pillar and computes the 9-channel
/// per-point features.
///
/// # Safety
/// `cloud` and `grid` must be live handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelize(
    cloud: *const RvcCloud,
    grid: *const RvcGrid,
    out: *mut *mut RvcVoxelization,
) -> RvcStatus {
    if cloud.is_null() || grid.is_null() || out.is_null() {
        return fail(
            RvcStatus::RvcNullArgument,
            "cloud, grid and out must be non-null",
        );
    }
    guarded("RvcVoxelization", || {
        let cloud = &unsafe { &*cloud }.inner;
        let grid = &unsafe { &*grid }.inner;
        let assignment = assign_pillars(cloud, grid);
        match fdv_features(cloud, &assignment, grid) {
            Ok(features) => {
                let handle = RvcVoxelization {
                    assignment,
                    features,
                };
                unsafe { *out = Box::into_raw(Box::new(handle)) };
                RvcStatus::RvcOk
            }
            Err(e) => fail(fdv_error_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `v` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelization_pillar_count(v: *const RvcVoxelization) -> usize {
    if v.is_null() {
        return 0;
    }
    unsafe { &*v }.assignment.pillar_count()
}

/// # Safety
/// `v` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelization_points_assigned(v: *const RvcVoxelization) -> usize {
    if v.is_null() {
        return 0;
    }
    unsafe { &*v }.assignment.points_assigned()
}

/// # Safety
/// `v` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelization_points_skipped(v: *const RvcVoxelization) -> usize {
    if v.is_null() {
        return 0;
    }
    unsafe { &*v }.assignment.points_skipped()
}

/// Number of feature rows (= points assigned).
///
/// # Safety
/// `v` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelization_feature_rows(v: *const RvcVoxelization) -> usize {
    if v.is_null() {
        return 0;
    }
    unsafe { &*v }.features.rows
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize, what: &str) -> RvcStatus {
    if buf.is_null() {
        return fail(RvcStatus::RvcNullArgument, format!("{what}: buf is null"));
    }
    if len < src.len() {
        return fail(
            RvcStatus::RvcBufferTooSmall,
            format!("{what}: need {} elements, buffer holds {len}", src.len()),
        );
    }
    unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    RvcStatus::RvcOk
}

/// Copies `pillar_count * 3` cell coordinates as (row, col, layer) triples.
///
/// # Safety
/// `v` must be a live handle; `buf` must hold at least `len` u32 values.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelization_pillar_coords(
    v: *const RvcVoxelization,
    buf: *mut u32,
    len: usize,
) -> RvcStatus {
    if v.is_null() {
        return fail(RvcStatus::RvcNullArgument, "voxelization handle is null");
    }
    let coords = unsafe { &*v }.assignment.pillar_coords();
    let flat: &[u32] =
        unsafe { std::slice::from_raw_parts(coords.as_ptr().cast(), coords.len() * 3) };
    unsafe { copy_out(flat, buf, len, "pillar_coords") }
}

/// Copies the per-pillar point counts.
///
/// # Safety
/// `v` must be a live handle; `buf` must hold at least `len` u32 values.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelization_occupancy(
    v: *const RvcVoxelization,
    buf: *mut u32,
    len: usize,
) -> RvcStatus {
    if v.is_null() {
        return fail(RvcStatus::RvcNullArgument, "voxelization handle is null");
    }
    let occupancy = unsafe { &*v }.assignment.occupancy();
    unsafe { copy_out(occupancy, buf, len, "occupancy") }
}

/// Copies the pillar ordinal of every feature row.
///
/// # Safety
/// `v` must be a live handle; `buf` must hold at least `len` u32 values.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelization_pillar_of_row(
    v: *const RvcVoxelization,
    buf: *mut u32,
    len: usize,
) -> RvcStatus {
    if v.is_null() {
        return fail(RvcStatus::RvcNullArgument, "voxelization handle is null");
    }
    let rows = &unsafe { &*v }.features.pillar_of_row;
    unsafe { copy_out(rows, buf, len, "pillar_of_row") }
}

/// Copies the feature matrix (`feature_rows * rvc_feature_channels()`
/// doubles, row-major).
///
/// # Safety
/// `v` must be a live handle; `buf` must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelization_features(
    v: *const RvcVoxelization,
    buf: *mut f64,
    len: usize,
) -> RvcStatus {
    if v.is_null() {
        return fail(RvcStatus::RvcNullArgument, "voxelization handle is null");
    }
    let data = &unsafe { &*v }.features.data;
    unsafe { copy_out(data, buf, len, "features") }
}

/// # Safety
/// `v` must be a handle from this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn rvc_voxelization_free(v: *mut RvcVoxelization) {
    if !v.is_null() {
        drop(unsafe { Box::from_raw(v) });
    }
}
