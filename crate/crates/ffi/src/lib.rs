//! C ABI surface over the core grid, validity, and shortest-path routines.
//!
//! Conventions:
//! - Grids and trajectories are opaque handles created and destroyed here;
//!   the caller must free every handle with the matching `_free` function.
//! - Fallible functions return a `GnStatus` code and write results through
//!   out-pointers, which are untouched on failure.
//! - All pointers must be non-null unless documented otherwise; null inputs
//!   yield `GN_STATUS_NULL_POINTER`.
//!
//! The matching header lives at `include/gridnav.h`.

use std::ffi::{c_char, CStr};
use std::ptr;

use gridnav::dataset::astar;
use gridnav::env::{path_length, segment_cells, validate, CellCoord, Trajectory};
use gridnav::encode::{parse_grid_text, to_grid_text};
use gridnav::OccupancyGrid;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    OutOfBounds = 4,
    NoPath = 5,
}

/// Opaque occupancy grid handle.
pub struct GnGrid(OccupancyGrid);

/// Opaque trajectory handle (a sequence of cell anchors).
pub struct GnTrajectory(Trajectory);

fn catch<F: FnOnce() -> GnStatus + std::panic::UnwindSafe>(f: F) -> GnStatus {
    std::panic::catch_unwind(f).unwrap_or(GnStatus::InvalidArgument)
}

/// Parses a grid from its text form ('0' free, '1' obstacle, one row per
/// line, no trailing newline). On success writes a new handle to `out`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gn_grid_parse(text: *const c_char, out: *mut *mut GnGrid) -> GnStatus {
    if text.is_null() || out.is_null() {
        return GnStatus::NullPointer;
    }
    let s = match CStr::from_ptr(text).to_str() {
        Ok(s) => s,
        Err(_) => return GnStatus::ParseError,
    };
    catch(move || match parse_grid_text(s) {
        Ok(grid) => {
            *out = Box::into_raw(Box::new(GnGrid(grid)));
            GnStatus::Ok
        }
        Err(_) => GnStatus::ParseError,
    })
}

/// Frees a grid handle. Null is a no-op.
///
/// # Safety
/// `grid` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gn_grid_free(grid: *mut GnGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Writes the grid dimensions through the out-pointers.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gn_grid_dims(
    grid: *const GnGrid,
    height: *mut usize,
    width: *mut usize,
) -> GnStatus {
    if grid.is_null() || height.is_null() || width.is_null() {
        return GnStatus::NullPointer;
    }
    *height = (*grid).0.height();
    *width = (*grid).0.width();
    GnStatus::Ok
}

/// Writes 1 to `out` when the cell is an obstacle, 0 when free.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gn_grid_is_obstacle(
    grid: *const GnGrid,
    row: usize,
    col: usize,
    out: *mut i32,
) -> GnStatus {
    if grid.is_null() || out.is_null() {
        return GnStatus::NullPointer;
    }
    let g = &(*grid).0;
    if row >= g.height() || col >= g.width() {
        return GnStatus::OutOfBounds;
    }
    *out = g.is_obstacle(CellCoord::new(row, col)) as i32;
    GnStatus::Ok
}

/// Serialises a grid back to its text form. The returned string must be
/// released with `gn_string_free`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gn_grid_to_text(
    grid: *const GnGrid,
    out: *mut *mut c_char,
) -> GnStatus {
    if grid.is_null() || out.is_null() {
        return GnStatus::NullPointer;
    }
    let text = to_grid_text(&(*grid).0);
    match std::ffi::CString::new(text) {
        Ok(c) => {
            *out = c.into_raw();
            GnStatus::Ok
        }
        Err(_) => GnStatus::InvalidArgument,
    }
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(std::ffi::CString::from_raw(s));
    }
}

/// Builds a trajectory from `len` (row, col) anchor pairs laid out as
/// `rows[i], cols[i]`.
///
/// # Safety
/// `rows` and `cols` must point to at least `len` elements.
#[no_mangle]
pub unsafe extern "C" fn gn_trajectory_new(
    rows: *const usize,
    cols: *const usize,
    len: usize,
    out: *mut *mut GnTrajectory,
) -> GnStatus {
    if rows.is_null() || cols.is_null() || out.is_null() {
        return GnStatus::NullPointer;
    }
    if len == 0 {
        return GnStatus::InvalidArgument;
    }
    let rows = std::slice::from_raw_parts(rows, len);
    let cols = std::slice::from_raw_parts(cols, len);
    let anchors = rows
        .iter()
        .zip(cols)
        .map(|(&r, &c)| CellCoord::new(r, c))
        .collect();
    *out = Box::into_raw(Box::new(GnTrajectory(Trajectory { anchors })));
    GnStatus::Ok
}

/// Frees a trajectory handle. Null is a no-op.
///
/// # Safety
/// `traj` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gn_trajectory_free(traj: *mut GnTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Total Euclidean length of the trajectory polyline, in cells.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gn_trajectory_length(
    traj: *const GnTrajectory,
    out: *mut f64,
) -> GnStatus {
    if traj.is_null() || out.is_null() {
        return GnStatus::NullPointer;
    }
    *out = path_length(&(*traj).0);
    GnStatus::Ok
}

/// Validates a trajectory against the grid: writes 1 when every segment
/// stays on free cells, otherwise 0 plus the first blocking cell.
/// `blocking_row`/`blocking_col` may be null when not needed.
///
/// # Safety
/// `grid`, `traj`, `valid` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gn_validate(
    grid: *const GnGrid,
    traj: *const GnTrajectory,
    valid: *mut i32,
    blocking_row: *mut usize,
    blocking_col: *mut usize,
) -> GnStatus {
    if grid.is_null() || traj.is_null() || valid.is_null() {
        return GnStatus::NullPointer;
    }
    let g = &(*grid).0;
    let t = &(*traj).0;
    if t.anchors
        .iter()
        .any(|a| a.row >= g.height() || a.col >= g.width())
    {
        return GnStatus::OutOfBounds;
    }
    match validate(t, g) {
        Ok(report) => {
            *valid = report.valid as i32;
            if let Some(v) = report.first_violation {
                if !blocking_row.is_null() {
                    *blocking_row = v.blocking_cell.row;
                }
                if !blocking_col.is_null() {
                    *blocking_col = v.blocking_cell.col;
                }
            }
            GnStatus::Ok
        }
        Err(_) => GnStatus::InvalidArgument,
    }
}

/// Number of grid cells touched by the straight segment between two cell
/// centers. Cell identities can be retrieved through `gn_grid_is_obstacle`
/// by the caller; this entry point reports the count only.
///
/// # Safety
/// All pointers must be valid and coordinates in bounds.
#[no_mangle]
pub unsafe extern "C" fn gn_segment_cell_count(
    grid: *const GnGrid,
    r0: usize,
    c0: usize,
    r1: usize,
    c1: usize,
    out: *mut usize,
) -> GnStatus {
    if grid.is_null() || out.is_null() {
        return GnStatus::NullPointer;
    }
    let g = &(*grid).0;
    if r0 >= g.height() || r1 >= g.height() || c0 >= g.width() || c1 >= g.width() {
        return GnStatus::OutOfBounds;
    }
    match segment_cells(
        g,
        CellCoord::new(r0, c0).center(),
        CellCoord::new(r1, c1).center(),
    ) {
        Ok(cells) => {
            *out = cells.len();
            GnStatus::Ok
        }
        Err(_) => GnStatus::InvalidArgument,
    }
}

/// Shortest-path cost between two free cells under 8-connected movement
/// without corner cutting. Returns `GN_STATUS_NO_PATH` when unreachable.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gn_astar_cost(
    grid: *const GnGrid,
    start_row: usize,
    start_col: usize,
    goal_row: usize,
    goal_col: usize,
    out_cost: *mut f64,
) -> GnStatus {
    if grid.is_null() || out_cost.is_null() {
        return GnStatus::NullPointer;
    }
    let g = &(*grid).0;
    if start_row >= g.height()
        || goal_row >= g.height()
        || start_col >= g.width()
        || goal_col >= g.width()
    {
        return GnStatus::OutOfBounds;
    }
    let start = CellCoord::new(start_row, start_col);
    let goal = CellCoord::new(goal_row, goal_col);
    if g.is_obstacle(start) || g.is_obstacle(goal) {
        return GnStatus::InvalidArgument;
    }
    match astar(g, start, goal) {
        Ok((_, cost)) => {
            *out_cost = cost;
            GnStatus::Ok
        }
        Err(_) => GnStatus::NoPath,
    }
}

/// Library version as a static string; never freed by the caller.
#[no_mangle]
pub extern "C" fn gn_version() -> *const c_char {
    static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();
    VERSION.as_ptr() as *const c_char
}

// Keeps `ptr` linked in even though only tests use it directly.
#[allow(dead_code)]
const _NULL: *const GnGrid = ptr::null();

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    unsafe fn parse(text: &str) -> *mut GnGrid {
        let c = CString::new(text).unwrap();
        let mut grid: *mut GnGrid = ptr::null_mut();
        assert_eq!(gn_grid_parse(c.as_ptr(), &mut grid), GnStatus::Ok);
        grid
    }

    #[test]
    fn grid_roundtrip_through_the_c_abi() {
        unsafe {
            let grid = parse("001\n000");
            let (mut h, mut w) = (0usize, 0usize);
            assert_eq!(gn_grid_dims(grid, &mut h, &mut w), GnStatus::Ok);
            assert_eq!((h, w), (2, 3));
            let mut obst = -1;
            assert_eq!(gn_grid_is_obstacle(grid, 0, 2, &mut obst), GnStatus::Ok);
            assert_eq!(obst, 1);
            assert_eq!(gn_grid_is_obstacle(grid, 1, 1, &mut obst), GnStatus::Ok);
            assert_eq!(obst, 0);
            assert_eq!(gn_grid_is_obstacle(grid, 5, 0, &mut obst), GnStatus::OutOfBounds);
            let mut text: *mut c_char = ptr::null_mut();
            assert_eq!(gn_grid_to_text(grid, &mut text), GnStatus::Ok);
            assert_eq!(CStr::from_ptr(text).to_str().unwrap(), "001\n000");
            gn_string_free(text);
            gn_grid_free(grid);
        }
    }

    #[test]
    fn null_inputs_are_rejected_not_crashed() {
        unsafe {
            let mut grid: *mut GnGrid = ptr::null_mut();
            assert_eq!(gn_grid_parse(ptr::null(), &mut grid), GnStatus::NullPointer);
            let c = CString::new("..").unwrap();
            assert_eq!(gn_grid_parse(c.as_ptr(), ptr::null_mut()), GnStatus::NullPointer);
            let mut cost = 0.0;
            assert_eq!(
                gn_astar_cost(ptr::null(), 0, 0, 0, 0, &mut cost),
                GnStatus::NullPointer
            );
            gn_grid_free(ptr::null_mut());
            gn_trajectory_free(ptr::null_mut());
            gn_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn parse_errors_map_to_status_codes() {
        unsafe {
            let c = CString::new("00\n0").unwrap(); // ragged rows
            let mut grid: *mut GnGrid = ptr::null_mut();
            assert_eq!(gn_grid_parse(c.as_ptr(), &mut grid), GnStatus::ParseError);
            assert!(grid.is_null());
        }
    }

    #[test]
    fn astar_cost_matches_core() {
        unsafe {
            let grid = parse("0000\n0110\n0000");
            let mut cost = 0.0;
            assert_eq!(gn_astar_cost(grid, 0, 0, 2, 3, &mut cost), GnStatus::Ok);
            let core = OccupancyGrid::new(
                3,
                4,
                vec![0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0],
            )
            .unwrap();
            let (_, expect) =
                astar(&core, CellCoord::new(0, 0), CellCoord::new(2, 3)).unwrap();
            assert!((cost - expect).abs() < 1e-12);
            gn_grid_free(grid);
        }
    }

    #[test]
    fn no_path_is_a_distinct_status() {
        unsafe {
            let grid = parse("010\n010\n010");
            let mut cost = 0.0;
            assert_eq!(gn_astar_cost(grid, 0, 0, 0, 2, &mut cost), GnStatus::NoPath);
            // Into the wall: invalid argument, not no-path.
            assert_eq!(gn_astar_cost(grid, 0, 0, 0, 1, &mut cost), GnStatus::InvalidArgument);
            gn_grid_free(grid);
        }
    }

    #[test]
    fn validate_reports_blocking_cell() {
        unsafe {
            let grid = parse("000\n010\n000");
            let rows = [1usize, 1];
            let cols = [0usize, 2];
            let mut traj: *mut GnTrajectory = ptr::null_mut();
            assert_eq!(
                gn_trajectory_new(rows.as_ptr(), cols.as_ptr(), 2, &mut traj),
                GnStatus::Ok
            );
            let mut valid = -1;
            let (mut br, mut bc) = (usize::MAX, usize::MAX);
            assert_eq!(gn_validate(grid, traj, &mut valid, &mut br, &mut bc), GnStatus::Ok);
            assert_eq!(valid, 0);
            assert_eq!((br, bc), (1, 1));
            let mut len = 0.0;
            assert_eq!(gn_trajectory_length(traj, &mut len), GnStatus::Ok);
            assert!((len - 2.0).abs() < 1e-12);
            gn_trajectory_free(traj);
            gn_grid_free(grid);
        }
    }

    #[test]
    fn segment_cell_count_straight_line() {
        unsafe {
            let grid = parse("0000\n0000");
            let mut n = 0usize;
            assert_eq!(gn_segment_cell_count(grid, 0, 0, 0, 3, &mut n), GnStatus::Ok);
            assert_eq!(n, 4);
            gn_grid_free(grid);
        }
    }

    #[test]
    fn version_is_a_c_string() {
        let v = gn_version();
        assert!(!v.is_null());
        let s = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
        assert_eq!(s, env!("CARGO_PKG_VERSION"));
    }
}
