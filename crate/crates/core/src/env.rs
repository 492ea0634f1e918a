//! Occupancy-grid environments and continuous trajectory semantics.
//!
//! A trajectory is a sparse list of anchor cells; its continuous realization is
//! the polyline through the anchor cell centers. A segment is blocked when it
//! touches any obstacle cell, with exact lattice-corner crossings treated
//! conservatively (all four incident cells count as touched).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("grid must be at least 2x2, got {height}x{width}")]
    GridTooSmall { height: usize, width: usize },
    #[error("cell buffer has {got} entries, expected {expected}")]
    CellCountMismatch { got: usize, expected: usize },
    #[error("cell value {value} is not 0 or 1")]
    BadCellValue { value: u8 },
    #[error("position ({x}, {y}) is out of bounds for a {height}x{width} grid")]
    OutOfBounds { x: f64, y: f64, height: usize, width: usize },
    #[error("position ({x}, {y}) is not finite")]
    NonFinite { x: f64, y: f64 },
    #[error("trajectory has no anchors")]
    EmptyTrajectory,
    #[error("anchor ({row}, {col}) is out of bounds for a {height}x{width} grid")]
    AnchorOutOfBounds { row: usize, col: usize, height: usize, width: usize },
}

/// Binary H×W occupancy matrix; 1 = obstacle, 0 = free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    height: usize,
    width: usize,
    cells: Vec<u8>,
}

impl OccupancyGrid {
    pub fn new(height: usize, width: usize, cells: Vec<u8>) -> Result<Self, EnvError> {
        if height < 2 || width < 2 {
            return Err(EnvError::GridTooSmall { height, width });
        }
        if cells.len() != height * width {
            return Err(EnvError::CellCountMismatch {
                got: cells.len(),
                expected: height * width,
            });
        }
        if let Some(&value) = cells.iter().find(|&&v| v > 1) {
            return Err(EnvError::BadCellValue { value });
        }
        Ok(Self { height, width, cells })
    }

    /// All-free grid.
    pub fn empty(height: usize, width: usize) -> Result<Self, EnvError> {
        Self::new(height, width, vec![0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn in_bounds(&self, c: CellCoord) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn is_obstacle(&self, c: CellCoord) -> bool {
        self.cells[c.row * self.width + c.col] == 1
    }

    pub fn is_free(&self, c: CellCoord) -> bool {
        !self.is_obstacle(c)
    }

    pub fn set(&mut self, c: CellCoord, value: u8) {
        assert!(value <= 1 && self.in_bounds(c));
        self.cells[c.row * self.width + c.col] = value;
    }

    pub fn free_cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        (0..self.height).flat_map(move |row| {
            (0..self.width)
                .map(move |col| CellCoord { row, col })
                .filter(move |&c| self.is_free(c))
        })
    }

    pub fn obstacle_cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        (0..self.height).flat_map(move |row| {
            (0..self.width)
                .map(move |col| CellCoord { row, col })
                .filter(move |&c| self.is_obstacle(c))
        })
    }

    fn contains_position(&self, p: Position) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

/// Integer grid cell, (row, col).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCoord {
    pub row: usize,
    pub col: usize,
}

impl CellCoord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Continuous center of this cell: x along columns, y along rows.
    pub fn center(self) -> Position {
        Position {
            x: self.col as f64 + 0.5,
            y: self.row as f64 + 0.5,
        }
    }
}

/// Continuous point in cell units. The containing cell is (floor(y), floor(x)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn cell(self) -> CellCoord {
        CellCoord {
            row: self.y.floor() as usize,
            col: self.x.floor() as usize,
        }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Ordered anchor cells; realized as the polyline through their centers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub anchors: Vec<CellCoord>,
}

impl Trajectory {
    pub fn new(anchors: Vec<CellCoord>) -> Result<Self, EnvError> {
        if anchors.is_empty() {
            return Err(EnvError::EmptyTrajectory);
        }
        Ok(Self { anchors })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn first(&self) -> CellCoord {
        self.anchors[0]
    }

    pub fn last(&self) -> CellCoord {
        *self.anchors.last().unwrap()
    }
}

/// Outcome of checking a trajectory against a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub valid: bool,
    pub first_violation: Option<Violation>,
}

/// Earliest blocked segment of an invalid trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Index of the blocked segment (segment i joins anchors i and i+1).
    pub segment_index: usize,
    /// First obstacle cell touched, in traversal order.
    pub blocking_cell: CellCoord,
    /// Point where the segment first touches the blocking cell's boundary.
    pub stop: Position,
}

/// Euclidean distance between two cell centers.
pub fn euclidean(a: CellCoord, b: CellCoord) -> f64 {
    a.center().distance(b.center())
}

/// Total polyline length through the anchor centers; 0 for a single anchor.
pub fn path_length(traj: &Trajectory) -> f64 {
    traj.anchors
        .windows(2)
        .map(|w| euclidean(w[0], w[1]))
        .sum()
}

/// All cells touched by the segment from `p` to `q`, ordered by first touch.
///
/// Cells are the floor-containment cells of the swept point; an exact lattice
/// corner crossing additionally contributes all four incident cells.
pub fn segment_cells(
    env: &OccupancyGrid,
    p: Position,
    q: Position,
) -> Result<Vec<CellCoord>, EnvError> {
    for pt in [p, q] {
        if !pt.x.is_finite() || !pt.y.is_finite() {
            return Err(EnvError::NonFinite { x: pt.x, y: pt.y });
        }
        if !env.contains_position(pt) {
            return Err(EnvError::OutOfBounds {
                x: pt.x,
                y: pt.y,
                height: env.height,
                width: env.width,
            });
        }
    }

    let mut out: Vec<CellCoord> = Vec::new();
    let push = |c: CellCoord, out: &mut Vec<CellCoord>| {
        if c.row < env.height && c.col < env.width && !out.contains(&c) {
            out.push(c);
        }
    };
    // All in-bounds cells incident to lattice point (x, y).
    let push_corner = |x: i64, y: i64, out: &mut Vec<CellCoord>| {
        for dr in [-1i64, 0] {
            for dc in [-1i64, 0] {
                let (row, col) = (y + dr, x + dc);
                if row >= 0 && col >= 0 {
                    let c = CellCoord {
                        row: row as usize,
                        col: col as usize,
                    };
                    if c.row < env.height && c.col < env.width && !out.contains(&c) {
                        out.push(c);
                    }
                }
            }
        }
    };

    let (dx, dy) = (q.x - p.x, q.y - p.y);

    // Endpoint exactly on a lattice corner touches all four incident cells.
    let endpoint_corner = |pt: Position, out: &mut Vec<CellCoord>| {
        if pt.x.fract() == 0.0 && pt.y.fract() == 0.0 {
            push_corner(pt.x as i64, pt.y as i64, out);
        }
    };

    push(p.cell(), &mut out);
    endpoint_corner(p, &mut out);

    if dx == 0.0 && dy == 0.0 {
        return Ok(out);
    }

    // Boundary crossings, as (t, lattice coordinate, axis). Axis 0 = vertical
    // line x = k, axis 1 = horizontal line y = k.
    let mut crossings: Vec<(f64, i64, u8)> = Vec::new();
    let collect = |a: f64, b: f64, d: f64, axis: u8, crossings: &mut Vec<(f64, i64, u8)>| {
        if d == 0.0 {
            return;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut k = lo.floor() as i64 + 1;
        while (k as f64) < hi {
            let t = (k as f64 - a) / d;
            if t > 0.0 && t < 1.0 {
                crossings.push((t, k, axis));
            }
            k += 1;
        }
    };
    collect(p.x, q.x, dx, 0, &mut crossings);
    collect(p.y, q.y, dy, 1, &mut crossings);
    crossings.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.2.cmp(&b.2)));

    let point_at = |t: f64| Position {
        x: p.x + t * dx,
        y: p.y + t * dy,
    };

    let mut i = 0;
    while i < crossings.len() {
        let t = crossings[i].0;
        // Group crossings sharing an identical parameter: an x-line and a
        // y-line crossed at the same t is an exact corner hit.
        let mut j = i;
        let (mut corner_x, mut corner_y) = (None, None);
        while j < crossings.len() && crossings[j].0 == t {
            match crossings[j].2 {
                0 => corner_x = Some(crossings[j].1),
                _ => corner_y = Some(crossings[j].1),
            }
            j += 1;
        }
        if let (Some(cx), Some(cy)) = (corner_x, corner_y) {
            push_corner(cx, cy, &mut out);
        }
        // Cell occupied on the interval following this crossing.
        let t_next = if j < crossings.len() { crossings[j].0 } else { 1.0 };
        push(point_at((t + t_next) / 2.0).cell(), &mut out);
        i = j;
    }

    push(q.cell(), &mut out);
    endpoint_corner(q, &mut out);
    Ok(out)
}

/// Parameter at which the segment first touches the closed unit square of `cell`.
fn entry_t(p: Position, q: Position, cell: CellCoord) -> f64 {
    let (dx, dy) = (q.x - p.x, q.y - p.y);
    let axis_entry = |p0: f64, d: f64, lo: f64, hi: f64| -> (f64, f64) {
        if d == 0.0 {
            // Containment on this axis is constant; treat as unconstrained.
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            let (t0, t1) = ((lo - p0) / d, (hi - p0) / d);
            if t0 <= t1 {
                (t0, t1)
            } else {
                (t1, t0)
            }
        }
    };
    let (tx0, _tx1) = axis_entry(p.x, dx, cell.col as f64, cell.col as f64 + 1.0);
    let (ty0, _ty1) = axis_entry(p.y, dy, cell.row as f64, cell.row as f64 + 1.0);
    tx0.max(ty0).clamp(0.0, 1.0)
}

/// Checks every consecutive anchor pair; reports the earliest blocked segment.
pub fn validate(traj: &Trajectory, env: &OccupancyGrid) -> Result<ValidityReport, EnvError> {
    if traj.anchors.is_empty() {
        return Err(EnvError::EmptyTrajectory);
    }
    for &a in &traj.anchors {
        if !env.in_bounds(a) {
            return Err(EnvError::AnchorOutOfBounds {
                row: a.row,
                col: a.col,
                height: env.height,
                width: env.width,
            });
        }
    }
    let pairs: Vec<(Position, Position)> = if traj.anchors.len() == 1 {
        vec![(traj.anchors[0].center(), traj.anchors[0].center())]
    } else {
        traj.anchors
            .windows(2)
            .map(|w| (w[0].center(), w[1].center()))
            .collect()
    };
    for (segment_index, &(a, b)) in pairs.iter().enumerate() {
        let cells = segment_cells(env, a, b)?;
        if let Some(&blocking_cell) = cells.iter().find(|&&c| env.is_obstacle(c)) {
            let stop = if blocking_cell == a.cell() {
                a
            } else {
                let t = entry_t(a, b, blocking_cell);
                Position {
                    x: a.x + t * (b.x - a.x),
                    y: a.y + t * (b.y - a.y),
                }
            };
            return Ok(ValidityReport {
                valid: false,
                first_violation: Some(Violation {
                    segment_index,
                    blocking_cell,
                    stop,
                }),
            });
        }
    }
    Ok(ValidityReport {
        valid: true,
        first_violation: None,
    })
}
