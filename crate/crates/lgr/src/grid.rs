//! Grid-cell coordinates and the direction math shared by the sensor model,
//! the planner, and the frontier bookkeeping.
//!
//! Directions are indexed 0..7; index `k` means a heading of `k * 45`
//! degrees, measured from the +x axis toward +y. Index 0 therefore steps
//! (+1, 0), index 2 steps (0, +1), and so on counter-clockwise in (x, y)
//! coordinates.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of sensing/heading directions. Fixed: the wedge geometry, the
/// prompt protocol, and the rank vectors all assume eight 45-degree sectors.
pub const NUM_DIRECTIONS: usize = 8;

/// Angular width of one sensing wedge, in degrees.
pub const FOV_DEGREES: f64 = 45.0;

/// Unit steps for direction indices 0..7.
pub const DIR_STEPS: [(i32, i32); NUM_DIRECTIONS] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// A grid cell coordinate. `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// The neighbor one step away in the given direction index.
    pub fn step(self, direction: u8) -> Self {
        let (dx, dy) = DIR_STEPS[direction as usize];
        Self::new(self.x + dx, self.y + dy)
    }

    /// Chebyshev (chessboard) distance to another cell.
    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    /// Euclidean distance between cell centers.
    pub fn euclidean(self, other: Cell) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        dx.hypot(dy)
    }

    /// Octile distance: the length of an optimal 8-connected path on an
    /// obstacle-free grid. Admissible as an A* heuristic.
    pub fn octile(self, other: Cell) -> f64 {
        let dx = (self.x - other.x).abs() as f64;
        let dy = (self.y - other.y).abs() as f64;
        let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
        hi + (std::f64::consts::SQRT_2 - 1.0) * lo
    }

    /// The four orthogonal neighbors.
    pub fn orthogonal_neighbors(self) -> [Cell; 4] {
        [
            Cell::new(self.x + 1, self.y),
            Cell::new(self.x - 1, self.y),
            Cell::new(self.x, self.y + 1),
            Cell::new(self.x, self.y - 1),
        ]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Direction index of the unit step `(dx, dy)`, if it is one.
pub fn direction_of_step(dx: i32, dy: i32) -> Option<u8> {
    DIR_STEPS
        .iter()
        .position(|&s| s == (dx, dy))
        .map(|i| i as u8)
}

/// The wedge a nonzero offset belongs to.
///
/// Wedge `k` is the half-open angular interval `[k*45 - 22.5, k*45 + 22.5)`
/// degrees, measured cell-center to cell-center, so every nonzero offset
/// belongs to exactly one wedge. Integer offsets can never lie exactly on a
/// wedge boundary (the boundary tangents are irrational), so the rounding
/// below is never asked to break a tie. Returns `None` for the zero offset.
pub fn direction_of_offset(dx: i32, dy: i32) -> Option<u8> {
    if dx == 0 && dy == 0 {
        return None;
    }
    let mut deg = (dy as f64).atan2(dx as f64).to_degrees();
    if deg < 0.0 {
        deg += 360.0;
    }
    Some((((deg / FOV_DEGREES).round() as i64).rem_euclid(8)) as u8)
}

/// Cells strictly between `a` and `b` along the segment joining their
/// centers: every cell whose open unit square the open segment passes
/// through, excluding both endpoints.
///
/// A segment that crosses a lattice corner exactly steps diagonally, touching
/// neither corner-adjacent side cell (the segment only meets their
/// boundaries). The resulting set is symmetric under reversal and under
/// 90-degree rotations of the grid.
pub fn cells_between(a: Cell, b: Cell) -> Vec<Cell> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let nx = dx.abs() as i64;
    let ny = dy.abs() as i64;
    let sx = dx.signum();
    let sy = dy.signum();

    let mut out = Vec::with_capacity((nx + ny) as usize);
    let (mut x, mut y) = (a.x, a.y);
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        // Compare the parameters of the next x- and y-boundary crossings:
        // (ix + 1/2) / nx versus (iy + 1/2) / ny, cross-multiplied.
        let cmp = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if cmp == 0 {
            x += sx;
            y += sy;
            ix += 1;
            iy += 1;
        } else if cmp < 0 {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        out.push(Cell::new(x, y));
    }
    out.pop(); // drop b itself
    out
}
