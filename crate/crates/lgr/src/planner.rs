//! A* shortest paths on the belief grid and bumper-aware path execution.
//!
//! Motion is 8-connected with unit orthogonal steps and sqrt(2) diagonals; a
//! diagonal step is allowed only when both adjacent orthogonal cells are
//! traversable (no corner cutting). Planning is deterministic: heap ties
//! break on g-value and then cell order, so equal-cost instances always
//! yield the same path.

use crate::grid::{direction_of_step, Cell};
use crate::mapping::{BeliefMap, CellState};
use crate::world::{GroundTruthMap, Pose, Terrain};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("start cell {0} is not known free")]
    StartNotFree(Cell),
    #[error("path does not start at the current pose cell {0}")]
    PathStartMismatch(Cell),
    #[error("path cells {0} and {1} are not 8-adjacent")]
    PathNotAdjacent(Cell, Cell),
}

/// Which cells the planner may traverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    /// Only cells known to be free. Used for ground-truth shortest paths.
    KnownFreeOnly,
    /// Free or unknown cells. The exploration default: frontier goals border
    /// unknown space, and bumps while crossing it trigger replanning.
    OptimisticUnknown,
}

/// An 8-connected path from start to goal inclusive, with its octile length.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<Cell>,
    pub length: f64,
}

/// A blocked step reported by the bumper: the robot stopped just before
/// entering an occupied cell.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BumpEvent {
    pub blocked_cell: Cell,
    pub pose_before: Pose,
}

fn traversable(belief: &BeliefMap, cell: Cell, mode: PlanMode) -> bool {
    matches!(
        (belief.state(cell), mode),
        (CellState::Free, _) | (CellState::Unknown, PlanMode::OptimisticUnknown)
    )
}

#[derive(Debug, PartialEq)]
struct HeapNode {
    f: f64,
    g: f64,
    cell: Cell,
}

impl Eq for HeapNode {}

impl Ord for HeapNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f; prefer larger g (deeper nodes) on ties, then cell
        // order, so expansion order is deterministic.
        other
            .f
            .partial_cmp(&self.f)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.g.partial_cmp(&other.g).unwrap_or(Ordering::Equal))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Neighbors reachable in one step from `cell`, with step costs. Diagonal
/// moves require both flanking orthogonal cells to be traversable.
fn neighbors(belief: &BeliefMap, cell: Cell, mode: PlanMode) -> Vec<(Cell, f64)> {
    let mut out = Vec::with_capacity(8);
    for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        let n = Cell::new(cell.x + dx, cell.y + dy);
        if traversable(belief, n, mode) {
            out.push((n, 1.0));
        }
    }
    for (dx, dy) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        let n = Cell::new(cell.x + dx, cell.y + dy);
        let side_a = Cell::new(cell.x + dx, cell.y);
        let side_b = Cell::new(cell.x, cell.y + dy);
        if traversable(belief, n, mode)
            && traversable(belief, side_a, mode)
            && traversable(belief, side_b, mode)
        {
            out.push((n, SQRT_2));
        }
    }
    out
}

/// A* from `start` to `goal` under the mode's traversability. Returns
/// `None` when the goal is unreachable. The start must be known free.
pub fn astar(
    belief: &BeliefMap,
    start: Cell,
    goal: Cell,
    mode: PlanMode,
) -> Result<Option<Path>, PlanError> {
    if belief.state(start) != CellState::Free {
        return Err(PlanError::StartNotFree(start));
    }
    if start == goal {
        return Ok(Some(Path {
            cells: vec![start],
            length: 0.0,
        }));
    }
    if !belief.in_bounds(goal) || !traversable(belief, goal, mode) {
        return Ok(None);
    }

    let w = belief.width() as usize;
    let n = w * belief.height() as usize;
    let idx = |c: Cell| (c.y as usize) * w + (c.x as usize);
    let mut g = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<Cell>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();

    g[idx(start)] = 0.0;
    heap.push(HeapNode {
        f: start.octile(goal),
        g: 0.0,
        cell: start,
    });

    while let Some(node) = heap.pop() {
        let i = idx(node.cell);
        if closed[i] {
            continue;
        }
        closed[i] = true;
        if node.cell == goal {
            let mut cells = vec![goal];
            let mut cur = goal;
            while let Some(p) = parent[idx(cur)] {
                cells.push(p);
                cur = p;
            }
            cells.reverse();
            return Ok(Some(Path {
                cells,
                length: node.g,
            }));
        }
        for (next, cost) in neighbors(belief, node.cell, mode) {
            let j = idx(next);
            if closed[j] {
                continue;
            }
            let tentative = node.g + cost;
            if tentative < g[j] {
                g[j] = tentative;
                parent[j] = Some(node.cell);
                heap.push(HeapNode {
                    f: tentative + next.octile(goal),
                    g: tentative,
                    cell: next,
                });
            }
        }
    }
    Ok(None)
}

/// Dijkstra from `start` to the nearest cell satisfying `is_goal`. Returns
/// the goal cell and its distance, or `None` if no goal is reachable.
pub fn shortest_path_to_set(
    belief: &BeliefMap,
    start: Cell,
    is_goal: impl Fn(Cell) -> bool,
    mode: PlanMode,
) -> Result<Option<(Cell, f64)>, PlanError> {
    if belief.state(start) != CellState::Free {
        return Err(PlanError::StartNotFree(start));
    }
    if is_goal(start) {
        return Ok(Some((start, 0.0)));
    }
    let w = belief.width() as usize;
    let n = w * belief.height() as usize;
    let idx = |c: Cell| (c.y as usize) * w + (c.x as usize);
    let mut g = vec![f64::INFINITY; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    g[idx(start)] = 0.0;
    heap.push(HeapNode {
        f: 0.0,
        g: 0.0,
        cell: start,
    });
    while let Some(node) = heap.pop() {
        let i = idx(node.cell);
        if closed[i] {
            continue;
        }
        closed[i] = true;
        if is_goal(node.cell) {
            return Ok(Some((node.cell, node.g)));
        }
        for (next, cost) in neighbors(belief, node.cell, mode) {
            let j = idx(next);
            if closed[j] {
                continue;
            }
            let tentative = node.g + cost;
            if tentative < g[j] {
                g[j] = tentative;
                heap.push(HeapNode {
                    f: tentative,
                    g: tentative,
                    cell: next,
                });
            }
        }
    }
    Ok(None)
}

/// Walk a planned path against the ground truth.
///
/// The robot advances cell by cell, accruing octile length and turning its
/// heading along each step. If the next cell is occupied in ground truth it
/// stops before entering and reports a [`BumpEvent`]; the caller marks the
/// cell occupied in its belief and replans.
pub fn execute_path(
    map: &GroundTruthMap,
    pose: Pose,
    path: &Path,
) -> Result<(Pose, f64, Option<BumpEvent>), PlanError> {
    let Some(&first) = path.cells.first() else {
        return Ok((pose, 0.0, None));
    };
    if first != pose.cell {
        return Err(PlanError::PathStartMismatch(pose.cell));
    }

    let mut pose = pose;
    let mut traveled = 0.0;
    for &next in &path.cells[1..] {
        let dx = next.x - pose.cell.x;
        let dy = next.y - pose.cell.y;
        let Some(direction) = direction_of_step(dx, dy) else {
            return Err(PlanError::PathNotAdjacent(pose.cell, next));
        };
        if !map.in_bounds(next) || map.terrain(next) == Terrain::Occupied {
            return Ok((
                pose,
                traveled,
                Some(BumpEvent {
                    blocked_cell: next,
                    pose_before: pose,
                }),
            ));
        }
        traveled += if dx != 0 && dy != 0 { SQRT_2 } else { 1.0 };
        pose = Pose::new(next, direction);
    }
    Ok((pose, traveled, None))
}
