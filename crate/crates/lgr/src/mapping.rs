//! The robot's belief about the world: a three-state occupancy grid plus the
//! dynamically managed frontier list.
//!
//! Sensing is idealized, so integration is exact: a cell, once observed, is
//! known for good, and a contradicting observation signals a sensor-model bug
//! rather than noise.

use crate::grid::Cell;
use crate::world::{Terrain, ViewObservation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type FrontierId = u64;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("observation at {cell} says {observed:?} but belief already holds {known:?}")]
    ObservationConflict {
        cell: Cell,
        known: Terrain,
        observed: Terrain,
    },
    #[error("cell {0} is out of bounds")]
    OutOfBounds(Cell),
    #[error("belief text grid is malformed: {0}")]
    MalformedText(String),
}

/// Belief state of a single cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// Three-state occupancy grid. Knowledge is monotone: cells move from
/// `Unknown` to `Free`/`Occupied` and never back.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    width: u32,
    height: u32,
    cells: Vec<CellState>,
}

impl BeliefMap {
    pub fn new_unknown(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            cells: vec![CellState::Unknown; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && (cell.x as u32) < self.width && (cell.y as u32) < self.height
    }

    fn index(&self, cell: Cell) -> usize {
        (cell.y as usize) * (self.width as usize) + (cell.x as usize)
    }

    pub fn state(&self, cell: Cell) -> CellState {
        if !self.in_bounds(cell) {
            return CellState::Occupied; // outside the map is never traversable
        }
        self.cells[self.index(cell)]
    }

    pub fn unknown_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|s| **s == CellState::Unknown)
            .count()
    }

    /// Record one observed cell. Idempotent for repeats; errors on
    /// contradiction.
    pub fn observe(&mut self, cell: Cell, observed: Terrain) -> Result<(), MapError> {
        if !self.in_bounds(cell) {
            return Err(MapError::OutOfBounds(cell));
        }
        let new = match observed {
            Terrain::Free => CellState::Free,
            Terrain::Occupied => CellState::Occupied,
        };
        let i = self.index(cell);
        match self.cells[i] {
            CellState::Unknown => {
                self.cells[i] = new;
                Ok(())
            }
            known if known == new => Ok(()),
            known => Err(MapError::ObservationConflict {
                cell,
                known: match known {
                    CellState::Free => Terrain::Free,
                    _ => Terrain::Occupied,
                },
                observed,
            }),
        }
    }

    /// Fold one view into the belief. Returns how many cells became known.
    pub fn integrate_observation(&mut self, view: &ViewObservation) -> Result<usize, MapError> {
        let mut newly_known = 0;
        for &(cell, terrain) in &view.visible_cells {
            if self.state(cell) == CellState::Unknown {
                newly_known += 1;
            }
            self.observe(cell, terrain)?;
        }
        Ok(newly_known)
    }

    /// Row-major text rows: `?` unknown, `.` free, `#` occupied.
    pub fn to_text_rows(&self) -> Vec<String> {
        (0..self.height as i32)
            .map(|y| {
                (0..self.width as i32)
                    .map(|x| match self.state(Cell::new(x, y)) {
                        CellState::Unknown => '?',
                        CellState::Free => '.',
                        CellState::Occupied => '#',
                    })
                    .collect()
            })
            .collect()
    }

    pub fn from_text_rows(rows: &[&str]) -> Result<Self, MapError> {
        let height = rows.len() as u32;
        let width = rows.first().map(|r| r.chars().count()).unwrap_or(0) as u32;
        let mut cells = Vec::with_capacity((width as usize) * (height as usize));
        for row in rows {
            if row.chars().count() as u32 != width {
                return Err(MapError::MalformedText("ragged rows".into()));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '?' => CellState::Unknown,
                    '.' => CellState::Free,
                    '#' => CellState::Occupied,
                    other => return Err(MapError::MalformedText(format!("unexpected '{other}'"))),
                });
            }
        }
        Ok(Self {
            width,
            height,
            cells,
        })
    }
}

/// The frontier predicate: a known-free cell with at least one 4-adjacent
/// unknown cell. Free cells are used (rather than the unknown side) so the
/// subgoal handed to the planner is always traversable.
pub fn is_frontier(belief: &BeliefMap, cell: Cell) -> bool {
    belief.state(cell) == CellState::Free
        && cell
            .orthogonal_neighbors()
            .iter()
            .any(|n| belief.in_bounds(*n) && belief.state(*n) == CellState::Unknown)
}

/// All frontier cells of the belief, in row-major order.
pub fn detect_frontiers(belief: &BeliefMap) -> Vec<Cell> {
    let mut out = Vec::new();
    for y in 0..belief.height() as i32 {
        for x in 0..belief.width() as i32 {
            let c = Cell::new(x, y);
            if is_frontier(belief, c) {
                out.push(c);
            }
        }
    }
    out
}

/// One tracked frontier cell with its accumulated reciprocal-rank score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub id: FrontierId,
    pub cell: Cell,
    pub direction_at_discovery: u8,
    pub viewpoint_at_discovery: Cell,
    /// Sum over queries of weight/rank contributions; survives
    /// re-observation, discarded permanently on removal.
    pub cumulative_score: f64,
    pub observation_count: u32,
    /// Euclidean distance from the most recent viewpoint.
    pub last_distance: f64,
}

/// The dynamic frontier list: unique cells, unique ids, scores that persist
/// while an entry stays a frontier.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrontierList {
    entries: Vec<FrontierEntry>,
    next_id: FrontierId,
}

impl FrontierList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[FrontierEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: FrontierId) -> Option<&FrontierEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn remove(&mut self, id: FrontierId) -> Option<FrontierEntry> {
        let i = self.entries.iter().position(|e| e.id == id)?;
        Some(self.entries.remove(i))
    }

    /// Add `delta` to the cumulative score of the given entry.
    pub fn add_score(&mut self, id: FrontierId, delta: f64) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.id == id) {
            e.cumulative_score += delta;
        }
    }

    pub fn id_at_cell(&self, cell: Cell) -> Option<FrontierId> {
        self.entries.iter().find(|e| e.cell == cell).map(|e| e.id)
    }
}

/// Reconcile the list with the current belief and the latest scan.
///
/// Entries whose cells no longer satisfy the frontier predicate are dropped
/// (their scores with them). Cells from `newly_visible` that are not yet
/// listed are appended with a zero score; re-offered cells keep their entry
/// and id and bump their observation count. Every surviving entry's
/// `last_distance` is refreshed to the Euclidean distance from `viewpoint`.
pub fn update_frontier_list(
    list: &mut FrontierList,
    belief: &BeliefMap,
    newly_visible: &[(Cell, u8)],
    viewpoint: Cell,
) {
    debug_assert!(
        newly_visible.iter().all(|(c, _)| is_frontier(belief, *c)),
        "offered cells must satisfy the frontier predicate"
    );
    list.entries.retain(|e| is_frontier(belief, e.cell));

    let mut offered: Vec<(Cell, u8)> = newly_visible.to_vec();
    offered.sort();
    offered.dedup();
    for (cell, direction) in offered {
        if let Some(existing) = list.entries.iter_mut().find(|e| e.cell == cell) {
            existing.observation_count += 1;
        } else {
            let id = list.next_id;
            list.next_id += 1;
            list.entries.push(FrontierEntry {
                id,
                cell,
                direction_at_discovery: direction,
                viewpoint_at_discovery: viewpoint,
                cumulative_score: 0.0,
                observation_count: 1,
                last_distance: 0.0,
            });
        }
    }

    for e in &mut list.entries {
        e.last_distance = viewpoint.euclidean(e.cell);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Detection, Terrain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn view(direction: u8, cells: Vec<(Cell, Terrain)>) -> ViewObservation {
        ViewObservation {
            direction_index: direction,
            visible_cells: cells,
            detected_objects: Vec::<Detection>::new(),
        }
    }

    #[test]
    fn integrate_empty_view_is_identity() {
        let mut belief = BeliefMap::new_unknown(4, 4);
        let before = belief.clone();
        belief.integrate_observation(&view(0, vec![])).unwrap();
        assert_eq!(belief, before);
    }

    #[test]
    fn integrate_counts_known_cells() {
        let mut belief = BeliefMap::new_unknown(8, 8);
        let cells = vec![
            (Cell::new(1, 1), Terrain::Free),
            (Cell::new(2, 1), Terrain::Free),
            (Cell::new(3, 1), Terrain::Free),
            (Cell::new(4, 1), Terrain::Free),
            (Cell::new(5, 1), Terrain::Free),
            (Cell::new(6, 1), Terrain::Occupied),
        ];
        let n = belief.integrate_observation(&view(0, cells)).unwrap();
        assert_eq!(n, 6);
        assert_eq!(belief.unknown_count(), 64 - 6);
    }

    #[test]
    fn integrate_is_idempotent() {
        let mut belief = BeliefMap::new_unknown(8, 8);
        let v = view(
            2,
            vec![
                (Cell::new(1, 2), Terrain::Free),
                (Cell::new(2, 2), Terrain::Occupied),
            ],
        );
        belief.integrate_observation(&v).unwrap();
        let once = belief.clone();
        let n = belief.integrate_observation(&v).unwrap();
        assert_eq!(n, 0);
        assert_eq!(belief, once);
    }

    #[test]
    fn contradiction_is_an_error() {
        let mut belief = BeliefMap::new_unknown(4, 4);
        belief.observe(Cell::new(1, 1), Terrain::Free).unwrap();
        let err = belief.observe(Cell::new(1, 1), Terrain::Occupied);
        assert!(matches!(err, Err(MapError::ObservationConflict { .. })));
    }

    #[test]
    fn all_unknown_has_no_frontiers() {
        let belief = BeliefMap::new_unknown(6, 6);
        assert!(detect_frontiers(&belief).is_empty());
    }

    #[test]
    fn lone_free_cell_is_a_frontier() {
        let mut belief = BeliefMap::new_unknown(5, 5);
        belief.observe(Cell::new(2, 2), Terrain::Free).unwrap();
        assert_eq!(detect_frontiers(&belief), vec![Cell::new(2, 2)]);
    }

    #[test]
    fn detect_matches_definitional_scan_on_random_beliefs() {
        // Independent oracle: re-apply the predicate cell by cell, written
        // out longhand.
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..200 {
            let mut belief = BeliefMap::new_unknown(16, 16);
            for y in 0..16 {
                for x in 0..16 {
                    match rng.gen_range(0..3) {
                        0 => {}
                        1 => belief.observe(Cell::new(x, y), Terrain::Free).unwrap(),
                        _ => belief.observe(Cell::new(x, y), Terrain::Occupied).unwrap(),
                    }
                }
            }
            let mut expected = Vec::new();
            for y in 0i32..16 {
                for x in 0i32..16 {
                    let c = Cell::new(x, y);
                    if belief.state(c) != CellState::Free {
                        continue;
                    }
                    let offsets = [(0, -1), (-1, 0), (1, 0), (0, 1)];
                    let adjacent_unknown = offsets.iter().any(|&(dx, dy)| {
                        let n = Cell::new(x + dx, y + dy);
                        belief.in_bounds(n) && belief.state(n) == CellState::Unknown
                    });
                    if adjacent_unknown {
                        expected.push(c);
                    }
                }
            }
            assert_eq!(detect_frontiers(&belief), expected);
        }
    }

    #[test]
    fn update_refreshes_distances_only_when_nothing_changes() {
        let mut belief = BeliefMap::new_unknown(6, 6);
        for c in [Cell::new(1, 1), Cell::new(4, 4)] {
            belief.observe(c, Terrain::Free).unwrap();
        }
        let mut list = FrontierList::new();
        update_frontier_list(
            &mut list,
            &belief,
            &[(Cell::new(1, 1), 0), (Cell::new(4, 4), 3)],
            Cell::new(0, 1),
        );
        let scores: Vec<_> = list.entries().iter().map(|e| (e.id, e.cell)).collect();

        update_frontier_list(&mut list, &belief, &[], Cell::new(4, 1));
        let after: Vec<_> = list.entries().iter().map(|e| (e.id, e.cell)).collect();
        assert_eq!(scores, after);
        for e in list.entries() {
            assert!((e.last_distance - Cell::new(4, 1).euclidean(e.cell)).abs() < 1e-12);
        }
    }

    #[test]
    fn entry_removed_when_surrounded_by_known() {
        let mut belief = BeliefMap::new_unknown(5, 5);
        belief.observe(Cell::new(2, 2), Terrain::Free).unwrap();
        let mut list = FrontierList::new();
        update_frontier_list(&mut list, &belief, &[(Cell::new(2, 2), 0)], Cell::new(2, 2));
        assert_eq!(list.len(), 1);

        for n in Cell::new(2, 2).orthogonal_neighbors() {
            belief.observe(n, Terrain::Occupied).unwrap();
        }
        update_frontier_list(&mut list, &belief, &[], Cell::new(2, 2));
        assert!(list.is_empty());
    }

    #[test]
    fn duplicate_offer_keeps_original_entry() {
        let mut belief = BeliefMap::new_unknown(5, 5);
        belief.observe(Cell::new(2, 2), Terrain::Free).unwrap();
        let mut list = FrontierList::new();
        update_frontier_list(&mut list, &belief, &[(Cell::new(2, 2), 1)], Cell::new(2, 2));
        let id = list.entries()[0].id;
        list.add_score(id, 0.75);

        update_frontier_list(&mut list, &belief, &[(Cell::new(2, 2), 5)], Cell::new(2, 2));
        assert_eq!(list.len(), 1);
        let e = &list.entries()[0];
        assert_eq!(e.id, id);
        assert_eq!(e.direction_at_discovery, 1);
        assert_eq!(e.observation_count, 2);
        assert!((e.cumulative_score - 0.75).abs() < 1e-12);
    }

    #[test]
    fn belief_text_round_trip() {
        let rows = ["?#.", "..?", "###"];
        let b = BeliefMap::from_text_rows(&rows).unwrap();
        assert_eq!(b.to_text_rows(), rows.to_vec());
    }

    #[test]
    fn unknown_count_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut belief = BeliefMap::new_unknown(12, 12);
        let mut previous = belief.unknown_count();
        for _ in 0..50 {
            let cells: Vec<(Cell, Terrain)> = (0..rng.gen_range(0..6))
                .map(|_| {
                    let c = Cell::new(rng.gen_range(0..12), rng.gen_range(0..12));
                    let t = if belief.state(c) == CellState::Occupied || rng.gen_bool(0.7) {
                        // keep consistent with whatever is already known
                        match belief.state(c) {
                            CellState::Occupied => Terrain::Occupied,
                            _ => Terrain::Free,
                        }
                    } else {
                        Terrain::Occupied
                    };
                    (c, t)
                })
                .collect();
            let consistent = cells.iter().all(|&(c, t)| match belief.state(c) {
                CellState::Unknown => true,
                CellState::Free => t == Terrain::Free,
                CellState::Occupied => t == Terrain::Occupied,
            });
            if !consistent {
                continue;
            }
            belief.integrate_observation(&view(0, cells)).unwrap();
            let now = belief.unknown_count();
            assert!(now <= previous);
            previous = now;
        }
    }

    /// After any update, every listed entry still satisfies the frontier
    /// predicate on the current belief.
    #[test]
    fn frontier_list_stays_sound_under_random_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(512);
        for _ in 0..50 {
            let mut belief = BeliefMap::new_unknown(12, 12);
            let mut list = FrontierList::new();
            for _ in 0..30 {
                // Reveal a random cell.
                let c = Cell::new(rng.gen_range(0..12), rng.gen_range(0..12));
                if belief.state(c) == CellState::Unknown {
                    let t = if rng.gen_bool(0.75) {
                        Terrain::Free
                    } else {
                        Terrain::Occupied
                    };
                    belief.observe(c, t).unwrap();
                }
                let viewpoint = Cell::new(rng.gen_range(0..12), rng.gen_range(0..12));
                let mut offered: Vec<(Cell, u8)> = Vec::new();
                for c in detect_frontiers(&belief) {
                    if rng.gen_bool(0.5) {
                        offered.push((c, rng.gen_range(0..8)));
                    }
                }
                update_frontier_list(&mut list, &belief, &offered, viewpoint);
                for e in list.entries() {
                    assert!(
                        is_frontier(&belief, e.cell),
                        "listed cell {} is no longer a frontier",
                        e.cell
                    );
                }
            }
        }
    }
}
