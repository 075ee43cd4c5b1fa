//! Seeded synthetic apartment generation.
//!
//! A BSP partition of the interior into rectangular rooms separated by
//! one-cell walls, a spanning set of door gaps (plus optional extra doors for
//! loops), a room category per leaf, and objects sampled from the
//! co-occurrence prior of each room's category. Identical `(seed, params)`
//! always produce identical scenarios.

use super::{
    GroundTruthMap, ObjectInstance, RoomCategoryList, Scenario, Terrain, WorldError, WALL_CATEGORY,
};
use crate::grid::Cell;
use crate::rankers::CoOccurrencePrior;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smallest allowed room side, in free cells.
const MIN_ROOM_SIDE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenParams {
    pub width: u32,
    pub height: u32,
    pub min_rooms: u32,
    pub max_rooms: u32,
    pub min_objects_per_room: u32,
    pub max_objects_per_room: u32,
    /// Probability of carving a door on each adjacency beyond the spanning
    /// set, producing loops.
    pub extra_door_prob: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            width: 48,
            height: 48,
            min_rooms: 6,
            max_rooms: 10,
            min_objects_per_room: 1,
            max_objects_per_room: 4,
            extra_door_prob: 0.15,
        }
    }
}

impl GenParams {
    fn validate(&self) -> Result<(), WorldError> {
        if self.width < 5 || self.height < 5 {
            return Err(WorldError::InvalidParams(format!(
                "grid {}x{} is below the 5x5 minimum",
                self.width, self.height
            )));
        }
        if self.min_rooms == 0 || self.min_rooms > self.max_rooms {
            return Err(WorldError::InvalidParams(format!(
                "room count range {}..={} is invalid",
                self.min_rooms, self.max_rooms
            )));
        }
        if self.min_objects_per_room > self.max_objects_per_room {
            return Err(WorldError::InvalidParams(format!(
                "objects-per-room range {}..={} is invalid",
                self.min_objects_per_room, self.max_objects_per_room
            )));
        }
        if !(0.0..=1.0).contains(&self.extra_door_prob) {
            return Err(WorldError::InvalidParams(format!(
                "extra_door_prob {} outside [0, 1]",
                self.extra_door_prob
            )));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle, exclusive upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
}

impl Rect {
    fn width(&self) -> i32 {
        self.x1 - self.x0
    }

    fn height(&self) -> i32 {
        self.y1 - self.y0
    }

    fn area(&self) -> i32 {
        self.width() * self.height()
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.area() as usize);
        for y in self.y0..self.y1 {
            for x in self.x0..self.x1 {
                out.push(Cell::new(x, y));
            }
        }
        out
    }
}

/// A wall segment shared by two adjacent rooms, with the cells a door could
/// occupy.
struct Adjacency {
    a: usize,
    b: usize,
    door_candidates: Vec<Cell>,
}

fn split_rooms(
    interior: Rect,
    target: u32,
    min_rooms: u32,
    width: u32,
    height: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Rect>, WorldError> {
    let splittable = |r: &Rect| r.width() > 2 * MIN_ROOM_SIDE || r.height() > 2 * MIN_ROOM_SIDE;
    let mut leaves = vec![interior];
    while (leaves.len() as u32) < target {
        let pick = leaves
            .iter()
            .enumerate()
            .filter(|(_, r)| splittable(r))
            .max_by_key(|(i, r)| (r.area(), std::cmp::Reverse(*i)))
            .map(|(i, _)| i);
        let Some(i) = pick else {
            if (leaves.len() as u32) >= min_rooms {
                break;
            }
            return Err(WorldError::MapTooSmall {
                width,
                height,
                requested: min_rooms,
            });
        };
        let r = leaves[i];
        let can_v = r.width() > 2 * MIN_ROOM_SIDE;
        let can_h = r.height() > 2 * MIN_ROOM_SIDE;
        let vertical = match (can_v, can_h) {
            (true, false) => true,
            (false, true) => false,
            _ => {
                if r.width() != r.height() {
                    r.width() > r.height()
                } else {
                    rng.gen_bool(0.5)
                }
            }
        };
        let (left, right) = if vertical {
            let wx = rng.gen_range(r.x0 + MIN_ROOM_SIDE..=r.x1 - 1 - MIN_ROOM_SIDE);
            (Rect { x1: wx, ..r }, Rect { x0: wx + 1, ..r })
        } else {
            let wy = rng.gen_range(r.y0 + MIN_ROOM_SIDE..=r.y1 - 1 - MIN_ROOM_SIDE);
            (Rect { y1: wy, ..r }, Rect { y0: wy + 1, ..r })
        };
        leaves[i] = left;
        leaves.push(right);
    }
    Ok(leaves)
}

fn adjacencies(leaves: &[Rect]) -> Vec<Adjacency> {
    let mut out = Vec::new();
    for a in 0..leaves.len() {
        for b in (a + 1)..leaves.len() {
            let (ra, rb) = (&leaves[a], &leaves[b]);
            // Vertical wall between horizontally adjacent rooms.
            for (left, right) in [(ra, rb), (rb, ra)] {
                if left.x1 + 1 == right.x0 {
                    let y0 = left.y0.max(right.y0);
                    let y1 = left.y1.min(right.y1);
                    if y0 < y1 {
                        out.push(Adjacency {
                            a,
                            b,
                            door_candidates: (y0..y1).map(|y| Cell::new(left.x1, y)).collect(),
                        });
                    }
                }
            }
            // Horizontal wall between vertically adjacent rooms.
            for (top, bottom) in [(ra, rb), (rb, ra)] {
                if top.y1 + 1 == bottom.y0 {
                    let x0 = top.x0.max(bottom.x0);
                    let x1 = top.x1.min(bottom.x1);
                    if x0 < x1 {
                        out.push(Adjacency {
                            a,
                            b,
                            door_candidates: (x0..x1).map(|x| Cell::new(x, top.y1)).collect(),
                        });
                    }
                }
            }
        }
    }
    out
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        if self.0[i] != i {
            let root = self.find(self.0[i]);
            self.0[i] = root;
        }
        self.0[i]
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Generate a scenario: BSP rooms behind a solid border, doors forming a
/// connected apartment, a category per room, and objects drawn from the
/// default co-occurrence prior conditioned on each room's category.
pub fn generate_scenario(seed: u64, params: &GenParams) -> Result<Scenario, WorldError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categories = RoomCategoryList::default();
    let prior = CoOccurrencePrior::default_household();

    let (w, h) = (params.width as i32, params.height as i32);
    let interior = Rect {
        x0: 1,
        y0: 1,
        x1: w - 1,
        y1: h - 1,
    };
    if interior.width() < MIN_ROOM_SIDE || interior.height() < MIN_ROOM_SIDE {
        return Err(WorldError::MapTooSmall {
            width: params.width,
            height: params.height,
            requested: params.min_rooms,
        });
    }
    let target = rng.gen_range(params.min_rooms..=params.max_rooms);
    let leaves = split_rooms(
        interior,
        target,
        params.min_rooms,
        params.width,
        params.height,
        &mut rng,
    )?;

    let n = (params.width as usize) * (params.height as usize);
    let idx = |c: Cell| (c.y as usize) * (params.width as usize) + (c.x as usize);
    let mut terrain = vec![Terrain::Occupied; n];
    let wall_idx = categories.index_of(WALL_CATEGORY).expect("wall category");
    let mut room_index = vec![wall_idx; n];

    let non_wall: Vec<u8> = categories
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.as_str() != WALL_CATEGORY)
        .map(|(i, _)| i as u8)
        .collect();
    let mut leaf_category = Vec::with_capacity(leaves.len());
    for leaf in &leaves {
        let cat = non_wall[rng.gen_range(0..non_wall.len())];
        leaf_category.push(cat);
        for c in leaf.cells() {
            terrain[idx(c)] = Terrain::Free;
            room_index[idx(c)] = cat;
        }
    }

    // Doors: one per spanning edge, extras with configured probability.
    let mut edges = adjacencies(&leaves);
    edges.shuffle(&mut rng);
    let mut uf = UnionFind::new(leaves.len());
    let mut doors = Vec::new();
    for edge in &edges {
        let carve = if uf.union(edge.a, edge.b) {
            true
        } else {
            rng.gen_bool(params.extra_door_prob)
        };
        if carve {
            let door = edge.door_candidates[rng.gen_range(0..edge.door_candidates.len())];
            doors.push(door);
        }
    }
    for door in doors {
        terrain[idx(door)] = Terrain::Free;
        // A door inherits the category of its first free neighbor, scanning
        // up, left, right, down.
        let neighbors = [
            Cell::new(door.x, door.y - 1),
            Cell::new(door.x - 1, door.y),
            Cell::new(door.x + 1, door.y),
            Cell::new(door.x, door.y + 1),
        ];
        let cat = neighbors
            .iter()
            .find(|c| terrain[idx(**c)] == Terrain::Free && room_index[idx(**c)] != wall_idx)
            .map(|c| room_index[idx(*c)])
            .unwrap_or(non_wall[0]);
        room_index[idx(door)] = cat;
    }

    // Objects per room, classes weighted by the prior row for the room's
    // category, on distinct free cells.
    let mut objects = Vec::new();
    let mut next_id = 0u32;
    for (leaf, &cat) in leaves.iter().zip(&leaf_category) {
        let category = &categories.as_slice()[cat as usize];
        let candidates: Vec<(&str, f64)> = prior
            .table()
            .iter()
            .filter_map(|(class, row)| {
                let p = row.get(category).copied().unwrap_or(0.0);
                (p > 0.0).then_some((class.as_str(), p))
            })
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let count = rng
            .gen_range(params.min_objects_per_room..=params.max_objects_per_room)
            .min(leaf.area() as u32);
        if count == 0 {
            continue;
        }
        let weights = WeightedIndex::new(candidates.iter().map(|(_, p)| *p))
            .map_err(|e| WorldError::InvalidParams(format!("prior weights: {e}")))?;
        let cells = leaf.cells();
        let spots: Vec<Cell> = cells
            .choose_multiple(&mut rng, count as usize)
            .copied()
            .collect();
        for spot in spots {
            let class = candidates[weights.sample(&mut rng)].0;
            objects.push(ObjectInstance {
                id: next_id,
                class_name: class.to_string(),
                x: spot.x,
                y: spot.y,
            });
            next_id += 1;
        }
    }

    let map = GroundTruthMap::new(params.width, params.height, terrain, room_index, categories)?;
    debug_assert!(free_cells_connected(&map));
    Scenario::new(map, objects, prior)
}

/// 4-connected flood fill check that every free cell is mutually reachable.
pub fn free_cells_connected(map: &GroundTruthMap) -> bool {
    let free = map.free_cells();
    let Some(&start) = free.first() else {
        return true;
    };
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![start];
    seen.insert(start);
    while let Some(c) = stack.pop() {
        for n in c.orthogonal_neighbors() {
            if map.is_free(n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len() == free.len()
}
