//! The hidden ground-truth environment and the idealized directional sensor.
//!
//! A scenario is a rectangular grid of Free/Occupied terrain, a per-cell room
//! category, a set of object instances placed on free cells, and the
//! object-to-room co-occurrence table used both for scenario generation and
//! for the hermetic oracle ranker. Everything here is immutable once built
//! and safe to share across concurrent episode runs.

mod gen;

pub use gen::{generate_scenario, GenParams};

use crate::grid::{cells_between, direction_of_offset, Cell, NUM_DIRECTIONS};
use crate::rankers::CoOccurrencePrior;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use thiserror::Error;

/// The reserved category carried by every occupied cell.
pub const WALL_CATEGORY: &str = "wall";

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("direction index {0} out of range 0..8")]
    InvalidDirection(u8),
    #[error("pose cell {0} is out of bounds")]
    PoseOutOfBounds(Cell),
    #[error("pose cell {0} is occupied")]
    PoseOnOccupied(Cell),
    #[error("heading {0} out of range 0..8")]
    InvalidHeading(u8),
    #[error("grid {width}x{height} too small for {requested} rooms")]
    MapTooSmall {
        width: u32,
        height: u32,
        requested: u32,
    },
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Ground-truth traversability of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terrain {
    Free,
    Occupied,
}

/// The ordered list of room category strings. The last entry is always the
/// wall category; the default is the fixed eight-category household list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoomCategoryList(Vec<String>);

impl Default for RoomCategoryList {
    fn default() -> Self {
        Self(
            [
                "bathroom",
                "bedroom",
                "reception room",
                "laundry room",
                "kitchen",
                "home office",
                "living room",
                WALL_CATEGORY,
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
    }
}

impl RoomCategoryList {
    pub fn new(categories: Vec<String>) -> Result<Self, WorldError> {
        if categories.is_empty() {
            return Err(WorldError::InvalidScenario("category list is empty".into()));
        }
        if !categories.iter().any(|c| c == WALL_CATEGORY) {
            return Err(WorldError::InvalidScenario(format!(
                "category list is missing \"{WALL_CATEGORY}\""
            )));
        }
        Ok(Self(categories))
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, category: &str) -> bool {
        self.0.iter().any(|c| c == category)
    }

    pub fn index_of(&self, category: &str) -> Option<u8> {
        self.0.iter().position(|c| c == category).map(|i| i as u8)
    }

    /// Categories usable for rooms, i.e. everything except the wall label,
    /// in list order.
    pub fn non_wall(&self) -> impl Iterator<Item = &str> {
        self.0
            .iter()
            .filter(|c| c.as_str() != WALL_CATEGORY)
            .map(|c| c.as_str())
    }

    /// Rendering used in prompt text: `["bathroom", "bedroom", ...]`.
    pub fn render_bracketed(&self) -> String {
        let inner = self
            .0
            .iter()
            .map(|c| format!("\"{c}\""))
            .collect::<Vec<_>>()
            .join(", ");
        format!("[{inner}]")
    }
}

/// The hidden world: terrain plus a room category per cell.
///
/// Invariants, enforced at construction: every occupied cell carries the
/// wall category and every free cell a non-wall category drawn from the
/// category list.
#[derive(Debug, Clone)]
pub struct GroundTruthMap {
    width: u32,
    height: u32,
    /// Meters per cell; metadata only.
    pub resolution: f64,
    terrain: Vec<Terrain>,
    room_index: Vec<u8>,
    categories: RoomCategoryList,
}

impl GroundTruthMap {
    pub fn new(
        width: u32,
        height: u32,
        terrain: Vec<Terrain>,
        room_index: Vec<u8>,
        categories: RoomCategoryList,
    ) -> Result<Self, WorldError> {
        let n = (width as usize) * (height as usize);
        if terrain.len() != n || room_index.len() != n {
            return Err(WorldError::InvalidScenario(format!(
                "grid data length mismatch: {}x{} needs {n} cells",
                width, height
            )));
        }
        for (i, (&t, &r)) in terrain.iter().zip(room_index.iter()).enumerate() {
            let Some(category) = categories.as_slice().get(r as usize) else {
                return Err(WorldError::InvalidScenario(format!(
                    "cell {i} has category index {r} outside the list"
                )));
            };
            let is_wall = category == WALL_CATEGORY;
            match t {
                Terrain::Occupied if !is_wall => {
                    return Err(WorldError::InvalidScenario(format!(
                        "occupied cell {i} has non-wall category \"{category}\""
                    )));
                }
                Terrain::Free if is_wall => {
                    return Err(WorldError::InvalidScenario(format!(
                        "free cell {i} has wall category"
                    )));
                }
                _ => {}
            }
        }
        Ok(Self {
            width,
            height,
            resolution: 1.0,
            terrain,
            room_index,
            categories,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn categories(&self) -> &RoomCategoryList {
        &self.categories
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && (cell.x as u32) < self.width && (cell.y as u32) < self.height
    }

    fn index(&self, cell: Cell) -> usize {
        (cell.y as usize) * (self.width as usize) + (cell.x as usize)
    }

    /// Terrain of an in-bounds cell.
    pub fn terrain(&self, cell: Cell) -> Terrain {
        self.terrain[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && self.terrain(cell) == Terrain::Free
    }

    /// Room category of an in-bounds cell.
    pub fn category(&self, cell: Cell) -> &str {
        &self.categories.as_slice()[self.room_index[self.index(cell)] as usize]
    }

    pub fn room_index_of(&self, cell: Cell) -> u8 {
        self.room_index[self.index(cell)]
    }

    /// All free cells in row-major order.
    pub fn free_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let c = Cell::new(x, y);
                if self.terrain(c) == Terrain::Free {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Row-major terrain rows using `#` for occupied and `.` for free.
    pub fn terrain_rows(&self) -> Vec<String> {
        (0..self.height as i32)
            .map(|y| {
                (0..self.width as i32)
                    .map(|x| match self.terrain(Cell::new(x, y)) {
                        Terrain::Free => '.',
                        Terrain::Occupied => '#',
                    })
                    .collect()
            })
            .collect()
    }
}

/// An object placed in the world, the unit the simulated detector reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: u32,
    #[serde(rename = "class")]
    pub class_name: String,
    pub x: i32,
    pub y: i32,
}

impl ObjectInstance {
    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }
}

/// The robot's discrete pose: a free cell plus one of eight headings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub heading: u8,
}

impl Pose {
    pub fn new(cell: Cell, heading: u8) -> Self {
        Self { cell, heading }
    }
}

/// Sensor parameters. The field of view (45 degrees) and the direction count
/// (8) are fixed by the wedge geometry; see [`crate::grid::FOV_DEGREES`] and
/// [`crate::grid::NUM_DIRECTIONS`]. Range is measured in chessboard cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub max_range: u32,
    /// Probability of dropping any single detection; 0 = perfect detector.
    #[serde(default)]
    pub detection_dropout: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            max_range: 12,
            detection_dropout: 0.0,
        }
    }
}

/// One detected object, as reported to the ranking layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub id: u32,
    pub class_name: String,
}

/// What one 45-degree view from a pose contains.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewObservation {
    pub direction_index: u8,
    /// Every cell of the wedge that is within range and not occluded, with
    /// its true terrain, in row-major offset order. Includes the first
    /// occupied cell on each sight line; never includes the pose cell.
    pub visible_cells: Vec<(Cell, Terrain)>,
    /// Objects standing on visible free cells, ordered by id.
    pub detected_objects: Vec<Detection>,
}

fn check_pose(map: &GroundTruthMap, pose: Pose) -> Result<(), WorldError> {
    if pose.heading as usize >= NUM_DIRECTIONS {
        return Err(WorldError::InvalidHeading(pose.heading));
    }
    if !map.in_bounds(pose.cell) {
        return Err(WorldError::PoseOutOfBounds(pose.cell));
    }
    if map.terrain(pose.cell) == Terrain::Occupied {
        return Err(WorldError::PoseOnOccupied(pose.cell));
    }
    Ok(())
}

/// True when no cell strictly between `from` and `to` is occupied.
fn line_of_sight(map: &GroundTruthMap, from: Cell, to: Cell) -> bool {
    cells_between(from, to)
        .into_iter()
        .all(|c| map.terrain(c) != Terrain::Occupied)
}

/// All cells visible from `origin`: within `max_range` chessboard cells,
/// excluding `origin` itself, with no occupied cell strictly between. In
/// row-major offset order.
pub fn visible_cells_from(
    map: &GroundTruthMap,
    origin: Cell,
    sensor: &SensorConfig,
) -> Vec<(Cell, Terrain)> {
    let r = sensor.max_range as i32;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx == 0 && dy == 0 {
                continue;
            }
            let target = Cell::new(origin.x + dx, origin.y + dy);
            if !map.in_bounds(target) {
                continue;
            }
            if line_of_sight(map, origin, target) {
                out.push((target, map.terrain(target)));
            }
        }
    }
    out
}

/// One directional view: the cells of the direction's wedge that are within
/// range and not occluded, plus the objects standing on its visible free
/// cells.
pub fn raycast_view(
    map: &GroundTruthMap,
    objects: &[ObjectInstance],
    pose: Pose,
    direction_index: u8,
    sensor: &SensorConfig,
) -> Result<ViewObservation, WorldError> {
    if direction_index as usize >= NUM_DIRECTIONS {
        return Err(WorldError::InvalidDirection(direction_index));
    }
    check_pose(map, pose)?;

    let r = sensor.max_range as i32;
    let origin = pose.cell;
    let mut visible_cells = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if direction_of_offset(dx, dy) != Some(direction_index) {
                continue;
            }
            let target = Cell::new(origin.x + dx, origin.y + dy);
            if !map.in_bounds(target) {
                continue;
            }
            if line_of_sight(map, origin, target) {
                visible_cells.push((target, map.terrain(target)));
            }
        }
    }

    let free: HashSet<Cell> = visible_cells
        .iter()
        .filter(|(_, t)| *t == Terrain::Free)
        .map(|(c, _)| *c)
        .collect();
    let mut detected_objects: Vec<Detection> = objects
        .iter()
        .filter(|o| free.contains(&o.cell()))
        .map(|o| Detection {
            id: o.id,
            class_name: o.class_name.clone(),
        })
        .collect();
    detected_objects.sort_by_key(|d| d.id);

    Ok(ViewObservation {
        direction_index,
        visible_cells,
        detected_objects,
    })
}

/// A full 360-degree scan: one view per direction 0..7. The eight wedges are
/// disjoint and together cover every non-occluded cell within range, except
/// the pose cell itself.
pub fn panoramic_scan(
    map: &GroundTruthMap,
    objects: &[ObjectInstance],
    pose: Pose,
    sensor: &SensorConfig,
) -> Result<Vec<ViewObservation>, WorldError> {
    (0..NUM_DIRECTIONS as u8)
        .map(|d| raycast_view(map, objects, pose, d, sensor))
        .collect()
}

/// A complete, validated scenario: the world, its objects, and the
/// co-occurrence prior that stands in for language-model commonsense.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub map: GroundTruthMap,
    pub objects: Vec<ObjectInstance>,
    pub prior: CoOccurrencePrior,
}

#[derive(Serialize, Deserialize)]
struct RoomsFile {
    categories: Vec<String>,
    grid: Vec<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    width: u32,
    height: u32,
    terrain: Vec<String>,
    rooms: RoomsFile,
    objects: Vec<ObjectInstance>,
    prior: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Scenario {
    pub fn new(
        map: GroundTruthMap,
        objects: Vec<ObjectInstance>,
        prior: CoOccurrencePrior,
    ) -> Result<Self, WorldError> {
        let mut ids = BTreeSet::new();
        for o in &objects {
            if o.class_name.is_empty() {
                return Err(WorldError::InvalidScenario(format!(
                    "object {} has an empty class name",
                    o.id
                )));
            }
            if !map.is_free(o.cell()) {
                return Err(WorldError::InvalidScenario(format!(
                    "object {} ({}) at {} is not on a free cell",
                    o.id,
                    o.class_name,
                    o.cell()
                )));
            }
            if !ids.insert(o.id) {
                return Err(WorldError::InvalidScenario(format!(
                    "duplicate object id {}",
                    o.id
                )));
            }
        }
        prior
            .validate(map.categories())
            .map_err(|e| WorldError::InvalidScenario(format!("prior table: {e}")))?;
        Ok(Self {
            map,
            objects,
            prior,
        })
    }

    /// Distinct object class names present, sorted.
    pub fn object_classes(&self) -> Vec<String> {
        let set: BTreeSet<String> = self.objects.iter().map(|o| o.class_name.clone()).collect();
        set.into_iter().collect()
    }

    pub fn to_json_string(&self) -> Result<String, WorldError> {
        let height = self.map.height() as usize;
        let width = self.map.width() as usize;
        let mut grid = Vec::with_capacity(height);
        for y in 0..height as i32 {
            let mut row = Vec::with_capacity(width);
            for x in 0..width as i32 {
                row.push(self.map.room_index_of(Cell::new(x, y)));
            }
            grid.push(row);
        }
        let file = ScenarioFile {
            width: self.map.width(),
            height: self.map.height(),
            terrain: self.map.terrain_rows(),
            rooms: RoomsFile {
                categories: self.map.categories().as_slice().to_vec(),
                grid,
            },
            objects: self.objects.clone(),
            prior: self.prior.table().clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self, WorldError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let n = (file.width as usize) * (file.height as usize);
        if file.terrain.len() != file.height as usize {
            return Err(WorldError::InvalidScenario(format!(
                "terrain has {} rows, expected {}",
                file.terrain.len(),
                file.height
            )));
        }
        let mut terrain = Vec::with_capacity(n);
        for (y, row) in file.terrain.iter().enumerate() {
            if row.chars().count() != file.width as usize {
                return Err(WorldError::InvalidScenario(format!(
                    "terrain row {y} has {} cells, expected {}",
                    row.chars().count(),
                    file.width
                )));
            }
            for ch in row.chars() {
                terrain.push(match ch {
                    '.' => Terrain::Free,
                    '#' => Terrain::Occupied,
                    other => {
                        return Err(WorldError::InvalidScenario(format!(
                            "terrain row {y} contains '{other}' (expected '.' or '#')"
                        )))
                    }
                });
            }
        }
        if file.rooms.grid.len() != file.height as usize
            || file
                .rooms
                .grid
                .iter()
                .any(|r| r.len() != file.width as usize)
        {
            return Err(WorldError::InvalidScenario(
                "rooms.grid dimensions do not match width/height".into(),
            ));
        }
        let room_index: Vec<u8> = file.rooms.grid.into_iter().flatten().collect();
        let categories = RoomCategoryList::new(file.rooms.categories)?;
        let map = GroundTruthMap::new(file.width, file.height, terrain, room_index, categories)?;
        Scenario::new(map, file.objects, CoOccurrencePrior::new(file.prior))
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}
