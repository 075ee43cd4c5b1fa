//! The object-goal-navigation episode loop.
//!
//! Each decision step: scan all eight directions, integrate the views, stop
//! if the target class was detected, refresh the frontier list, query the
//! ranker (one query per scan), convert direction ranks into
//! distance-weighted reciprocal scores for the frontiers seen this scan,
//! fuse them into the cumulative scores, pick the next subgoal, and travel
//! toward it with bump-triggered replanning. Episodes end in success
//! (target seen), frontier exhaustion, or budget exhaustion — never panic.

use crate::eval;
use crate::grid::{Cell, NUM_DIRECTIONS};
use crate::mapping::{
    detect_frontiers, update_frontier_list, BeliefMap, FrontierId, FrontierList, MapError,
};
use crate::planner::{astar, execute_path, shortest_path_to_set, PlanError, PlanMode};
use crate::prompts::TranscriptRecord;
use crate::rankers::{Ranker, RankerError, RankerRequest};
use crate::ranking::{
    distance_weight, fuse, select_frontier, RankError, RankVector, ScoreVector, SelectionPolicy,
    WeightConfig,
};
use crate::world::{
    panoramic_scan, visible_cells_from, Pose, Scenario, SensorConfig, Terrain, WorldError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error("ranker: {0}")]
    Ranker(#[from] RankerError),
}

/// How many decision steps and how much travel an episode may spend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub max_steps: u32,
    /// Travel budget as a multiple of the episode's optimal path length.
    pub max_traveled_multiplier: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            max_steps: 500,
            max_traveled_multiplier: 10.0,
        }
    }
}

/// Subgoal selection rule for an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontierChoice {
    /// Ranked: highest fused cumulative score (requires a ranker).
    ArgmaxFused,
    /// Ranked: uniform among frontiers discovered in the latest rank-1
    /// direction (requires a ranker).
    ProtoRandom,
    /// Baseline: uniform over all current frontiers.
    RandomUniform,
    /// Baseline: smallest distance from the current viewpoint.
    Nearest,
}

impl FrontierChoice {
    pub fn needs_ranker(self) -> bool {
        matches!(self, Self::ArgmaxFused | Self::ProtoRandom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub target_object: String,
    pub start: Pose,
    pub choice: FrontierChoice,
    pub budget: BudgetConfig,
    pub seed: u64,
    pub weights: WeightConfig,
    pub sensor: SensorConfig,
    /// Reserved threshold for ranking the whole frontier list in a single
    /// query when it is short. The shipped protocol always ranks the eight
    /// directions, so this knob currently has no effect.
    pub max_rankable_frontiers: usize,
}

impl EpisodeConfig {
    pub fn new(target_object: impl Into<String>, start: Pose, choice: FrontierChoice) -> Self {
        Self {
            target_object: target_object.into(),
            start,
            choice,
            budget: BudgetConfig::default(),
            seed: 0,
            weights: WeightConfig::default(),
            sensor: SensorConfig::default(),
            max_rankable_frontiers: NUM_DIRECTIONS,
        }
    }
}

/// Outcome of one planned move toward a frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveOutcome {
    Arrived,
    Bumped { cell: Cell },
    NoPath,
    Dropped,
}

/// One plan/execute attempt inside a decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub frontier_id: FrontierId,
    pub target_cell: Cell,
    pub outcome: MoveOutcome,
    pub planned_length: f64,
    pub traveled_delta: f64,
}

/// Everything that happened in one decision step, for audit and replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub step: u32,
    pub pose: Pose,
    pub objects_per_direction: Vec<Vec<String>>,
    /// Direction ranks used this step (absent for baseline policies and for
    /// the final detection scan).
    pub ranks: Option<Vec<u32>>,
    /// Reason the distance-only fallback ranking was used, if it was.
    pub ranker_fallback: Option<String>,
    /// Fused cumulative scores after this step's query, by frontier id.
    pub scores: Vec<(FrontierId, f64)>,
    pub moves: Vec<MoveRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcript: Vec<TranscriptRecord>,
    pub events: Vec<String>,
}

/// Result of one episode, the unit the SPL metric consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Total length actually traveled, across all replans.
    pub traveled: f64,
    /// Ground-truth shortest path length from the start to the nearest cell
    /// from which the target is visible (floored to 1 when the target is
    /// visible from the start itself).
    pub optimal: f64,
    pub num_scans: u32,
    pub num_bumps: u32,
    pub failure_reason: Option<String>,
    pub decision_log: Vec<DecisionRecord>,
}

impl EpisodeResult {
    /// This episode's SPL contribution before averaging.
    pub fn spl_term(&self) -> f64 {
        if self.success {
            self.optimal / self.traveled.max(self.optimal)
        } else {
            0.0
        }
    }
}

/// Free cells from which at least one instance of `class` is visible under
/// the sensor model. Visibility between free cells is symmetric, so the
/// region is computed by sweeping outward from each instance.
pub fn visibility_region(scenario: &Scenario, class: &str, sensor: &SensorConfig) -> HashSet<Cell> {
    let mut region = HashSet::new();
    for object in scenario.objects.iter().filter(|o| o.class_name == class) {
        for (cell, terrain) in visible_cells_from(&scenario.map, object.cell(), sensor) {
            if terrain == Terrain::Free {
                region.insert(cell);
            }
        }
    }
    region
}

/// Fully-known belief mirroring the ground truth, for ground-truth shortest
/// paths.
pub fn belief_of_truth(scenario: &Scenario) -> BeliefMap {
    let map = &scenario.map;
    let mut belief = BeliefMap::new_unknown(map.width(), map.height());
    for y in 0..map.height() as i32 {
        for x in 0..map.width() as i32 {
            let c = Cell::new(x, y);
            belief.observe(c, map.terrain(c)).expect("fresh belief");
        }
    }
    belief
}

/// Ground-truth shortest path length from `start` to the nearest cell from
/// which the target class is visible. `None` when the class is never
/// visible from any cell reachable from `start`.
pub fn optimal_path_length(
    scenario: &Scenario,
    start: Cell,
    class: &str,
    sensor: &SensorConfig,
) -> Result<Option<f64>, EpisodeError> {
    let region = visibility_region(scenario, class, sensor);
    if region.is_empty() {
        return Ok(None);
    }
    let truth = belief_of_truth(scenario);
    let found = shortest_path_to_set(
        &truth,
        start,
        |c| region.contains(&c),
        PlanMode::KnownFreeOnly,
    )?;
    Ok(found.map(|(_, d)| d))
}

/// Distance-only direction ranking used when the ranker fails hard:
/// directions ordered by their nearest frontier seen this scan, directions
/// without one last, ties by index.
fn distance_fallback_ranks(list: &FrontierList, tagged: &[(Cell, u8)]) -> RankVector {
    let mut nearest: [Option<f64>; NUM_DIRECTIONS] = [None; NUM_DIRECTIONS];
    for (cell, direction) in tagged {
        if let Some(id) = list.id_at_cell(*cell) {
            let d = list.get(id).expect("listed id").last_distance;
            let slot = &mut nearest[*direction as usize];
            *slot = Some(slot.map_or(d, |cur: f64| cur.min(d)));
        }
    }
    let mut order: Vec<usize> = (0..NUM_DIRECTIONS).collect();
    order.sort_by(|&a, &b| match (nearest[a], nearest[b]) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap().then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    let mut ranks = vec![0u32; NUM_DIRECTIONS];
    for (rank0, &d) in order.iter().enumerate() {
        ranks[d] = rank0 as u32 + 1;
    }
    RankVector::new(ranks).expect("order is a permutation")
}

/// After two failed plans a frontier is dropped for good.
const NOPATH_DROP_THRESHOLD: u32 = 2;

/// How the episode loop ended. Genuine bugs (planner misuse, observation
/// conflicts) propagate as [`EpisodeError`] instead; an episode failure is a
/// legitimate experimental outcome, not a masked error.
enum LoopEnd {
    Success,
    Failure(String),
}

/// Run one episode against a scenario.
///
/// `ranker` is required for the ranked policies and ignored by the
/// baselines. The optimal length is precomputed from the ground truth; an
/// episode whose target is visible from the start records
/// `traveled = optimal` so its SPL term is 1.
pub fn run_episode(
    scenario: &Scenario,
    config: &EpisodeConfig,
    mut ranker: Option<&mut dyn Ranker>,
) -> Result<EpisodeResult, EpisodeError> {
    validate_config(scenario, config)?;
    if config.choice.needs_ranker() && ranker.is_none() {
        return Err(EpisodeError::InvalidConfig(format!(
            "policy {:?} needs a ranker",
            config.choice
        )));
    }

    let raw_optimal = optimal_path_length(
        scenario,
        config.start.cell,
        &config.target_object,
        &config.sensor,
    )?
    .ok_or_else(|| {
        EpisodeError::InvalidConfig(format!(
            "target \"{}\" is never visible from any cell reachable from {}",
            config.target_object, config.start.cell
        ))
    })?;
    let optimal = if raw_optimal > 0.0 { raw_optimal } else { 1.0 };
    let max_traveled = config.budget.max_traveled_multiplier * optimal;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut belief = BeliefMap::new_unknown(scenario.map.width(), scenario.map.height());
    let mut list = FrontierList::new();
    let mut nopath_counts: HashMap<FrontierId, u32> = HashMap::new();
    let mut pose = config.start;
    let mut traveled = 0.0f64;
    let mut num_scans = 0u32;
    let mut num_bumps = 0u32;
    let mut log: Vec<DecisionRecord> = Vec::new();

    let outcome: Result<LoopEnd, EpisodeError> = (|| {
        loop {
            if num_scans >= config.budget.max_steps {
                return Ok(LoopEnd::Failure("step budget exceeded".into()));
            }

            // Scan and integrate.
            let views = panoramic_scan(&scenario.map, &scenario.objects, pose, &config.sensor)?;
            num_scans += 1;
            belief.observe(pose.cell, Terrain::Free)?;
            for view in &views {
                belief.integrate_observation(view)?;
            }

            // Simulated detector, with optional dropout.
            let mut objects_per_direction: Vec<Vec<String>> = Vec::with_capacity(NUM_DIRECTIONS);
            let mut target_seen = false;
            for view in &views {
                let mut names = Vec::with_capacity(view.detected_objects.len());
                for det in &view.detected_objects {
                    if config.sensor.detection_dropout > 0.0
                        && rng.gen_bool(config.sensor.detection_dropout)
                    {
                        continue;
                    }
                    if det.class_name == config.target_object {
                        target_seen = true;
                    }
                    names.push(det.class_name.clone());
                }
                objects_per_direction.push(names);
            }

            let mut record = DecisionRecord {
                step: num_scans,
                pose,
                objects_per_direction: objects_per_direction.clone(),
                ranks: None,
                ranker_fallback: None,
                scores: Vec::new(),
                moves: Vec::new(),
                transcript: Vec::new(),
                events: Vec::new(),
            };

            if target_seen {
                record.events.push("target detected".into());
                log.push(record);
                return Ok(LoopEnd::Success);
            }

            // Frontier bookkeeping: tag this scan's visible frontier cells
            // with the direction they were seen in.
            let frontier_cells: HashSet<Cell> = detect_frontiers(&belief).into_iter().collect();
            let mut tagged: Vec<(Cell, u8)> = Vec::new();
            for view in &views {
                for &(cell, terrain) in &view.visible_cells {
                    if terrain == Terrain::Free && frontier_cells.contains(&cell) {
                        tagged.push((cell, view.direction_index));
                    }
                }
            }
            update_frontier_list(&mut list, &belief, &tagged, pose.cell);

            if list.is_empty() {
                record.events.push("frontier list exhausted".into());
                log.push(record);
                return Ok(LoopEnd::Failure("frontier list exhausted".into()));
            }

            // One ranker query per scan for the ranked policies.
            let mut rank1_direction: Option<u8> = None;
            if config.choice.needs_ranker() {
                let request = RankerRequest {
                    target_object: config.target_object.clone(),
                    per_direction_objects: objects_per_direction
                        .clone()
                        .try_into()
                        .expect("eight directions"),
                    categories: scenario.map.categories().clone(),
                };
                let ranker = ranker.as_deref_mut().expect("checked above");
                let ranks = match ranker.rank(&request) {
                    Ok(response) => {
                        record.transcript = response
                            .transcript
                            .into_iter()
                            .map(|ex| TranscriptRecord::from_exchange(0, num_scans as u64, ex))
                            .collect();
                        response.direction_ranks
                    }
                    // Malformed or failed model output degrades to the
                    // distance-only fallback; a rejected request or a replay
                    // mismatch is a hard error, never silently papered over.
                    Err(
                        e @ (RankerError::InvalidRequest(_)
                        | RankerError::TranscriptDivergence { .. }
                        | RankerError::TranscriptExhausted),
                    ) => {
                        return Err(EpisodeError::Ranker(e));
                    }
                    Err(e) => {
                        record.ranker_fallback = Some(e.to_string());
                        distance_fallback_ranks(&list, &tagged)
                    }
                };

                // Per-frontier reciprocal scores for this query, fused into
                // the cumulative scores.
                let mut contributions: Vec<(FrontierId, f64)> = Vec::with_capacity(tagged.len());
                for (cell, direction) in &tagged {
                    let id = list.id_at_cell(*cell).expect("just updated");
                    let entry = list.get(id).expect("listed id");
                    let weight = distance_weight(entry.last_distance, &config.weights)?;
                    let rank = ranks.rank_of(*direction as usize) as f64;
                    contributions.push((id, weight / rank));
                }
                let query_scores = ScoreVector::from_entries(contributions)?;
                let cumulative = ScoreVector::from_entries(
                    list.entries().iter().map(|e| (e.id, e.cumulative_score)),
                )?;
                let fused = fuse(&cumulative, &query_scores);
                for (id, score) in fused.iter() {
                    let delta = score - cumulative.get(id);
                    if delta != 0.0 {
                        list.add_score(id, delta);
                    }
                }

                rank1_direction = ranks.position_of_rank(1).map(|d| d as u8);
                record.ranks = Some(ranks.as_slice().to_vec());
            }
            record.scores = list
                .entries()
                .iter()
                .map(|e| (e.id, e.cumulative_score))
                .collect();

            // Travel toward a frontier, replanning around bumps, dropping
            // frontiers that repeatedly yield no path.
            'travel: loop {
                if list.is_empty() {
                    record.events.push("frontier list exhausted".into());
                    log.push(record);
                    return Ok(LoopEnd::Failure("frontier list exhausted".into()));
                }
                let chosen = match config.choice {
                    FrontierChoice::ArgmaxFused => {
                        select_frontier(&list, SelectionPolicy::ArgmaxFused, None, &mut rng)?
                    }
                    FrontierChoice::ProtoRandom => select_frontier(
                        &list,
                        SelectionPolicy::ProtoRandom,
                        rank1_direction,
                        &mut rng,
                    )?,
                    FrontierChoice::RandomUniform => {
                        eval::random_frontier_baseline(&list, &mut rng).map_err(|e| {
                            EpisodeError::InvalidConfig(format!("baseline selection: {e}"))
                        })?
                    }
                    FrontierChoice::Nearest => eval::nearest_frontier_baseline(&list, pose.cell)
                        .map_err(|e| {
                            EpisodeError::InvalidConfig(format!("baseline selection: {e}"))
                        })?,
                };
                let target_cell = list.get(chosen).expect("selected id").cell;

                'drive: loop {
                    let plan = astar(&belief, pose.cell, target_cell, PlanMode::OptimisticUnknown)?;
                    let Some(path) = plan else {
                        let count = nopath_counts.entry(chosen).or_insert(0);
                        *count += 1;
                        if *count >= NOPATH_DROP_THRESHOLD {
                            list.remove(chosen);
                            record.moves.push(MoveRecord {
                                frontier_id: chosen,
                                target_cell,
                                outcome: MoveOutcome::Dropped,
                                planned_length: 0.0,
                                traveled_delta: 0.0,
                            });
                        } else {
                            record.moves.push(MoveRecord {
                                frontier_id: chosen,
                                target_cell,
                                outcome: MoveOutcome::NoPath,
                                planned_length: 0.0,
                                traveled_delta: 0.0,
                            });
                        }
                        continue 'travel;
                    };

                    let (new_pose, delta, bump) = execute_path(&scenario.map, pose, &path)?;
                    pose = new_pose;
                    traveled += delta;
                    // Standing on a cell confirms it free. Only the pose cell
                    // is marked: map knowledge otherwise comes from scans, so
                    // cells merely driven through stay unknown until seen and
                    // keep their frontiers alive.
                    belief.observe(pose.cell, Terrain::Free)?;

                    if let Some(bump) = bump {
                        num_bumps += 1;
                        belief.observe(bump.blocked_cell, Terrain::Occupied)?;
                        record.moves.push(MoveRecord {
                            frontier_id: chosen,
                            target_cell,
                            outcome: MoveOutcome::Bumped {
                                cell: bump.blocked_cell,
                            },
                            planned_length: path.length,
                            traveled_delta: delta,
                        });
                        if traveled > max_traveled {
                            log.push(record);
                            return Ok(LoopEnd::Failure("travel budget exceeded".into()));
                        }
                        // Same frontier, fresh plan around the new obstacle.
                        continue 'drive;
                    }

                    record.moves.push(MoveRecord {
                        frontier_id: chosen,
                        target_cell,
                        outcome: MoveOutcome::Arrived,
                        planned_length: path.length,
                        traveled_delta: delta,
                    });
                    if traveled > max_traveled {
                        log.push(record);
                        return Ok(LoopEnd::Failure("travel budget exceeded".into()));
                    }
                    break 'travel;
                }
            }
            log.push(record);
        }
    })();

    let (success, failure_reason) = match outcome? {
        LoopEnd::Success => (true, None),
        LoopEnd::Failure(reason) => (false, Some(reason)),
    };
    if success && traveled < optimal {
        // Immediate-detection convention: an episode that succeeds without
        // moving scores as a perfect episode.
        traveled = optimal;
    }

    Ok(EpisodeResult {
        success,
        traveled,
        optimal,
        num_scans,
        num_bumps,
        failure_reason,
        decision_log: log,
    })
}

fn validate_config(scenario: &Scenario, config: &EpisodeConfig) -> Result<(), EpisodeError> {
    if config.target_object.trim().is_empty() {
        return Err(EpisodeError::InvalidConfig("empty target object".into()));
    }
    if !scenario
        .objects
        .iter()
        .any(|o| o.class_name == config.target_object)
    {
        return Err(EpisodeError::InvalidConfig(format!(
            "target class \"{}\" does not exist in the scenario",
            config.target_object
        )));
    }
    if !scenario.map.is_free(config.start.cell) {
        return Err(EpisodeError::InvalidConfig(format!(
            "start cell {} is not free",
            config.start.cell
        )));
    }
    if config.start.heading as usize >= NUM_DIRECTIONS {
        return Err(EpisodeError::InvalidConfig(format!(
            "heading {} out of range",
            config.start.heading
        )));
    }
    let multiplier = config.budget.max_traveled_multiplier;
    if config.budget.max_steps == 0 || multiplier.is_nan() || multiplier <= 0.0 {
        return Err(EpisodeError::InvalidConfig(
            "budgets must be positive".into(),
        ));
    }
    if config.weights.tau.is_nan() || config.weights.tau <= 0.0 {
        return Err(EpisodeError::InvalidConfig(format!(
            "weight tau {} must be positive",
            config.weights.tau
        )));
    }
    if config.sensor.max_range == 0 {
        return Err(EpisodeError::InvalidConfig(
            "sensor range must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.sensor.detection_dropout) {
        return Err(EpisodeError::InvalidConfig(format!(
            "detection dropout {} outside [0, 1]",
            config.sensor.detection_dropout
        )));
    }
    Ok(())
}
