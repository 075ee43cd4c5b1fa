//! Frontier-based object-goal navigation in seeded 2D gridworlds, with
//! language-model-guided frontier ranking.
//!
//! An exploring agent holds a three-state occupancy grid, scans its
//! surroundings in eight 45-degree wedges, asks a pluggable ranking backend
//! which direction looks most promising for the target object, fuses the
//! per-query rankings into cumulative reciprocal-rank scores, plans with A*,
//! and is evaluated with SPL against random- and nearest-frontier baselines.
//!
//! Module map:
//! - [`grid`] — cell coordinates, direction math, discrete line traversal
//! - [`world`] — hidden ground truth, scenario generation, directional sensor
//! - [`mapping`] — belief grid, frontier detection, frontier-list upkeep
//! - [`ranking`] — reciprocal-rank scores, distance weights, fusion, selection
//! - [`prompts`] — prompt construction and strict response parsing
//! - [`rankers`] — oracle / transcript-replay / live HTTP ranking backends
//! - [`planner`] — A* on the belief grid and bumper-aware path execution
//! - [`agent`] — the scan → rank → fuse → select → move episode loop
//! - [`eval`] — SPL, baselines, paired batch experiments, report writers

pub mod agent;
pub mod eval;
pub mod grid;
pub mod mapping;
pub mod planner;
pub mod prompts;
pub mod rankers;
pub mod ranking;
pub mod world;
