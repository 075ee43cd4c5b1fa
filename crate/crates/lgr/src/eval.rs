//! SPL scoring, frontier-selection baselines, and paired batch experiments.
//!
//! A batch presents identical (start, target) pairs to every method, runs
//! episodes concurrently with per-episode RNGs derived from the master seed
//! (so concurrency never changes results), and writes three reports: a
//! per-episode CSV, a JSON summary, and a plain-text SPL comparison table.

use crate::agent::{
    belief_of_truth, run_episode, visibility_region, BudgetConfig, EpisodeConfig, EpisodeError,
    EpisodeResult, FrontierChoice,
};
use crate::grid::Cell;
use crate::mapping::{FrontierId, FrontierList};
use crate::planner::{shortest_path_to_set, PlanMode};
use crate::rankers::{HttpEndpoint, LlmConfig, LlmRanker, OracleRanker, RankerError};
use crate::ranking::WeightConfig;
use crate::world::{generate_scenario, GenParams, Pose, Scenario, SensorConfig, WorldError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episodes to score")]
    EmptyResults,
    #[error("episode has non-positive optimal length {0}")]
    InvalidOptimal(f64),
    #[error("frontier list is empty")]
    EmptyFrontierList,
    #[error("invalid batch config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Ranker(#[from] RankerError),
    #[error(transparent)]
    Plan(#[from] crate::planner::PlanError),
    #[error("report i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Success weighted by path length, averaged over episodes:
/// `(1/N) * sum(S_i * L*_i / max(L_i, L*_i))`.
pub fn compute_spl(results: &[EpisodeResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut sum = 0.0;
    for r in results {
        if r.optimal.is_nan() || r.optimal <= 0.0 {
            return Err(EvalError::InvalidOptimal(r.optimal));
        }
        if r.success {
            sum += r.optimal / r.traveled.max(r.optimal);
        }
    }
    Ok(sum / results.len() as f64)
}

/// Uniformly random frontier.
pub fn random_frontier_baseline(
    list: &FrontierList,
    rng: &mut impl Rng,
) -> Result<FrontierId, EvalError> {
    if list.is_empty() {
        return Err(EvalError::EmptyFrontierList);
    }
    Ok(list.entries()[rng.gen_range(0..list.len())].id)
}

/// Closest frontier by Euclidean distance from the viewpoint, ties broken by
/// smallest id.
pub fn nearest_frontier_baseline(
    list: &FrontierList,
    viewpoint: Cell,
) -> Result<FrontierId, EvalError> {
    if list.is_empty() {
        return Err(EvalError::EmptyFrontierList);
    }
    let mut best = &list.entries()[0];
    let mut best_d = viewpoint.euclidean(best.cell);
    for e in &list.entries()[1..] {
        let d = viewpoint.euclidean(e.cell);
        if d < best_d || (d == best_d && e.id < best.id) {
            best = e;
            best_d = d;
        }
    }
    Ok(best.id)
}

/// A method column in the comparison: which ranker (if any) and which
/// selection rule an episode runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LgrOracle,
    LgrLlm,
    RandomFrontier,
    NearestFrontier,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LgrOracle => "lgr-oracle",
            Self::LgrLlm => "lgr-llm",
            Self::RandomFrontier => "random-frontier",
            Self::NearestFrontier => "nearest-frontier",
        }
    }

    fn choice(self, lgr_choice: FrontierChoice) -> FrontierChoice {
        match self {
            Self::LgrOracle | Self::LgrLlm => lgr_choice,
            Self::RandomFrontier => FrontierChoice::RandomUniform,
            Self::NearestFrontier => FrontierChoice::Nearest,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_episodes() -> u32 {
    100
}

fn default_true() -> bool {
    true
}

fn default_separation() -> f64 {
    15.0
}

fn default_lgr_choice() -> FrontierChoice {
    FrontierChoice::ArgmaxFused
}

/// Batch experiment configuration; serializable so `batch --config FILE`
/// can load it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchConfig {
    /// Scenario JSON files to load.
    #[serde(default)]
    pub scenario_files: Vec<PathBuf>,
    /// Seeds to generate scenarios from, using `generation`.
    #[serde(default)]
    pub generation_seeds: Vec<u64>,
    #[serde(default)]
    pub generation: GenParams,
    #[serde(default = "default_episodes")]
    pub episodes_per_scenario: u32,
    pub methods: Vec<Method>,
    /// Present identical (start, target) pairs to every method.
    #[serde(default = "default_true")]
    pub paired: bool,
    #[serde(default)]
    pub master_seed: u64,
    /// Minimum ground-truth shortest-path length from start to the nearest
    /// target-visibility cell, excluding trivial episodes even through
    /// walls.
    #[serde(default = "default_separation")]
    pub min_separation: f64,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    /// Selection rule used by the lgr-* methods.
    #[serde(default = "default_lgr_choice")]
    pub lgr_choice: FrontierChoice,
    /// Endpoint for lgr-llm; falls back to the environment when absent.
    #[serde(default)]
    pub llm: Option<LlmConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            scenario_files: Vec::new(),
            generation_seeds: Vec::new(),
            generation: GenParams::default(),
            episodes_per_scenario: default_episodes(),
            methods: vec![Method::LgrOracle, Method::RandomFrontier],
            paired: true,
            master_seed: 0,
            min_separation: default_separation(),
            sensor: SensorConfig::default(),
            weights: WeightConfig::default(),
            budget: BudgetConfig::default(),
            lgr_choice: default_lgr_choice(),
            llm: None,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub scenario: String,
    pub method: Method,
    pub pair: u32,
    pub start_x: i32,
    pub start_y: i32,
    pub target: String,
    pub success: bool,
    pub traveled: f64,
    pub optimal: f64,
    pub spl_term: f64,
    pub scans: u32,
    pub bumps: u32,
    pub failure_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub scenario: String,
    pub method: Method,
    pub episodes: u32,
    pub spl: f64,
    pub success_rate: f64,
    pub mean_traveled: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplReport {
    pub config: BatchConfig,
    pub scenario_names: Vec<String>,
    /// Per (scenario, method) summaries, scenario-major.
    pub summaries: Vec<MethodSummary>,
    /// Per-method summaries over all scenarios, under the name "overall".
    pub overall: Vec<MethodSummary>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<EpisodeRow>,
}

/// One sampled episode setup, shared across methods when pairing is on.
#[derive(Debug, Clone, PartialEq)]
struct EpisodePair {
    start: Cell,
    target: String,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic seed derivation: fold each component through splitmix64.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &p in parts {
        s = splitmix64(s ^ splitmix64(p.wrapping_add(0x517cc1b727220a95)));
    }
    s
}

const PAIR_SAMPLE_ATTEMPTS: u32 = 200;

/// Sample (start, target) pairs with the minimum shortest-path separation.
/// When no attempt reaches the separation, the farthest candidate found is
/// kept rather than failing the batch.
fn sample_pairs(
    scenario: &Scenario,
    regions: &BTreeMap<String, HashSet<Cell>>,
    count: u32,
    min_separation: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpisodePair>, EvalError> {
    let classes: Vec<&String> = regions
        .iter()
        .filter(|(_, region)| !region.is_empty())
        .map(|(class, _)| class)
        .collect();
    if classes.is_empty() {
        return Err(EvalError::InvalidConfig(
            "scenario has no visible target classes".into(),
        ));
    }
    let free = scenario.map.free_cells();
    let truth = belief_of_truth(scenario);

    let mut pairs = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut best: Option<(EpisodePair, f64)> = None;
        for _ in 0..PAIR_SAMPLE_ATTEMPTS {
            let target = classes[rng.gen_range(0..classes.len())].clone();
            let start = free[rng.gen_range(0..free.len())];
            let region = &regions[&target];
            let Some((_, dist)) = shortest_path_to_set(
                &truth,
                start,
                |c| region.contains(&c),
                PlanMode::KnownFreeOnly,
            )?
            else {
                continue;
            };
            let candidate = EpisodePair { start, target };
            if dist >= min_separation {
                best = Some((candidate, dist));
                break;
            }
            if best.as_ref().is_none_or(|(_, d)| dist > *d) {
                best = Some((candidate, dist));
            }
        }
        let Some((pair, _)) = best else {
            return Err(EvalError::InvalidConfig(
                "could not sample any reachable (start, target) pair".into(),
            ));
        };
        pairs.push(pair);
    }
    Ok(pairs)
}

struct LoadedScenario {
    name: String,
    scenario: Scenario,
}

fn load_scenarios(config: &BatchConfig) -> Result<Vec<LoadedScenario>, EvalError> {
    let mut out = Vec::new();
    for path in &config.scenario_files {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        out.push(LoadedScenario {
            name,
            scenario: Scenario::load(path)?,
        });
    }
    for &seed in &config.generation_seeds {
        out.push(LoadedScenario {
            name: format!("seed-{seed}"),
            scenario: generate_scenario(seed, &config.generation)?,
        });
    }
    if out.is_empty() {
        return Err(EvalError::InvalidConfig(
            "no scenario files and no generation seeds".into(),
        ));
    }
    Ok(out)
}

/// Run the full experiment described by `config`; write reports if
/// `output_dir` is set.
pub fn run_batch(config: &BatchConfig) -> Result<SplReport, EvalError> {
    if config.methods.is_empty() {
        return Err(EvalError::InvalidConfig("no methods listed".into()));
    }
    if config.episodes_per_scenario == 0 {
        return Err(EvalError::InvalidConfig(
            "episodes_per_scenario is 0".into(),
        ));
    }
    let scenarios = load_scenarios(config)?;

    // Fail fast on endpoint config when the live method is requested.
    let endpoint = if config.methods.contains(&Method::LgrLlm) {
        Some(match &config.llm {
            Some(cfg) => HttpEndpoint::new(cfg.clone()),
            None => HttpEndpoint::from_env()?,
        })
    } else {
        None
    };

    // Sample pairs. With pairing on, one pair list per scenario shared by
    // all methods; otherwise an independent list per method.
    let mut pair_lists: Vec<Vec<Vec<EpisodePair>>> = Vec::new(); // [scenario][method]
    for (s_idx, loaded) in scenarios.iter().enumerate() {
        let regions: BTreeMap<String, HashSet<Cell>> = loaded
            .scenario
            .object_classes()
            .into_iter()
            .map(|class| {
                let region = visibility_region(&loaded.scenario, &class, &config.sensor);
                (class, region)
            })
            .collect();
        let mut per_method = Vec::new();
        if config.paired {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, &[s_idx as u64, 0xA11]));
            let pairs = sample_pairs(
                &loaded.scenario,
                &regions,
                config.episodes_per_scenario,
                config.min_separation,
                &mut rng,
            )?;
            per_method = vec![pairs; config.methods.len()];
        } else {
            for m_idx in 0..config.methods.len() {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    config.master_seed,
                    &[s_idx as u64, 0xA11, m_idx as u64],
                ));
                per_method.push(sample_pairs(
                    &loaded.scenario,
                    &regions,
                    config.episodes_per_scenario,
                    config.min_separation,
                    &mut rng,
                )?);
            }
        }
        pair_lists.push(per_method);
    }

    // Flatten into jobs and run them concurrently. Results are keyed by
    // (scenario, method, pair) and reassembled in order, so the schedule
    // cannot affect the report.
    struct Job<'a> {
        s_idx: usize,
        m_idx: usize,
        p_idx: usize,
        scenario: &'a Scenario,
        method: Method,
        pair: &'a EpisodePair,
    }
    let mut jobs = Vec::new();
    for (s_idx, loaded) in scenarios.iter().enumerate() {
        for (m_idx, &method) in config.methods.iter().enumerate() {
            for (p_idx, pair) in pair_lists[s_idx][m_idx].iter().enumerate() {
                jobs.push(Job {
                    s_idx,
                    m_idx,
                    p_idx,
                    scenario: &loaded.scenario,
                    method,
                    pair,
                });
            }
        }
    }

    let mut results: Vec<((usize, usize, usize), EpisodeResult)> = jobs
        .par_iter()
        .map(|job| {
            let seed = derive_seed(
                config.master_seed,
                &[job.s_idx as u64, job.m_idx as u64, job.p_idx as u64],
            );
            let episode_config = EpisodeConfig {
                target_object: job.pair.target.clone(),
                start: Pose::new(job.pair.start, 0),
                choice: job.method.choice(config.lgr_choice),
                budget: config.budget,
                seed,
                weights: config.weights,
                sensor: config.sensor,
                max_rankable_frontiers: 8,
            };
            let result = match job.method {
                Method::LgrOracle => {
                    let mut ranker = OracleRanker::new(job.scenario.prior.clone());
                    run_episode(job.scenario, &episode_config, Some(&mut ranker))
                }
                Method::LgrLlm => {
                    let http = endpoint.as_ref().expect("endpoint built above");
                    let mut ranker =
                        LlmRanker::with_retries(http.clone(), http.config().max_retries);
                    run_episode(job.scenario, &episode_config, Some(&mut ranker))
                }
                Method::RandomFrontier | Method::NearestFrontier => {
                    run_episode(job.scenario, &episode_config, None)
                }
            }?;
            Ok(((job.s_idx, job.m_idx, job.p_idx), result))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    results.sort_by_key(|(key, _)| *key);

    // Assemble rows and summaries.
    let mut rows = Vec::with_capacity(results.len());
    let mut grouped: BTreeMap<(usize, usize), Vec<EpisodeResult>> = BTreeMap::new();
    for ((s_idx, m_idx, p_idx), result) in results {
        let method = config.methods[m_idx];
        let pair = &pair_lists[s_idx][m_idx][p_idx];
        rows.push(EpisodeRow {
            scenario: scenarios[s_idx].name.clone(),
            method,
            pair: p_idx as u32,
            start_x: pair.start.x,
            start_y: pair.start.y,
            target: pair.target.clone(),
            success: result.success,
            traveled: result.traveled,
            optimal: result.optimal,
            spl_term: result.spl_term(),
            scans: result.num_scans,
            bumps: result.num_bumps,
            failure_reason: result.failure_reason.clone(),
        });
        grouped.entry((s_idx, m_idx)).or_default().push(result);
    }

    let summarize = |scenario: String, method: Method, results: &[EpisodeResult]| {
        let n = results.len() as f64;
        MethodSummary {
            scenario,
            method,
            episodes: results.len() as u32,
            spl: compute_spl(results).unwrap_or(0.0),
            success_rate: results.iter().filter(|r| r.success).count() as f64 / n,
            mean_traveled: results.iter().map(|r| r.traveled).sum::<f64>() / n,
        }
    };

    let mut summaries = Vec::new();
    for ((s_idx, m_idx), results) in &grouped {
        summaries.push(summarize(
            scenarios[*s_idx].name.clone(),
            config.methods[*m_idx],
            results,
        ));
    }
    let mut overall = Vec::new();
    let mut warnings = Vec::new();
    for (m_idx, &method) in config.methods.iter().enumerate() {
        let all: Vec<EpisodeResult> = grouped
            .iter()
            .filter(|((_, m), _)| *m == m_idx)
            .flat_map(|(_, rs)| rs.iter().cloned())
            .collect();
        let summary = summarize("overall".into(), method, &all);
        if summary.success_rate == 0.0 {
            let warning = format!(
                "method {method} failed every one of its {} episodes",
                summary.episodes
            );
            eprintln!("warning: {warning}");
            warnings.push(warning);
        }
        overall.push(summary);
    }

    // The echoed config must not leak credentials into reports.
    let mut echoed = config.clone();
    if let Some(llm) = echoed.llm.as_mut() {
        llm.api_key = None;
    }

    let report = SplReport {
        config: echoed,
        scenario_names: scenarios.iter().map(|s| s.name.clone()).collect(),
        summaries,
        overall,
        warnings,
        rows,
    };

    if let Some(dir) = &config.output_dir {
        write_reports(&report, dir)?;
    }
    Ok(report)
}

/// Render the per-episode CSV exactly as written to disk.
pub fn render_csv(report: &SplReport) -> Result<String, EvalError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "scenario",
        "method",
        "pair",
        "start_x",
        "start_y",
        "target",
        "success",
        "traveled",
        "optimal",
        "spl_term",
        "scans",
        "bumps",
        "failure_reason",
    ])?;
    for row in &report.rows {
        writer.write_record([
            row.scenario.as_str(),
            row.method.as_str(),
            &row.pair.to_string(),
            &row.start_x.to_string(),
            &row.start_y.to_string(),
            row.target.as_str(),
            if row.success { "1" } else { "0" },
            &format!("{:.6}", row.traveled),
            &format!("{:.6}", row.optimal),
            &format!("{:.6}", row.spl_term),
            &row.scans.to_string(),
            &row.bumps.to_string(),
            row.failure_reason.as_deref().unwrap_or(""),
        ])?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| EvalError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Render the SPL comparison table: one row per method, one column per
/// scenario.
pub fn render_comparison(report: &SplReport) -> String {
    let scenarios = &report.scenario_names;
    let method_width = report
        .config
        .methods
        .iter()
        .map(|m| m.as_str().len())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let col_width = scenarios
        .iter()
        .map(|s| s.len())
        .chain([7])
        .max()
        .unwrap_or(7);

    let mut out = String::from("SPL comparison\n\n");
    out.push_str(&format!("{:<method_width$}", "Method"));
    for s in scenarios {
        out.push_str(&format!(" | {s:>col_width$}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(method_width));
    for _ in scenarios {
        out.push_str(&format!("-+-{}", "-".repeat(col_width)));
    }
    out.push('\n');
    for &method in &report.config.methods {
        out.push_str(&format!("{:<method_width$}", method.as_str()));
        for s in scenarios {
            let spl = report
                .summaries
                .iter()
                .find(|x| x.method == method && &x.scenario == s)
                .map(|x| format!("{:.3}", x.spl))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(" | {spl:>col_width$}"));
        }
        out.push('\n');
    }
    out
}

/// Write report.csv, summary.json, and comparison.txt into `dir`.
pub fn write_reports(report: &SplReport, dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), render_csv(report)?)?;
    let mut json = serde_json::to_string_pretty(report)
        .map_err(|e| EvalError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    json.push('\n');
    std::fs::write(dir.join("summary.json"), json)?;
    std::fs::write(dir.join("comparison.txt"), render_comparison(report))?;
    Ok(())
}
