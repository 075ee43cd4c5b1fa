//! Pluggable ranking backends behind one contract.
//!
//! Every backend receives the per-direction detections and the target object
//! and must answer with a room category per direction plus a full permutation
//! ranking of the eight directions — or a typed error, never a partial
//! ranking. Three backends ship: a deterministic oracle built on an
//! object-room co-occurrence table (hermetic tests and batch baselines), a
//! transcript replayer, and a live HTTP language-model client.

mod llm;
mod replay;

pub use llm::{ChatEndpoint, HttpEndpoint, LlmConfig, LlmRanker};
pub use replay::ReplayRanker;

use crate::grid::NUM_DIRECTIONS;
use crate::prompts::{Exchange, PromptError};
use crate::ranking::{RankError, RankVector};
use crate::world::{RoomCategoryList, WALL_CATEGORY};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Additive smoothing used when scoring object-room pairs absent from the
/// prior table.
pub const PRIOR_SMOOTHING_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RankerError {
    #[error("invalid ranker request: {0}")]
    InvalidRequest(String),
    #[error("invalid prior table: {0}")]
    InvalidPrior(String),
    #[error("response parse: {0}")]
    Parse(#[from] PromptError),
    #[error("rank vector: {0}")]
    Rank(#[from] RankError),
    #[error("transcript exhausted: no record for the next query")]
    TranscriptExhausted,
    #[error("transcript diverged: expected {expected_kind:?} prompt starting {expected_head:?}, found {found_head:?}")]
    TranscriptDivergence {
        expected_kind: crate::prompts::ExchangeKind,
        expected_head: String,
        found_head: String,
    },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed output after {attempts} attempts; last error: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("missing environment variable {0}")]
    MissingEnv(String),
}

/// One ranking query: what was seen in each of the eight directions, and
/// what we are looking for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankerRequest {
    pub target_object: String,
    pub per_direction_objects: [Vec<String>; NUM_DIRECTIONS],
    pub categories: RoomCategoryList,
}

impl RankerRequest {
    fn validate(&self) -> Result<(), RankerError> {
        if self.target_object.trim().is_empty() {
            return Err(RankerError::InvalidRequest("empty target object".into()));
        }
        if self.categories.is_empty() {
            return Err(RankerError::InvalidRequest("empty category list".into()));
        }
        Ok(())
    }
}

/// A backend's answer: a room guess per direction and a permutation ranking
/// of the directions, optionally with the raw exchanges that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerResponse {
    pub per_direction_room: [String; NUM_DIRECTIONS],
    pub direction_ranks: RankVector,
    pub transcript: Vec<Exchange>,
}

/// The contract every ranking backend implements.
pub trait Ranker {
    fn rank(&mut self, request: &RankerRequest) -> Result<RankerResponse, RankerError>;

    /// Short backend name for logs and reports.
    fn name(&self) -> &'static str;
}

/// Object-class to room-category probability table: `table[class][category]`
/// is P(category | class), summing to 1 over non-wall categories per class.
///
/// This small editable table is the hermetic surrogate for language-model
/// commonsense: scenario generation samples objects from it, and the oracle
/// ranker scores rooms against it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoOccurrencePrior {
    table: BTreeMap<String, BTreeMap<String, f64>>,
}

impl CoOccurrencePrior {
    pub fn new(table: BTreeMap<String, BTreeMap<String, f64>>) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &BTreeMap<String, BTreeMap<String, f64>> {
        &self.table
    }

    /// P(category | class); 0 for unlisted pairs.
    pub fn probability(&self, class: &str, category: &str) -> f64 {
        self.table
            .get(class)
            .and_then(|row| row.get(category))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(|s| s.as_str())
    }

    /// Check row sums and category domains against a category list.
    pub fn validate(&self, categories: &RoomCategoryList) -> Result<(), RankerError> {
        for (class, row) in &self.table {
            let mut sum = 0.0;
            for (category, &p) in row {
                if category == WALL_CATEGORY || !categories.contains(category) {
                    return Err(RankerError::InvalidPrior(format!(
                        "class \"{class}\" references category \"{category}\""
                    )));
                }
                if !p.is_finite() || p < 0.0 {
                    return Err(RankerError::InvalidPrior(format!(
                        "class \"{class}\" has probability {p} for \"{category}\""
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(RankerError::InvalidPrior(format!(
                    "row for \"{class}\" sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Load a table from a JSON file mapping class to category to
    /// probability.
    pub fn load(path: &std::path::Path) -> Result<Self, RankerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RankerError::InvalidPrior(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| RankerError::InvalidPrior(format!("{}: {e}", path.display())))
    }

    /// Write the table as pretty JSON.
    pub fn save(&self, path: &std::path::Path) -> Result<(), RankerError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| RankerError::InvalidPrior(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| RankerError::InvalidPrior(format!("{}: {e}", path.display())))
    }

    /// The built-in household table covering the default seven room
    /// categories.
    pub fn default_household() -> Self {
        let rows: &[(&str, &[(&str, f64)])] = &[
            (
                "armchair",
                &[
                    ("living room", 0.5),
                    ("reception room", 0.4),
                    ("home office", 0.1),
                ],
            ),
            ("bathtub", &[("bathroom", 1.0)]),
            ("bed", &[("bedroom", 1.0)]),
            (
                "bookshelf",
                &[("home office", 0.5), ("living room", 0.4), ("bedroom", 0.1)],
            ),
            (
                "coat rack",
                &[
                    ("reception room", 0.8),
                    ("home office", 0.1),
                    ("living room", 0.1),
                ],
            ),
            (
                "coffee table",
                &[("living room", 0.8), ("reception room", 0.2)],
            ),
            (
                "computer",
                &[("home office", 0.8), ("living room", 0.1), ("bedroom", 0.1)],
            ),
            (
                "desk",
                &[("home office", 0.7), ("bedroom", 0.2), ("living room", 0.1)],
            ),
            (
                "dining table",
                &[
                    ("kitchen", 0.5),
                    ("living room", 0.4),
                    ("reception room", 0.1),
                ],
            ),
            ("doormat", &[("reception room", 0.9), ("laundry room", 0.1)]),
            ("dryer", &[("laundry room", 1.0)]),
            ("ironing board", &[("laundry room", 0.8), ("bedroom", 0.2)]),
            (
                "lamp",
                &[
                    ("living room", 0.3),
                    ("bedroom", 0.3),
                    ("home office", 0.2),
                    ("reception room", 0.2),
                ],
            ),
            ("microwave", &[("kitchen", 0.9), ("home office", 0.1)]),
            (
                "mirror",
                &[("bathroom", 0.5), ("bedroom", 0.3), ("reception room", 0.2)],
            ),
            ("nightstand", &[("bedroom", 1.0)]),
            ("oven", &[("kitchen", 1.0)]),
            (
                "plant",
                &[
                    ("living room", 0.4),
                    ("reception room", 0.3),
                    ("home office", 0.2),
                    ("bathroom", 0.1),
                ],
            ),
            (
                "plate",
                &[
                    ("kitchen", 0.7),
                    ("living room", 0.2),
                    ("reception room", 0.1),
                ],
            ),
            ("printer", &[("home office", 1.0)]),
            ("refrigerator", &[("kitchen", 0.9), ("laundry room", 0.1)]),
            ("shower", &[("bathroom", 1.0)]),
            (
                "sink",
                &[("kitchen", 0.5), ("bathroom", 0.3), ("laundry room", 0.2)],
            ),
            ("sofa", &[("living room", 0.7), ("reception room", 0.3)]),
            ("toilet", &[("bathroom", 0.9), ("laundry room", 0.1)]),
            (
                "towel",
                &[("bathroom", 0.6), ("laundry room", 0.3), ("kitchen", 0.1)],
            ),
            (
                "tv",
                &[("living room", 0.7), ("bedroom", 0.2), ("home office", 0.1)],
            ),
            (
                "wardrobe",
                &[
                    ("bedroom", 0.8),
                    ("reception room", 0.1),
                    ("laundry room", 0.1),
                ],
            ),
            (
                "washing machine",
                &[("laundry room", 0.9), ("bathroom", 0.1)],
            ),
        ];
        let table = rows
            .iter()
            .map(|(class, row)| {
                (
                    class.to_string(),
                    row.iter()
                        .map(|(cat, p)| (cat.to_string(), *p))
                        .collect::<BTreeMap<_, _>>(),
                )
            })
            .collect();
        Self { table }
    }
}

/// Classify a detection list into the most likely room category.
///
/// Scores each non-wall category by the sum of `ln(P(category | class) + eps)`
/// over the detected objects and returns the argmax; ties (including the
/// empty detection list) resolve to the earliest category in list order.
pub fn oracle_classify(
    objects: &[String],
    prior: &CoOccurrencePrior,
    categories: &RoomCategoryList,
) -> String {
    let mut best: Option<(&str, f64)> = None;
    for category in categories.non_wall() {
        let score: f64 = objects
            .iter()
            .map(|o| (prior.probability(o, category) + PRIOR_SMOOTHING_EPSILON).ln())
            .sum();
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((category, score)),
        }
    }
    best.map(|(c, _)| c.to_string()).unwrap_or_default()
}

/// Deterministic ranking backend built on the co-occurrence prior.
///
/// Each direction is classified from its detections, then directions are
/// ordered by the prior probability of the target object's room match,
/// descending; ties resolve by direction index.
#[derive(Debug, Clone)]
pub struct OracleRanker {
    prior: CoOccurrencePrior,
}

impl OracleRanker {
    pub fn new(prior: CoOccurrencePrior) -> Self {
        Self { prior }
    }
}

impl Ranker for OracleRanker {
    fn rank(&mut self, request: &RankerRequest) -> Result<RankerResponse, RankerError> {
        request.validate()?;
        let rooms: Vec<String> = request
            .per_direction_objects
            .iter()
            .map(|objs| oracle_classify(objs, &self.prior, &request.categories))
            .collect();
        let relevance: Vec<f64> = rooms
            .iter()
            .map(|room| self.prior.probability(&request.target_object, room))
            .collect();

        let mut order: Vec<usize> = (0..NUM_DIRECTIONS).collect();
        order.sort_by(|&a, &b| {
            relevance[b]
                .partial_cmp(&relevance[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut ranks = vec![0u32; NUM_DIRECTIONS];
        for (rank0, &dir) in order.iter().enumerate() {
            ranks[dir] = rank0 as u32 + 1;
        }

        Ok(RankerResponse {
            per_direction_room: rooms.try_into().expect("eight directions"),
            direction_ranks: RankVector::new(ranks)?,
            transcript: Vec::new(),
        })
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}
