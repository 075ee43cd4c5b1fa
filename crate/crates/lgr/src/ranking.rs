//! Reciprocal-rank scoring and multi-query fusion.
//!
//! A ranking assigns each candidate a rank r (1 = best); its score is the
//! reciprocal 1/r, weighted by a monotonically decreasing function of the
//! candidate's distance. Rankings taken from different viewpoints are fused
//! by elementwise addition of their score vectors, and the frontier with the
//! highest fused score wins.

use crate::mapping::{FrontierId, FrontierList};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("ranks {0:?} are not a permutation of 1..={1}")]
    NotAPermutation(Vec<u32>, usize),
    #[error("got {weights} weights for {ranks} ranks")]
    LengthMismatch { ranks: usize, weights: usize },
    #[error("weight {0} outside (0, 1]")]
    InvalidWeight(f64),
    #[error("distance {0} is negative")]
    NegativeDistance(f64),
    #[error("decay length {0} must be positive")]
    InvalidTau(f64),
    #[error("score {0} is negative or non-finite")]
    InvalidScore(f64),
    #[error("duplicate id {0} in score vector")]
    DuplicateId(FrontierId),
    #[error("frontier list is empty: exploration exhausted")]
    EmptyFrontierList,
}

/// A validated ranking: a permutation of 1..=N, smaller = higher priority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct RankVector(Vec<u32>);

impl RankVector {
    pub fn new(ranks: Vec<u32>) -> Result<Self, RankError> {
        let n = ranks.len();
        let mut seen = vec![false; n];
        for &r in &ranks {
            if r == 0 || r as usize > n || seen[(r - 1) as usize] {
                return Err(RankError::NotAPermutation(ranks.clone(), n));
            }
            seen[(r - 1) as usize] = true;
        }
        Ok(Self(ranks))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Rank of item `i` (1 = best).
    pub fn rank_of(&self, i: usize) -> u32 {
        self.0[i]
    }

    /// Index of the item holding the given rank.
    pub fn position_of_rank(&self, rank: u32) -> Option<usize> {
        self.0.iter().position(|&r| r == rank)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

impl TryFrom<Vec<u32>> for RankVector {
    type Error = RankError;

    fn try_from(v: Vec<u32>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<RankVector> for Vec<u32> {
    fn from(v: RankVector) -> Self {
        v.0
    }
}

/// Nonnegative scores keyed by frontier id. Fusion-friendly: absent ids are
/// implicitly zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(BTreeMap<FrontierId, f64>);

impl ScoreVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = (FrontierId, f64)>,
    ) -> Result<Self, RankError> {
        let mut map = BTreeMap::new();
        for (id, score) in entries {
            if !score.is_finite() || score < 0.0 {
                return Err(RankError::InvalidScore(score));
            }
            if map.insert(id, score).is_some() {
                return Err(RankError::DuplicateId(id));
            }
        }
        Ok(Self(map))
    }

    pub fn get(&self, id: FrontierId) -> f64 {
        self.0.get(&id).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FrontierId, f64)> + '_ {
        self.0.iter().map(|(&id, &s)| (id, s))
    }
}

/// Scores for one query: item `i` gets `weights[i] / ranks[i]`, keyed by its
/// position. Callers ranking richer candidates attach their own ids by
/// rebuilding the vector.
pub fn reciprocal_rank_scores(
    ranks: &RankVector,
    weights: &[f64],
) -> Result<ScoreVector, RankError> {
    if weights.len() != ranks.len() {
        return Err(RankError::LengthMismatch {
            ranks: ranks.len(),
            weights: weights.len(),
        });
    }
    for &w in weights {
        if !w.is_finite() || w <= 0.0 || w > 1.0 {
            return Err(RankError::InvalidWeight(w));
        }
    }
    ScoreVector::from_entries(
        ranks
            .as_slice()
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (&r, &w))| (i as FrontierId, w / r as f64)),
    )
}

/// Distance-weighting configuration: `w(d) = exp(-d / tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    /// Decay length in cells. Defaults to the default sensor range.
    pub tau: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { tau: 12.0 }
    }
}

/// Exponentially decaying distance weight, in (0, 1].
pub fn distance_weight(d: f64, cfg: &WeightConfig) -> Result<f64, RankError> {
    if cfg.tau.is_nan() || cfg.tau <= 0.0 {
        return Err(RankError::InvalidTau(cfg.tau));
    }
    if d.is_nan() || d < 0.0 {
        return Err(RankError::NegativeDistance(d));
    }
    Ok((-d / cfg.tau).exp())
}

/// Elementwise sum of two score vectors. Ids present in only one operand
/// keep their value; the operation is commutative and associative.
pub fn fuse(a: &ScoreVector, b: &ScoreVector) -> ScoreVector {
    let mut out = a.0.clone();
    for (&id, &s) in &b.0 {
        *out.entry(id).or_insert(0.0) += s;
    }
    ScoreVector(out)
}

/// How the next subgoal is picked from the frontier list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// The frontier with the highest fused cumulative score; ties broken by
    /// smallest id.
    ArgmaxFused,
    /// A uniformly random frontier among those discovered in the latest
    /// rank-1 direction, falling back to argmax when that direction has no
    /// surviving frontier.
    ProtoRandom,
}

/// Pick the next frontier.
///
/// `latest_rank1_direction` feeds the proto-random policy; it is the
/// direction index that received rank 1 in the most recent query.
pub fn select_frontier(
    list: &FrontierList,
    policy: SelectionPolicy,
    latest_rank1_direction: Option<u8>,
    rng: &mut impl Rng,
) -> Result<FrontierId, RankError> {
    if list.is_empty() {
        return Err(RankError::EmptyFrontierList);
    }
    match policy {
        SelectionPolicy::ArgmaxFused => Ok(argmax_fused(list)),
        SelectionPolicy::ProtoRandom => {
            let Some(direction) = latest_rank1_direction else {
                return Ok(argmax_fused(list));
            };
            let candidates: Vec<FrontierId> = list
                .entries()
                .iter()
                .filter(|e| e.direction_at_discovery == direction)
                .map(|e| e.id)
                .collect();
            if candidates.is_empty() {
                Ok(argmax_fused(list))
            } else {
                Ok(candidates[rng.gen_range(0..candidates.len())])
            }
        }
    }
}

fn argmax_fused(list: &FrontierList) -> FrontierId {
    let mut best = &list.entries()[0];
    for e in &list.entries()[1..] {
        if e.cumulative_score > best.cumulative_score
            || (e.cumulative_score == best.cumulative_score && e.id < best.id)
        {
            best = e;
        }
    }
    best.id
}
