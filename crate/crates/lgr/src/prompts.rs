//! Prompt construction and strict response parsing for the ranking protocol.
//!
//! The exchange has a fixed shape: eight room-classification prompts (one per
//! view direction), then a single ranking prompt asking for all answered
//! steps to be ranked 1..N. Builders are byte-stable for fixed inputs and
//! pinned by golden files; parsers return typed errors, never partial
//! results. Step k corresponds to view direction k-1.

use crate::world::RoomCategoryList;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("response count {0} must be at least 1")]
    InvalidResponseCount(usize),
    #[error("response is empty")]
    EmptyResponse,
    #[error("category \"{0}\" is not in the room category list")]
    UnknownCategory(String),
    #[error("no block of well-formed ranking lines found")]
    NoRankedBlock,
    #[error("ranking block has {found} lines, expected {expected}")]
    CountMismatch { expected: usize, found: usize },
    #[error("rank {rank} outside 1..={max}")]
    RankOutOfRange { rank: u32, max: usize },
    #[error("rank {0} assigned more than once")]
    DuplicateRank(u32),
    #[error("rank {0} never assigned")]
    MissingRank(u32),
    #[error("step {step} outside 1..={max}")]
    StepOutOfRange { step: u32, max: usize },
    #[error("step {0} ranked more than once")]
    DuplicateStep(u32),
    #[error("step {0} never ranked")]
    MissingStep(u32),
}

const ROOM_PROMPT_TEMPLATE: &str =
    "The detected objects are: {od}. Which room category from {rlc} is most likely?";

const RANKING_PROMPT_TEMPLATE: &str = r#"Now, could you please list all the selected locations from Step 1 in a concise manner,
one location per line, like this:
Step 1: [location]
Step 2: [location]
...
Please ensure the response is limited to only one concise list and does not contain
any additional explanations or variations.

Now, I am trying to determine the most likely place where a "{og}" (defined in step 11)
might be found. Based on the selected locations from the previous steps,
please identify the most likely location(s).

### Important Rules:
1. Even if a location appears multiple times in the steps, you must consider each
   occurrence individually and assign it a unique rank.
2. Do not group or combine multiple occurrences of the same location.
3. All {len(responses)} steps must be ranked from 1 to {len(responses)} without
   omitting any step.

### Expected Output:
Please provide the ranked locations in the following format:
1. [Location from Step X]
2. [Location from Step Y]
3. [Location from Step Z]
...
{len(responses)}. [Location from Step W]

Ensure that the ranking explicitly includes the step number along with the location
(e.g., "living room from Step 2")."#;

/// Room-classification prompt for one view: `{od}` is the comma-separated
/// detected class list (empty slot when nothing was detected), `{rlc}` the
/// bracketed category list.
pub fn build_room_prompt(detected_objects: &[String], categories: &RoomCategoryList) -> String {
    ROOM_PROMPT_TEMPLATE
        .replace("{od}", &detected_objects.join(", "))
        .replace("{rlc}", &categories.render_bracketed())
}

/// Ranking prompt over `response_count` answered steps, with `{og}` set to
/// the target object.
pub fn build_ranking_prompt(target: &str, response_count: usize) -> Result<String, PromptError> {
    if response_count < 1 {
        return Err(PromptError::InvalidResponseCount(response_count));
    }
    Ok(RANKING_PROMPT_TEMPLATE
        .replace("{og}", target)
        .replace("{len(responses)}", &response_count.to_string()))
}

/// The full prompt set for one query: eight room prompts plus the ranking
/// prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub room_prompts: Vec<String>,
    pub ranking_prompt: String,
    pub target_object: String,
    pub response_count: usize,
}

impl PromptBundle {
    pub fn build(
        target: &str,
        per_direction_objects: &[Vec<String>],
        categories: &RoomCategoryList,
    ) -> Result<Self, PromptError> {
        let room_prompts: Vec<String> = per_direction_objects
            .iter()
            .map(|objs| build_room_prompt(objs, categories))
            .collect();
        let response_count = room_prompts.len();
        Ok(Self {
            ranking_prompt: build_ranking_prompt(target, response_count)?,
            room_prompts,
            target_object: target.to_string(),
            response_count,
        })
    }
}

/// Canonical category form: lowercase, hyphens as spaces, collapsed
/// whitespace. Reconciles "living room" and "living-room".
pub fn normalize_category(raw: &str) -> String {
    raw.to_lowercase()
        .replace('-', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Extract the room category from a single room-classification response.
///
/// Accepts the prefixed form `Response for od7: living-room` and the bare
/// token form `kitchen`. The normalized token must belong to the category
/// list.
pub fn parse_room_response(
    text: &str,
    categories: &RoomCategoryList,
) -> Result<String, PromptError> {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or(PromptError::EmptyResponse)?;
    let token = match line.to_ascii_lowercase().starts_with("response for od") {
        true => line
            .split_once(':')
            .map(|(_, rest)| rest)
            .ok_or_else(|| PromptError::UnknownCategory(line.to_string()))?,
        false => line,
    };
    let normalized = normalize_category(token);
    if normalized.is_empty() {
        return Err(PromptError::EmptyResponse);
    }
    if !categories
        .as_slice()
        .iter()
        .any(|c| normalize_category(c) == normalized)
    {
        return Err(PromptError::UnknownCategory(normalized));
    }
    Ok(normalized)
}

/// One parsed line of a ranking response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedStep {
    pub rank: u32,
    pub room: String,
    pub step: u32,
}

/// A validated ranking response: ranks and steps are each a permutation of
/// 1..=N. Entries are held in rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRanking {
    pub entries: Vec<RankedStep>,
}

impl ParsedRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rank received by each step: index `k` holds the rank of step `k + 1`.
    pub fn rank_by_step(&self) -> Vec<u32> {
        let mut out = vec![0; self.entries.len()];
        for e in &self.entries {
            out[(e.step - 1) as usize] = e.rank;
        }
        out
    }

    /// Render in the response format, one `<rank>. <room> from Step <k>`
    /// line per entry.
    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}. {} from Step {}", e.rank, e.room, e.step))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Parse one `<rank>. <room> from Step <k>` line.
fn parse_ranking_line(line: &str) -> Option<RankedStep> {
    let trimmed = line.trim();
    let (rank_str, rest) = trimmed.split_once('.')?;
    let rank: u32 = rank_str.trim().parse().ok()?;
    let rest = rest.trim();
    let lower = rest.to_ascii_lowercase();
    let marker = " from step ";
    let at = lower.rfind(marker)?;
    let room = normalize_category(&rest[..at]);
    let step: u32 = rest[at + marker.len()..].trim().parse().ok()?;
    if room.is_empty() {
        return None;
    }
    Some(RankedStep { rank, room, step })
}

/// Parse a ranking response.
///
/// Tolerates surrounding prose: the first maximal block of consecutive
/// well-formed lines is taken as the ranking, then both permutation
/// invariants are checked. Every failure names the violated rule.
pub fn parse_ranking_response(
    text: &str,
    expected_count: usize,
) -> Result<ParsedRanking, PromptError> {
    if expected_count < 1 {
        return Err(PromptError::InvalidResponseCount(expected_count));
    }

    let mut block: Vec<RankedStep> = Vec::new();
    for line in text.lines() {
        match parse_ranking_line(line) {
            Some(entry) => block.push(entry),
            None if block.is_empty() => continue,
            None => break, // end of the first maximal block
        }
    }
    if block.is_empty() {
        return Err(PromptError::NoRankedBlock);
    }
    if block.len() != expected_count {
        return Err(PromptError::CountMismatch {
            expected: expected_count,
            found: block.len(),
        });
    }

    let mut rank_seen = vec![false; expected_count];
    let mut step_seen = vec![false; expected_count];
    for e in &block {
        if e.rank == 0 || e.rank as usize > expected_count {
            return Err(PromptError::RankOutOfRange {
                rank: e.rank,
                max: expected_count,
            });
        }
        if std::mem::replace(&mut rank_seen[(e.rank - 1) as usize], true) {
            return Err(PromptError::DuplicateRank(e.rank));
        }
        if e.step == 0 || e.step as usize > expected_count {
            return Err(PromptError::StepOutOfRange {
                step: e.step,
                max: expected_count,
            });
        }
        if std::mem::replace(&mut step_seen[(e.step - 1) as usize], true) {
            return Err(PromptError::DuplicateStep(e.step));
        }
    }
    if let Some(r) = rank_seen.iter().position(|s| !s) {
        return Err(PromptError::MissingRank(r as u32 + 1));
    }
    if let Some(s) = step_seen.iter().position(|s| !s) {
        return Err(PromptError::MissingStep(s as u32 + 1));
    }

    block.sort_by_key(|e| e.rank);
    Ok(ParsedRanking { entries: block })
}

/// Which half of the protocol an exchange belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExchangeKind {
    Room,
    Ranking,
}

/// One raw prompt/response pair, before episode bookkeeping is attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub kind: ExchangeKind,
    pub prompt: String,
    pub response: String,
}

/// One line of the transcript JSONL: an exchange tagged with the episode and
/// decision step it happened in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub episode: u64,
    pub step: u64,
    pub kind: ExchangeKind,
    pub prompt: String,
    pub response: String,
}

impl TranscriptRecord {
    pub fn from_exchange(episode: u64, step: u64, exchange: Exchange) -> Self {
        Self {
            episode,
            step,
            kind: exchange.kind,
            prompt: exchange.prompt,
            response: exchange.response,
        }
    }

    pub fn exchange(&self) -> Exchange {
        Exchange {
            kind: self.kind,
            prompt: self.prompt.clone(),
            response: self.response.clone(),
        }
    }
}

/// Read a transcript: one JSON record per line, blank lines ignored.
pub fn read_transcript(reader: impl BufRead) -> Result<Vec<TranscriptRecord>, std::io::Error> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.push(record);
    }
    Ok(out)
}

/// Write a transcript as JSON Lines.
pub fn write_transcript(
    mut writer: impl Write,
    records: &[TranscriptRecord],
) -> Result<(), std::io::Error> {
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
