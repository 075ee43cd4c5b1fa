//! Transcript replay: answer queries from a recorded exchange log.
//!
//! The replayer rebuilds each prompt through the prompts module and requires
//! it to match the next record byte for byte, so a replayed run certifies
//! that the prompt pipeline still produces what was recorded.

use super::{Ranker, RankerError, RankerRequest, RankerResponse};
use crate::prompts::{
    parse_ranking_response, parse_room_response, Exchange, ExchangeKind, PromptBundle,
    TranscriptRecord,
};
use crate::ranking::RankVector;
use std::collections::VecDeque;
use std::path::Path;

fn head(text: &str) -> String {
    text.chars().take(48).collect()
}

/// Ranking backend that replays a recorded transcript in order.
#[derive(Debug, Clone)]
pub struct ReplayRanker {
    records: VecDeque<TranscriptRecord>,
}

impl ReplayRanker {
    pub fn new(records: Vec<TranscriptRecord>) -> Self {
        Self {
            records: records.into(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, std::io::Error> {
        let file = std::fs::File::open(path)?;
        let records = crate::prompts::read_transcript(std::io::BufReader::new(file))?;
        Ok(Self::new(records))
    }

    pub fn remaining(&self) -> usize {
        self.records.len()
    }

    fn next_response(&mut self, kind: ExchangeKind, prompt: &str) -> Result<String, RankerError> {
        let record = self
            .records
            .pop_front()
            .ok_or(RankerError::TranscriptExhausted)?;
        if record.kind != kind || record.prompt != prompt {
            return Err(RankerError::TranscriptDivergence {
                expected_kind: kind,
                expected_head: head(prompt),
                found_head: head(&record.prompt),
            });
        }
        Ok(record.response)
    }
}

impl Ranker for ReplayRanker {
    fn rank(&mut self, request: &RankerRequest) -> Result<RankerResponse, RankerError> {
        let bundle = PromptBundle::build(
            &request.target_object,
            &request.per_direction_objects,
            &request.categories,
        )?;

        let mut transcript = Vec::with_capacity(bundle.room_prompts.len() + 1);
        let mut rooms = Vec::with_capacity(bundle.room_prompts.len());
        for prompt in &bundle.room_prompts {
            let response = self.next_response(ExchangeKind::Room, prompt)?;
            rooms.push(parse_room_response(&response, &request.categories)?);
            transcript.push(Exchange {
                kind: ExchangeKind::Room,
                prompt: prompt.clone(),
                response,
            });
        }

        let response = self.next_response(ExchangeKind::Ranking, &bundle.ranking_prompt)?;
        let parsed = parse_ranking_response(&response, bundle.response_count)?;
        transcript.push(Exchange {
            kind: ExchangeKind::Ranking,
            prompt: bundle.ranking_prompt.clone(),
            response,
        });

        Ok(RankerResponse {
            per_direction_room: rooms.try_into().expect("eight directions"),
            direction_ranks: RankVector::new(parsed.rank_by_step())?,
            transcript,
        })
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}
