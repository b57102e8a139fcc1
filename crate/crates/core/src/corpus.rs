//! Transcript data model, ingestion, and the preceding-turn window.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Words per second used to estimate speaking time when a turn has no timing.
pub const PROXY_WORDS_PER_SECOND: f64 = 2.5;

/// Default number of preceding turns considered as response targets.
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    Facilitator,
    Participant,
}

impl SpeakerRole {
    pub fn is_facilitator(self) -> bool {
        self == SpeakerRole::Facilitator
    }
}

impl fmt::Display for SpeakerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeakerRole::Facilitator => f.write_str("facilitator"),
            SpeakerRole::Participant => f.write_str("participant"),
        }
    }
}

/// A maximal contiguous span of speech by one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub turn_id: usize,
    pub speaker_id: String,
    pub role: SpeakerRole,
    pub words: String,
    pub start_time: Option<f64>,
    pub end_time: Option<f64>,
    /// Keys from the source record that are not part of the schema.
    pub extra: BTreeMap<String, Value>,
}

impl Turn {
    pub fn word_count(&self) -> usize {
        self.words.split_whitespace().count()
    }

    pub fn is_facilitator(&self) -> bool {
        self.role.is_facilitator()
    }
}

/// Seconds spoken in a turn; falls back to a words-per-second estimate when
/// either timestamp is missing.
pub fn speaking_time(turn: &Turn) -> f64 {
    match (turn.start_time, turn.end_time) {
        (Some(start), Some(end)) => end - start,
        _ => turn.word_count() as f64 / PROXY_WORDS_PER_SECOND,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowConfig {
    pub size: usize,
}

impl WindowConfig {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Argument("window size must be at least 1".into()));
        }
        Ok(WindowConfig { size })
    }

    /// Turn ids that `turn_id` may respond to under this window.
    pub fn candidate_targets(&self, turn_id: usize) -> std::ops::Range<usize> {
        turn_id - self.size.min(turn_id)..turn_id
    }

    pub fn contains(&self, source: usize, target: usize) -> bool {
        target < source && source - target <= self.size
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            size: DEFAULT_WINDOW,
        }
    }
}

/// An ordered, validated sequence of turns. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    conversation_id: String,
    turns: Vec<Turn>,
    metadata: BTreeMap<String, String>,
}

impl Conversation {
    /// Builds a conversation from utterance-level records, merging adjacent
    /// utterances by the same speaker and reassigning dense turn ids.
    pub fn from_utterances(
        conversation_id: impl Into<String>,
        metadata: BTreeMap<String, String>,
        utterances: Vec<Turn>,
    ) -> Result<Self> {
        let mut turns: Vec<Turn> = Vec::with_capacity(utterances.len());
        for (idx, utt) in utterances.into_iter().enumerate() {
            validate_utterance(idx, &utt)?;
            match turns.last_mut() {
                Some(prev) if prev.speaker_id == utt.speaker_id => {
                    if prev.role != utt.role {
                        return Err(Error::validation(
                            prev.turn_id,
                            format!(
                                "speaker {:?} changes role within a turn",
                                utt.speaker_id
                            ),
                        ));
                    }
                    merge_into(prev, utt);
                }
                _ => {
                    let turn_id = turns.len();
                    turns.push(Turn { turn_id, ..utt });
                }
            }
        }
        let conv = Conversation {
            conversation_id: conversation_id.into(),
            turns,
            metadata,
        };
        conv.validate()?;
        Ok(conv)
    }

    fn validate(&self) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::validation(None, "conversation has no turns"));
        }
        let mut roles: BTreeMap<&str, SpeakerRole> = BTreeMap::new();
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.turn_id != i {
                return Err(Error::validation(i, "turn ids must be dense and 0-based"));
            }
            if i > 0 && self.turns[i - 1].speaker_id == turn.speaker_id {
                return Err(Error::validation(i, "consecutive turns share a speaker"));
            }
            validate_utterance(i, turn)?;
            if let Some(prev) = roles.insert(&turn.speaker_id, turn.role) {
                if prev != turn.role {
                    return Err(Error::validation(
                        i,
                        format!("speaker {:?} has inconsistent roles", turn.speaker_id),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.conversation_id
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn turn(&self, turn_id: usize) -> Result<&Turn> {
        self.turns
            .get(turn_id)
            .ok_or_else(|| Error::Lookup(format!("turn {turn_id} not in {}", self.conversation_id)))
    }

    /// Observed speakers in order of first appearance.
    pub fn speakers(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for t in &self.turns {
            if !seen.contains(&t.speaker_id.as_str()) {
                seen.push(t.speaker_id.as_str());
            }
        }
        seen
    }

    pub fn role_of(&self, speaker: &str) -> Option<SpeakerRole> {
        self.turns
            .iter()
            .find(|t| t.speaker_id == speaker)
            .map(|t| t.role)
    }
}

fn validate_utterance(idx: usize, utt: &Turn) -> Result<()> {
    if utt.words.trim().is_empty() {
        return Err(Error::validation(idx, "turn has no words"));
    }
    if utt.speaker_id.is_empty() {
        return Err(Error::validation(idx, "empty speaker_id"));
    }
    for t in [utt.start_time, utt.end_time].into_iter().flatten() {
        if !t.is_finite() {
            return Err(Error::validation(idx, "non-finite timestamp"));
        }
    }
    if let (Some(s), Some(e)) = (utt.start_time, utt.end_time) {
        if e < s {
            return Err(Error::validation(
                idx,
                format!("end_time {e} precedes start_time {s}"),
            ));
        }
    }
    Ok(())
}

fn merge_into(prev: &mut Turn, next: Turn) {
    prev.words = format!("{} {}", prev.words.trim_end(), next.words.trim_start());
    prev.start_time = min_opt(prev.start_time, next.start_time);
    prev.end_time = match (prev.end_time, next.end_time) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    for (k, v) in next.extra {
        prev.extra.entry(k).or_insert(v);
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// The turns immediately preceding `turn_id`, at most `cfg.size` of them.
pub fn window(conv: &Conversation, turn_id: usize, cfg: WindowConfig) -> Result<&[Turn]> {
    conv.turn(turn_id)?;
    Ok(&conv.turns[cfg.candidate_targets(turn_id)])
}

#[derive(Serialize, Deserialize)]
struct RawTranscript {
    conversation_id: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    turns: Vec<RawTurn>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct RawTurn {
    speaker_id: String,
    role: SpeakerRole,
    words: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_time: Option<f64>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

/// Parses a transcript in the JSON interchange schema.
pub fn parse_transcript(raw: &[u8]) -> Result<Conversation> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Parse {
        offset: e.valid_up_to(),
        message: "transcript is not valid UTF-8".into(),
    })?;
    let parsed: RawTranscript =
        serde_json::from_str(text).map_err(|e| Error::from_json(text, &e))?;
    let mut metadata = parsed.metadata;
    for (k, v) in parsed.extra {
        let v = match v {
            Value::String(s) => s,
            other => other.to_string(),
        };
        metadata.entry(k).or_insert(v);
    }
    let utterances = parsed
        .turns
        .into_iter()
        .enumerate()
        .map(|(i, t)| Turn {
            turn_id: i,
            speaker_id: t.speaker_id,
            role: t.role,
            words: t.words,
            start_time: t.start_time,
            end_time: t.end_time,
            extra: t.extra,
        })
        .collect();
    Conversation::from_utterances(parsed.conversation_id, metadata, utterances)
}

/// Serializes to the canonical transcript schema (pretty-printed JSON).
pub fn serialize_transcript(conv: &Conversation) -> String {
    let raw = RawTranscript {
        conversation_id: conv.conversation_id.clone(),
        metadata: conv.metadata.clone(),
        turns: conv
            .turns
            .iter()
            .map(|t| RawTurn {
                speaker_id: t.speaker_id.clone(),
                role: t.role,
                words: t.words.clone(),
                start_time: t.start_time,
                end_time: t.end_time,
                extra: t.extra.clone(),
            })
            .collect(),
        extra: BTreeMap::new(),
    };
    serde_json::to_string_pretty(&raw).expect("transcript serializes")
}
