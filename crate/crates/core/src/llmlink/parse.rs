//! Parsing and validation of model responses for each stage.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::linkspace::{normalize_whitespace, LinkKind};

const NA: &str = "NA";
pub const LABEL_MECHANICAL: &str = "responsive_mechanical";
pub const LABEL_SUBSTANTIVE: &str = "responsive_substantive";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOneResult {
    pub source_turn: usize,
    pub target_ids: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTwoResult {
    pub response_segment: String,
    pub target_segment: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageThreeResult {
    ResponsiveMechanical,
    ResponsiveSubstantive,
}

impl StageThreeResult {
    pub fn kind(self) -> LinkKind {
        match self {
            StageThreeResult::ResponsiveMechanical => LinkKind::Mechanical,
            StageThreeResult::ResponsiveSubstantive => LinkKind::Substantive,
        }
    }
}

/// End of the balanced `{...}` starting at `start`, honoring JSON strings.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops commas that directly precede a closing bracket (outside strings).
fn strip_trailing_commas(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = s.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Finds the first balanced JSON object in `text`, tolerating surrounding
/// prose and trailing commas.
pub fn extract_json_object(text: &str) -> Result<Map<String, Value>> {
    let mut search = 0;
    while let Some(rel) = text[search..].find('{') {
        let start = search + rel;
        if let Some(end) = balanced_end(text, start) {
            let candidate = &text[start..end];
            let parsed = serde_json::from_str::<Value>(candidate)
                .or_else(|_| serde_json::from_str::<Value>(&strip_trailing_commas(candidate)));
            if let Ok(Value::Object(map)) = parsed {
                return Ok(map);
            }
        }
        search = start + 1;
    }
    Err(Error::Parse {
        offset: text.find('{').unwrap_or(0),
        message: "no JSON object found in response".into(),
    })
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::Parse {
        offset: 0,
        message: format!("missing key \"{key}\""),
    })
}

/// Turn-level linking: `{"link_turn_id": [ids...]}` or `["NA"]`.
pub fn parse_stage1(
    response_text: &str,
    source_turn: usize,
    window_ids: &BTreeSet<usize>,
) -> Result<StageOneResult> {
    let obj = extract_json_object(response_text)?;
    let items = match required(&obj, "link_turn_id")? {
        Value::Array(items) => items.clone(),
        // a bare scalar is read as a one-element list
        other => vec![other.clone()],
    };
    let mut ids = BTreeSet::new();
    let mut saw_na = false;
    for item in &items {
        let id = match item {
            Value::String(s) if s.trim().eq_ignore_ascii_case(NA) => {
                saw_na = true;
                continue;
            }
            Value::String(s) => s.trim().parse::<usize>().ok(),
            Value::Number(n) => n.as_u64().map(|v| v as usize),
            _ => None,
        };
        match id {
            Some(id) => {
                ids.insert(id);
            }
            None => {
                return Err(Error::validation(
                    source_turn,
                    format!("link_turn_id entry {item} is not a turn id"),
                ))
            }
        }
    }
    if saw_na && !ids.is_empty() {
        return Err(Error::validation(
            source_turn,
            "link_turn_id mixes \"NA\" with turn ids",
        ));
    }
    let offenders: Vec<usize> = ids.difference(window_ids).copied().collect();
    if !offenders.is_empty() {
        return Err(Error::validation(
            source_turn,
            format!("turn ids {offenders:?} are outside the window"),
        ));
    }
    Ok(StageOneResult {
        source_turn,
        target_ids: ids,
    })
}

/// Byte offset in the normalized haystack where the longest prefix of the
/// normalized needle matches.
fn closest_match_offset(haystack: &str, needle: &str) -> usize {
    let h = normalize_whitespace(haystack);
    let n = normalize_whitespace(needle);
    let mut best = (0usize, 0usize);
    for (start, _) in h.char_indices() {
        let common = h[start..]
            .chars()
            .zip(n.chars())
            .take_while(|(a, b)| a == b)
            .count();
        if common > best.1 {
            best = (start, common);
        }
    }
    best.0
}

fn quote(obj: &Map<String, Value>, key: &str, turn_words: &str, which: &str) -> Result<String> {
    let Value::String(text) = required(obj, key)? else {
        return Err(Error::Parse {
            offset: 0,
            message: format!("\"{key}\" is not a string"),
        });
    };
    let norm = normalize_whitespace(text);
    if norm.is_empty() || !normalize_whitespace(turn_words).contains(&norm) {
        return Err(Error::QuoteMismatch {
            message: format!("\"{key}\" is not an exact quote from the {which} turn"),
            closest_offset: closest_match_offset(turn_words, text),
        });
    }
    Ok(norm)
}

/// Segmentation: `step_2` quotes the responding turn, `step_3` the target.
pub fn parse_stage2(
    response_text: &str,
    response_turn_words: &str,
    target_turn_words: &str,
) -> Result<StageTwoResult> {
    let obj = extract_json_object(response_text)?;
    Ok(StageTwoResult {
        response_segment: quote(&obj, "step_2", response_turn_words, "responding")?,
        target_segment: quote(&obj, "step_3", target_turn_words, "target")?,
    })
}

/// Classification: `{"label": "responsive_mechanical" | "responsive_substantive"}`.
pub fn parse_stage3(response_text: &str) -> Result<StageThreeResult> {
    let obj = extract_json_object(response_text)?;
    match required(&obj, "label")? {
        Value::String(s) if s == LABEL_MECHANICAL => Ok(StageThreeResult::ResponsiveMechanical),
        Value::String(s) if s == LABEL_SUBSTANTIVE => Ok(StageThreeResult::ResponsiveSubstantive),
        other => Err(Error::validation(None, format!("unknown label {other}"))),
    }
}
