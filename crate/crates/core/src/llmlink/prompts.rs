//! Prompt templates and rendering for the three annotation stages.
//!
//! Templates use `str.format`-style named placeholders (`{excerpt}`) with
//! `{{` and `}}` as literal-brace escapes.

use std::path::Path;

use serde::Serialize;

use crate::corpus::{window, Conversation, Turn, WindowConfig};
use crate::error::{Error, Result};
use crate::linkspace::SegmentPair;

const STAGE_FILES: [&str; 6] = [
    "stage1_system",
    "stage1_user",
    "stage2_system",
    "stage2_user",
    "stage3_system",
    "stage3_user",
];

const STAGE1_KEYS: &[&str] = &["excerpt", "current"];
const PAIR_KEYS: &[&str] = &["speaker_turn_1", "speaker_turn_2", "speaker_1", "speaker_2"];

/// The six prompt texts used by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TemplateSet {
    pub name: String,
    pub stage1_system: String,
    pub stage1_user: String,
    pub stage2_system: String,
    pub stage2_user: String,
    pub stage3_system: String,
    pub stage3_user: String,
}

impl TemplateSet {
    /// The default one-shot instructions.
    pub fn one_shot() -> Self {
        TemplateSet {
            name: "one_shot".into(),
            stage1_system: include_str!("../../templates/one_shot/stage1_system.txt").into(),
            stage1_user: include_str!("../../templates/one_shot/stage1_user.txt").into(),
            stage2_system: include_str!("../../templates/one_shot/stage2_system.txt").into(),
            stage2_user: include_str!("../../templates/one_shot/stage2_user.txt").into(),
            stage3_system: include_str!("../../templates/one_shot/stage3_system.txt").into(),
            stage3_user: include_str!("../../templates/one_shot/stage3_user.txt").into(),
        }
    }

    /// Loads an alternate set (e.g. few-shot variants) from
    /// `stage{1,2,3}_{system,user}.txt` files in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut texts = Vec::with_capacity(6);
        for stem in STAGE_FILES {
            let path = dir.join(format!("{stem}.txt"));
            let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            texts.push(raw.strip_suffix('\n').map(str::to_string).unwrap_or(raw));
        }
        let mut it = texts.into_iter();
        let set = TemplateSet {
            name: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into()),
            stage1_system: it.next().unwrap(),
            stage1_user: it.next().unwrap(),
            stage2_system: it.next().unwrap(),
            stage2_user: it.next().unwrap(),
            stage3_system: it.next().unwrap(),
            stage3_user: it.next().unwrap(),
        };
        set.check()?;
        Ok(set)
    }

    fn check(&self) -> Result<()> {
        fn dummy(keys: &[&'static str]) -> Vec<(&'static str, String)> {
            keys.iter().map(|k| (*k, String::new())).collect()
        }
        fill(&self.stage1_system, &dummy(STAGE1_KEYS))?;
        fill(&self.stage1_user, &dummy(STAGE1_KEYS))?;
        for t in [&self.stage2_system, &self.stage2_user, &self.stage3_system, &self.stage3_user] {
            fill(t, &dummy(PAIR_KEYS))?;
        }
        Ok(())
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::one_shot()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Substitutes named fields in one pass; substituted text is never rescanned.
pub fn fill(template: &str, fields: &[(&str, String)]) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
        } else if tail.starts_with('}') {
            return Err(Error::Argument(format!(
                "unmatched '}}' in template at byte {}",
                template.len() - tail.len()
            )));
        } else {
            let close = tail.find('}').ok_or_else(|| {
                Error::Argument("unterminated placeholder in template".into())
            })?;
            let key = &tail[1..close];
            let value = fields
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::Argument(format!("unknown template field {{{key}}}")))?;
            out.push_str(value);
            rest = &tail[close + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// `[turn_id] speaker: words`
pub fn format_turn_line(turn: &Turn) -> String {
    format!("[{}] {}: {}", turn.turn_id, turn.speaker_id, turn.words)
}

pub fn render_stage1(
    conv: &Conversation,
    turn_id: usize,
    cfg: WindowConfig,
    templates: &TemplateSet,
) -> Result<Prompt> {
    if turn_id == 0 {
        return Err(Error::Argument("turn 0 has no preceding turns".into()));
    }
    let excerpt = window(conv, turn_id, cfg)?
        .iter()
        .map(format_turn_line)
        .collect::<Vec<_>>()
        .join("\n");
    let current = format_turn_line(conv.turn(turn_id)?);
    let fields = [("excerpt", excerpt), ("current", current)];
    Ok(Prompt {
        system: fill(&templates.stage1_system, &fields)?,
        user: fill(&templates.stage1_user, &fields)?,
    })
}

fn pair_fields(first: &Turn, second: &Turn, text_1: &str, text_2: &str) -> [(&'static str, String); 4] {
    [
        ("speaker_turn_1", text_1.to_string()),
        ("speaker_turn_2", text_2.to_string()),
        ("speaker_1", first.speaker_id.clone()),
        ("speaker_2", second.speaker_id.clone()),
    ]
}

/// Segmentation prompt for `source` responding to `target`.
pub fn render_stage2(
    conv: &Conversation,
    source: usize,
    target: usize,
    templates: &TemplateSet,
) -> Result<Prompt> {
    let (src, tgt) = (conv.turn(source)?, conv.turn(target)?);
    if target >= source {
        return Err(Error::Argument(format!("target {target} does not precede {source}")));
    }
    let fields = pair_fields(tgt, src, &tgt.words, &src.words);
    Ok(Prompt {
        system: fill(&templates.stage2_system, &fields)?,
        user: fill(&templates.stage2_user, &fields)?,
    })
}

/// Classification prompt over one quoted segment pair.
pub fn render_stage3(
    conv: &Conversation,
    source: usize,
    target: usize,
    segment: &SegmentPair,
    templates: &TemplateSet,
) -> Result<Prompt> {
    let (src, tgt) = (conv.turn(source)?, conv.turn(target)?);
    if target >= source {
        return Err(Error::Argument(format!("target {target} does not precede {source}")));
    }
    let fields = pair_fields(tgt, src, &segment.target_segment, &segment.response_segment);
    Ok(Prompt {
        system: fill(&templates.stage3_system, &fields)?,
        user: fill(&templates.stage3_user, &fields)?,
    })
}
