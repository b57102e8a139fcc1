//! Responsivity links, annotation runs, and majority-vote consolidation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Conversation, WindowConfig};
use crate::error::{Error, Result};

/// Ordered by strength: merges keep the maximum.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    #[default]
    Unclassified,
    Mechanical,
    Substantive,
}

impl LinkKind {
    pub const ALL: [LinkKind; 3] = [
        LinkKind::Unclassified,
        LinkKind::Mechanical,
        LinkKind::Substantive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::Unclassified => "unclassified",
            LinkKind::Mechanical => "mechanical",
            LinkKind::Substantive => "substantive",
        }
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentPair {
    #[serde(rename = "response")]
    pub response_segment: String,
    #[serde(rename = "target")]
    pub target_segment: String,
    #[serde(default)]
    pub kind: LinkKind,
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace-insensitive, case-preserving containment test.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let needle = normalize_whitespace(needle);
    !needle.is_empty() && normalize_whitespace(haystack).contains(&needle)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub source: usize,
    pub target: usize,
    #[serde(default)]
    pub kind: LinkKind,
    #[serde(default)]
    pub segments: Vec<SegmentPair>,
}

impl Link {
    pub fn new(source: usize, target: usize, kind: LinkKind) -> Self {
        Link {
            source,
            target,
            kind,
            segments: Vec::new(),
        }
    }

    fn absorb(&mut self, other: Link) {
        self.kind = self.kind.max(other.kind);
        self.segments.extend(other.segments);
        self.segments.sort();
        self.segments.dedup();
    }
}

/// Resolves a link's kind from its classified segments: any substantive
/// segment makes the link substantive.
pub fn apply_segment_kinds(mut link: Link) -> Result<Link> {
    let kinds: Vec<LinkKind> = link
        .segments
        .iter()
        .map(|s| s.kind)
        .filter(|k| *k != LinkKind::Unclassified)
        .collect();
    if kinds.is_empty() {
        return Err(Error::State(format!(
            "link {}->{} has no classified segments",
            link.source, link.target
        )));
    }
    link.kind = if kinds.contains(&LinkKind::Substantive) {
        LinkKind::Substantive
    } else {
        LinkKind::Mechanical
    };
    Ok(link)
}

/// Links of one conversation keyed by source turn then target turn.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTable {
    conversation_id: String,
    window: WindowConfig,
    num_turns: usize,
    links: BTreeMap<usize, BTreeMap<usize, Link>>,
}

impl LinkTable {
    pub fn new(conversation_id: impl Into<String>, window: WindowConfig, num_turns: usize) -> Self {
        LinkTable {
            conversation_id: conversation_id.into(),
            window,
            num_turns,
            links: BTreeMap::new(),
        }
    }

    pub fn for_conversation(conv: &Conversation, window: WindowConfig) -> Self {
        Self::new(conv.id(), window, conv.len())
    }

    /// Inserts a link, merging with an existing (source, target) link by
    /// keeping the stronger kind and the union of segments.
    pub fn insert(&mut self, link: Link) -> Result<()> {
        if link.source >= self.num_turns {
            return Err(Error::validation(
                link.source,
                format!("source turn outside conversation of {} turns", self.num_turns),
            ));
        }
        if !self.window.contains(link.source, link.target) {
            return Err(Error::validation(
                link.source,
                format!(
                    "target {} outside the {}-turn window",
                    link.target, self.window.size
                ),
            ));
        }
        let per_source = self.links.entry(link.source).or_default();
        match per_source.get_mut(&link.target) {
            Some(existing) => existing.absorb(link),
            None => {
                per_source.insert(link.target, link);
            }
        }
        Ok(())
    }

    pub fn conversation_id(&self) -> &str {
        &self.conversation_id
    }

    pub fn window(&self) -> WindowConfig {
        self.window
    }

    pub fn num_turns(&self) -> usize {
        self.num_turns
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values().flat_map(|m| m.values())
    }

    pub fn links_from(&self, source: usize) -> impl Iterator<Item = &Link> {
        self.links.get(&source).into_iter().flat_map(|m| m.values())
    }

    pub fn get(&self, source: usize, target: usize) -> Option<&Link> {
        self.links.get(&source)?.get(&target)
    }

    pub fn targets(&self, source: usize) -> BTreeSet<usize> {
        self.links
            .get(&source)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn link_count(&self) -> usize {
        self.links.values().map(BTreeMap::len).sum()
    }

    fn same_frame(&self, other: &LinkTable) -> Result<()> {
        if self.conversation_id != other.conversation_id {
            return Err(Error::Argument(format!(
                "conversation mismatch: {} vs {}",
                self.conversation_id, other.conversation_id
            )));
        }
        if self.window != other.window {
            return Err(Error::Argument(format!(
                "window mismatch: {} vs {}",
                self.window.size, other.window.size
            )));
        }
        if self.num_turns != other.num_turns {
            return Err(Error::Argument(format!(
                "turn count mismatch: {} vs {}",
                self.num_turns, other.num_turns
            )));
        }
        Ok(())
    }

    /// Checks the table against its conversation, including that every
    /// segment quote occurs in its turn.
    pub fn validate_against(&self, conv: &Conversation) -> Result<()> {
        if conv.id() != self.conversation_id || conv.len() != self.num_turns {
            return Err(Error::Argument(format!(
                "annotation for {} ({} turns) does not match conversation {} ({} turns)",
                self.conversation_id,
                self.num_turns,
                conv.id(),
                conv.len()
            )));
        }
        for link in self.links() {
            let src = &conv.turns()[link.source].words;
            let tgt = &conv.turns()[link.target].words;
            for seg in &link.segments {
                if !contains_normalized(src, &seg.response_segment) {
                    return Err(Error::validation(
                        link.source,
                        "response segment is not a quote of the responding turn",
                    ));
                }
                if !contains_normalized(tgt, &seg.target_segment) {
                    return Err(Error::validation(
                        link.source,
                        format!("target segment is not a quote of turn {}", link.target),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One annotation pass by one method (an LLM run, a human annotator, the
/// similarity backend).
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRun {
    pub method_id: String,
    pub run_index: usize,
    pub table: LinkTable,
}

impl AnnotationRun {
    pub fn new(method_id: impl Into<String>, run_index: usize, table: LinkTable) -> Self {
        AnnotationRun {
            method_id: method_id.into(),
            run_index,
            table,
        }
    }
}

/// Majority-merged links with the number of runs that supported each.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidatedAnnotation {
    pub method_id: String,
    pub table: LinkTable,
    pub support: BTreeMap<(usize, usize), usize>,
}

impl ConsolidatedAnnotation {
    /// Treats a single run (e.g. an already-consolidated gold file) as final.
    pub fn from_run(run: AnnotationRun) -> Self {
        let support = run.table.links().map(|l| ((l.source, l.target), 1)).collect();
        ConsolidatedAnnotation {
            method_id: run.method_id,
            table: run.table,
            support,
        }
    }

    pub fn with_method_id(mut self, method_id: impl Into<String>) -> Self {
        self.method_id = method_id.into();
        self
    }
}

fn shared_method_id(runs: &[AnnotationRun]) -> String {
    let first = &runs[0].method_id;
    if runs.iter().all(|r| &r.method_id == first) {
        first.clone()
    } else {
        "consolidated".to_string()
    }
}

/// Keeps every (source, target) link present in at least `min_count` runs.
///
/// A retained link takes the strongest kind any contributing run gave it and
/// the union of their segments.
pub fn consolidate_runs(runs: &[AnnotationRun], min_count: usize) -> Result<ConsolidatedAnnotation> {
    let Some(first) = runs.first() else {
        return Err(Error::Argument("no runs to consolidate".into()));
    };
    if min_count == 0 {
        return Err(Error::Argument("min_count must be at least 1".into()));
    }
    for run in &runs[1..] {
        first.table.same_frame(&run.table)?;
    }

    let mut votes: BTreeMap<(usize, usize), (usize, Link)> = BTreeMap::new();
    for run in runs {
        for link in run.table.links() {
            match votes.get_mut(&(link.source, link.target)) {
                Some((count, merged)) => {
                    *count += 1;
                    merged.absorb(link.clone());
                }
                None => {
                    let mut merged = link.clone();
                    merged.segments.sort();
                    merged.segments.dedup();
                    votes.insert((link.source, link.target), (1, merged));
                }
            }
        }
    }

    let mut table = LinkTable::new(
        first.table.conversation_id.clone(),
        first.table.window,
        first.table.num_turns,
    );
    let mut support = BTreeMap::new();
    for (key, (count, link)) in votes {
        if count >= min_count {
            table.insert(link)?;
            support.insert(key, count);
        }
    }
    Ok(ConsolidatedAnnotation {
        method_id: shared_method_id(runs),
        table,
        support,
    })
}

/// Human majority vote: a link survives when at least half of the annotators
/// (rounded up) submitted it. Humans do not label kinds, so every retained
/// link is unclassified.
pub fn consolidate_human(annotators: &[AnnotationRun]) -> Result<ConsolidatedAnnotation> {
    let threshold = annotators.len().div_ceil(2);
    let mut merged = consolidate_runs(annotators, threshold.max(1))?;
    let mut table = LinkTable::new(
        merged.table.conversation_id.clone(),
        merged.table.window,
        merged.table.num_turns,
    );
    for link in merged.table.links() {
        table.insert(Link::new(link.source, link.target, LinkKind::Unclassified))?;
    }
    merged.table = table;
    Ok(merged)
}

/// On-disk annotation record (one conversation, one method).
///
/// `run_index` is `-1` for consolidated results. `num_turns` is optional on
/// read; when absent it is inferred as one past the largest source turn.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub conversation_id: String,
    pub method_id: String,
    pub run_index: i64,
    pub window_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_turns: Option<usize>,
    pub links: Vec<FileLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileLink {
    pub source: usize,
    pub target: usize,
    #[serde(default)]
    pub kind: LinkKind,
    #[serde(default)]
    pub segments: Vec<SegmentPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<usize>,
}

impl AnnotationFile {
    pub fn parse(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::from_json(raw, &e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation serializes")
    }

    fn table(&self) -> Result<LinkTable> {
        let window = WindowConfig::new(self.window_size)?;
        let num_turns = self
            .num_turns
            .unwrap_or_else(|| self.links.iter().map(|l| l.source + 1).max().unwrap_or(0));
        let mut table = LinkTable::new(self.conversation_id.clone(), window, num_turns);
        for l in &self.links {
            table.insert(Link {
                source: l.source,
                target: l.target,
                kind: l.kind,
                segments: l.segments.clone(),
            })?;
        }
        Ok(table)
    }

    pub fn into_run(self) -> Result<AnnotationRun> {
        let table = self.table()?;
        Ok(AnnotationRun {
            method_id: self.method_id,
            run_index: self.run_index.max(0) as usize,
            table,
        })
    }

    pub fn into_consolidated(self) -> Result<ConsolidatedAnnotation> {
        let table = self.table()?;
        let support = self
            .links
            .iter()
            .map(|l| ((l.source, l.target), l.support.unwrap_or(1)))
            .collect();
        Ok(ConsolidatedAnnotation {
            method_id: self.method_id,
            table,
            support,
        })
    }

    fn links_of(table: &LinkTable, support: Option<&BTreeMap<(usize, usize), usize>>) -> Vec<FileLink> {
        table
            .links()
            .map(|l| FileLink {
                source: l.source,
                target: l.target,
                kind: l.kind,
                segments: l.segments.clone(),
                support: support.and_then(|s| s.get(&(l.source, l.target)).copied()),
            })
            .collect()
    }

    pub fn from_run(run: &AnnotationRun, config: Option<Value>) -> Self {
        AnnotationFile {
            conversation_id: run.table.conversation_id.clone(),
            method_id: run.method_id.clone(),
            run_index: run.run_index as i64,
            window_size: run.table.window.size,
            num_turns: Some(run.table.num_turns),
            links: Self::links_of(&run.table, None),
            config,
        }
    }

    pub fn from_consolidated(c: &ConsolidatedAnnotation, config: Option<Value>) -> Self {
        AnnotationFile {
            conversation_id: c.table.conversation_id.clone(),
            method_id: c.method_id.clone(),
            run_index: -1,
            window_size: c.table.window.size,
            num_turns: Some(c.table.num_turns),
            links: Self::links_of(&c.table, Some(&c.support)),
            config,
        }
    }
}
