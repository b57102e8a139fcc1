//! Multi-run orchestration of the three annotation stages.
//!
//! Stage 1 runs `runs` times over every turn with a nonempty window and is
//! consolidated by majority. Stage 2 runs once per surviving link. Stage 3
//! runs `runs` times per segment pair and is consolidated by majority, ties
//! going to substantive.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use super::client::ChatClient;
use super::parse::{parse_stage1, parse_stage2, parse_stage3, StageThreeResult};
use super::prompts::{render_stage1, render_stage2, render_stage3, Prompt, TemplateSet};
use crate::corpus::{Conversation, WindowConfig};
use crate::error::{Error, Result};
use crate::linkspace::{
    apply_segment_kinds, consolidate_runs, AnnotationRun, ConsolidatedAnnotation, Link, LinkKind,
    LinkTable, SegmentPair,
};

#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub runs: usize,
    pub min_count: usize,
    pub window: WindowConfig,
    /// Extra attempts after a malformed response.
    pub retry_budget: u32,
    pub max_in_flight: usize,
    pub templates: TemplateSet,
    /// Defaults to the client's model id.
    pub method_id: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            runs: 3,
            min_count: 2,
            window: WindowConfig::default(),
            retry_budget: 2,
            max_in_flight: 4,
            templates: TemplateSet::one_shot(),
            method_id: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Linking,
    Segmentation,
    Classification,
}

/// A response that never parsed within the retry budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetryFailure {
    pub stage: Stage,
    pub run: usize,
    pub source: usize,
    pub target: Option<usize>,
    pub attempts: u32,
    pub last_error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RetryReport {
    /// Malformed responses that were retried successfully.
    pub recovered: usize,
    pub exhausted: Vec<RetryFailure>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// One run per stage-1 pass, carrying that pass's stage-3 labels.
    pub runs: Vec<AnnotationRun>,
    pub consolidated: ConsolidatedAnnotation,
    pub report: RetryReport,
}

enum Outcome<T> {
    Parsed { value: T, retries: u32 },
    Exhausted { attempts: u32, last_error: String },
}

/// Calls the model until the response parses or the budget runs out.
/// Transport failures and cache misses abort immediately.
fn call_with_retries<T>(
    client: &dyn ChatClient,
    prompt: &Prompt,
    salt: &str,
    budget: u32,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<Outcome<T>> {
    let mut last_error = String::new();
    for attempt in 0..=budget {
        let text = client.complete(&prompt.system, &prompt.user, &format!("{salt};attempt={attempt}"))?;
        match parse(&text) {
            Ok(value) => return Ok(Outcome::Parsed { value, retries: attempt }),
            Err(e) => {
                log::debug!("malformed response ({salt}, attempt {attempt}): {e}");
                last_error = e.to_string();
            }
        }
    }
    Ok(Outcome::Exhausted {
        attempts: budget + 1,
        last_error,
    })
}

struct Collector {
    report: RetryReport,
    failed_turns: BTreeSet<usize>,
    transport_error: Option<String>,
}

impl Collector {
    fn new() -> Self {
        Collector {
            report: RetryReport::default(),
            failed_turns: BTreeSet::new(),
            transport_error: None,
        }
    }

    /// Folds one call result; cache misses are returned as hard errors.
    fn take<T>(
        &mut self,
        result: Result<Outcome<T>>,
        stage: Stage,
        run: usize,
        source: usize,
        target: Option<usize>,
    ) -> Result<Option<T>> {
        match result {
            Ok(Outcome::Parsed { value, retries }) => {
                if retries > 0 {
                    self.report.recovered += 1;
                }
                Ok(Some(value))
            }
            Ok(Outcome::Exhausted { attempts, last_error }) => {
                self.report.exhausted.push(RetryFailure {
                    stage,
                    run,
                    source,
                    target,
                    attempts,
                    last_error,
                });
                Ok(None)
            }
            Err(e @ Error::CacheMiss { .. }) => Err(e),
            Err(e) => {
                self.failed_turns.insert(source);
                self.transport_error.get_or_insert_with(|| e.to_string());
                Ok(None)
            }
        }
    }
}

fn majority_label(labels: &[Option<StageThreeResult>]) -> LinkKind {
    let subst = labels
        .iter()
        .filter(|l| **l == Some(StageThreeResult::ResponsiveSubstantive))
        .count();
    let mech = labels
        .iter()
        .filter(|l| **l == Some(StageThreeResult::ResponsiveMechanical))
        .count();
    match (subst, mech) {
        (0, 0) => LinkKind::Unclassified,
        (s, m) if m > s => LinkKind::Mechanical,
        _ => LinkKind::Substantive,
    }
}

fn labelled_link(source: usize, target: usize, segment: &StageTwoSegment, kind: LinkKind) -> Result<Link> {
    let mut link = Link::new(source, target, LinkKind::Unclassified);
    link.segments.push(SegmentPair {
        response_segment: segment.response.clone(),
        target_segment: segment.target.clone(),
        kind,
    });
    if kind == LinkKind::Unclassified {
        Ok(link)
    } else {
        apply_segment_kinds(link)
    }
}

struct StageTwoSegment {
    response: String,
    target: String,
}

/// Runs the full three-stage annotation over one conversation.
pub fn annotate_conversation(
    conv: &Conversation,
    client: &dyn ChatClient,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    if cfg.runs == 0 {
        return Err(Error::Argument("at least one run is required".into()));
    }
    let method_id = cfg
        .method_id
        .clone()
        .unwrap_or_else(|| client.model_id().to_string());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Argument(e.to_string()))?;
    let mut collector = Collector::new();

    // Stage 1: turn-level linking, `runs` passes.
    let turn_ids: Vec<usize> = (1..conv.len()).collect();
    let mut stage1_runs = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let results: Vec<Result<Outcome<BTreeSet<usize>>>> = pool.install(|| {
            turn_ids
                .par_iter()
                .map(|&t| {
                    let prompt = render_stage1(conv, t, cfg.window, &cfg.templates)?;
                    let window_ids: BTreeSet<usize> = cfg.window.candidate_targets(t).collect();
                    call_with_retries(
                        client,
                        &prompt,
                        &format!("stage1;run={run};turn={t}"),
                        cfg.retry_budget,
                        |text| parse_stage1(text, t, &window_ids).map(|r| r.target_ids),
                    )
                })
                .collect()
        });
        let mut table = LinkTable::for_conversation(conv, cfg.window);
        for (&t, result) in turn_ids.iter().zip(results) {
            if let Some(targets) = collector.take(result, Stage::Linking, run, t, None)? {
                for target in targets {
                    table.insert(Link::new(t, target, LinkKind::Unclassified))?;
                }
            }
        }
        stage1_runs.push(AnnotationRun::new(method_id.clone(), run, table));
    }
    let candidates = consolidate_runs(&stage1_runs, cfg.min_count.min(cfg.runs))?;
    let candidate_pairs: Vec<(usize, usize)> =
        candidates.table.links().map(|l| (l.source, l.target)).collect();

    // Stage 2: one segmentation per surviving link.
    let stage2: Vec<Result<Outcome<StageTwoSegment>>> = pool.install(|| {
        candidate_pairs
            .par_iter()
            .map(|&(s, t)| {
                let prompt = render_stage2(conv, s, t, &cfg.templates)?;
                let (src, tgt) = (&conv.turns()[s].words, &conv.turns()[t].words);
                call_with_retries(
                    client,
                    &prompt,
                    &format!("stage2;source={s};target={t}"),
                    cfg.retry_budget,
                    |text| {
                        parse_stage2(text, src, tgt).map(|r| StageTwoSegment {
                            response: r.response_segment,
                            target: r.target_segment,
                        })
                    },
                )
            })
            .collect()
    });
    let mut segments: BTreeMap<(usize, usize), StageTwoSegment> = BTreeMap::new();
    for (&(s, t), result) in candidate_pairs.iter().zip(stage2) {
        if let Some(seg) = collector.take(result, Stage::Segmentation, 0, s, Some(t))? {
            segments.insert((s, t), seg);
        }
    }

    // Stage 3: `runs` classifications per segment pair.
    let jobs: Vec<((usize, usize), usize)> = segments
        .keys()
        .flat_map(|&pair| (0..cfg.runs).map(move |run| (pair, run)))
        .collect();
    let stage3: Vec<Result<Outcome<StageThreeResult>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&((s, t), run)| {
                let seg = &segments[&(s, t)];
                let pair = SegmentPair {
                    response_segment: seg.response.clone(),
                    target_segment: seg.target.clone(),
                    kind: LinkKind::Unclassified,
                };
                let prompt = render_stage3(conv, s, t, &pair, &cfg.templates)?;
                call_with_retries(
                    client,
                    &prompt,
                    &format!("stage3;run={run};source={s};target={t}"),
                    cfg.retry_budget,
                    parse_stage3,
                )
            })
            .collect()
    });
    let mut labels: BTreeMap<(usize, usize), Vec<Option<StageThreeResult>>> = BTreeMap::new();
    for (&((s, t), run), result) in jobs.iter().zip(stage3) {
        let label = collector.take(result, Stage::Classification, run, s, Some(t))?;
        labels.entry((s, t)).or_default().push(label);
    }

    if !collector.failed_turns.is_empty() {
        return Err(Error::Run {
            failed_turns: collector.failed_turns.into_iter().collect(),
            message: collector.transport_error.unwrap_or_default(),
        });
    }

    // Per-run views: stage-1 links of that pass, labelled by that pass's stage 3.
    let mut runs = Vec::with_capacity(cfg.runs);
    for (run, stage1) in stage1_runs.into_iter().enumerate() {
        let mut table = LinkTable::for_conversation(conv, cfg.window);
        for link in stage1.table.links() {
            let key = (link.source, link.target);
            let labelled = match (segments.get(&key), labels.get(&key)) {
                (Some(seg), Some(run_labels)) => {
                    let kind = run_labels[run].map_or(LinkKind::Unclassified, StageThreeResult::kind);
                    labelled_link(link.source, link.target, seg, kind)?
                }
                _ => link.clone(),
            };
            table.insert(labelled)?;
        }
        runs.push(AnnotationRun::new(method_id.clone(), run, table));
    }

    let mut table = LinkTable::for_conversation(conv, cfg.window);
    for &(s, t) in &candidate_pairs {
        let link = match segments.get(&(s, t)) {
            Some(seg) => labelled_link(s, t, seg, majority_label(&labels[&(s, t)]))?,
            None => Link::new(s, t, LinkKind::Unclassified),
        };
        table.insert(link)?;
    }
    let consolidated = ConsolidatedAnnotation {
        method_id,
        table,
        support: candidates.support,
    };

    Ok(PipelineOutput {
        runs,
        consolidated,
        report: collector.report,
    })
}
