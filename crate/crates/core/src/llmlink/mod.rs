//! Three-stage LLM annotation: linking, segmentation, classification.

pub mod client;
pub mod parse;
pub mod pipeline;
pub mod prompts;

pub use client::{CacheMode, CachingClient, ChatClient, ChatExchange, FnClient, HttpChatClient};
pub use parse::{
    extract_json_object, parse_stage1, parse_stage2, parse_stage3, StageOneResult, StageThreeResult,
    StageTwoResult,
};
pub use pipeline::{annotate_conversation, PipelineConfig, PipelineOutput, RetryReport, Stage};
pub use prompts::{render_stage1, render_stage2, render_stage3, Prompt, TemplateSet};
