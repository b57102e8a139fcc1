use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use turnlink::agreement::{
    agreement_matrix, conversation_agreement, kind_agreement, link_confusion, AgreementOptions,
    AnnotationSource,
};
use turnlink::clusterlab::{run_clustering, FeatureMatrix, NeighborEmbeddingConfig, ReductionMethod};
use turnlink::convmetrics::{compute_features, features_to_csv, Feature};
use turnlink::corpus::{parse_transcript, serialize_transcript, Conversation, WindowConfig};
use turnlink::linkspace::{consolidate_human, consolidate_runs, AnnotationFile, ConsolidatedAnnotation};
use turnlink::llmlink::{
    annotate_conversation, CacheMode, CachingClient, ChatClient, HttpChatClient, PipelineConfig, TemplateSet,
};
use turnlink::mapviz::{render_map, MapStyle};
use turnlink::simlink::{
    link_by_similarity, EmbeddingCache, EmbeddingFetcher, EmbeddingProvider, FileEmbeddingProvider,
    HttpEmbeddingProvider, SimilarityConfig,
};

use crate::args::*;
use crate::config::RunConfig;
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    turnlink::Error::Validation {
        turn_id: None,
        message: msg.into(),
    }
    .into()
}

/// Files as given, plus `*.json` directly inside any directory, sorted.
fn json_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("listing {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        anyhow::Error::from(turnlink::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    path.with_file_name(name)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Keeps method ids usable in file names.
fn file_stem(method_id: &str) -> String {
    method_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

fn load_conversations(inputs: &[PathBuf]) -> Result<Vec<Conversation>> {
    let mut convs: Vec<Conversation> = Vec::new();
    for path in json_files(inputs)? {
        let raw = read(&path)?;
        let conv = parse_transcript(raw.as_bytes()).with_context(|| format!("in {}", path.display()))?;
        if convs.iter().any(|c| c.id() == conv.id()) {
            return Err(invalid(format!("duplicate conversation id {:?}", conv.id())));
        }
        convs.push(conv);
    }
    if convs.is_empty() {
        return Err(usage("no transcripts found"));
    }
    convs.sort_by(|a, b| a.id().cmp(b.id()));
    Ok(convs)
}

fn load_annotation(path: &Path) -> Result<AnnotationFile> {
    AnnotationFile::parse(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let convs = load_conversations(&args.inputs)?;
    let mut turns = 0;
    for conv in &convs {
        turns += conv.len();
        write(&args.out.join(format!("{}.json", file_stem(conv.id()))), serialize_transcript(conv))?;
    }
    println!("ingested {} conversations ({turns} turns)", convs.len());
    Ok(())
}

pub fn annotate(args: &AnnotateArgs, cfg: &RunConfig) -> Result<()> {
    let convs = load_conversations(&args.transcripts)?;
    let window = WindowConfig::new(args.window.unwrap_or(cfg.window))?;
    match args.backend {
        Backend::Embedding => annotate_embedding(args, cfg, &convs, window),
        Backend::Llm => annotate_llm(args, cfg, &convs, window),
    }
}

fn annotate_embedding(args: &AnnotateArgs, cfg: &RunConfig, convs: &[Conversation], window: WindowConfig) -> Result<()> {
    let s = &cfg.embedding;
    let file = args.embeddings.clone().or_else(|| s.file.clone());
    let url = args.embed_url.clone().or_else(|| s.url.clone());
    let threshold = args.threshold.unwrap_or(s.threshold);
    let (provider, provider_echo): (Box<dyn EmbeddingProvider>, Value) = match (file, url) {
        (Some(f), None) => (Box::new(FileEmbeddingProvider::load(&f)?), json!({"kind": "file"})),
        (None, Some(u)) => {
            let http = HttpEmbeddingProvider::new(u, s.retries, Duration::from_secs(s.timeout_secs))?;
            let health = http.health()?;
            (Box::new(http), json!({"kind": "http", "health": health}))
        }
        _ => return Err(usage("give exactly one of --embeddings or --embed-url")),
    };
    let cache = match args.embed_cache.clone().or_else(|| s.cache.clone()) {
        Some(p) => EmbeddingCache::on_disk(p)?,
        None => EmbeddingCache::in_memory(),
    };
    let fetcher = EmbeddingFetcher::new(provider.as_ref(), &cache)
        .batch_size(s.batch_size)
        .max_in_flight(s.max_in_flight);
    let sim = SimilarityConfig::new(threshold, window, s.normalize)?;
    let echo = json!({
        "backend": "embedding",
        "window": window.size,
        "threshold": threshold,
        "normalize": s.normalize,
        "batch_size": s.batch_size,
        "provider": provider_echo,
    });
    let mut links = 0;
    for conv in convs {
        let texts: Vec<String> = conv.turns().iter().map(|t| t.words.clone()).collect();
        let vectors = fetcher.fetch::<f64>(&texts)?;
        let by_turn = vectors.into_iter().enumerate().collect();
        let run = link_by_similarity(conv, &by_turn, &sim)?;
        links += run.table.link_count();
        let file = AnnotationFile::from_run(&run, Some(echo.clone()));
        write(
            &args.out.join(format!("{}.{}.json", file_stem(conv.id()), file_stem(&run.method_id))),
            file.to_json(),
        )?;
    }
    cache.flush()?;
    println!("annotated {} conversations by similarity ({links} links)", convs.len());
    Ok(())
}

fn template_digest(t: &TemplateSet) -> String {
    let mut h = Sha256::new();
    for part in [
        &t.stage1_system,
        &t.stage1_user,
        &t.stage2_system,
        &t.stage2_user,
        &t.stage3_system,
        &t.stage3_user,
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

fn annotate_llm(args: &AnnotateArgs, cfg: &RunConfig, convs: &[Conversation], window: WindowConfig) -> Result<()> {
    let s = &cfg.llm;
    let model = args
        .model
        .clone()
        .or_else(|| s.model.clone())
        .ok_or_else(|| usage("the llm backend needs --model"))?;
    let cache_dir = args
        .cache
        .clone()
        .or_else(|| s.cache_dir.clone())
        .ok_or_else(|| usage("the llm backend needs --cache"))?;
    let mode = match args.mode {
        Some(Mode::Record) => CacheMode::Record,
        Some(Mode::Replay) => CacheMode::Replay,
        Some(Mode::Live) => CacheMode::Live,
        None => s.mode,
    };
    let templates = match args.templates.as_ref().or(s.templates.as_ref()) {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::one_shot(),
    };
    let pcfg = PipelineConfig {
        runs: args.runs.unwrap_or(s.runs),
        min_count: args.min_count.unwrap_or(s.min_count),
        window,
        retry_budget: s.retry_budget,
        max_in_flight: s.max_in_flight,
        templates,
        method_id: args.method_id.clone().or_else(|| s.method_id.clone()),
    };
    let echo = json!({
        "backend": "llm",
        "model": model,
        "method_id": pcfg.method_id.clone().unwrap_or_else(|| model.clone()),
        "window": window.size,
        "runs": pcfg.runs,
        "min_count": pcfg.min_count,
        "retry_budget": pcfg.retry_budget,
        "templates": pcfg.templates.name,
        "templates_sha256": template_digest(&pcfg.templates),
        "mode": mode,
    });

    let http;
    let client = if mode == CacheMode::Replay {
        CachingClient::replay(model.clone(), &cache_dir)
    } else {
        let endpoint = args
            .endpoint
            .clone()
            .or_else(|| s.endpoint.clone())
            .ok_or_else(|| usage("record and live modes need --endpoint"))?;
        let mut c = HttpChatClient::new(endpoint, model.clone(), Duration::from_secs(s.timeout_secs))?
            .retries(s.transport_retries)
            .api_key(std::env::var(&s.api_key_env).ok());
        if let Some(rate) = s.rate_limit {
            c = c.rate_limit(rate);
        }
        http = c;
        CachingClient::new(&http as &dyn ChatClient, &cache_dir, mode)
    };

    let mut links = 0;
    for conv in convs {
        let out = annotate_conversation(conv, &client, &pcfg).with_context(|| format!("conversation {}", conv.id()))?;
        let stem = format!("{}.{}", file_stem(conv.id()), file_stem(&out.consolidated.method_id));
        for run in &out.runs {
            write(
                &args.out.join("runs").join(format!("{stem}.run{}.json", run.run_index)),
                AnnotationFile::from_run(run, Some(echo.clone())).to_json(),
            )?;
        }
        links += out.consolidated.table.link_count();
        write(
            &args.out.join(format!("{stem}.json")),
            AnnotationFile::from_consolidated(&out.consolidated, Some(echo.clone())).to_json(),
        )?;
        if !out.report.exhausted.is_empty() {
            log::warn!(
                "{}: {} responses never parsed within the retry budget",
                conv.id(),
                out.report.exhausted.len()
            );
        }
        write(
            &args.out.join("reports").join(format!("{stem}.retries.json")),
            pretty(&serde_json::to_value(&out.report)?),
        )?;
    }
    println!("annotated {} conversations with {model} ({links} consolidated links)", convs.len());
    Ok(())
}

pub fn consolidate(args: &ConsolidateArgs, cfg: &RunConfig) -> Result<()> {
    let files: Vec<AnnotationFile> = args.inputs.iter().map(|p| load_annotation(p)).collect::<Result<_>>()?;
    let conv = files[0].conversation_id.clone();
    if let Some(other) = files.iter().find(|f| f.conversation_id != conv) {
        return Err(invalid(format!(
            "inputs mix conversations {conv:?} and {:?}",
            other.conversation_id
        )));
    }
    let sources: Vec<String> = files.iter().map(|f| f.method_id.clone()).collect();
    let runs = files
        .into_iter()
        .map(AnnotationFile::into_run)
        .collect::<turnlink::Result<Vec<_>>>()?;
    let (merged, echo) = if args.human {
        let merged = consolidate_human(&runs)?.with_method_id(args.method_id.clone().unwrap_or_else(|| "human".into()));
        (merged, json!({"consolidation": "human_majority", "annotators": runs.len(), "sources": sources}))
    } else {
        let min_count = args.min_count.unwrap_or(cfg.llm.min_count);
        let mut merged = consolidate_runs(&runs, min_count)?;
        if let Some(id) = &args.method_id {
            merged = merged.with_method_id(id.clone());
        }
        (merged, json!({"consolidation": "min_count", "min_count": min_count, "runs": runs.len(), "sources": sources}))
    };
    write(&args.out, AnnotationFile::from_consolidated(&merged, Some(echo)).to_json())?;
    println!("{}: kept {} links", conv, merged.table.link_count());
    Ok(())
}

pub fn agree(args: &AgreeArgs) -> Result<()> {
    let mut by_method: BTreeMap<String, Vec<ConsolidatedAnnotation>> = BTreeMap::new();
    for path in json_files(&args.inputs)? {
        let ann = load_annotation(&path)?.into_consolidated()?;
        let list = by_method.entry(ann.method_id.clone()).or_default();
        if list.iter().any(|a| a.table.conversation_id() == ann.table.conversation_id()) {
            return Err(invalid(format!(
                "two {} annotations for conversation {}",
                ann.method_id,
                ann.table.conversation_id()
            )));
        }
        list.push(ann);
    }
    if by_method.len() < 2 {
        return Err(usage("agreement needs annotations from at least two methods"));
    }
    let options = AgreementOptions {
        skip_empty_pairs: args.skip_empty_pairs,
    };
    let sources: Vec<AnnotationSource> = by_method
        .iter()
        .map(|(m, anns)| AnnotationSource::new(m.clone(), anns.iter().cloned()))
        .collect();
    let matrix = agreement_matrix::<f64>(&sources, options)?;

    let mut pairs = Vec::new();
    for (i, a) in sources.iter().enumerate() {
        for b in &sources[i + 1..] {
            let mut conversations = Vec::new();
            for (cid, ann_a) in &a.conversations {
                let Some(ann_b) = b.conversations.get(cid) else {
                    return Err(invalid(format!("{} has no annotation for {cid}", b.method_id)));
                };
                conversations.push(json!({
                    "agreement": conversation_agreement::<f64>(ann_a, ann_b, options)?,
                    "links": link_confusion(ann_a, ann_b, None)?,
                    "kinds": kind_agreement(ann_a, ann_b)?,
                }));
            }
            pairs.push(json!({"a": a.method_id, "b": b.method_id, "conversations": conversations}));
        }
    }
    let report = json!({
        "config": {"skip_empty_pairs": options.skip_empty_pairs},
        "methods": matrix.method_ids,
        "matrix": matrix.values,
        "pairs": pairs,
    });
    write(&args.out.join("agreement_matrix.csv"), matrix.to_csv())?;
    write(&args.out.join("agreement_report.json"), pretty(&report))?;
    print!("{}", matrix.to_csv());
    Ok(())
}

pub fn features(args: &FeaturesArgs) -> Result<()> {
    let convs = load_conversations(&args.transcripts)?;
    let mut by_conv: BTreeMap<String, Vec<ConsolidatedAnnotation>> = BTreeMap::new();
    for path in json_files(&args.annotations)? {
        let ann = load_annotation(&path)?.into_consolidated()?;
        if args.method.as_ref().is_some_and(|m| *m != ann.method_id) {
            continue;
        }
        by_conv.entry(ann.table.conversation_id().to_string()).or_default().push(ann);
    }
    let mut rows = Vec::with_capacity(convs.len());
    let mut methods = std::collections::BTreeSet::new();
    for conv in &convs {
        let anns = by_conv.get(conv.id()).map(Vec::as_slice).unwrap_or_default();
        let ann = match anns {
            [one] => one,
            [] => return Err(invalid(format!("no annotation for conversation {}", conv.id()))),
            _ => return Err(usage(format!("several annotations for {}; pick one with --method", conv.id()))),
        };
        ann.table.validate_against(conv)?;
        methods.insert(ann.method_id.clone());
        rows.push(compute_features::<f64>(conv, &ann.table)?);
    }
    let columns: &[Feature] = if args.reduced { &Feature::REDUCED } else { &Feature::ALL };
    write(&args.out, features_to_csv(&rows, columns))?;
    write(
        &sidecar(&args.out),
        pretty(&json!({
            "preset": if args.reduced { "reduced" } else { "full" },
            "columns": columns.iter().map(|f| f.name()).collect::<Vec<_>>(),
            "methods": methods,
            "conversations": rows.len(),
        })),
    )?;
    println!("wrote {} feature rows", rows.len());
    Ok(())
}

pub fn cluster(args: &ClusterArgs, cfg: &RunConfig) -> Result<()> {
    let matrix = FeatureMatrix::<f64>::from_csv(&read(&args.features)?)?;
    let mut cc = cfg.cluster.clone();
    match args.preset {
        Some(Preset::Full) => {
            let full = turnlink::clusterlab::ClusterConfig::full_preset();
            cc.features = full.features;
            cc.dims = full.dims;
        }
        Some(Preset::Reduced) => {
            cc.features = Feature::REDUCED.iter().map(|f| f.name().to_string()).collect();
        }
        None => {}
    }
    if let Some(d) = args.dims {
        cc.dims = d;
    }
    match args.reducer {
        Some(Reducer::Pca) => cc.method = ReductionMethod::PrincipalComponents,
        Some(Reducer::Neighbor) if !matches!(cc.method, ReductionMethod::NeighborEmbedding(_)) => {
            cc.method = ReductionMethod::NeighborEmbedding(NeighborEmbeddingConfig::default())
        }
        _ => {}
    }
    if let Some(m) = args.min_cluster_size {
        cc.min_cluster_size = m;
    }
    if args.min_samples.is_some() {
        cc.min_samples = args.min_samples;
    }
    if let Some(s) = args.seed {
        cc.seed = s;
    }
    let result = run_clustering(&matrix, &cc)?;
    write(&args.out.join("clusters.csv"), result.assignment.to_csv())?;
    write(&args.out.join("profile.csv"), result.profile.to_csv())?;
    write(&args.out.join("cluster_config.json"), pretty(result.assignment.config_echo()))?;
    println!(
        "{} rows, {} clusters, {} noise",
        matrix.n_rows(),
        result.assignment.cluster_count(),
        result.profile.noise.as_ref().map_or(0, |n| n.size)
    );
    Ok(())
}

pub fn render(args: &RenderArgs, cfg: &RunConfig) -> Result<()> {
    let conv = parse_transcript(read(&args.transcript)?.as_bytes())?;
    let ann = load_annotation(&args.annotation)?.into_consolidated()?;
    ann.table.validate_against(&conv)?;
    let style = MapStyle {
        facilitator_accent: cfg.render.facilitator_accent && !args.no_facilitator_accent,
        ..MapStyle::default()
    };
    write(&args.out, render_map(&conv, &ann.table, &style)?)?;
    write(
        &sidecar(&args.out),
        pretty(&json!({
            "conversation_id": conv.id(),
            "method_id": ann.method_id,
            "colors": {
                "substantive": style.substantive,
                "mechanical": style.mechanical,
                "unclassified": style.unclassified,
            },
            "facilitator_accent": style.facilitator_accent,
            "turn_spacing": style.turn_spacing,
            "lane_height": style.lane_height,
            "radius": [style.min_radius, style.max_radius],
        })),
    )?;
    Ok(())
}

pub const REPORT_SECTIONS: [&str; 4] = ["agreement", "features", "clusters", "maps"];

pub fn report(args: &ReportArgs) -> Result<()> {
    let mut artifacts = Vec::new();
    for section in REPORT_SECTIONS {
        let src = args.run.join(section);
        if !src.is_dir() {
            log::warn!("run directory has no {section}/");
            continue;
        }
        for entry in walkdir::WalkDir::new(&src).sort_by_file_name() {
            let entry = entry.with_context(|| format!("walking {}", src.display()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(&args.run).expect("walk stays under run dir");
            let bytes = std::fs::read(entry.path()).with_context(|| format!("reading {}", entry.path().display()))?;
            write(&args.out.join(rel), &bytes)?;
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            artifacts.push(json!({
                "path": rel,
                "sha256": hex::encode(Sha256::digest(&bytes)),
                "bytes": bytes.len(),
            }));
        }
    }
    if artifacts.is_empty() {
        bail!(invalid(format!("nothing to report under {}", args.run.display())));
    }
    let manifest = json!({
        "tool": "turnlink",
        "version": env!("CARGO_PKG_VERSION"),
        "artifacts": artifacts,
    });
    write(&args.out.join("manifest.json"), pretty(&manifest))?;
    println!("collected {} artifacts", artifacts.len());
    Ok(())
}
