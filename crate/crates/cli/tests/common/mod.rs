//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const CONVERSATIONS: [&str; 3] = ["library_hours", "park_renovation", "school_start"];
pub const SCRIPTED_MODEL: &str = "scripted-v1";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn turnlink(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turnlink"))
        .args(args.iter().map(|a| a.as_ref()))
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn ok(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let out = turnlink(args);
    if !out.status.success() {
        panic!(
            "turnlink {:?} exited {:?}: {}",
            args.iter().map(|a| a.as_ref().to_string_lossy().into_owned()).collect::<Vec<_>>(),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    out
}

/// The whole offline pipeline over the fixture corpus; returns the manifest.
pub fn run_pipeline(run: &Path) -> String {
    let fx = fixtures();
    let transcripts = run.join("transcripts");
    let ann = run.join("annotations");
    ok(&[&"ingest", &fx.join("corpus"), &"--out", &transcripts]);
    ok(&[
        &"annotate", &transcripts, &"--backend", &"llm", &"--model", &SCRIPTED_MODEL,
        &"--cache", &fx.join("replay_cache"), &"--out", &ann.join("llm"),
    ]);
    ok(&[
        &"annotate", &transcripts, &"--backend", &"embedding",
        &"--embeddings", &fx.join("embeddings.json"), &"--out", &ann.join("similarity"),
    ]);
    for conv in CONVERSATIONS {
        let mut args: Vec<&dyn AsRef<std::ffi::OsStr>> = vec![&"consolidate", &"--human", &"--out"];
        let out = ann.join("human").join(format!("{conv}.human.json"));
        args.push(&out);
        let inputs: Vec<PathBuf> = (1..=3).map(|k| fx.join(format!("human/{conv}.annotator_{k}.json"))).collect();
        args.extend(inputs.iter().map(|p| p as &dyn AsRef<std::ffi::OsStr>));
        ok(&args);
    }
    ok(&[
        &"agree", &ann.join("human"), &ann.join("llm"), &ann.join("similarity"), &"--out", &run.join("agreement"),
    ]);
    let features = run.join("features/features.csv");
    ok(&[&"features", &"--transcripts", &transcripts, &"--annotations", &ann.join("llm"), &"--out", &features]);
    ok(&[&"cluster", &"--features", &features, &"--out", &run.join("clusters"), &"--min-cluster-size", &"2"]);
    for conv in CONVERSATIONS {
        ok(&[
            &"render", &"--transcript", &transcripts.join(format!("{conv}.json")),
            &"--annotation", &ann.join(format!("llm/{conv}.{SCRIPTED_MODEL}.json")),
            &"--out", &run.join(format!("maps/{conv}.svg")),
        ]);
    }
    let report = run.join("report");
    ok(&[&"report", &"--run", &run, &"--out", &report]);
    std::fs::read_to_string(report.join("manifest.json")).unwrap()
}
