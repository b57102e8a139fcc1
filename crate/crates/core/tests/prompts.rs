use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use turnlink::corpus::{parse_transcript, Conversation, WindowConfig};
use turnlink::linkspace::{LinkKind, SegmentPair};
use turnlink::llmlink::{
    parse_stage1, parse_stage2, parse_stage3, render_stage1, render_stage2, render_stage3, Prompt,
    StageThreeResult, TemplateSet,
};
use turnlink::Error;

fn here() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

fn fixture() -> Conversation {
    parse_transcript(&std::fs::read(here().join("fixtures/bus_routes.json")).unwrap()).unwrap()
}

fn assert_golden(name: &str, prompt: &Prompt) {
    let dir = here().join("golden/prompts");
    let system = std::fs::read_to_string(dir.join(format!("{name}.system.txt"))).unwrap();
    let user = std::fs::read_to_string(dir.join(format!("{name}.user.txt"))).unwrap();
    assert_eq!(prompt.system, system, "{name} system prompt");
    assert_eq!(prompt.user, user, "{name} user prompt");
}

#[test]
fn stage1_matches_golden() {
    let conv = fixture();
    let t = TemplateSet::one_shot();
    assert_golden("stage1_turn5", &render_stage1(&conv, 5, WindowConfig::default(), &t).unwrap());
    // window truncated to turns 3..=12
    assert_golden("stage1_turn13", &render_stage1(&conv, 13, WindowConfig::default(), &t).unwrap());
}

#[test]
fn stage2_and_stage3_match_golden() {
    let conv = fixture();
    let t = TemplateSet::one_shot();
    assert_golden("stage2_5_to_4", &render_stage2(&conv, 5, 4, &t).unwrap());
    let seg = SegmentPair {
        response_segment: "It would, if it connected to the clinic".into(),
        target_segment: "Grace, would a shuttle help you?".into(),
        kind: LinkKind::Unclassified,
    };
    assert_golden("stage3_9_to_8", &render_stage3(&conv, 9, 8, &seg, &t).unwrap());
}

#[test]
fn render_rejects_bad_pairs() {
    let conv = fixture();
    let t = TemplateSet::one_shot();
    assert!(render_stage1(&conv, 0, WindowConfig::default(), &t).is_err());
    assert!(render_stage1(&conv, 14, WindowConfig::default(), &t).is_err());
    assert!(render_stage2(&conv, 4, 5, &t).is_err());
    assert!(render_stage2(&conv, 4, 4, &t).is_err());
}

#[test]
fn stage1_parser_accepts_and_rejects() {
    let window: BTreeSet<usize> = (3..=12).collect();
    let ok = parse_stage1("Sure.\n```json\n{\"link_turn_id\": [12, \"8\"]}\n```", 13, &window).unwrap();
    assert_eq!(ok.target_ids, BTreeSet::from([8, 12]));
    assert!(parse_stage1(r#"{"link_turn_id": ["NA"]}"#, 13, &window).unwrap().target_ids.is_empty());
    for bad in [
        r#"{"link_turn_id": [2]}"#,
        r#"{"link_turn_id": [13]}"#,
        r#"{"link_turn_id": ["NA", 12]}"#,
        r#"{"link_turn_id": ["twelve"]}"#,
        r#"{"links": [12]}"#,
        "no json here",
    ] {
        assert!(parse_stage1(bad, 13, &window).is_err(), "{bad}");
    }
    assert!(matches!(
        parse_stage1(r#"{"link_turn_id": [1]}"#, 13, &window),
        Err(Error::Validation { .. })
    ));
}

#[test]
fn stage2_parser_checks_quotes() {
    let conv = fixture();
    let (src, tgt) = (&conv.turns()[9].words, &conv.turns()[8].words);
    let ok = parse_stage2(
        r#"{"step_2": "It would, if it   connected", "step_3": "would a shuttle help you?"}"#,
        src,
        tgt,
    )
    .unwrap();
    assert_eq!(ok.response_segment, "It would, if it connected");
    assert_eq!(ok.target_segment, "would a shuttle help you?");

    let swapped = parse_stage2(r#"{"step_2": "would a shuttle help you?", "step_3": "It would"}"#, src, tgt);
    assert!(matches!(swapped, Err(Error::QuoteMismatch { .. })));
    assert!(parse_stage2(r#"{"step_2": "", "step_3": "help"}"#, src, tgt).is_err());
    assert!(parse_stage2(r#"{"step_2": "It would"}"#, src, tgt).is_err());
}

#[test]
fn stage3_parser_labels() {
    assert_eq!(
        parse_stage3(r#"{"label": "responsive_substantive",}"#).unwrap(),
        StageThreeResult::ResponsiveSubstantive
    );
    assert_eq!(parse_stage3(r#"{"label": "responsive_mechanical"}"#).unwrap().kind(), LinkKind::Mechanical);
    for bad in [r#"{"label": "substantive"}"#, r#"{"label": 1}"#, r#"{"kind": "responsive_mechanical"}"#] {
        assert!(parse_stage3(bad).is_err(), "{bad}");
    }
}
