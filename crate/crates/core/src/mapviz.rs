//! Static SVG conversation maps: turns along a time axis, one lane per
//! speaker, responsivity arcs from each response back to its target.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use quick_xml::escape::escape;

use crate::corpus::{speaking_time, Conversation};
use crate::error::{Error, Result};
use crate::linkspace::{LinkKind, LinkTable};

#[derive(Debug, Clone, PartialEq)]
pub struct MapStyle {
    /// Arc stroke color per kind. Total by construction.
    pub substantive: String,
    pub mechanical: String,
    pub unclassified: String,
    /// Outline facilitator turns with an accent ring.
    pub facilitator_accent: bool,
    pub turn_spacing: f64,
    pub lane_height: f64,
    pub min_radius: f64,
    pub max_radius: f64,
}

impl Default for MapStyle {
    fn default() -> Self {
        MapStyle {
            substantive: "darkgreen".into(),
            mechanical: "darkorange".into(),
            unclassified: "gray".into(),
            facilitator_accent: true,
            turn_spacing: 36.0,
            lane_height: 56.0,
            min_radius: 3.0,
            max_radius: 14.0,
        }
    }
}

impl MapStyle {
    pub fn color(&self, kind: LinkKind) -> &str {
        match kind {
            LinkKind::Substantive => &self.substantive,
            LinkKind::Mechanical => &self.mechanical,
            LinkKind::Unclassified => &self.unclassified,
        }
    }
}

const LABEL_WIDTH: f64 = 120.0;
const TOP: f64 = 40.0;

/// Renders one conversation map. `links` must have been built over `conv`.
pub fn render_map(conv: &Conversation, links: &LinkTable, style: &MapStyle) -> Result<String> {
    if links.conversation_id() != conv.id() || links.num_turns() != conv.len() {
        return Err(Error::Argument(format!(
            "links for {} ({} turns) do not match conversation {} ({} turns)",
            links.conversation_id(),
            links.num_turns(),
            conv.id(),
            conv.len()
        )));
    }
    let lanes: BTreeMap<&str, usize> = conv
        .speakers()
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let n_lanes = lanes.len();
    let longest = conv
        .turns()
        .iter()
        .map(speaking_time)
        .fold(0.0f64, f64::max);
    let x_of = |t: usize| LABEL_WIDTH + style.turn_spacing * (t as f64 + 0.5);
    let y_of = |lane: usize| TOP + style.lane_height * (lane as f64 + 0.5);
    let pos: Vec<(f64, f64)> = conv
        .turns()
        .iter()
        .map(|t| (x_of(t.turn_id), y_of(lanes[t.speaker_id.as_str()])))
        .collect();
    let width = LABEL_WIDTH + style.turn_spacing * conv.len() as f64 + 20.0;
    let height = TOP + style.lane_height * n_lanes as f64 + 20.0;
    let n_arcs = links.link_count();

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.2}" height="{height:.2}" viewBox="0 0 {width:.2} {height:.2}" data-conversation-id="{}" data-node-count="{}" data-arc-count="{n_arcs}">"#,
        escape(conv.id()),
        conv.len()
    )
    .unwrap();
    writeln!(
        s,
        "<style>.turn{{fill:steelblue;fill-opacity:0.8}} .facilitator{{stroke:crimson;stroke-width:2}} path{{fill:none;stroke-width:1.5;stroke-opacity:0.8}} .arc-substantive{{stroke:{}}} .arc-mechanical{{stroke:{}}} .arc-unclassified{{stroke:{};stroke-dasharray:3 2}} text{{font-family:sans-serif;font-size:11px}}</style>",
        escape(&style.substantive),
        escape(&style.mechanical),
        escape(&style.unclassified)
    )
    .unwrap();
    writeln!(s, "<defs>").unwrap();
    for kind in LinkKind::ALL {
        writeln!(
            s,
            r#"<marker id="head-{k}" viewBox="0 0 6 6" refX="5" refY="3" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="{c}" stroke="none"/></marker>"#,
            k = kind.as_str(),
            c = escape(style.color(kind))
        )
        .unwrap();
    }
    writeln!(s, "</defs>").unwrap();

    writeln!(s, r#"<g class="lanes">"#).unwrap();
    let mut by_lane: Vec<(&str, usize)> = lanes.iter().map(|(k, v)| (*k, *v)).collect();
    by_lane.sort_by_key(|(_, i)| *i);
    for (speaker, lane) in by_lane {
        let y = y_of(lane);
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="lightgray"/><text x="8.00" y="{:.2}">{}</text>"#,
            LABEL_WIDTH,
            width - 20.0,
            y + 4.0,
            escape(speaker)
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();

    writeln!(s, r#"<g class="arcs">"#).unwrap();
    for link in links.links() {
        let (x1, y1) = pos[link.source];
        let (x2, y2) = pos[link.target];
        let lift = 12.0 + 0.35 * (x1 - x2).abs();
        let (cx, cy) = ((x1 + x2) / 2.0, y1.min(y2) - lift);
        let k = link.kind.as_str();
        writeln!(
            s,
            r#"<path class="arc-{k}" data-source="{}" data-target="{}" stroke="{}" marker-end="url(#head-{k})" d="M{x1:.2},{y1:.2} Q{cx:.2},{cy:.2} {x2:.2},{y2:.2}"/>"#,
            link.source,
            link.target,
            escape(style.color(link.kind))
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();

    writeln!(s, r#"<g class="turns">"#).unwrap();
    for (turn, (x, y)) in conv.turns().iter().zip(&pos) {
        let share = if longest > 0.0 { speaking_time(turn) / longest } else { 1.0 };
        let r = style.min_radius + (style.max_radius - style.min_radius) * share;
        let class = if style.facilitator_accent && turn.is_facilitator() {
            "turn facilitator"
        } else {
            "turn"
        };
        let preview: String = turn.words.chars().take(80).collect();
        writeln!(
            s,
            r#"<circle class="{class}" data-turn-id="{}" data-speaker="{}" cx="{x:.2}" cy="{y:.2}" r="{r:.2}"><title>[{}] {}: {}</title></circle>"#,
            turn.turn_id,
            escape(&turn.speaker_id),
            turn.turn_id,
            escape(&turn.speaker_id),
            escape(&preview)
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    s.push_str("</svg>\n");
    Ok(s)
}
