//! Deterministic SVG rendering of grids, trajectories, and episode events.
//!
//! Output is plain string assembly with fixed-precision coordinates, so the
//! same inputs always produce byte-identical documents.

use std::fmt::Write;

use crate::env::{CellCoord, OccupancyGrid, Position};
use crate::sim::{EpisodeResult, EventKind};

const CELL_PX: f64 = 24.0;
const AGENT_COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn fmt_px(v: f64) -> String {
    // Two decimals is exact for quarter-cell geometry at 24 px per cell.
    format!("{:.2}", v)
}

fn px(p: Position) -> (String, String) {
    (fmt_px(p.x * CELL_PX), fmt_px(p.y * CELL_PX))
}

pub struct RenderOptions {
    /// Draw circles on trajectory anchor points.
    pub anchor_markers: bool,
    /// Draw markers where obstacle stops and collisions happened.
    pub event_markers: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { anchor_markers: true, event_markers: true }
    }
}

fn grid_body(env: &OccupancyGrid, out: &mut String) {
    let w = env.width() as f64 * CELL_PX;
    let h = env.height() as f64 * CELL_PX;
    write!(out, r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##, w, h).unwrap();
    out.push('\n');
    for cell in env.obstacle_cells() {
        write!(
            out,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#333333"/>"##,
            fmt_px(cell.col as f64 * CELL_PX),
            fmt_px(cell.row as f64 * CELL_PX),
            CELL_PX,
            CELL_PX
        )
        .unwrap();
        out.push('\n');
    }
    // Light cell borders for readability.
    for r in 0..=env.height() {
        write!(
            out,
            r##"<line x1="0" y1="{0}" x2="{1}" y2="{0}" stroke="#dddddd" stroke-width="0.5"/>"##,
            fmt_px(r as f64 * CELL_PX),
            fmt_px(w)
        )
        .unwrap();
        out.push('\n');
    }
    for c in 0..=env.width() {
        write!(
            out,
            r##"<line x1="{0}" y1="0" x2="{0}" y2="{1}" stroke="#dddddd" stroke-width="0.5"/>"##,
            fmt_px(c as f64 * CELL_PX),
            fmt_px(h)
        )
        .unwrap();
        out.push('\n');
    }
}

fn polyline(anchors: &[CellCoord], color: &str, out: &mut String) {
    if anchors.len() < 2 {
        return;
    }
    let pts: Vec<String> = anchors
        .iter()
        .map(|a| {
            let (x, y) = px(a.center());
            format!("{},{}", x, y)
        })
        .collect();
    write!(
        out,
        r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="2.5" stroke-linejoin="round" opacity="0.85"/>"##,
        pts.join(" "),
        color
    )
    .unwrap();
    out.push('\n');
}

fn circle(p: Position, r: f64, fill: &str, extra: &str, out: &mut String) {
    let (x, y) = px(p);
    write!(out, r##"<circle cx="{}" cy="{}" r="{}" fill="{}"{}/>"##, x, y, r, fill, extra).unwrap();
    out.push('\n');
}

fn label(p: Position, text: &str, color: &str, out: &mut String) {
    let (x, y) = px(p);
    write!(
        out,
        r##"<text x="{}" y="{}" font-size="10" font-family="monospace" fill="{}" text-anchor="middle" dominant-baseline="central">{}</text>"##,
        x, y, color, text
    )
    .unwrap();
    out.push('\n');
}

/// Renders an occupancy grid alone.
pub fn render_grid(env: &OccupancyGrid) -> String {
    let mut out = svg_open(env);
    grid_body(env, &mut out);
    out.push_str("</svg>\n");
    out
}

fn svg_open(env: &OccupancyGrid) -> String {
    let w = env.width() as f64 * CELL_PX;
    let h = env.height() as f64 * CELL_PX;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    )
}

/// Renders an episode outcome: grid, each agent's final plan with start/goal
/// labels and anchor markers, plus stop and collision markers.
pub fn render_episode(
    env: &OccupancyGrid,
    result: &EpisodeResult,
    opts: &RenderOptions,
) -> String {
    let mut out = svg_open(env);
    grid_body(env, &mut out);

    for (i, agent) in result.agents.iter().enumerate() {
        let color = AGENT_COLORS[i % AGENT_COLORS.len()];
        if let Some(plan) = &agent.final_plan {
            polyline(plan, color, &mut out);
            if opts.anchor_markers {
                for a in plan {
                    circle(a.center(), 3.0, color, "", &mut out);
                }
            }
            if let (Some(first), Some(last)) = (plan.first(), plan.last()) {
                circle(first.center(), 6.0, "#ffffff", &format!(r##" stroke="{color}" stroke-width="2""##), &mut out);
                label(first.center(), &format!("S{}", agent.agent_id), color, &mut out);
                circle(last.center(), 6.0, "#ffffff", &format!(r##" stroke="{color}" stroke-width="2""##), &mut out);
                label(last.center(), &format!("G{}", agent.agent_id), color, &mut out);
            }
        }
        // Final resting position.
        circle(agent.final_position, 4.0, color, r#" opacity="0.6""#, &mut out);
    }

    if opts.event_markers {
        for ev in &result.events {
            match &ev.kind {
                EventKind::ObstacleStop { cell, .. } => {
                    let p = cell.center();
                    let (x, y) = px(p);
                    write!(
                        out,
                        r##"<rect x="{}" y="{}" width="8" height="8" fill="none" stroke="#cc0000" stroke-width="2" transform="rotate(45 {} {})"/>"##,
                        fmt_px(p.x * CELL_PX - 4.0),
                        fmt_px(p.y * CELL_PX - 4.0),
                        x,
                        y
                    )
                    .unwrap();
                    out.push('\n');
                }
                EventKind::AgentCollision { positions, .. } => {
                    for p in positions {
                        circle(*p, 5.0, "none", r##" stroke="#cc0000" stroke-width="2" stroke-dasharray="2,2""##, &mut out);
                    }
                }
                _ => {}
            }
        }
    }

    out.push_str("</svg>\n");
    out
}
