//! Prompt construction and plan-text parsing for chat-style planners.
//!
//! Output grammar, one line per agent:
//!   PATH <id>: (r,c) -> (r,c) -> ...
//! When several lines exist for the same agent, the last one wins.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::env::{CellCoord, Trajectory};

use super::{EncodingKind, PlanError, PlanMode, PlanRequest, StuckCause, Strategy};

/// Deterministic prompt for a plan request.
pub fn build_prompt(req: &PlanRequest) -> String {
    let mut out = String::new();
    match req.mode {
        PlanMode::Initial => {
            let encoding_name = match req.env_encoding.kind {
                EncodingKind::Grid => "a grid of '0' (free) and '1' (obstacle) characters",
                EncodingKind::Code => "code listing the grid dimensions and obstacle coordinates",
            };
            writeln!(
                out,
                "You are navigating {} agent(s) on a 2D occupancy grid. \
                 Coordinates are (row,col), zero-indexed from the top-left.",
                req.agents.len()
            )
            .unwrap();
            writeln!(out, "The environment is encoded as {encoding_name}:").unwrap();
            writeln!(out, "{}", req.env_encoding.text).unwrap();
            writeln!(out, "Agents:").unwrap();
            for a in &req.agents {
                writeln!(
                    out,
                    "- agent {}: start ({},{}), goal ({},{})",
                    a.id, a.start.row, a.start.col, a.goal.row, a.goal.col
                )
                .unwrap();
            }
            writeln!(
                out,
                "Each agent walks in straight lines between consecutive waypoint cells. \
                 A straight segment is blocked if it touches any obstacle cell, \
                 including cells met exactly at a corner. Agents move simultaneously \
                 at equal speed and must not come close to each other."
            )
            .unwrap();
        }
        PlanMode::Refine => {
            writeln!(
                out,
                "Turn {}: some agents are stuck and need new paths.",
                req.turn_index
            )
            .unwrap();
            for r in &req.refine_context {
                let cause = match &r.cause {
                    StuckCause::Obstacle(c) => {
                        format!("its path touches the obstacle cell ({},{})", c.row, c.col)
                    }
                    StuckCause::AgentCollision(others) => format!(
                        "it came too close to agent(s) {}",
                        others
                            .iter()
                            .map(|o| o.to_string())
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                    StuckCause::ParseFailure => "its previous reply could not be parsed".into(),
                    StuckCause::InvalidPlan => "its previous path was rejected".into(),
                };
                writeln!(
                    out,
                    "- agent {} is stuck at ({},{}) because {}.",
                    r.agent_id, r.stuck_position.row, r.stuck_position.col, cause
                )
                .unwrap();
            }
            match req.strategy {
                Strategy::Additive => writeln!(
                    out,
                    "Replan each stuck agent's complete path, restarting from its \
                     original starting point."
                )
                .unwrap(),
                Strategy::Compositional => writeln!(
                    out,
                    "Replan each stuck agent from its current position: the stuck \
                     cell serves as the new starting point."
                )
                .unwrap(),
            }
        }
    }
    writeln!(
        out,
        "Respond with exactly one line per agent listed below, in this form, \
         inserting as many intermediate waypoints as needed:"
    )
    .unwrap();
    let targets: Vec<(u32, CellCoord, CellCoord)> = match req.mode {
        PlanMode::Initial => req
            .agents
            .iter()
            .map(|a| (a.id, a.start, a.goal))
            .collect(),
        PlanMode::Refine => req
            .refine_context
            .iter()
            .map(|r| {
                let goal = req.goal(r.agent_id).expect("stuck agent in request");
                (r.agent_id, r.replan_start, goal)
            })
            .collect(),
    };
    for (id, start, goal) in targets {
        writeln!(
            out,
            "PATH {}: ({},{}) -> ... -> ({},{})",
            id, start.row, start.col, goal.row, goal.col
        )
        .unwrap();
    }
    out
}

/// Agents a response must cover for the given request.
pub fn requested_agents(req: &PlanRequest) -> Vec<u32> {
    match req.mode {
        PlanMode::Initial => req.agents.iter().map(|a| a.id).collect(),
        PlanMode::Refine => req.refine_context.iter().map(|r| r.agent_id).collect(),
    }
}

/// Extracts each requested agent's trajectory from free-form text.
pub fn parse_plan_text(
    text: &str,
    req: &PlanRequest,
) -> Result<BTreeMap<u32, Trajectory>, PlanError> {
    let mut out = BTreeMap::new();
    for id in requested_agents(req) {
        let marker = format!("PATH {id}:");
        let line = text
            .lines()
            .rev()
            .find_map(|l| l.find(&marker).map(|pos| &l[pos + marker.len()..]))
            .ok_or_else(|| PlanError::ParseFailure(format!("no PATH line for agent {id}")))?;
        let anchors = parse_coord_chain(line)?;
        if anchors.is_empty() {
            return Err(PlanError::ParseFailure(format!(
                "empty coordinate list for agent {id}"
            )));
        }
        out.insert(id, Trajectory::new(anchors).unwrap());
    }
    Ok(out)
}

fn parse_coord_chain(s: &str) -> Result<Vec<CellCoord>, PlanError> {
    let mut anchors = Vec::new();
    for token in s.split("->") {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let inner = token
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| PlanError::MalformedCoordinate(token.to_string()))?;
        let mut parts = inner.split(',');
        let (r, c) = match (parts.next(), parts.next(), parts.next()) {
            (Some(r), Some(c), None) => (r.trim(), c.trim()),
            _ => return Err(PlanError::MalformedCoordinate(token.to_string())),
        };
        let row = r
            .parse::<usize>()
            .map_err(|_| PlanError::MalformedCoordinate(token.to_string()))?;
        let col = c
            .parse::<usize>()
            .map_err(|_| PlanError::MalformedCoordinate(token.to_string()))?;
        anchors.push(CellCoord::new(row, col));
    }
    Ok(anchors)
}

/// Renders a trajectory as a PATH line (the inverse of [`parse_plan_text`]).
pub fn render_path_line(id: u32, anchors: &[CellCoord]) -> String {
    let coords: Vec<String> = anchors
        .iter()
        .map(|a| format!("({},{})", a.row, a.col))
        .collect();
    format!("PATH {}: {}", id, coords.join(" -> "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::to_grid_text;
    use crate::env::OccupancyGrid;
    use crate::planners::{EnvText, PlanAgent, StuckReport};

    fn cc(r: usize, c: usize) -> CellCoord {
        CellCoord::new(r, c)
    }

    fn request(env: &OccupancyGrid) -> PlanRequest {
        PlanRequest {
            env_encoding: EnvText {
                kind: EncodingKind::Grid,
                text: to_grid_text(env),
            },
            agents: vec![PlanAgent { id: 0, start: cc(0, 0), goal: cc(2, 2) }],
            mode: PlanMode::Initial,
            refine_context: vec![],
            strategy: Strategy::Additive,
            turn_index: 1,
        }
    }

    #[test]
    fn prompt_contains_grid_and_one_path_line() {
        let env = OccupancyGrid::empty(3, 3).unwrap();
        let req = request(&env);
        let prompt = build_prompt(&req);
        assert!(prompt.contains(&req.env_encoding.text));
        let path_lines = prompt.lines().filter(|l| l.starts_with("PATH ")).count();
        assert_eq!(path_lines, 1);
        // Deterministic.
        assert_eq!(prompt, build_prompt(&req));
    }

    #[test]
    fn refine_prompt_states_strategy_and_causes() {
        let env = OccupancyGrid::empty(3, 3).unwrap();
        let mut req = request(&env);
        req.mode = PlanMode::Refine;
        req.turn_index = 2;
        req.agents.push(PlanAgent { id: 1, start: cc(2, 0), goal: cc(0, 2) });
        req.refine_context = vec![
            StuckReport {
                agent_id: 0,
                stuck_position: cc(1, 1),
                cause: StuckCause::Obstacle(cc(1, 2)),
                replan_start: cc(0, 0),
            },
            StuckReport {
                agent_id: 1,
                stuck_position: cc(1, 0),
                cause: StuckCause::AgentCollision(vec![0]),
                replan_start: cc(2, 0),
            },
        ];
        let prompt = build_prompt(&req);
        assert!(prompt.contains("original starting point"));
        assert!(prompt.contains("obstacle cell (1,2)"));
        assert!(prompt.contains("too close to agent(s) 0"));
        assert_eq!(prompt.lines().filter(|l| l.starts_with("PATH ")).count(), 2);

        req.strategy = Strategy::Compositional;
        for r in &mut req.refine_context {
            r.replan_start = r.stuck_position;
        }
        let prompt = build_prompt(&req);
        assert!(prompt.contains("serves as the new starting point"));
    }

    #[test]
    fn parse_simple_line() {
        let env = OccupancyGrid::empty(5, 5).unwrap();
        let mut req = request(&env);
        req.agents[0].goal = cc(3, 4);
        let parsed = parse_plan_text("PATH 0: (1,2) -> (3,4)", &req).unwrap();
        assert_eq!(parsed[&0].anchors, vec![cc(1, 2), cc(3, 4)]);
    }

    #[test]
    fn parse_last_line_wins() {
        let env = OccupancyGrid::empty(5, 5).unwrap();
        let req = request(&env);
        let text = "I think the best route is:\nPATH 0: (0,0) -> (1,1)\nActually, better:\nPATH 0: (0,0) -> (2,2)";
        let parsed = parse_plan_text(text, &req).unwrap();
        assert_eq!(parsed[&0].anchors, vec![cc(0, 0), cc(2, 2)]);
    }

    #[test]
    fn parse_rejects_malformed_coordinate() {
        let env = OccupancyGrid::empty(5, 5).unwrap();
        let req = request(&env);
        assert!(matches!(
            parse_plan_text("PATH 0: (1,2) -> (x,4)", &req),
            Err(PlanError::MalformedCoordinate(_))
        ));
    }

    #[test]
    fn parse_missing_agent_is_parse_failure() {
        let env = OccupancyGrid::empty(5, 5).unwrap();
        let req = request(&env);
        assert!(matches!(
            parse_plan_text("no plans here", &req),
            Err(PlanError::ParseFailure(_))
        ));
    }

    #[test]
    fn render_parse_roundtrip() {
        let env = OccupancyGrid::empty(9, 9).unwrap();
        let mut req = request(&env);
        req.agents[0].goal = cc(8, 8);
        let anchors = vec![cc(0, 0), cc(3, 7), cc(5, 5), cc(8, 8)];
        let line = render_path_line(0, &anchors);
        let parsed = parse_plan_text(&line, &req).unwrap();
        assert_eq!(parsed[&0].anchors, anchors);
    }
}
