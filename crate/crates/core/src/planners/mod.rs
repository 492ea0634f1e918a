//! Pluggable planner abstraction and the built-in implementations.
//!
//! A planner produces anchor trajectories for the requested agents. Accepted
//! trajectories must start at each agent's replan start and end at its goal;
//! violations are reported as faults, never repaired.

pub mod llm;
pub mod prompt;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::astar;
use crate::env::{validate, CellCoord, OccupancyGrid, Trajectory};

pub type AgentId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Replan the whole route from the original start; the agent resets.
    Additive,
    /// Replan from the stuck position, preserving progress.
    Compositional,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Additive => "additive",
            Strategy::Compositional => "compositional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    Grid,
    Code,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvText {
    pub kind: EncodingKind,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    Initial,
    Refine,
}

/// Why an agent is stuck and where its replanning starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StuckCause {
    Obstacle(CellCoord),
    AgentCollision(Vec<AgentId>),
    ParseFailure,
    InvalidPlan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StuckReport {
    pub agent_id: AgentId,
    pub stuck_position: CellCoord,
    pub cause: StuckCause,
    /// Original start under the additive strategy, the stuck cell under the
    /// compositional strategy.
    pub replan_start: CellCoord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanAgent {
    pub id: AgentId,
    pub start: CellCoord,
    pub goal: CellCoord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub env_encoding: EnvText,
    pub agents: Vec<PlanAgent>,
    pub mode: PlanMode,
    pub refine_context: Vec<StuckReport>,
    pub strategy: Strategy,
    pub turn_index: u32,
}

impl PlanRequest {
    /// Where the agent's new trajectory must begin this turn.
    pub fn replan_start(&self, id: AgentId) -> Option<CellCoord> {
        if self.mode == PlanMode::Refine {
            if let Some(r) = self.refine_context.iter().find(|r| r.agent_id == id) {
                return Some(r.replan_start);
            }
        }
        self.agents.iter().find(|a| a.id == id).map(|a| a.start)
    }

    pub fn goal(&self, id: AgentId) -> Option<CellCoord> {
        self.agents.iter().find(|a| a.id == id).map(|a| a.goal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Planner output before endpoint/bounds enforcement.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPlan {
    pub trajectories: BTreeMap<AgentId, Trajectory>,
    pub raw_text: String,
    pub token_usage: Option<TokenUsage>,
}

/// Per-agent rejection of a parsed trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanFault {
    #[error("planner returned no trajectory for this agent")]
    Missing,
    #[error("malformed plan: {0}")]
    MalformedPlan(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanError {
    #[error("planner unavailable: {0}")]
    PlannerUnavailable(String),
    #[error("parse failure: {0}")]
    ParseFailure(String),
    #[error("malformed coordinate: {0}")]
    MalformedCoordinate(String),
    #[error("goal unreachable from ({}, {})", .0.row, .0.col)]
    Unreachable(CellCoord),
}

/// Enforced planner output: one accepted trajectory or fault per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResponse {
    pub trajectories: BTreeMap<AgentId, Result<Trajectory, PlanFault>>,
    pub raw_text: String,
    pub token_usage: Option<TokenUsage>,
}

/// Applies the endpoint and bounds rules uniformly to a raw plan. Violating
/// trajectories become faults; they are never silently fixed.
pub fn enforce(raw: RawPlan, req: &PlanRequest, env: &OccupancyGrid) -> PlanResponse {
    let mut out = BTreeMap::new();
    let requested: Vec<&PlanAgent> = match req.mode {
        PlanMode::Initial => req.agents.iter().collect(),
        PlanMode::Refine => req
            .refine_context
            .iter()
            .filter_map(|r| req.agents.iter().find(|a| a.id == r.agent_id))
            .collect(),
    };
    for agent in requested {
        let replan_start = req.replan_start(agent.id).expect("agent in request");
        let entry = match raw.trajectories.get(&agent.id) {
            None => Err(PlanFault::Missing),
            Some(traj) => {
                if let Some(bad) = traj.anchors.iter().find(|&&a| !env.in_bounds(a)) {
                    Err(PlanFault::MalformedPlan(format!(
                        "anchor ({}, {}) out of bounds",
                        bad.row, bad.col
                    )))
                } else if traj.first() != replan_start {
                    Err(PlanFault::MalformedPlan(format!(
                        "first anchor ({}, {}) is not the replan start ({}, {})",
                        traj.first().row,
                        traj.first().col,
                        replan_start.row,
                        replan_start.col
                    )))
                } else if traj.last() != agent.goal {
                    Err(PlanFault::MalformedPlan(format!(
                        "last anchor ({}, {}) is not the goal ({}, {})",
                        traj.last().row,
                        traj.last().col,
                        agent.goal.row,
                        agent.goal.col
                    )))
                } else {
                    Ok(traj.clone())
                }
            }
        };
        out.insert(agent.id, entry);
    }
    PlanResponse {
        trajectories: out,
        raw_text: raw.raw_text,
        token_usage: raw.token_usage,
    }
}

/// Per-episode planning session. Calls within an episode are sequential.
pub trait PlannerSession: Send {
    fn plan(&mut self, req: &PlanRequest) -> Result<RawPlan, PlanError>;
}

/// Planner factory; shared across episodes and threads.
pub trait Planner: Send + Sync {
    fn kind(&self) -> &'static str;
    fn start_episode(&self, episode_id: &str, env: &OccupancyGrid) -> Box<dyn PlannerSession>;
}

/// Straight line from the replan start to the goal, every turn.
pub struct BaselinePlanner;

struct BaselineSession;

impl PlannerSession for BaselineSession {
    fn plan(&mut self, req: &PlanRequest) -> Result<RawPlan, PlanError> {
        let mut trajectories = BTreeMap::new();
        for agent in &req.agents {
            let start = req.replan_start(agent.id).unwrap();
            let anchors = if start == agent.goal {
                vec![start]
            } else {
                vec![start, agent.goal]
            };
            trajectories.insert(agent.id, Trajectory::new(anchors).unwrap());
        }
        Ok(RawPlan {
            trajectories,
            raw_text: String::new(),
            token_usage: None,
        })
    }
}

impl Planner for BaselinePlanner {
    fn kind(&self) -> &'static str {
        "baseline"
    }
    fn start_episode(&self, _episode_id: &str, _env: &OccupancyGrid) -> Box<dyn PlannerSession> {
        Box::new(BaselineSession)
    }
}

/// Greedily drops interior anchors while the direct segment stays valid.
pub fn shortcut_path(env: &OccupancyGrid, path: &[CellCoord]) -> Trajectory {
    assert!(!path.is_empty());
    let mut anchors = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut j = path.len() - 1;
        while j > i + 1 {
            let seg = Trajectory::new(vec![path[i], path[j]]).unwrap();
            if validate(&seg, env).map(|r| r.valid).unwrap_or(false) {
                break;
            }
            j -= 1;
        }
        anchors.push(path[j]);
        i = j;
    }
    Trajectory::new(anchors).unwrap()
}

/// A*-derived upper-bound planner: optimal cell path compressed by
/// line-of-sight shortcutting.
pub struct OraclePlanner;

struct OracleSession {
    env: OccupancyGrid,
}

impl PlannerSession for OracleSession {
    fn plan(&mut self, req: &PlanRequest) -> Result<RawPlan, PlanError> {
        let mut trajectories = BTreeMap::new();
        for agent in &req.agents {
            let start = req.replan_start(agent.id).unwrap();
            let (path, _) = astar(&self.env, start, agent.goal)
                .map_err(|_| PlanError::Unreachable(start))?;
            trajectories.insert(agent.id, shortcut_path(&self.env, &path));
        }
        Ok(RawPlan {
            trajectories,
            raw_text: String::new(),
            token_usage: None,
        })
    }
}

impl Planner for OraclePlanner {
    fn kind(&self) -> &'static str {
        "oracle"
    }
    fn start_episode(&self, _episode_id: &str, env: &OccupancyGrid) -> Box<dyn PlannerSession> {
        Box::new(OracleSession { env: env.clone() })
    }
}

/// Fixed queue of per-call plans; the same script replays for every episode.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPlanner {
    pub calls: Vec<BTreeMap<AgentId, Vec<CellCoord>>>,
}

impl ScriptedPlanner {
    pub fn new(calls: Vec<BTreeMap<AgentId, Vec<CellCoord>>>) -> Self {
        Self { calls }
    }

    /// Single-agent convenience: one plan per call for agent 0.
    pub fn single(plans: Vec<Vec<CellCoord>>) -> Self {
        Self {
            calls: plans
                .into_iter()
                .map(|p| BTreeMap::from([(0, p)]))
                .collect(),
        }
    }
}

struct ScriptedSession {
    calls: Vec<BTreeMap<AgentId, Vec<CellCoord>>>,
    next: usize,
}

impl PlannerSession for ScriptedSession {
    fn plan(&mut self, req: &PlanRequest) -> Result<RawPlan, PlanError> {
        let Some(call) = self.calls.get(self.next) else {
            return Err(PlanError::PlannerUnavailable("script exhausted".into()));
        };
        self.next += 1;
        let mut trajectories = BTreeMap::new();
        for agent in &req.agents {
            if let Some(anchors) = call.get(&agent.id) {
                if let Ok(traj) = Trajectory::new(anchors.clone()) {
                    trajectories.insert(agent.id, traj);
                }
            }
        }
        Ok(RawPlan {
            trajectories,
            raw_text: String::new(),
            token_usage: None,
        })
    }
}

impl Planner for ScriptedPlanner {
    fn kind(&self) -> &'static str {
        "scripted"
    }
    fn start_episode(&self, _episode_id: &str, _env: &OccupancyGrid) -> Box<dyn PlannerSession> {
        Box::new(ScriptedSession {
            calls: self.calls.clone(),
            next: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_episodes, gen_synthetic, SamplerConfig, SynthConfig};
    use crate::encode::to_grid_text;
    use crate::env::path_length;

    fn cc(r: usize, c: usize) -> CellCoord {
        CellCoord::new(r, c)
    }

    fn initial_request(env: &OccupancyGrid, agents: Vec<PlanAgent>) -> PlanRequest {
        PlanRequest {
            env_encoding: EnvText {
                kind: EncodingKind::Grid,
                text: to_grid_text(env),
            },
            agents,
            mode: PlanMode::Initial,
            refine_context: vec![],
            strategy: Strategy::Additive,
            turn_index: 1,
        }
    }

    #[test]
    fn baseline_goes_straight() {
        let env = OccupancyGrid::empty(5, 5).unwrap();
        let req = initial_request(
            &env,
            vec![PlanAgent { id: 0, start: cc(0, 0), goal: cc(4, 4) }],
        );
        let mut session = BaselinePlanner.start_episode("e", &env);
        let raw = session.plan(&req).unwrap();
        let resp = enforce(raw, &req, &env);
        let traj = resp.trajectories[&0].as_ref().unwrap();
        assert_eq!(traj.anchors, vec![cc(0, 0), cc(4, 4)]);
        assert_eq!(path_length(traj), crate::env::euclidean(cc(0, 0), cc(4, 4)));
    }

    #[test]
    fn baseline_refine_respects_strategy() {
        let env = OccupancyGrid::empty(5, 5).unwrap();
        let agents = vec![PlanAgent { id: 0, start: cc(0, 0), goal: cc(0, 3) }];
        let mut req = initial_request(&env, agents);
        req.mode = PlanMode::Refine;
        req.turn_index = 2;
        req.strategy = Strategy::Compositional;
        req.refine_context = vec![StuckReport {
            agent_id: 0,
            stuck_position: cc(0, 2),
            cause: StuckCause::Obstacle(cc(0, 3)),
            replan_start: cc(0, 2),
        }];
        let mut session = BaselinePlanner.start_episode("e", &env);
        let raw = session.plan(&req).unwrap();
        assert_eq!(raw.trajectories[&0].anchors, vec![cc(0, 2), cc(0, 3)]);

        req.strategy = Strategy::Additive;
        req.refine_context[0].replan_start = cc(0, 0);
        let raw = session.plan(&req).unwrap();
        assert_eq!(raw.trajectories[&0].anchors, vec![cc(0, 0), cc(0, 3)]);
    }

    #[test]
    fn oracle_simplifies_open_grid_to_two_anchors() {
        let env = OccupancyGrid::empty(5, 5).unwrap();
        let req = initial_request(
            &env,
            vec![PlanAgent { id: 0, start: cc(0, 0), goal: cc(4, 4) }],
        );
        let mut session = OraclePlanner.start_episode("e", &env);
        let raw = session.plan(&req).unwrap();
        assert_eq!(raw.trajectories[&0].anchors, vec![cc(0, 0), cc(4, 4)]);
    }

    #[test]
    fn oracle_l_corridor_keeps_corner() {
        // L-shaped free corridor: row 0 and column 4 free, rest obstacles.
        let mut cells = vec![1u8; 25];
        cells[..5].fill(0);
        for r in 0..5 {
            cells[r * 5 + 4] = 0;
        }
        let env = OccupancyGrid::new(5, 5, cells).unwrap();
        let req = initial_request(
            &env,
            vec![PlanAgent { id: 0, start: cc(0, 0), goal: cc(4, 4) }],
        );
        let mut session = OraclePlanner.start_episode("e", &env);
        let raw = session.plan(&req).unwrap();
        let anchors = &raw.trajectories[&0].anchors;
        assert_eq!(anchors.len(), 3);
        assert_eq!(anchors[0], cc(0, 0));
        assert_eq!(*anchors.last().unwrap(), cc(4, 4));
    }

    #[test]
    fn oracle_plans_always_validate_and_beat_cell_path() {
        let (eps, _) = build_episodes(
            &(0..10)
                .map(|seed| gen_synthetic(&SynthConfig { seed, ..SynthConfig::default() }).unwrap())
                .collect::<Vec<_>>(),
            &SamplerConfig { seed: 42, ..SamplerConfig::default() },
        );
        assert!(eps.len() >= 20);
        for ep in &eps {
            let spec = ep.agents[0];
            let req = initial_request(
                &ep.env,
                vec![PlanAgent { id: 0, start: spec.start, goal: spec.goal }],
            );
            let mut session = OraclePlanner.start_episode(&ep.id, &ep.env);
            let raw = session.plan(&req).unwrap();
            let traj = &raw.trajectories[&0];
            assert!(validate(traj, &ep.env).unwrap().valid, "episode {}", ep.id);
            assert!(path_length(traj) <= ep.d_opt[0] + 1e-9);
        }
    }

    #[test]
    fn scripted_replays_in_order() {
        let env = OccupancyGrid::empty(3, 3).unwrap();
        let planner = ScriptedPlanner::single(vec![
            vec![cc(0, 0), cc(2, 0)], // wrong goal: rejected by enforce
            vec![cc(0, 0), cc(2, 2)],
        ]);
        let req = initial_request(
            &env,
            vec![PlanAgent { id: 0, start: cc(0, 0), goal: cc(2, 2) }],
        );
        let mut session = planner.start_episode("e", &env);
        let first = enforce(session.plan(&req).unwrap(), &req, &env);
        assert!(matches!(
            first.trajectories[&0],
            Err(PlanFault::MalformedPlan(_))
        ));
        let second = enforce(session.plan(&req).unwrap(), &req, &env);
        assert!(second.trajectories[&0].is_ok());
        assert!(matches!(
            session.plan(&req),
            Err(PlanError::PlannerUnavailable(_))
        ));
    }

    #[test]
    fn enforce_rejects_out_of_bounds_anchor() {
        let env = OccupancyGrid::empty(3, 3).unwrap();
        let req = initial_request(
            &env,
            vec![PlanAgent { id: 0, start: cc(0, 0), goal: cc(2, 2) }],
        );
        let raw = RawPlan {
            trajectories: BTreeMap::from([(
                0,
                Trajectory::new(vec![cc(0, 0), cc(5, 5), cc(2, 2)]).unwrap(),
            )]),
            raw_text: String::new(),
            token_usage: None,
        };
        let resp = enforce(raw, &req, &env);
        assert!(matches!(
            resp.trajectories[&0],
            Err(PlanFault::MalformedPlan(_))
        ));
    }
}
