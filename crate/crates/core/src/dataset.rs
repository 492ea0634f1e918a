//! Episode construction: start/goal sampling, A* optimal-path labeling,
//! synthetic rectilinear floorplans, and JSONL persistence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encode::{parse_grid_text, to_grid_text};
use crate::env::{CellCoord, OccupancyGrid};

pub const EPISODE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("endpoint ({0}, {1}) is an obstacle or out of bounds")]
    InvalidEndpoint(usize, usize),
    #[error("no path from ({}, {}) to ({}, {})", .0.row, .0.col, .1.row, .1.col)]
    Unreachable(CellCoord, CellCoord),
    #[error("start cell has no reachable free cell")]
    NoReachableGoal,
    #[error("grid has fewer than 2 free cells in any connected component")]
    TooFewFreeCells,
    #[error("infeasible synthetic config: {0}")]
    InfeasibleConfig(String),
    #[error("episode file line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("episode file line {line}: unsupported schema version {got} (expected {expected})")]
    SchemaVersion { line: usize, got: u32, expected: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("sampling retries exhausted for map {0}")]
    RetriesExhausted(String),
}

/// Exact move-count cost on the 8-connected grid: straight moves cost 1,
/// diagonal moves cost sqrt(2). Kept as counts so equal-cost paths compare
/// bit-identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MoveCost {
    pub straight: u32,
    pub diagonal: u32,
}

impl MoveCost {
    pub fn value(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    f: f64,
    g: MoveCost,
    cell: CellCoord,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f, deterministic tie-break on cell.
        other
            .f
            .partial_cmp(&self.f)
            .unwrap()
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const DIRS: [(i64, i64); 8] = [
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

fn neighbors(env: &OccupancyGrid, c: CellCoord) -> impl Iterator<Item = (CellCoord, bool)> + '_ {
    DIRS.iter().filter_map(move |&(dr, dc)| {
        let (nr, nc) = (c.row as i64 + dr, c.col as i64 + dc);
        if nr < 0 || nc < 0 || nr >= env.height() as i64 || nc >= env.width() as i64 {
            return None;
        }
        let n = CellCoord::new(nr as usize, nc as usize);
        if env.is_obstacle(n) {
            return None;
        }
        let diagonal = dr != 0 && dc != 0;
        if diagonal {
            // No corner cutting: both orthogonally adjacent cells must be free.
            let a = CellCoord::new(c.row, n.col);
            let b = CellCoord::new(n.row, c.col);
            if env.is_obstacle(a) || env.is_obstacle(b) {
                return None;
            }
        }
        Some((n, diagonal))
    })
}

/// Octile distance: admissible and consistent for this movement model.
fn octile(a: CellCoord, b: CellCoord) -> f64 {
    let dr = (a.row as i64 - b.row as i64).unsigned_abs() as f64;
    let dc = (a.col as i64 - b.col as i64).unsigned_abs() as f64;
    let (hi, lo) = if dr > dc { (dr, dc) } else { (dc, dr) };
    hi + (std::f64::consts::SQRT_2 - 1.0) * lo
}

/// Minimum-cost 8-connected path and its exact cost.
pub fn astar(
    env: &OccupancyGrid,
    start: CellCoord,
    goal: CellCoord,
) -> Result<(Vec<CellCoord>, f64), DatasetError> {
    astar_exact(env, start, goal).map(|(path, cost)| (path, cost.value()))
}

/// As [`astar`] but keeps the cost as exact move counts.
pub fn astar_exact(
    env: &OccupancyGrid,
    start: CellCoord,
    goal: CellCoord,
) -> Result<(Vec<CellCoord>, MoveCost), DatasetError> {
    for &c in [&start, &goal] {
        if !env.in_bounds(c) || env.is_obstacle(c) {
            return Err(DatasetError::InvalidEndpoint(c.row, c.col));
        }
    }
    let idx = |c: CellCoord| c.row * env.width() + c.col;
    let n = env.height() * env.width();
    let mut best: Vec<Option<MoveCost>> = vec![None; n];
    let mut parent: Vec<Option<CellCoord>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[idx(start)] = Some(MoveCost::default());
    heap.push(HeapEntry { f: octile(start, goal), g: MoveCost::default(), cell: start });

    while let Some(HeapEntry { g, cell, .. }) = heap.pop() {
        if closed[idx(cell)] {
            continue;
        }
        closed[idx(cell)] = true;
        if cell == goal {
            let mut path = vec![cell];
            let mut cur = cell;
            while let Some(p) = parent[idx(cur)] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok((path, g));
        }
        for (next, diagonal) in neighbors(env, cell) {
            if closed[idx(next)] {
                continue;
            }
            let ng = MoveCost {
                straight: g.straight + u32::from(!diagonal),
                diagonal: g.diagonal + u32::from(diagonal),
            };
            let better = match best[idx(next)] {
                None => true,
                Some(old) => ng.value() < old.value(),
            };
            if better {
                best[idx(next)] = Some(ng);
                parent[idx(next)] = Some(cell);
                heap.push(HeapEntry { f: ng.value() + octile(next, goal), g: ng, cell: next });
            }
        }
    }
    Err(DatasetError::Unreachable(start, goal))
}

/// Free cells reachable from `start` under the A* movement model, excluding
/// `start` itself, in row-major order.
pub fn reachable_from(env: &OccupancyGrid, start: CellCoord) -> Vec<CellCoord> {
    let idx = |c: CellCoord| c.row * env.width() + c.col;
    let mut seen = vec![false; env.height() * env.width()];
    seen[idx(start)] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for (n, _) in neighbors(env, c) {
            if !seen[idx(n)] {
                seen[idx(n)] = true;
                queue.push_back(n);
            }
        }
    }
    let mut out: Vec<CellCoord> = env.free_cells().filter(|&c| seen[idx(c)] && c != start).collect();
    out.sort();
    out
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub alpha: f64,
    pub pairs_per_map: usize,
    pub seed: u64,
    pub max_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { alpha: 0.5, pairs_per_map: 3, seed: 0, max_retries: 20 }
    }
}

/// Normalized goal-selection probabilities over the candidate set reachable
/// from `start`: w(c) = alpha * dhat(c) + (1 - alpha), P(c) = w(c) / sum(w),
/// where dhat is the min-max-normalized Manhattan distance from `start`.
pub fn goal_distribution(
    env: &OccupancyGrid,
    start: CellCoord,
    alpha: f64,
) -> Result<Vec<(CellCoord, f64)>, DatasetError> {
    let candidates = reachable_from(env, start);
    if candidates.is_empty() {
        return Err(DatasetError::NoReachableGoal);
    }
    let manhattan = |c: CellCoord| {
        (start.row as i64 - c.row as i64).unsigned_abs()
            + (start.col as i64 - c.col as i64).unsigned_abs()
    };
    let dists: Vec<u64> = candidates.iter().map(|&c| manhattan(c)).collect();
    let d_min = *dists.iter().min().unwrap();
    let d_max = *dists.iter().max().unwrap();
    let weights: Vec<f64> = dists
        .iter()
        .map(|&d| {
            let dhat = if d_max == d_min {
                0.0
            } else {
                (d - d_min) as f64 / (d_max - d_min) as f64
            };
            alpha * dhat + (1.0 - alpha)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(candidates
        .into_iter()
        .zip(weights)
        .map(|(c, w)| (c, w / total))
        .collect())
}

/// Draws a start cell uniformly over free cells and a goal from the
/// distance-weighted distribution over cells reachable from it.
pub fn sample_pair(
    env: &OccupancyGrid,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<(CellCoord, CellCoord), DatasetError> {
    let mut free: Vec<CellCoord> = env.free_cells().collect();
    free.sort();
    if free.len() < 2 {
        return Err(DatasetError::TooFewFreeCells);
    }
    let start = free[rng.gen_range(0..free.len())];
    let dist = goal_distribution(env, start, cfg.alpha)?;
    let draw: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for &(c, p) in &dist {
        acc += p;
        if draw < acc {
            return Ok((start, c));
        }
    }
    Ok((start, dist.last().unwrap().0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub start: CellCoord,
    pub goal: CellCoord,
}

/// One benchmark case: an environment, per-agent endpoints, and the A*
/// optimal cost per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub env: OccupancyGrid,
    pub agents: Vec<AgentSpec>,
    pub d_opt: Vec<f64>,
}

impl Episode {
    pub fn grid_hash(&self) -> String {
        grid_hash(&self.env)
    }
}

/// Lowercase hex SHA-256 of the grid-text encoding.
pub fn grid_hash(env: &OccupancyGrid) -> String {
    let mut hasher = Sha256::new();
    hasher.update(to_grid_text(env).as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-map RNG stream so parallel construction is order-independent.
fn map_rng(seed: u64, map_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ (map_index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    )
}

/// Builds `pairs_per_map` single-agent episodes per environment. Maps whose
/// sampling or labeling keeps failing are skipped; skipped map indices are
/// returned alongside the episodes.
pub fn build_episodes(
    envs: &[OccupancyGrid],
    cfg: &SamplerConfig,
) -> (Vec<Episode>, Vec<usize>) {
    let mut episodes = Vec::new();
    let mut skipped = Vec::new();
    for (map_index, env) in envs.iter().enumerate() {
        let mut rng = map_rng(cfg.seed, map_index as u64);
        let mut map_eps = Vec::new();
        let mut failed = false;
        for pair_index in 0..cfg.pairs_per_map {
            let mut found = None;
            for _ in 0..cfg.max_retries {
                let Ok((start, goal)) = sample_pair(env, cfg, &mut rng) else {
                    continue;
                };
                if start == goal {
                    continue;
                }
                if let Ok((_, cost)) = astar(env, start, goal) {
                    found = Some((start, goal, cost));
                    break;
                }
            }
            match found {
                Some((start, goal, cost)) => map_eps.push(Episode {
                    id: format!("m{map_index:04}p{pair_index}"),
                    env: env.clone(),
                    agents: vec![AgentSpec { start, goal }],
                    d_opt: vec![cost],
                }),
                None => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            skipped.push(map_index);
        } else {
            episodes.extend(map_eps);
        }
    }
    (episodes, skipped)
}

/// Regroups single-agent episodes into `n_agents`-agent episodes per map,
/// keeping starts pairwise distinct and goals pairwise distinct.
pub fn group_agents(episodes: &[Episode], n_agents: usize) -> Vec<Episode> {
    assert!(n_agents >= 1);
    if n_agents == 1 {
        return episodes.to_vec();
    }
    let mut out = Vec::new();
    let mut by_map: Vec<(String, Vec<&Episode>)> = Vec::new();
    for ep in episodes {
        let h = ep.grid_hash();
        match by_map.iter_mut().find(|(k, _)| *k == h) {
            Some((_, v)) => v.push(ep),
            None => by_map.push((h, vec![ep])),
        }
    }
    for (_, eps) in by_map {
        let mut pending: Vec<&Episode> = eps;
        while pending.len() >= n_agents {
            let mut group: Vec<&Episode> = Vec::new();
            let mut rest = Vec::new();
            for ep in pending {
                let spec = ep.agents[0];
                let clash = group.iter().any(|g: &&Episode| {
                    g.agents[0].start == spec.start || g.agents[0].goal == spec.goal
                });
                if group.len() < n_agents && !clash {
                    group.push(ep);
                } else {
                    rest.push(ep);
                }
            }
            if group.len() < n_agents {
                break;
            }
            out.push(Episode {
                id: format!("{}x{}", group[0].id, n_agents),
                env: group[0].env.clone(),
                agents: group.iter().map(|e| e.agents[0]).collect(),
                d_opt: group.iter().map(|e| e.d_opt[0]).collect(),
            });
            pending = rest;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub rooms_rows: usize,
    pub rooms_cols: usize,
    pub door_width: usize,
    pub wall_thickness: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            rooms_rows: 2,
            rooms_cols: 2,
            door_width: 2,
            wall_thickness: 1,
            seed: 0,
        }
    }
}

/// Generates a rectilinear multi-room floorplan with outer walls, interior
/// walls, and randomly placed door gaps. Free space connectivity is verified
/// by flood fill.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<OccupancyGrid, DatasetError> {
    let wt = cfg.wall_thickness;
    if wt == 0 || cfg.door_width == 0 || cfg.rooms_rows == 0 || cfg.rooms_cols == 0 {
        return Err(DatasetError::InfeasibleConfig(
            "wall thickness, door width, and room counts must be positive".into(),
        ));
    }
    if 2 * wt >= cfg.height.min(cfg.width) {
        return Err(DatasetError::InfeasibleConfig(format!(
            "wall thickness {wt} leaves no interior in a {}x{} grid",
            cfg.height, cfg.width
        )));
    }
    let inner_h = cfg.height - 2 * wt;
    let inner_w = cfg.width - 2 * wt;
    let rooms_h = inner_h.saturating_sub((cfg.rooms_rows - 1) * wt);
    let rooms_w = inner_w.saturating_sub((cfg.rooms_cols - 1) * wt);
    let min_room_h = rooms_h / cfg.rooms_rows.max(1);
    let min_room_w = rooms_w / cfg.rooms_cols.max(1);
    if min_room_h < cfg.door_width.max(1) || min_room_w < cfg.door_width.max(1) {
        return Err(DatasetError::InfeasibleConfig(format!(
            "rooms too small: {}x{} interior cannot fit {}x{} rooms with door width {}",
            inner_h, inner_w, cfg.rooms_rows, cfg.rooms_cols, cfg.door_width
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cells = vec![0u8; cfg.height * cfg.width];
    let fill = |r0: usize, r1: usize, c0: usize, c1: usize, cells: &mut Vec<u8>| {
        for r in r0..r1 {
            for c in c0..c1 {
                cells[r * cfg.width + c] = 1;
            }
        }
    };
    // Outer walls.
    fill(0, wt, 0, cfg.width, &mut cells);
    fill(cfg.height - wt, cfg.height, 0, cfg.width, &mut cells);
    fill(0, cfg.height, 0, wt, &mut cells);
    fill(0, cfg.height, cfg.width - wt, cfg.width, &mut cells);

    // Room span boundaries along each axis: rooms_rows free spans separated
    // by wall bands of thickness wt.
    let spans = |total: usize, count: usize| -> Vec<(usize, usize)> {
        let free = total - (count - 1) * wt;
        let mut out = Vec::with_capacity(count);
        let mut pos = wt;
        for i in 0..count {
            let extent = free / count + usize::from(i < free % count);
            out.push((pos, pos + extent));
            pos += extent + wt;
        }
        out
    };
    let row_spans = spans(inner_h, cfg.rooms_rows);
    let col_spans = spans(inner_w, cfg.rooms_cols);

    // Horizontal interior walls with one door per room column.
    for i in 1..cfg.rooms_rows {
        let wall_r0 = row_spans[i - 1].1;
        fill(wall_r0, wall_r0 + wt, wt, cfg.width - wt, &mut cells);
        for &(c0, c1) in &col_spans {
            let span = c1 - c0 - cfg.door_width;
            let off = if span == 0 { 0 } else { rng.gen_range(0..=span) };
            for r in wall_r0..wall_r0 + wt {
                for c in c0 + off..c0 + off + cfg.door_width {
                    cells[r * cfg.width + c] = 0;
                }
            }
        }
    }
    // Vertical interior walls with one door per room row.
    for j in 1..cfg.rooms_cols {
        let wall_c0 = col_spans[j - 1].1;
        fill(wt, cfg.height - wt, wall_c0, wall_c0 + wt, &mut cells);
        for &(r0, r1) in &row_spans {
            let span = r1 - r0 - cfg.door_width;
            let off = if span == 0 { 0 } else { rng.gen_range(0..=span) };
            for r in r0 + off..r0 + off + cfg.door_width {
                for c in wall_c0..wall_c0 + wt {
                    cells[r * cfg.width + c] = 0;
                }
            }
        }
    }

    let grid = OccupancyGrid::new(cfg.height, cfg.width, cells)
        .map_err(|e| DatasetError::InfeasibleConfig(e.to_string()))?;
    if !free_space_connected(&grid) {
        return Err(DatasetError::InfeasibleConfig(
            "generated free space is not connected".into(),
        ));
    }
    Ok(grid)
}

/// Flood-fill check (4-connected) that all free cells form one component.
pub fn free_space_connected(env: &OccupancyGrid) -> bool {
    let free: Vec<CellCoord> = env.free_cells().collect();
    let Some(&first) = free.first() else {
        return false;
    };
    let idx = |c: CellCoord| c.row * env.width() + c.col;
    let mut seen = vec![false; env.height() * env.width()];
    seen[idx(first)] = true;
    let mut queue = std::collections::VecDeque::from([first]);
    let mut count = 1usize;
    while let Some(c) = queue.pop_front() {
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nr, nc) = (c.row as i64 + dr, c.col as i64 + dc);
            if nr < 0 || nc < 0 || nr >= env.height() as i64 || nc >= env.width() as i64 {
                continue;
            }
            let n = CellCoord::new(nr as usize, nc as usize);
            if env.is_free(n) && !seen[idx(n)] {
                seen[idx(n)] = true;
                count += 1;
                queue.push_back(n);
            }
        }
    }
    count == free.len()
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeRecord {
    schema_version: u32,
    id: String,
    grid: String,
    agents: Vec<[usize; 4]>,
    d_opt: Vec<f64>,
}

/// Writes episodes as JSON Lines, one record per line.
pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<(), DatasetError> {
    let mut file = File::create(path)?;
    for ep in episodes {
        let record = EpisodeRecord {
            schema_version: EPISODE_SCHEMA_VERSION,
            id: ep.id.clone(),
            grid: to_grid_text(&ep.env),
            agents: ep
                .agents
                .iter()
                .map(|a| [a.start.row, a.start.col, a.goal.row, a.goal.col])
                .collect(),
            d_opt: ep.d_opt.clone(),
        };
        serde_json::to_writer(&mut file, &record)
            .map_err(|e| DatasetError::Record { line: 0, msg: e.to_string() })?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>, DatasetError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpisodeRecord = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Record { line: lineno, msg: e.to_string() })?;
        if record.schema_version != EPISODE_SCHEMA_VERSION {
            return Err(DatasetError::SchemaVersion {
                line: lineno,
                got: record.schema_version,
                expected: EPISODE_SCHEMA_VERSION,
            });
        }
        let env = parse_grid_text(&record.grid)
            .map_err(|e| DatasetError::Record { line: lineno, msg: e.to_string() })?;
        if record.agents.len() != record.d_opt.len() || record.agents.is_empty() {
            return Err(DatasetError::Record {
                line: lineno,
                msg: "agents and d_opt must be non-empty and the same length".into(),
            });
        }
        let agents = record
            .agents
            .iter()
            .map(|&[sr, sc, gr, gc]| AgentSpec {
                start: CellCoord::new(sr, sc),
                goal: CellCoord::new(gr, gc),
            })
            .collect();
        out.push(Episode { id: record.id, env, agents, d_opt: record.d_opt });
    }
    Ok(out)
}
