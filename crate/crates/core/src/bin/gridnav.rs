//! Command-line harness: dataset construction, evaluation runs, scoring,
//! and SVG rendering.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use gridnav::dataset::{
    build_episodes, group_agents, read_episodes, write_episodes, Episode,
    SamplerConfig, SynthConfig,
};
use gridnav::encode::{encode_image, EncodeConfig, ObstaclePolarity, RasterImage};
use gridnav::env::{CellCoord, OccupancyGrid};
use gridnav::manifest::{
    check_comparable, read_results, sha256_hex, timestamp_now, write_results, RunManifest,
    RESULTS_SCHEMA_VERSION,
};
use gridnav::metrics::{aggregate, paired_test, score_episode, MetricsReport, ScoredEpisode};
use gridnav::planners::llm::{LlmConfig, LlmPlanner};
use gridnav::planners::{
    AgentId, BaselinePlanner, EncodingKind, OraclePlanner, Planner, PlannerSession,
    ScriptedPlanner, Strategy,
};
use gridnav::render::{render_episode, render_grid, RenderOptions};
use gridnav::sim::{run_episode, EpisodeResult, SimConfig};

#[derive(Parser)]
#[command(name = "gridnav", version, about = "Closed-loop grid navigation benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an episode dataset from floorplan images or synthetic maps.
    BuildDataset(BuildDatasetArgs),
    /// Run a planner over an episode file and write results.
    Run(RunArgs),
    /// Score a results file; optionally compare two runs with significance.
    Eval(EvalArgs),
    /// Render an episode (and optionally its result) to SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct BuildDatasetArgs {
    /// Generate synthetic multi-room floorplans instead of reading images.
    #[arg(long, conflicts_with = "floorplans")]
    synth: bool,
    /// Directory of floorplan images (PNG/PGM).
    #[arg(long)]
    floorplans: Option<PathBuf>,
    /// Number of synthetic maps to generate.
    #[arg(long, default_value_t = 10)]
    maps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start/goal pairs sampled per map.
    #[arg(long, default_value_t = 3)]
    pairs_per_map: usize,
    /// Distance-weighting strength for goal sampling (0 = uniform).
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Longest side of the encoded grid.
    #[arg(long, default_value_t = 64)]
    target_dim: usize,
    /// Gaussian blur sigma applied before binarization.
    #[arg(long, default_value_t = 1.0)]
    blur_sigma: f64,
    /// Binarization threshold on 0-255 intensity.
    #[arg(long, default_value_t = 0)]
    threshold: u8,
    /// Treat light pixels as obstacles (dark pixels are free space).
    #[arg(long)]
    light_obstacles: bool,
    /// Synthetic map side length.
    #[arg(long, default_value_t = 32)]
    synth_size: usize,
    #[arg(long, short, default_value = "episodes.jsonl")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Additive,
    Compositional,
}

impl From<StrategyArg> for Strategy {
    fn from(v: StrategyArg) -> Self {
        match v {
            StrategyArg::Additive => Strategy::Additive,
            StrategyArg::Compositional => Strategy::Compositional,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Grid,
    Code,
}

impl From<EncodingArg> for EncodingKind {
    fn from(v: EncodingArg) -> Self {
        match v {
            EncodingArg::Grid => EncodingKind::Grid,
            EncodingArg::Code => EncodingKind::Code,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    episodes: PathBuf,
    /// One of: baseline, oracle, scripted:<file>, llm.
    #[arg(long)]
    planner: String,
    #[arg(long, value_enum, default_value_t = StrategyArg::Additive)]
    strategy: StrategyArg,
    /// Planning turn budget per agent (initial plan included).
    #[arg(long, default_value_t = 4)]
    turns: u32,
    /// Agents per episode; >1 regroups single-agent episodes per map.
    #[arg(long, default_value_t = 1)]
    agents: usize,
    /// Worker threads for episode-level parallelism.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long, value_enum, default_value_t = EncodingArg::Grid)]
    encoding: EncodingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tick budget override (default 20 * (H + W) per episode).
    #[arg(long)]
    max_ticks: Option<u64>,
    /// Write the chat transcript (LLM planner only) to this JSONL file.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long, short, default_value = "results.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Results file to score.
    #[arg(long)]
    results: PathBuf,
    /// Second results file; enables paired comparison with p-values.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Emit the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    episodes: PathBuf,
    /// Episode to draw.
    #[arg(long)]
    episode_id: String,
    /// Optional results file; adds trajectories and event markers.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, short, default_value = "episode.svg")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::BuildDataset(args) => cmd_build_dataset(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Render(args) => cmd_render(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

enum CliError {
    /// Bad flags or environment; exit code 2.
    Config(String),
    /// Failure while executing; exit code 1.
    Runtime(String),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(format!("{e:#}"))
    }
}

fn cmd_build_dataset(args: &BuildDatasetArgs) -> Result<(), CliError> {
    if !args.synth && args.floorplans.is_none() {
        return Err(CliError::Config(
            "either --synth or --floorplans <dir> is required".into(),
        ));
    }
    let mut envs: Vec<OccupancyGrid> = Vec::new();
    let mut source_names: Vec<String> = Vec::new();
    if args.synth {
        for i in 0..args.maps {
            let cfg = SynthConfig {
                height: args.synth_size,
                width: args.synth_size,
                seed: args.seed.wrapping_add(i as u64),
                ..SynthConfig::default()
            };
            match gridnav::dataset::gen_synthetic(&cfg) {
                Ok(env) => {
                    envs.push(env);
                    source_names.push(format!("synth#{i}"));
                }
                Err(e) => eprintln!("warning: synthetic map {i} skipped: {e}"),
            }
        }
    } else {
        let dir = args.floorplans.as_ref().unwrap();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("png" | "pgm" | "ppm" | "pbm")
                )
            })
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(CliError::Runtime(format!(
                "no floorplan images found in {}",
                dir.display()
            )));
        }
        let cfg = EncodeConfig {
            target_max_dim: args.target_dim,
            gaussian_sigma: args.blur_sigma,
            binarize_threshold: args.threshold,
            obstacle_polarity: if args.light_obstacles {
                ObstaclePolarity::LightIsObstacle
            } else {
                ObstaclePolarity::DarkIsObstacle
            },
        };
        for path in entries {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let loaded = RasterImage::load(&path).and_then(|img| encode_image(&img, &cfg));
            match loaded {
                Ok(env) if env.free_cells().count() > 0 => {
                    envs.push(env);
                    source_names.push(name);
                }
                Ok(_) => eprintln!("warning: map {name} skipped: no free cells"),
                Err(e) => eprintln!("warning: map {name} skipped: {e}"),
            }
        }
    }
    if envs.is_empty() {
        return Err(CliError::Runtime("no usable maps; dataset would be empty".into()));
    }

    let sampler = SamplerConfig {
        alpha: args.alpha,
        pairs_per_map: args.pairs_per_map,
        seed: args.seed,
        max_retries: 20,
    };
    let (episodes, skipped) = build_episodes(&envs, &sampler);
    for (i, env) in envs.iter().enumerate() {
        let status = if skipped.contains(&i) { " [skipped: sampling failed]" } else { "" };
        println!(
            "map {:<12} {}x{} free={}{}",
            source_names[i],
            env.height(),
            env.width(),
            env.free_cells().count(),
            status
        );
    }
    if episodes.is_empty() {
        return Err(CliError::Runtime("all maps were skipped; dataset is empty".into()));
    }
    write_episodes(&args.out, &episodes)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", args.out.display())))?;
    println!(
        "wrote {} episodes over {} maps to {}",
        episodes.len(),
        envs.len() - skipped.len(),
        args.out.display()
    );
    Ok(())
}

/// Scripted plan file: episode id -> list of planner calls, each mapping
/// agent id -> anchor list as [row, col] pairs.
type ScriptCalls = Vec<BTreeMap<AgentId, Vec<[usize; 2]>>>;

#[derive(Deserialize)]
struct ScriptFile(BTreeMap<String, ScriptCalls>);

struct ScriptedSuite {
    episodes: BTreeMap<String, ScriptedPlanner>,
}

impl ScriptedSuite {
    fn load(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path)
            .map_err(|e| CliError::Config(format!("cannot open script {}: {e}", path.display())))?;
        let script: ScriptFile = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CliError::Config(format!("bad script {}: {e}", path.display())))?;
        let episodes = script
            .0
            .into_iter()
            .map(|(id, calls)| {
                let calls = calls
                    .into_iter()
                    .map(|call| {
                        call.into_iter()
                            .map(|(agent, anchors)| {
                                let anchors = anchors
                                    .into_iter()
                                    .map(|[r, c]| CellCoord::new(r, c))
                                    .collect();
                                (agent, anchors)
                            })
                            .collect()
                    })
                    .collect();
                (id, ScriptedPlanner::new(calls))
            })
            .collect();
        Ok(Self { episodes })
    }
}

impl Planner for ScriptedSuite {
    fn kind(&self) -> &'static str {
        "scripted"
    }
    fn start_episode(&self, episode_id: &str, env: &OccupancyGrid) -> Box<dyn PlannerSession> {
        match self.episodes.get(episode_id) {
            Some(p) => p.start_episode(episode_id, env),
            // No entry: a planner that immediately reports unavailability.
            None => ScriptedPlanner::new(vec![]).start_episode(episode_id, env),
        }
    }
}

fn make_planner(
    spec: &str,
    transcript: Option<&Path>,
) -> Result<(Box<dyn Planner>, String), CliError> {
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok((Box::new(ScriptedSuite::load(Path::new(path))?), spec.to_string()));
    }
    match spec {
        "baseline" => Ok((Box::new(BaselinePlanner), "baseline".into())),
        "oracle" => Ok((Box::new(OraclePlanner), "oracle".into())),
        "llm" => {
            let api_key = std::env::var("LLM_API_KEY")
                .map_err(|_| CliError::Config("LLM_API_KEY is not set".into()))?;
            let mut cfg = LlmConfig::default();
            if let Ok(base) = std::env::var("LLM_API_BASE") {
                cfg.api_base_url = base;
            }
            if let Ok(model) = std::env::var("LLM_MODEL") {
                cfg.model_name = model;
            }
            let sink = match transcript {
                Some(path) => {
                    let file = File::create(path).map_err(|e| {
                        CliError::Runtime(format!("cannot create {}: {e}", path.display()))
                    })?;
                    let sink: Arc<Mutex<dyn Write + Send>> =
                        Arc::new(Mutex::new(BufWriter::new(file)));
                    Some(sink)
                }
                None => None,
            };
            let name = format!("llm:{}", cfg.model_name);
            Ok((Box::new(LlmPlanner::new(cfg, &api_key, sink)), name))
        }
        other => Err(CliError::Config(format!(
            "unknown planner '{other}' (expected baseline, oracle, scripted:<file>, llm)"
        ))),
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    if args.parallel == 0 {
        return Err(CliError::Config("--parallel must be at least 1".into()));
    }
    let (planner, planner_name) = make_planner(&args.planner, args.transcript.as_deref())?;
    let episodes = read_episodes(&args.episodes)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", args.episodes.display())))?;
    let episodes = group_agents(&episodes, args.agents);
    if episodes.is_empty() {
        return Err(CliError::Runtime(
            "no episodes to run (agent grouping may have removed all of them)".into(),
        ));
    }

    let sim_cfg = SimConfig {
        max_turns: args.turns,
        max_ticks: args.max_ticks,
        encoding: args.encoding.into(),
        ..SimConfig::default()
    };
    let strategy: Strategy = args.strategy.into();

    let dataset_bytes = std::fs::read(&args.episodes)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", args.episodes.display())))?;
    let config_desc = format!(
        "planner={} strategy={} turns={} agents={} encoding={:?} step={} coll={} eps={} ticks={:?} seed={}",
        planner_name,
        strategy.as_str(),
        args.turns,
        args.agents,
        sim_cfg.encoding,
        sim_cfg.step_len,
        sim_cfg.collision_dist,
        sim_cfg.goal_eps,
        sim_cfg.max_ticks,
        args.seed,
    );
    let manifest = RunManifest {
        schema_version: RESULTS_SCHEMA_VERSION,
        dataset_hash: sha256_hex(&dataset_bytes),
        planner: planner_name,
        config_hash: sha256_hex(config_desc.as_bytes()),
        strategy,
        max_turns: args.turns,
        n_agents: args.agents,
        seed: args.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        created_at: timestamp_now(),
    };

    let run_one = |ep: &Episode| -> EpisodeResult {
        let mut session = planner.start_episode(&ep.id, &ep.env);
        run_episode(ep, session.as_mut(), strategy, &sim_cfg)
    };
    let results: Vec<EpisodeResult> = if args.parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.parallel)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            episodes.par_iter().map(run_one).collect()
        })
    } else {
        episodes.iter().map(run_one).collect()
    };

    let out = File::create(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let mut w = BufWriter::new(out);
    write_results(&mut w, &manifest, &results)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", args.out.display())))?;
    w.flush()
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", args.out.display())))?;

    let n_success = results
        .iter()
        .flat_map(|r| &r.agents)
        .filter(|a| a.success)
        .count();
    let n_units: usize = results.iter().map(|r| r.agents.len()).sum();
    println!(
        "ran {} episodes ({} agent-units, {} successes) -> {}",
        results.len(),
        n_units,
        n_success,
        args.out.display()
    );
    Ok(())
}

fn load_results(path: &Path) -> Result<(RunManifest, Vec<EpisodeResult>), CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    read_results(BufReader::new(file))
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))
}

fn format_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let row = |label: &str, s: &gridnav::metrics::MetricsSummary| {
        format!(
            "{label:<16} n={:<5} SR={:.3} SPL={:.3} SPL(lit)={:.3} CR={:.3} WSR={:.3}\n",
            s.n_units,
            s.success_rate,
            s.spl,
            s.spl_literal,
            s.completion_rate,
            s.weighted_success_rate
        )
    };
    out.push_str(&row("overall", &report.overall));
    for (turns, s) in &report.by_turns {
        out.push_str(&row(&format!("turns={turns}"), s));
    }
    for (n, s) in &report.by_agent_count {
        out.push_str(&row(&format!("agents={n}"), s));
    }
    out
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let (manifest_a, results_a) = load_results(&args.results)?;
    let units_a = score_results(&results_a);
    let report_a = aggregate(&units_a);

    match &args.compare {
        None => {
            if args.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report_a)
                        .map_err(|e| CliError::Runtime(e.to_string()))?
                );
            } else {
                println!("results: {} (planner {})", args.results.display(), manifest_a.planner);
                print!("{}", format_table(&report_a));
            }
            Ok(())
        }
        Some(compare_path) => {
            let (manifest_b, results_b) = load_results(compare_path)?;
            check_comparable(&manifest_a, &manifest_b)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let units_b = score_results(&results_b);
            let (sa, sb) = pair_units(&units_a, &units_b)?;
            let p_sr = paired_test(
                &sa.iter().map(|u| u.success).collect::<Vec<_>>(),
                &sb.iter().map(|u| u.success).collect::<Vec<_>>(),
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            let report_b = aggregate(&units_b);
            if args.json {
                let doc = serde_json::json!({
                    "a": {"path": args.results.display().to_string(), "planner": manifest_a.planner, "report": report_a},
                    "b": {"path": compare_path.display().to_string(), "planner": manifest_b.planner, "report": report_b},
                    "p_success_rate": p_sr,
                });
                println!(
                    "{}",
                    serde_json::to_string_pretty(&doc)
                        .map_err(|e| CliError::Runtime(e.to_string()))?
                );
            } else {
                println!("A: {} (planner {})", args.results.display(), manifest_a.planner);
                print!("{}", format_table(&report_a));
                println!("B: {} (planner {})", compare_path.display(), manifest_b.planner);
                print!("{}", format_table(&report_b));
                println!("paired sign-flip test on success: p = {p_sr:.6}");
            }
            Ok(())
        }
    }
}

/// Scores results using the per-agent d_opt recorded in each episode result.
fn score_results(results: &[EpisodeResult]) -> Vec<ScoredEpisode> {
    results
        .iter()
        .flat_map(|r| {
            let d_opt: Vec<f64> = r.agents.iter().map(|a| a.d_opt).collect();
            score_episode(r, &d_opt)
        })
        .collect()
}

/// Aligns two unit lists by (episode, agent) key for paired testing.
fn pair_units<'a>(
    a: &'a [ScoredEpisode],
    b: &'a [ScoredEpisode],
) -> Result<(Vec<&'a ScoredEpisode>, Vec<&'a ScoredEpisode>), CliError> {
    let index: BTreeMap<(&str, u32), &ScoredEpisode> = b
        .iter()
        .map(|u| ((u.episode_id.as_str(), u.agent_id), u))
        .collect();
    let mut sa = Vec::new();
    let mut sb = Vec::new();
    for u in a {
        match index.get(&(u.episode_id.as_str(), u.agent_id)) {
            Some(v) => {
                sa.push(u);
                sb.push(*v);
            }
            None => {
                return Err(CliError::Runtime(format!(
                    "episode {} agent {} missing from comparison run",
                    u.episode_id, u.agent_id
                )))
            }
        }
    }
    Ok((sa, sb))
}

fn cmd_render(args: &RenderArgs) -> Result<(), CliError> {
    let episodes = read_episodes(&args.episodes)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", args.episodes.display())))?;
    // The result file may have been produced with agent grouping; regroup at
    // every plausible count until the id matches.
    let find = |eps: &[Episode]| eps.iter().find(|e| e.id == args.episode_id).cloned();
    let mut episode = find(&episodes);
    if episode.is_none() {
        for n in 2..=4 {
            if let Some(ep) = find(&group_agents(&episodes, n)) {
                episode = Some(ep);
                break;
            }
        }
    }
    let episode = episode.ok_or_else(|| {
        CliError::Runtime(format!("episode id '{}' not found in dataset", args.episode_id))
    })?;

    let svg = match &args.results {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
            let (_, results) = read_results(BufReader::new(file))
                .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
            let result = results
                .iter()
                .find(|r| r.episode_id == args.episode_id)
                .ok_or_else(|| {
                    CliError::Runtime(format!(
                        "episode id '{}' not found in results",
                        args.episode_id
                    ))
                })?;
            render_episode(&episode.env, result, &RenderOptions::default())
        }
        None => {
            // Grid plus start/goal markers only.
            let mut base = render_grid(&episode.env);
            let close = base.rfind("</svg>").unwrap();
            let mut markers = String::new();
            for (i, a) in episode.agents.iter().enumerate() {
                use std::fmt::Write as _;
                let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
                let color = colors[i % colors.len()];
                let s = a.start.center();
                let g = a.goal.center();
                write!(
                    markers,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="6" fill="{color}"/><circle cx="{:.2}" cy="{:.2}" r="6" fill="none" stroke="{color}" stroke-width="2"/>"##,
                    s.x * 24.0,
                    s.y * 24.0,
                    g.x * 24.0,
                    g.y * 24.0
                )
                .unwrap();
                markers.push('\n');
            }
            base.insert_str(close, &markers);
            base
        }
    };
    std::fs::write(&args.out, svg)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", args.out.display())))?;
    println!("wrote {}", args.out.display());
    Ok(())
}