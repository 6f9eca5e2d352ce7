//! Subcommand implementations and exit-code mapping.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input file, 3 runtime
//! failure. All diagnostics go to stderr; reports and DOT go to stdout.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

use hgcpp::executor::execute;
use hgcpp::maze::{parse_maze, GridSpec};
use hgcpp::planner::{Planner, PlannerConfig};
use hgcpp::tree::{self, PlanTree};

use crate::baseline::{baseline_flat_mcts, BaselineParams, BaselineReport};
use crate::metrics::{render_metrics_csv, MetricsRow};

#[derive(Debug, Error)]
pub enum CmdError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Input(_) => 2,
            CmdError::Runtime(_) => 3,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CmdError {
    CmdError::Input(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CmdError {
    CmdError::Runtime(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "hgcpp",
    about = "Hierarchical goal-conditioned policy planning in grid-world mazes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a plan-tree on a maze and write it with per-iteration metrics.
    Train {
        #[arg(long)]
        maze: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// RNG seed; overrides the config file's seed.
        #[arg(long)]
        seed: u64,
        /// Output path for the serialized plan-tree JSON.
        #[arg(long)]
        out: PathBuf,
        /// Output path for the metrics CSV.
        #[arg(long, default_value = "metrics.csv")]
        metrics: PathBuf,
        /// Run execute-probes every this many iterations.
        #[arg(long, default_value_t = 25)]
        probe_every: u32,
    },
    /// Execute a trained tree toward one desired goal and print the report.
    Exec {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        maze: PathBuf,
        /// Desired goal, 1-based (matching the maze digits).
        #[arg(long)]
        goal: usize,
    },
    /// Summarize a tree, or dump it as DOT.
    Inspect {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = false)]
        dot: bool,
    },
    /// Train and compare against the flat-MCTS baseline under an equal
    /// primitive-step budget; write a comparison CSV.
    Eval {
        #[arg(long)]
        maze: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` and runs the selected subcommand, returning the process
/// exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Train { maze, config, seed, out, metrics, probe_every } => {
            let spec = load_maze(&maze)?;
            let config = load_config(&config, Some(seed))?;
            let artifacts = train_run(&spec, &config, probe_every)?;
            fs::write(&out, &artifacts.tree_json)
                .map_err(|e| runtime_err(format!("writing {}: {e}", out.display())))?;
            fs::write(&metrics, &artifacts.metrics_csv)
                .map_err(|e| runtime_err(format!("writing {}: {e}", metrics.display())))?;
            eprintln!(
                "trained: {} nodes, {} HLAs, {} env steps",
                artifacts.node_count, artifacts.hla_count, artifacts.env_steps
            );
            Ok(())
        }
        Command::Exec { tree, maze, goal } => {
            let spec = load_maze(&maze)?;
            let (tree, _) = load_tree(&tree)?;
            if goal == 0 || goal > spec.num_goals() {
                return Err(input_err(format!(
                    "goal must be 1..={}, got {goal}",
                    spec.num_goals()
                )));
            }
            let report =
                execute(&tree, &spec, goal - 1, spec.start()).map_err(runtime_err)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(runtime_err)?);
            Ok(())
        }
        Command::Inspect { tree, dot } => {
            let (tree, _) = load_tree(&tree)?;
            if dot {
                print!("{}", tree::to_dot(&tree));
            } else {
                print!("{}", summarize(&tree));
            }
            Ok(())
        }
        Command::Eval { maze, config, seed, out } => {
            let spec = load_maze(&maze)?;
            let config = load_config(&config, Some(seed))?;
            let outcome = eval_run(&spec, &config)?;
            fs::write(&out, &outcome.csv)
                .map_err(|e| runtime_err(format!("writing {}: {e}", out.display())))?;
            eprintln!(
                "eval: hgcpp reached {}/{g} goals, flat baseline {}/{g}",
                outcome.hgcpp_reached,
                outcome.baseline_reached,
                g = spec.num_goals()
            );
            Ok(())
        }
    }
}

pub fn load_maze(path: &Path) -> Result<GridSpec, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_err(format!("reading {}: {e}", path.display())))?;
    parse_maze(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<PlannerConfig, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_err(format!("reading {}: {e}", path.display())))?;
    let mut config = PlannerConfig::from_json(&text)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    Ok(config)
}

pub fn load_tree(path: &Path) -> Result<(PlanTree, hgcpp::TrajectoryArchive), CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_err(format!("reading {}: {e}", path.display())))?;
    tree::deserialize(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

/// Everything a training run produces.
pub struct TrainArtifacts {
    pub tree_json: String,
    pub metrics_csv: String,
    pub rows: Vec<MetricsRow>,
    pub env_steps: u64,
    pub node_count: usize,
    pub hla_count: usize,
}

/// Runs the full training loop, collecting one metrics row per iteration.
/// Execute-probes run every `probe_every` iterations (and on the last one);
/// they are read-only and cost no training budget.
pub fn train_run(
    spec: &GridSpec,
    config: &PlannerConfig,
    probe_every: u32,
) -> Result<TrainArtifacts, CmdError> {
    let mut planner = Planner::new(spec.clone(), config.clone()).map_err(input_err)?;
    let mut rows = Vec::with_capacity(config.plan_budget as usize);
    let mut successes = vec![false; spec.num_goals()];
    let probe_every = probe_every.max(1);

    for i in 1..=config.plan_budget {
        let summary = planner.run_iteration().map_err(runtime_err)?;
        if i % probe_every == 0 || i == config.plan_budget {
            successes = probe(planner.tree(), spec)?;
        }
        rows.push(MetricsRow {
            iteration: summary.iteration + 1,
            gcps_learned: planner.tree().gcp_count(),
            hlas_by_level: hlas_by_level(planner.tree()),
            current_goal: summary.current_goal,
            goal_successes: successes.clone(),
            env_steps: summary.env_steps_total,
        });
    }

    let env_steps = planner.env_steps();
    let node_count = planner.tree().node_count();
    let hla_count = planner.tree().hla_count();
    let (tree, archive) = planner.finish();
    Ok(TrainArtifacts {
        tree_json: tree::serialize(&tree, &archive),
        metrics_csv: render_metrics_csv(&rows),
        rows,
        env_steps,
        node_count,
        hla_count,
    })
}

fn probe(tree: &PlanTree, spec: &GridSpec) -> Result<Vec<bool>, CmdError> {
    (0..spec.num_goals())
        .map(|g| execute(tree, spec, g, spec.start()).map(|r| r.reached).map_err(runtime_err))
        .collect()
}

pub fn hlas_by_level(tree: &PlanTree) -> Vec<usize> {
    let max_level = tree.hlas().iter().map(|h| h.level).max().unwrap_or(0);
    let mut counts = vec![0usize; max_level as usize + 1];
    for h in tree.hlas() {
        counts[h.level as usize] += 1;
    }
    counts
}

fn summarize(tree: &PlanTree) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "nodes        {}", tree.node_count());
    let _ = writeln!(out, "gcps         {}", tree.gcp_count());
    for (level, count) in hlas_by_level(tree).iter().enumerate() {
        let _ = writeln!(out, "hlas level {level} {count}");
    }
    let _ = writeln!(out, "goals        {}", tree.num_goals());
    let _ = writeln!(out, "config       {}", tree.config_digest());
    let root = tree.root();
    for goal in 0..tree.num_goals() {
        let best = tree
            .hlas_at(root)
            .iter()
            .filter_map(|&h| tree.hla(h).ok())
            .map(|h| h.q_values[goal])
            .fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(out, "root q[g{}]   {:.6}", goal + 1, best.max(0.0));
    }
    out
}

/// Comparison outcome of one eval run.
pub struct EvalOutcome {
    pub csv: String,
    pub hgcpp_reached: usize,
    pub baseline_reached: usize,
    pub hgcpp_env_steps: u64,
    pub baseline_reports: Vec<BaselineReport>,
}

/// Trains the hierarchical planner, then gives the flat baseline exactly the
/// same total primitive-step budget, split across the desired goals.
pub fn eval_run(spec: &GridSpec, config: &PlannerConfig) -> Result<EvalOutcome, CmdError> {
    let artifacts = train_run(spec, config, u32::MAX)?;
    let (tree, _) = tree::deserialize(&artifacts.tree_json).map_err(runtime_err)?;
    let hgcpp_successes = probe(&tree, spec)?;
    let total = artifacts.env_steps;

    let goals = spec.num_goals() as u64;
    let per_goal = total / goals;
    let remainder = total % goals;
    let params = BaselineParams {
        ucb_c: config.ucb_c,
        gamma_prim: config.gamma_prim,
        rollout_horizon: config.rollout_horizon,
        ..BaselineParams::default()
    };
    let mut baseline_reports = Vec::new();
    for g in 0..spec.num_goals() {
        let budget = per_goal + if g == 0 { remainder } else { 0 };
        let report =
            baseline_flat_mcts(spec, g, budget, config.seed.wrapping_add(g as u64), &params);
        baseline_reports.push(report);
    }

    let baseline_total: u64 = baseline_reports.iter().map(|r| r.budget).sum();
    let mut csv = format!(
        "# seed={} hgcpp_total_steps={} baseline_total_budget={} budgets_equal={}\n",
        config.seed,
        total,
        baseline_total,
        total == baseline_total
    );
    csv.push_str("agent,goal,reached,steps_used,budget\n");
    for (g, reached) in hgcpp_successes.iter().enumerate() {
        let _ = writeln!(csv, "hgcpp,{},{},{},{}", g + 1, reached, total, total);
    }
    for report in &baseline_reports {
        let _ = writeln!(
            csv,
            "flat_mcts,{},{},{},{}",
            report.goal_index + 1,
            report.reached,
            report.steps_used,
            report.budget
        );
    }

    Ok(EvalOutcome {
        csv,
        hgcpp_reached: hgcpp_successes.iter().filter(|&&s| s).count(),
        baseline_reached: baseline_reports.iter().filter(|r| r.reached).count(),
        hgcpp_env_steps: total,
        baseline_reports,
    })
}
