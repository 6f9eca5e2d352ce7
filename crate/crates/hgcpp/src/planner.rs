//! The main planning loop.
//!
//! Each iteration walks the plan-tree from the root. At every node a
//! logistic function of how many policies already start there decides between
//! exploiting (descend the UCB-best high-level action, possibly jumping
//! several levels at once) and exploring (sample a fresh behavioral goal,
//! learn a policy toward it, and grow the tree by one edge). New edge values
//! are backpropagated to the root, trailing runs of linked actions compose
//! one level up, and affected higher-level actions are recomputed. A
//! progress test then decides whether to keep focusing on the current desired
//! goal or move to the next one.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gcp::{
    gcp_value, learn_gcp, pick_behavioral_goal, BevGoalContext, GcpError, LearnParams,
    TrajectoryArchive, DEFAULT_ARCHIVE_CAPACITY,
};
use crate::maze::{Cell, DistanceBand, GridSpec, MazeError};
use crate::tree::{GcpId, HlaId, NodeId, PlanTree, TreeError};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Maze(#[from] MazeError),
    #[error(transparent)]
    Gcp(#[from] GcpError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("backpropagation must start below the root")]
    BackpropFromRoot,
    #[error("HLA {hla:?} does not start at node {node:?}")]
    NotAtNode { hla: HlaId, node: NodeId },
}

/// How leaf values are estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Discounted shortest-path estimate; exact in a deterministic maze.
    Heuristic,
    /// Averaged random-walk returns, as in conventional tree search.
    MonteCarlo,
}

/// Progress-test parameters: keep pursuing a goal while the average recent
/// reward stays at or above `threshold`, or while fewer than `min_steps`
/// GCP-steps have been spent on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocusConfig {
    pub min_steps: u64,
    pub window: usize,
    pub threshold: f64,
}

impl Default for FocusConfig {
    fn default() -> Self {
        FocusConfig { min_steps: 12, window: 24, threshold: 0.05 }
    }
}

/// Q-learning knobs for the policy learner. The per-policy step cap is
/// `step_cap_factor` times the sampling band's upper edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningConfig {
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub step_cap_factor: u32,
    pub replay_sweeps: u32,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            alpha: 0.1,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            step_cap_factor: 4,
            replay_sweeps: 200,
        }
    }
}

/// Every hyperparameter of the planner. A JSON config file mirrors this
/// struct field-for-field; omitted fields take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Logistic steepness of the expansion strategy, in (0, 1].
    pub steepness: f64,
    /// BFS-distance band behavioral goals are sampled from.
    pub band: DistanceBand,
    /// Plan-level discount, applied once per GCP-step.
    pub gamma: f64,
    /// Primitive-step discount used by learning and rollouts.
    pub gamma_prim: f64,
    /// How many consecutive linked HLAs compose one level up.
    pub n_compose: usize,
    /// Q-learning episodes per policy-learning attempt.
    pub gcp_budget: u32,
    /// Planning iterations to run.
    pub plan_budget: u32,
    /// UCB1 exploration constant.
    pub ucb_c: f64,
    pub rollout_mode: RolloutMode,
    /// Simulations per Monte Carlo rollout.
    pub rollout_samples: u32,
    /// Steps per Monte Carlo simulation.
    pub rollout_horizon: u32,
    pub seed: u64,
    pub focus: FocusConfig,
    /// Candidate batch size for behavioral-goal sampling.
    pub batch_size: usize,
    pub learning: LearningConfig,
    /// Stored trajectories per (start, end) key.
    pub archive_capacity: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            steepness: 1.0,
            band: DistanceBand::new(2, 4),
            gamma: 0.9,
            gamma_prim: 0.95,
            n_compose: 3,
            gcp_budget: 200,
            plan_budget: 300,
            ucb_c: std::f64::consts::SQRT_2,
            rollout_mode: RolloutMode::Heuristic,
            rollout_samples: 32,
            rollout_horizon: 20,
            seed: 0,
            focus: FocusConfig::default(),
            batch_size: 8,
            learning: LearningConfig::default(),
            archive_capacity: DEFAULT_ARCHIVE_CAPACITY,
        }
    }
}

impl PlannerConfig {
    pub fn from_json(json: &str) -> Result<Self, PlanError> {
        let config: PlannerConfig =
            serde_json::from_str(json).map_err(|e| PlanError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let fail = |msg: &str| Err(PlanError::InvalidConfig(msg.into()));
        if !(self.steepness > 0.0 && self.steepness <= 1.0) {
            return fail("steepness must lie in (0, 1]");
        }
        if !self.band.is_valid() {
            return fail("band needs 1 <= min <= max");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0, 1)");
        }
        if !(self.gamma_prim > 0.0 && self.gamma_prim < 1.0) {
            return fail("gamma_prim must lie in (0, 1)");
        }
        if self.n_compose < 2 {
            return fail("n_compose must be at least 2");
        }
        if self.gcp_budget == 0 {
            return fail("gcp_budget must be positive");
        }
        if self.ucb_c < 0.0 {
            return fail("ucb_c must be non-negative");
        }
        if self.rollout_samples == 0 || self.rollout_horizon == 0 {
            return fail("rollout_samples and rollout_horizon must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.focus.window == 0 {
            return fail("focus window must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.focus.threshold) {
            return fail("focus threshold must lie in [0, 1]");
        }
        if !(self.learning.alpha > 0.0 && self.learning.alpha <= 1.0) {
            return fail("alpha must lie in (0, 1]");
        }
        for eps in [self.learning.epsilon_start, self.learning.epsilon_end] {
            if !(0.0..=1.0).contains(&eps) {
                return fail("epsilon bounds must lie in [0, 1]");
            }
        }
        if self.learning.step_cap_factor == 0 || self.learning.replay_sweeps == 0 {
            return fail("step_cap_factor and replay_sweeps must be positive");
        }
        if self.archive_capacity == 0 {
            return fail("archive_capacity must be positive");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical config JSON; embedded in serialized
    /// trees so a tree can be matched to the settings that produced it.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn learn_params(&self) -> LearnParams {
        LearnParams {
            episodes: self.gcp_budget,
            alpha: self.learning.alpha,
            gamma_prim: self.gamma_prim,
            epsilon_start: self.learning.epsilon_start,
            epsilon_end: self.learning.epsilon_end,
            step_cap: self.learning.step_cap_factor * self.band.max,
            replay_sweeps: self.learning.replay_sweeps,
        }
    }
}

/// Probability of exploiting (following an existing HLA) at a node with `x`
/// policies already starting there and `eta` candidate behavioral goals in
/// the band: a logistic in `x` centered at `eta / 2`. Once `x` exhausts the
/// candidates, selection is forced.
pub fn expand_probability(x: usize, eta: usize, steepness: f64) -> f64 {
    if x >= eta {
        return 1.0;
    }
    1.0 / (1.0 + (steepness * (eta as f64 / 2.0 - x as f64)).exp())
}

/// UCB1 priority of an HLA at its start node for the focused goal. Unvisited
/// HLAs rank infinitely high; ties are broken by ascending id at the caller
/// (first strict maximum wins).
pub fn ucb(
    tree: &PlanTree,
    node: NodeId,
    hla: HlaId,
    goal: usize,
    ucb_c: f64,
) -> Result<f64, PlanError> {
    if !tree.hlas_at(node).contains(&hla) {
        return Err(PlanError::NotAtNode { hla, node });
    }
    let h = tree.hla(hla)?;
    if h.visit_count == 0 {
        return Ok(f64::INFINITY);
    }
    let node_visits = tree.node(node)?.visit_count.max(1);
    let bonus = ucb_c * ((node_visits as f64).ln() / h.visit_count as f64).sqrt();
    Ok(h.q_values[goal] + bonus)
}

/// Samples a behavioral goal for expanding `node`: in-band cells not already
/// tried from this node, a uniformly drawn batch of them, and the batch
/// member picked by the shared novelty/curriculum criterion. `None` signals
/// that nothing is left to expand.
pub fn choose_bev_goal<R: Rng>(
    tree: &PlanTree,
    spec: &GridSpec,
    node: NodeId,
    band: DistanceBand,
    batch_size: usize,
    focus_goal: Cell,
    rng: &mut R,
) -> Result<Option<Cell>, PlanError> {
    let state = tree.node(node)?.state;
    let siblings: Vec<Cell> = tree
        .node(node)?
        .children
        .iter()
        .map(|&c| tree.node(c).map(|n| n.state))
        .collect::<Result<_, _>>()?;
    let mut candidates = spec.candidate_goals(state, band)?;
    candidates.retain(|c| !siblings.contains(c) && *c != state);
    if candidates.is_empty() {
        return Ok(None);
    }
    let batch = sample_batch(&candidates, batch_size.min(candidates.len()), rng);
    let ctx = BevGoalContext { band, siblings, focus_goal };
    Ok(pick_behavioral_goal(spec, &batch, &ctx))
}

/// Uniform sample of `k` distinct items by partial Fisher-Yates; stable
/// across platforms for a fixed RNG stream.
fn sample_batch<R: Rng>(items: &[Cell], k: usize, rng: &mut R) -> Vec<Cell> {
    let mut pool: Vec<Cell> = items.to_vec();
    for i in 0..k {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Undiscounted estimate of how valuable `s` is for reaching `goal`:
/// either the discounted-shortest-path heuristic or the mean discounted
/// return of uniformly random walks.
pub fn state_value_estimate<R: Rng>(
    spec: &GridSpec,
    s: Cell,
    goal: Cell,
    config: &PlannerConfig,
    rng: &mut R,
) -> f64 {
    match config.rollout_mode {
        RolloutMode::Heuristic => match spec.bfs_distance(s, goal) {
            Ok(Some(d)) => config.gamma_prim.powi(d as i32),
            _ => 0.0,
        },
        RolloutMode::MonteCarlo => {
            let mut total = 0.0;
            for _ in 0..config.rollout_samples {
                let mut cur = s;
                let mut discount = 1.0;
                for _ in 0..config.rollout_horizon {
                    let a = crate::maze::Action::ALL[rng.random_range(0..4)];
                    cur = spec.moved(cur, a);
                    total += discount * spec.goal_reward(cur, goal);
                    discount *= config.gamma_prim;
                }
            }
            total / config.rollout_samples as f64
        }
    }
}

/// Rollout term for a leaf `m` GCP-steps below the valuation point: the state
/// estimate discounted by the plan-level discount per GCP-step.
pub fn rollout<R: Rng>(
    spec: &GridSpec,
    s: Cell,
    m: usize,
    goal: Cell,
    config: &PlannerConfig,
    rng: &mut R,
) -> f64 {
    config.gamma.powi(m as i32) * state_value_estimate(spec, s, goal, config, rng)
}

/// One edge update performed during backpropagation: the level-0 HLA touched
/// and the q-sample pushed into its running mean.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeUpdate {
    pub hla: HlaId,
    pub parent: NodeId,
    pub gcp: GcpId,
    pub q_sample: Vec<f64>,
}

/// Propagates fresh leaf value estimates from `child` up to the root. At
/// each edge on the way the per-goal sample `q[g] = R_g + gamma * fv[g]` is
/// folded into the edge's running mean, the edge and parent visit counts are
/// incremented, and `q` becomes the `fv` of the edge above. Returns the edge
/// updates in child-to-root order.
pub fn backprop(
    tree: &mut PlanTree,
    child: NodeId,
    leaf_values: &[f64],
    gamma: f64,
) -> Result<Vec<EdgeUpdate>, PlanError> {
    if child == tree.root() {
        return Err(PlanError::BackpropFromRoot);
    }
    let goals = tree.num_goals();
    if leaf_values.len() != goals {
        return Err(TreeError::GoalArity { expected: goals, got: leaf_values.len() }.into());
    }
    let mut updates = Vec::new();
    let mut fv = leaf_values.to_vec();
    let mut cur = child;
    loop {
        let node = tree.node(cur)?;
        let parent = node.parent.ok_or(PlanError::BackpropFromRoot)?;
        let gcp = node.incoming_gcp.ok_or(PlanError::BackpropFromRoot)?;
        let hla_id = tree.gcp_hla(gcp)?;
        let r_values = tree.gcp(gcp)?.r_values.clone();

        let visits = {
            let h = tree.hla_mut(hla_id)?;
            h.visit_count += 1;
            h.visit_count
        };
        tree.node_mut(parent)?.visit_count += 1;

        let mut q = vec![0.0; goals];
        for g in 0..goals {
            q[g] = r_values[g] + gamma * fv[g];
            let stored = &mut tree.hla_mut(hla_id)?.q_values[g];
            *stored += (q[g] - *stored) / visits as f64;
        }
        updates.push(EdgeUpdate { hla: hla_id, parent, gcp, q_sample: q.clone() });

        if parent == tree.root() {
            break;
        }
        fv = q;
        cur = parent;
    }
    Ok(updates)
}

/// Which desired goal is being pursued and how it has been going: a
/// GCP-step counter and a ring buffer of the recent per-step rewards with
/// respect to that goal.
#[derive(Clone, Debug, PartialEq)]
pub struct FocusState {
    pub goal_index: usize,
    pub steps_since_switch: u64,
    window: VecDeque<f64>,
    window_cap: usize,
}

impl FocusState {
    pub fn new(window_cap: usize) -> Self {
        FocusState {
            goal_index: 0,
            steps_since_switch: 0,
            window: VecDeque::with_capacity(window_cap),
            window_cap: window_cap.max(1),
        }
    }

    /// Records `count` GCP-steps, each experiencing `reward` toward the
    /// focused goal.
    pub fn record_steps(&mut self, count: usize, reward: f64) {
        for _ in 0..count {
            if self.window.len() == self.window_cap {
                self.window.pop_front();
            }
            self.window.push_back(reward);
            self.steps_since_switch += 1;
        }
    }

    pub fn window_average(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        }
    }
}

/// The progress test: the focused goal is kept while the window average
/// reaches the threshold or while the step counter is still below the
/// minimum. Otherwise focus advances to the next goal (wrapping around), the
/// counter resets, and the window clears. Returns whether a switch happened.
pub fn focus(state: &mut FocusState, num_goals: usize, config: &FocusConfig) -> bool {
    let progressing = state.window_average() >= config.threshold
        || state.steps_since_switch < config.min_steps;
    if progressing {
        return false;
    }
    state.goal_index = (state.goal_index + 1) % num_goals.max(1);
    state.steps_since_switch = 0;
    state.window.clear();
    true
}

/// What one planning iteration did; enough to reconstruct and verify every
/// statistic it touched.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationSummary {
    pub iteration: u64,
    pub current_goal: usize,
    pub descents: u32,
    pub expanded: Option<NodeId>,
    pub new_hlas: Vec<HlaId>,
    pub backprop: Vec<EdgeUpdate>,
    pub leaf_values: Vec<f64>,
    pub hlas_updated: usize,
    pub goal_switched: bool,
    pub env_steps_total: u64,
}

/// The training loop state: environment, configuration, the growing tree,
/// the trajectory archive, goal focus, and one deterministic RNG stream.
pub struct Planner {
    spec: GridSpec,
    config: PlannerConfig,
    tree: PlanTree,
    archive: TrajectoryArchive,
    focus: FocusState,
    rng: ChaCha8Rng,
    env_steps: u64,
    iteration: u64,
}

impl Planner {
    pub fn new(spec: GridSpec, config: PlannerConfig) -> Result<Self, PlanError> {
        config.validate()?;
        let tree = PlanTree::new(spec.start(), spec.num_goals(), config.digest());
        let archive = TrajectoryArchive::new(config.archive_capacity);
        let focus = FocusState::new(config.focus.window);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Planner { spec, config, tree, archive, focus, rng, env_steps: 0, iteration: 0 })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn tree(&self) -> &PlanTree {
        &self.tree
    }

    pub fn archive(&self) -> &TrajectoryArchive {
        &self.archive
    }

    pub fn focus_state(&self) -> &FocusState {
        &self.focus
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn iterations_run(&self) -> u64 {
        self.iteration
    }

    pub fn finish(self) -> (PlanTree, TrajectoryArchive) {
        (self.tree, self.archive)
    }

    /// One full iteration: descend/expand from the root, then run the
    /// progress test.
    pub fn run_iteration(&mut self) -> Result<IterationSummary, PlanError> {
        let goal_index = self.focus.goal_index;
        let mut summary = IterationSummary {
            iteration: self.iteration,
            current_goal: goal_index,
            descents: 0,
            expanded: None,
            new_hlas: Vec::new(),
            backprop: Vec::new(),
            leaf_values: Vec::new(),
            hlas_updated: 0,
            goal_switched: false,
            env_steps_total: self.env_steps,
        };
        let focus_goal = self.spec.desired_goals()[goal_index];

        let mut node = self.tree.root();
        loop {
            let state = self.tree.node(node)?.state;
            let x = self.tree.node(node)?.children.len();
            let eta = self.spec.candidate_goals(state, self.config.band)?.len();
            let exploit = self.rng.random::<f64>()
                < expand_probability(x, eta, self.config.steepness);
            let has_hlas = !self.tree.hlas_at(node).is_empty();

            if exploit && has_hlas {
                node = self.descend(node, goal_index, &mut summary)?;
                continue;
            }
            let choice = choose_bev_goal(
                &self.tree,
                &self.spec,
                node,
                self.config.band,
                self.config.batch_size,
                focus_goal,
                &mut self.rng,
            )?;
            match choice {
                Some(goal_cell) => {
                    self.expand(node, goal_cell, goal_index, &mut summary)?;
                    break;
                }
                None if has_hlas => {
                    node = self.descend(node, goal_index, &mut summary)?;
                }
                None => break,
            }
        }

        summary.goal_switched = focus(&mut self.focus, self.spec.num_goals(), &self.config.focus);
        summary.env_steps_total = self.env_steps;
        self.iteration += 1;
        Ok(summary)
    }

    /// Follows the UCB-best HLA at `node`, jumping to its end node. Counts
    /// the traversal's GCP-steps toward the focus window.
    fn descend(
        &mut self,
        node: NodeId,
        goal_index: usize,
        summary: &mut IterationSummary,
    ) -> Result<NodeId, PlanError> {
        let mut best: Option<(HlaId, f64)> = None;
        for &h in self.tree.hlas_at(node) {
            let priority = ucb(&self.tree, node, h, goal_index, self.config.ucb_c)?;
            if best.map_or(true, |(_, b)| priority > b) {
                best = Some((h, priority));
            }
        }
        let (chosen, _) = best.expect("descend called with a non-empty HLA set");
        if self.tree.hla(chosen)?.level >= 1 {
            self.tree.hla_mut(chosen)?.visit_count += 1;
        }
        let flat = self.tree.flatten(chosen)?;
        let mean_r = flat
            .iter()
            .map(|&g| self.tree.gcp(g).map(|e| e.r_values[goal_index]))
            .sum::<Result<f64, _>>()?
            / flat.len() as f64;
        self.focus.record_steps(flat.len(), mean_r);
        summary.descents += 1;
        Ok(self.tree.hla(chosen)?.end_node)
    }

    /// Learns a policy toward `goal_cell` from `node`, adds the edge,
    /// backpropagates, composes, and refreshes affected HLAs.
    fn expand(
        &mut self,
        node: NodeId,
        goal_cell: Cell,
        goal_index: usize,
        summary: &mut IterationSummary,
    ) -> Result<(), PlanError> {
        let state = self.tree.node(node)?.state;
        let siblings: Vec<Cell> = self
            .tree
            .node(node)?
            .children
            .iter()
            .map(|&c| self.tree.node(c).map(|n| n.state))
            .collect::<Result<_, _>>()?;
        let ctx = BevGoalContext {
            band: self.config.band,
            siblings,
            focus_goal: self.spec.desired_goals()[goal_index],
        };
        let run = match learn_gcp(
            &self.spec,
            state,
            goal_cell,
            &self.config.learn_params(),
            &ctx,
            &mut self.archive,
            &mut self.rng,
        ) {
            Ok(run) => run,
            // Nothing learnable from here this time; the iteration still counts.
            Err(GcpError::NoAchievableGoal(_)) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        self.env_steps += run.env_steps;

        let achieved = run.outcome.achieved_goal;
        let goals = self.spec.desired_goals().to_vec();
        let r_values: Vec<f64> = goals
            .iter()
            .map(|&g| gcp_value(&self.archive, state, achieved, g))
            .collect::<Result<_, _>>()?;
        let leaf_values: Vec<f64> = goals
            .iter()
            .map(|&g| {
                self.count_rollout_steps();
                state_value_estimate(&self.spec, achieved, g, &self.config, &mut self.rng)
            })
            .collect();
        let initial_q: Vec<f64> = r_values
            .iter()
            .zip(&leaf_values)
            .map(|(r, v)| r + self.config.gamma * v)
            .collect();

        let child = self.tree.add_gcp_edge(node, run.outcome, r_values.clone(), initial_q)?;
        summary.expanded = Some(child);
        summary.backprop = backprop(&mut self.tree, child, &leaf_values, self.config.gamma)?;
        summary.leaf_values = leaf_values;

        let path = self.tree.path_to(child)?;
        summary.new_hlas = self.tree.compose_hlas(&path, self.config.n_compose)?;

        let Planner { spec, config, rng, env_steps, tree, .. } = self;
        let gamma = config.gamma;
        let mut rollout_fn = |cell: Cell, m: usize, goal: usize| {
            if config.rollout_mode == RolloutMode::MonteCarlo {
                *env_steps += config.rollout_samples as u64 * config.rollout_horizon as u64;
            }
            rollout(spec, cell, m, spec.desired_goals()[goal], config, rng)
        };
        summary.hlas_updated = tree.update_affected_hlas(&path, gamma, &mut rollout_fn)?;

        self.focus.record_steps(1, r_values[goal_index]);
        Ok(())
    }

    fn count_rollout_steps(&mut self) {
        if self.config.rollout_mode == RolloutMode::MonteCarlo {
            self.env_steps +=
                self.config.rollout_samples as u64 * self.config.rollout_horizon as u64;
        }
    }
}

/// Runs a full training session and returns the grown tree.
pub fn train(spec: &GridSpec, config: &PlannerConfig) -> Result<PlanTree, PlanError> {
    let mut planner = Planner::new(spec.clone(), config.clone())?;
    for _ in 0..config.plan_budget {
        planner.run_iteration()?;
    }
    Ok(planner.finish().0)
}
