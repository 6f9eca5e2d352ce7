//! Flat UCT baseline over primitive actions.
//!
//! The comparison agent for the evaluation harness: conventional
//! single-player MCTS where tree actions are the four primitive moves,
//! rewards are the sparse goal rewards, and planning runs in a receding
//! horizon (search, take the most-visited root move, repeat). Every
//! simulated or real transition consumes one unit of the primitive-step
//! budget, so comparisons against the hierarchical planner are
//! experience-for-experience.

use hgcpp::maze::{Action, Cell, GridSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub struct BaselineParams {
    pub ucb_c: f64,
    pub gamma_prim: f64,
    pub rollout_horizon: u32,
    pub iterations_per_move: u32,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            ucb_c: std::f64::consts::SQRT_2,
            gamma_prim: 0.95,
            rollout_horizon: 20,
            iterations_per_move: 48,
        }
    }
}

/// Outcome of one budgeted baseline attempt at a single goal.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineReport {
    pub goal_index: usize,
    pub reached: bool,
    pub steps_used: u64,
    pub budget: u64,
    pub real_moves: u64,
}

struct SearchNode {
    state: Cell,
    children: [Option<usize>; 4],
    visits: [u64; 4],
    values: [f64; 4],
}

impl SearchNode {
    fn new(state: Cell) -> Self {
        SearchNode { state, children: [None; 4], visits: [0; 4], values: [0.0; 4] }
    }

    fn total_visits(&self) -> u64 {
        self.visits.iter().sum()
    }
}

/// Runs flat UCT toward one desired goal under a primitive-step budget.
pub fn baseline_flat_mcts(
    spec: &GridSpec,
    goal_index: usize,
    budget: u64,
    seed: u64,
    params: &BaselineParams,
) -> BaselineReport {
    let goal = spec.desired_goals()[goal_index];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = spec.start();
    let mut used = 0u64;
    let mut real_moves = 0u64;

    while state != goal && used < budget {
        let mut arena = vec![SearchNode::new(state)];
        for _ in 0..params.iterations_per_move {
            if used >= budget {
                break;
            }
            search_iteration(spec, goal, &mut arena, params, &mut rng, &mut used, budget);
        }
        if used >= budget {
            break;
        }
        let action = best_root_action(&arena[0]);
        state = spec.moved(state, action);
        used += 1;
        real_moves += 1;
    }

    BaselineReport { goal_index, reached: state == goal, steps_used: used, budget, real_moves }
}

/// One selection/expansion/rollout/backpropagation pass.
fn search_iteration(
    spec: &GridSpec,
    goal: Cell,
    arena: &mut Vec<SearchNode>,
    params: &BaselineParams,
    rng: &mut ChaCha8Rng,
    used: &mut u64,
    budget: u64,
) {
    // Selection: descend fully expanded nodes by UCB1.
    let mut path: Vec<(usize, usize)> = Vec::new();
    let mut node_idx = 0usize;
    let leaf_value = loop {
        if arena[node_idx].state == goal {
            break 0.0;
        }
        if let Some(untried) = (0..4).find(|&a| arena[node_idx].children[a].is_none()) {
            // Expansion.
            if *used >= budget {
                break 0.0;
            }
            let next = spec.moved(arena[node_idx].state, Action::ALL[untried]);
            *used += 1;
            let child_idx = arena.len();
            arena.push(SearchNode::new(next));
            arena[node_idx].children[untried] = Some(child_idx);
            path.push((node_idx, untried));
            break rollout(spec, next, goal, params, rng, used, budget);
        }
        let total = arena[node_idx].total_visits().max(1);
        let mut best_action = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..4 {
            let n = arena[node_idx].visits[a];
            let score = if n == 0 {
                f64::INFINITY
            } else {
                arena[node_idx].values[a] / n as f64
                    + params.ucb_c * ((total as f64).ln() / n as f64).sqrt()
            };
            if score > best_score {
                best_score = score;
                best_action = a;
            }
        }
        if *used >= budget {
            break 0.0;
        }
        *used += 1;
        path.push((node_idx, best_action));
        node_idx = arena[node_idx].children[best_action].unwrap();
    };

    // Backpropagation: discounted return climbs the followed path.
    let mut value = leaf_value;
    for &(node, action) in path.iter().rev() {
        let child = arena[node].children[action].unwrap();
        let reward = spec.goal_reward(arena[child].state, goal);
        value = reward + params.gamma_prim * value;
        arena[node].visits[action] += 1;
        arena[node].values[action] += value;
    }
}

fn rollout(
    spec: &GridSpec,
    from: Cell,
    goal: Cell,
    params: &BaselineParams,
    rng: &mut ChaCha8Rng,
    used: &mut u64,
    budget: u64,
) -> f64 {
    let mut cur = from;
    let mut ret = 0.0;
    let mut discount = 1.0;
    for _ in 0..params.rollout_horizon {
        if cur == goal || *used >= budget {
            break;
        }
        let a = Action::ALL[rng.random_range(0..4)];
        cur = spec.moved(cur, a);
        *used += 1;
        ret += discount * spec.goal_reward(cur, goal);
        if cur == goal {
            break;
        }
        discount *= params.gamma_prim;
    }
    ret
}

/// Most-visited root action; ties fall to the earliest action in the fixed
/// N < S < E < W order.
fn best_root_action(root: &SearchNode) -> Action {
    let mut best = 0usize;
    for a in 1..4 {
        if root.visits[a] > root.visits[best] {
            best = a;
        }
    }
    Action::ALL[best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use hgcpp::maze::parse_maze;

    #[test]
    fn adjacent_goal_with_ample_budget_is_reached() {
        let spec = parse_maze("S1.\n...\n").unwrap();
        let report = baseline_flat_mcts(&spec, 0, 20_000, 3, &BaselineParams::default());
        assert!(report.reached);
        assert!(report.steps_used <= report.budget);
        assert!(report.real_moves >= 1);
    }

    #[test]
    fn zero_budget_reaches_nothing() {
        let spec = parse_maze("S1.\n").unwrap();
        let report = baseline_flat_mcts(&spec, 0, 0, 3, &BaselineParams::default());
        assert!(!report.reached);
        assert_eq!(report.steps_used, 0);
    }

    #[test]
    fn small_maze_goal_reached_within_budget() {
        let spec = parse_maze("S....\n.###.\n...1.\n").unwrap();
        let report = baseline_flat_mcts(&spec, 0, 60_000, 11, &BaselineParams::default());
        assert!(report.reached, "easy maze should be solvable: {report:?}");
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = parse_maze("S....\n.###.\n...1.\n").unwrap();
        let a = baseline_flat_mcts(&spec, 0, 30_000, 5, &BaselineParams::default());
        let b = baseline_flat_mcts(&spec, 0, 30_000, 5, &BaselineParams::default());
        assert_eq!(a, b);
    }
}
