//! Task execution against a trained plan-tree.
//!
//! Execution exploits where planning explored: descend the tree greedily by
//! stored q-value for the commanded goal, collect the GCP chain along the
//! way, then drive the environment primitively by running each policy from
//! the previous one's endpoint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcp::{link_check, run_gcp, Cgcp, GcpError, Trajectory};
use crate::maze::{Cell, GridSpec};
use crate::tree::{GcpId, PlanTree, TreeError};

#[derive(Debug, Error, PartialEq)]
pub enum ExecError {
    #[error("execution must start at the root state {expected}, got {got}")]
    StartMismatch { expected: Cell, got: Cell },
    #[error("goal index {got} out of range ({count} desired goals)")]
    GoalIndex { got: usize, count: usize },
    #[error("concatenation undefined: {first_end} != {second_start}")]
    ConcatenationUndefined { first_end: Cell, second_start: Cell },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Gcp(#[from] GcpError),
}

/// An ordered chain of linked policies, runnable as one policy from the
/// first context to the last behavioral goal.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositePolicy {
    segments: Vec<Cgcp>,
}

/// Concatenates two policies; defined only when the first one's behavioral
/// goal is the second one's context.
pub fn concatenate(first: &Cgcp, second: &Cgcp) -> Result<CompositePolicy, ExecError> {
    if !link_check(first, second) {
        return Err(ExecError::ConcatenationUndefined {
            first_end: first.behavioral_goal,
            second_start: second.context,
        });
    }
    Ok(CompositePolicy { segments: vec![first.clone(), second.clone()] })
}

impl CompositePolicy {
    pub fn context(&self) -> Cell {
        self.segments[0].context
    }

    pub fn behavioral_goal(&self) -> Cell {
        self.segments.last().unwrap().behavioral_goal
    }

    /// Extends the chain by one more linked policy.
    pub fn then(mut self, next: &Cgcp) -> Result<Self, ExecError> {
        if !link_check(self.segments.last().unwrap(), next) {
            return Err(ExecError::ConcatenationUndefined {
                first_end: self.behavioral_goal(),
                second_start: next.context,
            });
        }
        self.segments.push(next.clone());
        Ok(self)
    }

    pub fn segments(&self) -> &[Cgcp] {
        &self.segments
    }

    /// Runs each segment greedily in order, aborting if a segment misses its
    /// goal. Returns the merged primitive trajectory.
    pub fn run(&self, spec: &GridSpec) -> Result<Trajectory, ExecError> {
        run_chain(spec, &self.segments)
    }
}

fn run_chain(spec: &GridSpec, segments: &[Cgcp]) -> Result<Trajectory, ExecError> {
    let mut states = vec![segments[0].context];
    let mut actions = Vec::new();
    let mut cur = segments[0].context;
    let mut completed = true;
    for policy in segments {
        if policy.context != cur {
            completed = false;
            break;
        }
        let leg = run_gcp(spec, policy, cur)?;
        states.extend_from_slice(&leg.states[1..]);
        actions.extend_from_slice(&leg.actions);
        cur = leg.end();
        if !leg.reached_goal {
            completed = false;
            break;
        }
    }
    let reached_goal = completed && cur == segments.last().unwrap().behavioral_goal;
    Ok(Trajectory { states, actions, reached_goal })
}

/// The record of one execution attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub goal_index: usize,
    pub goal: Cell,
    pub reached: bool,
    pub gcp_sequence: Vec<GcpId>,
    pub primitive_trace: Trajectory,
    pub total_steps: u64,
}

/// Achieves desired goal `goal_index` from `start` (which must be the root
/// state) using the trained tree: greedy descent over stored q-values
/// collects a GCP chain, which is then run primitively. A tree that knows no
/// rewarding continuation yields a failure report, not an error.
pub fn execute(
    tree: &PlanTree,
    spec: &GridSpec,
    goal_index: usize,
    start: Cell,
) -> Result<ExecutionReport, ExecError> {
    let goals = spec.desired_goals();
    if goal_index >= goals.len() {
        return Err(ExecError::GoalIndex { got: goal_index, count: goals.len() });
    }
    let goal = goals[goal_index];
    let root_state = tree.node(tree.root())?.state;
    if start != root_state {
        return Err(ExecError::StartMismatch { expected: root_state, got: start });
    }

    let mut gcp_sequence: Vec<GcpId> = Vec::new();
    let mut node = tree.root();
    'descent: loop {
        if tree.node(node)?.state == goal {
            break;
        }
        let bucket = tree.hlas_at(node);
        if bucket.is_empty() {
            break;
        }
        let mut best: Option<(f64, crate::tree::HlaId)> = None;
        for &h in bucket {
            let q = tree.hla(h)?.q_values[goal_index];
            if best.map_or(true, |(bq, _)| q > bq) {
                best = Some((q, h));
            }
        }
        let (best_q, chosen) = best.unwrap();
        if best_q <= 0.0 {
            break;
        }
        // A high-level jump may pass through the goal mid-chain; the goal
        // check runs per constituent GCP, not only at jump boundaries.
        for gcp in tree.flatten(chosen)? {
            gcp_sequence.push(gcp);
            if tree.gcp(gcp)?.policy.behavioral_goal == goal {
                break 'descent;
            }
        }
        node = tree.hla(chosen)?.end_node;
    }

    let (primitive_trace, final_state) = if gcp_sequence.is_empty() {
        (Trajectory { states: vec![start], actions: Vec::new(), reached_goal: start == goal }, start)
    } else {
        let segments: Vec<Cgcp> = gcp_sequence
            .iter()
            .map(|&g| tree.gcp(g).map(|e| e.policy.clone()))
            .collect::<Result<_, _>>()?;
        let trace = run_chain(spec, &segments)?;
        let end = trace.end();
        (trace, end)
    };

    let reached = final_state == goal;
    let total_steps = primitive_trace.len() as u64;
    Ok(ExecutionReport {
        goal_index,
        goal,
        reached,
        gcp_sequence,
        primitive_trace,
        total_steps,
    })
}
