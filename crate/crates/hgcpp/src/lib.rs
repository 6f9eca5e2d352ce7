//! Hierarchical goal-conditioned policy planning in grid-world mazes.
//!
//! The agent grows a single lifetime plan-tree rooted at its start state.
//! Edges are short goal-conditioned policies learned by tabular Q-learning;
//! runs of consecutively linked edges compose into high-level actions of
//! increasing depth, each carrying a q-value per desired goal. Planning
//! alternates between following promising high-level actions and sampling
//! novel behavioral goals to learn new policies toward, with failed attempts
//! relabeled in hindsight. Once trained, the tree executes any desired goal
//! by greedy descent and policy concatenation.
//!
//! Modules follow the pipeline: [`maze`] defines the environment, [`gcp`]
//! learns policies, [`tree`] holds the plan structure, [`planner`] grows it,
//! and [`executor`] exploits it.

pub mod executor;
pub mod gcp;
pub mod maze;
pub mod planner;
pub mod tree;

pub use executor::{concatenate, execute, ExecutionReport};
pub use gcp::{gcp_value, learn_gcp, link_check, run_gcp, Cgcp, LearnOutcome, Trajectory, TrajectoryArchive};
pub use maze::{parse_maze, Action, Cell, DistanceBand, GridSpec, RewardVector};
pub use planner::{train, FocusConfig, Planner, PlannerConfig, RolloutMode};
pub use tree::{GcpId, HlaId, NodeId, PlanTree};
