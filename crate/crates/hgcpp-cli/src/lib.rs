//! CLI harness for the hgcpp planner: training runs, execution, tree
//! inspection, and an equal-budget comparison against flat MCTS.

pub mod baseline;
pub mod commands;
pub mod metrics;

pub use commands::run_command;
