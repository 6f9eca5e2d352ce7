//! Per-iteration training metrics and their CSV form.

use std::fmt::Write as _;

/// One row per planning iteration. Multi-valued columns are
/// semicolon-packed so the header stays fixed across mazes.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    pub gcps_learned: usize,
    /// HLA counts per level, lowest first.
    pub hlas_by_level: Vec<usize>,
    pub current_goal: usize,
    /// Latest execute-probe result per desired goal.
    pub goal_successes: Vec<bool>,
    /// Cumulative primitive environment steps.
    pub env_steps: u64,
}

pub const METRICS_HEADER: &str =
    "iteration,gcps_learned,hlas_by_level,current_goal,goal_successes,env_steps";

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        let levels: Vec<String> = self.hlas_by_level.iter().map(|c| c.to_string()).collect();
        let successes: Vec<String> =
            self.goal_successes.iter().map(|s| if *s { "1" } else { "0" }.to_string()).collect();
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            self.gcps_learned,
            levels.join(";"),
            self.current_goal,
            successes.join(";"),
            self.env_steps
        )
    }
}

pub fn render_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv_line());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_shape() {
        let row = MetricsRow {
            iteration: 3,
            gcps_learned: 5,
            hlas_by_level: vec![5, 1],
            current_goal: 2,
            goal_successes: vec![false, true, false],
            env_steps: 12345,
        };
        assert_eq!(row.to_csv_line(), "3,5,5;1,2,0;1;0,12345");
        let csv = render_metrics_csv(&[row]);
        assert!(csv.starts_with(METRICS_HEADER));
        assert_eq!(csv.lines().count(), 2);
    }
}
