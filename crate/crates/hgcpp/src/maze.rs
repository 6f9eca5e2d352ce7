//! Deterministic grid-world environment with goal-conditioned rewards.
//!
//! The world is a rectangular grid of free and wall cells. An agent occupies
//! one free cell and moves with four primitive actions. Rewards are sparse and
//! conditioned on a set of desired goal cells: entering a goal cell yields 1
//! for that goal, everything else yields 0. Shortest-path (BFS) distances are
//! the distance measure throughout, so walls count.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A grid position. Ordering is row-major (row first, then column), which is
/// the tie-breaking order used everywhere a deterministic choice among cells
/// is needed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: u16,
    pub col: u16,
}

impl Cell {
    pub fn new(row: u16, col: u16) -> Self {
        Cell { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// The four primitive actions. The declared order (N < S < E < W) is the
/// fixed total order used for deterministic tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    North,
    South,
    East,
    West,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::North, Action::South, Action::East, Action::West];

    /// (row delta, col delta) of the move.
    fn delta(self) -> (i32, i32) {
        match self {
            Action::North => (-1, 0),
            Action::South => (1, 0),
            Action::East => (0, 1),
            Action::West => (0, -1),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::North => "North",
            Action::South => "South",
            Action::East => "East",
            Action::West => "West",
        };
        f.write_str(name)
    }
}

/// One reward entry per desired goal, in goal order. Entries are 0 or 1 under
/// the sparse reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardVector(Vec<f64>);

impl RewardVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, goal_index: usize) -> f64 {
        self.0[goal_index]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Inclusive BFS-distance band `[min, max]` used when sampling behavioral
/// goals around a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceBand {
    pub min: u32,
    pub max: u32,
}

impl DistanceBand {
    pub fn new(min: u32, max: u32) -> Self {
        DistanceBand { min, max }
    }

    pub fn contains(&self, d: u32) -> bool {
        self.min <= d && d <= self.max
    }

    pub fn is_valid(&self) -> bool {
        1 <= self.min && self.min <= self.max
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MazeError {
    #[error("maze text is empty")]
    EmptyGrid,
    #[error("line {row} has length {len}, expected {expected}")]
    RaggedLine { row: usize, len: usize, expected: usize },
    #[error("unrecognized character {ch:?} at row {row}, col {col}")]
    MalformedCharacter { ch: char, row: usize, col: usize },
    #[error("maze has no start cell 'S'")]
    MissingStart,
    #[error("maze has more than one start cell 'S'")]
    MultipleStarts,
    #[error("maze declares no desired goals (digits 1-9)")]
    NoGoals,
    #[error("goal digit {0:?} appears more than once")]
    DuplicateGoalDigit(char),
    #[error("goal {index} at {cell} is unreachable from the start")]
    UnreachableGoal { index: usize, cell: Cell },
    #[error("cell {0} is not a free cell")]
    NotFree(Cell),
    #[error("distance band [{min}, {max}] is invalid (need 1 <= min <= max)")]
    InvalidBand { min: u32, max: u32 },
}

/// An immutable maze layout together with its start state and desired goals:
/// the goal-conditioned MDP every other component plans and learns against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    width: u16,
    height: u16,
    walls: BTreeSet<Cell>,
    start: Cell,
    desired_goals: Vec<Cell>,
    waypoints: Vec<Cell>,
}

/// Parses the maze text format: one char per cell, `#` wall, `.` free,
/// `S` start (exactly one), digits `1`-`9` desired goals (ordered by digit),
/// `w` waypoint. All lines must have equal length.
pub fn parse_maze(text: &str) -> Result<GridSpec, MazeError> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return Err(MazeError::EmptyGrid);
    }
    let width = lines[0].chars().count();
    if width == 0 {
        return Err(MazeError::EmptyGrid);
    }

    let mut walls = BTreeSet::new();
    let mut start = None;
    let mut goals: Vec<(char, Cell)> = Vec::new();
    let mut waypoints = Vec::new();

    for (row, line) in lines.iter().enumerate() {
        let len = line.chars().count();
        if len != width {
            return Err(MazeError::RaggedLine { row, len, expected: width });
        }
        for (col, ch) in line.chars().enumerate() {
            let cell = Cell::new(row as u16, col as u16);
            match ch {
                '#' => {
                    walls.insert(cell);
                }
                '.' => {}
                'S' => {
                    if start.replace(cell).is_some() {
                        return Err(MazeError::MultipleStarts);
                    }
                }
                'w' => waypoints.push(cell),
                '1'..='9' => {
                    if goals.iter().any(|(d, _)| *d == ch) {
                        return Err(MazeError::DuplicateGoalDigit(ch));
                    }
                    goals.push((ch, cell));
                }
                _ => return Err(MazeError::MalformedCharacter { ch, row, col }),
            }
        }
    }

    let start = start.ok_or(MazeError::MissingStart)?;
    if goals.is_empty() {
        return Err(MazeError::NoGoals);
    }
    goals.sort_by_key(|(d, _)| *d);
    let desired_goals: Vec<Cell> = goals.into_iter().map(|(_, c)| c).collect();

    let spec = GridSpec {
        width: width as u16,
        height: lines.len() as u16,
        walls,
        start,
        desired_goals,
        waypoints,
    };

    for (index, &cell) in spec.desired_goals.iter().enumerate() {
        if spec.bfs_distance(spec.start, cell)?.is_none() {
            return Err(MazeError::UnreachableGoal { index, cell });
        }
    }
    Ok(spec)
}

impl GridSpec {
    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn desired_goals(&self) -> &[Cell] {
        &self.desired_goals
    }

    pub fn num_goals(&self) -> usize {
        self.desired_goals.len()
    }

    pub fn waypoints(&self) -> &[Cell] {
        &self.waypoints
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.walls.contains(&cell)
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.is_wall(cell)
    }

    pub fn free_cell_count(&self) -> usize {
        self.width as usize * self.height as usize - self.walls.len()
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |row| {
            (0..self.width).map(move |col| Cell::new(row, col)).filter(|c| !self.is_wall(*c))
        })
    }

    /// The cell reached by taking `a` from `s`: the adjacent cell in that
    /// direction if free, otherwise `s` itself (blocked moves stay put).
    pub fn moved(&self, s: Cell, a: Action) -> Cell {
        let (dr, dc) = a.delta();
        let row = s.row as i32 + dr;
        let col = s.col as i32 + dc;
        if row < 0 || col < 0 {
            return s;
        }
        let next = Cell::new(row as u16, col as u16);
        if self.is_free(next) {
            next
        } else {
            s
        }
    }

    /// One environment transition: the successor cell and the per-goal sparse
    /// reward (1 for each goal whose cell the transition enters, else 0).
    pub fn step(&self, s: Cell, a: Action) -> Result<(Cell, RewardVector), MazeError> {
        if !self.is_free(s) {
            return Err(MazeError::NotFree(s));
        }
        let next = self.moved(s, a);
        let rewards = self
            .desired_goals
            .iter()
            .map(|&g| if next == g { 1.0 } else { 0.0 })
            .collect();
        Ok((next, RewardVector(rewards)))
    }

    /// Sparse goal-conditioned reward of the transition `(s, a, s')` for one
    /// goal cell: 1 iff the transition enters the goal.
    pub fn goal_reward(&self, next: Cell, goal: Cell) -> f64 {
        if next == goal {
            1.0
        } else {
            0.0
        }
    }

    fn cell_index(&self, cell: Cell) -> usize {
        cell.row as usize * self.width as usize + cell.col as usize
    }

    /// BFS distance from `from` to every cell; `None` entries are
    /// unreachable or walls. Indexed row-major.
    fn distance_field(&self, from: Cell) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.width as usize * self.height as usize];
        dist[self.cell_index(from)] = Some(0);
        let mut queue = VecDeque::new();
        queue.push_back(from);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.cell_index(cell)].unwrap();
            for a in Action::ALL {
                let next = self.moved(cell, a);
                let slot = &mut dist[self.cell_index(next)];
                if slot.is_none() {
                    *slot = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
        dist
    }

    /// Length of the shortest wall-respecting 4-connected path between two
    /// free cells. `Ok(None)` means the cells are mutually unreachable.
    pub fn bfs_distance(&self, s1: Cell, s2: Cell) -> Result<Option<u32>, MazeError> {
        if !self.is_free(s1) {
            return Err(MazeError::NotFree(s1));
        }
        if !self.is_free(s2) {
            return Err(MazeError::NotFree(s2));
        }
        Ok(self.distance_field(s1)[self.cell_index(s2)])
    }

    /// All free cells whose BFS distance from `s` lies in `band`, in
    /// row-major order. The list length is the exact candidate count used by
    /// the expansion strategy.
    pub fn candidate_goals(&self, s: Cell, band: DistanceBand) -> Result<Vec<Cell>, MazeError> {
        if !band.is_valid() {
            return Err(MazeError::InvalidBand { min: band.min, max: band.max });
        }
        if !self.is_free(s) {
            return Err(MazeError::NotFree(s));
        }
        let field = self.distance_field(s);
        let mut cells = Vec::new();
        for row in 0..self.height {
            for col in 0..self.width {
                let cell = Cell::new(row, col);
                if let Some(d) = field[self.cell_index(cell)] {
                    if band.contains(d) {
                        cells.push(cell);
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_grid(width: u16, height: u16) -> GridSpec {
        let mut text = String::new();
        for row in 0..height {
            for col in 0..width {
                if row == height / 2 && col == width / 2 {
                    text.push('S');
                } else if row == 0 && col == 0 {
                    text.push('1');
                } else {
                    text.push('.');
                }
            }
            text.push('\n');
        }
        parse_maze(&text).unwrap()
    }

    /// Independent BFS oracle: plain frontier expansion over explicit
    /// neighbor lists, no shared code with `distance_field`.
    fn oracle_bfs(spec: &GridSpec, from: Cell, to: Cell) -> Option<u32> {
        let mut frontier = vec![from];
        let mut seen = BTreeSet::new();
        seen.insert(from);
        let mut d = 0;
        loop {
            if frontier.iter().any(|&c| c == to) {
                return Some(d);
            }
            let mut next_frontier = Vec::new();
            for &c in &frontier {
                let neighbors = [
                    (c.row.wrapping_sub(1), c.col),
                    (c.row + 1, c.col),
                    (c.row, c.col + 1),
                    (c.row, c.col.wrapping_sub(1)),
                ];
                for (row, col) in neighbors {
                    let n = Cell::new(row, col);
                    if spec.is_free(n) && seen.insert(n) {
                        next_frontier.push(n);
                    }
                }
            }
            if next_frontier.is_empty() {
                return None;
            }
            frontier = next_frontier;
            d += 1;
        }
    }

    #[test]
    fn parse_minimal_grid() {
        let spec = parse_maze("...\n.S.\n..1\n").unwrap();
        assert_eq!(spec.width(), 3);
        assert_eq!(spec.height(), 3);
        assert_eq!(spec.free_cell_count(), 9);
        assert_eq!(spec.start(), Cell::new(1, 1));
        assert_eq!(spec.desired_goals(), &[Cell::new(2, 2)]);
    }

    #[test]
    fn parse_rejects_enclosed_goal() {
        let text = "S....\n.###.\n.#1#.\n.###.\n.....\n";
        match parse_maze(text) {
            Err(MazeError::UnreachableGoal { index: 0, cell }) => {
                assert_eq!(cell, Cell::new(2, 2));
            }
            other => panic!("expected unreachable-goal error, got {other:?}"),
        }
    }

    #[test]
    fn parse_distinct_errors() {
        assert_eq!(parse_maze(""), Err(MazeError::EmptyGrid));
        assert_eq!(parse_maze("..1\n....\n"), Err(MazeError::RaggedLine { row: 1, len: 4, expected: 3 }));
        assert!(matches!(
            parse_maze("S?1\n"),
            Err(MazeError::MalformedCharacter { ch: '?', row: 0, col: 1 })
        ));
        assert_eq!(parse_maze("..1\n"), Err(MazeError::MissingStart));
        assert_eq!(parse_maze("S.S1\n"), Err(MazeError::MultipleStarts));
        assert_eq!(parse_maze("S..\n"), Err(MazeError::NoGoals));
        assert_eq!(parse_maze("S11\n"), Err(MazeError::DuplicateGoalDigit('1')));
    }

    #[test]
    fn goals_ordered_by_digit() {
        let spec = parse_maze("3.S.1\n....2\n").unwrap();
        assert_eq!(
            spec.desired_goals(),
            &[Cell::new(0, 4), Cell::new(1, 4), Cell::new(0, 0)]
        );
    }

    #[test]
    fn step_moves_and_blocks() {
        let spec = parse_maze("S#.\n..1\n").unwrap();
        let (next, r) = spec.step(Cell::new(0, 0), Action::East).unwrap();
        assert_eq!(next, Cell::new(0, 0), "wall blocks the move");
        assert_eq!(r.values(), &[0.0]);

        let (next, r) = spec.step(Cell::new(0, 0), Action::South).unwrap();
        assert_eq!(next, Cell::new(1, 0));
        assert_eq!(r.values(), &[0.0]);

        let (next, r) = spec.step(Cell::new(1, 0), Action::North).unwrap();
        assert_eq!(next, Cell::new(0, 0));
        assert_eq!(r.values(), &[0.0]);
    }

    #[test]
    fn step_reward_on_goal_entry() {
        let spec = parse_maze("S.1\n.32\n").unwrap();
        // Entering goal 2's cell (digit '2' -> index 1) rewards only goal 2.
        let (next, r) = spec.step(Cell::new(0, 2), Action::South).unwrap();
        assert_eq!(next, Cell::new(1, 2));
        assert_eq!(r.values(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn step_rejects_wall_and_out_of_bounds() {
        let spec = parse_maze("S#.\n..1\n").unwrap();
        assert_eq!(
            spec.step(Cell::new(0, 1), Action::East),
            Err(MazeError::NotFree(Cell::new(0, 1)))
        );
        assert_eq!(
            spec.step(Cell::new(5, 5), Action::East),
            Err(MazeError::NotFree(Cell::new(5, 5)))
        );
    }

    #[test]
    fn bfs_distance_basics() {
        let spec = open_grid(7, 7);
        let s = spec.start();
        assert_eq!(spec.bfs_distance(s, s).unwrap(), Some(0));
        assert_eq!(spec.bfs_distance(s, Cell::new(s.row, s.col + 1)).unwrap(), Some(1));
    }

    #[test]
    fn bfs_distance_through_wall_gap_matches_oracle() {
        // 4x4 maze with a one-cell gap in an interior wall.
        let text = "S..1\n##.#\n....\n....\n";
        let spec = parse_maze(text).unwrap();
        let a = Cell::new(0, 0);
        let b = Cell::new(2, 0);
        let expected = oracle_bfs(&spec, a, b);
        assert_eq!(expected, Some(6), "oracle sanity: around via the gap at (1,2)");
        assert_eq!(spec.bfs_distance(a, b).unwrap(), expected);
    }

    #[test]
    fn bfs_unreachable_is_a_value_not_an_error() {
        let spec = parse_maze("S#1.\n.#..\n####\n...w\n").unwrap_err();
        // Goal is reachable in that layout? It is not: parse rejects it.
        assert!(matches!(spec, MazeError::UnreachableGoal { .. }));

        // Build a maze whose goal is fine but with a sealed side pocket.
        let spec = parse_maze("S.1#.\n...#.\n#####\n").unwrap();
        assert_eq!(spec.bfs_distance(Cell::new(0, 0), Cell::new(0, 4)).unwrap(), None);
    }

    #[test]
    fn bfs_symmetry_and_triangle_inequality_exhaustive() {
        let text = "S...#..\n.##.#.1\n.#..#..\n.#.....\n....##2\n";
        let spec = parse_maze(text).unwrap();
        let cells: Vec<Cell> = spec.free_cells().collect();
        for &a in &cells {
            for &b in &cells {
                let dab = spec.bfs_distance(a, b).unwrap();
                let dba = spec.bfs_distance(b, a).unwrap();
                assert_eq!(dab, dba, "symmetry {a} {b}");
                assert_eq!(dab, oracle_bfs(&spec, a, b), "oracle {a} {b}");
                for &c in &cells {
                    if let (Some(ab), Some(bc), Some(ac)) = (
                        dab,
                        spec.bfs_distance(b, c).unwrap(),
                        spec.bfs_distance(a, c).unwrap(),
                    ) {
                        assert!(ac <= ab + bc, "triangle {a} {b} {c}");
                    }
                }
            }
        }
    }

    #[test]
    fn candidate_goals_adjacent_band() {
        let spec = open_grid(9, 9);
        let s = spec.start();
        let cands = spec.candidate_goals(s, DistanceBand::new(1, 1)).unwrap();
        assert_eq!(cands.len(), 4, "free 4-neighbors of an interior cell");
        assert_eq!(
            cands,
            vec![
                Cell::new(s.row - 1, s.col),
                Cell::new(s.row, s.col - 1),
                Cell::new(s.row, s.col + 1),
                Cell::new(s.row + 1, s.col),
            ],
            "row-major order"
        );
    }

    #[test]
    fn candidate_goals_open_band_counts() {
        // On an open grid far from walls there are 8 cells at distance 2 and
        // 12 at distance 3 (diamond rings of the Manhattan metric).
        let spec = open_grid(11, 11);
        let s = spec.start();
        let cands = spec.candidate_goals(s, DistanceBand::new(2, 3)).unwrap();
        let ring2 = cands
            .iter()
            .filter(|&&c| spec.bfs_distance(s, c).unwrap() == Some(2))
            .count();
        let ring3 = cands.len() - ring2;
        assert_eq!(ring2, 8);
        assert_eq!(ring3, 12);
        assert_eq!(cands.len(), 20);
        // Cross-check every member against the oracle.
        for &c in &cands {
            let d = oracle_bfs(&spec, s, c).unwrap();
            assert!((2..=3).contains(&d));
        }
    }

    #[test]
    fn candidate_goals_dead_end_has_fewer() {
        // Start sits at the bottom of a dead-end corridor.
        let text = "#S#....\n#.#....\n#.#....\n#.....1\n#######\n";
        let spec = parse_maze(text).unwrap();
        let band = DistanceBand::new(2, 3);
        let corridor = spec.candidate_goals(spec.start(), band).unwrap();
        let open = open_grid(11, 11);
        let open_count = open.candidate_goals(open.start(), band).unwrap().len();
        assert!(corridor.len() < open_count, "{} < {}", corridor.len(), open_count);
        // Oracle: enumerate by BFS over all free cells.
        let by_oracle: Vec<Cell> = spec
            .free_cells()
            .filter(|&c| matches!(oracle_bfs(&spec, spec.start(), c), Some(d) if band.contains(d)))
            .collect();
        assert_eq!(corridor, by_oracle);
    }

    #[test]
    fn candidate_goals_invalid_band() {
        let spec = open_grid(5, 5);
        assert_eq!(
            spec.candidate_goals(spec.start(), DistanceBand::new(0, 2)),
            Err(MazeError::InvalidBand { min: 0, max: 2 })
        );
        assert_eq!(
            spec.candidate_goals(spec.start(), DistanceBand::new(3, 2)),
            Err(MazeError::InvalidBand { min: 3, max: 2 })
        );
    }

    #[test]
    fn band_widening_is_monotone_and_exact() {
        let text = "S...#..\n.##.#.1\n.#..#..\n.#.....\n....##2\n";
        let spec = parse_maze(text).unwrap();
        for &s in spec.free_cells().collect::<Vec<_>>().iter() {
            for min in 1..4u32 {
                for max in min..6u32 {
                    let narrow = spec.candidate_goals(s, DistanceBand::new(min, max)).unwrap();
                    let wide = spec.candidate_goals(s, DistanceBand::new(min, max + 1)).unwrap();
                    for c in &narrow {
                        assert!(wide.contains(c), "band widening must be a superset");
                        let d = spec.bfs_distance(s, *c).unwrap().unwrap();
                        assert!(d >= min && d <= max, "band filter exactness");
                    }
                }
            }
        }
    }

    #[test]
    fn step_is_pure() {
        let spec = open_grid(5, 5);
        let s = spec.start();
        for a in Action::ALL {
            assert_eq!(spec.step(s, a).unwrap(), spec.step(s, a).unwrap());
        }
    }

    #[test]
    fn rewards_are_sparse_binary() {
        let spec = parse_maze("S.1\n.32\n").unwrap();
        for c in spec.free_cells().collect::<Vec<_>>() {
            for a in Action::ALL {
                let (_, r) = spec.step(c, a).unwrap();
                assert!(r.values().iter().all(|&v| v == 0.0 || v == 1.0));
                assert!(r.values().iter().sum::<f64>() <= spec.num_goals() as f64);
            }
        }
    }

    #[test]
    fn waypoints_are_parsed_and_reported() {
        let spec = parse_maze("S.w.1\n").unwrap();
        assert_eq!(spec.waypoints(), &[Cell::new(0, 2)]);
    }
}
