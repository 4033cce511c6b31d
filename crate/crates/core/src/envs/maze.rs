//! Colored perfect mazes.
//!
//! Cells are addressed `(row, col)` with row 0 at the top; NORTH decreases
//! the row. Mazes are carved with a recursive backtracker from the start
//! cell, then cells whose shortest-path action matches the color semantics
//! are painted with probability `color_prob`.
//!
//! JSON form (served to the study UI):
//!
//! ```json
//! {"size":3,"start":[0,0],"goal":[2,2],"semantics":"standard","color_prob":0.5,"seed":1,
//!  "walls":[[13,3,7],...],"colors":["wrw",...]}
//! ```
//!
//! `walls[r][c]` is a bitmask with N=1, S=2, E=4, W=8 set where a wall is
//! present; `colors[r]` has one char per cell, `w`, `r` or `b`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    /// Action order used for ids and tie-breaks.
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn wall_bit(self) -> u8 {
        1 << self.id()
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
        }
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (-1, 0),
            Direction::South => (1, 0),
            Direction::East => (0, 1),
            Direction::West => (0, -1),
        }
    }

    /// Upper-case name, as written in rules and generation prompts.
    pub fn upper(self) -> &'static str {
        match self {
            Direction::North => "NORTH",
            Direction::South => "SOUTH",
            Direction::East => "EAST",
            Direction::West => "WEST",
        }
    }

    /// Capitalized name, as listed in the action-selection prompt.
    pub fn title(self) -> &'static str {
        match self {
            Direction::North => "North",
            Direction::South => "South",
            Direction::East => "East",
            Direction::West => "West",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NORTH" | "N" => Some(Direction::North),
            "SOUTH" | "S" => Some(Direction::South),
            "EAST" | "E" => Some(Direction::East),
            "WEST" | "W" => Some(Direction::West),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    White,
    Red,
    Blue,
}

impl Color {
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn upper(self) -> &'static str {
        match self {
            Color::White => "WHITE",
            Color::Red => "RED",
            Color::Blue => "BLUE",
        }
    }

    pub fn code(self) -> char {
        match self {
            Color::White => 'w',
            Color::Red => 'r',
            Color::Blue => 'b',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'w' => Some(Color::White),
            'r' => Some(Color::Red),
            'b' => Some(Color::Blue),
            _ => None,
        }
    }
}

/// What the colors mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Semantics {
    /// Red: SOUTH. Blue: NORTH then EAST.
    #[default]
    Standard,
    /// Red: WEST. Blue: EAST then SOUTH.
    Adapted,
}

impl Semantics {
    pub fn red_action(self) -> Direction {
        match self {
            Semantics::Standard => Direction::South,
            Semantics::Adapted => Direction::West,
        }
    }

    pub fn blue_pattern(self) -> (Direction, Direction) {
        match self {
            Semantics::Standard => (Direction::North, Direction::East),
            Semantics::Adapted => (Direction::East, Direction::South),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeCell {
    pub row: usize,
    pub col: usize,
    pub color: Color,
    /// Wall bitmask, see [`Direction::wall_bit`].
    pub walls: u8,
}

impl MazeCell {
    pub fn has_wall(&self, d: Direction) -> bool {
        self.walls & d.wall_bit() != 0
    }
}

pub type Pos = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MazeJson", try_from = "MazeJson")]
pub struct MazeSpec {
    pub size: usize,
    /// Row-major.
    pub cells: Vec<MazeCell>,
    pub start: Pos,
    pub goal: Pos,
    pub semantics: Semantics,
    pub color_prob: f64,
    pub seed: u64,
}

impl MazeSpec {
    pub fn index(&self, pos: Pos) -> usize {
        pos.0 * self.size + pos.1
    }

    pub fn pos(&self, index: usize) -> Pos {
        (index / self.size, index % self.size)
    }

    pub fn cell(&self, pos: Pos) -> &MazeCell {
        &self.cells[self.index(pos)]
    }

    pub fn num_cells(&self) -> usize {
        self.size * self.size
    }

    pub fn color(&self, pos: Pos) -> Color {
        self.cell(pos).color
    }

    /// Neighbor reached by moving `d` if no wall blocks it.
    pub fn neighbor(&self, pos: Pos, d: Direction) -> Option<Pos> {
        if self.cell(pos).has_wall(d) {
            return None;
        }
        let (dr, dc) = d.delta();
        let r = pos.0 as isize + dr;
        let c = pos.1 as isize + dc;
        if r < 0 || c < 0 || r >= self.size as isize || c >= self.size as isize {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// Fresh all-walls grid with no colors.
    fn closed(size: usize, semantics: Semantics, color_prob: f64, seed: u64) -> Self {
        let cells = (0..size * size)
            .map(|i| MazeCell {
                row: i / size,
                col: i % size,
                color: Color::White,
                walls: 0b1111,
            })
            .collect();
        Self {
            size,
            cells,
            start: (0, 0),
            goal: (size - 1, size - 1),
            semantics,
            color_prob,
            seed,
        }
    }

    fn open_between(&mut self, a: Pos, d: Direction) {
        let (dr, dc) = d.delta();
        let b = ((a.0 as isize + dr) as usize, (a.1 as isize + dc) as usize);
        let ia = self.index(a);
        let ib = self.index(b);
        self.cells[ia].walls &= !d.wall_bit();
        self.cells[ib].walls &= !d.opposite().wall_bit();
    }

    /// Walls agree between neighbors and the border is closed.
    pub fn walls_consistent(&self) -> bool {
        for cell in &self.cells {
            let pos = (cell.row, cell.col);
            for d in Direction::ALL {
                let (dr, dc) = d.delta();
                let r = pos.0 as isize + dr;
                let c = pos.1 as isize + dc;
                let outside = r < 0 || c < 0 || r >= self.size as isize || c >= self.size as isize;
                if outside {
                    if !cell.has_wall(d) {
                        return false;
                    }
                } else {
                    let other = self.cell((r as usize, c as usize));
                    if cell.has_wall(d) != other.has_wall(d.opposite()) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Number of open passages (each counted once).
    pub fn passage_count(&self) -> usize {
        self.cells
            .iter()
            .map(|c| (0..4).filter(|b| c.walls & (1 << b) == 0).count())
            .sum::<usize>()
            / 2
    }
}

/// Carve a perfect maze with the recursive backtracker and color it.
///
/// The carve starts at the start cell; unvisited neighbors are listed in
/// N, S, E, W order and one is taken with `below(k)`. Coloring then walks
/// cells in row-major order and draws one `bernoulli(color_prob)` for each
/// cell that qualifies.
pub fn generate_maze(
    seed: u64,
    size: usize,
    semantics: Semantics,
    color_prob: f64,
) -> Result<MazeSpec, EnvError> {
    if size < 2 {
        return Err(EnvError::Config(format!("maze size {size} < 2")));
    }
    if !(0.0..=1.0).contains(&color_prob) {
        return Err(EnvError::Config(format!("color_prob {color_prob} not in [0,1]")));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let mut m = MazeSpec::closed(size, semantics, color_prob, seed);

    let mut visited = vec![false; size * size];
    let mut stack = vec![m.start];
    visited[m.index(m.start)] = true;
    while let Some(&cur) = stack.last() {
        let options: Vec<Direction> = Direction::ALL
            .into_iter()
            .filter(|d| {
                let (dr, dc) = d.delta();
                let r = cur.0 as isize + dr;
                let c = cur.1 as isize + dc;
                r >= 0
                    && c >= 0
                    && r < size as isize
                    && c < size as isize
                    && !visited[r as usize * size + c as usize]
            })
            .collect();
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let d = options[rng.below(options.len())];
        m.open_between(cur, d);
        let (dr, dc) = d.delta();
        let next = ((cur.0 as isize + dr) as usize, (cur.1 as isize + dc) as usize);
        visited[m.index(next)] = true;
        stack.push(next);
    }

    let oracle = maze_oracle(&m)?;
    let red = semantics.red_action();
    let (blue_first, blue_second) = semantics.blue_pattern();
    for i in 0..m.num_cells() {
        let Some(a) = oracle.action[i] else { continue };
        let color = if a == red {
            rng.bernoulli(color_prob).then_some(Color::Red)
        } else if a == blue_first {
            let succ = m.neighbor(m.pos(i), a).expect("oracle action is open");
            if oracle.action[m.index(succ)] == Some(blue_second) {
                rng.bernoulli(color_prob).then_some(Color::Blue)
            } else {
                None
            }
        } else {
            None
        };
        if let Some(c) = color {
            m.cells[i].color = c;
        }
    }
    Ok(m)
}

/// Shortest-path distances and first actions towards the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeOracle {
    pub dist: Vec<u32>,
    /// `None` at the goal.
    pub action: Vec<Option<Direction>>,
}

impl MazeOracle {
    pub fn distance(&self, m: &MazeSpec, pos: Pos) -> u32 {
        self.dist[m.index(pos)]
    }

    pub fn action_at(&self, m: &MazeSpec, pos: Pos) -> Option<Direction> {
        self.action[m.index(pos)]
    }
}

/// Breadth-first search from the goal over open passages. Each cell maps to
/// the first action of a shortest path, ties broken in N, S, E, W order.
pub fn maze_oracle(m: &MazeSpec) -> Result<MazeOracle, EnvError> {
    let n = m.num_cells();
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    dist[m.index(m.goal)] = 0;
    queue.push_back(m.goal);
    while let Some(p) = queue.pop_front() {
        let d = dist[m.index(p)];
        for dir in Direction::ALL {
            if let Some(q) = m.neighbor(p, dir) {
                let qi = m.index(q);
                if dist[qi] == u32::MAX {
                    dist[qi] = d + 1;
                    queue.push_back(q);
                }
            }
        }
    }
    let mut action = vec![None; n];
    for i in 0..n {
        if dist[i] == u32::MAX {
            return Err(EnvError::Invariant(format!(
                "cell {:?} cannot reach the goal",
                m.pos(i)
            )));
        }
        if dist[i] == 0 {
            continue;
        }
        action[i] = Direction::ALL.into_iter().find(|&dir| {
            m.neighbor(m.pos(i), dir)
                .is_some_and(|q| dist[m.index(q)] + 1 == dist[i])
        });
    }
    Ok(MazeOracle { dist, action })
}

/// Move once. Blocked moves stay put; the observation is the color of the
/// resulting cell.
pub fn maze_step(m: &MazeSpec, pos: Pos, action: Direction) -> (Pos, Color, bool) {
    let next = m.neighbor(pos, action).unwrap_or(pos);
    (next, m.color(next), next == m.goal)
}

/// Step cap per episode: `4 * size^2`.
pub fn step_cap(size: usize) -> u32 {
    (4 * size * size) as u32
}

/// Episode reward: `1 / steps` when the goal was reached, 0 otherwise.
pub fn maze_episode_reward(steps: u32, reached_goal: bool) -> Result<f64, EnvError> {
    if steps == 0 {
        return Err(EnvError::InvalidAction("episode with zero steps".into()));
    }
    Ok(if reached_goal { 1.0 / steps as f64 } else { 0.0 })
}

/// Serialized maze layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeJson {
    pub size: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    pub semantics: Semantics,
    pub color_prob: f64,
    pub seed: u64,
    pub walls: Vec<Vec<u8>>,
    pub colors: Vec<String>,
}

impl From<MazeSpec> for MazeJson {
    fn from(m: MazeSpec) -> Self {
        let walls = (0..m.size)
            .map(|r| (0..m.size).map(|c| m.cell((r, c)).walls).collect())
            .collect();
        let colors = (0..m.size)
            .map(|r| (0..m.size).map(|c| m.cell((r, c)).color.code()).collect())
            .collect();
        Self {
            size: m.size,
            start: [m.start.0, m.start.1],
            goal: [m.goal.0, m.goal.1],
            semantics: m.semantics,
            color_prob: m.color_prob,
            seed: m.seed,
            walls,
            colors,
        }
    }
}

impl TryFrom<MazeJson> for MazeSpec {
    type Error = EnvError;

    fn try_from(j: MazeJson) -> Result<Self, Self::Error> {
        let size = j.size;
        let bad = |msg: &str| EnvError::Config(format!("maze json: {msg}"));
        if size < 2 || j.walls.len() != size || j.colors.len() != size {
            return Err(bad("grid dimensions do not match size"));
        }
        let mut cells = Vec::with_capacity(size * size);
        for r in 0..size {
            let row_colors: Vec<char> = j.colors[r].chars().collect();
            if j.walls[r].len() != size || row_colors.len() != size {
                return Err(bad("row length does not match size"));
            }
            for c in 0..size {
                let color = Color::from_code(row_colors[c]).ok_or_else(|| bad("unknown color"))?;
                cells.push(MazeCell {
                    row: r,
                    col: c,
                    color,
                    walls: j.walls[r][c] & 0b1111,
                });
            }
        }
        let inside = |p: [usize; 2]| p[0] < size && p[1] < size;
        if !inside(j.start) || !inside(j.goal) || j.start == j.goal {
            return Err(bad("start/goal outside grid or equal"));
        }
        let m = MazeSpec {
            size,
            cells,
            start: (j.start[0], j.start[1]),
            goal: (j.goal[0], j.goal[1]),
            semantics: j.semantics,
            color_prob: j.color_prob,
            seed: j.seed,
        };
        if !m.walls_consistent() {
            return Err(bad("walls are not symmetric"));
        }
        Ok(m)
    }
}
