//! Discrete grid with an off-dataset region next to the optimal path.
//!
//! Cells are `(row, col)` with row 0 at the top. Actions: 0 up, 1 down,
//! 2 left, 3 right. Moves into a wall leave the agent in place. States are
//! one-hot over `height * width` cells.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{reference_returns, Action, ActionSpace, EnvSpec, Environment, StepResult};
use crate::rng::Rng;
use crate::{Error, Result};

pub type Cell = (usize, usize);

const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridCliffConfig {
    pub width: usize,
    pub height: usize,
    pub start: Cell,
    pub goal: Cell,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub inflated_region: Vec<Cell>,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for GridCliffConfig {
    fn default() -> Self {
        let mut region = Vec::new();
        for row in 3..=5 {
            for col in 1..=3 {
                region.push((row, col));
            }
        }
        Self {
            width: 6,
            height: 6,
            start: (0, 0),
            goal: (5, 0),
            step_reward: -1.0,
            goal_reward: 20.0,
            inflated_region: region,
            horizon: 60,
            gamma: 0.99,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridCliff {
    config: GridCliffConfig,
    spec: EnvSpec,
    /// Shortest-path distance to the goal avoiding the region (or through
    /// it, for cells inside the region).
    distance: Vec<usize>,
    position: Cell,
    elapsed: usize,
}

impl GridCliff {
    pub fn new(config: GridCliffConfig) -> Result<Self> {
        let in_grid = |c: &Cell| c.0 < config.height && c.1 < config.width;
        if config.width == 0 || config.height == 0 {
            return Err(Error::Config("grid must be non-empty".into()));
        }
        if !in_grid(&config.start) || !in_grid(&config.goal) {
            return Err(Error::Config("start and goal must lie inside the grid".into()));
        }
        if config.start == config.goal {
            return Err(Error::Config("start must differ from goal".into()));
        }
        if config.inflated_region.iter().any(|c| !in_grid(c)) {
            return Err(Error::Config("inflated region leaves the grid".into()));
        }
        if config.inflated_region.contains(&config.start) || config.inflated_region.contains(&config.goal) {
            return Err(Error::Config("inflated region must exclude start and goal".into()));
        }
        if config.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&config.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", config.gamma)));
        }
        let n = config.width * config.height;
        let mut env = Self {
            spec: EnvSpec {
                name: "grid_cliff".into(),
                state_dim: n,
                action_space: ActionSpace::Discrete { n: 4 },
                horizon: config.horizon,
                gamma: config.gamma,
                reference: super::ReferenceReturns {
                    random_return: 0.0,
                    expert_return: 1.0,
                },
            },
            distance: Vec::new(),
            position: config.start,
            elapsed: 0,
            config,
        };
        env.distance = env.goal_distances();
        if env.distance[env.index(env.config.start)] == usize::MAX {
            return Err(Error::Config("goal unreachable from start".into()));
        }
        env.spec.reference = reference_returns(&env)?;
        Ok(env)
    }

    pub fn config(&self) -> &GridCliffConfig {
        &self.config
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.0 * self.config.width + cell.1
    }

    pub fn cell(&self, index: usize) -> Cell {
        (index / self.config.width, index % self.config.width)
    }

    pub fn encode(&self, cell: Cell) -> Vec<f64> {
        let mut s = vec![0.0; self.spec.state_dim];
        s[self.index(cell)] = 1.0;
        s
    }

    /// Decodes a one-hot state; returns `None` for malformed input.
    pub fn decode(&self, state: &[f64]) -> Option<Cell> {
        if state.len() != self.spec.state_dim {
            return None;
        }
        state.iter().position(|&x| x > 0.5).map(|i| self.cell(i))
    }

    pub fn in_region(&self, cell: Cell) -> bool {
        self.config.inflated_region.contains(&cell)
    }

    pub fn inflated_indices(&self) -> Vec<usize> {
        self.config.inflated_region.iter().map(|&c| self.index(c)).collect()
    }

    pub fn move_from(&self, cell: Cell, action: usize) -> Cell {
        let (dr, dc) = MOVES[action];
        let r = cell.0 as isize + dr;
        let c = cell.1 as isize + dc;
        if r < 0 || c < 0 || r >= self.config.height as isize || c >= self.config.width as isize {
            cell
        } else {
            (r as usize, c as usize)
        }
    }

    // BFS from the goal. Region cells are only expanded from other region
    // cells, so outside cells get region-avoiding distances.
    fn goal_distances(&self) -> Vec<usize> {
        let n = self.spec.state_dim;
        let mut outside = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        outside[self.index(self.config.goal)] = 0;
        queue.push_back(self.config.goal);
        while let Some(c) = queue.pop_front() {
            let d = outside[self.index(c)];
            for a in 0..4 {
                let nb = self.move_from(c, a);
                if self.in_region(nb) {
                    continue;
                }
                let i = self.index(nb);
                if outside[i] == usize::MAX {
                    outside[i] = d + 1;
                    queue.push_back(nb);
                }
            }
        }
        let mut full = vec![usize::MAX; n];
        full[self.index(self.config.goal)] = 0;
        queue.push_back(self.config.goal);
        while let Some(c) = queue.pop_front() {
            let d = full[self.index(c)];
            for a in 0..4 {
                let nb = self.move_from(c, a);
                let i = self.index(nb);
                if full[i] == usize::MAX {
                    full[i] = d + 1;
                    queue.push_back(nb);
                }
            }
        }
        (0..n)
            .map(|i| {
                if self.in_region(self.cell(i)) || outside[i] == usize::MAX {
                    full[i]
                } else {
                    outside[i]
                }
            })
            .collect()
    }

    /// Greedy shortest-path action; ties go to the lowest action index.
    pub fn expert_for(&self, cell: Cell) -> usize {
        let here_in = self.in_region(cell);
        (0..4)
            .min_by_key(|&a| {
                let nb = self.move_from(cell, a);
                if nb == cell || (!here_in && self.in_region(nb)) {
                    usize::MAX
                } else {
                    self.distance[self.index(nb)]
                }
            })
            .unwrap_or(1)
    }

    pub fn position(&self) -> Cell {
        self.position
    }
}

impl Environment for GridCliff {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut Rng) -> Vec<f64> {
        self.position = self.config.start;
        self.elapsed = 0;
        self.encode(self.position)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let a = self.spec.action_space.validate(action)?.index();
        let next = self.move_from(self.position, a);
        self.position = next;
        self.elapsed += 1;
        let terminal = next == self.config.goal;
        let reward = if terminal {
            self.config.goal_reward
        } else {
            self.config.step_reward
        };
        Ok(StepResult {
            next_state: self.encode(next),
            reward,
            terminal,
            timeout: !terminal && self.elapsed >= self.config.horizon,
        })
    }

    fn expert_action(&self, state: &[f64], _rng: &mut Rng) -> Option<Action> {
        self.decode(state).map(|c| Action::Discrete(self.expert_for(c)))
    }

    fn elapsed(&self) -> usize {
        self.elapsed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::env_reset;

    #[test]
    fn reset_is_start_cell() {
        let mut g = GridCliff::new(GridCliffConfig::default()).unwrap();
        for seed in [0, 1, 99] {
            let s = env_reset(&mut g, seed);
            assert_eq!(g.decode(&s), Some((0, 0)));
            assert_eq!(s.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn goal_adjacent_step_terminates_with_goal_reward() {
        let mut g = GridCliff::new(GridCliffConfig::default()).unwrap();
        env_reset(&mut g, 0);
        g.position = (4, 0);
        let r = g.step(&Action::Discrete(1)).unwrap();
        assert!(r.terminal);
        assert!(!r.timeout);
        assert_eq!(r.reward, 20.0);
    }

    #[test]
    fn timeout_exactly_at_horizon() {
        let mut g = GridCliff::new(GridCliffConfig::default()).unwrap();
        env_reset(&mut g, 0);
        for t in 1..=60 {
            // bump into the top wall forever
            let r = g.step(&Action::Discrete(0)).unwrap();
            assert_eq!(r.timeout, t == 60);
            assert!(!r.terminal);
        }
    }

    #[test]
    fn invalid_action_is_rejected() {
        let mut g = GridCliff::new(GridCliffConfig::default()).unwrap();
        env_reset(&mut g, 0);
        assert!(g.step(&Action::Discrete(4)).is_err());
        assert!(g.step(&Action::Continuous(vec![0.0])).is_err());
    }

    #[test]
    fn expert_walks_down_the_left_column() {
        let g = GridCliff::new(GridCliffConfig::default()).unwrap();
        let mut cell = g.config.start;
        let mut steps = 0;
        while cell != g.config.goal {
            assert!(!g.in_region(cell));
            cell = g.move_from(cell, g.expert_for(cell));
            steps += 1;
        }
        assert_eq!(steps, 5);
        assert_eq!(g.spec().reference.expert_return, 16.0);
        assert!(g.spec().reference.random_return < 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = GridCliffConfig::default();
        c.goal = c.start;
        assert!(GridCliff::new(c).is_err());
        let mut c = GridCliffConfig::default();
        c.inflated_region.push((0, 0));
        assert!(GridCliff::new(c).is_err());
    }
}
