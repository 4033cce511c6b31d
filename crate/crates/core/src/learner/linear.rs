use serde::{Deserialize, Serialize};

use super::tabular::first_argmax;
use super::LearnerError;
use crate::envs::{Color, MazeSpec};
use crate::episode::Transition;

/// Maps a state id to a dense feature vector.
pub trait Featurize {
    fn dim(&self) -> usize;
    fn features(&self, state: usize) -> Vec<f64>;
}

/// One-hot cell followed by one-hot color of that cell.
#[derive(Debug, Clone)]
pub struct MazeFeaturizer {
    num_cells: usize,
    colors: Vec<Color>,
}

impl MazeFeaturizer {
    pub fn new(maze: &MazeSpec) -> Self {
        let colors = (0..maze.num_cells())
            .map(|i| maze.color(maze.pos(i)))
            .collect();
        Self {
            num_cells: maze.num_cells(),
            colors,
        }
    }
}

impl Featurize for MazeFeaturizer {
    fn dim(&self) -> usize {
        self.num_cells + 3
    }

    fn features(&self, state: usize) -> Vec<f64> {
        let mut phi = vec![0.0; self.dim()];
        phi[state] = 1.0;
        phi[self.num_cells + self.colors[state].id()] = 1.0;
        phi
    }
}

/// `Q(s,a) = w_a · φ(s)`, one weight vector per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQ {
    pub dim: usize,
    pub n_actions: usize,
    /// Row-major `[action][feature]`.
    pub weights: Vec<f64>,
    pub lr: f64,
    pub batch_size: usize,
}

impl LinearQ {
    pub fn new(dim: usize, n_actions: usize, lr: f64, batch_size: usize) -> Self {
        Self {
            dim,
            n_actions,
            weights: vec![0.0; dim * n_actions],
            lr,
            batch_size,
        }
    }

    pub fn value(&self, phi: &[f64], action: usize) -> f64 {
        let w = &self.weights[action * self.dim..(action + 1) * self.dim];
        w.iter().zip(phi).map(|(a, b)| a * b).sum()
    }

    pub fn values(&self, phi: &[f64]) -> Vec<f64> {
        (0..self.n_actions).map(|a| self.value(phi, a)).collect()
    }

    pub fn argmax(&self, phi: &[f64]) -> usize {
        first_argmax(&self.values(phi))
    }

    /// Fixed TD targets `r + γ max_a' Q(s',a')`, zero bootstrap on terminals.
    pub fn targets(&self, batch: &[Transition], f: &dyn Featurize, gamma: f64) -> Vec<f64> {
        batch
            .iter()
            .map(|t| {
                if t.done {
                    t.reward
                } else {
                    let v = self.values(&f.features(t.next_state));
                    t.reward + gamma * v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect()
    }

    /// `(1/B) Σ ½ (y_j − Q(s_j,a_j))²` for fixed targets `y`.
    pub fn td_loss(&self, batch: &[Transition], f: &dyn Featurize, targets: &[f64]) -> f64 {
        let b = batch.len() as f64;
        batch
            .iter()
            .zip(targets)
            .map(|(t, y)| {
                let d = y - self.value(&f.features(t.state), t.action);
                0.5 * d * d
            })
            .sum::<f64>()
            / b
    }

    /// Gradient of `td_loss` with respect to the weights, targets held fixed.
    pub fn td_gradient(&self, batch: &[Transition], f: &dyn Featurize, targets: &[f64]) -> Vec<f64> {
        let b = batch.len() as f64;
        let mut g = vec![0.0; self.weights.len()];
        for (t, y) in batch.iter().zip(targets) {
            let phi = f.features(t.state);
            let d = y - self.value(&phi, t.action);
            let off = t.action * self.dim;
            for (i, p) in phi.iter().enumerate() {
                g[off + i] -= d * p / b;
            }
        }
        g
    }
}

/// One semi-gradient TD step over a full batch.
pub fn linearq_update(
    model: &mut LinearQ,
    batch: &[Transition],
    f: &dyn Featurize,
    gamma: f64,
) -> Result<(), LearnerError> {
    if batch.len() != model.batch_size {
        return Err(LearnerError::BatchSize {
            expected: model.batch_size,
            got: batch.len(),
        });
    }
    if f.dim() != model.dim {
        return Err(LearnerError::InvalidParameter(format!(
            "featurizer dim {} != model dim {}",
            f.dim(),
            model.dim
        )));
    }
    let y = model.targets(batch, f, gamma);
    let g = model.td_gradient(batch, f, &y);
    for (w, gi) in model.weights.iter_mut().zip(g) {
        *w -= model.lr * gi;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_maze, Semantics};

    struct OneHot(usize);
    impl Featurize for OneHot {
        fn dim(&self) -> usize {
            self.0
        }
        fn features(&self, s: usize) -> Vec<f64> {
            let mut v = vec![0.0; self.0];
            v[s] = 1.0;
            v
        }
    }

    fn t(state: usize, action: usize, reward: f64, next: usize, done: bool) -> Transition {
        Transition {
            state,
            action,
            reward,
            next_state: next,
            done,
        }
    }

    #[test]
    fn maze_features_are_two_hot() {
        let m = generate_maze(5, 7, Semantics::Standard, 0.3).unwrap();
        let f = MazeFeaturizer::new(&m);
        assert_eq!(f.dim(), 52);
        for s in 0..49 {
            let phi = f.features(s);
            assert_eq!(phi.iter().sum::<f64>(), 2.0);
            assert_eq!(phi[s], 1.0);
        }
    }

    #[test]
    fn wrong_batch_size_is_rejected() {
        let mut m = LinearQ::new(2, 2, 0.1, 3);
        let err = linearq_update(&mut m, &[t(0, 0, 1.0, 1, true)], &OneHot(2), 0.9);
        assert_eq!(err, Err(LearnerError::BatchSize { expected: 3, got: 1 }));
    }

    #[test]
    fn one_hot_update_matches_tabular_step() {
        // With one-hot features and B=1 the step is w += lr * δ.
        let mut m = LinearQ::new(2, 1, 0.5, 1);
        m.weights = vec![0.2, 1.0];
        linearq_update(&mut m, &[t(0, 0, 0.0, 1, false)], &OneHot(2), 0.9).unwrap();
        assert!((m.weights[0] - (0.2 + 0.5 * (0.9 - 0.2))).abs() < 1e-12);
        assert_eq!(m.weights[1], 1.0);
    }
}
