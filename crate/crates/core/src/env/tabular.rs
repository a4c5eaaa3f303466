//! Finite MDPs and exact policy evaluation.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `P[s][a][s']`, flattened.
    pub transitions: Vec<f64>,
    /// `R[s][a][s']`, flattened.
    pub rewards: Vec<f64>,
    /// Terminal states are absorbing and have value 0.
    pub terminal: Vec<bool>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn zeros(n_states: usize, n_actions: usize, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("gamma {gamma} outside [0, 1)")));
        }
        let len = n_states * n_actions * n_states;
        Ok(Self {
            n_states,
            n_actions,
            transitions: vec![0.0; len],
            rewards: vec![0.0; len],
            terminal: vec![false; n_states],
            gamma,
        })
    }

    fn at(&self, s: usize, a: usize, to: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + to
    }

    pub fn set(&mut self, s: usize, a: usize, to: usize, prob: f64, reward: f64) {
        let i = self.at(s, a, to);
        self.transitions[i] += prob;
        self.rewards[i] = reward;
    }

    pub fn prob(&self, s: usize, a: usize, to: usize) -> f64 {
        self.transitions[self.at(s, a, to)]
    }

    pub fn reward(&self, s: usize, a: usize, to: usize) -> f64 {
        self.rewards[self.at(s, a, to)]
    }

    pub fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row: f64 = (0..self.n_states).map(|to| self.prob(s, a, to)).sum();
                if (row - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "P[{s}][{a}] sums to {row}"
                    )));
                }
            }
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("reward tensor".into()));
        }
        Ok(())
    }

    /// Policy-averaged reward and transition matrix with terminal rows zeroed.
    pub fn policy_matrices(&self, policy: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        check_policy(self, policy)?;
        let n = self.n_states;
        let mut r = DVector::zeros(n);
        let mut p = DMatrix::zeros(n, n);
        for s in (0..n).filter(|&s| !self.terminal[s]) {
            for (a, &pa) in policy[s].iter().enumerate() {
                for to in 0..n {
                    let pr = self.prob(s, a, to);
                    r[s] += pa * pr * self.reward(s, a, to);
                    p[(s, to)] += pa * pr;
                }
            }
        }
        for s in (0..n).filter(|&s| self.terminal[s]) {
            for row in 0..n {
                p[(row, s)] = 0.0;
            }
        }
        Ok((r, p))
    }
}

fn check_policy(mdp: &TabularMdp, policy: &[Vec<f64>]) -> Result<()> {
    if policy.len() != mdp.n_states {
        return Err(Error::Shape(format!(
            "policy has {} rows for {} states",
            policy.len(),
            mdp.n_states
        )));
    }
    for (s, row) in policy.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.len() != mdp.n_actions || row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "policy row {s} is not a distribution over {} actions",
                mdp.n_actions
            )));
        }
    }
    Ok(())
}

/// Solves `V = R_pi + gamma * P_pi * V` with terminal values pinned to 0.
pub fn exact_policy_value(mdp: &TabularMdp, policy: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (r, p) = mdp.policy_matrices(policy)?;
    let n = mdp.n_states;
    let a = DMatrix::identity(n, n) - p * mdp.gamma;
    let v = a
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::InvalidArgument("singular Bellman system".into()))?;
    Ok(v.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: iterative policy evaluation straight from the tensors.
    fn value_iteration(mdp: &TabularMdp, policy: &[Vec<f64>], sweeps: usize) -> Vec<f64> {
        let n = mdp.n_states;
        let mut v = vec![0.0; n];
        for _ in 0..sweeps {
            let mut next = vec![0.0; n];
            for s in 0..n {
                if mdp.terminal[s] {
                    continue;
                }
                for a in 0..mdp.n_actions {
                    for to in 0..n {
                        let cont = if mdp.terminal[to] { 0.0 } else { v[to] };
                        next[s] += policy[s][a]
                            * mdp.prob(s, a, to)
                            * (mdp.reward(s, a, to) + mdp.gamma * cont);
                    }
                }
            }
            v = next;
        }
        v
    }

    fn bellman_residual(mdp: &TabularMdp, policy: &[Vec<f64>], v: &[f64]) -> f64 {
        let (r, p) = mdp.policy_matrices(policy).unwrap();
        let vv = DVector::from_column_slice(v);
        let rhs = r + p * vv * mdp.gamma;
        (0..v.len()).map(|s| (v[s] - rhs[s]).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn self_loop_geometric_series() {
        let mut mdp = TabularMdp::zeros(1, 1, 0.9).unwrap();
        mdp.set(0, 0, 0, 1.0, 1.0);
        let v = exact_policy_value(&mdp, &[vec![1.0]]).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-12);
    }

    fn four_state_chain(gamma: f64) -> TabularMdp {
        let mut mdp = TabularMdp::zeros(4, 2, gamma).unwrap();
        mdp.terminal[3] = true;
        for s in 0..3 {
            mdp.set(s, 0, s.saturating_sub(1), 0.7, -0.1);
            mdp.set(s, 0, s, 0.3, 0.2);
            mdp.set(s, 1, s + 1, 0.8, if s + 1 == 3 { 1.0 } else { -0.1 });
            mdp.set(s, 1, s, 0.2, 0.05);
        }
        mdp.set(3, 0, 3, 1.0, 0.0);
        mdp.set(3, 1, 3, 1.0, 0.0);
        mdp.validate().unwrap();
        mdp
    }

    #[test]
    fn zero_gamma_is_expected_immediate_reward() {
        let mdp = four_state_chain(0.0);
        let pi = vec![vec![0.25, 0.75]; 4];
        let v = exact_policy_value(&mdp, &pi).unwrap();
        for s in 0..3 {
            let expect: f64 = (0..2)
                .map(|a| {
                    pi[s][a] * (0..4).map(|to| mdp.prob(s, a, to) * mdp.reward(s, a, to)).sum::<f64>()
                })
                .sum();
            assert!((v[s] - expect).abs() < 1e-12);
        }
        assert_eq!(v[3], 0.0);
    }

    #[test]
    fn matches_value_iteration_oracle() {
        let mdp = four_state_chain(0.9);
        let pi = vec![vec![0.3, 0.7], vec![0.5, 0.5], vec![0.1, 0.9], vec![0.5, 0.5]];
        let exact = exact_policy_value(&mdp, &pi).unwrap();
        let oracle = value_iteration(&mdp, &pi, 10_000);
        assert!(bellman_residual(&mdp, &pi, &oracle) < 1e-10);
        for (a, b) in exact.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{exact:?} vs {oracle:?}");
        }
        assert!(bellman_residual(&mdp, &pi, &exact) < 1e-8);
    }

    #[test]
    fn non_stochastic_policy_rejected() {
        let mdp = four_state_chain(0.9);
        let pi = vec![vec![0.3, 0.6]; 4];
        assert!(exact_policy_value(&mdp, &pi).is_err());
    }
}
