use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Sample-average action values with epsilon-greedy selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditValues {
    pub values: Vec<f64>,
    pub counts: Vec<u64>,
    pub epsilon: f64,
}

impl BanditValues {
    pub fn new(arms: usize, epsilon: f64) -> Result<Self> {
        if arms == 0 || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("{arms} arms with epsilon {epsilon}")));
        }
        Ok(Self {
            values: vec![0.0; arms],
            counts: vec![0; arms],
            epsilon,
        })
    }

    /// Highest value, lowest index on ties.
    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn select(&self, rng: &mut RngStream) -> usize {
        let explore: f64 = rng.random();
        if explore < self.epsilon {
            rng.random_range(0..self.values.len())
        } else {
            self.greedy()
        }
    }

    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        if arm >= self.values.len() {
            return Err(Error::InvalidArgument(format!("arm {arm} of {}", self.values.len())));
        }
        if !reward.is_finite() {
            return Err(Error::NonFinite("bandit reward".into()));
        }
        self.counts[arm] += 1;
        self.values[arm] += (reward - self.values[arm]) / self.counts[arm] as f64;
        Ok(())
    }
}

pub fn bandit_select(b: &BanditValues, rng: &mut RngStream) -> usize {
    b.select(rng)
}

pub fn bandit_update(mut b: BanditValues, arm: usize, reward: f64) -> Result<BanditValues> {
    b.update(arm, reward)?;
    Ok(b)
}
