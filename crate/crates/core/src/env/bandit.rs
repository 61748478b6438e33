//! One-dimensional corridor split into arms. Arms in zone A return a
//! deterministic sinusoid of the sampled position; arms in zone B return
//! standard normal noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Zone {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorridorBandit {
    arms: usize,
    zone_a_arms: usize,
    frequency: f64,
}

impl Default for CorridorBandit {
    /// 10 arms over `[0, 1]`; arms 0-4 follow `sin(2*pi*3*x)`, arms 5-9 are noise.
    fn default() -> Self {
        Self {
            arms: 10,
            zone_a_arms: 5,
            frequency: 3.0,
        }
    }
}

impl CorridorBandit {
    pub fn new(arms: usize, zone_a_arms: usize, frequency: f64) -> Result<Self> {
        if arms == 0 || zone_a_arms > arms {
            return Err(Error::InvalidArgument(format!(
                "{zone_a_arms} zone-A arms out of {arms}"
            )));
        }
        Ok(Self {
            arms,
            zone_a_arms,
            frequency,
        })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn interval(&self, arm: usize) -> (f64, f64) {
        let w = 1.0 / self.arms as f64;
        (arm as f64 * w, (arm + 1) as f64 * w)
    }

    pub fn zone(&self, arm: usize) -> Zone {
        if arm < self.zone_a_arms {
            Zone::A
        } else {
            Zone::B
        }
    }

    /// Input range `[lo, hi)` covered by a zone.
    pub fn zone_range(&self, zone: Zone) -> (f64, f64) {
        let split = self.zone_a_arms as f64 / self.arms as f64;
        match zone {
            Zone::A => (0.0, split),
            Zone::B => (split, 1.0),
        }
    }

    pub fn zone_a_target(&self, x: f64) -> f64 {
        (2.0 * std::f64::consts::PI * self.frequency * x).sin()
    }

    /// `batch` inputs uniform within the arm's interval with their targets.
    pub fn pull_arm(&self, arm: usize, batch: usize, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
        if arm >= self.arms {
            return Err(Error::InvalidArgument(format!("arm {arm} of {}", self.arms)));
        }
        let (lo, hi) = self.interval(arm);
        let zone = self.zone(arm);
        let mut xs = Vec::with_capacity(batch);
        let mut ys = Vec::with_capacity(batch);
        for _ in 0..batch {
            let x = rng.random_range(lo..hi);
            let y = match zone {
                Zone::A => self.zone_a_target(x),
                Zone::B => rng.sample(StandardNormal),
            };
            xs.push(x);
            ys.push(y);
        }
        Ok((xs, ys))
    }
}
