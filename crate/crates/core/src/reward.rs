//! Intrinsic reward from forward predictions, reward mixing, and running
//! normalization.
//!
//! The per-transition reward is
//! `r_i = (1/D) * sum_j [(s'_j - mean_j)^2 - eta * var_j]`, followed in order by
//! optional clipping at zero, multiplication by a scale factor, and optional
//! division by the running standard deviation of the rewards emitted so far.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::DualPrediction;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub eta: f64,
    pub beta: f64,
    pub clip_below_zero: bool,
    pub normalize: bool,
    pub reward_scaling: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            beta: 1.0,
            clip_below_zero: false,
            normalize: false,
            reward_scaling: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !(self.beta >= 0.0) || !(self.reward_scaling > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "reward config needs eta >= 0, beta >= 0, scaling > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Welford running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Sample variance; 0 with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// `r / std`, or `r` unchanged while the std is undefined or below 1e-8.
    pub fn normalize(&self, r: f64) -> f64 {
        let std = self.std();
        if self.count < 2 || std < 1e-8 {
            r
        } else {
            r / std
        }
    }
}

pub fn welford_update(mut m: RunningMoments, x: f64) -> RunningMoments {
    m.update(x);
    m
}

pub fn normalize_reward(m: &RunningMoments, r: f64) -> f64 {
    m.normalize(r)
}

/// `beta * r_i + r_e`.
pub fn mix_rewards(intrinsic: f64, extrinsic: f64, beta: f64) -> f64 {
    beta * intrinsic + extrinsic
}

/// Unshaped intrinsic reward of every batch row.
pub fn raw_intrinsic_rewards(next_state: &Tensor, pred: &DualPrediction, eta: f64) -> Result<Vec<f64>> {
    let next = next_state.clone().flatten_batch();
    next.same_shape(&pred.mean, "intrinsic reward mean")?;
    next.same_shape(&pred.log_variance, "intrinsic reward log-variance")?;
    pred.mean.ensure_finite("predicted mean")?;
    pred.log_variance.ensure_finite("predicted log-variance")?;
    let d = next.width() as f64;
    let rewards: Vec<f64> = next
        .rows()
        .zip(pred.mean.rows())
        .zip(pred.log_variance.rows())
        .map(|((s, m), lv)| {
            s.iter()
                .zip(m)
                .zip(lv)
                .map(|((s, m), lv)| (s - m) * (s - m) - eta * lv.exp())
                .sum::<f64>()
                / d
        })
        .collect();
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("intrinsic reward".into()));
    }
    Ok(rewards)
}

/// Mean squared prediction error of every batch row (curiosity without a
/// variance estimate).
pub fn prediction_errors(next_state: &Tensor, pred_mean: &Tensor) -> Result<Vec<f64>> {
    let next = next_state.clone().flatten_batch();
    next.same_shape(pred_mean, "prediction error")?;
    let d = next.width() as f64;
    Ok(next
        .rows()
        .zip(pred_mean.rows())
        .map(|(s, m)| s.iter().zip(m).map(|(s, m)| (s - m) * (s - m)).sum::<f64>() / d)
        .collect())
}

/// Applies clipping, scaling and normalization to a stream of raw rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardShaper {
    pub config: RewardConfig,
    pub moments: RunningMoments,
}

impl RewardShaper {
    pub fn new(config: RewardConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            moments: RunningMoments::new(),
        })
    }

    pub fn shape(&mut self, raw: f64) -> f64 {
        let mut r = raw;
        if self.config.clip_below_zero {
            r = r.max(0.0);
        }
        r *= self.config.reward_scaling;
        if self.config.normalize {
            self.moments.update(r);
            r = self.moments.normalize(r);
        }
        r
    }
}

/// Shaped intrinsic reward of a single transition.
pub fn intrinsic_reward(next_state: &Tensor, pred: &DualPrediction, shaper: &mut RewardShaper) -> Result<f64> {
    if next_state.batch() != 1 {
        return Err(Error::Shape(format!(
            "expected a single transition, got batch {}",
            next_state.batch()
        )));
    }
    let raw = raw_intrinsic_rewards(next_state, pred, shaper.config.eta)?[0];
    Ok(shaper.shape(raw))
}
