use serde::{Deserialize, Serialize};

use super::actor_critic::{log_softmax, ActorCritic};
use crate::error::{Error, Result};
use crate::nn::{global_norm, GradCheck, Optimizer};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct A2cConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub lr: f64,
    pub rms_alpha: f64,
    pub rms_eps: f64,
    pub actors: usize,
    pub unroll: usize,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            lr: 0.001,
            rms_alpha: 0.99,
            rms_eps: 1e-8,
            actors: 16,
            unroll: 5,
        }
    }
}

impl A2cConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.gae_lambda) || !unit(self.rms_alpha) {
            return Err(Error::Config("gamma, gae_lambda and rms_alpha must lie in [0, 1]".into()));
        }
        if self.actors == 0 || self.unroll == 0 {
            return Err(Error::Config("actors and unroll must be positive".into()));
        }
        if !(self.max_grad_norm > 0.0) || !(self.lr >= 0.0) {
            return Err(Error::Config("max_grad_norm must be positive and lr nonnegative".into()));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> Optimizer {
        Optimizer::new(
            crate::nn::OptimizerKind::RmsProp {
                alpha: self.rms_alpha,
                eps: self.rms_eps,
            },
            self.lr,
        )
    }
}

/// Generalized advantage estimates and returns for one actor's trajectory.
/// `dones[t]` marks an episode ending after step `t`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape(format!(
            "gae inputs of lengths {n}, {}, {}",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// One unroll of `T` steps from `N` actors, stored step-major (`t * N + i`).
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    actors: usize,
    unroll: usize,
    obs_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub log_probs: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(actors: usize, unroll: usize, obs_dim: usize) -> Self {
        let n = actors * unroll;
        Self {
            actors,
            unroll,
            obs_dim,
            obs: Vec::with_capacity(n * obs_dim),
            actions: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
        }
    }

    pub fn actors(&self) -> usize {
        self.actors
    }

    pub fn unroll(&self) -> usize {
        self.unroll
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.actors * self.unroll
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
        self.log_probs.clear();
    }

    /// Appends one step for every actor.
    #[allow(clippy::too_many_arguments)]
    pub fn push_step(
        &mut self,
        obs: &[f64],
        actions: &[usize],
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        log_probs: &[f64],
    ) -> Result<()> {
        let n = self.actors;
        if self.is_full() {
            return Err(Error::InvalidArgument("rollout buffer is full".into()));
        }
        if obs.len() != n * self.obs_dim
            || [actions.len(), rewards.len(), values.len(), dones.len(), log_probs.len()]
                .iter()
                .any(|&l| l != n)
        {
            return Err(Error::Shape(format!("rollout step does not cover {n} actors")));
        }
        self.obs.extend_from_slice(obs);
        self.actions.extend_from_slice(actions);
        self.rewards.extend_from_slice(rewards);
        self.values.extend_from_slice(values);
        self.dones.extend_from_slice(dones);
        self.log_probs.extend_from_slice(log_probs);
        Ok(())
    }

    pub fn observations(&self) -> Result<Tensor> {
        Tensor::matrix(self.len(), self.obs_dim, self.obs.clone())
    }

    /// Advantages and returns in buffer order, one GAE pass per actor.
    pub fn advantages(&self, bootstrap: &[f64], gamma: f64, lam: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.is_full() || bootstrap.len() != self.actors {
            return Err(Error::Shape("advantages need a full buffer and one bootstrap per actor".into()));
        }
        let n = self.actors;
        let mut adv = vec![0.0; self.len()];
        let mut ret = vec![0.0; self.len()];
        for i in 0..n {
            let pick = |v: &[f64]| (0..self.unroll).map(|t| v[t * n + i]).collect::<Vec<_>>();
            let dones: Vec<bool> = (0..self.unroll).map(|t| self.dones[t * n + i]).collect();
            let (a, r) = gae(&pick(&self.rewards), &pick(&self.values), &dones, bootstrap[i], gamma, lam)?;
            for t in 0..self.unroll {
                adv[t * n + i] = a[t];
                ret[t * n + i] = r[t];
            }
        }
        Ok((adv, ret))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// `policy - c_e * entropy + c_v * mean((R - V)^2)` and its gradients
/// `[trunk, policy, value]`.
pub fn a2c_loss_and_grads(
    ac: &mut ActorCritic,
    obs: &Tensor,
    actions: &[usize],
    advantages: &[f64],
    returns: &[f64],
    cfg: &A2cConfig,
) -> Result<(A2cStats, Vec<Vec<f64>>)> {
    let (logits, values) = ac.forward(obs)?;
    let n = values.len();
    if actions.len() != n || advantages.len() != n || returns.len() != n {
        return Err(Error::Shape(format!("a2c batch of {n} with mismatched targets")));
    }
    let k = logits.width();
    let inv = 1.0 / n as f64;
    let mut policy_loss = 0.0;
    let mut entropy = 0.0;
    let mut value_loss = 0.0;
    let mut logit_grad = vec![0.0; n * k];
    let mut value_grad = vec![0.0; n];
    for (b, row) in logits.rows().enumerate() {
        let a = actions[b];
        if a >= k {
            return Err(Error::InvalidArgument(format!("action {a} of {k}")));
        }
        let logp = log_softmax(row);
        let h: f64 = -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>();
        policy_loss -= advantages[b] * logp[a] * inv;
        entropy += h * inv;
        let err = values[b] - returns[b];
        value_loss += err * err * inv;
        let g = &mut logit_grad[b * k..(b + 1) * k];
        for (j, gj) in g.iter_mut().enumerate() {
            let p = logp[j].exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            *gj = -advantages[b] * (onehot - p) * inv + cfg.entropy_coef * p * (logp[j] + h) * inv;
        }
        value_grad[b] = cfg.value_coef * 2.0 * err * inv;
    }
    let loss = policy_loss - cfg.entropy_coef * entropy + cfg.value_coef * value_loss;
    if !loss.is_finite() {
        return Err(Error::NonFinite("a2c loss".into()));
    }
    let grads = ac.backward(&Tensor::matrix(n, k, logit_grad)?, &Tensor::matrix(n, 1, value_grad)?)?;
    let grad_norm = global_norm(&grads.iter().map(Vec::as_slice).collect::<Vec<_>>());
    Ok((
        A2cStats {
            policy_loss,
            value_loss,
            entropy,
            loss,
            grad_norm,
        },
        grads,
    ))
}

/// Scales gradients in place so their global norm is at most `max_norm`.
pub(crate) fn clip_global_norm(grads: &mut [Vec<f64>], norm: f64, max_norm: f64) {
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

/// One synchronous actor-critic update from a full buffer.
pub fn a2c_update(
    ac: &mut ActorCritic,
    buffer: &RolloutBuffer,
    bootstrap: &[f64],
    optimizer: &mut Optimizer,
    cfg: &A2cConfig,
) -> Result<A2cStats> {
    let (adv, ret) = buffer.advantages(bootstrap, cfg.gamma, cfg.gae_lambda)?;
    let obs = buffer.observations()?;
    let (stats, mut grads) = a2c_loss_and_grads(ac, &obs, &buffer.actions, &adv, &ret, cfg)?;
    clip_global_norm(&mut grads, stats.grad_norm, cfg.max_grad_norm);
    let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
    optimizer.step(&mut ac.param_groups_mut(), &refs)?;
    Ok(stats)
}

/// Actor-critic loss as a function of all network parameters, for
/// finite-difference checks.
pub struct A2cLossCheck {
    pub ac: ActorCritic,
    obs: Tensor,
    actions: Vec<usize>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
    cfg: A2cConfig,
    flat: Vec<f64>,
}

impl A2cLossCheck {
    pub fn new(
        ac: ActorCritic,
        obs: Tensor,
        actions: Vec<usize>,
        advantages: Vec<f64>,
        returns: Vec<f64>,
        cfg: A2cConfig,
    ) -> Self {
        let flat = ac.models().iter().flat_map(|m| m.params().to_vec()).collect();
        Self {
            ac,
            obs,
            actions,
            advantages,
            returns,
            cfg,
            flat,
        }
    }

    fn sync(&mut self) {
        let mut off = 0;
        for g in self.ac.param_groups_mut() {
            g.copy_from_slice(&self.flat[off..off + g.len()]);
            off += g.len();
        }
    }

    fn eval(&mut self) -> Result<(A2cStats, Vec<Vec<f64>>)> {
        self.sync();
        a2c_loss_and_grads(&mut self.ac, &self.obs, &self.actions, &self.advantages, &self.returns, &self.cfg)
    }
}

impl GradCheck for A2cLossCheck {
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    fn loss(&mut self) -> Result<f64> {
        Ok(self.eval()?.0.loss)
    }

    fn gradient(&mut self) -> Result<Vec<f64>> {
        Ok(self.eval()?.1.concat())
    }
}
