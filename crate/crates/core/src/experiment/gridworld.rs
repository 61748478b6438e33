use std::collections::HashSet;

use super::{ExperimentConfig, Method, RunOutput};
use crate::agent::{a2c_update, select_action, A2cConfig, ActorCritic, RolloutBuffer};
use crate::env::{Action, GridConfig, GridWorld, StateKey, MAX_OBS_VALUE};
use crate::error::Result;
use crate::nn::{Activation, Optimizer};
use crate::predict::{DualHeadPredictor, LossKind, PredictorConfig};
use crate::reward::{mix_rewards, prediction_errors, raw_intrinsic_rewards, RewardConfig, RewardShaper};
use crate::rng::{RngStream, Stream};
use crate::tensor::Tensor;

pub fn grid_config(cfg: &ExperimentConfig) -> GridConfig {
    GridConfig {
        rooms: cfg.rooms,
        view: cfg.view,
        noisy_tv: cfg.noisy_tv,
        max_steps: cfg.max_steps,
    }
}

pub fn a2c_config(cfg: &ExperimentConfig) -> A2cConfig {
    A2cConfig {
        gamma: cfg.gamma,
        gae_lambda: cfg.gae_lambda,
        entropy_coef: cfg.entropy_coef,
        value_coef: cfg.value_coef,
        max_grad_norm: cfg.max_grad_norm,
        lr: cfg.policy_lr,
        rms_alpha: cfg.rms_alpha,
        rms_eps: cfg.rms_eps,
        actors: cfg.actors,
        unroll: cfg.unroll,
    }
}

/// Observation bytes scaled into `[0, 1]` for the networks.
pub fn scale_observation(obs: &[u8], out: &mut Vec<f64>) {
    let s = 1.0 / f64::from(MAX_OBS_VALUE);
    out.extend(obs.iter().map(|&v| f64::from(v) * s));
}

struct Curiosity {
    model: DualHeadPredictor,
    /// Factor from network-scaled observations back to the values the
    /// predictor models.
    value_scale: f64,
    opt: Optimizer,
    loss: LossKind,
    shaper: RewardShaper,
}

impl Curiosity {
    /// Shaped intrinsic rewards for a rollout, then one training step on it.
    fn rewards_then_train(&mut self, obs: &Tensor, actions: &[usize], next: &Tensor) -> Result<(Vec<f64>, f64)> {
        let k = self.value_scale;
        let (obs, next) = (&obs.map(|v| v * k), &next.map(|v| v * k));
        let raw = if self.model.is_dual() {
            raw_intrinsic_rewards(next, &self.model.predict_dual(obs, Some(actions))?, self.shaper.config.eta)?
        } else {
            prediction_errors(next, &self.model.predict_mean(obs, Some(actions))?)?
        };
        let raw_mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let shaped = raw.into_iter().map(|r| self.shaper.shape(r)).collect();
        self.model.train_batch(obs, Some(actions), next, &mut self.opt, self.loss)?;
        Ok((shaped, raw_mean))
    }
}

#[derive(Default)]
struct Window {
    episodes: usize,
    returns: f64,
    intrinsic: f64,
    updates: usize,
    done_actions: usize,
    actions: usize,
    entropy: f64,
}

/// A2C on the multi-room gridworld with mixed intrinsic and extrinsic
/// reward. Logs the cumulative number of distinct hidden states visited.
pub fn run_gridworld(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let gcfg = grid_config(cfg);
    let a2c = a2c_config(cfg);
    a2c.validate()?;
    let n = a2c.actors;
    let mut envs = (0..n)
        .map(|i| GridWorld::for_actor(gcfg.clone(), seed, i as u32))
        .collect::<Result<Vec<_>>>()?;
    let obs_dim = gcfg.obs_len();
    let actions_n = Action::COUNT;
    let mut ac = ActorCritic::new(
        obs_dim,
        &cfg.policy_hidden,
        actions_n,
        &mut RngStream::new(seed, Stream::Init(0)),
    )?;
    let mut policy_opt = a2c.optimizer();
    let mut curiosity = match cfg.method {
        Method::None => None,
        method => {
            let dual = method == Method::Ama;
            let pcfg = PredictorConfig {
                state_dim: obs_dim,
                num_actions: actions_n,
                hidden: cfg.predictor_hidden(),
                activation: Activation::LeakyRelu,
                dual,
                state_skip: false,
            };
            Some(Curiosity {
                model: DualHeadPredictor::new(pcfg, &mut RngStream::new(seed, Stream::Init(1)))?,
                value_scale: cfg.prediction_scale,
                opt: Optimizer::adam(cfg.predictor_lr()),
                loss: if dual {
                    LossKind::Heteroscedastic { lambda: cfg.lambda() }
                } else {
                    LossKind::Mse
                },
                shaper: RewardShaper::new(RewardConfig {
                    eta: if dual { cfg.eta } else { 0.0 },
                    beta: cfg.beta,
                    clip_below_zero: cfg.clip(),
                    normalize: cfg.normalize(),
                    reward_scaling: cfg.reward_scaling,
                })?,
            })
        }
    };
    let mut policy_rng = RngStream::new(seed, Stream::Policy);

    let mut current: Vec<Vec<u8>> = envs.iter_mut().map(|e| e.reset()).collect();
    let mut visited: HashSet<StateKey> = envs.iter().map(|e| e.state_key()).collect();
    let mut returns = vec![0.0; n];
    let mut out = RunOutput::new(cfg.run_id(seed), seed);
    let mut window = Window::default();
    let (mut total_done, mut total_actions, mut total_episodes, mut total_return) = (0usize, 0usize, 0usize, 0.0);
    let mut frames = 0u64;
    let mut next_log = if cfg.log_every > 0 { cfg.log_every } else { u64::MAX };

    let mut obs_buf = Vec::with_capacity(n * obs_dim);
    let mut next_buf = Vec::with_capacity(a2c.unroll * n * obs_dim);
    while frames < cfg.budget {
        let mut buffer = RolloutBuffer::new(n, a2c.unroll, obs_dim);
        next_buf.clear();
        for _ in 0..a2c.unroll {
            obs_buf.clear();
            for o in &current {
                scale_observation(o, &mut obs_buf);
            }
            let obs = Tensor::matrix(n, obs_dim, obs_buf.clone())?;
            let sample = select_action(&ac, &obs, &mut policy_rng)?;
            let mut ext = vec![0.0; n];
            let mut dones = vec![false; n];
            for (i, env) in envs.iter_mut().enumerate() {
                let action = Action::from_index(sample.actions[i])?;
                if action == Action::Done {
                    window.done_actions += 1;
                    total_done += 1;
                }
                let o = env.step(action);
                visited.insert(env.state_key());
                scale_observation(&o.observation, &mut next_buf);
                ext[i] = o.reward;
                dones[i] = o.terminal;
                returns[i] += o.reward;
                if o.terminal {
                    window.episodes += 1;
                    window.returns += returns[i];
                    total_episodes += 1;
                    total_return += returns[i];
                    returns[i] = 0.0;
                    current[i] = env.reset();
                    visited.insert(env.state_key());
                } else {
                    current[i] = o.observation;
                }
            }
            window.actions += n;
            total_actions += n;
            buffer.push_step(&obs_buf, &sample.actions, &ext, &sample.values, &dones, &sample.log_probs)?;
        }
        frames += (n * a2c.unroll) as u64;

        if let Some(c) = curiosity.as_mut() {
            let obs = buffer.observations()?;
            let next = Tensor::matrix(buffer.len(), obs_dim, next_buf.clone())?;
            let (shaped, raw_mean) = c.rewards_then_train(&obs, &buffer.actions, &next)?;
            for (r, ri) in buffer.rewards.iter_mut().zip(shaped) {
                *r = mix_rewards(ri, *r, cfg.beta);
            }
            window.intrinsic += raw_mean;
        }
        obs_buf.clear();
        for o in &current {
            scale_observation(o, &mut obs_buf);
        }
        let (_, bootstrap) = ac.evaluate(&Tensor::matrix(n, obs_dim, obs_buf.clone())?)?;
        let stats = a2c_update(&mut ac, &buffer, &bootstrap, &mut policy_opt, &a2c)?;
        window.entropy += stats.entropy;
        window.updates += 1;

        if frames >= next_log || frames >= cfg.budget {
            while next_log <= frames {
                next_log = next_log.saturating_add(cfg.log_every.max(1));
            }
            let u = window.updates.max(1) as f64;
            out.log.push(frames, "unique_states", visited.len() as f64);
            out.log.push(frames, "episodes", window.episodes as f64);
            out.log.push(
                frames,
                "extrinsic_return",
                if window.episodes > 0 { window.returns / window.episodes as f64 } else { 0.0 },
            );
            out.log.push(frames, "intrinsic_reward", window.intrinsic / u);
            out.log.push(frames, "done_fraction", window.done_actions as f64 / window.actions.max(1) as f64);
            out.log.push(frames, "entropy", window.entropy / u);
            window = Window::default();
        }
    }
    out.summary.insert("unique_states".into(), visited.len() as f64);
    out.summary.insert("frames".into(), frames as f64);
    out.summary.insert("episodes".into(), total_episodes as f64);
    out.summary.insert("extrinsic_return_total".into(), total_return);
    out.summary
        .insert("done_fraction".into(), total_done as f64 / total_actions.max(1) as f64);
    Ok(out)
}
