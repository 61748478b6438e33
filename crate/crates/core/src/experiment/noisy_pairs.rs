use super::{ExperimentConfig, Method, RunOutput};
use crate::env::{load_idx, load_idx_labels, NoisyPairsTask};
use crate::error::Result;
use crate::nn::{Activation, Optimizer};
use crate::predict::{DualHeadPredictor, LossKind, PredictorConfig};
use crate::reward::{prediction_errors, raw_intrinsic_rewards};
use crate::rng::{RngStream, Stream};

/// Batches averaged for the end-of-run summary.
pub const SUMMARY_WINDOW: u64 = 1000;

pub fn build_task(cfg: &ExperimentConfig) -> Result<NoisyPairsTask> {
    match (&cfg.idx_images, &cfg.idx_labels) {
        (Some(images), Some(labels)) => {
            NoisyPairsTask::from_idx(&load_idx(images)?, &load_idx_labels(labels)?, cfg.flip_rate)
        }
        _ => NoisyPairsTask::synthetic(cfg.flip_rate),
    }
}

#[derive(Default, Clone, Copy)]
struct Window {
    det: f64,
    det_n: usize,
    stoch: f64,
    stoch_n: usize,
    loss: f64,
    batches: usize,
}

impl Window {
    fn add(&mut self, rewards: &[f64], stochastic: &[bool], loss: f64) {
        for (&r, &s) in rewards.iter().zip(stochastic) {
            if s {
                self.stoch += r;
                self.stoch_n += 1;
            } else {
                self.det += r;
                self.det_n += 1;
            }
        }
        self.loss += loss;
        self.batches += 1;
    }

    fn det_mean(&self) -> f64 {
        self.det / self.det_n.max(1) as f64
    }

    fn stoch_mean(&self) -> f64 {
        self.stoch / self.stoch_n.max(1) as f64
    }
}

/// Online training of a forward model on the noisy-pairs task. Logs the
/// pre-update intrinsic reward of deterministic and stochastic transitions.
pub fn run_noisy_pairs(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let task = build_task(cfg)?;
    let dual = cfg.method == Method::Ama;
    let pcfg = PredictorConfig {
        state_dim: task.dim(),
        num_actions: 0,
        hidden: cfg.predictor_hidden(),
        activation: Activation::LeakyRelu,
        dual,
        state_skip: true,
    };
    let mut model = DualHeadPredictor::new(pcfg, &mut RngStream::new(seed, Stream::Init(0)))?;
    let mut opt = Optimizer::adam(cfg.predictor_lr());
    let loss = if dual {
        LossKind::Heteroscedastic { lambda: cfg.lambda() }
    } else {
        LossKind::Mse
    };
    let mut data = RngStream::new(seed, Stream::Data);
    let mut out = RunOutput::new(cfg.run_id(seed), seed);
    let mut window = Window::default();
    let mut tail = Window::default();
    let tail_start = cfg.budget.saturating_sub(SUMMARY_WINDOW);
    for step in 0..cfg.budget {
        let batch = task.sample_batch(cfg.batch_size(), &mut data);
        let rewards = if dual {
            raw_intrinsic_rewards(&batch.y, &model.predict_dual(&batch.x, None)?, cfg.eta)?
        } else {
            prediction_errors(&batch.y, &model.predict_mean(&batch.x, None)?)?
        };
        let l = model.train_batch(&batch.x, None, &batch.y, &mut opt, loss)?;
        window.add(&rewards, &batch.stochastic, l);
        if step >= tail_start {
            tail.add(&rewards, &batch.stochastic, l);
        }
        let done = step + 1;
        if (cfg.log_every > 0 && done % cfg.log_every == 0) || done == cfg.budget {
            out.log.push(done, "reward_deterministic", window.det_mean());
            out.log.push(done, "reward_stochastic", window.stoch_mean());
            out.log.push(done, "loss", window.loss / window.batches as f64);
            window = Window::default();
        }
    }
    out.summary.insert("reward_deterministic".into(), tail.det_mean());
    out.summary.insert("reward_stochastic".into(), tail.stoch_mean());
    out.summary.insert("loss".into(), tail.loss / tail.batches.max(1) as f64);
    Ok(out)
}
