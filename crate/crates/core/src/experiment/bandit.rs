use super::{ExperimentConfig, Method, RunOutput};
use crate::agent::BanditValues;
use crate::env::{CorridorBandit, Zone};
use crate::error::Result;
use crate::nn::{Activation, Optimizer};
use crate::predict::{DualHeadPredictor, EnsemblePredictor, LossKind, PredictorConfig};
use crate::reward::raw_intrinsic_rewards;
use crate::rng::{RngStream, Stream};
use crate::tensor::Tensor;

enum Model {
    Aleatoric(DualHeadPredictor, Optimizer),
    Epistemic(EnsemblePredictor),
}

impl Model {
    /// Mean predicted uncertainty over `probes`: `exp(log-variance)` for the
    /// dual-head model, across-member variance for the ensemble.
    fn uncertainty(&self, probes: &Tensor) -> Result<f64> {
        Ok(match self {
            Model::Aleatoric(p, _) => p.predict_dual(probes, None)?.variance().mean(),
            Model::Epistemic(e) => e.stats(probes)?.variance.mean(),
        })
    }
}

/// Evenly spaced cell midpoints covering a zone.
pub fn zone_probes(env: &CorridorBandit, zone: Zone, n: usize) -> Tensor {
    let (lo, hi) = env.zone_range(zone);
    let xs = (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect();
    Tensor::matrix(n, 1, xs).expect("probe shape")
}

/// Epsilon-greedy bandit maximizing intrinsic reward over corridor arms. Logs
/// the mean predicted uncertainty of each zone after every pull.
pub fn run_bandit(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let env = CorridorBandit::new(cfg.arms, cfg.zone_a_arms, cfg.frequency)?;
    let hidden = cfg.predictor_hidden();
    let mut model = match cfg.method {
        Method::Ama => {
            let pcfg = PredictorConfig {
                state_dim: 1,
                num_actions: 0,
                hidden,
                activation: Activation::LeakyRelu,
                dual: true,
                state_skip: false,
            };
            let p = DualHeadPredictor::new(pcfg, &mut RngStream::new(seed, Stream::Init(0)))?;
            Model::Aleatoric(p, Optimizer::adam(cfg.predictor_lr()))
        }
        _ => {
            let mut dims = vec![1];
            dims.extend(&hidden);
            dims.push(1);
            let mut acts = vec![Activation::Tanh; hidden.len()];
            acts.push(Activation::Identity);
            Model::Epistemic(EnsemblePredictor::new(
                cfg.ensemble_size,
                &dims,
                &acts,
                Optimizer::adam(cfg.predictor_lr()),
                seed,
            )?)
        }
    };
    let probes_a = zone_probes(&env, Zone::A, cfg.probes);
    let probes_b = zone_probes(&env, Zone::B, cfg.probes);
    let mut values = BanditValues::new(env.arms(), cfg.epsilon)?;
    let mut explore = RngStream::new(seed, Stream::Bandit);
    let mut data = RngStream::new(seed, Stream::Data);
    let mut out = RunOutput::new(cfg.run_id(seed), seed);

    let (a0, b0) = (model.uncertainty(&probes_a)?, model.uncertainty(&probes_b)?);
    out.log.push(0, "uncertainty_zone_a", a0);
    out.log.push(0, "uncertainty_zone_b", b0);
    let tail_start = cfg.budget - cfg.budget / 10;
    let (mut tail_a, mut tail_b, mut tail_n) = (0.0, 0.0, 0usize);
    let mut zone_a_pulls = 0u64;
    for pull in 1..=cfg.budget {
        let arm = values.select(&mut explore);
        let (xs, ys) = env.pull_arm(arm, cfg.batch_size(), &mut data)?;
        let n = xs.len();
        let x = Tensor::matrix(n, 1, xs)?;
        let y = Tensor::matrix(n, 1, ys)?;
        let reward = match &mut model {
            Model::Aleatoric(p, opt) => {
                let r = raw_intrinsic_rewards(&y, &p.predict_dual(&x, None)?, cfg.eta)?;
                p.train_batch(&x, None, &y, opt, LossKind::Heteroscedastic { lambda: cfg.lambda() })?;
                r.iter().sum::<f64>() / n as f64
            }
            Model::Epistemic(e) => {
                let r = e.stats(&x)?.variance.mean();
                e.train_batch(&x, &y)?;
                r
            }
        };
        values.update(arm, reward)?;
        if env.zone(arm) == Zone::A {
            zone_a_pulls += 1;
        }
        let (ua, ub) = (model.uncertainty(&probes_a)?, model.uncertainty(&probes_b)?);
        if pull > tail_start {
            tail_a += ua;
            tail_b += ub;
            tail_n += 1;
        }
        if (cfg.log_every > 0 && pull % cfg.log_every == 0) || pull == cfg.budget {
            out.log.push(pull, "uncertainty_zone_a", ua);
            out.log.push(pull, "uncertainty_zone_b", ub);
            out.log.push(pull, "arm", arm as f64);
            out.log.push(pull, "intrinsic_reward", reward);
        }
    }
    let tail_n = tail_n.max(1) as f64;
    out.summary.insert("initial_zone_a".into(), a0);
    out.summary.insert("initial_zone_b".into(), b0);
    out.summary.insert("final_zone_a".into(), tail_a / tail_n);
    out.summary.insert("final_zone_b".into(), tail_b / tail_n);
    out.summary
        .insert("zone_a_pull_fraction".into(), zone_a_pulls as f64 / cfg.budget.max(1) as f64);
    Ok(out)
}
