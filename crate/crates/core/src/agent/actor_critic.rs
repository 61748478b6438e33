use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, MlpModel};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Shared tanh trunk with a policy-logit head and a scalar value head.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub(crate) trunk: MlpModel,
    pub(crate) policy: MlpModel,
    pub(crate) value: MlpModel,
}

/// Per-row sampled actions with their log-probabilities and values.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], actions: usize, rng: &mut R) -> Result<Self> {
        if hidden.is_empty() || actions == 0 {
            return Err(Error::InvalidArgument("actor-critic needs a hidden layer and actions".into()));
        }
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        let h = *hidden.last().unwrap();
        Ok(Self {
            trunk: MlpModel::new(&dims, &vec![Activation::Tanh; hidden.len()], rng)?,
            policy: MlpModel::new(&[h, actions], &[Activation::Identity], rng)?,
            value: MlpModel::new(&[h, 1], &[Activation::Identity], rng)?,
        })
    }

    pub fn from_models(trunk: MlpModel, policy: MlpModel, value: MlpModel) -> Result<Self> {
        if policy.in_dim() != trunk.out_dim() || value.in_dim() != trunk.out_dim() || value.out_dim() != 1 {
            return Err(Error::Shape("actor-critic heads do not fit the trunk".into()));
        }
        Ok(Self { trunk, policy, value })
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.policy.out_dim()
    }

    /// `[trunk, policy, value]`.
    pub fn models(&self) -> [&MlpModel; 3] {
        [&self.trunk, &self.policy, &self.value]
    }

    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.trunk.params_mut(), self.policy.params_mut(), self.value.params_mut()]
    }

    pub fn param_count(&self) -> usize {
        self.models().iter().map(|m| m.param_count()).sum()
    }

    /// Logits and values without caching.
    pub fn evaluate(&self, obs: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let h = self.trunk.infer(obs)?;
        let logits = self.policy.infer(&h)?;
        let values = self.value.infer(&h)?.into_data();
        Ok((logits, values))
    }

    pub(crate) fn forward(&mut self, obs: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let h = self.trunk.forward(obs)?;
        let logits = self.policy.forward(&h)?;
        let values = self.value.forward(&h)?.into_data();
        Ok((logits, values))
    }

    /// Parameter gradients `[trunk, policy, value]` for the last `forward`.
    pub(crate) fn backward(&self, logit_grad: &Tensor, value_grad: &Tensor) -> Result<Vec<Vec<f64>>> {
        let gp = self.policy.backward(logit_grad)?;
        let gv = self.value.backward(value_grad)?;
        let mut gh = gp.input;
        for (a, b) in gh.data_mut().iter_mut().zip(gv.input.data()) {
            *a += b;
        }
        let gt = self.trunk.backward(&gh)?;
        Ok(vec![gt.params, gp.params, gv.params])
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Samples one action per observation row from `softmax(logits)`.
pub fn select_action(ac: &ActorCritic, obs: &Tensor, rng: &mut RngStream) -> Result<ActionSample> {
    let (logits, values) = ac.evaluate(obs)?;
    logits.ensure_finite("policy logits")?;
    let mut out = ActionSample {
        actions: Vec::with_capacity(values.len()),
        log_probs: Vec::with_capacity(values.len()),
        values,
    };
    for row in logits.rows() {
        let logp = log_softmax(row);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut a = row.len() - 1;
        for (k, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                a = k;
                break;
            }
        }
        out.actions.push(a);
        out.log_probs.push(logp[a]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let z = [0.3, -1.2, 4.0, 2.2, 0.0, -7.0, 1.5];
        let p = softmax(&z);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in log_softmax(&z).iter().zip(&p) {
            assert!((a.exp() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_logits_are_uniform() {
        for p in softmax(&[2.0; 7]) {
            assert!((p - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    fn fixed_logit_model(logits: &[f64]) -> ActorCritic {
        // Zero trunk output feeds only the policy bias.
        let trunk = MlpModel::from_layers(vec![(vec![vec![0.0]], vec![0.0], Activation::Tanh)]).unwrap();
        let policy = MlpModel::from_layers(vec![(
            logits.iter().map(|_| vec![0.0]).collect(),
            logits.to_vec(),
            Activation::Identity,
        )])
        .unwrap();
        let value = MlpModel::from_layers(vec![(vec![vec![0.0]], vec![0.5], Activation::Identity)]).unwrap();
        ActorCritic::from_models(trunk, policy, value).unwrap()
    }

    #[test]
    fn saturated_logit_dominates() {
        let mut z = [-20.0; 7];
        z[3] = 20.0;
        let ac = fixed_logit_model(&z);
        assert!(softmax(&z)[3] > 0.9999);
        let obs = Tensor::zeros(vec![1000, 1]);
        let s = select_action(&ac, &obs, &mut RngStream::from_seed(1)).unwrap();
        assert!(s.actions.iter().all(|&a| a == 3));
        assert!(s.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn uniform_sampling_frequencies() {
        // Binomial sd of a 1/7 frequency over 70k draws is 0.00132; 3 sd < 0.005.
        let ac = fixed_logit_model(&[0.0; 7]);
        let obs = Tensor::zeros(vec![70_000, 1]);
        let s = select_action(&ac, &obs, &mut RngStream::from_seed(2)).unwrap();
        let mut counts = [0usize; 7];
        for &a in &s.actions {
            counts[a] += 1;
        }
        for c in counts {
            assert!((c as f64 / 70_000.0 - 1.0 / 7.0).abs() < 0.005, "{counts:?}");
        }
        assert!(s.log_probs.iter().all(|lp| (lp + 7f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn non_finite_logits_rejected() {
        let trunk = MlpModel::from_layers(vec![(vec![vec![0.0]], vec![1.0], Activation::Tanh)]).unwrap();
        let policy =
            MlpModel::from_layers(vec![(vec![vec![1e308], vec![0.0]], vec![1.5e308, 0.0], Activation::Identity)])
                .unwrap();
        let value = MlpModel::from_layers(vec![(vec![vec![0.0]], vec![0.0], Activation::Identity)]).unwrap();
        let ac = ActorCritic::from_models(trunk, policy, value).unwrap();
        assert!(select_action(&ac, &Tensor::zeros(vec![1, 1]), &mut RngStream::from_seed(0)).is_err());
    }
}
