use rand::Rng;
use rand_distr::StandardNormal;

use crate::agent::{A2cConfig, A2cLossCheck, ActorCritic};
use crate::error::Result;
use crate::nn::{check_gradients, finite_diff_check, Activation, MlpModel};
use crate::predict::{DualHeadPredictor, HeteroLossCheck, PredictorConfig};
use crate::rng::{RngStream, Stream};
use crate::tensor::Tensor;

pub const GRADCHECK_EPS: f64 = 1e-6;
/// The heteroscedastic loss is a mean over batch x D entries, so individual
/// gradients are small and a 1e-6 step loses them to rounding in the loss.
pub const HETERO_GRADCHECK_EPS: f64 = 1e-4;
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckResult {
    pub name: String,
    pub max_relative_error: f64,
}

impl GradCheckResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADCHECK_TOL
    }
}

fn normal_tensor(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

/// Heteroscedastic loss of an action-conditioned dual-head predictor over
/// trunk, mean head and log-variance head.
pub fn hetero_gradcheck(lambda: f64, dim: usize, batch: usize, seed: u64) -> Result<f64> {
    let mut init = RngStream::new(seed, Stream::Init(0));
    let mut data = RngStream::new(seed, Stream::Data);
    let num_actions = 3;
    let model = DualHeadPredictor::new(
        PredictorConfig {
            state_dim: dim,
            num_actions,
            hidden: vec![16],
            activation: Activation::Tanh,
            dual: true,
            state_skip: true,
        },
        &mut init,
    )?;
    let states = normal_tensor(batch, dim, &mut data);
    let targets = normal_tensor(batch, dim, &mut data);
    let actions = (0..batch).map(|_| data.random_range(0..num_actions)).collect();
    let mut check = HeteroLossCheck::new(model, states, Some(actions), targets, lambda);
    check_gradients(&mut check, HETERO_GRADCHECK_EPS)
}

/// Squared-error loss through a two-layer MLP with the given hidden activation.
pub fn mlp_gradcheck(activation: Activation, seed: u64) -> Result<f64> {
    let mut init = RngStream::new(seed, Stream::Init(0));
    let mut data = RngStream::new(seed, Stream::Data);
    let mut model = MlpModel::new(&[5, 8, 3], &[activation, Activation::Identity], &mut init)?;
    let input = normal_tensor(4, 5, &mut data);
    let target = normal_tensor(4, 3, &mut data);
    finite_diff_check(
        &mut model,
        |y: &Tensor| {
            let d: Vec<f64> = y.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
            let l = 0.5 * d.iter().map(|v| v * v).sum::<f64>();
            (l, Tensor::new(y.shape().to_vec(), d).expect("shape"))
        },
        &input,
        GRADCHECK_EPS,
    )
}

/// Full actor-critic loss (policy, entropy and value terms).
pub fn a2c_gradcheck(seed: u64) -> Result<f64> {
    let mut init = RngStream::new(seed, Stream::Init(0));
    let mut data = RngStream::new(seed, Stream::Data);
    let (n, obs_dim, actions) = (6, 10, 7);
    let ac = ActorCritic::new(obs_dim, &[16, 16], actions, &mut init)?;
    let obs = normal_tensor(n, obs_dim, &mut data);
    let acts = (0..n).map(|_| data.random_range(0..actions)).collect();
    let adv = (0..n).map(|_| data.random_range(-2.0..2.0)).collect();
    let ret = (0..n).map(|_| data.random_range(-2.0..2.0)).collect();
    let mut check = A2cLossCheck::new(ac, obs, acts, adv, ret, A2cConfig::default());
    check_gradients(&mut check, GRADCHECK_EPS)
}

/// Every finite-difference check the library ships with.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheckResult>> {
    let mut out = Vec::new();
    for act in [Activation::Relu, Activation::LeakyRelu, Activation::Tanh, Activation::Identity] {
        out.push(GradCheckResult {
            name: format!("mlp/{act:?}").to_lowercase(),
            max_relative_error: mlp_gradcheck(act, seed)?,
        });
    }
    for lambda in [0.1, 1.0] {
        for dim in [4, 64] {
            for batch in [1, 32] {
                out.push(GradCheckResult {
                    name: format!("hetero/lambda={lambda}/d={dim}/batch={batch}"),
                    max_relative_error: hetero_gradcheck(lambda, dim, batch, seed)?,
                });
            }
        }
    }
    out.push(GradCheckResult {
        name: "a2c".into(),
        max_relative_error: a2c_gradcheck(seed)?,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for r in (0..3).flat_map(|s| gradcheck_suite(s).unwrap()) {
            assert!(r.passed(), "{} {:e}", r.name, r.max_relative_error);
        }
    }
}
