use super::loss::train_batch_mse;
use crate::error::{Error, Result};
use crate::nn::{Activation, MlpModel, Optimizer};
use crate::rng::{RngStream, Stream};
use crate::tensor::Tensor;

/// Member outputs and their across-member population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub member_means: Vec<Tensor>,
    pub variance: Tensor,
}

/// K independently initialized regressors trained on identical batches, each
/// with its own optimizer state.
#[derive(Debug, Clone)]
pub struct EnsemblePredictor {
    members: Vec<MlpModel>,
    optimizers: Vec<Optimizer>,
}

impl EnsemblePredictor {
    /// Member `i` is initialized from stream `Init(i)` of `seed`.
    pub fn new(
        k: usize,
        dims: &[usize],
        activations: &[Activation],
        optimizer: Optimizer,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one member".into()));
        }
        let members = (0..k)
            .map(|i| MlpModel::new(dims, activations, &mut RngStream::new(seed, Stream::Init(i as u32))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(members, optimizer)
    }

    pub fn from_members(members: Vec<MlpModel>, optimizer: Optimizer) -> Result<Self> {
        if let Some(first) = members.first() {
            if members
                .iter()
                .any(|m| m.in_dim() != first.in_dim() || m.out_dim() != first.out_dim())
            {
                return Err(Error::Shape("ensemble members differ in shape".into()));
            }
        }
        let optimizers = vec![optimizer; members.len()];
        Ok(Self { members, optimizers })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[MlpModel] {
        &self.members
    }

    pub fn stats(&self, input: &Tensor) -> Result<EnsembleStats> {
        let k = self.members.len();
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "ensemble variance needs at least 2 members, have {k}"
            )));
        }
        let member_means = self
            .members
            .iter()
            .map(|m| m.infer(input))
            .collect::<Result<Vec<_>>>()?;
        let n = member_means[0].len();
        let mut variance = vec![0.0; n];
        for (j, v) in variance.iter_mut().enumerate() {
            let mean = member_means.iter().map(|t| t.data()[j]).sum::<f64>() / k as f64;
            *v = member_means
                .iter()
                .map(|t| (t.data()[j] - mean).powi(2))
                .sum::<f64>()
                / k as f64;
        }
        let variance = Tensor::new(member_means[0].shape().to_vec(), variance)?;
        Ok(EnsembleStats {
            member_means,
            variance,
        })
    }

    /// Each member takes one MSE step on the same batch. Returns the pre-step
    /// losses in member order.
    pub fn train_batch(&mut self, input: &Tensor, target: &Tensor) -> Result<Vec<f64>> {
        self.members
            .iter_mut()
            .zip(self.optimizers.iter_mut())
            .map(|(m, opt)| train_batch_mse(m, input, target, opt))
            .collect()
    }
}

/// Free-function form of [`EnsemblePredictor::stats`].
pub fn ensemble_stats(model: &EnsemblePredictor, input: &Tensor) -> Result<EnsembleStats> {
    model.stats(input)
}
