use serde::{Deserialize, Serialize};

use super::DualPrediction;
use crate::error::{Error, Result};
use crate::nn::{MlpModel, Optimizer};
use crate::tensor::Tensor;

/// Uncertainty budget `lambda` (weight of the log-variance penalty in the
/// loss) and uncertainty weighting `eta` (weight of the predicted variance in
/// the intrinsic reward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeteroHyper {
    pub lambda: f64,
    pub eta: f64,
}

impl HeteroHyper {
    pub fn new(lambda: f64, eta: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(eta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda and eta must be nonnegative, got {lambda} and {eta}"
            )));
        }
        Ok(Self { lambda, eta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Heteroscedastic { lambda: f64 },
}

/// Mean over batch and dimensions of
/// `0.5 * exp(-s) * (target - mean)^2 + 0.5 * lambda * s`, `s` the predicted
/// log-variance.
pub fn heteroscedastic_loss(pred: &DualPrediction, target: &Tensor, lambda: f64) -> Result<f64> {
    Ok(heteroscedastic_loss_grad(pred, target, lambda)?.0)
}

/// Loss plus its gradients with respect to the mean and log-variance.
pub fn heteroscedastic_loss_grad(
    pred: &DualPrediction,
    target: &Tensor,
    lambda: f64,
) -> Result<(f64, Tensor, Tensor)> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    pred.mean.same_shape(target, "heteroscedastic loss target")?;
    pred.mean.same_shape(&pred.log_variance, "heteroscedastic loss prediction")?;
    target.ensure_finite("loss target")?;
    pred.mean.ensure_finite("predicted mean")?;
    pred.log_variance.ensure_finite("predicted log-variance")?;

    let n = target.len() as f64;
    let mut loss = 0.0;
    let mut g_mean = Vec::with_capacity(target.len());
    let mut g_logvar = Vec::with_capacity(target.len());
    for ((&t, &m), &s) in target
        .data()
        .iter()
        .zip(pred.mean.data())
        .zip(pred.log_variance.data())
    {
        let precision = (-s).exp();
        let d = t - m;
        loss += 0.5 * precision * d * d + 0.5 * lambda * s;
        g_mean.push(-precision * d / n);
        g_logvar.push((-0.5 * precision * d * d + 0.5 * lambda) / n);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("heteroscedastic loss".into()));
    }
    let shape = target.shape().to_vec();
    Ok((
        loss,
        Tensor::new(shape.clone(), g_mean)?,
        Tensor::new(shape, g_logvar)?,
    ))
}

/// Mean over batch and dimensions of the squared error.
pub fn mse_loss(pred_mean: &Tensor, target: &Tensor) -> Result<f64> {
    Ok(mse_loss_grad(pred_mean, target)?.0)
}

pub fn mse_loss_grad(pred_mean: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred_mean.same_shape(target, "mse target")?;
    let n = target.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(target.len());
    for (&m, &t) in pred_mean.data().iter().zip(target.data()) {
        let d = m - t;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("mse loss".into()));
    }
    Ok((loss, Tensor::new(target.shape().to_vec(), grad)?))
}

/// One optimizer step of a plain regression model on the MSE loss. Returns the
/// pre-step loss.
pub fn train_batch_mse(
    model: &mut MlpModel,
    input: &Tensor,
    target: &Tensor,
    opt: &mut Optimizer,
) -> Result<f64> {
    if input.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let out = model.forward(input)?;
    let (loss, grad) = mse_loss_grad(&out, target)?;
    let grads = model.backward(&grad)?;
    opt.step_flat(model.params_mut(), &grads.params)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    fn pred(mean: Vec<f64>, logvar: Vec<f64>) -> DualPrediction {
        let n = mean.len();
        DualPrediction {
            mean: Tensor::new(vec![1, n], mean).unwrap(),
            log_variance: Tensor::new(vec![1, n], logvar).unwrap(),
        }
    }

    #[test]
    fn perfect_prediction_unit_variance_is_zero() {
        let p = pred(vec![0.5, -1.0], vec![0.0, 0.0]);
        let t = Tensor::row(vec![0.5, -1.0]);
        assert_eq!(heteroscedastic_loss(&p, &t, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_squared_error_gives_half() {
        let p = pred(vec![0.0, 0.0], vec![0.0, 0.0]);
        let t = Tensor::row(vec![1.0, -1.0]);
        assert!((heteroscedastic_loss(&p, &t, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mse_examples() {
        let a = Tensor::row(vec![0.2, 0.4]);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let z = Tensor::row(vec![0.0, 0.0]);
        let o = Tensor::row(vec![1.0, 1.0]);
        assert_eq!(mse_loss(&z, &o).unwrap(), 1.0);
    }

    #[test]
    fn unit_variance_loss_is_half_mse() {
        let mut rng = RngStream::from_seed(9);
        for lambda in [0.0, 0.1, 1.0, 3.7] {
            let m: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = pred(m.clone(), vec![0.0; 5]);
            let t = Tensor::row(t);
            let h = heteroscedastic_loss(&p, &t, lambda).unwrap();
            let mse = mse_loss(&p.mean, &t).unwrap();
            assert_eq!(h, 0.5 * mse);
        }
    }

    #[test]
    fn stationary_point_of_log_variance() {
        // d/ds [0.5 e^-s e2 + 0.5 lambda s] = 0 at s = ln(e2 / lambda).
        for (e2, lambda) in [(1.0f64, 1.0f64), (4.0, 0.5), (0.25, 2.0)] {
            let s = (e2 / lambda).ln();
            let p = pred(vec![0.0], vec![s]);
            let t = Tensor::row(vec![e2.sqrt()]);
            let (_, _, gs) = heteroscedastic_loss_grad(&p, &t, lambda).unwrap();
            assert!(gs.data()[0].abs() < 1e-15);
            // Strict convexity: the gradient changes sign around the optimum.
            let lo = heteroscedastic_loss_grad(&pred(vec![0.0], vec![s - 0.1]), &t, lambda).unwrap();
            let hi = heteroscedastic_loss_grad(&pred(vec![0.0], vec![s + 0.1]), &t, lambda).unwrap();
            assert!(lo.2.data()[0] < 0.0 && hi.2.data()[0] > 0.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = pred(vec![0.0], vec![0.0]);
        assert!(heteroscedastic_loss(&p, &Tensor::row(vec![f64::NAN]), 1.0).is_err());
        assert!(heteroscedastic_loss(&p, &Tensor::row(vec![1.0, 2.0]), 1.0).is_err());
        assert!(heteroscedastic_loss(&p, &Tensor::row(vec![1.0]), -1.0).is_err());
        assert!(HeteroHyper::new(-0.1, 1.0).is_err());
    }
}
