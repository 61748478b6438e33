//! Central finite-difference gradient verification.

use super::MlpModel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A scalar loss over a flat parameter vector with an analytic gradient.
pub trait GradCheck {
    fn params_mut(&mut self) -> &mut [f64];
    fn loss(&mut self) -> Result<f64>;
    fn gradient(&mut self) -> Result<Vec<f64>>;
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Maximum relative error between the analytic gradient and central
/// differences `(L(p + eps) - L(p - eps)) / 2 eps` over every parameter.
pub fn check_gradients<G: GradCheck + ?Sized>(target: &mut G, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let analytic = target.gradient()?;
    let n = target.params_mut().len();
    if analytic.len() != n {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {n} parameters",
            analytic.len()
        )));
    }
    let mut numeric = vec![0.0; n];
    for i in 0..n {
        let orig = target.params_mut()[i];
        target.params_mut()[i] = orig + eps;
        let up = target.loss()?;
        target.params_mut()[i] = orig - eps;
        let down = target.loss()?;
        target.params_mut()[i] = orig;
        numeric[i] = (up - down) / (2.0 * eps);
    }
    Ok(max_relative_error(&analytic, &numeric))
}

struct ModelLoss<'a, F> {
    model: &'a mut MlpModel,
    input: &'a Tensor,
    loss_fn: F,
}

impl<F: Fn(&Tensor) -> (f64, Tensor)> GradCheck for ModelLoss<'_, F> {
    fn params_mut(&mut self) -> &mut [f64] {
        self.model.params_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        let y = self.model.infer(self.input)?;
        Ok((self.loss_fn)(&y).0)
    }

    fn gradient(&mut self) -> Result<Vec<f64>> {
        let y = self.model.forward(self.input)?;
        let (_, dy) = (self.loss_fn)(&y);
        Ok(self.model.backward(&dy)?.params)
    }
}

/// Gradient check of `loss_fn(model(input))`. `loss_fn` returns the loss and
/// its gradient with respect to the model output.
pub fn finite_diff_check<F>(model: &mut MlpModel, loss_fn: F, input: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    check_gradients(
        &mut ModelLoss {
            model,
            input,
            loss_fn,
        },
        eps,
    )
}
