use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
    RmsProp { alpha: f64, eps: f64 },
}

/// First-order optimizer with per-parameter moment buffers.
///
/// The buffers are sized on the first step; later steps must present the same
/// total parameter count. Parameters may be passed as several slices (for
/// models split into trunk and heads), which are treated as one concatenated
/// vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn adam(lr: f64) -> Self {
        Self::new(
            OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            lr,
        )
    }

    /// RMSProp with α = 0.99, ε = 1e-8.
    pub fn rmsprop(lr: f64) -> Self {
        Self::new(OptimizerKind::RmsProp { alpha: 0.99, eps: 1e-8 }, lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn buffers(&self) -> (&[f64], &[f64]) {
        (&self.first, &self.second)
    }

    /// Restore state saved by a checkpoint.
    pub fn restore(&mut self, step: u64, first: Vec<f64>, second: Vec<f64>) -> Result<()> {
        if first.len() != second.len() {
            return Err(shape_err("optimizer buffers differ in length"));
        }
        self.step = step;
        self.first = first;
        self.second = second;
        Ok(())
    }

    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.step(&mut [params], &[grads])
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(shape_err(format!(
                "{} parameter groups but {} gradient groups",
                params.len(),
                grads.len()
            )));
        }
        let mut total = 0;
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(shape_err(format!(
                    "parameter group of {} with gradient of {}",
                    p.len(),
                    g.len()
                )));
            }
            total += p.len();
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("gradient".into()));
        }
        if self.first.is_empty() && total > 0 {
            self.first = vec![0.0; total];
            self.second = vec![0.0; total];
        } else if self.first.len() != total {
            return Err(shape_err(format!(
                "optimizer state tracks {} parameters, got {total}",
                self.first.len()
            )));
        }
        self.step += 1;
        let lr = self.lr;
        let t = self.step as f64;
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pi, &gi) in p.iter_mut().zip(g.iter()) {
                match self.kind {
                    OptimizerKind::Sgd => *pi -= lr * gi,
                    OptimizerKind::Adam { beta1, beta2, eps } => {
                        let m = &mut self.first[k];
                        let v = &mut self.second[k];
                        *m = beta1 * *m + (1.0 - beta1) * gi;
                        *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                        let m_hat = *m / (1.0 - beta1.powf(t));
                        let v_hat = *v / (1.0 - beta2.powf(t));
                        *pi -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                    OptimizerKind::RmsProp { alpha, eps } => {
                        let v = &mut self.second[k];
                        *v = alpha * *v + (1.0 - alpha) * gi * gi;
                        *pi -= lr * gi / (v.sqrt() + eps);
                    }
                }
                k += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_arithmetic() {
        let mut p = vec![1.0];
        Optimizer::sgd(0.1).step_flat(&mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_is_exact_noop() {
        let mut p = vec![0.123456789, -3.5];
        let before = p.clone();
        let mut opt = Optimizer::sgd(0.5);
        for _ in 0..10 {
            opt.step_flat(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        for g in [1e-3, 0.5, -7.0, 250.0] {
            let mut p = vec![0.0];
            Optimizer::adam(0.001).step_flat(&mut p, &[g]).unwrap();
            let expected = 0.001 * g.abs() / (g.abs() + 1e-8);
            assert!((p[0].abs() - expected).abs() < 1e-12, "g={g}: {}", p[0]);
            assert_eq!(p[0].signum(), -g.signum());
        }
    }

    #[test]
    fn rmsprop_converges_to_fixed_point_step() {
        // Squared-gradient EMA tends to g^2, so the step tends to lr*g/(|g|+eps).
        let (lr, g) = (0.01, 0.3);
        let mut opt = Optimizer::rmsprop(lr);
        let mut p = vec![0.0];
        let mut last_step = 0.0;
        for _ in 0..5000 {
            let before = p[0];
            opt.step_flat(&mut p, &[g]).unwrap();
            last_step = before - p[0];
        }
        let fixed = lr * g / (g + 1e-8);
        assert!((last_step - fixed).abs() < 1e-12, "{last_step} vs {fixed}");
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![1.0];
        let mut opt = Optimizer::adam(0.1);
        assert!(matches!(
            opt.step_flat(&mut p, &[f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(p, vec![1.0]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn step_count_increases_and_shape_is_fixed() {
        let mut opt = Optimizer::adam(0.1);
        let mut p = vec![1.0, 2.0];
        opt.step_flat(&mut p, &[0.1, 0.1]).unwrap();
        opt.step_flat(&mut p, &[0.1, 0.1]).unwrap();
        assert_eq!(opt.steps(), 2);
        let mut q = vec![1.0];
        assert!(opt.step_flat(&mut q, &[0.1]).is_err());
    }

    #[test]
    fn grouped_step_equals_flat_step() {
        let grads = [0.3, -0.1, 0.7, 0.05];
        let mut flat = vec![1.0, 2.0, 3.0, 4.0];
        let mut a = vec![1.0, 2.0];
        let mut b = vec![3.0, 4.0];
        let mut o1 = Optimizer::adam(0.01);
        let mut o2 = Optimizer::adam(0.01);
        for _ in 0..3 {
            o1.step_flat(&mut flat, &grads).unwrap();
            o2.step(&mut [&mut a, &mut b], &[&grads[..2], &grads[2..]]).unwrap();
        }
        assert_eq!(&flat[..2], &a[..]);
        assert_eq!(&flat[2..], &b[..]);
    }
}
