use rand::Rng;
use rand_distr::StandardNormal;

use super::{ExperimentConfig, Method, RunOutput};
use crate::error::{Error, Result};
use crate::nn::{Activation, MlpModel, Optimizer};
use crate::predict::train_batch_mse;
use crate::rng::{RngStream, Stream};
use crate::tensor::Tensor;

/// `y = slope * x + intercept + sigma * xi`, `x ~ U[-1, 1]`, `xi ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTask {
    pub slope: f64,
    pub intercept: f64,
    pub sigma: f64,
}

impl LinearTask {
    pub fn mean(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn sample(&self, x: f64, rng: &mut RngStream) -> f64 {
        let xi: f64 = rng.sample(StandardNormal);
        self.mean(x) + self.sigma * xi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionSettings {
    pub models: usize,
    pub samples: usize,
    pub test_points: usize,
    pub hidden: Vec<usize>,
    /// Full-batch Adam steps per model; 0 leaves models untrained.
    pub train_steps: usize,
    pub lr: f64,
    /// Start every model from all-zero parameters.
    pub zero_init: bool,
    pub bootstrap: usize,
}

/// Monte-Carlo estimates averaged over test points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionEstimate {
    pub noise: f64,
    pub bias2: f64,
    pub variance: f64,
    pub total: f64,
    /// Mean over test points of `noise + bias2 + variance - total`.
    pub discrepancy: f64,
    /// Bootstrap standard error of `discrepancy` over test points.
    pub standard_error: f64,
}

/// Expected squared error split into noise, squared bias and variance across
/// models trained on independent datasets; the total is measured on fresh
/// held-out draws.
pub fn estimate_decomposition(
    task: &LinearTask,
    settings: &DecompositionSettings,
    rng: &mut RngStream,
) -> Result<DecompositionEstimate> {
    let s = settings;
    if s.models < 2 || s.test_points < 2 || s.samples == 0 {
        return Err(Error::InvalidArgument(
            "decomposition needs at least 2 models, 2 test points and 1 sample".into(),
        ));
    }
    let mut dims = vec![1];
    dims.extend(&s.hidden);
    dims.push(1);
    let mut acts = vec![Activation::Tanh; s.hidden.len()];
    acts.push(Activation::Identity);

    let test_x: Vec<f64> = (0..s.test_points).map(|_| rng.random_range(-1.0..1.0)).collect();
    let test = Tensor::matrix(s.test_points, 1, test_x.clone())?;
    let mut preds = Vec::with_capacity(s.models);
    for _ in 0..s.models {
        let mut model = MlpModel::new(&dims, &acts, rng)?;
        if s.zero_init {
            model.fill_params(0.0);
        }
        let xs: Vec<f64> = (0..s.samples).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| task.sample(x, rng)).collect();
        let input = Tensor::matrix(s.samples, 1, xs)?;
        let target = Tensor::matrix(s.samples, 1, ys)?;
        let mut opt = Optimizer::adam(s.lr);
        for _ in 0..s.train_steps {
            train_batch_mse(&mut model, &input, &target, &mut opt)?;
        }
        preds.push(model.infer(&test)?.into_data());
    }

    let m = s.models as f64;
    let noise = task.sigma * task.sigma;
    let mut per_point = Vec::with_capacity(s.test_points);
    let (mut bias2, mut variance, mut total) = (0.0, 0.0, 0.0);
    for (i, &x) in test_x.iter().enumerate() {
        let f = task.mean(x);
        let mean = preds.iter().map(|p| p[i]).sum::<f64>() / m;
        let b2 = (mean - f).powi(2);
        let var = preds.iter().map(|p| (p[i] - mean).powi(2)).sum::<f64>() / m;
        let tot = preds
            .iter()
            .map(|p| (task.sample(x, rng) - p[i]).powi(2))
            .sum::<f64>()
            / m;
        bias2 += b2;
        variance += var;
        total += tot;
        per_point.push(noise + b2 + var - tot);
    }
    let n = s.test_points as f64;
    let discrepancy = per_point.iter().sum::<f64>() / n;
    let mut boots = Vec::with_capacity(s.bootstrap);
    for _ in 0..s.bootstrap {
        let mean = (0..s.test_points)
            .map(|_| per_point[rng.random_range(0..s.test_points)])
            .sum::<f64>()
            / n;
        boots.push(mean);
    }
    let standard_error = if boots.len() < 2 {
        0.0
    } else {
        let bm = boots.iter().sum::<f64>() / boots.len() as f64;
        (boots.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt()
    };
    Ok(DecompositionEstimate {
        noise,
        bias2: bias2 / n,
        variance: variance / n,
        total: total / n,
        discrepancy,
        standard_error,
    })
}

/// Decomposition on the linear task `y = 2x - 0.5 + sigma * xi`. Method
/// `none` uses untrained all-zero models.
pub fn run_decomposition(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let task = LinearTask {
        slope: 2.0,
        intercept: -0.5,
        sigma: cfg.noise_sigma,
    };
    let trained = cfg.method != Method::None;
    let settings = DecompositionSettings {
        models: cfg.models,
        samples: cfg.samples,
        test_points: cfg.test_points,
        hidden: cfg.predictor_hidden(),
        train_steps: if trained { cfg.train_steps } else { 0 },
        lr: cfg.predictor_lr(),
        zero_init: !trained,
        bootstrap: cfg.bootstrap,
    };
    let est = estimate_decomposition(&task, &settings, &mut RngStream::new(seed, Stream::Data))?;
    let mut out = RunOutput::new(cfg.run_id(seed), seed);
    for (name, v) in [
        ("noise", est.noise),
        ("bias2", est.bias2),
        ("variance", est.variance),
        ("total", est.total),
        ("discrepancy", est.discrepancy),
        ("standard_error", est.standard_error),
    ] {
        out.log.push(0, name, v);
        out.summary.insert(name.into(), v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> DecompositionSettings {
        DecompositionSettings {
            models: 20,
            samples: 20,
            test_points: 200,
            hidden: vec![],
            train_steps: 300,
            lr: 0.05,
            zero_init: false,
            bootstrap: 500,
        }
    }

    #[test]
    fn noiseless_task_has_no_noise_term() {
        let task = LinearTask {
            slope: 1.5,
            intercept: 0.2,
            sigma: 0.0,
        };
        let s = DecompositionSettings {
            samples: 200,
            train_steps: 1500,
            ..settings()
        };
        let e = estimate_decomposition(&task, &s, &mut RngStream::from_seed(1)).unwrap();
        assert_eq!(e.noise, 0.0);
        assert!((e.total - (e.bias2 + e.variance)).abs() < 1e-12, "{e:?}");
        assert!(e.total < 1e-4, "{e:?}");
    }

    #[test]
    fn zero_models_on_pure_noise() {
        // Constant models agree exactly, so the variance term vanishes and the
        // total is the noise level up to sampling error (sd of the mean of
        // 4000 squared normals is sigma^2 * sqrt(2 / 4000)).
        let task = LinearTask {
            slope: 0.0,
            intercept: 0.0,
            sigma: 0.5,
        };
        let s = DecompositionSettings {
            train_steps: 0,
            zero_init: true,
            ..settings()
        };
        let e = estimate_decomposition(&task, &s, &mut RngStream::from_seed(2)).unwrap();
        assert_eq!(e.variance, 0.0);
        assert_eq!(e.bias2, 0.0);
        assert!((e.total - 0.25).abs() < 3.0 * 0.25 * (2.0f64 / 4000.0).sqrt(), "{e:?}");
    }

    #[test]
    fn terms_sum_to_total_within_bootstrap_error() {
        let task = LinearTask {
            slope: 2.0,
            intercept: -0.5,
            sigma: 0.5,
        };
        let e = estimate_decomposition(&task, &settings(), &mut RngStream::from_seed(3)).unwrap();
        assert!(e.variance > 0.0 && e.standard_error > 0.0);
        assert!(e.discrepancy.abs() <= 3.0 * e.standard_error, "{e:?}");
    }

    #[test]
    fn rejects_single_model() {
        let task = LinearTask {
            slope: 1.0,
            intercept: 0.0,
            sigma: 0.1,
        };
        let s = DecompositionSettings {
            models: 1,
            ..settings()
        };
        assert!(estimate_decomposition(&task, &s, &mut RngStream::from_seed(0)).is_err());
    }
}
