use serde::{Deserialize, Serialize};

use super::loss::{heteroscedastic_loss, heteroscedastic_loss_grad, mse_loss_grad, LossKind};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Activation, GradCheck, MlpModel, Optimizer};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Predicted log-variances are clamped to `[-B, B]` before use.
pub const LOG_VARIANCE_BOUND: f64 = 10.0;

/// Predicted next-state mean and per-dimension log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPrediction {
    pub mean: Tensor,
    pub log_variance: Tensor,
}

impl DualPrediction {
    pub fn variance(&self) -> Tensor {
        self.log_variance.map(f64::exp)
    }

    /// Prediction for batch row `i` as a `[1, D]` pair.
    pub fn row(&self, i: usize) -> DualPrediction {
        DualPrediction {
            mean: Tensor::row(self.mean.row_slice(i).to_vec()),
            log_variance: Tensor::row(self.log_variance.row_slice(i).to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub state_dim: usize,
    /// Size of the discrete action space; 0 for action-free prediction.
    pub num_actions: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Build the log-variance head. Without it the model is a plain MSE
    /// forward model.
    pub dual: bool,
    /// Add the input state to the predicted mean.
    pub state_skip: bool,
}

#[derive(Debug, Clone)]
struct Cache {
    batch: usize,
    /// 1.0 where the raw log-variance was inside the clamp range.
    clamp_mask: Vec<f64>,
}

/// Forward model `(state, action) -> (mean, log-variance)` with a shared
/// feature trunk and two linear heads.
#[derive(Debug, Clone)]
pub struct DualHeadPredictor {
    config: PredictorConfig,
    trunk: MlpModel,
    mean_head: MlpModel,
    variance_head: Option<MlpModel>,
    cache: Option<Cache>,
}

impl DualHeadPredictor {
    pub fn new(config: PredictorConfig, rng: &mut RngStream) -> Result<Self> {
        if config.hidden.is_empty() || config.state_dim == 0 {
            return Err(Error::InvalidArgument(
                "predictor needs a nonzero state width and at least one hidden layer".into(),
            ));
        }
        let mut dims = vec![config.state_dim + config.num_actions];
        dims.extend(&config.hidden);
        let acts = vec![config.activation; config.hidden.len()];
        let trunk = MlpModel::new(&dims, &acts, rng)?;
        let feat = *dims.last().unwrap();
        let mean_head = MlpModel::new(&[feat, config.state_dim], &[Activation::Identity], rng)?;
        let variance_head = if config.dual {
            Some(MlpModel::new(&[feat, config.state_dim], &[Activation::Identity], rng)?)
        } else {
            None
        };
        Self::from_models(config, trunk, mean_head, variance_head)
    }

    pub fn from_models(
        config: PredictorConfig,
        trunk: MlpModel,
        mean_head: MlpModel,
        variance_head: Option<MlpModel>,
    ) -> Result<Self> {
        if trunk.in_dim() != config.state_dim + config.num_actions {
            return Err(shape_err(format!(
                "trunk input {} != state {} + actions {}",
                trunk.in_dim(),
                config.state_dim,
                config.num_actions
            )));
        }
        let heads = std::iter::once(&mean_head).chain(variance_head.as_ref());
        for h in heads {
            if h.in_dim() != trunk.out_dim() || h.out_dim() != config.state_dim {
                return Err(shape_err(format!(
                    "head {} -> {} does not fit trunk width {} and state width {}",
                    h.in_dim(),
                    h.out_dim(),
                    trunk.out_dim(),
                    config.state_dim
                )));
            }
        }
        if config.dual != variance_head.is_some() {
            return Err(Error::InvalidArgument("variance head presence disagrees with config".into()));
        }
        Ok(Self {
            config,
            trunk,
            mean_head,
            variance_head,
            cache: None,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn trunk(&self) -> &MlpModel {
        &self.trunk
    }

    pub fn mean_head(&self) -> &MlpModel {
        &self.mean_head
    }

    pub fn variance_head(&self) -> Option<&MlpModel> {
        self.variance_head.as_ref()
    }

    pub fn is_dual(&self) -> bool {
        self.variance_head.is_some()
    }

    /// Trunk, mean head and (if present) variance head.
    pub fn models(&self) -> Vec<&MlpModel> {
        let mut v = vec![&self.trunk, &self.mean_head];
        v.extend(self.variance_head.as_ref());
        v
    }

    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        self.cache = None;
        let mut v = vec![self.trunk.params_mut(), self.mean_head.params_mut()];
        if let Some(h) = self.variance_head.as_mut() {
            v.push(h.params_mut());
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.models().iter().map(|m| m.param_count()).sum()
    }

    /// Network input: the flattened state with the one-hot action appended.
    pub fn encode(&self, states: &Tensor, actions: Option<&[usize]>) -> Result<Tensor> {
        let d = self.config.state_dim;
        if states.width() != d || states.is_empty() {
            return Err(shape_err(format!(
                "predictor expects state width {d}, got shape {:?}",
                states.shape()
            )));
        }
        let states = states.clone().flatten_batch();
        let na = self.config.num_actions;
        match (na, actions) {
            (0, None) => Ok(states),
            (0, Some(_)) => Err(Error::InvalidArgument("predictor takes no actions".into())),
            (_, None) => Err(Error::InvalidArgument("predictor requires actions".into())),
            (_, Some(acts)) => {
                if acts.len() != states.batch() {
                    return Err(shape_err(format!(
                        "{} actions for batch of {}",
                        acts.len(),
                        states.batch()
                    )));
                }
                let mut data = Vec::with_capacity(states.batch() * (d + na));
                for (row, &a) in states.rows().zip(acts) {
                    if a >= na {
                        return Err(Error::InvalidArgument(format!(
                            "action {a} outside action space of {na}"
                        )));
                    }
                    data.extend_from_slice(row);
                    data.extend((0..na).map(|k| if k == a { 1.0 } else { 0.0 }));
                }
                Tensor::matrix(states.batch(), d + na, data)
            }
        }
    }

    fn add_skip(&self, mean: &mut Tensor, states: &Tensor) {
        if self.config.state_skip {
            for (m, s) in mean.data_mut().iter_mut().zip(states.data()) {
                *m += s;
            }
        }
    }

    fn clamp(raw: Tensor) -> (Tensor, Vec<f64>) {
        let b = LOG_VARIANCE_BOUND;
        let mask = raw
            .data()
            .iter()
            .map(|&v| if (-b..=b).contains(&v) { 1.0 } else { 0.0 })
            .collect();
        (raw.map(|v| v.clamp(-b, b)), mask)
    }

    /// Predicted mean only; available for both dual and mean-only models.
    pub fn predict_mean(&self, states: &Tensor, actions: Option<&[usize]>) -> Result<Tensor> {
        let x = self.encode(states, actions)?;
        let h = self.trunk.infer(&x)?;
        let mut mean = self.mean_head.infer(&h)?;
        self.add_skip(&mut mean, states);
        Ok(mean)
    }

    /// Mean and clamped log-variance for a batch of states.
    pub fn predict_dual(&self, states: &Tensor, actions: Option<&[usize]>) -> Result<DualPrediction> {
        let head = self
            .variance_head
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("mean-only predictor has no variance head".into()))?;
        let x = self.encode(states, actions)?;
        let h = self.trunk.infer(&x)?;
        let mut mean = self.mean_head.infer(&h)?;
        self.add_skip(&mut mean, states);
        let (log_variance, _) = Self::clamp(head.infer(&h)?);
        Ok(DualPrediction { mean, log_variance })
    }

    /// Caching forward pass. The log-variance is a zero tensor for mean-only
    /// models.
    pub fn forward(&mut self, states: &Tensor, actions: Option<&[usize]>) -> Result<DualPrediction> {
        let x = self.encode(states, actions)?;
        let h = self.trunk.forward(&x)?;
        let mut mean = self.mean_head.forward(&h)?;
        self.add_skip(&mut mean, states);
        let (log_variance, clamp_mask) = match self.variance_head.as_mut() {
            Some(head) => Self::clamp(head.forward(&h)?),
            None => (Tensor::zeros(mean.shape().to_vec()), Vec::new()),
        };
        self.cache = Some(Cache {
            batch: x.batch(),
            clamp_mask,
        });
        Ok(DualPrediction { mean, log_variance })
    }

    /// Parameter gradients, one buffer per entry of [`Self::models`].
    pub fn backward(&self, mean_grad: &Tensor, log_variance_grad: Option<&Tensor>) -> Result<Vec<Vec<f64>>> {
        let cache = self.cache.as_ref().ok_or(Error::MissingForward)?;
        if mean_grad.batch() != cache.batch {
            return Err(shape_err("gradient batch differs from cached forward"));
        }
        let gm = self.mean_head.backward(mean_grad)?;
        let mut feat_grad = gm.input;
        let mut out = vec![Vec::new(), gm.params];
        match (self.variance_head.as_ref(), log_variance_grad) {
            (Some(head), Some(gv)) => {
                let masked: Vec<f64> = gv
                    .data()
                    .iter()
                    .zip(&cache.clamp_mask)
                    .map(|(g, m)| g * m)
                    .collect();
                let gh = head.backward(&Tensor::new(gv.shape().to_vec(), masked)?)?;
                for (a, b) in feat_grad.data_mut().iter_mut().zip(gh.input.data()) {
                    *a += b;
                }
                out.push(gh.params);
            }
            (Some(head), None) => out.push(vec![0.0; head.param_count()]),
            (None, Some(_)) => {
                return Err(Error::InvalidArgument("mean-only predictor has no variance head".into()))
            }
            (None, None) => {}
        }
        out[0] = self.trunk.backward(&feat_grad)?.params;
        Ok(out)
    }

    /// Loss and parameter gradients for one batch, without stepping.
    pub fn loss_and_grads(
        &mut self,
        states: &Tensor,
        actions: Option<&[usize]>,
        targets: &Tensor,
        loss: LossKind,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let pred = self.forward(states, actions)?;
        let targets = targets.clone().flatten_batch();
        match loss {
            LossKind::Mse => {
                let (l, gm) = mse_loss_grad(&pred.mean, &targets)?;
                Ok((l, self.backward(&gm, None)?))
            }
            LossKind::Heteroscedastic { lambda } => {
                if !self.is_dual() {
                    return Err(Error::InvalidArgument(
                        "heteroscedastic loss needs a variance head".into(),
                    ));
                }
                let (l, gm, gv) = heteroscedastic_loss_grad(&pred, &targets, lambda)?;
                Ok((l, self.backward(&gm, Some(&gv))?))
            }
        }
    }

    /// One optimizer step on a batch. Returns the pre-step loss; a non-finite
    /// loss aborts before any parameter changes.
    pub fn train_batch(
        &mut self,
        states: &Tensor,
        actions: Option<&[usize]>,
        targets: &Tensor,
        opt: &mut Optimizer,
        loss: LossKind,
    ) -> Result<f64> {
        let (l, grads) = self.loss_and_grads(states, actions, targets, loss)?;
        let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        let mut params = self.param_groups_mut();
        opt.step(&mut params, &grad_refs)?;
        Ok(l)
    }
}

/// Heteroscedastic loss of a predictor as a function of all its parameters,
/// for finite-difference checks.
pub struct HeteroLossCheck {
    pub model: DualHeadPredictor,
    states: Tensor,
    actions: Option<Vec<usize>>,
    targets: Tensor,
    lambda: f64,
    flat: Vec<f64>,
}

impl HeteroLossCheck {
    pub fn new(
        model: DualHeadPredictor,
        states: Tensor,
        actions: Option<Vec<usize>>,
        targets: Tensor,
        lambda: f64,
    ) -> Self {
        let flat = model.models().iter().flat_map(|m| m.params().to_vec()).collect();
        Self {
            model,
            states,
            actions,
            targets,
            lambda,
            flat,
        }
    }

    fn sync(&mut self) {
        let mut off = 0;
        for g in self.model.param_groups_mut() {
            let n = g.len();
            g.copy_from_slice(&self.flat[off..off + n]);
            off += n;
        }
    }
}

impl GradCheck for HeteroLossCheck {
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    fn loss(&mut self) -> Result<f64> {
        self.sync();
        let p = self.model.predict_dual(&self.states, self.actions.as_deref())?;
        heteroscedastic_loss(&p, &self.targets, self.lambda)
    }

    fn gradient(&mut self) -> Result<Vec<f64>> {
        self.sync();
        let (_, g) = self.model.loss_and_grads(
            &self.states,
            self.actions.as_deref(),
            &self.targets,
            LossKind::Heteroscedastic { lambda: self.lambda },
        )?;
        Ok(g.concat())
    }
}
