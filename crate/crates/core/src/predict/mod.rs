//! Forward-prediction models and their losses.

mod dual;
mod ensemble;
mod loss;

pub use dual::{DualHeadPredictor, DualPrediction, HeteroLossCheck, PredictorConfig, LOG_VARIANCE_BOUND};
pub use ensemble::{ensemble_stats, EnsemblePredictor, EnsembleStats};
pub use loss::{
    heteroscedastic_loss, heteroscedastic_loss_grad, mse_loss, mse_loss_grad, train_batch_mse,
    HeteroHyper, LossKind,
};
