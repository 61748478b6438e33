//! Learners: advantage actor-critic for the gridworld and an epsilon-greedy
//! action-value bandit for the corridor task.

mod a2c;
mod actor_critic;
mod bandit;

pub use a2c::{a2c_loss_and_grads, a2c_update, gae, A2cConfig, A2cLossCheck, A2cStats, RolloutBuffer};
pub use actor_critic::{log_softmax, select_action, softmax, ActionSample, ActorCritic};
pub use bandit::{bandit_select, bandit_update, BanditValues};
