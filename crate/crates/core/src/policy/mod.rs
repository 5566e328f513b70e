//! Value-function learner: Q-network, Adam, replay buffer, DQN training
//! steps and the rule-based warm-start policy.

pub mod adam;
pub mod checkpoint;
pub mod dqn;
pub mod network;
pub mod replay;
pub mod rules;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use dqn::{masked_argmax, select_action, select_from_q, sync_target, train_step, DqnAgent};
pub use network::{QNetwork, Tensor};
pub use replay::ReplayBuffer;
pub use rules::warm_start_act;
