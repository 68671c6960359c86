//! Deep Q-learning scheduler.

pub mod agent;
pub mod net;
pub mod state;
pub mod train;
pub mod weights;

pub use agent::{
    argmax, boltzmann_action, select_action, Agent, AgentConfig, Exploration, LossMode, ReplayMemory, Transition,
};
pub use net::{Layer, QNetwork};
pub use state::{encode_state, state_len, StateScales};
pub use train::{train_agent, EpisodeSource, EpisodeSpec, EpisodeStats, FlexAi, LossPoint, TrainOutcome};
pub use weights::{load_weights, save_weights, WeightsFile};
