//! Single-step PPO for open-loop black-box optimization.
//!
//! The agent draws one action per parallel environment per episode from a
//! diagonal Gaussian policy, whitens the collected rewards into advantages,
//! and updates a small tanh network with clipped surrogate steps. Calibrated
//! analytic landscapes stand in for the expensive simulations the method is
//! aimed at; real simulators attach through the companion harness crate's
//! worker protocol.

pub mod checkpoint;
pub mod dispatch;
pub mod envkit;
pub mod mlp;
pub mod policy;
pub mod surrogate;
pub mod trainer;

pub use dispatch::{dispatch, DispatchMode};
pub use envkit::{clip_raw, ActionSpec, DimensionMap, EnvFailure, Environment, EnvironmentHandle};
pub use mlp::{
    adam_step, backward, forward, init_network, AdamState, InitScheme, NetworkLayout,
    NetworkParams, ParamGradients,
};
pub use policy::{
    clipped_objective, ratio, surrogate_loss_and_grad, ClipConfig, DiagGaussianPolicy,
    ObjectiveMode, PolicySample,
};
pub use surrogate::{grid_oracle, OracleResult, SurrogateEnv};
pub use trainer::{
    moving_average, report_optimum, run_episode, train, train_from, update, whiten, EpisodeBatch,
    EpisodeRecord, EpisodeSample, NullSink, OptimumReport, RunHistory, TrainError, TrainSink,
    TrainerConfig,
};
