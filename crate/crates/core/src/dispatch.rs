//! Barrier-synchronized evaluation of one episode's actions.
//!
//! Rewards are returned ordered by environment index regardless of completion
//! order, so sequential and concurrent dispatch agree whenever the
//! environments are deterministic pure functions.

use crate::envkit::EnvironmentHandle;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchMode {
    Sequential,
    Concurrent,
}

impl Default for DispatchMode {
    fn default() -> Self {
        DispatchMode::Sequential
    }
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("got {actions} actions for {envs} environments")]
    LengthMismatch { actions: usize, envs: usize },
}

/// Evaluates every (action, environment) pair and returns the rewards by env
/// index. Per-slot failures are absorbed by each handle's fallback policy;
/// the call returns only once every slot is filled.
pub fn dispatch(
    episode: u64,
    actions: &[Vec<f64>],
    envs: &mut [EnvironmentHandle],
    mode: DispatchMode,
) -> Result<Vec<f64>, DispatchError> {
    if actions.len() != envs.len() {
        return Err(DispatchError::LengthMismatch {
            actions: actions.len(),
            envs: envs.len(),
        });
    }
    let mut rewards = vec![0.0; actions.len()];
    match mode {
        DispatchMode::Sequential => {
            for ((slot, env), action) in rewards.iter_mut().zip(envs.iter_mut()).zip(actions) {
                *slot = env.evaluate_with_fallback(episode, action);
            }
        }
        DispatchMode::Concurrent => {
            std::thread::scope(|scope| {
                for ((slot, env), action) in rewards.iter_mut().zip(envs.iter_mut()).zip(actions) {
                    scope.spawn(move || {
                        *slot = env.evaluate_with_fallback(episode, action);
                    });
                }
            });
        }
    }
    Ok(rewards)
}
