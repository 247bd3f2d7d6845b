//! The single-step PPO training loop.
//!
//! One episode: feed the constant input state, draw one action per parallel
//! environment, collect the rewards behind a barrier, whiten them into
//! advantages, then run several epochs of shuffled mini-batch updates on the
//! clipped surrogate. There is no critic and no trajectory: the whitened
//! episode rewards are the advantages.
//!
//! Determinism: the action-sampling and shuffle RNGs are separate ChaCha
//! streams derived from `(seed, episode index)`, so a run can be resumed from
//! a checkpoint mid-way and reproduce the uninterrupted run exactly under
//! sequential dispatch.

use crate::dispatch::{dispatch, DispatchError, DispatchMode};
use crate::envkit::EnvironmentHandle;
use crate::mlp::{
    adam_step, init_network, AdamState, InitScheme, MlpError, NetworkLayout, NetworkParams,
};
use crate::policy::{ClipConfig, DiagGaussianPolicy, PolicyError, PolicySample};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

/// Window used for moving averages of rewards and actions.
pub const MOVING_AVERAGE_WINDOW: usize = 50;
/// Episodes averaged by [`report_optimum`].
pub const REPORT_WINDOW: usize = 5;
/// A checkpoint is emitted every this many episodes, plus at the end.
pub const CHECKPOINT_EVERY: u64 = 10;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("update diverged at episode {episode}: {source}")]
    Diverged {
        episode: u64,
        source: PolicyError,
    },
    #[error("episode {episode}: {source}")]
    Mlp { episode: u64, source: MlpError },
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("need at least {REPORT_WINDOW} completed episodes, have {0}")]
    InsufficientHistory(usize),
    #[error("sink error: {0}")]
    Sink(String),
}

fn default_input_state() -> Vec<f64> {
    vec![0.0]
}

fn default_hidden() -> Vec<usize> {
    vec![4, 4]
}

fn default_discount() -> f64 {
    1.0
}

fn default_init_scheme() -> InitScheme {
    InitScheme::XavierUniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub n_episodes: usize,
    pub n_envs: usize,
    pub n_epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub clip: ClipConfig,
    pub seed: u64,
    /// Constant state fed to the network every episode.
    #[serde(default = "default_input_state")]
    pub input_state: Vec<f64>,
    /// Stored for completeness; a single-step trajectory never discounts.
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_hidden")]
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "default_init_scheme")]
    pub init_scheme: InitScheme,
    /// Initial log standard deviation per action dimension (sigma = 1 by
    /// default).
    #[serde(default)]
    pub log_std_init: f64,
}

impl TrainerConfig {
    /// Table-style defaults: lr 5e-3, clip 0.3, discount 1, 2x4 tanh net.
    pub fn defaults(n_episodes: usize, n_envs: usize, n_epochs: usize, minibatch: usize) -> Self {
        TrainerConfig {
            n_episodes,
            n_envs,
            n_epochs,
            minibatch_size: minibatch,
            learning_rate: 5e-3,
            clip: ClipConfig::default(),
            seed: 0,
            input_state: default_input_state(),
            discount: 1.0,
            hidden_sizes: default_hidden(),
            init_scheme: InitScheme::XavierUniform,
            log_std_init: 0.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_envs == 0 {
            return Err(TrainError::InvalidConfig("n_envs must be >= 1".into()));
        }
        if self.minibatch_size == 0 || self.minibatch_size > self.n_envs {
            return Err(TrainError::InvalidConfig(format!(
                "minibatch_size must be in 1..=n_envs, got {} with {} envs",
                self.minibatch_size, self.n_envs
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.hidden_sizes.is_empty() {
            return Err(TrainError::InvalidConfig("hidden_sizes must be non-empty".into()));
        }
        if self.input_state.is_empty() {
            return Err(TrainError::InvalidConfig("input_state must be non-empty".into()));
        }
        Ok(())
    }
}

/// Normalizes a reward batch to zero mean and unit (population) variance.
/// A spread below 1e-12 yields all-zero advantages, which makes the
/// subsequent update a no-op.
pub fn whiten(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// Sliding average over the `window` latest values (or the whole prefix while
/// it is shorter).
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    for k in 0..series.len() {
        let lo = (k + 1).saturating_sub(window);
        let slice = &series[lo..=k];
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    out
}

/// One sample of an episode: what was drawn, what the environment saw, and
/// what the update will consume.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSample {
    pub raw_action: Vec<f64>,
    pub physical_action: Vec<f64>,
    pub logp_old: f64,
    pub reward: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub episode_index: u64,
    pub samples: Vec<EpisodeSample>,
}

impl EpisodeBatch {
    pub fn mean_reward(&self) -> f64 {
        self.samples.iter().map(|s| s.reward).sum::<f64>() / self.samples.len() as f64
    }

    pub fn mean_physical_action(&self) -> Vec<f64> {
        let d = self.samples[0].physical_action.len();
        let mut out = vec![0.0; d];
        for s in &self.samples {
            for (o, a) in out.iter_mut().zip(&s.physical_action) {
                *o += a;
            }
        }
        let n = self.samples.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// Per-episode aggregates kept for reporting and logging.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub mean_reward: f64,
    pub mean_action: Vec<f64>,
    pub moving_avg_reward: f64,
    pub moving_avg_action: Vec<f64>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunHistory {
    pub batches: Vec<EpisodeBatch>,
    pub episode_rewards: Vec<f64>,
    pub episode_actions: Vec<Vec<f64>>,
    pub moving_avg_rewards: Vec<f64>,
    pub moving_avg_actions: Vec<Vec<f64>>,
    pub elapsed_s: Vec<f64>,
    pub total_optimizer_steps: u64,
    /// Max |ratio - 1| observed on the first optimizer step of each episode.
    pub first_step_ratio_devs: Vec<f64>,
}

impl RunHistory {
    pub fn len(&self) -> usize {
        self.episode_rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode_rewards.is_empty()
    }

    /// Trajectory equality, ignoring wall-clock fields.
    pub fn same_results(&self, other: &RunHistory) -> bool {
        self.batches == other.batches
            && self.episode_rewards == other.episode_rewards
            && self.episode_actions == other.episode_actions
            && self.moving_avg_rewards == other.moving_avg_rewards
            && self.moving_avg_actions == other.moving_avg_actions
            && self.total_optimizer_steps == other.total_optimizer_steps
    }
}

/// Converged-optimum summary: mean over the [`REPORT_WINDOW`] latest episodes
/// with spreads taken as the rms of the moving average over the same span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumReport {
    pub value: f64,
    pub spread: f64,
    pub actions: Vec<f64>,
    pub action_spreads: Vec<f64>,
}

fn rms_about_mean(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt()
}

pub fn report_optimum(history: &RunHistory) -> Result<OptimumReport, TrainError> {
    let n = history.len();
    if n < REPORT_WINDOW {
        return Err(TrainError::InsufficientHistory(n));
    }
    let lo = n - REPORT_WINDOW;
    let value = history.episode_rewards[lo..].iter().sum::<f64>() / REPORT_WINDOW as f64;
    let spread = rms_about_mean(&history.moving_avg_rewards[lo..]);
    let d = history.episode_actions[0].len();
    let mut actions = vec![0.0; d];
    for row in &history.episode_actions[lo..] {
        for (a, x) in actions.iter_mut().zip(row) {
            *a += x;
        }
    }
    actions.iter_mut().for_each(|a| *a /= REPORT_WINDOW as f64);
    let action_spreads = (0..d)
        .map(|i| {
            let series: Vec<f64> = history.moving_avg_actions[lo..]
                .iter()
                .map(|row| row[i])
                .collect();
            rms_about_mean(&series)
        })
        .collect();
    Ok(OptimumReport {
        value,
        spread,
        actions,
        action_spreads,
    })
}

fn stream_rng(seed: u64, episode: u64, offset: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * episode + offset);
    rng
}

/// Draws one action per environment, evaluates them behind a barrier, and
/// whitens the rewards into advantages.
pub fn run_episode(
    params: &NetworkParams,
    cfg: &TrainerConfig,
    envs: &mut [EnvironmentHandle],
    episode: u64,
    mode: DispatchMode,
) -> Result<EpisodeBatch, TrainError> {
    let policy = DiagGaussianPolicy::from_params(params, &cfg.input_state)
        .map_err(|source| TrainError::Diverged { episode, source })?;
    let mut rng = stream_rng(cfg.seed, episode, 0);
    let mut raw_actions = Vec::with_capacity(envs.len());
    let mut physical_actions = Vec::with_capacity(envs.len());
    let mut logps = Vec::with_capacity(envs.len());
    for env in envs.iter() {
        let raw = policy.sample(&mut rng);
        let clipped = crate::envkit::clip_raw(&raw);
        let physical = env
            .action_spec
            .map_action(&clipped)
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        logps.push(
            policy
                .log_prob(&raw)
                .map_err(|source| TrainError::Diverged { episode, source })?,
        );
        raw_actions.push(raw);
        physical_actions.push(physical);
    }
    let rewards = dispatch(episode, &physical_actions, envs, mode)?;
    let advantages = whiten(&rewards);
    let samples = (0..envs.len())
        .map(|i| EpisodeSample {
            raw_action: raw_actions[i].clone(),
            physical_action: physical_actions[i].clone(),
            logp_old: logps[i],
            reward: rewards[i],
            advantage: advantages[i],
        })
        .collect();
    Ok(EpisodeBatch {
        episode_index: episode,
        samples,
    })
}

#[derive(Debug, Clone)]
pub struct UpdateStats {
    pub optimizer_steps: u64,
    /// Max |ratio - 1| over the first mini-batch, before any step was taken.
    pub first_step_ratio_dev: f64,
    /// Optimizer state at the end of the episode's last epoch.
    pub final_adam: AdamState,
}

/// Several epochs of shuffled mini-batch Adam steps on the clipped surrogate.
///
/// `logp_old` stays fixed at its collection-time value, so later epochs are
/// slightly off-policy by construction. Optimizer moments restart each epoch:
/// carrying them across epochs lets stale momentum keep moving the policy
/// long after every sample in the batch has clipped out of the objective,
/// which destabilizes converged runs.
pub fn update(
    params: &NetworkParams,
    batch: &EpisodeBatch,
    cfg: &TrainerConfig,
) -> Result<(NetworkParams, UpdateStats), TrainError> {
    let episode = batch.episode_index;
    let n = batch.samples.len();
    let mut shuffle_rng = stream_rng(cfg.seed, episode, 1);
    let mut current = params.clone();
    let mut steps = 0u64;
    let mut first_dev: Option<f64> = None;
    let mut adam = AdamState::new(&current);
    for _epoch in 0..cfg.n_epochs {
        adam = AdamState::new(&current);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let minibatch: Vec<PolicySample> = chunk
                .iter()
                .map(|&i| {
                    let s = &batch.samples[i];
                    PolicySample {
                        raw_action: s.raw_action.clone(),
                        logp_old: s.logp_old,
                        advantage: s.advantage,
                    }
                })
                .collect();
            if first_dev.is_none() {
                let policy = DiagGaussianPolicy::from_params(&current, &cfg.input_state)
                    .map_err(|source| TrainError::Diverged { episode, source })?;
                let dev = minibatch
                    .iter()
                    .map(|s| {
                        let lp = policy.log_prob(&s.raw_action).unwrap();
                        (crate::policy::ratio(lp, s.logp_old) - 1.0).abs()
                    })
                    .fold(0.0, f64::max);
                first_dev = Some(dev);
            }
            let (_loss, grads) = crate::policy::surrogate_loss_and_grad(
                &current,
                &cfg.input_state,
                &minibatch,
                &cfg.clip,
            )
            .map_err(|source| TrainError::Diverged { episode, source })?;
            // ascent on the surrogate via the descent-form optimizer
            let (next, st) = adam_step(&current, &grads.scaled(-1.0), &adam, cfg.learning_rate)
                .map_err(|source| TrainError::Mlp { episode, source })?;
            current = next;
            adam = st;
            steps += 1;
        }
    }
    Ok((
        current,
        UpdateStats {
            optimizer_steps: steps,
            first_step_ratio_dev: first_dev.unwrap_or(0.0),
            final_adam: adam,
        },
    ))
}

/// Streaming observer for completed episodes and checkpoints. Implementations
/// persist rows/files as they arrive so a failed run leaves its partial
/// history behind.
pub trait TrainSink {
    fn on_episode(
        &mut self,
        batch: &EpisodeBatch,
        record: &EpisodeRecord,
    ) -> Result<(), String> {
        let _ = (batch, record);
        Ok(())
    }

    fn on_checkpoint(
        &mut self,
        episodes_completed: u64,
        params: &NetworkParams,
        adam: &AdamState,
    ) -> Result<(), String> {
        let _ = (episodes_completed, params, adam);
        Ok(())
    }
}

/// No-op sink.
pub struct NullSink;

impl TrainSink for NullSink {}

/// Builds the initial network for a config and action dimension.
pub fn init_agent(cfg: &TrainerConfig, action_dim: usize) -> Result<NetworkParams, TrainError> {
    let layout = NetworkLayout::policy(
        cfg.input_state.len(),
        cfg.hidden_sizes.clone(),
        action_dim,
    );
    let mut params = init_network(&layout, cfg.seed, cfg.init_scheme)
        .map_err(|source| TrainError::Mlp { episode: 0, source })?;
    params.log_std = vec![cfg.log_std_init; action_dim];
    Ok(params)
}

/// Runs `cfg.n_episodes` of collect-and-update from a fresh agent.
pub fn train(
    cfg: &TrainerConfig,
    envs: &mut [EnvironmentHandle],
    mode: DispatchMode,
    sink: &mut dyn TrainSink,
) -> Result<(NetworkParams, RunHistory), TrainError> {
    cfg.validate()?;
    let action_dim = check_envs(cfg, envs)?;
    let params = init_agent(cfg, action_dim)?;
    train_from(cfg, envs, mode, sink, params, 0)
}

fn check_envs(cfg: &TrainerConfig, envs: &[EnvironmentHandle]) -> Result<usize, TrainError> {
    if envs.len() != cfg.n_envs {
        return Err(TrainError::InvalidConfig(format!(
            "config wants {} environments, got {}",
            cfg.n_envs,
            envs.len()
        )));
    }
    let action_dim = envs[0].action_spec.dim();
    if envs.iter().any(|e| e.action_spec.dim() != action_dim) {
        return Err(TrainError::InvalidConfig(
            "environments disagree on action dimension".into(),
        ));
    }
    Ok(action_dim)
}

/// Continues a run from `start_episode` with the given parameters; used both
/// by [`train`] and by checkpoint resume.
pub fn train_from(
    cfg: &TrainerConfig,
    envs: &mut [EnvironmentHandle],
    mode: DispatchMode,
    sink: &mut dyn TrainSink,
    start_params: NetworkParams,
    start_episode: u64,
) -> Result<(NetworkParams, RunHistory), TrainError> {
    cfg.validate()?;
    check_envs(cfg, envs)?;
    let mut params = start_params;
    let mut history = RunHistory::default();
    for episode in start_episode..cfg.n_episodes as u64 {
        let t0 = Instant::now();
        let batch = run_episode(&params, cfg, envs, episode, mode)?;
        let (next, stats) = update(&params, &batch, cfg)?;
        params = next;

        history.episode_rewards.push(batch.mean_reward());
        history.episode_actions.push(batch.mean_physical_action());
        let k = history.episode_rewards.len();
        let lo = k.saturating_sub(MOVING_AVERAGE_WINDOW);
        let ma_r = history.episode_rewards[lo..].iter().sum::<f64>() / (k - lo) as f64;
        let d = history.episode_actions[0].len();
        let ma_a: Vec<f64> = (0..d)
            .map(|i| {
                history.episode_actions[lo..]
                    .iter()
                    .map(|row| row[i])
                    .sum::<f64>()
                    / (k - lo) as f64
            })
            .collect();
        history.moving_avg_rewards.push(ma_r);
        history.moving_avg_actions.push(ma_a.clone());
        let elapsed = t0.elapsed().as_secs_f64();
        history.elapsed_s.push(elapsed);
        history.total_optimizer_steps += stats.optimizer_steps;
        history.first_step_ratio_devs.push(stats.first_step_ratio_dev);

        let record = EpisodeRecord {
            episode,
            mean_reward: *history.episode_rewards.last().unwrap(),
            mean_action: history.episode_actions.last().unwrap().clone(),
            moving_avg_reward: ma_r,
            moving_avg_action: ma_a,
            elapsed_s: elapsed,
        };
        sink.on_episode(&batch, &record).map_err(TrainError::Sink)?;
        history.batches.push(batch);

        let done = episode + 1;
        if done % CHECKPOINT_EVERY == 0 || done == cfg.n_episodes as u64 {
            sink.on_checkpoint(done, &params, &stats.final_adam)
                .map_err(TrainError::Sink)?;
        }
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate;

    #[test]
    fn whiten_examples() {
        let w = whiten(&[1.0, 2.0, 3.0]);
        assert!((w[0] + 1.224745).abs() < 1e-6);
        assert!(w[1].abs() < 1e-12);
        assert!((w[2] - 1.224745).abs() < 1e-6);
        assert_eq!(whiten(&[5.0, 5.0, 5.0, 5.0]), vec![0.0; 4]);
        assert_eq!(whiten(&[3.25]), vec![0.0]);
    }

    #[test]
    fn whiten_moments() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(2..64);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
            let w = whiten(&v);
            let mean = w.iter().sum::<f64>() / n as f64;
            let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0], 50), vec![1.0, 1.5, 2.0]);
        let constant = vec![2.5; 20];
        assert_eq!(moving_average(&constant, 50), constant);
        let series: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let ma = moving_average(&series, 50);
        let expected: f64 = (10..60).sum::<usize>() as f64 / 50.0;
        assert!((ma[59] - expected).abs() < 1e-12);
    }

    fn mini_cfg(n_episodes: usize, n_envs: usize, seed: u64) -> TrainerConfig {
        TrainerConfig::defaults(n_episodes, n_envs, 4, 4).with_seed(seed)
    }

    #[test]
    fn report_optimum_examples() {
        let mut h = RunHistory::default();
        for (r, ma) in [(1.0, 1.0), (1.0, 1.0), (1.53, 1.0), (1.53, 1.0), (1.53, 1.0),
                        (1.53, 1.0), (1.53, 2.0)] {
            h.episode_rewards.push(r);
            h.moving_avg_rewards.push(ma);
            h.episode_actions.push(vec![0.0]);
            h.moving_avg_actions.push(vec![0.0]);
        }
        let rep = report_optimum(&h).unwrap();
        assert!((rep.value - 1.53).abs() < 1e-12);
        // moving-average tail [1,1,1,1,2]: rms about mean 1.2 is 0.4
        assert!((rep.spread - 0.4).abs() < 1e-12);
    }

    #[test]
    fn report_optimum_needs_five_episodes() {
        let mut h = RunHistory::default();
        for _ in 0..4 {
            h.episode_rewards.push(1.0);
            h.moving_avg_rewards.push(1.0);
            h.episode_actions.push(vec![0.0]);
            h.moving_avg_actions.push(vec![0.0]);
        }
        assert!(matches!(
            report_optimum(&h),
            Err(TrainError::InsufficientHistory(4))
        ));
    }

    #[test]
    fn singleton_episode_has_zero_advantage() {
        let cfg = mini_cfg(1, 1, 3);
        let mut envs = surrogate::sphere(1).handles(1);
        let params = init_agent(&cfg, 1).unwrap();
        let batch = run_episode(&params, &cfg, &mut envs, 0, DispatchMode::Sequential).unwrap();
        assert_eq!(batch.samples[0].advantage, 0.0);
    }

    #[test]
    fn episodes_are_deterministic() {
        let cfg = mini_cfg(1, 8, 5);
        let params = init_agent(&cfg, 2).unwrap();
        let mut envs_a = surrogate::sphere(2).handles(8);
        let mut envs_b = surrogate::sphere(2).handles(8);
        let a = run_episode(&params, &cfg, &mut envs_a, 0, DispatchMode::Sequential).unwrap();
        let b = run_episode(&params, &cfg, &mut envs_b, 0, DispatchMode::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_reward_update_is_identity() {
        let cfg = mini_cfg(1, 6, 1);
        let spec = crate::envkit::ActionSpec::new(vec![crate::envkit::DimensionMap::symmetric(
            1.0, "x", "",
        )]);
        let mut envs: Vec<_> = (0..6)
            .map(|_| {
                crate::envkit::EnvironmentHandle::new(
                    "flat",
                    spec.clone(),
                    0.0,
                    Box::new(|_, _: &[f64]| Ok(4.2)),
                )
            })
            .collect();
        let params = init_agent(&cfg, 1).unwrap();
        let batch = run_episode(&params, &cfg, &mut envs, 0, DispatchMode::Sequential).unwrap();
        assert!(batch.samples.iter().all(|s| s.advantage == 0.0));
        let (after, _) = update(&params, &batch, &cfg).unwrap();
        assert_eq!(params, after);
    }

    #[test]
    fn zero_epochs_leaves_agent_unchanged() {
        let mut cfg = mini_cfg(1, 4, 9);
        cfg.n_epochs = 0;
        let mut envs = surrogate::sphere(1).handles(4);
        let params = init_agent(&cfg, 1).unwrap();
        let batch = run_episode(&params, &cfg, &mut envs, 0, DispatchMode::Sequential).unwrap();
        let (after, stats) = update(&params, &batch, &cfg).unwrap();
        assert_eq!(params, after);
        assert_eq!(stats.optimizer_steps, 0);
    }

    #[test]
    fn optimizer_step_accounting() {
        // 8 samples, mini-batches of 2, 32 epochs: exactly 128 steps
        let mut cfg = mini_cfg(1, 8, 2);
        cfg.n_epochs = 32;
        cfg.minibatch_size = 2;
        let mut envs = surrogate::sphere(1).handles(8);
        let params = init_agent(&cfg, 1).unwrap();
        let batch = run_episode(&params, &cfg, &mut envs, 0, DispatchMode::Sequential).unwrap();
        let (_, stats) = update(&params, &batch, &cfg).unwrap();
        assert_eq!(stats.optimizer_steps, 128);
        assert_eq!(stats.first_step_ratio_dev, 0.0);
    }

    #[test]
    fn short_final_minibatch_is_allowed() {
        let mut cfg = mini_cfg(1, 5, 2);
        cfg.n_epochs = 3;
        cfg.minibatch_size = 2;
        let mut envs = surrogate::sphere(1).handles(5);
        let params = init_agent(&cfg, 1).unwrap();
        let batch = run_episode(&params, &cfg, &mut envs, 0, DispatchMode::Sequential).unwrap();
        let (_, stats) = update(&params, &batch, &cfg).unwrap();
        // ceil(5/2) = 3 steps per epoch
        assert_eq!(stats.optimizer_steps, 9);
    }

    #[test]
    fn zero_episode_train_returns_fresh_agent() {
        let cfg = mini_cfg(0, 4, 11);
        let mut envs = surrogate::sphere(1).handles(4);
        let (params, history) =
            train(&cfg, &mut envs, DispatchMode::Sequential, &mut NullSink).unwrap();
        assert_eq!(params, init_agent(&cfg, 1).unwrap());
        assert!(history.is_empty());
    }

    #[test]
    fn train_is_bit_reproducible() {
        let cfg = mini_cfg(6, 8, 42);
        let mut envs_a = surrogate::sphere(2).handles(8);
        let mut envs_b = surrogate::sphere(2).handles(8);
        let (pa, ha) = train(&cfg, &mut envs_a, DispatchMode::Sequential, &mut NullSink).unwrap();
        let (pb, hb) = train(&cfg, &mut envs_b, DispatchMode::Sequential, &mut NullSink).unwrap();
        assert_eq!(pa, pb);
        assert!(ha.same_results(&hb));
    }

    #[test]
    fn advantages_are_whitened_every_episode() {
        let cfg = mini_cfg(5, 8, 1);
        let mut envs = surrogate::sphere(2).handles(8);
        let (_, history) =
            train(&cfg, &mut envs, DispatchMode::Sequential, &mut NullSink).unwrap();
        for batch in &history.batches {
            let mean: f64 =
                batch.samples.iter().map(|s| s.advantage).sum::<f64>() / batch.samples.len() as f64;
            let var: f64 = batch
                .samples
                .iter()
                .map(|s| (s.advantage - mean) * (s.advantage - mean))
                .sum::<f64>()
                / batch.samples.len() as f64;
            assert!(mean.abs() < 1e-10);
            let std = var.sqrt();
            assert!(std == 0.0 || (std - 1.0).abs() < 1e-10);
        }
    }
}
