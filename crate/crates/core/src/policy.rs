//! Diagonal Gaussian action distribution and the single-step PPO surrogate.
//!
//! The policy is `N(mean, diag(std^2))` over raw action space; the mean comes
//! from the network's tanh head, the standard deviation from the free
//! `log_std` vector. Clipping of sampled actions into `[-1, 1]` is an
//! environment-side concern: log-probabilities are always taken on the raw
//! sample.

use crate::mlp::{self, NetworkParams, ParamGradients};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const LN_2PI: f64 = 1.8378770664093453;

/// Importance ratios are clamped at exp(20) to keep rare extreme samples from
/// propagating NaN/inf through the update.
pub const RATIO_LOG_CLAMP: f64 = 20.0;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("dimension mismatch: policy has {policy_dim} dims, got {got}")]
    DimensionMismatch { policy_dim: usize, got: usize },
    #[error("empty sample batch")]
    EmptyBatch,
    #[error("non-finite value in surrogate update (diverged update)")]
    DivergedUpdate,
    #[error(transparent)]
    Mlp(#[from] mlp::MlpError),
}

/// Which written form of the clipped surrogate to optimize.
///
/// `StandardClip` is the usual `min(r*A, clip(r, 1-eps, 1+eps)*A)`.
/// `PaperLiteral` is `min(r, 1 + eps*sgn(A)) * A`; the two differ for
/// negative advantages once the ratio leaves the clipping band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    StandardClip,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub epsilon: f64,
    pub objective_mode: ObjectiveMode,
    /// Entropy bonus coefficient; zero by default and in all shipped configs.
    #[serde(default)]
    pub entropy_coef: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        ClipConfig {
            epsilon: 0.3,
            objective_mode: ObjectiveMode::StandardClip,
            entropy_coef: 0.0,
        }
    }
}

/// Mean/std pair defining the action distribution on raw space.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussianPolicy {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DiagGaussianPolicy {
    /// Evaluates the network on `input` and pairs the mean with exp(log_std).
    pub fn from_params(params: &NetworkParams, input: &[f64]) -> Result<Self, PolicyError> {
        let mean = mlp::forward(params, input)?;
        let std = params.log_std.iter().map(|s| s.exp()).collect();
        Ok(DiagGaussianPolicy { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws one raw (unclipped) action.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(&m, &s)| Normal::new(m, s).expect("std must be positive").sample(rng))
            .collect()
    }

    /// Log density of a raw action under the policy.
    pub fn log_prob(&self, raw_action: &[f64]) -> Result<f64, PolicyError> {
        if raw_action.len() != self.dim() {
            return Err(PolicyError::DimensionMismatch {
                policy_dim: self.dim(),
                got: raw_action.len(),
            });
        }
        let mut lp = -(self.dim() as f64) * 0.5 * LN_2PI;
        for ((&a, &m), &s) in raw_action.iter().zip(&self.mean).zip(&self.std) {
            let z = (a - m) / s;
            lp -= 0.5 * z * z + s.ln();
        }
        Ok(lp)
    }

    /// Differential entropy of the distribution.
    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        self.std.iter().map(|s| s.ln()).sum::<f64>() + 0.5 * d * (1.0 + LN_2PI)
    }
}

/// Importance ratio `exp(logp_new - logp_old)` with overflow clamp.
pub fn ratio(logp_new: f64, logp_old: f64) -> f64 {
    (logp_new - logp_old).min(RATIO_LOG_CLAMP).exp()
}

/// The per-sample clipped surrogate objective.
pub fn clipped_objective(ratio: f64, advantage: f64, cfg: &ClipConfig) -> f64 {
    let eps = cfg.epsilon;
    match cfg.objective_mode {
        ObjectiveMode::StandardClip => {
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
            (ratio * advantage).min(clipped * advantage)
        }
        ObjectiveMode::PaperLiteral => {
            let bound = 1.0 + eps * advantage.signum() * if advantage == 0.0 { 0.0 } else { 1.0 };
            ratio.min(bound) * advantage
        }
    }
}

/// Whether the differentiable (ratio) branch of the objective is active.
/// Ties go to the differentiable branch, matching the subgradient an autodiff
/// min would propagate inside the clipping band.
fn ratio_branch_active(ratio: f64, advantage: f64, cfg: &ClipConfig) -> bool {
    let eps = cfg.epsilon;
    match cfg.objective_mode {
        ObjectiveMode::StandardClip => {
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
            ratio * advantage <= clipped * advantage
        }
        ObjectiveMode::PaperLiteral => {
            let sgn = if advantage == 0.0 { 0.0 } else { advantage.signum() };
            ratio <= 1.0 + eps * sgn
        }
    }
}

/// One collected sample: the raw action, its log-probability at collection
/// time, and the whitened advantage.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub raw_action: Vec<f64>,
    pub logp_old: f64,
    pub advantage: f64,
}

/// Mean clipped surrogate over the batch and its exact gradient with respect
/// to every parameter, log_std included. Samples whose objective sits on the
/// clipped branch contribute zero gradient.
pub fn surrogate_loss_and_grad(
    params: &NetworkParams,
    input: &[f64],
    batch: &[PolicySample],
    cfg: &ClipConfig,
) -> Result<(f64, ParamGradients), PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let policy = DiagGaussianPolicy::from_params(params, input)?;
    let d = policy.dim();
    let inv_n = 1.0 / batch.len() as f64;

    let mut loss = 0.0;
    // Accumulated upstream gradient for the mean head and log_std.
    let mut up_mean = vec![0.0; d];
    let mut g_log_std = vec![0.0; d];

    for sample in batch {
        if sample.raw_action.len() != d {
            return Err(PolicyError::DimensionMismatch {
                policy_dim: d,
                got: sample.raw_action.len(),
            });
        }
        let logp_new = policy.log_prob(&sample.raw_action)?;
        let r = ratio(logp_new, sample.logp_old);
        let adv = sample.advantage;
        loss += clipped_objective(r, adv, cfg) * inv_n;
        if ratio_branch_active(r, adv, cfg) && r < RATIO_LOG_CLAMP.exp() {
            // d obj / d theta = adv * r * d logp / d theta
            let coef = adv * r * inv_n;
            for i in 0..d {
                let diff = sample.raw_action[i] - policy.mean[i];
                let var = policy.std[i] * policy.std[i];
                up_mean[i] += coef * diff / var;
                g_log_std[i] += coef * (diff * diff / var - 1.0);
            }
        }
    }

    if cfg.entropy_coef != 0.0 {
        loss += cfg.entropy_coef * policy.entropy();
        for g in g_log_std.iter_mut() {
            *g += cfg.entropy_coef;
        }
    }

    let mut grads = mlp::backward(params, input, &up_mean)?;
    grads.log_std = g_log_std;

    if !loss.is_finite() || !grads.is_finite() {
        return Err(PolicyError::DivergedUpdate);
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{init_network, InitScheme, NetworkLayout};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy_1d() -> DiagGaussianPolicy {
        DiagGaussianPolicy {
            mean: vec![0.0],
            std: vec![1.0],
        }
    }

    #[test]
    fn sample_is_deterministic_for_fixed_rng_state() {
        let p = DiagGaussianPolicy {
            mean: vec![0.2, -0.4],
            std: vec![0.5, 2.0],
        };
        let a = p.sample(&mut ChaCha8Rng::seed_from_u64(99));
        let b = p.sample(&mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
    }

    #[test]
    fn sample_moments_match_policy() {
        let p = DiagGaussianPolicy {
            mean: vec![0.3, -0.6],
            std: vec![0.8, 1.7],
        };
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sum = vec![0.0; 2];
        let mut sumsq = vec![0.0; 2];
        for _ in 0..n {
            let a = p.sample(&mut rng);
            for i in 0..2 {
                sum[i] += a[i];
                sumsq[i] += a[i] * a[i];
            }
        }
        for i in 0..2 {
            let mean = sum[i] / n as f64;
            let var = sumsq[i] / n as f64 - mean * mean;
            let tol = 4.0 * p.std[i] / (n as f64).sqrt();
            assert!((mean - p.mean[i]).abs() < tol, "mean[{i}]");
            let rel = (var - p.std[i] * p.std[i]).abs() / (p.std[i] * p.std[i]);
            assert!(rel < 0.05, "var[{i}] rel err {rel}");
        }
    }

    #[test]
    fn log_prob_standard_normal_at_mean() {
        let lp = policy_1d().log_prob(&[0.0]).unwrap();
        assert!((lp - (-0.9189385)).abs() < 1e-6);
    }

    #[test]
    fn log_prob_two_dims_at_mean() {
        let p = DiagGaussianPolicy {
            mean: vec![0.1, -0.7],
            std: vec![1.0, 1.0],
        };
        let lp = p.log_prob(&[0.1, -0.7]).unwrap();
        assert!((lp - (-1.8378771)).abs() < 1e-6);
    }

    #[test]
    fn log_prob_is_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..50 {
            let mu: f64 = rng.gen_range(-2.0..2.0);
            let a: f64 = rng.gen_range(-2.0..2.0);
            let c: f64 = rng.gen_range(-5.0..5.0);
            let p1 = DiagGaussianPolicy {
                mean: vec![mu],
                std: vec![0.7],
            };
            let p2 = DiagGaussianPolicy {
                mean: vec![mu + c],
                std: vec![0.7],
            };
            let d = p1.log_prob(&[a]).unwrap() - p2.log_prob(&[a + c]).unwrap();
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn log_prob_normalizes_via_importance_sampling() {
        // E_q[p/q] over q = N(mean, (2 std)^2) must be 1 if log_prob is a
        // proper density.
        let p = DiagGaussianPolicy {
            mean: vec![0.4],
            std: vec![0.9],
        };
        let q = DiagGaussianPolicy {
            mean: vec![0.4],
            std: vec![1.8],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let a = q.sample(&mut rng);
            acc += (p.log_prob(&a).unwrap() - q.log_prob(&a).unwrap()).exp();
        }
        let est = acc / n as f64;
        assert!((est - 1.0).abs() < 0.02, "estimate {est}");
    }

    #[test]
    fn ratio_basics() {
        assert_eq!(ratio(-1.0, -1.0), 1.0);
        assert!((ratio(-0.5, -1.0) - 1.64872).abs() < 1e-5);
        assert!((ratio(-3.0, -1.0) - 0.13534).abs() < 1e-5);
        // overflow clamp
        assert_eq!(ratio(1000.0, 0.0), RATIO_LOG_CLAMP.exp());
    }

    #[test]
    fn clipped_objective_case_table() {
        let std = ClipConfig::default();
        let lit = ClipConfig {
            objective_mode: ObjectiveMode::PaperLiteral,
            ..Default::default()
        };
        // forced ceiling, both modes agree
        assert!((clipped_objective(2.0, 1.0, &std) - 1.3).abs() < 1e-12);
        assert!((clipped_objective(2.0, 1.0, &lit) - 1.3).abs() < 1e-12);
        // documented divergence at (r=0.5, adv=-1)
        assert!((clipped_objective(0.5, -1.0, &std) - (-0.7)).abs() < 1e-12);
        assert!((clipped_objective(0.5, -1.0, &lit) - (-0.5)).abs() < 1e-12);
        // unit ratio passes the advantage through in both modes... except the
        // literal form caps negative-advantage objectives at (1-eps)*adv.
        assert_eq!(clipped_objective(1.0, 0.35, &std), 0.35);
        assert_eq!(clipped_objective(1.0, 0.35, &lit), 0.35);
        assert_eq!(clipped_objective(1.0, -0.35, &std), -0.35);
    }

    #[test]
    fn objective_modes_agree_for_nonnegative_advantage() {
        let std = ClipConfig::default();
        let lit = ClipConfig {
            objective_mode: ObjectiveMode::PaperLiteral,
            ..Default::default()
        };
        for i in 0..400 {
            let r = 0.01 + (i as f64) * 0.01;
            for adv in [0.0, 0.3, 1.0, 4.2] {
                let a = clipped_objective(r, adv, &std);
                let b = clipped_objective(r, adv, &lit);
                assert!((a - b).abs() < 1e-12, "r={r} adv={adv}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn standard_objective_is_bounded_by_unclipped_plus_margin() {
        let cfg = ClipConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        for _ in 0..2000 {
            let r: f64 = rng.gen_range(0.0..4.0);
            let adv: f64 = rng.gen_range(-3.0..3.0);
            let obj = clipped_objective(r, adv, &cfg);
            assert!(obj <= r * adv + cfg.epsilon * adv.abs() + 1e-12);
        }
    }

    fn small_net() -> NetworkParams {
        let layout = NetworkLayout::policy(1, vec![4, 4], 2);
        init_network(&layout, 21, InitScheme::XavierUniform).unwrap()
    }

    fn random_batch(
        params: &NetworkParams,
        rng: &mut ChaCha8Rng,
        n: usize,
        cfg: &ClipConfig,
    ) -> Vec<PolicySample> {
        use rand::Rng;
        let policy = DiagGaussianPolicy::from_params(params, &[0.0]).unwrap();
        loop {
            let batch: Vec<PolicySample> = (0..n)
                .map(|_| {
                    let raw = policy.sample(rng);
                    let logp = policy.log_prob(&raw).unwrap();
                    PolicySample {
                        raw_action: raw,
                        // jitter logp_old so ratios differ from 1
                        logp_old: logp + rng.gen_range(-0.5..0.5),
                        advantage: rng.gen_range(-2.0..2.0),
                    }
                })
                .collect();
            // keep ratios away from the clip boundaries so the objective is
            // differentiable at the evaluation point
            let ok = batch.iter().all(|s| {
                let lp = policy.log_prob(&s.raw_action).unwrap();
                let r = ratio(lp, s.logp_old);
                (r - (1.0 - cfg.epsilon)).abs() > 1e-2 && (r - (1.0 + cfg.epsilon)).abs() > 1e-2
            });
            if ok {
                return batch;
            }
        }
    }

    #[test]
    fn surrogate_grad_matches_finite_differences() {
        let cfg = ClipConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let input = [0.0];
        for _ in 0..30 {
            let params = small_net();
            let batch = random_batch(&params, &mut rng, 6, &cfg);
            let (_, grads) = surrogate_loss_and_grad(&params, &input, &batch, &cfg).unwrap();
            let flat_g: Vec<f64> = grads.iter_flat().collect();
            let flat_p = params.flatten();
            let h = 1e-5;
            for i in 0..flat_p.len() {
                let mut hi = flat_p.clone();
                let mut lo = flat_p.clone();
                hi[i] += h;
                lo[i] -= h;
                let (lh, _) =
                    surrogate_loss_and_grad(&params.unflatten(&hi), &input, &batch, &cfg).unwrap();
                let (ll, _) =
                    surrogate_loss_and_grad(&params.unflatten(&lo), &input, &batch, &cfg).unwrap();
                let numeric = (lh - ll) / (2.0 * h);
                let analytic = flat_g[i];
                if analytic.abs() < 1e-8 && numeric.abs() < 1e-8 {
                    continue;
                }
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
                assert!(rel < 1e-4, "param {i}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn unit_ratio_batch_loss_is_mean_advantage() {
        let params = small_net();
        let policy = DiagGaussianPolicy::from_params(&params, &[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let advs = [0.9, -1.1, 0.3, -0.1];
        let batch: Vec<PolicySample> = advs
            .iter()
            .map(|&adv| {
                let raw = policy.sample(&mut rng);
                let logp = policy.log_prob(&raw).unwrap();
                PolicySample {
                    raw_action: raw,
                    logp_old: logp,
                    advantage: adv,
                }
            })
            .collect();
        let (loss, _) =
            surrogate_loss_and_grad(&params, &[0.0], &batch, &ClipConfig::default()).unwrap();
        let mean_adv = advs.iter().sum::<f64>() / advs.len() as f64;
        assert!((loss - mean_adv).abs() < 1e-12);
    }

    #[test]
    fn fully_clipped_sample_has_zero_gradient() {
        let params = small_net();
        let policy = DiagGaussianPolicy::from_params(&params, &[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw = policy.sample(&mut rng);
        let logp = policy.log_prob(&raw).unwrap();
        // positive advantage with ratio far above 1 + eps
        let batch = vec![PolicySample {
            raw_action: raw,
            logp_old: logp - 1.0,
            advantage: 1.5,
        }];
        let (_, grads) =
            surrogate_loss_and_grad(&params, &[0.0], &batch, &ClipConfig::default()).unwrap();
        assert!(grads.iter_flat().all(|g| g == 0.0));
    }

    #[test]
    fn empty_batch_is_an_error() {
        let params = small_net();
        assert!(matches!(
            surrogate_loss_and_grad(&params, &[0.0], &[], &ClipConfig::default()),
            Err(PolicyError::EmptyBatch)
        ));
    }
}
