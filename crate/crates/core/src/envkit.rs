//! Environment abstraction and affine action mappings.
//!
//! Raw network outputs live in `[-1, 1]^d`; each environment declares how the
//! components map onto physical control ranges (angles, gaps, angular
//! velocities, frequency ratios). Evaluation failures never surface to the
//! trainer: the handle substitutes its declared fallback reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvKitError {
    #[error("action length {got} does not match spec dimension {expected}")]
    SpecMismatch { expected: usize, got: usize },
    #[error("invalid dimension map: {0}")]
    InvalidMap(String),
}

/// Why an evaluation produced no usable reward.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvFailure {
    /// The environment declared the input infeasible (domain knowledge, e.g.
    /// intersecting geometry).
    #[error("infeasible input: {0}")]
    Infeasible(String),
    #[error("evaluation failed: {0}")]
    Failed(String),
    #[error("evaluation timed out after {0} s")]
    Timeout(f64),
}

/// Affine map for one action component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    /// `x = xi * max`, onto `[-max, max]`.
    Symmetric { max: f64 },
    /// `x = lo + (1 + xi) / 2 * (hi - lo)`, onto `[lo, hi]`.
    Range { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionMap {
    #[serde(flatten)]
    pub kind: MapKind,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub unit: String,
}

impl DimensionMap {
    pub fn symmetric(max: f64, label: &str, unit: &str) -> Self {
        DimensionMap {
            kind: MapKind::Symmetric { max },
            label: label.into(),
            unit: unit.into(),
        }
    }

    pub fn range(lo: f64, hi: f64, label: &str, unit: &str) -> Self {
        DimensionMap {
            kind: MapKind::Range { lo, hi },
            label: label.into(),
            unit: unit.into(),
        }
    }

    pub fn validate(&self) -> Result<(), EnvKitError> {
        match self.kind {
            MapKind::Symmetric { max } if max <= 0.0 => Err(EnvKitError::InvalidMap(format!(
                "symmetric max must be positive, got {max}"
            ))),
            MapKind::Range { lo, hi } if lo >= hi => Err(EnvKitError::InvalidMap(format!(
                "range requires lo < hi, got [{lo}, {hi}]"
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, xi: f64) -> f64 {
        match self.kind {
            MapKind::Symmetric { max } => xi * max,
            MapKind::Range { lo, hi } => lo + (1.0 + xi) / 2.0 * (hi - lo),
        }
    }

    /// Inverse of [`DimensionMap::apply`].
    pub fn invert(&self, x: f64) -> f64 {
        match self.kind {
            MapKind::Symmetric { max } => x / max,
            MapKind::Range { lo, hi } => 2.0 * (x - lo) / (hi - lo) - 1.0,
        }
    }

    /// Physical interval covered by raw values in `[-1, 1]`.
    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            MapKind::Symmetric { max } => (-max, max),
            MapKind::Range { lo, hi } => (lo, hi),
        }
    }
}

/// Ordered per-dimension maps; length equals the policy output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub dims: Vec<DimensionMap>,
}

impl ActionSpec {
    pub fn new(dims: Vec<DimensionMap>) -> Self {
        ActionSpec { dims }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn validate(&self) -> Result<(), EnvKitError> {
        for d in &self.dims {
            d.validate()?;
        }
        Ok(())
    }

    /// Maps a clipped raw vector onto physical ranges.
    pub fn map_action(&self, clipped: &[f64]) -> Result<Vec<f64>, EnvKitError> {
        if clipped.len() != self.dims.len() {
            return Err(EnvKitError::SpecMismatch {
                expected: self.dims.len(),
                got: clipped.len(),
            });
        }
        Ok(self
            .dims
            .iter()
            .zip(clipped)
            .map(|(d, &xi)| d.apply(xi))
            .collect())
    }

    /// Inverse map from physical space back to raw coordinates.
    pub fn unmap_action(&self, physical: &[f64]) -> Result<Vec<f64>, EnvKitError> {
        if physical.len() != self.dims.len() {
            return Err(EnvKitError::SpecMismatch {
                expected: self.dims.len(),
                got: physical.len(),
            });
        }
        Ok(self
            .dims
            .iter()
            .zip(physical)
            .map(|(d, &x)| d.invert(x))
            .collect())
    }
}

/// Componentwise clamp into `[-1, 1]`.
pub fn clip_raw(raw: &[f64]) -> Vec<f64> {
    raw.iter().map(|x| x.clamp(-1.0, 1.0)).collect()
}

/// The evaluation contract environments implement. `episode` is forwarded so
/// out-of-process workers can echo it for request/response matching.
pub trait Environment: Send {
    fn evaluate(&mut self, episode: u64, physical_action: &[f64]) -> Result<f64, EnvFailure>;
}

impl<F> Environment for F
where
    F: FnMut(u64, &[f64]) -> Result<f64, EnvFailure> + Send,
{
    fn evaluate(&mut self, episode: u64, physical_action: &[f64]) -> Result<f64, EnvFailure> {
        self(episode, physical_action)
    }
}

/// A named environment slot with its action spec and fallback policy.
pub struct EnvironmentHandle {
    pub name: String,
    pub action_spec: ActionSpec,
    pub fallback_reward: f64,
    env: Box<dyn Environment>,
}

impl EnvironmentHandle {
    pub fn new(
        name: impl Into<String>,
        action_spec: ActionSpec,
        fallback_reward: f64,
        env: Box<dyn Environment>,
    ) -> Self {
        EnvironmentHandle {
            name: name.into(),
            action_spec,
            fallback_reward,
            env,
        }
    }

    /// Total evaluation: infeasible/failed/timed-out inputs yield the
    /// fallback reward, with the cause logged.
    pub fn evaluate_with_fallback(&mut self, episode: u64, physical: &[f64]) -> f64 {
        match self.env.evaluate(episode, physical) {
            Ok(r) => r,
            Err(failure) => {
                log::warn!(
                    "env {}: falling back to reward {} ({failure})",
                    self.name,
                    self.fallback_reward
                );
                self.fallback_reward
            }
        }
    }
}
