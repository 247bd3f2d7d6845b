//! Minimal dense network with manual reverse-mode gradients and Adam.
//!
//! Everything here is sized for tiny policy heads (a few neurons per layer),
//! so the implementation favours clarity over batched kernels: plain `Vec<f64>`
//! buffers, row-major weight matrices, no allocation tricks.
//!
//! All operations are pure: they take parameters by reference and return fresh
//! values. The only mutable training state is the explicit [`AdamState`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite gradient encountered (diverged update)")]
    NonFiniteGradient,
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
}

/// Activation applied by the output head. Hidden layers are always tanh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Tanh,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    pub output_activation: OutputActivation,
}

impl NetworkLayout {
    /// Tanh hidden layers with a tanh mean head, the shape used by the trainer.
    pub fn policy(input_dim: usize, hidden_sizes: Vec<usize>, output_dim: usize) -> Self {
        NetworkLayout {
            input_dim,
            hidden_sizes,
            output_dim,
            output_activation: OutputActivation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        if self.hidden_sizes.is_empty() {
            return Err(MlpError::InvalidLayout("hidden_sizes must be non-empty".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(MlpError::InvalidLayout("all dimensions must be >= 1".into()));
        }
        Ok(())
    }

    /// Per-layer (fan_in, fan_out) pairs, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_sizes {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// All weights zero (biases are always zero at init).
    Zeros,
    /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
    XavierUniform,
}

/// Network weights/biases plus the state-independent per-dimension log-std.
///
/// Weight matrices are row-major with shape `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layout: NetworkLayout,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub log_std: Vec<f64>,
}

/// Gradients with the same shapes as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub log_std: Vec<f64>,
}

impl ParamGradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        ParamGradients {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            log_std: vec![0.0; params.log_std.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter_flat().all(|g| g.is_finite())
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter().copied())
            .chain(self.log_std.iter().copied())
    }

    /// Returns `scale * self`.
    pub fn scaled(&self, scale: f64) -> ParamGradients {
        let mut out = self.clone();
        for v in out.weights.iter_mut().chain(out.biases.iter_mut()) {
            for x in v.iter_mut() {
                *x *= scale;
            }
        }
        for x in out.log_std.iter_mut() {
            *x *= scale;
        }
        out
    }

    /// Adds `scale * other` into self.
    pub fn add_scaled(&mut self, other: &ParamGradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        for (x, y) in self.log_std.iter_mut().zip(&other.log_std) {
            *x += scale * y;
        }
    }
}

impl NetworkParams {
    /// Flat view of every parameter, weights then biases then log_std.
    /// The ordering matches [`ParamGradients::iter_flat`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter().copied())
            .chain(self.log_std.iter().copied())
            .collect()
    }

    /// Rebuilds params from a flat vector produced by [`NetworkParams::flatten`].
    pub fn unflatten(&self, flat: &[f64]) -> NetworkParams {
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for w in out.weights.iter_mut().chain(out.biases.iter_mut()) {
            for x in w.iter_mut() {
                *x = it.next().expect("flat vector too short");
            }
        }
        for x in out.log_std.iter_mut() {
            *x = it.next().expect("flat vector too short");
        }
        assert!(it.next().is_none(), "flat vector too long");
        out
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|x| x.is_finite())
    }
}

/// Deterministically initializes a network for the given seed and scheme.
/// Biases start at zero; `log_std` starts at zero (unit standard deviation)
/// and can be overwritten by the caller.
pub fn init_network(
    layout: &NetworkLayout,
    seed: u64,
    scheme: InitScheme,
) -> Result<NetworkParams, MlpError> {
    layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (fan_in, fan_out) in layout.layer_dims() {
        let w = match scheme {
            InitScheme::Zeros => vec![0.0; fan_in * fan_out],
            InitScheme::XavierUniform => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect()
            }
        };
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(NetworkParams {
        layout: layout.clone(),
        weights,
        biases,
        log_std: vec![0.0; layout.output_dim],
    })
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let out_dim = b.len();
    let in_dim = x.len();
    let mut z = b.to_vec();
    for o in 0..out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        z[o] += acc;
    }
    z
}

/// Forward pass returning the mean head output.
pub fn forward(params: &NetworkParams, input: &[f64]) -> Result<Vec<f64>, MlpError> {
    Ok(forward_trace(params, input)?.pop().unwrap())
}

/// Forward pass keeping every post-activation layer output (input excluded).
fn forward_trace(params: &NetworkParams, input: &[f64]) -> Result<Vec<Vec<f64>>, MlpError> {
    if input.len() != params.layout.input_dim {
        return Err(MlpError::DimensionMismatch {
            context: "forward input",
            expected: params.layout.input_dim,
            got: input.len(),
        });
    }
    let n_layers = params.weights.len();
    let mut acts = Vec::with_capacity(n_layers);
    let mut h = input.to_vec();
    for (i, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let mut z = affine(w, b, &h);
        let apply_tanh =
            i + 1 < n_layers || params.layout.output_activation == OutputActivation::Tanh;
        if apply_tanh {
            for v in z.iter_mut() {
                *v = v.tanh();
            }
        }
        h = z.clone();
        acts.push(z);
    }
    Ok(acts)
}

/// Exact gradient of `upstream . mean` with respect to every parameter.
///
/// The `log_std` slot of the result is always zero: the mean head does not
/// depend on it, and policy-level code adds its own log-std contributions.
pub fn backward(
    params: &NetworkParams,
    input: &[f64],
    upstream: &[f64],
) -> Result<ParamGradients, MlpError> {
    if upstream.len() != params.layout.output_dim {
        return Err(MlpError::DimensionMismatch {
            context: "backward upstream",
            expected: params.layout.output_dim,
            got: upstream.len(),
        });
    }
    let acts = forward_trace(params, input)?;
    let n_layers = params.weights.len();
    let mut grads = ParamGradients::zeros_like(params);

    // delta holds dL/dz for the current layer.
    let mut delta: Vec<f64> = upstream.to_vec();
    if params.layout.output_activation == OutputActivation::Tanh {
        for (d, &a) in delta.iter_mut().zip(&acts[n_layers - 1]) {
            *d *= 1.0 - a * a;
        }
    }
    for i in (0..n_layers).rev() {
        let layer_input: &[f64] = if i == 0 { input } else { &acts[i - 1] };
        let in_dim = layer_input.len();
        for (o, &d) in delta.iter().enumerate() {
            grads.biases[i][o] = d;
            for (j, &x) in layer_input.iter().enumerate() {
                grads.weights[i][o * in_dim + j] = d * x;
            }
        }
        if i > 0 {
            let prev_dim = acts[i - 1].len();
            let mut next = vec![0.0; prev_dim];
            for (o, &d) in delta.iter().enumerate() {
                let row = &params.weights[i][o * prev_dim..(o + 1) * prev_dim];
                for (nj, &wv) in next.iter_mut().zip(row) {
                    *nj += d * wv;
                }
            }
            // hidden layers are always tanh
            for (n, &a) in next.iter_mut().zip(&acts[i - 1]) {
                *n *= 1.0 - a * a;
            }
            delta = next;
        }
    }
    Ok(grads)
}

/// First/second moment accumulators for Adam plus the hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the (0.9, 0.999, 1e-8) defaults.
    pub fn new(params: &NetworkParams) -> Self {
        let n = params.flatten().len();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam descent step: `params - lr * m_hat / (sqrt(v_hat) + eps)`.
/// Callers maximizing an objective pass the negated gradient.
pub fn adam_step(
    params: &NetworkParams,
    grads: &ParamGradients,
    state: &AdamState,
    lr: f64,
) -> Result<(NetworkParams, AdamState), MlpError> {
    if !grads.is_finite() {
        return Err(MlpError::NonFiniteGradient);
    }
    let flat_p = params.flatten();
    let flat_g: Vec<f64> = grads.iter_flat().collect();
    if flat_g.len() != flat_p.len() {
        return Err(MlpError::DimensionMismatch {
            context: "adam_step grads",
            expected: flat_p.len(),
            got: flat_g.len(),
        });
    }
    let mut st = state.clone();
    st.step_count += 1;
    let t = st.step_count as i32;
    let bc1 = 1.0 - st.beta1.powi(t);
    let bc2 = 1.0 - st.beta2.powi(t);
    let mut out = flat_p;
    for i in 0..out.len() {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * flat_g[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * flat_g[i] * flat_g[i];
        let m_hat = st.m[i] / bc1;
        let v_hat = st.v[i] / bc2;
        out[i] -= lr * m_hat / (v_hat.sqrt() + st.epsilon);
    }
    Ok((params.unflatten(&out), st))
}
