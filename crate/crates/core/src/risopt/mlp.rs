//! Small fully connected network mapping the two estimated angles to RIS
//! phases, with hand-written backpropagation.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the network output maps onto the L x M_eff phase matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputHead {
    /// One phase per element and effective slot.
    #[default]
    Full,
    /// One phase per element, replicated over every slot. Cheap, but every
    /// column of C is then identical and the MUSIC covariance collapses to
    /// rank one, so the closed loop cannot resolve two sources.
    Shared,
}

/// Dense ReLU network. Parameters live in one flat vector, layer by layer,
/// each layer storing its `out x in` weights row-major followed by its biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs: `acts[0]` is the network input, `acts[k]` the ReLU
    /// output of hidden layer k.
    acts: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl MlpModel {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        })
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, hidden biases zero, output
    /// biases uniform phases in `[-pi, pi)` so the untrained network already
    /// emits a random-phase RIS.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = sizes.len() - 1;
        let mut off = 0;
        for k in 0..n_layers {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut model.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            off += fan_in * fan_out;
            if k + 1 == n_layers {
                for p in &mut model.params[off..off + fan_out] {
                    *p = rng.random_range(-PI..PI);
                }
            }
            off += fan_out;
        }
        Ok(model)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                context: "MLP input",
                expected: self.n_inputs().to_string(),
                got: input.len().to_string(),
            });
        }
        let n_layers = self.sizes.len() - 1;
        let mut acts = vec![input.to_vec()];
        let mut off = 0;
        let mut output = Vec::new();
        for k in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let x = acts.last().unwrap();
            let mut z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[o]
                })
                .collect();
            off += fan_in * fan_out + fan_out;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(if k + 1 == n_layers {
                    "MLP output layer"
                } else {
                    "MLP hidden layer"
                }));
            }
            if k + 1 == n_layers {
                output = z;
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
                acts.push(z);
            }
        }
        Ok(ForwardCache { acts, output })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.output)
    }

    /// Gradient of a scalar with respect to all parameters, given its
    /// gradient with respect to the network output.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for k in 0..n_layers {
            offsets.push(off);
            off += self.sizes[k] * self.sizes[k + 1] + self.sizes[k + 1];
        }
        let mut delta = grad_output.to_vec();
        for k in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
            let off = offsets[k];
            let x = &cache.acts[k];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let g = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                    g.iter_mut().zip(x).for_each(|(g, xi)| *g += d * xi);
                }
                grad[off + fan_in * fan_out + o] += d;
            }
            if k > 0 {
                let w = &self.params[off..off + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let d = delta[o];
                    if d != 0.0 {
                        prev.iter_mut()
                            .zip(&w[o * fan_in..(o + 1) * fan_in])
                            .for_each(|(p, wi)| *p += d * wi);
                    }
                }
                // ReLU derivative: x here is the post-activation value.
                for (p, xi) in prev.iter_mut().zip(x) {
                    if *xi <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        grad
    }
}

/// Normalized network input for an angle pair in degrees.
pub fn angle_input(theta_t_deg: f64, theta_i_deg: f64) -> Result<[f64; 2]> {
    for a in [theta_t_deg, theta_i_deg] {
        if !(a > -90.0 && a < 90.0) {
            return Err(Error::InvalidAngle(a));
        }
    }
    Ok([theta_t_deg / 90.0, theta_i_deg / 90.0])
}

/// Reshapes a network output into an `l_phase x m_eff` phase matrix.
pub fn phases_from_output(
    output: &[f64],
    head: OutputHead,
    l_phase: usize,
    m_eff: usize,
) -> Result<Array2<f64>> {
    let expected = match head {
        OutputHead::Full => l_phase * m_eff,
        OutputHead::Shared => l_phase,
    };
    if output.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "MLP output size",
            expected: expected.to_string(),
            got: output.len().to_string(),
        });
    }
    Ok(match head {
        OutputHead::Full => Array2::from_shape_fn((l_phase, m_eff), |(l, k)| output[l * m_eff + k]),
        OutputHead::Shared => Array2::from_shape_fn((l_phase, m_eff), |(l, _)| output[l]),
    })
}

/// Folds a gradient over the phase matrix back onto the network output.
pub fn output_gradient(grad_phases: &Array2<f64>, head: OutputHead) -> Vec<f64> {
    match head {
        OutputHead::Full => grad_phases.iter().copied().collect(),
        OutputHead::Shared => grad_phases.rows().into_iter().map(|r| r.sum()).collect(),
    }
}

/// Forward pass from estimated angles (degrees) to the phase matrix.
pub fn mlp_forward(
    model: &MlpModel,
    theta_t_hat: f64,
    theta_i_hat: f64,
    head: OutputHead,
    l_phase: usize,
    m_eff: usize,
) -> Result<Array2<f64>> {
    let out = model.forward(&angle_input(theta_t_hat, theta_i_hat)?)?;
    phases_from_output(&out, head, l_phase, m_eff)
}
