use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Softplus,
    Identity,
}

/// Fully connected network with tanh hidden layers and a scalar output.
///
/// Parameters are stored flat, layer by layer: the `out x in` weight matrix
/// (row major) followed by the `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    output: OutputActivation,
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    // Floor keeps the value strictly positive where exp(-|z|) underflows.
    (z.max(0.0) + (-z.abs()).exp().ln_1p()).max(f64::MIN_POSITIVE)
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    /// `sizes` lists layer widths from input to output; the last must be 1.
    /// Weights are Glorot-uniform from `seed`, biases zero.
    pub fn new(sizes: &[usize], output: OutputActivation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) || sizes[sizes.len() - 1] != 1 {
            return Err(Error::InvalidConfig(format!("bad layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
            output,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> OutputActivation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of the final layer's bias.
    pub fn output_bias_index(&self) -> usize {
        self.params.len() - 1
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn activate(&self, z: f64) -> f64 {
        match self.output {
            OutputActivation::Softplus => softplus(z),
            OutputActivation::Identity => z,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::invalid(format!(
                "feature length {} but network expects {}",
                x.len(),
                self.input_len()
            )));
        }
        Ok(())
    }

    /// Hidden activations per layer (input first) and the output pre-activation.
    fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, f64) {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        let mut z_out = 0.0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let a = &acts[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(a).map(|(w, a)| w * a).sum::<f64>())
                .collect();
            if l + 1 == layers {
                z_out = z[0];
            } else {
                acts.push(z.into_iter().map(f64::tanh).collect());
            }
        }
        (acts, z_out)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.activate(self.forward(x).1))
    }

    /// Same arithmetic as [`Mlp::evaluate`] per item, so results agree exactly.
    pub fn evaluate_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.evaluate(x)).collect()
    }

    /// Output value; adds `scale * dV/dθ` into `grad`.
    pub fn accumulate_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> Result<f64> {
        self.check(x)?;
        let (acts, z) = self.forward(x);
        let (value, dz) = match self.output {
            OutputActivation::Softplus => (softplus(z), sigmoid(z)),
            OutputActivation::Identity => (z, 1.0),
        };
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = vec![dz * scale];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let a = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, &ai) in row.iter_mut().zip(a) {
                    *g += d * ai;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        let s: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                        s * (1.0 - a[i] * a[i])
                    })
                    .collect();
            }
        }
        Ok(value)
    }

    /// Mean squared error over `(features, target)` pairs and its gradient.
    pub fn mse_grad<'a>(&self, samples: impl ExactSizeIterator<Item = (&'a [f64], f64)>) -> Result<(f64, Vec<f64>)> {
        let n = samples.len();
        let mut grad = vec![0.0; self.params.len()];
        if n == 0 {
            return Ok((0.0, grad));
        }
        let mut loss = 0.0;
        let inv = 1.0 / n as f64;
        for (x, y) in samples {
            // Gradient of (v - y)^2 / n is 2 (v - y) / n dv; v is only known
            // after the forward pass, so accumulate dv and rescale.
            let mut g = vec![0.0; grad.len()];
            let v = self.accumulate_grad(x, 1.0, &mut g)?;
            let r = v - y;
            loss += r * r * inv;
            let s = 2.0 * r * inv;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += s * b;
            }
        }
        Ok((loss, grad))
    }
}

/// Adam with optional global-norm gradient clipping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64, clip_norm: Option<f64>) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
        }
    }
}
