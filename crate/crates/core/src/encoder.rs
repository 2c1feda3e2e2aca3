//! MLP encoder towers with analytic gradients.
//!
//! An encoder maps a raw feature vector through fully connected layers
//! (ReLU on hidden layers, identity on the last) and L2-normalizes the
//! result, so downstream similarity is cosine similarity. All math is
//! f64; the backward pass is exact, including the Jacobian of the final
//! normalization, and is verified against central finite differences in
//! the test suite.

use thiserror::Error;

use rand::Rng;

use crate::rng;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("pre-normalization output is the zero vector")]
    ZeroNormEmbedding,
}

/// A unit-norm embedding produced by [`MlpEncoder::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Wraps raw values. [`MlpEncoder::forward`] is the normal source;
    /// callers constructing embeddings directly are expected to pass
    /// unit-norm vectors.
    pub fn new(values: Vec<f64>) -> Self {
        Embedding { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Intermediate activations of one forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct Tape {
    layer_inputs: Vec<Vec<f64>>,
    pre_acts: Vec<Vec<f64>>,
    norm: f64,
    unit: Vec<f64>,
}

impl Tape {
    /// L2 norm of the output before normalization. The normalization
    /// Jacobian scales with its inverse, so gradient checks re-draw
    /// configurations where it is tiny.
    pub fn pre_norm(&self) -> f64 {
        self.norm
    }

    /// Smallest |pre-activation| over the ReLU layers. Gradient checks
    /// re-draw configurations where this is close to the kink.
    pub fn min_abs_hidden_preact(&self) -> f64 {
        let hidden = self.pre_acts.len().saturating_sub(1);
        self.pre_acts[..hidden]
            .iter()
            .flatten()
            .map(|z| z.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Flat parameter gradient plus the gradient w.r.t. the input vector.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Layer {
    weight: Vec<f64>, // out x in, row-major
    bias: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        (0..self.out_dim)
            .map(|r| {
                let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
                self.bias[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MlpEncoder {
    dims: Vec<usize>,
    layers: Vec<Layer>,
}

impl MlpEncoder {
    /// Builds an encoder with the given layer widths (input first, output
    /// last). Weights are Glorot-uniform, biases zero.
    pub fn init(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "an encoder needs at least input and output widths");
        assert!(dims.iter().all(|&d| d > 0), "layer widths must be positive");
        let mut r = rng::stream(seed, &[]);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weight: (0..fan_in * fan_out).map(|_| r.gen_range(-limit..limit)).collect(),
                    bias: vec![0.0; fan_out],
                    in_dim: fan_in,
                    out_dim: fan_out,
                }
            })
            .collect();
        MlpEncoder { dims: dims.to_vec(), layers }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim * (l.in_dim + 1)).sum()
    }

    /// Runs the tower and normalizes the output to unit L2 norm.
    pub fn forward(&self, x: &[f64]) -> Result<(Embedding, Tape), EncoderError> {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&h);
            layer_inputs.push(std::mem::replace(&mut h, Vec::new()));
            h = if l < last { z.iter().map(|&v| v.max(0.0)).collect() } else { z.clone() };
            pre_acts.push(z);
        }
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EncoderError::ZeroNormEmbedding);
        }
        let unit: Vec<f64> = h.iter().map(|v| v / norm).collect();
        Ok((
            Embedding { values: unit.clone() },
            Tape { layer_inputs, pre_acts, norm, unit },
        ))
    }

    /// Backpropagates a gradient w.r.t. the normalized output through the
    /// normalization and the tower. Returns flat parameter gradients in
    /// [`Self::params_flat`] order plus the input gradient.
    pub fn backward(&self, tape: &Tape, grad_unit: &[f64]) -> Gradients {
        assert_eq!(grad_unit.len(), self.output_dim(), "gradient width mismatch");
        // d(y/|y|) pulls back through (I - u u^T) / |y| with u = y/|y|.
        let proj: f64 = tape.unit.iter().zip(grad_unit).map(|(u, g)| u * g).sum();
        let mut g: Vec<f64> =
            tape.unit.iter().zip(grad_unit).map(|(u, gd)| (gd - proj * u) / tape.norm).collect();

        let last = self.layers.len() - 1;
        let mut param_grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if l < last {
                for (gv, z) in g.iter_mut().zip(&tape.pre_acts[l]) {
                    if *z <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let input = &tape.layer_inputs[l];
            let mut block = Vec::with_capacity(layer.out_dim * (layer.in_dim + 1));
            for r in 0..layer.out_dim {
                for v in input {
                    block.push(g[r] * v);
                }
            }
            block.extend_from_slice(&g);
            param_grads.push(block);

            let mut next = vec![0.0; layer.in_dim];
            for r in 0..layer.out_dim {
                let row = &layer.weight[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += g[r] * w;
                }
            }
            g = next;
        }
        param_grads.reverse();
        Gradients { params: param_grads.concat(), input: g }
    }

    /// All parameters as one vector: per layer, weights row-major then
    /// biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "parameter count mismatch");
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weight.len();
            l.weight.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn test_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        use rand_chacha::rand_core::SeedableRng;
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn init_respects_glorot_bounds() {
        let enc = MlpEncoder::init(&[8, 16, 4], 3);
        let limit0 = (6.0 / 24.0f64).sqrt();
        let limit1 = (6.0 / 20.0f64).sqrt();
        let flat = enc.params_flat();
        assert_eq!(flat.len(), 16 * 9 + 4 * 17);
        for w in &enc.layers[0].weight {
            assert!(w.abs() <= limit0);
        }
        for w in &enc.layers[1].weight {
            assert!(w.abs() <= limit1);
        }
        assert!(enc.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        // Deterministic per seed.
        assert_eq!(flat, MlpEncoder::init(&[8, 16, 4], 3).params_flat());
        assert_ne!(flat, MlpEncoder::init(&[8, 16, 4], 4).params_flat());
    }

    #[test]
    fn forward_returns_unit_norm() {
        let enc = MlpEncoder::init(&[5, 7, 3], 0);
        let x: Vec<f64> = (0..5).map(|i| 0.3 * i as f64 - 0.7).collect();
        let (e, _) = enc.forward(&x).unwrap();
        let norm: f64 = e.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_with_zero_bias_is_rejected() {
        let enc = MlpEncoder::init(&[4, 6, 2], 1);
        match enc.forward(&[0.0; 4]) {
            Err(EncoderError::ZeroNormEmbedding) => {}
            other => panic!("expected ZeroNormEmbedding, got {other:?}"),
        }
    }

    #[test]
    fn flat_roundtrip_preserves_forward() {
        let mut enc = MlpEncoder::init(&[4, 6, 3], 5);
        let x = [0.1, -0.2, 0.3, 0.4];
        let (before, _) = enc.forward(&x).unwrap();
        let flat = enc.params_flat();
        enc.set_params_flat(&flat);
        let (after, _) = enc.forward(&x).unwrap();
        assert_eq!(before, after);
    }

    // Central finite differences on a scalar probe c . f(x). Relative
    // error is measured on whole gradient vectors: |a - n| / max(|a|, |n|)
    // in L2, which is robust to individual near-zero components.
    fn fd_check(dims: &[usize], seed: u64) -> (f64, f64) {
        let h = 1e-5;
        let mut r = test_rng(seed);
        loop {
            let enc = MlpEncoder::init(dims, r.gen());
            let x: Vec<f64> = (0..dims[0]).map(|_| r.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..*dims.last().unwrap()).map(|_| r.gen_range(-1.0..1.0)).collect();
            // A fully dead hidden layer gives a zero embedding; re-draw.
            let Ok((_, tape)) = enc.forward(&x) else { continue };
            // Stay away from ReLU kinks; h-sized perturbations must not
            // cross zero.
            if tape.min_abs_hidden_preact() < 1e-4 {
                continue;
            }
            let probe = |enc: &MlpEncoder, x: &[f64]| -> f64 {
                let (e, _) = enc.forward(x).unwrap();
                e.values().iter().zip(&c).map(|(v, cv)| v * cv).sum()
            };
            let analytic = enc.backward(&tape, &c);

            let mut num_params = Vec::with_capacity(enc.num_params());
            let base = enc.params_flat();
            let mut probe_enc = enc.clone();
            for i in 0..base.len() {
                let mut p = base.clone();
                p[i] = base[i] + h;
                probe_enc.set_params_flat(&p);
                let up = probe(&probe_enc, &x);
                p[i] = base[i] - h;
                probe_enc.set_params_flat(&p);
                let down = probe(&probe_enc, &x);
                num_params.push((up - down) / (2.0 * h));
            }
            let mut num_input = Vec::with_capacity(x.len());
            for i in 0..x.len() {
                let mut xv = x.clone();
                xv[i] = x[i] + h;
                let up = probe(&enc, &xv);
                xv[i] = x[i] - h;
                let down = probe(&enc, &xv);
                num_input.push((up - down) / (2.0 * h));
            }
            let rel = |a: &[f64], n: &[f64]| -> f64 {
                let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nn: f64 = n.iter().map(|v| v * v).sum::<f64>().sqrt();
                diff / na.max(nn).max(1e-12)
            };
            return (rel(&analytic.params, &num_params), rel(&analytic.input, &num_input));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let (rel_p, rel_x) = fd_check(&[4, 6, 3], seed);
            assert!(rel_p < 1e-5, "seed {seed}: parameter gradient off by {rel_p}");
            assert!(rel_x < 1e-5, "seed {seed}: input gradient off by {rel_x}");
        }
        // Deeper tower, including the degenerate no-hidden-layer case.
        let (rel_p, _) = fd_check(&[3, 5, 4, 2], 99);
        assert!(rel_p < 1e-5);
        let (rel_p, rel_x) = fd_check(&[4, 3], 7);
        assert!(rel_p < 1e-5 && rel_x < 1e-5);
    }
}
