//! Softmax classification building blocks shared by the evaluation
//! protocols and the pseudo-label proxy: a linear head, a fitting loop
//! over fixed feature vectors, and a joint loop that backpropagates into
//! an encoder.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::encoder::{EncoderError, MlpEncoder};
use crate::rng;
use crate::trainer::{adam_step, AdamParams};

/// Affine map from features to class logits.
#[derive(Debug, Clone)]
pub struct LinearHead {
    weight: Vec<f64>, // out x in, row-major
    bias: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl LinearHead {
    pub fn init(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        assert!(in_dim > 0 && out_dim > 0);
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut r = rng::stream(seed, &[rng::T_HEAD]);
        LinearHead {
            weight: (0..in_dim * out_dim).map(|_| r.gen_range(-limit..limit)).collect(),
            bias: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        (0..self.out_dim)
            .map(|r| {
                let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
                self.bias[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Argmax prediction; ties break toward the lower class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        best
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut out = self.weight.clone();
        out.extend_from_slice(&self.bias);
        out
    }

    fn set_params_flat(&mut self, flat: &[f64]) {
        let nw = self.weight.len();
        self.weight.copy_from_slice(&flat[..nw]);
        self.bias.copy_from_slice(&flat[nw..]);
    }

    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Gradient of mean cross-entropy over `(x, dlogits)` rows, appended
    /// as (weight, bias) in flat order, plus per-row input gradients.
    fn backward_rows(&self, xs: &[&[f64]], dlogits: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut grad = vec![0.0; self.num_params()];
        let mut dx = Vec::with_capacity(xs.len());
        for (x, dl) in xs.iter().zip(dlogits) {
            for r in 0..self.out_dim {
                for (k, v) in x.iter().enumerate() {
                    grad[r * self.in_dim + k] += dl[r] * v;
                }
                grad[self.weight.len() + r] += dl[r];
            }
            let mut g = vec![0.0; self.in_dim];
            for r in 0..self.out_dim {
                let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
                for (gv, w) in g.iter_mut().zip(row) {
                    *gv += dl[r] * w;
                }
            }
            dx.push(g);
        }
        (grad, dx)
    }
}

/// Numerically stable softmax cross-entropy. Returns the loss and the
/// gradient w.r.t. the logits (softmax minus one-hot).
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    debug_assert!(target < logits.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum.ln();
    let loss = lse - logits[target];
    let mut grad: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    grad[target] -= 1.0;
    (loss, grad)
}

#[derive(Debug, Clone, Copy)]
pub struct FitOpts {
    pub epochs: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::T_CLS_ORDER, epoch]));
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Fits a fresh head on fixed feature vectors. Mean per-epoch training
/// loss is returned alongside the head.
pub fn fit_head(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    opts: &FitOpts,
) -> (LinearHead, Vec<f64>) {
    assert_eq!(features.len(), labels.len());
    assert!(!features.is_empty());
    let mut head = LinearHead::init(features[0].len(), num_classes, opts.seed);
    let mut params = head.params_flat();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let adam = AdamParams::default();
    let mut t = 0;
    let mut curve = Vec::with_capacity(opts.epochs as usize);
    for epoch in 0..opts.epochs {
        let mut loss_sum = 0.0;
        let mut rows = 0usize;
        for batch in epoch_batches(features.len(), opts.batch_size, opts.seed, epoch) {
            let scale = 1.0 / batch.len() as f64;
            let mut xs = Vec::with_capacity(batch.len());
            let mut dls = Vec::with_capacity(batch.len());
            for &i in &batch {
                let (loss, mut dl) = cross_entropy(&head.logits(&features[i]), labels[i]);
                loss_sum += loss;
                rows += 1;
                for g in dl.iter_mut() {
                    *g *= scale;
                }
                xs.push(features[i].as_slice());
                dls.push(dl);
            }
            let (grad, _) = head.backward_rows(&xs, &dls);
            t += 1;
            adam_step(&mut params, &grad, &mut m, &mut v, t, opts.learning_rate, 0.0, &adam);
            head.set_params_flat(&params);
        }
        curve.push(loss_sum / rows as f64);
    }
    (head, curve)
}

/// Fits encoder and head jointly on raw feature vectors; the encoder is
/// updated in place. Both parameter sets share the step counter.
pub fn fit_joint(
    encoder: &mut MlpEncoder,
    head: &mut LinearHead,
    features: &[Vec<f64>],
    labels: &[usize],
    opts: &FitOpts,
) -> Result<Vec<f64>, EncoderError> {
    assert_eq!(features.len(), labels.len());
    assert!(!features.is_empty());
    assert_eq!(head.in_dim(), encoder.output_dim());
    let mut enc_params = encoder.params_flat();
    let mut enc_m = vec![0.0; enc_params.len()];
    let mut enc_v = vec![0.0; enc_params.len()];
    let mut head_params = head.params_flat();
    let mut head_m = vec![0.0; head_params.len()];
    let mut head_v = vec![0.0; head_params.len()];
    let adam = AdamParams::default();
    let mut t = 0;
    let mut curve = Vec::with_capacity(opts.epochs as usize);
    for epoch in 0..opts.epochs {
        let mut loss_sum = 0.0;
        let mut rows = 0usize;
        for batch in epoch_batches(features.len(), opts.batch_size, opts.seed, epoch) {
            let scale = 1.0 / batch.len() as f64;
            let mut enc_grad = vec![0.0; enc_params.len()];
            let mut embs = Vec::with_capacity(batch.len());
            let mut tapes = Vec::with_capacity(batch.len());
            let mut dls = Vec::with_capacity(batch.len());
            for &i in &batch {
                let (e, tape) = encoder.forward(&features[i])?;
                let (loss, mut dl) = cross_entropy(&head.logits(e.values()), labels[i]);
                loss_sum += loss;
                rows += 1;
                for g in dl.iter_mut() {
                    *g *= scale;
                }
                embs.push(e);
                tapes.push(tape);
                dls.push(dl);
            }
            let xs: Vec<&[f64]> = embs.iter().map(|e| e.values()).collect();
            let (head_grad, dxs) = head.backward_rows(&xs, &dls);
            for (tape, dx) in tapes.iter().zip(&dxs) {
                let g = encoder.backward(tape, dx);
                for (acc, x) in enc_grad.iter_mut().zip(&g.params) {
                    *acc += x;
                }
            }
            t += 1;
            adam_step(
                &mut enc_params,
                &enc_grad,
                &mut enc_m,
                &mut enc_v,
                t,
                opts.learning_rate,
                0.0,
                &adam,
            );
            adam_step(
                &mut head_params,
                &head_grad,
                &mut head_m,
                &mut head_v,
                t,
                opts.learning_rate,
                0.0,
                &adam,
            );
            encoder.set_params_flat(&enc_params);
            head.set_params_flat(&head_params);
        }
        curve.push(loss_sum / rows as f64);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_uniform_logits() {
        let (loss, grad) = cross_entropy(&[0.0, 0.0, 0.0, 0.0], 2);
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        assert!((grad[0] - 0.25).abs() < 1e-12);
        assert!((grad[2] - (0.25 - 1.0)).abs() < 1e-12);
        // Gradient sums to zero.
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_stable_for_huge_logits() {
        let (loss, grad) = cross_entropy(&[1000.0, -1000.0], 0);
        assert!(loss.is_finite() && loss >= 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn head_learns_linearly_separable_data() {
        // Two well-separated point clouds around (+2, +2) and (-2, -2).
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let off = 0.01 * i as f64;
            features.push(vec![2.0 + off, 2.0 - off]);
            labels.push(0);
            features.push(vec![-2.0 - off, -2.0 + off]);
            labels.push(1);
        }
        let opts = FitOpts { epochs: 50, learning_rate: 0.05, batch_size: 16, seed: 1 };
        let (head, curve) = fit_head(&features, &labels, 2, &opts);
        let correct = features
            .iter()
            .zip(&labels)
            .filter(|(x, &y)| head.predict(x) == y)
            .count();
        assert_eq!(correct, features.len());
        assert!(curve.last().unwrap() < &0.1);
    }

    #[test]
    fn joint_fit_beats_frozen_random_encoder() {
        use crate::dataset::{generate_synthetic, SynthSpec};
        let ds = generate_synthetic(&SynthSpec {
            num_classes: 3,
            samples_per_class: 15,
            latent_dim: 4,
            dim_a: 8,
            dim_b: 8,
            within_class_noise: 0.1,
            instance_coupling: 0.0,
            modality_noise: 0.05,
            seed: 5,
        })
        .unwrap();
        let features: Vec<Vec<f64>> = ds
            .samples()
            .iter()
            .map(|s| s.feat_a.iter().map(|&v| f64::from(v)).collect())
            .collect();
        let labels: Vec<usize> = ds.samples().iter().map(|s| s.label).collect();
        let mut enc = MlpEncoder::init(&[8, 16, 8], 2);
        let mut head = LinearHead::init(8, 3, 3);
        let opts = FitOpts { epochs: 60, learning_rate: 0.01, batch_size: 15, seed: 4 };
        let curve = fit_joint(&mut enc, &mut head, &features, &labels, &opts).unwrap();
        assert!(
            curve.last().unwrap() < &(curve[0] * 0.5),
            "loss barely moved: {} -> {}",
            curve[0],
            curve.last().unwrap()
        );
        let correct = features
            .iter()
            .zip(&labels)
            .filter(|(x, &y)| {
                let (e, _) = enc.forward(x).unwrap();
                head.predict(e.values()) == y
            })
            .count();
        assert!(correct as f64 / labels.len() as f64 > 0.9);
    }

    #[test]
    fn fitting_is_deterministic() {
        let features: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i % 5) as f64 * 0.3, (i % 3) as f64 - 1.0])
            .collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let opts = FitOpts { epochs: 5, learning_rate: 0.01, batch_size: 8, seed: 7 };
        let (h1, c1) = fit_head(&features, &labels, 2, &opts);
        let (h2, c2) = fit_head(&features, &labels, 2, &opts);
        assert_eq!(h1.params_flat(), h2.params_flat());
        assert_eq!(c1, c2);
    }
}
