//! Ensemble of small autoencoders over contiguous feature groups.
//!
//! Each group of whitened features gets a one-hidden-layer autoencoder
//! (sigmoid hidden units, linear output) with `ceil(0.75·|g|)` hidden units.
//! A segment's group error is the RMSE of its frames' reconstructions; the
//! ensemble score is the RMS of the group errors after z-normalizing each by
//! its training mean and spread and clamping below at zero.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SeedStream;
use crate::types::{Frame, ResponseSegment};

/// Splits `0..dim` into `k` contiguous groups whose sizes differ by at most one.
pub fn contiguous_groups(dim: usize, k: usize) -> Vec<Vec<usize>> {
    let k = k.clamp(1, dim.max(1));
    let (base, extra) = (dim / k, dim % k);
    let mut start = 0;
    (0..k)
        .map(|g| {
            let size = base + usize::from(g < extra);
            let group = (start..start + size).collect();
            start += size;
            group
        })
        .collect()
}

pub fn hidden_size(inputs: usize) -> usize {
    (3 * inputs).div_ceil(4).max(1)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One autoencoder. Parameters live in a flat vector laid out as
/// `[w_enc (hidden×inputs), b_enc (hidden), w_dec (inputs×hidden), b_dec (inputs)]`,
/// all row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Autoencoder {
    pub inputs: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl Autoencoder {
    pub fn param_count(inputs: usize, hidden: usize) -> usize {
        2 * inputs * hidden + hidden + inputs
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = vec![0.0; Self::param_count(inputs, hidden)];
        let enc = 1.0 / (inputs as f64).sqrt();
        let dec = 1.0 / (hidden as f64).sqrt();
        for w in &mut params[..inputs * hidden] {
            *w = rng.random_range(-enc..=enc);
        }
        let dec_start = inputs * hidden + hidden;
        for w in &mut params[dec_start..dec_start + inputs * hidden] {
            *w = rng.random_range(-dec..=dec);
        }
        Autoencoder {
            inputs,
            hidden,
            params,
        }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (m, h) = (self.inputs, self.hidden);
        let (w_enc, rest) = self.params.split_at(m * h);
        let (b_enc, rest) = rest.split_at(h);
        let (w_dec, b_dec) = rest.split_at(m * h);
        (w_enc, b_enc, w_dec, b_dec)
    }

    fn forward(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let (w_enc, b_enc, w_dec, b_dec) = self.split();
        let m = self.inputs;
        for (j, hj) in hidden.iter_mut().enumerate() {
            let row = &w_enc[j * m..(j + 1) * m];
            let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b_enc[j];
            *hj = sigmoid(z);
        }
        let h = self.hidden;
        for (i, oi) in out.iter_mut().enumerate() {
            let row = &w_dec[i * h..(i + 1) * h];
            *oi = row.iter().zip(hidden.iter()).map(|(w, hj)| w * hj).sum::<f64>() + b_dec[i];
        }
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let mut scratch = Scratch::for_model(self);
        self.forward(x, &mut scratch.hidden, &mut scratch.out);
        scratch.out
    }

    fn squared_error_with(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        self.forward(x, &mut scratch.hidden, &mut scratch.out);
        scratch.out.iter().zip(x).map(|(y, xi)| (y - xi) * (y - xi)).sum()
    }

    /// Sum of squared reconstruction errors.
    pub fn squared_error(&self, x: &[f64]) -> f64 {
        self.squared_error_with(x, &mut Scratch::for_model(self))
    }

    /// Mean squared reconstruction error of one input.
    pub fn loss(&self, x: &[f64]) -> f64 {
        self.squared_error(x) / self.inputs as f64
    }

    /// Loss of one input; adds its gradient into `grad`.
    pub fn accumulate_gradient(&self, x: &[f64], grad: &mut [f64], scratch: &mut Scratch) -> f64 {
        let (m, h) = (self.inputs, self.hidden);
        self.forward(x, &mut scratch.hidden, &mut scratch.out);
        let (_, _, w_dec, _) = self.split();
        let (hidden, out, delta_out) = (&scratch.hidden, &scratch.out, &mut scratch.delta);

        let scale = 2.0 / m as f64;
        let mut loss = 0.0;
        for i in 0..m {
            let e = out[i] - x[i];
            loss += e * e;
            delta_out[i] = scale * e;
        }

        let (g_enc_w, rest) = grad.split_at_mut(m * h);
        let (g_enc_b, rest) = rest.split_at_mut(h);
        let (g_dec_w, g_dec_b) = rest.split_at_mut(m * h);

        for i in 0..m {
            g_dec_b[i] += delta_out[i];
            for j in 0..h {
                g_dec_w[i * h + j] += delta_out[i] * hidden[j];
            }
        }
        for j in 0..h {
            let back: f64 = (0..m).map(|i| w_dec[i * h + j] * delta_out[i]).sum();
            let dz = back * hidden[j] * (1.0 - hidden[j]);
            g_enc_b[j] += dz;
            for k in 0..m {
                g_enc_w[j * m + k] += dz * x[k];
            }
        }
        loss / m as f64
    }

    pub fn gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(x, &mut grad, &mut Scratch::for_model(self));
        (loss, grad)
    }
}

/// Reusable activation buffers for one autoencoder shape.
#[derive(Debug, Clone)]
pub struct Scratch {
    hidden: Vec<f64>,
    out: Vec<f64>,
    delta: Vec<f64>,
}

impl Scratch {
    pub fn for_model(ae: &Autoencoder) -> Self {
        Scratch {
            hidden: vec![0.0; ae.hidden],
            out: vec![0.0; ae.inputs],
            delta: vec![0.0; ae.inputs],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Normalizer {
            mean,
            std: var.sqrt(),
        }
    }

    fn z(&self, value: f64) -> f64 {
        ((value - self.mean) / self.std.max(MIN_SPREAD)).max(0.0)
    }
}

/// Floor on a group's error spread so identical training errors still yield
/// finite z-scores.
const MIN_SPREAD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderEnsembleModel {
    pub groups: Vec<Vec<usize>>,
    pub autoencoders: Vec<Autoencoder>,
    pub normalizers: Vec<Normalizer>,
}

/// Optimizer settings for [`AutoencoderEnsembleModel::train`].
#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl AutoencoderEnsembleModel {
    pub fn untrained(dim: usize, k: usize, seed: &SeedStream) -> Self {
        let groups = contiguous_groups(dim, k);
        let autoencoders = groups
            .iter()
            .enumerate()
            .map(|(g, idx)| {
                let mut rng = seed.derive("init").index(g as u64).rng();
                Autoencoder::init(idx.len(), hidden_size(idx.len()), &mut rng)
            })
            .collect();
        let normalizers = vec![Normalizer { mean: 0.0, std: 1.0 }; groups.len()];
        AutoencoderEnsembleModel {
            groups,
            autoencoders,
            normalizers,
        }
    }

    /// Row-major `frames × |group|` copy of one group's features.
    fn gather(group: &[usize], frames: &[Frame]) -> Vec<f64> {
        frames
            .iter()
            .flat_map(|f| group.iter().map(move |&i| f[i]))
            .collect()
    }

    fn group_loss(ae: &Autoencoder, data: &[f64], scratch: &mut Scratch) -> f64 {
        let rows = data.len() / ae.inputs;
        let sum: f64 = data
            .chunks_exact(ae.inputs)
            .map(|x| ae.squared_error_with(x, scratch))
            .sum();
        sum / (rows * ae.inputs) as f64
    }

    /// Mean over frames and groups of the per-group frame MSE.
    pub fn corpus_loss(&self, frames: &[Frame]) -> f64 {
        let total: f64 = self
            .groups
            .iter()
            .zip(&self.autoencoders)
            .map(|(group, ae)| {
                Self::group_loss(ae, &Self::gather(group, frames), &mut Scratch::for_model(ae))
            })
            .sum();
        total / self.groups.len() as f64
    }

    /// Mini-batch gradient descent on whitened frames. Returns the corpus
    /// loss before training and after every epoch.
    ///
    /// Groups share one shuffle per epoch and are otherwise independent, so
    /// each group is trained through all epochs in turn.
    pub fn train(&mut self, frames: &[Frame], schedule: Schedule, seed: &SeedStream) -> Vec<f64> {
        let batch = schedule.batch_size.max(1);
        let orders: Vec<Vec<usize>> = (0..schedule.epochs)
            .map(|epoch| {
                let mut order: Vec<usize> = (0..frames.len()).collect();
                order.shuffle(&mut seed.derive("shuffle").index(epoch as u64).rng());
                order
            })
            .collect();
        let mut history = vec![0.0; schedule.epochs + 1];
        for (group, ae) in self.groups.iter().zip(self.autoencoders.iter_mut()) {
            let m = ae.inputs;
            let data = Self::gather(group, frames);
            let mut scratch = Scratch::for_model(ae);
            let mut grad = vec![0.0; ae.params.len()];
            history[0] += Self::group_loss(ae, &data, &mut scratch);
            for (epoch, order) in orders.iter().enumerate() {
                for chunk in order.chunks(batch) {
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for &i in chunk {
                        ae.accumulate_gradient(&data[i * m..(i + 1) * m], &mut grad, &mut scratch);
                    }
                    let step = schedule.learning_rate / chunk.len() as f64;
                    for (p, g) in ae.params.iter_mut().zip(&grad) {
                        *p -= step * g;
                    }
                }
                history[epoch + 1] += Self::group_loss(ae, &data, &mut scratch);
            }
        }
        let k = self.groups.len() as f64;
        history.iter_mut().for_each(|h| *h /= k);
        history
    }

    /// Reconstruction RMSE of each group over a segment of whitened frames.
    pub fn group_errors(&self, frames: &[Frame]) -> Vec<f64> {
        self.groups
            .iter()
            .zip(&self.autoencoders)
            .map(|(group, ae)| {
                let mut scratch = Scratch::for_model(ae);
                let mut x = vec![0.0; group.len()];
                let sq: f64 = frames
                    .iter()
                    .map(|f| {
                        for (xi, &i) in x.iter_mut().zip(group) {
                            *xi = f[i];
                        }
                        ae.squared_error_with(&x, &mut scratch)
                    })
                    .sum();
                (sq / (frames.len() * group.len()).max(1) as f64).sqrt()
            })
            .collect()
    }

    /// Fits the per-group error normalizers on training segments.
    pub fn fit_normalizers(&mut self, segments: &[Vec<Frame>]) {
        let errors: Vec<Vec<f64>> = segments.iter().map(|s| self.group_errors(s)).collect();
        self.normalizers = (0..self.groups.len())
            .map(|g| Normalizer::fit(&errors.iter().map(|e| e[g]).collect::<Vec<_>>()))
            .collect();
    }

    /// RMS of the clamped group z-scores of a whitened segment.
    pub fn score_whitened(&self, frames: &[Frame]) -> f64 {
        let errors = self.group_errors(frames);
        let sum_sq: f64 = errors
            .iter()
            .zip(&self.normalizers)
            .map(|(e, n)| n.z(*e).powi(2))
            .sum();
        (sum_sq / errors.len() as f64).sqrt()
    }
}

/// Convenience for scoring raw segments through a whitening function.
pub fn whiten_segment(seg: &ResponseSegment, whiten: impl Fn(&[f64]) -> Frame) -> Vec<Frame> {
    seg.frames.iter().map(|f| whiten(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_partition_dimensions() {
        assert_eq!(
            contiguous_groups(16, 4),
            vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9, 10, 11], vec![12, 13, 14, 15]]
        );
        let uneven = contiguous_groups(10, 4);
        assert_eq!(uneven.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 2, 2]);
        let flat: Vec<usize> = uneven.into_iter().flatten().collect();
        assert_eq!(flat, (0..10).collect::<Vec<_>>());
        assert_eq!(contiguous_groups(3, 8).len(), 3);
    }

    #[test]
    fn hidden_sizes() {
        assert_eq!(hidden_size(4), 3);
        assert_eq!(hidden_size(1), 1);
        assert_eq!(hidden_size(5), 4);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SeedStream::root(11).rng();
        let ae = Autoencoder::init(4, 3, &mut rng);
        let x = [0.3, -1.2, 0.8, 2.0];
        let (_, grad) = ae.gradient(&x);
        let h = 1e-5;
        for (p, &g) in grad.iter().enumerate() {
            let mut plus = ae.clone();
            plus.params[p] += h;
            let mut minus = ae.clone();
            minus.params[p] -= h;
            let fd = (plus.loss(&x) - minus.loss(&x)) / (2.0 * h);
            assert!((fd - g).abs() < 1e-7, "param {p}: {fd} vs {g}");
        }
    }
}
