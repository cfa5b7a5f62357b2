//! Independent re-derivations of quantities the library computes, written
//! from the definitions rather than from the library's code.

use dfcaptcha_core::detector::ensemble::Autoencoder;
use dfcaptcha_core::rng::SeedStream;
use dfcaptcha_core::types::Frame;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Exhaustive search for the best normalized cross-correlation offset.
///
/// Every offset's window is flattened, centered and compared from scratch.
/// A window or template whose centered energy is at rounding level counts as
/// flat and correlates 0. Strictly greater scores replace the incumbent, so
/// the earliest offset survives ties.
pub fn ncc_search(stream: &[Frame], template: &[Frame]) -> (usize, f64) {
    let flat_t: Vec<f64> = template.concat();
    let n = flat_t.len() as f64;
    let (t_centered, t_energy, t_scale) = center(&flat_t);
    let mut best = (0, f64::NEG_INFINITY);
    for offset in 0..=stream.len() - template.len() {
        let flat_w: Vec<f64> = stream[offset..offset + template.len()].concat();
        let (w_centered, w_energy, w_scale) = center(&flat_w);
        let score = if rounding_level(w_energy, w_scale, n) || rounding_level(t_energy, t_scale, n) {
            0.0
        } else {
            let dot: f64 = w_centered.iter().zip(&t_centered).map(|(a, b)| a * b).sum();
            (dot / (w_energy * t_energy).sqrt()).clamp(-1.0, 1.0)
        };
        if score > best.1 {
            best = (offset, score);
        }
    }
    best
}

fn center(values: &[f64]) -> (Vec<f64>, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let energy = centered.iter().map(|c| c * c).sum();
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    (centered, energy, scale)
}

fn rounding_level(energy: f64, scale: f64, n: f64) -> bool {
    let tol = 64.0 * f64::EPSILON * scale;
    energy <= n * tol * tol
}

/// Pairwise AUC: the share of (positive, negative) pairs ranked correctly,
/// ties counting half.
pub fn auc_pairs(positives: &[f64], negatives: &[f64]) -> f64 {
    if positives.is_empty() || negatives.is_empty() {
        return 0.5;
    }
    let mut doubled: u64 = 0;
    for p in positives {
        for q in negatives {
            doubled += match p.partial_cmp(q).expect("scores are not NaN") {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    doubled as f64 / (2 * positives.len() * negatives.len()) as f64
}

/// Nearest-rank percentile of an unsorted sample.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank - 1]
}

/// Mean over frames of the diagonal Mahalanobis distance.
pub fn mahalanobis_mean(frames: &[Frame], mean: &[f64], var: &[f64], eps: f64) -> f64 {
    let per_frame = frames.iter().map(|f| {
        f.iter()
            .enumerate()
            .map(|(i, x)| (x - mean[i]).powi(2) / (var[i] + eps))
            .sum::<f64>()
            .sqrt()
    });
    per_frame.sum::<f64>() / frames.len() as f64
}

/// Central finite-difference gradient of an autoencoder's per-input loss.
pub fn finite_difference(ae: &Autoencoder, x: &[f64], step: f64) -> Vec<f64> {
    (0..ae.params.len())
        .map(|p| {
            let mut plus = ae.clone();
            plus.params[p] += step;
            let mut minus = ae.clone();
            minus.params[p] -= step;
            (plus.loss(x) - minus.loss(x)) / (2.0 * step)
        })
        .collect()
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()) + norm(&mut b.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Worst relative error between analytic and finite-difference gradients
/// over `draws` random autoencoders and inputs.
pub fn gradient_check(draws: usize, seed: u64) -> f64 {
    let root = SeedStream::root(seed).derive("gradient-check");
    (0..draws)
        .map(|i| {
            let mut rng = root.index(i as u64).rng();
            let inputs = rng.random_range(1..=6);
            let hidden = dfcaptcha_core::detector::ensemble::hidden_size(inputs);
            let mut ae = Autoencoder::init(inputs, hidden, &mut rng);
            for b in ae.params.iter_mut().filter(|p| **p == 0.0) {
                *b = rng.random_range(-0.5..0.5);
            }
            let x: Vec<f64> = (0..inputs).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (_, analytic) = ae.gradient(&x);
            relative_error(&analytic, &finite_difference(&ae, &x, 1e-5))
        })
        .fold(0.0, f64::max)
}

/// Random stream and template for the extraction equivalence check, with
/// flat stretches and exact embeddings mixed in so ties and the flat rule
/// get exercised.
pub fn random_extraction_case(seed: &SeedStream) -> (Vec<Frame>, Vec<Frame>) {
    let mut rng = seed.rng();
    let dim = rng.random_range(1..=6);
    let t_len = rng.random_range(2..=24);
    let len = rng.random_range(t_len..=256);
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let template: Vec<Frame> = (0..t_len).map(|_| (0..dim).map(|_| gauss(&mut rng)).collect()).collect();
    let mut stream: Vec<Frame> = (0..len).map(|_| (0..dim).map(|_| gauss(&mut rng)).collect()).collect();
    match rng.random_range(0..4) {
        0 => {
            let at = rng.random_range(0..=len - t_len);
            stream[at..at + t_len].clone_from_slice(&template);
        }
        1 => {
            let level = rng.random_range(-3.0..3.0);
            let end = rng.random_range(0..=len);
            for f in &mut stream[..end] {
                f.iter_mut().for_each(|v| *v = level);
            }
        }
        2 => {
            let q = 0.5;
            for v in stream.iter_mut().flatten() {
                *v = (*v / q).round() * q;
            }
        }
        _ => {}
    }
    (stream, template)
}
