#![allow(dead_code)]

use mlreg::{LabelVector, MultiLabelDataset, SparseInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dense_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

pub fn sparse(rows: &[Vec<f64>]) -> Vec<SparseInstance> {
    rows.iter().map(|r| SparseInstance::from_dense(r).unwrap()).collect()
}

/// Labels drawn from a random logistic model per label, so classes overlap.
pub fn noisy_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, l: usize) -> MultiLabelDataset {
    let rows = dense_rows(rng, n, d);
    let w: Vec<Vec<f64>> = (0..l).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let labels = rows
        .iter()
        .map(|x| {
            let bits: Vec<bool> = w
                .iter()
                .map(|wl| {
                    let s: f64 = wl.iter().zip(x).map(|(a, b)| a * b).sum();
                    rng.gen::<f64>() < 1.0 / (1.0 + (-s).exp())
                })
                .collect();
            LabelVector::from_bits(&bits)
        })
        .collect();
    MultiLabelDataset::new(sparse(&rows), labels, d, l).unwrap()
}

/// Mean multinomial negative log-likelihood of dense parameters, one score
/// vector per class (class 0 fixed at zero when `binary`).
pub fn naive_nll(rows: &[Vec<f64>], classes: &[usize], b: &[f64], w: &[Vec<f64>], binary: bool) -> f64 {
    let mut total = 0.0;
    for (x, &c) in rows.iter().zip(classes) {
        let scores = naive_scores(x, b, w, binary);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        total -= scores[c] - max - z.ln();
    }
    total / rows.len() as f64
}

pub fn naive_scores(x: &[f64], b: &[f64], w: &[Vec<f64>], binary: bool) -> Vec<f64> {
    let raw: Vec<f64> = b
        .iter()
        .zip(w)
        .map(|(bv, wv)| bv + wv.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect();
    if binary {
        vec![0.0, raw[0]]
    } else {
        raw
    }
}

/// Gradient of [`naive_nll`]: `(intercepts, weights)`.
pub fn naive_gradient(
    rows: &[Vec<f64>],
    classes: &[usize],
    b: &[f64],
    w: &[Vec<f64>],
    binary: bool,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len() as f64;
    let mut gb = vec![0.0; b.len()];
    let mut gw = vec![vec![0.0; w[0].len()]; w.len()];
    for (x, &c) in rows.iter().zip(classes) {
        let scores = naive_scores(x, b, w, binary);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        for v in 0..b.len() {
            let class = if binary { 1 } else { v };
            let p = (scores[class] - max).exp() / z;
            let r = (p - f64::from(u8::from(c == class))) / n;
            gb[v] += r;
            for (j, xj) in x.iter().enumerate() {
                gw[v][j] += r * xj;
            }
        }
    }
    (gb, gw)
}
