#![allow(dead_code)]

use std::sync::Arc;

use gpopt::envelopes::KernelKind;
use gpopt::gp::GpModel;
use gpopt::interval::Interval;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random sub-box of `b`.
pub fn sub_box(r: &mut ChaCha8Rng, b: Interval) -> Interval {
    let (u, w) = (r.random_range(b.lo..=b.hi), r.random_range(b.lo..=b.hi));
    iv(u.min(w), u.max(w))
}

pub fn sample_in(r: &mut ChaCha8Rng, b: Interval) -> f64 {
    if b.width() == 0.0 {
        b.lo
    } else {
        r.random_range(b.lo..=b.hi)
    }
}

/// GP with random data and hyperparameters on `[-1, 2]^dim`.
pub fn random_model(seed: u64, dim: usize, n: usize) -> Arc<GpModel> {
    let mut r = rng(seed);
    let kernel = KernelKind::ALL[r.random_range(0..4)];
    let bounds = vec![iv(-1.0, 2.0); dim];
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.random_range(-1.0..2.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|p| p.iter().map(|v| (2.0 * v).sin()).sum::<f64>() + r.random_range(-0.2..0.2)).collect();
    let mut theta: Vec<f64> = (0..dim).map(|_| r.random_range(0.0..2.0)).collect();
    theta.push(r.random_range(-0.5..0.5));
    theta.push(r.random_range(-5.0..-2.0));
    Arc::new(GpModel::build(kernel, theta, &x, &y, bounds).unwrap())
}

/// Smooth multimodal test surface on `[0, 1]^2`.
pub fn bumps(seed: u64) -> impl Fn(&[f64]) -> f64 {
    let mut r = rng(seed);
    let centers: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| (r.random_range(0.0..1.0), r.random_range(0.0..1.0), r.random_range(-2.0..2.0), r.random_range(0.05..0.3)))
        .collect();
    move |x: &[f64]| {
        centers.iter().map(|&(a, b, h, w)| h * (-((x[0] - a).powi(2) + (x[1] - b).powi(2)) / (w * w)).exp()).sum()
    }
}

/// Minimum of `f` over an `n x n` grid on a 2-D box, with its argmin.
pub fn grid_min_2d(f: impl Fn(&[f64]) -> f64, b: &[Interval], n: usize) -> (f64, [f64; 2]) {
    let mut best = (f64::INFINITY, [0.0; 2]);
    for i in 0..n {
        for j in 0..n {
            let p = [
                b[0].lo + b[0].width() * i as f64 / (n - 1) as f64,
                b[1].lo + b[1].width() * j as f64 / (n - 1) as f64,
            ];
            let v = f(&p);
            if v < best.0 {
                best = (v, p);
            }
        }
    }
    best
}
