#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tttk_nn::{Graph, ParamLayout, Result, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// Circular shift of the second axis of `[batch, n, rest]`: out[i] = x[i - k].
pub fn roll(x: &[f64], batch: usize, n: usize, rest: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for i in 0..n {
            let j = (i + k) % n;
            let src = &x[(b * n + i) * rest..(b * n + i + 1) * rest];
            out[(b * n + j) * rest..(b * n + j + 1) * rest].copy_from_slice(src);
        }
    }
    out
}

pub use tttk_nn::gradcheck::GradReport;

pub fn grad_check(
    layout: &ParamLayout,
    build: impl Fn(&mut Graph<'_, f64>) -> Result<Var>,
    probes: usize,
    seed: u64,
) -> GradReport {
    tttk_nn::gradcheck::grad_check(layout, build, probes, seed).unwrap()
}
