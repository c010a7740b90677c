//! Finite-difference check of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamLayout, Params};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradReport {
    /// Largest `|fd - tape| / max(|fd|, |tape|, 1e-6)` over checked probes;
    /// differences within the rounding error of the quotient count as zero.
    pub max_rel: f64,
    pub checked: usize,
    /// Probes redrawn because the step crossed a relu kink.
    pub skipped: usize,
}

fn loss_and_pattern(
    params: &Params<f64>,
    build: &dyn Fn(&mut Graph<'_, f64>) -> Result<Var>,
    w: &[f64],
) -> Result<(f64, Vec<bool>)> {
    let mut g = Graph::new(params);
    let y = build(&mut g)?;
    let loss = g.value(y).iter().zip(w).map(|(a, b)| a * b).sum();
    Ok((loss, g.relu_pattern()))
}

/// Central differences with step 1e-4 on `probes` randomly chosen scalars
/// of a parameter set drawn uniformly from `[-0.5, 0.5]`, against the tape
/// gradient of `<w, y>` for a random `w`.
///
/// A probe whose +-step changes any relu sign is redrawn: the difference
/// quotient straddles a kink there and is not a valid oracle.
pub fn grad_check(
    layout: &ParamLayout,
    build: impl Fn(&mut Graph<'_, f64>) -> Result<Var>,
    probes: usize,
    seed: u64,
) -> Result<GradReport> {
    const STEP: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::<f64>::uniform(layout, 0.5, seed);
    let (w, grads) = {
        let mut g = Graph::new(&params);
        let y = build(&mut g)?;
        let w: Vec<f64> = (0..g.value(y).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grads = g.backward(y, &w)?;
        (w, grads)
    };
    let (_, base) = loss_and_pattern(&params, &build, &w)?;
    let total = layout.count();
    let mut report = GradReport {
        max_rel: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut attempts = 0;
    while report.checked < probes.min(total) && attempts < 20 * probes {
        attempts += 1;
        let mut flat = rng.gen_range(0..total);
        let mut block = 0;
        while flat >= params.values[block].len() {
            flat -= params.values[block].len();
            block += 1;
        }
        let orig = params.values[block][flat];
        params.values[block][flat] = orig + STEP;
        let (lp, pp) = loss_and_pattern(&params, &build, &w)?;
        params.values[block][flat] = orig - STEP;
        let (lm, pm) = loss_and_pattern(&params, &build, &w)?;
        params.values[block][flat] = orig;
        if pp != base || pm != base {
            report.skipped += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * STEP);
        let an = grads.values[block][flat];
        // below this the quotient cannot resolve anything
        let rounding = 8.0 * f64::EPSILON * lp.abs().max(lm.abs()) / STEP;
        let diff = (fd - an).abs();
        let rel = if diff <= rounding {
            0.0
        } else {
            diff / fd.abs().max(an.abs()).max(1e-6)
        };
        report.max_rel = report.max_rel.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
