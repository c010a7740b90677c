//! Filtered back-projection baseline: the ridge-regularized normal equations
//! `(K^T K + eps I) x = K^T d` solved matrix-free by conjugate gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PolarField;
use crate::linearized::LinearKernel;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// How the ridge parameter is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Regularization<T> {
    /// `eps` used as given.
    Absolute(T),
    /// `eps = factor * max_i diag(K^T K)_i`, the diagonal estimated from
    /// random sign probes.
    Relative(T),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbpConfig<T> {
    pub regularization: Regularization<T>,
    /// Stop when `|r| <= cg_tol * |K^T d|`.
    pub cg_tol: T,
    pub cg_max_iter: usize,
}

impl<T: Real> Default for FbpConfig<T> {
    fn default() -> Self {
        Self {
            regularization: Regularization::Relative(T::lit(1e-4)),
            cg_tol: T::lit(1e-6),
            cg_max_iter: 500,
        }
    }
}

impl<T: Real> FbpConfig<T> {
    fn validate(&self) -> Result<()> {
        let eps = match self.regularization {
            Regularization::Absolute(e) | Regularization::Relative(e) => e,
        };
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::invalid(format!("regularization must be positive, got {eps}")));
        }
        if !(self.cg_tol > T::zero() && self.cg_tol < T::one()) {
            return Err(Error::invalid(format!("cg_tol must lie in (0, 1), got {}", self.cg_tol)));
        }
        if self.cg_max_iter == 0 {
            return Err(Error::invalid("cg_max_iter must be positive"));
        }
        Ok(())
    }

    /// The absolute ridge parameter for `kernel`.
    pub fn epsilon(&self, kernel: &LinearKernel<T>) -> Result<T> {
        self.validate()?;
        Ok(match self.regularization {
            Regularization::Absolute(e) => e,
            Regularization::Relative(f) => f * max_normal_diagonal(kernel, DIAGONAL_PROBES)?,
        })
    }
}

const DIAGONAL_PROBES: usize = 5;
const PROBE_SEED: u64 = 0x5eed_d1a6;

/// Largest entry of the Hutchinson estimate `mean(z * K^T K z)` over
/// Rademacher probes `z`.
pub fn max_normal_diagonal<T: Real>(kernel: &LinearKernel<T>, probes: usize) -> Result<T> {
    let grid = kernel.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut diag = vec![T::zero(); grid.len()];
    for _ in 0..probes {
        let z: Vec<T> = (0..grid.len())
            .map(|_| if rng.gen::<bool>() { T::one() } else { -T::one() })
            .collect();
        let az = kernel.apply_normal(&PolarField::new(grid, z.clone())?)?;
        for ((acc, zi), ai) in diag.iter_mut().zip(&z).zip(&az.values) {
            *acc += *zi * *ai;
        }
    }
    let n = T::from_usize(probes.max(1)).unwrap();
    Ok(diag.into_iter().fold(T::zero(), |m, v| m.max(v / n)))
}

/// Solution together with the CG residual history.
#[derive(Clone, Debug)]
pub struct FbpSolution<T> {
    pub field: PolarField<T>,
    pub epsilon: T,
    pub iterations: usize,
    /// `|r_i| / |K^T d|` after each iteration, starting with iteration zero.
    pub residuals: Vec<T>,
}

/// Regularized inversion of sheared data `d`.
pub fn fbp_invert<T: Real>(
    kernel: &LinearKernel<T>,
    d: &Matrix<T>,
    cfg: &FbpConfig<T>,
) -> Result<PolarField<T>> {
    fbp_solve(kernel, d, cfg).map(|s| s.field)
}

/// As [`fbp_invert`], also reporting iterations and residuals.
pub fn fbp_solve<T: Real>(
    kernel: &LinearKernel<T>,
    d: &Matrix<T>,
    cfg: &FbpConfig<T>,
) -> Result<FbpSolution<T>> {
    let eps = cfg.epsilon(kernel)?;
    let grid = kernel.grid();
    let b = kernel.apply_adjoint(d)?.values;
    let b_norm = norm(&b);
    let mut x = vec![T::zero(); b.len()];
    let mut residuals = vec![T::one()];
    if b_norm == T::zero() {
        residuals[0] = T::zero();
        return Ok(FbpSolution {
            field: PolarField::new(grid, x)?,
            epsilon: eps,
            iterations: 0,
            residuals,
        });
    }

    let apply = |v: &[T]| -> Result<Vec<T>> {
        let mut out = kernel.apply_normal(&PolarField::new(grid, v.to_vec())?)?.values;
        for (o, vi) in out.iter_mut().zip(v) {
            *o += eps * *vi;
        }
        Ok(out)
    };

    // Conjugate residual form of CG: same Krylov spaces, but each iterate
    // minimizes |r| so the residual history is monotone.
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ar = apply(&r)?;
    let mut ap = ar.clone();
    let mut rar = dot(&r, &ar);
    for it in 1..=cfg.cg_max_iter {
        let alpha = rar / dot(&ap, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / b_norm;
        residuals.push(rel);
        if rel <= cfg.cg_tol {
            return Ok(FbpSolution {
                field: PolarField::new(grid, x)?,
                epsilon: eps,
                iterations: it,
                residuals,
            });
        }
        ar = apply(&r)?;
        let rar_new = dot(&r, &ar);
        let beta = rar_new / rar;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
            ap[i] = ar[i] + beta * ap[i];
        }
        rar = rar_new;
    }
    Err(Error::CgNotConverged {
        iterations: cfg.cg_max_iter,
        residual: residuals.last().unwrap().as_f64(),
    })
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
