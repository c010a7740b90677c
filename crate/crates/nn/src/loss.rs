//! Mean squared error and peak signal-to-noise ratio.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::scalar::NnScalar;

fn check_len(pred: usize, target: usize) -> Result<()> {
    if pred != target || pred == 0 {
        return Err(NnError::shape("loss", target, pred));
    }
    Ok(())
}

/// Mean squared difference, accumulated in f64.
pub fn mse<T: NnScalar>(pred: &[T], target: &[T]) -> Result<f64> {
    check_len(pred.len(), target.len())?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p.as_f64() - t.as_f64()).powi(2))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`mse`] with respect to `pred`.
pub fn mse_grad<T: NnScalar>(pred: &[T], target: &[T]) -> Result<Vec<T>> {
    check_len(pred.len(), target.len())?;
    let scale = T::lit(2.0 / pred.len() as f64);
    Ok(pred.iter().zip(target).map(|(p, t)| scale * (*p - *t)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Psnr {
    Db(f64),
    /// Prediction equals the target, so the ratio is unbounded.
    ExactMatch,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::ExactMatch => None,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v}"),
            Psnr::ExactMatch => f.write_str("exact"),
        }
    }
}

/// `10 log10(range(target)^2 / mse)` for one sample. Identical inputs give
/// [`Psnr::ExactMatch`] even for a constant target.
pub fn psnr<T: NnScalar>(pred: &[T], target: &[T]) -> Result<Psnr> {
    let err = mse(pred, target)?;
    let (lo, hi) = target.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
        let t = t.as_f64();
        (lo.min(t), hi.max(t))
    });
    if err == 0.0 {
        return Ok(Psnr::ExactMatch);
    }
    let range = hi - lo;
    if range == 0.0 {
        return Err(NnError::DegenerateTarget);
    }
    Ok(Psnr::Db(10.0 * (range * range / err).log10()))
}

/// PSNR of every sample of a contiguous batch; `None` marks a sample whose
/// target is constant.
pub fn psnr_batch<T: NnScalar>(pred: &[T], target: &[T], sample_len: usize) -> Result<Vec<Option<Psnr>>> {
    check_len(pred.len(), target.len())?;
    if sample_len == 0 || pred.len() % sample_len != 0 {
        return Err(NnError::shape("psnr batch", format!("multiple of {sample_len}"), pred.len()));
    }
    pred.chunks_exact(sample_len)
        .zip(target.chunks_exact(sample_len))
        .map(|(p, t)| match psnr(p, t) {
            Ok(v) => Ok(Some(v)),
            Err(NnError::DegenerateTarget) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Mean over the samples with a finite value; `None` when there is none.
pub fn mean_psnr(values: &[Option<Psnr>]) -> Option<f64> {
    let finite: Vec<f64> = values.iter().filter_map(|p| p.and_then(Psnr::db)).collect();
    if finite.is_empty() {
        None
    } else {
        Some(finite.iter().sum::<f64>() / finite.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_is_signalled() {
        let t = [0.0, 1.0, 0.5];
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        assert_eq!(psnr(&t, &t).unwrap(), Psnr::ExactMatch);
    }

    #[test]
    fn twenty_decibels() {
        // range 1, every error 0.1
        let t = [0.0, 1.0, 0.0, 1.0];
        let p = [0.1, 0.9, -0.1, 1.1];
        let v = psnr(&p, &t).unwrap().db().unwrap();
        assert!((v - 20.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn constant_target_is_degenerate() {
        assert!(matches!(psnr(&[1.0, 2.0], &[3.0, 3.0]), Err(NnError::DegenerateTarget)));
        assert_eq!(psnr(&[3.0, 3.0], &[3.0, 3.0]).unwrap(), Psnr::ExactMatch);
    }

    #[test]
    fn batch_marks_degenerate_samples() {
        let t = [0.0, 1.0, 2.0, 2.0, 0.0, 1.0];
        let p = [0.1, 0.9, 2.0, 2.5, 0.0, 1.0];
        let v = psnr_batch(&p, &t, 2).unwrap();
        assert!(matches!(v[0], Some(Psnr::Db(_))));
        assert_eq!(v[1], None);
        assert_eq!(v[2], Some(Psnr::ExactMatch));
        assert_eq!(mean_psnr(&v), v[0].unwrap().db());
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let p = [0.3, -1.2, 2.0];
        let t = [0.1, 0.4, -0.5];
        let g = mse_grad(&p, &t).unwrap();
        for i in 0..3 {
            let mut a = p;
            let mut b = p;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (mse(&a, &t).unwrap() - mse(&b, &t).unwrap()) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
