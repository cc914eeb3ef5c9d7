//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar the models, datasets and controllers are generic over.
///
/// Implemented for `f32` and `f64`. All of the crate's file formats carry
/// values as decimal text, so a value read into an `f32` pipeline is rounded
/// once on ingestion.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the implementing types.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Tolerance used for rank detection in least squares.
    fn rank_tolerance() -> Self;
}

impl Scalar for f32 {
    fn rank_tolerance() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn rank_tolerance() -> Self {
        1e-9
    }
}

/// Population (divide-by-n) standard deviation. Empty input gives 0.
pub fn population_sd<F: Scalar>(values: &[F]) -> F {
    if values.is_empty() {
        return F::zero();
    }
    let n = F::of_usize(values.len());
    let mean = values.iter().copied().sum::<F>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
    var.max(F::zero()).sqrt()
}

pub fn mean<F: Scalar>(values: &[F]) -> F {
    if values.is_empty() {
        return F::zero();
    }
    values.iter().copied().sum::<F>() / F::of_usize(values.len())
}

/// Pearson correlation of paired samples; `None` when either side is constant.
pub fn pearson<F: Scalar>(pairs: &[(F, F)]) -> Option<F> {
    if pairs.len() < 2 {
        return None;
    }
    let xs: Vec<F> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<F> = pairs.iter().map(|p| p.1).collect();
    let mx = mean(&xs);
    let my = mean(&ys);
    let mut sxy = F::zero();
    let mut sxx = F::zero();
    let mut syy = F::zero();
    for (&x, &y) in xs.iter().zip(&ys) {
        sxy = sxy + (x - mx) * (y - my);
        sxx = sxx + (x - mx) * (x - mx);
        syy = syy + (y - my) * (y - my);
    }
    if sxx <= F::zero() || syy <= F::zero() {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_sd_matches_definition() {
        let v = [1.0f64, 2.0, 3.0];
        assert!((population_sd(&v) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(population_sd::<f64>(&[]), 0.0);
        assert_eq!(population_sd(&[4.0f32]), 0.0);
    }

    #[test]
    fn pearson_of_line_is_one() {
        let pairs: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert!((pearson(&pairs).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&[(1.0f64, 2.0), (1.0, 3.0)]).is_none());
    }
}
