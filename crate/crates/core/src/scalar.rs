use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of embeddings and index scores.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
    /// Lossy conversion used for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Plain dot product, summed left to right.
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Euclidean norm.
pub fn l2_norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Cosine similarity of two arbitrary vectors, clamped to `[-1, 1]`.
///
/// Returns zero when either vector has zero norm or the lengths differ.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> F {
    if a.len() != b.len() {
        return F::zero();
    }
    let denom = l2_norm(a) * l2_norm(b);
    if denom == F::zero() {
        return F::zero();
    }
    clamp_unit(dot(a, b) / denom)
}

pub(crate) fn clamp_unit<F: Scalar>(v: F) -> F {
    v.max(-F::one()).min(F::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basic() {
        assert_eq!(cosine(&[1.0f32, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0f64, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[0.0f32, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(cosine(&[1.0f32], &[1.0, 0.0]), 0.0);
    }
}
