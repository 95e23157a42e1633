//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// Everything numeric in the crate is generic over this trait. Tolerances quoted
/// in the documentation refer to `f64`; `f32` runs are supported but only meet
/// single-precision accuracy.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Conversion from a count.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Widening conversion used for output and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Midpoints `(i + 1/2) / size` of a uniform partition of `[0, 1]`.
pub fn midpoint_grid<T: Real>(size: usize) -> Vec<T> {
    let n = T::count(size);
    let half = T::lit(0.5);
    (0..size).map(|i| (T::count(i) + half) / n).collect()
}

/// Composite midpoint rule for samples taken on [`midpoint_grid`].
pub fn midpoint_integral<T: Real>(values: &[T]) -> T {
    let mut acc = T::zero();
    for &v in values {
        acc += v;
    }
    acc / T::count(values.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_cell_centred() {
        let g: Vec<f64> = midpoint_grid(4);
        assert_eq!(g, vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn midpoint_rule_integrates_linear_exactly() {
        let g: Vec<f64> = midpoint_grid(10);
        let v: Vec<f64> = g.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((midpoint_integral(&v) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn single_precision_grid() {
        let g: Vec<f32> = midpoint_grid(2);
        assert_eq!(g, vec![0.25f32, 0.75]);
    }
}
