//! Scalar abstraction for the mechanism math.
//!
//! Everything in [`crate::mechanism`] is written against [`Scalar`] so the
//! solver can run in `f32` or `f64`. The simulator and the Monte-Carlo
//! machinery are `f64` only.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the mechanism solver can run on.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative tolerance of the one-dimensional budget search.
    const SEARCH_RTOL: f64;

    /// Tolerance used for simplex and equality checks.
    const CHECK_TOL: f64;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    const SEARCH_RTOL: f64 = 1e-10;
    const CHECK_TOL: f64 = 1e-9;
}

impl Scalar for f32 {
    const SEARCH_RTOL: f64 = 1e-6;
    const CHECK_TOL: f64 = 1e-5;
}

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on how the caller produced them.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn literals_round_trip() {
        assert_eq!(<f32 as Scalar>::lit(0.5), 0.5f32);
        assert_eq!(<f64 as Scalar>::lit(0.25).as_f64(), 0.25);
    }
}
