//! Generic scalar abstraction.
//!
//! Every numeric routine in this crate is written over [`Real`], so the same
//! code path evaluates with plain `f64` and with forward-mode dual numbers
//! ([`num_dual::Dual64`]) when Jacobians are required. Only the real part is
//! ever used for branching (knot-span search, guard thresholds), which keeps
//! the dual sweeps consistent with the `f64` evaluation.

use nalgebra::RealField;
use num_dual::Dual64;

/// Scalar type for all vehicle-model arithmetic.
///
/// Constants must be lifted with [`Real::lift`] (or [`lift`]); the
/// `RealField` constant methods are deliberately avoided.
pub trait Real: RealField + Copy {
    /// Real (value) part, used for branching and diagnostics.
    fn re(self) -> f64;

    /// Lift an `f64` constant into this scalar type with zero derivative.
    fn lift(x: f64) -> Self {
        nalgebra::convert(x)
    }
}

impl Real for f64 {
    #[inline]
    fn re(self) -> f64 {
        self
    }
}

impl Real for Dual64 {
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
}

/// Free-function form of [`Real::lift`]; reads better in long expressions.
#[inline]
pub fn lift<T: Real>(x: f64) -> T {
    T::lift(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_dual::DualNum;

    #[test]
    fn lift_roundtrip() {
        let x: f64 = lift(3.25);
        assert_eq!(x, 3.25);
        let d: Dual64 = lift(3.25);
        assert_eq!(d.re, 3.25);
        assert_eq!(d.eps, 0.0);
    }

    #[test]
    fn dual_carries_derivative_through_generic_code() {
        fn f<T: Real>(x: T) -> T {
            x * x + T::lift(2.0) * x.sin()
        }
        let x = Dual64::from(0.7).derivative();
        let y = f(x);
        assert!((y.re - (0.49 + 2.0 * 0.7f64.sin())).abs() < 1e-15);
        assert!((y.eps - (1.4 + 2.0 * 0.7f64.cos())).abs() < 1e-15);
    }
}
