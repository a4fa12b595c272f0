//! Numeric traits used across the crate.
//!
//! [`Scalar`] is a field element: it covers `f32`, `f64` and exact rationals,
//! which lets assembly and the Doob decomposition run without rounding.
//! [`Real`] adds the analytic operations needed by the solvers and is only
//! implemented for the binary floating-point types.

use std::fmt::Debug;
use std::ops::Neg;

use nalgebra::RealField;
use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{NumAssign, Signed, ToPrimitive, Zero};

pub trait Scalar: nalgebra::Scalar + NumAssign + Neg<Output = Self> + PartialOrd + Send + Sync + Debug {
    /// Converts a binary float, exactly whenever the target type can.
    fn lit(x: f64) -> Self;

    fn approx_f64(&self) -> f64;

    /// True when `self` should be treated as zero relative to `scale`.
    /// Exact types compare against zero; floats use a relative epsilon.
    fn negligible(&self, scale: &Self) -> bool;

    fn magnitude(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

/// Floating-point scalar with the operations the solvers rely on.
pub trait Real: Scalar + RealField + Copy {
    fn eps() -> Self;
}

macro_rules! impl_float {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn approx_f64(&self) -> f64 {
                *self as f64
            }
            #[inline]
            fn negligible(&self, scale: &Self) -> bool {
                self.abs() <= 64.0 * <$t>::EPSILON * scale.abs().max(1.0)
            }
        }

        impl Real for $t {
            #[inline]
            fn eps() -> Self {
                <$t>::EPSILON
            }
        }
    };
}

impl_float!(f32);
impl_float!(f64);

impl Scalar for BigRational {
    fn lit(x: f64) -> Self {
        BigRational::from_float(x).expect("finite float")
    }
    fn approx_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn negligible(&self, _scale: &Self) -> bool {
        self.is_zero()
    }
    fn magnitude(&self) -> Self {
        self.abs()
    }
}

impl Scalar for Rational64 {
    fn lit(x: f64) -> Self {
        let r = BigRational::from_float(x).expect("finite float");
        let (n, d) = (r.numer(), r.denom());
        match (i64::try_from(n.clone()), i64::try_from(d.clone())) {
            (Ok(n), Ok(d)) => Rational64::new(n, d),
            _ => Rational64::approximate_float(x).expect("representable float"),
        }
    }
    fn approx_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
    fn negligible(&self, _scale: &Self) -> bool {
        self.is_zero()
    }
    fn magnitude(&self) -> Self {
        self.abs()
    }
}

/// Shorthand for exact integer literals.
pub fn int<S: Scalar>(n: i64) -> S {
    S::lit(n as f64)
}

pub fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn smax<S: Scalar>(a: S, b: S) -> S {
    if a >= b {
        a
    } else {
        b
    }
}

pub fn smin<S: Scalar>(a: S, b: S) -> S {
    if a <= b {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_floats_convert_exactly() {
        let r = BigRational::lit(0.375);
        assert_eq!(r, BigRational::new(3.into(), 8.into()));
        assert_eq!(Rational64::lit(-2.5), Rational64::new(-5, 2));
        assert_eq!(f64::lit(0.1), 0.1);
    }

    #[test]
    fn negligible_is_exact_for_rationals() {
        let tiny = BigRational::new(1.into(), BigInt::from(10).pow(30));
        assert!(!tiny.negligible(&big(1)));
        assert!(1e-20_f64.negligible(&1.0));
        assert!(!1e-10_f64.negligible(&1.0));
    }
}
