//! Scalar fields used throughout the crate: real or complex, single or double.
//!
//! Conjugation is the identity for the real types. Every type converts to and
//! from `Complex64`, which is the representation element integrals are
//! computed in before they are rounded to the working precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::{Complex, Complex32, Complex64};
use num_traits::{Float, One, Zero};

pub type C32 = Complex32;
pub type C64 = Complex64;

/// Field element of a working precision.
pub trait Scalar:
    Copy
    + Debug
    + Display
    + Default
    + PartialEq
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    type Real: RealScalar;

    const IS_COMPLEX: bool;
    /// Short name used in Matrix Market headers.
    const FIELD_NAME: &'static str;

    fn from_real(r: Self::Real) -> Self;
    fn from_f64(x: f64) -> Self;
    /// Real types keep only the real part.
    fn from_c64(z: C64) -> Self;
    fn to_c64(self) -> C64;
    fn conj(self) -> Self;
    fn re(self) -> Self::Real;
    fn im(self) -> Self::Real;
    fn modulus(self) -> Self::Real;
    fn modulus_sq(self) -> Self::Real;
    fn scale(self, r: Self::Real) -> Self;

    fn machine_epsilon() -> f64 {
        <Self::Real as RealScalar>::as_f64(<Self::Real as Float>::epsilon())
    }
}

/// Real working precision (`f32` or `f64`).
pub trait RealScalar: Scalar<Real = Self> + Float {
    fn as_f64(self) -> f64;
    fn of_f64(x: f64) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Scalar for $t {
            type Real = $t;
            const IS_COMPLEX: bool = false;
            const FIELD_NAME: &'static str = "real";

            #[inline]
            fn from_real(r: $t) -> Self {
                r
            }
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn from_c64(z: C64) -> Self {
                z.re as $t
            }
            #[inline]
            fn to_c64(self) -> C64 {
                C64::new(self as f64, 0.0)
            }
            #[inline]
            fn conj(self) -> Self {
                self
            }
            #[inline]
            fn re(self) -> $t {
                self
            }
            #[inline]
            fn im(self) -> $t {
                0.0
            }
            #[inline]
            fn modulus(self) -> $t {
                self.abs()
            }
            #[inline]
            fn modulus_sq(self) -> $t {
                self * self
            }
            #[inline]
            fn scale(self, r: $t) -> Self {
                self * r
            }
        }

        impl RealScalar for $t {
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn of_f64(x: f64) -> Self {
                x as $t
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

macro_rules! impl_complex {
    ($r:ty) => {
        impl Scalar for Complex<$r> {
            type Real = $r;
            const IS_COMPLEX: bool = true;
            const FIELD_NAME: &'static str = "complex";

            #[inline]
            fn from_real(r: $r) -> Self {
                Complex::new(r, 0.0)
            }
            #[inline]
            fn from_f64(x: f64) -> Self {
                Complex::new(x as $r, 0.0)
            }
            #[inline]
            fn from_c64(z: C64) -> Self {
                Complex::new(z.re as $r, z.im as $r)
            }
            #[inline]
            fn to_c64(self) -> C64 {
                C64::new(self.re as f64, self.im as f64)
            }
            #[inline]
            fn conj(self) -> Self {
                Complex::new(self.re, -self.im)
            }
            #[inline]
            fn re(self) -> $r {
                self.re
            }
            #[inline]
            fn im(self) -> $r {
                self.im
            }
            #[inline]
            fn modulus(self) -> $r {
                self.re.hypot(self.im)
            }
            #[inline]
            fn modulus_sq(self) -> $r {
                self.re * self.re + self.im * self.im
            }
            #[inline]
            fn scale(self, r: $r) -> Self {
                Complex::new(self.re * r, self.im * r)
            }
        }
    };
}

impl_complex!(f32);
impl_complex!(f64);

/// Euclidean norm, scaled to avoid overflow in single precision.
pub fn norm2<T: Scalar>(x: &[T]) -> f64 {
    let scale = x.iter().map(|v| v.modulus().as_f64()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = x
        .iter()
        .map(|v| {
            let c = v.to_c64() / scale;
            c.norm_sqr()
        })
        .sum();
    scale * s.sqrt()
}

/// `x* y` (conjugate-linear in the first argument).
#[inline]
pub fn dot_conj<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .fold(T::zero(), |acc, (&a, &b)| acc + a.conj() * b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugation_is_identity_for_reals() {
        assert_eq!(3.5f64.conj(), 3.5);
        assert_eq!((-2.0f32).conj(), -2.0);
        assert_eq!(C64::new(1.0, 2.0).conj(), C64::new(1.0, -2.0));
    }

    #[test]
    fn machine_epsilon_matches_precision() {
        assert!((f32::machine_epsilon() - 1.19e-7).abs() < 1e-9);
        assert!((f64::machine_epsilon() - 2.22e-16).abs() < 1e-18);
        assert_eq!(C32::machine_epsilon(), f32::machine_epsilon());
        assert_eq!(C64::machine_epsilon(), f64::machine_epsilon());
    }

    #[test]
    fn norm_of_large_single_values_does_not_overflow() {
        let x = vec![3.0e30f32, 4.0e30f32];
        assert!((norm2(&x) / 5.0e30 - 1.0).abs() < 1e-6);
    }
}
