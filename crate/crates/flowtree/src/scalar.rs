//! Scalar abstraction over the two coefficient domains used throughout the
//! crate: double-precision complex numbers for numeric work and complex
//! numbers with arbitrary-precision rational parts for exact identities.
//!
//! Every algebraic routine in the crate is generic over [`Scalar`], so the
//! same code path produces floating-point answers or exact rational ones
//! depending on the chosen type. Operations that intrinsically need
//! transcendental functions (`exp`, norms, quadrature) are restricted to
//! [`C64`].

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Double-precision complex scalar.
pub type C64 = num_complex::Complex64;
/// Arbitrary-precision rational.
pub type Q = BigRational;
/// Complex number with exact rational real and imaginary parts.
pub type CQ = Complex<BigRational>;

/// Coefficient domain for fields, series and diagram evaluations.
pub trait Scalar:
    Clone
    + PartialEq
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    /// True when arithmetic is exact and zero tests need no tolerance.
    const EXACT: bool;

    /// Builds a scalar from real and imaginary double-precision parts.
    /// In the exact domain the conversion is lossless (every finite `f64`
    /// is a dyadic rational).
    fn from_f64_parts(re: f64, im: f64) -> Self;

    /// Builds the real rational `num/den`.
    fn from_ratio(num: i64, den: i64) -> Self;

    /// Builds a scalar from an exact rational (real) value.
    fn from_q(q: &Q) -> Self;

    /// Lossy view as a double-precision complex number.
    fn to_c64(&self) -> C64;

    /// The imaginary unit.
    fn imaginary_unit() -> Self;

    /// Zero test: exact in the rational domain, `|z| < tol` otherwise.
    fn vanishes(&self, tol: f64) -> bool;

    fn from_usize(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }

    /// Reciprocal, or `None` when the value vanishes at tolerance `tol`.
    fn recip_checked(&self, tol: f64) -> Option<Self> {
        if self.vanishes(tol) {
            None
        } else {
            Some(Self::one() / self.clone())
        }
    }
}

impl Scalar for C64 {
    const EXACT: bool = false;

    fn from_f64_parts(re: f64, im: f64) -> Self {
        C64::new(re, im)
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        C64::new(num as f64 / den as f64, 0.0)
    }

    fn from_q(q: &Q) -> Self {
        C64::new(rational_to_f64(q), 0.0)
    }

    fn to_c64(&self) -> C64 {
        *self
    }

    fn imaginary_unit() -> Self {
        C64::new(0.0, 1.0)
    }

    fn vanishes(&self, tol: f64) -> bool {
        self.norm() < tol
    }
}

impl Scalar for CQ {
    const EXACT: bool = true;

    fn from_f64_parts(re: f64, im: f64) -> Self {
        let conv = |x: f64| {
            BigRational::from_float(x).unwrap_or_else(|| panic!("non-finite coefficient {x}"))
        };
        Complex::new(conv(re), conv(im))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        Complex::new(
            BigRational::new(BigInt::from(num), BigInt::from(den)),
            BigRational::zero(),
        )
    }

    fn from_q(q: &Q) -> Self {
        Complex::new(q.clone(), BigRational::zero())
    }

    fn to_c64(&self) -> C64 {
        C64::new(rational_to_f64(&self.re), rational_to_f64(&self.im))
    }

    fn imaginary_unit() -> Self {
        Complex::new(BigRational::zero(), BigRational::one())
    }

    fn vanishes(&self, _tol: f64) -> bool {
        self.is_zero()
    }
}

/// Conversion that survives numerators/denominators beyond `f64` range by
/// falling back to a quotient of approximations.
pub fn rational_to_f64(q: &Q) -> f64 {
    if let Some(v) = q.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    let n = q.numer().to_f64().unwrap_or(f64::MAX * q.numer().signum().to_f64().unwrap_or(1.0));
    let d = q.denom().to_f64().unwrap_or(f64::MAX);
    n / d
}

/// Exact rational `num/den`.
pub fn q(num: i64, den: i64) -> Q {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact factorial.
pub fn factorial(n: usize) -> num_bigint::BigUint {
    (1..=n as u64).map(num_bigint::BigUint::from).fold(num_bigint::BigUint::one(), |a, b| a * b)
}
