//! Generic scalar abstraction.
//!
//! Every numerical routine in the crate is written against [`Real`], which
//! extends [`num_traits::Float`] with the few extras the domain needs:
//! special functions (delegated to `statrs` in `f64`), a fixed mapping from
//! raw RNG words to the open unit interval, and fast polynomial kernels for
//! the transcendental functions that dominate the samplers' hot loops.
//!
//! `f64` is the production type; its fast kernels are Chebyshev fits accurate
//! to a few ulps (verified against the standard library in tests). `f32`
//! falls back to the standard library everywhere, which keeps it correct
//! without a second set of tuned kernels.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Shorthand conversion from an `f64` literal; panics only on values a
    /// float type cannot represent at all (never for finite constants).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable")
    }

    /// Widen to `f64` (lossless for both supported types).
    fn f64(self) -> f64 {
        self.to_f64().expect("finite value expected")
    }

    /// Map a full-entropy `u64` to the open interval `(0, 1)`.
    ///
    /// The mapping is fixed — it is part of the reproducibility contract —
    /// and never returns 0 or 1, so logarithms and negative powers of the
    /// result are always finite.
    fn unit_open01(u: u64) -> Self;

    /// Natural log of the gamma function.
    fn ln_gamma(self) -> Self;

    /// Complementary error function.
    fn erfc(self) -> Self;

    /// `log2(x)` for finite positive normal `x`. Overridden with a
    /// polynomial kernel for `f64`; accuracy within a few ulps.
    fn fast_log2(self) -> Self {
        self.log2()
    }

    /// `2^x` for `|x| < 900`. Overridden with a polynomial kernel for `f64`.
    fn fast_exp2(self) -> Self {
        self.exp2()
    }

    /// Natural logarithm via [`Real::fast_log2`].
    fn fast_ln(self) -> Self {
        self.fast_log2() * Self::LN_2()
    }

    /// `x^p` for `x > 0` via the fast exp2/log2 kernels.
    fn fast_powf(self, p: Self) -> Self {
        (p * self.fast_log2()).fast_exp2()
    }

    /// `sin(x)` restricted to `|x| ≤ π`.
    fn sin_npi(self) -> Self {
        self.sin()
    }

    /// `cos(x)` restricted to `|x| ≤ π`.
    fn cos_npi(self) -> Self {
        self.cos()
    }
}

impl Real for f32 {
    fn unit_open01(u: u64) -> Self {
        // 23 bits + half-offset: every value is the exact midpoint of its
        // cell, so neither endpoint of (0, 1) is reachable.
        ((u >> 41) as f32 + 0.5) * (1.0 / 8_388_608.0)
    }

    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self as f64) as f32
    }

    fn erfc(self) -> Self {
        statrs::function::erf::erfc(self as f64) as f32
    }
}

impl Real for f64 {
    #[inline]
    fn unit_open01(u: u64) -> Self {
        // 52 bits + half-offset: every value is the exact midpoint of its
        // cell, so neither endpoint of (0, 1) is reachable. (With 53 bits
        // the half-offset at the top cell would round up to exactly 1.)
        ((u >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
    }

    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self)
    }

    fn erfc(self) -> Self {
        statrs::function::erf::erfc(self)
    }

    #[inline]
    fn fast_log2(self) -> Self {
        fastmath::log2(self)
    }

    #[inline]
    fn fast_exp2(self) -> Self {
        fastmath::exp2(self)
    }

    #[inline]
    fn sin_npi(self) -> Self {
        fastmath::sin_npi(self)
    }

    #[inline]
    fn cos_npi(self) -> Self {
        fastmath::cos_npi(self)
    }
}

/// Polynomial kernels for `f64`. Coefficients are Chebyshev interpolants
/// converted to the power basis; each kernel's absolute error is below
/// `4e-15` on its stated domain (asserted in tests against the standard
/// library). They exist because `powf`/`sin`/`cos` dominate the cost of the
/// samplers at the billions-of-draws scale.
pub mod fastmath {
    /// `log2(1.5 + z)`, `z ∈ [-0.5, 0.5]`, degree 18.
    const LOG2C: [f64; 19] = [
        0.5849625007211561,
        0.9617966939259942,
        -0.32059889797526137,
        0.14248839909559946,
        -0.07124419955345136,
        0.03799690674460377,
        -0.02110939240041214,
        0.012062499988515859,
        -0.007036464052170662,
        0.00416992470376212,
        -0.0025018739612086825,
        0.0015146301501724672,
        -0.0009262697084953913,
        0.0005798166813819034,
        -0.00035584443493893287,
        0.00018711152829621947,
        -0.00012454233671489498,
        0.00014350288792660363,
        -8.271869860197369e-5,
    ];

    /// `2^f`, `f ∈ [-0.5, 0.5]`, degree 10.
    const EXP2C: [f64; 11] = [
        1.0000000000000007,
        0.6931471805599483,
        0.24022650695901254,
        0.055504108664544756,
        0.00961812911053657,
        0.0013333558214738293,
        0.00015403526882354606,
        1.525266622014565e-5,
        1.3217210256367588e-6,
        1.0206977921453389e-7,
        6.767963482574983e-9,
    ];

    /// `sin(√u)/√u`, `u ∈ [0, (π/2)²]`, degree 8 in `u`.
    const SINC: [f64; 9] = [
        0.9999999999999988,
        -0.16666666666662738,
        0.008333333333064753,
        -0.00019841269762429446,
        2.755730730368135e-6,
        -2.505110713525424e-8,
        1.6011873617284247e-10,
        -6.480991036036804e-13,
        -8.985657918602726e-15,
    ];

    #[inline]
    fn horner(c: &[f64], x: f64) -> f64 {
        let mut acc = c[c.len() - 1];
        for &k in c.iter().rev().skip(1) {
            acc = acc.mul_add(x, k);
        }
        acc
    }

    /// `log2(x)` for positive normal finite `x`.
    #[inline]
    pub fn log2(x: f64) -> f64 {
        debug_assert!(x > 0.0 && x.is_finite());
        let bits = x.to_bits();
        let e = ((bits >> 52) & 0x7ff) as i64 - 1023;
        let m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | (1023u64 << 52));
        e as f64 + horner(&LOG2C, m - 1.5)
    }

    /// `2^x` for `|x| < 900`.
    #[inline]
    pub fn exp2(x: f64) -> f64 {
        debug_assert!(x.abs() < 900.0);
        let n = x.round();
        let f = x - n;
        let scale = f64::from_bits(((n as i64 + 1023) as u64) << 52);
        horner(&EXP2C, f) * scale
    }

    /// `sin(x)` for `|x| ≤ π/2` (plus a few ulps of slack).
    #[inline]
    fn sin_half(x: f64) -> f64 {
        let u = x * x;
        x * horner(&SINC, u)
    }

    /// `sin(x)` for `|x| ≤ π`.
    #[inline]
    pub fn sin_npi(x: f64) -> f64 {
        debug_assert!(x.abs() <= std::f64::consts::PI * (1.0 + 1e-12));
        let a = x.abs();
        let r = if a <= std::f64::consts::FRAC_PI_2 {
            sin_half(a)
        } else {
            sin_half(std::f64::consts::PI - a)
        };
        if x < 0.0 {
            -r
        } else {
            r
        }
    }

    /// `cos(x)` for `|x| ≤ π`.
    #[inline]
    pub fn cos_npi(x: f64) -> f64 {
        debug_assert!(x.abs() <= std::f64::consts::PI * (1.0 + 1e-12));
        sin_npi(std::f64::consts::FRAC_PI_2 - x.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_stream(n: usize) -> impl Iterator<Item = u64> {
        let mut s = 0x1234_5678_9abc_def0u64;
        std::iter::repeat_with(move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            s
        })
        .take(n)
    }

    #[test]
    fn unit_open01_never_hits_endpoints() {
        assert!(f64::unit_open01(0) > 0.0);
        assert!(f64::unit_open01(u64::MAX) < 1.0);
        assert!(f32::unit_open01(0) > 0.0);
        assert!(f32::unit_open01(u64::MAX) < 1.0);
    }

    #[test]
    fn fast_log2_matches_std() {
        let mut worst = 0.0f64;
        for u in lcg_stream(200_000) {
            let x = f64::unit_open01(u) * 1e6 + 1e-9;
            let err = (fastmath::log2(x) - x.log2()).abs();
            worst = worst.max(err);
        }
        assert!(worst < 4e-15, "max abs error {worst:e}");
    }

    #[test]
    fn fast_exp2_matches_std() {
        let mut worst = 0.0f64;
        for u in lcg_stream(200_000) {
            let x = (f64::unit_open01(u) - 0.5) * 400.0;
            let rel = (fastmath::exp2(x) - x.exp2()).abs() / x.exp2();
            worst = worst.max(rel);
        }
        assert!(worst < 4e-15, "max rel error {worst:e}");
    }

    #[test]
    fn fast_trig_matches_std() {
        let mut worst = 0.0f64;
        for u in lcg_stream(200_000) {
            let x = (f64::unit_open01(u) - 0.5) * 2.0 * std::f64::consts::PI;
            worst = worst.max((fastmath::sin_npi(x) - x.sin()).abs());
            worst = worst.max((fastmath::cos_npi(x) - x.cos()).abs());
        }
        assert!(worst < 4e-15, "max abs error {worst:e}");
    }

    #[test]
    fn fast_powf_roundtrip() {
        let mut worst = 0.0f64;
        for u in lcg_stream(100_000) {
            let x = f64::unit_open01(u);
            let expect = x.powf(-2.0 / 3.0);
            let got = x.fast_powf(-2.0 / 3.0);
            worst = worst.max(((got - expect) / expect).abs());
        }
        assert!(worst < 1e-13, "max rel error {worst:e}");
    }

    #[test]
    fn special_functions_delegate() {
        // Γ(0.5) = √π, erfc(0) = 1.
        assert!((Real::ln_gamma(0.5f64) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((Real::erfc(0.0f64) - 1.0).abs() < 1e-15);
        assert!((Real::ln_gamma(0.5f32) - (std::f32::consts::PI.sqrt().ln())).abs() < 1e-6);
    }
}
