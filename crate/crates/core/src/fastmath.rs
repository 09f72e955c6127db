//! Branch-free natural log and exponential used by the kernel hot loops.
//!
//! Both routines are built only from IEEE-754 add/mul/div and integer bit
//! manipulation, so the compiler can vectorize them and every SIMD width
//! produces bit-identical results. Accuracy is within a couple of ulp of
//! the correctly rounded value (checked against libm in the tests).

#![allow(clippy::excessive_precision)]

const LG1: f64 = 6.666_666_666_666_735_13e-1;
const LG2: f64 = 3.999_999_999_940_941_908e-1;
const LG3: f64 = 2.857_142_874_366_239_149e-1;
const LG4: f64 = 2.222_219_843_214_978_396e-1;
const LG5: f64 = 1.818_357_216_161_805_012e-1;
const LG6: f64 = 1.531_383_769_920_937_332e-1;
const LG7: f64 = 1.479_819_860_511_658_591e-1;
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const INV_LN2: f64 = std::f64::consts::LOG2_E;
/// 1.5 * 2^52: adding it rounds to the nearest integer and exposes that
/// integer in the low mantissa bits.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;
/// 2^52, the exponent-field trick for integer -> f64 without a cvt instruction.
const TWO52: f64 = 4_503_599_627_370_496.0;

/// Largest |y| accepted by [`exp_fast`]; beyond it the 2^k scaling would
/// leave the normal range.
pub const EXP_FAST_LIMIT: f64 = 700.0;

/// Natural logarithm of a positive, finite, normal `x`.
#[inline(always)]
pub fn ln_fast(x: f64) -> f64 {
    let bits = x.to_bits();
    // Shift the exponent so that the reduced mantissa lands in [sqrt(2)/2, sqrt(2)).
    let hx = (bits >> 32) + (0x3ff0_0000 - 0x3fe6_a09e);
    let k = f64::from_bits(0x4330_0000_0000_0000 | (hx >> 20)) - (TWO52 + 1023.0);
    let hx = (hx & 0x000f_ffff) + 0x3fe6_a09e;
    let m = f64::from_bits((hx << 32) | (bits & 0xffff_ffff));

    let f = m - 1.0;
    let hfsq = 0.5 * f * f;
    let s = f / (2.0 + f);
    let z = s * s;
    let w = z * z;
    let t1 = w * (LG2 + w * (LG4 + w * LG6));
    let t2 = z * (LG1 + w * (LG3 + w * (LG5 + w * LG7)));
    let r = t2 + t1;
    s * (hfsq + r) + k * LN2_LO - hfsq + f + k * LN2_HI
}

/// `e^y` for `|y| <= EXP_FAST_LIMIT`.
#[inline(always)]
pub fn exp_fast(y: f64) -> f64 {
    let shifted = y * INV_LN2 + ROUND_MAGIC;
    let k = shifted - ROUND_MAGIC;
    let r = (y - k * LN2_HI) - k * LN2_LO;

    // Taylor polynomial through r^13; |r| <= ln(2)/2 keeps the truncation
    // error below 1e-17 relative.
    let mut p = 1.0 / 6_227_020_800.0;
    p = p * r + 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    let e = p * r + 1.0;

    let scale = shifted.to_bits().wrapping_sub(ROUND_MAGIC.to_bits()) << 52;
    f64::from_bits(e.to_bits().wrapping_add(scale))
}

/// `q^(-beta)` for `q >= 1`, `beta >= 0`, in the range where the fast path is valid.
#[inline(always)]
pub fn inv_pow_fast(q: f64, beta: f64) -> f64 {
    exp_fast(-beta * ln_fast(q))
}

/// `q^(-beta)` for any `q >= 1`: fast path, falling back to libm when the
/// result would underflow the fast exponential.
#[inline]
pub fn inv_pow(q: f64, beta: f64) -> f64 {
    let y = -beta * ln_fast(q);
    if y >= -EXP_FAST_LIMIT {
        exp_fast(y)
    } else {
        q.powf(-beta)
    }
}
