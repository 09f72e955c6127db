//! Symmetric, distance-decreasing interaction kernels.
//!
//! The canonical family is `r(s) = K / (1 + s^2)^beta`. A single amplitude
//! `K` serves as both the upper bound of the kernel (attained at `s = 0`)
//! and the coefficient of its algebraic lower bound, so every decay
//! envelope downstream is evaluated with the same constant.
//!
//! Simulation code is generic over [`InteractionKernel`], so any symmetric
//! nonincreasing rate can drive the dynamics; the closed-form envelopes in
//! [`crate::diagnostics`] are only defined for [`Kernel`].

use serde::{Deserialize, Serialize};

use crate::error::{FlockError, Result};
use crate::fastmath;

/// A pair interaction rate depending only on the distance between two agents.
///
/// Implementations must be nonincreasing in distance and bounded above by
/// [`InteractionKernel::upper_bound`]; the pair sums rely on symmetry
/// `r(x, y) = r(y, x)`, which holds automatically for a function of `|x - y|`.
pub trait InteractionKernel: Sync {
    /// Rate at squared distance `dist_sq >= 0`.
    fn rate_sq(&self, dist_sq: f64) -> f64;

    /// Batched [`InteractionKernel::rate_sq`]: `out[j] = rate_sq(dist_sq[j])`.
    #[inline(always)]
    fn rates_sq(&self, dist_sq: &[f64], out: &mut [f64]) {
        for (o, &s2) in out.iter_mut().zip(dist_sq) {
            *o = self.rate_sq(s2);
        }
    }

    /// Supremum of the rate, `r(0)`.
    fn upper_bound(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Constant,
    InvFourthRoot,
    InvSqrt,
    Reciprocal,
    General,
}

impl Shape {
    fn for_beta(beta: f64) -> Self {
        if beta == 0.0 {
            Shape::Constant
        } else if beta == 0.25 {
            Shape::InvFourthRoot
        } else if beta == 0.5 {
            Shape::InvSqrt
        } else if beta == 1.0 {
            Shape::Reciprocal
        } else {
            Shape::General
        }
    }
}

/// `r(s) = amplitude / (1 + s^2)^beta`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(try_from = "KernelParams", into = "KernelParams")]
pub struct Kernel {
    amplitude: f64,
    beta: f64,
    shape: Shape,
    /// Above this `1 + s^2` the fast exponential would underflow.
    fast_q_limit: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct KernelParams {
    amplitude: f64,
    beta: f64,
}

impl TryFrom<KernelParams> for Kernel {
    type Error = FlockError;

    fn try_from(p: KernelParams) -> Result<Self> {
        Kernel::new(p.amplitude, p.beta)
    }
}

impl From<Kernel> for KernelParams {
    fn from(k: Kernel) -> Self {
        KernelParams {
            amplitude: k.amplitude,
            beta: k.beta,
        }
    }
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        self.amplitude == other.amplitude && self.beta == other.beta
    }
}

impl Kernel {
    pub fn new(amplitude: f64, beta: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(FlockError::Domain(format!(
                "kernel amplitude must be positive and finite, got {amplitude}"
            )));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(FlockError::Domain(format!(
                "kernel beta must be nonnegative and finite, got {beta}"
            )));
        }
        let fast_q_limit = if beta > 0.0 {
            (fastmath::EXP_FAST_LIMIT / beta).exp()
        } else {
            f64::INFINITY
        };
        Ok(Kernel {
            amplitude,
            beta,
            shape: Shape::for_beta(beta),
            fast_q_limit,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Kernel value at `distance`.
    pub fn eval(&self, distance: f64) -> Result<f64> {
        if !(distance >= 0.0) {
            return Err(FlockError::Domain(format!(
                "kernel distance must be nonnegative, got {distance}"
            )));
        }
        Ok(self.rate_sq(distance * distance))
    }

    /// Pair rate `r(|x - y|)` between two points of equal dimension.
    pub fn pair_rate(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let d2 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        self.rate_sq(d2)
    }

    #[inline(always)]
    fn profile(&self, q: f64) -> f64 {
        match self.shape {
            Shape::Constant => 1.0,
            Shape::InvFourthRoot => 1.0 / q.sqrt().sqrt(),
            Shape::InvSqrt => 1.0 / q.sqrt(),
            Shape::Reciprocal => 1.0 / q,
            Shape::General => {
                if q <= self.fast_q_limit {
                    fastmath::inv_pow_fast(q, self.beta)
                } else {
                    q.powf(-self.beta)
                }
            }
        }
    }
}

impl InteractionKernel for Kernel {
    #[inline(always)]
    fn rate_sq(&self, dist_sq: f64) -> f64 {
        self.amplitude * self.profile(1.0 + dist_sq)
    }

    #[inline(always)]
    fn rates_sq(&self, dist_sq: &[f64], out: &mut [f64]) {
        let amp = self.amplitude;
        let out = &mut out[..dist_sq.len()];
        // One branch-free loop per shape so each vectorizes on its own.
        match self.shape {
            Shape::Constant => out.fill(amp),
            Shape::InvFourthRoot => {
                for (o, &s2) in out.iter_mut().zip(dist_sq) {
                    *o = amp * (1.0 / (1.0 + s2).sqrt().sqrt());
                }
            }
            Shape::InvSqrt => {
                for (o, &s2) in out.iter_mut().zip(dist_sq) {
                    *o = amp * (1.0 / (1.0 + s2).sqrt());
                }
            }
            Shape::Reciprocal => {
                for (o, &s2) in out.iter_mut().zip(dist_sq) {
                    *o = amp * (1.0 / (1.0 + s2));
                }
            }
            Shape::General => {
                let beta = self.beta;
                let mut far = false;
                for (o, &s2) in out.iter_mut().zip(dist_sq) {
                    let q = 1.0 + s2;
                    far |= q > self.fast_q_limit;
                    *o = amp * fastmath::inv_pow_fast(q, beta);
                }
                if far {
                    for (o, &s2) in out.iter_mut().zip(dist_sq) {
                        if 1.0 + s2 > self.fast_q_limit {
                            *o = amp * (1.0 + s2).powf(-beta);
                        }
                    }
                }
            }
        }
    }

    fn upper_bound(&self) -> f64 {
        self.amplitude
    }
}
