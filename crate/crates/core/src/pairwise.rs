//! O(N^2) pair sums shared by the particle and kinetic solvers.
//!
//! Each unordered pair is evaluated once. Rows are grouped into fixed-size
//! blocks that depend only on the number of samples; every block writes its
//! own partial accumulator and the partials are combined in block order.
//! The floating-point summation order is therefore independent of how many
//! threads rayon uses.

use rayon::prelude::*;

use crate::kernels::InteractionKernel;

const BLOCK_ROWS: usize = 128;
const LANES: usize = 8;

/// Component-major copy of an `n x dim` row-major array.
pub(crate) fn to_component_major(flat: &[f64], dim: usize) -> Vec<f64> {
    let n = flat.len() / dim;
    let mut out = vec![0.0; flat.len()];
    for (i, row) in flat.chunks_exact(dim).enumerate() {
        for (c, &x) in row.iter().enumerate() {
            out[c * n + i] = x;
        }
    }
    out
}

#[inline(always)]
fn lane_sum(lanes: &[f64; LANES]) -> f64 {
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
}

/// Squared distances from row `i` to rows `i+1..n`, written into `s2[..n-i-1]`.
#[inline(always)]
fn distances_after(pos: &[f64], n: usize, dim: usize, i: usize, s2: &mut [f64]) {
    let m = n - i - 1;
    let s2 = &mut s2[..m];
    s2.fill(0.0);
    for c in 0..dim {
        let comp = &pos[c * n..(c + 1) * n];
        let xi = comp[i];
        for (s, &xj) in s2.iter_mut().zip(&comp[i + 1..]) {
            let d = xi - xj;
            *s += d * d;
        }
    }
}

struct Block<'a> {
    pos: &'a [f64],
    vel: &'a [f64],
    weights: &'a [f64],
    n: usize,
    dim: usize,
    lo: usize,
    hi: usize,
}

/// Columns processed together; a multiple of `LANES` so every chunk except
/// the last in a row is a whole number of lane groups.
const CHUNK: usize = 128;

/// Alignment contributions of the pairs whose first index lies in `lo..hi`.
/// Returns a component-major partial covering rows `lo..n`.
///
/// For each pair `i < j` the term `t = r_ij (v_j - v_i)` is added to row `i`
/// weighted by `w_j` and subtracted from row `j` weighted by `w_i`. Columns
/// are walked in chunks small enough that distances and rates stay in L1.
#[inline(always)]
fn alignment_block<K: InteractionKernel>(kernel: &K, blk: &Block<'_>) -> Vec<f64> {
    match blk.dim {
        1 => alignment_block_fixed::<K, 1>(kernel, blk),
        2 => alignment_block_fixed::<K, 2>(kernel, blk),
        3 => alignment_block_fixed::<K, 3>(kernel, blk),
        _ => alignment_block_any(kernel, blk),
    }
}

#[inline(always)]
fn alignment_block_fixed<K: InteractionKernel, const D: usize>(kernel: &K, blk: &Block<'_>) -> Vec<f64> {
    let Block {
        pos,
        vel,
        weights,
        n,
        lo,
        hi,
        ..
    } = *blk;
    let span = n - lo;
    let mut partial = vec![0.0; span * D];
    let mut s2 = [0.0; CHUNK];
    let mut rate = [0.0; CHUNK];

    for i in lo..hi {
        let wi = weights[i];
        let xi: [f64; D] = std::array::from_fn(|c| pos[c * n + i]);
        let vi: [f64; D] = std::array::from_fn(|c| vel[c * n + i]);
        let mut lanes = [[0.0; LANES]; D];
        let mut tail = [0.0; D];
        let mut j0 = i + 1;
        while j0 < n {
            let len = CHUNK.min(n - j0);
            let s2 = &mut s2[..len];
            s2.fill(0.0);
            for c in 0..D {
                for (s, &xj) in s2.iter_mut().zip(&pos[c * n + j0..c * n + j0 + len]) {
                    let d = xi[c] - xj;
                    *s += d * d;
                }
            }
            let rate = &mut rate[..len];
            kernel.rates_sq(s2, rate);
            let w = &weights[j0..j0 + len];
            let whole = len - len % LANES;
            for c in 0..D {
                let vj = &vel[c * n + j0..c * n + j0 + len];
                let acc = &mut partial[c * span + (j0 - lo)..c * span + (j0 - lo) + len];
                let lane = &mut lanes[c];
                for g in (0..whole).step_by(LANES) {
                    for l in 0..LANES {
                        let k = g + l;
                        let t = rate[k] * (vj[k] - vi[c]);
                        lane[l] += w[k] * t;
                        acc[k] -= wi * t;
                    }
                }
                for k in whole..len {
                    let t = rate[k] * (vj[k] - vi[c]);
                    tail[c] += w[k] * t;
                    acc[k] -= wi * t;
                }
            }
            j0 += len;
        }
        for c in 0..D {
            partial[c * span + (i - lo)] += lane_sum(&lanes[c]) + tail[c];
        }
    }
    partial
}

/// Dimension-generic fallback of [`alignment_block_fixed`].
#[inline(always)]
fn alignment_block_any<K: InteractionKernel>(kernel: &K, blk: &Block<'_>) -> Vec<f64> {
    let Block {
        pos,
        vel,
        weights,
        n,
        dim,
        lo,
        hi,
    } = *blk;
    let span = n - lo;
    let mut partial = vec![0.0; span * dim];
    let mut s2 = vec![0.0; n];
    let mut rate = vec![0.0; n];

    for i in lo..hi {
        let m = n - i - 1;
        if m == 0 {
            continue;
        }
        distances_after(pos, n, dim, i, &mut s2);
        kernel.rates_sq(&s2[..m], &mut rate[..m]);
        let wi = weights[i];
        let w = &weights[i + 1..];
        for c in 0..dim {
            let comp = &vel[c * n..(c + 1) * n];
            let vi = comp[i];
            let acc = &mut partial[c * span..(c + 1) * span];
            let mut row = 0.0;
            for (k, (&r, &v)) in rate[..m].iter().zip(&comp[i + 1..]).enumerate() {
                let t = r * (v - vi);
                row += w[k] * t;
                acc[i - lo + 1 + k] -= wi * t;
            }
            acc[i - lo] += row;
        }
    }
    partial
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512dq,avx512vl")]
unsafe fn alignment_block_avx512<K: InteractionKernel>(kernel: &K, blk: &Block<'_>) -> Vec<f64> {
    alignment_block(kernel, blk)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn alignment_block_avx2<K: InteractionKernel>(kernel: &K, blk: &Block<'_>) -> Vec<f64> {
    alignment_block(kernel, blk)
}

fn dispatch_alignment_block<K: InteractionKernel>(kernel: &K, blk: &Block<'_>) -> Vec<f64> {
    // None of the enabled features include FMA, so all variants round identically.
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx512f")
            && std::is_x86_feature_detected!("avx512dq")
            && std::is_x86_feature_detected!("avx512vl")
        {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { alignment_block_avx512(kernel, blk) };
        }
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: as above.
            return unsafe { alignment_block_avx2(kernel, blk) };
        }
    }
    alignment_block(kernel, blk)
}

/// Velocity-alignment field `out_i = sum_j w_j r(|x_i - x_j|) (v_j - v_i)`.
///
/// `pos`, `vel` and `out` are row-major `n x dim`; `weights` has length `n`.
pub fn alignment_field<K: InteractionKernel>(
    kernel: &K,
    pos: &[f64],
    vel: &[f64],
    weights: &[f64],
    dim: usize,
    out: &mut [f64],
) {
    let n = weights.len();
    debug_assert_eq!(pos.len(), n * dim);
    debug_assert_eq!(vel.len(), n * dim);
    debug_assert_eq!(out.len(), n * dim);
    let pos_cm = to_component_major(pos, dim);
    let vel_cm = to_component_major(vel, dim);
    let blocks = n.div_ceil(BLOCK_ROWS);
    let partials: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let blk = Block {
                pos: &pos_cm,
                vel: &vel_cm,
                weights,
                n,
                dim,
                lo: b * BLOCK_ROWS,
                hi: ((b + 1) * BLOCK_ROWS).min(n),
            };
            dispatch_alignment_block(kernel, &blk)
        })
        .collect();

    let mut combined = vec![0.0; n * dim];
    for (b, partial) in partials.iter().enumerate() {
        let lo = b * BLOCK_ROWS;
        let span = n - lo;
        for c in 0..dim {
            let dst = &mut combined[c * n + lo..(c + 1) * n];
            for (d, &p) in dst.iter_mut().zip(&partial[c * span..(c + 1) * span]) {
                *d += p;
            }
        }
    }
    for i in 0..n {
        for c in 0..dim {
            out[i * dim + c] = combined[c * n + i];
        }
    }
}

/// Pairwise reductions needed by the diagnostics, all over ordered pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSums {
    /// `sum_{i != j} w_i w_j r_ij`.
    pub off_diagonal_rate: f64,
    /// `sum_{i,j} w_i w_j r_ij |v_i - v_j|^2`.
    pub dissipation: f64,
    /// `max_{i,j} |x_i - x_j|^2`.
    pub max_dist_sq: f64,
}

#[derive(Clone, Copy, Default)]
struct RowSums {
    rate: f64,
    dissipation: f64,
    max_dist_sq: f64,
}

/// Evaluates [`PairSums`] for a weighted point cloud.
pub fn pair_sums<K: InteractionKernel>(
    kernel: &K,
    pos: &[f64],
    vel: &[f64],
    weights: &[f64],
    dim: usize,
) -> PairSums {
    let n = weights.len();
    let pos_cm = to_component_major(pos, dim);
    let vel_cm = to_component_major(vel, dim);
    let rows: Vec<RowSums> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n], vec![0.0; n]),
            |(s2, rate, dv2), i| {
                let m = n - i - 1;
                if m == 0 {
                    return RowSums::default();
                }
                distances_after(&pos_cm, n, dim, i, s2);
                kernel.rates_sq(&s2[..m], &mut rate[..m]);
                let dv2 = &mut dv2[..m];
                dv2.fill(0.0);
                for c in 0..dim {
                    let comp = &vel_cm[c * n..(c + 1) * n];
                    let vi = comp[i];
                    for (d, &v) in dv2.iter_mut().zip(&comp[i + 1..]) {
                        let e = v - vi;
                        *d += e * e;
                    }
                }
                let w = &weights[i + 1..];
                let mut wr = 0.0;
                let mut wrd = 0.0;
                let mut mx: f64 = 0.0;
                for j in 0..m {
                    let a = w[j] * rate[j];
                    wr += a;
                    wrd += a * dv2[j];
                    mx = mx.max(s2[j]);
                }
                RowSums {
                    rate: weights[i] * wr,
                    dissipation: weights[i] * wrd,
                    max_dist_sq: mx,
                }
            },
        )
        .collect();
    let mut sums = PairSums {
        off_diagonal_rate: 0.0,
        dissipation: 0.0,
        max_dist_sq: 0.0,
    };
    for r in &rows {
        sums.off_diagonal_rate += r.rate;
        sums.dissipation += r.dissipation;
        sums.max_dist_sq = sums.max_dist_sq.max(r.max_dist_sq);
    }
    sums.off_diagonal_rate *= 2.0;
    sums.dissipation *= 2.0;
    sums
}

/// Largest squared pairwise distance, `max_{i,j} |x_i - x_j|^2`.
pub fn max_pair_dist_sq(pos: &[f64], dim: usize) -> f64 {
    let n = pos.len() / dim;
    let pos_cm = to_component_major(pos, dim);
    (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |s2, i| {
                let m = n - i - 1;
                distances_after(&pos_cm, n, dim, i, s2);
                s2[..m].iter().fold(0.0f64, |a, &b| a.max(b))
            },
        )
        .reduce(|| 0.0, f64::max)
}
