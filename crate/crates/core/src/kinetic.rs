//! Mean-field (Vlasov-type) flocking through a weighted empirical measure.
//!
//! The density `f(x, v, t)` is represented by samples `(x_i, v_i, w_i)`
//! that move along the characteristics
//!
//! ```text
//! x' = v,    v' = lambda Q(f)(x, v),    Q(f)(x, v) = sum_j w_j r(|x - y_j|) (v_j - v)
//! ```
//!
//! The weights never change, so total mass is conserved bit for bit.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{EnvelopeParams, PhiIntegral};
use crate::error::{FlockError, Result};
use crate::integrate::Rk4Workspace;
use crate::io::fmt_f64;
use crate::kernels::{InteractionKernel, Kernel};
use crate::pairwise;
use crate::particle::{parse_row, SimConfig};

/// Weighted phase-space samples at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    t: f64,
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    weights: Vec<f64>,
}

impl Ensemble {
    pub fn new(t: f64, dim: usize, positions: Vec<f64>, velocities: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(FlockError::Integrity("dimension must be at least 1".into()));
        }
        if weights.is_empty() || positions.len() != weights.len() * dim || velocities.len() != positions.len() {
            return Err(FlockError::Integrity(format!(
                "inconsistent ensemble shape: {} positions, {} velocities, {} weights, dim {dim}",
                positions.len(),
                velocities.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(FlockError::Integrity(format!(
                "weight of sample {i} must be positive, got {}",
                weights[i]
            )));
        }
        let e = Ensemble {
            t,
            dim,
            positions,
            velocities,
            weights,
        };
        e.check_finite()?;
        Ok(e)
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(i) = self
            .positions
            .iter()
            .chain(&self.velocities)
            .position(|x| !x.is_finite())
        {
            let n = self.positions.len();
            let idx = if i < n { i } else { i - n };
            return Err(FlockError::Integrity(format!(
                "non-finite entry in sample {}",
                idx / self.dim
            )));
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    /// Total mass, summed with compensation so equal weights `m / M` add
    /// back to `m`.
    pub fn mass(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// CSV with columns `x_1..x_d, v_1..v_d, w`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<String> = (1..=self.dim).map(|c| format!("x_{c}")).collect();
        header.extend((1..=self.dim).map(|c| format!("v_{c}")));
        header.push("w".into());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.position(i).iter().map(|x| fmt_f64(*x)).collect();
            row.extend(self.velocity(i).iter().map(|x| fmt_f64(*x)));
            row.push(fmt_f64(self.weights[i]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the format written by [`Ensemble::write_csv`].
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| FlockError::Integrity("empty ensemble CSV".into()))??;
        let cols = header.split(',').count();
        if cols < 3 || cols % 2 == 0 {
            return Err(FlockError::Integrity(format!(
                "ensemble CSV header must have 2*d + 1 columns, got {cols}"
            )));
        }
        let dim = (cols - 1) / 2;
        let (mut x, mut v, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = parse_row(&line, cols, lineno + 2)?;
            x.extend_from_slice(&vals[..dim]);
            v.extend_from_slice(&vals[dim..2 * dim]);
            w.push(vals[2 * dim]);
        }
        Ensemble::new(0.0, dim, x, v, w)
    }
}

pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Velocity law of a product initial density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityLaw {
    /// Gaussian conditioned on `|v - mean| <= radius`; `radius` is required.
    Gaussian {
        mean: Vec<f64>,
        std: f64,
        radius: Option<f64>,
    },
    /// Uniform on the ball `|v - center| <= radius`.
    Ball { center: Vec<f64>, radius: f64 },
}

/// Compactly supported initial density to sample from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDensitySpec {
    /// Point mass at `(position, velocity)`.
    Dirac {
        position: Vec<f64>,
        velocity: Vec<f64>,
        mass: f64,
    },
    /// Uniform box in `x` times a velocity law.
    Product {
        box_lower: Vec<f64>,
        box_upper: Vec<f64>,
        velocity: VelocityLaw,
        mass: f64,
    },
}

impl InitialDensitySpec {
    pub fn dim(&self) -> usize {
        match self {
            InitialDensitySpec::Dirac { position, .. } => position.len(),
            InitialDensitySpec::Product { box_lower, .. } => box_lower.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(FlockError::Spec("dimension must be at least 1".into()));
        }
        let mass = match self {
            InitialDensitySpec::Dirac { velocity, mass, .. } => {
                if velocity.len() != d {
                    return Err(FlockError::Spec("position and velocity differ in dimension".into()));
                }
                *mass
            }
            InitialDensitySpec::Product {
                box_lower,
                box_upper,
                velocity,
                mass,
            } => {
                if box_upper.len() != d || box_lower.iter().zip(box_upper).any(|(a, b)| !(a <= b)) {
                    return Err(FlockError::Spec("box bounds malformed".into()));
                }
                match velocity {
                    VelocityLaw::Gaussian { mean, std, radius } => {
                        if mean.len() != d {
                            return Err(FlockError::Spec("velocity mean has wrong dimension".into()));
                        }
                        if !(*std > 0.0 && std.is_finite()) {
                            return Err(FlockError::Spec(format!("std must be positive, got {std}")));
                        }
                        match radius {
                            None => {
                                return Err(FlockError::Spec(
                                    "Gaussian velocities need a truncation radius for compact support".into(),
                                ))
                            }
                            Some(r) if !(*r > 0.0 && r.is_finite()) => {
                                return Err(FlockError::Spec(format!("radius must be positive, got {r}")))
                            }
                            _ => {}
                        }
                    }
                    VelocityLaw::Ball { center, radius } => {
                        if center.len() != d {
                            return Err(FlockError::Spec("ball center has wrong dimension".into()));
                        }
                        if !(*radius >= 0.0 && radius.is_finite()) {
                            return Err(FlockError::Spec(format!("radius must be nonnegative, got {radius}")));
                        }
                    }
                }
                *mass
            }
        };
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(FlockError::Spec(format!("mass must be positive, got {mass}")));
        }
        Ok(())
    }
}

/// `m` i.i.d. samples of `spec`, each with weight `mass / m`.
pub fn sample_initial(spec: &InitialDensitySpec, m: usize, seed: u64) -> Result<Ensemble> {
    spec.validate()?;
    if m == 0 {
        return Err(FlockError::Spec("need at least one sample".into()));
    }
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(m * d);
    let mut v = Vec::with_capacity(m * d);
    let mass = match spec {
        InitialDensitySpec::Dirac {
            position,
            velocity,
            mass,
        } => {
            for _ in 0..m {
                x.extend_from_slice(position);
                v.extend_from_slice(velocity);
            }
            *mass
        }
        InitialDensitySpec::Product {
            box_lower,
            box_upper,
            velocity,
            mass,
        } => {
            let mut dv = vec![0.0; d];
            for _ in 0..m {
                for c in 0..d {
                    let u: f64 = rng.gen();
                    x.push(box_lower[c] + (box_upper[c] - box_lower[c]) * u);
                }
                match velocity {
                    VelocityLaw::Gaussian { mean, std, radius } => {
                        let r = radius.expect("validated");
                        loop {
                            for e in dv.iter_mut() {
                                *e = std * rng.sample::<f64, _>(StandardNormal);
                            }
                            if dv.iter().map(|e| e * e).sum::<f64>() <= r * r {
                                break;
                            }
                        }
                        v.extend(mean.iter().zip(&dv).map(|(a, b)| a + b));
                    }
                    VelocityLaw::Ball { center, radius } => {
                        loop {
                            for e in dv.iter_mut() {
                                *e = rng.gen_range(-1.0..=1.0);
                            }
                            if dv.iter().map(|e| e * e).sum::<f64>() <= 1.0 {
                                break;
                            }
                        }
                        v.extend(center.iter().zip(&dv).map(|(a, b)| a + radius * b));
                    }
                }
            }
            *mass
        }
    };
    let w = mass / m as f64;
    Ensemble::new(0.0, d, x, v, vec![w; m])
}

/// Empirical alignment force `sum_j w_j r(|x - y_j|) (v_j - v)` at `(x, v)`.
pub fn q_force<K: InteractionKernel>(ensemble: &Ensemble, kernel: &K, x: &[f64], v: &[f64]) -> Vec<f64> {
    let d = ensemble.dim;
    let mut out = vec![0.0; d];
    for j in 0..ensemble.len() {
        let y = ensemble.position(j);
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        let wr = ensemble.weights[j] * kernel.rate_sq(d2);
        for (o, (vs, vq)) in out.iter_mut().zip(ensemble.velocity(j).iter().zip(v)) {
            *o += wr * (vs - vq);
        }
    }
    out
}

fn advance<K: InteractionKernel>(ws: &mut Rk4Workspace, e: &mut Ensemble, lambda: f64, kernel: &K, dt: f64) -> bool {
    let dim = e.dim;
    let weights = &e.weights;
    ws.step(&mut e.positions, &mut e.velocities, dt, |x, v, a| {
        pairwise::alignment_field(kernel, x, v, weights, dim, a);
        for ai in a.iter_mut() {
            *ai *= lambda;
        }
    });
    e.t += dt;
    e.positions.iter().chain(&e.velocities).all(|x| x.is_finite())
}

/// One RK4 step of the characteristic system; every stage uses the
/// whole ensemble at that stage.
pub fn step_ensemble<K: InteractionKernel>(ensemble: &Ensemble, lambda: f64, kernel: &K, dt: f64) -> Result<Ensemble> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FlockError::Domain(format!("dt must be positive, got {dt}")));
    }
    step_signed(ensemble, lambda, kernel, dt)
}

/// RK4 step of either sign; the characteristic flow is reversible.
pub(crate) fn step_signed<K: InteractionKernel>(ensemble: &Ensemble, lambda: f64, kernel: &K, dt: f64) -> Result<Ensemble> {
    let mut next = ensemble.clone();
    let mut ws = Rk4Workspace::default();
    if !advance(&mut ws, &mut next, lambda, kernel, dt) {
        return Err(FlockError::Overflow {
            step: (ensemble.t / dt.abs()).round() as usize + 1,
            time: next.t,
        });
    }
    Ok(next)
}

/// Macroscopic moments and support radii of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KineticStats {
    #[serde(rename = "M0")]
    pub m0: f64,
    #[serde(rename = "M1")]
    pub m1: Vec<f64>,
    #[serde(rename = "M2")]
    pub m2: f64,
    /// Energy fluctuation `sum_i w_i |v_i - u_c|^2`.
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub u_c: Vec<f64>,
    /// `max_i |x_i|`.
    pub zeta: f64,
    /// `max_i |v_i|`.
    pub eta: f64,
    #[serde(rename = "I0")]
    pub i0: f64,
    /// `sqrt(M0 M2)` of this snapshot.
    #[serde(rename = "J0")]
    pub j0: f64,
}

pub fn kinetic_stats(ensemble: &Ensemble) -> KineticStats {
    let d = ensemble.dim;
    let m0 = ensemble.mass();
    let mut m1 = vec![0.0; d];
    let mut m2 = 0.0;
    let mut zeta: f64 = 0.0;
    let mut eta: f64 = 0.0;
    for i in 0..ensemble.len() {
        let w = ensemble.weights[i];
        let v = ensemble.velocity(i);
        let mut v2 = 0.0;
        for c in 0..d {
            m1[c] += w * v[c];
            v2 += v[c] * v[c];
        }
        m2 += w * v2;
        eta = eta.max(v2.sqrt());
        zeta = zeta.max(ensemble.position(i).iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    let u_c: Vec<f64> = m1.iter().map(|x| x / m0).collect();
    let mut lambda = 0.0;
    for i in 0..ensemble.len() {
        let dv2: f64 = ensemble.velocity(i).iter().zip(&u_c).map(|(a, b)| (a - b) * (a - b)).sum();
        lambda += ensemble.weights[i] * dv2;
    }
    KineticStats {
        m0,
        m1,
        m2,
        lambda,
        u_c,
        zeta,
        eta,
        i0: m0,
        j0: (m0 * m2).sqrt(),
    }
}

/// Bounds `(-B, B)` on every velocity component (and on `|v|`) at time
/// `t`, with `B = eta0 + J0/I0 + lambda K J0 t`.
pub fn velocity_trajectory_bounds(stats0: &KineticStats, kernel: &Kernel, lambda: f64, t: f64) -> (f64, f64) {
    let b = stats0.eta + stats0.j0 / stats0.i0 + lambda * kernel.amplitude() * stats0.j0 * t;
    (-b, b)
}

/// `K kappa3^-beta (1 + t^2 + t^4)^-beta`.
pub fn phi_kinetic_envelope(kappa3: f64, amplitude: f64, beta: f64, t: f64) -> f64 {
    let t2 = t * t;
    amplitude * kappa3.powf(-beta) * (1.0 + t2 + t2 * t2).powf(-beta)
}

/// Regime bound on `Lambda(t)`: `Lambda0 e^{-kappa4 t^{1-4 beta}}` for
/// `beta < 1/4` (unit prefactor) and `Lambda0 (1 + t)^{-kappa5}` for `beta = 1/4`.
pub fn lambda_envelope(params: &EnvelopeParams, lambda0: f64, t: f64) -> Result<f64> {
    if params.beta < 0.25 {
        Ok(lambda0 * (-params.kappa4()? * t.powf(1.0 - 4.0 * params.beta)).exp())
    } else if params.beta == 0.25 {
        Ok(lambda0 * (1.0 + t).powf(-params.kappa5()?))
    } else {
        Err(FlockError::Regime(format!(
            "no energy-fluctuation decay rate for beta = {} > 1/4",
            params.beta
        )))
    }
}

/// `Lambda0 e^{-2 lambda I0 Phi(t)}` for a measured `Phi(t)`.
pub fn sharp_lambda_envelope(lambda0: f64, lambda: f64, i0: f64, phi_integral: f64) -> f64 {
    lambda0 * (-2.0 * lambda * i0 * phi_integral).exp()
}

/// `M2(0) e^{-2 c t} + |M1|^2/M0 (1 - e^{-2 c t})` for a decay coefficient `c`.
pub fn energy_lower_bound(m2_0: f64, m1_sq_over_m0: f64, c: f64, t: f64) -> f64 {
    let e = (-2.0 * c * t).exp();
    m2_0 * e + m1_sq_over_m0 * (1.0 - e)
}

/// `lambda sum_{i,j} w_i w_j r(|x_i - x_j|)`, diagonal included.
pub fn entropy_production_rate<K: InteractionKernel>(ensemble: &Ensemble, kernel: &K, lambda: f64) -> f64 {
    let sums = pairwise::pair_sums(kernel, &ensemble.positions, &ensemble.velocities, &ensemble.weights, ensemble.dim);
    entropy_rate_from(&sums, ensemble, kernel, lambda)
}

fn entropy_rate_from<K: InteractionKernel>(sums: &pairwise::PairSums, e: &Ensemble, kernel: &K, lambda: f64) -> f64 {
    let diag: f64 = e.weights.iter().map(|w| w * w).sum::<f64>() * kernel.rate_sq(0.0);
    lambda * (sums.off_diagonal_rate + diag)
}

/// `sum_{i,j} w_i w_j r_ij |v_i - v_j|^2`; `d Lambda / dt = -lambda` times this.
pub fn dissipation<K: InteractionKernel>(ensemble: &Ensemble, kernel: &K) -> f64 {
    pairwise::pair_sums(kernel, &ensemble.positions, &ensemble.velocities, &ensemble.weights, ensemble.dim).dissipation
}

/// Histogram estimate of the phase-space density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseHistogram {
    pub bins_per_axis: usize,
    /// `sum_c m_c log(m_c / vol_c)`, an estimate of `int f log f`.
    pub entropy: f64,
    /// `max_c m_c / vol_c`.
    pub max_density: f64,
}

/// Bins per phase-space axis so that a uniform fill puts ~20 samples per cell.
pub fn histogram_bins(samples: usize, dim: usize) -> usize {
    ((samples as f64 / 20.0).powf(1.0 / (2 * dim) as f64).floor() as usize).max(1)
}

/// Histogram of the ensemble on its own phase-space bounding box. Axes with
/// zero extent get unit width.
pub fn phase_histogram(ensemble: &Ensemble) -> PhaseHistogram {
    let d = ensemble.dim;
    let nb = histogram_bins(ensemble.len(), d);
    let axes = 2 * d;
    let mut lo = vec![f64::INFINITY; axes];
    let mut hi = vec![f64::NEG_INFINITY; axes];
    let coord = |i: usize, a: usize| {
        if a < d {
            ensemble.position(i)[a]
        } else {
            ensemble.velocity(i)[a - d]
        }
    };
    for i in 0..ensemble.len() {
        for a in 0..axes {
            lo[a] = lo[a].min(coord(i, a));
            hi[a] = hi[a].max(coord(i, a));
        }
    }
    let width: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| if h > l { (h - l) / nb as f64 } else { 1.0 })
        .collect();
    let vol: f64 = width.iter().product();
    let mut cells = vec![0.0; nb.pow(axes as u32)];
    for i in 0..ensemble.len() {
        let mut idx = 0;
        for a in 0..axes {
            let b = (((coord(i, a) - lo[a]) / width[a]) as usize).min(nb - 1);
            idx = idx * nb + b;
        }
        cells[idx] += ensemble.weights[i];
    }
    let mut entropy = 0.0;
    let mut max_mass: f64 = 0.0;
    for &m in cells.iter().filter(|m| **m > 0.0) {
        entropy += m * (m / vol).ln();
        max_mass = max_mass.max(m);
    }
    PhaseHistogram {
        bins_per_axis: nb,
        entropy,
        max_density: max_mass / vol,
    }
}

/// Comparison of histogram maxima against `e^{lambda d K M0 t} max_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupNormReport {
    /// Largest `max_density(t) / (e^{lambda d K M0 t} max_density(0))`.
    pub worst_ratio: f64,
    pub worst_time: f64,
    /// `worst_ratio <= factor`.
    pub pass: bool,
}

/// Checks that the histogram maximum grows no faster than the sup-norm
/// envelope, up to `factor` for sampling noise.
pub fn sup_norm_growth_check(
    series: &[(f64, f64)],
    lambda: f64,
    dim: usize,
    amplitude: f64,
    m0: f64,
    factor: f64,
) -> SupNormReport {
    let Some(&(_, max0)) = series.first() else {
        return SupNormReport {
            worst_ratio: 0.0,
            worst_time: 0.0,
            pass: true,
        };
    };
    let mut worst = (0.0, 0.0);
    for &(t, m) in series {
        let ratio = m / (max0 * (lambda * dim as f64 * amplitude * m0 * t).exp());
        if ratio > worst.0 {
            worst = (ratio, t);
        }
    }
    SupNormReport {
        worst_ratio: worst.0,
        worst_time: worst.1,
        pass: worst.0 <= factor,
    }
}

/// One row of kinetic diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticRecord {
    pub t: f64,
    pub stats: KineticStats,
    /// Smallest pair rate over the sample positions.
    pub phi_min: f64,
    /// Running trapezoid integral of `phi_min`.
    pub phi_integral: f64,
    pub entropy_rate: f64,
    /// `sum w_i w_j r_ij |v_i - v_j|^2`.
    pub dissipation: f64,
    /// Central difference of `Lambda` across the neighbouring steps, when
    /// both neighbours exist.
    pub lambda_rate_fd: Option<f64>,
    pub histogram: PhaseHistogram,
}

/// Kinetic diagnostics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticSeries {
    pub dim: usize,
    pub records: Vec<KineticRecord>,
}

impl KineticSeries {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string(), "M0".to_string()];
        cols.extend((1..=self.dim).map(|c| format!("M1_{c}")));
        cols.extend(["M2", "Lambda", "zeta", "eta", "phi_min", "Phi", "entropy_rate"].map(String::from));
        cols.join(",")
    }

    /// CSV with header `t,M0,M1_1..M1_d,M2,Lambda,zeta,eta,phi_min,Phi,entropy_rate`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for r in &self.records {
            let s = &r.stats;
            let mut row = vec![fmt_f64(r.t), fmt_f64(s.m0)];
            row.extend(s.m1.iter().map(|x| fmt_f64(*x)));
            row.extend([s.m2, s.lambda, s.zeta, s.eta, r.phi_min, r.phi_integral, r.entropy_rate].map(fmt_f64));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn kinetic_record<K: InteractionKernel>(e: &Ensemble, kernel: &K, lambda: f64) -> KineticRecord {
    let sums = pairwise::pair_sums(kernel, &e.positions, &e.velocities, &e.weights, e.dim);
    KineticRecord {
        t: e.t,
        stats: kinetic_stats(e),
        phi_min: kernel.rate_sq(sums.max_dist_sq),
        phi_integral: 0.0,
        entropy_rate: entropy_rate_from(&sums, e, kernel, lambda),
        dissipation: sums.dissipation,
        lambda_rate_fd: None,
        histogram: phase_histogram(e),
    }
}

fn fluctuation(e: &Ensemble, mass: f64) -> f64 {
    let d = e.dim;
    let mut m1 = vec![0.0; d];
    for i in 0..e.len() {
        for c in 0..d {
            m1[c] += e.weights[i] * e.velocity(i)[c];
        }
    }
    let u: Vec<f64> = m1.iter().map(|x| x / mass).collect();
    (0..e.len())
        .map(|i| e.weights[i] * e.velocity(i).iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

/// Output of [`simulate_kinetic`].
#[derive(Debug, Clone)]
pub struct KineticRun {
    pub series: KineticSeries,
    pub final_ensemble: Ensemble,
}

/// Fixed-step RK4 of the ensemble from `t = 0` to `t_end`. A record is taken
/// every `record_stride` steps and at the end; `observer` sees each recorded
/// snapshot.
pub fn simulate_kinetic<K, F>(kernel: &K, config: &SimConfig, initial: Ensemble, mut observer: F) -> Result<KineticRun>
where
    K: InteractionKernel,
    F: FnMut(&Ensemble, &KineticRecord) -> Result<()>,
{
    config.validate()?;
    let steps = config.steps();
    let lambda = config.lambda;
    let mut e = initial;
    e.t = 0.0;
    let mass = e.mass();
    let mut records = Vec::new();
    let mut ws = Rk4Workspace::default();
    // Lambda at the previous step, for the central difference at records
    let mut lambda_prev = f64::NAN;
    let mut pending: Option<usize> = None;

    let mut phi = PhiIntegral::new(kernel, &e.positions, e.dim);
    let (mut x0, mut v0) = (Vec::new(), Vec::new());
    let first = kinetic_record(&e, kernel, lambda);
    observer(&e, &first)?;
    records.push(first);
    if steps > 0 {
        pending = Some(0);
    }
    for step in 1..=steps {
        let lambda_before = fluctuation(&e, mass);
        x0.clone_from(&e.positions);
        v0.clone_from(&e.velocities);
        if !advance(&mut ws, &mut e, lambda, kernel, config.dt) {
            return Err(FlockError::Overflow {
                step,
                time: step as f64 * config.dt,
            });
        }
        e.t = step as f64 * config.dt;
        phi.step(kernel, e.dim, config.dt, &x0, &v0, &e.positions, &e.velocities);
        let lambda_now = fluctuation(&e, mass);
        if let Some(k) = pending.take() {
            if k > 0 {
                records[k].lambda_rate_fd = Some((lambda_now - lambda_prev) / (2.0 * config.dt));
            }
        }
        lambda_prev = lambda_before;
        if step % config.record_stride == 0 || step == steps {
            let mut rec = kinetic_record(&e, kernel, lambda);
            rec.phi_integral = phi.value;
            observer(&e, &rec)?;
            records.push(rec);
            if step < steps {
                pending = Some(records.len() - 1);
            }
        }
    }
    Ok(KineticRun {
        series: KineticSeries {
            dim: e.dim,
            records,
        },
        final_ensemble: e,
    })
}
