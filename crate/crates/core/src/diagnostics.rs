//! Particle functionals (moments, fluctuations, minimal interaction) and the
//! closed-form decay envelopes evaluated against them.

use std::io::Write;

use serde::Serialize;

use crate::error::{FlockError, Result};
use crate::io::fmt_f64;
use crate::kernels::{InteractionKernel, Kernel};
use crate::pairwise;
use crate::particle::ParticleState;
use crate::quadrature;

/// One time-stamped row of particle diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub m0: f64,
    pub m1: Vec<f64>,
    pub m2: f64,
    /// Position fluctuation `sum_i |x_i - x_c|^2`.
    pub x: f64,
    /// Velocity fluctuation `sum_i |v_i - v_c|^2`.
    pub ev: f64,
    /// Smallest pair rate.
    pub phi: f64,
    /// Running integral of `phi`, filled by [`accumulate_phi`].
    pub phi_integral: f64,
    /// Largest pairwise distance; not exported to CSV.
    pub diameter: f64,
}

/// Time-ordered diagnostic records of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticSeries {
    pub dim: usize,
    pub records: Vec<DiagnosticRecord>,
}

impl DiagnosticSeries {
    pub fn new(dim: usize, records: Vec<DiagnosticRecord>) -> Self {
        DiagnosticSeries { dim, records }
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, column: Column) -> Vec<f64> {
        self.records.iter().map(|r| column.get(r)).collect()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string(), "m0".to_string()];
        cols.extend((1..=self.dim).map(|c| format!("m1_{c}")));
        cols.extend(["m2", "X", "EV", "phi", "Phi"].map(String::from));
        cols.join(",")
    }

    /// CSV with header `t,m0,m1_1..m1_d,m2,X,EV,phi,Phi`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for r in &self.records {
            let mut row = vec![fmt_f64(r.t), fmt_f64(r.m0)];
            row.extend(r.m1.iter().map(|x| fmt_f64(*x)));
            row.extend([r.m2, r.x, r.ev, r.phi, r.phi_integral].map(fmt_f64));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Scalar columns of a [`DiagnosticSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    M2,
    X,
    EV,
    Phi,
    PhiIntegral,
    Diameter,
}

impl Column {
    fn get(self, r: &DiagnosticRecord) -> f64 {
        match self {
            Column::M2 => r.m2,
            Column::X => r.x,
            Column::EV => r.ev,
            Column::Phi => r.phi,
            Column::PhiIntegral => r.phi_integral,
            Column::Diameter => r.diameter,
        }
    }
}

/// `(m0, m1, m2) = (N, sum v_i, sum |v_i|^2)`.
pub fn moments(state: &ParticleState) -> (f64, Vec<f64>, f64) {
    let d = state.dim();
    let mut m1 = vec![0.0; d];
    let mut m2 = 0.0;
    for v in state.velocities().chunks_exact(d) {
        for c in 0..d {
            m1[c] += v[c];
            m2 += v[c] * v[c];
        }
    }
    (state.len() as f64, m1, m2)
}

fn spread(rows: &[f64], dim: usize) -> f64 {
    let n = (rows.len() / dim) as f64;
    let mut mean = vec![0.0; dim];
    for row in rows.chunks_exact(dim) {
        for c in 0..dim {
            mean[c] += row[c];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    rows.chunks_exact(dim)
        .map(|row| row.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>())
        .sum()
}

/// `X = sum_i |x_i - x_c|^2`.
pub fn fluctuation_positions(state: &ParticleState) -> f64 {
    spread(state.positions(), state.dim())
}

/// `EV = sum_i |v_i - v_c|^2`.
pub fn fluctuation_velocities(state: &ParticleState) -> f64 {
    spread(state.velocities(), state.dim())
}

/// Smallest pair rate over all ordered pairs (including `i = j`), i.e. the
/// rate at the largest pairwise distance.
pub fn min_interaction<K: InteractionKernel>(state: &ParticleState, kernel: &K) -> f64 {
    kernel.rate_sq(pairwise::max_pair_dist_sq(state.positions(), state.dim()))
}

/// Diagnostics of a single snapshot; `phi_integral` is left at zero.
pub fn record<K: InteractionKernel>(state: &ParticleState, kernel: &K) -> DiagnosticRecord {
    let (m0, m1, m2) = moments(state);
    let max_d2 = pairwise::max_pair_dist_sq(state.positions(), state.dim());
    DiagnosticRecord {
        t: state.time(),
        m0,
        m1,
        m2,
        x: fluctuation_positions(state),
        ev: fluctuation_velocities(state),
        phi: kernel.rate_sq(max_d2),
        phi_integral: 0.0,
        diameter: max_d2.sqrt(),
    }
}

/// Cumulative trapezoid integral of `y` over the sorted grid `t`, starting at 0.
pub fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if t.len() != y.len() {
        return Err(FlockError::Integrity("time and value columns differ in length".into()));
    }
    if let Some(k) = t.windows(2).position(|w| !(w[1] >= w[0])) {
        return Err(FlockError::Integrity(format!(
            "records not sorted by time at index {}: {} then {}",
            k + 1,
            t[k],
            t[k + 1]
        )));
    }
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for k in 0..t.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Running integral of the minimal pair rate, advanced once per time step.
///
/// Each step contributes Simpson's rule over `[t, t + dt]`. The midpoint
/// positions come from the cubic Hermite interpolant of the step, which is
/// fourth-order accurate because `dx/dt = v` holds exactly at both ends. The
/// trapezoid rule over records can overshoot where `phi` is concave, and
/// for two agents the velocity envelope is an equality, so that overshoot
/// would show up as a spurious violation.
pub(crate) struct PhiIntegral {
    pub(crate) value: f64,
    phi_prev: f64,
    mid: Vec<f64>,
}

impl PhiIntegral {
    pub(crate) fn new<K: InteractionKernel>(kernel: &K, positions: &[f64], dim: usize) -> Self {
        PhiIntegral {
            value: 0.0,
            phi_prev: kernel.rate_sq(pairwise::max_pair_dist_sq(positions, dim)),
            mid: Vec::new(),
        }
    }

    /// Adds the step from `(x0, v0)` to `(x1, v1)`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn step<K: InteractionKernel>(
        &mut self,
        kernel: &K,
        dim: usize,
        dt: f64,
        x0: &[f64],
        v0: &[f64],
        x1: &[f64],
        v1: &[f64],
    ) {
        self.mid.clear();
        self.mid.extend(
            x0.iter()
                .zip(x1)
                .zip(v0.iter().zip(v1))
                .map(|((a, b), (va, vb))| 0.5 * (a + b) + 0.125 * dt * (va - vb)),
        );
        let phi_mid = kernel.rate_sq(pairwise::max_pair_dist_sq(&self.mid, dim));
        let phi_end = kernel.rate_sq(pairwise::max_pair_dist_sq(x1, dim));
        self.value += dt / 6.0 * (self.phi_prev + 4.0 * phi_mid + phi_end);
        self.phi_prev = phi_end;
    }
}

/// Fills `phi_integral` with the trapezoid integral of `phi`.
pub fn accumulate_phi(series: &mut DiagnosticSeries) -> Result<()> {
    let integral = cumulative_trapezoid(&series.times(), &series.column(Column::Phi))?;
    for (r, p) in series.records.iter_mut().zip(integral) {
        r.phi_integral = p;
    }
    Ok(())
}

/// Theorem constants for a kernel `K / (1 + s^2)^beta` and coupling `lambda`.
///
/// Each constant is `None` outside the decay regime where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub beta: f64,
    pub lambda: f64,
    #[serde(rename = "K")]
    pub amplitude: f64,
    pub kappa1: Option<f64>,
    #[serde(rename = "C1")]
    pub c1: Option<f64>,
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
    pub kappa2: Option<f64>,
    pub kappa3: Option<f64>,
    pub kappa4: Option<f64>,
    pub kappa5: Option<f64>,
}

fn regime(value: Option<f64>, name: &str, when: &str, beta: f64) -> Result<f64> {
    value.ok_or_else(|| FlockError::Regime(format!("{name} is only defined for {when}, got beta = {beta}")))
}

impl EnvelopeParams {
    /// Parameters with no constants evaluated yet.
    pub fn new(beta: f64, lambda: f64, kernel: &Kernel) -> Self {
        EnvelopeParams {
            beta,
            lambda,
            amplitude: kernel.amplitude(),
            kappa1: None,
            c1: None,
            c2: None,
            kappa2: None,
            kappa3: None,
            kappa4: None,
            kappa5: None,
        }
    }

    pub fn kappa1(&self) -> Result<f64> {
        self.kappa1
            .ok_or_else(|| FlockError::Regime("kappa1 needs particle initial data".into()))
    }

    pub fn kappa2(&self) -> Result<f64> {
        regime(self.kappa2, "kappa2", "beta < 1/2", self.beta)
    }

    pub fn c2(&self) -> Result<f64> {
        regime(self.c2, "C2", "beta < 1/2", self.beta)
    }

    pub fn kappa3(&self) -> Result<f64> {
        self.kappa3
            .ok_or_else(|| FlockError::Regime("kappa3 needs kinetic initial data".into()))
    }

    pub fn kappa4(&self) -> Result<f64> {
        regime(self.kappa4, "kappa4", "beta < 1/4", self.beta)
    }

    pub fn kappa5(&self) -> Result<f64> {
        regime(self.kappa5, "kappa5", "beta = 1/4", self.beta)
    }

    /// Adds the particle constants computed from `X0` and `EV0`.
    pub fn with_particle(mut self, x0: f64, ev0: f64) -> Result<Self> {
        if !(ev0 > 0.0) {
            return Err(FlockError::Hypothesis(format!("EV0 > 0 required, got {ev0}")));
        }
        if !(x0 >= 0.0) {
            return Err(FlockError::Domain(format!("X0 must be nonnegative, got {x0}")));
        }
        let beta = self.beta;
        let kappa1 = (1.0 + 4.0 * x0).max(ev0).powf(-beta);
        self.kappa1 = Some(kappa1);
        if beta < 0.5 {
            let p = 1.0 - 2.0 * beta;
            let c1 = self.lambda * self.amplitude * kappa1 / p;
            let c2 = stretched_exp_integral(c1, p)?;
            self.c1 = Some(c1);
            self.c2 = Some(c2);
            self.kappa2 = Some((1.0 + 4.0 * x0 + 8.0 * c2 * c2).powf(-beta));
        }
        Ok(self)
    }

    /// Adds the kinetic constants from the initial support radii `zeta0`,
    /// `eta0`, mass `i0` and `j0 = sqrt(M0 M2(0))`.
    pub fn with_kinetic(mut self, zeta0: f64, eta0: f64, i0: f64, j0: f64) -> Result<Self> {
        if !(i0 > 0.0) {
            return Err(FlockError::Hypothesis(format!("positive initial mass required, got {i0}")));
        }
        let k3 = kappa3(zeta0, eta0, i0, j0, self.lambda, self.amplitude);
        self.kappa3 = Some(k3);
        let beta = self.beta;
        if beta < 0.25 {
            self.kappa4 = Some(self.amplitude / ((3.0 * k3).powf(beta) * (1.0 - 4.0 * beta)));
        } else if beta == 0.25 {
            self.kappa5 = Some(2.0 * self.lambda * self.amplitude / (3.0 * k3).powf(0.25));
        }
        Ok(self)
    }
}

/// `kappa3 = max{1 + 12 zeta0^2, 12 (eta0 + J0/I0)^2, 3 lambda^2 K^2 J0^2}`.
pub fn kappa3(zeta0: f64, eta0: f64, i0: f64, j0: f64, lambda: f64, amplitude: f64) -> f64 {
    let drift = eta0 + j0 / i0;
    let accel = lambda * amplitude * j0;
    (1.0 + 12.0 * zeta0 * zeta0).max(12.0 * drift * drift).max(3.0 * accel * accel)
}

/// Particle constants for kernel exponent `beta`, amplitude `K` and coupling `lambda`.
pub fn envelope_constants(x0: f64, ev0: f64, beta: f64, lambda: f64, amplitude: f64) -> Result<EnvelopeParams> {
    let kernel = Kernel::new(amplitude, beta)?;
    EnvelopeParams::new(beta, lambda, &kernel).with_particle(x0, ev0)
}

/// `int_0^inf exp(-c (1 + t)^p) dt` for `c >= 0`, `0 < p <= 1`.
///
/// Substituting `u = c (1 + t)^p` turns it into
/// `(1/p) c^(-1/p) int_c^inf u^(1/p - 1) e^(-u) du`, which is integrated
/// numerically with the prefactor folded into the exponent.
pub fn stretched_exp_integral(c: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(FlockError::Domain(format!("exponent must lie in (0, 1], got {p}")));
    }
    if c == 0.0 {
        return Ok(f64::INFINITY);
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(FlockError::Domain(format!("rate must be positive, got {c}")));
    }
    let a = 1.0 / p;
    let log_pref = -p.ln() - a * c.ln();
    // mode of the integrand in u, so the map resolves the bulk
    let scale = (a - 1.0).max(c).max(1.0);
    let value = quadrature::integrate_to_infinity(
        |u| (log_pref + (a - 1.0) * u.ln() - u).exp(),
        c,
        scale,
        1e-12,
    )?;
    Ok(value)
}

/// Decay bound on `EV(t)`: `EV0 e^{-2 lambda K kappa2 t}` for `beta < 1/2`,
/// `EV0 (1 + t)^{-2 lambda K kappa1}` for `beta = 1/2`.
pub fn velocity_envelope(params: &EnvelopeParams, ev0: f64, t: f64) -> Result<f64> {
    let rate = 2.0 * params.lambda * params.amplitude;
    if params.beta < 0.5 {
        Ok(ev0 * (-rate * params.kappa2()? * t).exp())
    } else if params.beta == 0.5 {
        Ok(ev0 * (1.0 + t).powf(-rate * params.kappa1()?))
    } else {
        Err(FlockError::Regime(format!(
            "no unconditional velocity envelope for beta = {} > 1/2",
            params.beta
        )))
    }
}

/// `EV0 e^{-2 lambda Phi(t)}` for a measured `Phi(t)`.
pub fn sharp_velocity_envelope(ev0: f64, lambda: f64, phi_integral: f64) -> f64 {
    ev0 * (-2.0 * lambda * phi_integral).exp()
}

/// `X(t) <= 2 X0 + EV0 t^2 / 2`.
pub fn position_envelope(x0: f64, ev0: f64, t: f64) -> f64 {
    2.0 * x0 + 0.5 * ev0 * t * t
}

/// `phi(t) >= r(sqrt(4 X0 + EV0 t^2))`.
pub fn phi_lower_bound<K: InteractionKernel>(kernel: &K, x0: f64, ev0: f64, t: f64) -> f64 {
    kernel.rate_sq(4.0 * x0 + ev0 * t * t)
}

/// Bound on `sup_t X(t)` for `beta < 1/2`: `4 X0 + 8 C2^2`.
pub fn position_fluctuation_bound(params: &EnvelopeParams, x0: f64) -> Result<f64> {
    let c2 = params.c2()?;
    Ok(4.0 * x0 + 8.0 * c2 * c2)
}

/// Least-squares model for [`fit_decay_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// `log y` against `t`.
    Exponential,
    /// `log y` against `log(1 + t)`.
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
}

/// Fitted exponent of `column` over records with `t` in `[t_lo, t_hi]`.
pub fn fit_decay_rate(
    series: &DiagnosticSeries,
    column: Column,
    window: (f64, f64),
    model: FitModel,
) -> Result<DecayFit> {
    let (ts, ys): (Vec<f64>, Vec<f64>) = series
        .records
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| (r.t, column.get(r)))
        .unzip();
    fit_log_linear(&ts, &ys, model)
}

/// [`fit_decay_rate`] on raw `(t, y)` samples.
pub fn fit_log_linear(ts: &[f64], ys: &[f64], model: FitModel) -> Result<DecayFit> {
    if ts.len() != ys.len() || ts.len() < 2 {
        return Err(FlockError::Domain("a fit needs at least two samples".into()));
    }
    if let Some(y) = ys.iter().find(|y| !(**y > 0.0)) {
        return Err(FlockError::Domain(format!("cannot fit a log-rate to nonpositive value {y}")));
    }
    let xs: Vec<f64> = match model {
        FitModel::Exponential => ts.to_vec(),
        FitModel::Algebraic => ts.iter().map(|t| t.ln_1p()).collect(),
    };
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ls.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(FlockError::Domain("fit window has a single abscissa".into()));
    }
    let rate = sxy / sxx;
    let intercept = my - rate * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ls)
        .map(|(x, y)| {
            let e = y - (intercept + rate * x);
            e * e
        })
        .sum();
    Ok(DecayFit {
        rate,
        intercept,
        residual: (ss / n).sqrt(),
    })
}
