//! Hydrodynamic fields deposited from a kinetic ensemble, the pairwise
//! energy functional `Gamma`, and the nonlocal momentum/energy sources.
//!
//! Deposition is nearest-cell, so per-cell mass and momentum are exact
//! partial sums of the sample weights and momenta.

use std::io::Write;

use serde::Serialize;

use crate::error::{FlockError, Result};
use crate::io::fmt_f64;
use crate::kernels::InteractionKernel;
use crate::kinetic::{self, Ensemble};

/// Uniform grid of `cells_per_axis^d` cubic cells of side `h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub h: f64,
    pub cells_per_axis: usize,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, h: f64, cells_per_axis: usize) -> Result<Self> {
        if lower.is_empty() || !(h > 0.0 && h.is_finite()) || cells_per_axis == 0 {
            return Err(FlockError::Domain(format!(
                "grid needs dim >= 1, h > 0 and at least one cell (h = {h}, n = {cells_per_axis})"
            )));
        }
        Ok(GridSpec {
            lower,
            h,
            cells_per_axis,
        })
    }

    /// Smallest cubic grid of `n` cells per axis containing every sample
    /// position, with a small margin on the upper faces.
    pub fn covering(ensemble: &Ensemble, n: usize) -> Result<Self> {
        let d = ensemble.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..ensemble.len() {
            for (c, &x) in ensemble.position(i).iter().enumerate() {
                lo[c] = lo[c].min(x);
                hi[c] = hi[c].max(x);
            }
        }
        let extent = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let h = if extent > 0.0 {
            extent * (1.0 + 1e-9) / n as f64
        } else {
            1.0
        };
        GridSpec::new(lo, h, n)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_axis.pow(self.dim() as u32)
    }

    /// Same box with `factor` times as many cells per axis.
    pub fn refined(&self, factor: usize) -> Self {
        GridSpec {
            lower: self.lower.clone(),
            h: self.h / factor as f64,
            cells_per_axis: self.cells_per_axis * factor,
        }
    }

    fn index_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for (c, &xc) in x.iter().enumerate() {
            let s = (xc - self.lower[c]) / self.h;
            if !(s >= 0.0) || s >= self.cells_per_axis as f64 {
                return None;
            }
            idx = idx * self.cells_per_axis + s as usize;
        }
        Some(idx)
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        let mut rem = idx;
        for c in (0..d).rev() {
            let k = rem % self.cells_per_axis;
            rem /= self.cells_per_axis;
            out[c] = self.lower[c] + (k as f64 + 0.5) * self.h;
        }
        out
    }
}

/// Moments of the samples falling in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub center: Vec<f64>,
    /// Cell mass `sum w_i`.
    pub mass: f64,
    pub rho: f64,
    pub u: Vec<f64>,
    /// Specific internal energy.
    pub e: f64,
    /// Specific total energy `sum w |v|^2 / (2 mass)`.
    pub energy: f64,
    /// Stress tensor, row-major `d x d`.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Cell {
    pub fn is_occupied(&self) -> bool {
        self.mass > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydroField {
    pub grid: GridSpec,
    pub cells: Vec<Cell>,
}

/// Nearest-cell deposition of `ensemble` onto `grid`.
pub fn deposit_fields(ensemble: &Ensemble, grid: &GridSpec) -> Result<HydroField> {
    let d = grid.dim();
    if d != ensemble.dim() {
        return Err(FlockError::Domain("grid and ensemble differ in dimension".into()));
    }
    let n = grid.cell_count();
    let vol = grid.cell_volume();
    let mut owner = Vec::with_capacity(ensemble.len());
    let mut mass = vec![0.0; n];
    let mut mom = vec![0.0; n * d];
    let mut en = vec![0.0; n];
    for i in 0..ensemble.len() {
        let x = ensemble.position(i);
        let c = grid.index_of(x).ok_or_else(|| FlockError::Coverage {
            sample: i,
            position: x.to_vec(),
        })?;
        owner.push(c);
        let w = ensemble.weights()[i];
        let v = ensemble.velocity(i);
        mass[c] += w;
        for k in 0..d {
            mom[c * d + k] += w * v[k];
        }
        en[c] += w * v.iter().map(|a| a * a).sum::<f64>();
    }
    let u: Vec<f64> = (0..n * d)
        .map(|j| if mass[j / d] > 0.0 { mom[j] / mass[j / d] } else { 0.0 })
        .collect();
    let mut p = vec![0.0; n * d * d];
    let mut q = vec![0.0; n * d];
    let mut internal = vec![0.0; n];
    let mut dv = vec![0.0; d];
    for i in 0..ensemble.len() {
        let c = owner[i];
        let w = ensemble.weights()[i];
        for k in 0..d {
            dv[k] = ensemble.velocity(i)[k] - u[c * d + k];
        }
        let dv2: f64 = dv.iter().map(|a| a * a).sum();
        internal[c] += w * dv2;
        for a in 0..d {
            q[c * d + a] += w * dv[a] * dv2;
            for b in 0..d {
                p[(c * d + a) * d + b] += w * dv[a] * dv[b];
            }
        }
    }
    let cells = (0..n)
        .map(|c| {
            let m = mass[c];
            let occupied = m > 0.0;
            Cell {
                center: grid.center(c),
                mass: m,
                rho: m / vol,
                u: u[c * d..(c + 1) * d].to_vec(),
                e: if occupied { internal[c] / (2.0 * m) } else { 0.0 },
                energy: if occupied { en[c] / (2.0 * m) } else { 0.0 },
                p: p[c * d * d..(c + 1) * d * d].iter().map(|x| x / vol).collect(),
                q: q[c * d..(c + 1) * d].iter().map(|x| x / vol).collect(),
            }
        })
        .collect();
    Ok(HydroField {
        grid: grid.clone(),
        cells,
    })
}

impl HydroField {
    pub fn occupied(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.is_occupied())
    }

    pub fn total_mass(&self) -> f64 {
        self.occupied().map(|c| c.rho * self.grid.cell_volume()).sum()
    }

    pub fn momentum(&self) -> Vec<f64> {
        let mut m1 = vec![0.0; self.grid.dim()];
        for c in self.occupied() {
            for (a, u) in m1.iter_mut().zip(&c.u) {
                *a += c.mass * u;
            }
        }
        m1
    }

    /// `(E, E_k, E_p)`: total, bulk kinetic and internal energy.
    pub fn energies(&self) -> (f64, f64, f64) {
        let (mut e, mut ek, mut ep) = (0.0, 0.0, 0.0);
        for c in self.occupied() {
            e += c.mass * c.energy;
            ek += 0.5 * c.mass * c.u.iter().map(|a| a * a).sum::<f64>();
            ep += c.mass * c.e;
        }
        (e, ek, ep)
    }

    /// CSV: cell center, `rho`, `u_*`, `e`, `E`, `P_ab`, `q_*`; empty cells are omitted.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.grid.dim();
        let mut header: Vec<String> = (1..=d).map(|c| format!("x_{c}")).collect();
        header.push("rho".into());
        header.extend((1..=d).map(|c| format!("u_{c}")));
        header.extend(["e".to_string(), "E".to_string()]);
        for a in 1..=d {
            header.extend((1..=d).map(|b| format!("P_{a}{b}")));
        }
        header.extend((1..=d).map(|c| format!("q_{c}")));
        writeln!(out, "{}", header.join(","))?;
        for c in self.occupied() {
            let mut row: Vec<String> = c.center.iter().map(|x| fmt_f64(*x)).collect();
            row.push(fmt_f64(c.rho));
            row.extend(c.u.iter().map(|x| fmt_f64(*x)));
            row.extend([fmt_f64(c.e), fmt_f64(c.energy)]);
            row.extend(c.p.iter().chain(&c.q).map(|x| fmt_f64(*x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(Gamma_pairwise, Gamma_identity)`. The pairwise form sums
/// `(|u_a - u_b|^2 / 2 + e_a + e_b) m_a m_b` over all occupied pairs,
/// including `a = b`; the identity form is `2 E M0 - |M1|^2`.
pub fn gamma_functional(field: &HydroField) -> (f64, f64) {
    let occ: Vec<&Cell> = field.occupied().collect();
    let mut pairwise = 0.0;
    for a in &occ {
        let mut row = 0.0;
        for b in &occ {
            let du2 = dist_sq(&a.u, &b.u);
            row += (0.5 * du2 + a.e + b.e) * b.mass;
        }
        pairwise += row * a.mass;
    }
    // 2 E M0 - |M1|^2 is Galilean invariant; evaluating it in the frame of
    // the mean velocity avoids cancelling two large terms once Gamma is small
    let m0: f64 = occ.iter().map(|c| c.mass).sum();
    let mean: Vec<f64> = field.momentum().iter().map(|p| p / m0).collect();
    let (mut e, mut m1) = (0.0, vec![0.0; mean.len()]);
    for c in &occ {
        e += c.mass * (c.e + 0.5 * dist_sq(&c.u, &mean));
        for (k, p) in m1.iter_mut().enumerate() {
            *p += c.mass * (c.u[k] - mean[k]);
        }
    }
    let identity = 2.0 * e * m0 - m1.iter().map(|x| x * x).sum::<f64>();
    (pairwise, identity)
}

/// `2 E M0 - |M1|^2 = M2 M0 - |M1|^2` straight from the samples.
pub fn gamma_from_samples(ensemble: &Ensemble) -> f64 {
    // M2 M0 - |M1|^2 evaluated about the mean velocity, as above
    let s = kinetic::kinetic_stats(ensemble);
    let mean: Vec<f64> = s.m1.iter().map(|p| p / s.m0).collect();
    let (mut m2, mut m1) = (0.0, vec![0.0; mean.len()]);
    for (i, &w) in ensemble.weights().iter().enumerate() {
        let v = ensemble.velocity(i);
        m2 += w * dist_sq(v, &mean);
        for (k, p) in m1.iter_mut().enumerate() {
            *p += w * (v[k] - mean[k]);
        }
    }
    m2 * s.m0 - m1.iter().map(|x| x * x).sum::<f64>()
}

/// Per-cell source terms; empty cells carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerms {
    /// Momentum source, row-major `cells x d`.
    pub s1: Vec<f64>,
    /// Energy source in the `|u_a - u_b|^2 / 2 + e_a + e_b` form.
    pub s2: Vec<f64>,
    /// Energy source in the `E_a + E_b - u_a . u_b` form.
    pub s2_total_energy_form: Vec<f64>,
}

impl SourceTerms {
    /// `sum_a S1_a h^d`.
    pub fn s1_total(&self, field: &HydroField) -> Vec<f64> {
        let d = field.grid.dim();
        let vol = field.grid.cell_volume();
        let mut tot = vec![0.0; d];
        for row in self.s1.chunks_exact(d) {
            for (t, s) in tot.iter_mut().zip(row) {
                *t += s * vol;
            }
        }
        tot
    }
}

pub fn source_terms<K: InteractionKernel>(field: &HydroField, kernel: &K, lambda: f64) -> SourceTerms {
    let d = field.grid.dim();
    let vol = field.grid.cell_volume();
    let n = field.cells.len();
    let occ: Vec<usize> = (0..n).filter(|&c| field.cells[c].is_occupied()).collect();
    let mut s1 = vec![0.0; n * d];
    let mut s2 = vec![0.0; n];
    let mut s2_alt = vec![0.0; n];
    for &a in &occ {
        let ca = &field.cells[a];
        let mut acc1 = vec![0.0; d];
        let (mut acc2, mut acc2_alt) = (0.0, 0.0);
        for &b in &occ {
            let cb = &field.cells[b];
            let r = kernel.rate_sq(dist_sq(&ca.center, &cb.center));
            let rr = r * ca.rho * cb.rho * vol;
            for k in 0..d {
                acc1[k] += rr * (ca.u[k] - cb.u[k]);
            }
            let du2 = dist_sq(&ca.u, &cb.u);
            acc2 += rr * (0.5 * du2 + ca.e + cb.e);
            let uu: f64 = ca.u.iter().zip(&cb.u).map(|(x, y)| x * y).sum();
            acc2_alt += rr * (ca.energy + cb.energy - uu);
        }
        for k in 0..d {
            s1[a * d + k] = -lambda * acc1[k];
        }
        s2[a] = -lambda * acc2;
        s2_alt[a] = -lambda * acc2_alt;
    }
    SourceTerms {
        s1,
        s2,
        s2_total_energy_form: s2_alt,
    }
}

/// `Gamma(0) e^{-2 I0 lambda Phi(t)}`.
pub fn gamma_envelope(gamma0: f64, i0: f64, lambda: f64, phi_integral: f64) -> f64 {
    gamma0 * (-2.0 * i0 * lambda * phi_integral).exp()
}

/// Hydrodynamic summary of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaReport {
    pub t: f64,
    pub gamma_pairwise: f64,
    pub gamma_identity: f64,
    pub gamma_samples: f64,
    pub e_total: f64,
    pub e_kinetic: f64,
    pub e_internal: f64,
    pub s1_total: Vec<f64>,
    pub s2_values: Vec<f64>,
    /// `max_a |S2_a - S2'_a|` between the two algebraic forms.
    pub s2_form_gap: f64,
    /// `sum_a |S2_a| h^d`.
    pub s2_integral: f64,
}

pub fn gamma_report<K: InteractionKernel>(ensemble: &Ensemble, field: &HydroField, kernel: &K, lambda: f64) -> GammaReport {
    let (gp, gi) = gamma_functional(field);
    let (e, ek, ep) = field.energies();
    let src = source_terms(field, kernel, lambda);
    let vol = field.grid.cell_volume();
    let gap = src
        .s2
        .iter()
        .zip(&src.s2_total_energy_form)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    GammaReport {
        t: ensemble.time(),
        gamma_pairwise: gp,
        gamma_identity: gi,
        gamma_samples: gamma_from_samples(ensemble),
        e_total: e,
        e_kinetic: ek,
        e_internal: ep,
        s1_total: src.s1_total(field),
        s2_integral: src.s2.iter().map(|s| s.abs() * vol).sum(),
        s2_values: src.s2,
        s2_form_gap: gap,
    }
}

/// Finite-difference check of the total-energy dissipation law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBudget {
    /// Central difference of `E = sum w |v|^2 / 2` over `[t - dt, t + dt]`.
    pub de_dt: f64,
    /// `-(lambda / 2) sum_{i,j} w_i w_j r_ij |v_i - v_j|^2`.
    pub predicted: f64,
    pub relative_error: f64,
}

fn sample_energy(e: &Ensemble) -> f64 {
    0.5 * (0..e.len())
        .map(|i| e.weights()[i] * e.velocity(i).iter().map(|a| a * a).sum::<f64>())
        .sum::<f64>()
}

/// Steps the ensemble by `+dt` and `-dt` and compares the central
/// difference of the total energy with the pairwise dissipation.
pub fn energy_budget<K: InteractionKernel>(ensemble: &Ensemble, kernel: &K, lambda: f64, dt: f64) -> Result<EnergyBudget> {
    if !(dt > 0.0) {
        return Err(FlockError::Domain(format!("dt must be positive, got {dt}")));
    }
    let fwd = kinetic::step_signed(ensemble, lambda, kernel, dt)?;
    let bwd = kinetic::step_signed(ensemble, lambda, kernel, -dt)?;
    let de_dt = (sample_energy(&fwd) - sample_energy(&bwd)) / (2.0 * dt);
    let predicted = -0.5 * lambda * kinetic::dissipation(ensemble, kernel);
    let relative_error = if predicted == 0.0 {
        de_dt.abs()
    } else {
        ((de_dt - predicted) / predicted).abs()
    };
    Ok(EnergyBudget {
        de_dt,
        predicted,
        relative_error,
    })
}
