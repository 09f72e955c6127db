//! The N-agent Cucker-Smale system
//!
//! ```text
//! x_i' = v_i,    v_i' = (lambda / N) sum_j r(|x_i - x_j|) (v_j - v_i)
//! ```
//!
//! integrated with fixed-step RK4, plus the exact two-body solution for a
//! constant kernel that the tests and the acceptance suite use as an oracle.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticRecord, DiagnosticSeries, PhiIntegral};
use crate::error::{FlockError, Result};
use crate::integrate::Rk4Workspace;
use crate::kernels::{InteractionKernel, Kernel};
use crate::pairwise;

/// Positions and velocities of N agents in `dim` dimensions at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    t: f64,
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
}

impl ParticleState {
    /// Builds a state from row-major `N x dim` arrays.
    pub fn new(t: f64, dim: usize, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(FlockError::Integrity("dimension must be at least 1".into()));
        }
        if positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(FlockError::Integrity(format!(
                "positions length {} is not a positive multiple of dim {dim}",
                positions.len()
            )));
        }
        if positions.len() != velocities.len() {
            return Err(FlockError::Integrity(format!(
                "positions ({}) and velocities ({}) differ in shape",
                positions.len(),
                velocities.len()
            )));
        }
        let state = ParticleState {
            t,
            dim,
            positions,
            velocities,
        };
        state.check_finite()?;
        Ok(state)
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if !self.t.is_finite() {
            return Err(FlockError::Integrity(format!("non-finite time {}", self.t)));
        }
        if let Some(i) = self
            .positions
            .iter()
            .chain(&self.velocities)
            .position(|x| !x.is_finite())
        {
            let n = self.positions.len();
            let (which, idx) = if i < n { ("position", i) } else { ("velocity", i - n) };
            return Err(FlockError::Integrity(format!(
                "non-finite {which} of agent {} (component {})",
                idx / self.dim,
                idx % self.dim
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

    /// Number of agents.
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    /// Same agents with every velocity shifted by `w`.
    pub fn boosted(&self, w: &[f64]) -> Result<Self> {
        if w.len() != self.dim {
            return Err(FlockError::Integrity("boost has wrong dimension".into()));
        }
        let mut velocities = self.velocities.clone();
        for row in velocities.chunks_exact_mut(self.dim) {
            for (v, dw) in row.iter_mut().zip(w) {
                *v += dw;
            }
        }
        ParticleState::new(self.t, self.dim, self.positions.clone(), velocities)
    }

    /// Reads a state from CSV with header `x_1..x_d, v_1..v_d`, one row per agent.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| FlockError::Integrity("empty particle CSV".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.is_empty() || !cols.len().is_multiple_of(2) {
            return Err(FlockError::Integrity(format!(
                "particle CSV header must have 2*d columns, got {}",
                cols.len()
            )));
        }
        let dim = cols.len() / 2;
        for (c, name) in cols.iter().enumerate() {
            let expected = if c < dim {
                format!("x_{}", c + 1)
            } else {
                format!("v_{}", c - dim + 1)
            };
            if *name != expected {
                return Err(FlockError::Integrity(format!(
                    "particle CSV column {c} is `{name}`, expected `{expected}`"
                )));
            }
        }
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = parse_row(&line, 2 * dim, lineno + 2)?;
            positions.extend_from_slice(&vals[..dim]);
            velocities.extend_from_slice(&vals[dim..]);
        }
        ParticleState::new(0.0, dim, positions, velocities)
    }

    /// Writes the state in the format accepted by [`ParticleState::read_csv`].
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim)
            .map(|c| format!("x_{c}"))
            .chain((1..=self.dim).map(|c| format!("v_{c}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .position(i)
                .iter()
                .chain(self.velocity(i))
                .map(|x| crate::io::fmt_f64(*x))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn parse_row(line: &str, expected: usize, lineno: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|e| {
                FlockError::Integrity(format!("line {lineno}: cannot parse `{}`: {e}", s.trim()))
            })
        })
        .collect::<Result<_>>()?;
    if vals.len() != expected {
        return Err(FlockError::Integrity(format!(
            "line {lineno}: expected {expected} columns, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

/// Uniform positions in an axis-aligned box and independent Gaussian velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleGenerator {
    pub agents: usize,
    pub dim: usize,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    pub velocity_mean: Vec<f64>,
    pub velocity_std: f64,
}

impl ParticleGenerator {
    pub fn generate(&self, seed: u64) -> Result<ParticleState> {
        let d = self.dim;
        if self.agents == 0 || d == 0 {
            return Err(FlockError::Domain("generator needs agents >= 1 and dim >= 1".into()));
        }
        if self.box_lower.len() != d || self.box_upper.len() != d || self.velocity_mean.len() != d {
            return Err(FlockError::Domain("generator vectors must have length dim".into()));
        }
        if self.box_lower.iter().zip(&self.box_upper).any(|(lo, hi)| !(lo <= hi)) {
            return Err(FlockError::Domain("generator box has lower > upper".into()));
        }
        if !(self.velocity_std >= 0.0 && self.velocity_std.is_finite()) {
            return Err(FlockError::Domain("velocity_std must be nonnegative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Uniform::new(0.0, 1.0);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut positions = Vec::with_capacity(self.agents * d);
        let mut velocities = Vec::with_capacity(self.agents * d);
        for _ in 0..self.agents {
            for c in 0..d {
                let (lo, hi) = (self.box_lower[c], self.box_upper[c]);
                positions.push(lo + (hi - lo) * unit.sample(&mut rng));
            }
            for c in 0..d {
                velocities.push(self.velocity_mean[c] + self.velocity_std * normal.sample(&mut rng));
            }
        }
        ParticleState::new(0.0, d, positions, velocities)
    }
}

/// Parameters of a fixed-step particle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub lambda: f64,
    pub kernel: Kernel,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl SimConfig {
    pub fn new(lambda: f64, kernel: Kernel, dt: f64, t_end: f64, record_stride: usize) -> Result<Self> {
        let cfg = SimConfig {
            lambda,
            kernel,
            dt,
            t_end,
            record_stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(FlockError::Domain(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(FlockError::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(FlockError::Domain(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.t_end > 0.0 && self.dt > self.t_end {
            return Err(FlockError::Domain(format!(
                "dt = {} exceeds t_end = {}",
                self.dt, self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(FlockError::Domain("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of fixed steps covering `[0, t_end]`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Right-hand side of the particle system: `(dx, dv)`.
pub fn cs_rhs<K: InteractionKernel>(
    state: &ParticleState,
    lambda: f64,
    kernel: &K,
) -> Result<(Vec<f64>, Vec<f64>)> {
    state.check_finite()?;
    let mut dv = vec![0.0; state.velocities.len()];
    accel(kernel, lambda, state.dim, &state.positions, &state.velocities, &mut dv);
    Ok((state.velocities.clone(), dv))
}

fn accel<K: InteractionKernel>(kernel: &K, lambda: f64, dim: usize, x: &[f64], v: &[f64], out: &mut [f64]) {
    let n = x.len() / dim;
    if n < 2 {
        out.fill(0.0);
        return;
    }
    let w = vec![1.0; n];
    pairwise::alignment_field(kernel, x, v, &w, dim, out);
    let scale = lambda / n as f64;
    for a in out.iter_mut() {
        *a *= scale;
    }
}

fn advance<K: InteractionKernel>(
    ws: &mut Rk4Workspace,
    state: &mut ParticleState,
    lambda: f64,
    kernel: &K,
    dt: f64,
    t_new: f64,
) -> bool {
    let dim = state.dim;
    ws.step(&mut state.positions, &mut state.velocities, dt, |x, v, a| {
        accel(kernel, lambda, dim, x, v, a)
    });
    state.t = t_new;
    state
        .positions
        .iter()
        .chain(&state.velocities)
        .all(|x| x.is_finite())
}

/// One classical RK4 step of size `dt`.
pub fn step_rk4<K: InteractionKernel>(
    state: &ParticleState,
    lambda: f64,
    kernel: &K,
    dt: f64,
) -> Result<ParticleState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FlockError::Domain(format!("dt must be positive, got {dt}")));
    }
    state.check_finite()?;
    let mut next = state.clone();
    let mut ws = Rk4Workspace::default();
    if !advance(&mut ws, &mut next, lambda, kernel, dt, state.t + dt) {
        return Err(FlockError::Overflow {
            step: (state.t / dt).round() as usize + 1,
            time: state.t + dt,
        });
    }
    Ok(next)
}

/// Output of [`simulate`].
#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub series: DiagnosticSeries,
    pub final_state: ParticleState,
}

/// Fixed-step RK4 from `t = 0` to `t_end`, recording diagnostics every
/// `record_stride` steps and at the final step.
pub fn simulate(config: &SimConfig, initial: ParticleState) -> Result<ParticleRun> {
    config.validate()?;
    simulate_with(&config.kernel, config, initial)
}

/// [`simulate`] with an arbitrary interaction kernel; `config.kernel` is ignored.
pub fn simulate_with<K: InteractionKernel>(
    kernel: &K,
    config: &SimConfig,
    initial: ParticleState,
) -> Result<ParticleRun> {
    config.validate()?;
    initial.check_finite()?;
    let steps = config.steps();
    let mut state = initial;
    state.t = 0.0;
    let mut records: Vec<DiagnosticRecord> = vec![diagnostics::record(&state, kernel)];
    let mut ws = Rk4Workspace::default();
    let mut phi = PhiIntegral::new(kernel, &state.positions, state.dim);
    let (mut x0, mut v0) = (Vec::new(), Vec::new());
    for step in 1..=steps {
        let t = step as f64 * config.dt;
        x0.clone_from(&state.positions);
        v0.clone_from(&state.velocities);
        if !advance(&mut ws, &mut state, config.lambda, kernel, config.dt, t) {
            return Err(FlockError::Overflow { step, time: t });
        }
        phi.step(kernel, state.dim, config.dt, &x0, &v0, &state.positions, &state.velocities);
        if step % config.record_stride == 0 || step == steps {
            let mut rec = diagnostics::record(&state, kernel);
            rec.phi_integral = phi.value;
            records.push(rec);
        }
    }
    let series = DiagnosticSeries::new(state.dim, records);
    Ok(ParticleRun {
        series,
        final_state: state,
    })
}

/// Exact velocity difference of the two-body system with constant kernel `K`:
/// `dv(t) = dv0 * exp(-lambda K t)`.
pub fn two_body_closed_form(dv0: &[f64], lambda: f64, amplitude: f64, t: f64) -> Vec<f64> {
    let decay = (-lambda * amplitude * t).exp();
    dv0.iter().map(|x| x * decay).collect()
}

/// Center of mass `(x_c, v_c)`.
pub fn center_of_mass(state: &ParticleState) -> (Vec<f64>, Vec<f64>) {
    let n = state.len() as f64;
    let d = state.dim;
    let mut xc = vec![0.0; d];
    let mut vc = vec![0.0; d];
    for i in 0..state.len() {
        for c in 0..d {
            xc[c] += state.position(i)[c];
            vc[c] += state.velocity(i)[c];
        }
    }
    for c in 0..d {
        xc[c] /= n;
        vc[c] /= n;
    }
    (xc, vc)
}
