//! Configuration-driven scenario runner and verification suite.
//!
//! A scenario is one JSON document:
//!
//! ```json
//! {
//!   "mode": "particle",
//!   "lambda": "1.0",
//!   "kernel": { "amplitude": "1.0", "beta": "0.3" },
//!   "dt": "1e-3", "t_end": "10", "record_stride": 100,
//!   "initial": { "generator": { ... }, "seed": 7 },
//!   "checks": ["momentum-conservation", "velocity-fluctuation-gronwall"],
//!   "output_dir": "out"
//! }
//! ```
//!
//! Numbers may be JSON numbers or decimal strings. `initial` is either
//! `{"csv": path}` or a seeded generator: a [`ParticleGenerator`] in particle
//! mode, `{"density": InitialDensitySpec, "samples": M}` otherwise. Kinetic
//! and hydro modes also accept `grid_cells` and `entropy_seeds`.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::diagnostics::{self, Column, DiagnosticSeries, EnvelopeParams, FitModel};
use crate::error::{FlockError, Result};
use crate::hydro::{self, GammaReport, GridSpec};
use crate::io::{self, json_f64};
use crate::kernels::{InteractionKernel, Kernel};
use crate::kinetic::{self, Ensemble, InitialDensitySpec, KineticSeries};
use crate::particle::{self, ParticleGenerator, ParticleState, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Particle,
    Kinetic,
    HydroDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSource {
    Csv(PathBuf),
    Particles { generator: ParticleGenerator, seed: u64 },
    Density { spec: InitialDensitySpec, samples: usize, seed: u64 },
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub sim: SimConfig,
    pub initial: InitialSource,
    /// Requested check names; `None` runs every check of the mode.
    pub checks: Option<Vec<String>>,
    pub output_dir: PathBuf,
    pub grid_cells: usize,
    pub entropy_seeds: Vec<u64>,
}

const PARTICLE_CHECKS: &[&str] = &[
    "two-body-closed-form",
    "momentum-conservation",
    "energy-monotone",
    "energy-lower-bound",
    "velocity-fluctuation-gronwall",
    "position-fluctuation-growth",
    "phi-lower-bound",
    "flocking-exponential-rate",
    "flocking-fitted-rate",
    "flock-diameter-bound",
    "flocking-algebraic-rate",
    "borderline-exponential-tail",
];

const KINETIC_CHECKS: &[&str] = &[
    "mass-conservation",
    "momentum-conservation",
    "energy-monotone",
    "kinetic-energy-lower-bound",
    "dissipation-identity",
    "lambda-gronwall",
    "velocity-support-bound",
    "phi-kinetic-envelope",
    "lambda-stretched-exponential",
    "lambda-algebraic",
    "entropy-rate-bounds",
    "sup-norm-growth",
    "histogram-entropy-trend",
];

const HYDRO_CHECKS: &[&str] = &[
    "source-momentum-balance",
    "source-energy-sign",
    "source-form-agreement",
    "gamma-identity",
    "gamma-cauchy-schwarz",
    "gamma-monotone",
    "gamma-envelope",
    "energy-split",
    "source-decay",
    "energy-budget",
    "deposition-refinement",
];

impl Mode {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "particle" => Some(Mode::Particle),
            "kinetic" => Some(Mode::Kinetic),
            "hydro-diagnostics" => Some(Mode::HydroDiagnostics),
            _ => None,
        }
    }

    /// Every check name the mode can evaluate, in report order.
    pub fn check_names(self) -> Vec<&'static str> {
        match self {
            Mode::Particle => PARTICLE_CHECKS.to_vec(),
            Mode::Kinetic => KINETIC_CHECKS.to_vec(),
            Mode::HydroDiagnostics => KINETIC_CHECKS.iter().chain(HYDRO_CHECKS).copied().collect(),
        }
    }
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| FlockError::config(path, "missing required field"))
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| FlockError::config(path, "expected an object"))
}

fn number(v: &Value, path: &str) -> Result<f64> {
    let x = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    x.ok_or_else(|| FlockError::config(path, format!("expected a number or decimal string, got {v}")))
}

fn integer(v: &Value, path: &str) -> Result<u64> {
    let x = number(v, path)?;
    if x >= 0.0 && x.fract() == 0.0 && x <= 2f64.powi(53) {
        Ok(x as u64)
    } else {
        Err(FlockError::config(path, format!("expected a nonnegative integer, got {v}")))
    }
}

fn field_number(obj: &Map<String, Value>, key: &str, path: &str) -> Result<f64> {
    number(get(obj, key, path)?, path)
}

/// Replaces decimal strings by numbers inside a generator sub-document so
/// serde can read it; enum tags stay strings.
fn numify(v: &Value) -> Value {
    match v {
        Value::String(s) => match s.trim().parse::<f64>() {
            Ok(x) => json_f64(x),
            Err(_) => v.clone(),
        },
        Value::Array(items) => Value::Array(items.iter().map(numify).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, x)| (k.clone(), numify(x))).collect()),
        other => other.clone(),
    }
}

/// Parses a scenario document; relative paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario> {
    let doc: Value = serde_json::from_str(text).map_err(|e| FlockError::config("$", e.to_string()))?;
    let root = as_object(&doc, "$")?;

    let mode_v = get(root, "mode", "mode")?;
    let mode = mode_v
        .as_str()
        .and_then(Mode::parse)
        .ok_or_else(|| FlockError::config("mode", format!("expected particle, kinetic or hydro-diagnostics, got {mode_v}")))?;

    let lambda = field_number(root, "lambda", "lambda")?;
    let kernel_obj = as_object(get(root, "kernel", "kernel")?, "kernel")?;
    let amplitude = field_number(kernel_obj, "amplitude", "kernel.amplitude")?;
    let beta = field_number(kernel_obj, "beta", "kernel.beta")?;
    let kernel = Kernel::new(amplitude, beta).map_err(|e| FlockError::config("kernel", e.to_string()))?;
    let dt = field_number(root, "dt", "dt")?;
    let t_end = field_number(root, "t_end", "t_end")?;
    let record_stride = match root.get("record_stride") {
        Some(v) => integer(v, "record_stride")? as usize,
        None => 1,
    };
    let sim = SimConfig {
        lambda,
        kernel,
        dt,
        t_end,
        record_stride,
    };
    if let Err(e) = sim.validate() {
        let msg = e.to_string();
        let path = ["lambda", "dt", "t_end", "record_stride"]
            .into_iter()
            .find(|p| msg.contains(p))
            .unwrap_or("$");
        return Err(FlockError::config(path, msg));
    }

    let init = as_object(get(root, "initial", "initial")?, "initial")?;
    let initial = if let Some(p) = init.get("csv") {
        let p = p.as_str().ok_or_else(|| FlockError::config("initial.csv", "expected a path string"))?;
        InitialSource::Csv(base_dir.join(p))
    } else {
        let seed = integer(get(init, "seed", "initial.seed")?, "initial.seed")?;
        match mode {
            Mode::Particle => {
                let g = get(init, "generator", "initial.generator")?;
                let generator: ParticleGenerator = serde_json::from_value(numify(g))
                    .map_err(|e| FlockError::config("initial.generator", e.to_string()))?;
                InitialSource::Particles { generator, seed }
            }
            Mode::Kinetic | Mode::HydroDiagnostics => {
                let d = get(init, "density", "initial.density")?;
                let spec: InitialDensitySpec = serde_json::from_value(numify(d))
                    .map_err(|e| FlockError::config("initial.density", e.to_string()))?;
                let samples = integer(get(init, "samples", "initial.samples")?, "initial.samples")? as usize;
                if samples == 0 {
                    return Err(FlockError::config("initial.samples", "need at least one sample"));
                }
                InitialSource::Density { spec, samples, seed }
            }
        }
    };

    let allowed = mode.check_names();
    let checks = match root.get("checks") {
        None => None,
        Some(Value::Array(items)) => {
            let mut names = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let path = format!("checks[{i}]");
                let name = item
                    .as_str()
                    .ok_or_else(|| FlockError::config(&path, "expected a check name"))?;
                if !allowed.contains(&name) {
                    return Err(FlockError::config(&path, format!("unknown check `{name}` for this mode")));
                }
                if names.iter().any(|n| n == name) {
                    return Err(FlockError::config(&path, format!("check `{name}` requested twice")));
                }
                names.push(name.to_string());
            }
            Some(names)
        }
        Some(_) => return Err(FlockError::config("checks", "expected an array of check names")),
    };

    let output_dir = match root.get("output_dir") {
        Some(v) => base_dir.join(v.as_str().ok_or_else(|| FlockError::config("output_dir", "expected a path string"))?),
        None => return Err(FlockError::config("output_dir", "missing required field")),
    };
    let grid_cells = match root.get("grid_cells") {
        Some(v) => integer(v, "grid_cells")? as usize,
        None => 16,
    };
    if grid_cells == 0 {
        return Err(FlockError::config("grid_cells", "need at least one cell per axis"));
    }
    let entropy_seeds = match root.get("entropy_seeds") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| integer(v, &format!("entropy_seeds[{i}]")))
            .collect::<Result<_>>()?,
        Some(_) => return Err(FlockError::config("entropy_seeds", "expected an array of seeds")),
    };

    Ok(Scenario {
        mode,
        sim,
        initial,
        checks,
        output_dir,
        grid_cells,
        entropy_seeds,
    })
}

/// Reads and parses a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| FlockError::config("$", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, base)
}

impl Scenario {
    /// Replaces the generator seed (no effect on CSV initial data).
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self.initial {
            InitialSource::Particles { seed: s, .. } | InitialSource::Density { seed: s, .. } => *s = seed,
            InitialSource::Csv(_) => {}
        }
        self
    }

    fn particle_initial(&self) -> Result<ParticleState> {
        match &self.initial {
            InitialSource::Csv(p) => {
                let f = File::open(p).map_err(|e| FlockError::config("initial.csv", format!("{}: {e}", p.display())))?;
                ParticleState::read_csv(BufReader::new(f)).map_err(|e| FlockError::config("initial.csv", e.to_string()))
            }
            InitialSource::Particles { generator, seed } => generator
                .generate(*seed)
                .map_err(|e| FlockError::config("initial.generator", e.to_string())),
            InitialSource::Density { .. } => Err(FlockError::config("initial", "particle mode needs a particle generator")),
        }
    }

    fn ensemble_with_seed(&self, seed_override: Option<u64>) -> Result<Ensemble> {
        match &self.initial {
            InitialSource::Csv(p) => {
                let f = File::open(p).map_err(|e| FlockError::config("initial.csv", format!("{}: {e}", p.display())))?;
                Ensemble::read_csv(BufReader::new(f)).map_err(|e| FlockError::config("initial.csv", e.to_string()))
            }
            InitialSource::Density { spec, samples, seed } => kinetic::sample_initial(spec, *samples, seed_override.unwrap_or(*seed))
                .map_err(|e| FlockError::config("initial.density", e.to_string())),
            InitialSource::Particles { .. } => Err(FlockError::config("initial", "kinetic modes need a density spec")),
        }
    }

    fn ensemble_initial(&self) -> Result<Ensemble> {
        self.ensemble_with_seed(None)
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub regime: String,
    pub detail: String,
}

impl CheckResult {
    fn skipped(name: &str, reason: &str, regime: &str) -> Self {
        CheckResult {
            name: name.into(),
            status: Status::Skipped(format!("skipped: {reason}")),
            measured: f64::NAN,
            bound: f64::NAN,
            tolerance: f64::NAN,
            regime: regime.into(),
            detail: String::new(),
        }
    }

    fn upper(name: &str, measured: f64, bound: f64, tolerance: f64, regime: &str, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            status: if measured <= bound { Status::Pass } else { Status::Fail },
            measured,
            bound,
            tolerance,
            regime: regime.into(),
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        !matches!(self.status, Status::Fail)
    }

    fn to_json(&self) -> Value {
        let status = match &self.status {
            Status::Pass => "pass".to_string(),
            Status::Fail => "fail".to_string(),
            Status::Skipped(s) => s.clone(),
        };
        json!({
            "name": self.name,
            "status": status,
            "measured": json_f64(self.measured),
            "bound": json_f64(self.bound),
            "tolerance": json_f64(self.tolerance),
            "regime": self.regime,
            "detail": self.detail,
        })
    }
}

/// Every requested check with its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub mode: Mode,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "mode": serde_json::to_value(self.mode).expect("mode serializes"),
            "passed": self.passed(),
            "checks": self.checks.iter().map(CheckResult::to_json).collect::<Vec<_>>(),
        })
    }
}

/// Worst record of a one-sided comparison `value_k <= allowed_k`; returns
/// `(value, allowed, index)` at the largest excess.
fn worst_excess(values: &[f64], allowed: &[f64]) -> (f64, f64, usize) {
    let mut worst = (f64::NAN, f64::NAN, 0usize);
    let mut excess = f64::NEG_INFINITY;
    for (k, (&v, &a)) in values.iter().zip(allowed).enumerate() {
        let e = if v.is_nan() || a.is_nan() { f64::INFINITY } else { v - a };
        if e > excess {
            excess = e;
            worst = (v, a, k);
        }
    }
    worst
}

fn envelope_check(name: &str, values: &[f64], allowed: &[f64], times: &[f64], tol: f64, regime: &str) -> CheckResult {
    let (v, a, k) = worst_excess(values, allowed);
    CheckResult::upper(name, v, a, tol, regime, format!("worst record at t = {}", times.get(k).copied().unwrap_or(f64::NAN)))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Regime label for reports.
fn regime_label(beta: f64) -> &'static str {
    if beta < 0.25 {
        "beta<1/4"
    } else if beta == 0.25 {
        "beta=1/4"
    } else if beta < 0.5 {
        "beta<1/2"
    } else if beta == 0.5 {
        "beta=1/2"
    } else {
        "beta>1/2"
    }
}

const BEYOND_HALF: &str = "β > 1/2 unconditional regime not covered";
const NO_FLUCTUATION: &str = "hypothesis EV0 > 0 violated";

/// Evaluates the particle checks on a finished run.
pub fn particle_checks(
    sim: &SimConfig,
    initial: &ParticleState,
    final_state: &ParticleState,
    series: &DiagnosticSeries,
    names: &[&str],
) -> Vec<CheckResult> {
    let kernel = &sim.kernel;
    let (lambda, amp, beta) = (sim.lambda, kernel.amplitude(), kernel.beta());
    let recs = &series.records;
    let r0 = &recs[0];
    let (x0, ev0) = (r0.x, r0.ev);
    let times = series.times();
    let params = EnvelopeParams::new(beta, lambda, kernel).with_particle(x0, ev0).ok();
    let regime = regime_label(beta);
    let m1_0 = r0.m1.clone();
    let p_scale = norm(&m1_0).max((r0.m0 * r0.m2).sqrt());

    names
        .iter()
        .map(|&name| match name {
            "two-body-closed-form" => {
                if initial.len() != 2 || beta != 0.0 {
                    return CheckResult::skipped(name, "requires N = 2 and β = 0", regime);
                }
                let dv0: Vec<f64> = (0..initial.dim()).map(|c| initial.velocity(0)[c] - initial.velocity(1)[c]).collect();
                let exact = particle::two_body_closed_form(&dv0, lambda, amp, final_state.time());
                let got: Vec<f64> = (0..initial.dim()).map(|c| final_state.velocity(0)[c] - final_state.velocity(1)[c]).collect();
                let rel = diff_norm(&got, &exact) / norm(&exact).max(f64::MIN_POSITIVE);
                CheckResult::upper(name, rel, 1e-6, 1e-6, "beta=0", format!("|dv(T)| = {}, exact {}", norm(&got), norm(&exact)))
            }
            "momentum-conservation" => {
                let drift = recs.iter().map(|r| diff_norm(&r.m1, &m1_0)).fold(0.0, f64::max);
                CheckResult::upper(name, drift / p_scale, 1e-10, 1e-10, "any", "max |m1(t) - m1(0)| / max(|m1(0)|, sqrt(m0 m2(0)))".into())
            }
            "energy-monotone" => {
                let worst = recs.windows(2).map(|w| (w[1].m2 - w[0].m2) / w[0].m2.max(f64::MIN_POSITIVE)).fold(f64::NEG_INFINITY, f64::max);
                CheckResult::upper(name, worst.max(0.0), 1e-9, 1e-9, "any", "largest relative increase of m2 between records".into())
            }
            "energy-lower-bound" => {
                let floor = norm(&m1_0).powi(2) / r0.m0;
                let m2: Vec<f64> = recs.iter().map(|r| -r.m2).collect();
                let allowed = vec![-floor + 1e-9; recs.len()];
                let (v, a, k) = worst_excess(&m2, &allowed);
                CheckResult::upper(name, v, a, 1e-9, "any", format!("-m2 vs -|m1(0)|^2/m0 at t = {}", times[k]))
            }
            "velocity-fluctuation-gronwall" => {
                let ev: Vec<f64> = recs.iter().map(|r| r.ev).collect();
                let b: Vec<f64> = recs.iter().map(|r| diagnostics::sharp_velocity_envelope(ev0, lambda, r.phi_integral) * (1.0 + 1e-6)).collect();
                envelope_check(name, &ev, &b, &times, 1e-6, "any")
            }
            "position-fluctuation-growth" => {
                let x: Vec<f64> = recs.iter().map(|r| r.x).collect();
                let b: Vec<f64> = recs.iter().map(|r| diagnostics::position_envelope(x0, ev0, r.t) + 1e-9).collect();
                envelope_check(name, &x, &b, &times, 1e-9, "any")
            }
            "phi-lower-bound" => {
                let neg_phi: Vec<f64> = recs.iter().map(|r| -r.phi).collect();
                let b: Vec<f64> = recs.iter().map(|r| -diagnostics::phi_lower_bound(kernel, x0, ev0, r.t) + 1e-12).collect();
                let mut c = envelope_check(name, &neg_phi, &b, &times, 1e-12, "any");
                c.measured = -c.measured;
                c.bound = -c.bound;
                c.detail = format!("phi vs r(sqrt(4 X0 + EV0 t^2)); {}", c.detail);
                c
            }
            "flocking-exponential-rate" | "flocking-fitted-rate" | "flock-diameter-bound" => {
                if beta > 0.5 {
                    return CheckResult::skipped(name, BEYOND_HALF, regime);
                }
                if beta == 0.5 {
                    return CheckResult::skipped(name, "requires β < 1/2", regime);
                }
                let Some(p) = &params else {
                    return CheckResult::skipped(name, NO_FLUCTUATION, regime);
                };
                let k2 = p.kappa2.expect("defined for beta < 1/2");
                match name {
                    "flocking-exponential-rate" => {
                        let v: Vec<f64> = recs.iter().map(|r| r.ev.ln()).collect();
                        let b: Vec<f64> = recs.iter().map(|r| ev0.ln() - 2.0 * lambda * amp * k2 * r.t + 1e-6).collect();
                        envelope_check(name, &v, &b, &times, 1e-6, regime)
                    }
                    "flocking-fitted-rate" => {
                        let t_end = times.last().copied().unwrap_or(0.0);
                        match diagnostics::fit_decay_rate(series, Column::EV, (0.0, t_end), FitModel::Exponential) {
                            Ok(fit) => {
                                let target = -2.0 * lambda * amp * k2;
                                CheckResult::upper(name, fit.rate, target * 0.9, 0.1, regime, format!("fitted log-slope of EV; residual {}", fit.residual))
                            }
                            Err(e) => CheckResult {
                                name: name.into(),
                                status: Status::Fail,
                                measured: f64::NAN,
                                bound: -2.0 * lambda * amp * k2,
                                tolerance: 0.1,
                                regime: regime.into(),
                                detail: e.to_string(),
                            },
                        }
                    }
                    _ => {
                        let sup_x = recs.iter().map(|r| r.x).fold(0.0, f64::max);
                        let xb = 4.0 * x0 + 8.0 * p.c2.expect("defined").powi(2);
                        let diam = recs.iter().map(|r| r.diameter).fold(0.0, f64::max);
                        let via_x = (2.0 * sup_x).sqrt();
                        let bound = (2.0 * xb).sqrt();
                        let mut c = CheckResult::upper(name, diam, bound, 1e-9, regime, format!("sup X = {sup_x}, 4 X0 + 8 C2^2 = {xb}, sqrt(2 sup X) = {via_x}"));
                        if diam > via_x * (1.0 + 1e-12) || sup_x > xb + 1e-9 {
                            c.status = Status::Fail;
                        }
                        c
                    }
                }
            }
            "flocking-algebraic-rate" | "borderline-exponential-tail" => {
                if beta > 0.5 {
                    return CheckResult::skipped(name, BEYOND_HALF, regime);
                }
                if beta != 0.5 {
                    return CheckResult::skipped(name, "requires β = 1/2", regime);
                }
                let Some(p) = &params else {
                    return CheckResult::skipped(name, NO_FLUCTUATION, regime);
                };
                let k1 = p.kappa1.expect("always set");
                if name == "flocking-algebraic-rate" {
                    let ev: Vec<f64> = recs.iter().map(|r| r.ev).collect();
                    let b: Vec<f64> = recs.iter().map(|r| ev0 * (1.0 + r.t).powf(-2.0 * lambda * amp * k1) * (1.0 + 1e-6)).collect();
                    return envelope_check(name, &ev, &b, &times, 1e-6, regime);
                }
                if lambda * amp * k1 <= 1.0 {
                    return CheckResult::skipped(name, "requires λ K κ1 > 1", regime);
                }
                borderline_check(name, series, regime)
            }
            other => CheckResult::skipped(other, "not a particle check", regime),
        })
        .collect()
}

/// Over the second half of the run, an exponential fit of `sqrt(EV)`
/// explains the data better than an algebraic one.
fn borderline_check(name: &str, series: &DiagnosticSeries, regime: &str) -> CheckResult {
    let t_end = series.records.last().map_or(0.0, |r| r.t);
    let (ts, ys): (Vec<f64>, Vec<f64>) = series
        .records
        .iter()
        .filter(|r| r.t >= 0.5 * t_end)
        .map(|r| (r.t, r.ev.sqrt()))
        .unzip();
    let fits = (
        diagnostics::fit_log_linear(&ts, &ys, FitModel::Exponential),
        diagnostics::fit_log_linear(&ts, &ys, FitModel::Algebraic),
    );
    match fits {
        (Ok(e), Ok(a)) => {
            let mut c = CheckResult::upper(name, e.residual, a.residual, 0.0, regime, format!("exponential rate {}, algebraic exponent {}", e.rate, a.rate));
            if e.rate >= 0.0 {
                c.status = Status::Fail;
            }
            c
        }
        (Err(err), _) | (_, Err(err)) => CheckResult {
            name: name.into(),
            status: Status::Fail,
            measured: f64::NAN,
            bound: f64::NAN,
            tolerance: 0.0,
            regime: regime.into(),
            detail: err.to_string(),
        },
    }
}

/// Snapshot-level hydro quantities collected during a kinetic run.
#[derive(Debug, Clone, PartialEq)]
pub struct HydroSample {
    pub report: GammaReport,
    /// `Gamma_pairwise` on the twice-refined grid.
    pub gamma_refined: f64,
    pub cell_volume: f64,
    pub budget: Option<hydro::EnergyBudget>,
}

/// Evaluates kinetic (and, when `hydro` is given, hydro) checks.
#[allow(clippy::too_many_arguments)]
pub fn kinetic_checks(
    sim: &SimConfig,
    series: &KineticSeries,
    hydro: Option<&[HydroSample]>,
    entropy_runs: &[Vec<f64>],
    names: &[&str],
) -> Vec<CheckResult> {
    let kernel = &sim.kernel;
    let (lambda, amp, beta) = (sim.lambda, kernel.amplitude(), kernel.beta());
    let recs = &series.records;
    let s0 = &recs[0].stats;
    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let regime = regime_label(beta);
    let params = EnvelopeParams::new(beta, lambda, kernel).with_kinetic(s0.zeta, s0.eta, s0.i0, s0.j0).ok();
    let i0 = s0.i0;
    let lambda0 = s0.lambda;

    names
        .iter()
        .map(|&name| match name {
            "mass-conservation" => {
                let bad = recs.iter().filter(|r| r.stats.m0.to_bits() != s0.m0.to_bits()).count();
                CheckResult::upper(name, bad as f64, 0.0, 0.0, "any", "records whose total mass differs bitwise from M0(0)".into())
            }
            "momentum-conservation" => {
                let drift = recs.iter().map(|r| diff_norm(&r.stats.m1, &s0.m1)).fold(0.0, f64::max);
                CheckResult::upper(name, drift, 1e-10 * (1.0 + norm(&s0.m1)), 1e-10, "any", "max |M1(t) - M1(0)| vs 1e-10 (1 + |M1(0)|)".into())
            }
            "energy-monotone" => {
                let worst = recs
                    .windows(2)
                    .map(|w| (w[1].stats.m2 - w[0].stats.m2) / w[0].stats.m2.max(f64::MIN_POSITIVE))
                    .fold(f64::NEG_INFINITY, f64::max);
                CheckResult::upper(name, worst.max(0.0), 1e-9, 1e-9, "any", "largest relative increase of M2 between records".into())
            }
            "kinetic-energy-lower-bound" => {
                let floor = norm(&s0.m1).powi(2) / s0.m0;
                let displayed = amp * i0;
                let with_lambda = lambda * amp * i0;
                let weaker = displayed.max(with_lambda);
                let check_rate = |c: f64| {
                    let neg: Vec<f64> = recs.iter().map(|r| -r.stats.m2).collect();
                    let b: Vec<f64> = recs.iter().map(|r| -kinetic::energy_lower_bound(s0.m2, floor, c, r.t) + 1e-6).collect();
                    worst_excess(&neg, &b)
                };
                let (v, a, k) = check_rate(weaker);
                let (vs, as_, _) = check_rate(displayed.min(with_lambda));
                let mut c = CheckResult::upper(name, -v, -a, 1e-6, "any", String::new());
                c.status = if v <= a { Status::Pass } else { Status::Fail };
                c.detail = format!(
                    "asserted decay coefficient {weaker} (weaker of K I0 = {displayed} and lambda K I0 = {with_lambda}); worst t = {}; stronger coefficient holds: {}",
                    times[k],
                    vs <= as_
                );
                c
            }
            "dissipation-identity" => {
                let mut worst: f64 = 0.0;
                let mut at = f64::NAN;
                let mut probes = 0;
                for r in recs {
                    if let Some(fd) = r.lambda_rate_fd {
                        let exact = -lambda * r.dissipation;
                        if exact != 0.0 {
                            let rel = ((fd - exact) / exact).abs();
                            probes += 1;
                            if rel > worst {
                                worst = rel;
                                at = r.t;
                            }
                        }
                    }
                }
                if probes == 0 {
                    return CheckResult::skipped(name, "no interior record with nonzero dissipation", "any");
                }
                CheckResult::upper(name, worst, 0.01, 0.01, "any", format!("{probes} probes; worst at t = {at}"))
            }
            "lambda-gronwall" => {
                let v: Vec<f64> = recs.iter().map(|r| r.stats.lambda).collect();
                let b: Vec<f64> = recs.iter().map(|r| kinetic::sharp_lambda_envelope(lambda0, lambda, i0, r.phi_integral) * (1.0 + 1e-6)).collect();
                envelope_check(name, &v, &b, &times, 1e-6, "any")
            }
            "velocity-support-bound" => {
                let v: Vec<f64> = recs.iter().map(|r| r.stats.eta).collect();
                let b: Vec<f64> = recs.iter().map(|r| kinetic::velocity_trajectory_bounds(s0, kernel, lambda, r.t).1 + 1e-9).collect();
                envelope_check(name, &v, &b, &times, 1e-9, "any")
            }
            "phi-kinetic-envelope" => {
                let Some(k3) = params.as_ref().and_then(|p| p.kappa3) else {
                    return CheckResult::skipped(name, "initial mass must be positive", "any");
                };
                let neg: Vec<f64> = recs.iter().map(|r| -r.phi_min).collect();
                let b: Vec<f64> = recs.iter().map(|r| -kinetic::phi_kinetic_envelope(k3, amp, beta, r.t) + 1e-9).collect();
                let mut c = envelope_check(name, &neg, &b, &times, 1e-9, "any");
                c.measured = -c.measured;
                c.bound = -c.bound;
                c
            }
            "lambda-stretched-exponential" | "lambda-algebraic" => {
                let want_quarter = name == "lambda-algebraic";
                if beta > 0.25 || (beta == 0.25) != want_quarter {
                    return CheckResult::skipped(name, if want_quarter { "requires β = 1/4" } else { "requires β < 1/4" }, regime);
                }
                if !(lambda0 > 0.0) {
                    return CheckResult::skipped(name, "hypothesis Lambda0 > 0 violated", regime);
                }
                let Some(p) = &params else {
                    return CheckResult::skipped(name, "initial mass must be positive", regime);
                };
                let correction = |t: f64| {
                    if want_quarter {
                        p.kappa5.expect("beta = 1/4") * t.ln_1p()
                    } else {
                        p.kappa4.expect("beta < 1/4") * t.powf(1.0 - 4.0 * beta)
                    }
                };
                asymptotic_check(name, recs.iter().map(|r| (r.t, r.stats.lambda)), correction, regime)
            }
            "entropy-rate-bounds" => {
                let mut worst: f64 = f64::NEG_INFINITY;
                let mut at = 0.0;
                for r in recs {
                    let m0sq = r.stats.m0 * r.stats.m0;
                    let lo = lambda * r.phi_min * m0sq;
                    let hi = lambda * amp * m0sq;
                    let scale = hi.max(f64::MIN_POSITIVE);
                    let e = ((lo - r.entropy_rate) / scale).max((r.entropy_rate - hi) / scale).max(-r.entropy_rate);
                    if e > worst {
                        worst = e;
                        at = r.t;
                    }
                }
                CheckResult::upper(name, worst, 1e-12, 1e-12, "any", format!("largest relative excursion outside [lambda phi M0^2, lambda K M0^2] at t = {at}"))
            }
            "sup-norm-growth" => {
                let pts: Vec<(f64, f64)> = recs.iter().map(|r| (r.t, r.histogram.max_density)).collect();
                let rep = kinetic::sup_norm_growth_check(&pts, lambda, series.dim, amp, i0, 2.0);
                CheckResult::upper(name, rep.worst_ratio, 2.0, 2.0, "any", format!("histogram max / envelope, worst at t = {}", rep.worst_time))
            }
            "histogram-entropy-trend" => {
                if entropy_runs.len() < 2 {
                    return CheckResult::skipped(name, "needs at least two entropy_seeds", "any");
                }
                entropy_trend_check(name, entropy_runs, &times)
            }
            _ => hydro_check(name, sim, recs, hydro, &times, lambda0),
        })
        .collect()
}

/// `g(t) = log Lambda(t) + correction(t)` over records with `t >= 1`: must
/// be finite everywhere and nonincreasing over the second half of them.
fn asymptotic_check<I, F>(name: &str, points: I, correction: F, regime: &str) -> CheckResult
where
    I: Iterator<Item = (f64, f64)>,
    F: Fn(f64) -> f64,
{
    let g: Vec<(f64, f64)> = points.filter(|(t, _)| *t >= 1.0).map(|(t, l)| (t, l.ln() + correction(t))).collect();
    if g.len() < 2 {
        return CheckResult::skipped(name, "needs at least two records with t >= 1", regime);
    }
    let sup = g.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let tail = &g[g.len() / 2..];
    let rise = tail.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let mut c = CheckResult::upper(name, rise, 1e-9, 1e-9, regime, format!("sup over t >= 1 of log Lambda + correction = {sup}; largest rise over the tail reported"));
    if !sup.is_finite() || g.iter().any(|p| !p.1.is_finite()) {
        c.status = Status::Fail;
    }
    c
}

/// Mean histogram entropy across seeds may not drop by more than three
/// standard deviations between consecutive records.
fn entropy_trend_check(name: &str, runs: &[Vec<f64>], times: &[f64]) -> CheckResult {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let s = runs.len() as f64;
    let stats: Vec<(f64, f64)> = (0..len)
        .map(|k| {
            let mean = runs.iter().map(|r| r[k]).sum::<f64>() / s;
            let var = runs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (s - 1.0);
            (mean, var.sqrt())
        })
        .collect();
    let mut worst = f64::INFINITY;
    let mut at = 0.0;
    for k in 0..len.saturating_sub(1) {
        let slack = stats[k + 1].0 - stats[k].0 + 3.0 * stats[k].1.max(stats[k + 1].1);
        if slack < worst {
            worst = slack;
            at = times.get(k + 1).copied().unwrap_or(f64::NAN);
        }
    }
    let first = stats.first().map_or(f64::NAN, |p| p.0);
    let last = stats.last().map_or(f64::NAN, |p| p.0);
    CheckResult {
        name: name.into(),
        status: if worst >= 0.0 { Status::Pass } else { Status::Fail },
        measured: worst,
        bound: 0.0,
        tolerance: 3.0,
        regime: "any".into(),
        detail: format!("{} seeds; mean entropy {first} -> {last}; smallest (drop + 3 sigma) slack at t = {at}", runs.len()),
    }
}

fn hydro_check(
    name: &str,
    sim: &SimConfig,
    recs: &[kinetic::KineticRecord],
    hydro: Option<&[HydroSample]>,
    times: &[f64],
    _lambda0: f64,
) -> CheckResult {
    let Some(h) = hydro else {
        return CheckResult::skipped(name, "hydro checks need mode hydro-diagnostics", "any");
    };
    let lambda = sim.lambda;
    let amp = sim.kernel.amplitude();
    let g0 = h[0].report.gamma_pairwise;
    match name {
        "source-momentum-balance" => {
            let worst = h.iter().map(|s| norm(&s.report.s1_total)).fold(0.0, f64::max);
            CheckResult::upper(name, worst, 1e-12, 1e-12, "any", "max |sum S1 h^d| over records".into())
        }
        "source-energy-sign" => {
            let worst = h.iter().flat_map(|s| s.report.s2_values.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
            CheckResult::upper(name, worst, 0.0, 0.0, "any", "largest cell value of S2".into())
        }
        "source-form-agreement" => {
            let worst = h
                .iter()
                .map(|s| {
                    let scale = s.report.s2_values.iter().map(|x| x.abs()).fold(0.0, f64::max);
                    if scale > 0.0 { s.report.s2_form_gap / scale } else { s.report.s2_form_gap }
                })
                .fold(0.0, f64::max);
            CheckResult::upper(name, worst, 1e-10, 1e-10, "any", "relative gap between the two algebraic forms of S2".into())
        }
        "gamma-identity" => {
            let worst = h
                .iter()
                .map(|s| (s.report.gamma_pairwise - s.report.gamma_identity).abs() / s.report.gamma_identity.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            CheckResult::upper(name, worst, 1e-10, 1e-10, "any", "|Gamma_pairwise - Gamma_identity| / Gamma_identity".into())
        }
        "gamma-cauchy-schwarz" => {
            let mut worst: f64 = 0.0;
            let mut negative = false;
            for s in h {
                let scale = s.report.gamma_samples.abs().max(f64::MIN_POSITIVE);
                worst = worst.max((s.report.gamma_identity - s.report.gamma_samples).abs() / scale);
                negative |= s.report.gamma_samples < 0.0;
            }
            let mut c = CheckResult::upper(name, worst, 1e-12, 1e-12, "any", "field identity vs M2 M0 - |M1|^2 from samples".into());
            if negative {
                c.status = Status::Fail;
            }
            c
        }
        "gamma-monotone" => {
            let worst = h
                .windows(2)
                .map(|w| (w[1].report.gamma_pairwise - w[0].report.gamma_pairwise) / w[0].report.gamma_pairwise.max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            CheckResult::upper(name, worst, 1e-6, 1e-6, "any", "largest relative increase of Gamma between records".into())
        }
        "gamma-envelope" => {
            let v: Vec<f64> = h.iter().map(|s| s.report.gamma_pairwise).collect();
            let b: Vec<f64> = recs
                .iter()
                .map(|r| hydro::gamma_envelope(g0, recs[0].stats.i0, lambda, r.phi_integral) * 1.05)
                .collect();
            envelope_check(name, &v, &b, times, 0.05, "any")
        }
        "energy-split" => {
            let worst = h
                .iter()
                .map(|s| (s.report.e_total - s.report.e_kinetic - s.report.e_internal).abs() / s.report.e_total.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            CheckResult::upper(name, worst, 1e-12, 1e-12, "any", "|E - E_k - E_p| / E".into())
        }
        "source-decay" => {
            let v: Vec<f64> = h.iter().map(|s| s.report.s2_integral).collect();
            let b: Vec<f64> = h.iter().map(|s| lambda * amp * s.report.gamma_pairwise * (1.0 + 1e-12)).collect();
            envelope_check(name, &v, &b, times, 1e-12, "any")
        }
        "energy-budget" => {
            let probes: Vec<&hydro::EnergyBudget> = h.iter().filter_map(|s| s.budget.as_ref()).collect();
            if probes.is_empty() {
                return CheckResult::skipped(name, "no energy-budget probes", "any");
            }
            let worst = probes.iter().map(|b| b.relative_error).fold(0.0, f64::max);
            CheckResult::upper(name, worst, 0.02, 0.02, "any", format!("{} probes of dE/dt vs pairwise dissipation", probes.len()))
        }
        "deposition-refinement" => {
            let worst = h
                .iter()
                .map(|s| (s.gamma_refined - s.report.gamma_pairwise).abs() / s.report.gamma_pairwise.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            CheckResult::upper(name, worst, 1e-10, 1e-10, "any", "relative change of Gamma_pairwise when h is halved".into())
        }
        other => CheckResult::skipped(other, "not a kinetic or hydro check", "any"),
    }
}

fn requested(scenario: &Scenario) -> Vec<&str> {
    match &scenario.checks {
        Some(names) => names.iter().map(String::as_str).collect(),
        None => scenario.mode.check_names(),
    }
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<File>) -> Result<()>,
{
    let mut out = io::create(path)?;
    f(&mut out)?;
    std::io::Write::flush(&mut out)?;
    Ok(())
}

fn particle_envelope_json(sim: &SimConfig, state: &ParticleState) -> Value {
    let r0 = diagnostics::record(state, &sim.kernel);
    let params = EnvelopeParams::new(sim.kernel.beta(), sim.lambda, &sim.kernel);
    let (params, note) = match params.clone().with_particle(r0.x, r0.ev) {
        Ok(p) => (p, Value::Null),
        Err(e) => (params, Value::String(e.to_string())),
    };
    json!({
        "params": serde_json::to_value(&params).expect("params serialize"),
        "X0": json_f64(r0.x),
        "EV0": json_f64(r0.ev),
        "N": state.len(),
        "note": note,
    })
}

fn kinetic_envelope_json(sim: &SimConfig, e: &Ensemble) -> Value {
    let s = kinetic::kinetic_stats(e);
    let params = EnvelopeParams::new(sim.kernel.beta(), sim.lambda, &sim.kernel);
    let (params, note) = match params.clone().with_kinetic(s.zeta, s.eta, s.i0, s.j0) {
        Ok(p) => (p, Value::Null),
        Err(err) => (params, Value::String(err.to_string())),
    };
    json!({
        "params": serde_json::to_value(&params).expect("params serialize"),
        "initial_stats": serde_json::to_value(&s).expect("stats serialize"),
        "samples": e.len(),
        "note": note,
    })
}

/// Envelope constants for the scenario's initial data, without simulating.
pub fn envelope_report(scenario: &Scenario) -> Result<Value> {
    match scenario.mode {
        Mode::Particle => Ok(particle_envelope_json(&scenario.sim, &scenario.particle_initial()?)),
        _ => Ok(kinetic_envelope_json(&scenario.sim, &scenario.ensemble_initial()?)),
    }
}

/// Runs the scenario, writes `diagnostics.csv`, `final_state.csv`,
/// `envelope.json` and `verification.json` (plus `hydro_final.csv` and
/// `gamma.json` in hydro mode) into the output directory, and returns the
/// verification report.
pub fn run_scenario(scenario: &Scenario) -> Result<VerificationReport> {
    let names = requested(scenario);
    let dir = &scenario.output_dir;
    let sim = &scenario.sim;
    let report = match scenario.mode {
        Mode::Particle => {
            let initial = scenario.particle_initial()?;
            let run = particle::simulate(sim, initial.clone())?;
            fs::create_dir_all(dir)?;
            write_with(&dir.join("diagnostics.csv"), |w| run.series.write_csv(w))?;
            write_with(&dir.join("final_state.csv"), |w| run.final_state.write_csv(w))?;
            io::write_json(&dir.join("envelope.json"), &particle_envelope_json(sim, &initial))?;
            let checks = particle_checks(sim, &initial, &run.final_state, &run.series, &names);
            VerificationReport { mode: scenario.mode, checks }
        }
        Mode::Kinetic | Mode::HydroDiagnostics => {
            let initial = scenario.ensemble_initial()?;
            let with_hydro = scenario.mode == Mode::HydroDiagnostics;
            let records_expected = sim.steps() / sim.record_stride + 2;
            let probe_every = (records_expected / 3).max(1);
            let mut samples: Vec<HydroSample> = Vec::new();
            let mut last_field = None;
            let kernel = sim.kernel;
            let run = kinetic::simulate_kinetic(&kernel, sim, initial.clone(), |e, _| {
                if with_hydro {
                    let (sample, field) = hydro_sample(e, &kernel, sim, scenario.grid_cells, samples.len().is_multiple_of(probe_every))?;
                    samples.push(sample);
                    last_field = Some(field);
                }
                Ok(())
            })?;
            let entropy_runs = entropy_runs(scenario, &names)?;
            fs::create_dir_all(dir)?;
            write_with(&dir.join("diagnostics.csv"), |w| run.series.write_csv(w))?;
            write_with(&dir.join("final_state.csv"), |w| run.final_ensemble.write_csv(w))?;
            io::write_json(&dir.join("envelope.json"), &kinetic_envelope_json(sim, &initial))?;
            if let (Some(field), Some(last)) = (&last_field, samples.last()) {
                write_with(&dir.join("hydro_final.csv"), |w| field.write_csv(w))?;
                io::write_json(&dir.join("gamma.json"), &serde_json::to_value(&last.report).expect("report serializes"))?;
            }
            let hydro = if with_hydro { Some(samples.as_slice()) } else { None };
            let checks = kinetic_checks(sim, &run.series, hydro, &entropy_runs, &names);
            VerificationReport { mode: scenario.mode, checks }
        }
    };
    io::write_json(&dir.join("verification.json"), &report.to_json())?;
    Ok(report)
}

fn hydro_sample<K: InteractionKernel>(
    e: &Ensemble,
    kernel: &K,
    sim: &SimConfig,
    cells: usize,
    probe: bool,
) -> Result<(HydroSample, hydro::HydroField)> {
    let grid = GridSpec::covering(e, cells)?;
    let field = hydro::deposit_fields(e, &grid)?;
    let report = hydro::gamma_report(e, &field, kernel, sim.lambda);
    let refined = hydro::deposit_fields(e, &grid.refined(2))?;
    let gamma_refined = hydro::gamma_functional(&refined).0;
    let budget = if probe {
        Some(hydro::energy_budget(e, kernel, sim.lambda, sim.dt)?)
    } else {
        None
    };
    Ok((
        HydroSample {
            report,
            gamma_refined,
            cell_volume: grid.cell_volume(),
            budget,
        },
        field,
    ))
}

/// Histogram entropy series for each of the scenario's entropy seeds.
fn entropy_runs(scenario: &Scenario, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    if !names.contains(&"histogram-entropy-trend") || scenario.entropy_seeds.len() < 2 {
        return Ok(Vec::new());
    }
    let kernel = scenario.sim.kernel;
    scenario
        .entropy_seeds
        .iter()
        .map(|&seed| {
            let e = scenario.ensemble_with_seed(Some(seed))?;
            let run = kinetic::simulate_kinetic(&kernel, &scenario.sim, e, |_, _| Ok(()))?;
            Ok(run.series.records.iter().map(|r| r.histogram.entropy).collect())
        })
        .collect()
}

/// Loads and runs the scenario at `path`.
pub fn verify_suite(path: &Path) -> Result<VerificationReport> {
    run_scenario(&load_scenario(path)?)
}

/// Process exit code: 0 all checks pass, 1 a check failed, 2 configuration
/// error, 3 numerical or I/O failure.
pub fn exit_code(result: &Result<VerificationReport>) -> i32 {
    match result {
        Ok(r) if r.passed() => 0,
        Ok(_) => 1,
        Err(FlockError::Config { .. }) => 2,
        Err(_) => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "mode": "particle",
        "lambda": "1",
        "kernel": {"amplitude": "1", "beta": "0"},
        "dt": "1e-3", "t_end": "1", "record_stride": 100,
        "initial": {"csv": "two.csv"},
        "output_dir": "out"
    }"#;

    #[test]
    fn parses_strings_and_numbers() {
        let s = parse_scenario(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(s.mode, Mode::Particle);
        assert_eq!(s.sim.dt, 1e-3);
        assert_eq!(s.sim.record_stride, 100);
        assert_eq!(s.initial, InitialSource::Csv(PathBuf::from("/base/two.csv")));
        assert_eq!(s.output_dir, PathBuf::from("/base/out"));
    }

    #[test]
    fn missing_beta_names_the_field() {
        let text = MINIMAL.replace(r#", "beta": "0""#, "");
        match parse_scenario(&text, Path::new(".")) {
            Err(FlockError::Config { path, .. }) => assert_eq!(path, "kernel.beta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_name_their_field() {
        let text = MINIMAL.replace(r#""dt": "1e-3""#, r#""dt": "-1""#);
        match parse_scenario(&text, Path::new(".")) {
            Err(FlockError::Config { path, .. }) => assert_eq!(path, "dt"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace(r#""lambda": "1""#, r#""lambda": "one""#);
        assert!(matches!(parse_scenario(&text, Path::new(".")), Err(FlockError::Config { path, .. }) if path == "lambda"));
        let text = MINIMAL.replace(r#""output_dir": "out""#, r#""output_dir": "out", "checks": ["nope"]"#);
        assert!(matches!(parse_scenario(&text, Path::new(".")), Err(FlockError::Config { path, .. }) if path == "checks[0]"));
    }

    #[test]
    fn generator_requires_seed() {
        let text = MINIMAL.replace(
            r#"{"csv": "two.csv"}"#,
            r#"{"generator": {"agents": 4, "dim": 1, "box_lower": ["0"], "box_upper": ["1"], "velocity_mean": [0], "velocity_std": "0.5"}}"#,
        );
        assert!(matches!(parse_scenario(&text, Path::new(".")), Err(FlockError::Config { path, .. }) if path == "initial.seed"));
        let with_seed = text.replace(r#""velocity_std": "0.5"}"#, r#""velocity_std": "0.5"}, "seed": 3"#);
        let s = parse_scenario(&with_seed, Path::new(".")).unwrap();
        assert!(matches!(s.initial, InitialSource::Particles { seed: 3, .. }));
        assert!(matches!(s.with_seed(9).initial, InitialSource::Particles { seed: 9, .. }));
    }

    #[test]
    fn exit_codes() {
        let ok = VerificationReport { mode: Mode::Particle, checks: vec![] };
        assert_eq!(exit_code(&Ok(ok)), 0);
        let failing = VerificationReport {
            mode: Mode::Particle,
            checks: vec![CheckResult::upper("x", 2.0, 1.0, 0.0, "any", String::new())],
        };
        assert_eq!(exit_code(&Ok(failing)), 1);
        assert_eq!(exit_code(&Err(FlockError::config("kernel.beta", "missing"))), 2);
        assert_eq!(exit_code(&Err(FlockError::Overflow { step: 3, time: 0.3 })), 3);
    }

    #[test]
    fn entropy_trend_tolerates_noise() {
        let runs = vec![vec![0.0, 1.0, 0.9], vec![0.2, 1.1, 1.2], vec![0.1, 0.9, 1.0]];
        let c = entropy_trend_check("t", &runs, &[0.0, 1.0, 2.0]);
        assert!(c.passed());
        let runs = vec![vec![1.0, 0.0], vec![1.01, 0.01]];
        assert!(!entropy_trend_check("t", &runs, &[0.0, 1.0]).passed());
    }
}
