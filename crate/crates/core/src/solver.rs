//! Explicit finite-volume scheme for the viscous system
//!
//! ```text
//! dt m = dx(m dx rho) + eps dxx m,    dt n = nu dx(n dx rho) + eps dxx n
//! ```
//!
//! Both species are upwinded on the same interface gradient
//! `u = (rho_{i+1} - rho_i)/h`, with speeds 1 and `nu`, plus a centered
//! viscous flux. Refinement ladders halve `eps` and `h` together.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::state::{cell_activity, Grid1D, Parameters, SpeciesState};

pub const DEFAULT_CFL: f64 = 0.4;
pub const DEFAULT_N_OUTPUTS: usize = 200;
pub const DEFAULT_OUTPUT_GRADING: f64 = 3.0;
/// Floor used by the initial-data presets that must stay strictly positive.
pub const MIXED_FLOOR: f64 = 0.05;

/// Initial-data presets.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Constant {
        c_m: f64,
        c_n: f64,
    },
    /// `m` on `[0, split]`, `n` on `[split, 1]`, each a smoothed indicator
    /// whose transitions have width `width` and stay inside its interval.
    Segregated {
        level_m: f64,
        level_n: f64,
        split: f64,
        width: f64,
    },
    MixedOscillatory {
        m_bar: f64,
        n_bar: f64,
        amp_m: f64,
        amp_n: f64,
        k_m: f64,
        k_n: f64,
    },
    /// Periodized Gaussians on a constant background.
    GaussianBump {
        background: f64,
        amp_m: f64,
        amp_n: f64,
        center_m: f64,
        center_n: f64,
        sigma: f64,
    },
}

/// `(key, default, description)` for every parameter of a preset.
pub type ParamSpec = (&'static str, f64, &'static str);

const CONSTANT_KEYS: &[ParamSpec] = &[
    ("c_m", 1.0, "density of m"),
    ("c_n", 1.0, "density of n"),
];
const SEGREGATED_KEYS: &[ParamSpec] = &[
    ("level_m", 1.0, "plateau density of m"),
    ("level_n", 1.0, "plateau density of n"),
    ("split", 0.5, "m lives on [0, split], n on [split, 1]"),
    ("width", 0.05, "transition width (length)"),
];
const MIXED_KEYS: &[ParamSpec] = &[
    ("m_bar", 0.5, "mean of m"),
    ("n_bar", 0.5, "mean of n"),
    ("amp_m", 0.3, "amplitude of the sine in m"),
    ("amp_n", 0.3, "amplitude of the cosine in n"),
    ("k_m", 4.0, "wavenumber of m (integer)"),
    ("k_n", 4.0, "wavenumber of n (integer)"),
];
const GAUSSIAN_KEYS: &[ParamSpec] = &[
    ("background", 0.05, "background density of each species"),
    ("amp_m", 1.0, "peak height of m above background"),
    ("amp_n", 1.0, "peak height of n above background"),
    ("center_m", 0.35, "center of the m bump"),
    ("center_n", 0.65, "center of the n bump"),
    ("sigma", 0.08, "standard deviation (length)"),
];

pub const SCENARIO_NAMES: [&str; 4] = ["constant", "segregated", "mixed_oscillatory", "gaussian_bump"];

impl Scenario {
    pub fn param_specs(name: &str) -> Option<&'static [ParamSpec]> {
        match name {
            "constant" => Some(CONSTANT_KEYS),
            "segregated" => Some(SEGREGATED_KEYS),
            "mixed_oscillatory" => Some(MIXED_KEYS),
            "gaussian_bump" => Some(GAUSSIAN_KEYS),
            _ => None,
        }
    }

    /// Builds a preset from its name and overrides; unknown keys are rejected.
    pub fn from_params(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let specs = Self::param_specs(name).ok_or_else(|| {
            Error::config(format!(
                "unknown scenario `{name}` (expected one of {})",
                SCENARIO_NAMES.join(", ")
            ))
        })?;
        if let Some(key) = overrides.keys().find(|k| !specs.iter().any(|(s, _, _)| s == k)) {
            return Err(Error::config(format!("scenario `{name}` has no parameter `{key}`")));
        }
        let get = |key: &str| {
            overrides
                .get(key)
                .copied()
                .unwrap_or_else(|| specs.iter().find(|(k, _, _)| *k == key).map(|s| s.1).unwrap_or(f64::NAN))
        };
        Ok(match name {
            "constant" => Scenario::Constant {
                c_m: get("c_m"),
                c_n: get("c_n"),
            },
            "segregated" => Scenario::Segregated {
                level_m: get("level_m"),
                level_n: get("level_n"),
                split: get("split"),
                width: get("width"),
            },
            "mixed_oscillatory" => Scenario::MixedOscillatory {
                m_bar: get("m_bar"),
                n_bar: get("n_bar"),
                amp_m: get("amp_m"),
                amp_n: get("amp_n"),
                k_m: get("k_m"),
                k_n: get("k_n"),
            },
            _ => Scenario::GaussianBump {
                background: get("background"),
                amp_m: get("amp_m"),
                amp_n: get("amp_n"),
                center_m: get("center_m"),
                center_n: get("center_n"),
                sigma: get("sigma"),
            },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Constant { .. } => "constant",
            Scenario::Segregated { .. } => "segregated",
            Scenario::MixedOscillatory { .. } => "mixed_oscillatory",
            Scenario::GaussianBump { .. } => "gaussian_bump",
        }
    }

    pub fn mixed_default() -> Self {
        Self::from_params("mixed_oscillatory", &BTreeMap::new()).expect("defaults are valid")
    }

    /// Point values at cell centers. Negative data is rejected; NaN passes
    /// through so the run reports it as a non-finite state.
    pub fn initial_data(&self, grid: &Grid1D) -> Result<SpeciesState> {
        let x = grid.centers();
        let (m, n): (Vec<f64>, Vec<f64>) = match *self {
            Scenario::Constant { c_m, c_n } => (vec![c_m; x.len()], vec![c_n; x.len()]),
            Scenario::Segregated {
                level_m,
                level_n,
                split,
                width,
            } => {
                if !(split > 2.0 * width && split < 1.0 - 2.0 * width && width > 0.0) {
                    return Err(Error::domain(format!(
                        "segregated preset needs 0 < 2 width < split < 1 - 2 width (split {split}, width {width})"
                    )));
                }
                (
                    x.iter().map(|&x| level_m * plateau(x, 0.0, split, width)).collect(),
                    x.iter().map(|&x| level_n * plateau(x, split, 1.0, width)).collect(),
                )
            }
            Scenario::MixedOscillatory {
                m_bar,
                n_bar,
                amp_m,
                amp_n,
                k_m,
                k_n,
            } => {
                if k_m.fract() != 0.0 || k_n.fract() != 0.0 {
                    return Err(Error::domain("mixed_oscillatory wavenumbers must be integers"));
                }
                let m: Vec<f64> = x.iter().map(|&x| m_bar + amp_m * (2.0 * PI * k_m * x).sin()).collect();
                let n: Vec<f64> = x.iter().map(|&x| n_bar + amp_n * (2.0 * PI * k_n * x).cos()).collect();
                let lowest = m.iter().chain(&n).copied().fold(f64::INFINITY, f64::min);
                if lowest < MIXED_FLOOR {
                    return Err(Error::domain(format!(
                        "mixed_oscillatory data dips to {lowest}, below the floor {MIXED_FLOOR}"
                    )));
                }
                (m, n)
            }
            Scenario::GaussianBump {
                background,
                amp_m,
                amp_n,
                center_m,
                center_n,
                sigma,
            } => {
                if !(sigma > 0.0) {
                    return Err(Error::domain("gaussian_bump needs sigma > 0"));
                }
                (
                    x.iter().map(|&x| background + amp_m * periodic_gaussian(x, center_m, sigma)).collect(),
                    x.iter().map(|&x| background + amp_n * periodic_gaussian(x, center_n, sigma)).collect(),
                )
            }
        };
        if let Some(v) = m.iter().chain(&n).find(|&&v| v < 0.0) {
            return Err(Error::domain(format!("scenario `{}` produces negative density {v}", self.name())));
        }
        Ok(SpeciesState { t: 0.0, m, n })
    }
}

/// Smooth transition from 0 (at `x <= 0`) to 1 (at `x >= 1`) built from `exp(-1/x)`.
fn smooth_step(x: f64) -> f64 {
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let (a, b) = (f(x), f(1.0 - x));
    a / (a + b)
}

/// Smoothed indicator of `[lo, hi]`, exactly zero outside it.
fn plateau(x: f64, lo: f64, hi: f64, width: f64) -> f64 {
    smooth_step((x - lo) / width) * smooth_step((hi - x) / width)
}

fn periodic_gaussian(x: f64, center: f64, sigma: f64) -> f64 {
    (-3..=3)
        .map(|j| {
            let d = x - center - j as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub epsilon: f64,
    pub cfl: f64,
    pub t_final: f64,
    pub n_cells: usize,
    /// Snapshot stride in steps for [`run`].
    pub snapshot_every: usize,
    pub scenario: Scenario,
    /// Number of shared output times used by ladders.
    pub n_outputs: usize,
    /// Output times are `t_final (j / n_outputs)^output_grading`.
    pub output_grading: f64,
}

impl SchemeConfig {
    pub fn new(scenario: Scenario, epsilon: f64, n_cells: usize, t_final: f64) -> Result<Self> {
        let c = Self {
            epsilon,
            cfl: DEFAULT_CFL,
            t_final,
            n_cells,
            snapshot_every: 100,
            scenario,
            n_outputs: DEFAULT_N_OUTPUTS,
            output_grading: DEFAULT_OUTPUT_GRADING,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::config(format!("cfl must lie in (0, 1), got {}", self.cfl)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.n_cells < 8 {
            return Err(Error::config(format!("n_cells must be >= 8, got {}", self.n_cells)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::config("snapshot_every must be >= 1"));
        }
        if self.n_outputs == 0 {
            return Err(Error::config("n_outputs must be >= 1"));
        }
        if !(self.output_grading >= 1.0 && self.output_grading.is_finite()) {
            return Err(Error::config(format!("output_grading must be >= 1, got {}", self.output_grading)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.n_cells)
    }

    /// Shared output times, graded toward `t = 0` where the data relaxes fastest.
    pub fn output_times(&self) -> Vec<f64> {
        output_times(self.t_final, self.n_outputs, self.output_grading)
    }
}

/// `t_final (j/n)^grading` for `j = 1..=n`, deduplicated; empty when `t_final = 0`.
pub fn output_times(t_final: f64, n: usize, grading: f64) -> Vec<f64> {
    if t_final <= 0.0 {
        return Vec::new();
    }
    let mut times: Vec<f64> = (1..=n)
        .map(|j| if j == n { t_final } else { t_final * (j as f64 / n as f64).powf(grading) })
        .collect();
    times.dedup();
    times
}

/// Interface gradient `u_{i+1/2}`, the fluxes of both species and their upwind values.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceFluxes {
    pub u: Vec<f64>,
    pub m_up: Vec<f64>,
    pub n_up: Vec<f64>,
    pub flux_m: Vec<f64>,
    pub flux_n: Vec<f64>,
}

pub fn interface_fluxes(state: &SpeciesState, epsilon: f64, params: &Parameters) -> InterfaceFluxes {
    let len = state.n_cells();
    let h = state.grid().h();
    let mut f = InterfaceFluxes {
        u: vec![0.0; len],
        m_up: vec![0.0; len],
        n_up: vec![0.0; len],
        flux_m: vec![0.0; len],
        flux_n: vec![0.0; len],
    };
    let nu = params.nu();
    for i in 0..len {
        let j = if i + 1 == len { 0 } else { i + 1 };
        let u = (state.m[j] + state.n[j] - state.m[i] - state.n[i]) / h;
        let (mu, nup) = if u > 0.0 { (state.m[j], state.n[j]) } else { (state.m[i], state.n[i]) };
        f.u[i] = u;
        f.m_up[i] = mu;
        f.n_up[i] = nup;
        f.flux_m[i] = -mu * u - epsilon * (state.m[j] - state.m[i]) / h;
        f.flux_n[i] = -nup * nu * u - epsilon * (state.n[j] - state.n[i]) / h;
    }
    f
}

fn stable_dt_raw(m: &[f64], n: &[f64], h: f64, cfl: f64, epsilon: f64, params: &Parameters) -> f64 {
    let len = m.len();
    let nu = params.nu();
    let mut max_u: f64 = 0.0;
    let mut max_diff: f64 = 0.0;
    for i in 0..len {
        let j = if i + 1 == len { 0 } else { i + 1 };
        max_u = max_u.max((m[j] + n[j] - m[i] - n[i]).abs());
        max_diff = max_diff.max(m[i] + nu * n[i]);
    }
    let speed = params.beta().max(1.0) * max_u / h;
    cfl * (h / (speed + 1e-30)).min(h * h / (2.0 * (epsilon + max_diff)))
}

/// `cfl * min(h / max|v|, h^2 / (2 (eps + max a rho)))` with `v` the faster species speed.
pub fn stable_dt(state: &SpeciesState, config: &SchemeConfig, params: &Parameters) -> f64 {
    stable_dt_raw(&state.m, &state.n, state.grid().h(), config.cfl, config.epsilon, params)
}

/// Scratch space for in-place steps.
struct Stepper {
    flux_m: Vec<f64>,
    flux_n: Vec<f64>,
    h: f64,
    epsilon: f64,
    nu: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct StepOutcome {
    clipped: f64,
    min_before_clip: f64,
}

impl Stepper {
    fn new(n_cells: usize, h: f64, epsilon: f64, nu: f64) -> Self {
        Self {
            flux_m: vec![0.0; n_cells],
            flux_n: vec![0.0; n_cells],
            h,
            epsilon,
            nu,
        }
    }

    fn advance(&mut self, m: &mut [f64], n: &mut [f64], dt: f64) -> StepOutcome {
        let len = m.len();
        let (h, eps, nu) = (self.h, self.epsilon, self.nu);
        for i in 0..len {
            let j = if i + 1 == len { 0 } else { i + 1 };
            let u = (m[j] + n[j] - m[i] - n[i]) / h;
            let (mu, nup) = if u > 0.0 { (m[j], n[j]) } else { (m[i], n[i]) };
            self.flux_m[i] = -mu * u - eps * (m[j] - m[i]) / h;
            self.flux_n[i] = -nup * nu * u - eps * (n[j] - n[i]) / h;
        }
        let c = dt / h;
        let mut out = StepOutcome {
            clipped: 0.0,
            min_before_clip: f64::INFINITY,
        };
        for i in 0..len {
            let k = if i == 0 { len - 1 } else { i - 1 };
            m[i] -= c * (self.flux_m[i] - self.flux_m[k]);
            n[i] -= c * (self.flux_n[i] - self.flux_n[k]);
            out.min_before_clip = out.min_before_clip.min(m[i]).min(n[i]);
            if m[i] < 0.0 {
                out.clipped -= h * m[i];
                m[i] = 0.0;
            }
            if n[i] < 0.0 {
                out.clipped -= h * n[i];
                n[i] = 0.0;
            }
        }
        out
    }
}

/// One explicit step of size [`stable_dt`].
pub fn step(state: &SpeciesState, config: &SchemeConfig, params: &Parameters) -> Result<SpeciesState> {
    let grid = state.grid();
    let dt = stable_dt(state, config, params);
    let mut next = state.clone();
    Stepper::new(grid.n_cells(), grid.h(), config.epsilon, params.nu()).advance(&mut next.m, &mut next.n, dt);
    next.t += dt;
    check_finite(&next, 1)?;
    Ok(next)
}

/// Per-step record. The CSV step log carries the first six fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub mass_m: f64,
    pub mass_n: f64,
    pub entropy: f64,
    pub max_rho: f64,
    /// `sum h u^2` over interfaces, the discrete `int |dx rho|^2`.
    pub rho_dissipation: f64,
    /// Viscous entropy production `eps sum h (D m)(D log m) + (eps/nu) sum h (D n)(D log n)`.
    pub viscous_dissipation: f64,
    /// Mass removed by clipping in this step.
    pub clipped: f64,
}

fn record(m: &[f64], n: &[f64], t: f64, dt: f64, clipped: f64, epsilon: f64, params: &Parameters) -> StepRecord {
    let len = m.len();
    let h = 1.0 / len as f64;
    let inv_nu = 1.0 / params.nu();
    let floor = params.rho_floor();
    let mut mass_m = 0.0;
    let mut mass_n = 0.0;
    let mut entropy = 0.0;
    let mut max_rho: f64 = 0.0;
    let mut rho_diss = 0.0;
    let mut visc = 0.0;
    let logf = |v: f64| v.max(floor).ln();
    let (mut lm_i, mut ln_i) = (logf(m[0]), logf(n[0]));
    let (lm_0, ln_0) = (lm_i, ln_i);
    for i in 0..len {
        let j = if i + 1 == len { 0 } else { i + 1 };
        let (lm_j, ln_j) = if j == 0 { (lm_0, ln_0) } else { (logf(m[j]), logf(n[j])) };
        mass_m += m[i];
        mass_n += n[i];
        if m[i] > 0.0 {
            entropy += m[i] * (m[i].ln() - 1.0);
        }
        if n[i] > 0.0 {
            entropy += inv_nu * n[i] * (n[i].ln() - 1.0);
        }
        max_rho = max_rho.max(m[i] + n[i]);
        let u = (m[j] + n[j] - m[i] - n[i]) / h;
        rho_diss += u * u;
        visc += (m[j] - m[i]) * (lm_j - lm_i) + inv_nu * (n[j] - n[i]) * (ln_j - ln_i);
        lm_i = lm_j;
        ln_i = ln_j;
    }
    StepRecord {
        t,
        dt,
        mass_m: h * mass_m,
        mass_n: h * mass_n,
        entropy: h * entropy,
        max_rho,
        rho_dissipation: h * rho_diss,
        viscous_dissipation: epsilon * visc / h,
        clipped,
    }
}

fn check_finite(state: &SpeciesState, step: usize) -> Result<()> {
    for (field, values) in [("m", &state.m), ("n", &state.n)] {
        if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
            log::error!(
                "non-finite {field} at cell {cell}, step {step}, t = {}: m = {}, n = {}",
                state.t,
                state.m[cell],
                state.n[cell]
            );
            return Err(Error::NonFinite {
                field,
                cell,
                step,
                t: state.t,
            });
        }
    }
    Ok(())
}

/// When snapshots are taken.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    EverySteps(usize),
    /// Strictly increasing times in `(0, t_final]`; `t_final` is appended if missing.
    AtTimes(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: Parameters,
    pub config: SchemeConfig,
    pub snapshots: Vec<SpeciesState>,
    /// One record per step, preceded by the initial record (`dt = 0`).
    pub step_log: Vec<StepRecord>,
    pub clipped_mass: f64,
    /// Smallest cell value seen before clipping, over all steps.
    pub min_before_clip: f64,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.step_log.len().saturating_sub(1)
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn initial(&self) -> &SpeciesState {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &SpeciesState {
        self.snapshots.last().expect("a trajectory always holds the initial state")
    }
}

/// Runs the configured scenario, snapshotting every `snapshot_every` steps and at `t_final`.
pub fn run(config: &SchemeConfig, params: &Parameters) -> Result<Trajectory> {
    let initial = config.scenario.initial_data(&config.grid()?)?;
    run_from(initial, config, params, &Schedule::EverySteps(config.snapshot_every))
}

/// Runs the configured scenario with snapshots at the given times.
pub fn run_at_times(config: &SchemeConfig, params: &Parameters, times: &[f64]) -> Result<Trajectory> {
    let initial = config.scenario.initial_data(&config.grid()?)?;
    run_from(initial, config, params, &Schedule::AtTimes(times.to_vec()))
}

pub fn run_from(
    initial: SpeciesState,
    config: &SchemeConfig,
    params: &Parameters,
    schedule: &Schedule,
) -> Result<Trajectory> {
    config.validate()?;
    if initial.n_cells() != config.n_cells || initial.n.len() != config.n_cells {
        return Err(Error::config(format!(
            "initial data has {} cells, config says {}",
            initial.n_cells(),
            config.n_cells
        )));
    }
    check_finite(&initial, 0)?;
    initial.validate()?;
    let t_final = config.t_final;
    let mut stops: Vec<f64> = match schedule {
        Schedule::EverySteps(_) => vec![],
        Schedule::AtTimes(times) => {
            if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|&t| !(t > 0.0 && t <= t_final)) {
                return Err(Error::config("output times must be strictly increasing within (0, t_final]"));
            }
            times.clone()
        }
    };
    if t_final > 0.0 && stops.last() != Some(&t_final) {
        stops.push(t_final);
    }
    let every = match schedule {
        Schedule::EverySteps(k) => Some((*k).max(1)),
        Schedule::AtTimes(_) => None,
    };

    let grid = initial.grid();
    let h = grid.h();
    let mut stepper = Stepper::new(grid.n_cells(), h, config.epsilon, params.nu());
    let mut m = initial.m.clone();
    let mut n = initial.n.clone();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut step_log = vec![record(&m, &n, 0.0, 0.0, 0.0, config.epsilon, params)];
    let mut snapshots = vec![initial];
    let mut clipped_mass = 0.0;
    let mut min_before_clip = f64::INFINITY;
    let mut next = 0usize;

    while next < stops.len() {
        let target = stops[next];
        let mut dt = stable_dt_raw(&m, &n, h, config.cfl, config.epsilon, params);
        let landing = t + dt >= target;
        if landing {
            dt = target - t;
        } else if t + 2.0 * dt > target {
            dt = 0.5 * (target - t);
        }
        let out = stepper.advance(&mut m, &mut n, dt);
        steps += 1;
        t = if landing { target } else { t + dt };
        clipped_mass += out.clipped;
        min_before_clip = min_before_clip.min(out.min_before_clip);
        if let Some(cell) = m.iter().chain(&n).position(|v| !v.is_finite()) {
            let len = m.len();
            let field = if cell < len { "m" } else { "n" };
            let cell = cell % len;
            log::error!("non-finite {field} at cell {cell}, step {steps}, t = {t}: m = {}, n = {}", m[cell], n[cell]);
            return Err(Error::NonFinite {
                field,
                cell,
                step: steps,
                t,
            });
        }
        step_log.push(record(&m, &n, t, dt, out.clipped, config.epsilon, params));
        let take = match every {
            Some(k) => steps.is_multiple_of(k) || (landing && target == t_final),
            None => landing,
        };
        if take {
            snapshots.push(SpeciesState {
                t,
                m: m.clone(),
                n: n.clone(),
            });
        }
        if landing {
            next += 1;
        }
    }
    log::debug!(
        "run finished: N = {}, eps = {:e}, {steps} steps, clipped mass {clipped_mass:e}",
        config.n_cells,
        config.epsilon
    );
    Ok(Trajectory {
        params: *params,
        config: config.clone(),
        snapshots,
        step_log,
        clipped_mass,
        min_before_clip: if steps == 0 { 0.0 } else { min_before_clip },
    })
}

#[derive(Debug, Clone)]
pub struct Rung {
    pub epsilon: f64,
    pub n_cells: usize,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct RefinementLadder {
    pub rungs: Vec<Rung>,
    pub output_times: Vec<f64>,
}

impl RefinementLadder {
    pub fn finest(&self) -> &Rung {
        self.rungs.last().expect("a ladder has at least three rungs")
    }
}

/// `(eps_0 2^{-k}, N_0 2^k)` for `k = 0..n_rungs`.
pub fn rung_parameters(base: &SchemeConfig, n_rungs: usize) -> Vec<(f64, usize)> {
    (0..n_rungs)
        .map(|k| (base.epsilon * 0.5f64.powi(k as i32), base.n_cells << k))
        .collect()
}

/// Runs every rung at the shared output times, concurrently.
pub fn refine_sequence(base: &SchemeConfig, params: &Parameters, n_rungs: usize) -> Result<RefinementLadder> {
    if n_rungs < 3 {
        return Err(Error::config(format!("a refinement ladder needs >= 3 rungs, got {n_rungs}")));
    }
    base.validate()?;
    let times = base.output_times();
    let configs: Vec<SchemeConfig> = rung_parameters(base, n_rungs)
        .into_iter()
        .map(|(epsilon, n_cells)| SchemeConfig {
            epsilon,
            n_cells,
            ..base.clone()
        })
        .collect();
    let results: Vec<Result<Trajectory>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                let times = &times;
                scope.spawn(move || run_at_times(c, params, times))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rung thread panicked"))
            .collect()
    });
    let mut rungs = Vec::with_capacity(n_rungs);
    for (c, r) in configs.iter().zip(results) {
        rungs.push(Rung {
            epsilon: c.epsilon,
            n_cells: c.n_cells,
            trajectory: r?,
        });
    }
    Ok(RefinementLadder {
        rungs,
        output_times: times,
    })
}

/// Averages blocks of `factor` fine cells onto the coarse grid.
pub fn restrict(fine: &[f64], factor: usize) -> Vec<f64> {
    fine.chunks(factor).map(|c| c.iter().sum::<f64>() / factor as f64).collect()
}

/// `max |a - clamp(a)|` over non-vacuum cells of every snapshot.
pub fn max_activity_clamp(traj: &Trajectory) -> f64 {
    traj.snapshots
        .iter()
        .flat_map(|s| s.m.iter().zip(&s.n))
        .filter_map(|(&m, &n)| cell_activity(m, n, &traj.params).map(|(_, c)| c))
        .fold(0.0, f64::max)
}
